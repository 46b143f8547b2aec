//! Regenerates the synthetic fixture under `tests/fixtures/`.
//!
//! ```text
//! cargo run --example make_fixture -- crates/core/tests/fixtures
//! ```
//!
//! Cluster means are orthogonal basis vectors; anchors and mentions add
//! Gaussian noise. About a quarter of the events get one argument pulled
//! toward a role its event type cannot take. The golden `classify` output is
//! computed with the exhaustive solver.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use eventmap::embedstore::{write_dump, AnchorRecord, BuildOptions, ClusterStore, DumpEncoding, Embedding, Strategy};
use eventmap::filtering::{calibrate_store, NegativeSet};
use eventmap::inference::{brute_force_solve, InferenceConfig, InferenceError};
use eventmap::mentions::{write_mentions_to, ArgumentMention, EmbeddingMode, EventMention, Span, TriggerMention};
use eventmap::ontology::Ontology;
use eventmap::pipeline::{write_classified, ClassifiedEvent, Status};
use eventmap::scoring::score_event;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DIM: usize = 24;
const SEED: u64 = 17;
const ANCHORS_PER_WORD: usize = 4;
const EVENTS: usize = 40;

fn trigger_words(id: &str) -> &'static [&'static str] {
    match id {
        "Conflict:Attack" => &["attack", "war"],
        "Contact:Meet" => &["meet"],
        "Justice:Arrest-Jail" => &["arrest"],
        "Life:Die" => &["die", "kill"],
        "Movement:Transport" => &["transport", "travel"],
        "Transaction:Transfer-Ownership" => &["sell", "buy"],
        _ => panic!("no anchor words for {id}"),
    }
}

struct Gen {
    rng: ChaCha8Rng,
    noise: Normal<f64>,
}

impl Gen {
    fn vector(&mut self, mean: &[f64], sigma: f64) -> Embedding {
        let v = mean
            .iter()
            .map(|m| (m + sigma * self.noise.sample(&mut self.rng)) as f32)
            .collect();
        Embedding::new(v).expect("finite vector")
    }
}

fn basis(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; DIM];
    v[i] = 1.0;
    v
}

fn main() {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("crates/core/tests/fixtures"), PathBuf::from);
    let ontology = Ontology::load(dir.join("ontology.json")).expect("fixture ontology");
    let events: Vec<&str> = ontology.event_types().map(|e| e.id.as_str()).collect();
    let roles: Vec<&str> = ontology.role_types().map(|r| r.id.as_str()).collect();
    let event_mean = |id: &str| basis(events.iter().position(|e| *e == id).unwrap());
    let role_mean = |id: &str| basis(events.len() + roles.iter().position(|r| *r == id).unwrap());

    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(SEED),
        noise: Normal::new(0.0, 1.0).unwrap(),
    };

    let mut anchors = Vec::new();
    for e in &events {
        for word in trigger_words(e) {
            for n in 0..ANCHORS_PER_WORD {
                anchors.push(AnchorRecord {
                    label_id: e.to_string(),
                    anchor_word: word.to_string(),
                    sentence_id: format!("{word}-{n}"),
                    strategy: Strategy::Full,
                    vector: g.vector(&event_mean(e), 0.05),
                });
            }
        }
    }
    for r in &roles {
        let word = ontology.role_type(r).unwrap().label.clone();
        for n in 0..ANCHORS_PER_WORD {
            anchors.push(AnchorRecord {
                label_id: r.to_string(),
                anchor_word: word.clone(),
                sentence_id: format!("{word}-{n}"),
                strategy: Strategy::Masked,
                vector: g.vector(&role_mean(r), 0.05),
            });
        }
    }
    write_dump(dir.join("anchors.dump.txt"), &anchors, DumpEncoding::Text).expect("write anchors");

    let mut store = ClusterStore::build(&ontology, &anchors, BuildOptions::default()).expect("store");
    calibrate_store(&mut store, NegativeSet::All).expect("calibration");
    store.save(dir.join("store.json")).expect("write store");

    let mut mentions = Vec::new();
    for i in 0..EVENTS {
        let gold = *events.choose(&mut g.rng).unwrap();
        let ev_type = ontology.event_type(gold).unwrap();
        // The last event has more arguments than any type has roles.
        let m = if i == EVENTS - 1 { 5 } else { g.rng.gen_range(0..=3.min(ev_type.roles.len())) };
        let mut picked: Vec<&String> = ev_type.roles.iter().collect();
        picked.shuffle(&mut g.rng);
        let word = trigger_words(gold)[0];
        let sentence = format!("s{i:02}");
        let mut arguments = Vec::new();
        for j in 0..m {
            let (role, gold_role) = match picked.get(j) {
                Some(r) => (r.as_str(), Some(r.to_string())),
                None => (roles[j % roles.len()], None),
            };
            let permitted: Vec<&String> = ontology.role_type(role).unwrap().permitted_entities.iter().collect();
            let entity = permitted.choose(&mut g.rng).unwrap().to_string();
            let mut mean = role_mean(role);
            if j == 0 && g.rng.gen_bool(0.25) {
                // Pull toward a role the gold event type does not have.
                let foreign: Vec<&&str> = roles.iter().filter(|r| !ev_type.has_role(r)).collect();
                let wrong = role_mean(foreign.choose(&mut g.rng).unwrap());
                mean = mean.iter().zip(&wrong).map(|(a, b)| 0.45 * a + 0.55 * b).collect();
            }
            arguments.push(ArgumentMention {
                span: Span::new(sentence.as_str(), 2 * j + 3, 2 * j + 4, format!("arg{j}")).unwrap(),
                entity_type: Some(entity),
                embedding: g.vector(&mean, 0.12),
                gold_role,
            });
        }
        mentions.push(EventMention {
            event_id: format!("ev{i:02}"),
            trigger: TriggerMention {
                span: Span::new(sentence.as_str(), 1, 2, word).unwrap(),
                embedding: g.vector(&event_mean(gold), 0.12),
                gold_type: Some(gold.to_string()),
            },
            arguments,
        });
    }

    let write = |name: &str, mode| {
        let out = BufWriter::new(File::create(dir.join(name)).expect("create"));
        write_mentions_to(out, &mentions, mode).expect("write mentions")
    };
    write("mentions_inline.jsonl", EmbeddingMode::Inline);
    let sidecar = write("mentions.jsonl", EmbeddingMode::Sidecar);
    write_dump(dir.join("mentions.sidecar.bin"), &sidecar, DumpEncoding::Binary).expect("write sidecar");

    write_golden(&dir.join("classify_golden.jsonl"), &mentions, &store, &ontology);
    eprintln!("fixture written to {}", dir.display());
}

fn write_golden(path: &Path, mentions: &[EventMention], store: &ClusterStore, ontology: &Ontology) {
    let config = InferenceConfig::default();
    let records: Vec<ClassifiedEvent> = mentions
        .iter()
        .map(|ev| {
            let scores = score_event(ev, store).expect("scores");
            let mut rec = ClassifiedEvent {
                event_id: ev.event_id.clone(),
                sentence_id: ev.trigger.span.sentence_id.clone(),
                trigger_span: (ev.trigger.span.start, ev.trigger.span.end),
                argument_spans: ev.arguments.iter().map(|a| (a.span.start, a.span.end)).collect(),
                status: Status::Typed,
                trigger_type: None,
                argument_roles: vec![None; ev.arguments.len()],
                objective_value: None,
                trigger_ranking: Vec::new(),
                role_rankings: vec![Vec::new(); ev.arguments.len()],
                error: None,
            };
            match brute_force_solve(ev, &scores, ontology, &config) {
                Ok(t) => {
                    rec.trigger_type = Some(t.trigger_type);
                    rec.argument_roles = t.argument_roles;
                    rec.objective_value = Some(t.objective_value);
                    rec.trigger_ranking = t.trigger_ranking;
                    rec.role_rankings = t.role_rankings;
                }
                Err(e @ InferenceError::Infeasible { .. }) => {
                    rec.status = Status::Infeasible;
                    rec.error = Some(e.to_string());
                }
                Err(e) => panic!("{e}"),
            }
            rec
        })
        .collect();
    write_classified(BufWriter::new(File::create(path).expect("create golden")), &records).expect("write golden");
}

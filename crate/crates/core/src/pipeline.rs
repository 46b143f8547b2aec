//! Batch classification: score every event, optionally filter out-of-ontology
//! triggers, then either solve the constrained problem or keep raw rankings.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedstore::{ClusterStore, VectorError};
use crate::filtering::{accept_trigger, FilterError};
use crate::inference::{solve, InferenceConfig, InferenceError};
use crate::mentions::EventMention;
use crate::ontology::{Ontology, OntologyError};
use crate::scoring::{rank, score_event, ScoreMatrix};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("event \"{event_id}\": {source}")]
    Scoring {
        event_id: String,
        #[source]
        source: VectorError,
    },
    #[error("event \"{event_id}\": {source}")]
    Filter {
        event_id: String,
        #[source]
        source: FilterError,
    },
    #[error(transparent)]
    Inference(InferenceError),
    #[error("in-ontology set: {0}")]
    InOntology(#[source] OntologyError),
    #[error("trigger cluster \"{0}\" has no calibrated radius; filtering needs every trigger cluster calibrated")]
    Uncalibrated(String),
    #[error("cannot build worker pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Solved under the ontology constraints.
    Typed,
    /// Raw nearest-centroid decisions, no constraints.
    Raw,
    /// Rejected as out of ontology.
    Filtered,
    /// No assignment satisfies the constraints.
    Infeasible,
}

/// One output record of `classify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedEvent {
    pub event_id: String,
    pub sentence_id: String,
    pub trigger_span: (usize, usize),
    pub argument_spans: Vec<(usize, usize)>,
    pub status: Status,
    pub trigger_type: Option<String>,
    pub argument_roles: Vec<Option<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_value: Option<f64>,
    pub trigger_ranking: Vec<(String, f64)>,
    pub role_rankings: Vec<Vec<(String, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ClassifyOptions {
    pub inference: InferenceConfig,
    /// Solve the constrained problem; otherwise emit raw rankings.
    pub use_ilp: bool,
    /// When set, triggers whose nearest cluster is outside this set, or outside
    /// its radius, are filtered, and decisions are restricted to the set.
    pub in_ontology: Option<BTreeSet<String>>,
    /// Worker count; `None` uses the available parallelism.
    pub threads: Option<usize>,
}

impl ClassifyOptions {
    pub fn new(inference: InferenceConfig) -> Self {
        ClassifyOptions {
            inference,
            use_ilp: true,
            in_ontology: None,
            threads: None,
        }
    }
}

fn base_record(event: &EventMention) -> ClassifiedEvent {
    ClassifiedEvent {
        event_id: event.event_id.clone(),
        sentence_id: event.sentence_id().to_string(),
        trigger_span: (event.trigger.span.start, event.trigger.span.end),
        argument_spans: event.arguments.iter().map(|a| (a.span.start, a.span.end)).collect(),
        status: Status::Raw,
        trigger_type: None,
        argument_roles: vec![None; event.arguments.len()],
        objective_value: None,
        trigger_ranking: Vec::new(),
        role_rankings: vec![Vec::new(); event.arguments.len()],
        error: None,
    }
}

fn full_rank(scores: &BTreeMap<String, f64>) -> Vec<(String, f64)> {
    rank(scores, scores.len())
}

/// Classifies one event against an ontology the store already covers.
pub fn classify_event(
    event: &EventMention,
    store: &ClusterStore,
    ontology: &Ontology,
    options: &ClassifyOptions,
) -> Result<ClassifiedEvent, PipelineError> {
    let mut out = base_record(event);
    let mut scores = score_event(event, store).map_err(|source| PipelineError::Scoring {
        event_id: event.event_id.clone(),
        source,
    })?;

    let restricted;
    let ontology = match &options.in_ontology {
        Some(keep) => {
            let accepted = accept_trigger(&event.trigger.embedding, store, keep).map_err(|source| PipelineError::Filter {
                event_id: event.event_id.clone(),
                source,
            })?;
            if accepted.is_none() {
                out.status = Status::Filtered;
                return Ok(out);
            }
            restricted = ontology
                .restrict_events(keep.iter().map(String::as_str))
                .map_err(PipelineError::InOntology)?;
            scores.trigger_scores.retain(|id, _| keep.contains(id));
            &restricted
        }
        None => ontology,
    };

    if !options.use_ilp {
        return Ok(raw_record(out, &scores));
    }
    match solve(event, &scores, ontology, &options.inference) {
        Ok(t) => {
            out.status = Status::Typed;
            out.trigger_type = Some(t.trigger_type);
            out.argument_roles = t.argument_roles;
            out.objective_value = Some(t.objective_value);
            out.trigger_ranking = t.trigger_ranking;
            out.role_rankings = t.role_rankings;
            Ok(out)
        }
        Err(e @ InferenceError::Infeasible { .. }) => {
            log::warn!("{e}");
            out.status = Status::Infeasible;
            out.error = Some(e.to_string());
            Ok(out)
        }
        Err(e) => Err(PipelineError::Inference(e)),
    }
}

fn raw_record(mut out: ClassifiedEvent, scores: &ScoreMatrix) -> ClassifiedEvent {
    out.status = Status::Raw;
    out.trigger_ranking = full_rank(&scores.trigger_scores);
    out.trigger_type = out.trigger_ranking.first().map(|(id, _)| id.clone());
    out.role_rankings = scores.argument_scores.iter().map(full_rank).collect();
    out.argument_roles = out.role_rankings.iter().map(|r| r.first().map(|(id, _)| id.clone())).collect();
    out
}

/// Classifies a batch in parallel. Output order matches input order.
pub fn classify_all(
    events: &[EventMention],
    store: &ClusterStore,
    ontology: &Ontology,
    options: &ClassifyOptions,
) -> Result<Vec<ClassifiedEvent>, PipelineError> {
    if options.in_ontology.is_some() {
        if let Some(c) = store.trigger_clusters().values().find(|c| c.radius().is_none()) {
            return Err(PipelineError::Uncalibrated(c.label_id().to_string()));
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        events
            .par_iter()
            .map(|e| classify_event(e, store, ontology, options))
            .collect()
    })
}

/// One JSON object per line.
pub fn write_classified<W: Write>(mut out: W, records: &[ClassifiedEvent]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_classified(text: &str) -> Result<Vec<ClassifiedEvent>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

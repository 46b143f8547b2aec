//! Metric tables over a range of trigger weights or anchor counts.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::{hit_at_k, EvalError, HitOptions, HitReport, RankedItem, Stratum};
use crate::embedstore::{AnchorRecord, BuildOptions, ClusterStore, StoreError};
use crate::mentions::EventMention;
use crate::ontology::Ontology;
use crate::pipeline::{classify_all, ClassifiedEvent, ClassifyOptions, PipelineError, Status};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("no sweep values given")]
    NoValues,
    #[error("label \"{label}\" anchor word \"{word}\" has {have} anchors, {need} requested")]
    InsufficientAnchors {
        label: String,
        word: String,
        have: usize,
        need: usize,
    },
    #[error("anchor count must be at least 1")]
    ZeroAnchors,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub triggers: HitReport,
    pub arguments: HitReport,
    pub infeasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    /// `lambda` or `n_anchors`.
    pub parameter: String,
    pub ks: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Tab-separated table with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = self.parameter.clone();
        for s in ["trigger", "argument"] {
            for k in &self.ks {
                out.push_str(&format!("\t{s}_hit@{k}"));
            }
        }
        out.push_str("\tinfeasible\n");
        for row in &self.rows {
            out.push_str(&row.value.to_string());
            for rep in [&row.triggers, &row.arguments] {
                for k in &self.ks {
                    out.push_str(&format!("\t{:.4}", rep.hit_at[k]));
                }
            }
            out.push_str(&format!("\t{}\n", row.infeasible));
        }
        out
    }
}

/// Hit@K items from classifier output, with gold labels taken from the events.
fn gold_items(events: &[EventMention], classified: &[ClassifiedEvent]) -> (Vec<RankedItem>, Vec<RankedItem>) {
    let ids = |r: &[(String, f64)]| r.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>();
    let mut triggers = Vec::new();
    let mut arguments = Vec::new();
    for (ev, c) in events.iter().zip(classified) {
        if let Some(g) = &ev.trigger.gold_type {
            triggers.push(RankedItem {
                item_id: ev.event_id.clone(),
                ranking: ids(&c.trigger_ranking),
                gold: g.clone(),
            });
        }
        for (j, a) in ev.arguments.iter().enumerate() {
            if let Some(g) = &a.gold_role {
                arguments.push(RankedItem {
                    item_id: format!("{}#{j}", ev.event_id),
                    ranking: ids(&c.role_rankings[j]),
                    gold: g.clone(),
                });
            }
        }
    }
    (triggers, arguments)
}

fn row(value: f64, events: &[EventMention], classified: &[ClassifiedEvent], ks: &[usize]) -> Result<SweepRow, SweepError> {
    let (t, a) = gold_items(events, classified);
    Ok(SweepRow {
        value,
        triggers: hit_at_k(&t, ks, Stratum::Triggers, HitOptions::default())?,
        arguments: hit_at_k(&a, ks, Stratum::Arguments, HitOptions::default())?,
        infeasible: classified.iter().filter(|c| c.status == Status::Infeasible).count(),
    })
}

pub fn lambda_sweep(
    events: &[EventMention],
    store: &ClusterStore,
    ontology: &Ontology,
    values: &[f64],
    base: &ClassifyOptions,
    ks: &[usize],
) -> Result<SweepTable, SweepError> {
    if values.is_empty() {
        return Err(SweepError::NoValues);
    }
    let mut rows = Vec::with_capacity(values.len());
    for &lambda in values {
        let mut opts = base.clone();
        opts.inference.lambda = lambda;
        let classified = classify_all(events, store, ontology, &opts)?;
        rows.push(row(lambda, events, &classified, ks)?);
    }
    Ok(SweepTable {
        parameter: "lambda".into(),
        ks: ks.to_vec(),
        rows,
    })
}

/// Keeps `n` records per (label, anchor word), chosen by a seeded shuffle.
/// The shuffle does not depend on `n`, so smaller selections are prefixes of
/// larger ones. Output keeps the input order.
pub fn subsample_anchors(records: &[AnchorRecord], n: usize, seed: u64) -> Result<Vec<AnchorRecord>, SweepError> {
    if n == 0 {
        return Err(SweepError::ZeroAnchors);
    }
    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((&r.label_id, &r.anchor_word)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; records.len()];
    for ((label, word), mut idx) in groups {
        if idx.len() < n {
            return Err(SweepError::InsufficientAnchors {
                label: label.to_string(),
                word: word.to_string(),
                have: idx.len(),
                need: n,
            });
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..n] {
            keep[i] = true;
        }
    }
    Ok(records
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(r, _)| r.clone())
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn anchor_sweep(
    records: &[AnchorRecord],
    events: &[EventMention],
    ontology: &Ontology,
    values: &[usize],
    seed: u64,
    build: BuildOptions,
    options: &ClassifyOptions,
    ks: &[usize],
) -> Result<SweepTable, SweepError> {
    if values.is_empty() {
        return Err(SweepError::NoValues);
    }
    let mut rows = Vec::with_capacity(values.len());
    for &n in values {
        let subset = subsample_anchors(records, n, seed)?;
        let store = ClusterStore::build(ontology, &subset, build)?;
        let classified = classify_all(events, &store, ontology, options)?;
        rows.push(row(n as f64, events, &classified, ks)?);
    }
    Ok(SweepTable {
        parameter: "n_anchors".into(),
        ks: ks.to_vec(),
        rows,
    })
}

//! Hit@K for ranked classification and precision/recall/F1 for span-level
//! identification and classification, plus parameter sweeps.

mod sweep;

pub use sweep::{lambda_sweep, anchor_sweep, subsample_anchors, SweepError, SweepRow, SweepTable};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mentions::MentionRecord;
use crate::pipeline::ClassifiedEvent;

pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("K must be at least 1")]
    ZeroK,
    #[error("no K values given")]
    NoKs,
    #[error("item \"{item}\": label \"{label}\" appears twice in its ranking")]
    DuplicateInRanking { item: String, label: String },
    #[error("item \"{item}\": gold label \"{label}\" is not in the ontology")]
    UnknownGold { item: String, label: String },
    #[error("prediction for event \"{0}\" appears more than once")]
    DuplicatePrediction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    Triggers,
    Arguments,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::Triggers => "triggers",
            Stratum::Arguments => "arguments",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    AllTypes,
    EvalSubset,
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subset::AllTypes => "all_types",
            Subset::EvalSubset => "eval_subset",
        })
    }
}

/// One classified item: its ranked candidate labels and its gold label.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub item_id: String,
    pub ranking: Vec<String>,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitReport {
    pub hit_at: BTreeMap<usize, f64>,
    pub hits: BTreeMap<usize, usize>,
    pub n_items: usize,
    pub stratum: Stratum,
    pub subset: Subset,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HitOptions<'a> {
    /// Keep only items whose gold label is in this set.
    pub subset: Option<&'a BTreeSet<String>>,
    /// Labels a gold may take; others are warned about, or rejected when strict.
    pub known_labels: Option<&'a BTreeSet<String>>,
    pub strict: bool,
}

/// Fraction of items whose gold label is within the top K of the ranking,
/// for each K. With no items every fraction is 0.
pub fn hit_at_k(items: &[RankedItem], ks: &[usize], stratum: Stratum, options: HitOptions<'_>) -> Result<HitReport, EvalError> {
    if ks.is_empty() {
        return Err(EvalError::NoKs);
    }
    if ks.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut n_items = 0;
    for item in items {
        if let Some(known) = options.known_labels {
            if !known.contains(&item.gold) {
                let err = EvalError::UnknownGold {
                    item: item.item_id.clone(),
                    label: item.gold.clone(),
                };
                if options.strict {
                    return Err(err);
                }
                log::warn!("{err}");
            }
        }
        if options.subset.is_some_and(|s| !s.contains(&item.gold)) {
            continue;
        }
        let mut seen = BTreeSet::new();
        for label in &item.ranking {
            if !seen.insert(label) {
                return Err(EvalError::DuplicateInRanking {
                    item: item.item_id.clone(),
                    label: label.clone(),
                });
            }
        }
        n_items += 1;
        if let Some(rank) = item.ranking.iter().position(|l| *l == item.gold) {
            for (&k, h) in hits.iter_mut() {
                if rank < k {
                    *h += 1;
                }
            }
        }
    }
    let hit_at = hits
        .iter()
        .map(|(&k, &h)| (k, if n_items == 0 { 0.0 } else { h as f64 / n_items as f64 }))
        .collect();
    Ok(HitReport {
        hit_at,
        hits,
        n_items,
        stratum,
        subset: if options.subset.is_some() { Subset::EvalSubset } else { Subset::AllTypes },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Spans must match exactly.
    Identification,
    /// Spans and labels must match exactly.
    IdentificationPlusClassification,
}

/// A predicted or gold span with its label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpanItem {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRF1Report {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PRF1Report {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        PRF1Report {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// One-to-one matching of predictions to golds. Matching is by equality of
/// key, so pairing equal keys greedily is a maximum matching.
pub fn prf1(predicted: &[SpanItem], gold: &[SpanItem], mode: MatchMode) -> PRF1Report {
    let key = |s: &SpanItem| match mode {
        MatchMode::Identification => (s.sentence_id.clone(), s.start, s.end, None),
        MatchMode::IdentificationPlusClassification => (s.sentence_id.clone(), s.start, s.end, Some(s.label.clone())),
    };
    let mut golds: BTreeMap<_, usize> = BTreeMap::new();
    for g in gold {
        *golds.entry(key(g)).or_default() += 1;
    }
    let mut tp = 0;
    for p in predicted {
        if let Some(n) = golds.get_mut(&key(p)) {
            if *n > 0 {
                *n -= 1;
                tp += 1;
            }
        }
    }
    PRF1Report::from_counts(tp, predicted.len() - tp, gold.len() - tp)
}

/// Hit@K items built by joining predictions to gold records by event id.
#[derive(Debug, Clone, Default)]
pub struct JoinedItems {
    pub triggers: Vec<RankedItem>,
    pub arguments: Vec<RankedItem>,
    /// Gold events with no prediction (counted as misses).
    pub missing: Vec<String>,
}

pub fn join_rankings(predictions: &[ClassifiedEvent], gold: &[MentionRecord]) -> Result<JoinedItems, EvalError> {
    let mut by_id: BTreeMap<&str, &ClassifiedEvent> = BTreeMap::new();
    for p in predictions {
        if by_id.insert(p.event_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.event_id.clone()));
        }
    }
    let ids = |r: &[(String, f64)]| r.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>();
    let mut out = JoinedItems::default();
    for g in gold {
        let pred = by_id.get(g.event_id.as_str()).copied();
        if pred.is_none() {
            out.missing.push(g.event_id.clone());
        }
        if let Some(gold_type) = &g.trigger.gold_type {
            out.triggers.push(RankedItem {
                item_id: g.event_id.clone(),
                ranking: pred.map(|p| ids(&p.trigger_ranking)).unwrap_or_default(),
                gold: gold_type.clone(),
            });
        }
        for (j, a) in g.arguments.iter().enumerate() {
            if let Some(gold_role) = &a.gold_role {
                out.arguments.push(RankedItem {
                    item_id: format!("{}#{j}", g.event_id),
                    ranking: pred
                        .and_then(|p| p.role_rankings.get(j))
                        .map(|r| ids(r))
                        .unwrap_or_default(),
                    gold: gold_role.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Predicted (triggers, arguments) span items from classifier output.
pub fn predicted_spans(predictions: &[ClassifiedEvent]) -> (Vec<SpanItem>, Vec<SpanItem>) {
    let mut triggers = Vec::new();
    let mut arguments = Vec::new();
    for p in predictions {
        let Some(t) = &p.trigger_type else { continue };
        triggers.push(SpanItem {
            sentence_id: p.sentence_id.clone(),
            start: p.trigger_span.0,
            end: p.trigger_span.1,
            label: t.clone(),
        });
        for (span, role) in p.argument_spans.iter().zip(&p.argument_roles) {
            if let Some(role) = role {
                arguments.push(SpanItem {
                    sentence_id: p.sentence_id.clone(),
                    start: span.0,
                    end: span.1,
                    label: role.clone(),
                });
            }
        }
    }
    (triggers, arguments)
}

/// Gold (triggers, arguments) span items; unlabeled spans are skipped.
pub fn gold_spans(gold: &[MentionRecord]) -> (Vec<SpanItem>, Vec<SpanItem>) {
    let mut triggers = Vec::new();
    let mut arguments = Vec::new();
    for g in gold {
        if let Some(t) = &g.trigger.gold_type {
            triggers.push(SpanItem {
                sentence_id: g.sentence_id.clone(),
                start: g.trigger.start,
                end: g.trigger.end,
                label: t.clone(),
            });
        }
        for a in &g.arguments {
            if let Some(r) = &a.gold_role {
                arguments.push(SpanItem {
                    sentence_id: g.sentence_id.clone(),
                    start: a.start,
                    end: a.end,
                    label: r.clone(),
                });
            }
        }
    }
    (triggers, arguments)
}

/// Items whose gold is not ranked first, as tab-separated lines.
pub fn error_listing(items: &[RankedItem]) -> String {
    let mut out = String::from("item\tgold\tpredicted\tgold_rank\n");
    for it in items {
        let first = it.ranking.first().map_or("-", String::as_str);
        if first == it.gold {
            continue;
        }
        let rank = it
            .ranking
            .iter()
            .position(|l| *l == it.gold)
            .map_or("-".to_string(), |r| (r + 1).to_string());
        out.push_str(&format!("{}\t{}\t{}\t{}\n", it.item_id, it.gold, first, rank));
    }
    out
}

pub fn format_hit_report(r: &HitReport) -> String {
    let mut out = format!("[hit {} {}]\nitems = {}\n", r.stratum, r.subset, r.n_items);
    for (k, v) in &r.hit_at {
        out.push_str(&format!("hit@{k} = {v:.4} ({}/{})\n", r.hits[k], r.n_items));
    }
    out
}

pub fn format_prf1_report(name: &str, r: &PRF1Report) -> String {
    format!(
        "[prf1 {name}]\nprecision = {:.4}\nrecall = {:.4}\nf1 = {:.4}\ntp = {}\nfp = {}\nfn = {}\n",
        r.precision, r.recall, r.f1, r.tp, r.fp, r.fn_
    )
}

//! Cosine scores of an event's trigger and arguments against every cluster
//! centroid, and ranked candidate lists.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::embedstore::{cosine_similarity, ClusterStore, LabelCluster, VectorError};
use crate::mentions::EventMention;

/// Similarity scores for one event. Higher is better.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreMatrix {
    /// Event-type id to `cos(trigger, centroid)`.
    pub trigger_scores: BTreeMap<String, f64>,
    /// Per argument, role-type id to `cos(argument, centroid)`.
    pub argument_scores: Vec<BTreeMap<String, f64>>,
}

fn score_against(
    vector: &[f64],
    clusters: &BTreeMap<String, LabelCluster>,
) -> Result<BTreeMap<String, f64>, VectorError> {
    clusters
        .iter()
        .map(|(id, c)| cosine_similarity(vector, c.centroid()).map(|s| (id.clone(), s)))
        .collect()
}

pub fn score_event(event: &EventMention, store: &ClusterStore) -> Result<ScoreMatrix, VectorError> {
    let trigger_scores = score_against(&event.trigger.embedding.to_f64(), store.trigger_clusters())?;
    let argument_scores = event
        .arguments
        .iter()
        .map(|a| score_against(&a.embedding.to_f64(), store.argument_clusters()))
        .collect::<Result<_, _>>()?;
    Ok(ScoreMatrix {
        trigger_scores,
        argument_scores,
    })
}

/// Descending score, then ascending id.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// The top `min(k, len)` entries by descending score; ties go to the
/// lexicographically smaller id.
pub fn rank(scores: &BTreeMap<String, f64>, k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(&str, f64)> = scores.iter().map(|(id, &s)| (id.as_str(), s)).collect();
    all.sort_by(|a, b| rank_order(*a, *b));
    all.into_iter().take(k).map(|(id, s)| (id.to_string(), s)).collect()
}

/// Full ranking with `first` moved to the front (when present).
pub fn rank_with_first(scores: &BTreeMap<String, f64>, first: Option<&str>) -> Vec<(String, f64)> {
    let mut ranked = rank(scores, scores.len());
    if let Some(f) = first {
        if let Some(pos) = ranked.iter().position(|(id, _)| id == f) {
            let item = ranked.remove(pos);
            ranked.insert(0, item);
        }
    }
    ranked
}

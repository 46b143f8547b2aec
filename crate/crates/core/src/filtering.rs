//! Out-of-ontology trigger filtering.
//!
//! Each cluster gets a cosine-distance radius chosen to maximize F1 at
//! separating its own members (positives) from other labels' members
//! (negatives). A trigger is accepted only when its nearest cluster is in the
//! target ontology and the trigger falls inside that cluster's radius.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedstore::{cosine_distance, cosine_similarity, ClusterError, ClusterStore, Embedding, LabelCluster, VectorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("cluster \"{0}\" has no members to calibrate against")]
    NoPositives(String),
    #[error("cluster \"{0}\" has no negatives to calibrate against")]
    NoNegatives(String),
    #[error("cluster \"{0}\" has no calibrated radius; run calibrate first")]
    Uncalibrated(String),
    #[error(transparent)]
    Vector(#[from] VectorError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusCalibration {
    pub label_id: String,
    pub radius: f64,
    pub f1_at_radius: f64,
    pub positives_count: usize,
    pub negatives_count: usize,
}

/// Which anchors count as negatives when calibrating a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeSet {
    /// Members of every other cluster in the store, triggers and arguments alike.
    #[default]
    All,
    /// Members of other clusters of the same kind only.
    SameKind,
}

/// `2tp / (2tp + fp + fn)` as an exact fraction.
#[derive(Debug, Clone, Copy)]
struct F1 {
    num: u64,
    den: u64,
}

impl F1 {
    fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        F1 {
            num: 2 * tp as u64,
            den: (2 * tp + fp + fn_) as u64,
        }
    }

    fn cmp(self, other: F1) -> Ordering {
        // 0/0 only happens with no positives, which is rejected earlier.
        (u128::from(self.num) * u128::from(other.den)).cmp(&(u128::from(other.num) * u128::from(self.den)))
    }

    fn value(self) -> f64 {
        if self.num == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }
}

/// Candidate radii: 0, 2, and midpoints between consecutive distinct
/// distances, ascending.
fn candidates(sorted: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    for w in sorted.windows(2) {
        if w[0] < w[1] {
            out.push(w[0] + (w[1] - w[0]) / 2.0);
        }
    }
    out.push(2.0);
    out.dedup();
    out
}

/// Picks the F1-optimal radius from positive and negative distances.
/// Ties go to the smaller radius.
pub fn best_radius(positive: &[f64], negative: &[f64]) -> (f64, f64) {
    let mut pos = positive.to_vec();
    let mut neg = negative.to_vec();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    all.sort_by(f64::total_cmp);

    let mut best: Option<(f64, F1)> = None;
    for r in candidates(&all) {
        let tp = pos.partition_point(|&d| d < r);
        let fp = neg.partition_point(|&d| d < r);
        let f1 = F1::new(tp, fp, pos.len() - tp);
        if best.is_none_or(|(_, b)| f1.cmp(b) == Ordering::Greater) {
            best = Some((r, f1));
        }
    }
    let (r, f1) = best.expect("at least two candidates");
    (r, f1.value())
}

pub fn calibrate_radius(cluster: &LabelCluster, negatives: &[&Embedding]) -> Result<RadiusCalibration, FilterError> {
    let label = cluster.label_id().to_string();
    if cluster.members().is_empty() {
        return Err(FilterError::NoPositives(label));
    }
    if negatives.is_empty() {
        return Err(FilterError::NoNegatives(label));
    }
    let distance = |e: &Embedding| cosine_distance(&e.to_f64(), cluster.centroid());
    let positive = cluster.members().iter().map(distance).collect::<Result<Vec<_>, _>>()?;
    let negative = negatives.iter().map(|e| distance(e)).collect::<Result<Vec<_>, _>>()?;
    let (radius, f1_at_radius) = best_radius(&positive, &negative);
    Ok(RadiusCalibration {
        label_id: label,
        radius,
        f1_at_radius,
        positives_count: positive.len(),
        negatives_count: negative.len(),
    })
}

/// Calibrates every cluster in the store (in parallel) and writes the radii
/// back. Reports come back triggers first, each kind in id order.
pub fn calibrate_store(store: &mut ClusterStore, negatives: NegativeSet) -> Result<Vec<RadiusCalibration>, FilterError> {
    let triggers: Vec<&LabelCluster> = store.trigger_clusters().values().collect();
    let arguments: Vec<&LabelCluster> = store.argument_clusters().values().collect();
    let jobs: Vec<(&LabelCluster, bool)> = triggers
        .iter()
        .map(|c| (*c, true))
        .chain(arguments.iter().map(|c| (*c, false)))
        .collect();

    let reports = jobs
        .par_iter()
        .map(|&(cluster, is_trigger)| {
            let pool: Vec<&LabelCluster> = match (negatives, is_trigger) {
                (NegativeSet::All, _) => triggers.iter().chain(&arguments).copied().collect(),
                (NegativeSet::SameKind, true) => triggers.clone(),
                (NegativeSet::SameKind, false) => arguments.clone(),
            };
            let neg: Vec<&Embedding> = pool
                .iter()
                .filter(|c| c.label_id() != cluster.label_id())
                .flat_map(|c| c.members())
                .collect();
            calibrate_radius(cluster, &neg)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let (trig, args) = reports.split_at(triggers.len());
    for (c, r) in store.trigger_clusters_mut().zip(trig) {
        c.set_radius(Some(r.radius))?;
    }
    for (c, r) in store.argument_clusters_mut().zip(args) {
        c.set_radius(Some(r.radius))?;
    }
    Ok(reports)
}

/// The id of the trigger cluster most similar to `trigger` (ties to the
/// smaller id), with its similarity.
pub fn nearest_trigger_cluster<'s>(trigger: &Embedding, store: &'s ClusterStore) -> Result<Option<(&'s LabelCluster, f64)>, FilterError> {
    let v = trigger.to_f64();
    let mut best: Option<(&LabelCluster, f64)> = None;
    for c in store.trigger_clusters().values() {
        let s = cosine_similarity(&v, c.centroid())?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((c, s));
        }
    }
    Ok(best)
}

/// Accept/reject predicate: returns the nearest trigger cluster's id when it
/// is in `in_ontology` and `trigger` lies strictly inside its radius.
pub fn accept_trigger(
    trigger: &Embedding,
    store: &ClusterStore,
    in_ontology: &BTreeSet<String>,
) -> Result<Option<String>, FilterError> {
    if in_ontology.is_empty() {
        return Ok(None);
    }
    let Some((nearest, _)) = nearest_trigger_cluster(trigger, store)? else {
        return Ok(None);
    };
    if !in_ontology.contains(nearest.label_id()) {
        return Ok(None);
    }
    let radius = nearest
        .radius()
        .ok_or_else(|| FilterError::Uncalibrated(nearest.label_id().to_string()))?;
    let d = cosine_distance(&trigger.to_f64(), nearest.centroid())?;
    Ok((d < radius).then(|| nearest.label_id().to_string()))
}

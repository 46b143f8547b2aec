//! Embedding vectors, label clusters and the cluster store.
//!
//! Vectors are kept as `f32` (the dump precision); centroids and every score
//! are computed in `f64`.

mod dump;
mod storefile;

pub use dump::{read_dump, read_dump_from, write_dump, write_dump_to, AnchorRecord, DumpEncoding, DumpError, Strategy};
pub use storefile::{StoreFileError, STORE_SCHEMA_VERSION};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ontology::Ontology;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VectorError {
    #[error("embedding vector is empty")]
    Empty,
    #[error("embedding vector has a non-finite value at position {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
}

/// A dense embedding with finite `f32` components.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VectorError::NonFinite(i));
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, VectorError> {
    if u.len() != v.len() {
        return Err(VectorError::DimMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(VectorError::ZeroNorm);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// `1 - cosine_similarity`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, VectorError> {
    cosine_similarity(u, v).map(|s| 1.0 - s)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cannot build a cluster from zero records")]
    Empty,
    #[error("cluster for \"{label}\" mixes labels (found \"{other}\")")]
    MixedLabels { label: String, other: String },
    #[error("cluster for \"{label}\" mixes dimensions {expected} and {found}")]
    MixedDims {
        label: String,
        expected: usize,
        found: usize,
    },
    #[error("radius {0} is outside [0, 2]")]
    RadiusOutOfRange(f64),
}

/// The anchor embeddings of one label together with their centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCluster {
    label_id: String,
    members: Vec<Embedding>,
    centroid: Vec<f64>,
    radius: Option<f64>,
}

impl LabelCluster {
    /// Groups anchor records of a single label. Members keep input order.
    pub fn build(records: &[AnchorRecord]) -> Result<Self, ClusterError> {
        let first = records.first().ok_or(ClusterError::Empty)?;
        for r in records {
            if r.label_id != first.label_id {
                return Err(ClusterError::MixedLabels {
                    label: first.label_id.clone(),
                    other: r.label_id.clone(),
                });
            }
        }
        Self::from_members(
            first.label_id.clone(),
            records.iter().map(|r| r.vector.clone()).collect(),
        )
    }

    pub fn from_members(label_id: String, members: Vec<Embedding>) -> Result<Self, ClusterError> {
        let dim = members.first().ok_or(ClusterError::Empty)?.dim();
        if let Some(bad) = members.iter().find(|m| m.dim() != dim) {
            return Err(ClusterError::MixedDims {
                label: label_id,
                expected: dim,
                found: bad.dim(),
            });
        }
        let centroid = mean(&members, dim);
        Ok(LabelCluster {
            label_id,
            members,
            centroid,
            radius: None,
        })
    }

    pub fn label_id(&self) -> &str {
        &self.label_id
    }

    pub fn members(&self) -> &[Embedding] {
        &self.members
    }

    pub fn centroid(&self) -> &[f64] {
        &self.centroid
    }

    pub fn dim(&self) -> usize {
        self.centroid.len()
    }

    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn set_radius(&mut self, radius: Option<f64>) -> Result<(), ClusterError> {
        if let Some(r) = radius {
            if !(0.0..=2.0).contains(&r) {
                return Err(ClusterError::RadiusOutOfRange(r));
            }
        }
        self.radius = radius;
        Ok(())
    }
}

// Componentwise mean. Each component is summed in sorted order so the result
// does not depend on member order, then clamped into the members' range.
fn mean(members: &[Embedding], dim: usize) -> Vec<f64> {
    let n = members.len() as f64;
    let mut column = Vec::with_capacity(members.len());
    (0..dim)
        .map(|i| {
            column.clear();
            column.extend(members.iter().map(|m| f64::from(m.as_slice()[i])));
            column.sort_by(f64::total_cmp);
            let sum: f64 = column.iter().sum();
            (sum / n).clamp(column[0], column[column.len() - 1])
        })
        .collect()
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("anchor record {index} has label \"{label}\", which is neither an event type nor a role type")]
    UnknownLabel { index: usize, label: String },
    #[error("no anchor records for {kind} \"{label}\"")]
    MissingCluster { kind: &'static str, label: String },
    #[error("anchor record {index} for {kind} \"{label}\" uses the {found} strategy (expected {expected})")]
    WrongStrategy {
        index: usize,
        kind: &'static str,
        label: String,
        found: Strategy,
        expected: Strategy,
    },
    #[error("anchor record {index} has dimension {found}, store dimension is {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("store has no clusters")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Accept trigger records built with the masked strategy and argument
    /// records built with the full strategy (representation ablations).
    pub allow_strategy_override: bool,
}

/// Trigger clusters keyed by event-type id and argument clusters keyed by
/// role-type id, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStore {
    dim: usize,
    trigger_clusters: BTreeMap<String, LabelCluster>,
    argument_clusters: BTreeMap<String, LabelCluster>,
}

impl ClusterStore {
    /// Builds one cluster per event type and per role type of `ontology`.
    /// Every record must belong to one of them and every label must have at
    /// least one record.
    pub fn build(
        ontology: &Ontology,
        records: &[AnchorRecord],
        options: BuildOptions,
    ) -> Result<Self, StoreError> {
        let dim = records.first().map(|r| r.vector.dim()).ok_or(StoreError::Empty)?;
        let mut triggers: BTreeMap<&str, Vec<Embedding>> = BTreeMap::new();
        let mut arguments: BTreeMap<&str, Vec<Embedding>> = BTreeMap::new();

        for (index, r) in records.iter().enumerate() {
            if r.vector.dim() != dim {
                return Err(StoreError::DimMismatch {
                    index,
                    expected: dim,
                    found: r.vector.dim(),
                });
            }
            let (kind, expected, bucket) = if ontology.event_type(&r.label_id).is_some() {
                ("event type", Strategy::Full, &mut triggers)
            } else if ontology.role_type(&r.label_id).is_some() {
                ("role type", Strategy::Masked, &mut arguments)
            } else {
                return Err(StoreError::UnknownLabel {
                    index,
                    label: r.label_id.clone(),
                });
            };
            if r.strategy != expected && !options.allow_strategy_override {
                return Err(StoreError::WrongStrategy {
                    index,
                    kind,
                    label: r.label_id.clone(),
                    found: r.strategy,
                    expected,
                });
            }
            bucket.entry(r.label_id.as_str()).or_default().push(r.vector.clone());
        }

        let mut trigger_clusters = BTreeMap::new();
        for ev in ontology.event_types() {
            let members = triggers.remove(ev.id.as_str()).ok_or_else(|| StoreError::MissingCluster {
                kind: "event type",
                label: ev.id.clone(),
            })?;
            trigger_clusters.insert(ev.id.clone(), LabelCluster::from_members(ev.id.clone(), members)?);
        }
        let mut argument_clusters = BTreeMap::new();
        for role in ontology.role_types() {
            let members = arguments.remove(role.id.as_str()).ok_or_else(|| StoreError::MissingCluster {
                kind: "role type",
                label: role.id.clone(),
            })?;
            argument_clusters.insert(role.id.clone(), LabelCluster::from_members(role.id.clone(), members)?);
        }

        Ok(ClusterStore {
            dim,
            trigger_clusters,
            argument_clusters,
        })
    }

    /// Assembles a store from prebuilt clusters.
    pub fn from_clusters(
        trigger_clusters: Vec<LabelCluster>,
        argument_clusters: Vec<LabelCluster>,
    ) -> Result<Self, StoreError> {
        let dim = trigger_clusters
            .iter()
            .chain(&argument_clusters)
            .map(LabelCluster::dim)
            .next()
            .ok_or(StoreError::Empty)?;
        for (index, c) in trigger_clusters.iter().chain(&argument_clusters).enumerate() {
            if c.dim() != dim {
                return Err(StoreError::DimMismatch {
                    index,
                    expected: dim,
                    found: c.dim(),
                });
            }
        }
        Ok(ClusterStore {
            dim,
            trigger_clusters: trigger_clusters
                .into_iter()
                .map(|c| (c.label_id.clone(), c))
                .collect(),
            argument_clusters: argument_clusters
                .into_iter()
                .map(|c| (c.label_id.clone(), c))
                .collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trigger_clusters(&self) -> &BTreeMap<String, LabelCluster> {
        &self.trigger_clusters
    }

    pub fn argument_clusters(&self) -> &BTreeMap<String, LabelCluster> {
        &self.argument_clusters
    }

    pub fn trigger_clusters_mut(&mut self) -> impl Iterator<Item = &mut LabelCluster> {
        self.trigger_clusters.values_mut()
    }

    pub fn argument_clusters_mut(&mut self) -> impl Iterator<Item = &mut LabelCluster> {
        self.argument_clusters.values_mut()
    }

    /// Ontology ids without a cluster in this store.
    pub fn missing_labels(&self, ontology: &Ontology) -> Vec<String> {
        ontology
            .event_types()
            .map(|e| &e.id)
            .filter(|id| !self.trigger_clusters.contains_key(*id))
            .chain(
                ontology
                    .role_types()
                    .map(|r| &r.id)
                    .filter(|id| !self.argument_clusters.contains_key(*id)),
            )
            .cloned()
            .collect()
    }
}

//! JSON persistence for [`ClusterStore`].
//!
//! Members are written as exact `f64` widenings of their `f32` values;
//! centroids are recomputed on load, radii are stored.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ClusterError, ClusterStore, Embedding, LabelCluster, StoreError, VectorError};

pub const STORE_SCHEMA_VERSION: u32 = 1;
const STORE_FORMAT_NAME: &str = "eventmap-store";

#[derive(Debug, Error)]
pub enum StoreFileError {
    #[error("cannot access store file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed store file: {0}")]
    Parse(String),
    #[error("unsupported store schema_version {0} (expected {STORE_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("store cluster \"{label}\": {source}")]
    Vector {
        label: String,
        #[source]
        source: VectorError,
    },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Serialize, Deserialize)]
struct StoreDoc {
    format: String,
    schema_version: u32,
    dim: usize,
    trigger_clusters: Vec<ClusterDoc>,
    argument_clusters: Vec<ClusterDoc>,
}

#[derive(Serialize, Deserialize)]
struct ClusterDoc {
    label_id: String,
    radius: Option<f64>,
    members: Vec<Vec<f64>>,
}

impl ClusterDoc {
    fn from_cluster(c: &LabelCluster) -> Self {
        ClusterDoc {
            label_id: c.label_id.clone(),
            radius: c.radius,
            members: c.members.iter().map(Embedding::to_f64).collect(),
        }
    }

    fn into_cluster(self) -> Result<LabelCluster, StoreFileError> {
        let label = self.label_id;
        let members = self
            .members
            .into_iter()
            .map(|m| Embedding::new(m.into_iter().map(|v| v as f32).collect()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| StoreFileError::Vector {
                label: label.clone(),
                source,
            })?;
        let mut cluster = LabelCluster::from_members(label, members)?;
        cluster.set_radius(self.radius)?;
        Ok(cluster)
    }
}

impl ClusterStore {
    pub fn to_json_string(&self) -> String {
        let doc = StoreDoc {
            format: STORE_FORMAT_NAME.to_string(),
            schema_version: STORE_SCHEMA_VERSION,
            dim: self.dim,
            trigger_clusters: self.trigger_clusters.values().map(ClusterDoc::from_cluster).collect(),
            argument_clusters: self.argument_clusters.values().map(ClusterDoc::from_cluster).collect(),
        };
        serde_json::to_string(&doc).expect("store serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, StoreFileError> {
        let doc: StoreDoc = serde_json::from_str(text).map_err(|e| StoreFileError::Parse(e.to_string()))?;
        if doc.format != STORE_FORMAT_NAME {
            return Err(StoreFileError::Parse(format!("unexpected format tag \"{}\"", doc.format)));
        }
        if doc.schema_version != STORE_SCHEMA_VERSION {
            return Err(StoreFileError::UnsupportedVersion(doc.schema_version));
        }
        let triggers = doc
            .trigger_clusters
            .into_iter()
            .map(ClusterDoc::into_cluster)
            .collect::<Result<Vec<_>, _>>()?;
        let arguments = doc
            .argument_clusters
            .into_iter()
            .map(ClusterDoc::into_cluster)
            .collect::<Result<Vec<_>, _>>()?;
        let store = ClusterStore::from_clusters(triggers, arguments)?;
        if store.dim != doc.dim {
            return Err(StoreFileError::Parse(format!(
                "header dim {} does not match cluster dim {}",
                doc.dim, store.dim
            )));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreFileError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string() + "\n").map_err(|source| StoreFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreFileError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| StoreFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

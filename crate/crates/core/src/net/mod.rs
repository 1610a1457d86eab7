//! Policy and value networks over a flat parameter vector.
//!
//! Networks are stateless descriptions (architecture plus a [`Layout`] that
//! maps named blocks onto slices of a flat `Vec<f64>`); parameters are passed
//! explicitly so that line-search candidates and old/new policy pairs are just
//! vectors. Gradients are written by hand for the fixed architectures.

mod checkpoint;
mod conv;
mod gaussian;
mod init;
mod layers;
mod policy;
mod value;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use conv::{conv1d_forward, Conv1d};
pub use gaussian::{kl_divergence, log_prob, GaussianAction, LOG_2PI};
pub use init::orthogonal_init;
pub use policy::{ConvSpec, FisherContext, PolicyArch, PolicyCache, PolicyNet, LOGSTD_MAX, LOGSTD_MIN};
pub use value::{ValueArch, ValueNet};

use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Flat vector of trainable parameters.
pub type ParamVector = Vec<f64>;

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Named block inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Registry mapping layer blocks to slices of the parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Layout {
    entries: Vec<LayoutEntry>,
}

impl Layout {
    pub fn push(&mut self, name: &str, shape: &[usize]) -> Range<usize> {
        let entry = LayoutEntry { name: name.to_owned(), offset: self.len(), shape: shape.to_vec() };
        let r = entry.range();
        self.entries.push(entry);
        r
    }

    pub fn len(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

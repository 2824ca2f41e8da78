//! Embedding backends and an exact cosine k-NN index.

mod cache;
mod index;
mod local;
mod remote;

pub use cache::CachedEmbedder;
pub use index::{Neighbor, VectorIndex};
pub use local::{LocalEmbedder, DEFAULT_LOCAL_DIM};
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig, DEFAULT_REMOTE_DIM, DEFAULT_REMOTE_MODEL, EMBED_API_KEY_VAR};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A unit-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalizes `values`. Fails on non-finite components or a zero vector.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding has zero dimensions".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("embedding has non-finite components".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput("embedding is the zero vector".into()));
        }
        Ok(EmbeddingVector {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cosine similarity, which for unit vectors is the dot product; clamped
    /// to [-1, 1] against rounding.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        dot.clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Local,
    Remote,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Local => "local",
            Backend::Remote => "remote",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Backend::Local),
            "remote" => Ok(Backend::Remote),
            other => Err(Error::Config(format!("unknown embedding backend {other:?}"))),
        }
    }
}

/// Produces one unit vector per input text, in order. The same text maps to
/// the same vector for a fixed backend and configuration.
pub trait Embedder: Send + Sync {
    fn backend(&self) -> Backend;
    fn model_name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn backend(&self) -> Backend {
        (**self).backend()
    }
    fn model_name(&self) -> &str {
        (**self).model_name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }
}

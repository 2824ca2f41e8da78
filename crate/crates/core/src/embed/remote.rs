use serde::{Deserialize, Serialize};

use super::{Backend, Embedder, EmbeddingVector};
use crate::http::{HttpConfig, JsonClient};
use crate::{Error, Result};

pub const DEFAULT_REMOTE_MODEL: &str = "text-embedding-3-large";
pub const DEFAULT_REMOTE_DIM: usize = 3072;
pub const EMBED_API_KEY_VAR: &str = "EMBED_API_KEY";

#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    pub http: HttpConfig,
    pub model: String,
    /// Expected vector length; replies of any other length are rejected.
    pub dim: usize,
    /// Texts per request.
    pub batch_size: usize,
}

impl RemoteEmbedderConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteEmbedderConfig {
            http: HttpConfig::new(endpoint).with_api_key_from_env(EMBED_API_KEY_VAR),
            model: DEFAULT_REMOTE_MODEL.to_string(),
            dim: DEFAULT_REMOTE_DIM,
            batch_size: 64,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct DataItem {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

/// Accepts both `{"data":[{"embedding":[..],"index":0},..]}` and
/// `{"embeddings":[[..],..]}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum EmbedResponse {
    Data { data: Vec<DataItem> },
    Plain { embeddings: Vec<Vec<f64>> },
}

impl EmbedResponse {
    fn into_ordered(self) -> Vec<Vec<f64>> {
        match self {
            EmbedResponse::Plain { embeddings } => embeddings,
            EmbedResponse::Data { mut data } => {
                if data.iter().all(|d| d.index.is_some()) {
                    data.sort_by_key(|d| d.index);
                }
                data.into_iter().map(|d| d.embedding).collect()
            }
        }
    }
}

/// Embedding client for an HTTP endpoint taking `{model, input: [texts]}`.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
    dim: usize,
    batch_size: usize,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Result<Self> {
        if config.batch_size == 0 || config.dim == 0 {
            return Err(Error::Config("batch_size and dim must be positive".into()));
        }
        Ok(RemoteEmbedder {
            client: JsonClient::new(config.http)?,
            model: config.model,
            dim: config.dim,
            batch_size: config.batch_size,
        })
    }

    fn embed_chunk(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let reply: EmbedResponse = self.client.post(&EmbedRequest {
            model: &self.model,
            input: texts,
        })?;
        let vectors = reply.into_ordered();
        if vectors.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "sent {} texts, received {} embeddings",
                texts.len(),
                vectors.len()
            )));
        }
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim,
                        actual: v.len(),
                    });
                }
                EmbeddingVector::normalized(v)
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn backend(&self) -> Backend {
        Backend::Remote
    }

    fn model_name(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if let Some(t) = texts.iter().find(|t| t.trim().is_empty()) {
            return Err(Error::InvalidInput(format!("cannot embed empty text {t:?}")));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}

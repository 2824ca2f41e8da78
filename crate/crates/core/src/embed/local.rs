use super::{Backend, Embedder, EmbeddingVector};
use crate::text::clean_text;
use crate::{Error, Result};

pub const DEFAULT_LOCAL_DIM: usize = 1024;

/// Deterministic offline embedder: character trigrams of the cleaned text
/// (padded with one space at each end) are hashed with 64-bit FNV-1a into
/// `dim` buckets, weighted by term frequency and L2-normalized.
///
/// Has no cross-lingual knowledge; two texts are close only when they share
/// character trigrams.
#[derive(Debug, Clone)]
pub struct LocalEmbedder {
    dim: usize,
    name: String,
}

impl LocalEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("local embedding dimension must be positive".into()));
        }
        Ok(LocalEmbedder {
            dim,
            name: format!("trigram-fnv1a-{dim}"),
        })
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        let cleaned = clean_text(text);
        if cleaned.is_empty() {
            return Err(Error::InvalidInput(format!(
                "text {text:?} is empty after cleaning"
            )));
        }
        let chars: Vec<char> = std::iter::once(' ')
            .chain(cleaned.chars())
            .chain(std::iter::once(' '))
            .collect();
        let mut counts = vec![0.0f64; self.dim];
        let mut buf = [0u8; 12];
        for window in chars.windows(3) {
            let mut len = 0;
            for c in window {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let bucket = (fnv1a(&buf[..len]) % self.dim as u64) as usize;
            counts[bucket] += 1.0;
        }
        EmbeddingVector::normalized(counts)
    }
}

impl Default for LocalEmbedder {
    fn default() -> Self {
        LocalEmbedder::new(DEFAULT_LOCAL_DIM).expect("positive default dimension")
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

impl Embedder for LocalEmbedder {
    fn backend(&self) -> Backend {
        Backend::Local
    }

    fn model_name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{Backend, Embedder, EmbeddingVector};
use crate::text::sha256_hex;
use crate::{Error, Result};

/// Wraps an embedder with an append-only on-disk cache keyed by
/// `(backend, model, sha256(text))`.
///
/// Each cache line is `key<TAB>dim<TAB>v1 v2 …` and is written with a single
/// `write_all` under a lock. Lines that fail to parse (a torn final write)
/// are ignored on load.
pub struct CachedEmbedder<E> {
    inner: E,
    path: PathBuf,
    memory: Mutex<HashMap<String, EmbeddingVector>>,
    file: Mutex<File>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn open(inner: E, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut memory = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                match parse_line(&line) {
                    Some((key, v)) => {
                        memory.insert(key, v);
                    }
                    None if line.is_empty() => {}
                    None => log::warn!("ignoring malformed cache line in {}", path.display()),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(CachedEmbedder {
            inner,
            path,
            memory: Mutex::new(memory),
            file: Mutex::new(file),
        })
    }

    pub fn len(&self) -> usize {
        self.memory.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    fn key(&self, text: &str) -> String {
        format!(
            "{}:{}:{}",
            self.inner.backend().as_str(),
            self.inner.model_name(),
            sha256_hex(text.as_bytes())
        )
    }
}

fn parse_line(line: &str) -> Option<(String, EmbeddingVector)> {
    let mut parts = line.split('\t');
    let key = parts.next()?.to_string();
    let dim: usize = parts.next()?.parse().ok()?;
    let values: Vec<f64> = parts
        .next()?
        .split(' ')
        .map(|v| v.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .ok()?;
    if parts.next().is_some() || values.len() != dim {
        return None;
    }
    EmbeddingVector::normalized(values).ok().map(|v| (key, v))
}

fn format_line(key: &str, v: &EmbeddingVector) -> String {
    let values: Vec<String> = v.values().iter().map(|x| format!("{x:?}")).collect();
    format!("{key}\t{}\t{}\n", v.dim(), values.join(" "))
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn backend(&self) -> Backend {
        self.inner.backend()
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let keys: Vec<String> = texts.iter().map(|t| self.key(t)).collect();
        let mut missing: Vec<(String, &str)> = Vec::new();
        {
            let memory = self.memory.lock().expect("cache poisoned");
            for (key, text) in keys.iter().zip(texts) {
                if !memory.contains_key(key) && !missing.iter().any(|(k, _)| k == key) {
                    missing.push((key.clone(), text));
                }
            }
        }
        if !missing.is_empty() {
            let fresh_texts: Vec<&str> = missing.iter().map(|(_, t)| *t).collect();
            let fresh = self.inner.embed_batch(&fresh_texts)?;
            let mut memory = self.memory.lock().expect("cache poisoned");
            let mut file = self.file.lock().expect("cache poisoned");
            for ((key, _), v) in missing.into_iter().zip(fresh) {
                if memory.contains_key(&key) {
                    continue;
                }
                if v.dim() != self.inner.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.inner.dim(),
                        actual: v.dim(),
                    });
                }
                file.write_all(format_line(&key, &v).as_bytes())
                    .map_err(|e| Error::io(&self.path, e))?;
                memory.insert(key, v);
            }
            file.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        let memory = self.memory.lock().expect("cache poisoned");
        Ok(keys.iter().map(|k| memory[k].clone()).collect())
    }
}

//! Green-skill taxonomy loading and embedding-text construction.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::ingest::Reject;
use crate::text::clean_text;
use crate::{Error, Result};

pub const DEFAULT_ALT_DELIMITER: char = '|';

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub entry_id: u32,
    pub main_label: String,
    pub alt_labels: Vec<String>,
    pub description: String,
}

impl TaxonomyEntry {
    /// Text embedded for this entry: main label, alternative labels and
    /// description, each cleaned, joined by single spaces.
    pub fn embedding_text(&self) -> String {
        embedding_text(self)
    }
}

pub fn embedding_text(entry: &TaxonomyEntry) -> String {
    std::iter::once(entry.main_label.as_str())
        .chain(entry.alt_labels.iter().map(String::as_str))
        .chain(std::iter::once(entry.description.as_str()))
        .map(clean_text)
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub entries: Vec<TaxonomyEntry>,
}

impl Taxonomy {
    pub fn new(entries: Vec<TaxonomyEntry>) -> Result<Self> {
        let mut ids = HashSet::new();
        for e in &entries {
            if e.main_label.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "taxonomy entry {} has an empty main label",
                    e.entry_id
                )));
            }
            if !ids.insert(e.entry_id) {
                return Err(Error::InvalidInput(format!(
                    "duplicate taxonomy entry id {}",
                    e.entry_id
                )));
            }
        }
        Ok(Taxonomy { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, entry_id: u32) -> Option<&TaxonomyEntry> {
        self.entries.iter().find(|e| e.entry_id == entry_id)
    }

    pub fn label(&self, entry_id: u32) -> Option<&str> {
        self.get(entry_id).map(|e| e.main_label.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Taxonomy = serde_json::from_str(s)?;
        Taxonomy::new(t.entries)
    }
}

#[derive(Debug, Clone)]
pub struct TaxonomyLoad {
    pub taxonomy: Taxonomy,
    pub rejects: Vec<Reject>,
}

/// Loads a taxonomy CSV with columns `mainLabel`, `altLabels` (split on
/// `alt_delimiter`) and `description`, plus an optional `entryId`. Without
/// `entryId`, accepted rows are numbered from 0 in file order.
pub fn load_taxonomy(reader: impl Read, alt_delimiter: char) -> Result<TaxonomyLoad> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let main = col("mainLabel")
        .ok_or_else(|| Error::InvalidInput("taxonomy CSV has no mainLabel column".into()))?;
    let alt = col("altLabels");
    let desc = col("description");
    let id_col = col("entryId");

    let mut entries = Vec::new();
    let mut rejects = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw = || rec.iter().collect::<Vec<_>>().join(",");
        let main_label = rec.get(main).unwrap_or("").trim().to_string();
        if main_label.is_empty() {
            rejects.push(Reject {
                line,
                reason: "missing mainLabel".into(),
                raw: raw(),
            });
            continue;
        }
        let entry_id = match id_col.and_then(|i| rec.get(i)).map(str::trim) {
            Some(s) if !s.is_empty() => match s.parse::<u32>() {
                Ok(id) => id,
                Err(_) => {
                    rejects.push(Reject {
                        line,
                        reason: format!("unparseable entryId {s:?}"),
                        raw: raw(),
                    });
                    continue;
                }
            },
            _ => entries.len() as u32,
        };
        let alt_labels = alt
            .and_then(|i| rec.get(i))
            .unwrap_or("")
            .split(alt_delimiter)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let description = desc.and_then(|i| rec.get(i)).unwrap_or("").trim().to_string();
        entries.push(TaxonomyEntry {
            entry_id,
            main_label,
            alt_labels,
            description,
        });
    }
    Ok(TaxonomyLoad {
        taxonomy: Taxonomy::new(entries)?,
        rejects,
    })
}

/// Writes the taxonomy in the CSV layout accepted by [`load_taxonomy`].
pub fn write_taxonomy(taxonomy: &Taxonomy, alt_delimiter: char, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["entryId", "mainLabel", "altLabels", "description"])?;
    let sep = alt_delimiter.to_string();
    for e in &taxonomy.entries {
        w.write_record([
            e.entry_id.to_string().as_str(),
            &e.main_label,
            &e.alt_labels.join(&sep),
            &e.description,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<taxonomy output>", e))?;
    Ok(())
}

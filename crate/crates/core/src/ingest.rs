//! Parsing, cleaning, deduplication and month bucketing of raw skill records.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingVector;
use crate::text::{clean_text, sha256_hex};
use crate::{Error, Result};

/// Default cosine threshold above which two skill texts are treated as
/// variants of one skill.
pub const DEFAULT_VARIANT_THRESHOLD: f64 = 0.92;

/// A calendar month, ordered by `(year, month)` and rendered as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeriodId {
    year: i32,
    month: u32,
}

impl PeriodId {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidInput(format!("month {month} outside 1..=12")));
        }
        if !(0..=9999).contains(&year) {
            return Err(Error::InvalidInput(format!("year {year} outside 0..=9999")));
        }
        Ok(PeriodId { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    /// The calendar month immediately after this one.
    pub fn succ(self) -> PeriodId {
        if self.month == 12 {
            PeriodId {
                year: self.year + 1,
                month: 1,
            }
        } else {
            PeriodId {
                year: self.year,
                month: self.month + 1,
            }
        }
    }
}

impl fmt::Display for PeriodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for PeriodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("period {s:?} is not YYYY-MM"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        let year = y.parse::<i32>().map_err(|_| bad())?;
        let month = m.parse::<u32>().map_err(|_| bad())?;
        PeriodId::new(year, month)
    }
}

impl Serialize for PeriodId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PeriodId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Returns the month containing `date`.
pub fn bucket_month(date: NaiveDate) -> PeriodId {
    PeriodId {
        year: date.year(),
        month: date.month(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Indeed,
    Occ,
    Linkedin,
    Other,
}

impl Source {
    pub fn parse_lenient(s: &str) -> Source {
        match clean_text(s).replace(' ', "").as_str() {
            "indeed" | "indeedmexico" | "indeedméxico" => Source::Indeed,
            "occ" | "occmundial" => Source::Occ,
            "linkedin" => Source::Linkedin,
            _ => Source::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Indeed => "indeed",
            Source::Occ => "occ",
            Source::Linkedin => "linkedin",
            Source::Other => "other",
        }
    }
}

/// One detected skill in one job posting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillRecord {
    pub job_id: String,
    pub title: String,
    pub skill_text: String,
    /// Assigned by [`normalize_variants`]; `None` straight out of parsing.
    pub skill_id: Option<u32>,
    pub source: Source,
    pub period: PeriodId,
}

/// A raw posting as collected from a job board.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobPosting {
    pub id: String,
    pub job_name: String,
    pub job_description: String,
    pub date: NaiveDate,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Jsonl,
}

impl FromStr for RecordFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(RecordFormat::Csv),
            "jsonl" | "ndjson" => Ok(RecordFormat::Jsonl),
            other => Err(Error::InvalidInput(format!("unknown record format {other:?}"))),
        }
    }
}

/// A row that could not become a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
    pub raw: String,
}

/// Result of [`parse_records`]. `records.len() == rows_in - rejects.len() - duplicates`.
#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<SkillRecord>,
    pub rejects: Vec<Reject>,
    pub rows_in: usize,
    pub duplicates: usize,
    /// Subset of `rejects` whose skill text was empty after cleaning.
    pub empty_skill: usize,
}

struct RawRow {
    line: u64,
    raw: String,
    job_id: Option<String>,
    title: Option<String>,
    skill: Option<String>,
    month: Option<String>,
    year: Option<String>,
    source: Option<String>,
    skill_id: Option<String>,
}

enum RowError {
    EmptySkill,
    Invalid(String),
}

fn derive_job_id(title: &str) -> String {
    format!("job_{}", &sha256_hex(title.as_bytes())[..10])
}

fn row_to_record(row: &RawRow) -> std::result::Result<SkillRecord, RowError> {
    let title = clean_text(row.title.as_deref().unwrap_or(""));
    let job_id = match row.job_id.as_deref().map(str::trim) {
        Some(id) if !id.is_empty() => id.to_string(),
        _ if !title.is_empty() => derive_job_id(&title),
        _ => return Err(RowError::Invalid("missing job_id and title".into())),
    };
    let skill_raw = row
        .skill
        .as_deref()
        .ok_or_else(|| RowError::Invalid("missing skill field".into()))?;
    let skill_text = clean_text(skill_raw);
    if skill_text.is_empty() {
        return Err(RowError::EmptySkill);
    }
    let month: u32 = row
        .month
        .as_deref()
        .map(str::trim)
        .and_then(|m| m.parse().ok())
        .ok_or_else(|| RowError::Invalid(format!("unparseable month {:?}", row.month.as_deref().unwrap_or(""))))?;
    let year: i32 = row
        .year
        .as_deref()
        .map(str::trim)
        .and_then(|y| y.parse().ok())
        .ok_or_else(|| RowError::Invalid(format!("unparseable year {:?}", row.year.as_deref().unwrap_or(""))))?;
    let period = PeriodId::new(year, month).map_err(|e| RowError::Invalid(e.to_string()))?;
    let skill_id = match row.skill_id.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(
            s.parse::<u32>()
                .map_err(|_| RowError::Invalid(format!("unparseable skill_id {s:?}")))?,
        ),
    };
    Ok(SkillRecord {
        job_id,
        title,
        skill_text,
        skill_id,
        source: Source::parse_lenient(row.source.as_deref().unwrap_or("")),
        period,
    })
}

fn csv_rows(reader: impl Read) -> Result<Vec<std::result::Result<RawRow, Reject>>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let (job_id, title, skill, month, year, source, skill_id) = (
        col("job_id"),
        col("title"),
        col("skill"),
        col("month"),
        col("year"),
        col("source"),
        col("skill_id"),
    );
    if skill.is_none() || month.is_none() || year.is_none() {
        return Err(Error::InvalidInput(format!(
            "records header must contain skill, month and year columns, got {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for result in rdr.records() {
        match result {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                let raw = rec.iter().collect::<Vec<_>>().join(",");
                if rec.len() != headers.len() {
                    out.push(Err(Reject {
                        line,
                        reason: format!("expected {} fields, found {}", headers.len(), rec.len()),
                        raw,
                    }));
                    continue;
                }
                let get = |i: Option<usize>| i.and_then(|i| rec.get(i)).map(str::to_string);
                out.push(Ok(RawRow {
                    line,
                    raw,
                    job_id: get(job_id),
                    title: get(title),
                    skill: get(skill),
                    month: get(month),
                    year: get(year),
                    source: get(source),
                    skill_id: get(skill_id),
                }));
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.push(Err(Reject {
                    line,
                    reason: e.to_string(),
                    raw: String::new(),
                }));
            }
        }
    }
    Ok(out)
}

fn json_field(obj: &serde_json::Map<String, serde_json::Value>, key: &str) -> Option<String> {
    match obj.get(key)? {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

fn jsonl_rows(reader: impl Read) -> Result<Vec<std::result::Result<RawRow, Reject>>> {
    let mut out = Vec::new();
    let buf = std::io::BufReader::new(reader);
    for (idx, line) in buf.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line.map_err(|e| Error::io("<records stream>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(obj)) => out.push(Ok(RawRow {
                line: line_no,
                raw: line.clone(),
                job_id: json_field(&obj, "job_id"),
                title: json_field(&obj, "title"),
                skill: json_field(&obj, "skill"),
                month: json_field(&obj, "month"),
                year: json_field(&obj, "year"),
                source: json_field(&obj, "source"),
                skill_id: json_field(&obj, "skill_id"),
            })),
            Ok(_) => out.push(Err(Reject {
                line: line_no,
                reason: "line is not a JSON object".into(),
                raw: line,
            })),
            Err(e) => out.push(Err(Reject {
                line: line_no,
                reason: format!("invalid JSON: {e}"),
                raw: line,
            })),
        }
    }
    Ok(out)
}

/// Parses a records stream, cleaning text, rejecting malformed rows and
/// collapsing exact `(job_id, skill_text, period)` duplicates.
///
/// Rejected rows never abort the batch.
pub fn parse_records(reader: impl Read, format: RecordFormat) -> Result<ParseOutcome> {
    let rows = match format {
        RecordFormat::Csv => csv_rows(reader)?,
        RecordFormat::Jsonl => jsonl_rows(reader)?,
    };
    let mut outcome = ParseOutcome {
        rows_in: rows.len(),
        ..Default::default()
    };
    let mut seen: HashSet<(String, String, PeriodId)> = HashSet::new();
    for row in rows {
        let row = match row {
            Ok(r) => r,
            Err(reject) => {
                outcome.rejects.push(reject);
                continue;
            }
        };
        match row_to_record(&row) {
            Ok(rec) => {
                let key = (rec.job_id.clone(), rec.skill_text.clone(), rec.period);
                if seen.insert(key) {
                    outcome.records.push(rec);
                } else {
                    outcome.duplicates += 1;
                }
            }
            Err(RowError::EmptySkill) => {
                outcome.empty_skill += 1;
                outcome.rejects.push(Reject {
                    line: row.line,
                    reason: "empty skill text after cleaning".into(),
                    raw: row.raw,
                });
            }
            Err(RowError::Invalid(reason)) => outcome.rejects.push(Reject {
                line: row.line,
                reason,
                raw: row.raw,
            }),
        }
    }
    for r in &outcome.rejects {
        log::debug!("rejected line {}: {}", r.line, r.reason);
    }
    Ok(outcome)
}

/// Writes records in the canonical CSV layout
/// (`job_id,title,skill,month,year,source,skill_id`).
pub fn write_records(records: &[SkillRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["job_id", "title", "skill", "month", "year", "source", "skill_id"])?;
    for r in records {
        w.write_record([
            r.job_id.as_str(),
            r.title.as_str(),
            r.skill_text.as_str(),
            &r.period.month().to_string(),
            &r.period.year().to_string(),
            r.source.as_str(),
            &r.skill_id.map(|id| id.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<records output>", e))?;
    Ok(())
}

pub fn write_rejects(rejects: &[Reject], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["line", "reason", "raw"])?;
    for r in rejects {
        w.write_record([r.line.to_string().as_str(), &r.reason, &r.raw])?;
    }
    w.flush().map_err(|e| Error::io("<rejects output>", e))?;
    Ok(())
}

/// Parses raw postings (`id,job_name,job_description,date,source`), with
/// dates in `YYYY-MM-DD`. Rows with unparseable dates are rejected.
pub fn parse_postings(reader: impl Read) -> Result<(Vec<JobPosting>, Vec<Reject>)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let cols = [
        col("id"),
        col("job_name"),
        col("job_description"),
        col("date"),
        col("source"),
    ];
    if cols.iter().any(Option::is_none) {
        return Err(Error::InvalidInput(
            "postings header must be id,job_name,job_description,date,source".into(),
        ));
    }
    let cols: Vec<usize> = cols.into_iter().flatten().collect();
    let mut postings = Vec::new();
    let mut rejects = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(cols[i]).unwrap_or("").to_string();
        let date_raw = field(3);
        match NaiveDate::parse_from_str(date_raw.trim(), "%Y-%m-%d") {
            Ok(date) => postings.push(JobPosting {
                id: field(0),
                job_name: field(1),
                job_description: field(2),
                date,
                source: Source::parse_lenient(&field(4)),
            }),
            Err(_) => rejects.push(Reject {
                line,
                reason: format!("unparseable date {date_raw:?}"),
                raw: rec.iter().collect::<Vec<_>>().join(","),
            }),
        }
    }
    Ok((postings, rejects))
}

/// One line of the variant-mapping table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariantMapping {
    pub skill_text: String,
    pub skill_id: u32,
    pub representative: String,
}

#[derive(Debug, Clone)]
pub struct VariantOutcome {
    pub records: Vec<SkillRecord>,
    pub mapping: Vec<VariantMapping>,
    /// Records dropped because merging made `(job_id, skill_id, period)` collide.
    pub merged_duplicates: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Groups skill texts whose pairwise cosine similarity is at least
/// `threshold` (single linkage) and assigns one `skill_id` per group.
///
/// Ids are numbered from 1 in order of each group's lexicographically
/// smallest member, so the result does not depend on record order. The
/// representative label of a group is its most frequent text (ties go to the
/// smallest text).
pub fn normalize_variants(
    records: Vec<SkillRecord>,
    vectors: &HashMap<String, EmbeddingVector>,
    threshold: f64,
) -> Result<VariantOutcome> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "variant threshold {threshold} outside [0, 1]"
        )));
    }
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        *freq.entry(r.skill_text.as_str()).or_default() += 1;
    }
    let texts: Vec<&str> = freq.keys().copied().collect();
    let vecs = texts
        .iter()
        .map(|t| {
            vectors
                .get(*t)
                .ok_or_else(|| Error::MissingVector(t.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sets = DisjointSet::new(texts.len());
    for i in 0..texts.len() {
        for j in (i + 1)..texts.len() {
            if vecs[i].cosine(vecs[j]) >= threshold {
                sets.union(i, j);
            }
        }
    }

    // Roots are the smallest index in each group and `texts` is sorted, so
    // iterating in order numbers groups by their smallest member.
    let mut group_id: HashMap<usize, u32> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut text_id: Vec<u32> = Vec::with_capacity(texts.len());
    for i in 0..texts.len() {
        let root = sets.find(i);
        let next = group_id.len() as u32 + 1;
        let id = *group_id.entry(root).or_insert(next);
        if id as usize > members.len() {
            members.push(Vec::new());
        }
        members[id as usize - 1].push(i);
        text_id.push(id);
    }
    let representatives: Vec<&str> = members
        .iter()
        .map(|group| {
            group
                .iter()
                .map(|&i| texts[i])
                .max_by(|a, b| freq[a].cmp(&freq[b]).then_with(|| b.cmp(a)))
                .expect("non-empty group")
        })
        .collect();

    let id_of: HashMap<&str, u32> = texts.iter().copied().zip(text_id.iter().copied()).collect();
    let mapping = texts
        .iter()
        .zip(&text_id)
        .map(|(t, &id)| VariantMapping {
            skill_text: t.to_string(),
            skill_id: id,
            representative: representatives[id as usize - 1].to_string(),
        })
        .collect();

    let mut seen: HashSet<(String, u32, PeriodId)> = HashSet::new();
    let mut merged_duplicates = 0;
    let mut out = Vec::with_capacity(records.len());
    for mut r in records.iter().cloned() {
        let id = id_of[r.skill_text.as_str()];
        r.skill_id = Some(id);
        if seen.insert((r.job_id.clone(), id, r.period)) {
            out.push(r);
        } else {
            merged_duplicates += 1;
        }
    }
    Ok(VariantOutcome {
        records: out,
        mapping,
        merged_duplicates,
    })
}

pub fn write_variant_mapping(mapping: &[VariantMapping], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["skill_text", "skill_id", "representative"])?;
    for m in mapping {
        w.write_record([m.skill_text.as_str(), &m.skill_id.to_string(), &m.representative])?;
    }
    w.flush().map_err(|e| Error::io("<mapping output>", e))?;
    Ok(())
}

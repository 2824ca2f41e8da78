//! Green-skill assignment: nearest-candidate retrieval, validation and a
//! concurrent, resumable batch runner.

mod chat;
pub mod prompt;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

pub use chat::{ChatClient, ChatConfig, CHAT_API_KEY_VAR, DEFAULT_CHAT_MODEL};

use crate::embed::{Embedder, EmbeddingVector, Neighbor, VectorIndex};
use crate::ingest::{PeriodId, SkillRecord};
use crate::taxonomy::Taxonomy;
use crate::{Error, Result};

pub const DEFAULT_CANDIDATES: usize = 5;
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.40;

/// The nearest taxonomy entries for one job skill.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSet {
    pub skill_id: u32,
    pub skill_text: String,
    pub job_context: String,
    pub candidates: Vec<Neighbor>,
}

impl CandidateSet {
    pub fn contains(&self, entry_id: u32) -> bool {
        self.candidates.iter().any(|c| c.entry_id == entry_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Accepted(u32),
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorBackend {
    RemoteLlm,
    LocalRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchDecision {
    pub skill_id: u32,
    pub decision: Decision,
    pub backend: ValidatorBackend,
}

/// One validated green-skill occurrence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct GreenAssignment {
    pub job_id: String,
    pub skill_id: u32,
    pub entry_id: u32,
    pub label: String,
    pub period: PeriodId,
}

/// Ranks the taxonomy against an already-embedded skill.
pub fn retrieve_candidates(
    record: &SkillRecord,
    query: &EmbeddingVector,
    index: &VectorIndex,
    k: usize,
) -> Result<CandidateSet> {
    let skill_id = record
        .skill_id
        .ok_or_else(|| Error::InvalidInput(format!("record {:?} has no skill_id", record.skill_text)))?;
    Ok(CandidateSet {
        skill_id,
        skill_text: record.skill_text.clone(),
        job_context: record.title.clone(),
        candidates: index.knn(query, k)?,
    })
}

pub trait Validator: Send + Sync {
    fn backend(&self) -> ValidatorBackend;
    fn validate(&self, candidates: &CandidateSet, taxonomy: &Taxonomy) -> Result<MatchDecision>;
}

/// Accepts the top candidate when its score reaches `threshold`.
#[derive(Debug, Clone, Copy)]
pub struct LocalRuleValidator {
    pub threshold: f64,
}

impl Default for LocalRuleValidator {
    fn default() -> Self {
        LocalRuleValidator {
            threshold: DEFAULT_MATCH_THRESHOLD,
        }
    }
}

impl Validator for LocalRuleValidator {
    fn backend(&self) -> ValidatorBackend {
        ValidatorBackend::LocalRule
    }

    fn validate(&self, set: &CandidateSet, _taxonomy: &Taxonomy) -> Result<MatchDecision> {
        let top = set
            .candidates
            .first()
            .ok_or_else(|| Error::InvalidInput("empty candidate set".into()))?;
        let decision = if top.score >= self.threshold {
            Decision::Accepted(top.entry_id)
        } else {
            Decision::Rejected
        };
        Ok(MatchDecision {
            skill_id: set.skill_id,
            decision,
            backend: ValidatorBackend::LocalRule,
        })
    }
}

/// Asks a chat model to pick one candidate by main label or answer `No`.
#[derive(Debug, Clone)]
pub struct LlmValidator {
    client: ChatClient,
}

impl LlmValidator {
    pub fn new(client: ChatClient) -> Self {
        LlmValidator { client }
    }
}

impl Validator for LlmValidator {
    fn backend(&self) -> ValidatorBackend {
        ValidatorBackend::RemoteLlm
    }

    fn validate(&self, set: &CandidateSet, taxonomy: &Taxonomy) -> Result<MatchDecision> {
        if set.candidates.is_empty() {
            return Err(Error::InvalidInput("empty candidate set".into()));
        }
        let labels = set
            .candidates
            .iter()
            .map(|c| {
                taxonomy
                    .label(c.entry_id)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown taxonomy entry {}", c.entry_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        let messages = prompt::validation_messages(&set.skill_text, &set.job_context, &labels);
        let reply = self.client.complete(&messages)?;
        let decision = match prompt::parse_validation_reply(&reply, &labels)? {
            Some(i) => Decision::Accepted(set.candidates[i].entry_id),
            None => Decision::Rejected,
        };
        Ok(MatchDecision {
            skill_id: set.skill_id,
            decision,
            backend: ValidatorBackend::RemoteLlm,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MatchConfig {
    pub n_workers: usize,
    pub k: usize,
    /// Directory for per-worker partial files; enables resuming.
    pub work_dir: Option<PathBuf>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            n_workers: 1,
            k: DEFAULT_CANDIDATES,
            work_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatchStats {
    pub accepted: usize,
    pub rejected: usize,
    pub errored: usize,
    /// Records whose `(job_id, skill_id)` pair repeated an earlier record.
    pub duplicates: usize,
    /// Decisions recovered from partial files of an earlier run.
    pub resumed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchFailure {
    pub job_id: String,
    pub skill_id: u32,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct MatchOutput {
    /// Sorted by `(job_id, skill_id)`.
    pub assignments: Vec<GreenAssignment>,
    pub stats: MatchStats,
    pub failures: Vec<MatchFailure>,
}

/// Sizes of `n_workers` contiguous partitions of `n` items, larger first.
pub fn partition_sizes(n: usize, n_workers: usize) -> Vec<usize> {
    let base = n / n_workers;
    let extra = n % n_workers;
    (0..n_workers).map(|j| base + usize::from(j < extra)).collect()
}

type PairKey = (String, u32);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    Accepted(u32),
    Rejected,
}

struct Partial {
    file: Option<File>,
    path: Option<PathBuf>,
}

impl Partial {
    fn record(&mut self, key: &PairKey, outcome: Outcome) -> Result<()> {
        if let (Some(f), Some(p)) = (self.file.as_mut(), self.path.as_ref()) {
            let line = match outcome {
                Outcome::Accepted(e) => format!("{}\t{}\taccepted\t{e}\n", key.0, key.1),
                Outcome::Rejected => format!("{}\t{}\trejected\t\n", key.0, key.1),
            };
            f.write_all(line.as_bytes()).map_err(|e| Error::io(p, e))?;
            f.flush().map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}

fn partial_path(dir: &Path, worker: usize) -> PathBuf {
    dir.join(format!("partial-worker-{worker:04}.tsv"))
}

fn load_partials(dir: &Path) -> Result<BTreeMap<PairKey, Outcome>> {
    let mut done = BTreeMap::new();
    if !dir.exists() {
        return Ok(done);
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("partial-worker-") && n.ends_with(".tsv"))
        })
        .collect();
    paths.sort();
    for path in paths {
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        for line in BufReader::new(f).lines() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            let fields: Vec<&str> = line.split('\t').collect();
            let parsed = match fields.as_slice() {
                [job, skill, "accepted", entry] => skill
                    .parse()
                    .ok()
                    .zip(entry.parse().ok())
                    .map(|(s, e)| ((job.to_string(), s), Outcome::Accepted(e))),
                [job, skill, "rejected", ""] => {
                    skill.parse().ok().map(|s| ((job.to_string(), s), Outcome::Rejected))
                }
                _ => None,
            };
            match parsed {
                Some((key, outcome)) => {
                    done.entry(key).or_insert(outcome);
                }
                None => log::warn!("ignoring malformed partial line in {}", path.display()),
            }
        }
    }
    Ok(done)
}

struct Shared<'a> {
    taxonomy: &'a Taxonomy,
    index: &'a VectorIndex,
    embedder: &'a dyn Embedder,
    validator: &'a dyn Validator,
    k: usize,
    processed: Mutex<HashSet<PairKey>>,
}

struct WorkerResult {
    decided: Vec<(PairKey, Outcome)>,
    failures: Vec<MatchFailure>,
}

/// Embeds each distinct text of the partition once.
fn embed_partition<'r>(
    embedder: &dyn Embedder,
    records: &[&'r SkillRecord],
) -> HashMap<&'r str, Result<EmbeddingVector>> {
    let mut texts: Vec<&str> = records.iter().map(|r| r.skill_text.as_str()).collect();
    texts.sort_unstable();
    texts.dedup();
    match embedder.embed_batch(&texts) {
        Ok(vs) => texts.into_iter().zip(vs.into_iter().map(Ok)).collect(),
        // Isolate the failing texts so one bad record does not fail the rest.
        Err(_) => texts
            .into_iter()
            .map(|t| {
                let v = embedder
                    .embed_batch(&[t])
                    .and_then(|mut v| v.pop().ok_or(Error::Protocol("empty embedding reply".into())));
                (t, v)
            })
            .collect(),
    }
}

fn run_worker(shared: &Shared<'_>, records: &[&SkillRecord], partial: &mut Partial) -> Result<WorkerResult> {
    let mut out = WorkerResult {
        decided: Vec::new(),
        failures: Vec::new(),
    };
    let vectors = embed_partition(shared.embedder, records);
    let mut neighbors: HashMap<&str, Vec<Neighbor>> = HashMap::new();
    for record in records {
        let skill_id = record.skill_id.expect("checked before partitioning");
        let key = (record.job_id.clone(), skill_id);
        if !shared.processed.lock().expect("pair set poisoned").insert(key.clone()) {
            continue;
        }
        let text = record.skill_text.as_str();
        let decided = match vectors.get(text).expect("every text embedded") {
            Ok(v) => Ok(v),
            Err(e) => Err(Error::Protocol(format!("embedding failed: {e}"))),
        }
        .and_then(|v| {
            let candidates = match neighbors.get(text) {
                Some(c) => c.clone(),
                None => {
                    let c = shared.index.knn(v, shared.k)?;
                    neighbors.insert(text, c.clone());
                    c
                }
            };
            let set = CandidateSet {
                skill_id,
                skill_text: record.skill_text.clone(),
                job_context: record.title.clone(),
                candidates,
            };
            let d = shared.validator.validate(&set, shared.taxonomy)?;
            match d.decision {
                Decision::Accepted(e) if !set.contains(e) => Err(Error::Protocol(format!(
                    "validator accepted entry {e} outside the candidate set"
                ))),
                Decision::Accepted(e) => Ok(Outcome::Accepted(e)),
                Decision::Rejected => Ok(Outcome::Rejected),
            }
        });
        match decided {
            Ok(outcome) => {
                partial.record(&key, outcome)?;
                out.decided.push((key, outcome));
            }
            Err(e) => {
                log::warn!("skipping ({}, {}): {e}", key.0, key.1);
                out.failures.push(MatchFailure {
                    job_id: key.0,
                    skill_id: key.1,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Matches every record against the taxonomy using `n_workers` threads over
/// contiguous, disjoint partitions of the input.
///
/// Each `(job_id, skill_id)` pair is decided at most once: the first record
/// carrying a pair (in input order) is the one evaluated and later ones count
/// as duplicates. With a `work_dir`, decisions are appended to per-worker
/// files as they are made and pairs already present there are not re-decided.
/// Failed pairs are not persisted and are retried on the next run.
///
/// `accepted + rejected + errored + duplicates == records.len()`.
pub fn run_matching(
    records: &[SkillRecord],
    taxonomy: &Taxonomy,
    index: &VectorIndex,
    embedder: &dyn Embedder,
    validator: &dyn Validator,
    config: &MatchConfig,
) -> Result<MatchOutput> {
    if config.n_workers == 0 {
        return Err(Error::Config("n_workers must be at least 1".into()));
    }
    if config.k == 0 {
        return Err(Error::Config("candidate count k must be at least 1".into()));
    }
    if embedder.dim() != index.dim() && !index.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: index.dim(),
            actual: embedder.dim(),
        });
    }
    if let Some(r) = records.iter().find(|r| r.skill_id.is_none()) {
        return Err(Error::InvalidInput(format!(
            "record ({}, {:?}) has no skill_id; normalize variants first",
            r.job_id, r.skill_text
        )));
    }

    let mut first_seen: HashSet<PairKey> = HashSet::new();
    let mut unique: Vec<&SkillRecord> = Vec::with_capacity(records.len());
    let mut stats = MatchStats::default();
    for r in records {
        if first_seen.insert((r.job_id.clone(), r.skill_id.expect("checked"))) {
            unique.push(r);
        } else {
            stats.duplicates += 1;
        }
    }

    let resumed = match &config.work_dir {
        Some(dir) => load_partials(dir)?,
        None => BTreeMap::new(),
    };
    if let Some(dir) = &config.work_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let shared = Shared {
        taxonomy,
        index,
        embedder,
        validator,
        k: config.k,
        processed: Mutex::new(resumed.keys().cloned().collect()),
    };

    let mut partials = Vec::with_capacity(config.n_workers);
    for j in 0..config.n_workers {
        partials.push(match &config.work_dir {
            Some(dir) => {
                let path = partial_path(dir, j);
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| Error::io(&path, e))?;
                Partial {
                    file: Some(file),
                    path: Some(path),
                }
            }
            None => Partial { file: None, path: None },
        });
    }

    let sizes = partition_sizes(unique.len(), config.n_workers);
    let mut chunks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        chunks.push(&unique[start..start + size]);
        start += size;
    }

    let results: Vec<Result<WorkerResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .into_iter()
            .zip(partials.iter_mut())
            .map(|(chunk, partial)| {
                let shared = &shared;
                s.spawn(move || run_worker(shared, chunk, partial))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Protocol("matching worker panicked".into()))))
            .collect()
    });

    // Merge: decisions from this run and from earlier partial files.
    let mut decided: BTreeMap<PairKey, Outcome> = BTreeMap::new();
    let mut failures = Vec::new();
    for r in results {
        let r = r?;
        decided.extend(r.decided);
        failures.extend(r.failures);
    }
    failures.sort_by(|a, b| (&a.job_id, a.skill_id).cmp(&(&b.job_id, b.skill_id)));

    let mut assignments = Vec::new();
    for r in &unique {
        let key = (r.job_id.clone(), r.skill_id.expect("checked"));
        let outcome = match (decided.get(&key), resumed.get(&key)) {
            (Some(o), _) => *o,
            (None, Some(o)) => {
                stats.resumed += 1;
                *o
            }
            (None, None) => {
                stats.errored += 1;
                continue;
            }
        };
        match outcome {
            Outcome::Accepted(entry_id) => {
                stats.accepted += 1;
                let label = taxonomy
                    .label(entry_id)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown taxonomy entry {entry_id}")))?
                    .to_string();
                assignments.push(GreenAssignment {
                    job_id: key.0,
                    skill_id: key.1,
                    entry_id,
                    label,
                    period: r.period,
                });
            }
            Outcome::Rejected => stats.rejected += 1,
        }
    }
    assignments.sort();
    Ok(MatchOutput {
        assignments,
        stats,
        failures,
    })
}

/// Writes assignments as `job_id,esco_green_skill,skill_id,month,year,entry_id`.
pub fn write_assignments(assignments: &[GreenAssignment], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["job_id", "esco_green_skill", "skill_id", "month", "year", "entry_id"])?;
    for a in assignments {
        w.write_record([
            a.job_id.as_str(),
            &a.label,
            &a.skill_id.to_string(),
            &a.period.month().to_string(),
            &a.period.year().to_string(),
            &a.entry_id.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<assignments output>", e))?;
    Ok(())
}

pub fn read_assignments(reader: impl Read) -> Result<Vec<GreenAssignment>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("assignments CSV lacks column {name}")))
    };
    let (job, label, skill, month, year, entry) = (
        col("job_id")?,
        col("esco_green_skill")?,
        col("skill_id")?,
        col("month")?,
        col("year")?,
        col("entry_id")?,
    );
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<i64> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("assignments line {line}: bad number in column {}", &headers[i])))
        };
        out.push(GreenAssignment {
            job_id: rec.get(job).unwrap_or("").to_string(),
            label: rec.get(label).unwrap_or("").to_string(),
            skill_id: num(skill)? as u32,
            period: PeriodId::new(num(year)? as i32, num(month)? as u32)?,
            entry_id: num(entry)? as u32,
        });
    }
    Ok(out)
}

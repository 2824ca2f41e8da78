use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use skillcast_core::classify::{
    classify, rank_skills, read_classification, write_classification, write_rankings, Classification,
    QuadrantThresholds, RankAxis,
};
use skillcast_core::embed::{
    CachedEmbedder, Embedder, EmbeddingVector, LocalEmbedder, RemoteEmbedder, RemoteEmbedderConfig, VectorIndex,
};
use skillcast_core::forecast::{
    forecast_matrix, holdout_eval, read_predictions, score_predictions, series_from_matrix, write_eval_json,
    write_eval_per_series, write_eval_summary, EvalReport, Forecaster, ModelKind, Standardized, TrainingSet,
    WindowConfig,
};
use skillcast_core::http::HttpConfig;
use skillcast_core::ingest::{
    bucket_month, normalize_variants, parse_postings, parse_records, write_records, write_rejects,
    write_variant_mapping, PeriodId, SkillRecord,
};
use skillcast_core::matching::{
    prompt, read_assignments, run_matching, write_assignments, ChatClient, ChatConfig, LlmValidator,
    LocalRuleValidator, MatchConfig, Validator,
};
use skillcast_core::report::{quadrant_svg, render_summary, ChartOptions, SummaryInputs};
use skillcast_core::series::{
    aggregate, green_by_period, monthly_shares, normalize, read_normalized_matrix, write_count_matrix,
    write_normalized_matrix, write_share_report, MonthlyTotals, ShareReport,
};
use skillcast_core::taxonomy::{load_taxonomy, DEFAULT_ALT_DELIMITER};

use crate::config::Config;
use crate::failure::{Failure, Outcome};
use crate::manifest::{hash_files, sha256_bytes, verify_chain, FileHash, Manifest};

pub const EXTRACTED: &str = "extracted_records.csv";
pub const EXTRACT_FAILURES: &str = "extract_failures.csv";
pub const RECORDS_CLEAN: &str = "records.clean.csv";
pub const REJECTS: &str = "rejects.csv";
pub const VARIANTS: &str = "variants.csv";
pub const ASSIGNMENTS: &str = "assignments.csv";
pub const MATCH_FAILURES: &str = "match_failures.csv";
pub const MATCH_STATS: &str = "match_stats.json";
pub const TOTALS: &str = "totals.csv";
pub const COUNTS: &str = "counts.csv";
pub const MATRIX: &str = "matrix.csv";
pub const SHARES: &str = "shares.csv";
pub const SHARES_JSON: &str = "shares.json";
pub const EVAL_SUMMARY: &str = "eval.csv";
pub const EVAL_SERIES: &str = "eval_series.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const FORECAST: &str = "forecast.csv";
pub const CLASSIFICATION: &str = "classification.csv";
pub const THRESHOLDS: &str = "thresholds.json";
pub const RANK_ABS: &str = "rankings_abs.csv";
pub const RANK_REL: &str = "rankings_rel.csv";
pub const CHART: &str = "quadrants.svg";
pub const SUMMARY: &str = "summary.md";

/// Stages chained by `run-all`, in order.
pub const PIPELINE: [&str; 6] = ["match", "build", "eval", "forecast", "classify", "report"];

pub struct Ctx {
    pub cfg: Config,
    pub out: PathBuf,
    pub force: bool,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// An artifact produced by an earlier stage.
    fn artifact(&self, name: &str, producer: &str) -> Outcome<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Failure::input(format!(
                "{} not found; run `skillcast {producer}` first",
                p.display()
            )))
        }
    }
}

/// A file named in the configuration.
fn external(path: &Option<PathBuf>, key: &str) -> Outcome<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| Failure::validation(vec![format!("inputs.{key} is required for this stage")]))?;
    if p.is_file() {
        Ok(p)
    } else {
        Err(Failure::input(format!("inputs.{key}: {} does not exist", p.display())))
    }
}

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::input(format!("cannot open {}: {e}", path.display())))
}

fn write_artifact(
    path: &Path,
    f: impl FnOnce(&mut Vec<u8>) -> skillcast_core::Result<()>,
) -> Outcome<PathBuf> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome<PathBuf> {
    write_artifact(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value)?;
        buf.push(b'\n');
        Ok(())
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Outcome<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Bookkeeping shared by every stage.
struct Stage<'a> {
    ctx: &'a Ctx,
    name: &'static str,
    inputs: Vec<FileHash>,
    config: serde_json::Value,
}

impl<'a> Stage<'a> {
    /// `None` when the previous manifest shows the stage is up to date.
    fn begin(ctx: &'a Ctx, name: &'static str, inputs: &[PathBuf], config: serde_json::Value) -> Outcome<Option<Self>> {
        fs::create_dir_all(&ctx.out)
            .map_err(|e| Failure::input(format!("cannot create {}: {e}", ctx.out.display())))?;
        let inputs = hash_files(&ctx.out, inputs)?;
        let manifest = crate::manifest::manifest_path(&ctx.out, name);
        if !ctx.force && manifest.exists() {
            if let Ok(m) = Manifest::read(&manifest) {
                if m.is_current(&ctx.out, &inputs, &config) {
                    println!("{name}: up to date");
                    return Ok(None);
                }
            }
        }
        log::info!("{name}: running");
        Ok(Some(Stage {
            ctx,
            name,
            inputs,
            config,
        }))
    }

    fn finish(self, outputs: &[PathBuf]) -> Outcome {
        Manifest {
            stage: self.name.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            inputs: self.inputs,
            outputs: hash_files(&self.ctx.out, outputs)?,
        }
        .write(&self.ctx.out)
    }
}

fn http_config(cfg: &Config, endpoint: &str, key_var: &str) -> HttpConfig {
    let mut http = HttpConfig::new(endpoint).with_api_key_from_env(key_var);
    http.max_in_flight = cfg.matching.max_in_flight;
    http.max_retries = cfg.matching.max_retries;
    http.timeout = Duration::from_secs(cfg.matching.timeout_secs);
    http
}

fn build_embedder(ctx: &Ctx) -> Outcome<Box<dyn Embedder>> {
    let e = &ctx.cfg.embed;
    if e.backend != "remote" {
        return Ok(Box::new(LocalEmbedder::new(e.resolved_dim())?));
    }
    let endpoint = e.endpoint.clone().unwrap_or_default();
    let remote = RemoteEmbedder::new(RemoteEmbedderConfig {
        http: http_config(&ctx.cfg, &endpoint, skillcast_core::embed::EMBED_API_KEY_VAR),
        model: e.model.clone(),
        dim: e.resolved_dim(),
        batch_size: e.batch_size,
    })?;
    if !e.cache {
        return Ok(Box::new(remote));
    }
    let dir = ctx.path("cache");
    fs::create_dir_all(&dir).map_err(|e| Failure::input(format!("cannot create {}: {e}", dir.display())))?;
    Ok(Box::new(CachedEmbedder::open(remote, dir.join("embeddings.tsv"))?))
}

fn chat_client(cfg: &Config) -> Outcome<ChatClient> {
    let endpoint = cfg.matching.chat_endpoint.clone().unwrap_or_default();
    if endpoint.is_empty() {
        return Err(Failure::validation(vec!["match.chat_endpoint is required for this stage".into()]));
    }
    Ok(ChatClient::new(ChatConfig {
        http: http_config(cfg, &endpoint, skillcast_core::matching::CHAT_API_KEY_VAR),
        model: cfg.matching.chat_model.clone(),
    })?)
}

fn embed_texts(embedder: &dyn Embedder, texts: &[&str]) -> Outcome<Vec<EmbeddingVector>> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(512) {
        out.extend(embedder.embed_batch(chunk)?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct ExtractFailure<'a> {
    id: &'a str,
    message: String,
}

/// Postings to skill records through the chat backend.
pub fn extract(ctx: &Ctx) -> Outcome {
    let postings_path = external(&ctx.cfg.inputs.postings, "postings")?;
    let config = json!({ "chat_endpoint": ctx.cfg.matching.chat_endpoint, "chat_model": ctx.cfg.matching.chat_model });
    let Some(stage) = Stage::begin(ctx, "extract", std::slice::from_ref(&postings_path), config)? else {
        return Ok(());
    };
    let client = chat_client(&ctx.cfg)?;
    let (postings, rejects) = parse_postings(open(&postings_path)?)?;
    let workers = ctx.cfg.matching.max_in_flight.min(postings.len()).max(1);
    let chunk = postings.len().div_ceil(workers).max(1);
    let replies: Vec<skillcast_core::Result<Vec<String>>> = std::thread::scope(|s| {
        let handles: Vec<_> = postings
            .chunks(chunk)
            .map(|part| {
                let client = &client;
                s.spawn(move || {
                    part.iter()
                        .map(|p| {
                            let reply = client.complete(&prompt::extraction_messages(&p.job_description))?;
                            prompt::parse_extraction_reply(&reply)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("extraction worker panicked"))
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (p, reply) in postings.iter().zip(replies) {
        match reply {
            Ok(skills) => records.extend(skills.into_iter().map(|skill| SkillRecord {
                job_id: p.id.clone(),
                title: p.job_name.clone(),
                skill_text: skill,
                skill_id: None,
                source: p.source,
                period: bucket_month(p.date),
            })),
            Err(e) => failures.push(ExtractFailure {
                id: &p.id,
                message: e.to_string(),
            }),
        }
    }
    let out = write_artifact(&ctx.path(EXTRACTED), |w| write_records(&records, w))?;
    println!(
        "extract: {} postings, {} rejected, {} skills, {} failed",
        postings.len(),
        rejects.len(),
        records.len(),
        failures.len()
    );
    if !failures.is_empty() {
        write_artifact(&ctx.path(EXTRACT_FAILURES), |w| {
            let mut c = csv::Writer::from_writer(w);
            for f in &failures {
                c.serialize(f)?;
            }
            c.flush().map_err(|e| skillcast_core::Error::io(EXTRACT_FAILURES, e))
        })?;
        return Err(Failure::Remote(format!(
            "{} posting(s) failed; see {EXTRACT_FAILURES} and re-run `skillcast extract`",
            failures.len()
        )));
    }
    let _ = fs::remove_file(ctx.path(EXTRACT_FAILURES));
    stage.finish(&[out])
}

#[derive(Debug, Serialize)]
struct MatchSummary {
    rows_in: usize,
    parse_rejects: usize,
    empty_skill: usize,
    parse_duplicates: usize,
    variant_duplicates: usize,
    records: usize,
    distinct_skills: usize,
    taxonomy_entries: usize,
    taxonomy_rejects: usize,
    accepted: usize,
    rejected: usize,
    errored: usize,
    pair_duplicates: usize,
}

pub fn match_stage(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let records_path = external(&cfg.inputs.records, "records")?;
    let taxonomy_path = external(&cfg.inputs.taxonomy, "taxonomy")?;
    let mut match_cfg = serde_json::to_value(&cfg.matching).expect("serializable");
    let config = json!({
        "records_format": format!("{:?}", cfg.records_format()),
        "alt_delimiter": cfg.inputs.alt_delimiter.unwrap_or(DEFAULT_ALT_DELIMITER).to_string(),
        "embed": cfg.embed,
        "match": match_cfg.clone(),
    });
    let Some(stage) = Stage::begin(ctx, "match", &[records_path.clone(), taxonomy_path.clone()], config)? else {
        return Ok(());
    };

    let parsed = parse_records(open(&records_path)?, cfg.records_format())?;
    let taxonomy = load_taxonomy(
        open(&taxonomy_path)?,
        cfg.inputs.alt_delimiter.unwrap_or(DEFAULT_ALT_DELIMITER),
    )?;
    if !taxonomy.rejects.is_empty() {
        log::warn!("{} taxonomy row(s) rejected", taxonomy.rejects.len());
    }
    let taxonomy_rejects = taxonomy.rejects.len();
    let taxonomy = taxonomy.taxonomy;
    if taxonomy.is_empty() {
        return Err(Failure::input(format!("{} has no usable entries", taxonomy_path.display())));
    }

    let embedder = build_embedder(ctx)?;
    let texts: Vec<&str> = parsed
        .records
        .iter()
        .map(|r| r.skill_text.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vectors: HashMap<String, EmbeddingVector> = texts
        .iter()
        .map(|t| t.to_string())
        .zip(embed_texts(embedder.as_ref(), &texts)?)
        .collect();
    let variants = normalize_variants(parsed.records.clone(), &vectors, cfg.matching.variant_threshold)?;

    let entry_texts: Vec<String> = taxonomy.entries.iter().map(|e| e.embedding_text()).collect();
    let entry_refs: Vec<&str> = entry_texts.iter().map(String::as_str).collect();
    let entry_vectors = embed_texts(embedder.as_ref(), &entry_refs)?;
    let index = VectorIndex::build(taxonomy.entries.iter().map(|e| e.entry_id).zip(entry_vectors).collect())?;

    let validator: Box<dyn Validator> = match cfg.matching.validator.as_str() {
        "llm" => Box::new(LlmValidator::new(chat_client(cfg)?)),
        _ => Box::new(LocalRuleValidator {
            threshold: cfg.matching.threshold,
        }),
    };

    // Work directory keyed on everything but the worker count.
    match_cfg["workers"] = json!(null);
    let work_key = sha256_bytes(
        format!(
            "{}{}{}{}",
            stage.inputs[0].sha256,
            stage.inputs[1].sha256,
            json!(cfg.embed),
            match_cfg
        )
        .as_bytes(),
    );
    let work_dir = ctx.path("match_work").join(&work_key[..16]);
    let result = run_matching(
        &variants.records,
        &taxonomy,
        &index,
        embedder.as_ref(),
        validator.as_ref(),
        &MatchConfig {
            n_workers: cfg.matching.workers,
            k: cfg.matching.candidates,
            work_dir: Some(work_dir),
        },
    )?;
    if result.stats.resumed > 0 {
        log::info!("match: resumed {} decision(s) from an earlier run", result.stats.resumed);
    }
    if !result.failures.is_empty() {
        write_artifact(&ctx.path(MATCH_FAILURES), |w| {
            let mut c = csv::Writer::from_writer(w);
            for f in &result.failures {
                c.serialize(f)?;
            }
            c.flush().map_err(|e| skillcast_core::Error::io(MATCH_FAILURES, e))
        })?;
        let msg = format!(
            "{} skill(s) could not be matched; see {MATCH_FAILURES}. Decisions made so far are kept; \
             re-run `skillcast match` to retry",
            result.failures.len()
        );
        let remote = cfg.embed.backend == "remote" || cfg.matching.validator == "llm";
        return Err(if remote { Failure::Remote(msg) } else { Failure::input(msg) });
    }
    let _ = fs::remove_file(ctx.path(MATCH_FAILURES));

    let totals = MonthlyTotals::from_records(&variants.records);
    let distinct_skills = variants.mapping.iter().map(|m| m.skill_id).collect::<BTreeSet<_>>().len();
    let summary = MatchSummary {
        rows_in: parsed.rows_in,
        parse_rejects: parsed.rejects.len(),
        empty_skill: parsed.empty_skill,
        parse_duplicates: parsed.duplicates,
        variant_duplicates: variants.merged_duplicates,
        records: variants.records.len(),
        distinct_skills,
        taxonomy_entries: taxonomy.len(),
        taxonomy_rejects,
        accepted: result.stats.accepted,
        rejected: result.stats.rejected,
        errored: result.stats.errored,
        pair_duplicates: result.stats.duplicates,
    };
    let outputs = vec![
        write_artifact(&ctx.path(RECORDS_CLEAN), |w| write_records(&variants.records, w))?,
        write_artifact(&ctx.path(REJECTS), |w| write_rejects(&parsed.rejects, w))?,
        write_artifact(&ctx.path(VARIANTS), |w| write_variant_mapping(&variants.mapping, w))?,
        write_artifact(&ctx.path(ASSIGNMENTS), |w| write_assignments(&result.assignments, w))?,
        write_artifact(&ctx.path(TOTALS), |w| totals.write_csv(w))?,
        write_json(&ctx.path(MATCH_STATS), &summary)?,
    ];
    println!(
        "match: {} records ({} rejected), {} distinct skills, {} accepted, {} rejected, {} duplicate pairs",
        summary.records,
        summary.parse_rejects,
        summary.distinct_skills,
        summary.accepted,
        summary.rejected,
        summary.pair_duplicates
    );
    stage.finish(&outputs)
}

#[derive(Debug, Serialize, Deserialize)]
struct ShareSummary {
    shares: ShareReport,
    gaps: Vec<PeriodId>,
}

pub fn build(ctx: &Ctx) -> Outcome {
    let assignments_path = ctx.artifact(ASSIGNMENTS, "match")?;
    let totals_path = match &ctx.cfg.inputs.totals {
        Some(_) => external(&ctx.cfg.inputs.totals, "totals")?,
        None => ctx.artifact(TOTALS, "match")?,
    };
    let config = json!({ "period_policy": ctx.cfg.period_policy() });
    let Some(stage) = Stage::begin(ctx, "build", &[assignments_path.clone(), totals_path.clone()], config)? else {
        return Ok(());
    };
    let assignments = read_assignments(open(&assignments_path)?)?;
    if assignments.is_empty() {
        return Err(Failure::input(format!("{} has no green assignments", assignments_path.display())));
    }
    let totals = MonthlyTotals::read_csv(open(&totals_path)?)?;
    let counts = aggregate(&assignments, ctx.cfg.period_policy())?;
    let matrix = normalize(&counts, &totals)?;
    let shares = monthly_shares(&green_by_period(&counts), &totals)?;
    let gaps = counts.axis.gap_periods();
    for g in &gaps {
        log::warn!("no observations for {g}; inserted as a zero column");
    }
    let outputs = vec![
        write_artifact(&ctx.path(COUNTS), |w| write_count_matrix(&counts, w))?,
        write_artifact(&ctx.path(MATRIX), |w| write_normalized_matrix(&matrix, w))?,
        write_artifact(&ctx.path(SHARES), |w| write_share_report(&shares, w))?,
        write_json(&ctx.path(SHARES_JSON), &ShareSummary { shares: shares.clone(), gaps })?,
    ];
    println!(
        "build: {} skills x {} months, green share {:.2}% overall",
        matrix.skills.len(),
        matrix.periods.len(),
        shares.weighted_share_pct
    );
    stage.finish(&outputs)
}

fn build_model(kind: ModelKind, window: WindowConfig, standardize: bool) -> Box<dyn Forecaster> {
    let model = kind.build(window);
    if standardize {
        Box::new(Standardized::new(model))
    } else {
        model
    }
}

pub fn eval(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let matrix_path = ctx.artifact(MATRIX, "build")?;
    let mut inputs = vec![matrix_path.clone()];
    for imp in &cfg.eval.imports {
        if !imp.path.is_file() {
            return Err(Failure::input(format!(
                "eval.imports {:?}: {} does not exist",
                imp.name,
                imp.path.display()
            )));
        }
        inputs.push(imp.path.clone());
    }
    let config = json!({ "seed": cfg.seed, "eval": cfg.eval, "train": cfg.train });
    let Some(stage) = Stage::begin(ctx, "eval", &inputs, config)? else {
        return Ok(());
    };
    let matrix = read_normalized_matrix(open(&matrix_path)?)?;
    let series = series_from_matrix(&matrix);
    let train = cfg.train_config();
    let mut reports: Vec<EvalReport> = Vec::new();
    for &k in &cfg.eval.seq_lens {
        let window = WindowConfig::new(k, cfg.eval.pred_len)?;
        for kind in cfg.eval_models() {
            let mut model = build_model(kind, window, cfg.eval.standardize);
            log::info!("eval: {} k={k}", model.name());
            reports.push(holdout_eval(&series, model.as_mut(), &train, cfg.eval.split())?);
        }
    }
    for imp in &cfg.eval.imports {
        let table = read_predictions(open(&imp.path)?)?;
        let window = WindowConfig::new(imp.seq_len, cfg.eval.pred_len)?;
        reports.push(score_predictions(&series, &table, window, &imp.name, &imp.family)?);
    }
    let outputs = vec![
        write_artifact(&ctx.path(EVAL_SUMMARY), |w| write_eval_summary(&reports, w))?,
        write_artifact(&ctx.path(EVAL_SERIES), |w| write_eval_per_series(&reports, w))?,
        write_artifact(&ctx.path(EVAL_JSON), |w| write_eval_json(&reports, w))?,
    ];
    for r in &reports {
        println!(
            "eval: {:<24} k={} h={} windows={} sMAPE={:.2} rRMSE={:.4}",
            r.model, r.seq_len, r.pred_len, r.windows, r.metrics.smape, r.metrics.rrmse
        );
    }
    stage.finish(&outputs)
}

/// The built-in model with the lowest sMAPE at `window`; ties go to the
/// smaller name.
fn best_model(reports: &[EvalReport], window: WindowConfig) -> Option<(ModelKind, bool)> {
    reports
        .iter()
        .filter(|r| r.seq_len == window.seq_len && r.pred_len == window.pred_len)
        .filter_map(|r| {
            let (name, standardized) = match r.model.strip_suffix("+zscore") {
                Some(n) => (n, true),
                None => (r.model.as_str(), false),
            };
            let kind = name.parse::<ModelKind>().ok()?;
            Some((r.metrics.smape, r.model.as_str(), kind, standardized))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, _, kind, standardized)| (kind, standardized))
}

pub fn forecast(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let matrix_path = ctx.artifact(MATRIX, "build")?;
    let mut inputs = vec![matrix_path.clone()];
    let choice = cfg.forecast_model();
    if choice.is_none() {
        inputs.push(ctx.artifact(EVAL_JSON, "eval")?);
    }
    let config = json!({ "seed": cfg.seed, "forecast": cfg.forecast, "train": cfg.train });
    let Some(stage) = Stage::begin(ctx, "forecast", &inputs, config)? else {
        return Ok(());
    };
    let window = cfg.forecast_window();
    let (kind, standardize) = match choice {
        Some(kind) => (kind, cfg.forecast.standardize),
        None => {
            let reports: Vec<EvalReport> = read_json(&inputs[1])?;
            best_model(&reports, window).ok_or_else(|| {
                Failure::input(format!(
                    "{EVAL_JSON} has no built-in model evaluated at k={} h={}; re-run `skillcast eval`",
                    window.seq_len, window.pred_len
                ))
            })?
        }
    };
    let history = read_normalized_matrix(open(&matrix_path)?)?;
    let mut model = build_model(kind, window, standardize);
    let data = TrainingSet::from_series(history.values.iter().map(Vec::as_slice), window);
    model.fit(&data, &cfg.train_config())?;
    let future = forecast_matrix(&history, model.as_ref(), cfg.forecast.horizon)?;
    let out = write_artifact(&ctx.path(FORECAST), |w| write_normalized_matrix(&future, w))?;
    println!(
        "forecast: {} skills extended by {} months with {}",
        future.skills.len(),
        cfg.forecast.horizon,
        model.name()
    );
    stage.finish(&[out])
}

pub fn classify_stage(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let matrix_path = ctx.artifact(MATRIX, "build")?;
    let forecast_path = ctx.artifact(FORECAST, "forecast")?;
    let assignments_path = ctx.artifact(ASSIGNMENTS, "match")?;
    let config = json!({ "classify": cfg.classify });
    let inputs = [matrix_path.clone(), forecast_path.clone(), assignments_path.clone()];
    let Some(stage) = Stage::begin(ctx, "classify", &inputs, config)? else {
        return Ok(());
    };
    let history = read_normalized_matrix(open(&matrix_path)?)?;
    let future = read_normalized_matrix(open(&forecast_path)?)?;
    let labels: HashMap<u32, String> = read_assignments(open(&assignments_path)?)?
        .into_iter()
        .map(|a| (a.entry_id, a.label))
        .collect();
    let c = classify(&history, &future, &labels, &cfg.classify_config())?;
    let top = cfg.classify.top_n;
    let outputs = vec![
        write_artifact(&ctx.path(CLASSIFICATION), |w| write_classification(&c, w))?,
        write_json(&ctx.path(THRESHOLDS), &c.thresholds)?,
        write_artifact(&ctx.path(RANK_ABS), |w| {
            write_rankings(&rank_skills(&c.records, RankAxis::Absolute, top), w)
        })?,
        write_artifact(&ctx.path(RANK_REL), |w| {
            write_rankings(&rank_skills(&c.records, RankAxis::Relative, top), w)
        })?,
    ];
    let counts: Vec<String> = c.counts().iter().map(|(q, n)| format!("{q} {n}")).collect();
    println!("classify: {} skills; {}", c.records.len(), counts.join(", "));
    stage.finish(&outputs)
}

pub fn report(ctx: &Ctx) -> Outcome {
    let cfg = &ctx.cfg;
    let class_path = ctx.artifact(CLASSIFICATION, "classify")?;
    let thresholds_path = ctx.artifact(THRESHOLDS, "classify")?;
    let mut inputs = vec![class_path.clone(), thresholds_path.clone()];
    let shares_path = ctx.path(SHARES_JSON);
    let eval_path = ctx.path(EVAL_JSON);
    for optional in [&shares_path, &eval_path] {
        if optional.is_file() {
            inputs.push(optional.clone());
        }
    }
    let config = json!({ "report": cfg.report });
    let Some(stage) = Stage::begin(ctx, "report", &inputs, config)? else {
        return Ok(());
    };
    let classification = Classification {
        records: read_classification(open(&class_path)?)?,
        thresholds: read_json::<QuadrantThresholds>(&thresholds_path)?,
    };
    let shares: Option<ShareSummary> = if shares_path.is_file() {
        Some(read_json(&shares_path)?)
    } else {
        None
    };
    let evaluations: Vec<EvalReport> = if eval_path.is_file() {
        read_json(&eval_path)?
    } else {
        Vec::new()
    };
    let chart = quadrant_svg(
        &classification,
        &ChartOptions {
            width: cfg.report.width,
            height: cfg.report.height,
            log_axes: cfg.report.log_axes,
            ..ChartOptions::default()
        },
    );
    let summary = render_summary(&SummaryInputs {
        shares: shares.as_ref().map(|s| &s.shares),
        gaps: shares.as_ref().map_or(&[][..], |s| &s.gaps),
        evaluations: &evaluations,
        classification: Some(&classification),
    });
    let outputs = vec![
        write_artifact(&ctx.path(CHART), |w| {
            w.extend_from_slice(chart.as_bytes());
            Ok(())
        })?,
        write_artifact(&ctx.path(SUMMARY), |w| {
            w.extend_from_slice(summary.as_bytes());
            Ok(())
        })?,
    ];
    println!("report: wrote {CHART} and {SUMMARY}");
    stage.finish(&outputs)
}

pub fn run_all(ctx: &Ctx) -> Outcome {
    match_stage(ctx)?;
    build(ctx)?;
    eval(ctx)?;
    forecast(ctx)?;
    classify_stage(ctx)?;
    report(ctx)?;
    let manifests = verify_chain(&ctx.out, &PIPELINE)?;
    println!("run-all: {} stage manifests verified", manifests.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use skillcast_core::forecast::Metrics;

    fn report(model: &str, k: usize, smape: f64) -> EvalReport {
        EvalReport {
            model: model.into(),
            family: "x".into(),
            seq_len: k,
            pred_len: 3,
            windows: 1,
            points: 3,
            metrics: Metrics {
                mae: 0.0,
                rmse: 0.0,
                smape,
                rrmse: 0.0,
            },
            per_series: Vec::new(),
            conventions: String::new(),
        }
    }

    #[test]
    fn best_model_filters_window_and_unknown_names() {
        let reports = vec![
            report("drift", 4, 12.0),
            report("naive", 6, 1.0),
            report("FEDformer", 4, 5.0),
            report("ridge_ar+zscore", 4, 9.0),
            report("ses", 4, 9.0),
        ];
        let w = WindowConfig { seq_len: 4, pred_len: 3 };
        assert_eq!(best_model(&reports, w), Some((ModelKind::RidgeAr { lambda: 0.0 }, true)));
        let w8 = WindowConfig { seq_len: 8, pred_len: 3 };
        assert_eq!(best_model(&reports, w8), None);
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skillcast_core::classify::ClassifyConfig;
use skillcast_core::forecast::{ModelKind, SplitConfig, TrainConfig, WindowConfig};
use skillcast_core::ingest::{RecordFormat, DEFAULT_VARIANT_THRESHOLD};
use skillcast_core::embed::{DEFAULT_LOCAL_DIM, DEFAULT_REMOTE_DIM, DEFAULT_REMOTE_MODEL};
use skillcast_core::matching::{DEFAULT_CANDIDATES, DEFAULT_CHAT_MODEL, DEFAULT_MATCH_THRESHOLD};
use skillcast_core::series::PeriodPolicy;

use crate::failure::Failure;

pub const BEST_MODEL: &str = "best";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub inputs: Inputs,
    pub embed: EmbedSection,
    #[serde(rename = "match")]
    pub matching: MatchSection,
    pub series: SeriesSection,
    pub eval: EvalSection,
    pub train: TrainSection,
    pub forecast: ForecastSection,
    pub classify: ClassifySection,
    pub report: ReportSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 42,
            output_dir: PathBuf::from("out"),
            inputs: Inputs::default(),
            embed: EmbedSection::default(),
            matching: MatchSection::default(),
            series: SeriesSection::default(),
            eval: EvalSection::default(),
            train: TrainSection::default(),
            forecast: ForecastSection::default(),
            classify: ClassifySection::default(),
            report: ReportSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub postings: Option<PathBuf>,
    pub records: Option<PathBuf>,
    /// `csv` or `jsonl`; inferred from the records extension when unset.
    pub records_format: Option<String>,
    pub taxonomy: Option<PathBuf>,
    /// Monthly totals of all detected skills; derived from the records when
    /// unset.
    pub totals: Option<PathBuf>,
    pub alt_delimiter: Option<char>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub backend: String,
    pub dim: Option<usize>,
    pub endpoint: Option<String>,
    pub model: String,
    pub batch_size: usize,
    pub cache: bool,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection {
            backend: "local".into(),
            dim: None,
            endpoint: None,
            model: DEFAULT_REMOTE_MODEL.into(),
            batch_size: 64,
            cache: true,
        }
    }
}

impl EmbedSection {
    pub fn resolved_dim(&self) -> usize {
        self.dim.unwrap_or(if self.backend == "remote" {
            DEFAULT_REMOTE_DIM
        } else {
            DEFAULT_LOCAL_DIM
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSection {
    /// `local` (score threshold) or `llm`.
    pub validator: String,
    pub threshold: f64,
    pub candidates: usize,
    pub workers: usize,
    pub variant_threshold: f64,
    pub chat_endpoint: Option<String>,
    pub chat_model: String,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl Default for MatchSection {
    fn default() -> Self {
        MatchSection {
            validator: "local".into(),
            threshold: DEFAULT_MATCH_THRESHOLD,
            candidates: DEFAULT_CANDIDATES,
            workers: 4,
            variant_threshold: DEFAULT_VARIANT_THRESHOLD,
            chat_endpoint: None,
            chat_model: DEFAULT_CHAT_MODEL.into(),
            max_in_flight: 8,
            max_retries: 3,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSection {
    pub period_policy: String,
}

impl Default for SeriesSection {
    fn default() -> Self {
        SeriesSection {
            period_policy: "observed_only".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportSpec {
    pub name: String,
    #[serde(default = "default_import_family")]
    pub family: String,
    pub path: PathBuf,
    pub seq_len: usize,
}

fn default_import_family() -> String {
    "external".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub models: Vec<String>,
    pub seq_lens: Vec<usize>,
    pub pred_len: usize,
    pub train_fraction: f64,
    pub purge_overlap: bool,
    pub standardize: bool,
    pub imports: Vec<ImportSpec>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            models: ["naive", "drift", "ses", "ridge_ar", "dlinear_like"].map(String::from).to_vec(),
            seq_lens: vec![4, 6],
            pred_len: 3,
            train_fraction: SplitConfig::default().train_fraction,
            purge_overlap: false,
            standardize: false,
            imports: Vec::new(),
        }
    }
}

impl EvalSection {
    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            train_fraction: self.train_fraction,
            purge_overlap: self.purge_overlap,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub moving_avg: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            patience: t.patience,
            learning_rate: t.learning_rate,
            moving_avg: t.moving_avg,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    /// A model name, or `best` for the built-in model with the lowest
    /// evaluated sMAPE at this window.
    pub model: String,
    pub seq_len: usize,
    pub pred_len: usize,
    pub horizon: usize,
    pub standardize: bool,
}

impl Default for ForecastSection {
    fn default() -> Self {
        ForecastSection {
            model: BEST_MODEL.into(),
            seq_len: 4,
            pred_len: 3,
            horizon: skillcast_core::forecast::DEFAULT_HORIZON,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub history_window: usize,
    pub forecast_window: usize,
    pub quantile: f64,
    pub top_n: usize,
}

impl Default for ClassifySection {
    fn default() -> Self {
        let c = ClassifyConfig::default();
        ClassifySection {
            history_window: c.history_window,
            forecast_window: c.forecast_window,
            quantile: c.quantile,
            top_n: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub log_axes: bool,
    pub width: u32,
    pub height: u32,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            log_axes: false,
            width: 900,
            height: 640,
        }
    }
}

fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value), String> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| format!("--set {raw:?}: expected KEY=VALUE"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(format!("--set {raw:?}: empty key segment"));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), String> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for seg in parents {
        let entry = cur
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("--set {}: {seg} is not a table", path.join(".")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl Config {
    /// Reads `path` (if any), applies `--set` overrides and resolves relative
    /// paths against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config, Failure> {
        let (mut table, base) = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| Failure::input(format!("cannot read config {}: {e}", p.display())))?;
                let t: toml::Table = toml::from_str(&text)
                    .map_err(|e| Failure::validation(vec![format!("{}: {e}", p.display())]))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (t, base)
            }
            None => (toml::Table::new(), PathBuf::new()),
        };
        let mut cfg_paths_base = base.clone();
        let mut problems = Vec::new();
        for raw in overrides {
            match parse_override(raw).and_then(|(p, v)| apply_override(&mut table, &p, v)) {
                Ok(()) => {}
                Err(e) => problems.push(e),
            }
        }
        if !problems.is_empty() {
            return Err(Failure::validation(problems));
        }
        let mut cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Failure::validation(vec![e.message().to_string()]))?;
        if cfg_paths_base.as_os_str().is_empty() {
            cfg_paths_base = PathBuf::from(".");
        }
        let b = &cfg_paths_base;
        for p in [
            &mut cfg.inputs.postings,
            &mut cfg.inputs.records,
            &mut cfg.inputs.taxonomy,
            &mut cfg.inputs.totals,
        ]
        .into_iter()
        .flatten()
        {
            resolve(b, p);
        }
        resolve(b, &mut cfg.output_dir);
        for imp in &mut cfg.eval.imports {
            resolve(b, &mut imp.path);
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            patience: self.train.patience,
            learning_rate: self.train.learning_rate,
            moving_avg: self.train.moving_avg,
            seed: self.seed,
        }
    }

    pub fn classify_config(&self) -> ClassifyConfig {
        ClassifyConfig {
            history_window: self.classify.history_window,
            forecast_window: self.classify.forecast_window,
            quantile: self.classify.quantile,
        }
    }

    pub fn period_policy(&self) -> PeriodPolicy {
        self.series.period_policy.parse().unwrap_or_default()
    }

    pub fn records_format(&self) -> RecordFormat {
        if let Some(f) = &self.inputs.records_format {
            return f.parse().unwrap_or(RecordFormat::Csv);
        }
        match self.inputs.records.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson") => RecordFormat::Jsonl,
            _ => RecordFormat::Csv,
        }
    }

    pub fn eval_models(&self) -> Vec<ModelKind> {
        self.eval.models.iter().filter_map(|m| m.parse().ok()).collect()
    }

    /// `None` selects the best evaluated model.
    pub fn forecast_model(&self) -> Option<ModelKind> {
        match self.forecast.model.as_str() {
            BEST_MODEL => None,
            m => m.parse().ok(),
        }
    }

    pub fn forecast_window(&self) -> WindowConfig {
        WindowConfig {
            seq_len: self.forecast.seq_len,
            pred_len: self.forecast.pred_len,
        }
    }

    /// Every semantic problem with the configuration.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if let Some(f) = &self.inputs.records_format {
            if f.parse::<RecordFormat>().is_err() {
                p.push(format!("inputs.records_format must be csv or jsonl, got {f:?}"));
            }
        }
        match self.embed.backend.as_str() {
            "local" => {}
            "remote" => {
                if self.embed.endpoint.as_deref().unwrap_or("").is_empty() {
                    p.push("embed.endpoint is required for the remote embedding backend".into());
                }
            }
            other => p.push(format!("embed.backend must be local or remote, got {other:?}")),
        }
        if self.embed.resolved_dim() == 0 {
            p.push("embed.dim must be at least 1".into());
        }
        if self.embed.batch_size == 0 {
            p.push("embed.batch_size must be at least 1".into());
        }
        let m = &self.matching;
        match m.validator.as_str() {
            "local" => {}
            "llm" => {
                if m.chat_endpoint.as_deref().unwrap_or("").is_empty() {
                    p.push("match.chat_endpoint is required for the llm validator".into());
                }
            }
            other => p.push(format!("match.validator must be local or llm, got {other:?}")),
        }
        if !(-1.0..=1.0).contains(&m.threshold) {
            p.push(format!("match.threshold must be in [-1, 1], got {}", m.threshold));
        }
        if !(0.0..=1.0).contains(&m.variant_threshold) {
            p.push(format!("match.variant_threshold must be in [0, 1], got {}", m.variant_threshold));
        }
        if m.candidates == 0 {
            p.push("match.candidates must be at least 1".into());
        }
        if m.workers == 0 {
            p.push("match.workers must be at least 1".into());
        }
        if m.max_in_flight == 0 {
            p.push("match.max_in_flight must be at least 1".into());
        }
        if self.series.period_policy.parse::<PeriodPolicy>().is_err() {
            p.push(format!(
                "series.period_policy must be observed_only or zero_fill_gaps, got {:?}",
                self.series.period_policy
            ));
        }
        for model in &self.eval.models {
            if let Err(e) = model.parse::<ModelKind>() {
                p.push(format!("eval.models: {}", e.to_string().trim_start_matches("invalid configuration: ")));
            }
        }
        if self.eval.models.is_empty() && self.eval.imports.is_empty() {
            p.push("eval.models must name at least one model".into());
        }
        if self.eval.seq_lens.is_empty() || self.eval.seq_lens.contains(&0) {
            p.push("eval.seq_lens must be non-empty and positive".into());
        }
        if self.eval.pred_len == 0 {
            p.push("eval.pred_len must be at least 1".into());
        }
        if self.eval.split().validate().is_err() {
            p.push(format!("eval.train_fraction must be in [0, 1), got {}", self.eval.train_fraction));
        }
        for imp in &self.eval.imports {
            if imp.seq_len == 0 {
                p.push(format!("eval.imports {:?}: seq_len must be at least 1", imp.name));
            }
        }
        p.extend(self.train_config().problems());
        if self.forecast.model != BEST_MODEL {
            if let Err(e) = self.forecast.model.parse::<ModelKind>() {
                p.push(format!("forecast.model: {}", e.to_string().trim_start_matches("invalid configuration: ")));
            }
        } else if !self.eval.seq_lens.contains(&self.forecast.seq_len) || self.eval.pred_len != self.forecast.pred_len {
            p.push(format!(
                "forecast.model = \"best\" needs forecast.seq_len ({}) in eval.seq_lens and forecast.pred_len equal to eval.pred_len",
                self.forecast.seq_len
            ));
        }
        if self.forecast.seq_len == 0 || self.forecast.pred_len == 0 {
            p.push("forecast.seq_len and forecast.pred_len must be at least 1".into());
        }
        if self.forecast.horizon == 0 {
            p.push("forecast.horizon must be at least 1".into());
        }
        if self.forecast.horizon < self.classify.forecast_window {
            p.push(format!(
                "forecast.horizon ({}) is shorter than classify.forecast_window ({})",
                self.forecast.horizon, self.classify.forecast_window
            ));
        }
        p.extend(self.classify_config().problems());
        if self.report.width < 200 || self.report.height < 200 {
            p.push("report.width and report.height must be at least 200".into());
        }
        p
    }

    pub fn validate(&self) -> Result<(), Failure> {
        match self.problems() {
            p if p.is_empty() => Ok(()),
            p => Err(Failure::validation(p)),
        }
    }
}

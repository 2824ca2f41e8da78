//! Forecaster contract, builtin models, rolling-origin evaluation and
//! iterative long-horizon extension.
//!
//! Origins follow the 1-based convention: origin `t` predicts
//! `y[t+1..=t+h]` from `y[t-k+1..=t]`, for `t` in `k..=T-h`. In 0-based slice
//! terms the context is `values[t-k..t]` and the target `values[t..t+h]`.

mod dlinear;
mod eval;
pub mod metrics;
mod models;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::series::NormalizedMatrix;
use crate::{Error, Result};

pub use dlinear::{effective_kernel, moving_average, DLinearLike};
pub use eval::{
    evaluate_origins, holdout_eval, read_predictions, rolling_origin_eval, score_predictions,
    split_origins, write_eval_json, write_eval_per_series, write_eval_summary, write_predictions,
    EvalReport, Metrics, OriginSplit, PredictionTable, SeriesMetrics, SplitConfig,
    METRIC_CONVENTIONS,
};
pub use models::{Drift, Naive, RidgeAr, Ses, Standardized, SES_ALPHA_GRID};

pub const DEFAULT_HORIZON: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub seq_len: usize,
    pub pred_len: usize,
}

impl WindowConfig {
    pub fn new(seq_len: usize, pred_len: usize) -> Result<Self> {
        if seq_len == 0 || pred_len == 0 {
            return Err(Error::Config(format!(
                "seq_len and pred_len must be at least 1 (got {seq_len}, {pred_len})"
            )));
        }
        Ok(WindowConfig { seq_len, pred_len })
    }

    /// Number of rolling origins for a series of length `len`.
    pub fn origin_count(&self, len: usize) -> usize {
        (len + 1).saturating_sub(self.seq_len + self.pred_len)
    }

    pub(crate) fn check_context(&self, context: &[f64]) -> Result<()> {
        if context.len() != self.seq_len {
            return Err(Error::InvalidInput(format!(
                "context has {} values, model expects seq_len {}",
                context.len(),
                self.seq_len
            )));
        }
        if context.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("context contains a non-finite value".into()));
        }
        Ok(())
    }
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig { seq_len: 4, pred_len: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub moving_avg: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 1,
            patience: 3,
            learning_rate: 1e-4,
            moving_avg: 25,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// Lists every violated constraint.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.epochs == 0 {
            out.push("train.epochs must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            out.push("train.batch_size must be at least 1".to_string());
        }
        if self.patience > self.epochs {
            out.push(format!(
                "train.patience ({}) must not exceed train.epochs ({})",
                self.patience, self.epochs
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            out.push(format!("train.learning_rate must be positive (got {})", self.learning_rate));
        }
        if self.moving_avg == 0 {
            out.push("train.moving_avg must be at least 1".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().as_slice() {
            [] => Ok(()),
            p => Err(Error::Config(p.join("; "))),
        }
    }
}

/// One supervised example: `seq_len` inputs, `pred_len` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub context: Vec<f64>,
    pub target: Vec<f64>,
}

/// Windows for fitting, with the last origin of each series held out for
/// early stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub window: WindowConfig,
    pub train: Vec<Window>,
    pub validation: Vec<Window>,
}

impl TrainingSet {
    /// Every origin of every slice becomes a window. Slices with at least two
    /// origins contribute their last one to `validation`.
    pub fn from_series<'a>(series: impl IntoIterator<Item = &'a [f64]>, window: WindowConfig) -> Self {
        let (k, h) = (window.seq_len, window.pred_len);
        let mut set = TrainingSet {
            window,
            train: Vec::new(),
            validation: Vec::new(),
        };
        for values in series {
            let n = window.origin_count(values.len());
            for (i, t) in (k..k + n).enumerate() {
                let w = Window {
                    context: values[t - k..t].to_vec(),
                    target: values[t..t + h].to_vec(),
                };
                if n >= 2 && i == n - 1 {
                    set.validation.push(w);
                } else {
                    set.train.push(w);
                }
            }
        }
        set
    }

    pub fn empty(window: WindowConfig) -> Self {
        TrainingSet {
            window,
            train: Vec::new(),
            validation: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }
}

/// A model mapping the last `seq_len` observations to `pred_len` forecasts.
pub trait Forecaster: Send + Sync {
    fn name(&self) -> String;
    fn family(&self) -> &'static str;
    fn window(&self) -> WindowConfig;
    /// Models without parameters ignore the data.
    fn fit(&mut self, data: &TrainingSet, cfg: &TrainConfig) -> Result<()>;
    /// Returns exactly `pred_len` values.
    fn predict(&self, context: &[f64]) -> Result<Vec<f64>>;
}

impl<F: Forecaster + ?Sized> Forecaster for Box<F> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn family(&self) -> &'static str {
        (**self).family()
    }
    fn window(&self) -> WindowConfig {
        (**self).window()
    }
    fn fit(&mut self, data: &TrainingSet, cfg: &TrainConfig) -> Result<()> {
        (**self).fit(data, cfg)
    }
    fn predict(&self, context: &[f64]) -> Result<Vec<f64>> {
        (**self).predict(context)
    }
}

pub(crate) fn check_training_window(model: WindowConfig, data: &TrainingSet) -> Result<()> {
    if model != data.window {
        return Err(Error::Config(format!(
            "training windows are k={}, h={} but the model is k={}, h={}",
            data.window.seq_len, data.window.pred_len, model.seq_len, model.pred_len
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Naive,
    Drift,
    Ses,
    RidgeAr { lambda: f64 },
    DlinearLike,
}

impl ModelKind {
    pub fn build(self, window: WindowConfig) -> Box<dyn Forecaster> {
        match self {
            ModelKind::Naive => Box::new(Naive::new(window)),
            ModelKind::Drift => Box::new(Drift::new(window)),
            ModelKind::Ses => Box::new(Ses::new(window)),
            ModelKind::RidgeAr { lambda } => Box::new(RidgeAr::new(window, lambda)),
            ModelKind::DlinearLike => Box::new(DLinearLike::new(window)),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Naive => f.write_str("naive"),
            ModelKind::Drift => f.write_str("drift"),
            ModelKind::Ses => f.write_str("ses"),
            ModelKind::RidgeAr { lambda } if *lambda == 0.0 => f.write_str("ridge_ar"),
            ModelKind::RidgeAr { lambda } => write!(f, "ridge_ar:{lambda}"),
            ModelKind::DlinearLike => f.write_str("dlinear_like"),
        }
    }
}

/// Accepts `naive`, `drift`, `ses`, `ridge_ar`, `ridge_ar:<lambda>` and
/// `dlinear_like`.
impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let kind = match (head, arg) {
            ("naive", None) => ModelKind::Naive,
            ("drift", None) => ModelKind::Drift,
            ("ses", None) => ModelKind::Ses,
            ("ridge_ar", None) => ModelKind::RidgeAr { lambda: 0.0 },
            ("ridge_ar", Some(a)) => {
                let lambda: f64 = a
                    .parse()
                    .map_err(|_| Error::Config(format!("bad ridge_ar lambda {a:?}")))?;
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::Config(format!("ridge_ar lambda must be >= 0, got {a}")));
                }
                ModelKind::RidgeAr { lambda }
            }
            ("dlinear_like" | "dlinear", None) => ModelKind::DlinearLike,
            _ => return Err(Error::Config(format!("unknown model {s:?}"))),
        };
        Ok(kind)
    }
}

/// A single univariate series keyed by skill id.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub id: u32,
    pub values: Vec<f64>,
}

pub fn series_from_matrix(m: &NormalizedMatrix) -> Vec<Series> {
    m.skills
        .iter()
        .zip(&m.values)
        .map(|(id, v)| Series { id: *id, values: v.clone() })
        .collect()
}

/// Predicts `pred_len` steps at a time from the last `seq_len` values,
/// appending each block to the context until `horizon` values exist.
pub fn extend_forecast(series: &[f64], model: &dyn Forecaster, horizon: usize) -> Result<Vec<f64>> {
    let k = model.window().seq_len;
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    if series.len() < k {
        return Err(Error::SeriesTooShort {
            series: "<extend>".into(),
            len: series.len(),
            needed: k,
        });
    }
    let mut context = series[series.len() - k..].to_vec();
    let mut out = Vec::with_capacity(horizon);
    while out.len() < horizon {
        let block = model.predict(&context[context.len() - k..])?;
        context.extend_from_slice(&block);
        out.extend(block);
    }
    out.truncate(horizon);
    Ok(out)
}

/// Extends every row of `history` by `horizon` months.
pub fn forecast_matrix(history: &NormalizedMatrix, model: &dyn Forecaster, horizon: usize) -> Result<NormalizedMatrix> {
    let last = *history
        .periods
        .last()
        .ok_or_else(|| Error::InvalidInput("history matrix has no periods".into()))?;
    let mut periods = Vec::with_capacity(horizon);
    let mut p = last;
    for _ in 0..horizon {
        p = p.succ();
        periods.push(p);
    }
    let values = history
        .skills
        .iter()
        .zip(&history.values)
        .map(|(id, row)| {
            extend_forecast(row, model, horizon).map_err(|e| match e {
                Error::SeriesTooShort { len, needed, .. } => Error::SeriesTooShort {
                    series: id.to_string(),
                    len,
                    needed,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormalizedMatrix {
        skills: history.skills.clone(),
        periods,
        values,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    struct Counting {
        inner: Naive,
        calls: AtomicUsize,
    }

    impl Forecaster for Counting {
        fn name(&self) -> String {
            "counting".into()
        }
        fn family(&self) -> &'static str {
            "test"
        }
        fn window(&self) -> WindowConfig {
            self.inner.window()
        }
        fn fit(&mut self, _: &TrainingSet, _: &TrainConfig) -> Result<()> {
            Ok(())
        }
        fn predict(&self, context: &[f64]) -> Result<Vec<f64>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.predict(context)
        }
    }

    #[test]
    fn extension_iterations_and_naive_constant() {
        let w = WindowConfig::new(4, 3).unwrap();
        let m = Counting {
            inner: Naive::new(w),
            calls: AtomicUsize::new(0),
        };
        let s = [0.001, 0.002, 0.003, 0.004];
        assert_eq!(extend_forecast(&s, &m, 6).unwrap(), vec![0.004; 6]);
        assert_eq!(m.calls.load(Ordering::SeqCst), 2);
        assert_eq!(extend_forecast(&s, &m, 4).unwrap().len(), 4);
    }

    #[test]
    fn drift_extension_continues_the_line() {
        let s: Vec<f64> = (1..=12).map(f64::from).collect();
        let m = Drift::new(WindowConfig::new(4, 3).unwrap());
        let out = extend_forecast(&s, &m, 6).unwrap();
        for (o, e) in out.iter().zip(13..=18) {
            assert!((o - f64::from(e)).abs() < 1e-9);
        }
    }

    #[test]
    fn extension_requires_context() {
        let m = Naive::new(WindowConfig::new(4, 3).unwrap());
        assert!(extend_forecast(&[1.0, 2.0], &m, 6).is_err());
        assert!(extend_forecast(&[1.0; 4], &m, 0).is_err());
    }

    #[test]
    fn training_set_holds_out_last_origin() {
        let w = WindowConfig::new(2, 1).unwrap();
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0];
        let set = TrainingSet::from_series([&a[..], &b[..]], w);
        assert_eq!(set.train.len(), 1 + 1);
        assert_eq!(set.validation.len(), 1);
        assert_eq!(set.validation[0].context, vec![2.0, 3.0]);
        assert_eq!(set.validation[0].target, vec![4.0]);
    }

    #[test]
    fn model_kind_parsing() {
        assert_eq!("ridge_ar".parse::<ModelKind>().unwrap(), ModelKind::RidgeAr { lambda: 0.0 });
        assert_eq!("ridge_ar:0.5".parse::<ModelKind>().unwrap(), ModelKind::RidgeAr { lambda: 0.5 });
        assert!("ridge_ar:-1".parse::<ModelKind>().is_err());
        assert!("lstm".parse::<ModelKind>().is_err());
        for k in ["naive", "drift", "ses", "ridge_ar", "ridge_ar:0.5", "dlinear_like"] {
            assert_eq!(k.parse::<ModelKind>().unwrap().to_string(), k);
        }
    }

    #[test]
    fn train_config_problems_listed_together() {
        let cfg = TrainConfig {
            epochs: 0,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let p = cfg.problems();
        assert_eq!(p.len(), 3);
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn origin_counts() {
        let w = WindowConfig::new(4, 3).unwrap();
        assert_eq!(w.origin_count(12), 6);
        assert_eq!(w.origin_count(7), 1);
        assert_eq!(w.origin_count(6), 0);
        assert!(WindowConfig::new(0, 3).is_err());
    }
}

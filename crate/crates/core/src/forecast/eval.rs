use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::metrics::{mae, rmse, rrmse, smape};
use super::{Forecaster, Series, TrainConfig, TrainingSet, WindowConfig};
use crate::{Error, Result};

pub const METRIC_CONVENTIONS: &str = "sMAPE = mean(200*|y-yhat|/(|y|+|yhat|)), 0 where both are 0; \
rRMSE = RMSE/mean(y) as a ratio; overall metrics pooled over all (series, origin, step) points";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub rrmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMetrics {
    pub skill_id: u32,
    pub windows: usize,
    pub points: usize,
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    /// `None` when the evaluated truth is all zero.
    pub rrmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub family: String,
    pub seq_len: usize,
    pub pred_len: usize,
    pub windows: usize,
    pub points: usize,
    pub metrics: Metrics,
    pub per_series: Vec<SeriesMetrics>,
    pub conventions: String,
}

/// Forecasts keyed by `(skill_id, origin_t, step)`, `step` in `1..=h`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionTable(pub BTreeMap<(u32, usize, usize), f64>);

impl PredictionTable {
    pub fn insert(&mut self, skill: u32, origin: usize, step: usize, value: f64) -> Result<()> {
        if self.0.insert((skill, origin, step), value).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate prediction for skill {skill}, origin {origin}, step {step}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_length(s: &Series, window: WindowConfig) -> Result<()> {
    let needed = window.seq_len + window.pred_len;
    if s.values.len() < needed {
        return Err(Error::SeriesTooShort {
            series: s.id.to_string(),
            len: s.values.len(),
            needed,
        });
    }
    Ok(())
}

fn predict_from(series: &[Series], model: &dyn Forecaster, first_origins: &[usize]) -> Result<PredictionTable> {
    let WindowConfig { seq_len: k, pred_len: h } = model.window();
    let mut table = PredictionTable::default();
    for (s, &first) in series.iter().zip(first_origins) {
        for t in first.max(k)..=s.values.len() - h {
            let pred = model.predict(&s.values[t - k..t])?;
            if pred.len() != h {
                return Err(Error::InvalidInput(format!(
                    "{} returned {} values, expected {h}",
                    model.name(),
                    pred.len()
                )));
            }
            for (j, v) in pred.into_iter().enumerate() {
                table.insert(s.id, t, j + 1, v)?;
            }
        }
    }
    Ok(table)
}

/// Scores origins `first_origin..=T-h` (clamped below at `k`) of every
/// series.
pub fn evaluate_origins(series: &[Series], model: &dyn Forecaster, first_origin: usize) -> Result<EvalReport> {
    let window = model.window();
    for s in series {
        check_length(s, window)?;
    }
    let firsts = vec![first_origin; series.len()];
    let table = predict_from(series, model, &firsts)?;
    score_predictions(series, &table, window, &model.name(), model.family())
}

/// Evaluates every origin `k..=T-h` of every series with an already fitted
/// model.
pub fn rolling_origin_eval(series: &[Series], model: &dyn Forecaster) -> Result<EvalReport> {
    evaluate_origins(series, model, model.window().seq_len)
}

/// Scores a prediction table against the series. Every predicted origin
/// must be a valid rolling origin and carry all `h` steps; series without
/// predictions are left out.
pub fn score_predictions(
    series: &[Series],
    table: &PredictionTable,
    window: WindowConfig,
    model: &str,
    family: &str,
) -> Result<EvalReport> {
    let WindowConfig { seq_len: k, pred_len: h } = window;
    let by_id: BTreeMap<u32, &Series> = series.iter().map(|s| (s.id, s)).collect();
    let mut origins: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
    for &(skill, t, step) in table.0.keys() {
        let s = by_id
            .get(&skill)
            .ok_or_else(|| Error::InvalidInput(format!("prediction for unknown skill {skill}")))?;
        if t < k || t + h > s.values.len() {
            return Err(Error::InvalidInput(format!(
                "skill {skill}: origin {t} outside {k}..={}",
                s.values.len() as isize - h as isize
            )));
        }
        if step == 0 || step > h {
            return Err(Error::InvalidInput(format!("skill {skill}: step {step} outside 1..={h}")));
        }
        origins.entry(skill).or_default().insert(t);
    }

    let (mut all_y, mut all_p) = (Vec::new(), Vec::new());
    let mut per_series = Vec::new();
    let mut windows = 0;
    for (skill, ts) in &origins {
        let s = by_id[skill];
        let (mut y, mut p) = (Vec::new(), Vec::new());
        for &t in ts {
            for step in 1..=h {
                let v = table.0.get(&(*skill, t, step)).ok_or_else(|| {
                    Error::InvalidInput(format!("skill {skill}: origin {t} lacks step {step}"))
                })?;
                y.push(s.values[t + step - 1]);
                p.push(*v);
            }
        }
        windows += ts.len();
        per_series.push(SeriesMetrics {
            skill_id: *skill,
            windows: ts.len(),
            points: y.len(),
            mae: mae(&y, &p)?,
            rmse: rmse(&y, &p)?,
            smape: smape(&y, &p)?,
            rrmse: match rrmse(&y, &p) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            },
        });
        all_y.extend(y);
        all_p.extend(p);
    }
    if all_y.is_empty() {
        return Err(Error::InvalidInput(format!("no predictions to score for {model}")));
    }
    Ok(EvalReport {
        model: model.to_string(),
        family: family.to_string(),
        seq_len: k,
        pred_len: h,
        windows,
        points: all_y.len(),
        metrics: Metrics {
            mae: mae(&all_y, &all_p)?,
            rmse: rmse(&all_y, &all_p)?,
            smape: smape(&all_y, &all_p)?,
            rrmse: rrmse(&all_y, &all_p)?,
        },
        per_series,
        conventions: METRIC_CONVENTIONS.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// Leading share of origins used for fitting.
    pub train_fraction: f64,
    /// Drop training origins whose targets reach into the first evaluation
    /// target.
    pub purge_overlap: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.7,
            purge_overlap: false,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.train_fraction) {
            return Err(Error::Config(format!(
                "split.train_fraction must be in [0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OriginSplit {
    /// Last training origin, if any.
    pub last_train: Option<usize>,
    pub first_eval: usize,
    pub last_eval: usize,
}

/// Splits the origins of a length-`len` series into a training prefix and
/// the evaluation remainder (always at least one origin).
pub fn split_origins(len: usize, window: WindowConfig, cfg: SplitConfig) -> Result<OriginSplit> {
    cfg.validate()?;
    let k = window.seq_len;
    let n = window.origin_count(len);
    if n == 0 {
        return Err(Error::SeriesTooShort {
            series: "<split>".into(),
            len,
            needed: window.seq_len + window.pred_len,
        });
    }
    let n_train = ((cfg.train_fraction * n as f64).floor() as usize).min(n - 1);
    let first_eval = k + n_train;
    let mut last_train = (n_train > 0).then(|| first_eval - 1);
    if cfg.purge_overlap {
        last_train = last_train.and_then(|t| {
            let cap = first_eval.checked_sub(window.pred_len)?;
            (cap >= k).then(|| t.min(cap))
        });
    }
    Ok(OriginSplit {
        last_train,
        first_eval,
        last_eval: len - window.pred_len,
    })
}

/// Fits `model` on the training origins of every series and scores it on
/// the remaining origins.
pub fn holdout_eval(
    series: &[Series],
    model: &mut dyn Forecaster,
    train: &TrainConfig,
    split: SplitConfig,
) -> Result<EvalReport> {
    let window = model.window();
    let mut prefixes = Vec::with_capacity(series.len());
    let mut firsts = Vec::with_capacity(series.len());
    for s in series {
        check_length(s, window)?;
        let sp = split_origins(s.values.len(), window, split)?;
        if let Some(t) = sp.last_train {
            prefixes.push(&s.values[..t + window.pred_len]);
        }
        firsts.push(sp.first_eval);
    }
    let data = if prefixes.is_empty() {
        TrainingSet::empty(window)
    } else {
        TrainingSet::from_series(prefixes, window)
    };
    model.fit(&data, train)?;
    let table = predict_from(series, model, &firsts)?;
    score_predictions(series, &table, window, &model.name(), model.family())
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// One row per report, preceded by a `#` line stating the metric
/// conventions.
pub fn write_eval_summary(reports: &[EvalReport], mut writer: impl Write) -> Result<()> {
    writeln!(writer, "# {METRIC_CONVENTIONS}").map_err(|e| Error::io("<eval summary>", e))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "family", "model", "seq_len", "pred_len", "windows", "points", "MAE", "RMSE", "sMAPE", "rRMSE",
    ])?;
    for r in reports {
        w.write_record([
            r.family.clone(),
            r.model.clone(),
            r.seq_len.to_string(),
            r.pred_len.to_string(),
            r.windows.to_string(),
            r.points.to_string(),
            fmt_f64(r.metrics.mae),
            fmt_f64(r.metrics.rmse),
            fmt_f64(r.metrics.smape),
            fmt_f64(r.metrics.rrmse),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<eval summary>", e))?;
    Ok(())
}

pub fn write_eval_per_series(reports: &[EvalReport], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "model", "seq_len", "pred_len", "skill_id", "windows", "points", "MAE", "RMSE", "sMAPE", "rRMSE",
    ])?;
    for r in reports {
        for s in &r.per_series {
            w.write_record([
                r.model.clone(),
                r.seq_len.to_string(),
                r.pred_len.to_string(),
                s.skill_id.to_string(),
                s.windows.to_string(),
                s.points.to_string(),
                fmt_f64(s.mae),
                fmt_f64(s.rmse),
                fmt_f64(s.smape),
                s.rrmse.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<eval per-series>", e))?;
    Ok(())
}

pub fn write_eval_json(reports: &[EvalReport], mut writer: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, reports)?;
    writeln!(writer).map_err(|e| Error::io("<eval json>", e))?;
    Ok(())
}

/// Reads `skill_id,origin_t,step,value`.
pub fn read_predictions(reader: impl Read) -> Result<PredictionTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["skill_id", "origin_t", "step", "value"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::InvalidInput(format!(
            "predictions header must be {}",
            expected.join(",")
        )));
    }
    let mut table = PredictionTable::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::InvalidInput(format!("predictions line {line}: bad {what}"));
        let skill = rec[0].parse().map_err(|_| bad("skill_id"))?;
        let origin = rec[1].parse().map_err(|_| bad("origin_t"))?;
        let step = rec[2].parse().map_err(|_| bad("step"))?;
        let value: f64 = rec[3].parse().map_err(|_| bad("value"))?;
        if !value.is_finite() {
            return Err(bad("value"));
        }
        table.insert(skill, origin, step, value)?;
    }
    Ok(table)
}

pub fn write_predictions(table: &PredictionTable, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["skill_id", "origin_t", "step", "value"])?;
    for ((s, t, j), v) in &table.0 {
        w.write_record([s.to_string(), t.to_string(), j.to_string(), fmt_f64(*v)])?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::forecast::{Drift, Naive, RidgeAr};

    fn w(k: usize, h: usize) -> WindowConfig {
        WindowConfig::new(k, h).unwrap()
    }

    fn series(id: u32, values: Vec<f64>) -> Series {
        Series { id, values }
    }

    #[test]
    fn twelve_months_six_origins() {
        let s = vec![series(1, (1..=12).map(f64::from).collect())];
        let r = rolling_origin_eval(&s, &Naive::new(w(4, 3))).unwrap();
        assert_eq!(r.windows, 6);
        assert_eq!(r.points, 18);
        assert_eq!(r.per_series[0].points, 18);
        // naive errors are 1, 2, 3 at every origin
        assert!((r.metrics.mae - 2.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_length_has_one_origin() {
        let s = vec![series(3, vec![1.0; 7])];
        let r = rolling_origin_eval(&s, &Naive::new(w(4, 3))).unwrap();
        assert_eq!((r.windows, r.points), (1, 3));
        assert_eq!(r.metrics, Metrics { mae: 0.0, rmse: 0.0, smape: 0.0, rrmse: 0.0 });
    }

    #[test]
    fn short_series_named_in_error() {
        let s = vec![series(1, vec![1.0; 8]), series(42, vec![1.0; 6])];
        let err = rolling_origin_eval(&s, &Naive::new(w(4, 3))).unwrap_err();
        assert!(matches!(err, Error::SeriesTooShort { ref series, .. } if series == "42"));
    }

    #[test]
    fn zero_series_has_no_relative_error() {
        let s = vec![series(1, vec![0.0; 8]), series(2, vec![1.0; 8])];
        let r = rolling_origin_eval(&s, &Naive::new(w(4, 3))).unwrap();
        assert_eq!(r.per_series[0].rrmse, None);
        assert_eq!(r.per_series[1].rrmse, Some(0.0));
        let all_zero = vec![series(1, vec![0.0; 8])];
        assert!(rolling_origin_eval(&all_zero, &Naive::new(w(4, 3))).is_err());
    }

    #[test]
    fn imported_predictions_scored_by_hand() {
        let s = vec![series(5, vec![1.0, 2.0, 3.0, 5.0, 4.0])];
        let mut t = PredictionTable::default();
        t.insert(5, 3, 1, 4.0).unwrap();
        t.insert(5, 3, 2, 4.0).unwrap();
        let r = score_predictions(&s, &t, w(3, 2), "imported", "external").unwrap();
        // truth [5, 4], prediction [4, 4]
        assert_eq!(r.metrics.mae, 0.5);
        assert!((r.metrics.rmse - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r.metrics.smape - 200.0 / 9.0 / 2.0).abs() < 1e-12);
        assert!((r.metrics.rrmse - 0.5f64.sqrt() / 4.5).abs() < 1e-15);

        let mut missing = PredictionTable::default();
        missing.insert(5, 3, 1, 4.0).unwrap();
        assert!(score_predictions(&s, &missing, w(3, 2), "m", "f").is_err());
        let mut outside = t.clone();
        outside.insert(5, 4, 1, 0.0).unwrap();
        assert!(score_predictions(&s, &outside, w(3, 2), "m", "f").is_err());
        let mut unknown = PredictionTable::default();
        unknown.insert(9, 3, 1, 0.0).unwrap();
        assert!(score_predictions(&s, &unknown, w(3, 2), "m", "f").is_err());
    }

    #[test]
    fn model_and_imported_paths_agree() {
        let s = vec![
            series(1, vec![0.1, 0.3, 0.2, 0.4, 0.5, 0.3, 0.6, 0.2]),
            series(2, vec![0.5, 0.4, 0.45, 0.3, 0.2, 0.25, 0.2, 0.1]),
        ];
        let m = Drift::new(w(3, 2));
        let direct = rolling_origin_eval(&s, &m).unwrap();
        let table = predict_from(&s, &m, &[0, 0]).unwrap();
        let mut buf = Vec::new();
        write_predictions(&table, &mut buf).unwrap();
        let back = read_predictions(buf.as_slice()).unwrap();
        assert_eq!(back, table);
        assert_eq!(score_predictions(&s, &back, w(3, 2), "drift", "baseline").unwrap(), direct);
    }

    #[test]
    fn predictions_csv_validation() {
        assert!(read_predictions("skill,origin,step,value\n".as_bytes()).is_err());
        assert!(read_predictions("skill_id,origin_t,step,value\n1,4,1,x\n".as_bytes()).is_err());
        assert!(read_predictions("skill_id,origin_t,step,value\n1,4,1,2\n1,4,1,3\n".as_bytes()).is_err());
    }

    #[test]
    fn split_counts() {
        let sp = split_origins(12, w(4, 3), SplitConfig::default()).unwrap();
        assert_eq!(sp, OriginSplit { last_train: Some(7), first_eval: 8, last_eval: 9 });
        let sp = split_origins(12, w(6, 3), SplitConfig::default()).unwrap();
        assert_eq!(sp, OriginSplit { last_train: Some(7), first_eval: 8, last_eval: 9 });
        let purged = SplitConfig { purge_overlap: true, ..SplitConfig::default() };
        assert_eq!(split_origins(12, w(4, 3), purged).unwrap().last_train, Some(5));
        assert_eq!(split_origins(12, w(6, 3), purged).unwrap().last_train, None);
        let sp = split_origins(7, w(4, 3), SplitConfig::default()).unwrap();
        assert_eq!(sp, OriginSplit { last_train: None, first_eval: 4, last_eval: 4 });
        assert!(split_origins(6, w(4, 3), SplitConfig::default()).is_err());
        assert!(split_origins(12, w(4, 3), SplitConfig { train_fraction: 1.0, purge_overlap: false }).is_err());
    }

    #[test]
    fn holdout_scores_only_later_origins() {
        let values: Vec<f64> = (0..12).map(|i| 0.9f64.powi(i)).collect();
        let s = vec![series(1, values)];
        let mut m = RidgeAr::new(w(4, 3), 0.0);
        let r = holdout_eval(&s, &mut m, &TrainConfig::default(), SplitConfig::default()).unwrap();
        assert_eq!(r.windows, 2);
        assert!(r.metrics.mae < 1e-9);
    }

    #[test]
    fn report_writers() {
        let s = vec![series(1, vec![1.0, 2.0, 3.0, 4.0, 5.0])];
        let r = rolling_origin_eval(&s, &Naive::new(w(2, 1))).unwrap();
        let mut buf = Vec::new();
        write_eval_summary(std::slice::from_ref(&r), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# sMAPE"));
        assert_eq!(lines.next().unwrap(), "family,model,seq_len,pred_len,windows,points,MAE,RMSE,sMAPE,rRMSE");
        assert!(lines.next().unwrap().starts_with("baseline,naive,2,1,3,3,1,1,"));
        let mut json = Vec::new();
        write_eval_json(std::slice::from_ref(&r), &mut json).unwrap();
        let back: Vec<EvalReport> = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, vec![r]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn window_count_formula(t in 1usize..40, k in 1usize..10, h in 1usize..10) {
            let s = vec![series(1, (0..t).map(|i| i as f64 + 1.0).collect())];
            let expected = (t as isize - h as isize - k as isize + 1).max(0) as usize;
            match rolling_origin_eval(&s, &Naive::new(w(k, h))) {
                Ok(r) => {
                    prop_assert_eq!(r.windows, expected);
                    prop_assert_eq!(r.points, expected * h);
                }
                Err(Error::SeriesTooShort { .. }) => prop_assert_eq!(expected, 0),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}

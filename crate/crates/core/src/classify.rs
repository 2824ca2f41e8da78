//! Growth indicators and quadrant classification.
//!
//! For each skill, `R̄` is the mean of the last `H` historical shares and
//! `F̄` the mean of the first `F` forecast shares. `G_abs = F̄ − R̄` and
//! `G_rel = G_abs / R̄`. Skills are split on the `q`-quantile of each growth
//! distribution:
//!
//! | | `G_rel ≥ τ_rel` | `G_rel < τ_rel` |
//! |---|---|---|
//! | `G_abs ≥ τ_abs` | Star | Stable |
//! | `G_abs < τ_abs` | Emerging | Declining |

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::series::NormalizedMatrix;
use crate::{Error, Result};

pub const DEFAULT_HISTORY_WINDOW: usize = 12;
pub const DEFAULT_FORECAST_WINDOW: usize = 6;
pub const DEFAULT_QUANTILE: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    Star,
    Emerging,
    Stable,
    Declining,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::Star, Quadrant::Emerging, Quadrant::Stable, Quadrant::Declining];

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::Star => "Star",
            Quadrant::Emerging => "Emerging",
            Quadrant::Stable => "Stable",
            Quadrant::Declining => "Declining",
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quadrant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Quadrant::ALL
            .into_iter()
            .find(|q| q.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown quadrant {s:?}")))
    }
}

pub const FLAG_UNDEFINED_RELATIVE: &str = "undefined_relative";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthMetrics {
    pub r_bar: f64,
    pub f_bar: f64,
    pub g_abs: f64,
    /// `None` when `R̄ = 0`.
    pub g_rel: Option<f64>,
}

/// Offset by the first value so a constant window averages to itself exactly.
fn mean(v: &[f64]) -> f64 {
    v[0] + v.iter().map(|x| x - v[0]).sum::<f64>() / v.len() as f64
}

/// Growth indicators over the whole of `history` and `forecast`.
pub fn growth_metrics(history: &[f64], forecast: &[f64]) -> Result<GrowthMetrics> {
    if history.is_empty() || forecast.is_empty() {
        return Err(Error::InvalidInput("history and forecast must be non-empty".into()));
    }
    if history.iter().chain(forecast).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("shares must be finite and non-negative".into()));
    }
    let r_bar = mean(history);
    let f_bar = mean(forecast);
    let g_abs = f_bar - r_bar;
    Ok(GrowthMetrics {
        r_bar,
        f_bar,
        g_abs,
        g_rel: (r_bar > 0.0).then(|| g_abs / r_bar),
    })
}

/// Linear-interpolation quantile of `values`.
pub fn percentile_threshold(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty set".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("quantile must be in [0, 1], got {q}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("quantile inputs must be finite".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let p = q * (v.len() - 1) as f64;
    let lo = p.floor() as usize;
    let hi = p.ceil() as usize;
    Ok(v[lo] + (p - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrantThresholds {
    pub tau_abs: f64,
    pub tau_rel: f64,
    pub quantile: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRecord {
    pub skill_id: u32,
    pub label: String,
    pub metrics: GrowthMetrics,
    pub quadrant: Quadrant,
    pub flags: Vec<&'static str>,
}

/// `τ_abs` over all records, `τ_rel` over records with a defined `G_rel`.
pub fn compute_thresholds(metrics: &[GrowthMetrics], q: f64) -> Result<QuadrantThresholds> {
    let abs: Vec<f64> = metrics.iter().map(|m| m.g_abs).collect();
    let rel: Vec<f64> = metrics.iter().filter_map(|m| m.g_rel).collect();
    if rel.is_empty() {
        return Err(Error::InvalidInput(
            "no skill has a defined relative growth; cannot set the relative threshold".into(),
        ));
    }
    Ok(QuadrantThresholds {
        tau_abs: percentile_threshold(&abs, q)?,
        tau_rel: percentile_threshold(&rel, q)?,
        quantile: q,
    })
}

/// Both comparisons are inclusive. An undefined `G_rel` is `Declining`.
pub fn quadrant_of(m: &GrowthMetrics, th: &QuadrantThresholds) -> Quadrant {
    let Some(g_rel) = m.g_rel else {
        return Quadrant::Declining;
    };
    match (m.g_abs >= th.tau_abs, g_rel >= th.tau_rel) {
        (true, true) => Quadrant::Star,
        (false, true) => Quadrant::Emerging,
        (true, false) => Quadrant::Stable,
        (false, false) => Quadrant::Declining,
    }
}

pub fn assign_quadrants(metrics: &[GrowthMetrics], th: &QuadrantThresholds) -> Vec<Quadrant> {
    metrics.iter().map(|m| quadrant_of(m, th)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub history_window: usize,
    pub forecast_window: usize,
    pub quantile: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            history_window: DEFAULT_HISTORY_WINDOW,
            forecast_window: DEFAULT_FORECAST_WINDOW,
            quantile: DEFAULT_QUANTILE,
        }
    }
}

impl ClassifyConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.history_window == 0 {
            out.push("classify.history_window must be at least 1".to_string());
        }
        if self.forecast_window == 0 {
            out.push("classify.forecast_window must be at least 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.quantile) {
            out.push(format!("classify.quantile must be in [0, 1], got {}", self.quantile));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub records: Vec<GrowthRecord>,
    pub thresholds: QuadrantThresholds,
}

impl Classification {
    pub fn counts(&self) -> [(Quadrant, usize); 4] {
        Quadrant::ALL.map(|q| (q, self.records.iter().filter(|r| r.quadrant == q).count()))
    }
}

/// Classifies every skill row of `history`, using the last `H` months of
/// history and the first `F` forecast months.
pub fn classify(
    history: &NormalizedMatrix,
    forecast: &NormalizedMatrix,
    labels: &HashMap<u32, String>,
    cfg: &ClassifyConfig,
) -> Result<Classification> {
    if let Some(p) = cfg.problems().into_iter().next() {
        return Err(Error::Config(p));
    }
    let (h, f) = (cfg.history_window, cfg.forecast_window);
    if history.periods.len() < h {
        return Err(Error::InvalidInput(format!(
            "history has {} months but the configured history window is H={h}",
            history.periods.len()
        )));
    }
    if forecast.periods.len() < f {
        return Err(Error::InvalidInput(format!(
            "forecast has {} months but the configured forecast window is F={f}",
            forecast.periods.len()
        )));
    }
    if history.skills != forecast.skills {
        return Err(Error::InvalidInput("history and forecast list different skills".into()));
    }
    if history.skills.is_empty() {
        return Err(Error::InvalidInput("no skills to classify".into()));
    }
    let metrics = history
        .values
        .iter()
        .zip(&forecast.values)
        .zip(&history.skills)
        .map(|((hist, fc), id)| {
            // Negative forecasts clamp to zero.
            let fc: Vec<f64> = fc[..f].iter().map(|v| v.max(0.0)).collect();
            growth_metrics(&hist[hist.len() - h..], &fc)
                .map_err(|e| Error::InvalidInput(format!("skill {id}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let thresholds = compute_thresholds(&metrics, cfg.quantile)?;
    let records = history
        .skills
        .iter()
        .zip(metrics)
        .map(|(id, m)| GrowthRecord {
            skill_id: *id,
            label: labels.get(id).cloned().unwrap_or_default(),
            quadrant: quadrant_of(&m, &thresholds),
            flags: if m.g_rel.is_none() { vec![FLAG_UNDEFINED_RELATIVE] } else { Vec::new() },
            metrics: m,
        })
        .collect();
    Ok(Classification { records, thresholds })
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_classification(c: &Classification, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["skill_id", "label", "R_bar", "F_bar", "G_abs", "G_rel", "quadrant", "flags"])?;
    for r in &c.records {
        w.write_record([
            r.skill_id.to_string(),
            r.label.clone(),
            fmt_f64(r.metrics.r_bar),
            fmt_f64(r.metrics.f_bar),
            fmt_f64(r.metrics.g_abs),
            r.metrics.g_rel.map(fmt_f64).unwrap_or_default(),
            r.quadrant.to_string(),
            r.flags.join(";"),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<classification>", e))?;
    Ok(())
}

/// Reads the classification CSV back. Flags other than
/// `undefined_relative` are rejected.
pub fn read_classification(reader: impl std::io::Read) -> Result<Vec<GrowthRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::InvalidInput(format!("classification line {line}: bad {what}"));
        if rec.len() != 8 {
            return Err(bad("column count"));
        }
        let num = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(what));
        let flags = rec[7]
            .split(';')
            .filter(|f| !f.is_empty())
            .map(|f| match f {
                FLAG_UNDEFINED_RELATIVE => Ok(FLAG_UNDEFINED_RELATIVE),
                _ => Err(bad("flag")),
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(GrowthRecord {
            skill_id: rec[0].parse().map_err(|_| bad("skill_id"))?,
            label: rec[1].to_string(),
            metrics: GrowthMetrics {
                r_bar: num(2, "R_bar")?,
                f_bar: num(3, "F_bar")?,
                g_abs: num(4, "G_abs")?,
                g_rel: if rec[5].is_empty() { None } else { Some(num(5, "G_rel")?) },
            },
            quadrant: rec[6].parse()?,
            flags,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankAxis {
    Absolute,
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSkill {
    pub rank: usize,
    pub skill_id: u32,
    pub label: String,
    pub g_rel: Option<f64>,
    pub g_abs: f64,
    pub quadrant: Quadrant,
}

/// Descending by the chosen growth, ties by label then id. Records with an
/// undefined `G_rel` are left out of relative rankings.
pub fn rank_skills(records: &[GrowthRecord], axis: RankAxis, top_n: usize) -> Vec<RankedSkill> {
    let key = |r: &GrowthRecord| match axis {
        RankAxis::Absolute => Some(r.metrics.g_abs),
        RankAxis::Relative => r.metrics.g_rel,
    };
    let mut sel: Vec<(f64, &GrowthRecord)> = records.iter().filter_map(|r| key(r).map(|k| (k, r))).collect();
    sel.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.label.cmp(&b.1.label))
            .then_with(|| a.1.skill_id.cmp(&b.1.skill_id))
    });
    sel.into_iter()
        .take(top_n)
        .enumerate()
        .map(|(i, (_, r))| RankedSkill {
            rank: i + 1,
            skill_id: r.skill_id,
            label: r.label.clone(),
            g_rel: r.metrics.g_rel,
            g_abs: r.metrics.g_abs,
            quadrant: r.quadrant,
        })
        .collect()
}

/// `#,Skill,G_rel,G_abs,Quadrant` with `G_rel` at 4 and `G_abs` at 6
/// decimals.
pub fn write_rankings(rows: &[RankedSkill], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["#", "Skill", "G_rel", "G_abs", "Quadrant"])?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.label.clone(),
            r.g_rel.map(|v| format!("{v:.4}")).unwrap_or_default(),
            format!("{:.6}", r.g_abs),
            r.quadrant.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<rankings>", e))?;
    Ok(())
}

/// Orders by the quadrant table, then id; used for stable summaries.
pub fn quadrant_order(a: &GrowthRecord, b: &GrowthRecord) -> Ordering {
    a.quadrant.cmp(&b.quadrant).then(a.skill_id.cmp(&b.skill_id))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::ingest::PeriodId;

    fn gm(g_abs: f64, g_rel: f64) -> GrowthMetrics {
        GrowthMetrics {
            r_bar: 1.0,
            f_bar: 1.0 + g_abs,
            g_abs,
            g_rel: Some(g_rel),
        }
    }

    #[test]
    fn metric_examples() {
        let m = growth_metrics(&[0.004; 12], &[0.004; 6]).unwrap();
        assert_eq!((m.r_bar, m.f_bar, m.g_abs, m.g_rel), (0.004, 0.004, 0.0, Some(0.0)));
        let m = growth_metrics(&[0.002; 12], &[0.003; 6]).unwrap();
        assert!((m.g_abs - 0.001).abs() < 1e-15);
        assert!((m.g_rel.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(growth_metrics(&[0.0; 12], &[0.001; 6]).unwrap().g_rel, None);
        assert!(growth_metrics(&[-0.1; 12], &[0.0; 6]).is_err());
        assert!(growth_metrics(&[], &[0.0]).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(percentile_threshold(&[4.0, 1.0, 3.0, 2.0], 0.75).unwrap(), 3.25);
        assert_eq!(percentile_threshold(&[0.7; 9], 0.75).unwrap(), 0.7);
        assert_eq!(percentile_threshold(&[-2.5], 0.75).unwrap(), -2.5);
        assert!(percentile_threshold(&[], 0.75).is_err());
        assert!(percentile_threshold(&[1.0], 1.5).is_err());
    }

    #[test]
    fn thresholds_are_inclusive() {
        let th = QuadrantThresholds { tau_abs: 0.5, tau_rel: 0.2, quantile: 0.75 };
        assert_eq!(quadrant_of(&gm(0.5, 0.2), &th), Quadrant::Star);
        assert_eq!(quadrant_of(&gm(0.49, 0.2), &th), Quadrant::Emerging);
        assert_eq!(quadrant_of(&gm(0.5, 0.19), &th), Quadrant::Stable);
        assert_eq!(quadrant_of(&gm(0.0, 0.0), &th), Quadrant::Declining);
        let undefined = GrowthMetrics { g_rel: None, ..gm(9.0, 0.0) };
        assert_eq!(quadrant_of(&undefined, &th), Quadrant::Declining);
    }

    #[test]
    fn four_skill_enumeration() {
        // one skill high on both axes, one high only on each axis, one low
        let m = [gm(4.0, 4.0), gm(3.0, 1.0), gm(1.0, 3.0), gm(2.0, 2.0)];
        let th = compute_thresholds(&m, 0.75).unwrap();
        assert_eq!((th.tau_abs, th.tau_rel), (3.25, 3.25));
        assert_eq!(
            assign_quadrants(&m, &th),
            vec![Quadrant::Star, Quadrant::Declining, Quadrant::Declining, Quadrant::Declining]
        );
        let m = [gm(4.0, 4.0), gm(3.5, 1.0), gm(1.0, 3.5), gm(2.0, 2.0)];
        let th = compute_thresholds(&m, 0.5).unwrap();
        assert_eq!(
            assign_quadrants(&m, &th),
            vec![Quadrant::Star, Quadrant::Stable, Quadrant::Emerging, Quadrant::Declining]
        );
    }

    #[test]
    fn undefined_relative_excluded_from_tau_rel() {
        let mut m = vec![gm(1.0, 1.0), gm(2.0, 2.0), gm(3.0, 3.0)];
        m.push(GrowthMetrics { r_bar: 0.0, f_bar: 5.0, g_abs: 5.0, g_rel: None });
        let th = compute_thresholds(&m, 0.75).unwrap();
        assert_eq!(th.tau_rel, 2.5);
        assert_eq!(th.tau_abs, percentile_threshold(&[1.0, 2.0, 3.0, 5.0], 0.75).unwrap());
    }

    fn matrix(skills: Vec<u32>, months: usize, start: PeriodId, rows: Vec<Vec<f64>>) -> NormalizedMatrix {
        let mut periods = vec![start];
        for _ in 1..months {
            let next = periods.last().unwrap().succ();
            periods.push(next);
        }
        NormalizedMatrix { skills, periods, values: rows }
    }

    #[test]
    fn classify_checks_window_lengths() {
        let start = PeriodId::new(2024, 4).unwrap();
        let hist = matrix(vec![1], 11, start, vec![vec![0.1; 11]]);
        let fc = matrix(vec![1], 6, PeriodId::new(2025, 3).unwrap(), vec![vec![0.1; 6]]);
        let err = classify(&hist, &fc, &HashMap::new(), &ClassifyConfig::default()).unwrap_err();
        assert!(err.to_string().contains("H=12"), "{err}");
    }

    #[test]
    fn classify_uses_trailing_history() {
        let start = PeriodId::new(2024, 1).unwrap();
        let mut row = vec![100.0; 2];
        row.extend([0.002; 12]);
        let hist = matrix(vec![7, 8], 14, start, vec![row, vec![0.001; 14]]);
        let fc = matrix(vec![7, 8], 7, PeriodId::new(2025, 3).unwrap(), vec![vec![0.003; 7], vec![0.001; 7]]);
        let labels = HashMap::from([(7, "monitor waste".to_string())]);
        let c = classify(&hist, &fc, &labels, &ClassifyConfig::default()).unwrap();
        let r = &c.records[0];
        assert!((r.metrics.r_bar - 0.002).abs() < 1e-15);
        assert!((r.metrics.g_rel.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.label, "monitor waste");
        assert_eq!(c.records[1].label, "");
        let mut buf = Vec::new();
        write_classification(&c, &mut buf).unwrap();
        assert_eq!(read_classification(buf.as_slice()).unwrap(), c.records);
    }

    #[test]
    fn rankings_layout_and_ties() {
        let rec = |id, label: &str, g_abs, g_rel: Option<f64>, q| GrowthRecord {
            skill_id: id,
            label: label.into(),
            metrics: GrowthMetrics { r_bar: 0.0, f_bar: 0.0, g_abs, g_rel },
            quadrant: q,
            flags: vec![],
        };
        let records = vec![
            rec(1, "mitigate waste of resources", 0.000278, Some(0.2759), Quadrant::Stable),
            rec(2, "develop efficiency plans for logistics operations", 0.000503, Some(0.1183), Quadrant::Stable),
            rec(3, "b tie", 0.0001, Some(0.9), Quadrant::Emerging),
            rec(4, "a tie", 0.0001, None, Quadrant::Declining),
        ];
        let abs = rank_skills(&records, RankAxis::Absolute, 10);
        assert_eq!(abs.iter().map(|r| r.skill_id).collect::<Vec<_>>(), vec![2, 1, 4, 3]);
        let rel = rank_skills(&records, RankAxis::Relative, 2);
        assert_eq!(rel.iter().map(|r| r.skill_id).collect::<Vec<_>>(), vec![3, 1]);
        let mut buf = Vec::new();
        write_rankings(&abs[..2], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "#,Skill,G_rel,G_abs,Quadrant\n\
             1,develop efficiency plans for logistics operations,0.1183,0.000503,Stable\n\
             2,mitigate waste of resources,0.2759,0.000278,Stable\n"
        );
    }

    /// Order-statistic oracle: the number of distinct values at or above the
    /// interpolated q-quantile.
    fn count_at_or_above(values: &[f64], q: f64) -> usize {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let p = q * (v.len() - 1) as f64;
        let lo = p.floor() as usize;
        if p == lo as f64 {
            v.len() - lo
        } else {
            v.len() - lo - 1
        }
    }

    proptest! {
        #[test]
        fn high_counts_match_on_both_axes(seed in any::<u64>(), n in 2usize..300) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<GrowthMetrics> = (0..n)
                .map(|i| gm(rng.random::<f64>() + i as f64 * 1e-9, rng.random::<f64>() * 3.0 - 1.0 + i as f64 * 1e-9))
                .collect();
            let th = compute_thresholds(&m, 0.75).unwrap();
            let q = assign_quadrants(&m, &th);
            let count = |a: Quadrant| q.iter().filter(|x| **x == a).count();
            let (star, em, st, de) = (count(Quadrant::Star), count(Quadrant::Emerging), count(Quadrant::Stable), count(Quadrant::Declining));
            prop_assert_eq!(star + st, star + em);
            prop_assert_eq!(star + st, count_at_or_above(&m.iter().map(|x| x.g_abs).collect::<Vec<_>>(), 0.75));
            prop_assert_eq!(star + em + st + de, n);
        }

        #[test]
        fn monotone_transform_of_g_abs_preserves_quadrants(
            values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..60),
            a in 0.01f64..100.0,
            b in -5.0f64..5.0,
            cubic in any::<bool>(),
        ) {
            let m: Vec<GrowthMetrics> = values.iter().map(|(x, y)| gm(*x, *y)).collect();
            let f = |x: f64| if cubic { a * x * x * x + b } else { a * x.exp() + b };
            let mapped: Vec<GrowthMetrics> = m.iter().map(|g| GrowthMetrics { g_abs: f(g.g_abs), ..*g }).collect();
            let before = assign_quadrants(&m, &compute_thresholds(&m, 0.75).unwrap());
            let after = assign_quadrants(&mapped, &compute_thresholds(&mapped, 0.75).unwrap());
            prop_assert_eq!(before, after);
        }
    }
}

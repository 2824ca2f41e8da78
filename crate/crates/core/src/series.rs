//! Skill × month count matrices and their volume normalization.
//!
//! Rows are green skills (taxonomy entry ids); columns are calendar months.
//! Normalized values are `C(s, t) / N(t)` where `N(t)` counts every detected
//! skill in month `t`, green or not.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{PeriodId, SkillRecord};
use crate::matching::GreenAssignment;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodPolicy {
    /// Only months that appear in the data.
    #[default]
    ObservedOnly,
    /// Every calendar month between the first and last observation; inserted
    /// months are flagged as gaps.
    ZeroFillGaps,
}

impl FromStr for PeriodPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observed_only" | "observed-only" => Ok(PeriodPolicy::ObservedOnly),
            "zero_fill_gaps" | "zero-fill-gaps" => Ok(PeriodPolicy::ZeroFillGaps),
            other => Err(Error::Config(format!("unknown period policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodAxis {
    pub periods: Vec<PeriodId>,
    /// `gaps[i]` is true when `periods[i]` had no observations.
    pub gaps: Vec<bool>,
}

impl PeriodAxis {
    pub fn gap_periods(&self) -> Vec<PeriodId> {
        self.periods
            .iter()
            .zip(&self.gaps)
            .filter(|(_, g)| **g)
            .map(|(p, _)| *p)
            .collect()
    }
}

pub fn period_axis(periods: impl IntoIterator<Item = PeriodId>, policy: PeriodPolicy) -> Result<PeriodAxis> {
    let observed: BTreeSet<PeriodId> = periods.into_iter().collect();
    let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
        return Err(Error::InvalidInput("no periods to build an axis from".into()));
    };
    let periods: Vec<PeriodId> = match policy {
        PeriodPolicy::ObservedOnly => observed.iter().copied().collect(),
        PeriodPolicy::ZeroFillGaps => {
            let mut v = vec![first];
            while *v.last().expect("non-empty") < last {
                let next = v.last().expect("non-empty").succ();
                v.push(next);
            }
            v
        }
    };
    let gaps = periods.iter().map(|p| !observed.contains(p)).collect();
    Ok(PeriodAxis { periods, gaps })
}

/// Raw counts `C(s, t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    pub skills: Vec<u32>,
    pub axis: PeriodAxis,
    /// `counts[row][col]`.
    pub counts: Vec<Vec<u64>>,
}

impl CountMatrix {
    pub fn periods(&self) -> &[PeriodId] {
        &self.axis.periods
    }

    pub fn column_totals(&self) -> Vec<u64> {
        (0..self.axis.periods.len())
            .map(|c| self.counts.iter().map(|row| row[c]).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Counts assignments per `(entry_id, period)`, filling absent cells with 0.
pub fn aggregate(assignments: &[GreenAssignment], policy: PeriodPolicy) -> Result<CountMatrix> {
    let axis = period_axis(assignments.iter().map(|a| a.period), policy)?;
    let col: BTreeMap<PeriodId, usize> = axis.periods.iter().enumerate().map(|(i, p)| (*p, i)).collect();
    let mut rows: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for a in assignments {
        rows.entry(a.entry_id).or_insert_with(|| vec![0; axis.periods.len()])[col[&a.period]] += 1;
    }
    Ok(CountMatrix {
        skills: rows.keys().copied().collect(),
        counts: rows.into_values().collect(),
        axis,
    })
}

/// `N(t)`: all detected skills per month.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MonthlyTotals(pub BTreeMap<PeriodId, u64>);

impl MonthlyTotals {
    pub fn from_records(records: &[SkillRecord]) -> Self {
        let mut m = BTreeMap::new();
        for r in records {
            *m.entry(r.period).or_insert(0) += 1;
        }
        MonthlyTotals(m)
    }

    pub fn get(&self, p: PeriodId) -> Option<u64> {
        self.0.get(&p).copied()
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut m = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let period: PeriodId = rec.get(0).unwrap_or("").parse()?;
            let total: u64 = rec
                .get(1)
                .unwrap_or("")
                .trim()
                .replace(',', "")
                .parse()
                .map_err(|_| Error::InvalidInput(format!("totals line {line}: bad total")))?;
            if m.insert(period, total).is_some() {
                return Err(Error::InvalidInput(format!("totals line {line}: duplicate period {period}")));
            }
        }
        Ok(MonthlyTotals(m))
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["period", "total"])?;
        for (p, n) in &self.0 {
            w.write_record([p.to_string(), n.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<totals output>", e))?;
        Ok(())
    }
}

/// Proportions `C(s, t) / N(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix {
    pub skills: Vec<u32>,
    pub periods: Vec<PeriodId>,
    pub values: Vec<Vec<f64>>,
}

impl NormalizedMatrix {
    pub fn row(&self, skill: u32) -> Option<&[f64]> {
        self.skills
            .iter()
            .position(|s| *s == skill)
            .map(|i| self.values[i].as_slice())
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.periods.len())
            .map(|c| self.values.iter().map(|row| row[c]).sum())
            .collect()
    }
}

/// Divides every count by its month's total. Gap columns (inserted by
/// [`PeriodPolicy::ZeroFillGaps`]) may lack a total and normalize to 0.
pub fn normalize(matrix: &CountMatrix, totals: &MonthlyTotals) -> Result<NormalizedMatrix> {
    let mut denominators = Vec::with_capacity(matrix.axis.periods.len());
    for (i, p) in matrix.axis.periods.iter().enumerate() {
        match totals.get(*p) {
            Some(n) if n > 0 => denominators.push(Some(n as f64)),
            _ if matrix.axis.gaps[i] => denominators.push(None),
            _ => return Err(Error::MissingTotal(p.to_string())),
        }
    }
    for (i, p) in matrix.axis.periods.iter().enumerate() {
        let col: u64 = matrix.counts.iter().map(|r| r[i]).sum();
        if let Some(n) = denominators[i] {
            if col as f64 > n {
                return Err(Error::InvalidInput(format!(
                    "period {p}: {col} green occurrences exceed the total {n}"
                )));
            }
        }
    }
    let values = matrix
        .counts
        .iter()
        .map(|row| {
            row.iter()
                .zip(&denominators)
                .map(|(&c, d)| d.map_or(0.0, |n| c as f64 / n))
                .collect()
        })
        .collect();
    Ok(NormalizedMatrix {
        skills: matrix.skills.clone(),
        periods: matrix.axis.periods.clone(),
        values,
    })
}

/// Inverse of [`normalize`] for integer-consistent matrices.
pub fn denormalize(matrix: &NormalizedMatrix, totals: &MonthlyTotals) -> Result<CountMatrix> {
    let mut counts = vec![vec![0u64; matrix.periods.len()]; matrix.skills.len()];
    let mut gaps = Vec::with_capacity(matrix.periods.len());
    for (c, p) in matrix.periods.iter().enumerate() {
        let n = totals.get(*p).unwrap_or(0);
        gaps.push(n == 0);
        for (r, row) in matrix.values.iter().enumerate() {
            counts[r][c] = (row[c] * n as f64).round() as u64;
        }
    }
    Ok(CountMatrix {
        skills: matrix.skills.clone(),
        axis: PeriodAxis {
            periods: matrix.periods.clone(),
            gaps,
        },
        counts,
    })
}

fn write_matrix<T>(skills: &[u32], periods: &[PeriodId], rows: &[Vec<T>], fmt: impl Fn(&T) -> String, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["skill_id".to_string()];
    header.extend(periods.iter().map(ToString::to_string));
    w.write_record(&header)?;
    for (s, row) in skills.iter().zip(rows) {
        let mut rec = vec![s.to_string()];
        rec.extend(row.iter().map(&fmt));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<matrix output>", e))?;
    Ok(())
}

type ParsedMatrix<T> = (Vec<u32>, Vec<PeriodId>, Vec<Vec<T>>);

fn read_matrix<T: FromStr>(reader: impl Read) -> Result<ParsedMatrix<T>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("skill_id") {
        return Err(Error::InvalidInput("matrix CSV must start with a skill_id column".into()));
    }
    let periods = headers
        .iter()
        .skip(1)
        .map(str::parse)
        .collect::<Result<Vec<PeriodId>>>()?;
    if periods.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("matrix periods must be strictly increasing".into()));
    }
    let mut skills = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = || Error::InvalidInput(format!("matrix line {line}: unparseable value"));
        skills.push(rec.get(0).unwrap_or("").trim().parse::<u32>().map_err(|_| bad())?);
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<T>().map_err(|_| bad()))
            .collect::<Result<Vec<T>>>()?;
        if row.len() != periods.len() {
            return Err(Error::InvalidInput(format!("matrix line {line}: wrong number of columns")));
        }
        rows.push(row);
    }
    Ok((skills, periods, rows))
}

pub fn write_count_matrix(m: &CountMatrix, writer: impl Write) -> Result<()> {
    write_matrix(&m.skills, &m.axis.periods, &m.counts, u64::to_string, writer)
}

/// Reads a count matrix; every column is treated as observed.
pub fn read_count_matrix(reader: impl Read) -> Result<CountMatrix> {
    let (skills, periods, counts) = read_matrix::<u64>(reader)?;
    let gaps = vec![false; periods.len()];
    Ok(CountMatrix {
        skills,
        axis: PeriodAxis { periods, gaps },
        counts,
    })
}

/// Full-precision (shortest round-trip) values.
pub fn write_normalized_matrix(m: &NormalizedMatrix, writer: impl Write) -> Result<()> {
    write_matrix(&m.skills, &m.periods, &m.values, |v| format!("{v:?}"), writer)
}

pub fn read_normalized_matrix(reader: impl Read) -> Result<NormalizedMatrix> {
    let (skills, periods, values) = read_matrix::<f64>(reader)?;
    Ok(NormalizedMatrix { skills, periods, values })
}

/// Rounds half away from zero at `decimals` places, tolerating binary
/// representation error just below the half.
pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = x * scale;
    (scaled.abs() + 0.5 + 1e-9).floor().copysign(scaled) / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub period: PeriodId,
    pub green: u64,
    pub total: u64,
    /// Unrounded percentage.
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareReport {
    pub rows: Vec<ShareRow>,
    pub green_total: u64,
    pub total: u64,
    /// Mean of the monthly percentages.
    pub mean_share_pct: f64,
    /// `100 · green_total / total`.
    pub weighted_share_pct: f64,
}

/// Monthly green share against the totals. Every month in `green` needs a
/// positive total.
pub fn monthly_shares(green: &BTreeMap<PeriodId, u64>, totals: &MonthlyTotals) -> Result<ShareReport> {
    let mut rows = Vec::with_capacity(green.len());
    for (&period, &g) in green {
        let n = totals
            .get(period)
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::MissingTotal(period.to_string()))?;
        rows.push(ShareRow {
            period,
            green: g,
            total: n,
            percentage: 100.0 * g as f64 / n as f64,
        });
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no months to report".into()));
    }
    let green_total: u64 = rows.iter().map(|r| r.green).sum();
    let total: u64 = rows.iter().map(|r| r.total).sum();
    Ok(ShareReport {
        mean_share_pct: rows.iter().map(|r| r.percentage).sum::<f64>() / rows.len() as f64,
        weighted_share_pct: 100.0 * green_total as f64 / total as f64,
        rows,
        green_total,
        total,
    })
}

/// Green counts per observed column of a matrix.
pub fn green_by_period(m: &CountMatrix) -> BTreeMap<PeriodId, u64> {
    m.axis
        .periods
        .iter()
        .zip(m.column_totals())
        .zip(&m.axis.gaps)
        .filter(|(_, gap)| !**gap)
        .map(|((p, c), _)| (*p, c))
        .collect()
}

/// `month,green_skills,total_skills,percentage` with percentages rounded
/// half-up to two decimals.
pub fn write_share_report(report: &ShareReport, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["month", "green_skills", "total_skills", "percentage"])?;
    for r in &report.rows {
        w.write_record([
            r.period.to_string(),
            r.green.to_string(),
            r.total.to_string(),
            format!("{:.2}", round_half_up(r.percentage, 2)),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<share report>", e))?;
    Ok(())
}

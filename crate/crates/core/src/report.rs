//! SVG quadrant chart and plain-text run summary.

use std::fmt::Write as _;

use crate::classify::{Classification, Quadrant};
use crate::forecast::EvalReport;
use crate::ingest::PeriodId;
use crate::series::{round_half_up, ShareReport};

#[derive(Debug, Clone, PartialEq)]
pub struct ChartOptions {
    pub width: u32,
    pub height: u32,
    /// Symmetric log scaling on both axes.
    pub log_axes: bool,
    pub title: String,
}

impl Default for ChartOptions {
    fn default() -> Self {
        ChartOptions {
            width: 900,
            height: 640,
            log_axes: false,
            title: "Skill classification by absolute and relative growth".into(),
        }
    }
}

fn quadrant_color(q: Quadrant) -> &'static str {
    match q {
        Quadrant::Star => "#1b7837",
        Quadrant::Emerging => "#2166ac",
        Quadrant::Stable => "#b35806",
        Quadrant::Declining => "#777777",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear or symmetric-log axis mapping data values onto `[lo_px, hi_px]`.
struct Axis {
    log: bool,
    linthresh: f64,
    min: f64,
    max: f64,
    lo_px: f64,
    hi_px: f64,
}

impl Axis {
    fn new(values: &[f64], log: bool, lo_px: f64, hi_px: f64) -> Self {
        let linthresh = values
            .iter()
            .map(|v| v.abs())
            .filter(|v| *v > 0.0)
            .fold(f64::INFINITY, f64::min);
        let linthresh = if linthresh.is_finite() { linthresh } else { 1.0 };
        let mut axis = Axis {
            log,
            linthresh,
            min: 0.0,
            max: 0.0,
            lo_px,
            hi_px,
        };
        let t: Vec<f64> = values.iter().map(|v| axis.forward(*v)).collect();
        let (mut min, mut max) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if !min.is_finite() {
            (min, max) = (0.0, 1.0);
        }
        if max - min <= 0.0 {
            let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.5 };
            min -= pad;
            max += pad;
        }
        let pad = (max - min) * 0.06;
        axis.min = min - pad;
        axis.max = max + pad;
        axis
    }

    fn forward(&self, v: f64) -> f64 {
        if self.log {
            v.signum() * (1.0 + v.abs() / self.linthresh).log10()
        } else {
            v
        }
    }

    fn inverse(&self, t: f64) -> f64 {
        if self.log {
            t.signum() * (10f64.powf(t.abs()) - 1.0) * self.linthresh
        } else {
            t
        }
    }

    fn px(&self, v: f64) -> f64 {
        let t = self.forward(v);
        self.lo_px + (t - self.min) / (self.max - self.min) * (self.hi_px - self.lo_px)
    }

    fn ticks(&self, n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| self.inverse(self.min + (self.max - self.min) * i as f64 / n as f64))
            .collect()
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 1000.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

/// Scatter of `G_abs` against `G_rel` with dashed threshold lines and the
/// four quadrant regions labelled. Skills without a defined `G_rel` are not
/// plotted.
pub fn quadrant_svg(c: &Classification, opts: &ChartOptions) -> String {
    let (w, h) = (opts.width as f64, opts.height as f64);
    let (left, right, top, bottom) = (90.0, w - 30.0, 50.0, h - 70.0);
    let pts: Vec<(f64, f64, &crate::classify::GrowthRecord)> = c
        .records
        .iter()
        .filter_map(|r| r.metrics.g_rel.map(|g| (r.metrics.g_abs, g, r)))
        .collect();
    let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    xs.push(c.thresholds.tau_abs);
    ys.push(c.thresholds.tau_rel);
    let xa = Axis::new(&xs, opts.log_axes, left, right);
    let ya = Axis::new(&ys, opts.log_axes, bottom, top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="18">{}</text>"#,
        w / 2.0,
        escape(&opts.title)
    );

    let tx = xa.px(c.thresholds.tau_abs).clamp(left, right);
    let ty = ya.px(c.thresholds.tau_rel).clamp(top, bottom);
    let regions = [
        (Quadrant::Star, "Star skills", "High abs / High rel", (tx + right) / 2.0, (top + ty) / 2.0),
        (Quadrant::Emerging, "Emerging skills", "Low abs / High rel", (left + tx) / 2.0, (top + ty) / 2.0),
        (Quadrant::Stable, "Stable skills", "High abs / Low rel", (tx + right) / 2.0, (ty + bottom) / 2.0),
        (Quadrant::Declining, "Declining skills", "Low abs / Low rel", (left + tx) / 2.0, (ty + bottom) / 2.0),
    ];
    let _ = writeln!(s, r#"<g class="regions">"#);
    for (q, name, sub, cx, cy) in regions {
        let _ = writeln!(
            s,
            r#"<text class="region" data-quadrant="{q}" x="{cx:.2}" y="{cy:.2}" text-anchor="middle" font-size="16" font-weight="bold" fill="{}" fill-opacity="0.55">{name}</text>"#,
            quadrant_color(q)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="12" fill="{}" fill-opacity="0.55">{sub}</text>"#,
            cy + 18.0,
            quadrant_color(q)
        );
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="axes" stroke="black" stroke-width="1.5">"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/>"#);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{left}" y2="{top}"/>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="ticks" font-size="11">"#);
    for v in xa.ticks(5) {
        let x = xa.px(v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, bottom + 18.0, tick_label(v));
    }
    for v in ya.ticks(5) {
        let y = ya.px(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/>"#, left - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 8.0, y + 4.0, tick_label(v));
    }
    let _ = writeln!(s, "</g>");
    let scale_note = if opts.log_axes { " (symlog)" } else { "" };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">Absolute growth (G_abs){scale_note}</text>"#,
        (left + right) / 2.0,
        h - 25.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {:.2})">Relative growth (G_rel){scale_note}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0
    );

    let _ = writeln!(s, r#"<g class="thresholds" stroke="black" stroke-width="1.5" stroke-dasharray="6 4">"#);
    let _ = writeln!(s, r#"<line class="tau-abs" x1="{tx:.2}" y1="{top}" x2="{tx:.2}" y2="{bottom}"/>"#);
    let _ = writeln!(s, r#"<line class="tau-rel" x1="{left}" y1="{ty:.2}" x2="{right}" y2="{ty:.2}"/>"#);
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="points">"#);
    for (x, y, r) in &pts {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.8"><title>{} ({}): G_abs={x}, G_rel={y}</title></circle>"#,
            xa.px(*x),
            ya.px(*y),
            quadrant_color(r.quadrant),
            escape(&r.label),
            r.skill_id
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    s
}

/// Inputs to [`render_summary`]; absent parts are skipped.
#[derive(Default)]
pub struct SummaryInputs<'a> {
    pub shares: Option<&'a ShareReport>,
    pub gaps: &'a [PeriodId],
    pub evaluations: &'a [EvalReport],
    pub classification: Option<&'a Classification>,
}

/// Markdown summary of a run.
pub fn render_summary(inp: &SummaryInputs<'_>) -> String {
    let mut s = String::from("# Run summary\n");
    if !inp.gaps.is_empty() {
        let list: Vec<String> = inp.gaps.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            s,
            "\n## Period gaps\n\nNo observations for {}. These months were inserted with zero counts so \
             that forecast horizons count calendar months.",
            list.join(", ")
        );
    }
    if let Some(sh) = inp.shares {
        let _ = writeln!(s, "\n## Monthly green share\n\n| Month | Green skills | Total skills | Percentage |\n|---|---:|---:|---:|");
        for r in &sh.rows {
            let _ = writeln!(s, "| {} | {} | {} | {:.2}% |", r.period, r.green, r.total, round_half_up(r.percentage, 2));
        }
        let _ = writeln!(
            s,
            "| Total | {} | {} | {:.2}% |\n\nMean of monthly shares: {:.2}%.",
            sh.green_total,
            sh.total,
            round_half_up(sh.weighted_share_pct, 2),
            round_half_up(sh.mean_share_pct, 2)
        );
    }
    if !inp.evaluations.is_empty() {
        let _ = writeln!(
            s,
            "\n## Forecast evaluation\n\n| Family | Model | k | h | MAE | RMSE | sMAPE | rRMSE |\n|---|---|---:|---:|---:|---:|---:|---:|"
        );
        for r in inp.evaluations {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {:.3e} | {:.3e} | {:.2} | {:.4} |",
                r.family, r.model, r.seq_len, r.pred_len, m.mae, m.rmse, m.smape, m.rrmse
            );
        }
        let _ = writeln!(s, "\n{}", crate::forecast::METRIC_CONVENTIONS);
    }
    if let Some(c) = inp.classification {
        let _ = writeln!(
            s,
            "\n## Quadrants\n\ntau_abs = {:e}, tau_rel = {:.4} (quantile {}).\n\n| Quadrant | Skills |\n|---|---:|",
            c.thresholds.tau_abs, c.thresholds.tau_rel, c.thresholds.quantile
        );
        for (q, n) in c.counts() {
            let _ = writeln!(s, "| {q} | {n} |");
        }
        let undefined = c.records.iter().filter(|r| r.metrics.g_rel.is_none()).count();
        if undefined > 0 {
            let _ = writeln!(s, "\n{undefined} skill(s) had zero history and were marked Declining (undefined_relative).");
        }
    }
    s
}

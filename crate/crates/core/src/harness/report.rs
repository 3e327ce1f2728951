//! Records CSV, per-level summary JSON and SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use super::{EvalRecord, Method, TargetFailure};
use crate::error::{Error, Result};
use crate::json::{format_f64, to_canonical_string};
use crate::numeric::compensated_sum;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    /// Recorded in the summary.
    pub seed: u64,
    /// Write measured wall times; otherwise `wall_ms` is 0 so reruns stay
    /// byte-identical.
    pub include_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub kl_plus_chart: PathBuf,
    pub kl_minus_chart: PathBuf,
}

pub fn records_csv(records: &[EvalRecord], include_timing: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["target", "task", "m", "method", "n", "kl_plus", "kl_minus", "wall_ms"])
        .map_err(csv_err)?;
    for r in records {
        let wall = if include_timing { format!("{:.3}", r.wall_ms) } else { "0".to_string() };
        w.write_record([
            r.target.clone(),
            r.task.to_string(),
            r.m.to_string(),
            r.method.to_string(),
            r.n.to_string(),
            format_f64(r.kl_plus),
            format_f64(r.kl_minus),
            wall,
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(std::io::Error::other(e)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub level: usize,
    pub mean_kl_plus: f64,
    pub std_kl_plus: f64,
    pub mean_kl_minus: f64,
    pub std_kl_minus: f64,
    pub count: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation per `(method, level)`, ordered by
/// method then level.
pub fn summarize(records: &[EvalRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Method, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.method, r.level)).or_default();
        g.0.push(r.kl_plus);
        g.1.push(r.kl_minus);
    }
    groups
        .into_iter()
        .map(|((method, level), (plus, minus))| {
            let (mean_kl_plus, std_kl_plus) = mean_std(&plus);
            let (mean_kl_minus, std_kl_minus) = mean_std(&minus);
            SummaryRow {
                method,
                level,
                mean_kl_plus,
                std_kl_plus,
                mean_kl_minus,
                std_kl_minus,
                count: plus.len(),
            }
        })
        .collect()
}

fn num(x: f64) -> Value {
    crate::json::float(x).unwrap_or(Value::Null)
}

pub fn summary_json(rows: &[SummaryRow], failures: &[TargetFailure], seed: u64) -> Value {
    let mut methods: Map<String, Value> = Map::new();
    for r in rows {
        let entry = methods
            .entry(r.method.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        if let Value::Object(levels) = entry {
            levels.insert(
                r.level.to_string(),
                json!({
                    "mean_kl_plus": num(r.mean_kl_plus),
                    "std_kl_plus": num(r.std_kl_plus),
                    "mean_kl_minus": num(r.mean_kl_minus),
                    "std_kl_minus": num(r.std_kl_minus),
                    "count": r.count,
                }),
            );
        }
    }
    let failures: Vec<Value> = failures
        .iter()
        .map(|f| {
            json!({
                "target": f.target,
                "method": f.method.map(|m| m.to_string()),
                "n": f.n,
                "message": f.message,
            })
        })
        .collect();
    json!({ "seed": seed, "methods": methods, "failures": failures })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    KlPlus,
    KlMinus,
}

impl Metric {
    fn label(self) -> &'static str {
        match self {
            Metric::KlPlus => "mean KL+",
            Metric::KlMinus => "mean KL-",
        }
    }

    fn pick(self, r: &SummaryRow) -> f64 {
        match self {
            Metric::KlPlus => r.mean_kl_plus,
            Metric::KlMinus => r.mean_kl_minus,
        }
    }
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// 800×500 line chart of a metric's mean against the budget level, one
/// polyline per method.
pub fn svg_chart(rows: &[SummaryRow], metric: Metric) -> String {
    let mut series: BTreeMap<Method, Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        series.entry(r.method).or_default().push((r.level, metric.pick(r)));
    }
    let max_level = rows.iter().map(|r| r.level).max().unwrap_or(1).max(2);
    let max_y = rows.iter().map(|r| metric.pick(r)).fold(0.0_f64, f64::max);
    let max_y = if max_y > 0.0 { max_y * 1.05 } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |level: usize| LEFT + (level - 1) as f64 / (max_level - 1) as f64 * plot_w;
    let sy = |v: f64| TOP + plot_h - v / max_y * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="500" viewBox="0 0 800 500" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="800" height="500" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#, TOP + plot_h);
    for level in 1..=max_level {
        let x = sx(level);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{level}</text>"#,
            TOP + plot_h + 18.0
        );
    }
    for k in 0..=4 {
        let v = max_y * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3e}</text>"#,
            LEFT - 6.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">budget level</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0:.2}" text-anchor="middle" transform="rotate(-90 20 {0:.2})">{1}</text>"#,
        TOP + plot_h / 2.0,
        metric.label()
    );
    for (i, (method, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = points.iter().map(|&(l, v)| format!("{:.2},{:.2}", sx(l), sy(v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 20.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{method}</text>"#, lx + 30.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `records.csv`, `summary.json`, `kl_plus.svg` and `kl_minus.svg`
/// into `out`, creating it if needed.
pub fn emit_report(records: &[EvalRecord], failures: &[TargetFailure], opts: &ReportOptions, out: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(out)?;
    let files = ReportFiles {
        records: out.join("records.csv"),
        summary: out.join("summary.json"),
        kl_plus_chart: out.join("kl_plus.svg"),
        kl_minus_chart: out.join("kl_minus.svg"),
    };
    let rows = summarize(records);
    fs::write(&files.records, records_csv(records, opts.include_timing)?)?;
    fs::write(&files.summary, to_canonical_string(&summary_json(&rows, failures, opts.seed)))?;
    fs::write(&files.kl_plus_chart, svg_chart(&rows, Metric::KlPlus))?;
    fs::write(&files.kl_minus_chart, svg_chart(&rows, Metric::KlMinus))?;
    Ok(files)
}

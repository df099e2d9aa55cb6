use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

/// One row of a curves CSV as written by `train`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub env_step: u64,
    pub steps_survived: f64,
    pub cost: f64,
    pub islands: f64,
    pub unsupplied_load: f64,
    pub broken_lines: f64,
    pub total_reward: f64,
}

/// `(file stem, title, accessor)` of every plotted metric.
pub const METRICS: [(&str, &str, fn(&CurveRow) -> f64); 5] = [
    ("unsupplied_load", "Average unsupplied load", |r| r.unsupplied_load),
    ("islands", "Average number of islands", |r| r.islands),
    ("cost", "Average cost per time step", |r| r.cost),
    ("broken_lines", "Average disconnected lines", |r| r.broken_lines),
    ("total_reward", "Episode reward", |r| r.total_reward),
];

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read curves {}: {e}", path.display())))?;
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<CurveRow>, _>>()
        .map_err(|e| CliError::Config(format!("malformed curves {}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Config(format!("no data in {}", path.display())));
    }
    Ok(rows)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of `(x, y)` points as a standalone SVG document.
pub fn line_chart(title: &str, x_label: &str, points: &[(f64, f64)]) -> String {
    let (x0, x1) = span(points.iter().map(|p| p.0));
    let (y0, y1) = span(points.iter().map(|p| p.1));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="#888"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 20.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#888"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let pts: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f6fb4" stroke-width="1.5" points="{}"/>"##,
        pts.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

/// Writes one SVG per metric into `out`, returning the paths.
pub fn plot_curves(rows: &[CurveRow], out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if rows.is_empty() {
        return Err(CliError::Config("no data".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out.display())))?;
    let mut written = Vec::new();
    for (stem, title, get) in METRICS {
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.episode as f64, get(r))).collect();
        let path = out.join(format!("{stem}.svg"));
        std::fs::write(&path, line_chart(title, "episode", &points))
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use treedyn::Evidence;

use crate::config::FORMAT_VERSION;
use crate::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub name: String,
    pub value: Value,
    pub evidence: Evidence,
}

impl Verdict {
    pub fn new(name: impl Into<String>, value: impl Serialize, evidence: Evidence) -> Self {
        Verdict {
            name: name.into(),
            value: serde_json::to_value(value).expect("serializable verdict"),
            evidence,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub verdicts: Vec<Verdict>,
    pub result: Value,
    /// `(file name, contents)`.
    pub artifacts: Vec<(String, String)>,
    /// Some checked property failed.
    pub negative: bool,
}

impl Outcome {
    pub fn csv(&mut self, name: &str, body: &str) {
        self.artifacts.push((name.into(), format!("# format_version: {FORMAT_VERSION}\n{body}")));
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    format_version: u32,
    tool_version: &'a str,
    operation: &'a str,
    config: &'a Value,
    verdicts: &'a [Verdict],
    result: &'a Value,
    artifacts: Vec<&'a str>,
    content_hash: String,
}

/// Report JSON with its content hash; wall time is kept out of it so that
/// repeated runs are byte-identical.
pub fn render_report(operation: &str, config: &Value, outcome: &Outcome) -> String {
    let mut report = RunReport {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        operation,
        config,
        verdicts: &outcome.verdicts,
        result: &outcome.result,
        artifacts: outcome.artifacts.iter().map(|(n, _)| n.as_str()).collect(),
        content_hash: String::new(),
    };
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&report).expect("serializable report"));
    for (name, body) in &outcome.artifacts {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(body.as_bytes());
    }
    report.content_hash = format!("sha256:{:x}", h.finalize());
    let mut s = serde_json::to_string_pretty(&report).expect("serializable report");
    s.push('\n');
    s
}

pub fn write_outputs(dir: &Path, report: &str, outcome: &Outcome, wall: Duration) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Other(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, body) in &outcome.artifacts {
        std::fs::write(dir.join(name), body).map_err(io)?;
    }
    std::fs::write(dir.join("report.json"), report).map_err(io)?;
    let timing = json!({"format_version": FORMAT_VERSION, "wall_time_s": wall.as_secs_f64()});
    std::fs::write(dir.join("timing.json"), format!("{timing:#}\n")).map_err(io)?;
    Ok(())
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// A plain line chart; non-finite points are dropped.
pub fn line_plot(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, p)| p.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let fold = |f: fn(&(f64, f64)) -> f64| {
        pts.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let (mut x0, mut x1) = fold(|p| p.0);
    let (mut y0, mut y1) = fold(|p| p.1);
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" data-format-version=\"{FORMAT_VERSION}\">\n"
    );
    s.push_str(&format!("<!-- format_version: {FORMAT_VERSION} -->\n"));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        escape(title)
    ));
    s.push_str(&format!(
        "<path d=\"M{m} {m} V{} H{}\" fill=\"none\" stroke=\"black\"/>\n",
        h - m,
        w - m
    ));
    for (v, anchor, x, y) in [
        (y1, "end", m - 4.0, m + 4.0),
        (y0, "end", m - 4.0, h - m),
        (x0, "middle", m, h - m + 16.0),
        (x1, "middle", w - m, h - m + 16.0),
    ] {
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"{anchor}\">{}</text>\n",
            fmt_num(v)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        h - 12.0,
        escape(x_label)
    ));
    for (i, (label, p)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = p
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            coords.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            w - m - 150.0,
            m + 14.0 * i as f64,
            escape(label)
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e5) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

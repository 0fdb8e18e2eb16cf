//! Metrics table and bar charts of accuracy against part count.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::model::{EvalReport, PartCountMetrics};

/// How far sequence accuracy departs from non-increasing in part count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    /// (smaller count, larger count, rise in percentage points).
    pub inversions: Vec<(usize, usize, f64)>,
    /// At most one inversion, of at most `tolerance_points`.
    pub holds: bool,
}

pub fn seq_acc_trend(by_count: &BTreeMap<usize, PartCountMetrics>, tolerance_points: f64) -> TrendCheck {
    let pts: Vec<(usize, f64)> = by_count
        .iter()
        .filter(|(_, m)| m.blueprints > 0)
        .map(|(&n, m)| (n, 100.0 * m.seq_acc))
        .collect();
    let inversions: Vec<(usize, usize, f64)> = pts
        .windows(2)
        .filter(|w| w[1].1 > w[0].1)
        .map(|w| (w[0].0, w[1].0, w[1].1 - w[0].1))
        .collect();
    let holds = inversions.len() <= 1 && inversions.iter().all(|i| i.2 <= tolerance_points + 1e-9);
    TrendCheck { inversions, holds }
}

pub fn metrics_table(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| parts | samples | 1-Acc | 1-Acc random | blueprints | Seq-Acc | Seq-Acc random |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|");
    let pct = |v: f64| format!("{:.1}%", 100.0 * v);
    for (n, m) in &report.by_part_count {
        let _ = writeln!(
            s,
            "| {n} | {} | {} | {} | {} | {} | {} |",
            m.samples,
            pct(m.one_step_acc),
            pct(m.one_step_baseline),
            m.blueprints,
            pct(m.seq_acc),
            pct(m.seq_baseline)
        );
    }
    let _ = writeln!(
        s,
        "| all | {} | {} | {} | {} | {} | {} |",
        report.samples,
        pct(report.one_step_acc),
        pct(report.one_step_baseline),
        report.blueprints,
        pct(report.seq_acc),
        pct(report.seq_baseline)
    );
    let _ = writeln!(s, "\nMean full-sequence inference time: {:.1} ms", report.mean_inference_ms);
    s
}

fn chart(out: &mut String, x0: f64, title: &str, bars: &[(usize, f64, f64)]) {
    let (w, h, top, left) = (360.0, 220.0, 40.0, 40.0);
    let _ = writeln!(out, r#"<g transform="translate({x0},0)">"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{title}</text>"#, left + w / 2.0);
    for k in 0..=4 {
        let y = top + h - h * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<line x1=\"{left}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{}%</text>",
            left + w,
            left - 4.0,
            y + 3.0,
            25 * k
        );
    }
    let slot = w / bars.len().max(1) as f64;
    for (i, &(n, model, random)) in bars.iter().enumerate() {
        let x = left + slot * i as f64 + slot * 0.15;
        let bw = slot * 0.35;
        for (j, (v, fill)) in [(model, "#3b6ea5"), (random, "#bbbbbb")].into_iter().enumerate() {
            let bh = h * v.clamp(0.0, 1.0);
            let _ = writeln!(
                out,
                r#"<rect x="{:.1}" y="{:.1}" width="{bw:.1}" height="{bh:.1}" fill="{fill}"/>"#,
                x + j as f64 * bw,
                top + h - bh
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{:.0}</text>"#,
            x + bw / 2.0,
            top + h - h * model.clamp(0.0, 1.0) - 3.0,
            100.0 * model
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-size="12">{n}</text>"#,
            x + bw,
            top + h + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">parts</text></g>"#,
        left + w / 2.0,
        top + h + 34.0
    );
}

/// Two bar charts (1-Acc and Seq-Acc per part count, model against the
/// random baseline) as a standalone SVG document.
pub fn report_svg(report: &EvalReport) -> String {
    let one: Vec<_> = report
        .by_part_count
        .iter()
        .filter(|(_, m)| m.samples > 0)
        .map(|(&n, m)| (n, m.one_step_acc, m.one_step_baseline))
        .collect();
    let seq: Vec<_> = report
        .by_part_count
        .iter()
        .filter(|(_, m)| m.blueprints > 0)
        .map(|(&n, m)| (n, m.seq_acc, m.seq_baseline))
        .collect();
    let mut s = String::from(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"880\" height=\"320\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
    );
    chart(&mut s, 10.0, "1-Acc by part count", &one);
    chart(&mut s, 450.0, "Seq-Acc by part count", &seq);
    s.push_str(
        "<rect x=\"330\" y=\"300\" width=\"10\" height=\"10\" fill=\"#3b6ea5\"/><text x=\"344\" y=\"309\" font-size=\"11\">model</text>\n\
         <rect x=\"400\" y=\"300\" width=\"10\" height=\"10\" fill=\"#bbbbbb\"/><text x=\"414\" y=\"309\" font-size=\"11\">uniform random</text>\n</svg>\n",
    );
    s
}

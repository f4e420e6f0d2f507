//! CSV tables and hand-written SVG charts.
//!
//! Floats in CSV use Rust's shortest round-trip formatting; SVG coordinates
//! are fixed to two decimals so the byte stream only depends on the data.

use std::fmt::Write as _;

use crate::harness::{ComparisonSummary, MetricsTable};

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `round,scheme,avg_loss,loss_uav_<id>...,round_latency_s,cumulative_latency_s,status`
pub fn metrics_csv(table: &MetricsTable) -> String {
    let mut out = String::from("round,scheme,avg_loss");
    for id in &table.uav_ids {
        let _ = write!(out, ",loss_uav_{id}");
    }
    out.push_str(",round_latency_s,cumulative_latency_s,status\n");
    for row in &table.rows {
        let _ = write!(out, "{},{},{}", row.round, table.scheme.as_str(), row.avg_loss);
        for l in &row.losses {
            let _ = write!(out, ",{}", cell(*l));
        }
        let _ = writeln!(
            out,
            ",{},{},{}",
            row.round_latency_s,
            row.cumulative_latency_s,
            row.status.as_str()
        );
    }
    out
}

pub const COMPARE_HEADER: &str = "round,avg_loss_a,avg_loss_b,cumulative_latency_a_s,cumulative_latency_b_s,avg_loss_gap,max_individual_gap,latency_delta_s";

/// One line per common round. The three gap columns are filled on the final
/// line only, with `a - b` for the signed ones.
pub fn compare_csv(summary: &ComparisonSummary) -> String {
    let mut out = String::from(COMPARE_HEADER);
    out.push('\n');
    let n = summary.points.len();
    for (k, p) in summary.points.iter().enumerate() {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            p.round, p.avg_loss_a, p.avg_loss_b, p.cumulative_latency_a_s, p.cumulative_latency_b_s
        );
        if k + 1 == n {
            let _ = writeln!(
                out,
                ",{},{},{}",
                summary.avg_loss_gap, summary.max_individual_gap, summary.latency_delta_s
            );
        } else {
            out.push_str(",,,\n");
        }
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + (W - LEFT - RIGHT) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + (H - TOP - BOTTOM) / 2.0,
        TOP + (H - TOP - BOTTOM) / 2.0,
        escape(y_label)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn padded(lo: f64, hi: f64) -> (f64, f64) {
        if !(lo.is_finite() && hi.is_finite()) {
            return (0.0, 1.0);
        }
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    }

    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone, y_from_zero: bool) -> Self {
        let fold = |it: &mut dyn Iterator<Item = f64>| {
            it.filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
        };
        let (x0, x1) = Scale::padded(fold(&mut xs.clone()).0, fold(&mut xs.clone()).1);
        let (mut ylo, yhi) = fold(&mut ys.clone());
        if y_from_zero {
            ylo = ylo.min(0.0);
        }
        let (y0, y1) = Scale::padded(ylo, yhi);
        Scale { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn ticks(out: &mut String, s: &Scale) {
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = s.x0 + f * (s.x1 - s.x0);
        let yv = s.y0 + f * (s.y1 - s.y0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            s.x(xv),
            H - BOTTOM + 16.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            s.y(yv) + 4.0,
            tick_label(yv)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            W - RIGHT,
            y = s.y(yv)
        );
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (k, name) in names.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * k as f64;
        let x = W - RIGHT - 150.0;
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="12" height="4" fill="{color}"/>"#,
            y - 4.0
        );
        let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 18.0, escape(name));
    }
}

/// Line chart of one or more series over a shared axis.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>], y_from_zero: bool) -> String {
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label);
    let scale = Scale::new(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
        y_from_zero,
    );
    ticks(&mut out, &scale);
    for (k, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", scale.x(x), scale.y(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            PALETTE[k % PALETTE.len()],
            pts.join(" ")
        );
    }
    legend(&mut out, &series.iter().map(|s| s.name).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per category, one bar per series.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[(&str, Vec<Option<f64>>)]) -> String {
    let mut out = String::new();
    frame(&mut out, title, "UAV", y_label);
    let scale = Scale::new(
        [0.0, categories.len() as f64].into_iter(),
        series
            .iter()
            .flat_map(|s| s.1.iter().flatten().copied())
            .collect::<Vec<_>>()
            .into_iter(),
        true,
    );
    ticks_y_only(&mut out, &scale);
    let group = (W - LEFT - RIGHT) / categories.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for (c, name) in categories.iter().enumerate() {
        let gx = LEFT + group * c as f64 + group * 0.1;
        for (k, (_, values)) in series.iter().enumerate() {
            let Some(v) = values.get(c).copied().flatten() else {
                continue;
            };
            let y = scale.y(v);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{y:.2}" width="{bar:.2}" height="{:.2}" fill="{}"/>"#,
                gx + bar * k as f64,
                (scale.y(scale.y0.max(0.0)) - y).max(0.0),
                PALETTE[k % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + group * (c as f64 + 0.5),
            H - BOTTOM + 16.0,
            escape(name)
        );
    }
    legend(&mut out, &series.iter().map(|s| s.0).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

fn ticks_y_only(out: &mut String, s: &Scale) {
    for k in 0..=4 {
        let yv = s.y0 + k as f64 / 4.0 * (s.y1 - s.y0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            s.y(yv) + 4.0,
            tick_label(yv)
        );
    }
}

fn loss_series(table: &MetricsTable) -> Vec<(f64, f64)> {
    std::iter::once((0.0, table.initial_avg_loss))
        .chain(table.rows.iter().map(|r| (r.round as f64, r.avg_loss)))
        .collect()
}

fn latency_series(table: &MetricsTable) -> Vec<(f64, f64)> {
    std::iter::once((0.0, 0.0))
        .chain(
            table
                .rows
                .iter()
                .map(|r| (r.round as f64, r.cumulative_latency_s * 1e3)),
        )
        .collect()
}

/// Average and per-UAV loss against rounds for one run.
pub fn run_loss_svg(table: &MetricsTable) -> String {
    let per_uav: Vec<(String, Vec<(f64, f64)>)> = table
        .uav_ids
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let pts = std::iter::once((0.0, table.initial_losses[k]))
                .chain(table.rows.iter().map(|r| (r.round as f64, r.losses[k])))
                .filter_map(|(x, y)| Some((x, y?)))
                .collect();
            (format!("UAV {id}"), pts)
        })
        .collect();
    let mut series = vec![Series {
        name: "average",
        points: loss_series(table),
    }];
    series.extend(per_uav.iter().map(|(n, p)| Series {
        name: n,
        points: p.clone(),
    }));
    line_chart(
        &format!("Loss ({})", table.scheme.as_str()),
        "communication round",
        "cross-entropy loss",
        &series,
        true,
    )
}

pub fn run_latency_svg(table: &MetricsTable) -> String {
    line_chart(
        &format!("Training latency ({})", table.scheme.as_str()),
        "communication round",
        "cumulative latency (ms)",
        &[Series {
            name: table.scheme.as_str(),
            points: latency_series(table),
        }],
        true,
    )
}

pub fn compare_loss_svg(a: &MetricsTable, b: &MetricsTable) -> String {
    line_chart(
        "Average loss",
        "communication round",
        "cross-entropy loss",
        &[
            Series {
                name: a.scheme.as_str(),
                points: loss_series(a),
            },
            Series {
                name: b.scheme.as_str(),
                points: loss_series(b),
            },
        ],
        true,
    )
}

pub fn compare_individual_svg(summary: &ComparisonSummary) -> String {
    let cats: Vec<String> = summary.uav_ids.iter().map(|id| format!("#{id}")).collect();
    bar_chart(
        "Final individual loss",
        "cross-entropy loss",
        &cats,
        &[
            (summary.scheme_a.as_str(), summary.final_losses_a.clone()),
            (summary.scheme_b.as_str(), summary.final_losses_b.clone()),
        ],
    )
}

pub fn compare_latency_svg(a: &MetricsTable, b: &MetricsTable) -> String {
    line_chart(
        "Training latency",
        "communication round",
        "cumulative latency (ms)",
        &[
            Series {
                name: a.scheme.as_str(),
                points: latency_series(a),
            },
            Series {
                name: b.scheme.as_str(),
                points: latency_series(b),
            },
        ],
        true,
    )
}

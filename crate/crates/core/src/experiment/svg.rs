//! Standalone SVG plot of `d1` against training size.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Result};

use super::config::Setup;
use super::run::GridTable;

/// One plotted point: mean with a symmetric error bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub n: f64,
    pub mean: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// One curve per setup from the successful cells of a grid, setups in
/// table order.
pub fn grid_curves(table: &GridTable) -> Vec<Curve> {
    Setup::ALL
        .iter()
        .filter_map(|&setup| {
            let mut points: Vec<CurvePoint> = table
                .cells
                .iter()
                .filter(|c| c.setup == setup)
                .filter_map(|c| {
                    let r = c.report.as_ref().ok()?;
                    Some(CurvePoint {
                        n: c.n_training as f64,
                        mean: r.mean_d1?,
                        err: r.std_d1?,
                    })
                })
                .collect();
            points.sort_by(|a, b| a.n.total_cmp(&b.n));
            (!points.is_empty()).then(|| Curve {
                label: setup.name().to_string(),
                points,
            })
        })
        .collect()
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

/// Renders the curves with a log-scaled x axis and linear y axis.
pub fn render_svg(curves: &[Curve], x_label: &str, y_label: &str) -> Result<String> {
    let all: Vec<&CurvePoint> = curves.iter().flat_map(|c| &c.points).collect();
    if all.is_empty() {
        return Err(invalid("cannot plot an empty table"));
    }
    if all.iter().any(|p| !(p.n > 0.0 && p.mean.is_finite() && p.err.is_finite())) {
        return Err(invalid("plot points need positive N and finite values"));
    }
    let lx: Vec<f64> = all.iter().map(|p| p.n.log10()).collect();
    let (mut x0, mut x1) = (lx.iter().cloned().fold(f64::INFINITY, f64::min), lx.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let mut y0 = all.iter().map(|p| p.mean - p.err.abs()).fold(f64::INFINITY, f64::min).min(0.0);
    let mut y1 = all.iter().map(|p| p.mean + p.err.abs()).fold(f64::NEG_INFINITY, f64::max);
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    } else {
        let pad = 0.05 * (x1 - x0);
        x0 -= pad;
        x1 += pad;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    y1 += 0.05 * (y1 - y0);
    y0 = y0.min(0.0);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |n: f64| LEFT + (n.log10() - x0) / (x1 - x0) * pw;
    let sy = |v: f64| TOP + (y1 - v) / (y1 - y0) * ph;

    let mut s = String::new();
    let w = &mut s;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();

    let (dlo, dhi) = (x0.ceil() as i32, x1.floor() as i32);
    for k in dlo..=dhi {
        let x = sx(10f64.powi(k));
        writeln!(w, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0).unwrap();
        writeln!(w, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_num(10f64.powi(k))).unwrap();
    }
    for v in nice_ticks(y0, y1) {
        let y = sy(v);
        writeln!(w, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, fmt_num(v)).unwrap();
    }
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#, LEFT + pw / 2.0, HEIGHT - 15.0).unwrap();
    writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{y_label}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    )
    .unwrap();

    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        writeln!(w, r#"<g class="curve" stroke="{color}" fill="{color}">"#).unwrap();
        if c.points.len() > 1 {
            let pts: Vec<String> = c.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.n), sy(p.mean))).collect();
            writeln!(w, r#"<polyline fill="none" stroke-width="2" points="{}"/>"#, pts.join(" ")).unwrap();
        }
        for p in &c.points {
            let (x, e) = (sx(p.n), p.err.abs());
            writeln!(w, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}"/>"#, sy(p.mean - e), sy(p.mean + e)).unwrap();
            writeln!(w, r#"<circle cx="{x:.2}" cy="{:.2}" r="3"/>"#, sy(p.mean)).unwrap();
        }
        writeln!(w, "</g>").unwrap();
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(w, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0).unwrap();
        writeln!(w, r#"<text class="legend" x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&c.label)).unwrap();
    }
    writeln!(w, "</svg>").unwrap();
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the grid plot: one line with error bars per setup.
pub fn emit_svg(table: &GridTable, path: &Path) -> Result<()> {
    let svg = render_svg(&grid_curves(table), "training samples N", "d1")?;
    std::fs::write(path, svg)?;
    Ok(())
}

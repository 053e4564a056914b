//! SVG rendering of 2-D confidence ellipses: one square panel per method.

use std::fmt::Write as _;

use crate::error::{CliError, CliResult};
use crate::estimate::EstimateReport;

pub const BOUNDARY_POINTS: usize = 512;

const PANEL: f64 = 360.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const GAP: f64 = 90.0;

/// Component 1 dotted, 2 dashed, 3 solid, then dash-dot.
const DASHES: [Option<&str>; 4] = [Some("1.5,3"), Some("7,4"), None, Some("7,3,1.5,3")];

/// A closed path in data coordinates.
#[derive(Debug, Clone)]
struct Curve {
    component: usize,
    points: Vec<(f64, f64)>,
}

struct Panel {
    title: String,
    curves: Vec<Curve>,
}

#[derive(Debug, Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        let pad = if hi > lo {
            0.06 * (hi - lo)
        } else {
            0.5 * lo.abs().max(1.0)
        };
        Range {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

/// Four to seven round tick values inside the range.
fn ticks(r: Range) -> Vec<f64> {
    let span = r.hi - r.lo;
    let mag = 10f64.powf((span / 5.0).log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * mag)
        .find(|s| span / s <= 7.0)
        .unwrap_or(10.0 * mag);
    let first = (r.lo / step).ceil() as i64;
    let last = (r.hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn panels(report: &EstimateReport) -> CliResult<Vec<Panel>> {
    if report.d != 2 {
        return Err(CliError::UnsupportedDim(format!(
            "ellipse plots need two coefficients per component, this estimate has {}",
            report.d
        )));
    }
    report
        .methods
        .iter()
        .map(|m| {
            let curves = m
                .components
                .iter()
                .map(|c| {
                    let e = c.ellipsoid.to_ellipsoid(m.method)?;
                    let points = e
                        .boundary_points(BOUNDARY_POINTS)?
                        .into_iter()
                        .map(|p| (p[0], p[1]))
                        .collect();
                    Ok(Curve {
                        component: c.component,
                        points,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(Panel {
                title: m.method.to_string(),
                curves,
            })
        })
        .collect()
}

/// Renders every method of `report` side by side.
pub fn render(report: &EstimateReport) -> CliResult<String> {
    let panels = panels(report)?;
    if panels.is_empty() {
        return Err(CliError::Input("estimate file lists no methods".into()));
    }
    let count = panels.len() as f64;
    let width = MARGIN_LEFT + count * PANEL + (count - 1.0) * GAP + 30.0;
    let height = MARGIN_TOP + PANEL + MARGIN_BOTTOM;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<g font-family="sans-serif" font-size="12" fill="black">"#
    );

    for (i, panel) in panels.iter().enumerate() {
        let x0 = MARGIN_LEFT + i as f64 * (PANEL + GAP);
        let y0 = MARGIN_TOP;
        draw_panel(&mut svg, panel, x0, y0);
    }
    let _ = writeln!(svg, "</g>\n</svg>");
    Ok(svg)
}

fn draw_panel(svg: &mut String, panel: &Panel, x0: f64, y0: f64) {
    let pts = || panel.curves.iter().flat_map(|c| c.points.iter());
    let xr = Range::of(pts().map(|p| p.0));
    let yr = Range::of(pts().map(|p| p.1));
    let (x1, y1) = (x0 + PANEL, y0 + PANEL);
    let sx = |v: f64| xr.map(v, x0, x1);
    // SVG y grows downward.
    let sy = |v: f64| yr.map(v, y1, y0);

    let _ = writeln!(svg, r#"<g class="panel" data-method="{}">"#, panel.title);
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{y0}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        x0 + PANEL / 2.0,
        y0 - 14.0,
        panel.title
    );
    for t in ticks(xr) {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            y1 + 5.0,
            y1 + 19.0,
            tick_label(t)
        );
    }
    for t in ticks(yr) {
        let y = sy(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">b₀</text>"#,
        x0 + PANEL / 2.0,
        y1 + 42.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{lx}" y="{ly}" text-anchor="middle" font-size="14" transform="rotate(-90 {lx} {ly})">b₁</text>"#,
        lx = x0 - 50.0,
        ly = y0 + PANEL / 2.0
    );

    for curve in &panel.curves {
        let mut d = String::new();
        for (j, &(x, y)) in curve.points.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.3},{:.3} ",
                if j == 0 { "M" } else { "L" },
                sx(x),
                sy(y)
            );
        }
        d.push('Z');
        let dash = DASHES[(curve.component - 1) % DASHES.len()]
            .map(|a| format!(r#" stroke-dasharray="{a}""#))
            .unwrap_or_default();
        let _ = writeln!(
            svg,
            r#"<path class="ellipse" data-component="{}" d="{d}" fill="none" stroke="black" stroke-width="1.5"{dash}/>"#,
            curve.component
        );
    }
    let _ = writeln!(svg, "</g>");
}

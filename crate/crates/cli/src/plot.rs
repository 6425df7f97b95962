//! Minimal deterministic SVG line plots. Coordinates are printed with fixed
//! precision so identical inputs give identical bytes.

use std::fmt::Write;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Line,
    LogLog,
    SemiLogX,
    SemiLogY,
}

impl PlotKind {
    fn log_x(self) -> bool {
        matches!(self, Self::LogLog | Self::SemiLogX)
    }

    fn log_y(self) -> bool {
        matches!(self, Self::LogLog | Self::SemiLogY)
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub kind: PlotKind,
    pub series: Vec<Series>,
    /// Dashed horizontal reference lines `(y, label)`.
    pub hlines: Vec<(f64, String)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn to_axis(v: f64, log: bool) -> Option<f64> {
    if !v.is_finite() {
        return None;
    }
    if log {
        (v > 0.0).then(|| v.log10())
    } else {
        Some(v)
    }
}

fn span(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return None;
    }
    if hi - lo < 1e-12 * lo.abs().max(1.0) {
        let pad = 0.5 * lo.abs().max(1.0);
        return Some((lo - pad, hi + pad));
    }
    let pad = 0.04 * (hi - lo);
    Some((lo - pad, hi + pad))
}

/// Tick positions in axis units with their labels.
fn ticks(lo: f64, hi: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
        let stride = ((b - a) / 8 + 1).max(1);
        return (a..=b)
            .filter(|k| (k - a) % stride == 0)
            .map(|k| (k as f64, format!("1e{k}")))
            .collect();
    }
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last)
        .map(|k| {
            let v = k as f64 * step;
            let v = if v.abs() < 1e-12 * step { 0.0 } else { v };
            (v, format!("{v:.digits$}"))
        })
        .collect()
}

pub fn render(plot: &Plot) -> Result<String, CliError> {
    if plot.series.is_empty() {
        return Err(CliError::Plot("nothing to plot".into()));
    }
    let mut points = Vec::with_capacity(plot.series.len());
    for s in &plot.series {
        if s.x.len() != s.y.len() {
            return Err(CliError::Plot(format!(
                "series {:?}: {} x values but {} y values",
                s.name,
                s.x.len(),
                s.y.len()
            )));
        }
        if s.x.len() < 2 {
            return Err(CliError::Plot(format!(
                "series {:?} needs at least two points",
                s.name
            )));
        }
        let pts: Vec<(f64, f64)> =
            s.x.iter()
                .zip(&s.y)
                .filter_map(|(&x, &y)| {
                    Some((
                        to_axis(x, plot.kind.log_x())?,
                        to_axis(y, plot.kind.log_y())?,
                    ))
                })
                .collect();
        points.push(pts);
    }
    let hlines: Vec<(f64, &str)> = plot
        .hlines
        .iter()
        .filter_map(|(y, label)| Some((to_axis(*y, plot.kind.log_y())?, label.as_str())))
        .collect();
    let (x0, x1) = span(points.iter().flatten().map(|p| p.0))
        .ok_or_else(|| CliError::Plot("no plottable points".into()))?;
    let (y0, y1) = span(
        points
            .iter()
            .flatten()
            .map(|p| p.1)
            .chain(hlines.iter().map(|h| h.0)),
    )
    .ok_or_else(|| CliError::Plot("no plottable points".into()))?;

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&plot.title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (v, label) in ticks(x0, x1, plot.kind.log_x()) {
        let x = sx(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ccc"/>"##,
            TOP,
            TOP + ph
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 16.0,
            escape(&label)
        );
    }
    for (v, label) in ticks(y0, y1, plot.kind.log_y()) {
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ccc"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            escape(&label)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    );
    for (y, label) in &hlines {
        let py = sy(*y);
        let _ = writeln!(
            svg,
            r#"<line x1="{LEFT:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="black" stroke-dasharray="6 4"/>"#,
            LEFT + pw
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + pw + 6.0,
            py + 4.0,
            escape(label)
        );
    }
    for (k, (s, pts)) in plot.series.iter().zip(&points).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut path = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            if i > 0 {
                path.push(' ');
            }
            let _ = write!(path, "{:.2},{:.2}", sx(*x), sy(*y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>"#
        );
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            LEFT + pw + 8.0,
            LEFT + pw + 28.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + pw + 32.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

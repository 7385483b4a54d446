//! Static SVG 1.1 figures: labelled scatter plots and density heat maps.

use std::fmt::Write;

use catlgp::data_io::DensityGrid;

use crate::error::{CliError, CliResult, MAX_LEGEND_LABELS};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const LEGEND_WIDTH: f64 = 150.0;
const MARKER_RADIUS: f64 = 3.5;
const UNLABELLED: &str = "#4e79a7";
const HEAT: &str = "#08519c";

const PALETTE: [&str; MAX_LEGEND_LABELS] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
    "#1b9e77", "#7570b3",
];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Data range padded by 5%, or ±1 around a single value.
fn padded_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    let span = hi - lo;
    if span <= 1e-12 * lo.abs().max(1.0) {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo - 0.05 * span, hi + 0.05 * span)
    }
}

/// Round tick positions (multiples of 1, 2 or 5 times a power of ten) inside `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|i| i as f64 * step).collect(), decimals)
}

/// Orders labels numerically when they all parse as numbers, lexically otherwise.
fn sorted_labels(labels: &[String]) -> Vec<String> {
    let mut distinct: Vec<String> = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.iter().all(|l| l.trim().parse::<f64>().is_ok()) {
        distinct.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.total_cmp(&y).then_with(|| a.cmp(b))
        });
    }
    distinct
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Frame {
    fn new(legend: bool, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let right = MARGIN_RIGHT + if legend { LEGEND_WIDTH } else { 0.0 };
        Self {
            left: MARGIN_LEFT,
            top: MARGIN_TOP,
            width: WIDTH - MARGIN_LEFT - right,
            height: HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
            x_range,
            y_range,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x_range.0) / (self.x_range.1 - self.x_range.0) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y_range.0) / (self.y_range.1 - self.y_range.0) * self.height
    }
}

fn header(out: &mut String, title: Option<&str>) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    if let Some(t) = title {
        let _ = writeln!(out, "<title>{}</title>", escape(t));
    }
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>"
    );
    if let Some(t) = title {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
            WIDTH / 2.0,
            escape(t)
        );
    }
}

fn axes(out: &mut String, f: &Frame, x_name: &str, y_name: &str) {
    out.push_str("<g class=\"axes\" stroke=\"#333333\" fill=\"none\">\n");
    let _ = writeln!(
        out,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\"/>",
        f.left, f.top, f.width, f.height
    );
    let bottom = f.top + f.height;
    let (xt, xd) = ticks(f.x_range.0, f.x_range.1);
    for t in &xt {
        let x = f.px(*t);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{bottom:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\"/>",
            bottom + 5.0
        );
    }
    let (yt, yd) = ticks(f.y_range.0, f.y_range.1);
    for t in &yt {
        let y = f.py(*t);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\"/>",
            f.left - 5.0,
            f.left
        );
    }
    out.push_str("</g>\n<g class=\"tick-labels\" fill=\"#333333\">\n");
    for t in &xt {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{:.*}</text>",
            f.px(*t),
            bottom + 18.0,
            xd,
            t
        );
    }
    for t in &yt {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{:.*}</text>",
            f.left - 8.0,
            f.py(*t) + 4.0,
            yd,
            t
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        f.left + f.width / 2.0,
        HEIGHT - 12.0,
        escape(x_name)
    );
    let (cx, cy) = (18.0, f.top + f.height / 2.0);
    let _ = writeln!(
        out,
        "<text x=\"{cx:.2}\" y=\"{cy:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 {cx:.2} {cy:.2})\">{}</text>",
        escape(y_name)
    );
    out.push_str("</g>\n");
}

/// One `<circle>` per point, colored by `labels` when given. Legend
/// swatches are rectangles so the circle count equals the point count.
pub fn scatter(
    xs: &[f64],
    ys: &[f64],
    labels: Option<&[String]>,
    axis_names: (&str, &str),
    title: Option<&str>,
) -> CliResult<String> {
    assert_eq!(xs.len(), ys.len(), "coordinate lengths differ");
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(catlgp::Error::InvalidDataset("embedding contains non-finite coordinates".into()).into());
    }
    let legend = match labels {
        Some(l) => {
            if l.len() != xs.len() {
                return Err(catlgp::Error::DimensionMismatch {
                    expected: xs.len(),
                    found: l.len(),
                }
                .into());
            }
            let distinct = sorted_labels(l);
            if distinct.len() > MAX_LEGEND_LABELS {
                return Err(CliError::TooManyLabels { found: distinct.len() });
            }
            Some(distinct)
        }
        None => None,
    };

    let f = Frame::new(legend.is_some(), padded_range(xs), padded_range(ys));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, axis_names.0, axis_names.1);

    out.push_str("<g class=\"points\" stroke=\"#222222\" stroke-width=\"0.5\" fill-opacity=\"0.85\">\n");
    for i in 0..xs.len() {
        let color = match (&legend, labels) {
            (Some(d), Some(l)) => PALETTE[d.iter().position(|v| *v == l[i]).expect("label listed")],
            _ => UNLABELLED,
        };
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{MARKER_RADIUS}\" fill=\"{color}\"/>",
            f.px(xs[i]),
            f.py(ys[i])
        );
    }
    out.push_str("</g>\n");

    if let Some(distinct) = &legend {
        let x0 = f.left + f.width + 20.0;
        out.push_str("<g class=\"legend\">\n");
        for (i, label) in distinct.iter().enumerate() {
            let y = f.top + 10.0 + 20.0 * i as f64;
            let _ = writeln!(
                out,
                "<rect x=\"{x0:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/>",
                y - 9.0,
                PALETTE[i]
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{y:.2}\">{}</text>",
                x0 + 16.0,
                escape(label)
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// One `<rect class="cell">` per grid cell, with opacity proportional to the
/// cell's density relative to the largest cell.
pub fn heatmap(grid: &DensityGrid, title: Option<&str>) -> String {
    let f = Frame::new(false, grid.x_range, grid.y_range);
    let mut out = String::new();
    header(&mut out, title);
    let peak = grid
        .values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let (cw, ch) = (f.width / grid.nx as f64, f.height / grid.ny as f64);
    let _ = writeln!(out, "<g class=\"cells\" fill=\"{HEAT}\" stroke=\"none\">");
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let v = grid.value(ix, iy);
            let opacity = if peak > 0.0 && v.is_finite() {
                (v / peak).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let _ = writeln!(
                out,
                "<rect class=\"cell\" x=\"{:.2}\" y=\"{:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill-opacity=\"{opacity:.4}\"/>",
                f.left + ix as f64 * cw,
                f.top + f.height - (iy + 1) as f64 * ch,
            );
        }
    }
    out.push_str("</g>\n");
    axes(
        &mut out,
        &f,
        &format!("dim {}", grid.dims.0),
        &format!("dim {}", grid.dims.1),
    );
    out.push_str("</svg>\n");
    out
}

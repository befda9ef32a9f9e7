//! Minimal standalone SVG emission for accuracy curves and bars.
//! Text-only output so plots stay diffable and testable.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 45.0;

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// One labeled curve: y value per task index (x = 1-based task count).
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

/// Data range expanded by 5% padding on each side; flat data gets a fixed
/// pad so the range never collapses.
pub fn padded_range(min: f64, max: f64) -> (f64, f64) {
    let span = max - min;
    let pad = if span > 0.0 { 0.05 * span } else { 0.05 };
    (min - pad, max + pad)
}

fn data_bounds(series: &[Series]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for s in series {
        for &v in &s.values {
            min = min.min(v);
            max = max.max(v);
        }
    }
    (min, max)
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <text x=\"{}\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    )
}

fn axes(y_lo: f64, y_hi: f64, x_label: &str) -> String {
    let mut out = String::new();
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" data-role=\"y-min\">{y_lo:.4}</text>",
        x0 - 5.0,
        y0 + 4.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" data-role=\"y-max\">{y_hi:.4}</text>",
        x0 - 5.0,
        y1 + 4.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 10.0
    );
    out
}

fn legend(series: &[Series]) -> String {
    let mut out = String::new();
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let y = MARGIN_T + 14.0 * i as f64;
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            WIDTH - MARGIN_R - 150.0,
            y
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" data-role=\"legend\">{}</text>",
            WIDTH - MARGIN_R - 136.0,
            y + 9.0,
            s.label
        );
    }
    out
}

fn y_to_px(v: f64, y_lo: f64, y_hi: f64) -> f64 {
    let frac = (v - y_lo) / (y_hi - y_lo);
    (HEIGHT - MARGIN_B) - frac * (HEIGHT - MARGIN_B - MARGIN_T)
}

/// Average-accuracy trend: one polyline per method over task count 1..=T.
pub fn trend_svg(series: &[Series], title: &str) -> String {
    let (min, max) = data_bounds(series);
    let (y_lo, y_hi) = padded_range(min, max);
    let max_len = series.iter().map(|s| s.values.len()).max().unwrap_or(1);
    let mut out = header(title);
    out.push_str(&axes(y_lo, y_hi, "tasks trained"));
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut points = String::new();
        for (k, &v) in s.values.iter().enumerate() {
            let x = if max_len > 1 {
                MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) * k as f64 / (max_len - 1) as f64
            } else {
                (MARGIN_L + WIDTH - MARGIN_R) / 2.0
            };
            let _ = write!(points, "{x:.2},{:.2} ", y_to_px(v, y_lo, y_hi));
        }
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        );
    }
    out.push_str(&legend(series));
    out.push_str("</svg>\n");
    out
}

/// Just-finished-task accuracy bars, grouped per task with one bar per method.
pub fn bars_svg(series: &[Series], title: &str) -> String {
    let (min, max) = data_bounds(series);
    let (y_lo, y_hi) = padded_range(min.min(0.0), max);
    let tasks = series.iter().map(|s| s.values.len()).max().unwrap_or(1);
    let group_w = (WIDTH - MARGIN_L - MARGIN_R) / tasks as f64;
    let bar_w = (group_w * 0.8) / series.len() as f64;
    let mut out = header(title);
    out.push_str(&axes(y_lo, y_hi, "task"));
    let base = y_to_px(0.0f64.max(y_lo), y_lo, y_hi);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        for (k, &v) in s.values.iter().enumerate() {
            let x = MARGIN_L + group_w * k as f64 + group_w * 0.1 + bar_w * i as f64;
            let top = y_to_px(v, y_lo, y_hi);
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{top:.2}\" width=\"{bar_w:.2}\" height=\"{:.2}\" fill=\"{color}\"/>",
                (base - top).abs()
            );
        }
    }
    out.push_str(&legend(series));
    out.push_str("</svg>\n");
    out
}

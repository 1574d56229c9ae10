//! Dependency-free SVG line charts for smoothed learning curves.

use std::fmt::Write as _;

use crutchgait_core::harness::moving_average;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 540.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 60.0;

const SERIES_COLORS: [&str; 6] =
    ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

/// Render smoothed cumulative-return curves as one SVG chart, one polyline
/// per input series.
pub fn render_learning_curves(series: &[Series], window: usize) -> String {
    let smoothed: Vec<(String, Vec<f64>)> = series
        .iter()
        .map(|s| (s.label.clone(), moving_average(&s.values, window)))
        .collect();

    let max_len = smoothed.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, v) in &smoothed {
        for &y in v {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !y_min.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let x_max = (max_len.saturating_sub(1)).max(1) as f64;

    let px = |i: f64| MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) * i / x_max;
    let py = |y: f64| {
        HEIGHT - MARGIN_B - (HEIGHT - MARGIN_T - MARGIN_B) * (y - y_min) / (y_max - y_min)
    };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    );

    // Axes.
    let _ = write!(
        svg,
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    );

    // Ticks and labels.
    for k in 0..=5 {
        let frac = k as f64 / 5.0;
        let x = MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) * frac;
        let xv = x_max * frac;
        let _ = write!(
            svg,
            "<line x1=\"{x}\" y1=\"{b}\" x2=\"{x}\" y2=\"{b2}\" stroke=\"black\"/>\n\
             <text x=\"{x}\" y=\"{ty}\" font-size=\"12\" text-anchor=\"middle\">{xv:.0}</text>\n",
            b = HEIGHT - MARGIN_B,
            b2 = HEIGHT - MARGIN_B + 6.0,
            ty = HEIGHT - MARGIN_B + 22.0
        );
        let y = py(y_min + (y_max - y_min) * frac);
        let yv = y_min + (y_max - y_min) * frac;
        let _ = write!(
            svg,
            "<line x1=\"{l}\" y1=\"{y}\" x2=\"{l2}\" y2=\"{y}\" stroke=\"black\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" font-size=\"12\" text-anchor=\"end\">{yv:.3}</text>\n",
            l = MARGIN_L,
            l2 = MARGIN_L - 6.0,
            tx = MARGIN_L - 10.0,
            ty = y + 4.0
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{cx}\" y=\"{cy}\" font-size=\"14\" text-anchor=\"middle\">iteration</text>\n\
         <text x=\"18\" y=\"{my}\" font-size=\"14\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {my})\">average cumulative return</text>\n",
        cx = (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        cy = HEIGHT - 18.0,
        my = (MARGIN_T + HEIGHT - MARGIN_B) / 2.0
    );

    for (idx, (label, values)) in smoothed.iter().enumerate() {
        let color = SERIES_COLORS[idx % SERIES_COLORS.len()];
        let mut points = String::new();
        for (i, &y) in values.iter().enumerate() {
            let _ = write!(points, "{:.2},{:.2} ", px(i as f64), py(y));
        }
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            points.trim_end()
        );
        // Legend entry.
        let ly = MARGIN_T + 18.0 * idx as f64 + 10.0;
        let _ = write!(
            svg,
            "<line x1=\"{x1}\" y1=\"{ly}\" x2=\"{x2}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{tx}\" y=\"{ty}\" font-size=\"12\">{label}</text>\n",
            x1 = WIDTH - MARGIN_R - 160.0,
            x2 = WIDTH - MARGIN_R - 130.0,
            tx = WIDTH - MARGIN_R - 124.0,
            ty = ly + 4.0
        );
    }

    svg.push_str("</svg>\n");
    svg
}

/// Pull the `cum_reward` column out of a train_log.csv body.
pub fn parse_cum_reward_column(csv: &str) -> Result<Vec<f64>, String> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or("empty log file")?;
    let col = header
        .split(',')
        .position(|c| c == "cum_reward")
        .ok_or("log file has no cum_reward column")?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let field = line
            .split(',')
            .nth(col)
            .ok_or_else(|| format!("row {} is short", i + 2))?;
        out.push(
            field
                .parse::<f64>()
                .map_err(|e| format!("row {}: bad number {field:?}: {e}", i + 2))?,
        );
    }
    Ok(out)
}

//! Self-contained SVG line charts for result tables. No plotting runtime is
//! involved; the output is a static file with axes, a legend, and one
//! polyline per condition.

use crate::error::{Error, Result};
use crate::experiments::{aggregate_by_params, Condition, ResultsTable};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 190.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Line colors follow the paper's figures: red for the undefended
/// classifier, blue for the defended one.
const COLOR_UNDEFENDED: &str = "#d62728";
const COLOR_DEFENDED: &str = "#1f77b4";
const COLOR_CLEAN: &str = "#2ca02c";
const VARIANT_PALETTE: [&str; 6] = [
    "#1f77b4", "#17becf", "#9467bd", "#8c564b", "#e377c2", "#ff7f0e",
];

/// One plotted line.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: String,
    /// (x, y) pairs in data coordinates, sorted by x.
    pub points: Vec<(f64, f64)>,
}

/// A simple x/y line chart.
#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl LineChart {
    /// Renders and writes the chart atomically.
    pub fn write_svg(&self, path: &std::path::Path) -> Result<()> {
        crate::util::write_atomic(path, self.to_svg().as_bytes())
    }

    pub fn to_svg(&self) -> String {
        let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

        let xs: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .collect();
        let ys: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
            .collect();
        let x_min = xs.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
        let x_max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let x_span = if (x_max - x_min).abs() < 1e-12 {
            1.0
        } else {
            x_max - x_min
        };
        let y_top = if y_max <= 0.0 { 1.0 } else { y_max * 1.1 };

        let to_px = |x: f64, y: f64| -> (f64, f64) {
            (
                MARGIN_LEFT + (x - x_min) / x_span * plot_w,
                MARGIN_TOP + plot_h - y / y_top * plot_h,
            )
        };

        let mut svg = String::new();
        svg.push_str(&format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        ));
        svg.push('\n');
        svg.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        svg.push('\n');

        if !self.title.is_empty() {
            svg.push_str(&format!(
                r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16" font-weight="bold">{}</text>"#,
                MARGIN_LEFT + plot_w / 2.0,
                escape(&self.title)
            ));
            svg.push('\n');
        }

        // Axes.
        let origin = to_px(x_min, 0.0);
        let x_end = to_px(x_min + x_span, 0.0);
        let y_end = to_px(x_min, y_top);
        svg.push_str(&format!(
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
            origin.0, origin.1, x_end.0, x_end.1
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
            origin.0, origin.1, y_end.0, y_end.1
        ));
        svg.push('\n');

        // Ticks and grid.
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let x = x_min + t * x_span;
            let (px, py) = to_px(x, 0.0);
            svg.push_str(&format!(
                r#"<line x1="{px:.2}" y1="{py:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
                py + 6.0
            ));
            svg.push_str(&format!(
                r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
                py + 22.0,
                format_tick(x)
            ));
            svg.push('\n');

            let y = t * y_top;
            let (gx, gy) = to_px(x_min, y);
            svg.push_str(&format!(
                r#"<line x1="{:.2}" y1="{gy:.2}" x2="{gx:.2}" y2="{gy:.2}" stroke="black"/>"#,
                gx - 6.0
            ));
            svg.push_str(&format!(
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="12">{}</text>"#,
                gx - 10.0,
                gy + 4.0,
                format_tick(y)
            ));
            svg.push('\n');
        }

        // Axis labels.
        svg.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
            MARGIN_LEFT + plot_w / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        ));
        svg.push('\n');
        svg.push_str(&format!(
            r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="14" transform="rotate(-90 18 {})">{}</text>"#,
            MARGIN_TOP + plot_h / 2.0,
            MARGIN_TOP + plot_h / 2.0,
            escape(&self.y_label)
        ));
        svg.push('\n');

        // Series lines, markers, legend.
        for (i, series) in self.series.iter().enumerate() {
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| {
                    let (px, py) = to_px(x, y);
                    format!("{px:.2},{py:.2}")
                })
                .collect();
            svg.push_str(&format!(
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                pts.join(" "),
                series.color
            ));
            svg.push('\n');
            for &(x, y) in &series.points {
                let (px, py) = to_px(x, y);
                svg.push_str(&format!(
                    r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{}"/>"#,
                    series.color
                ));
            }
            svg.push('\n');

            let ly = MARGIN_TOP + 12.0 + i as f64 * 22.0;
            let lx = WIDTH - MARGIN_RIGHT + 16.0;
            svg.push_str(&format!(
                r#"<rect x="{lx:.2}" y="{:.2}" width="18" height="4" fill="{}"/>"#,
                ly - 2.0,
                series.color
            ));
            svg.push_str(&format!(
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
                lx + 24.0,
                ly + 4.0,
                escape(&series.label)
            ));
            svg.push('\n');
        }

        svg.push_str("</svg>\n");
        svg
    }
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn condition_color(condition: Condition) -> &'static str {
    match condition {
        Condition::Clean => COLOR_CLEAN,
        Condition::Undefended => COLOR_UNDEFENDED,
        Condition::Defended => COLOR_DEFENDED,
    }
}

/// Builds the error-versus-poison-fraction chart for a results table: mean
/// test error over splits, one line per condition. When the table holds
/// several defended parameter combinations (a sensitivity run), each one
/// becomes its own labelled line.
pub fn results_chart(table: &ResultsTable, title: &str) -> Result<LineChart> {
    if table.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot plot an empty results table".to_string(),
        ));
    }
    let summary = aggregate_by_params(table)?;

    // Distinct defended parameter combinations decide the grouping.
    let mut defended_variants: Vec<(Option<usize>, Option<u64>)> = Vec::new();
    for row in &summary {
        if row.condition == Condition::Defended {
            let key = (row.k_selected, row.eta.map(f64::to_bits));
            if !defended_variants.contains(&key) {
                defended_variants.push(key);
            }
        }
    }
    let split_defended = defended_variants.len() > 1;

    let mut series: Vec<Series> = Vec::new();
    for row in &summary {
        let (label, color) = match row.condition {
            Condition::Defended if split_defended => {
                let variant_index = defended_variants
                    .iter()
                    .position(|&(k, e)| k == row.k_selected && e == row.eta.map(f64::to_bits))
                    .expect("variant recorded above");
                let label = match (row.k_selected, row.eta) {
                    (Some(k), Some(eta)) => format!("defended (k={k}, eta={eta})"),
                    (Some(k), None) => format!("defended (k={k})"),
                    (None, Some(eta)) => format!("defended (eta={eta})"),
                    (None, None) => "defended".to_string(),
                };
                (
                    label,
                    VARIANT_PALETTE[variant_index % VARIANT_PALETTE.len()].to_string(),
                )
            }
            condition => (
                condition.to_string(),
                condition_color(condition).to_string(),
            ),
        };
        // Defended summary rows for the same variant at different fractions
        // share a label; merge them into one series.
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((row.fraction * 100.0, row.mean_error)),
            None => series.push(Series {
                label,
                color,
                points: vec![(row.fraction * 100.0, row.mean_error)],
            }),
        }
    }
    for s in &mut series {
        s.points
            .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }

    Ok(LineChart {
        title: title.to_string(),
        x_label: "poisoning points (%)".to_string(),
        y_label: "average test error".to_string(),
        series,
    })
}

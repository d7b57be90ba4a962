//! Minimal SVG line plots for sweep and dyadic-sum tables.

use std::fmt::Write as _;

/// One named polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points }
    }
}

/// Axis scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

impl Scale {
    fn map(self, v: f64) -> Option<f64> {
        match self {
            Self::Linear => v.is_finite().then_some(v),
            Self::Log => (v > 0.0 && v.is_finite()).then(|| v.log10()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_Y: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64, scale: Scale) -> String {
    match scale {
        Scale::Log => format!("1e{}", v.round() as i64),
        Scale::Linear => format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string(),
    }
}

/// Renders the series; points that cannot be placed on a log axis are
/// dropped. Output depends only on the input.
pub fn render_svg(spec: &PlotSpec, series: &[Series]) -> String {
    let mapped: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().filter_map(|&(x, y)| Some((spec.x_scale.map(x)?, spec.y_scale.map(y)?))).collect())
        .collect();
    let all = mapped.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    if spec.y_scale == Scale::Log {
        y0 = y0.floor();
        y1 = y1.ceil();
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| MARGIN_Y + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(fx),
            MARGIN_Y + plot_h + 16.0,
            tick_label(fx, spec.x_scale)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            py(fy) + 4.0,
            tick_label(fy, spec.y_scale)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{MARGIN_Y}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            px(fx),
            px(fx),
            MARGIN_Y + plot_h
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        MARGIN_Y + plot_h / 2.0,
        MARGIN_Y + plot_h / 2.0,
        escape(&spec.y_label)
    );
    for (i, (s, pts)) in series.iter().zip(&mapped).enumerate() {
        let color = COLORS[i % COLORS.len()];
        if !pts.is_empty() {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
            for &(x, y) in pts {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(x), py(y));
            }
        }
        let ly = MARGIN_Y + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

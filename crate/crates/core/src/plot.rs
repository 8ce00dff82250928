//! Minimal self-contained SVG log-log plots.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#555555"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Shown next to the label when present.
    pub slope: Option<f64>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: &str, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.into(), points, slope: None, dashed: false }
    }

    pub fn with_slope(mut self, slope: f64) -> Self {
        self.slope = Some(slope);
        self
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-log plot of every positive finite point; non-positive values are dropped.
pub fn loglog_svg(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let usable = |p: &&(f64, f64)| p.0 > 0.0 && p.1 > 0.0 && p.0.is_finite() && p.1.is_finite();
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().filter(usable).copied()).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (1.0f64, 10.0f64, 1.0f64, 10.0f64);
    if !all.is_empty() {
        x0 = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).log10().floor();
        x1 = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).log10().ceil();
        y0 = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).log10().floor();
        y1 = all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).log10().ceil();
    } else {
        (x0, x1, y0, y1) = (x0.log10(), x1.log10(), y0.log10(), y1.log10());
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y.log10() - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let w = &mut s;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(w, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title)).unwrap();
    writeln!(
        w,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    )
    .unwrap();
    for e in x0 as i32..=x1 as i32 {
        let x = px(10f64.powi(e));
        writeln!(w, r##"<line x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/>"##, HEIGHT - MARGIN).unwrap();
        writeln!(w, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">1e{e}</text>"#, HEIGHT - MARGIN + 16.0).unwrap();
    }
    for e in y0 as i32..=y1 as i32 {
        let y = py(10f64.powi(e));
        writeln!(w, r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, WIDTH - MARGIN).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#, MARGIN - 6.0, y + 4.0).unwrap();
    }
    writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 16.0, escape(xlabel)).unwrap();
    writeln!(
        w,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        HEIGHT / 2.0,
        escape(ylabel)
    )
    .unwrap();

    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().filter(usable).map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        if pts.len() > 1 {
            writeln!(w, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, pts.join(" ")).unwrap();
        }
        if !ser.dashed {
            for p in ser.points.iter().filter(usable) {
                writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(p.0), py(p.1)).unwrap();
            }
        }
        let label = match ser.slope {
            Some(m) => format!("{} (slope {m:.3})", ser.label),
            None => ser.label.clone(),
        };
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        writeln!(w, r#"<text x="{:.2}" y="{ly:.2}" fill="{color}" text-anchor="end">{}</text>"#, WIDTH - MARGIN - 8.0, escape(&label)).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// `c · x^slope` through the first point of `points`, over the same x values.
pub fn reference_line(points: &[(f64, f64)], slope: f64) -> Vec<(f64, f64)> {
    match points.first() {
        Some(&(xa, ya)) => points.iter().map(|&(x, _)| (x, ya * (x / xa).powf(slope))).collect(),
        None => Vec::new(),
    }
}

//! Minimal SVG line, scatter and bar charts.

use std::fmt::Write as _;

const W: f64 = 800.0;
const H: f64 = 420.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub enum Layer {
    Line { name: String, points: Vec<(f64, f64)> },
    Points { name: String, points: Vec<(f64, f64)> },
}

impl Layer {
    fn points(&self) -> &[(f64, f64)] {
        match self {
            Layer::Line { points, .. } | Layer::Points { points, .. } => points,
        }
    }

    fn name(&self) -> &str {
        match self {
            Layer::Line { name, .. } | Layer::Points { name, .. } => name,
        }
    }
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub layers: Vec<Layer>,
    /// Fixed y range; derived from the data when absent.
    pub y_range: Option<(f64, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, esc(title));
}

fn axes(s: &mut String, xr: (f64, f64), yr: (f64, f64), x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (PAD_L, W - PAD_R, H - PAD_B, PAD_T);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let yv = yr.0 + f * (yr.1 - yr.0);
        let yp = y0 - f * (y0 - y1);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, yp + 4.0, tick(yv));
        let xv = xr.0 + f * (xr.1 - xr.0);
        let xp = x0 + f * (x1 - x0);
        let _ = writeln!(s, r#"<text x="{xp:.1}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, tick(xv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 10.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(y_label)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let xr = range(self.layers.iter().flat_map(|l| l.points().iter().map(|p| p.0)));
        let yr = self
            .y_range
            .unwrap_or_else(|| range(self.layers.iter().flat_map(|l| l.points().iter().map(|p| p.1))));
        let px = |x: f64| PAD_L + (x - xr.0) / (xr.1 - xr.0) * (W - PAD_L - PAD_R);
        let py = |y: f64| H - PAD_B - (y - yr.0) / (yr.1 - yr.0) * (H - PAD_T - PAD_B);
        let mut s = String::new();
        header(&mut s, &self.title);
        axes(&mut s, xr, yr, &self.x_label, &self.y_label);
        for (k, layer) in self.layers.iter().enumerate() {
            let c = COLORS[k % COLORS.len()];
            match layer {
                Layer::Line { points, .. } => {
                    // Missing values break the line into segments.
                    for seg in points.split(|p| !p.1.is_finite()) {
                        if seg.is_empty() {
                            continue;
                        }
                        let d: Vec<String> = seg.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
                        let _ = writeln!(s, r#"<polyline fill="none" stroke="{c}" stroke-width="1.2" points="{}"/>"#, d.join(" "));
                    }
                }
                Layer::Points { points, .. } => {
                    for &(x, y) in points.iter().filter(|p| p.1.is_finite()) {
                        let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{c}"/>"#, px(x), py(y));
                    }
                }
            }
            let ly = PAD_T + 14.0 * k as f64;
            let _ = writeln!(s, r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#, W - PAD_R - 180.0, ly);
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, W - PAD_R - 165.0, ly + 9.0, esc(layer.name()));
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Horizontal bars, largest first as given.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut s = String::new();
    header(&mut s, title);
    let max = bars.iter().map(|b| b.1).fold(0.0, f64::max).max(1e-12);
    let left = 320.0;
    let row = ((H - PAD_T - 10.0) / bars.len().max(1) as f64).min(24.0);
    for (i, (name, v)) in bars.iter().enumerate() {
        let y = PAD_T + i as f64 * row;
        let w = v / max * (W - left - 80.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y + row * 0.7, esc(name));
        let _ = writeln!(s, r#"<rect x="{left}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="{}"/>"#, row * 0.8, COLORS[0]);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, left + w + 4.0, y + row * 0.7, tick(*v));
    }
    s.push_str("</svg>\n");
    s
}

//! Minimal SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 1000;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

pub struct Band {
    pub color: &'static str,
    /// `(x, low, high)`.
    pub points: Vec<(f64, f64, f64)>,
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub band: Option<Band>,
    pub series: Vec<Series<'a>>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn thin<T: Copy>(points: &[T]) -> Vec<T> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let step = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<T> = points.iter().step_by(step).copied().collect();
    if (points.len() - 1) % step != 0 {
        out.push(points[points.len() - 1]);
    }
    out
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (1e-3..1e5).contains(&v.abs()) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

impl Chart<'_> {
    fn frame(&self) -> Frame {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                xs.push(x);
                ys.push(y);
            }
        }
        if let Some(b) = &self.band {
            for &(x, lo, hi) in &b.points {
                xs.push(x);
                ys.extend([lo, hi]);
            }
        }
        let finite = |v: &[f64]| {
            v.iter()
                .filter(|x| x.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
        };
        let (mut x0, mut x1) = finite(&xs);
        let (mut y0, mut y1) = finite(&ys);
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x1 = x0 + 1.0;
        }
        let pad = if y1 - y0 <= 0.0 { 0.5 * y0.abs().max(1.0) } else { 0.05 * (y1 - y0) };
        Frame {
            x0,
            x1,
            y0: y0 - pad,
            y1: y1 + pad,
        }
    }

    pub fn render(&self) -> String {
        let f = self.frame();
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(self.title)
        );

        let (left, right, top, bottom) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        for k in 0..=5 {
            let t = k as f64 / 5.0;
            let xv = f.x0 + t * (f.x1 - f.x0);
            let yv = f.y0 + t * (f.y1 - f.y0);
            let (x, y) = (f.px(xv), f.py(yv));
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{bottom}" stroke="#e5e5e5"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                bottom + 18.0,
                tick_label(xv)
            );
            let _ = writeln!(
                svg,
                r##"<line x1="{left}" y1="{y:.2}" x2="{right}" y2="{y:.2}" stroke="#e5e5e5"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                left - 6.0,
                y + 4.0,
                tick_label(yv)
            );
        }
        let _ = writeln!(
            svg,
            r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            right - left,
            bottom - top
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            HEIGHT - 16.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
            (top + bottom) / 2.0,
            escape(self.y_label)
        );

        if let Some(band) = &self.band {
            let pts = thin(&band.points);
            let mut path = String::new();
            for &(x, _, hi) in &pts {
                let _ = write!(path, "{:.2},{:.2} ", f.px(x), f.py(hi));
            }
            for &(x, lo, _) in pts.iter().rev() {
                let _ = write!(path, "{:.2},{:.2} ", f.px(x), f.py(lo));
            }
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.25" stroke="none"/>"#,
                path.trim_end(),
                band.color
            );
        }
        for s in &self.series {
            let mut path = String::new();
            for &(x, y) in &thin(&s.points) {
                if y.is_finite() {
                    let _ = write!(path, "{:.2},{:.2} ", f.px(x), f.py(y));
                }
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
                path.trim_end(),
                s.color
            );
        }

        for (i, s) in self.series.iter().enumerate() {
            let y = top + 16.0 + 18.0 * i as f64;
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                right - 170.0,
                right - 140.0,
                s.color,
                right - 134.0,
                y + 4.0,
                escape(s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

//! Minimal deterministic SVG output: fixed 800×600 canvas, linear axes,
//! labels embedded as text. Coordinates are printed with two decimals so
//! files diff cleanly.

use std::fmt::Write;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[derive(Clone, Debug)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw as a step outline (histogram) instead of a polyline.
    pub steps: bool,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            label: label.into(),
            points,
            steps: false,
        }
    }

    /// Step outline over bins given as `(lo, hi, value)`.
    pub fn histogram(label: impl Into<String>, bins: &[(f64, f64, f64)]) -> Self {
        let mut points = Vec::with_capacity(2 * bins.len());
        for &(lo, hi, v) in bins {
            points.push((lo, v));
            points.push((hi, v));
        }
        Series {
            label: label.into(),
            points,
            steps: true,
        }
    }
}

/// One set of axes placed in a rectangle of the canvas.
#[derive(Clone, Debug)]
pub struct Panel {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub series: Vec<Series>,
    /// Log-scale y axis (base 10); non-positive values are dropped.
    pub log_y: bool,
}

impl Panel {
    pub fn new(
        title: impl Into<String>,
        xlabel: impl Into<String>,
        ylabel: impl Into<String>,
    ) -> Self {
        Panel {
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
            series: Vec::new(),
            log_y: false,
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for s in &self.series {
            for &(x, y) in &s.points {
                let Some(y) = self.ty(y) else { continue };
                if x.is_finite() && y.is_finite() {
                    b.0 = b.0.min(x);
                    b.1 = b.1.max(x);
                    b.2 = b.2.min(y);
                    b.3 = b.3.max(y);
                }
            }
        }
        if !b.0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if b.1 <= b.0 {
            b.1 = b.0 + 1.0;
        }
        if !self.log_y {
            b.2 = b.2.min(0.0);
        }
        if b.3 <= b.2 {
            b.3 = b.2 + 1.0;
        }
        b
    }

    fn ty(&self, y: f64) -> Option<f64> {
        if self.log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            Some(y)
        }
    }

    fn render(&self, out: &mut String, x0: f64, y0: f64, w: f64, h: f64) {
        let (ml, mr, mt, mb) = (58.0, 12.0, 26.0, 40.0);
        let (px, py, pw, ph) = (x0 + ml, y0 + mt, w - ml - mr, h - mt - mb);
        let (xmin, xmax, ymin, ymax) = self.bounds();
        let sx = |x: f64| px + (x - xmin) / (xmax - xmin) * pw;
        let sy = |y: f64| py + ph - (y - ymin) / (ymax - ymin) * ph;
        let _ = writeln!(
            out,
            r##"<rect x="{px:.2}" y="{py:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#000"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
            px + pw / 2.0,
            y0 + 17.0,
            esc(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            px + pw / 2.0,
            py + ph + 32.0,
            esc(&self.xlabel)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
            x0 + 14.0,
            py + ph / 2.0,
            x0 + 14.0,
            py + ph / 2.0,
            esc(&self.ylabel)
        );
        for i in 0..=4 {
            let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
            let fy = ymin + (ymax - ymin) * i as f64 / 4.0;
            let ylab = if self.log_y {
                format!("1e{fy:.1}")
            } else {
                format!("{fy:.3}")
            };
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">{fx:.3}</text>"#,
                sx(fx),
                py + ph + 13.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="end">{ylab}</text>"#,
                px - 3.0,
                sy(fy) + 3.0
            );
        }
        for (k, s) in self.series.iter().enumerate() {
            let mut path = String::new();
            for &(x, y) in &s.points {
                if let Some(y) = self.ty(y) {
                    if x.is_finite() && y.is_finite() {
                        let _ = write!(path, "{:.2},{:.2} ", sx(x), sy(y));
                    }
                }
            }
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                color(k),
                path.trim_end()
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" fill="{}">{}</text>"#,
                px + 6.0,
                py + 13.0 + 12.0 * k as f64,
                color(k),
                esc(&s.label)
            );
        }
    }
}

fn open(header: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    ));
    out.push('\n');
    if !header.is_empty() {
        out.push_str("<!--\n");
        for line in header {
            out.push_str(&line.replace("--", "- -"));
            out.push('\n');
        }
        out.push_str("-->\n");
    }
    out.push_str(r##"<rect x="0" y="0" width="800" height="600" fill="#fff"/>"##);
    out.push('\n');
    out
}

/// Panels laid out on a `cols`-wide grid filling the canvas.
pub fn figure(header: &[String], panels: &[Panel], cols: usize) -> String {
    let mut out = open(header);
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let (w, h) = (WIDTH / cols as f64, HEIGHT / rows as f64);
    for (i, p) in panels.iter().enumerate() {
        p.render(&mut out, (i % cols) as f64 * w, (i / cols) as f64 * h, w, h);
    }
    out.push_str("</svg>\n");
    out
}

/// Points of the equilateral simplex embedding coloured by `value` in
/// `[0, 1]` (blue low, red high).
pub fn simplex_map(header: &[String], title: &str, points: &[(f64, f64, f64)], m: usize) -> String {
    let mut out = open(header);
    let side = 620.0;
    let (ox, oy) = ((WIDTH - side) / 2.0, 560.0);
    let r = (side / m.max(1) as f64 * 0.5).max(1.0);
    let _ = writeln!(
        out,
        r#"<text x="400" y="24" font-size="15" text-anchor="middle">{}</text>"#,
        esc(title)
    );
    for &(x, y, v) in points {
        let v = if v.is_finite() {
            v.clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (red, blue) = ((255.0 * v).round() as u8, (255.0 * (1.0 - v)).round() as u8);
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{r:.2}" fill="#{red:02x}40{blue:02x}"/>"##,
            ox + x * side,
            oy - y * side
        );
    }
    for (label, x, y) in [
        ("w1", 0.0, 0.0),
        ("w2", 1.0, 0.0),
        ("w3", 0.5, 3f64.sqrt() / 2.0),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{label}</text>"#,
            ox + x * side,
            oy - y * side + if y > 0.0 { -10.0 } else { 22.0 }
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_has_fixed_viewbox_and_header() {
        let p = Panel::new("t", "x", "y").with(Series::line("a", vec![(0.0, 1.0), (1.0, 2.0)]));
        let s = figure(&["# seed = 3".into()], &[p], 1);
        assert!(s.starts_with(r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 600""#));
        assert!(s.contains("# seed = 3"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(
            s,
            figure(
                &["# seed = 3".into()],
                &[Panel::new("t", "x", "y").with(Series::line("a", vec![(0.0, 1.0), (1.0, 2.0)]))],
                1
            )
        );
    }

    #[test]
    fn labels_are_escaped() {
        let s = figure(&[], &[Panel::new("a<b", "x", "y")], 1);
        assert!(s.contains("a&lt;b"));
    }

    #[test]
    fn simplex_map_draws_every_point() {
        let pts = vec![(0.0, 0.0, 1.0), (1.0, 0.0, 0.0), (0.5, 0.8, 0.5)];
        let s = simplex_map(&[], "acc", &pts, 2);
        assert_eq!(s.matches("<circle").count(), 3);
    }
}

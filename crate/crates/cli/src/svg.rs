//! Minimal SVG writer: rectangles, polylines, circles and text.

use std::fmt::Write as _;

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height, body: String::new() }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    pub fn outline(&mut self, x: f64, y: f64, w: f64, h: f64, stroke: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="{stroke}"/>"#
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let mut p = String::new();
        for (x, y) in pts {
            let _ = write!(p, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            p.trim_end()
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r}" fill="{fill}"/>"#);
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Data-to-pixel mapping for one plot area.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl Frame {
    /// Plot area inside a `w × h` canvas with room for axis labels.
    pub fn new(x: (f64, f64), y: (f64, f64), w: f64, h: f64) -> Self {
        let widen = |r: (f64, f64)| if r.0 == r.1 { (r.0 - 0.5, r.1 + 0.5) } else { r };
        Self { x: widen(x), y: widen(y), left: 70.0, top: 30.0, width: w - 100.0, height: h - 80.0 }
    }

    pub fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    pub fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y.0) / (self.y.1 - self.y.0) * self.height
    }

    pub fn axes(&self, svg: &mut Svg, title: &str, xlabel: &str, ylabel: &str) {
        svg.outline(self.left, self.top, self.width, self.height, "black");
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            svg.text(self.px(xv), self.top + self.height + 16.0, 11.0, "middle", &tick(xv));
            svg.text(self.left - 6.0, self.py(yv) + 4.0, 11.0, "end", &tick(yv));
        }
        svg.text(self.left + self.width / 2.0, self.top + self.height + 36.0, 13.0, "middle", xlabel);
        svg.text(14.0, self.top + self.height / 2.0, 13.0, "start", ylabel);
        svg.text(self.left + self.width / 2.0, self.top - 10.0, 14.0, "middle", title);
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_and_wraps() {
        let mut s = Svg::new(100.0, 50.0);
        s.text(1.0, 2.0, 10.0, "start", "a<b & c");
        let out = s.finish();
        assert!(out.starts_with("<svg xmlns"));
        assert!(out.contains("a&lt;b &amp; c"));
        assert!(out.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn frame_maps_corners() {
        let f = Frame::new((0.0, 1.0), (0.0, 2.0), 400.0, 300.0);
        assert_eq!(f.px(0.0), f.left);
        assert_eq!(f.px(1.0), f.left + f.width);
        assert_eq!(f.py(0.0), f.top + f.height);
        assert_eq!(f.py(2.0), f.top);
        assert_eq!(tick(-0.0001), "0");
        assert_eq!(tick(2.5), "2.5");
    }
}

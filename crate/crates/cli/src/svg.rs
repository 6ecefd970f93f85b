//! Minimal SVG writer. The y axis points up, as in the plane.

use std::fmt::Write as _;

use fractal_degree::{Point, Rect};

pub struct Svg {
    view: Rect,
    pixels: f64,
    body: String,
}

impl Svg {
    pub fn new(view: Rect, pixels: f64) -> Self {
        Svg {
            view,
            pixels,
            body: String::new(),
        }
    }

    fn stroke_width(&self, px: f64) -> f64 {
        px * self.view.width().max(self.view.height()) / self.pixels
    }

    pub fn polyline(&mut self, pts: &[Point], color: &str, px: f64) {
        let w = self.stroke_width(px);
        let _ = write!(self.body, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{w:.6}\" points=\"");
        for (k, p) in pts.iter().enumerate() {
            if k > 0 {
                self.body.push(' ');
            }
            let _ = write!(self.body, "{:.6},{:.6}", p.x, -p.y);
        }
        self.body.push_str("\"/>\n");
    }

    pub fn rect(&mut self, r: &Rect, fill: &str, stroke: Option<&str>) {
        let _ = write!(
            self.body,
            "<rect x=\"{:.6}\" y=\"{:.6}\" width=\"{:.6}\" height=\"{:.6}\" fill=\"{fill}\"",
            r.x0,
            -r.y1,
            r.width(),
            r.height()
        );
        if let Some(s) = stroke {
            let _ = write!(self.body, " stroke=\"{s}\" stroke-width=\"{:.6}\"", self.stroke_width(0.5));
        }
        self.body.push_str("/>\n");
    }

    pub fn finish(self) -> String {
        let (w, h) = (self.view.width(), self.view.height());
        let (pw, ph) = if w >= h {
            (self.pixels, self.pixels * h / w)
        } else {
            (self.pixels * w / h, self.pixels)
        };
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{pw:.0}\" height=\"{ph:.0}\" viewBox=\"{:.6} {:.6} {:.6} {:.6}\">\n<rect x=\"{:.6}\" y=\"{:.6}\" width=\"{:.6}\" height=\"{:.6}\" fill=\"white\"/>\n{}</svg>\n",
            self.view.x0,
            -self.view.y1,
            w,
            h,
            self.view.x0,
            -self.view.y1,
            w,
            h,
            self.body
        )
    }
}

/// Diverging colour for an integer degree: blue for positive, red for
/// negative, white for zero.
pub fn degree_color(v: i64, vmax: i64) -> String {
    if v == 0 || vmax == 0 {
        return "#ffffff".into();
    }
    let s = (v.unsigned_abs() as f64 / vmax as f64).min(1.0);
    let c = (255.0 * (1.0 - s)).round() as u8;
    if v > 0 {
        format!("#{c:02x}{c:02x}ff")
    } else {
        format!("#ff{c:02x}{c:02x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_valid_document() {
        let mut s = Svg::new(Rect::new(-0.5, -0.5, 1.5, 1.5), 400.0);
        s.polyline(&[Point::new(0.0, 0.0), Point::new(1.0, 1.0)], "black", 1.0);
        s.rect(&Rect::new(0.0, 0.0, 0.5, 0.5), "#ccc", Some("black"));
        let doc = s.finish();
        assert!(doc.starts_with("<svg") && doc.ends_with("</svg>\n"));
        assert!(doc.contains("0.000000,-0.000000 1.000000,-1.000000"));
        assert_eq!(degree_color(0, 3), "#ffffff");
        assert_eq!(degree_color(3, 3), "#0000ff");
    }
}

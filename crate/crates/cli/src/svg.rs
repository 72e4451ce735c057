//! Minimal SVG scatter plots: 800×600 canvas, one `circle` per point.

use std::fmt::Write;

use ndarray::ArrayView2;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 30.0;

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn color(label: usize) -> &'static str {
    PALETTE[label % PALETTE.len()]
}

/// Axis-aligned data bounds mapped onto the canvas.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    min: [f64; 2],
    max: [f64; 2],
}

impl Frame {
    pub fn around(points: ArrayView2<f64>) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points.outer_iter() {
            for d in 0..2 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        for d in 0..2 {
            if max[d].is_nan() || max[d] <= min[d] {
                let c = if min[d].is_finite() { min[d] } else { 0.0 };
                min[d] = c - 1.0;
                max[d] = c + 1.0;
            }
            let pad = 0.05 * (max[d] - min[d]);
            min[d] -= pad;
            max[d] += pad;
        }
        Self { min, max }
    }

    pub fn data_bounds(&self) -> ([f64; 2], [f64; 2]) {
        (self.min, self.max)
    }

    fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (x - self.min[0]) / (self.max[0] - self.min[0]);
        let sy = (y - self.min[1]) / (self.max[1] - self.min[1]);
        (MARGIN + sx * (WIDTH - 2.0 * MARGIN), HEIGHT - MARGIN - sy * (HEIGHT - 2.0 * MARGIN))
    }
}

pub struct Plot {
    frame: Frame,
    body: String,
}

impl Plot {
    pub fn new(frame: Frame, title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(body, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        Self { frame, body }
    }

    /// Filled cells of a regular grid, colored by their predicted label.
    pub fn regions(&mut self, xs: &[f64], ys: &[f64], labels: &[usize]) {
        let (nx, ny) = (xs.len(), ys.len());
        if nx < 2 || ny < 2 {
            return;
        }
        let (dx, dy) = ((xs[1] - xs[0]) / 2.0, (ys[1] - ys[0]) / 2.0);
        for (iy, &y) in ys.iter().enumerate() {
            for (ix, &x) in xs.iter().enumerate() {
                let (x0, y0) = self.frame.project(x - dx, y + dy);
                let (x1, y1) = self.frame.project(x + dx, y - dy);
                let _ = writeln!(
                    self.body,
                    r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.25"/>"#,
                    x1 - x0,
                    y1 - y0,
                    color(labels[iy * nx + ix])
                );
            }
        }
    }

    pub fn points(&mut self, points: ArrayView2<f64>, labels: &[usize]) {
        for (p, &l) in points.outer_iter().zip(labels) {
            let (cx, cy) = self.frame.project(p[0], p[1]);
            let _ = writeln!(self.body, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{}"/>"#, color(l));
        }
    }

    pub fn render(&self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" width=\"{WIDTH}\" height=\"{HEIGHT}\">\n{}</svg>\n",
            self.body
        )
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot of 2-D points colored by label.
pub fn scatter(points: ArrayView2<f64>, labels: &[usize], title: &str) -> String {
    let mut plot = Plot::new(Frame::around(points), title);
    plot.points(points, labels);
    plot.render()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_circle_per_point() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 0.5]];
        let svg = scatter(x.view(), &[0, 1, 11], "a < b");
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains(r#"viewBox="0 0 800 600""#));
        assert!(svg.contains(PALETTE[1]));
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn degenerate_bounds_stay_finite() {
        let x = array![[2.0, 2.0]];
        let svg = scatter(x.view(), &[0], "");
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}

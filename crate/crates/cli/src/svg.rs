//! Minimal SVG drawing: framed axes, polylines, heatmaps and contour lines.

use std::fmt::Write;

use ndarray::Array2;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

pub struct Canvas {
    width: f64,
    height: f64,
    body: String,
}

impl Canvas {
    pub fn new(width: f64, height: f64) -> Self {
        Canvas { width, height, body: String::new() }
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="{anchor}" font-family="sans-serif">{}</text>"#,
            escape(s)
        );
    }

    /// Text rotated by −90°, for vertical axis labels.
    pub fn vtext(&mut self, x: f64, y: f64, size: f64, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-size="{size}" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 {x:.1} {y:.1})">{}</text>"#,
            escape(s)
        );
    }

    /// Small filled square for legends.
    pub fn swatch(&mut self, x: f64, y: f64, color: &str) {
        self.raw(&format!(r#"<rect x="{x:.1}" y="{y:.1}" width="10" height="10" fill="{color}"/>"#));
    }

    fn raw(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A plotting rectangle on the canvas with data ranges for both axes.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub log_y: bool,
}

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    pub fn py(&self, y: f64) -> f64 {
        let (lo, hi, v) = if self.log_y { (self.y.0.log10(), self.y.1.log10(), y.log10()) } else { (self.y.0, self.y.1, y) };
        self.top + (1.0 - (v - lo) / (hi - lo)) * self.height
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let (ylo, yhi) = (self.y.0.min(self.y.1), self.y.0.max(self.y.1));
        x.is_finite() && y.is_finite() && x >= self.x.0 && x <= self.x.1 && y >= ylo && y <= yhi && (!self.log_y || y > 0.0)
    }

    pub fn axes(&self, c: &mut Canvas, title: &str, xlabel: &str, ylabel: &str) {
        c.raw(&format!(
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black" stroke-width="1"/>"#,
            self.left, self.top, self.width, self.height
        ));
        for t in ticks(self.x.0, self.x.1, 6) {
            let x = self.px(t);
            let yb = self.top + self.height;
            c.raw(&format!(r#"<line x1="{x:.1}" y1="{yb:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, yb + 4.0));
            c.text(x, yb + 16.0, 11.0, "middle", &tick_label(t));
        }
        let yticks = if self.log_y { log_ticks(self.y.0, self.y.1) } else { ticks(self.y.0, self.y.1, 5) };
        for t in yticks {
            let y = self.py(t);
            c.raw(&format!(r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black"/>"#, self.left - 4.0, self.left));
            let label = if self.log_y { format!("1e{}", t.log10().round()) } else { tick_label(t) };
            c.text(self.left - 6.0, y + 4.0, 11.0, "end", &label);
        }
        c.text(self.left + self.width / 2.0, self.top - 8.0, 13.0, "middle", title);
        c.text(self.left + self.width / 2.0, self.top + self.height + 34.0, 12.0, "middle", xlabel);
        c.vtext(self.left - 46.0, self.top + self.height / 2.0, 12.0, ylabel);
    }

    /// Draws a line through `pts`, breaking it at points outside the frame.
    pub fn polyline(&self, c: &mut Canvas, pts: &[(f64, f64)], color: &str, width: f64) {
        let mut run: Vec<String> = Vec::new();
        let flush = |run: &mut Vec<String>, c: &mut Canvas| {
            if run.len() > 1 {
                c.raw(&format!(
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
                    run.join(" ")
                ));
            }
            run.clear();
        };
        for &(x, y) in pts {
            if self.inside(x, y) {
                run.push(format!("{:.1},{:.1}", self.px(x), self.py(y)));
            } else {
                flush(&mut run, c);
            }
        }
        flush(&mut run, c);
    }

    pub fn dot(&self, c: &mut Canvas, x: f64, y: f64, radius: f64, color: &str) {
        if self.inside(x, y) {
            c.raw(&format!(r#"<circle cx="{:.1}" cy="{:.1}" r="{radius}" fill="{color}"/>"#, self.px(x), self.py(y)));
        }
    }

    pub fn segments(&self, c: &mut Canvas, segs: &[[(f64, f64); 2]], color: &str, width: f64) {
        if segs.is_empty() {
            return;
        }
        let mut d = String::new();
        for [a, b] in segs {
            let _ = write!(d, "M{:.1} {:.1}L{:.1} {:.1}", self.px(a.0), self.py(a.1), self.px(b.0), self.py(b.1));
        }
        c.raw(&format!(r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="{width}"/>"#));
    }

    /// Cell-centred heatmap of `values[[ix, iy]]` on nodes `xs`, `ys` with a
    /// linear scale from 0 to `vmax`. `None` cells are left blank. Runs of equal
    /// colour along `x` are merged.
    pub fn heatmap(&self, c: &mut Canvas, xs: &[f64], ys: &[f64], values: &Array2<Option<f64>>, vmax: f64) {
        let half = |v: &[f64], k: usize| {
            let lo = if k == 0 { v[0] - 0.5 * (v[1] - v[0]) } else { 0.5 * (v[k - 1] + v[k]) };
            let hi = if k + 1 == v.len() { v[k] + 0.5 * (v[k] - v[k - 1]) } else { 0.5 * (v[k] + v[k + 1]) };
            (lo, hi)
        };
        let level = |v: f64| ((v / vmax).clamp(0.0, 1.0) * 63.0).round() as u8;
        c.raw(r#"<g shape-rendering="crispEdges">"#);
        for (iy, _) in ys.iter().enumerate() {
            let (ylo, yhi) = half(ys, iy);
            let (top, bottom) = (self.py(yhi), self.py(ylo));
            let mut ix = 0;
            while ix < xs.len() {
                let Some(v) = values[[ix, iy]] else {
                    ix += 1;
                    continue;
                };
                let l = level(v);
                let mut end = ix + 1;
                while end < xs.len() && values[[end, iy]].map(level) == Some(l) {
                    end += 1;
                }
                let x0 = self.px(half(xs, ix).0);
                let x1 = self.px(half(xs, end - 1).1);
                c.raw(&format!(
                    r#"<rect x="{x0:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                    x1 - x0 + 0.3,
                    bottom - top + 0.3,
                    colormap(l as f64 / 63.0)
                ));
                ix = end;
            }
        }
        c.raw("</g>");
    }

    /// Vertical colour bar at the right edge of the frame.
    pub fn colorbar(&self, c: &mut Canvas, vmax: f64, label: &str) {
        let x = self.left + self.width + 10.0;
        let n = 32;
        for k in 0..n {
            let h = self.height / n as f64;
            let y = self.top + self.height - (k + 1) as f64 * h;
            c.raw(&format!(
                r#"<rect x="{x:.1}" y="{y:.1}" width="12" height="{:.1}" fill="{}"/>"#,
                h + 0.3,
                colormap((k as f64 + 0.5) / n as f64)
            ));
        }
        c.text(x + 16.0, self.top + 10.0, 10.0, "start", &tick_label(vmax));
        c.text(x + 16.0, self.top + self.height, 10.0, "start", "0");
        c.vtext(x + 40.0, self.top + self.height / 2.0, 11.0, label);
    }
}

/// Sequential purple-to-yellow scale, `v` in `[0, 1]`.
pub fn colormap(v: f64) -> String {
    const STOPS: [[f64; 3]; 5] =
        [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
    let s = v.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (s.floor() as usize).min(STOPS.len() - 2);
    let w = s - k as f64;
    let ch = |i: usize| (STOPS[k][i] + w * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

/// Roughly `n` round tick positions covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn log_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.log10().ceil() as i32, hi.log10().floor() as i32);
    let every = ((b - a) / 6).max(1);
    (a..=b).filter(|e| (e - a) % every == 0).map(|e| 10f64.powi(e)).collect()
}

fn tick_label(t: f64) -> String {
    if t == 0.0 {
        return "0".into();
    }
    let a = t.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{t:.0e}");
    }
    let s = format!("{t:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Marching-squares line segments of `values[[ix, iy]] = level`.
pub fn contour(xs: &[f64], ys: &[f64], values: &Array2<f64>, level: f64) -> Vec<[(f64, f64); 2]> {
    let mut segs = Vec::new();
    let lerp = |a: (f64, f64, f64), b: (f64, f64, f64)| {
        let w = (level - a.2) / (b.2 - a.2);
        (a.0 + w * (b.0 - a.0), a.1 + w * (b.1 - a.1))
    };
    for i in 0..xs.len().saturating_sub(1) {
        for j in 0..ys.len().saturating_sub(1) {
            // corners counter-clockwise from (i, j)
            let c = [
                (xs[i], ys[j], values[[i, j]]),
                (xs[i + 1], ys[j], values[[i + 1, j]]),
                (xs[i + 1], ys[j + 1], values[[i + 1, j + 1]]),
                (xs[i], ys[j + 1], values[[i, j + 1]]),
            ];
            if c.iter().any(|p| !p.2.is_finite()) {
                continue;
            }
            let crossings: Vec<(f64, f64)> = (0..4)
                .filter_map(|e| {
                    let (a, b) = (c[e], c[(e + 1) % 4]);
                    ((a.2 < level) != (b.2 < level)).then(|| lerp(a, b))
                })
                .collect();
            match crossings.len() {
                2 => segs.push([crossings[0], crossings[1]]),
                4 => {
                    // saddle: pair edges according to the cell-centre value
                    let centre = c.iter().map(|p| p.2).sum::<f64>() / 4.0;
                    if (centre < level) == (c[0].2 < level) {
                        segs.push([crossings[0], crossings[1]]);
                        segs.push([crossings[2], crossings[3]]);
                    } else {
                        segs.push([crossings[3], crossings[0]]);
                        segs.push([crossings[1], crossings[2]]);
                    }
                }
                _ => {}
            }
        }
    }
    segs
}

//! Minimal SVG figures: line plots with error bars, heatmaps with contour
//! overlays and phase portraits. Every figure uses a fixed viewBox and
//! embeds its parameters, seed and the crate version.

use std::fmt::Write as _;

use serde_json::Value;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 770.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 460.0;

pub const PALETTE: [&str; 6] = [
    "#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555",
];

#[derive(Debug, Clone)]
pub struct Meta {
    pub title: String,
    pub command: &'static str,
    pub params: Value,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone)]
pub struct Axis {
    pub label: String,
    pub scale: Scale,
    pub lo: f64,
    pub hi: f64,
}

impl Axis {
    pub fn new(label: &str, scale: Scale, lo: f64, hi: f64) -> Self {
        Self {
            label: label.to_string(),
            scale,
            lo,
            hi,
        }
    }

    /// Range covering the finite `values` with 5% padding on a linear scale.
    pub fn fit<I: IntoIterator<Item = f64>>(label: &str, scale: Scale, values: I) -> Self {
        let (mut lo, mut hi) = values
            .into_iter()
            .filter(|v| v.is_finite() && (scale == Scale::Linear || *v > 0.0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
                (l.min(v), h.max(v))
            });
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo <= 1e-12 * lo.abs().max(1.0) {
            let w = 0.5 * lo.abs().max(1.0);
            (lo, hi) = match scale {
                Scale::Linear => (lo - w, hi + w),
                Scale::Log => (lo / 2.0, hi * 2.0),
            };
        } else if scale == Scale::Linear {
            let pad = 0.05 * (hi - lo);
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self::new(label, scale, lo, hi)
    }

    fn frac(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => (v - self.lo) / (self.hi - self.lo),
            Scale::Log => (v.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln()),
        }
    }

    fn ticks(&self) -> Vec<f64> {
        match self.scale {
            Scale::Linear => {
                let raw = (self.hi - self.lo) / 6.0;
                let mag = 10f64.powf(raw.log10().floor());
                let step = [1.0, 2.0, 5.0, 10.0]
                    .iter()
                    .map(|m| m * mag)
                    .find(|s| *s >= raw)
                    .unwrap_or(10.0 * mag);
                let first = (self.lo / step).ceil() as i64;
                let last = (self.hi / step).floor() as i64;
                (first..=last).map(|k| k as f64 * step).collect()
            }
            Scale::Log => {
                let first = self.lo.log10().ceil() as i32;
                let last = self.hi.log10().floor() as i32;
                let decades: Vec<f64> = (first..=last).map(|e| 10f64.powi(e)).collect();
                if decades.len() >= 2 {
                    return decades;
                }
                (first - 1..=last)
                    .flat_map(|e| [1.0, 2.0, 5.0].map(|m| m * 10f64.powi(e)))
                    .filter(|v| *v >= self.lo && *v <= self.hi)
                    .collect()
            }
        }
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.0e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

struct Frame {
    x: Axis,
    y: Axis,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        self.left + self.x.frac(v) * (self.right - self.left)
    }

    fn py(&self, v: f64) -> f64 {
        self.bottom - self.y.frac(v) * (self.bottom - self.top)
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let fx = self.x.frac(x);
        let fy = self.y.frac(y);
        fx.is_finite()
            && fy.is_finite()
            && (-1e-9..=1.0 + 1e-9).contains(&fx)
            && (-1e-9..=1.0 + 1e-9).contains(&fy)
    }
}

fn open(out: &mut String, meta: &Meta, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let payload = serde_json::json!({
        "command": meta.command,
        "params": meta.params,
        "seed": meta.seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let _ = writeln!(out, "<metadata>{}</metadata>", escape(&payload.to_string()));
    let _ = writeln!(
        out,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        width / 2.0,
        escape(&meta.title)
    );
}

fn axes(out: &mut String, f: &Frame) {
    let _ = writeln!(
        out,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#222"/>"##,
        f.left,
        f.top,
        f.right - f.left,
        f.bottom - f.top
    );
    for t in f.x.ticks() {
        let x = f.px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#222"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            f.bottom,
            f.bottom + 5.0,
            f.bottom + 19.0,
            tick_label(t)
        );
    }
    for t in f.y.ticks() {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#222"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            f.left - 5.0,
            f.left,
            f.left - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        0.5 * (f.left + f.right),
        f.bottom + 40.0,
        escape(&f.x.label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate({:.2},{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        f.left - 55.0,
        0.5 * (f.top + f.bottom),
        escape(&f.y.label)
    );
}

/// Polyline pieces between non-finite or out-of-frame points.
fn polyline_paths(f: &Frame, pts: &[(f64, f64)]) -> Vec<String> {
    let mut paths = Vec::new();
    let mut cur = String::new();
    for &(x, y) in pts {
        if f.inside(x, y) {
            let _ = write!(
                cur,
                "{}{:.2},{:.2}",
                if cur.is_empty() { "" } else { " " },
                f.px(x),
                f.py(y)
            );
        } else if !cur.is_empty() {
            paths.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        paths.push(cur);
    }
    paths
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dots,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: &'static str,
    pub points: Vec<(f64, f64)>,
    /// Half-widths of error bars, empty for none.
    pub err: Vec<f64>,
    pub mark: Mark,
    pub dashed: bool,
}

impl Series {
    pub fn line(label: &str, color: &'static str, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.to_string(),
            color,
            points,
            err: Vec::new(),
            mark: Mark::Line,
            dashed: false,
        }
    }

    pub fn dots(label: &str, color: &'static str, points: Vec<(f64, f64)>, err: Vec<f64>) -> Self {
        Self {
            label: label.to_string(),
            color,
            points,
            err,
            mark: Mark::Dots,
            dashed: false,
        }
    }
}

fn legend(out: &mut String, f: &Frame, items: &[(&str, &str, bool)]) {
    for (k, (label, color, dashed)) in items.iter().enumerate() {
        let y = f.top + 16.0 + 16.0 * k as f64;
        let x = f.right - 150.0;
        let dash = if *dashed {
            r#" stroke-dasharray="5,3""#
        } else {
            ""
        };
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 22.0,
            x + 28.0,
            y + 4.0,
            escape(label)
        );
    }
}

/// Curves and error-bar markers on shared axes, with optional horizontal
/// reference lines.
pub fn line_plot(meta: &Meta, x: Axis, y: Axis, series: &[Series], hlines: &[f64]) -> String {
    let mut out = String::new();
    open(&mut out, meta, WIDTH, HEIGHT);
    let f = Frame {
        x,
        y,
        left: LEFT,
        right: RIGHT,
        top: TOP,
        bottom: BOTTOM,
    };
    for &h in hlines {
        if f.inside(f.x.lo, h) {
            let yy = f.py(h);
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#999" stroke-dasharray="2,3"/>"##,
                f.left, f.right
            );
        }
    }
    axes(&mut out, &f);
    for s in series {
        let dash = if s.dashed {
            r#" stroke-dasharray="5,3""#
        } else {
            ""
        };
        match s.mark {
            Mark::Line => {
                for p in polyline_paths(&f, &s.points) {
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{p}" fill="none" stroke="{}" stroke-width="1.8"{dash}/>"#,
                        s.color
                    );
                }
            }
            Mark::Dots => {
                for (k, &(px, py)) in s.points.iter().enumerate() {
                    if !f.inside(px, py) {
                        continue;
                    }
                    let (cx, cy) = (f.px(px), f.py(py));
                    if let Some(&e) = s.err.get(k) {
                        if e.is_finite() && e > 0.0 {
                            let lo = f.py(py - e).min(f.bottom);
                            let hi = f.py(py + e).max(f.top);
                            let _ = writeln!(
                                out,
                                r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="{}"/>"#,
                                s.color
                            );
                        }
                    }
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{}"/>"#,
                        s.color
                    );
                }
            }
        }
    }
    let items: Vec<(&str, &str, bool)> = series
        .iter()
        .map(|s| (s.label.as_str(), s.color, s.dashed))
        .collect();
    legend(&mut out, &f, &items);
    out.push_str("</svg>\n");
    out
}

/// Blue for negative, red for positive, white at zero, grey when missing.
pub fn diverging(v: f64, scale: f64) -> String {
    if !v.is_finite() || !(scale > 0.0) {
        return "#bbbbbb".into();
    }
    let t = (v / scale).clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        (33.0, 102.0, 172.0)
    } else {
        (178.0, 24.0, 43.0)
    };
    let w = t.abs().sqrt();
    let mix = |c: f64| (255.0 + (c - 255.0) * w).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(r), mix(g), mix(b))
}

fn cell_edges(axis: &Axis, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let to = |v: f64| if axis.scale == Scale::Log { v.ln() } else { v };
    let from = |v: f64| if axis.scale == Scale::Log { v.exp() } else { v };
    let mut e = Vec::with_capacity(n + 1);
    e.push(nodes[0]);
    for k in 1..n {
        e.push(from(0.5 * (to(nodes[k - 1]) + to(nodes[k]))));
    }
    e.push(nodes[n - 1]);
    e
}

/// Cell map of `values[i][j]` at `(xs[i], ys[j])` with solid `contours` and
/// dashed `ghosts` drawn on top.
pub fn heatmap(
    meta: &Meta,
    x: Axis,
    y: Axis,
    xs: &[f64],
    ys: &[f64],
    values: &[Vec<f64>],
    contours: &[Vec<(f64, f64)>],
    ghosts: &[Vec<(f64, f64)>],
) -> String {
    let mut out = String::new();
    open(&mut out, meta, WIDTH, HEIGHT);
    let f = Frame {
        x,
        y,
        left: LEFT,
        right: RIGHT - 90.0,
        top: TOP,
        bottom: BOTTOM,
    };
    let scale = values
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if !xs.is_empty() && !ys.is_empty() {
        let ex = cell_edges(&f.x, xs);
        let ey = cell_edges(&f.y, ys);
        out.push_str("<g shape-rendering=\"crispEdges\">\n");
        for (i, col) in values.iter().enumerate() {
            for (j, &v) in col.iter().enumerate() {
                let (x0, x1) = (f.px(ex[i]), f.px(ex[i + 1]));
                let (y0, y1) = (f.py(ey[j + 1]), f.py(ey[j]));
                let _ = writeln!(
                    out,
                    r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    (x1 - x0).max(0.0),
                    (y1 - y0).max(0.0),
                    diverging(v, scale)
                );
            }
        }
        out.push_str("</g>\n");
    }
    axes(&mut out, &f);
    for line in ghosts {
        for p in polyline_paths(&f, line) {
            let _ = writeln!(
                out,
                r##"<polyline points="{p}" fill="none" stroke="#444" stroke-width="1.2" stroke-dasharray="4,3"/>"##
            );
        }
    }
    for line in contours {
        for p in polyline_paths(&f, line) {
            let _ = writeln!(
                out,
                r##"<polyline points="{p}" fill="none" stroke="#000" stroke-width="1.8"/>"##
            );
        }
    }
    // color bar
    let bx = f.right + 25.0;
    let steps = 40;
    let h = (f.bottom - f.top) / steps as f64;
    for k in 0..steps {
        let v = scale * (1.0 - 2.0 * (k as f64 + 0.5) / steps as f64);
        let _ = writeln!(
            out,
            r#"<rect x="{bx:.2}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            f.top + k as f64 * h,
            h + 0.5,
            diverging(v, scale)
        );
    }
    for (v, yy) in [
        (scale, f.top),
        (0.0, 0.5 * (f.top + f.bottom)),
        (-scale, f.bottom),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            bx + 20.0,
            yy + 4.0,
            tick_label(v)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Planar path colored by mode, with jump points marked.
pub fn phase_portrait(meta: &Meta, path: &[(f64, f64, usize)], jumps: &[(f64, f64)]) -> String {
    let side = 560.0;
    let mut out = String::new();
    open(&mut out, meta, side + 60.0, side + 20.0);
    let r = path
        .iter()
        .flat_map(|p| [p.0.abs(), p.1.abs()])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE)
        * 1.05;
    let f = Frame {
        x: Axis::new("x1", Scale::Linear, -r, r),
        y: Axis::new("x2", Scale::Linear, -r, r),
        left: 70.0,
        right: side,
        top: 40.0,
        bottom: side - 30.0,
    };
    axes(&mut out, &f);
    let mut k = 0;
    while k < path.len() {
        let mode = path[k].2;
        let mut end = k;
        while end + 1 < path.len() && path[end + 1].2 == mode {
            end += 1;
        }
        // share the jump point with the next arc so arcs join
        let stop = (end + 1).min(path.len() - 1);
        let pts: Vec<(f64, f64)> = path[k..=stop].iter().map(|p| (p.0, p.1)).collect();
        for p in polyline_paths(&f, &pts) {
            let _ = writeln!(
                out,
                r#"<polyline points="{p}" fill="none" stroke="{}" stroke-width="1.3"/>"#,
                PALETTE[mode % PALETTE.len()]
            );
        }
        k = end + 1;
    }
    for &(x, y) in jumps {
        if f.inside(x, y) {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="none" stroke="#222"/>"##,
                f.px(x),
                f.py(y)
            );
        }
    }
    legend(
        &mut out,
        &f,
        &[("mode 0", PALETTE[0], false), ("mode 1", PALETTE[1], false)],
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Meta {
        Meta {
            title: "a < b & c".into(),
            command: "test",
            params: serde_json::json!({"a": 0.1}),
            seed: Some(3),
        }
    }

    #[test]
    fn escapes_and_embeds_metadata() {
        let s = line_plot(
            &meta(),
            Axis::new("beta", Scale::Log, 0.1, 10.0),
            Axis::new("chi", Scale::Linear, -1.0, 1.0),
            &[Series::line(
                "chi",
                PALETTE[0],
                vec![(0.1, 0.0), (1.0, 0.5), (10.0, -0.5)],
            )],
            &[0.0],
        );
        assert!(s.contains("a &lt; b &amp; c"));
        assert!(s.contains("<metadata>"));
        assert!(s.contains(r#""seed":3"#));
        assert!(s.contains(env!("CARGO_PKG_VERSION")));
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn log_ticks_are_decades() {
        let a = Axis::new("b", Scale::Log, 0.05, 200.0);
        assert_eq!(a.ticks(), vec![0.1, 1.0, 10.0, 100.0]);
    }

    #[test]
    fn linear_ticks_cover_range() {
        let a = Axis::new("y", Scale::Linear, -0.16, 0.2);
        let t = a.ticks();
        assert!(t.len() >= 3 && t.iter().all(|v| *v >= -0.16 && *v <= 0.2));
    }

    #[test]
    fn nan_breaks_polyline() {
        let f = Frame {
            x: Axis::new("x", Scale::Linear, 0.0, 3.0),
            y: Axis::new("y", Scale::Linear, 0.0, 3.0),
            left: 0.0,
            right: 100.0,
            top: 0.0,
            bottom: 100.0,
        };
        let p = polyline_paths(&f, &[(0.0, 1.0), (1.0, 1.0), (2.0, f64::NAN), (3.0, 1.0)]);
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn colormap_signs() {
        assert_eq!(diverging(0.0, 1.0), "#ffffff");
        assert!(diverging(-1.0, 1.0).starts_with("#21"));
        assert!(diverging(1.0, 1.0).starts_with("#b2"));
        assert_eq!(diverging(f64::NAN, 1.0), "#bbbbbb");
    }

    #[test]
    fn heatmap_draws_every_cell() {
        let xs = [1.0, 2.0, 4.0];
        let ys = [0.0, 1.0];
        let vals = vec![vec![-1.0, 1.0]; 3];
        let s = heatmap(
            &meta(),
            Axis::new("x", Scale::Log, 1.0, 4.0),
            Axis::new("y", Scale::Linear, 0.0, 1.0),
            &xs,
            &ys,
            &vals,
            &[vec![(1.0, 0.5), (4.0, 0.5)]],
            &[],
        );
        assert_eq!(s.matches("<rect").count(), 1 + 1 + 6 + 40);
    }
}

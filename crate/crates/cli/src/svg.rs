//! Minimal deterministic SVG plots: sample paths, ECDF overlays and QQ plots.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        Self { x: padded_range(xs), y: padded_range(ys) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.03 * (hi - lo);
    (lo - pad, hi + pad)
}

fn header(out: &mut String, title: &str, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1) = (MARGIN, WIDTH - MARGIN);
    let (y0, y1) = (HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(out, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{x0}" y="{}" text-anchor="start">{:.3}</text>"#, y0 + 14.0, frame.x.0);
    let _ = writeln!(out, r#"<text x="{x1}" y="{}" text-anchor="end">{:.3}</text>"#, y0 + 14.0, frame.x.1);
    let _ = writeln!(out, r#"<text x="{}" y="{y0}" text-anchor="end">{:.3}</text>"#, x0 - 4.0, frame.y.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, x0 - 4.0, y1 + 4.0, frame.y.1);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 8.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn polyline(out: &mut String, frame: &Frame, points: impl Iterator<Item = (f64, f64)>, color: &str) {
    let mut d = String::new();
    for (i, (x, y)) in points.enumerate() {
        let _ = write!(d, "{}{:.2} {:.2}", if i == 0 { "M" } else { " L" }, frame.px(x), frame.py(y));
    }
    let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Up to `max_paths` sample paths against time.
pub fn paths_plot(title: &str, times: &[f64], paths: &[&[f64]], max_paths: usize) -> String {
    let shown = &paths[..paths.len().min(max_paths)];
    let frame = Frame::new(times.iter().copied(), shown.iter().flat_map(|p| p.iter().copied()));
    let mut out = String::new();
    header(&mut out, title, &frame, "t", "X_t");
    for (i, p) in shown.iter().enumerate() {
        polyline(&mut out, &frame, times.iter().copied().zip(p.iter().copied()), COLORS[i % COLORS.len()]);
    }
    out.push_str("</svg>\n");
    out
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical CDFs of two samples on common axes.
pub fn ecdf_plot(title: &str, a: (&str, &[f64]), b: (&str, &[f64])) -> String {
    let (sa, sb) = (sorted(a.1), sorted(b.1));
    let frame = Frame::new(sa.iter().chain(&sb).copied(), [0.0, 1.0].into_iter());
    let mut out = String::new();
    header(&mut out, title, &frame, "x", "ECDF");
    for (i, (label, s)) in [(a.0, &sa), (b.0, &sb)].into_iter().enumerate() {
        let n = s.len() as f64;
        let step = (s.len() / 400).max(1);
        let pts = s.iter().enumerate().step_by(step).map(|(k, &x)| (x, (k + 1) as f64 / n));
        polyline(&mut out, &frame, pts, COLORS[i]);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            COLORS[i],
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Quantiles of `a` against quantiles of `b` with the diagonal.
pub fn qq_plot(title: &str, a: (&str, &[f64]), b: (&str, &[f64])) -> String {
    let (sa, sb) = (sorted(a.1), sorted(b.1));
    let q = |s: &[f64], p: f64| s[((p * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
    let probs: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let pts: Vec<(f64, f64)> = probs.iter().map(|&p| (q(&sb, p), q(&sa, p))).collect();
    let frame = Frame::new(
        pts.iter().map(|p| p.0).chain(pts.iter().map(|p| p.1)),
        pts.iter().map(|p| p.1).chain(pts.iter().map(|p| p.0)),
    );
    let mut out = String::new();
    header(&mut out, title, &frame, b.0, a.0);
    let lo = frame.x.0.max(frame.y.0);
    let hi = frame.x.1.min(frame.y.1);
    polyline(&mut out, &frame, [(lo, lo), (hi, hi)].into_iter(), "#999999");
    for (x, y) in pts {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}"/>"#, frame.px(x), frame.py(y), COLORS[0]);
    }
    out.push_str("</svg>\n");
    out
}

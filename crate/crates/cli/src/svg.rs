//! Deterministic SVG charts of one eigenvalue curve and its fit.

use std::fmt::Write;

use leadlag_core::{EigenCurve, FitResult};

use crate::args::Axis;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 52.0;
const FIT_SAMPLES: usize = 96;
const Y_TICKS: usize = 5;

struct Frame {
    axis: Axis,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x_of(&self, tau: f64) -> f64 {
        let t = match self.axis {
            Axis::Log => tau.log10(),
            Axis::Linear => tau,
        };
        LEFT + (t - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn y_of(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Integer scales spread over `[lo, hi]` for drawing the fitted law.
fn fit_scales(lo: u64, hi: u64, axis: Axis) -> Vec<u64> {
    let mut taus: Vec<u64> = (0..=FIT_SAMPLES)
        .map(|k| {
            let s = k as f64 / FIT_SAMPLES as f64;
            let t = match axis {
                Axis::Log => (lo as f64).powf(1.0 - s) * (hi as f64).powf(s),
                Axis::Linear => lo as f64 + s * (hi - lo) as f64,
            };
            (t.round() as u64).clamp(lo, hi)
        })
        .collect();
    taus.dedup();
    taus
}

fn polyline(out: &mut String, class: &str, points: &[(f64, f64)], style: &str) {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" fill="none" {style} points="{}"/>"#,
        coords.join(" ")
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn render(curve: &EigenCurve, fit: Option<&FitResult>, axis: Axis, title: &str) -> String {
    let (lo, hi) = match (curve.taus.first(), curve.taus.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (1, 2),
    };
    let fitted: Vec<(u64, f64)> = match fit {
        Some(f) => fit_scales(lo, hi, axis)
            .into_iter()
            .filter_map(|t| f.predict(t).ok().map(|v| (t, v)))
            .collect(),
        None => Vec::new(),
    };

    let values = curve.values.iter().chain(fitted.iter().map(|p| &p.1));
    let (mut y0, mut y1) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    let span = y1 - y0;
    let pad = if span > 0.0 {
        0.06 * span
    } else {
        (0.05 * y0.abs()).max(1e-9)
    };
    let (mut x0, mut x1) = match axis {
        Axis::Log => ((lo as f64).log10(), (hi as f64).log10()),
        Axis::Linear => (lo as f64, hi as f64),
    };
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let frame = Frame {
        axis,
        x0,
        x1,
        y0: y0 - pad,
        y1: y1 + pad,
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // axes
    let (bx, by) = (LEFT, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path class="axes" d="M{bx:.2},{TOP:.2} L{bx:.2},{by:.2} L{:.2},{by:.2}" stroke="black" fill="none"/>"#,
        WIDTH - RIGHT
    );
    for &tau in &curve.taus {
        let x = frame.x_of(tau as f64);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{by:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{tau}</text>"#,
            by + 5.0,
            by + 19.0
        );
    }
    for k in 0..Y_TICKS {
        let v = frame.y0 + (frame.y1 - frame.y0) * k as f64 / (Y_TICKS - 1) as f64;
        let y = frame.y_of(v);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{bx:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            bx - 5.0,
            bx - 8.0,
            y + 4.0,
            tick_label(v)
        );
    }
    let scale_label = match axis {
        Axis::Log => "tau (base steps, log scale)",
        Axis::Linear => "tau (base steps)",
    };
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{scale_label}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">eigenvalue</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0
    );

    // data
    let empirical: Vec<(f64, f64)> = curve
        .points()
        .map(|(t, v)| (frame.x_of(t as f64), frame.y_of(v)))
        .collect();
    polyline(
        &mut out,
        "empirical",
        &empirical,
        r##"stroke="#1f4e9c" stroke-width="1.5""##,
    );
    for (x, y) in &empirical {
        let _ = writeln!(
            out,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="#1f4e9c"/>"##
        );
    }
    if let Some(f) = fit {
        let pts: Vec<(f64, f64)> = fitted
            .iter()
            .map(|&(t, v)| (frame.x_of(t as f64), frame.y_of(v)))
            .collect();
        polyline(
            &mut out,
            "fit",
            &pts,
            r##"stroke="#c0392b" stroke-width="1.5" stroke-dasharray="6 4""##,
        );
        let _ = writeln!(
            out,
            r##"<text class="legend" x="{:.2}" y="{:.2}" text-anchor="end" fill="#c0392b">fit: alpha = {:.4}, N gamma = {:.4}</text>"##,
            WIDTH - RIGHT - 4.0,
            TOP + 14.0,
            f.alpha,
            f.amplitude
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_scales_cover_range() {
        let t = fit_scales(1, 128, Axis::Log);
        assert_eq!(t.first(), Some(&1));
        assert_eq!(t.last(), Some(&128));
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(fit_scales(3, 3, Axis::Linear), vec![3]);
    }

    #[test]
    fn single_point_curve_renders() {
        let curve = EigenCurve::new(vec![4], vec![2.0], 1).unwrap();
        let svg = render(&curve, None, Axis::Linear, "rank 1");
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn escapes_title() {
        let curve = EigenCurve::new(vec![1, 2], vec![2.0, 3.0], 1).unwrap();
        assert!(render(&curve, None, Axis::Log, "a<b").contains("a&lt;b"));
    }
}

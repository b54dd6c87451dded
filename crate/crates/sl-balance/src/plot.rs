//! Minimal hand-rolled SVG plots for trial artifacts: distance-vs-time
//! traces per condition and GRF scatter clouds with their fitted
//! ellipses. No rendering dependency; the files are plain text and
//! test-assertable.

use std::fmt::Write;

use nalgebra::Vector2;

use crate::metrics::{DistanceSeries, ForceEllipse};
use crate::sim::Condition;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn condition_color(c: Condition) -> &'static str {
    match c {
        Condition::HOnly => "#4c72b0",
        Condition::NoComp => "#c44e52",
        Condition::Comp => "#55a868",
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }
    fn y(&self, v: f64) -> f64 {
        // SVG y grows downward.
        HEIGHT - MARGIN - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn pad(lo: f64, hi: f64) -> (f64, f64) {
    let span = (hi - lo).max(1e-9);
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn open_svg(out: &mut String, title: &str, x_label: &str, y_label: &str, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        title
    );
    // Axes.
    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}" stroke="black"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0,
        x_label
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        y_label
    );
    // Tick labels at the corners of the data range.
    for (v, px) in [(frame.x_min, frame.x(frame.x_min)), (frame.x_max, frame.x(frame.x_max))] {
        let _ = writeln!(
            out,
            r#"<text x="{px}" y="{}" text-anchor="middle">{v:.2}</text>"#,
            HEIGHT - MARGIN + 18.0
        );
    }
    for (v, py) in [(frame.y_min, frame.y(frame.y_min)), (frame.y_max, frame.y(frame.y_max))] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{py}" text-anchor="end">{v:.3}</text>"#,
            MARGIN - 6.0
        );
    }
}

fn legend(out: &mut String, entries: &[Condition]) {
    for (i, c) in entries.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{}"/>"#,
            WIDTH - MARGIN - 92.0,
            y - 10.0,
            condition_color(*c)
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}">{}</text>"#,
            WIDTH - MARGIN - 76.0,
            c.as_str()
        );
    }
}

/// Distance-vs-time traces, one polyline per series.
pub fn distance_svg(title: &str, series: &[&DistanceSeries]) -> String {
    let mut out = String::new();
    if series.is_empty() || series.iter().any(|s| s.values.is_empty()) {
        return out;
    }
    let x_max = series.iter().flat_map(|s| s.times.last()).fold(0.0f64, |a, &b| a.max(b));
    let v_max = series
        .iter()
        .flat_map(|s| s.values.iter())
        .fold(0.0f64, |a, &b| a.max(b));
    let (y_min, y_max) = pad(0.0, v_max.max(1e-6));
    let frame = Frame { x_min: 0.0, x_max: x_max.max(1e-9), y_min, y_max };

    open_svg(&mut out, title, "time (s)", "distance (m)", &frame);
    for s in series {
        // Subsample long traces; SVG does not need 7500 vertices.
        let step = (s.values.len() / 600).max(1);
        let mut points = String::new();
        for i in (0..s.values.len()).step_by(step) {
            let _ = write!(points, "{:.2},{:.2} ", frame.x(s.times[i]), frame.y(s.values[i]));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.6"/>"#,
            points.trim_end(),
            condition_color(s.condition)
        );
    }
    legend(&mut out, &series.iter().map(|s| s.condition).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// GRF scatter per condition plus the fitted coverage ellipses.
pub fn grf_svg(
    title: &str,
    clouds: &[(Condition, Vec<Vector2<f64>>, ForceEllipse)],
) -> String {
    let mut out = String::new();
    if clouds.is_empty() {
        return out;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, pts, e) in clouds {
        for p in pts {
            lo = lo.min(p.x.min(p.y));
            hi = hi.max(p.x.max(p.y));
        }
        let r = e.semi_axes.x;
        lo = lo.min(e.center.x - r).min(e.center.y - r);
        hi = hi.max(e.center.x + r).max(e.center.y + r);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return out;
    }
    let (min, max) = pad(lo, hi);
    let frame = Frame { x_min: min, x_max: max, y_min: min, y_max: max };

    open_svg(&mut out, title, "GRF x (N)", "GRF y (N)", &frame);
    for (cond, pts, ellipse) in clouds {
        let color = condition_color(*cond);
        let step = (pts.len() / 400).max(1);
        for p in pts.iter().step_by(step) {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.4" fill="{}" fill-opacity="0.35"/>"#,
                frame.x(p.x),
                frame.y(p.y),
                color
            );
        }
        // Pixel scale is isotropic (square frame), so the ellipse maps
        // to an ellipse; the rotation flips sign because SVG y points
        // down.
        let sx = (WIDTH - 2.0 * MARGIN) / (frame.x_max - frame.x_min);
        let _ = writeln!(
            out,
            r#"<ellipse cx="{:.2}" cy="{:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.2} {:.2} {:.2})" fill="none" stroke="{}" stroke-width="1.8"/>"#,
            frame.x(ellipse.center.x),
            frame.y(ellipse.center.y),
            ellipse.semi_axes.x * sx,
            ellipse.semi_axes.y * sx,
            -ellipse.orientation.to_degrees(),
            frame.x(ellipse.center.x),
            frame.y(ellipse.center.y),
            color
        );
    }
    legend(&mut out, &clouds.iter().map(|(c, _, _)| *c).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

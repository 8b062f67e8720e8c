//! Minimal scatter-plot writer. Output depends only on the inputs, so
//! identical data always yields byte-identical files.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 56.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Fixed colour for a class id; ids past the palette get evenly spaced hues.
pub fn class_color(id: usize) -> String {
    match PALETTE.get(id) {
        Some(c) => (*c).to_string(),
        None => {
            let hue = (id as f64 * 137.507_764) % 360.0;
            format!("hsl({hue:.1},65%,45%)")
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Frame {
    fn plot_w() -> f64 {
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_h() -> f64 {
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    fn px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN_LEFT + (x - lo) / (hi - lo) * Self::plot_w()
    }

    fn py(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        MARGIN_TOP + Self::plot_h() - (y - lo) / (hi - lo) * Self::plot_h()
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    (lo - 0.05 * span, hi + 0.05 * span)
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" font-size="16" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + Frame::plot_w() / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
        Frame::plot_w(),
        Frame::plot_h()
    );
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let xv = frame.x_range.0 + f * (frame.x_range.1 - frame.x_range.0);
        let yv = frame.y_range.0 + f * (frame.y_range.1 - frame.y_range.0);
        let (x, y) = (frame.px(xv), frame.py(yv));
        let bottom = MARGIN_TOP + Frame::plot_h();
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{xv:.2}</text>"##,
            bottom + 5.0,
            bottom + 18.0
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_LEFT:.2}" y2="{y:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{yv:.2}</text>"##,
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + Frame::plot_w() / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        MARGIN_TOP + Frame::plot_h() / 2.0,
        MARGIN_TOP + Frame::plot_h() / 2.0,
        escape(y_label)
    );
}

/// Class-coloured scatter of 2-D points with a legend of class names.
pub fn embedding_scatter(points: &[[f64; 2]], labels: &[usize], class_names: &[String], title: &str) -> String {
    let frame = Frame {
        x_range: padded_range(points.iter().map(|p| p[0])),
        y_range: padded_range(points.iter().map(|p| p[1])),
    };
    let mut out = String::new();
    header(&mut out, title, "z0", "z1", &frame);
    out.push_str("<g class=\"points\">\n");
    for (p, &l) in points.iter().zip(labels) {
        let _ = writeln!(
            out,
            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.8"/>"#,
            frame.px(p[0]),
            frame.py(p[1]),
            class_color(l)
        );
    }
    out.push_str("</g>\n<g class=\"legend\">\n");
    let x = WIDTH - MARGIN_RIGHT + 16.0;
    for (id, name) in class_names.iter().enumerate() {
        let y = MARGIN_TOP + 10.0 + 18.0 * id as f64;
        let _ = writeln!(
            out,
            r#"<g class="legend-entry"><circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{}"/><text x="{:.2}" y="{:.2}" font-size="12">{}</text></g>"#,
            class_color(id),
            x + 10.0,
            y + 4.0,
            escape(name)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

/// Metric `A` against test accuracy, one labelled point per representation.
pub fn correlation_scatter(points: &[(String, f64, f64)], pearson_r: f64) -> String {
    let frame = Frame {
        x_range: (0.0, 1.0),
        y_range: (0.0, 1.0),
    };
    let mut out = String::new();
    header(
        &mut out,
        &format!("Estimate A vs test accuracy (r = {pearson_r:.3})"),
        "metric A (train)",
        "test accuracy",
        &frame,
    );
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
        frame.px(0.0),
        frame.py(0.0),
        frame.px(1.0),
        frame.py(1.0)
    );
    out.push_str("<g class=\"points\">\n");
    for (i, (name, a, acc)) in points.iter().enumerate() {
        let (x, y) = (frame.px(*a), frame.py(*acc));
        let _ = writeln!(
            out,
            r#"<circle class="point" cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            class_color(i),
            x + 6.0,
            y - 6.0,
            escape(name)
        );
    }
    out.push_str("</g>\n</svg>\n");
    out
}

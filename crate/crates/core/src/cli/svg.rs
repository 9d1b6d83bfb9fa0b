//! Minimal SVG line plots, written by hand.

use std::fmt::Write;

use nalgebra::DVector;

use crate::sim::TrajectoryLog;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
];

struct Series {
    label: String,
    color: &'static str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

/// Axis-aligned box mapping data coordinates onto the canvas.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit(series: &[Series], equal_aspect: bool) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut y = (f64::INFINITY, f64::NEG_INFINITY);
        for &(px, py) in series.iter().flat_map(|s| &s.points) {
            x = (x.0.min(px), x.1.max(px));
            y = (y.0.min(py), y.1.max(py));
        }
        if !x.0.is_finite() {
            x = (0.0, 1.0);
            y = (0.0, 1.0);
        }
        let widen = |r: (f64, f64)| if r.1 - r.0 < 1e-12 { (r.0 - 0.5, r.1 + 0.5) } else { r };
        let (mut x, mut y) = (widen(x), widen(y));
        if equal_aspect {
            let sx = (x.1 - x.0) / (WIDTH - 2.0 * MARGIN);
            let sy = (y.1 - y.0) / (HEIGHT - 2.0 * MARGIN);
            let s = sx.max(sy);
            let pad = |r: (f64, f64), span: f64| {
                let c = 0.5 * (r.0 + r.1);
                (c - 0.5 * span, c + 0.5 * span)
            };
            x = pad(x, s * (WIDTH - 2.0 * MARGIN));
            y = pad(y, s * (HEIGHT - 2.0 * MARGIN));
        }
        Self { x, y }
    }

    fn map(&self, (px, py): (f64, f64)) -> (f64, f64) {
        let u = MARGIN + (px - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN);
        let v = HEIGHT - MARGIN - (py - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN);
        (u, v)
    }
}

fn render(title: &str, series: &[Series], frame: &Frame, axes: Option<(&str, &str)>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{title}</text>"#,
        WIDTH / 2.0
    );
    if let Some((xlabel, ylabel)) = axes {
        let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            out,
            r#"<path d="M{x0} {MARGIN} L{x0} {y0} L{} {y0}" stroke="black" fill="none"/>"#,
            WIDTH - MARGIN
        );
        for k in 0..=5 {
            let f = k as f64 / 5.0;
            let xv = frame.x.0 + f * (frame.x.1 - frame.x.0);
            let yv = frame.y.0 + f * (frame.y.1 - frame.y.0);
            let (u, _) = frame.map((xv, frame.y.0));
            let (_, v) = frame.map((frame.x.0, yv));
            let _ = writeln!(out, r#"<text x="{u:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#, y0 + 18.0);
            let _ = writeln!(out, r#"<text x="{:.1}" y="{v:.1}" text-anchor="end">{yv:.3}</text>"#, x0 - 6.0);
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0
        );
    }
    for s in series {
        let mut d = String::new();
        for (k, &p) in s.points.iter().enumerate() {
            let (u, v) = frame.map(p);
            let _ = write!(d, "{}{u:.2} {v:.2} ", if k == 0 { "M" } else { "L" });
        }
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<path d="{}" stroke="{}" stroke-width="1.5" fill="none"{dash}/>"#,
            d.trim_end(),
            s.color
        );
    }
    for (k, s) in series.iter().enumerate() {
        let y = MARGIN + 16.0 * k as f64;
        let x = WIDTH - MARGIN - 110.0;
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#,
            x + 20.0,
            s.color
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, s.label);
    }
    out.push_str("</svg>\n");
    out
}

/// Fixed oblique view of a 3-D point; lower dimensions are zero-padded and
/// only the first three coordinates are used.
fn project(p: &DVector<f64>) -> (f64, f64) {
    let c = |k: usize| p.get(k).copied().unwrap_or(0.0);
    let (az, el) = (35f64.to_radians(), 25f64.to_radians());
    let (x, y, z) = (c(0), c(1), c(2));
    let u = x * az.cos() - y * az.sin();
    let depth = x * az.sin() + y * az.cos();
    let v = z * el.cos() + depth * el.sin();
    (u, v)
}

/// Orthographic view of the target, the reference and every influencer.
pub fn trajectory_svg(log: &TrajectoryLog) -> String {
    let mut series = vec![
        Series {
            label: "desired".into(),
            color: "#7f7f7f",
            dashed: true,
            points: log.samples.iter().map(|s| project(&s.desired)).collect(),
        },
        Series {
            label: "target".into(),
            color: "#d62728",
            dashed: false,
            points: log.samples.iter().map(|s| project(&s.target)).collect(),
        },
    ];
    for i in 0..log.node_count {
        series.push(Series {
            label: format!("influencer {}", i + 1),
            color: PALETTE[i % PALETTE.len()],
            dashed: false,
            points: log.samples.iter().map(|s| project(&s.nodes[i].position)).collect(),
        });
    }
    let frame = Frame::fit(&series, true);
    render("Trajectories", &series, &frame, None)
}

/// `|e(t)|` against time.
pub fn tracking_error_svg(log: &TrajectoryLog) -> String {
    let series = [Series {
        label: "|e|".into(),
        color: "#d62728",
        dashed: false,
        points: log.samples.iter().map(|s| (s.t, s.error_norm)).collect(),
    }];
    let mut frame = Frame::fit(&series, false);
    frame.y.0 = frame.y.0.min(0.0);
    render("Target tracking error", &series, &frame, Some(("t [s]", "|e| [m]")))
}

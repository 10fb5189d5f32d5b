//! Four-panel SVG of one episode: trajectory, controls, cross-track error
//! and speed.

use std::fmt::Write as _;

use tracker_core::kpi::EpisodeTrace;
use tracker_core::{Obstacle, Path};

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 48.0;

struct Series<'a> {
    points: Vec<(f64, f64)>,
    color: &'a str,
    dashed: bool,
    label: &'a str,
}

#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn fit(x0: f64, y0: f64, pts: impl Iterator<Item = (f64, f64)>, equal: bool) -> Self {
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for (x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        if xmax - xmin < 1e-9 {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if ymax - ymin < 1e-9 {
            ymin -= 0.5;
            ymax += 0.5;
        }
        let pad_y = 0.05 * (ymax - ymin);
        let (mut ymin, mut ymax) = (ymin - pad_y, ymax + pad_y);
        let (mut xmin, mut xmax) = (xmin, xmax);
        if equal {
            let sx = (xmax - xmin) / (PANEL_W - 2.0 * MARGIN);
            let sy = (ymax - ymin) / (PANEL_H - 2.0 * MARGIN);
            let s = sx.max(sy);
            let (cx, cy) = ((xmin + xmax) / 2.0, (ymin + ymax) / 2.0);
            xmin = cx - s * (PANEL_W - 2.0 * MARGIN) / 2.0;
            xmax = cx + s * (PANEL_W - 2.0 * MARGIN) / 2.0;
            ymin = cy - s * (PANEL_H - 2.0 * MARGIN) / 2.0;
            ymax = cy + s * (PANEL_H - 2.0 * MARGIN) / 2.0;
        }
        Self {
            x0,
            y0,
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + MARGIN + (x - self.xmin) / (self.xmax - self.xmin) * (PANEL_W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + PANEL_H - MARGIN - (y - self.ymin) / (self.ymax - self.ymin) * (PANEL_H - 2.0 * MARGIN)
    }

    fn scale(&self) -> f64 {
        (PANEL_W - 2.0 * MARGIN) / (self.xmax - self.xmin)
    }
}

fn panel(svg: &mut String, f: &Frame, title: &str, xlabel: &str, series: &[Series]) {
    let (l, r) = (f.x0 + MARGIN, f.x0 + PANEL_W - MARGIN);
    let (t, b) = (f.y0 + MARGIN, f.y0 + PANEL_H - MARGIN);
    let _ = writeln!(
        svg,
        r#"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{title}</text>"#,
        (l + r) / 2.0,
        t - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{xlabel}</text>"#,
        (l + r) / 2.0,
        b + 30.0
    );
    for (v, x, anchor) in [(f.xmin, l, "start"), (f.xmax, r, "end")] {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="{anchor}" font-size="10">{v:.2}</text>"#,
            b + 14.0
        );
    }
    for (v, y) in [(f.ymin, b), (f.ymax, t + 8.0)] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="end" font-size="10">{v:.2}</text>"#,
            l - 4.0
        );
    }
    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
            pts.join(" "),
            s.color
        );
        let ly = t + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" text-anchor="end" font-size="11" fill="{}">{}</text>"#,
            r - 6.0,
            s.color,
            s.label
        );
    }
}

fn obstacle_shapes(svg: &mut String, f: &Frame, obstacles: &[Obstacle]) {
    for o in obstacles {
        match *o {
            Obstacle::Circle { center, radius } => {
                let _ = writeln!(
                    svg,
                    r#"<circle class="obstacle" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="red" fill-opacity="0.4" stroke="red"/>"#,
                    f.px(center.x),
                    f.py(center.y),
                    radius * f.scale()
                );
            }
            Obstacle::Rect {
                center,
                width,
                height,
            } => {
                let _ = writeln!(
                    svg,
                    r#"<rect class="obstacle" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="red" fill-opacity="0.4" stroke="red"/>"#,
                    f.px(center.x - width / 2.0),
                    f.py(center.y + height / 2.0),
                    width * f.scale(),
                    height * f.scale()
                );
            }
        }
    }
}

/// Renders the episode; `obstacles` is `None` when no obstacle file was given.
pub fn render(trace: &EpisodeTrace, path: &Path, obstacles: Option<&[Obstacle]>) -> String {
    let s = &trace.steps;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        2.0 * PANEL_W,
        2.0 * PANEL_H,
        2.0 * PANEL_W,
        2.0 * PANEL_H
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let target: Vec<(f64, f64)> = path.waypoints().iter().map(|w| (w.position.x, w.position.y)).collect();
    let driven: Vec<(f64, f64)> = s.iter().map(|r| (r.x, r.y)).collect();
    let f = Frame::fit(0.0, 0.0, target.iter().chain(&driven).copied(), true);
    panel(
        &mut svg,
        &f,
        "Trajectory",
        "x [m]",
        &[
            Series {
                points: target,
                color: "gray",
                dashed: true,
                label: "target",
            },
            Series {
                points: driven,
                color: "blue",
                dashed: false,
                label: "driven",
            },
        ],
    );
    if let Some(obs) = obstacles {
        obstacle_shapes(&mut svg, &f, obs);
    }

    let time = |g: fn(&tracker_core::kpi::TraceStep) -> f64| -> Vec<(f64, f64)> {
        s.iter().map(|r| (r.t, g(r))).collect()
    };
    let u1 = time(|r| r.u1);
    let u2 = time(|r| r.u2);
    let f = Frame::fit(PANEL_W, 0.0, u1.iter().chain(&u2).copied(), false);
    panel(
        &mut svg,
        &f,
        "Controls",
        "t [s]",
        &[
            Series {
                points: u1,
                color: "blue",
                dashed: false,
                label: "acceleration",
            },
            Series {
                points: u2,
                color: "green",
                dashed: false,
                label: "steering",
            },
        ],
    );

    let e = time(|r| r.x1);
    let f = Frame::fit(0.0, PANEL_H, e.iter().copied(), false);
    panel(
        &mut svg,
        &f,
        "Cross-track error",
        "t [s]",
        &[Series {
            points: e,
            color: "blue",
            dashed: false,
            label: "e [m]",
        }],
    );

    let v = time(|r| r.v);
    // x2 is target minus actual speed
    let vt = time(|r| r.v + r.x2);
    let f = Frame::fit(PANEL_W, PANEL_H, v.iter().chain(&vt).copied(), false);
    panel(
        &mut svg,
        &f,
        "Speed",
        "t [s]",
        &[
            Series {
                points: vt,
                color: "gray",
                dashed: true,
                label: "target",
            },
            Series {
                points: v,
                color: "blue",
                dashed: false,
                label: "driven",
            },
        ],
    );
    svg.push_str("</svg>\n");
    svg
}

//! Minimal SVG plots: bearing quivers, streamlines, error heat maps and
//! mission paths, in world coordinates with north up.

use std::fmt::Write as _;

use crate::evaluation::{EvalReport, StreamTrace};
use crate::geometry::{to_world, Position2D, Vec2};
use crate::homing::{HomingRun, Phase};
use crate::world::LandmarkWorld;

const SIZE: f64 = 600.0;
const MARGIN: f64 = 30.0;

/// Maps a world rectangle onto the canvas.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    min: Vec2,
    scale: f64,
    height: f64,
}

impl Frame {
    pub fn fit(points: impl IntoIterator<Item = Position2D>, pad: f64) -> Self {
        let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.is_finite() || !hi.is_finite() {
            lo = Vec2::new(-1.0, -1.0);
            hi = Vec2::new(1.0, 1.0);
        }
        lo = lo - Vec2::new(pad, pad);
        hi = hi + Vec2::new(pad, pad);
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
        let scale = (SIZE - 2.0 * MARGIN) / span;
        Frame { min: lo, scale, height: (hi.y - lo.y) * scale + 2.0 * MARGIN }
    }

    pub fn map(&self, p: Position2D) -> (f64, f64) {
        (
            MARGIN + (p.x - self.min.x) * self.scale,
            self.height - MARGIN - (p.y - self.min.y) * self.scale,
        )
    }

    fn width(&self) -> f64 {
        SIZE
    }
}

fn open(frame: &Frame, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#,
        w = frame.width(),
        h = frame.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="18" font-family="sans-serif" font-size="13">{}</text>"#, escape(title));
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn landmarks(s: &mut String, frame: &Frame, world: &LandmarkWorld) {
    for t in &world.landmarks {
        let (x, y) = frame.map(t.position);
        let _ = writeln!(
            s,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="#6a9a5b" fill-opacity="0.5"/>"##,
            t.canopy_radius * frame.scale
        );
    }
    let (x, y) = frame.map(world.nest);
    let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="#d62728"/>"##);
}

fn polyline(s: &mut String, frame: &Frame, pts: &[Position2D], color: &str, width: f64) {
    let mut d = String::new();
    for p in pts {
        let (x, y) = frame.map(*p);
        let _ = write!(d, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
        d.trim_end()
    );
}

/// Arrows of the world-frame predicted home vectors, scaled by confidence.
pub fn quiver(report: &EvalReport, world: &LandmarkWorld, title: &str) -> String {
    let frame = Frame::fit(report.records.iter().map(|r| r.position).chain([world.nest]), 1.0);
    let spacing = min_spacing(report).unwrap_or(1.0);
    let mut s = open(&frame, title);
    landmarks(&mut s, &frame, world);
    for r in &report.records {
        let v = to_world(r.predicted, report.gaze);
        let (x0, y0) = frame.map(r.position);
        let (x1, y1) = frame.map(r.position + v * (0.8 * spacing));
        let _ = writeln!(
            s,
            r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="black" stroke-width="1"/>"#
        );
        let _ = writeln!(s, r#"<circle cx="{x0:.2}" cy="{y0:.2}" r="1.2" fill="black"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

fn min_spacing(report: &EvalReport) -> Option<f64> {
    let pts: Vec<_> = report.records.iter().map(|r| r.position).take(200).collect();
    let mut best = f64::INFINITY;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let d = a.distance(*b);
            if d > 1e-9 {
                best = best.min(d);
            }
        }
    }
    best.is_finite().then_some(best)
}

/// Angular error per location as colored squares, blue (0) to red (180).
pub fn error_heatmap(report: &EvalReport, world: &LandmarkWorld, title: &str) -> String {
    let frame = Frame::fit(report.records.iter().map(|r| r.position).chain([world.nest]), 1.0);
    let cell = min_spacing(report).unwrap_or(1.0) * frame.scale;
    let mut s = open(&frame, title);
    for r in &report.records {
        let (x, y) = frame.map(r.position);
        let fill = match r.error_deg {
            Some(e) => {
                let t = (e / 180.0).clamp(0.0, 1.0);
                format!("rgb({:.0},{:.0},{:.0})", 255.0 * t, 60.0, 255.0 * (1.0 - t))
            }
            None => "rgb(200,200,200)".into(),
        };
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{fill}"/>"#,
            x - cell / 2.0,
            y - cell / 2.0
        );
    }
    landmarks(&mut s, &frame, world);
    s.push_str("</svg>\n");
    s
}

/// Stream traces with their start points marked.
pub fn streams(traces: &[StreamTrace], world: &LandmarkWorld, title: &str) -> String {
    let frame = Frame::fit(traces.iter().flat_map(|t| t.points.iter().copied()).chain([world.nest]), 1.0);
    let mut s = open(&frame, title);
    landmarks(&mut s, &frame, world);
    for t in traces {
        polyline(&mut s, &frame, &t.points, "#1f77b4", 1.5);
        let (x, y) = frame.map(t.start());
        let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#1f77b4"/>"##);
    }
    s.push_str("</svg>\n");
    s
}

/// Mission paths colored by phase.
pub fn missions(runs: &[&HomingRun], world: &LandmarkWorld, title: &str) -> String {
    let frame = Frame::fit(
        runs.iter()
            .flat_map(|r| r.path.iter().filter(|p| p.phase != Phase::Outbound).map(|p| p.position))
            .chain([world.nest]),
        1.0,
    );
    let mut s = open(&frame, title);
    landmarks(&mut s, &frame, world);
    for (i, run) in runs.iter().enumerate() {
        for (phase, color, width) in [
            (Phase::Learning, "#999999", 0.8),
            (Phase::Inbound, "#ff7f0e", 1.0),
            (Phase::Homing, if run.success { "#2ca02c" } else { "#d62728" }, 1.6),
        ] {
            if phase == Phase::Learning && i > 0 {
                continue;
            }
            let pts: Vec<_> = run.path.iter().filter(|p| p.phase == phase).map(|p| p.position).collect();
            polyline(&mut s, &frame, &pts, color, width);
        }
    }
    s.push_str("</svg>\n");
    s
}

//! Bearing maps, stream-field integration and convergence statistics.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angular_error, relative_home_vector, to_world, HeadingAngle, HomeVector, Position2D, Vec2};
use crate::network::{forward, Params, Scalar};
use crate::omni::{rectify, ImagingConfig, PanoramaImage};
use crate::world::LandmarkWorld;

/// Prediction norms below this count as undefined directions.
pub const MIN_PREDICTION_NORM: f64 = 1e-12;

/// Default start-circle radius for stream fields: half a metre inside the
/// 10 m evaluation square, so every learning pattern's domain contains it.
pub const STREAM_START_RADIUS: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub position: Position2D,
    pub predicted: HomeVector,
    pub truth: HomeVector,
    /// `None` when the prediction has no direction.
    pub error_deg: Option<f64>,
    /// Norm of the raw prediction.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub gaze: HeadingAngle,
    pub records: Vec<EvalRecord>,
    /// Mean over records with a defined error, degrees.
    pub mean_error: f64,
    /// Sample standard deviation of the defined errors, degrees.
    pub std_error: f64,
    /// Records whose prediction had no direction.
    pub undefined: usize,
}

impl EvalReport {
    pub fn from_records(gaze: HeadingAngle, records: Vec<EvalRecord>) -> Self {
        let errs: Vec<f64> = records.iter().filter_map(|r| r.error_deg).collect();
        let n = errs.len();
        let mean = if n == 0 { f64::NAN } else { errs.iter().sum::<f64>() / n as f64 };
        let std = if n < 2 {
            0.0
        } else {
            (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        EvalReport {
            gaze,
            undefined: records.len() - n,
            records,
            mean_error: mean,
            std_error: std,
        }
    }

    pub fn mean_confidence(&self) -> f64 {
        self.records.iter().map(|r| r.confidence).sum::<f64>() / self.records.len().max(1) as f64
    }

    /// Columns `x,y,pred_x,pred_y,err_deg,confidence`; undefined errors are empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,pred_x,pred_y,err_deg,confidence\n");
        for r in &self.records {
            let err = r.error_deg.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{err},{}",
                r.position.x, r.position.y, r.predicted.x, r.predicted.y, r.confidence
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn record<T: Scalar>(params: &Params<T>, view: &PanoramaImage, position: Position2D, nest: Position2D) -> Result<EvalRecord> {
    let truth = relative_home_vector(position, nest, view.gaze)?;
    let (predicted, _) = forward(params, view)?;
    let confidence = predicted.norm();
    let error_deg = if confidence > MIN_PREDICTION_NORM && confidence.is_finite() {
        Some(angular_error(predicted, truth)?)
    } else {
        None
    };
    Ok(EvalRecord { position, predicted, truth, error_deg, confidence })
}

/// Evaluates several networks at several gazes, rendering each location once.
///
/// Returns `reports[network][gaze]`.
pub fn evaluate_locations<T: Scalar>(
    networks: &[&Params<T>],
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    locations: &[Position2D],
    gazes: &[HeadingAngle],
) -> Result<Vec<Vec<EvalReport>>> {
    imaging.validate()?;
    let per_location: Vec<Vec<Vec<EvalRecord>>> = locations
        .par_iter()
        .enumerate()
        .map(|(index, &pos)| {
            let cat = imaging.capture_catadioptric(world, pos).map_err(|e| Error::Render {
                index,
                x: pos.x,
                y: pos.y,
                reason: e.to_string(),
            })?;
            let views = gazes
                .iter()
                .map(|&g| rectify(&cat, g, imaging.layout))
                .collect::<Result<Vec<_>>>()?;
            networks
                .iter()
                .map(|p| views.iter().map(|v| record(p, v, pos, world.nest)).collect())
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..networks.len())
        .map(|n| {
            gazes
                .iter()
                .enumerate()
                .map(|(g, &gaze)| {
                    EvalReport::from_records(gaze, per_location.iter().map(|l| l[n][g]).collect())
                })
                .collect()
        })
        .collect())
}

/// Predictions at `locations` for a single gaze (north by default).
pub fn bearing_map<T: Scalar>(
    params: &Params<T>,
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    locations: &[Position2D],
    gaze: HeadingAngle,
) -> Result<EvalReport> {
    let mut r = evaluate_locations(&[params], world, imaging, locations, &[gaze])?;
    Ok(r.remove(0).remove(0))
}

/// Same locations, several networks, gaze north.
pub fn bearing_maps<T: Scalar>(
    networks: &[&Params<T>],
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    locations: &[Position2D],
) -> Result<Vec<EvalReport>> {
    Ok(evaluate_locations(networks, world, imaging, locations, &[HeadingAngle::NORTH])?
        .into_iter()
        .map(|mut v| v.remove(0))
        .collect())
}

/// Mean error at several gazes and the largest pairwise difference of means.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeInvariance {
    pub gazes: Vec<HeadingAngle>,
    pub mean_errors: Vec<f64>,
    pub max_difference: f64,
}

pub fn gaze_invariance<T: Scalar>(
    params: &Params<T>,
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    locations: &[Position2D],
    gazes: &[HeadingAngle],
) -> Result<GazeInvariance> {
    let reports = evaluate_locations(&[params], world, imaging, locations, gazes)?.remove(0);
    let mean_errors: Vec<f64> = reports.iter().map(|r| r.mean_error).collect();
    let hi = mean_errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = mean_errors.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(GazeInvariance { gazes: gazes.to_vec(), mean_errors, max_difference: hi - lo })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Came within the convergence radius of the nest.
    Converged,
    /// Oscillating in place away from the nest.
    Stalled,
    MaxSteps,
    LeftDomain,
    /// The network returned a zero or non-finite vector.
    UndefinedDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub step: f64,
    pub max_steps: usize,
    pub convergence_radius: f64,
    /// Stop once this many trailing points lie within `convergence_radius`
    /// of their centroid; `0` disables the check.
    pub stall_window: usize,
    /// Margin added around the learning pattern's bounding box.
    pub domain_margin: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            step: 0.25,
            max_steps: 200,
            convergence_radius: 0.25,
            stall_window: 8,
            domain_margin: 1.0,
        }
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub min: Position2D,
    pub max: Position2D,
}

impl Domain {
    pub fn around(bounds: (Position2D, Position2D), margin: f64) -> Self {
        Domain {
            min: bounds.0 - Vec2::new(margin, margin),
            max: bounds.1 + Vec2::new(margin, margin),
        }
    }

    pub fn contains(&self, p: Position2D) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamTrace {
    pub points: Vec<Position2D>,
    pub termination: Termination,
}

impl StreamTrace {
    pub fn start(&self) -> Position2D {
        self.points[0]
    }

    pub fn end(&self) -> Position2D {
        *self.points.last().expect("trace holds its start point")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,x,y\n");
        for (i, p) in self.points.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{}", p.x, p.y);
        }
        s
    }
}

fn stalled(points: &[Position2D], window: usize, radius: f64) -> bool {
    if window == 0 || points.len() < window {
        return false;
    }
    let tail = &points[points.len() - window..];
    let c = tail.iter().fold(Vec2::default(), |a, &p| a + p) * (1.0 / window as f64);
    tail.iter().all(|p| p.distance(c) <= radius)
}

/// Follows the predicted home vectors at gaze north from `start`.
pub fn stream_integrate<T: Scalar>(
    params: &Params<T>,
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    start: Position2D,
    config: &StreamConfig,
    domain: &Domain,
) -> Result<StreamTrace> {
    if !(config.step > 0.0) || !(config.convergence_radius >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "stream step must be positive (got {}) and the convergence radius non-negative",
            config.step
        )));
    }
    let mut points = vec![start];
    let mut pos = start;
    for _ in 0..config.max_steps {
        if pos.distance(world.nest) <= config.convergence_radius {
            return Ok(StreamTrace { points, termination: Termination::Converged });
        }
        if stalled(&points, config.stall_window, config.convergence_radius) {
            return Ok(StreamTrace { points, termination: Termination::Stalled });
        }
        let view = imaging.capture(world, pos, HeadingAngle::NORTH)?;
        let (pred, _) = forward(params, &view)?;
        let dir = match to_world(pred, view.gaze).normalized() {
            Some(d) if pred.norm() > MIN_PREDICTION_NORM => d,
            _ => return Ok(StreamTrace { points, termination: Termination::UndefinedDirection }),
        };
        pos = pos + dir * config.step;
        points.push(pos);
        if !domain.contains(pos) {
            return Ok(StreamTrace { points, termination: Termination::LeftDomain });
        }
    }
    let termination = if pos.distance(world.nest) <= config.convergence_radius {
        Termination::Converged
    } else {
        Termination::MaxSteps
    };
    Ok(StreamTrace { points, termination })
}

/// Streams from several starts, in parallel.
pub fn stream_field<T: Scalar>(
    params: &Params<T>,
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    starts: &[Position2D],
    config: &StreamConfig,
    domain: &Domain,
) -> Result<Vec<StreamTrace>> {
    starts
        .par_iter()
        .map(|&s| stream_integrate(params, world, imaging, s, config, domain))
        .collect()
}

/// `count` points on a circle of `radius` around `center`, the first due east,
/// proceeding counter-clockwise.
pub fn perimeter_starts(center: Position2D, radius: f64, count: usize) -> Vec<Position2D> {
    (0..count)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / count as f64;
            center + Vec2::new(radius * a.cos(), radius * a.sin())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSummary {
    pub centroid: Position2D,
    pub centroid_distance: f64,
    pub endpoint_distances: Vec<f64>,
    /// Mean distance of the endpoints from their centroid.
    pub dispersion: f64,
}

pub fn convergence_analysis(traces: &[StreamTrace], nest: Position2D) -> Result<ConvergenceSummary> {
    if traces.is_empty() {
        return Err(Error::InvalidArgument("convergence analysis needs at least one trace".into()));
    }
    let ends: Vec<Position2D> = traces.iter().map(StreamTrace::end).collect();
    let centroid = ends.iter().fold(Vec2::default(), |a, &p| a + p) * (1.0 / ends.len() as f64);
    Ok(ConvergenceSummary {
        centroid,
        centroid_distance: centroid.distance(nest),
        endpoint_distances: ends.iter().map(|p| p.distance(nest)).collect(),
        dispersion: ends.iter().map(|p| p.distance(centroid)).sum::<f64>() / ends.len() as f64,
    })
}

/// Bearing maps of frozen `params` before and after rotating the world's
/// landmark array counter-clockwise by `rotation_deg`.
pub fn rotate_landmarks_experiment<T: Scalar>(
    world: &LandmarkWorld,
    params: &Params<T>,
    imaging: &ImagingConfig,
    locations: &[Position2D],
    rotation_deg: f64,
) -> Result<(EvalReport, EvalReport)> {
    let rotated = world.with_array_rotated(rotation_deg)?;
    let before = bearing_map(params, world, imaging, locations, HeadingAngle::NORTH)?;
    let after = bearing_map(params, &rotated, imaging, locations, HeadingAngle::NORTH)?;
    Ok((before, after))
}

/// Location whose predicted home vectors point at it most consistently: the
/// least-squares intersection of the lines through each record along its
/// world-frame prediction.
pub fn implied_nest(report: &EvalReport) -> Option<Position2D> {
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &report.records {
        let Some(d) = to_world(r.predicted, report.gaze).normalized() else {
            continue;
        };
        // projector onto the line normal
        let (m11, m12, m22) = (1.0 - d.x * d.x, -d.x * d.y, 1.0 - d.y * d.y);
        let p = r.position;
        a11 += m11;
        a12 += m12;
        a22 += m22;
        b1 += m11 * p.x + m12 * p.y;
        b2 += m12 * p.x + m22 * p.y;
    }
    let det = a11 * a22 - a12 * a12;
    (det.abs() > 1e-12).then(|| Vec2::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det))
}

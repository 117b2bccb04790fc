//! Learning flight, outbound flight, drift-truncated inbound flight and
//! network-guided visual homing.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{assemble, render_locations, DatasetSpec, TrajectoryPattern};
use crate::error::{Error, Result};
use crate::evaluation::MIN_PREDICTION_NORM;
use crate::geometry::{gaze_angle, to_world, HeadingAngle, HomeVector, Position2D, Vec2};
use crate::network::{forward, train, Architecture, NetworkParams, TrainConfig};
use crate::omni::ImagingConfig;
use crate::world::LandmarkWorld;

/// Straight flight segment; `heading_deg` counter-clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub heading_deg: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftRule {
    /// Perfect path integration, interrupted where the inbound flight
    /// re-enters the learning area.
    StopAtBoundary,
    /// Path integration ends at `nest + (dx, dy)`.
    FixedOffset { dx: f64, dy: f64 },
    /// Random-walk odometry error, `sigma` meters per square-root meter,
    /// stopping where the believed position enters the learning area.
    Gaussian { sigma: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionSpec {
    pub pattern: TrajectoryPattern,
    pub gaze_count: usize,
    /// Outbound legs starting at the nest.
    pub outbound: Vec<Leg>,
    pub drift: DriftRule,
    /// Spacing of recorded outbound and inbound points.
    pub path_step: f64,
    pub homing_step: f64,
    pub success_radius: f64,
    pub max_homing_steps: usize,
}

impl Default for MissionSpec {
    fn default() -> Self {
        MissionSpec {
            pattern: TrajectoryPattern::learning_spiral(crate::world::DEFAULT_NEST),
            gaze_count: 360,
            outbound: vec![Leg { heading_deg: 0.0, distance: 30.0 }],
            drift: DriftRule::StopAtBoundary,
            path_step: 0.25,
            homing_step: 0.25,
            success_radius: 0.25,
            max_homing_steps: 200,
        }
    }
}

impl MissionSpec {
    pub fn validate(&self) -> Result<()> {
        self.pattern.validate()?;
        if !(self.homing_step > 0.0) || !(self.success_radius > 0.0) || !(self.path_step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "homing step ({}), path step ({}) and success radius ({}) must be positive",
                self.homing_step, self.path_step, self.success_radius
            )));
        }
        if self.outbound.iter().any(|l| !(l.distance >= 0.0) || !l.heading_deg.is_finite()) {
            return Err(Error::InvalidArgument("outbound legs need finite headings and distances >= 0".into()));
        }
        if let DriftRule::Gaussian { sigma, .. } = self.drift {
            if !(sigma >= 0.0) {
                return Err(Error::InvalidArgument(format!("drift sigma must be >= 0, got {sigma}")));
            }
        }
        Ok(())
    }

    pub fn dataset_spec(&self, shuffle_seed: u64) -> DatasetSpec {
        DatasetSpec {
            pattern: self.pattern,
            gaze_count: self.gaze_count,
            label_noise_sigma: 0.0,
            shuffle_seed,
        }
    }
}

/// Region covered by the learning flight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningArea {
    Disc { center: Position2D, radius: f64 },
    Rect { min: Position2D, max: Position2D },
}

impl LearningArea {
    pub fn of(pattern: &TrajectoryPattern) -> Result<Self> {
        Ok(match pattern {
            TrajectoryPattern::Spiral { center, .. } => LearningArea::Disc {
                center: *center,
                radius: pattern.extent()?,
            },
            TrajectoryPattern::Grid { .. } => {
                let (min, max) = pattern.bounds()?;
                LearningArea::Rect { min, max }
            }
        })
    }

    pub fn contains(&self, p: Position2D) -> bool {
        match *self {
            LearningArea::Disc { center, radius } => p.distance(center) <= radius,
            LearningArea::Rect { min, max } => p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y,
        }
    }

    /// First point on the segment `a -> b` inside the area, if any.
    pub fn entry_point(&self, a: Position2D, b: Position2D) -> Option<Position2D> {
        if self.contains(a) {
            return Some(a);
        }
        let at = |s: f64| a + (b - a) * s;
        let n = ((b - a).norm() / 0.01).ceil().max(1.0) as usize;
        let first = (1..=n).find(|&i| self.contains(at(i as f64 / n as f64)))?;
        let (mut lo, mut hi) = ((first - 1) as f64 / n as f64, first as f64 / n as f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.contains(at(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(at(hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Learning,
    Outbound,
    Inbound,
    Homing,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Learning => "learning",
            Phase::Outbound => "outbound",
            Phase::Inbound => "inbound",
            Phase::Homing => "homing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub phase: Phase,
    pub step: usize,
    pub position: Position2D,
    pub heading: HeadingAngle,
    /// Network output at this point (homing only).
    pub prediction: Option<HomeVector>,
    /// Gaze the view was rendered at (homing only).
    pub view_gaze: Option<HeadingAngle>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomingRun {
    pub path: Vec<PathPoint>,
    pub success: bool,
    pub homing_steps: usize,
    pub start: Position2D,
    pub start_distance: f64,
    /// Distance from the nest where homing ended.
    pub final_distance: f64,
    pub failure: Option<String>,
}

impl HomingRun {
    pub fn homing_path(&self) -> impl Iterator<Item = &PathPoint> {
        self.path.iter().filter(|p| p.phase == Phase::Homing)
    }

    pub fn final_position(&self) -> Position2D {
        self.path.last().map(|p| p.position).unwrap_or(self.start)
    }

    /// Columns `phase,step,x,y,heading_deg,pred_x,pred_y`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,step,x,y,heading_deg,pred_x,pred_y\n");
        for p in &self.path {
            let (px, py) = p
                .prediction
                .map(|v| (v.x.to_string(), v.y.to_string()))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{px},{py}",
                p.phase.name(),
                p.step,
                p.position.x,
                p.position.y,
                p.heading.degrees()
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Fewest homing steps that can bring an agent `distance` meters from the
/// nest within `radius` of it.
pub fn straight_line_bound(distance: f64, radius: f64, step: f64) -> usize {
    ((distance - radius) / step).ceil().max(0.0) as usize
}

fn heading_towards(from: Position2D, to: Position2D, fallback: HeadingAngle) -> HeadingAngle {
    gaze_angle(to - from).unwrap_or(fallback)
}

fn segment(
    path: &mut Vec<PathPoint>,
    phase: Phase,
    from: Position2D,
    to: Position2D,
    heading: HeadingAngle,
    spacing: f64,
) {
    let n = (from.distance(to) / spacing).ceil() as usize;
    let base = path.iter().filter(|p| p.phase == phase).count();
    for i in 1..=n {
        let position = from + (to - from) * (i as f64 / n as f64);
        path.push(PathPoint { phase, step: base + i - 1, position, heading, prediction: None, view_gaze: None });
    }
}

/// Learning, outbound and inbound phases. Returns the path so far and the
/// pose where visual homing takes over.
pub fn approach(world: &LandmarkWorld, spec: &MissionSpec) -> Result<(Vec<PathPoint>, Position2D, HeadingAngle)> {
    spec.validate()?;
    let nest = world.nest;
    let mut path: Vec<PathPoint> = spec
        .pattern
        .raw_points()?
        .into_iter()
        .enumerate()
        .map(|(step, position)| PathPoint {
            phase: Phase::Learning,
            step,
            position,
            heading: HeadingAngle::NORTH,
            prediction: None,
            view_gaze: None,
        })
        .collect();

    let mut pos = nest;
    let mut heading = HeadingAngle::NORTH;
    for leg in &spec.outbound {
        heading = HeadingAngle::from_degrees(leg.heading_deg);
        let to = pos + Vec2::from_heading(heading) * leg.distance;
        segment(&mut path, Phase::Outbound, pos, to, heading, spec.path_step);
        pos = to;
    }

    let area = LearningArea::of(&spec.pattern)?;
    heading = heading_towards(pos, nest, heading);
    let start = match spec.drift {
        DriftRule::StopAtBoundary => area.entry_point(pos, nest).unwrap_or(nest),
        DriftRule::FixedOffset { dx, dy } => nest + Vec2::new(dx, dy),
        DriftRule::Gaussian { sigma, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, sigma * spec.path_step.sqrt())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let target = area.entry_point(pos, nest).unwrap_or(nest);
            let n = (pos.distance(target) / spec.path_step).ceil() as usize;
            let mut err = Vec2::default();
            let from = pos;
            for i in 1..=n {
                err = err + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                let believed = from + (target - from) * (i as f64 / n as f64);
                path.push(PathPoint {
                    phase: Phase::Inbound,
                    step: i - 1,
                    position: believed + err,
                    heading,
                    prediction: None,
                    view_gaze: None,
                });
            }
            return Ok((path, from + (target - from) + err, heading));
        }
    };
    segment(&mut path, Phase::Inbound, pos, start, heading, spec.path_step);
    Ok((path, start, heading))
}

/// Visual homing from `start` with a given network, gaze following heading.
pub fn home(
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    spec: &MissionSpec,
    params: &NetworkParams,
    start: Position2D,
    initial_heading: HeadingAngle,
    mut path: Vec<PathPoint>,
) -> Result<HomingRun> {
    let nest = world.nest;
    let mut pos = start;
    let mut heading = initial_heading;
    let mut steps = 0;
    let mut failure = None;
    loop {
        if pos.distance(nest) <= spec.success_radius {
            break;
        }
        if steps >= spec.max_homing_steps {
            failure = Some(format!("no arrival within {} steps", spec.max_homing_steps));
            break;
        }
        let view = imaging.capture(world, pos, heading)?;
        let (pred, _) = forward(params, &view)?;
        let dir = match to_world(pred, heading).normalized() {
            Some(d) if pred.norm() > MIN_PREDICTION_NORM => d,
            _ => {
                failure = Some(format!("undefined prediction ({}, {}) at step {steps}", pred.x, pred.y));
                break;
            }
        };
        path.push(PathPoint {
            phase: Phase::Homing,
            step: steps,
            position: pos,
            heading,
            prediction: Some(pred),
            view_gaze: Some(view.gaze),
        });
        heading = gaze_angle(dir)?;
        pos = pos + dir * spec.homing_step;
        steps += 1;
    }
    path.push(PathPoint {
        phase: Phase::Homing,
        step: steps,
        position: pos,
        heading,
        prediction: None,
        view_gaze: None,
    });
    let success = pos.distance(nest) <= spec.success_radius;
    Ok(HomingRun {
        path,
        success,
        homing_steps: steps,
        start,
        start_distance: start.distance(nest),
        final_distance: pos.distance(nest),
        failure: if success { None } else { failure },
    })
}

/// Mission with an already trained network.
pub fn run_mission_with(
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    spec: &MissionSpec,
    params: &NetworkParams,
) -> Result<HomingRun> {
    let (path, start, heading) = approach(world, spec)?;
    home(world, imaging, spec, params, start, heading, path)
}

/// Renders the learning flight and trains a network on it.
pub fn train_for_mission(
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    spec: &MissionSpec,
    config: &TrainConfig,
) -> Result<NetworkParams> {
    let ds = crate::dataset::build_dataset(world, &spec.dataset_spec(config.init_seed), imaging)?;
    Ok(train(Architecture::for_layout(&imaging.layout), &ds, config)?.0)
}

/// Trains a fresh network (shuffle and init seeded by `config.init_seed`)
/// and flies the mission.
pub fn run_mission(
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    spec: &MissionSpec,
    config: &TrainConfig,
) -> Result<HomingRun> {
    let params = train_for_mission(world, imaging, spec, config)?;
    run_mission_with(world, imaging, spec, &params)
}

/// One outbound leg per heading, equally spaced counter-clockwise from north.
pub fn perimeter_outbounds(count: usize, distance: f64) -> Vec<Vec<Leg>> {
    (0..count)
        .map(|k| vec![Leg { heading_deg: 360.0 * k as f64 / count as f64, distance }])
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRun {
    pub seed: u64,
    pub start_index: usize,
    pub run: HomingRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean homing steps over successful runs.
    pub mean_steps: f64,
    /// Per start, the homing path averaged over seeds step by step; shorter
    /// runs hold their final position.
    pub mean_trajectories: Vec<Vec<Position2D>>,
}

impl BatchSummary {
    pub fn from_runs(runs: &[BatchRun], starts: usize) -> Self {
        let successes = runs.iter().filter(|r| r.run.success).count();
        let steps: Vec<f64> = runs
            .iter()
            .filter(|r| r.run.success)
            .map(|r| r.run.homing_steps as f64)
            .collect();
        let mean_trajectories = (0..starts)
            .map(|k| {
                let paths: Vec<Vec<Position2D>> = runs
                    .iter()
                    .filter(|r| r.start_index == k)
                    .map(|r| r.run.homing_path().map(|p| p.position).collect())
                    .collect();
                let len = paths.iter().map(Vec::len).max().unwrap_or(0);
                (0..len)
                    .map(|i| {
                        let sum = paths
                            .iter()
                            .map(|p| p[i.min(p.len() - 1)])
                            .fold(Vec2::default(), |a, b| a + b);
                        sum * (1.0 / paths.len() as f64)
                    })
                    .collect()
            })
            .collect();
        BatchSummary {
            runs: runs.len(),
            successes,
            success_rate: if runs.is_empty() { 0.0 } else { successes as f64 / runs.len() as f64 },
            mean_steps: if steps.is_empty() { f64::NAN } else { steps.iter().sum::<f64>() / steps.len() as f64 },
            mean_trajectories,
        }
    }

    pub fn to_text(&self, runs: &[BatchRun]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "runs: {}", self.runs);
        let _ = writeln!(s, "successes: {}", self.successes);
        let _ = writeln!(s, "success_rate: {:.4}", self.success_rate);
        let _ = writeln!(s, "mean_homing_steps: {:.2}", self.mean_steps);
        let _ = writeln!(s);
        let _ = writeln!(s, "seed,start,start_x,start_y,start_distance,steps,success,final_distance,failure");
        for r in runs {
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.4},{:.4},{},{},{:.4},{}",
                r.seed,
                r.start_index,
                r.run.start.x,
                r.run.start.y,
                r.run.start_distance,
                r.run.homing_steps,
                r.run.success,
                r.run.final_distance,
                r.run.failure.as_deref().unwrap_or("")
            );
        }
        s
    }
}

/// Every outbound plan flown with one network per seed. The learning flight
/// is rendered once; each seed reshuffles and trains from its own init.
pub fn run_batch(
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    spec: &MissionSpec,
    outbounds: &[Vec<Leg>],
    seeds: &[u64],
    config: &TrainConfig,
) -> Result<(Vec<BatchRun>, BatchSummary)> {
    if outbounds.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("run_batch needs at least one start and one seed".into()));
    }
    spec.validate()?;
    let positions = spec.pattern.locations(world.nest)?;
    let rendered = render_locations(world, imaging, &positions)?;
    let mut runs = Vec::new();
    for &seed in seeds {
        let ds = assemble(world.nest, &spec.dataset_spec(seed), imaging, rendered.clone())?;
        let cfg = TrainConfig { init_seed: seed, ..config.clone() };
        let (params, _) = train(Architecture::for_layout(&imaging.layout), &ds, &cfg)?;
        runs.extend(fly_all(world, imaging, spec, &params, outbounds, seed)?);
    }
    let summary = BatchSummary::from_runs(&runs, outbounds.len());
    Ok((runs, summary))
}

/// Flies every outbound plan with one network.
pub fn fly_all(
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    spec: &MissionSpec,
    params: &NetworkParams,
    outbounds: &[Vec<Leg>],
    seed: u64,
) -> Result<Vec<BatchRun>> {
    outbounds
        .par_iter()
        .enumerate()
        .map(|(k, legs)| {
            let s = MissionSpec { outbound: legs.clone(), ..spec.clone() };
            Ok(BatchRun { seed, start_index: k, run: run_mission_with(world, imaging, &s, params)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::omni::PanoramaLayout;

    fn tiny() -> ImagingConfig {
        ImagingConfig {
            layout: PanoramaLayout { height: 21, width: 72, elevation_range: [-15.0, 75.0] },
            catadioptric_size: 96,
            cube_size: 64,
            ..ImagingConfig::reduced()
        }
    }

    fn spec(world: &LandmarkWorld) -> MissionSpec {
        MissionSpec {
            pattern: TrajectoryPattern::learning_spiral(world.nest),
            gaze_count: 8,
            ..Default::default()
        }
    }

    #[test]
    fn boundary_truncation_puts_start_on_the_edge() {
        let w = LandmarkWorld::three_tree();
        for legs in perimeter_outbounds(12, 30.0) {
            let s = MissionSpec { outbound: legs, ..spec(&w) };
            let (path, start, heading) = approach(&w, &s).unwrap();
            assert!((start.distance(w.nest) - 8.0 * std::f64::consts::PI * 0.25).abs() < 1e-6);
            let toward = gaze_angle(w.nest - start).unwrap();
            assert!((heading.radians() - toward.radians()).abs() < 1e-9);
            assert_eq!(path.iter().filter(|p| p.phase == Phase::Learning).count(), 101);
            let out = path.iter().filter(|p| p.phase == Phase::Outbound).next_back().unwrap();
            assert!((out.position.distance(w.nest) - 30.0).abs() < 1e-9);
        }
        let grid = MissionSpec { pattern: TrajectoryPattern::learning_grid(w.nest), ..spec(&w) };
        let (_, start, _) = approach(&w, &grid).unwrap();
        assert!((start - (w.nest + Vec2::new(0.0, 4.0))).norm() < 1e-9);
    }

    #[test]
    fn drift_rules() {
        let w = LandmarkWorld::three_tree();
        let s = MissionSpec { drift: DriftRule::FixedOffset { dx: 1.0, dy: -2.0 }, ..spec(&w) };
        assert_eq!(approach(&w, &s).unwrap().1, w.nest + Vec2::new(1.0, -2.0));
        let g = MissionSpec { drift: DriftRule::Gaussian { sigma: 0.05, seed: 3 }, ..spec(&w) };
        let a = approach(&w, &g).unwrap();
        assert_eq!(a, approach(&w, &g).unwrap());
        assert!(a.1.distance(w.nest) > 5.0);
    }

    #[test]
    fn start_inside_success_radius() {
        let w = LandmarkWorld::three_tree();
        let p = NetworkParams::zeros(Architecture::for_layout(&tiny().layout)).unwrap();
        let s = MissionSpec { drift: DriftRule::FixedOffset { dx: 0.1, dy: 0.0 }, ..spec(&w) };
        let run = run_mission_with(&w, &tiny(), &s, &p).unwrap();
        assert!(run.success);
        assert_eq!(run.homing_steps, 0);
    }

    #[test]
    fn zero_network_fails_with_reason() {
        let w = LandmarkWorld::three_tree();
        let p = NetworkParams::zeros(Architecture::for_layout(&tiny().layout)).unwrap();
        let run = run_mission_with(&w, &tiny(), &spec(&w), &p).unwrap();
        assert!(!run.success);
        assert!(run.failure.unwrap().contains("undefined"));
    }

    #[test]
    fn homing_steps_keep_length_and_heading_frame() {
        let w = LandmarkWorld::three_tree();
        let p = NetworkParams::init(Architecture::for_layout(&tiny().layout), 5).unwrap();
        let s = MissionSpec { max_homing_steps: 15, ..spec(&w) };
        let run = run_mission_with(&w, &tiny(), &s, &p).unwrap();
        let homing: Vec<_> = run.homing_path().collect();
        assert_eq!(homing.len(), run.homing_steps + 1);
        for pair in homing.windows(2) {
            assert!((pair[0].position.distance(pair[1].position) - 0.25).abs() < 1e-12);
        }
        for p in &homing[..homing.len() - 1] {
            assert_eq!(p.view_gaze, Some(p.heading));
        }
        assert_eq!(run, run_mission_with(&w, &tiny(), &s, &p).unwrap());
        let csv = run.to_csv();
        assert!(csv.starts_with("phase,step,x,y,heading_deg,pred_x,pred_y\n"));
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(straight_line_bound(6.283, 0.25, 0.25), 25);
        assert_eq!(straight_line_bound(0.2, 0.25, 0.25), 0);
        assert_eq!(straight_line_bound(1.0, 0.25, 0.25), 3);
    }

    #[test]
    fn batch_bookkeeping() {
        let w = LandmarkWorld::three_tree();
        let s = MissionSpec { max_homing_steps: 5, ..spec(&w) };
        let cfg = TrainConfig { log_every: 50, ..Default::default() };
        let outs = perimeter_outbounds(2, 20.0);
        let (runs, summary) = run_batch(&w, &tiny(), &s, &outs[..1], &[1], &cfg).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(summary.runs, 1);
        let (runs, summary) = run_batch(&w, &tiny(), &s, &outs, &[1, 2], &cfg).unwrap();
        assert_eq!(runs.len(), 4);
        let rate = runs.iter().filter(|r| r.run.success).count() as f64 / 4.0;
        assert_eq!(summary.success_rate, rate);
        assert_eq!(summary.mean_trajectories.len(), 2);
        assert!(summary.to_text(&runs).contains("success_rate"));
    }
}

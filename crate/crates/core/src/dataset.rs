//! Learning-flight sampling and training-set assembly.
//!
//! Each location is rendered once and rectified at gaze north; the other gaze
//! directions are column rolls of that base panorama, materialized on demand.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{relative_home_vector, HeadingAngle, HomeVector, Position2D, Vec2, NEST_EPS};
use crate::network::TrainingSamples;
use crate::omni::{rectify, shift_gaze_columns, ImagingConfig, PanoramaImage};
use crate::world::LandmarkWorld;

/// Which lattice lines a grid includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridEdges {
    /// `side / spacing + 1` points per axis, both borders included.
    #[default]
    Closed,
    /// `side / spacing` points per axis, offsets `-side/2 .. side/2 - spacing`.
    HalfOpen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrajectoryPattern {
    Grid {
        center: Position2D,
        side: f64,
        spacing: f64,
        #[serde(default)]
        edges: GridEdges,
    },
    Spiral {
        center: Position2D,
        /// Radial growth, meters per radian.
        a: f64,
        theta_max: f64,
        theta_step: f64,
    },
}

impl TrajectoryPattern {
    /// 10 m square at 1 m spacing with the center on the lattice.
    pub fn learning_grid(center: Position2D) -> Self {
        TrajectoryPattern::Grid {
            center,
            side: 10.0,
            spacing: 1.0,
            edges: GridEdges::HalfOpen,
        }
    }

    /// 10 m square at 0.25 m spacing, borders included.
    pub fn evaluation_grid(center: Position2D) -> Self {
        TrajectoryPattern::Grid {
            center,
            side: 10.0,
            spacing: 0.25,
            edges: GridEdges::Closed,
        }
    }

    /// Archimedean spiral `r = 0.25 theta` for `theta` in `[0, 8 pi]`.
    pub fn learning_spiral(center: Position2D) -> Self {
        TrajectoryPattern::Spiral {
            center,
            a: 0.25,
            theta_max: 8.0 * PI,
            theta_step: 0.08 * PI,
        }
    }

    pub fn center(&self) -> Position2D {
        match *self {
            TrajectoryPattern::Grid { center, .. } | TrajectoryPattern::Spiral { center, .. } => center,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TrajectoryPattern::Grid { center, side, spacing, .. } => {
                if !center.is_finite() || !(side >= 0.0) || !(spacing > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "grid needs a finite center, side >= 0 and spacing > 0 (side {side}, spacing {spacing})"
                    )));
                }
                let n = side / spacing;
                if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "grid side {side} is not a whole multiple of spacing {spacing}"
                    )));
                }
            }
            TrajectoryPattern::Spiral { center, a, theta_max, theta_step } => {
                if !center.is_finite() || !(a > 0.0) || !(theta_step > 0.0) || !(theta_max >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "spiral needs a > 0, theta_step > 0 and theta_max >= 0 (a {a}, step {theta_step}, max {theta_max})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// All pattern points, before nest exclusion.
    pub fn raw_points(&self) -> Result<Vec<Position2D>> {
        self.validate()?;
        Ok(match *self {
            TrajectoryPattern::Grid { center, side, spacing, edges } => {
                let n = (side / spacing).round() as usize;
                if n == 0 {
                    return Ok(vec![center]);
                }
                let per_axis = match edges {
                    GridEdges::Closed => n + 1,
                    GridEdges::HalfOpen => n,
                };
                let offset = |i: usize| -side / 2.0 + i as f64 * spacing;
                let mut pts = Vec::with_capacity(per_axis * per_axis);
                for iy in 0..per_axis {
                    for ix in 0..per_axis {
                        pts.push(center + Vec2::new(offset(ix), offset(iy)));
                    }
                }
                pts
            }
            TrajectoryPattern::Spiral { center, a, theta_max, theta_step } => {
                let count = (theta_max / theta_step + 1e-9).floor() as usize + 1;
                (0..count)
                    .map(|k| {
                        let theta = k as f64 * theta_step;
                        let r = a * theta;
                        center + Vec2::new(r * theta.cos(), r * theta.sin())
                    })
                    .collect()
            }
        })
    }

    /// Pattern points with those within `NEST_EPS` of `nest` removed.
    pub fn locations(&self, nest: Position2D) -> Result<Vec<Position2D>> {
        Ok(self
            .raw_points()?
            .into_iter()
            .filter(|p| p.distance(nest) > NEST_EPS)
            .collect())
    }

    /// Largest distance from the center to a pattern point.
    pub fn extent(&self) -> Result<f64> {
        let c = self.center();
        Ok(self.raw_points()?.iter().map(|p| p.distance(c)).fold(0.0, f64::max))
    }

    /// Axis-aligned bounding box `(min, max)` of the pattern points.
    pub fn bounds(&self) -> Result<(Position2D, Position2D)> {
        let pts = self.raw_points()?;
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        Ok((lo, hi))
    }
}

/// Grid locations excluding the nest.
pub fn grid_locations(pattern: &TrajectoryPattern, nest: Position2D) -> Result<Vec<Position2D>> {
    match pattern {
        TrajectoryPattern::Grid { .. } => pattern.locations(nest),
        _ => Err(Error::InvalidArgument("expected a grid pattern".into())),
    }
}

/// Spiral locations excluding the nest.
pub fn spiral_locations(pattern: &TrajectoryPattern, nest: Position2D) -> Result<Vec<Position2D>> {
    match pattern {
        TrajectoryPattern::Spiral { .. } => pattern.locations(nest),
        _ => Err(Error::InvalidArgument("expected a spiral pattern".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub pattern: TrajectoryPattern,
    #[serde(default = "default_gaze_count")]
    pub gaze_count: usize,
    /// Standard deviation of the label-angle perturbation, degrees.
    #[serde(default)]
    pub label_noise_sigma: f64,
    #[serde(default)]
    pub shuffle_seed: u64,
}

fn default_gaze_count() -> usize {
    360
}

impl DatasetSpec {
    pub fn new(pattern: TrajectoryPattern) -> Self {
        DatasetSpec {
            pattern,
            gaze_count: default_gaze_count(),
            label_noise_sigma: 0.0,
            shuffle_seed: 0,
        }
    }

    pub fn validate(&self, imaging: &ImagingConfig) -> Result<()> {
        self.pattern.validate()?;
        let w = imaging.layout.width;
        if self.gaze_count == 0 || !w.is_multiple_of(self.gaze_count) {
            return Err(Error::InvalidArgument(format!(
                "gaze count {} must divide the panorama width {w}",
                self.gaze_count
            )));
        }
        if !(self.label_noise_sigma >= 0.0) || !self.label_noise_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "label noise sigma must be a finite non-negative number, got {}",
                self.label_noise_sigma
            )));
        }
        Ok(())
    }
}

/// One rendered location.
#[derive(Debug, Clone)]
pub struct LocationView {
    pub position: Position2D,
    /// Panorama rectified at gaze north.
    pub base: PanoramaImage,
}

/// Index entry of one training example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleRef {
    pub location: usize,
    /// Gaze index in `0..gaze_count`.
    pub gaze_index: usize,
    pub gaze: HeadingAngle,
    pub label: HomeVector,
}

/// A materialized training example.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub view: PanoramaImage,
    pub label: HomeVector,
    pub location: Position2D,
    pub gaze: HeadingAngle,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub imaging: ImagingConfig,
    pub nest: Position2D,
    pub locations: Vec<LocationView>,
    /// Examples in training (shuffled) order.
    pub examples: Vec<ExampleRef>,
    /// Number of catadioptric renders performed.
    pub renders: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    fn columns_per_gaze(&self) -> usize {
        self.imaging.layout.width / self.spec.gaze_count
    }

    pub fn view(&self, index: usize) -> PanoramaImage {
        let e = &self.examples[index];
        shift_gaze_columns(
            &self.locations[e.location].base,
            (e.gaze_index * self.columns_per_gaze()) as i64,
        )
    }

    pub fn example(&self, index: usize) -> TrainingExample {
        let e = self.examples[index];
        TrainingExample {
            view: self.view(index),
            label: e.label,
            location: self.locations[e.location].position,
            gaze: e.gaze,
        }
    }

    /// Manifest rows; `image_dir` names where [`Dataset::save_images`] put
    /// the base panoramas, each example being its location's image rolled to
    /// `gaze_deg`.
    pub fn manifest_csv(&self, image_dir: Option<&str>) -> String {
        let mut s = String::from("index,x,y,gaze_deg,label_x,label_y,image_path\n");
        for (i, e) in self.examples.iter().enumerate() {
            let p = self.locations[e.location].position;
            let path = image_dir
                .map(|d| format!("{d}/{}", location_image_name(e.location)))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{path}",
                p.x,
                p.y,
                e.gaze.degrees(),
                e.label.x,
                e.label.y
            );
        }
        s
    }

    pub fn write_manifest(&self, path: &Path, image_dir: Option<&str>) -> Result<()> {
        std::fs::write(path, self.manifest_csv(image_dir)).map_err(|e| Error::io(path, e))
    }

    /// Writes every base panorama into `dir`.
    pub fn save_images(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, loc) in self.locations.iter().enumerate() {
            loc.base.save(&dir.join(location_image_name(i)))?;
        }
        Ok(())
    }
}

fn location_image_name(index: usize) -> String {
    format!("location_{index:05}.pgm")
}

impl TrainingSamples for Dataset {
    fn len(&self) -> usize {
        self.examples.len()
    }

    fn label(&self, index: usize) -> HomeVector {
        self.examples[index].label
    }

    fn input_into(&self, index: usize, buf: &mut Vec<f32>) {
        let e = &self.examples[index];
        let base = &self.locations[e.location].base;
        let w = base.layout.width;
        let k = (e.gaze_index * self.columns_per_gaze()) % w;
        for row in 0..base.layout.height {
            let src = base.image.row(row);
            buf.extend_from_slice(&src[k..]);
            buf.extend_from_slice(&src[..k]);
        }
    }
}

/// Renders one base panorama per position, in parallel.
pub fn render_locations(
    world: &LandmarkWorld,
    imaging: &ImagingConfig,
    positions: &[Position2D],
) -> Result<Vec<LocationView>> {
    imaging.validate()?;
    positions
        .par_iter()
        .enumerate()
        .map(|(index, &position)| {
            let fail = |reason: String| Error::Render { index, x: position.x, y: position.y, reason };
            let cat = imaging
                .capture_catadioptric(world, position)
                .map_err(|e| fail(e.to_string()))?;
            let base = rectify(&cat, HeadingAngle::NORTH, imaging.layout).map_err(|e| fail(e.to_string()))?;
            if base.image.data().iter().any(|v| !v.is_finite()) {
                return Err(fail("non-finite pixel values".into()));
            }
            Ok(LocationView { position, base })
        })
        .collect()
}

/// Renders the learning flight and assembles the shuffled example list.
pub fn build_dataset(world: &LandmarkWorld, spec: &DatasetSpec, imaging: &ImagingConfig) -> Result<Dataset> {
    spec.validate(imaging)?;
    world.validate()?;
    let positions = spec.pattern.locations(world.nest)?;
    let locations = render_locations(world, imaging, &positions)?;
    assemble(world.nest, spec, imaging, locations)
}

/// Builds examples over already rendered locations.
pub fn assemble(
    nest: Position2D,
    spec: &DatasetSpec,
    imaging: &ImagingConfig,
    locations: Vec<LocationView>,
) -> Result<Dataset> {
    spec.validate(imaging)?;
    let step = imaging.layout.width / spec.gaze_count;
    let pitch = imaging.layout.column_pitch();
    let mut examples = Vec::with_capacity(locations.len() * spec.gaze_count);
    for (li, loc) in locations.iter().enumerate() {
        for g in 0..spec.gaze_count {
            let gaze = HeadingAngle::new(loc.base.gaze.radians() + (g * step) as f64 * pitch);
            let label = relative_home_vector(loc.position, nest, gaze)?;
            examples.push(ExampleRef { location: li, gaze_index: g, gaze, label });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.shuffle_seed);
    examples.shuffle(&mut rng);
    if spec.label_noise_sigma > 0.0 {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.shuffle_seed);
        noise_rng.set_stream(1);
        for e in &mut examples {
            e.label = add_label_noise(e.label, spec.label_noise_sigma, &mut noise_rng)?;
        }
    }
    let renders = locations.len();
    Ok(Dataset {
        spec: spec.clone(),
        imaging: *imaging,
        nest,
        locations,
        examples,
        renders,
    })
}

/// Perturbs the label angle by a zero-mean Gaussian of `sigma_deg` degrees.
pub fn add_label_noise<R: Rng + ?Sized>(label: HomeVector, sigma_deg: f64, rng: &mut R) -> Result<HomeVector> {
    if !(sigma_deg >= 0.0) || !sigma_deg.is_finite() {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma_deg}")));
    }
    if sigma_deg == 0.0 {
        return Ok(label);
    }
    let normal = Normal::new(0.0, sigma_deg.to_radians())
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(HomeVector::from_angle(label.angle()? + normal.sample(rng)))
}

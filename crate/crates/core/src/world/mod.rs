//! Procedural landmark worlds: terrain, trees, sky and lighting.
//!
//! Worlds are immutable once built and are shared read-only by the
//! renderers. They serialize to a small TOML description (see
//! [`LandmarkWorld::load`]).

mod noise;
pub(crate) mod render;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotate2, Position2D, Vec2};

pub use noise::ValueNoise;
pub use render::{
    heading_ray,
    face_direction, ray_cast, render_cubemap, render_panorama_direct, CubeFace, CubemapView, Vec3,
};

/// Nest location used by the presets.
pub const DEFAULT_NEST: Position2D = Vec2::new(538.0, 573.0);
/// Camera height above the terrain in meters.
pub const DEFAULT_CAMERA_HEIGHT: f64 = 1.89;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terrain {
    Flat {
        height: f64,
    },
    /// Two-octave value noise around `base`.
    ValueNoise {
        base: f64,
        amplitude: f64,
        wavelength: f64,
        seed: u64,
    },
}

impl Terrain {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match *self {
            Terrain::Flat { height } => height,
            Terrain::ValueNoise {
                base,
                amplitude,
                wavelength,
                seed,
            } => base + amplitude * ValueNoise::new(seed).two_octave(x / wavelength, y / wavelength),
        }
    }

    /// Upper bound on the terrain height.
    pub fn max_height(&self) -> f64 {
        match *self {
            Terrain::Flat { height } => height,
            Terrain::ValueNoise {
                base, amplitude, ..
            } => base + amplitude.abs(),
        }
    }

    /// Upper bound on the terrain slope magnitude.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Terrain::Flat { .. } => 0.0,
            // smoothstep slope <= 1.5 per cell, lattice values in [-1, 1],
            // second octave at half weight and double frequency
            Terrain::ValueNoise {
                amplitude,
                wavelength,
                ..
            } => 6.0 * amplitude.abs() / wavelength,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTexture {
    /// Peak albedo modulation.
    pub amplitude: f64,
    /// Feature size in meters.
    pub wavelength: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ground {
    pub albedo: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<GroundTexture>,
}

impl Ground {
    pub fn albedo_at(&self, x: f64, y: f64) -> f64 {
        let base = self.albedo;
        let v = match &self.texture {
            Some(t) => {
                base + t.amplitude
                    * ValueNoise::new(t.seed).two_octave(x / t.wavelength, y / t.wavelength)
            }
            None => base,
        };
        v.clamp(0.0, 1.0)
    }
}

/// Sky luminance varying linearly with the sine of the elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkyModel {
    pub horizon: f64,
    pub zenith: f64,
}

impl SkyModel {
    /// Luminance for a ray with vertical direction component `sin_elevation`.
    pub fn luminance(&self, sin_elevation: f64) -> f64 {
        let s = sin_elevation.clamp(0.0, 1.0);
        (self.horizon + (self.zenith - self.horizon) * s).clamp(0.0, 1.0)
    }
}

/// Directional light used for Lambertian shading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sun {
    /// Heading of the light source from north, counter-clockwise, degrees.
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Sun {
    pub fn direction(&self) -> Vec3 {
        let (az, el) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        Vec3::new(-az.sin() * el.cos(), az.cos() * el.cos(), el.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub position: Position2D,
    pub trunk_radius: f64,
    pub trunk_height: f64,
    pub canopy_radius: f64,
    pub canopy_center_height: f64,
    pub trunk_albedo: f64,
    pub canopy_albedo: f64,
}

impl Tree {
    /// A tree with the proportions used by the presets.
    pub fn standard(position: Position2D) -> Self {
        Tree {
            position,
            trunk_radius: 0.25,
            trunk_height: 3.0,
            canopy_radius: 1.6,
            canopy_center_height: 4.0,
            trunk_albedo: 0.22,
            canopy_albedo: 0.3,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidArgument(format!("tree {index}: {what}")))
        };
        if !self.position.is_finite() {
            return bad("position must be finite");
        }
        if !(self.trunk_radius > 0.0) {
            return bad("trunk radius must be positive");
        }
        if !(self.canopy_radius >= self.trunk_radius) {
            return bad("canopy radius must be at least the trunk radius");
        }
        if !(self.trunk_height > 0.0 && self.canopy_center_height > 0.0) {
            return bad("heights must be positive");
        }
        Ok(())
    }
}

/// A subset of landmarks that can be rotated as a rigid group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkArray {
    pub members: Vec<usize>,
    pub pivot: Position2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkWorld {
    pub name: String,
    pub seed: u64,
    pub nest: Position2D,
    pub terrain: Terrain,
    pub ground: Ground,
    pub sky: SkyModel,
    pub sun: Sun,
    #[serde(default)]
    pub shadows: bool,
    /// Rays travelling farther than this return the horizon sky shade.
    pub max_distance: f64,
    #[serde(default)]
    pub landmarks: Vec<Tree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmark_array: Option<LandmarkArray>,
}

impl LandmarkWorld {
    fn base(name: &str, seed: u64) -> Self {
        LandmarkWorld {
            name: name.to_string(),
            seed,
            nest: DEFAULT_NEST,
            terrain: Terrain::Flat { height: 0.0 },
            ground: Ground {
                albedo: 0.45,
                texture: None,
            },
            sky: SkyModel {
                horizon: 0.9,
                zenith: 0.6,
            },
            sun: Sun {
                azimuth_deg: 135.0,
                elevation_deg: 50.0,
            },
            shadows: false,
            max_distance: 2000.0,
            landmarks: Vec::new(),
            landmark_array: None,
        }
    }

    /// Flat ground, uniform albedo, no landmarks.
    pub fn empty_flat() -> Self {
        Self::base("empty", 0)
    }

    /// Flat terrain with three identical trees forming a landmark array.
    pub fn three_tree() -> Self {
        let mut w = Self::base("three-tree", 0);
        let offsets = [Vec2::new(-4.5, 6.5), Vec2::new(2.0, 8.0), Vec2::new(7.5, -3.0)];
        w.landmarks = offsets
            .iter()
            .map(|&o| Tree::standard(DEFAULT_NEST + o))
            .collect();
        let pivot = w
            .landmarks
            .iter()
            .fold(Vec2::default(), |acc, t| acc + t.position)
            * (1.0 / w.landmarks.len() as f64);
        w.landmark_array = Some(LandmarkArray {
            members: (0..w.landmarks.len()).collect(),
            pivot,
        });
        w
    }

    /// Rolling textured terrain with `count` trees scattered over a
    /// `side` x `side` meter square around the nest.
    pub fn forest(seed: u64, count: usize, side: f64) -> Self {
        let mut w = Self::base("forest", seed);
        w.terrain = Terrain::ValueNoise {
            base: 0.0,
            amplitude: 0.5,
            wavelength: 30.0,
            seed,
        };
        w.ground.texture = Some(GroundTexture {
            amplitude: 0.12,
            wavelength: 4.0,
            seed: seed.wrapping_add(1),
        });
        w.shadows = true;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        w.landmarks = (0..count)
            .map(|_| {
                let pos = w.nest
                    + Vec2::new(
                        rng.random_range(-side / 2.0..side / 2.0),
                        rng.random_range(-side / 2.0..side / 2.0),
                    );
                let scale = rng.random_range(0.7..1.4);
                Tree {
                    position: pos,
                    trunk_radius: 0.2 * scale,
                    trunk_height: 3.0 * scale,
                    canopy_radius: rng.random_range(1.0..2.2) * scale,
                    canopy_center_height: 4.0 * scale,
                    trunk_albedo: rng.random_range(0.15..0.3),
                    canopy_albedo: rng.random_range(0.2..0.4),
                }
            })
            .collect();
        w
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "empty" => Ok(Self::empty_flat()),
            "three-tree" => Ok(Self::three_tree()),
            "forest" => Ok(Self::forest(seed, 30, 60.0)),
            other => Err(Error::InvalidArgument(format!(
                "unknown world preset {other:?} (expected empty, three-tree or forest)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nest.is_finite() {
            return Err(Error::InvalidArgument("nest must be finite".into()));
        }
        for (i, t) in self.landmarks.iter().enumerate() {
            t.validate(i)?;
        }
        if let Some(arr) = &self.landmark_array {
            if let Some(&bad) = arr.members.iter().find(|&&m| m >= self.landmarks.len()) {
                return Err(Error::InvalidArgument(format!(
                    "landmark array references missing tree {bad}"
                )));
            }
        }
        if !(self.max_distance > 0.0) {
            return Err(Error::InvalidArgument("max_distance must be positive".into()));
        }
        Ok(())
    }

    pub fn terrain_height(&self, p: Position2D) -> f64 {
        self.terrain.height(p.x, p.y)
    }

    /// Copy of the world with every landmark rotated about `center` by
    /// `radians` (counter-clockwise).
    pub fn with_landmarks_rotated_about(&self, center: Position2D, radians: f64) -> Self {
        let mut w = self.clone();
        for t in &mut w.landmarks {
            t.position = center + rotate2(t.position - center, radians);
        }
        w
    }

    /// Copy of the world with the designated landmark array rotated about its
    /// pivot by `degrees` (counter-clockwise).
    pub fn with_array_rotated(&self, degrees: f64) -> Result<Self> {
        let arr = self.landmark_array.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("world {:?} has no landmark array", self.name))
        })?;
        let mut w = self.clone();
        if degrees == 0.0 {
            return Ok(w);
        }
        let r = degrees.to_radians();
        for &m in &arr.members {
            let t = &mut w.landmarks[m];
            t.position = arr.pivot + rotate2(t.position - arr.pivot, r);
        }
        Ok(w)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("world description serializes")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let w: LandmarkWorld = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

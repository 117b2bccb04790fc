//! Catadioptric imaging and panorama rectification.
//!
//! Mirror model: a paraboloid with its axis vertical, viewed orthographically
//! from above, so the image center looks straight up (zenith) and the image
//! radius grows monotonically as elevation falls:
//!
//! ```text
//! rho(e) = (l / 2) * tan(pi/4 - e/2)        e = pi/2 - 2 atan(2 rho / l)
//! ```
//!
//! with `l` the latus rectum and `rho` the metric radius on the image plane.
//! Heading increases counter-clockwise from north; in the image, north is up
//! and east is to the right. The mirror footprint ends at a configurable rim
//! elevation; pixels outside it are invalid.
//!
//! Panorama column `c` covers the heading `gaze - pi + (c + 1/2) * 2 pi / W`,
//! putting the gaze at the center column. Row `r` covers an elevation spaced
//! linearly from the top of `elevation_range` (row 0) to its bottom.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{HeadingAngle, Position2D};
use crate::image::GrayImage;
use crate::world::{render_cubemap, CubemapView, LandmarkWorld, Vec3, DEFAULT_CAMERA_HEIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanoramaLayout {
    pub height: usize,
    pub width: usize,
    /// `[low, high]` elevation in degrees.
    pub elevation_range: [f64; 2],
}

impl PanoramaLayout {
    /// 201 x 1800, elevations -15..75 degrees.
    pub const FULL: PanoramaLayout = PanoramaLayout {
        height: 201,
        width: 1800,
        elevation_range: [-15.0, 75.0],
    };

    /// 51 x 360 for fast experiments.
    pub const REDUCED: PanoramaLayout = PanoramaLayout {
        height: 51,
        width: 360,
        elevation_range: [-15.0, 75.0],
    };

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.elevation_range;
        if self.height < 2 || self.width < 2 {
            return Err(Error::InvalidArgument(format!(
                "panorama must be at least 2x2, got {}x{}",
                self.height, self.width
            )));
        }
        if !(lo < hi && lo > -90.0 && hi < 90.0) {
            return Err(Error::InvalidArgument(format!(
                "elevation range [{lo}, {hi}] must be increasing within (-90, 90)"
            )));
        }
        Ok(())
    }

    pub fn column_pitch(&self) -> f64 {
        TAU / self.width as f64
    }

    /// Heading of column `col` relative to the gaze, radians.
    pub fn column_offset(&self, col: usize) -> f64 {
        -PI + (col as f64 + 0.5) * self.column_pitch()
    }

    /// Elevation of row `row`, radians.
    pub fn row_elevation(&self, row: usize) -> f64 {
        let [lo, hi] = self.elevation_range;
        let t = row as f64 / (self.height - 1) as f64;
        (hi - (hi - lo) * t).to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanoramaSource {
    Direct,
    Catadioptric,
}

/// Rectified omnidirectional view with its gaze annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoramaImage {
    pub image: GrayImage,
    pub gaze: HeadingAngle,
    pub layout: PanoramaLayout,
    pub source: PanoramaSource,
}

#[derive(Serialize, Deserialize)]
struct PanoramaSidecar {
    gaze_deg: f64,
    height: usize,
    width: usize,
    elevation_range: [f64; 2],
    source: PanoramaSource,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl PanoramaImage {
    /// Writes `<path>` as PGM plus a `.toml` metadata sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.image.write_pgm(path)?;
        let meta = PanoramaSidecar {
            gaze_deg: self.gaze.degrees(),
            height: self.layout.height,
            width: self.layout.width,
            elevation_range: self.layout.elevation_range,
            source: self.source,
        };
        let side = sidecar_path(path);
        fs::write(&side, toml::to_string(&meta).expect("sidecar serializes"))
            .map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let image = GrayImage::read_pgm(path)?;
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: PanoramaSidecar = toml::from_str(&text).map_err(|e| parse_err(&side, e))?;
        if meta.width != image.width() || meta.height != image.height() {
            return Err(Error::Shape(format!(
                "sidecar says {}x{}, image is {}x{}",
                meta.height,
                meta.width,
                image.height(),
                image.width()
            )));
        }
        Ok(PanoramaImage {
            image,
            gaze: HeadingAngle::from_degrees(meta.gaze_deg),
            layout: PanoramaLayout {
                height: meta.height,
                width: meta.width,
                elevation_range: meta.elevation_range,
            },
            source: meta.source,
        })
    }

    /// Column (possibly fractional) at which a world heading appears.
    pub fn column_of_heading(&self, heading: f64) -> f64 {
        let rel = crate::geometry::wrap_angle(heading - self.gaze.radians());
        (rel + PI) / self.layout.column_pitch() - 0.5
    }
}

/// Paraboloidal mirror viewed orthographically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorModel {
    /// Latus rectum in meters.
    pub latus_rectum: f64,
    /// Distance from the mirror focus to the image plane in meters. Under
    /// orthographic viewing it does not change the image geometry.
    pub image_plane_distance: f64,
    /// Lowest elevation reflected by the mirror rim, degrees.
    pub rim_elevation_deg: f64,
}

impl Default for MirrorModel {
    fn default() -> Self {
        MirrorModel {
            latus_rectum: 0.1,
            image_plane_distance: 0.1,
            rim_elevation_deg: -20.0,
        }
    }
}

impl MirrorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.latus_rectum > 0.0 && self.image_plane_distance > 0.0) {
            return Err(Error::InvalidArgument(
                "mirror latus rectum and image-plane distance must be positive".into(),
            ));
        }
        if !(self.rim_elevation_deg > -90.0 && self.rim_elevation_deg < 90.0) {
            return Err(Error::InvalidArgument(
                "rim elevation must lie in (-90, 90) degrees".into(),
            ));
        }
        Ok(())
    }

    /// Metric image radius of a ray at elevation `el` (radians).
    pub fn radius_for_elevation(&self, el: f64) -> f64 {
        0.5 * self.latus_rectum * (FRAC_PI_4 - 0.5 * el).tan()
    }

    /// Elevation (radians) of the ray imaged at metric radius `rho`.
    pub fn elevation_for_radius(&self, rho: f64) -> f64 {
        FRAC_PI_2 - 2.0 * (2.0 * rho / self.latus_rectum).atan()
    }

    pub fn rim_radius(&self) -> f64 {
        self.radius_for_elevation(self.rim_elevation_deg.to_radians())
    }
}

/// Square circular-footprint image formed by the mirror.
#[derive(Debug, Clone, PartialEq)]
pub struct CatadioptricImage {
    pub image: GrayImage,
    valid: Vec<bool>,
    pub mirror: MirrorModel,
}

impl CatadioptricImage {
    fn with_image(image: GrayImage, mirror: MirrorModel) -> Self {
        let c = image.width();
        let half = c as f64 / 2.0;
        let valid = (0..c * c)
            .map(|i| {
                let (u, v) = ((i % c) as f64 + 0.5 - half, half - ((i / c) as f64 + 0.5));
                u.hypot(v) <= half
            })
            .collect();
        CatadioptricImage {
            image,
            valid,
            mirror,
        }
    }

    pub fn size(&self) -> usize {
        self.image.width()
    }

    /// Meters on the image plane per pixel.
    pub fn pixel_pitch(&self) -> f64 {
        self.mirror.rim_radius() / (self.size() as f64 / 2.0)
    }

    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid[row * self.size() + col]
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&v| v).count() as f64 / self.valid.len() as f64
    }

    /// World ray imaged at the center of pixel (`col`, `row`), if the pixel
    /// lies inside the mirror footprint.
    pub fn pixel_ray(&self, col: usize, row: usize) -> Option<Vec3> {
        if !self.is_valid(col, row) {
            return None;
        }
        let half = self.size() as f64 / 2.0;
        let du = col as f64 + 0.5 - half;
        let dv = half - (row as f64 + 0.5);
        let el = self.mirror.elevation_for_radius(du.hypot(dv) * self.pixel_pitch());
        let az = if du == 0.0 && dv == 0.0 {
            0.0
        } else {
            (-du).atan2(dv)
        };
        Some(crate::world::render::heading_ray(az, el))
    }

    /// Continuous pixel coordinates (column, row) of the ray at heading `az`
    /// and elevation `el`.
    pub fn project(&self, az: f64, el: f64) -> (f64, f64) {
        let half = self.size() as f64 / 2.0;
        let r = self.mirror.radius_for_elevation(el) / self.pixel_pitch();
        (half - r * az.sin(), half - r * az.cos())
    }

    /// Resamples an external circular photograph whose mirror footprint is
    /// centered at `center` (column, row) with radius `radius` pixels.
    pub fn from_circular_photo(
        photo: &GrayImage,
        center: (f64, f64),
        radius: f64,
        mirror: MirrorModel,
        size: usize,
    ) -> Result<Self> {
        if !size.is_multiple_of(2) || size == 0 {
            return Err(Error::InvalidArgument(format!("image size {size} must be even")));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("footprint radius must be positive".into()));
        }
        let half = size as f64 / 2.0;
        let scale = radius / half;
        let mut out = GrayImage::new(size, size);
        for row in 0..size {
            for col in 0..size {
                let du = (col as f64 + 0.5 - half) * scale;
                let dv = (row as f64 + 0.5 - half) * scale;
                let (x, y) = ((center.0 + du).floor(), (center.1 + dv).floor());
                if x >= 0.0 && y >= 0.0 && (x as usize) < photo.width() && (y as usize) < photo.height()
                {
                    out.set(col, row, photo.get(x as usize, y as usize));
                }
            }
        }
        let mut cat = Self::with_image(out, mirror);
        for i in 0..size * size {
            if !cat.valid[i] {
                cat.image.data_mut()[i] = 0.0;
            }
        }
        Ok(cat)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.image.write_pgm(path)?;
        let side = sidecar_path(path);
        fs::write(&side, toml::to_string(&self.mirror).expect("mirror serializes"))
            .map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let image = GrayImage::read_pgm(path)?;
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let mirror: MirrorModel = toml::from_str(&text).map_err(|e| parse_err(&side, e))?;
        if image.width() != image.height() || image.width() % 2 != 0 {
            return Err(Error::Shape(format!(
                "catadioptric image must be square with even side, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(Self::with_image(image, mirror))
    }
}

/// Forms the mirror image of a cubemap by nearest-neighbour face lookup.
pub fn catadioptric_project(
    cube: &CubemapView,
    mirror: MirrorModel,
    size: usize,
) -> Result<CatadioptricImage> {
    mirror.validate()?;
    if !size.is_multiple_of(2) || size == 0 {
        return Err(Error::InvalidArgument(format!("image size {size} must be even")));
    }
    let mut cat = CatadioptricImage::with_image(GrayImage::new(size, size), mirror);
    let mut out = GrayImage::new(size, size);
    for row in 0..size {
        for col in 0..size {
            if let Some(ray) = cat.pixel_ray(col, row) {
                out.set(col, row, cube.sample(ray));
            }
        }
    }
    cat.image = out;
    Ok(cat)
}

// Fractional gaze offsets are snapped to this grid (in columns) so that gazes
// differing by whole columns produce identical sampling positions.
const FRACTION_STEPS: f64 = (1u64 << 24) as f64;

/// Unwraps the mirror image into a panorama cut at `gaze - pi`.
pub fn rectify(
    cat: &CatadioptricImage,
    gaze: HeadingAngle,
    layout: PanoramaLayout,
) -> Result<PanoramaImage> {
    layout.validate()?;
    let (w, h) = (layout.width, layout.height);
    let pitch = layout.column_pitch();
    let s = gaze.radians() / pitch;
    let mut whole = s.floor();
    let mut frac = ((s - whole) * FRACTION_STEPS).round() / FRACTION_STEPS;
    if frac >= 1.0 {
        frac -= 1.0;
        whole += 1.0;
    }
    let shift = (whole as i64).rem_euclid(w as i64) as usize;

    let size = cat.size() as isize;
    let half = cat.size() as f64 / 2.0;
    let pitch_px = cat.pixel_pitch();
    let rim_px = half - 0.5;
    let trig: Vec<(f64, f64)> = (0..w)
        .map(|j| ((frac + j as f64 + 0.5) * pitch - PI).sin_cos())
        .collect();
    let mut out = GrayImage::new(w, h);
    for row in 0..h {
        let r = cat.mirror.radius_for_elevation(layout.row_elevation(row)) / pitch_px;
        for col in 0..w {
            let (sa, ca) = trig[(col + shift) % w];
            let sample = |r: f64| {
                let u = (half - r * sa).floor() as isize;
                let v = (half - r * ca).floor() as isize;
                (u >= 0 && v >= 0 && u < size && v < size && cat.is_valid(u as usize, v as usize))
                    .then(|| cat.image.get(u as usize, v as usize))
            };
            let value = sample(r)
                .or_else(|| sample(r.min(rim_px)))
                .unwrap_or(0.0);
            out.set(col, row, value);
        }
    }
    Ok(PanoramaImage {
        image: out,
        gaze,
        layout,
        source: PanoramaSource::Catadioptric,
    })
}

/// Rolls the panorama so that it is cut at a gaze `columns` pitches further
/// counter-clockwise.
pub fn shift_gaze_columns(p: &PanoramaImage, columns: i64) -> PanoramaImage {
    let w = p.layout.width;
    let k = columns.rem_euclid(w as i64) as usize;
    let mut out = GrayImage::new(w, p.layout.height);
    for row in 0..p.layout.height {
        let src = p.image.row(row);
        let dst = &mut out.data_mut()[row * w..(row + 1) * w];
        dst[..w - k].copy_from_slice(&src[k..]);
        dst[w - k..].copy_from_slice(&src[..k]);
    }
    PanoramaImage {
        image: out,
        gaze: HeadingAngle::new(p.gaze.radians() + columns as f64 * p.layout.column_pitch()),
        layout: p.layout,
        source: p.source,
    }
}

/// Result of a gaze shift rounded to whole columns.
#[derive(Debug, Clone)]
pub struct GazeShift {
    pub panorama: PanoramaImage,
    /// Requested minus applied rotation, radians.
    pub rounding_error: f64,
}

/// Changes the gaze by `delta` radians, rounded to the nearest column.
pub fn shift_gaze(p: &PanoramaImage, delta: f64) -> GazeShift {
    let pitch = p.layout.column_pitch();
    let k = (delta / pitch).round();
    GazeShift {
        panorama: shift_gaze_columns(p, k as i64),
        rounding_error: delta - k * pitch,
    }
}

/// Resolutions and camera parameters of the imaging pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingConfig {
    pub layout: PanoramaLayout,
    pub mirror: MirrorModel,
    /// Catadioptric image side in pixels.
    pub catadioptric_size: usize,
    /// Cubemap face side in pixels.
    pub cube_size: usize,
    pub camera_height: f64,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ImagingConfig {
    /// Horizon ring of about 1850 pixels feeding a 1800-column panorama.
    pub fn full() -> Self {
        ImagingConfig {
            layout: PanoramaLayout::FULL,
            mirror: MirrorModel::default(),
            catadioptric_size: 840,
            cube_size: 400,
            camera_height: DEFAULT_CAMERA_HEIGHT,
        }
    }

    pub fn reduced() -> Self {
        ImagingConfig {
            layout: PanoramaLayout::REDUCED,
            mirror: MirrorModel::default(),
            catadioptric_size: 176,
            cube_size: 96,
            camera_height: DEFAULT_CAMERA_HEIGHT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.mirror.validate()?;
        if self.cube_size < 64 {
            return Err(Error::InvalidArgument(format!(
                "cubemap faces need at least 64 pixels, got {}",
                self.cube_size
            )));
        }
        if !self.catadioptric_size.is_multiple_of(2) || self.catadioptric_size < 8 {
            return Err(Error::InvalidArgument(format!(
                "catadioptric size {} must be even and at least 8",
                self.catadioptric_size
            )));
        }
        if !(self.camera_height > 0.0) {
            return Err(Error::InvalidArgument("camera height must be positive".into()));
        }
        Ok(())
    }

    /// Cubemap render followed by the mirror projection.
    pub fn capture_catadioptric(&self, world: &LandmarkWorld, pos: Position2D) -> Result<CatadioptricImage> {
        let cube = render_cubemap(world, pos, self.camera_height, self.cube_size);
        catadioptric_project(&cube, self.mirror, self.catadioptric_size)
    }

    /// Full pipeline: cubemap, mirror image, rectification at `gaze`.
    pub fn capture(&self, world: &LandmarkWorld, pos: Position2D, gaze: HeadingAngle) -> Result<PanoramaImage> {
        rectify(&self.capture_catadioptric(world, pos)?, gaze, self.layout)
    }
}

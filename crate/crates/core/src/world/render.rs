//! Ray casting against terrain, trunks and canopies.

use std::ops::{Add, Mul, Neg, Sub};

use rayon::prelude::*;

use super::{LandmarkWorld, Terrain, Tree};
use crate::geometry::{HeadingAngle, Position2D};
use crate::image::GrayImage;
use crate::omni::{PanoramaImage, PanoramaLayout, PanoramaSource};

const HIT_EPS: f64 = 1e-9;
/// Lower clamp of the Lambert term.
pub const AMBIENT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    normal: Vec3,
    albedo: f64,
}

fn sphere_hit(origin: Vec3, dir: Vec3, center: Vec3, radius: f64) -> Option<(f64, Vec3)> {
    let oc = origin - center;
    let b = oc.dot(dir);
    let c = oc.dot(oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t1, t2) = (-b - s, -b + s);
    let (t, inside) = if t1 > HIT_EPS {
        (t1, false)
    } else if t2 > HIT_EPS {
        (t2, true)
    } else {
        return None;
    };
    let n = (origin + dir * t - center) * (1.0 / radius);
    Some((t, if inside { -n } else { n }))
}

/// Open vertical cylinder between `z0` and `z0 + height`.
fn cylinder_hit(
    origin: Vec3,
    dir: Vec3,
    axis: Position2D,
    z0: f64,
    height: f64,
    radius: f64,
) -> Option<(f64, Vec3)> {
    let (ox, oy) = (origin.x - axis.x, origin.y - axis.y);
    let a = dir.x * dir.x + dir.y * dir.y;
    if a < 1e-18 {
        return None;
    }
    let b = ox * dir.x + oy * dir.y;
    let c = ox * ox + oy * oy - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    for t in [(-b - s) / a, (-b + s) / a] {
        if t <= HIT_EPS {
            continue;
        }
        let z = origin.z + dir.z * t;
        if z >= z0 && z <= z0 + height {
            let p = origin + dir * t;
            let n = Vec3::new((p.x - axis.x) / radius, (p.y - axis.y) / radius, 0.0);
            return Some((t, if c < 0.0 { -n } else { n }));
        }
    }
    None
}

fn tree_hit(world: &LandmarkWorld, tree: &Tree, origin: Vec3, dir: Vec3) -> Option<Hit> {
    // cheap rejection on the horizontal distance between the ray line and the tree axis
    let (ox, oy) = (tree.position.x - origin.x, tree.position.y - origin.y);
    let a = dir.x * dir.x + dir.y * dir.y;
    let reach = tree.canopy_radius.max(tree.trunk_radius);
    if a > 1e-18 {
        let along = (ox * dir.x + oy * dir.y) / a;
        let (cx, cy) = (ox - dir.x * along.max(0.0), oy - dir.y * along.max(0.0));
        if cx * cx + cy * cy > reach * reach {
            return None;
        }
    } else if ox * ox + oy * oy > reach * reach {
        return None;
    }
    let z0 = world.terrain.height(tree.position.x, tree.position.y);
    let mut best: Option<Hit> = None;
    let center = Vec3::new(tree.position.x, tree.position.y, z0 + tree.canopy_center_height);
    if let Some((t, normal)) = sphere_hit(origin, dir, center, tree.canopy_radius) {
        best = Some(Hit {
            t,
            normal,
            albedo: tree.canopy_albedo,
        });
    }
    if let Some((t, normal)) = cylinder_hit(
        origin,
        dir,
        tree.position,
        z0,
        tree.trunk_height,
        tree.trunk_radius,
    ) {
        if best.is_none_or(|b| t < b.t) {
            best = Some(Hit {
                t,
                normal,
                albedo: tree.trunk_albedo,
            });
        }
    }
    best
}

fn terrain_normal(terrain: &Terrain, x: f64, y: f64) -> Vec3 {
    match terrain {
        Terrain::Flat { .. } => Vec3::new(0.0, 0.0, 1.0),
        _ => {
            let e = 1e-3;
            let dx = (terrain.height(x + e, y) - terrain.height(x - e, y)) / (2.0 * e);
            let dy = (terrain.height(x, y + e) - terrain.height(x, y - e)) / (2.0 * e);
            Vec3::new(-dx, -dy, 1.0).normalized()
        }
    }
}

fn terrain_hit_t(world: &LandmarkWorld, origin: Vec3, dir: Vec3, t_max: f64) -> Option<f64> {
    match world.terrain {
        Terrain::Flat { height } => {
            if dir.z < 0.0 && origin.z > height {
                let t = (height - origin.z) / dir.z;
                (t <= t_max).then_some(t)
            } else {
                None
            }
        }
        _ => {
            let lip = world.terrain.lipschitz();
            let h_max = world.terrain.max_height();
            let horiz = (dir.x * dir.x + dir.y * dir.y).sqrt();
            let mut t = 0.0;
            let mut steps = 0;
            while t < t_max && steps < 4096 {
                let p = origin + dir * t;
                if dir.z >= 0.0 && p.z > h_max {
                    return None;
                }
                let gap = p.z - world.terrain.height(p.x, p.y);
                if gap < 1e-4 {
                    return Some(t);
                }
                // the ray cannot reach the surface within `gap / closing`
                let closing = lip * horiz - dir.z;
                let step = if closing > 1e-12 {
                    (gap / closing).max(1e-3)
                } else if p.z > h_max {
                    return None;
                } else {
                    gap.max(1e-3)
                };
                t += step;
                steps += 1;
            }
            None
        }
    }
}

fn nearest_hit(world: &LandmarkWorld, origin: Vec3, dir: Vec3, t_max: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for tree in &world.landmarks {
        if let Some(h) = tree_hit(world, tree, origin, dir) {
            if h.t <= t_max && best.is_none_or(|b| h.t < b.t) {
                best = Some(h);
            }
        }
    }
    let limit = best.map_or(t_max, |b| b.t);
    if let Some(t) = terrain_hit_t(world, origin, dir, limit) {
        if best.is_none_or(|b| t < b.t) {
            let p = origin + dir * t;
            best = Some(Hit {
                t,
                normal: terrain_normal(&world.terrain, p.x, p.y),
                albedo: world.ground.albedo_at(p.x, p.y),
            });
        }
    }
    best
}

/// Shade seen along a unit-length ray.
///
/// The nearest of terrain, trunk cylinders and canopy spheres is shaded with
/// a Lambert term clamped to `[AMBIENT, 1]`; rays that escape return the sky.
pub fn ray_cast(world: &LandmarkWorld, origin: Vec3, dir: Vec3) -> f64 {
    let Some(hit) = nearest_hit(world, origin, dir, world.max_distance) else {
        return world.sky.luminance(dir.z);
    };
    let sun = world.sun.direction();
    let mut lambert = hit.normal.dot(sun).clamp(AMBIENT, 1.0);
    if world.shadows && lambert > AMBIENT {
        let p = origin + dir * hit.t + hit.normal * 1e-6;
        if nearest_hit(world, p, sun, world.max_distance).is_some() {
            lambert = AMBIENT;
        }
    }
    (hit.albedo * lambert).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubeFace {
    /// Looking north.
    Front,
    Back,
    /// Looking west.
    Left,
    Right,
    /// Looking up.
    Dorsal,
    Ventral,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [
        CubeFace::Front,
        CubeFace::Back,
        CubeFace::Left,
        CubeFace::Right,
        CubeFace::Dorsal,
        CubeFace::Ventral,
    ];

    /// (forward, right, up) basis of the face camera.
    fn basis(self) -> (Vec3, Vec3, Vec3) {
        let v = Vec3::new;
        match self {
            CubeFace::Front => (v(0.0, 1.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 0.0, 1.0)),
            CubeFace::Back => (v(0.0, -1.0, 0.0), v(-1.0, 0.0, 0.0), v(0.0, 0.0, 1.0)),
            CubeFace::Left => (v(-1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0)),
            CubeFace::Right => (v(1.0, 0.0, 0.0), v(0.0, -1.0, 0.0), v(0.0, 0.0, 1.0)),
            CubeFace::Dorsal => (v(0.0, 0.0, 1.0), v(1.0, 0.0, 0.0), v(0.0, -1.0, 0.0)),
            CubeFace::Ventral => (v(0.0, 0.0, -1.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Unit ray through the center of pixel (`col`, `row`) of a `size`-pixel
/// face with a 90 degree field of view.
pub fn face_direction(face: CubeFace, col: usize, row: usize, size: usize) -> Vec3 {
    let (f, r, u) = face.basis();
    let a = 2.0 * (col as f64 + 0.5) / size as f64 - 1.0;
    let b = 1.0 - 2.0 * (row as f64 + 0.5) / size as f64;
    (f + r * a + u * b).normalized()
}

/// Six pinhole views sharing one camera center.
#[derive(Debug, Clone, PartialEq)]
pub struct CubemapView {
    pub faces: [GrayImage; 6],
    pub position: Position2D,
    /// Height above the terrain.
    pub height: f64,
    /// Absolute camera elevation.
    pub camera_z: f64,
}

impl CubemapView {
    pub fn size(&self) -> usize {
        self.faces[0].width()
    }

    pub fn face(&self, face: CubeFace) -> &GrayImage {
        &self.faces[face.index()]
    }

    /// Nearest-neighbour lookup of the face pixel pierced by `dir`.
    pub fn sample(&self, dir: Vec3) -> f32 {
        let (ax, ay, az) = (dir.x.abs(), dir.y.abs(), dir.z.abs());
        let face = if az >= ax && az >= ay {
            if dir.z > 0.0 {
                CubeFace::Dorsal
            } else {
                CubeFace::Ventral
            }
        } else if ay >= ax {
            if dir.y > 0.0 {
                CubeFace::Front
            } else {
                CubeFace::Back
            }
        } else if dir.x > 0.0 {
            CubeFace::Right
        } else {
            CubeFace::Left
        };
        let (f, r, u) = face.basis();
        let depth = dir.dot(f);
        let a = dir.dot(r) / depth;
        let b = dir.dot(u) / depth;
        let n = self.size();
        let col = (((a + 1.0) * 0.5 * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        let row = (((1.0 - b) * 0.5 * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize;
        self.faces[face.index()].get(col, row)
    }
}

/// Renders the six 90 degree faces at `height` above the terrain at `pos`.
pub fn render_cubemap(world: &LandmarkWorld, pos: Position2D, height: f64, size: usize) -> CubemapView {
    let camera_z = world.terrain_height(pos) + height;
    let origin = Vec3::new(pos.x, pos.y, camera_z);
    let faces = CubeFace::ALL.map(|face| {
        let mut data = vec![0f32; size * size];
        data.par_chunks_mut(size).enumerate().for_each(|(row, line)| {
            for (col, px) in line.iter_mut().enumerate() {
                *px = ray_cast(world, origin, face_direction(face, col, row, size)) as f32;
            }
        });
        GrayImage::from_vec(size, size, data).expect("face buffer sized")
    });
    CubemapView {
        faces,
        position: pos,
        height,
        camera_z,
    }
}

/// World-frame unit ray for elevation `el` and heading `az` (radians).
pub fn heading_ray(az: f64, el: f64) -> Vec3 {
    let (se, ce) = el.sin_cos();
    let (sa, ca) = az.sin_cos();
    Vec3::new(-sa * ce, ca * ce, se)
}

/// Ray-casts every panorama pixel directly, bypassing the mirror model.
pub fn render_panorama_direct(
    world: &LandmarkWorld,
    pos: Position2D,
    height: f64,
    gaze: HeadingAngle,
    layout: PanoramaLayout,
) -> PanoramaImage {
    let origin = Vec3::new(pos.x, pos.y, world.terrain_height(pos) + height);
    let (w, h) = (layout.width, layout.height);
    let mut data = vec![0f32; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(row, line)| {
        let el = layout.row_elevation(row);
        for (col, px) in line.iter_mut().enumerate() {
            let az = gaze.radians() + layout.column_offset(col);
            *px = ray_cast(world, origin, heading_ray(az, el)) as f32;
        }
    });
    PanoramaImage {
        image: GrayImage::from_vec(w, h, data).expect("panorama buffer sized"),
        gaze,
        layout,
        source: PanoramaSource::Direct,
    }
}

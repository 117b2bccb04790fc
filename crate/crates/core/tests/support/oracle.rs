//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

/// Counter-clockwise rotation of `(x, y)` by `a`, written as the plain matrix
/// product.
pub fn rot(v: (f64, f64), a: f64) -> (f64, f64) {
    let (s, c) = a.sin_cos();
    (c * v.0 - s * v.1, s * v.0 + c * v.1)
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn dot(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

/// Angle `phi` such that `rot(from, phi)` points along `to`, found by
/// enumerating 360,000 candidate rotations and bisecting the sign change of
/// the cross product around the best one.
pub fn aligning_rotation(from: (f64, f64), to: (f64, f64)) -> f64 {
    const N: usize = 360_000;
    let best = (0..N)
        .map(|k| TAU * k as f64 / N as f64)
        .max_by(|&a, &b| dot(rot(from, a), to).total_cmp(&dot(rot(from, b), to)))
        .unwrap();
    // cross(rot(from, phi), to) falls through zero at the aligned angle
    let h = TAU / N as f64;
    let (mut lo, mut hi) = (best - h, best + h);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cross(rot(from, mid), to) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Gaze heading of a direction: the rotation taking north onto it.
pub fn gaze_heading(g: (f64, f64)) -> f64 {
    aligning_rotation((0.0, 1.0), g)
}

/// Egocentric home vector: `y` along the gaze, `x` to its right.
pub fn home_vector(pos: (f64, f64), nest: (f64, f64), gaze: f64) -> (f64, f64) {
    let gaze_dir = rot((0.0, 1.0), gaze);
    let to_nest = (nest.0 - pos.0, nest.1 - pos.1);
    let phi = aligning_rotation(gaze_dir, to_nest);
    // a home direction phi to the left of the gaze lies at -sin(phi) on the right axis
    (-phi.sin(), phi.cos())
}

/// Tiny deterministic generator so the oracles do not share the crate's RNG.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Central difference `(f(x + eps) - f(x - eps)) / 2 eps`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Relative error with a floor on the denominator for near-zero gradients.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Fully connected head evaluated from scratch: `tanh(W a + b)`.
pub fn head(weights: &[f64], bias: &[f64], activations: &[f64]) -> Vec<f64> {
    let n = activations.len();
    bias.iter()
        .enumerate()
        .map(|(k, b)| {
            let z: f64 = weights[k * n..(k + 1) * n].iter().zip(activations).map(|(w, a)| w * a).sum();
            (z + b).tanh()
        })
        .collect()
}

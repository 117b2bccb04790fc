/// Lattice value noise with smoothstep interpolation.
#[derive(Debug, Clone, Copy)]
pub struct ValueNoise {
    seed: u64,
}

fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

impl ValueNoise {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Lattice value in `[-1, 1]`.
    fn lattice(&self, i: i64, j: i64) -> f64 {
        let h = mix64(
            self.seed
                ^ mix64((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
                ^ mix64((j as u64).wrapping_add(0x632b_e59b_d9b4_e019)),
        );
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    /// Single octave at unit lattice spacing, in `[-1, 1]`.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let (fu, fv) = (u.floor(), v.floor());
        let (i, j) = (fu as i64, fv as i64);
        let (tu, tv) = (smoothstep(u - fu), smoothstep(v - fv));
        let a = self.lattice(i, j);
        let b = self.lattice(i + 1, j);
        let c = self.lattice(i, j + 1);
        let d = self.lattice(i + 1, j + 1);
        let top = a + (b - a) * tu;
        let bottom = c + (d - c) * tu;
        top + (bottom - top) * tv
    }

    /// Two octaves (second at double frequency, half weight), in `[-1, 1]`.
    pub fn two_octave(&self, u: f64, v: f64) -> f64 {
        let detail = ValueNoise::new(self.seed ^ 0x5bd1_e995);
        (self.sample(u, v) + 0.5 * detail.sample(2.0 * u + 17.3, 2.0 * v - 5.1)) / 1.5
    }
}

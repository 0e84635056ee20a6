//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a single `u64` through
//! `SeedableRng::seed_from_u64`. Standard normals come from the Box-Muller
//! transform applied to consecutive pairs of uniforms, both outputs are used
//! in order (cosine branch first). Given a seed the sequence of normals is
//! therefore fully determined by this file and the `rand_chacha` stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian and uniform draws from one deterministic stream.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn experiment tags into stable 64-bit keys.
fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of trial `trial` within experiment `tag`:
/// `base_seed XOR mix(tag, trial)`.
///
/// Independent of scheduling order, so parallel sweeps stay reproducible.
pub fn trial_seed(base_seed: u64, tag: &str, trial: u64) -> u64 {
    base_seed ^ splitmix64(fnv1a(tag) ^ splitmix64(trial))
}

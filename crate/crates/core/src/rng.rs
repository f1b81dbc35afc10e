//! Seeded random streams.
//!
//! Every stream is a ChaCha20 generator (`rand_chacha`) keyed by
//! `ChaCha20Rng::seed_from_u64(master)`; the 64-bit stream id is a SplitMix64
//! fold of the caller's tags, so independent stream ids for (repetition,
//! path, purpose) never depend on scheduling order. Uniforms use the top 53
//! bits of each output shifted to the open interval `(0, 1)`; standard normals
//! are obtained by inversion of the normal CDF.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal};

/// Stream tags shared by the simulators and the harness.
pub mod tags {
    pub const PAST: u64 = 1;
    pub const EVAL: u64 = 2;
    pub const LSM: u64 = 3;
    pub const REPETITION: u64 = 4;
    pub const GAP: u64 = 5;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn stream_id(tags: &[u64]) -> u64 {
    tags.iter()
        .fold(0x5EED_0F57_0A7E_0001, |acc, t| splitmix64(acc ^ splitmix64(*t)))
}

pub struct Substream {
    rng: ChaCha20Rng,
    normal: Normal,
}

impl Substream {
    pub fn new(master: u64, tags: &[u64]) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(master);
        rng.set_stream(stream_id(tags));
        Self {
            rng,
            normal: Normal::new(0.0, 1.0).expect("standard normal"),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    /// Index drawn from a probability vector.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

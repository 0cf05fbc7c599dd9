//! Seed-reproducible random streams and the samplers used by the simulation.
//!
//! Every stream is derived from a lineage tuple `(master_seed, strategy, society,
//! purpose)`. The tuple is hashed into a ChaCha key, so streams never share state
//! and any stream can be re-created without replaying another.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};

/// What a stream is used for inside one society.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Proposal = 0,
    Optimizer = 1,
    Mating = 2,
    Reproduction = 3,
    Mutation = 4,
    Mortality = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lineage {
    pub master_seed: u64,
    pub strategy_tag: u8,
    pub society_index: u64,
    pub purpose_tag: u8,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    lineage: Lineage,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent stream from its lineage tuple. Pure function of the tuple.
pub fn derive_stream(master_seed: u64, strategy_tag: u8, society_index: u64, purpose_tag: u8) -> RngStream {
    let lineage = Lineage { master_seed, strategy_tag, society_index, purpose_tag };
    let mut h = mix64(master_seed ^ GOLDEN);
    h = mix64(h ^ (u64::from(strategy_tag) << 8 | u64::from(purpose_tag)));
    h = mix64(h ^ society_index.wrapping_mul(GOLDEN));
    let mut key = [0u8; 32];
    let mut s = h;
    for chunk in key.chunks_exact_mut(8) {
        s = s.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix64(s).to_le_bytes());
    }
    RngStream { rng: ChaCha8Rng::from_seed(key), lineage }
}

impl RngStream {
    pub fn for_purpose(master_seed: u64, strategy_tag: u8, society_index: u64, purpose: Purpose) -> Self {
        derive_stream(master_seed, strategy_tag, society_index, purpose as u8)
    }

    pub fn lineage(&self) -> Lineage {
        self.lineage
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform01(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn exponential(&mut self, rate: f64) -> Result<f64> {
        check_positive("rate", rate)?;
        // 1 - u is in (0, 1), so the draw is strictly positive.
        Ok(exponential_quantile(1.0 - self.uniform_open(), rate))
    }

    pub fn poisson(&mut self, mean: f64) -> Result<u64> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::param("mean", format!("must be finite and >= 0, got {mean}")));
        }
        if mean == 0.0 {
            return Ok(0);
        }
        let dist = Poisson::new(mean).map_err(|e| Error::param("mean", e.to_string()))?;
        Ok(dist.sample(&mut self.rng) as u64)
    }

    pub fn bernoulli(&mut self, p: f64) -> Result<bool> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("p", format!("must lie in [0, 1], got {p}")));
        }
        if p == 1.0 {
            return Ok(true);
        }
        Ok(self.uniform01() < p)
    }

    pub fn gaussian(&mut self, mean: f64, sd: f64) -> Result<f64> {
        if !(sd >= 0.0) || !sd.is_finite() {
            return Err(Error::param("sd", format!("must be finite and >= 0, got {sd}")));
        }
        if sd == 0.0 {
            return Ok(mean);
        }
        let dist = Normal::new(mean, sd).map_err(|e| Error::param("sd", e.to_string()))?;
        Ok(dist.sample(&mut self.rng))
    }

    /// Standard normal draw, used for optimizer restarts.
    pub(crate) fn standard_normal(&mut self) -> f64 {
        self.rng.sample(rand_distr::StandardNormal)
    }
}

/// Inverse CDF of Exp(rate): the value whose upper-tail probability is `1 - u`.
pub fn exponential_quantile(u: f64, rate: f64) -> f64 {
    -(1.0 - u).ln() / rate
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

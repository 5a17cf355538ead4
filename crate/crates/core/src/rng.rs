//! Deterministic random numbers: SplitMix64 bits, Box-Muller gaussians,
//! He-initialized weight tensors.
//!
//! All randomness in the crate flows through [`Prng`] so that a seed fully
//! determines training runs, synthetic data, and checkpoints across platforms.

use crate::error::Result;
use crate::tensor::{Shape, Tensor};

/// SplitMix64 generator. Small state, full 2^64 period, and cheap enough
/// that giving every consumer its own instance costs nothing.
#[derive(Debug, Clone)]
pub struct Prng {
    state: u64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Prng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut x = self.state;
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
        x ^ (x >> 31)
    }

    /// Uniform in [0, 1), using the top 53 bits so every value is an exact
    /// multiple of 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller. Draws two uniforms per call and keeps
    /// only the cosine branch; u1 == 0 is remapped to 2^-53 so ln(u1) stays
    /// finite.
    pub fn next_gaussian(&mut self) -> f64 {
        let mut u1 = self.next_f64();
        if u1 == 0.0 {
            u1 = 1.0 / (1u64 << 53) as f64;
        }
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Uniform in [0, n). Multiply-shift reduction; the modulo bias at
    /// n << 2^64 is far below anything observable here.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

/// Weight tensor drawn from N(0, 2 / fan_in), the He initialization used for
/// every ReLU-activated layer in this crate. Biases are initialized to zero
/// elsewhere; this function only produces weights.
pub fn he_init(shape: Shape, fan_in: usize, rng: &mut Prng) -> Result<Tensor> {
    let std = (2.0 / fan_in as f64).sqrt();
    let mut t = Tensor::new(shape, 0.0)?;
    for v in t.data_mut() {
        *v = rng.next_gaussian() * std;
    }
    Ok(t)
}

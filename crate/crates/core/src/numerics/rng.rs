//! Counter-based Gaussian sampling.
//!
//! Every draw is addressed by `(seed, stream_index)`: the ChaCha8 keystream
//! keyed by the seed and positioned on the given stream. Callers assign one
//! stream per Monte Carlo sample so results never depend on evaluation order
//! or thread count. Uniforms are turned into normals with the Marsaglia polar
//! method.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngState {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    pub fn normals(&self) -> NormalStream {
        NormalStream::new(*self)
    }

    pub(crate) fn uniform_source(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Mixes a tag into a seed (SplitMix64 finalizer) to get an unrelated key.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform double in [0, 1) with 53 random bits.
pub(crate) fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal variates from one `(seed, stream)` address.
pub struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(state: RngState) -> Self {
        Self { rng: state.uniform_source(), spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * unit_f64(&mut self.rng) - 1.0;
            let v = 2.0 * unit_f64(&mut self.rng) - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn next_uniform(&mut self) -> f64 {
        unit_f64(&mut self.rng)
    }
}

/// Diagonal Gaussian with per-dimension standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    sigma: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if let Some(i) = sigma.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::config(format!("sigma[{i}] = {} must be finite and >= 0", sigma[i])));
        }
        Ok(Self { sigma })
    }

    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self> {
        Self::new(vec![sigma; dim])
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// Writes one draw into `out`. Zero-sigma coordinates get exactly 0 but
    /// still consume their normal, keeping the stream layout fixed.
    pub fn fill(&self, rng: RngState, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.sigma.len());
        let mut normals = rng.normals();
        for (o, &s) in out.iter_mut().zip(&self.sigma) {
            let z = normals.next_normal();
            *o = if s == 0.0 { 0.0 } else { s * z };
        }
    }
}

/// One draw of `len` coordinates from `N(0, diag(sigma^2))`.
pub fn sample_gaussian(rng: RngState, kernel: &GaussianKernel, len: usize) -> Result<Tensor> {
    if len != kernel.dim() || len == 0 {
        return Err(Error::InputShape { expected: kernel.dim(), got: len });
    }
    let mut out = vec![0.0; len];
    kernel.fill(rng, &mut out);
    Tensor::vector(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_zero_vector() {
        let k = GaussianKernel::isotropic(16, 0.0).unwrap();
        let t = sample_gaussian(RngState::new(3, 9), &k, 16).unwrap();
        assert!(t.as_slice().iter().all(|&v| v == 0.0 && v.is_sign_positive()));
    }

    #[test]
    fn length_must_match_kernel() {
        let k = GaussianKernel::isotropic(3, 1.0).unwrap();
        assert!(sample_gaussian(RngState::new(0, 0), &k, 4).is_err());
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(GaussianKernel::new(vec![1.0, -0.1]).is_err());
        assert!(GaussianKernel::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn deterministic_per_address() {
        let k = GaussianKernel::new(vec![1.0, 2.0, 0.0, 0.5]).unwrap();
        let a = sample_gaussian(RngState::new(42, 7), &k, 4).unwrap();
        let b = sample_gaussian(RngState::new(42, 7), &k, 4).unwrap();
        let c = sample_gaussian(RngState::new(42, 8), &k, 4).unwrap();
        let d = sample_gaussian(RngState::new(43, 7), &k, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.as_slice()[2], 0.0);
    }

    #[test]
    fn moments_of_a_million_draws() {
        let n = 1_000_000;
        let mut s = NormalStream::new(RngState::new(2024, 0));
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.next_normal();
            sum += z;
            sum2 += z * z;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() <= 0.005, "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "var {var}");
    }

    #[test]
    fn dimensions_are_uncorrelated() {
        let n = 1_000_000u64;
        let k = GaussianKernel::isotropic(3, 1.0).unwrap();
        let mut buf = [0.0; 3];
        let mut sums = [0.0; 3];
        let mut cross = [[0.0; 3]; 3];
        for i in 0..n {
            k.fill(RngState::new(11, i), &mut buf);
            for a in 0..3 {
                sums[a] += buf[a];
                for b in 0..3 {
                    cross[a][b] += buf[a] * buf[b];
                }
            }
        }
        let nf = n as f64;
        let cov = |a: usize, b: usize| cross[a][b] / nf - sums[a] * sums[b] / (nf * nf);
        for a in 0..3 {
            for b in (a + 1)..3 {
                let rho = cov(a, b) / (cov(a, a) * cov(b, b)).sqrt();
                assert!(rho.abs() <= 0.01, "rho[{a}][{b}] = {rho}");
            }
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0);
        let b = derive_seed(1, 1);
        let c = derive_seed(2, 0);
        assert!(a != b && a != c && b != c);
        assert_eq!(derive_seed(1, 0), a);
    }
}

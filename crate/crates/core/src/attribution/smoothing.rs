use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::saliency::SaliencyMap;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{erfinv, GaussianKernel, RngState};
use crate::tensor::{DataRange, Tensor};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_SAMPLES: usize = 50;

/// Samples evaluated per parallel batch before their ordered reduction.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Smoother {
    None,
    /// Isotropic noise with `sigma = alpha * (x_max - x_min)`.
    SmoothGrad { alpha: f64 },
    /// Per-dimension sigma keeping each coordinate in range with confidence `c`.
    AdaptGrad { confidence: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub n_samples: usize,
    #[serde(flatten)]
    pub mode: Smoother,
    pub seed: u64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl SmootherConfig {
    pub fn none() -> Self {
        Self { n_samples: DEFAULT_SAMPLES, mode: Smoother::None, seed: 0 }
    }

    pub fn smoothgrad(alpha: f64, n_samples: usize, seed: u64) -> Self {
        Self { n_samples, mode: Smoother::SmoothGrad { alpha }, seed }
    }

    pub fn adaptgrad(confidence: f64, n_samples: usize, seed: u64) -> Self {
        Self { n_samples, mode: Smoother::AdaptGrad { confidence }, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Smoother::None => return Ok(()),
            Smoother::SmoothGrad { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::config(format!("SmoothGrad alpha {alpha} must be positive")));
                }
            }
            Smoother::AdaptGrad { confidence } => check_confidence(confidence)?,
        }
        if self.n_samples == 0 {
            return Err(Error::config("smoothing needs at least one sample"));
        }
        Ok(())
    }

    /// Per-dimension noise scale at `x`.
    pub fn kernel(&self, x: &[f64], range: DataRange) -> Result<GaussianKernel> {
        match self.mode {
            Smoother::None => GaussianKernel::isotropic(x.len(), 0.0),
            Smoother::SmoothGrad { alpha } => GaussianKernel::isotropic(x.len(), alpha * range.width()),
            Smoother::AdaptGrad { confidence } => GaussianKernel::new(adaptgrad_sigma(x, range, confidence)?),
        }
    }
}

pub(crate) fn check_confidence(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::config(format!("confidence level {c} must lie in (0, 1)")));
    }
    Ok(())
}

/// `sigma_i = min(|x_i - x_min|, |x_i - x_max|) / (sqrt(2) erfinv((1 + c) / 2))`.
///
/// Inputs outside the range are rejected rather than clamped.
pub fn adaptgrad_sigma(x: &[f64], range: DataRange, confidence: f64) -> Result<Vec<f64>> {
    check_confidence(confidence)?;
    let z = SQRT_2 * erfinv((1.0 + confidence) / 2.0)?;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if !range.contains(v) {
                return Err(Error::domain(format!(
                    "x[{i}] = {v} outside the data range [{}, {}]",
                    range.x_min, range.x_max
                )));
            }
            Ok((v - range.x_min).abs().min((v - range.x_max).abs()) / z)
        })
        .collect()
}

/// Monte Carlo estimate of the Gaussian-smoothed gradient; the plain gradient
/// when the smoother is `None` or every sigma is zero.
pub fn smoothed_gradient(
    model: &Model,
    x: &[f64],
    class: usize,
    cfg: &SmootherConfig,
    range: DataRange,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.len() != model.input_dim() {
        return Err(Error::InputShape { expected: model.input_dim(), got: x.len() });
    }
    let kernel = cfg.kernel(x, range)?;
    if matches!(cfg.mode, Smoother::None) || kernel.sigma().iter().all(|&s| s == 0.0) {
        return model.input_gradient(x, class);
    }
    let n = cfg.n_samples;
    let mut sum = vec![0.0; x.len()];
    for start in (0..n).step_by(CHUNK) {
        let grads: Result<Vec<Vec<f64>>> = (start..(start + CHUNK).min(n))
            .into_par_iter()
            .map(|i| {
                let mut point = vec![0.0; x.len()];
                kernel.fill(RngState::new(cfg.seed, i as u64), &mut point);
                for (p, v) in point.iter_mut().zip(x) {
                    *p += v;
                }
                model.input_gradient(&point, class)
            })
            .collect();
        for g in grads? {
            for (s, v) in sum.iter_mut().zip(&g) {
                *s += v;
            }
        }
    }
    let inv = 1.0 / n as f64;
    Ok(sum.into_iter().map(|s| s * inv).collect())
}

pub(crate) fn wrap(
    model: &Model,
    values: Vec<f64>,
    method_chain: String,
    config: serde_json::Value,
) -> Result<SaliencyMap> {
    let values = Tensor::vector(values)?;
    Ok(SaliencyMap { values, method_chain, model_id: model.id(), config })
}

/// Plain input gradient of the class score.
pub fn vanilla_saliency(model: &Model, x: &[f64], class: usize) -> Result<SaliencyMap> {
    let g = model.input_gradient(x, class)?;
    wrap(model, g, "Grad".into(), serde_json::json!({ "method": "Grad", "class": class }))
}

/// SmoothGrad: mean gradient under isotropic noise `sigma = alpha * width`.
pub fn smoothgrad(
    model: &Model,
    x: &[f64],
    class: usize,
    cfg: &SmootherConfig,
    range: DataRange,
) -> Result<SaliencyMap> {
    if !matches!(cfg.mode, Smoother::SmoothGrad { .. }) {
        return Err(Error::config("smoothgrad needs a SmoothGrad smoother config"));
    }
    let g = smoothed_gradient(model, x, class, cfg, range)?;
    wrap(model, g, "SG".into(), serde_json::json!({ "method": "SG", "class": class, "smoother": cfg, "range": range }))
}

/// AdaptGrad: mean gradient under per-dimension noise from [`adaptgrad_sigma`].
pub fn adaptgrad(
    model: &Model,
    x: &[f64],
    class: usize,
    cfg: &SmootherConfig,
    range: DataRange,
) -> Result<SaliencyMap> {
    if !matches!(cfg.mode, Smoother::AdaptGrad { .. }) {
        return Err(Error::config("adaptgrad needs an AdaptGrad smoother config"));
    }
    let g = smoothed_gradient(model, x, class, cfg, range)?;
    wrap(model, g, "AG".into(), serde_json::json!({ "method": "AG", "class": class, "smoother": cfg, "range": range }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{smoothed_gradient_oracle, NormalStream};

    fn range() -> DataRange {
        DataRange::new(-2.12, 2.64).unwrap()
    }

    #[test]
    fn sigma_at_midpoint_and_bounds() {
        let s = adaptgrad_sigma(&[0.26, 2.64, -2.12], range(), 0.95).unwrap();
        assert!((s[0] - 2.38 / 2.241402727604945).abs() < 1e-12);
        assert!((s[0] - 1.06183).abs() < 1e-5);
        assert_eq!(s[1], 0.0);
        assert_eq!(s[2], 0.0);
        let tighter = adaptgrad_sigma(&[0.26], range(), 0.999).unwrap();
        assert!(tighter[0] < s[0]);
    }

    #[test]
    fn sigma_errors() {
        assert!(matches!(adaptgrad_sigma(&[0.0], range(), 1.0), Err(Error::Config(_))));
        assert!(matches!(adaptgrad_sigma(&[0.0], range(), 0.0), Err(Error::Config(_))));
        assert!(matches!(adaptgrad_sigma(&[3.0], range(), 0.95), Err(Error::Domain(_))));
    }

    #[test]
    fn linear_model_is_a_fixed_point() {
        let m = Model::linear(vec![1.0, 2.0], 0.0).unwrap();
        let x = [0.3, 0.6];
        for cfg in [
            SmootherConfig::smoothgrad(0.2, 37, 4),
            SmootherConfig::adaptgrad(0.95, 37, 4),
            SmootherConfig::smoothgrad(0.2, 1, 9),
        ] {
            let g = smoothed_gradient(&m, &x, 0, &cfg, DataRange::unit()).unwrap();
            assert!((g[0] - 1.0).abs() <= 1e-12 && (g[1] - 2.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_sample_uses_the_recorded_draw() {
        let m = Model::sinusoid(3.0).unwrap();
        let cfg = SmootherConfig::smoothgrad(0.2, 1, 77);
        let g = smoothed_gradient(&m, &[0.7], 0, &cfg, DataRange::unit()).unwrap()[0];
        let eps = 0.2 * NormalStream::new(RngState::new(77, 0)).next_normal();
        assert_eq!(g, 3.0 * (3.0 * (0.7 + eps)).cos());
    }

    #[test]
    fn boundary_inputs_reduce_to_vanilla() {
        let m = Model::half_squared_norm(3).unwrap();
        let x = [0.0, 1.0, 1.0];
        let cfg = SmootherConfig::adaptgrad(0.95, 50, 1);
        let ag = adaptgrad(&m, &x, 0, &cfg, DataRange::unit()).unwrap();
        assert_eq!(ag.as_slice(), &x[..]);
        assert_eq!(ag.method_chain, "AG");
    }

    #[test]
    fn smoothgrad_tracks_the_oracle() {
        let m = Model::sinusoid(3.0).unwrap();
        // sigma = 0.2 * width with width 1
        let cfg = SmootherConfig::smoothgrad(0.2, 10240, 3);
        let est = smoothgrad(&m, &[0.7], 0, &cfg, DataRange::unit()).unwrap().as_slice()[0];
        let oracle = smoothed_gradient_oracle(&m, 0.7, 0.2, None).unwrap();
        // per-sample standard deviation is at most |k| = 3
        let se = 3.0 / (10240f64).sqrt();
        assert!((est - oracle).abs() <= 3.0 * se, "{est} vs {oracle}");
    }

    #[test]
    fn rejects_bad_configs() {
        let m = Model::sinusoid(1.0).unwrap();
        let r = DataRange::unit();
        assert!(smoothgrad(&m, &[0.5], 0, &SmootherConfig::smoothgrad(0.0, 10, 0), r).is_err());
        assert!(smoothgrad(&m, &[0.5], 0, &SmootherConfig::smoothgrad(-1.0, 10, 0), r).is_err());
        assert!(smoothgrad(&m, &[0.5], 0, &SmootherConfig::smoothgrad(0.2, 0, 0), r).is_err());
        assert!(smoothgrad(&m, &[0.5], 0, &SmootherConfig::adaptgrad(0.9, 10, 0), r).is_err());
        assert!(adaptgrad(&m, &[1.5], 0, &SmootherConfig::adaptgrad(0.9, 10, 0), r).is_err());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let m = Model::sinusoid(5.0).unwrap();
        let cfg = SmootherConfig::smoothgrad(0.3, 1000, 12);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| smoothed_gradient(&m, &[0.1], 0, &cfg, DataRange::unit()).unwrap())
        };
        assert_eq!(run(1)[0].to_bits(), run(4)[0].to_bits());
    }
}

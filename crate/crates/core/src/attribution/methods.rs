use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::saliency::SaliencyMap;
use super::smoothing::{smoothed_gradient, wrap, Smoother, SmootherConfig};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{derive_seed, RngState};
use crate::tensor::{DataRange, Tensor};

const NOISEGRAD_STREAM_TAG: u64 = 0x4e47;

fn prefix(smoother: &SmootherConfig) -> &'static str {
    match smoother.mode {
        Smoother::None => "",
        Smoother::SmoothGrad { .. } => "S-",
        Smoother::AdaptGrad { .. } => "A-",
    }
}

/// Gradient x Input, with the gradient optionally smoothed (GI, S-GI, A-GI).
pub fn gradient_times_input(
    model: &Model,
    x: &[f64],
    class: usize,
    smoother: &SmootherConfig,
    range: DataRange,
) -> Result<SaliencyMap> {
    let g = smoothed_gradient(model, x, class, smoother, range)?;
    let values = g.iter().zip(x).map(|(g, v)| g * v).collect();
    let chain = format!("{}GI", prefix(smoother));
    wrap(model, values, chain.clone(), serde_json::json!({ "method": chain, "class": class, "smoother": smoother, "range": range }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Every coordinate at `x_min`.
    Black,
    /// Every coordinate at `x_max`.
    White,
    Custom(Tensor),
}

impl Baseline {
    pub fn tag(&self) -> &'static str {
        match self {
            Baseline::Black => "B",
            Baseline::White => "W",
            Baseline::Custom(_) => "C",
        }
    }

    pub fn resolve(&self, dim: usize, range: DataRange) -> Result<Vec<f64>> {
        match self {
            Baseline::Black => Ok(vec![range.x_min; dim]),
            Baseline::White => Ok(vec![range.x_max; dim]),
            Baseline::Custom(t) => {
                if t.len() != dim {
                    return Err(Error::config(format!("baseline has {} values, model expects {dim}", t.len())));
                }
                if t.as_slice().iter().any(|v| !range.contains(*v)) {
                    return Err(Error::config("custom baseline leaves the data range"));
                }
                Ok(t.as_slice().to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgConfig {
    pub steps: usize,
    pub baseline: Baseline,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self { steps: 64, baseline: Baseline::Black }
    }
}

/// Integrated Gradients with a midpoint Riemann sum along the straight path
/// from the baseline. With a smoother, each path gradient is replaced by the
/// smoothed gradient at that point (S-IG, A-IG); step `k` uses a seed derived
/// from the smoother seed and `k`.
pub fn integrated_gradients(
    model: &Model,
    x: &[f64],
    class: usize,
    cfg: &IgConfig,
    smoother: &SmootherConfig,
    range: DataRange,
) -> Result<SaliencyMap> {
    if cfg.steps == 0 {
        return Err(Error::config("integrated gradients needs at least one step"));
    }
    if x.len() != model.input_dim() {
        return Err(Error::InputShape { expected: model.input_dim(), got: x.len() });
    }
    smoother.validate()?;
    let base = cfg.baseline.resolve(x.len(), range)?;
    let steps = cfg.steps;
    let clamp = matches!(smoother.mode, Smoother::AdaptGrad { .. });
    let grads: Result<Vec<Vec<f64>>> = (0..steps)
        .into_par_iter()
        .map(|k| {
            let t = (k as f64 + 0.5) / steps as f64;
            let point: Vec<f64> = base
                .iter()
                .zip(x)
                .map(|(b, v)| {
                    let p = b + t * (v - b);
                    // AdaptGrad rejects points outside the range; the path only
                    // leaves it by rounding
                    if clamp { p.clamp(range.x_min, range.x_max) } else { p }
                })
                .collect();
            let step_cfg = smoother.with_seed(derive_seed(smoother.seed, k as u64));
            smoothed_gradient(model, &point, class, &step_cfg, range)
        })
        .collect();
    let mut sum = vec![0.0; x.len()];
    for g in grads? {
        for (s, v) in sum.iter_mut().zip(&g) {
            *s += v;
        }
    }
    let values = sum
        .iter()
        .zip(x.iter().zip(&base))
        .map(|(s, (v, b))| (v - b) * s / steps as f64)
        .collect();
    let chain = format!("{}IG({})", prefix(smoother), cfg.baseline.tag());
    wrap(
        model,
        values,
        chain.clone(),
        serde_json::json!({ "method": chain, "class": class, "ig": cfg, "smoother": smoother, "range": range }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseGradConfig {
    pub n_models: usize,
    /// Standard deviation of the multiplicative parameter noise.
    pub relative_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseGradConfig {
    fn default() -> Self {
        Self { n_models: 25, relative_sigma: 0.1, seed: 0 }
    }
}

impl NoiseGradConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(Error::config("NoiseGrad needs at least one model"));
        }
        if !(self.relative_sigma > 0.0 && self.relative_sigma.is_finite()) {
            return Err(Error::config(format!("NoiseGrad sigma {} must be positive", self.relative_sigma)));
        }
        Ok(())
    }

    /// Model `m`: every parameter scaled by `1 + eta * z`, `z ~ N(0, 1)` drawn in
    /// checkpoint order from stream `m`.
    pub fn perturbed_model(&self, model: &Model, m: usize) -> Model {
        let mut normals = RngState::new(derive_seed(self.seed, NOISEGRAD_STREAM_TAG), m as u64).normals();
        let eta = self.relative_sigma;
        model.map_parameters(|p| p * (1.0 + eta * normals.next_normal()))
    }
}

/// NoiseGrad: averages `base` over `M` parameter-perturbed copies of the
/// model. `base` receives the perturbed model and its index.
pub fn noisegrad<F>(
    model: &Model,
    x: &[f64],
    class: usize,
    cfg: &NoiseGradConfig,
    base: F,
) -> Result<Vec<f64>>
where
    F: Fn(&Model, usize, &[f64], usize) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    let maps: Result<Vec<Vec<f64>>> = (0..cfg.n_models)
        .into_par_iter()
        .map(|m| base(&cfg.perturbed_model(model, m), m, x, class))
        .collect();
    let mut sum = vec![0.0; x.len()];
    for g in maps? {
        if g.len() != sum.len() {
            return Err(Error::InputShape { expected: sum.len(), got: g.len() });
        }
        for (s, v) in sum.iter_mut().zip(&g) {
            *s += v;
        }
    }
    let inv = 1.0 / cfg.n_models as f64;
    Ok(sum.into_iter().map(|s| s * inv).collect())
}

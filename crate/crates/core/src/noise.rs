//! Inherent noise: the probability that a Gaussian perturbation of a
//! coordinate leaves the data range.
//!
//! For a coordinate `x` in `[x_min, x_max]` perturbed with standard deviation
//! `sigma`,
//!
//! ```text
//! A(x) = 1 - [Phi((x_max - x) / sigma) - Phi((x_min - x) / sigma)]
//! ```
//!
//! with `A = 0` when `sigma = 0`.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::adaptgrad_sigma;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::numerics::{derive_seed, erf, erfc, quadrature, GaussianKernel, RngState};
use crate::tensor::DataRange;

/// Default absolute tolerance for [`expected_inherent_noise`].
pub const EXPECTED_AREA_TOL: f64 = 1e-8;

const OOB_STREAM_TAG: u64 = 0x4f4f42;

/// Which smoother's noise scale to analyse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum NoiseMethod {
    #[serde(rename = "sg")]
    SmoothGrad { alpha: f64 },
    #[serde(rename = "ag")]
    AdaptGrad { confidence: f64 },
}

impl NoiseMethod {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseMethod::SmoothGrad { .. } => "sg",
            NoiseMethod::AdaptGrad { .. } => "ag",
        }
    }

    pub fn params(&self) -> serde_json::Value {
        match *self {
            NoiseMethod::SmoothGrad { alpha } => serde_json::json!({ "alpha": alpha }),
            NoiseMethod::AdaptGrad { confidence } => serde_json::json!({ "confidence": confidence }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseMethod::SmoothGrad { alpha } => check_alpha(alpha),
            NoiseMethod::AdaptGrad { confidence } => {
                if !(confidence > 0.0 && confidence < 1.0) {
                    return Err(Error::config(format!("confidence level {confidence} must lie in (0, 1)")));
                }
                Ok(())
            }
        }
    }

    /// Inherent noise of one coordinate.
    pub fn at(&self, x: f64, range: DataRange) -> Result<f64> {
        match *self {
            NoiseMethod::SmoothGrad { alpha } => inherent_noise_sg(x, alpha, range),
            NoiseMethod::AdaptGrad { confidence } => inherent_noise_ag(x, confidence, range),
        }
    }

    fn kernel(&self, x: &[f64], range: DataRange) -> Result<GaussianKernel> {
        match *self {
            NoiseMethod::SmoothGrad { alpha } => GaussianKernel::isotropic(x.len(), alpha * range.width()),
            NoiseMethod::AdaptGrad { confidence } => GaussianKernel::new(adaptgrad_sigma(x, range, confidence)?),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!("SmoothGrad alpha {alpha} must be positive")));
    }
    Ok(())
}

fn check_in_range(x: f64, range: DataRange) -> Result<()> {
    if !range.contains(x) {
        return Err(Error::domain(format!("x = {x} outside [{}, {}]", range.x_min, range.x_max)));
    }
    Ok(())
}

/// Out-of-bounds probability of `x + N(0, sigma^2)`.
///
/// Both tails are evaluated with `erfc`, so tiny probabilities keep their
/// relative accuracy.
pub fn inherent_noise_point(x: f64, sigma: f64, range: DataRange) -> Result<f64> {
    check_in_range(x, range)?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("sigma {sigma} must be finite and non-negative")));
    }
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let s = SQRT_2 * sigma;
    let below = 0.5 * erfc((x - range.x_min) / s);
    let above = 0.5 * erfc((range.x_max - x) / s);
    Ok((below + above).min(1.0))
}

/// SmoothGrad's inherent noise in the closed form
/// `1 - erf((x_max - x) / (sqrt(2) sigma)) / 2 + erf((x_min - x) / (sqrt(2) sigma)) / 2`
/// with `sigma = alpha * (x_max - x_min)`.
pub fn inherent_noise_sg(x: f64, alpha: f64, range: DataRange) -> Result<f64> {
    check_alpha(alpha)?;
    check_in_range(x, range)?;
    let s = SQRT_2 * alpha * range.width();
    Ok(1.0 - 0.5 * erf((range.x_max - x) / s) + 0.5 * erf((range.x_min - x) / s))
}

/// AdaptGrad's inherent noise at confidence `c`; zero on the range bounds.
pub fn inherent_noise_ag(x: f64, confidence: f64, range: DataRange) -> Result<f64> {
    check_in_range(x, range)?;
    let sigma = adaptgrad_sigma(&[x], range, confidence)?[0];
    inherent_noise_point(x, sigma, range)
}

/// Mean inherent noise for `x` uniform on the range, by adaptive quadrature
/// to absolute tolerance `tol`.
pub fn expected_inherent_noise(method: NoiseMethod, range: DataRange, tol: f64) -> Result<f64> {
    method.validate()?;
    if !(tol > 0.0) {
        return Err(Error::config(format!("tolerance {tol} must be positive")));
    }
    let f = |x: f64| method.at(x.clamp(range.x_min, range.x_max), range).unwrap_or(f64::NAN);
    // AdaptGrad's sigma has a kink at the midpoint
    let mid = range.midpoint();
    let half_tol = tol * range.width() / 2.0;
    let left = quadrature(f, range.x_min, mid, half_tol)?;
    let right = quadrature(f, mid, range.x_max, half_tol)?;
    let area = (left.value + right.value) / range.width();
    if !area.is_finite() {
        return Err(Error::domain("inherent noise integrand is not finite"));
    }
    Ok(area)
}

/// Distinct pixel values of a dataset with their counts, ascending.
pub fn pixel_histogram(dataset: &Dataset) -> Vec<(f64, u64)> {
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    let mut buf = vec![0.0; dataset.dim()];
    for i in 0..dataset.len() {
        dataset.image_into(i, &mut buf);
        for v in &buf {
            // +0.0 normalises -0.0 so both share a bucket
            *counts.entry((v + 0.0).to_bits()).or_default() += 1;
        }
    }
    let mut hist: Vec<(f64, u64)> = counts.into_iter().map(|(b, n)| (f64::from_bits(b), n)).collect();
    hist.sort_by(|a, b| a.0.total_cmp(&b.0));
    hist
}

/// Mean inherent noise weighted by a dataset's pixel histogram.
pub fn dataset_inherent_noise(method: NoiseMethod, dataset: &Dataset) -> Result<f64> {
    method.validate()?;
    if dataset.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    let range = dataset.range();
    let mut total = 0.0;
    let mut count = 0u64;
    for (v, n) in pixel_histogram(dataset) {
        total += method.at(v, range)? * n as f64;
        count += n;
    }
    Ok(total / count as f64)
}

/// Monte Carlo out-of-bounds counts next to their analytic prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OobStats {
    /// Fraction of images with at least one out-of-bounds coordinate in any sample.
    pub image_rate: f64,
    /// Fraction of (pixel, sample) pairs out of bounds.
    pub pixel_rate: f64,
    pub n: usize,
    pub seed: u64,
    pub images: usize,
    /// Mean inherent noise over the same pixels.
    pub analytic_mean: f64,
    /// Standard error of `pixel_rate` under the analytic per-pixel probabilities.
    pub standard_error: f64,
}

/// Draws `n` perturbations per image and counts coordinates that leave the
/// range. Image `j` uses seed `derive_seed(seed, j)` with sample `s` on
/// stream `s`, so the result does not depend on the worker count.
pub fn empirical_oob_rate(dataset: &Dataset, method: NoiseMethod, n: usize, seed: u64) -> Result<OobStats> {
    method.validate()?;
    if dataset.is_empty() {
        return Err(Error::data("empty dataset"));
    }
    if n == 0 {
        return Err(Error::config("at least one sample per image is needed"));
    }
    let range = dataset.range();
    let base = derive_seed(seed, OOB_STREAM_TAG);
    let per_image: Result<Vec<(u64, bool, f64, f64)>> = (0..dataset.len())
        .into_par_iter()
        .map(|j| {
            let x = dataset.image(j);
            let kernel = method.kernel(&x, range)?;
            let image_seed = derive_seed(base, j as u64);
            let mut eps = vec![0.0; x.len()];
            let mut oob = 0u64;
            for s in 0..n {
                kernel.fill(RngState::new(image_seed, s as u64), &mut eps);
                oob += x
                    .iter()
                    .zip(&eps)
                    .filter(|(v, e)| {
                        let p = *v + *e;
                        p < range.x_min || p > range.x_max
                    })
                    .count() as u64;
            }
            let mut p_sum = 0.0;
            let mut var_sum = 0.0;
            for (&v, &s) in x.iter().zip(kernel.sigma()) {
                let p = inherent_noise_point(v, s, range)?;
                p_sum += p;
                var_sum += p * (1.0 - p);
            }
            Ok((oob, oob > 0, p_sum, var_sum))
        })
        .collect();
    let mut oob = 0u64;
    let mut hit_images = 0usize;
    let mut p_sum = 0.0;
    let mut var_sum = 0.0;
    for (o, hit, p, v) in per_image? {
        oob += o;
        hit_images += hit as usize;
        p_sum += p;
        var_sum += v;
    }
    let pixels = (dataset.len() * dataset.dim()) as f64;
    let pairs = pixels * n as f64;
    Ok(OobStats {
        image_rate: hit_images as f64 / dataset.len() as f64,
        pixel_rate: oob as f64 / pairs,
        n,
        seed,
        images: dataset.len(),
        analytic_mean: p_sum / pixels,
        standard_error: (n as f64 * var_sum).sqrt() / pairs,
    })
}

/// The sigma at which the out-of-bounds probability of `x` equals exactly
/// `1 - c`, by bisection until the residual is at most `tol`.
pub fn solve_sigma_exact(x: f64, confidence: f64, range: DataRange, tol: f64) -> Result<f64> {
    NoiseMethod::AdaptGrad { confidence }.validate()?;
    check_in_range(x, range)?;
    if !(tol > 0.0) {
        return Err(Error::config(format!("tolerance {tol} must be positive")));
    }
    if x <= range.x_min || x >= range.x_max {
        return Err(Error::Degenerate(format!(
            "x = {x} lies on a bound: half the mass escapes for any sigma > 0, so no sigma reaches {}",
            1.0 - confidence
        )));
    }
    let target = 1.0 - confidence;
    let a = |s: f64| inherent_noise_point(x, s, range);
    let mut lo = 0.0;
    let mut hi = range.width();
    while a(hi)? < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Degenerate("no finite sigma reaches the target".into()));
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let r = a(mid)? - target;
        if r.abs() <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Serializable summary of an inherent-noise analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub method: String,
    pub params: serde_json::Value,
    pub range: DataRange,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_dimension: Vec<f64>,
    pub aggregate_mean: f64,
    pub expected_area: f64,
    pub empirical: Option<OobStats>,
}

impl NoiseReport {
    /// Evaluates the inherent noise at `points`; `aggregate_mean` is their
    /// mean and `expected_area` the uniform-x expectation.
    pub fn new(method: NoiseMethod, range: DataRange, points: &[f64], tol: f64) -> Result<Self> {
        let per_dimension = points.iter().map(|&x| method.at(x, range)).collect::<Result<Vec<_>>>()?;
        let aggregate_mean = if per_dimension.is_empty() {
            0.0
        } else {
            per_dimension.iter().sum::<f64>() / per_dimension.len() as f64
        };
        Ok(Self {
            method: method.name().into(),
            params: method.params(),
            range,
            per_dimension,
            aggregate_mean,
            expected_area: expected_inherent_noise(method, range, tol)?,
            empirical: None,
        })
    }
}

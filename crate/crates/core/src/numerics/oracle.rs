use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::DataRange;

use super::quadrature::quadrature;

/// Truncation of the Gaussian kernel in units of sigma; the mass beyond is
/// about 1.2e-15.
const KERNEL_HALF_WIDTH: f64 = 8.0;
const ORACLE_TOL: f64 = 1e-9;

/// `int G(x + e) p(e) de` for a one-dimensional model and `e ~ N(0, sigma^2)`,
/// by adaptive quadrature.
///
/// With a range, the integral only covers perturbations that keep `x + e`
/// inside it, i.e. `e in [x_min - x, x_max - x]`, and is not renormalised:
/// the missing mass is exactly the out-of-bounds probability. Without a range
/// the kernel is integrated over `[-8 sigma, 8 sigma]`. `sigma = 0` returns
/// `G(x)`.
pub fn smoothed_gradient_oracle(model: &Model, x: f64, sigma: f64, range: Option<DataRange>) -> Result<f64> {
    if model.input_dim() != 1 || model.output_dim() != 1 {
        return Err(Error::config("the quadrature oracle needs a one-dimensional, single-output model"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("sigma {sigma} must be finite and >= 0")));
    }
    if sigma == 0.0 {
        return Ok(model.input_gradient(&[x], 0)?[0]);
    }
    let half = KERNEL_HALF_WIDTH * sigma;
    let (lo, hi) = match range {
        None => (-half, half),
        Some(r) => ((r.x_min - x).max(-half), (r.x_max - x).min(half)),
    };
    if lo >= hi {
        return Ok(0.0);
    }
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    let integrand = |e: f64| {
        let g = model.input_gradient(&[x + e], 0).map(|g| g[0]).unwrap_or(f64::NAN);
        g * norm * (-0.5 * (e / sigma).powi(2)).exp()
    };
    Ok(quadrature(integrand, lo, hi, ORACLE_TOL)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::special::erf;

    #[test]
    fn linear_model_integrates_to_weight() {
        let m = Model::linear(vec![2.5], 0.0).unwrap();
        let v = smoothed_gradient_oracle(&m, 0.3, 0.7, None).unwrap();
        assert!((v - 2.5).abs() < 1e-9);
    }

    #[test]
    fn sinusoid_closed_form() {
        let m = Model::sinusoid(3.0).unwrap();
        let v = smoothed_gradient_oracle(&m, 0.7, 0.2, None).unwrap();
        let expected = 3.0 * 2.1f64.cos() * (-0.18f64).exp();
        assert!((v - expected).abs() < 1e-8, "{v} vs {expected}");
    }

    #[test]
    fn zero_sigma_is_plain_gradient() {
        let m = Model::sinusoid(3.0).unwrap();
        assert_eq!(smoothed_gradient_oracle(&m, 0.7, 0.0, None).unwrap(), 3.0 * (3.0f64 * 0.7).cos());
    }

    #[test]
    fn tiny_sigma_converges_to_gradient() {
        for m in [Model::sinusoid(3.0).unwrap(), Model::half_squared_norm(1).unwrap()] {
            let g = m.input_gradient(&[0.4], 0).unwrap()[0];
            for range in [None, Some(DataRange::unit())] {
                let v = smoothed_gradient_oracle(&m, 0.4, 1e-6, range).unwrap();
                assert!((v - g).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn bounded_linear_loses_out_of_bounds_mass() {
        let w = 1.5;
        let m = Model::linear(vec![w], 0.0).unwrap();
        let (x, sigma) = (0.2, 0.3);
        let v = smoothed_gradient_oracle(&m, x, sigma, Some(DataRange::unit())).unwrap();
        let inside = 0.5 * (erf((1.0 - x) / (sigma * 2f64.sqrt())) - erf((0.0 - x) / (sigma * 2f64.sqrt())));
        assert!((v - w * inside).abs() < 1e-9);
    }

    #[test]
    fn rejects_multidimensional_models() {
        let m = Model::half_squared_norm(2).unwrap();
        assert!(smoothed_gradient_oracle(&m, 0.0, 1.0, None).is_err());
    }
}

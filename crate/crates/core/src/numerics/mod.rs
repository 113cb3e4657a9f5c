//! Special functions, seeded Gaussian sampling, adaptive quadrature and the
//! quadrature oracle for Gaussian-smoothed gradients.

mod oracle;
mod quadrature;
mod rng;
mod special;

pub use oracle::smoothed_gradient_oracle;
pub use quadrature::{quadrature, quadrature_with_budget, QuadratureResult};
pub use rng::{derive_seed, sample_gaussian, GaussianKernel, NormalStream, RngState};
pub use special::{erf, erfc, erfinv, normal_cdf, normal_pdf};

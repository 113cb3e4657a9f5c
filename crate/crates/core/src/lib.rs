//! Gradient attribution laboratory.
//!
//! Differentiable models with exact input gradients, Monte Carlo gradient
//! smoothing (SmoothGrad, AdaptGrad, NoiseGrad and their compositions with
//! Gradient x Input and Integrated Gradients), closed-form analysis of the
//! out-of-bounds sampling noise those smoothers introduce, and the metrics
//! used to compare saliency maps.

pub mod attribution;
pub mod error;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod numerics;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DataRange, Tensor};

//! Explanation methods.
//!
//! Every smoother averages exact model gradients at perturbed inputs. Sample
//! `i` draws its perturbation from stream `i` of the configured seed, samples
//! are evaluated in parallel and summed in ascending index order, so a map is
//! bit-identical for a given seed whatever the worker count. Perturbed inputs
//! are never clipped to the data range.

mod methods;
mod pipeline;
mod saliency;
mod smoothing;

pub use methods::{
    gradient_times_input, integrated_gradients, noisegrad, Baseline, IgConfig, NoiseGradConfig,
};
pub use pipeline::{compose, Explainer, Method, SmootherTag};
pub use saliency::SaliencyMap;
pub use smoothing::{
    adaptgrad, adaptgrad_sigma, smoothed_gradient, smoothgrad, vanilla_saliency, Smoother,
    SmootherConfig,
};

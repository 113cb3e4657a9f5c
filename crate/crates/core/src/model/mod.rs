//! Differentiable models: a ReLU multilayer perceptron with exact
//! backpropagation and analytic test functions with closed-form gradients.

mod checkpoint;
mod dataset;
mod mlp;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use dataset::{load_idx, Dataset};
pub use mlp::{Dense, Mlp};
pub use train::{accuracy, train_mlp, train_mlp_with, EpochLog, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Linear,
    Quadratic,
    Sinusoid1d,
}

impl ModelKind {
    pub fn tag(self) -> u32 {
        match self {
            ModelKind::Mlp => 0,
            ModelKind::Linear => 1,
            ModelKind::Quadratic => 2,
            ModelKind::Sinusoid1d => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            0 => ModelKind::Mlp,
            1 => ModelKind::Linear,
            2 => ModelKind::Quadratic,
            3 => ModelKind::Sinusoid1d,
            _ => return None,
        })
    }
}

/// A differentiable score function `F(x; theta): R^D -> R^C`.
///
/// Scores are pre-softmax values; explanations differentiate the score of a
/// single class.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Mlp(Mlp),
    /// `F(x) = w.x + b`, one output.
    Linear { weights: Vec<f64>, bias: f64 },
    /// `F(x) = 0.5 * sum_i a_i x_i^2`, one output.
    Quadratic { coefficients: Vec<f64> },
    /// `F(x) = sin(k x)` on a scalar input.
    Sinusoid1d { frequency: f64 },
}

impl Model {
    pub fn linear(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.is_empty() || weights.iter().chain([&bias]).any(|v| !v.is_finite()) {
            return Err(Error::config("linear model needs finite, non-empty weights"));
        }
        Ok(Model::Linear { weights, bias })
    }

    /// `0.5 * |x|^2` in `dim` dimensions.
    pub fn half_squared_norm(dim: usize) -> Result<Self> {
        Self::quadratic(vec![1.0; dim])
    }

    pub fn quadratic(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("quadratic model needs finite, non-empty coefficients"));
        }
        Ok(Model::Quadratic { coefficients })
    }

    pub fn sinusoid(frequency: f64) -> Result<Self> {
        if !frequency.is_finite() {
            return Err(Error::config("sinusoid frequency must be finite"));
        }
        Ok(Model::Sinusoid1d { frequency })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mlp(_) => ModelKind::Mlp,
            Model::Linear { .. } => ModelKind::Linear,
            Model::Quadratic { .. } => ModelKind::Quadratic,
            Model::Sinusoid1d { .. } => ModelKind::Sinusoid1d,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Mlp(m) => m.input_dim(),
            Model::Linear { weights, .. } => weights.len(),
            Model::Quadratic { coefficients } => coefficients.len(),
            Model::Sinusoid1d { .. } => 1,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Model::Mlp(m) => m.output_dim(),
            _ => 1,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::InputShape { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.output_dim() {
            return Err(Error::ClassIndex { class, classes: self.output_dim() });
        }
        Ok(())
    }

    /// All class scores at `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(match self {
            Model::Mlp(m) => m.forward(x),
            Model::Linear { weights, bias } => vec![dot(weights, x) + bias],
            Model::Quadratic { coefficients } => {
                vec![0.5 * coefficients.iter().zip(x).map(|(a, v)| a * v * v).sum::<f64>()]
            }
            Model::Sinusoid1d { frequency } => vec![(frequency * x[0]).sin()],
        })
    }

    /// Score of one class.
    pub fn score(&self, x: &[f64], class: usize) -> Result<f64> {
        self.check_class(class)?;
        Ok(self.forward(x)?[class])
    }

    /// Exact `dF_class/dx` at `x`.
    pub fn input_gradient(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_class(class)?;
        Ok(match self {
            Model::Mlp(m) => m.input_gradient(x, class),
            Model::Linear { weights, .. } => weights.clone(),
            Model::Quadratic { coefficients } => {
                coefficients.iter().zip(x).map(|(a, v)| a * v).collect()
            }
            Model::Sinusoid1d { frequency } => vec![frequency * (frequency * x[0]).cos()],
        })
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        match self {
            Model::Mlp(m) => m.layers().iter().map(|l| l.weights.len() + l.bias.len()).sum(),
            Model::Linear { weights, .. } => weights.len() + 1,
            Model::Quadratic { coefficients } => coefficients.len(),
            Model::Sinusoid1d { .. } => 1,
        }
    }

    /// Copy of the model with every parameter passed through `f`, visited in
    /// checkpoint order (per layer: weights then biases).
    pub fn map_parameters(&self, mut f: impl FnMut(f64) -> f64) -> Model {
        match self {
            Model::Mlp(m) => {
                let mut m = m.clone();
                for layer in m.layers_mut() {
                    layer.weights.iter_mut().for_each(|w| *w = f(*w));
                    layer.bias.iter_mut().for_each(|b| *b = f(*b));
                }
                Model::Mlp(m)
            }
            Model::Linear { weights, bias } => {
                let weights = weights.iter().map(|&w| f(w)).collect();
                Model::Linear { weights, bias: f(*bias) }
            }
            Model::Quadratic { coefficients } => {
                Model::Quadratic { coefficients: coefficients.iter().map(|&a| f(a)).collect() }
            }
            Model::Sinusoid1d { frequency } => Model::Sinusoid1d { frequency: f(*frequency) },
        }
    }

    /// A model whose scores on `x + shift` equal this model's scores on `x`,
    /// obtained by folding the shift into the first-layer bias (`b - W s`).
    /// Only affine-input models support this.
    pub fn bias_compensated(&self, shift: f64) -> Result<Model> {
        match self {
            Model::Mlp(m) => Ok(Model::Mlp(m.bias_compensated(shift))),
            Model::Linear { weights, bias } => Ok(Model::Linear {
                weights: weights.clone(),
                bias: bias - shift * weights.iter().sum::<f64>(),
            }),
            _ => Err(Error::config(format!(
                "{:?} model has no first-layer bias to compensate a shift",
                self.kind()
            ))),
        }
    }

    /// Short content hash identifying the parameters.
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        checkpoint::encode(self, &mut buf);
        hasher.update(&buf);
        let digest = hasher.finalize();
        let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        format!("{}-{hex}", kind_name(self.kind()))
    }
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Mlp => "mlp",
        ModelKind::Linear => "linear",
        ModelKind::Quadratic => "quadratic",
        ModelKind::Sinusoid1d => "sinusoid1d",
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_forward_and_gradient() {
        let m = Model::linear(vec![1.0, 2.0], 0.0).unwrap();
        assert_eq!(m.forward(&[3.0, 4.0]).unwrap(), vec![11.0]);
        assert_eq!(m.input_gradient(&[3.0, 4.0], 0).unwrap(), vec![1.0, 2.0]);
        assert_eq!(m.input_gradient(&[-7.0, 0.5], 0).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn quadratic_forward_and_gradient() {
        let m = Model::half_squared_norm(2).unwrap();
        assert_eq!(m.forward(&[3.0, 4.0]).unwrap(), vec![12.5]);
        assert_eq!(m.input_gradient(&[3.0, 4.0], 0).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn sinusoid_gradient() {
        let m = Model::sinusoid(3.0).unwrap();
        let g = m.input_gradient(&[0.7], 0).unwrap()[0];
        assert!((g - 3.0 * (3.0f64 * 0.7).cos()).abs() < 1e-15);
    }

    #[test]
    fn shape_and_class_errors() {
        let m = Model::linear(vec![1.0, 2.0], 0.0).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::InputShape { expected: 2, got: 1 })));
        assert!(matches!(
            m.input_gradient(&[1.0, 1.0], 1),
            Err(Error::ClassIndex { class: 1, classes: 1 })
        ));
    }

    #[test]
    fn linear_bias_compensation() {
        let m = Model::linear(vec![1.0, -2.0, 0.5], 0.3).unwrap();
        let shifted = m.bias_compensated(1.0).unwrap();
        let x = [0.2, 0.4, 0.9];
        let xs: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        let a = m.forward(&x).unwrap()[0];
        let b = shifted.forward(&xs).unwrap()[0];
        assert!((a - b).abs() < 1e-14);
        assert!(Model::sinusoid(1.0).unwrap().bias_compensated(1.0).is_err());
    }

    #[test]
    fn ids_track_parameters() {
        let a = Model::linear(vec![1.0, 2.0], 0.0).unwrap();
        let b = Model::linear(vec![1.0, 2.5], 0.0).unwrap();
        assert_eq!(a.id(), a.clone().id());
        assert_ne!(a.id(), b.id());
        assert!(a.id().starts_with("linear-"));
    }
}

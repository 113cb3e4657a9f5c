use crate::error::{Error, Result};
use crate::numerics::RngState;

/// Fully connected layer. Weights are stored input-major: the weight from
/// input `i` to output `j` sits at `i * fan_out + j`, so `W x + b` is a sum of
/// contiguous rows scaled by the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(fan_in: usize, fan_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::config("dense layer dimensions must be positive"));
        }
        if weights.len() != fan_in * fan_out || bias.len() != fan_out {
            return Err(Error::config(format!(
                "dense {fan_in}x{fan_out} layer got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::config("dense layer parameters must be finite"));
        }
        Ok(Self { fan_in, fan_out, weights, bias })
    }

    #[inline]
    pub fn row(&self, input: usize) -> &[f64] {
        &self.weights[input * self.fan_out..(input + 1) * self.fan_out]
    }

    /// `out = W x + b`, skipping zero inputs.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                for (o, w) in out.iter_mut().zip(self.row(i)) {
                    *o += v * w;
                }
            }
        }
    }

    /// `W^T delta`, the gradient with respect to the layer input.
    pub fn back(&self, delta: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = super::dot(self.row(i), delta);
        }
    }
}

/// ReLU network: `Dense -> ReLU -> ... -> Dense`, no activation on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out != pair[1].fan_in {
                return Err(Error::config(format!(
                    "layer dimensions do not chain: {} outputs feed {} inputs",
                    pair[0].fan_out, pair[1].fan_in
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
    /// layer `l` drawing from stream `l` of `seed`.
    pub fn random(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config(format!("an MLP needs at least two widths, got {widths:?}")));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut stream = RngState::new(seed, l as u64).normals();
            let mut draw = || (2.0 * stream.next_uniform() - 1.0) * bound;
            let weights: Vec<f64> = (0..fan_in * fan_out).map(|_| draw()).collect();
            let bias: Vec<f64> = (0..fan_out).map(|_| draw()).collect();
            layers.push(Dense::new(fan_in, fan_out, weights, bias)?);
        }
        Mlp::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    /// Layer widths, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.fan_out));
        w
    }

    /// Pre-activations of every layer.
    pub(crate) fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.fan_out];
            layer.apply(&act, &mut z);
            if l + 1 < self.layers.len() {
                act = z.iter().map(|&v| v.max(0.0)).collect();
            }
            pre.push(z);
        }
        pre
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.pre_activations(x).pop().expect("at least one layer")
    }

    pub fn input_gradient(&self, x: &[f64], class: usize) -> Vec<f64> {
        let pre = self.pre_activations(x);
        let mut delta = vec![0.0; self.output_dim()];
        delta[class] = 1.0;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut back = vec![0.0; layer.fan_in];
            layer.back(&delta, &mut back);
            if l > 0 {
                for (b, &z) in back.iter_mut().zip(&pre[l - 1]) {
                    if z <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
            delta = back;
        }
        delta
    }

    /// First-layer bias `b - W s` so that inputs shifted by `s` reproduce the
    /// original pre-activations.
    pub fn bias_compensated(&self, shift: f64) -> Mlp {
        let mut out = self.clone();
        let first = &mut out.layers[0];
        for j in 0..first.fan_out {
            let mut col = 0.0;
            for i in 0..first.fan_in {
                col += first.weights[i * first.fan_out + j];
            }
            first.bias[j] -= shift * col;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Mlp {
        // 2 -> 2 -> 1
        let l1 = Dense::new(2, 2, vec![1.0, -1.0, 2.0, 1.0], vec![0.0, 0.5]).unwrap();
        let l2 = Dense::new(2, 1, vec![3.0, -2.0], vec![0.1]).unwrap();
        Mlp::new(vec![l1, l2]).unwrap()
    }

    #[test]
    fn forward_by_hand() {
        let m = tiny();
        // h = relu([x0 + 2 x1, -x0 + x1 + 0.5]) at x = (1, 1): [3, 0.5]
        let y = m.forward(&[1.0, 1.0]);
        assert!((y[0] - (3.0 * 3.0 - 2.0 * 0.5 + 0.1)).abs() < 1e-15);
        let g = m.input_gradient(&[1.0, 1.0], 0);
        // 3 * [1, 2] - 2 * [-1, 1]
        assert_eq!(g, vec![5.0, 4.0]);
        // second unit inactive at x = (2, 0)
        assert_eq!(m.input_gradient(&[2.0, 0.0], 0), vec![3.0, 6.0]);
    }

    #[test]
    fn rejects_bad_chains() {
        let l1 = Dense::new(2, 3, vec![0.0; 6], vec![0.0; 3]).unwrap();
        let l2 = Dense::new(2, 1, vec![0.0; 2], vec![0.0]).unwrap();
        assert!(Mlp::new(vec![l1, l2]).is_err());
        assert!(Dense::new(2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
        assert!(Mlp::new(vec![]).is_err());
    }

    #[test]
    fn compensation_reproduces_scores() {
        let m = tiny();
        let c = m.bias_compensated(1.0);
        let x = [0.3, -0.2];
        let a = m.forward(&x);
        let b = c.forward(&[1.3, 0.8]);
        assert!((a[0] - b[0]).abs() < 1e-14);
    }
}

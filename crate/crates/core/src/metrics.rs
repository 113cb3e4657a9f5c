//! Saliency map quality metrics.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::Explainer;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{derive_seed, RngState};
use crate::tensor::DataRange;

/// Perturbations per input in [`consistency_score`].
pub const CONSISTENCY_SAMPLES: usize = 10;
/// Default consistency perturbation half-width as a fraction of the range width.
pub const CONSISTENCY_DELTA_FRACTION: f64 = 0.01;
/// Version tag of the consistency formula, recorded in outputs.
pub const CONSISTENCY_FORMULA: &str = "mean_k ||E(x) - E(clamp(x + u_k))||_2 / (||E(x)||_2 + 1e-12), u_k ~ U[-d, d]^D, K = 10; v1";

const CONSISTENCY_STREAM_TAG: u64 = 0x434f4e53;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Consistency,
    Invariance,
    Sparseness,
    InformationLevel,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Consistency => "consistency",
            MetricKind::Invariance => "invariance",
            MetricKind::Sparseness => "sparseness",
            MetricKind::InformationLevel => "information_level",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: MetricKind,
    pub method_chain: String,
    pub model_id: String,
    pub n_inputs: usize,
    pub value: f64,
    pub seed: u64,
}

impl MetricResult {
    pub const CSV_HEADER: &'static str = "metric,method_chain,model_id,n_inputs,value,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.metric,
            self.method_chain,
            self.model_id,
            self.n_inputs,
            csv_float(self.value),
            self.seed
        )
    }
}

/// A float with 17 significant digits, enough to round-trip every `f64`.
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_nonzero(values: &[f64], what: &str) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedMetric(format!("{what} of an empty map")));
    }
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return Err(Error::UndefinedMetric(format!("{what} of an all-zero map")));
    }
    if !total.is_finite() {
        return Err(Error::UndefinedMetric(format!("{what} of a non-finite map")));
    }
    Ok(total)
}

/// Gini index of the absolute values: 0 for a uniform map, `(n - 1) / n` for
/// a one-hot map.
pub fn sparseness_gini(values: &[f64]) -> Result<f64> {
    let total = check_nonzero(values, "sparseness")?;
    let mut a: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let weighted: f64 = a.iter().enumerate().map(|(k, v)| (2.0 * (k + 1) as f64 - n - 1.0) * v).sum();
    Ok((weighted / (n * total)).max(0.0))
}

/// Shannon entropy in bits of the map's absolute values normalized to sum to 1.
pub fn information_entropy(values: &[f64]) -> Result<f64> {
    let total = check_nonzero(values, "information level")?;
    let h: f64 = values
        .iter()
        .map(|v| v.abs() / total)
        .filter(|&q| q > 0.0)
        .map(|q| -q * q.log2())
        .sum();
    Ok(h.max(0.0))
}

fn l2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Local explanation stability: mean over inputs and [`CONSISTENCY_SAMPLES`]
/// uniform perturbations `u` in `[-delta, delta]^D` of
/// `||E(x) - E(x + u)||_2 / (||E(x)||_2 + 1e-12)`. Lower is more consistent.
///
/// Perturbed inputs are clamped to the range so range-aware explainers stay
/// defined. Both explanations use the explainer's own seed.
pub fn consistency_score(
    explainer: &Explainer,
    model: &Model,
    inputs: &[(Vec<f64>, usize)],
    delta: f64,
    range: DataRange,
    seed: u64,
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::data("consistency needs at least one input"));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::config(format!("perturbation scale {delta} must be positive")));
    }
    let base = derive_seed(seed, CONSISTENCY_STREAM_TAG);
    let per_input: Result<Vec<f64>> = inputs
        .par_iter()
        .enumerate()
        .map(|(j, (x, class))| {
            let e0 = explainer.explain(model, x, *class, range)?;
            let norm = l2(e0.as_slice()) + 1e-12;
            let mut sum = 0.0;
            for k in 0..CONSISTENCY_SAMPLES {
                let mut u = RngState::new(derive_seed(base, j as u64), k as u64).normals();
                let xp: Vec<f64> = x
                    .iter()
                    .map(|v| (v + delta * (2.0 * u.next_uniform() - 1.0)).clamp(range.x_min, range.x_max))
                    .collect();
                let e1 = explainer.explain(model, &xp, *class, range)?;
                let diff: Vec<f64> = e0.as_slice().iter().zip(e1.as_slice()).map(|(a, b)| a - b).collect();
                sum += l2(&diff) / norm;
            }
            Ok(sum / CONSISTENCY_SAMPLES as f64)
        })
        .collect();
    let per_input = per_input?;
    Ok(per_input.iter().sum::<f64>() / per_input.len() as f64)
}

/// Mean over inputs of `||E(m1, x) - E(m2, x + shift)||_1 / D`, where `m2`
/// sees data shifted by `shift` and explanations on it use the shifted range.
pub fn invariance_check(
    explainer: &Explainer,
    m1: &Model,
    m2: &Model,
    shift: f64,
    inputs: &[(Vec<f64>, usize)],
    range: DataRange,
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::data("invariance needs at least one input"));
    }
    if m1.input_dim() != m2.input_dim() || m1.output_dim() != m2.output_dim() {
        return Err(Error::config(format!(
            "model shapes differ: {}->{} vs {}->{}",
            m1.input_dim(),
            m1.output_dim(),
            m2.input_dim(),
            m2.output_dim()
        )));
    }
    let shifted_range = range.shifted(shift);
    let per_input: Result<Vec<f64>> = inputs
        .par_iter()
        .map(|(x, class)| {
            let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let a = explainer.explain(m1, x, *class, range)?;
            let b = explainer.explain(m2, &xs, *class, shifted_range)?;
            let l1: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(p, q)| (p - q).abs()).sum();
            Ok(l1 / x.len() as f64)
        })
        .collect();
    let per_input = per_input?;
    Ok(per_input.iter().sum::<f64>() / per_input.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::compose;
    use proptest::prelude::*;

    #[test]
    fn gini_examples() {
        assert_eq!(sparseness_gini(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((sparseness_gini(&[0.0, 0.0, 3.0, 0.0]).unwrap() - 0.75).abs() < 1e-15);
        let v = [0.3, -1.2, 4.0, 0.01, 0.0];
        let scaled: Vec<f64> = v.iter().map(|x| 10.0 * x).collect();
        assert!((sparseness_gini(&v).unwrap() - sparseness_gini(&scaled).unwrap()).abs() <= 1e-12);
        assert!(matches!(sparseness_gini(&[0.0, 0.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(information_entropy(&[0.0, 5.0, 0.0]).unwrap(), 0.0);
        assert!((information_entropy(&[1.0; 4]).unwrap() - 2.0).abs() < 1e-15);
        assert!((information_entropy(&[0.5, 0.5, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((information_entropy(&[-0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!(information_entropy(&[]).is_err());
    }

    #[test]
    fn csv_row_format() {
        let r = MetricResult {
            metric: MetricKind::InformationLevel,
            method_chain: "A-IG(B)".into(),
            model_id: "mlp-00".into(),
            n_inputs: 3,
            value: 0.1,
            seed: 7,
        };
        assert_eq!(r.csv_row(), "information_level,A-IG(B),mlp-00,3,1.0000000000000001e-1,7");
        assert_eq!(csv_float(0.1).parse::<f64>().unwrap(), 0.1);
    }

    fn inputs() -> Vec<(Vec<f64>, usize)> {
        vec![(vec![0.2, 0.7], 0), (vec![0.5, 0.5], 0), (vec![0.0, 1.0], 0)]
    }

    #[test]
    fn linear_gradient_is_perfectly_consistent() {
        let m = Model::linear(vec![1.0, -3.0], 0.5).unwrap();
        let e = compose("none", "Grad").unwrap();
        assert_eq!(consistency_score(&e, &m, &inputs(), 0.01, DataRange::unit(), 1).unwrap(), 0.0);
        let ag = compose("AG", "Grad").unwrap();
        assert!(consistency_score(&ag, &m, &inputs(), 0.01, DataRange::unit(), 1).unwrap() < 1e-12);
        assert!(consistency_score(&e, &m, &[], 0.01, DataRange::unit(), 1).is_err());
        assert!(consistency_score(&e, &m, &inputs(), 0.0, DataRange::unit(), 1).is_err());
    }

    #[test]
    fn sinusoid_consistency_is_positive() {
        let m = Model::sinusoid(4.0).unwrap();
        let e = compose("none", "Grad").unwrap();
        let ins = vec![(vec![0.3], 0), (vec![0.6], 0)];
        let c = consistency_score(&e, &m, &ins, 0.01, DataRange::unit(), 2).unwrap();
        assert!(c > 0.0 && c < 0.2, "{c}");
    }

    #[test]
    fn bias_compensated_linear_is_invariant() {
        let m1 = Model::linear(vec![1.0, -3.0], 0.5).unwrap();
        let m2 = m1.bias_compensated(1.0).unwrap();
        for (s, t) in [("none", "Grad"), ("AG", "Grad"), ("SG", "Grad")] {
            let e = compose(s, t).unwrap().with_seed(4);
            assert!(invariance_check(&e, &m1, &m2, 1.0, &inputs(), DataRange::unit()).unwrap() <= 1e-10);
        }
        let other = Model::linear(vec![1.0, -3.0, 2.0], 0.0).unwrap();
        let e = compose("none", "Grad").unwrap();
        assert!(matches!(
            invariance_check(&e, &m1, &other, 1.0, &inputs(), DataRange::unit()),
            Err(Error::Config(_))
        ));
    }

    fn map_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 2..40).prop_filter("non-zero", |v| v.iter().any(|x| *x != 0.0))
    }

    proptest! {
        #[test]
        fn permutation_invariant(v in map_strategy(), rot in 0usize..40) {
            let mut p = v.clone();
            let len = p.len();
            p.rotate_left(rot % len);
            p.reverse();
            prop_assert!((sparseness_gini(&v).unwrap() - sparseness_gini(&p).unwrap()).abs() <= 1e-12);
            prop_assert!((information_entropy(&v).unwrap() - information_entropy(&p).unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn scale_invariant(v in map_strategy(), k in 1e-3f64..1e3) {
            let s: Vec<f64> = v.iter().map(|x| x * k).collect();
            prop_assert!((sparseness_gini(&v).unwrap() - sparseness_gini(&s).unwrap()).abs() <= 1e-12);
            prop_assert!((information_entropy(&v).unwrap() - information_entropy(&s).unwrap()).abs() <= 1e-10);
        }

        #[test]
        fn entropy_bounded_by_log_dim(v in map_strategy()) {
            let h = information_entropy(&v).unwrap();
            prop_assert!(h >= 0.0 && h <= (v.len() as f64).log2() + 1e-12);
        }

        #[test]
        fn pigou_dalton_transfer_never_lowers_gini(v in map_strategy(), i in 0usize..40, j in 0usize..40, f in 0.0f64..1.0) {
            let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
            let (i, j) = (i % a.len(), j % a.len());
            prop_assume!(i != j);
            let (small, large) = if a[i] <= a[j] { (i, j) } else { (j, i) };
            let t = f * a[small];
            let before = sparseness_gini(&a).unwrap();
            a[small] -= t;
            a[large] += t;
            prop_assert!(sparseness_gini(&a).unwrap() >= before - 1e-12);
        }
    }
}

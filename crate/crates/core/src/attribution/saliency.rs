use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// An attribution vector with the provenance needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub values: Tensor,
    /// Method name with smoother prefix, e.g. `A-IG(B)`.
    pub method_chain: String,
    pub model_id: String,
    pub config: serde_json::Value,
}

impl SaliencyMap {
    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

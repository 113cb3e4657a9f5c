use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::methods::{gradient_times_input, integrated_gradients, noisegrad, Baseline, IgConfig, NoiseGradConfig};
use super::saliency::SaliencyMap;
use super::smoothing::{smoothed_gradient, wrap, Smoother, SmootherConfig, DEFAULT_ALPHA, DEFAULT_CONFIDENCE, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::derive_seed;
use crate::tensor::DataRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SmootherTag {
    None,
    SmoothGrad,
    AdaptGrad,
}

impl FromStr for SmootherTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(SmootherTag::None),
            "sg" => Ok(SmootherTag::SmoothGrad),
            "ag" => Ok(SmootherTag::AdaptGrad),
            _ => Err(Error::config(format!("unknown smoother `{s}` (expected none, sg or ag)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Grad,
    GI,
    IG,
    NG,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GRAD" => Ok(Method::Grad),
            "GI" => Ok(Method::GI),
            "IG" | "IG(B)" | "IG(W)" => Ok(Method::IG),
            "NG" => Ok(Method::NG),
            _ => Err(Error::config(format!("unknown method `{s}` (expected Grad, GI, IG(B), IG(W) or NG)"))),
        }
    }
}

/// A configured attribution pipeline: a base method with an optional input
/// smoother applied to every gradient it takes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explainer {
    pub method: Method,
    pub smoother: SmootherConfig,
    pub ig: IgConfig,
    pub noisegrad: NoiseGradConfig,
}

/// Builds an explainer with default parameters from tags such as
/// `("AG", "IG(B)")`.
pub fn compose(smoother_tag: &str, method_tag: &str) -> Result<Explainer> {
    let tag: SmootherTag = smoother_tag.parse()?;
    let method: Method = method_tag.parse()?;
    let smoother = match tag {
        SmootherTag::None => SmootherConfig::none(),
        SmootherTag::SmoothGrad => SmootherConfig::smoothgrad(DEFAULT_ALPHA, DEFAULT_SAMPLES, 0),
        SmootherTag::AdaptGrad => SmootherConfig::adaptgrad(DEFAULT_CONFIDENCE, DEFAULT_SAMPLES, 0),
    };
    let mut ig = IgConfig::default();
    if method_tag.eq_ignore_ascii_case("IG(W)") {
        ig.baseline = Baseline::White;
    }
    Ok(Explainer { method, smoother, ig, noisegrad: NoiseGradConfig::default() })
}

impl Explainer {
    pub fn smoother_tag(&self) -> SmootherTag {
        match self.smoother.mode {
            Smoother::None => SmootherTag::None,
            Smoother::SmoothGrad { .. } => SmootherTag::SmoothGrad,
            Smoother::AdaptGrad { .. } => SmootherTag::AdaptGrad,
        }
    }

    /// Sets the smoother and NoiseGrad seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.smoother.seed = seed;
        self.noisegrad.seed = seed;
        self
    }

    pub fn method_chain(&self) -> String {
        let tag = self.smoother_tag();
        if self.method == Method::Grad {
            return match tag {
                SmootherTag::None => "Grad",
                SmootherTag::SmoothGrad => "SG",
                SmootherTag::AdaptGrad => "AG",
            }
            .into();
        }
        let prefix = match tag {
            SmootherTag::None => "",
            SmootherTag::SmoothGrad => "S-",
            SmootherTag::AdaptGrad => "A-",
        };
        let base = match self.method {
            Method::Grad => unreachable!(),
            Method::GI => "GI".to_string(),
            Method::IG => format!("IG({})", self.ig.baseline.tag()),
            Method::NG => "NG".to_string(),
        };
        format!("{prefix}{base}")
    }

    pub fn validate(&self) -> Result<()> {
        self.smoother.validate()?;
        match self.method {
            Method::IG if self.ig.steps == 0 => Err(Error::config("integrated gradients needs at least one step")),
            Method::NG => self.noisegrad.validate(),
            _ => Ok(()),
        }
    }

    fn snapshot(&self, class: usize, range: DataRange) -> serde_json::Value {
        let mut v = serde_json::json!({
            "method": self.method_chain(),
            "class": class,
            "smoother": self.smoother,
            "range": range,
        });
        match self.method {
            Method::IG => v["ig"] = serde_json::to_value(&self.ig).unwrap_or_default(),
            Method::NG => v["noisegrad"] = serde_json::to_value(self.noisegrad).unwrap_or_default(),
            _ => {}
        }
        v
    }

    pub fn explain(&self, model: &Model, x: &[f64], class: usize, range: DataRange) -> Result<SaliencyMap> {
        self.validate()?;
        let chain = self.method_chain();
        let values = match self.method {
            Method::Grad => smoothed_gradient(model, x, class, &self.smoother, range)?,
            Method::GI => gradient_times_input(model, x, class, &self.smoother, range)?.values.into_vec(),
            Method::IG => integrated_gradients(model, x, class, &self.ig, &self.smoother, range)?.values.into_vec(),
            Method::NG => {
                let smoother = self.smoother;
                noisegrad(model, x, class, &self.noisegrad, |m, idx, x, class| {
                    let cfg = smoother.with_seed(derive_seed(smoother.seed, idx as u64));
                    smoothed_gradient(m, x, class, &cfg, range)
                })?
            }
        };
        wrap(model, values, chain, self.snapshot(class, range))
    }
}

impl fmt::Display for Explainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.method_chain())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chains() {
        let cases = [
            ("AG", "Grad", "AG"),
            ("SG", "NG", "S-NG"),
            ("none", "GI", "GI"),
            ("ag", "IG(B)", "A-IG(B)"),
            ("sg", "IG(W)", "S-IG(W)"),
            ("none", "Grad", "Grad"),
            ("AG", "NG", "A-NG"),
        ];
        for (s, m, chain) in cases {
            assert_eq!(compose(s, m).unwrap().method_chain(), chain);
        }
    }

    #[test]
    fn unknown_tags() {
        assert!(matches!(compose("xg", "Grad"), Err(Error::Config(_))));
        assert!(matches!(compose("none", "LRP"), Err(Error::Config(_))));
    }

    #[test]
    fn ag_grad_matches_adaptgrad() {
        let m = Model::sinusoid(3.0).unwrap();
        let e = compose("AG", "Grad").unwrap().with_seed(5);
        let a = e.explain(&m, &[0.4], 0, DataRange::unit()).unwrap();
        let b = super::super::adaptgrad(&m, &[0.4], 0, &e.smoother, DataRange::unit()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.method_chain, "AG");
    }

    #[test]
    fn plain_gi_on_linear() {
        let m = Model::linear(vec![1.0, 2.0], 0.0).unwrap();
        let e = compose("none", "GI").unwrap();
        let r = DataRange::new(0.0, 10.0).unwrap();
        assert_eq!(e.explain(&m, &[3.0, 4.0], 0, r).unwrap().as_slice(), &[3.0, 8.0]);
    }

    #[test]
    fn smoothed_noisegrad_runs() {
        let m = Model::linear(vec![1.0, -1.0], 0.0).unwrap();
        let mut e = compose("SG", "NG").unwrap().with_seed(2);
        e.noisegrad.n_models = 4;
        let map = e.explain(&m, &[0.2, 0.3], 0, DataRange::unit()).unwrap();
        assert_eq!(map.method_chain, "S-NG");
        assert_eq!(map.config["noisegrad"]["n_models"], 4);
    }
}

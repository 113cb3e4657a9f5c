use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use gradlab_core::attribution::{
    adaptgrad_sigma, compose, smoothed_gradient, Explainer, SmootherConfig,
};
use gradlab_core::metrics::{
    consistency_score, information_entropy, invariance_check, sparseness_gini, MetricKind, MetricResult,
    CONSISTENCY_FORMULA,
};
use gradlab_core::model::{accuracy, load_checkpoint, load_idx, train_mlp, write_checkpoint, Dataset, Model, TrainConfig};
use gradlab_core::noise::{dataset_inherent_noise, empirical_oob_rate, NoiseMethod, NoiseReport};
use gradlab_core::numerics::{derive_seed, smoothed_gradient_oracle};
use gradlab_core::DataRange;

use crate::args::*;
use crate::error::{CliError, Result};
use crate::output::{f, json_bytes, read_map_csv, write_atomic, Csv};
use crate::render::{encode_pgm, render_saliency, ChannelReduce, RenderOptions};

fn load_data(a: &DataArgs) -> Result<Dataset> {
    let ds = load_idx(&a.data_images, &a.data_labels)?;
    limit(ds, a.limit)
}

fn limit(ds: Dataset, n: Option<usize>) -> Result<Dataset> {
    match n {
        Some(0) => Err(CliError::Config("--limit must be at least 1".into())),
        Some(n) if n < ds.len() => Ok(ds.take(n)),
        _ => Ok(ds),
    }
}

fn inputs(ds: &Dataset) -> Vec<(Vec<f64>, usize)> {
    (0..ds.len()).map(|i| (ds.image(i), ds.label(i))).collect()
}

fn noise_method(m: NoiseMethodArg, alpha: f64, confidence: f64) -> NoiseMethod {
    match m {
        NoiseMethodArg::Sg => NoiseMethod::SmoothGrad { alpha },
        NoiseMethodArg::Ag => NoiseMethod::AdaptGrad { confidence },
    }
}

/// Explainer for a `--method` value and the shared smoother flags.
pub fn build_explainer(method: MethodArg, a: &ExplainerArgs) -> Result<Explainer> {
    let implied = match method {
        MethodArg::Sg => Some(SmootherArg::Sg),
        MethodArg::Ag => Some(SmootherArg::Ag),
        _ => None,
    };
    let smoother = match (implied, a.smoother) {
        (Some(i), Some(s)) if i != s => {
            return Err(CliError::Config(format!("--method {method:?} conflicts with --smoother {s:?}").to_lowercase()));
        }
        (Some(i), _) => i,
        (None, s) => s.unwrap_or(SmootherArg::None),
    };
    let method_tag = match method {
        MethodArg::Grad | MethodArg::Sg | MethodArg::Ag => "Grad",
        MethodArg::Gi => "GI",
        MethodArg::Ig => match a.ig_baseline {
            BaselineArg::Black => "IG(B)",
            BaselineArg::White => "IG(W)",
        },
        MethodArg::Ng => "NG",
    };
    let smoother_tag = match smoother {
        SmootherArg::None => "none",
        SmootherArg::Sg => "sg",
        SmootherArg::Ag => "ag",
    };
    let mut e = compose(smoother_tag, method_tag)?;
    e.smoother = match smoother {
        SmootherArg::None => SmootherConfig { n_samples: a.n, ..SmootherConfig::none() },
        SmootherArg::Sg => SmootherConfig::smoothgrad(a.alpha, a.n, a.seed),
        SmootherArg::Ag => SmootherConfig::adaptgrad(a.confidence, a.n, a.seed),
    };
    e.ig.steps = a.ig_steps;
    e.noisegrad.n_models = a.ng_models;
    e.noisegrad.relative_sigma = a.ng_sigma;
    let e = e.with_seed(a.seed);
    e.validate()?;
    Ok(e)
}

pub fn train(a: &TrainArgs, config: &serde_json::Value) -> Result<()> {
    let data = load_data(&a.data)?;
    let test = match (&a.test_images, &a.test_labels) {
        (Some(i), Some(l)) => Some(load_idx(i, l)?),
        _ => None,
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let report = train_mlp(&data, &cfg)?;
    let mut bytes = Vec::new();
    write_checkpoint(&report.model, &mut bytes)?;
    write_atomic(&a.out, &bytes)?;

    let mut csv = Csv::new(config, "epoch,mean_loss,train_accuracy");
    for log in &report.epochs {
        eprintln!("epoch {:>3}  loss {:.6}  train accuracy {:.4}", log.epoch, log.mean_loss, log.train_accuracy);
        csv.row(&[log.epoch.to_string(), f(log.mean_loss), f(log.train_accuracy)]);
    }
    let model_id = report.model.id();
    csv.comment(&format!("model_id={model_id}"));
    let test_accuracy = match &test {
        Some(t) => {
            let acc = accuracy(&report.model, t)?;
            csv.comment(&format!("test_accuracy={}", f(acc)));
            Some(acc)
        }
        None => None,
    };
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".loss.csv"));
    write_atomic(&log_path, &csv.into_bytes())?;
    let summary = json!({
        "model_id": model_id,
        "checkpoint": a.out,
        "log": log_path,
        "final_loss": report.epochs.last().map(|l| l.mean_loss),
        "test_accuracy": test_accuracy,
    });
    println!("{summary}");
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn saliency(a: &SaliencyArgs, config: &serde_json::Value) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let data = load_data(&a.data)?;
    if a.index >= data.len() {
        return Err(CliError::Config(format!("--index {} but the dataset has {} images", a.index, data.len())));
    }
    let x = data.image(a.index);
    let class = a.class.unwrap_or_else(|| data.label(a.index));
    let explainer = build_explainer(a.method, &a.explainer)?;
    let map = explainer.explain(&model, &x, class, data.range())?;
    let mut csv = Csv::new(config, "index,value");
    csv.comment(&format!("method_chain={} model_id={} map_config={}", map.method_chain, map.model_id, map.config));
    for (i, v) in map.as_slice().iter().enumerate() {
        csv.row(&[i.to_string(), f(*v)]);
    }
    write_atomic(&a.out, &csv.into_bytes())
}

fn map_provenance(path: &Path) -> serde_json::Value {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|t| t.lines().next().map(str::to_owned))
        .and_then(|l| l.strip_prefix("# gradlab ").and_then(|j| serde_json::from_str(j).ok()))
        .unwrap_or(serde_json::Value::Null)
}

pub fn render(a: &RenderArgs, config: &serde_json::Value) -> Result<()> {
    let values = read_map_csv(&a.map)?;
    let (width, height) = match (a.width, a.height) {
        (Some(w), Some(h)) => (w, h),
        (Some(w), None) if w > 0 => (w, values.len() / w),
        (None, Some(h)) if h > 0 => (values.len() / h, h),
        (None, None) => {
            let side = (values.len() as f64).sqrt().round() as usize;
            if side * side != values.len() {
                return Err(CliError::Render(format!(
                    "{} values are not a square image; pass --width and --height",
                    values.len()
                )));
            }
            (side, side)
        }
        _ => return Err(CliError::Config("--width and --height must be positive".into())),
    };
    let opts = RenderOptions { percentile_clip: a.clip_percentile, channel_reduce: ChannelReduce::AbsSum };
    let pixels = render_saliency(&values, &opts, width, height)?;
    let comment = json!({ "config": config, "map": map_provenance(&a.map) });
    write_atomic(&a.out, &encode_pgm(&pixels, width, height, &format!("gradlab {comment}")))
}

pub fn noise_report(a: &NoiseReportArgs, config: &serde_json::Value) -> Result<()> {
    let method = noise_method(a.method, a.alpha, a.confidence);
    let report = match (&a.data_images, &a.data_labels) {
        (Some(images), Some(labels)) => {
            let data = limit(load_idx(images, labels)?, a.limit)?;
            let mut report = NoiseReport::new(method, data.range(), &[], a.tol)?;
            report.aggregate_mean = dataset_inherent_noise(method, &data)?;
            report.empirical = Some(empirical_oob_rate(&data, method, a.n, a.seed)?);
            report
        }
        _ => {
            let range = DataRange::new(a.xmin, a.xmax)?;
            if a.points == 0 {
                return Err(CliError::Config("--points must be at least 1".into()));
            }
            let points: Vec<f64> = if a.points == 1 {
                vec![range.midpoint()]
            } else {
                (0..a.points)
                    .map(|k| {
                        if k == a.points - 1 {
                            range.x_max
                        } else {
                            range.x_min + range.width() * k as f64 / (a.points - 1) as f64
                        }
                    })
                    .collect()
            };
            NoiseReport::new(method, range, &points, a.tol)?
        }
    };
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["config"] = config.clone();
    let bytes = json_bytes(&value);
    match &a.out {
        Some(path) => write_atomic(path, &bytes),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

pub fn oob_rate(a: &OobRateArgs, config: &serde_json::Value) -> Result<()> {
    let data = load_data(&a.data)?;
    let method = noise_method(a.method, a.alpha, a.confidence);
    let stats = empirical_oob_rate(&data, method, a.n, a.seed)?;
    let mut value = serde_json::to_value(&stats).expect("stats serialize");
    value["method"] = method.name().into();
    value["params"] = method.params();
    value["range"] = serde_json::to_value(data.range()).expect("range serializes");
    value["config"] = config.clone();
    write_atomic(&a.out, &json_bytes(&value))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn convergence(a: &ConvergenceArgs, config: &serde_json::Value) -> Result<()> {
    let model = if a.model == "sinusoid" {
        Model::sinusoid(a.frequency)?
    } else {
        load_checkpoint(&a.model)?
    };
    if model.input_dim() != 1 || model.output_dim() != 1 {
        return Err(CliError::Config("convergence needs a one-dimensional model".into()));
    }
    if a.n.len() < 2 || a.n.contains(&0) {
        return Err(CliError::Config("--n needs at least two positive sample counts".into()));
    }
    if a.seeds < 2 {
        return Err(CliError::Config("--seeds must be at least 2".into()));
    }
    let range = DataRange::new(a.xmin, a.xmax)?;
    let sigma = match a.smoother {
        NoiseMethodArg::Sg => a.alpha * range.width(),
        NoiseMethodArg::Ag => adaptgrad_sigma(&[a.x], range, a.confidence)?[0],
    };
    if sigma == 0.0 {
        return Err(CliError::Config("x sits on a range bound, so there is no noise to average".into()));
    }
    // perturbed samples are never clipped, so the reference is the unbounded integral
    let oracle = smoothed_gradient_oracle(&model, a.x, sigma, None)?;
    let mut csv = Csv::new(config, "n,rmse,mean_estimate,seed_spread");
    let mut rmse = Vec::with_capacity(a.n.len());
    let mut last = (0.0, 0.0);
    for &n in &a.n {
        let estimates: Vec<f64> = (0..a.seeds)
            .map(|j| {
                let seed = derive_seed(a.seed, j as u64);
                let cfg = match a.smoother {
                    NoiseMethodArg::Sg => SmootherConfig::smoothgrad(a.alpha, n, seed),
                    NoiseMethodArg::Ag => SmootherConfig::adaptgrad(a.confidence, n, seed),
                };
                smoothed_gradient(&model, &[a.x], 0, &cfg, range).map(|g| g[0])
            })
            .collect::<gradlab_core::Result<_>>()?;
        let k = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / k;
        let spread = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        let r = (estimates.iter().map(|e| (e - oracle).powi(2)).sum::<f64>() / k).sqrt();
        csv.row(&[n.to_string(), f(r), f(mean), f(spread)]);
        rmse.push(r);
        last = (estimates[0], spread);
    }
    let ns: Vec<f64> = a.n.iter().map(|&n| n as f64).collect();
    let slope = log_log_slope(&ns, &rmse);
    let (estimate, se) = last;
    csv.comment(&format!("oracle={} sigma={}", f(oracle), f(sigma)));
    csv.comment(&format!("fitted_slope={}", f(slope)));
    csv.comment(&format!("final_estimate={} final_standard_error={}", f(estimate), f(se)));
    write_atomic(&a.out, &csv.into_bytes())?;
    let summary = json!({
        "oracle": oracle,
        "sigma": sigma,
        "fitted_slope": slope,
        "final_estimate": estimate,
        "final_standard_error": se,
        "within_3se": (estimate - oracle).abs() <= 3.0 * se,
    });
    println!("{summary}");
    Ok(())
}

pub fn metrics(a: &MetricsArgs, config: &serde_json::Value) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let data = load_data(&a.data)?;
    let range = data.range();
    let inputs = inputs(&data);
    let model_id = model.id();
    let mut csv = Csv::new(config, MetricResult::CSV_HEADER);
    csv.comment(&format!("consistency_formula={CONSISTENCY_FORMULA}"));
    for &method in &a.method {
        let explainer = build_explainer(method, &a.explainer)?;
        let chain = explainer.method_chain();
        let wants = |m| a.metric.contains(&m);
        let row = |metric, value| MetricResult {
            metric,
            method_chain: chain.clone(),
            model_id: model_id.clone(),
            n_inputs: inputs.len(),
            value,
            seed: a.explainer.seed,
        };
        if wants(MetricArg::Sparseness) || wants(MetricArg::Information) {
            let per_input: Vec<(f64, f64)> = inputs
                .par_iter()
                .map(|(x, class)| {
                    let map = explainer.explain(&model, x, *class, range)?;
                    Ok((sparseness_gini(map.as_slice())?, information_entropy(map.as_slice())?))
                })
                .collect::<gradlab_core::Result<_>>()?;
            let k = per_input.len() as f64;
            if wants(MetricArg::Sparseness) {
                let v = per_input.iter().map(|p| p.0).sum::<f64>() / k;
                csv.row(&[row(MetricKind::Sparseness, v).csv_row()]);
            }
            if wants(MetricArg::Information) {
                let v = per_input.iter().map(|p| p.1).sum::<f64>() / k;
                csv.row(&[row(MetricKind::InformationLevel, v).csv_row()]);
            }
        }
        if wants(MetricArg::Consistency) {
            let v = consistency_score(&explainer, &model, &inputs, a.delta * range.width(), range, a.explainer.seed)?;
            csv.row(&[row(MetricKind::Consistency, v).csv_row()]);
        }
        eprintln!("{chain}: done");
    }
    write_atomic(&a.out, &csv.into_bytes())
}

pub fn invariance(a: &InvarianceArgs, config: &serde_json::Value) -> Result<()> {
    let m1 = load_checkpoint(&a.model)?;
    let data = load_data(&a.data)?;
    let m2 = match a.mode {
        InvarianceMode::Constructed => m1.bias_compensated(a.shift)?,
        InvarianceMode::Retrained => {
            let (Some(images), Some(labels)) = (&a.train_images, &a.train_labels) else {
                return Err(CliError::Config("--mode retrained needs --train-images and --train-labels".into()));
            };
            let train = load_idx(images, labels)?.shifted(a.shift);
            let cfg = TrainConfig {
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                batch_size: a.batch_size,
                seed: a.explainer.seed,
            };
            train_mlp(&train, &cfg)?.model
        }
    };
    let inputs = inputs(&data);
    let mut csv = Csv::new(config, MetricResult::CSV_HEADER);
    csv.comment(&format!("shifted_model_id={} mode={:?}", m2.id(), a.mode).to_lowercase());
    for &method in &a.method {
        let explainer = build_explainer(method, &a.explainer)?;
        let value = invariance_check(&explainer, &m1, &m2, a.shift, &inputs, data.range())?;
        let result = MetricResult {
            metric: MetricKind::Invariance,
            method_chain: explainer.method_chain(),
            model_id: m1.id(),
            n_inputs: inputs.len(),
            value,
            seed: a.explainer.seed,
        };
        csv.row(&[result.csv_row()]);
    }
    write_atomic(&a.out, &csv.into_bytes())
}

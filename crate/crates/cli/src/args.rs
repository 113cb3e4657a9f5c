use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "gradlab", version, about = "Gradient attribution laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Train the 784-200-10 MLP with SGD and write a checkpoint plus loss log
    #[command(allow_negative_numbers = true)]
    Train(TrainArgs),
    /// Explain one dataset image and write the map as CSV
    #[command(allow_negative_numbers = true)]
    Saliency(SaliencyArgs),
    /// Render a saliency CSV as a PGM image
    #[command(allow_negative_numbers = true)]
    Render(RenderArgs),
    /// Inherent-noise probabilities and expected area for SG or AG
    #[command(allow_negative_numbers = true)]
    NoiseReport(NoiseReportArgs),
    /// Monte Carlo RMSE against the quadrature oracle as the sample count grows
    #[command(allow_negative_numbers = true)]
    Convergence(ConvergenceArgs),
    /// Sparseness, information level and consistency over dataset images
    #[command(allow_negative_numbers = true)]
    Metrics(MetricsArgs),
    /// Attribution change under a constant input shift
    #[command(allow_negative_numbers = true)]
    Invariance(InvarianceArgs),
    /// Empirical out-of-bounds sampling rates on a dataset
    #[command(allow_negative_numbers = true)]
    OobRate(OobRateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Saliency(_) => "saliency",
            Command::Render(_) => "render",
            Command::NoiseReport(_) => "noise-report",
            Command::Convergence(_) => "convergence",
            Command::Metrics(_) => "metrics",
            Command::Invariance(_) => "invariance",
            Command::OobRate(_) => "oob-rate",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub data_images: PathBuf,
    #[arg(long)]
    pub data_labels: PathBuf,
    /// Use only the first LIMIT images
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Grad,
    Sg,
    Ag,
    Gi,
    Ig,
    Ng,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SmootherArg {
    None,
    Sg,
    Ag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineArg {
    Black,
    White,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMethodArg {
    Sg,
    Ag,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainerArgs {
    /// Input smoother for gi, ig and ng; grad, sg and ag imply it
    #[arg(long, value_enum)]
    pub smoother: Option<SmootherArg>,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    /// Monte Carlo samples per smoothed gradient
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = BaselineArg::Black)]
    pub ig_baseline: BaselineArg,
    #[arg(long, default_value_t = 64)]
    pub ig_steps: usize,
    /// Perturbed models averaged by NoiseGrad
    #[arg(long, default_value_t = 25)]
    pub ng_models: usize,
    /// Relative parameter noise of NoiseGrad
    #[arg(long, default_value_t = 0.1)]
    pub ng_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Optional held-out images for a final accuracy line
    #[arg(long, requires = "test_labels")]
    pub test_images: Option<PathBuf>,
    #[arg(long, requires = "test_images")]
    pub test_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss CSV; defaults to the checkpoint path with a .loss.csv suffix
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Image index within the dataset
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Class to explain; defaults to the image label
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long, value_enum, default_value_t = MethodArg::Grad)]
    pub method: MethodArg,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderArgs {
    /// Saliency CSV written by `saliency`
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, default_value_t = 99.0)]
    pub clip_percentile: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseReportArgs {
    #[arg(long, value_enum)]
    pub method: NoiseMethodArg,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, visible_alias = "c", default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0.0)]
    pub xmin: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xmax: f64,
    /// Evenly spaced evaluation points for the per-dimension listing
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    /// Absolute tolerance of the expected-area quadrature
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Dataset for an empirical out-of-bounds comparison (its range replaces --xmin/--xmax)
    #[arg(long, requires = "data_labels")]
    pub data_images: Option<PathBuf>,
    #[arg(long, requires = "data_images")]
    pub data_labels: Option<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvergenceArgs {
    /// `sinusoid` or a checkpoint of a one-dimensional model
    #[arg(long, default_value = "sinusoid")]
    pub model: String,
    /// Frequency k of the sinusoid model sin(kx)
    #[arg(long, default_value_t = 3.0)]
    pub frequency: f64,
    #[arg(long, default_value_t = 0.7)]
    pub x: f64,
    #[arg(long, value_enum, default_value_t = NoiseMethodArg::Sg)]
    pub smoother: NoiseMethodArg,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0.0)]
    pub xmin: f64,
    #[arg(long, default_value_t = 1.0)]
    pub xmax: f64,
    /// Sample counts
    #[arg(long, value_delimiter = ',', default_value = "10,40,160,640,2560,10240")]
    pub n: Vec<usize>,
    /// Independent seeds per sample count
    #[arg(long, default_value_t = 30)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    Sparseness,
    Information,
    Consistency,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "grad")]
    pub method: Vec<MethodArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "sparseness,information,consistency")]
    pub metric: Vec<MetricArg>,
    /// Consistency perturbation half-width as a fraction of the data range
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InvarianceMode {
    /// Second model built from the first by compensating the first-layer bias
    Constructed,
    /// Second model trained from scratch on shifted training data
    Retrained,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InvarianceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "grad")]
    pub method: Vec<MethodArg>,
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,
    #[arg(long, value_enum, default_value_t = InvarianceMode::Constructed)]
    pub mode: InvarianceMode,
    #[arg(long, required_if_eq("mode", "retrained"))]
    pub train_images: Option<PathBuf>,
    #[arg(long, required_if_eq("mode", "retrained"))]
    pub train_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OobRateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: NoiseMethodArg,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

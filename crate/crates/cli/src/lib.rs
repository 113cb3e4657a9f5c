//! Command-line harness for gradlab: training, attribution, noise reports,
//! convergence studies, metric sweeps and saliency rendering.
//!
//! Every artifact embeds the full command configuration: CSV files start with
//! `# gradlab <json>`, PGM images carry it in a header comment and JSON
//! reports under a `config` key. Files are written to a temporary sibling and
//! renamed into place.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;
pub mod render;

pub use error::{CliError, Result};
pub use render::{encode_pgm, render_saliency, ChannelReduce, RenderOptions};

use args::Command;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GRADLAB_THREADS";

/// Sizes the global worker pool from `GRADLAB_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={raw} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

pub fn run(command: &Command) -> Result<()> {
    let config = serde_json::to_value(command).expect("arguments serialize");
    match command {
        Command::Train(a) => commands::train(a, &config),
        Command::Saliency(a) => commands::saliency(a, &config),
        Command::Render(a) => commands::render(a, &config),
        Command::NoiseReport(a) => commands::noise_report(a, &config),
        Command::Convergence(a) => commands::convergence(a, &config),
        Command::Metrics(a) => commands::metrics(a, &config),
        Command::Invariance(a) => commands::invariance(a, &config),
        Command::OobRate(a) => commands::oob_rate(a, &config),
    }
}

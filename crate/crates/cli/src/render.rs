//! Grayscale rendering of saliency maps.

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelReduce {
    /// Sum of absolute values over channels.
    AbsSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Values above this percentile of `|v|` saturate to white.
    pub percentile_clip: f64,
    pub channel_reduce: ChannelReduce,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { percentile_clip: 99.0, channel_reduce: ChannelReduce::AbsSum }
    }
}

/// Nearest-rank percentile of `sorted` (ascending).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Maps `|v|` to `0..=255` as `min(|v|, P) / P`, with `P` the clip
/// percentile of `|v|`.
///
/// With more values than pixels the map is read as `width * height` pixels of
/// interleaved channels and reduced per pixel first. A map whose magnitudes
/// are all equal renders black; if the percentile is zero the maximum is used
/// instead.
pub fn render_saliency(values: &[f64], opts: &RenderOptions, width: usize, height: usize) -> Result<Vec<u8>> {
    if !(opts.percentile_clip > 0.0 && opts.percentile_clip <= 100.0) {
        return Err(CliError::Config(format!("clip percentile {} outside (0, 100]", opts.percentile_clip)));
    }
    let pixels = width * height;
    if pixels == 0 || values.is_empty() || values.len() % pixels != 0 {
        return Err(CliError::Render(format!(
            "{} values do not fill a {width}x{height} image",
            values.len()
        )));
    }
    let channels = values.len() / pixels;
    let magnitude: Vec<f64> = match opts.channel_reduce {
        ChannelReduce::AbsSum => values.chunks(channels).map(|c| c.iter().map(|v| v.abs()).sum()).collect(),
    };
    if magnitude.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Render("map contains non-finite values".into()));
    }
    let mut sorted = magnitude.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Ok(vec![0; pixels]);
    }
    let mut p = percentile(&sorted, opts.percentile_clip);
    if p == 0.0 {
        p = hi;
    }
    Ok(magnitude.iter().map(|&v| (v.min(p) / p * 255.0).round() as u8).collect())
}

/// Binary PGM (P5, maxval 255) with `comment` embedded as one `#` line.
pub fn encode_pgm(pixels: &[u8], width: usize, height: usize, comment: &str) -> Vec<u8> {
    let comment = comment.replace(['\n', '\r'], " ");
    let mut out = format!("P5\n# {comment}\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

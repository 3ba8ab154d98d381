use std::path::PathBuf;

use clap::Args;

use crowd_enhance::align::AlignConfig;
use crowd_enhance::{EnhanceConfig, PhaseMode, StftParams, WavFormat};

#[derive(Debug, Clone, Args)]
pub struct StftArgs {
    /// FFT length in samples.
    #[arg(long, default_value_t = 2048)]
    pub fft_size: usize,
    /// Analysis window length in samples.
    #[arg(long, default_value_t = 2048)]
    pub window_size: usize,
    /// Hop between frames in samples.
    #[arg(long, default_value_t = 512)]
    pub hop: usize,
}

impl StftArgs {
    pub fn params(&self) -> anyhow::Result<StftParams> {
        Ok(StftParams::new(self.fft_size, self.window_size, self.hop)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    /// Upper outlier multiplier of the cell median.
    #[arg(long, default_value_t = 1.15)]
    pub lambda1: f64,
    /// Lower outlier multiplier of the cell median.
    #[arg(long, default_value_t = 0.01)]
    pub lambda2: f64,
    /// Relaxed upper multiplier used when spreading to neighbouring cells.
    #[arg(long, default_value_t = 1.1)]
    pub gamma: f64,
    /// Phase of the enhanced cells: masked-complex-average or all-signal-mean-phase.
    #[arg(long, default_value = "masked-complex-average", value_parser = parse_phase_mode)]
    pub phase_mode: PhaseMode,
    /// Crossfade between segments in samples [default: window size].
    #[arg(long)]
    pub crossfade: Option<usize>,
}

fn parse_phase_mode(s: &str) -> Result<PhaseMode, String> {
    s.parse().map_err(|e: crowd_enhance::Error| e.to_string())
}

pub fn parse_wav_format(s: &str) -> Result<WavFormat, String> {
    s.parse().map_err(|e: crowd_enhance::Error| e.to_string())
}

pub fn parse_method(s: &str) -> Result<crowd_enhance::Method, String> {
    s.parse().map_err(|e: crowd_enhance::Error| e.to_string())
}

impl FilterArgs {
    pub fn config(&self, stft: StftParams) -> anyhow::Result<EnhanceConfig> {
        let cfg = EnhanceConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            gamma: self.gamma,
            stft,
            phase_mode: self.phase_mode,
            crossfade: self.crossfade.unwrap_or(stft.window_size),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct AlignArgs {
    /// Minimum hash matches at the winning offset for a clip to be placed.
    #[arg(long, default_value_t = 10)]
    pub min_matches: usize,
    /// Later peaks paired with each anchor peak.
    #[arg(long, default_value_t = 15)]
    pub fan_out: usize,
    /// Peak neighbourhood half-width in frames.
    #[arg(long, default_value_t = 15)]
    pub peak_frames: usize,
    /// Peak neighbourhood half-width in bins.
    #[arg(long, default_value_t = 15)]
    pub peak_bins: usize,
}

impl AlignArgs {
    pub fn config(&self, stft: StftParams) -> anyhow::Result<AlignConfig> {
        let cfg = AlignConfig {
            stft,
            nbhd_t: self.peak_frames,
            nbhd_f: self.peak_bins,
            fan_out: self.fan_out,
            min_matches: self.min_matches,
            ..AlignConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output WAV file.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output encoding: float32 or pcm16.
    #[arg(long, default_value = "float32", value_parser = parse_wav_format)]
    pub format: WavFormat,
}

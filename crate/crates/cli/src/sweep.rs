//! SNR sweeps: mix, run every method, score against the clean source.
//!
//! The config is plain text, one `key = value` per line, `#` starts a
//! comment. Lists are comma-separated; `snr_db` also accepts
//! `start:step:end` (inclusive).

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;
use serde::Serialize;

use crowd_enhance::baselines;
use crowd_enhance::enhance::enhance_segment_samples;
use crowd_enhance::metrics::{aggregate_trials_with, si_snr_samples, EvalReport, TrialMetadata};
use crowd_enhance::synth::{synthesize_mixture, MixSpec};
use crowd_enhance::synth::signals::SignalKind;
use crowd_enhance::{EnhanceConfig, Method, StftParams};

use crate::inputs::{derive_seed, Resolved, SourceSpec};

pub const CSV_HEADER: &str = "method,snr_db,k,trial,si_snr";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    #[serde(serialize_with = "as_strings")]
    pub sources: Vec<SourceSpec>,
    #[serde(serialize_with = "as_strings")]
    pub noises: Vec<SourceSpec>,
    pub snr_db: Vec<f64>,
    #[serde(serialize_with = "as_strings")]
    pub methods: Vec<Method>,
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    /// Length of synthetic sources in seconds.
    pub duration: f64,
    pub tau: f64,
    pub packet_loss: f64,
    pub dither: bool,
    pub rate: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gamma: f64,
    pub fft_size: usize,
    pub window_size: usize,
    pub hop: usize,
}

fn as_strings<T: std::fmt::Display, S: serde::Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

impl Default for SweepConfig {
    fn default() -> Self {
        let enhance = EnhanceConfig::default();
        Self {
            sources: vec![SourceSpec::Synth(SignalKind::Speech)],
            noises: vec![SourceSpec::Synth(SignalKind::Speech), SourceSpec::Synth(SignalKind::Impulsive)],
            snr_db: vec![-10.0, 0.0, 10.0],
            methods: Method::ALL.to_vec(),
            k: 5,
            trials: 20,
            seed: 0,
            duration: 6.0,
            tau: 1.0,
            packet_loss: 0.0,
            dither: false,
            rate: 16_000,
            lambda1: enhance.lambda1,
            lambda2: enhance.lambda2,
            gamma: enhance.gamma,
            fft_size: enhance.stft.fft_size,
            window_size: enhance.stft.window_size,
            hop: enhance.stft.hop,
        }
    }
}

fn list<T, F: Fn(&str) -> anyhow::Result<T>>(value: &str, f: F) -> anyhow::Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect::<anyhow::Result<_>>()?;
    if items.is_empty() {
        bail!("empty list");
    }
    Ok(items)
}

fn snr_grid(value: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let (start, step, end): (f64, f64, f64) = (parts[0].parse()?, parts[1].parse()?, parts[2].parse()?);
        if !(step > 0.0) || end < start {
            bail!("range needs start <= end and a positive step");
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| start + step * i as f64).collect());
    }
    list(value, |s| Ok(s.parse::<f64>()?))
}

impl SweepConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut cfg = SweepConfig::default();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                bail!("line {}: `{key}` given twice", n + 1);
            }
            cfg.set(key, value).with_context(|| format!("line {}: bad value for `{key}`", n + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let spec = |s: &str| s.parse::<SourceSpec>().map_err(|e| anyhow!(e));
        match key {
            "sources" | "source" => self.sources = list(value, spec)?,
            "noises" | "noise" => self.noises = list(value, spec)?,
            "snr_db" => self.snr_db = snr_grid(value)?,
            "methods" => self.methods = list(value, |s| Ok(s.parse::<Method>()?))?,
            "k" => self.k = value.parse()?,
            "trials" => self.trials = value.parse()?,
            "seed" => self.seed = value.parse()?,
            "duration" => self.duration = value.parse()?,
            "tau" => self.tau = value.parse()?,
            "packet_loss" => self.packet_loss = value.parse()?,
            "dither" => self.dither = value.parse()?,
            "rate" => self.rate = value.parse()?,
            "lambda1" => self.lambda1 = value.parse()?,
            "lambda2" => self.lambda2 = value.parse()?,
            "gamma" => self.gamma = value.parse()?,
            "fft_size" => self.fft_size = value.parse()?,
            "window_size" => self.window_size = value.parse()?,
            "hop" => self.hop = value.parse()?,
            other => bail!("unknown key `{other}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.rate == 0 {
            bail!("rate must be positive");
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            bail!("duration must be positive");
        }
        self.enhance_config()?;
        self.mix_spec(0.0, 0).validate()?;
        Ok(())
    }

    pub fn enhance_config(&self) -> anyhow::Result<EnhanceConfig> {
        let stft = StftParams::new(self.fft_size, self.window_size, self.hop)?;
        let cfg = EnhanceConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            gamma: self.gamma,
            stft,
            crossfade: stft.window_size,
            ..EnhanceConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn mix_spec(&self, snr_db: f64, trial: usize) -> MixSpec {
        MixSpec {
            snr_db,
            tau: self.tau,
            k: self.k,
            packet_loss_sec: self.packet_loss,
            loss_dither: self.dither,
            seed: derive_seed(self.seed, 3, trial as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub method: Method,
    pub snr_db: f64,
    pub k: usize,
    pub trial: usize,
    pub si_snr: f64,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub columns: Vec<&'static str>,
    pub config: SweepConfig,
    pub cells: Vec<EvalReport>,
}

fn run_cell(
    cfg: &SweepConfig,
    enhance: &EnhanceConfig,
    sources: &[Resolved],
    noises: &[Resolved],
    snr_db: f64,
    trial: usize,
) -> anyhow::Result<Vec<Row>> {
    let len = (cfg.duration * cfg.rate as f64).round() as usize;
    let source = sources[trial % sources.len()].source(len, cfg.rate, derive_seed(cfg.seed, 1, trial as u64));
    let channel_noises = (0..cfg.k)
        .map(|i| {
            let seed = derive_seed(cfg.seed, 2, (trial * cfg.k + i) as u64);
            noises[i % noises.len()].noise(source.len(), cfg.rate, seed, true)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mix = synthesize_mixture(&source, &channel_noises, &cfg.mix_spec(snr_db, trial))?;
    let inputs: Vec<&[f64]> = mix.channels.iter().map(|c| c.samples()).collect();
    cfg.methods
        .iter()
        .map(|&method| {
            let est = match method {
                Method::Ours => enhance_segment_samples(&inputs, enhance)?.samples,
                m => baselines::run_samples(m, &inputs, enhance.stft)?,
            };
            Ok(Row {
                method,
                snr_db,
                k: cfg.k,
                trial,
                si_snr: si_snr_samples(&est, source.samples())?,
            })
        })
        .collect()
}

/// Runs the full grid. Rows come back ordered by SNR, trial, then method,
/// whatever order the workers finish in.
pub fn run(cfg: &SweepConfig) -> anyhow::Result<Vec<Row>> {
    let enhance = cfg.enhance_config()?;
    let sources = cfg
        .sources
        .iter()
        .map(|s| Resolved::new(s, cfg.rate))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let noises = cfg
        .noises
        .iter()
        .map(|s| Resolved::new(s, cfg.rate))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let cells: Vec<(f64, usize)> = cfg
        .snr_db
        .iter()
        .flat_map(|&snr| (0..cfg.trials).map(move |t| (snr, t)))
        .collect();
    let rows: Vec<Vec<Row>> = cells
        .par_iter()
        .map(|&(snr, trial)| {
            run_cell(cfg, &enhance, &sources, &noises, snr, trial)
                .with_context(|| format!("sweep cell at {snr} dB, trial {trial}"))
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn summarize(cfg: &SweepConfig, rows: &[Row]) -> anyhow::Result<Summary> {
    let mut cells = Vec::new();
    for &snr in &cfg.snr_db {
        for &method in &cfg.methods {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == method && r.snr_db == snr)
                .map(|r| r.si_snr)
                .collect();
            let meta = TrialMetadata {
                method: method.name().to_string(),
                snr_db: snr,
                k: cfg.k,
                seed: cfg.seed,
            };
            cells.push(aggregate_trials_with(&values, meta)?);
        }
    }
    Ok(Summary {
        columns: CSV_HEADER.split(',').collect(),
        config: cfg.clone(),
        cells,
    })
}

pub fn write_csv(path: &Path, rows: &[Row]) -> anyhow::Result<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.method, r.snr_db, r.k, r.trial, r.si_snr)?;
    }
    out.flush()?;
    Ok(())
}

//! Audio sources named on the command line: a WAV path or `synth:<kind>`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use crowd_enhance::synth::signals::{generate, SignalKind};
use crowd_enhance::{load_wav, resample, AudioClip};

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    File(PathBuf),
    Synth(SignalKind),
}

impl std::str::FromStr for SourceSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.strip_prefix("synth:") {
            Some(kind) => kind.parse().map(SourceSpec::Synth).map_err(|e: crowd_enhance::Error| e.to_string()),
            None if s.is_empty() => Err("empty source".into()),
            None => Ok(SourceSpec::File(PathBuf::from(s))),
        }
    }
}

impl std::fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceSpec::File(p) => write!(f, "{}", p.display()),
            SourceSpec::Synth(kind) => write!(f, "synth:{}", kind.name()),
        }
    }
}

/// SplitMix64 step; gives every (seed, stream, index) its own seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loads a WAV file as mono at `rate`, resampling when needed.
pub fn load_at_rate(path: &Path, rate: u32) -> anyhow::Result<AudioClip> {
    let clip = load_wav(path).with_context(|| format!("reading {}", path.display()))?;
    if clip.sample_rate() == rate {
        return Ok(clip);
    }
    Ok(resample(&clip, rate)?)
}

/// A source resolved once; synthetic kinds are generated on demand.
#[derive(Debug, Clone)]
pub enum Resolved {
    File(AudioClip),
    Synth(SignalKind),
}

impl Resolved {
    pub fn new(spec: &SourceSpec, rate: u32) -> anyhow::Result<Self> {
        Ok(match spec {
            SourceSpec::File(p) => Resolved::File(load_at_rate(p, rate)?),
            SourceSpec::Synth(kind) => Resolved::Synth(*kind),
        })
    }

    /// The source itself: a file as-is, or `len` samples of synthetic signal.
    pub fn source(&self, len: usize, rate: u32, seed: u64) -> AudioClip {
        match self {
            Resolved::File(clip) => clip.clone(),
            Resolved::Synth(kind) => generate(*kind, len, rate, seed),
        }
    }

    /// Noise for one channel, `len` samples long. Files are looped and started
    /// at a seed-dependent position so that channels sharing a file differ.
    pub fn noise(&self, len: usize, rate: u32, seed: u64, rotate: bool) -> anyhow::Result<AudioClip> {
        match self {
            Resolved::Synth(kind) => Ok(generate(*kind, len, rate, seed)),
            Resolved::File(clip) => {
                if clip.is_empty() {
                    bail!("noise `{}` is empty", clip.label());
                }
                let start = if rotate { (seed % clip.len() as u64) as usize } else { 0 };
                let samples: Vec<f64> = clip.samples().iter().cycle().skip(start).take(len).copied().collect();
                Ok(AudioClip::new(samples, rate, clip.label())?)
            }
        }
    }
}

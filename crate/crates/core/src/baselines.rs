//! Comparison methods: sample mean, per-cell median magnitude, and
//! maximum-component elimination.
//!
//! The two spectral baselines replace the magnitude of the averaged
//! signal's spectrogram and keep its phase.

use num_complex::Complex64;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::{istft_samples, stft_samples, Spectrogram, StftParams};

/// Method selector shared by the CLI and the sweep harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Mean,
    Median,
    MaxElim,
    Ours,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mean, Method::Median, Method::MaxElim, Method::Ours];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::Median => "median",
            Method::MaxElim => "max-elim",
            Method::Ours => "ours",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Method::Mean),
            "median" => Ok(Method::Median),
            "max-elim" | "max_elim" | "maxelim" => Ok(Method::MaxElim),
            "ours" => Ok(Method::Ours),
            other => Err(Error::invalid(format!(
                "unknown method `{other}` (expected mean, median, max-elim or ours)"
            ))),
        }
    }
}

fn common_length(clips: &[&[f64]]) -> Result<usize> {
    let len = clips
        .first()
        .ok_or_else(|| Error::invalid("at least one clip is required"))?
        .len();
    if let Some(other) = clips.iter().find(|c| c.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            found: other.len(),
        });
    }
    Ok(len)
}

fn views(clips: &[AudioClip]) -> Vec<&[f64]> {
    clips.iter().map(|c| c.samples()).collect()
}

fn rate_of(clips: &[AudioClip]) -> u32 {
    clips.first().map(|c| c.sample_rate()).unwrap_or(1)
}

pub fn mean_samples(clips: &[&[f64]]) -> Result<Vec<f64>> {
    let len = common_length(clips)?;
    let k = clips.len() as f64;
    Ok((0..len)
        .map(|n| clips.iter().map(|c| c[n]).sum::<f64>() / k)
        .collect())
}

/// Sample-wise arithmetic mean.
pub fn baseline_mean(clips: &[AudioClip]) -> Result<AudioClip> {
    AudioClip::new(mean_samples(&views(clips))?, rate_of(clips), "mean")
}

/// Median magnitude per cell, phase of the averaged signal.
pub fn baseline_median(clips: &[AudioClip], params: StftParams) -> Result<AudioClip> {
    let out = spectral_baseline(&views(clips), params, median_magnitude)?;
    AudioClip::new(out, rate_of(clips), "median")
}

/// Mean of the k-1 smallest magnitudes per cell, phase of the averaged signal.
pub fn baseline_max_elim(clips: &[AudioClip], params: StftParams) -> Result<AudioClip> {
    if clips.len() < 2 {
        return Err(Error::invalid("max elimination needs at least two clips"));
    }
    let out = spectral_baseline(&views(clips), params, max_elim_magnitude)?;
    AudioClip::new(out, rate_of(clips), "max-elim")
}

pub fn run_samples(method: Method, clips: &[&[f64]], params: StftParams) -> Result<Vec<f64>> {
    match method {
        Method::Mean => mean_samples(clips),
        Method::Median => spectral_baseline(clips, params, median_magnitude),
        Method::MaxElim => {
            if clips.len() < 2 {
                return Err(Error::invalid("max elimination needs at least two clips"));
            }
            spectral_baseline(clips, params, max_elim_magnitude)
        }
        Method::Ours => Err(Error::invalid(
            "the outlier filter is not a baseline; use enhance_segment",
        )),
    }
}

pub fn median_magnitude(mags: &mut [f64]) -> f64 {
    crate::enhance::cell_median(mags)
}

/// Mean after discarding one instance of the largest value.
pub fn max_elim_magnitude(mags: &mut [f64]) -> f64 {
    let k = mags.len();
    let (max_at, _) = mags
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let sum: f64 = mags
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != max_at)
        .map(|(_, v)| v)
        .sum();
    sum / (k - 1) as f64
}

fn spectral_baseline(
    clips: &[&[f64]],
    params: StftParams,
    combine: fn(&mut [f64]) -> f64,
) -> Result<Vec<f64>> {
    let len = common_length(clips)?;
    let avg = stft_samples(&mean_samples(clips)?, params)?;
    let grids = clips
        .iter()
        .map(|c| stft_samples(c, params))
        .collect::<Result<Vec<_>>>()?;
    let out = replace_magnitudes(&avg, &grids, combine)?;
    istft_samples(&out, params, len)
}

/// Replaces each cell of `avg` by `combine(|Y_1|..|Y_k|)` along the phase of `avg`.
/// Cells where `avg` is zero stay zero.
pub fn replace_magnitudes(
    avg: &Spectrogram,
    grids: &[Spectrogram],
    combine: fn(&mut [f64]) -> f64,
) -> Result<Spectrogram> {
    if grids.iter().any(|g| g.shape() != avg.shape()) {
        return Err(Error::invalid("grid shapes differ"));
    }
    let mut mags = vec![0.0; grids.len()];
    let cells = avg
        .cells()
        .iter()
        .enumerate()
        .map(|(cell, &a)| {
            for (m, g) in mags.iter_mut().zip(grids) {
                *m = g.cells()[cell].norm();
            }
            let r = a.norm();
            if r == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                a * (combine(&mut mags) / r)
            }
        })
        .collect();
    Spectrogram::from_cells(avg.frames(), avg.bins(), cells, avg.params())
}

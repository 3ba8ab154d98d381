//! Synthetic benchmark inputs: one source duplicated to k channels, each
//! with its own noise scaled to a target peak-based SNR, optionally with a
//! stretch of simulated packet loss.

pub mod signals;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Standard deviation of the optional dither placed in lost intervals (-80 dBFS).
pub const LOSS_DITHER_STD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixSpec {
    /// Target SNR; `f64::INFINITY` disables the noise.
    pub snr_db: f64,
    /// Peak window length in seconds.
    pub tau: f64,
    pub k: usize,
    /// Length of the silenced interval per channel; 0 disables.
    pub packet_loss_sec: f64,
    /// Fill lost intervals with low-level white noise instead of exact zeros.
    pub loss_dither: bool,
    pub seed: u64,
}

impl Default for MixSpec {
    fn default() -> Self {
        Self {
            snr_db: 0.0,
            tau: 1.0,
            k: 5,
            packet_loss_sec: 0.0,
            loss_dither: false,
            seed: 0,
        }
    }
}

impl MixSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau = {} must be positive", self.tau)));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.packet_loss_sec >= 0.0 && self.packet_loss_sec.is_finite()) {
            return Err(Error::invalid("packet loss duration must be non-negative"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid("SNR must be a number or +inf"));
        }
        Ok(())
    }
}

/// Sum over consecutive `tau`-second windows of the squared absolute peak.
/// A trailing partial window counts as a full window.
pub fn power_peak(signal: &AudioClip, tau: f64) -> f64 {
    let window = ((tau * signal.sample_rate() as f64).round() as usize).max(1);
    power_peak_samples(signal.samples(), window)
}

pub fn power_peak_samples(samples: &[f64], window: usize) -> f64 {
    samples
        .chunks(window)
        .map(|w| {
            let peak = w.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            peak * peak
        })
        .sum()
}

/// Noise scale giving `10 log10(P(S) / P(a N)) = snr_db`.
pub fn noise_gain(source: &AudioClip, noise: &AudioClip, snr_db: f64, tau: f64) -> Result<f64> {
    let ps = power_peak(source, tau);
    let pn = power_peak(noise, tau);
    noise_gain_from_powers(ps, pn, snr_db)
}

pub fn noise_gain_from_powers(source_power: f64, noise_power: f64, snr_db: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(Error::Degenerate("noise has zero peak power".into()));
    }
    Ok((source_power / (10f64.powf(snr_db / 10.0) * noise_power)).sqrt())
}

/// Peak-based SNR of a source against a (scaled) noise.
pub fn measured_snr_db(source: &AudioClip, noise: &AudioClip, tau: f64) -> f64 {
    10.0 * (power_peak(source, tau) / power_peak(noise, tau)).log10()
}

/// Loops or truncates `noise` to exactly `len` samples.
pub fn fit_length(noise: &[f64], len: usize) -> Result<Vec<f64>> {
    if noise.is_empty() && len > 0 {
        return Err(Error::invalid("cannot loop an empty noise clip"));
    }
    Ok(noise.iter().cycle().take(len).copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossInterval {
    pub start_sample: usize,
    pub len: usize,
}

/// Generated channels plus everything needed to reproduce them.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub channels: Vec<AudioClip>,
    /// Noise multiplier per channel (0 when noise is disabled).
    pub gains: Vec<f64>,
    pub losses: Vec<Option<LossInterval>>,
}

/// Per-channel RNG stream derived from the mixture seed.
pub fn channel_rng(seed: u64, channel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel as u64 + 1);
    rng
}

/// Builds `source + a_i * noise_i` for each channel.
pub fn synthesize_mixture(source: &AudioClip, noises: &[AudioClip], spec: &MixSpec) -> Result<Mixture> {
    spec.validate()?;
    if noises.len() != spec.k {
        return Err(Error::invalid(format!(
            "{} noises supplied for k = {}",
            noises.len(),
            spec.k
        )));
    }
    if source.is_empty() {
        return Err(Error::invalid("source is empty"));
    }
    let len = source.len();
    let rate = source.sample_rate();
    let window = ((spec.tau * rate as f64).round() as usize).max(1);
    let source_power = power_peak_samples(source.samples(), window);
    let loss_len = (spec.packet_loss_sec * rate as f64).round() as usize;
    if loss_len > len {
        return Err(Error::invalid(format!(
            "packet loss of {loss_len} samples exceeds the {len}-sample source"
        )));
    }

    let mut channels = Vec::with_capacity(spec.k);
    let mut gains = Vec::with_capacity(spec.k);
    let mut losses = Vec::with_capacity(spec.k);
    for (i, noise) in noises.iter().enumerate() {
        if noise.sample_rate() != rate {
            return Err(Error::invalid(format!(
                "noise `{}` is at {} Hz, source at {rate} Hz",
                noise.label(),
                noise.sample_rate()
            )));
        }
        let mut samples = source.samples().to_vec();
        let gain = if spec.snr_db == f64::INFINITY {
            0.0
        } else {
            let fitted = fit_length(noise.samples(), len)?;
            let gain = noise_gain_from_powers(source_power, power_peak_samples(&fitted, window), spec.snr_db)?;
            samples.iter_mut().zip(&fitted).for_each(|(s, n)| *s += gain * n);
            gain
        };
        let mut rng = channel_rng(spec.seed, i);
        let loss = (loss_len > 0).then(|| {
            let start = rng.random_range(0..=len - loss_len);
            let lost = &mut samples[start..start + loss_len];
            if spec.loss_dither {
                let dither = Normal::new(0.0, LOSS_DITHER_STD).unwrap();
                lost.iter_mut().for_each(|s| *s = dither.sample(&mut rng));
            } else {
                lost.iter_mut().for_each(|s| *s = 0.0);
            }
            LossInterval {
                start_sample: start,
                len: loss_len,
            }
        });
        channels.push(AudioClip::new(samples, rate, format!("ch{i}"))?);
        gains.push(gain);
        losses.push(loss);
    }
    Ok(Mixture {
        channels,
        gains,
        losses,
    })
}

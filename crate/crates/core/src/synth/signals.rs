//! Seeded procedural test signals standing in for speech, music and
//! everyday noises when no corpus is available.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    /// Voiced syllables with formants, unvoiced bursts and pauses.
    Speech,
    /// Sustained harmonic chords changing every few hundred milliseconds.
    Music,
    /// Sparse decaying knocks and clicks.
    Impulsive,
    White,
}

impl std::str::FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speech" => Ok(Self::Speech),
            "music" => Ok(Self::Music),
            "impulsive" => Ok(Self::Impulsive),
            "white" => Ok(Self::White),
            other => Err(Error::invalid(format!(
                "unknown signal kind `{other}` (expected speech, music, impulsive or white)"
            ))),
        }
    }
}

impl SignalKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Speech => "speech",
            Self::Music => "music",
            Self::Impulsive => "impulsive",
            Self::White => "white",
        }
    }
}

/// Generates `len` samples of the given kind, peak-normalized to 0.5.
pub fn generate(kind: SignalKind, len: usize, rate: u32, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = match kind {
        SignalKind::Speech => speech_like(&mut rng, len, rate),
        SignalKind::Music => music_like(&mut rng, len, rate),
        SignalKind::Impulsive => impulsive(&mut rng, len, rate),
        SignalKind::White => (0..len).map(|_| StandardNormal.sample(&mut rng)).collect(),
    };
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|s| *s *= 0.5 / peak);
    }
    AudioClip::new(samples, rate, format!("{}-{seed}", kind.name())).expect("generated samples are finite")
}

fn raised_cosine_envelope(n: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    if n < ramp {
        0.5 - 0.5 * (PI * n as f64 / ramp as f64).cos()
    } else if n + ramp > len {
        0.5 - 0.5 * (PI * (len - n) as f64 / ramp as f64).cos()
    } else {
        1.0
    }
}

fn speech_like(rng: &mut ChaCha8Rng, len: usize, rate: u32) -> Vec<f64> {
    let fs = rate as f64;
    let nyquist_cap = (0.45 * fs).min(4000.0);
    let base_f0: f64 = rng.random_range(90.0..260.0);
    let mut out = vec![0.0; len];
    let mut pos = (rng.random_range(0.0..0.15) * fs) as usize;
    while pos < len {
        let dur = ((rng.random_range(0.08..0.30)) * fs) as usize;
        let end = (pos + dur).min(len);
        let seg = end - pos;
        let loudness: f64 = rng.random_range(0.4..1.0);
        if rng.random_bool(0.25) {
            // unvoiced: differentiated white noise
            let mut prev = 0.0;
            for n in 0..seg {
                let w: f64 = StandardNormal.sample(rng);
                out[pos + n] += 0.3 * loudness * (w - prev) * raised_cosine_envelope(n, seg, (0.01 * fs) as usize);
                prev = w;
            }
        } else {
            let f0_start = base_f0 * rng.random_range(0.85..1.2);
            let f0_end = f0_start * rng.random_range(0.8..1.25);
            let formants = [
                (rng.random_range(300.0..900.0), rng.random_range(60.0..120.0)),
                (rng.random_range(900.0..2300.0), rng.random_range(80.0..160.0)),
                (rng.random_range(2300.0..3300.0), rng.random_range(120.0..220.0)),
            ];
            let max_h = (nyquist_cap / f0_start.max(f0_end)).floor() as usize;
            let phases: Vec<f64> = (0..max_h).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let mut phase = 0.0;
            for n in 0..seg {
                let frac = n as f64 / seg as f64;
                let f0 = f0_start + (f0_end - f0_start) * frac;
                phase += 2.0 * PI * f0 / fs;
                let mut v = 0.0;
                for (h, ph) in phases.iter().enumerate() {
                    let freq = f0 * (h + 1) as f64;
                    let gain: f64 = formants
                        .iter()
                        .map(|&(fc, bw)| (-0.5 * ((freq - fc) / bw).powi(2)).exp())
                        .sum::<f64>()
                        + 0.05 / (h + 1) as f64;
                    v += gain * (phase * (h + 1) as f64 + ph).sin();
                }
                out[pos + n] += loudness * v * raised_cosine_envelope(n, seg, (0.02 * fs) as usize);
            }
        }
        let gap = if rng.random_bool(0.15) {
            rng.random_range(0.3..0.6)
        } else {
            rng.random_range(0.03..0.2)
        };
        pos = end + (gap * fs) as usize;
    }
    out
}

fn music_like(rng: &mut ChaCha8Rng, len: usize, rate: u32) -> Vec<f64> {
    let fs = rate as f64;
    let mut out = vec![0.0; len];
    let mut pos = 0;
    while pos < len {
        let dur = (rng.random_range(0.2..0.6) * fs) as usize;
        let end = (pos + dur).min(len);
        let seg = end - pos;
        let root = 110.0 * 2f64.powf(rng.random_range(0..24) as f64 / 12.0);
        let chord = [0.0, [3.0, 4.0][rng.random_range(0..2)], 7.0, 12.0];
        for semis in chord {
            let f = root * 2f64.powf(semis / 12.0);
            let amp: f64 = rng.random_range(0.3..1.0);
            for h in 1..=8usize {
                let freq = f * h as f64;
                if freq > 0.45 * fs {
                    break;
                }
                let ph: f64 = rng.random_range(0.0..2.0 * PI);
                let a = amp / h as f64;
                for n in 0..seg {
                    let t = n as f64 / fs;
                    let decay = (-t * harmonic_decay(h)).exp();
                    out[pos + n] += a * decay * (2.0 * PI * freq * t + ph).sin()
                        * raised_cosine_envelope(n, seg, (0.01 * fs) as usize);
                }
            }
        }
        pos = end;
    }
    out
}

fn harmonic_decay(harmonic: usize) -> f64 {
    1.5 + 0.5 * harmonic as f64
}

fn impulsive(rng: &mut ChaCha8Rng, len: usize, rate: u32) -> Vec<f64> {
    let fs = rate as f64;
    let mut out = vec![0.0; len];
    let mut t = rng.random_range(0.0..0.3);
    while ((t * fs) as usize) < len {
        let start = (t * fs) as usize;
        let amp: f64 = rng.random_range(0.3..1.0);
        let decay = rng.random_range(0.005..0.04);
        let ring = rng.random_range(400.0..4000.0);
        let dur = ((decay * 8.0) * fs) as usize;
        for n in 0..dur.min(len - start) {
            let tt = n as f64 / fs;
            let env = (-tt / decay).exp();
            let w: f64 = StandardNormal.sample(rng);
            out[start + n] += amp * env * (0.6 * w + 0.8 * (2.0 * PI * ring * tt).sin());
        }
        // roughly three to four events per second, never evenly spaced
        t += rng.random_range(0.08..0.5);
    }
    out
}

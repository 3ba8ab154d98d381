//! Mono audio clips, WAV input/output and band-limited resampling.
//!
//! All processing uses 64-bit samples. Files are read as PCM-16, PCM-24 or
//! IEEE float-32 and folded to mono by averaging channels; written as PCM-16
//! or float-32.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

/// Default working sample rate of the pipeline.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// A mono sample buffer with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
    label: String,
}

impl AudioClip {
    /// Builds a clip, rejecting a zero sample rate and non-finite samples.
    pub fn new(samples: Vec<f64>, sample_rate: u32, label: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate,
            label: label.into(),
        })
    }

    pub fn silence(len: usize, sample_rate: u32, label: impl Into<String>) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate, label)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same rate and label, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.sample_rate, self.label.clone())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        self.with_samples(self.samples.iter().map(|s| s * gain).collect())
    }

    /// Samples in `[start, end)`, zero-filled where the range leaves the clip.
    pub fn slice_padded(&self, start: i64, end: i64) -> Vec<f64> {
        (start..end)
            .map(|n| {
                if n >= 0 && (n as usize) < self.samples.len() {
                    self.samples[n as usize]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Largest absolute sample value.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Rescales so the peak is at most `ceiling`. Clips already within range are unchanged.
    pub fn normalized(&self, ceiling: f64) -> Result<Self> {
        let peak = self.peak();
        if peak <= ceiling || peak == 0.0 {
            return Ok(self.clone());
        }
        self.scaled(ceiling / peak)
    }
}

/// Output sample encoding for [`save_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

impl std::str::FromStr for WavFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" => Ok(WavFormat::Pcm16),
            "float32" => Ok(WavFormat::Float32),
            other => Err(Error::invalid(format!(
                "unknown WAV format `{other}` (expected pcm16 or float32)"
            ))),
        }
    }
}

/// Folds interleaved frames to mono by the arithmetic mean of the channels.
pub fn to_mono(interleaved: &[f64], channels: usize) -> Vec<f64> {
    if channels <= 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect()
}

/// Reads a RIFF/WAVE file as a mono clip with samples scaled to `[-1, 1]`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32_768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Int, 24) => reader
            .into_samples::<i32>()
            .map(|s| s.map(|v| v as f64 / 8_388_608.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (format, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                found: format!("{bits}-bit {format:?}"),
            })
        }
    };
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    AudioClip::new(to_mono(&interleaved, channels), spec.sample_rate, label)
}

fn wav_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            found: describe_format(path).map_or_else(|| "unrecognized encoding".into(), |(_, d)| d),
        },
        other => match describe_format(path) {
            // hound rejects some foreign codecs as malformed rather than unsupported
            Some((tag, found)) if !matches!(tag, Some(0x0001 | 0x0003)) => Error::UnsupportedFormat {
                path: path.to_path_buf(),
                found,
            },
            _ => Error::Wav {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        },
    }
}

/// Reads the `fmt ` chunk directly to name an encoding hound refused.
fn describe_format(path: &Path) -> Option<(Option<u16>, String)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).ok()?)
        .take(1 << 16)
        .read_to_end(&mut bytes)
        .ok()?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Some((None, "not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        if id == b"fmt " && pos + 8 + 16 <= bytes.len() {
            let body = &bytes[pos + 8..];
            let mut tag = u16::from_le_bytes([body[0], body[1]]);
            let bits = u16::from_le_bytes([body[14], body[15]]);
            // WAVE_FORMAT_EXTENSIBLE carries the real tag in the sub-format GUID.
            if tag == 0xFFFE && body.len() >= 26 {
                tag = u16::from_le_bytes([body[24], body[25]]);
            }
            let name = match tag {
                0x0001 => "PCM",
                0x0002 => "Microsoft ADPCM",
                0x0003 => "IEEE float",
                0x0006 => "A-law",
                0x0007 => "mu-law",
                0x0011 => "IMA ADPCM",
                0x0055 => "MPEG Layer 3",
                _ => "unknown",
            };
            return Some((Some(tag), format!("format tag 0x{tag:04X} ({name}), {bits} bits per sample")));
        }
        pos += 8 + size + (size & 1);
    }
    Some((None, "missing fmt chunk".into()))
}

/// Writes a mono WAV file.
///
/// PCM-16 writing refuses samples outside `[-1, 1]` instead of clipping
/// them; use [`AudioClip::normalized`] first when that can happen.
pub fn save_wav(path: impl AsRef<Path>, clip: &AudioClip, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    if clip.is_empty() {
        return Err(Error::invalid("cannot write an empty clip"));
    }
    if format == WavFormat::Pcm16 {
        if let Some((index, &value)) = clip
            .samples()
            .iter()
            .enumerate()
            .find(|(_, s)| s.abs() > 1.0)
        {
            return Err(Error::SampleOutOfRange { index, value });
        }
    }
    let spec = match format {
        WavFormat::Pcm16 => hound::WavSpec {
            channels: 1,
            sample_rate: clip.sample_rate(),
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        },
        WavFormat::Float32 => hound::WavSpec {
            channels: 1,
            sample_rate: clip.sample_rate(),
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in clip.samples() {
        let written = match format {
            WavFormat::Pcm16 => writer.write_sample(quantize_pcm16(s)),
            WavFormat::Float32 => writer.write_sample(s as f32),
        };
        written.map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn quantize_pcm16(s: f64) -> i16 {
    (s * 32_768.0).round().clamp(-32_768.0, 32_767.0) as i16
}

const RESAMPLE_ZERO_CROSSINGS: usize = 64;
const RESAMPLE_ROLLOFF: f64 = 0.9;
const RESAMPLE_KAISER_BETA: f64 = 10.0;
/// Above this many distinct phases, taps are computed per output sample.
const MAX_TABLE_PHASES: u64 = 1024;

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
///
/// The output has `round(len * target_rate / input_rate)` samples. Rational
/// ratios with a small numerator use a precomputed polyphase tap table.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::invalid("target rate must be positive"));
    }
    let input_rate = clip.sample_rate();
    if input_rate == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(input_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = input_rate as u64 / g;
    let len = clip.len() as u64;
    let out_len = ((len * target_rate as u64 * 2 + input_rate as u64) / (2 * input_rate as u64)) as usize;

    // Cutoff in cycles per input sample.
    let cutoff = 0.5 * RESAMPLE_ROLLOFF * (up as f64 / down as f64).min(1.0);
    let half_width = (RESAMPLE_ZERO_CROSSINGS as f64 / (2.0 * cutoff)).ceil() as i64;
    let kernel = SincKernel { cutoff, half_width };

    let table: Option<Vec<Vec<f64>>> = (up <= MAX_TABLE_PHASES).then(|| {
        (0..up)
            .map(|phase| kernel.taps(phase as f64 / up as f64))
            .collect()
    });

    let input = clip.samples();
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let owned;
        let taps: &[f64] = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = kernel.taps(phase as f64 / up as f64);
                &owned
            }
        };
        let mut acc = 0.0;
        for (j, &h) in taps.iter().enumerate() {
            let idx = base - half_width + j as i64;
            if idx >= 0 && (idx as usize) < input.len() {
                acc += h * input[idx as usize];
            }
        }
        out.push(acc);
    }
    AudioClip::new(out, target_rate, clip.label())
}

struct SincKernel {
    cutoff: f64,
    half_width: i64,
}

impl SincKernel {
    /// Taps for input offsets `-half_width..=half_width` relative to a point
    /// `frac` samples past the base index, normalized to unit DC gain.
    fn taps(&self, frac: f64) -> Vec<f64> {
        let hw = self.half_width as f64;
        let norm = bessel_i0(RESAMPLE_KAISER_BETA);
        let mut taps: Vec<f64> = (-self.half_width..=self.half_width)
            .map(|j| {
                let t = j as f64 - frac;
                let r = t / (hw + 1.0);
                if r.abs() >= 1.0 {
                    return 0.0;
                }
                let window = bessel_i0(RESAMPLE_KAISER_BETA * (1.0 - r * r).sqrt()) / norm;
                2.0 * self.cutoff * sinc(2.0 * self.cutoff * t) * window
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        if sum != 0.0 {
            taps.iter_mut().for_each(|h| *h /= sum);
        }
        taps
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

//! Short-time Fourier transform and its weighted overlap-add inverse.
//!
//! Analysis is centered: the clip is reflect-padded by `window_size / 2`
//! samples on both ends, and frame `t` starts at padded sample `t * hop`.
//! A periodic Hann window is used for analysis and synthesis; the inverse
//! divides by the summed squared window so any hop whose squared windows
//! overlap without gaps inverts exactly.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub fft_size: usize,
    pub window_size: usize,
    pub hop: usize,
}

impl Default for StftParams {
    /// 2048-point transform, 2048-sample window, hop of a quarter window.
    fn default() -> Self {
        Self {
            fft_size: 2048,
            window_size: 2048,
            hop: 512,
        }
    }
}

impl StftParams {
    pub fn new(fft_size: usize, window_size: usize, hop: usize) -> Result<Self> {
        let params = Self {
            fft_size,
            window_size,
            hop,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 || self.window_size > self.fft_size {
            return Err(Error::invalid(format!(
                "window size {} must be in [2, fft size {}]",
                self.window_size, self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.window_size {
            return Err(Error::invalid(format!(
                "hop {} must be in [1, window size {}]",
                self.hop, self.window_size
            )));
        }
        let overlap = self.overlap_profile();
        let max = overlap.iter().cloned().fold(0.0, f64::max);
        let min = overlap.iter().cloned().fold(f64::INFINITY, f64::min);
        if min <= 1e-6 * max {
            return Err(Error::invalid(format!(
                "hop {} leaves gaps in the squared-window overlap of a {}-sample Hann window",
                self.hop, self.window_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Center padding applied on each side of the clip.
    pub fn pad(&self) -> usize {
        self.window_size / 2
    }

    pub fn frame_count(&self, len: usize) -> usize {
        1 + (len + 2 * self.pad() - self.window_size) / self.hop
    }

    pub fn window(&self) -> Vec<f64> {
        hann(self.window_size)
    }

    /// Steady-state sum of squared windows at each of `hop` phases.
    fn overlap_profile(&self) -> Vec<f64> {
        let w = self.window();
        (0..self.hop)
            .map(|phase| {
                w.iter()
                    .skip(phase)
                    .step_by(self.hop)
                    .map(|v| v * v)
                    .sum()
            })
            .collect()
    }

    /// Offset of the window inside the FFT buffer (zero padding is split evenly).
    fn window_offset(&self) -> usize {
        (self.fft_size - self.window_size) / 2
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// A one-sided complex time-frequency grid, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    cells: Vec<Complex64>,
    params: StftParams,
    /// Position of frame 0 on the enclosing segment timeline, in frames.
    pub origin_offset: i64,
}

impl Spectrogram {
    pub fn from_cells(
        frames: usize,
        bins: usize,
        cells: Vec<Complex64>,
        params: StftParams,
    ) -> Result<Self> {
        if cells.len() != frames * bins {
            return Err(Error::invalid(format!(
                "{} cells do not form a {frames}x{bins} grid",
                cells.len()
            )));
        }
        if cells.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::invalid("spectrogram cells must be finite"));
        }
        Ok(Self {
            frames,
            bins,
            cells,
            params,
            origin_offset: 0,
        })
    }

    pub fn zeros(frames: usize, bins: usize, params: StftParams) -> Self {
        Self {
            frames,
            bins,
            cells: vec![Complex64::new(0.0, 0.0); frames * bins],
            params,
            origin_offset: 0,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn params(&self) -> StftParams {
        self.params
    }

    pub fn cells(&self) -> &[Complex64] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [Complex64] {
        &mut self.cells
    }

    pub fn into_cells(self) -> Vec<Complex64> {
        self.cells
    }

    pub fn get(&self, frame: usize, bin: usize) -> Complex64 {
        self.cells[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.cells[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.norm()).collect()
    }

    /// Writes the grid in the little-endian dump layout read by [`Spectrogram::read_dump`]:
    ///
    /// | field | type |
    /// |---|---|
    /// | magic `b"CSPG"` | 4 bytes |
    /// | version (1) | u32 |
    /// | frames, bins, fft_size, window_size, hop | u32 each |
    /// | origin_offset | i64 |
    /// | cells, frame-major | (f32 re, f32 im) pairs |
    pub fn write_dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        for v in [
            self.frames,
            self.bins,
            self.params.fft_size,
            self.params.window_size,
            self.params.hop,
        ] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        out.write_all(&self.origin_offset.to_le_bytes())?;
        for c in &self.cells {
            out.write_all(&(c.re as f32).to_le_bytes())?;
            out.write_all(&(c.im as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::invalid(format!("truncated spectrogram dump: {e}"));
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::invalid("not a spectrogram dump"));
        }
        let mut word = [0u8; 4];
        let mut next_u32 = |input: &mut R| -> Result<u32> {
            input.read_exact(&mut word).map_err(io)?;
            Ok(u32::from_le_bytes(word))
        };
        let version = next_u32(&mut input)?;
        if version != DUMP_VERSION {
            return Err(Error::invalid(format!("unsupported dump version {version}")));
        }
        let frames = next_u32(&mut input)? as usize;
        let bins = next_u32(&mut input)? as usize;
        let params = StftParams {
            fft_size: next_u32(&mut input)? as usize,
            window_size: next_u32(&mut input)? as usize,
            hop: next_u32(&mut input)? as usize,
        };
        let mut long = [0u8; 8];
        input.read_exact(&mut long).map_err(io)?;
        let origin_offset = i64::from_le_bytes(long);
        let mut cells = Vec::with_capacity(frames * bins);
        let mut pair = [0u8; 8];
        for _ in 0..frames * bins {
            input.read_exact(&mut pair).map_err(io)?;
            let re = f32::from_le_bytes(pair[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(pair[4..8].try_into().unwrap());
            cells.push(Complex64::new(re as f64, im as f64));
        }
        let mut spec = Spectrogram::from_cells(frames, bins, cells, params)?;
        spec.origin_offset = origin_offset;
        Ok(spec)
    }
}

const DUMP_MAGIC: &[u8; 4] = b"CSPG";
const DUMP_VERSION: u32 = 1;

/// Index into a signal of length `n` under repeated mirror reflection
/// (edge samples are not duplicated).
fn reflect_index(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    if m < n as i64 {
        m as usize
    } else {
        (period - m) as usize
    }
}

fn padded_signal(samples: &[f64], pad: usize) -> Vec<f64> {
    let n = samples.len();
    (-(pad as i64)..(n + pad) as i64)
        .map(|i| samples[reflect_index(i, n)])
        .collect()
}

fn plan(fft_size: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(fft_size)
    } else {
        planner.plan_fft_forward(fft_size)
    }
}

pub fn stft(clip: &AudioClip, params: StftParams) -> Result<Spectrogram> {
    stft_samples(clip.samples(), params)
}

pub fn stft_samples(samples: &[f64], params: StftParams) -> Result<Spectrogram> {
    params.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("cannot transform an empty clip"));
    }
    let padded = padded_signal(samples, params.pad());
    let frames = params.frame_count(samples.len());
    let bins = params.bins();
    let window = params.window();
    let offset = params.window_offset();
    let fft = plan(params.fft_size, false);

    let mut cells = vec![Complex64::new(0.0, 0.0); frames * bins];
    cells
        .par_chunks_mut(bins)
        .enumerate()
        .for_each_init(
            || {
                (
                    vec![Complex64::new(0.0, 0.0); params.fft_size],
                    vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), (t, row)| {
                buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                let start = t * params.hop;
                for (j, w) in window.iter().enumerate() {
                    buf[offset + j] = Complex64::new(padded[start + j] * w, 0.0);
                }
                fft.process_with_scratch(buf, scratch);
                row.copy_from_slice(&buf[..bins]);
            },
        );
    Spectrogram::from_cells(frames, bins, cells, params)
}

/// Inverse transform, trimmed or zero-extended to exactly `out_len` samples.
pub fn istft(spec: &Spectrogram, params: StftParams, out_len: usize, sample_rate: u32) -> Result<AudioClip> {
    let samples = istft_samples(spec, params, out_len)?;
    AudioClip::new(samples, sample_rate, "")
}

pub fn istft_samples(spec: &Spectrogram, params: StftParams, out_len: usize) -> Result<Vec<f64>> {
    params.validate()?;
    if spec.params() != params {
        return Err(Error::IncompatibleParams(format!(
            "grid built with {:?}, inverse requested with {:?}",
            spec.params(),
            params
        )));
    }
    if spec.bins() != params.bins() {
        return Err(Error::IncompatibleParams(format!(
            "{} bins, expected {}",
            spec.bins(),
            params.bins()
        )));
    }
    let n = params.fft_size;
    let bins = params.bins();
    let window = params.window();
    let offset = params.window_offset();
    let pad = params.pad();
    let frames = spec.frames();
    let span = if frames == 0 {
        0
    } else {
        (frames - 1) * params.hop + params.window_size
    };
    let ifft = plan(n, true);

    let time_frames: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![Complex64::new(0.0, 0.0); n],
                    vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), t| {
                let row = spec.frame(t);
                buf[..bins].copy_from_slice(row);
                // Hermitian completion; DC and Nyquist must be real for a real signal.
                buf[0].im = 0.0;
                if n % 2 == 0 {
                    buf[n / 2].im = 0.0;
                }
                for k in bins..n {
                    buf[k] = buf[n - k].conj();
                }
                ifft.process_with_scratch(buf, scratch);
                window
                    .iter()
                    .enumerate()
                    .map(|(j, w)| buf[offset + j].re / n as f64 * w)
                    .collect()
            },
        )
        .collect();

    let mut acc = vec![0.0; span];
    let mut norm = vec![0.0; span];
    for (t, frame) in time_frames.iter().enumerate() {
        let start = t * params.hop;
        for (j, (v, w)) in frame.iter().zip(&window).enumerate() {
            acc[start + j] += v;
            norm[start + j] += w * w;
        }
    }
    let out = (0..out_len)
        .map(|i| {
            let p = i + pad;
            if p < span && norm[p] > 1e-10 {
                acc[p] / norm[p]
            } else {
                0.0
            }
        })
        .collect();
    Ok(out)
}

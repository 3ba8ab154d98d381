//! Median outlier filtering of overlapping recordings.
//!
//! [`enhance_timeline`] is the full pipeline: gain-scale each clip, cut the
//! timeline into constant-coverage segments, filter each segment with
//! [`enhance_segment`] and stitch the results with linear crossfades.

pub mod mask;
pub mod segment;

use rayon::prelude::*;

pub use mask::{
    aggregate, cell_median, fallback_empty_cells, filter_spectrograms, initial_mask,
    relax_neighborhood, relax_sweep, CellMask, FilterOutput, MedianGrid,
};
pub use segment::{segment_timeline, Segment};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::{istft_samples, stft_samples, StftParams};
use crate::timeline::Timeline;

/// How the phase of an enhanced cell is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseMode {
    /// Complex mean of the surviving values.
    #[default]
    MaskedComplexAverage,
    /// Mean surviving magnitude, with the circular mean phase of all inputs.
    AllSignalMeanPhase,
}

impl std::str::FromStr for PhaseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "masked-complex-average" | "masked_complex_average" => Ok(Self::MaskedComplexAverage),
            "all-signal-mean-phase" | "all_signal_mean_phase" => Ok(Self::AllSignalMeanPhase),
            other => Err(Error::invalid(format!("unknown phase mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceConfig {
    /// Upper outlier multiplier of the median.
    pub lambda1: f64,
    /// Lower outlier multiplier of the median.
    pub lambda2: f64,
    /// Relaxed upper multiplier applied around removed cells.
    pub gamma: f64,
    pub stft: StftParams,
    pub phase_mode: PhaseMode,
    /// Crossfade length between adjacent segments, in samples.
    pub crossfade: usize,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        let stft = StftParams::default();
        Self {
            lambda1: 1.15,
            lambda2: 0.01,
            gamma: 1.1,
            stft,
            phase_mode: PhaseMode::default(),
            crossfade: stft.window_size,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 1.0) {
            return Err(Error::invalid(format!("lambda1 = {} must exceed 1", self.lambda1)));
        }
        if !(self.gamma > 1.0 && self.gamma <= self.lambda1) {
            return Err(Error::invalid(format!(
                "gamma = {} must lie in (1, lambda1 = {}]",
                self.gamma, self.lambda1
            )));
        }
        if !(0.0..1.0).contains(&self.lambda2) {
            return Err(Error::invalid(format!("lambda2 = {} must lie in [0, 1)", self.lambda2)));
        }
        self.stft.validate()
    }
}

/// Result of filtering one segment, with the intermediate masks.
#[derive(Debug, Clone)]
pub struct SegmentOutput {
    pub samples: Vec<f64>,
    /// Empty when the segment had a single member.
    pub masks: Vec<CellMask>,
}

/// Filters k sample-aligned, equal-length clips into one.
pub fn enhance_segment(clips: &[AudioClip], cfg: &EnhanceConfig) -> Result<AudioClip> {
    let first = clips
        .first()
        .ok_or_else(|| Error::invalid("at least one clip is required"))?;
    let inputs: Vec<&[f64]> = clips.iter().map(|c| c.samples()).collect();
    let out = enhance_segment_samples(&inputs, cfg)?;
    AudioClip::new(out.samples, first.sample_rate(), "enhanced")
}

pub fn enhance_segment_samples(inputs: &[&[f64]], cfg: &EnhanceConfig) -> Result<SegmentOutput> {
    cfg.validate()?;
    let len = inputs
        .first()
        .ok_or_else(|| Error::invalid("at least one clip is required"))?
        .len();
    if let Some(other) = inputs.iter().find(|x| x.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            found: other.len(),
        });
    }
    if inputs.len() == 1 || len == 0 {
        return Ok(SegmentOutput {
            samples: inputs[0].to_vec(),
            masks: Vec::new(),
        });
    }
    let grids = inputs
        .par_iter()
        .map(|x| stft_samples(x, cfg.stft))
        .collect::<Result<Vec<_>>>()?;
    let filtered = filter_spectrograms(&grids, cfg)?;
    let samples = istft_samples(&filtered.enhanced, cfg.stft, len)?;
    Ok(SegmentOutput {
        samples,
        masks: filtered.masks,
    })
}

/// Rendered extent of one segment: its own interval plus the crossfade
/// overlap borrowed from each neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Render {
    start: i64,
    end: i64,
    fade_in: usize,
    fade_out: usize,
}

fn plan_renders(timeline: &Timeline, segments: &[Segment], crossfade: usize) -> Vec<Render> {
    let entries = timeline.entries();
    // How far every member of a segment extends past each of its edges.
    let reach: Vec<(i64, i64)> = segments
        .iter()
        .map(|s| {
            let left = s
                .members
                .iter()
                .map(|&m| s.start_sample - entries[m].start_sample())
                .min()
                .unwrap();
            let right = s
                .members
                .iter()
                .map(|&m| entries[m].end_sample() - s.end_sample)
                .min()
                .unwrap();
            (left, right)
        })
        .collect();

    let mut renders: Vec<Render> = segments
        .iter()
        .map(|s| Render {
            start: s.start_sample,
            end: s.end_sample,
            fade_in: 0,
            fade_out: 0,
        })
        .collect();
    let xf = crossfade as i64;
    let half = xf / 2;
    for i in 0..segments.len().saturating_sub(1) {
        let (left, right) = (&segments[i], &segments[i + 1]);
        if left.end_sample != right.start_sample || xf == 0 {
            continue;
        }
        // back: how far the right segment reaches before the boundary; fwd: how far the left reaches past it.
        let max_back = reach[i + 1].0.min(left.len() as i64 / 2);
        let max_fwd = reach[i].1.min(right.len() as i64 / 2);
        let mut back = max_back.min(half);
        let mut fwd = max_fwd.min(half);
        if back < half {
            fwd = max_fwd.min(xf - back);
        }
        if fwd < half {
            back = max_back.min(xf - fwd);
        }
        let overlap = (back + fwd) as usize;
        renders[i].end += fwd;
        renders[i].fade_out = overlap;
        renders[i + 1].start -= back;
        renders[i + 1].fade_in = overlap;
    }
    renders
}

/// Enhances a whole timeline; the output spans from the earliest clip start
/// to the latest clip end, with silence across uncovered gaps.
pub fn enhance_timeline(timeline: &Timeline, cfg: &EnhanceConfig) -> Result<AudioClip> {
    enhance_timeline_detailed(timeline, cfg).map(|o| o.clip)
}

/// Timeline output together with the segments and their per-clip masks.
#[derive(Debug, Clone)]
pub struct TimelineOutput {
    pub clip: AudioClip,
    pub segments: Vec<Segment>,
    /// Masks of each segment in member order; empty for single-member segments.
    pub masks: Vec<Vec<CellMask>>,
}

pub fn enhance_timeline_detailed(timeline: &Timeline, cfg: &EnhanceConfig) -> Result<TimelineOutput> {
    cfg.validate()?;
    let rate = timeline.sample_rate();
    let (t0, t1) = timeline.span_samples();
    let scaled: Vec<AudioClip> = timeline
        .entries()
        .iter()
        .map(|e| e.clip.scaled(e.gain))
        .collect::<Result<_>>()?;
    let segments = segment_timeline(timeline);
    let renders = plan_renders(timeline, &segments, cfg.crossfade);

    let rendered: Vec<SegmentOutput> = segments
        .par_iter()
        .zip(&renders)
        .map(|(seg, r)| {
            let slices: Vec<Vec<f64>> = seg
                .members
                .iter()
                .map(|&m| {
                    let offset = timeline.entries()[m].start_sample();
                    scaled[m].slice_padded(r.start - offset, r.end - offset)
                })
                .collect();
            let views: Vec<&[f64]> = slices.iter().map(|s| s.as_slice()).collect();
            enhance_segment_samples(&views, cfg)
        })
        .collect::<Result<_>>()?;

    let mut out = vec![0.0; (t1 - t0) as usize];
    for (seg_out, r) in rendered.iter().zip(&renders) {
        let samples = &seg_out.samples;
        let len = samples.len();
        for (j, &v) in samples.iter().enumerate() {
            let w = if j < r.fade_in {
                (j as f64 + 0.5) / r.fade_in as f64
            } else if j + r.fade_out >= len {
                ((len - j) as f64 - 0.5) / r.fade_out as f64
            } else {
                1.0
            };
            out[(r.start - t0) as usize + j] += w * v;
        }
    }
    Ok(TimelineOutput {
        clip: AudioClip::new(out, rate, "enhanced")?,
        segments,
        masks: rendered.into_iter().map(|o| o.masks).collect(),
    })
}

//! Landmark fingerprinting: recovers each clip's offset and relative gain.

pub mod landmark;
pub mod peaks;

use rayon::prelude::*;

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::{stft, StftParams};
use crate::timeline::{ClipReport, Timeline, TimelineEntry};

pub use landmark::{estimate_gain, hash_peaks, match_offsets, pack_key, unpack_key, AlignmentResult, LandmarkHash};
pub use peaks::{detect_peaks, log_magnitudes, quantile, Peak};

/// Height above the 10th percentile of log-magnitudes a peak must clear, in nats.
pub const PEAK_MARGIN: f64 = std::f64::consts::LN_10;
/// Peaks more than this many nats below the loudest cell are ignored.
pub const PEAK_DYNAMIC_RANGE: f64 = 9.210_340_371_976_184; // ln(1e4)

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    pub stft: StftParams,
    /// Neighbourhood half-width in frames.
    pub nbhd_t: usize,
    /// Neighbourhood half-width in bins.
    pub nbhd_f: usize,
    /// Fixed peak threshold; `None` derives one per clip.
    pub min_log_mag: Option<f64>,
    pub fan_out: usize,
    /// Allowed frame gap between anchor and target, inclusive.
    pub target_zone: (usize, usize),
    pub min_matches: usize,
    /// Direct links to the anchor below this confidence are resolved through other clips.
    pub min_confidence: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            stft: StftParams::default(),
            nbhd_t: 15,
            nbhd_f: 15,
            min_log_mag: None,
            fan_out: 15,
            target_zone: (1, 200),
            min_matches: 10,
            min_confidence: 0.02,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.nbhd_t == 0 || self.nbhd_f == 0 {
            return Err(Error::invalid("peak neighbourhood must be at least one cell"));
        }
        if self.fan_out == 0 {
            return Err(Error::invalid("fan-out must be positive"));
        }
        if self.target_zone.0 > self.target_zone.1 {
            return Err(Error::invalid("target zone start exceeds its end"));
        }
        if self.min_matches == 0 {
            return Err(Error::invalid("min_matches must be positive"));
        }
        Ok(())
    }
}

/// Peak threshold derived from the clip's own log-magnitude distribution.
pub fn default_threshold(logs: &[f64]) -> f64 {
    let floor = quantile(logs, 0.1) + PEAK_MARGIN;
    let loudest = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    floor.max(loudest - PEAK_DYNAMIC_RANGE)
}

/// Peaks and hashes of one clip.
#[derive(Debug, Clone)]
pub struct Fingerprint {
    pub peaks: Vec<Peak>,
    pub hashes: Vec<LandmarkHash>,
}

pub fn fingerprint(clip: &AudioClip, cfg: &AlignConfig) -> Result<Fingerprint> {
    let spec = stft(clip, cfg.stft)?;
    let logs = log_magnitudes(&spec);
    let threshold = cfg.min_log_mag.unwrap_or_else(|| default_threshold(&logs));
    let peaks = peaks::detect_peaks_in(&logs, spec.frames(), spec.bins(), cfg.nbhd_t, cfg.nbhd_f, threshold);
    let hashes = hash_peaks(&peaks, cfg.fan_out, cfg.target_zone);
    Ok(Fingerprint { peaks, hashes })
}

/// Matches Y against X: the offset is where Y starts on X's timeline.
pub fn align_pair(x: &AudioClip, y: &AudioClip, cfg: &AlignConfig) -> Result<AlignmentResult> {
    cfg.validate()?;
    if x.sample_rate() != y.sample_rate() {
        return Err(Error::invalid("clips must share a sample rate"));
    }
    let fx = fingerprint(x, cfg)?;
    let fy = fingerprint(y, cfg)?;
    Ok(match_offsets(&fx.hashes, &fy.hashes, frame_seconds(cfg, x.sample_rate())))
}

fn frame_seconds(cfg: &AlignConfig, rate: u32) -> f64 {
    cfg.stft.hop as f64 / rate as f64
}

#[derive(Debug, Clone)]
pub struct Alignment {
    /// Every clip that could be placed, offsets relative to the anchor.
    pub timeline: Timeline,
    /// One line per input clip, in input order.
    pub reports: Vec<ClipReport>,
    /// Index of the anchor among the input clips.
    pub anchor: usize,
    /// Pairwise results; `pairs[i][j]` places clip j on clip i's timeline.
    pub pairs: Vec<Vec<Option<AlignmentResult>>>,
}

/// Places all clips on a common timeline anchored at the clip with the most matches.
pub fn align_all(clips: &[AudioClip], cfg: &AlignConfig) -> Result<Alignment> {
    cfg.validate()?;
    if clips.is_empty() {
        return Err(Error::invalid("nothing to align"));
    }
    let rate = clips[0].sample_rate();
    if clips.iter().any(|c| c.sample_rate() != rate) {
        return Err(Error::invalid("clips must share a sample rate"));
    }
    let k = clips.len();
    let prints: Vec<Fingerprint> = clips
        .par_iter()
        .map(|c| fingerprint(c, cfg))
        .collect::<Result<_>>()?;
    let fs = frame_seconds(cfg, rate);

    let upper: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let results: Vec<AlignmentResult> = upper
        .par_iter()
        .map(|&(i, j)| match_offsets(&prints[i].hashes, &prints[j].hashes, fs))
        .collect();
    let mut pairs: Vec<Vec<Option<AlignmentResult>>> = vec![vec![None; k]; k];
    for (&(i, j), r) in upper.iter().zip(results) {
        pairs[j][i] = Some(r.reversed());
        pairs[i][j] = Some(r);
    }

    if k == 1 {
        let timeline = Timeline::pre_aligned(clips.to_vec())?;
        let reports = vec![ClipReport {
            label: clips[0].label().to_string(),
            offset_seconds: 0.0,
            gain: 1.0,
            match_count: 0,
            excluded: false,
        }];
        return Ok(Alignment {
            timeline,
            reports,
            anchor: 0,
            pairs,
        });
    }

    let count = |i: usize, j: usize| pairs[i][j].as_ref().map_or(0, |r| r.match_count);
    let accepted = |i: usize, j: usize| i != j && count(i, j) >= cfg.min_matches;
    if !(0..k).any(|i| (0..k).any(|j| accepted(i, j))) {
        return Err(Error::NoCommonContent);
    }

    let totals: Vec<usize> = (0..k).map(|i| (0..k).filter(|&j| j != i).map(|j| count(i, j)).sum()).collect();
    let anchor = (0..k).max_by(|&a, &b| totals[a].cmp(&totals[b]).then(b.cmp(&a))).unwrap();

    // Widest path from the anchor: maximize the weakest link along the chain.
    let mut width = vec![0usize; k];
    let mut parent = vec![usize::MAX; k];
    let mut done = vec![false; k];
    width[anchor] = usize::MAX;
    loop {
        let next = (0..k).filter(|&v| !done[v] && width[v] > 0).max_by(|&a, &b| width[a].cmp(&width[b]).then(b.cmp(&a)));
        let Some(u) = next else { break };
        done[u] = true;
        for v in 0..k {
            if !done[v] && accepted(u, v) {
                let w = width[u].min(count(u, v));
                if w > width[v] {
                    width[v] = w;
                    parent[v] = u;
                }
            }
        }
    }
    for v in 0..k {
        let direct = pairs[anchor][v].as_ref();
        if v != anchor && accepted(anchor, v) && direct.is_some_and(|r| r.confidence >= cfg.min_confidence) {
            parent[v] = anchor;
            width[v] = count(anchor, v);
        }
    }

    // Resolve placements in order of distance from the anchor.
    let mut placed: Vec<Option<(f64, f64)>> = vec![None; k];
    placed[anchor] = Some((0.0, 1.0));
    fn resolve(
        v: usize,
        parent: &[usize],
        pairs: &[Vec<Option<AlignmentResult>>],
        placed: &mut [Option<(f64, f64)>],
    ) -> Result<Option<(f64, f64)>> {
        if let Some(p) = placed[v] {
            return Ok(Some(p));
        }
        let u = parent[v];
        if u == usize::MAX {
            return Ok(None);
        }
        let Some((offset_u, gain_u)) = resolve(u, parent, pairs, placed)? else {
            return Ok(None);
        };
        let link = pairs[u][v].as_ref().ok_or_else(|| Error::Internal("missing pairwise result".into()))?;
        let alpha = estimate_gain(&link.matched_pairs)?;
        let p = (offset_u + link.offset_seconds, gain_u * alpha);
        placed[v] = Some(p);
        Ok(Some(p))
    }

    let mut entries = Vec::new();
    let mut reports = Vec::with_capacity(k);
    let mut anchor_entry = 0;
    for v in 0..k {
        let placement = resolve(v, &parent, &pairs, &mut placed)?;
        let label = clips[v].label().to_string();
        match placement {
            Some((offset_seconds, gain)) => {
                if v == anchor {
                    anchor_entry = entries.len();
                }
                entries.push(TimelineEntry {
                    clip: clips[v].clone(),
                    offset_seconds,
                    gain,
                });
                reports.push(ClipReport {
                    label,
                    offset_seconds,
                    gain,
                    match_count: if v == anchor { totals[v] } else { width[v] },
                    excluded: false,
                });
            }
            None => reports.push(ClipReport {
                label,
                offset_seconds: 0.0,
                gain: 1.0,
                match_count: (0..k).filter(|&j| j != v).map(|j| count(v, j)).max().unwrap_or(0),
                excluded: true,
            }),
        }
    }
    Ok(Alignment {
        timeline: Timeline::new(entries, anchor_entry)?,
        reports,
        anchor,
        pairs,
    })
}

//! Clips placed on a shared timeline with their recovered gains.

use serde::Serialize;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEntry {
    pub clip: AudioClip,
    /// Start of the clip on the shared timeline.
    pub offset_seconds: f64,
    /// Multiplier bringing the clip to the anchor's level.
    pub gain: f64,
}

impl TimelineEntry {
    pub fn start_sample(&self) -> i64 {
        (self.offset_seconds * self.clip.sample_rate() as f64).round() as i64
    }

    pub fn end_sample(&self) -> i64 {
        self.start_sample() + self.clip.len() as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    entries: Vec<TimelineEntry>,
    anchor_index: usize,
}

impl Timeline {
    pub fn new(entries: Vec<TimelineEntry>, anchor_index: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("a timeline needs at least one clip"));
        }
        if anchor_index >= entries.len() {
            return Err(Error::invalid("anchor index out of range"));
        }
        let rate = entries[0].clip.sample_rate();
        for e in &entries {
            if e.clip.sample_rate() != rate {
                return Err(Error::invalid(format!(
                    "clip `{}` is at {} Hz, expected {rate} Hz",
                    e.clip.label(),
                    e.clip.sample_rate()
                )));
            }
            if !(e.gain > 0.0 && e.gain.is_finite()) {
                return Err(Error::invalid(format!("gain {} must be positive", e.gain)));
            }
            if !e.offset_seconds.is_finite() {
                return Err(Error::invalid("offsets must be finite"));
            }
        }
        Ok(Self {
            entries,
            anchor_index,
        })
    }

    /// Clips that are already sample-aligned, all starting at zero with unit gain.
    pub fn pre_aligned(clips: Vec<AudioClip>) -> Result<Self> {
        let entries = clips
            .into_iter()
            .map(|clip| TimelineEntry {
                clip,
                offset_seconds: 0.0,
                gain: 1.0,
            })
            .collect();
        Self::new(entries, 0)
    }

    pub fn entries(&self) -> &[TimelineEntry] {
        &self.entries
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    pub fn sample_rate(&self) -> u32 {
        self.entries[0].clip.sample_rate()
    }

    /// `[first start, last end)` in samples.
    pub fn span_samples(&self) -> (i64, i64) {
        let start = self.entries.iter().map(|e| e.start_sample()).min().unwrap();
        let end = self.entries.iter().map(|e| e.end_sample()).max().unwrap();
        (start, end)
    }
}

/// Per-clip line of the alignment report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipReport {
    pub label: String,
    pub offset_seconds: f64,
    pub gain: f64,
    pub match_count: usize,
    pub excluded: bool,
}

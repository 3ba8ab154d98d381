use std::collections::HashMap;

use super::peaks::Peak;
use crate::error::{Error, Result};

const FIELD_BITS: u32 = 21;
const FIELD_MASK: u64 = (1 << FIELD_BITS) - 1;

/// A (anchor, target) peak pair keyed by both frequencies and their time gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkHash {
    pub key: u64,
    pub anchor_frame: usize,
    pub anchor_log_mag: f64,
    pub target_log_mag: f64,
}

/// Packs `(f1, f2, dt)` into one key, 21 bits each.
pub fn pack_key(f1: usize, f2: usize, dt: usize) -> u64 {
    ((f1 as u64 & FIELD_MASK) << (2 * FIELD_BITS)) | ((f2 as u64 & FIELD_MASK) << FIELD_BITS) | (dt as u64 & FIELD_MASK)
}

pub fn unpack_key(key: u64) -> (usize, usize, usize) {
    (
        ((key >> (2 * FIELD_BITS)) & FIELD_MASK) as usize,
        ((key >> FIELD_BITS) & FIELD_MASK) as usize,
        (key & FIELD_MASK) as usize,
    )
}

/// Pairs every peak with up to `fan_out` later peaks whose frame gap lies in
/// `zone.0..=zone.1`, nearest first.
pub fn hash_peaks(peaks: &[Peak], fan_out: usize, zone: (usize, usize)) -> Vec<LandmarkHash> {
    let mut sorted = peaks.to_vec();
    sorted.sort_by(|a, b| a.frame.cmp(&b.frame).then(a.bin.cmp(&b.bin)));
    let mut out = Vec::with_capacity(sorted.len() * fan_out);
    for (i, anchor) in sorted.iter().enumerate() {
        let mut taken = 0;
        for target in &sorted[i + 1..] {
            if taken == fan_out {
                break;
            }
            let dt = target.frame - anchor.frame;
            if dt < zone.0 {
                continue;
            }
            if dt > zone.1 {
                break;
            }
            out.push(LandmarkHash {
                key: pack_key(anchor.bin, target.bin, dt),
                anchor_frame: anchor.frame,
                anchor_log_mag: anchor.log_mag,
                target_log_mag: target.log_mag,
            });
            taken += 1;
        }
    }
    out
}

/// Result of matching clip Y against clip X.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Start of Y on X's frame axis.
    pub offset_frames: i64,
    pub offset_seconds: f64,
    pub match_count: usize,
    /// Linear anchor magnitudes `(|P^X|, |P^Y|)` of the matches at the winning offset.
    pub matched_pairs: Vec<(f64, f64)>,
    /// `match_count` over the smaller of the two hash counts.
    pub confidence: f64,
}

impl AlignmentResult {
    /// The same alignment seen from the other clip.
    pub fn reversed(&self) -> Self {
        Self {
            offset_frames: -self.offset_frames,
            offset_seconds: -self.offset_seconds,
            match_count: self.match_count,
            matched_pairs: self.matched_pairs.iter().map(|&(x, y)| (y, x)).collect(),
            confidence: self.confidence,
        }
    }
}

/// Votes over `anchor_x - anchor_y` for every pair of equal keys. Ties in the
/// vote go to the smaller magnitude, then to the offset whose matched frame
/// pairs sort first when each pair is ordered; both rules ignore which clip
/// is X, so swapping the clips negates the result.
pub fn match_offsets(x: &[LandmarkHash], y: &[LandmarkHash], frame_seconds: f64) -> AlignmentResult {
    let mut index: HashMap<u64, Vec<usize>> = HashMap::with_capacity(y.len());
    for (j, h) in y.iter().enumerate() {
        index.entry(h.key).or_default().push(j);
    }
    let mut votes: HashMap<i64, usize> = HashMap::new();
    for h in x {
        if let Some(js) = index.get(&h.key) {
            for &j in js {
                *votes.entry(h.anchor_frame as i64 - y[j].anchor_frame as i64).or_default() += 1;
            }
        }
    }
    let Some(top) = votes.values().copied().max() else {
        return AlignmentResult {
            offset_frames: 0,
            offset_seconds: 0.0,
            match_count: 0,
            matched_pairs: Vec::new(),
            confidence: 0.0,
        };
    };
    let nearest = votes.iter().filter(|(_, &c)| c == top).map(|(o, _)| o.abs()).min().unwrap();
    let mut tied: Vec<i64> = votes
        .iter()
        .filter(|(o, &c)| c == top && o.abs() == nearest)
        .map(|(&o, _)| o)
        .collect();
    tied.sort_unstable();
    let offset = if tied.len() == 1 {
        tied[0]
    } else {
        let frames_at = |offset: i64| {
            let mut v: Vec<(usize, usize)> = Vec::new();
            for h in x {
                for &j in index.get(&h.key).map_or(&[][..], |js| js.as_slice()) {
                    let (a, b) = (h.anchor_frame, y[j].anchor_frame);
                    if a as i64 - b as i64 == offset {
                        v.push((a.min(b), a.max(b)));
                    }
                }
            }
            v.sort_unstable();
            v
        };
        let (a, b) = (frames_at(tied[0]), frames_at(tied[1]));
        // equal sets leave no choice that ignores clip order
        if b < a { tied[1] } else { tied[0] }
    };
    let count = top;
    let mut pairs = Vec::with_capacity(count);
    for h in x {
        if let Some(js) = index.get(&h.key) {
            for &j in js {
                if h.anchor_frame as i64 - y[j].anchor_frame as i64 == offset {
                    pairs.push((h.anchor_log_mag.exp(), y[j].anchor_log_mag.exp()));
                }
            }
        }
    }
    let denom = x.len().min(y.len()).max(1);
    AlignmentResult {
        offset_frames: offset,
        offset_seconds: offset as f64 * frame_seconds,
        match_count: count,
        matched_pairs: pairs,
        confidence: count as f64 / denom as f64,
    }
}

/// Relative gain `sum |P^X| / sum |P^Y|`: the factor that brings Y to X's level.
pub fn estimate_gain(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Degenerate("no matched peaks to estimate gain from".into()));
    }
    let (sx, sy) = pairs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    if sy <= 0.0 || !sy.is_finite() || !sx.is_finite() {
        return Err(Error::Degenerate("matched peak magnitudes sum to zero".into()));
    }
    Ok(sx / sy)
}

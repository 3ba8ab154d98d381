use serde::Serialize;

use crate::timeline::Timeline;

/// A maximal run of the timeline covered by a constant set of clips.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start_sample: i64,
    pub end_sample: i64,
    pub sample_rate: u32,
    /// Indices into the timeline entries, ascending.
    pub members: Vec<usize>,
}

impl Segment {
    pub fn start(&self) -> f64 {
        self.start_sample as f64 / self.sample_rate as f64
    }

    pub fn end(&self) -> f64 {
        self.end_sample as f64 / self.sample_rate as f64
    }

    pub fn len(&self) -> usize {
        (self.end_sample - self.start_sample) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }
}

/// Sweeps all clip boundaries and returns the covered intervals in order.
/// Stretches covered by no clip produce no segment.
pub fn segment_timeline(timeline: &Timeline) -> Vec<Segment> {
    let spans: Vec<(i64, i64)> = timeline
        .entries()
        .iter()
        .map(|e| (e.start_sample(), e.end_sample()))
        .collect();
    let mut bounds: Vec<i64> = spans.iter().flat_map(|&(s, e)| [s, e]).collect();
    bounds.sort_unstable();
    bounds.dedup();
    bounds
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0], w[1]);
            let members: Vec<usize> = spans
                .iter()
                .enumerate()
                .filter(|(_, &(s, e))| s <= a && e >= b && e > s)
                .map(|(i, _)| i)
                .collect();
            (!members.is_empty()).then(|| Segment {
                start_sample: a,
                end_sample: b,
                sample_rate: timeline.sample_rate(),
                members,
            })
        })
        .collect()
}

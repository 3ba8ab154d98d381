use std::collections::VecDeque;

use crate::spectral::Spectrogram;

/// A strict local maximum of the log-magnitude spectrogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub frame: usize,
    pub bin: usize,
    pub log_mag: f64,
}

/// Natural log of each cell magnitude; zero magnitudes map to `ln(f64::MIN_POSITIVE)`.
pub fn log_magnitudes(spec: &Spectrogram) -> Vec<f64> {
    spec.cells()
        .iter()
        .map(|c| c.norm().max(f64::MIN_POSITIVE).ln())
        .collect()
}

/// Sliding-window maximum over `radius` on either side, edges clipped.
fn sliding_max(values: &[f64], radius: usize, out: &mut Vec<f64>) {
    out.clear();
    let n = values.len();
    let mut window: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..n {
        let hi = (i + radius).min(n - 1);
        while next <= hi {
            while window.back().is_some_and(|&b| values[b] <= values[next]) {
                window.pop_back();
            }
            window.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(radius);
        while window.front().is_some_and(|&f| f < lo) {
            window.pop_front();
        }
        out.push(values[*window.front().unwrap()]);
    }
}

/// Cells that are strict maxima over their `(2 nbhd_t + 1) x (2 nbhd_f + 1)`
/// neighbourhood and exceed `min_log_mag`, in (frame, bin) order.
pub fn detect_peaks(spec: &Spectrogram, nbhd_t: usize, nbhd_f: usize, min_log_mag: f64) -> Vec<Peak> {
    let logs = log_magnitudes(spec);
    detect_peaks_in(&logs, spec.frames(), spec.bins(), nbhd_t, nbhd_f, min_log_mag)
}

pub fn detect_peaks_in(
    logs: &[f64],
    frames: usize,
    bins: usize,
    nbhd_t: usize,
    nbhd_f: usize,
    min_log_mag: f64,
) -> Vec<Peak> {
    if frames == 0 || bins == 0 {
        return Vec::new();
    }
    let nbhd_t = nbhd_t.max(1);
    let nbhd_f = nbhd_f.max(1);
    // Separable max filter: along bins, then along frames.
    let mut along_f = vec![0.0; frames * bins];
    let mut buf = Vec::with_capacity(bins.max(frames));
    for t in 0..frames {
        sliding_max(&logs[t * bins..(t + 1) * bins], nbhd_f, &mut buf);
        along_f[t * bins..(t + 1) * bins].copy_from_slice(&buf);
    }
    let mut column = vec![0.0; frames];
    let mut local_max = vec![0.0; frames * bins];
    for f in 0..bins {
        for t in 0..frames {
            column[t] = along_f[t * bins + f];
        }
        sliding_max(&column, nbhd_t, &mut buf);
        for t in 0..frames {
            local_max[t * bins + f] = buf[t];
        }
    }

    let mut peaks = Vec::new();
    for t in 0..frames {
        for f in 0..bins {
            let v = logs[t * bins + f];
            if v <= min_log_mag || v < local_max[t * bins + f] {
                continue;
            }
            // v equals the neighbourhood maximum; it is a peak only if unique.
            let unique = (t.saturating_sub(nbhd_t)..=(t + nbhd_t).min(frames - 1)).all(|s| {
                (f.saturating_sub(nbhd_f)..=(f + nbhd_f).min(bins - 1))
                    .all(|g| (s == t && g == f) || logs[s * bins + g] < v)
            });
            if unique {
                peaks.push(Peak {
                    frame: t,
                    bin: f,
                    log_mag: v,
                });
            }
        }
    }
    peaks
}

/// `q`-quantile (0..=1) of a set of values, by nearest rank.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NEG_INFINITY;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((sorted.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    sorted[idx]
}

//! Per-cell outlier filtering over k time-aligned spectrograms.
//!
//! Every TF cell is compared against the median magnitude of the k inputs
//! at that cell. Values far above or below the median are masked out, the
//! mask is grown into neighbouring cells that exceed a relaxed upper
//! threshold, and cells left with no survivor fall back to the upper test
//! alone. The surviving values are averaged into the output grid.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{EnhanceConfig, PhaseMode};
use crate::error::{Error, Result};
use crate::spectral::Spectrogram;

/// Median of a set of magnitudes; even counts average the two middle values.
///
/// Panics on an empty slice.
pub fn cell_median(mags: &[f64]) -> f64 {
    assert!(!mags.is_empty(), "median of an empty set");
    let mut sorted = mags.to_vec();
    sorted.sort_by(f64::total_cmp);
    median_of_sorted(&sorted)
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        (sorted[k / 2 - 1] + sorted[k / 2]) / 2.0
    }
}

/// Per-cell median of the input magnitudes, `C(t, f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MedianGrid {
    frames: usize,
    bins: usize,
    values: Vec<f64>,
}

impl MedianGrid {
    pub fn from_magnitudes(mags: &[Vec<f64>], frames: usize, bins: usize) -> Result<Self> {
        check_shapes(mags, frames, bins)?;
        let k = mags.len();
        let values = (0..frames * bins)
            .into_par_iter()
            .map_init(
                || Vec::with_capacity(k),
                |scratch, cell| {
                    scratch.clear();
                    scratch.extend(mags.iter().map(|m| m[cell]));
                    scratch.sort_by(f64::total_cmp);
                    median_of_sorted(scratch)
                },
            )
            .collect();
        Ok(Self {
            frames,
            bins,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.bins + bin]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }
}

fn check_shapes(mags: &[Vec<f64>], frames: usize, bins: usize) -> Result<()> {
    if mags.is_empty() {
        return Err(Error::invalid("at least one input grid is required"));
    }
    for m in mags {
        if m.len() != frames * bins {
            return Err(Error::invalid(format!(
                "grid of {} cells does not match {frames}x{bins}",
                m.len()
            )));
        }
    }
    Ok(())
}

/// Binary keep/remove grid for one input; `true` keeps the cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    frames: usize,
    bins: usize,
    bits: Vec<bool>,
}

impl CellMask {
    pub fn ones(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            bits: vec![true; frames * bins],
        }
    }

    pub fn from_bits(frames: usize, bins: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != frames * bins {
            return Err(Error::invalid("mask size does not match its shape"));
        }
        Ok(Self { frames, bins, bits })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, frame: usize, bin: usize) -> bool {
        self.bits[frame * self.bins + bin]
    }

    pub fn kept(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Writes a binary PGM image: one column per frame, low frequencies at
    /// the bottom, 255 for kept cells and 0 for removed ones.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.frames, self.bins)?;
        let mut row = vec![0u8; self.frames];
        for f in (0..self.bins).rev() {
            for (t, px) in row.iter_mut().enumerate() {
                *px = if self.get(t, f) { 255 } else { 0 };
            }
            out.write_all(&row)?;
        }
        Ok(())
    }
}

/// Clears every cell whose magnitude is strictly above `lambda1 * C` or
/// strictly below `lambda2 * C`.
pub fn initial_mask(mags: &[f64], median: &MedianGrid, lambda1: f64, lambda2: f64) -> CellMask {
    let bits = mags
        .iter()
        .zip(&median.values)
        .map(|(&m, &c)| !(m > lambda1 * c || m < lambda2 * c))
        .collect();
    CellMask {
        frames: median.frames,
        bins: median.bins,
        bits,
    }
}

fn neighbours(idx: usize, frames: usize, bins: usize) -> impl Iterator<Item = usize> {
    let t = idx / bins;
    let f = idx % bins;
    let ts = t.saturating_sub(1)..=(t + 1).min(frames - 1);
    ts.flat_map(move |s| {
        let gs = f.saturating_sub(1)..=(f + 1).min(bins - 1);
        gs.map(move |g| s * bins + g)
    })
}

/// Grows the cleared region to its fixpoint: any cell adjacent (8-connected)
/// to a cleared cell whose magnitude exceeds `gamma * C` is cleared too.
///
/// Equivalent to repeating [`relax_sweep`] until nothing changes, computed
/// as a flood fill seeded by every initially cleared cell.
pub fn relax_neighborhood(mask: &mut CellMask, mags: &[f64], median: &MedianGrid, gamma: f64) {
    let (frames, bins) = (mask.frames, mask.bins);
    let mut stack: Vec<usize> = (0..mask.bits.len()).filter(|&i| !mask.bits[i]).collect();
    while let Some(idx) = stack.pop() {
        for j in neighbours(idx, frames, bins) {
            if mask.bits[j] && mags[j] > gamma * median.values[j] {
                mask.bits[j] = false;
                stack.push(j);
            }
        }
    }
}

/// One in-place pass over the grid in (frame, bin) order, clearing the
/// qualifying neighbours of each cleared cell. Returns the number of bits
/// cleared; zero means the fixpoint has been reached.
pub fn relax_sweep(mask: &mut CellMask, mags: &[f64], median: &MedianGrid, gamma: f64) -> usize {
    let (frames, bins) = (mask.frames, mask.bins);
    let mut cleared = 0;
    for idx in 0..mask.bits.len() {
        if mask.bits[idx] {
            continue;
        }
        for j in neighbours(idx, frames, bins) {
            if mask.bits[j] && mags[j] > gamma * median.values[j] {
                mask.bits[j] = false;
                cleared += 1;
            }
        }
    }
    cleared
}

/// For cells where every input was cleared, recomputes the bits with the
/// `lambda1` upper test only. Returns the number of cells that fell back.
pub fn fallback_empty_cells(
    masks: &mut [CellMask],
    mags: &[Vec<f64>],
    median: &MedianGrid,
    lambda1: f64,
) -> usize {
    let cells = median.values.len();
    let mut fell_back = 0;
    for cell in 0..cells {
        if masks.iter().all(|m| !m.bits[cell]) {
            fell_back += 1;
            let limit = lambda1 * median.values[cell];
            for (mask, m) in masks.iter_mut().zip(mags) {
                mask.bits[cell] = !(m[cell] > limit);
            }
        }
    }
    fell_back
}

/// Averages surviving values per cell into one grid.
pub fn aggregate(inputs: &[Spectrogram], masks: &[CellMask], phase_mode: PhaseMode) -> Result<Spectrogram> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::invalid("at least one input grid is required"))?;
    let (frames, bins) = first.shape();
    if masks.len() != inputs.len() {
        return Err(Error::invalid("one mask per input is required"));
    }
    let k = inputs.len();
    let mut cells = vec![Complex64::new(0.0, 0.0); frames * bins];
    for (cell, out) in cells.iter_mut().enumerate() {
        let mut count = 0usize;
        match phase_mode {
            PhaseMode::MaskedComplexAverage => {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..k {
                    if masks[i].bits[cell] {
                        acc += inputs[i].cells()[cell];
                        count += 1;
                    }
                }
                if count == 0 {
                    return Err(zero_survivors(cell, bins));
                }
                *out = acc / count as f64;
            }
            PhaseMode::AllSignalMeanPhase => {
                let mut mag = 0.0;
                let mut direction = Complex64::new(0.0, 0.0);
                for i in 0..k {
                    let y = inputs[i].cells()[cell];
                    let r = y.norm();
                    if masks[i].bits[cell] {
                        mag += r;
                        count += 1;
                    }
                    if r > 0.0 {
                        direction += y / r;
                    }
                }
                if count == 0 {
                    return Err(zero_survivors(cell, bins));
                }
                let mag = mag / count as f64;
                let norm = direction.norm();
                *out = if norm > 0.0 {
                    direction * (mag / norm)
                } else {
                    Complex64::new(mag, 0.0)
                };
            }
        }
    }
    Spectrogram::from_cells(frames, bins, cells, first.params())
}

fn zero_survivors(cell: usize, bins: usize) -> Error {
    Error::Internal(format!(
        "cell (frame {}, bin {}) has no surviving input",
        cell / bins,
        cell % bins
    ))
}

/// Everything the filter produced for one segment.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub enhanced: Spectrogram,
    pub masks: Vec<CellMask>,
    pub median: MedianGrid,
    /// Cells where the upper-threshold fallback was applied.
    pub fallback_cells: usize,
}

/// Runs median, initial thresholds, relaxation, fallback and aggregation
/// over k grids of identical shape.
pub fn filter_spectrograms(inputs: &[Spectrogram], cfg: &EnhanceConfig) -> Result<FilterOutput> {
    cfg.validate()?;
    let first = inputs
        .first()
        .ok_or_else(|| Error::invalid("at least one input grid is required"))?;
    let (frames, bins) = first.shape();
    if let Some(other) = inputs.iter().find(|s| s.shape() != (frames, bins)) {
        return Err(Error::invalid(format!(
            "grid shapes differ: {:?} vs {:?}",
            first.shape(),
            other.shape()
        )));
    }
    let mags: Vec<Vec<f64>> = inputs.par_iter().map(|s| s.magnitudes()).collect();
    let median = MedianGrid::from_magnitudes(&mags, frames, bins)?;
    let mut masks: Vec<CellMask> = mags
        .par_iter()
        .map(|m| {
            let mut mask = initial_mask(m, &median, cfg.lambda1, cfg.lambda2);
            relax_neighborhood(&mut mask, m, &median, cfg.gamma);
            mask
        })
        .collect();
    let fallback_cells = fallback_empty_cells(&mut masks, &mags, &median, cfg.lambda1);
    let enhanced = aggregate(inputs, &masks, cfg.phase_mode)?;
    Ok(FilterOutput {
        enhanced,
        masks,
        median,
        fallback_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::StftParams;

    fn grid_1x1(values: &[f64]) -> (Vec<Vec<f64>>, MedianGrid) {
        let mags: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let median = MedianGrid::from_magnitudes(&mags, 1, 1).unwrap();
        (mags, median)
    }

    fn params() -> StftParams {
        StftParams::default()
    }

    #[test]
    fn median_examples() {
        assert_eq!(cell_median(&[2.0, 3.0, 5.0, 7.0, 100.0]), 5.0);
        assert_eq!(cell_median(&[100.0, 7.0, 2.0, 5.0, 3.0]), 5.0);
        assert_eq!(cell_median(&[1.0, 3.0]), 2.0);
        assert_eq!(cell_median(&[4.0]), 4.0);
    }

    #[test]
    fn initial_mask_examples() {
        let (mags, c) = grid_1x1(&[2.0, 3.0, 5.0, 7.0, 100.0]);
        let bits: Vec<bool> = mags.iter().map(|m| initial_mask(m, &c, 1.15, 0.01).bits[0]).collect();
        assert_eq!(bits, [true, true, true, false, false]);

        let (mags, c) = grid_1x1(&[3.0; 4]);
        assert!(mags.iter().all(|m| initial_mask(m, &c, 1.15, 0.01).bits[0]));

        let (mags, c) = grid_1x1(&[0.0001, 4.0, 4.0, 4.0, 4.0]);
        let bits: Vec<bool> = mags.iter().map(|m| initial_mask(m, &c, 1.15, 0.01).bits[0]).collect();
        assert_eq!(bits, [false, true, true, true, true]);
    }

    #[test]
    fn boundary_values_survive() {
        let (mags, c) = grid_1x1(&[1.0, 1.0, 1.15]);
        assert!(initial_mask(&mags[2], &c, 1.15, 0.01).bits[0]);
        let (mags, c) = grid_1x1(&[0.01, 1.0, 1.0]);
        assert!(initial_mask(&mags[0], &c, 1.15, 0.01).bits[0]);
    }

    #[test]
    fn zero_median_clears_positive_values() {
        let (mags, c) = grid_1x1(&[0.0, 0.0, 0.3]);
        let bits: Vec<bool> = mags.iter().map(|m| initial_mask(m, &c, 1.15, 0.01).bits[0]).collect();
        assert_eq!(bits, [true, true, false]);
    }

    fn line_grid(frames: usize, bins: usize, fill: f64) -> (Vec<f64>, MedianGrid) {
        let mags = vec![fill; frames * bins];
        let median = MedianGrid {
            frames,
            bins,
            values: vec![1.0; frames * bins],
        };
        (mags, median)
    }

    #[test]
    fn isolated_cleared_cell_is_a_fixpoint() {
        let (mags, median) = line_grid(5, 5, 1.05);
        let mut mask = CellMask::ones(5, 5);
        mask.bits[12] = false;
        let before = mask.clone();
        relax_neighborhood(&mut mask, &mags, &median, 1.1);
        assert_eq!(mask, before);
        assert_eq!(relax_sweep(&mut mask, &mags, &median, 1.1), 0);
    }

    #[test]
    fn chain_above_relaxed_threshold_is_cleared() {
        let (frames, bins) = (1, 12);
        let (mut mags, median) = line_grid(frames, bins, 1.0);
        // [seed, 1.12 x 8, 1.0 x 3]: the run propagates, the tail does not.
        mags[0] = 2.0;
        for m in &mut mags[1..9] {
            *m = 1.12;
        }
        let mut mask = initial_mask(&mags, &median, 1.15, 0.01);
        assert_eq!(mask.kept(), bins - 1);
        let mut oracle = mask.clone();
        relax_neighborhood(&mut mask, &mags, &median, 1.1);
        while relax_sweep(&mut oracle, &mags, &median, 1.1) > 0 {}
        assert_eq!(mask, oracle);
        assert_eq!(&mask.bits[..9], &[false; 9]);
        assert_eq!(&mask.bits[9..], &[true; 3]);
    }

    #[test]
    fn lower_outliers_seed_relaxation() {
        let (mut mags, median) = line_grid(3, 3, 1.0);
        mags[4] = 0.001;
        mags[0] = 1.12;
        mags[8] = 1.09;
        let mut mask = initial_mask(&mags, &median, 1.15, 0.01);
        relax_neighborhood(&mut mask, &mags, &median, 1.1);
        let cleared: Vec<usize> = (0..9).filter(|&i| !mask.bits[i]).collect();
        assert_eq!(cleared, vec![0, 4]);
    }

    #[test]
    fn all_kept_mask_is_unchanged_by_relaxation() {
        let (mags, median) = line_grid(4, 4, 1.14);
        let mut mask = CellMask::ones(4, 4);
        relax_neighborhood(&mut mask, &mags, &median, 1.1);
        assert_eq!(mask.kept(), 16);
    }

    #[test]
    fn fallback_keeps_values_under_upper_threshold() {
        let (mags, c) = grid_1x1(&[0.01, 100.0]);
        assert_eq!(c.values[0], 50.005);
        let mut masks: Vec<CellMask> = mags.iter().map(|m| initial_mask(m, &c, 1.15, 0.01)).collect();
        assert!(masks.iter().all(|m| !m.bits[0]));
        assert_eq!(fallback_empty_cells(&mut masks, &mags, &c, 1.15), 1);
        assert_eq!((masks[0].bits[0], masks[1].bits[0]), (true, false));
    }

    #[test]
    fn fallback_leaves_populated_cells_alone() {
        let (mags, c) = grid_1x1(&[1.0, 1.0, 1.0, 1.0, 9.0]);
        let mut masks: Vec<CellMask> = mags.iter().map(|m| initial_mask(m, &c, 1.15, 0.01)).collect();
        let before = masks.clone();
        assert_eq!(fallback_empty_cells(&mut masks, &mags, &c, 1.15), 0);
        assert_eq!(masks, before);
    }

    fn complex_inputs(values: &[Complex64]) -> Vec<Spectrogram> {
        values
            .iter()
            .map(|&v| Spectrogram::from_cells(1, 1, vec![v], params()).unwrap())
            .collect()
    }

    #[test]
    fn aggregate_complex_mean_of_survivors() {
        let inputs = complex_inputs(&[
            Complex64::new(1.0, 0.0),
            Complex64::new(3.0, 0.0),
            Complex64::new(100.0, 0.0),
        ]);
        let masks: Vec<CellMask> = [true, true, false]
            .iter()
            .map(|&b| CellMask::from_bits(1, 1, vec![b]).unwrap())
            .collect();
        let out = aggregate(&inputs, &masks, PhaseMode::MaskedComplexAverage).unwrap();
        assert_eq!(out.get(0, 0), Complex64::new(2.0, 0.0));
    }

    #[test]
    fn aggregate_identical_survivors() {
        let v = Complex64::new(0.3, -1.7);
        let inputs = complex_inputs(&[v, v, v, v]);
        let masks = vec![CellMask::ones(1, 1); 4];
        for mode in [PhaseMode::MaskedComplexAverage, PhaseMode::AllSignalMeanPhase] {
            let out = aggregate(&inputs, &masks, mode).unwrap();
            assert!((out.get(0, 0) - v).norm() < 1e-15);
        }
    }

    #[test]
    fn mean_phase_mode_uses_all_inputs_for_direction() {
        let inputs = complex_inputs(&[
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 4.0),
            Complex64::new(0.0, 0.0),
        ]);
        let masks: Vec<CellMask> = [true, false, true]
            .iter()
            .map(|&b| CellMask::from_bits(1, 1, vec![b]).unwrap())
            .collect();
        let out = aggregate(&inputs, &masks, PhaseMode::AllSignalMeanPhase).unwrap();
        // magnitude (2 + 0) / 2, direction along (1 + i)
        let expected = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        assert!((out.get(0, 0) - expected).norm() < 1e-15);
    }

    #[test]
    fn aggregate_reports_empty_cells() {
        let inputs = complex_inputs(&[Complex64::new(1.0, 0.0)]);
        let masks = vec![CellMask::from_bits(1, 1, vec![false]).unwrap()];
        assert!(matches!(
            aggregate(&inputs, &masks, PhaseMode::MaskedComplexAverage),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn pgm_layout() {
        let mask = CellMask::from_bits(2, 3, vec![true, false, true, false, false, true]).unwrap();
        let mut buf = Vec::new();
        mask.write_pgm(&mut buf).unwrap();
        let header = b"P5\n2 3\n255\n";
        assert_eq!(&buf[..header.len()], header);
        // rows from top (highest bin) down: bin2, bin1, bin0
        assert_eq!(&buf[header.len()..], &[255, 255, 0, 0, 255, 0]);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = Spectrogram::zeros(2, 3, params());
        let b = Spectrogram::zeros(3, 3, params());
        assert!(filter_spectrograms(&[a, b], &EnhanceConfig::default()).is_err());
    }
}

//! Objective quality metrics and trial aggregation.

use serde::Serialize;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Reported value when the error signal vanishes (or is negligibly small).
pub const METRIC_CAP_DB: f64 = 100.0;

fn check_lengths(estimate: &[f64], reference: &[f64]) -> Result<()> {
    if estimate.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            found: estimate.len(),
        });
    }
    Ok(())
}

fn ratio_db(signal_energy: f64, error_energy: f64) -> f64 {
    if error_energy <= 0.0 {
        return METRIC_CAP_DB;
    }
    (10.0 * (signal_energy / error_energy).log10()).min(METRIC_CAP_DB)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scale-invariant SNR in dB, capped at [`METRIC_CAP_DB`].
pub fn si_snr(estimate: &AudioClip, reference: &AudioClip) -> Result<f64> {
    si_snr_samples(estimate.samples(), reference.samples())
}

pub fn si_snr_samples(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let est = zero_mean(estimate);
    let refr = zero_mean(reference);
    let ref_energy = dot(&refr, &refr);
    if ref_energy <= 0.0 {
        return Err(Error::Degenerate("reference is constant".into()));
    }
    let scale = dot(&est, &refr) / ref_energy;
    let target: Vec<f64> = refr.iter().map(|r| scale * r).collect();
    let target_energy = dot(&target, &target);
    let error_energy: f64 = est
        .iter()
        .zip(&target)
        .map(|(e, t)| (e - t) * (e - t))
        .sum();
    // Rounding leaves a residue of order eps * energy on exact or scaled copies.
    if error_energy <= 1e-20 * target_energy {
        return Ok(METRIC_CAP_DB);
    }
    Ok(ratio_db(target_energy, error_energy))
}

/// Plain SNR in dB, capped at [`METRIC_CAP_DB`].
pub fn snr(estimate: &AudioClip, reference: &AudioClip) -> Result<f64> {
    snr_samples(estimate.samples(), reference.samples())
}

pub fn snr_samples(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    check_lengths(estimate, reference)?;
    let ref_energy = dot(reference, reference);
    if ref_energy <= 0.0 {
        return Err(Error::Degenerate("reference is silent".into()));
    }
    let error_energy: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - r) * (e - r))
        .sum();
    Ok(ratio_db(ref_energy, error_energy))
}

fn zero_mean(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - mean).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrialMetadata {
    pub method: String,
    pub snr_db: f64,
    pub k: usize,
    pub seed: u64,
}

/// Mean and normal-approximation 95% confidence half-width over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    pub ci95: f64,
    #[serde(flatten)]
    pub metadata: TrialMetadata,
}

pub fn aggregate_trials(values: &[f64]) -> Result<EvalReport> {
    aggregate_trials_with(values, TrialMetadata::default())
}

pub fn aggregate_trials_with(values: &[f64], metadata: TrialMetadata) -> Result<EvalReport> {
    if values.is_empty() {
        return Err(Error::invalid("at least one trial is required"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_dev = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(EvalReport {
        values: values.to_vec(),
        mean,
        std_dev,
        ci95: 1.96 * std_dev / n.sqrt(),
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    /// Straight-from-definition SI-SNR, written without shared helpers.
    fn si_snr_reference(est: &[f64], reference: &[f64]) -> f64 {
        let n = est.len() as f64;
        let me = est.iter().sum::<f64>() / n;
        let mr = reference.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..est.len() {
            num += (est[i] - me) * (reference[i] - mr);
            den += (reference[i] - mr).powi(2);
        }
        let alpha = num / den;
        let mut ts = 0.0;
        let mut es = 0.0;
        for i in 0..est.len() {
            let t = alpha * (reference[i] - mr);
            ts += t * t;
            es += (est[i] - me - t).powi(2);
        }
        10.0 * (ts / es).log10()
    }

    #[test]
    fn perfect_and_scaled_copies_hit_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian(&mut rng, 500);
        assert_eq!(si_snr_samples(&x, &x).unwrap(), METRIC_CAP_DB);
        let scaled: Vec<f64> = x.iter().map(|v| 2.7 * v).collect();
        assert_eq!(si_snr_samples(&scaled, &x).unwrap(), METRIC_CAP_DB);
        assert_eq!(snr_samples(&x, &x).unwrap(), METRIC_CAP_DB);
    }

    #[test]
    fn orthogonal_perturbation_gives_known_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = zero_mean(&gaussian(&mut rng, 1000));
        let mut n = zero_mean(&gaussian(&mut rng, 1000));
        // Gram-Schmidt against s; both stay zero-mean.
        let proj = dot(&n, &s) / dot(&s, &s);
        n.iter_mut().zip(&s).for_each(|(v, r)| *v -= proj * r);
        for &ratio in &[0.1, 1.0, 3.0, 250.0] {
            let scale = (dot(&s, &s) / (ratio * dot(&n, &n))).sqrt();
            let est: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + scale * b).collect();
            let expected = 10.0 * f64::log10(ratio);
            let got = si_snr_samples(&est, &s).unwrap();
            assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
            assert!((got - si_snr_reference(&est, &s)).abs() < 1e-9);
        }
    }

    #[test]
    fn doubled_signal_has_zero_db_snr() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let doubled: Vec<f64> = x.iter().map(|v| v + v).collect();
        assert!(snr_samples(&doubled, &x).unwrap().abs() < 1e-12);
    }

    #[test]
    fn snr_matches_independent_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = gaussian(&mut rng, 777);
        let e = gaussian(&mut rng, 777);
        let num: f64 = s.iter().map(|v| v * v).sum();
        let den: f64 = s.iter().zip(&e).map(|(a, b)| (b - a).powi(2)).sum();
        let expected = 10.0 * (num / den).log10();
        assert!((snr_samples(&e, &s).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(si_snr_samples(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::Degenerate(_))));
        assert!(matches!(snr_samples(&[1.0], &[0.0]), Err(Error::Degenerate(_))));
        assert!(matches!(si_snr_samples(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate_trials(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((r.mean, r.ci95), (5.0, 0.0));
        let r = aggregate_trials(&[0.0, 10.0]).unwrap();
        assert_eq!(r.mean, 5.0);
        assert!((r.ci95 - 9.8).abs() < 1e-12);
        let r = aggregate_trials(&[3.0]).unwrap();
        assert_eq!(r.ci95, 0.0);
        assert!(aggregate_trials(&[]).is_err());
    }

    #[test]
    fn normal_draws_give_expected_ci() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r = aggregate_trials(&gaussian(&mut rng, 100)).unwrap();
        assert!((r.ci95 - 0.196).abs() <= 0.05, "{}", r.ci95);
    }

    proptest! {
        #[test]
        fn si_snr_is_scale_invariant(seed in any::<u64>(), c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = gaussian(&mut rng, 256);
            let e: Vec<f64> = s.iter().zip(gaussian(&mut rng, 256)).map(|(a, b)| a + 0.3 * b).collect();
            let scaled: Vec<f64> = e.iter().map(|v| c * v).collect();
            let base = si_snr_samples(&e, &s).unwrap();
            let other = si_snr_samples(&scaled, &s).unwrap();
            // Negative scales project onto -s with the same residual.
            prop_assert!((base - other).abs() < 1e-9);
        }

        #[test]
        fn si_snr_equals_snr_of_projected_estimate(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = zero_mean(&gaussian(&mut rng, 300));
            let e: Vec<f64> = zero_mean(&s.iter().zip(gaussian(&mut rng, 300)).map(|(a, b)| 0.5 * a + b).collect::<Vec<_>>());
            let alpha = dot(&e, &s) / dot(&s, &s);
            let rescaled: Vec<f64> = e.iter().map(|v| v / alpha).collect();
            let a = si_snr_samples(&e, &s).unwrap();
            let b = snr_samples(&rescaled, &s).unwrap();
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }

        #[test]
        fn metrics_are_symmetric_under_joint_permutation(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = gaussian(&mut rng, 64);
            let e = gaussian(&mut rng, 64);
            let perm: Vec<usize> = (0..64).rev().collect();
            let sp: Vec<f64> = perm.iter().map(|&i| s[i]).collect();
            let ep: Vec<f64> = perm.iter().map(|&i| e[i]).collect();
            prop_assert!((si_snr_samples(&e, &s).unwrap() - si_snr_samples(&ep, &sp).unwrap()).abs() < 1e-9);
            prop_assert!((snr_samples(&e, &s).unwrap() - snr_samples(&ep, &sp).unwrap()).abs() < 1e-9);
        }
    }
}

//! Goodness-of-fit utilities: total-variation distance and a chi-square
//! bucket test against a reference [`DiscreteDistribution`], plus empirical
//! tail checks for the urn distribution.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use super::{pe_sample, DiscreteDistribution, PeParams};
use crate::error::{Error, Result};
use crate::rng::TrialRng;
use crate::scalar::Scalar;

/// Half the L1 distance between two probability vectors over the same
/// support.
pub fn tv_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "supports must align");
    let two = T::from_count(2);
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y).abs())
        / two
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    /// Chi-square statistic over merged buckets (infinite when samples fall
    /// outside the reference support).
    pub statistic: f64,
    pub degrees_of_freedom: u64,
    pub p_value: f64,
    /// Total-variation distance between the empirical distribution and the
    /// reference, with out-of-support mass counted against zero.
    pub tv: f64,
    pub buckets: usize,
}

/// Compares integer samples against a reference distribution.
///
/// Buckets are merged left to right until each holds expected count at least
/// five; a trailing light bucket is folded into its predecessor. Pure
/// function of its inputs.
pub fn gof_compare(samples: &[u64], reference: &DiscreteDistribution) -> Result<GofReport> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len() as f64;
    let probs = reference.probabilities();
    let start = reference.support_start();
    let mut counts = vec![0u64; probs.len()];
    let mut out_of_support = 0u64;
    for &s in samples {
        if s >= start && s <= reference.support_end() {
            counts[(s - start) as usize] += 1;
        } else {
            out_of_support += 1;
        }
    }

    let mut tv = out_of_support as f64 / n;
    for (i, &p) in probs.iter().enumerate() {
        tv += (counts[i] as f64 / n - p).abs();
    }
    tv *= 0.5;

    // (observed, expected) per merged bucket
    let mut buckets: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc_obs += counts[i] as f64;
        acc_exp += p * n;
        if acc_exp >= 5.0 {
            buckets.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 || acc_obs > 0.0 {
        if let Some(last) = buckets.last_mut() {
            last.0 += acc_obs;
            last.1 += acc_exp;
        } else {
            buckets.push((acc_obs, acc_exp));
        }
    }

    let degrees_of_freedom = buckets.len().saturating_sub(1) as u64;
    let (statistic, p_value) = if out_of_support > 0 {
        // mass where the reference has none: certain rejection
        (f64::INFINITY, 0.0)
    } else {
        let stat: f64 = buckets
            .iter()
            .map(|&(obs, exp)| (obs - exp).powi(2) / exp)
            .sum();
        let p = if degrees_of_freedom == 0 {
            1.0
        } else {
            gamma_ur(degrees_of_freedom as f64 / 2.0, stat / 2.0)
        };
        (stat, p)
    };

    Ok(GofReport {
        statistic,
        degrees_of_freedom,
        p_value,
        tv,
        buckets: buckets.len(),
    })
}

/// Exact binomial pmf over `0..=n`, computed in log space and normalized.
pub fn binomial_pmf(n: u64, p: f64) -> Result<DiscreteDistribution> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidDistribution(format!(
            "binomial probability {p} outside [0, 1]"
        )));
    }
    if p == 0.0 {
        let mut probs = vec![0.0; n as usize + 1];
        probs[0] = 1.0;
        return DiscreteDistribution::new(0, probs);
    }
    if p == 1.0 {
        let mut probs = vec![0.0; n as usize + 1];
        probs[n as usize] = 1.0;
        return DiscreteDistribution::new(0, probs);
    }
    let nf = n as f64;
    let ln_n_fact = ln_gamma(nf + 1.0);
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut probs: Vec<f64> = (0..=n)
        .map(|k| {
            let kf = k as f64;
            (ln_n_fact - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0) + kf * lp
                + (nf - kf) * lq)
                .exp()
        })
        .collect();
    let sum: f64 = probs.iter().sum();
    for q in &mut probs {
        *q /= sum;
    }
    DiscreteDistribution::new(0, probs)
}

/// Empirical tail frequencies of the urn against the deviation
/// `sqrt(a) * (total / (a + b)) * delta` around the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub lower: f64,
    pub upper: f64,
}

/// Requires `0 < delta < sqrt(a)`. The concentration constants of the urn
/// bound are not published, so callers can only assert qualitative shape
/// (for example monotone decay in `delta`).
pub fn pe_tail_check(
    params: &PeParams,
    delta: f64,
    trials: u64,
    rng: &mut TrialRng,
) -> Result<TailEstimate> {
    params.validate()?;
    let a = params.initial_red as f64;
    if !(delta > 0.0 && delta < a.sqrt()) {
        return Err(Error::InvalidParams(format!(
            "delta must lie in (0, sqrt(a)), got {delta}"
        )));
    }
    if trials == 0 {
        return Err(Error::EmptySamples);
    }
    let ab = (params.initial_red + params.initial_blue) as f64;
    let total = ab + params.steps as f64;
    let mu = a * total / ab;
    let dev = a.sqrt() * (total / ab) * delta;
    let mut below = 0u64;
    let mut above = 0u64;
    for _ in 0..trials {
        let v = pe_sample(params, rng)? as f64;
        if v < mu - dev {
            below += 1;
        } else if v > mu + dev {
            above += 1;
        }
    }
    Ok(TailEstimate {
        lower: below as f64 / trials as f64,
        upper: above as f64 / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::pe_pmf_dist;
    use crate::rng::trial_rng;

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert!((tv_distance::<f64>(&[0.5, 0.5], &[0.25, 0.75]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn self_consistency_at_scale() {
        let dist = pe_pmf_dist(&PeParams::new(1, 1, 5).unwrap()).unwrap();
        let mut rng = trial_rng(3);
        let samples: Vec<u64> = (0..100_000).map(|_| dist.sample(&mut rng)).collect();
        let report = gof_compare(&samples, &dist).unwrap();
        assert!(report.tv < 0.01, "tv={}", report.tv);
        assert!(report.p_value > 1e-3, "p={}", report.p_value);
    }

    #[test]
    fn point_mass_agreement_and_disagreement() {
        let point = DiscreteDistribution::new(5, vec![1.0]).unwrap();
        let report = gof_compare(&[5; 100], &point).unwrap();
        assert_eq!(report.tv, 0.0);
        assert_eq!(report.p_value, 1.0);

        let report = gof_compare(&[6; 100], &point).unwrap();
        assert_eq!(report.tv, 1.0);
        assert_eq!(report.p_value, 0.0);
        assert!(report.statistic.is_infinite());

        // zero-mass point inside the support
        let dist = DiscreteDistribution::new(0, vec![1.0, 0.0]).unwrap();
        let report = gof_compare(&[1; 50], &dist).unwrap();
        assert_eq!(report.tv, 1.0);
    }

    #[test]
    fn empty_samples_are_rejected() {
        let dist = DiscreteDistribution::new(0, vec![1.0]).unwrap();
        assert!(matches!(
            gof_compare(&[], &dist),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn chi_square_accepts_true_distribution() {
        let dist = binomial_pmf(50, 0.3).unwrap();
        let mut rng = trial_rng(9);
        let samples: Vec<u64> = (0..20_000).map(|_| dist.sample(&mut rng)).collect();
        let report = gof_compare(&samples, &dist).unwrap();
        assert!(report.p_value > 1e-3, "p={}", report.p_value);
        assert!(report.buckets > 3);
    }

    #[test]
    fn chi_square_rejects_shifted_distribution() {
        let dist = binomial_pmf(50, 0.3).unwrap();
        let shifted = binomial_pmf(50, 0.36).unwrap();
        let mut rng = trial_rng(10);
        let samples: Vec<u64> = (0..20_000).map(|_| shifted.sample(&mut rng)).collect();
        let report = gof_compare(&samples, &dist).unwrap();
        assert!(report.p_value < 1e-6, "p={}", report.p_value);
    }

    #[test]
    fn binomial_pmf_identities() {
        let d = binomial_pmf(1, 0.5).unwrap();
        assert!((d.prob_of(0) - 0.5).abs() < 1e-15);
        let d = binomial_pmf(2, 0.5).unwrap();
        assert!((d.prob_of(1) - 0.5).abs() < 1e-14);
        let d = binomial_pmf(400, 0.4).unwrap();
        assert!((d.mean() - 160.0).abs() < 1e-9);
        let sum: f64 = d.probabilities().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // degenerate endpoints
        assert_eq!(binomial_pmf(5, 0.0).unwrap().prob_of(0), 1.0);
        assert_eq!(binomial_pmf(5, 1.0).unwrap().prob_of(5), 1.0);
    }

    #[test]
    fn binomial_pmf_matches_direct_computation() {
        let n = 12u64;
        let p = 0.3f64;
        let d = binomial_pmf(n, p).unwrap();
        for k in 0..=n {
            let mut direct = p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
            for i in 0..k {
                direct *= (n - i) as f64 / (k - i) as f64;
            }
            assert!((d.prob_of(k) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_frequencies_decay_in_delta() {
        let p = PeParams::new(100, 100, 800).unwrap();
        let mut rng = trial_rng(12);
        let wide = pe_tail_check(&p, 1.0, 20_000, &mut rng).unwrap();
        let mut rng = trial_rng(12);
        let narrow = pe_tail_check(&p, 3.0, 20_000, &mut rng).unwrap();
        assert!(narrow.lower <= wide.lower);
        assert!(narrow.upper <= wide.upper);
        assert!(wide.lower < 0.5 && wide.upper < 0.5);
    }

    #[test]
    fn deterministic_urn_has_empty_tails() {
        let p = PeParams::new(9, 0, 10).unwrap();
        let mut rng = trial_rng(13);
        let est = pe_tail_check(&p, 2.0, 5_000, &mut rng).unwrap();
        assert_eq!(est.lower, 0.0);
        assert_eq!(est.upper, 0.0);
    }

    #[test]
    fn tail_check_validates_delta() {
        let p = PeParams::new(4, 4, 10).unwrap();
        let mut rng = trial_rng(14);
        assert!(pe_tail_check(&p, 0.0, 100, &mut rng).is_err());
        assert!(pe_tail_check(&p, 2.0, 100, &mut rng).is_err());
        assert!(pe_tail_check(&p, 1.9, 100, &mut rng).is_ok());
    }
}

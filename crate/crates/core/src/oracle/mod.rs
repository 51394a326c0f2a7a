//! Analysis-level model of one synchronized phase.
//!
//! Starting a phase from a fixed configuration `x`, the decision part leaves
//! `Y_i ~ Bin(x_i, x_i / n)` decided agents per opinion (independently), and
//! the boosting part distributes the `n - ||y||` undecided agents so that
//! opinion `i` ends with `PE(y_i, ||y|| - y_i, n - ||y||)` supporters. These
//! exact laws are what the agent-level simulators are validated against.
//!
//! The urn pmf is computed by an O(m²) dynamic program over added-red counts.
//! Probabilities stay in `[0, 1]` throughout, so the recurrence is run in
//! plain linear space; it is generic over the scalar so tests can instantiate
//! it with exact rationals.

pub mod gof;

pub use gof::{binomial_pmf, gof_compare, pe_tail_check, tv_distance, GofReport, TailEstimate};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::config::Configuration;
use crate::error::{Error, Result};
use crate::rng::TrialRng;
use crate::scalar::ProbScalar;

/// Pólya-Eggenberger urn: `a` red and `b` blue balls initially, `m`
/// reinforcement steps (draw uniformly, return with one extra ball of the
/// drawn color).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeParams {
    pub initial_red: u64,
    pub initial_blue: u64,
    pub steps: u64,
}

impl PeParams {
    pub fn new(initial_red: u64, initial_blue: u64, steps: u64) -> Result<Self> {
        let p = Self {
            initial_red,
            initial_blue,
            steps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps >= 1 && self.initial_red + self.initial_blue == 0 {
            return Err(Error::InvalidParams(
                "urn needs at least one ball to draw from".into(),
            ));
        }
        Ok(())
    }
}

/// A distribution over a contiguous integer support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    support_start: u64,
    probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    /// Probabilities must be non-negative and sum to 1 within 1e-12.
    pub fn new(support_start: u64, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if probabilities.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidDistribution(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self {
            support_start,
            probabilities,
        })
    }

    pub fn support_start(&self) -> u64 {
        self.support_start
    }

    pub fn support_end(&self) -> u64 {
        self.support_start + self.probabilities.len() as u64 - 1
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Mass at `value`, zero outside the support.
    pub fn prob_of(&self, value: u64) -> f64 {
        if value < self.support_start {
            return 0.0;
        }
        self.probabilities
            .get((value - self.support_start) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| (self.support_start + i as u64) as f64 * p)
            .sum()
    }

    /// Inverse-cdf draw by linear walk; supports here are small.
    pub fn sample(&self, rng: &mut TrialRng) -> u64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return self.support_start + i as u64;
            }
        }
        self.support_end()
    }
}

/// Simulates the urn and returns the total red count, in `[a, a + m]`.
pub fn pe_sample(params: &PeParams, rng: &mut TrialRng) -> Result<u64> {
    params.validate()?;
    let mut red = params.initial_red;
    let start = params.initial_red + params.initial_blue;
    for total in start..start + params.steps {
        if rng.random_range(0..total) < red {
            red += 1;
        }
    }
    Ok(red)
}

/// Exact pmf of the total red count over `[a, a + m]`, by dynamic
/// programming on the number of added red balls. Cost is O(m²).
pub fn pe_pmf<T: ProbScalar>(params: &PeParams) -> Result<Vec<T>> {
    params.validate()?;
    let m = params.steps as usize;
    let mut dp = vec![T::zero(); m + 1];
    dp[0] = T::one();
    for step in 0..m {
        let total = T::from_count(params.initial_red + params.initial_blue + step as u64);
        let mut next = vec![T::zero(); m + 1];
        for (added, weight) in dp.iter().enumerate().take(step + 1) {
            if weight.is_zero() {
                continue;
            }
            let p_red = T::from_count(params.initial_red + added as u64) / total.clone();
            next[added + 1] =
                next[added + 1].clone() + weight.clone() * p_red.clone();
            next[added] = next[added].clone() + weight.clone() * (T::one() - p_red);
        }
        dp = next;
    }
    Ok(dp)
}

/// f64 urn pmf packaged with its support.
pub fn pe_pmf_dist(params: &PeParams) -> Result<DiscreteDistribution> {
    DiscreteDistribution::new(params.initial_red, pe_pmf::<f64>(params)?)
}

/// Decision part: samples `y_i ~ Bin(x_i, x_i / n)` independently. The
/// result is the vector of decided counts, summing to at most `n`.
pub fn ideal_decision_part(x: &Configuration, rng: &mut TrialRng) -> Vec<u64> {
    let n = x.n();
    x.counts()
        .iter()
        .map(|&xi| {
            if xi == 0 {
                0
            } else {
                let p = xi as f64 / n as f64;
                Binomial::new(xi, p).expect("valid binomial").sample(rng)
            }
        })
        .collect()
}

/// Outcome of a boosting part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoostingOutcome {
    Completed(Configuration),
    /// No decided agent was available; the phase leaves the configuration
    /// unchanged and the caller decides what that means.
    Frozen,
}

/// Boosting part as the sequential urn: undecided slots adopt an opinion
/// with probability proportional to the current decided counts until all
/// `n` agents are decided. The marginal of opinion `i` is
/// `PE(y_i, ||y|| - y_i, n - ||y||)`.
pub fn ideal_boosting_part(
    y: &[u64],
    n: u64,
    rng: &mut TrialRng,
) -> Result<BoostingOutcome> {
    let decided: u64 = y.iter().sum();
    if decided > n {
        return Err(Error::InvalidParams(format!(
            "{decided} decided agents exceed n={n}"
        )));
    }
    if decided == 0 {
        return Ok(BoostingOutcome::Frozen);
    }
    let mut counts = y.to_vec();
    let mut total = decided;
    while total < n {
        let mut pick = rng.random_range(0..total);
        for c in counts.iter_mut() {
            if pick < *c {
                *c += 1;
                break;
            }
            pick -= *c;
        }
        total += 1;
    }
    Ok(BoostingOutcome::Completed(
        Configuration::new(counts).expect("counts sum to n"),
    ))
}

/// One full synchronized phase: decision then boosting; a frozen phase
/// returns the input configuration unchanged.
pub fn ideal_phase(x: &Configuration, rng: &mut TrialRng) -> Configuration {
    let y = ideal_decision_part(x, rng);
    match ideal_boosting_part(&y, x.n(), rng).expect("decided counts bounded by n") {
        BoostingOutcome::Completed(next) => next,
        BoostingOutcome::Frozen => x.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    fn pe(a: u64, b: u64, m: u64) -> PeParams {
        PeParams::new(a, b, m).unwrap()
    }

    #[test]
    fn urn_needs_a_ball_when_steps_positive() {
        assert!(PeParams::new(0, 0, 1).is_err());
        assert!(PeParams::new(0, 0, 0).is_ok());
    }

    #[test]
    fn all_red_and_all_blue_urns_are_deterministic() {
        let mut rng = trial_rng(1);
        for _ in 0..50 {
            assert_eq!(pe_sample(&pe(3, 0, 5), &mut rng).unwrap(), 8);
            assert_eq!(pe_sample(&pe(0, 4, 6), &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn pe_1_1_2_is_uniform_over_three_outcomes() {
        // exact enumeration gives mass 1/3 on each of {1, 2, 3}
        let pmf = pe_pmf::<f64>(&pe(1, 1, 2)).unwrap();
        for p in &pmf {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let mut rng = trial_rng(5);
        let mut counts = [0u32; 3];
        for _ in 0..6000 {
            let v = pe_sample(&pe(1, 1, 2), &mut rng).unwrap();
            counts[(v - 1) as usize] += 1;
        }
        for c in counts {
            assert!((f64::from(c) / 6000.0 - 1.0 / 3.0).abs() < 0.04);
        }
    }

    #[test]
    fn small_pmf_examples() {
        let pmf = pe_pmf::<f64>(&pe(1, 1, 1)).unwrap();
        assert_eq!(pmf, vec![0.5, 0.5]);
        let pmf = pe_pmf::<f64>(&pe(2, 1, 1)).unwrap();
        assert!((pmf[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((pmf[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pe_1_1_m_is_exactly_uniform() {
        for m in 1..=20u64 {
            let pmf = pe_pmf::<BigRational>(&pe(1, 1, m)).unwrap();
            let expected = BigRational::new(BigInt::from(1), BigInt::from(m + 1));
            for p in pmf {
                assert_eq!(p, expected);
            }
        }
    }

    #[test]
    fn pmf_mean_matches_the_martingale_exactly() {
        // E[total red] = a * (a + b + m) / (a + b), proven here by exact DP
        for &(a, b) in &[(1u64, 1u64), (3, 2), (2, 7), (5, 1), (1, 9)] {
            for m in 0..=50u64 {
                let pmf = pe_pmf::<BigRational>(&pe(a, b, m)).unwrap();
                let mean: BigRational = pmf
                    .iter()
                    .enumerate()
                    .map(|(added, p)| {
                        BigRational::from(BigInt::from(a + added as u64)) * p.clone()
                    })
                    .sum();
                let expected = BigRational::new(
                    BigInt::from(a * (a + b + m)),
                    BigInt::from(a + b),
                );
                assert_eq!(mean, expected, "PE({a},{b},{m})");
            }
        }
    }

    #[test]
    fn f64_pmf_sums_to_one() {
        for &(a, b, m) in &[(1u64, 1u64, 50u64), (3, 2, 5), (4, 9, 37), (2, 1, 1000)] {
            let pmf = pe_pmf::<f64>(&pe(a, b, m)).unwrap();
            let sum: f64 = pmf.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "PE({a},{b},{m}) sums to {sum}");
        }
    }

    #[test]
    fn rational_and_float_pmfs_agree() {
        let p = pe(3, 2, 12);
        let exact = pe_pmf::<BigRational>(&p).unwrap();
        let float = pe_pmf::<f64>(&p).unwrap();
        for (e, f) in exact.iter().zip(&float) {
            assert!((e.to_f64().unwrap() - f).abs() < 1e-13);
        }
    }

    #[test]
    fn sampler_matches_pmf() {
        let p = pe(3, 2, 5);
        let dist = pe_pmf_dist(&p).unwrap();
        let mut rng = trial_rng(11);
        let mut counts = vec![0u64; dist.probabilities().len()];
        let reps = 20_000;
        for _ in 0..reps {
            let v = pe_sample(&p, &mut rng).unwrap();
            counts[(v - dist.support_start()) as usize] += 1;
        }
        let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / reps as f64).collect();
        assert!(tv_distance(&emp, dist.probabilities()) < 0.02);
    }

    #[test]
    fn decision_part_edge_cases() {
        let mut rng = trial_rng(2);
        let x = Configuration::new(vec![10]).unwrap();
        assert_eq!(ideal_decision_part(&x, &mut rng), vec![10]);
        let x = Configuration::new(vec![5, 0, 5]).unwrap();
        let y = ideal_decision_part(&x, &mut rng);
        assert_eq!(y[1], 0);
    }

    #[test]
    fn decision_part_expected_decided_count_is_psi() {
        let x = Configuration::new(vec![400, 300, 200, 100]).unwrap();
        let mut rng = trial_rng(3);
        let reps = 10_000u64;
        let total: u64 = (0..reps)
            .map(|_| ideal_decision_part(&x, &mut rng).iter().sum::<u64>())
            .sum();
        let mean = total as f64 / reps as f64;
        // Var[||y||] = sum x_i p_i (1 - p_i) = 200; tolerance 3 sqrt(Var)/100
        assert!((mean - 300.0).abs() < 0.424, "mean={mean}");
    }

    #[test]
    fn boosting_part_edge_cases() {
        let mut rng = trial_rng(4);
        match ideal_boosting_part(&[4], 9, &mut rng).unwrap() {
            BoostingOutcome::Completed(c) => assert_eq!(c.counts(), &[9]),
            BoostingOutcome::Frozen => panic!("not frozen"),
        }
        match ideal_boosting_part(&[1, 1], 2, &mut rng).unwrap() {
            BoostingOutcome::Completed(c) => assert_eq!(c.counts(), &[1, 1]),
            BoostingOutcome::Frozen => panic!("not frozen"),
        }
        assert_eq!(
            ideal_boosting_part(&[0, 0], 5, &mut rng).unwrap(),
            BoostingOutcome::Frozen
        );
        assert!(ideal_boosting_part(&[5, 5], 6, &mut rng).is_err());
    }

    #[test]
    fn ideal_phase_keeps_unanimity() {
        let mut rng = trial_rng(6);
        let x = Configuration::new(vec![40]).unwrap();
        assert_eq!(ideal_phase(&x, &mut rng), x);
    }

    #[test]
    fn lone_dissenter_rarely_survives_a_phase() {
        // survival requires its single agent to stay decided (prob 1/100)
        let x = Configuration::new(vec![99, 1]).unwrap();
        let mut rng = trial_rng(7);
        let reps = 10_000;
        let survived = (0..reps)
            .filter(|_| ideal_phase(&x, &mut rng).counts()[1] > 0)
            .count();
        let freq = survived as f64 / reps as f64;
        assert!(freq < 0.05, "survival frequency {freq}");
        assert!(freq > 0.0, "survival should not be impossible");
    }

    #[test]
    fn all_singletons_freeze_at_the_documented_rate() {
        let n = 50u64;
        let x = Configuration::new(vec![1; n as usize]).unwrap();
        let mut rng = trial_rng(8);
        let reps = 4000;
        let frozen = (0..reps)
            .filter(|_| {
                ideal_decision_part(&x, &mut rng)
                    .iter()
                    .sum::<u64>()
                    == 0
            })
            .count();
        let freq = frozen as f64 / reps as f64;
        let expected = (1.0 - 1.0 / n as f64).powi(n as i32); // 0.3642
        assert!(freq > 0.25 && freq <= 1.0 / std::f64::consts::E + 0.03);
        assert!((freq - expected).abs() < 0.04, "freq={freq}");
    }

    #[test]
    fn distribution_constructor_validates() {
        assert!(DiscreteDistribution::new(0, vec![]).is_err());
        assert!(DiscreteDistribution::new(0, vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(0, vec![-0.1, 1.1]).is_err());
        let d = DiscreteDistribution::new(3, vec![0.25, 0.75]).unwrap();
        assert_eq!(d.prob_of(2), 0.0);
        assert_eq!(d.prob_of(3), 0.25);
        assert_eq!(d.prob_of(4), 0.75);
        assert_eq!(d.prob_of(5), 0.0);
        assert_eq!(d.support_end(), 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn boosting_conserves_the_population(
            y in proptest::collection::vec(0u64..5, 1..6),
            extra in 0u64..8,
            seed in 0u64..1000,
        ) {
            let decided: u64 = y.iter().sum();
            prop_assume!(decided > 0);
            let n = decided + extra;
            let mut rng = trial_rng(seed);
            match ideal_boosting_part(&y, n, &mut rng).unwrap() {
                BoostingOutcome::Completed(c) => {
                    prop_assert_eq!(c.n(), n);
                    prop_assert_eq!(c.counts().iter().sum::<u64>(), n);
                    // opinions with zero decided agents never reappear
                    for (i, &yi) in y.iter().enumerate() {
                        if yi == 0 {
                            prop_assert_eq!(c.counts()[i], 0);
                        }
                    }
                }
                BoostingOutcome::Frozen => prop_assert!(false, "decided > 0"),
            }
        }

        #[test]
        fn pe_sample_stays_in_support(a in 0u64..6, b in 0u64..6, m in 0u64..40, seed in 0u64..100) {
            prop_assume!(a + b >= 1);
            let mut rng = trial_rng(seed);
            let v = pe_sample(&pe(a, b, m), &mut rng).unwrap();
            prop_assert!(v >= a && v <= a + m);
        }
    }
}

//! Distribution validation suite.
//!
//! Checks the agent-level simulators against the analysis-level laws: the
//! decision round against independent binomials, the boosting part against
//! the urn pmf, a full gossip phase against the ideal phase (the central
//! link between the round protocol and the closed-form model), and the
//! frozen-phase frequency against `(1 - 1/n)^n`.
//!
//! The oracle samplers are injectable so the suite's sensitivity can be
//! demonstrated by corrupting one of them.

use plurality_core::config::Configuration;
use plurality_core::gossip::GossipSim;
use plurality_core::oracle::{
    binomial_pmf, gof_compare, ideal_boosting_part, ideal_decision_part, pe_pmf_dist,
    tv_distance, BoostingOutcome, GofReport, PeParams,
};
use plurality_core::{trial_rng, ProtocolParams, TrialRng};

use crate::{HarnessError, Result};

pub type DecisionSampler = fn(&Configuration, &mut TrialRng) -> Vec<u64>;
pub type BoostingSampler =
    fn(&[u64], u64, &mut TrialRng) -> plurality_core::Result<BoostingOutcome>;

/// The oracle sampling routes used by the suite.
#[derive(Clone, Copy)]
pub struct Samplers {
    pub decision: DecisionSampler,
    pub boosting: BoostingSampler,
}

impl Default for Samplers {
    fn default() -> Self {
        Self {
            decision: ideal_decision_part,
            boosting: ideal_boosting_part,
        }
    }
}

/// Per-opinion decided counts of a simulated gossip decision round from a
/// fixed configuration, compared against the exact `Bin(x_i, x_i / n)` pmf.
pub fn decision_round_reports(
    x: &Configuration,
    reps: u64,
    seed_base: u64,
) -> Result<Vec<GofReport>> {
    let k = x.k();
    let mut samples: Vec<Vec<u64>> = vec![Vec::with_capacity(reps as usize); k];
    let params = ProtocolParams::new(x.n(), k as u64);
    for t in 0..reps {
        let mut sim = GossipSim::new(&params.clone().with_seed(seed_base + t), x)?;
        sim.round();
        let mut decided = vec![0u64; k];
        for a in sim.agents() {
            if !a.undecided {
                decided[a.opinion as usize] += 1;
            }
        }
        for (i, &d) in decided.iter().enumerate() {
            samples[i].push(d);
        }
    }
    let mut reports = Vec::with_capacity(k);
    for (i, &xi) in x.counts().iter().enumerate() {
        let reference = binomial_pmf(xi, xi as f64 / x.n() as f64)?;
        reports.push(gof_compare(&samples[i], &reference)?);
    }
    Ok(reports)
}

/// TV between the empirical marginal of opinion 0 under the boosting sampler
/// started from `y = [3, 2]`, `n = 10`, and the exact `PE(3, 2, 5)` pmf.
pub fn pe_marginal_tv(trials: u64, seed: u64, boosting: BoostingSampler) -> Result<f64> {
    let y = [3u64, 2];
    let n = 10u64;
    let reference = pe_pmf_dist(&PeParams::new(3, 2, 5)?)?;
    let mut rng = trial_rng(seed);
    let mut counts = vec![0u64; (n + 1) as usize];
    for _ in 0..trials {
        match boosting(&y, n, &mut rng)? {
            BoostingOutcome::Completed(c) => counts[c.counts()[0] as usize] += 1,
            BoostingOutcome::Frozen => {
                return Err(HarnessError::InvalidSpec(
                    "boosting fixture cannot freeze".into(),
                ))
            }
        }
    }
    let emp: Vec<f64> = counts
        .iter()
        .skip(reference.support_start() as usize)
        .take(reference.probabilities().len())
        .map(|&c| c as f64 / trials as f64)
        .collect();
    // out-of-support mass counts fully against the reference
    let out: f64 = 1.0 - emp.iter().sum::<f64>();
    Ok(tv_distance(&emp, reference.probabilities()) + out / 2.0)
}

/// Cross-validation hook: per-opinion TV between the outcome of one full
/// gossip phase (snapshot rounds, self-contact, `tbc` boosting rounds) and
/// one ideal phase, both started from `x`, estimated over `trials` runs of
/// each route.
pub fn gossip_phase_cross_validation(
    x: &Configuration,
    tbc: u32,
    trials: u64,
    seed_base: u64,
    samplers: &Samplers,
) -> Result<Vec<f64>> {
    let n = x.n();
    let k = x.k();
    let params = ProtocolParams::new(n, k as u64);
    let mut sim_counts = vec![vec![0u64; (n + 1) as usize]; k];
    for t in 0..trials {
        let mut sim = GossipSim::with_tbc(&params.clone().with_seed(seed_base + t), x, tbc)?;
        sim.run_phase();
        let config = sim.configuration();
        for (i, &v) in config.counts().iter().enumerate() {
            sim_counts[i][v as usize] += 1;
        }
    }
    let mut ideal_counts = vec![vec![0u64; (n + 1) as usize]; k];
    let mut rng = trial_rng(seed_base ^ 0x9e37_79b9_7f4a_7c15);
    for _ in 0..trials {
        let y = (samplers.decision)(x, &mut rng);
        let outcome = if y.iter().sum::<u64>() == 0 {
            x.clone()
        } else {
            match (samplers.boosting)(&y, n, &mut rng)? {
                BoostingOutcome::Completed(c) => c,
                BoostingOutcome::Frozen => x.clone(),
            }
        };
        for (i, &v) in outcome.counts().iter().enumerate() {
            ideal_counts[i][v as usize] += 1;
        }
    }
    let to_probs = |counts: &Vec<u64>| -> Vec<f64> {
        counts.iter().map(|&c| c as f64 / trials as f64).collect()
    };
    Ok((0..k)
        .map(|i| tv_distance(&to_probs(&sim_counts[i]), &to_probs(&ideal_counts[i])))
        .collect())
}

/// Frequency of frozen phases (no decided agent after the decision part)
/// from the all-singletons configuration on `n` agents.
pub fn frozen_phase_frequency(
    n: u64,
    phases: u64,
    seed: u64,
    decision: DecisionSampler,
) -> f64 {
    let x = Configuration::new(vec![1; n as usize]).expect("n >= 1");
    let mut rng = trial_rng(seed);
    let frozen = (0..phases)
        .filter(|_| decision(&x, &mut rng).iter().sum::<u64>() == 0)
        .count();
    frozen as f64 / phases as f64
}

#[derive(Debug, Clone)]
pub struct FixtureReport {
    pub name: String,
    pub passed: bool,
    pub details: String,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub fixtures: Vec<FixtureReport>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.fixtures.iter().all(|f| f.passed)
    }
}

/// Named checks with thresholds frozen from oracle self-consistency pilots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fixture {
    /// Decision-round marginals vs binomial pmfs: TV < 0.04 and chi-square
    /// p >= 1e-4 at 10^4 repetitions.
    BinomialDecision,
    /// Boosting marginal vs PE(3,2,5) pmf: TV < 0.02 at 10^5 runs.
    PeMarginal,
    /// Full gossip phase vs ideal phase at n = 10: per-opinion TV < 0.05 at
    /// 10^5 trials per route.
    GossipPhase,
    /// Frozen-phase frequency at n = 100 within 0.03 of (1 - 1/n)^n.
    FrozenPhase,
}

pub fn default_fixtures() -> Vec<Fixture> {
    vec![
        Fixture::BinomialDecision,
        Fixture::PeMarginal,
        Fixture::GossipPhase,
        Fixture::FrozenPhase,
    ]
}

/// Runs the given fixtures with the given sampling routes. Scale divides
/// the trial counts for quick smoke runs (1 = full size).
pub fn validate_distributions(
    fixtures: &[Fixture],
    samplers: &Samplers,
    scale: u64,
) -> Result<ValidationReport> {
    if fixtures.is_empty() {
        return Err(HarnessError::InvalidSpec("no fixtures".into()));
    }
    if scale == 0 {
        return Err(HarnessError::InvalidSpec("scale must be >= 1".into()));
    }
    let mut reports = Vec::new();
    for fixture in fixtures {
        let report = match fixture {
            Fixture::BinomialDecision => {
                // thresholds are calibrated for exactly 10^4 repetitions
                // (empirical TV grows as 1/sqrt(reps)); this fixture is cheap
                // enough to always run at full size
                let x = Configuration::new(vec![400, 300, 200, 100])?;
                let gofs = decision_round_reports(&x, 10_000, 401)?;
                let worst_tv = gofs.iter().map(|g| g.tv).fold(0.0, f64::max);
                let worst_p = gofs.iter().map(|g| g.p_value).fold(1.0, f64::min);
                FixtureReport {
                    name: "binomial-decision".into(),
                    passed: worst_tv < 0.04 && worst_p >= 1e-4,
                    details: format!("x=[400,300,200,100]: worst tv={worst_tv:.4}, worst p={worst_p:.2e}"),
                }
            }
            Fixture::PeMarginal => {
                let trials = (100_000 / scale).max(1000);
                let tv = pe_marginal_tv(trials, 73, samplers.boosting)?;
                FixtureReport {
                    name: "pe-marginal".into(),
                    passed: tv < 0.02,
                    details: format!("y=[3,2], n=10: tv={tv:.4} over {trials} runs"),
                }
            }
            Fixture::GossipPhase => {
                let x = Configuration::new(vec![7, 2, 1])?;
                let trials = (100_000 / scale).max(1000);
                let tvs = gossip_phase_cross_validation(&x, 100, trials, 4242, samplers)?;
                let worst = tvs.iter().copied().fold(0.0, f64::max);
                FixtureReport {
                    name: "gossip-phase-cross-validation".into(),
                    passed: worst < 0.05,
                    details: format!("x=[7,2,1], n=10: per-opinion tv={tvs:.4?}"),
                }
            }
            Fixture::FrozenPhase => {
                // band calibrated for 10^4 phases (about six sigma); cheap
                // enough to always run at full size
                let phases = 10_000;
                let freq = frozen_phase_frequency(100, phases, 99, samplers.decision);
                let expected = (1.0 - 1.0 / 100.0_f64).powi(100);
                FixtureReport {
                    name: "frozen-phase".into(),
                    passed: (freq - expected).abs() < 0.03,
                    details: format!("freq={freq:.4}, expected={expected:.4}"),
                }
            }
        };
        reports.push(report);
    }
    Ok(ValidationReport { fixtures: reports })
}

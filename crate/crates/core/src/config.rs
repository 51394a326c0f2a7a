//! Opinion configurations and the measures defined on them.
//!
//! A configuration is the vector of support counts `x = (x_1, ..., x_k)`
//! over `k` opinions, with `n = sum(x)` agents total. Order statistics use
//! the descending sort with ties broken by lowest opinion id, so every
//! measure is a deterministic function of the counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    counts: Vec<u64>,
    n: u64,
}

impl Configuration {
    /// Builds a configuration from support counts. Requires `k >= 1` and at
    /// least one agent.
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::InvalidConfiguration(
                "need at least one opinion".into(),
            ));
        }
        let n = counts.iter().sum();
        if n == 0 {
            return Err(Error::InvalidConfiguration(
                "need at least one agent".into(),
            ));
        }
        Ok(Self { counts, n })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Number of opinions `k` (including those with zero support).
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn num_nonzero(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Support of the largest opinion, `x_(1)`.
    pub fn max_support(&self) -> u64 {
        *self.counts.iter().max().expect("k >= 1")
    }

    /// Lowest opinion id among those providing `x_(1)`.
    pub fn argmax(&self) -> usize {
        let max = self.max_support();
        self.counts.iter().position(|&c| c == max).expect("k >= 1")
    }

    /// All opinion ids providing `x_(1)`.
    pub fn argmax_set(&self) -> Vec<usize> {
        let max = self.max_support();
        (0..self.k()).filter(|&i| self.counts[i] == max).collect()
    }

    fn two_largest(&self) -> (u64, u64) {
        let mut first = 0u64;
        let mut second = 0u64;
        for &c in &self.counts {
            if c > first {
                second = first;
                first = c;
            } else if c > second {
                second = c;
            }
        }
        (first, second)
    }

    /// Additive bias `x_(1) - x_(2)`; for `k == 1` the second order statistic
    /// is taken as zero.
    pub fn additive_bias(&self) -> u64 {
        let (first, second) = self.two_largest();
        first - second
    }

    /// Multiplicative bias `x_(1) / x_(2)`, infinite when `x_(2) == 0`.
    pub fn multiplicative_bias<T: Scalar>(&self) -> T {
        let (first, second) = self.two_largest();
        if second == 0 {
            T::infinity()
        } else {
            T::from_count(first) / T::from_count(second)
        }
    }

    /// Significance threshold `x_(1) - xi_eff * sqrt(n ln n)`.
    ///
    /// Natural log by convention; requires `n >= 2` so the threshold is
    /// strictly below the maximum for positive `xi_eff`.
    pub fn significance_threshold<T: Scalar>(&self, xi_eff: T) -> Result<T> {
        if self.n < 2 {
            return Err(Error::InvalidParams(
                "significance needs n >= 2 (log n must be positive)".into(),
            ));
        }
        if xi_eff < T::zero() {
            return Err(Error::InvalidParams("xi_eff must be >= 0".into()));
        }
        let n = T::from_count(self.n);
        Ok(T::from_count(self.max_support()) - xi_eff * (n * n.ln()).sqrt())
    }

    /// Ids of significant opinions: `{ i : x_i >= x_(1) - xi_eff * sqrt(n ln n) }`.
    /// The argmax opinion is always a member.
    pub fn significant_set<T: Scalar>(&self, xi_eff: T) -> Result<Vec<usize>> {
        let threshold = self.significance_threshold(xi_eff)?;
        Ok((0..self.k())
            .filter(|&i| T::from_count(self.counts[i]) >= threshold)
            .collect())
    }

    /// Ψ = Σ x_i² / n, the expected number of decided agents after a
    /// decision part started from this configuration.
    pub fn psi<T: Scalar>(&self) -> T {
        let mut sum = T::zero();
        for &c in &self.counts {
            let c = T::from_count(c);
            sum = sum + c * c;
        }
        sum / T::from_count(self.n)
    }

    /// True when a single opinion holds every agent.
    pub fn is_unanimous(&self) -> bool {
        self.max_support() == self.n
    }
}

/// How an initial configuration is generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitMode {
    /// Counts as equal as possible, remainder going to the lowest ids.
    Balanced,
    /// Balanced, then `ceil(delta / 2)` agents moved from opinion 1 to
    /// opinion 0, so the additive bias is at least `delta`.
    Biased { delta: u64 },
    /// One agent per opinion; requires `k == n`.
    OneEach,
    /// Explicit counts; must sum to `n`.
    Explicit(Vec<u64>),
}

/// Builds the initial configuration for `n` agents and `k` opinions.
pub fn make_initial(n: u64, k: u64, mode: &InitMode) -> Result<Configuration> {
    if k < 1 || n < k {
        return Err(Error::InvalidParams(format!(
            "need 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    match mode {
        InitMode::Balanced => Ok(balanced(n, k)),
        InitMode::Biased { delta } => {
            let base = balanced(n, k);
            if k < 2 {
                return Err(Error::InvalidParams("biased init needs k >= 2".into()));
            }
            let moved = delta.div_ceil(2);
            let mut counts = base.counts;
            if counts[1] < moved {
                return Err(Error::InvalidParams(format!(
                    "bias delta={delta} would drive opinion 1 below zero"
                )));
            }
            counts[0] += moved;
            counts[1] -= moved;
            Configuration::new(counts)
        }
        InitMode::OneEach => {
            if k != n {
                return Err(Error::InvalidParams(format!(
                    "one-each init needs k == n, got k={k}, n={n}"
                )));
            }
            Configuration::new(vec![1; k as usize])
        }
        InitMode::Explicit(counts) => {
            if counts.len() as u64 != k {
                return Err(Error::InvalidParams(format!(
                    "explicit init has {} opinions, expected k={k}",
                    counts.len()
                )));
            }
            if counts.iter().sum::<u64>() != n {
                return Err(Error::InvalidParams(format!(
                    "explicit counts sum to {}, expected n={n}",
                    counts.iter().sum::<u64>()
                )));
            }
            Configuration::new(counts.clone())
        }
    }
}

fn balanced(n: u64, k: u64) -> Configuration {
    let base = n / k;
    let rem = (n % k) as usize;
    let counts = (0..k as usize)
        .map(|i| base + u64::from(i < rem))
        .collect();
    Configuration { counts, n }
}

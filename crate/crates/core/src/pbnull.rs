//! The null distribution of per-address candidate counts.
//!
//! Under the null, a given address lands in topic `t`'s candidate sets with
//! probability `q(k_t) = k_t / 2^U` (the topic shows `k_t` distinct
//! usernames and each matches an unrelated address with probability
//! `2^-U`). The count over a window of topics is then Poisson-binomial: a
//! sum of independent, unequal Bernoullis. Tables hold the PMF and the
//! inclusive upper-tail survival, entirely in the log domain so tails near
//! 1e-60 keep full relative precision.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Deduplicated username counts per topic for one window.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLoad {
    counts: Vec<u32>,
}

impl TopicLoad {
    pub fn new(counts: Vec<u32>, username_bits: u32) -> Result<Self> {
        let cap = 1u64 << username_bits;
        for &k in &counts {
            if k == 0 || k as u64 > cap {
                return Err(Error::usage(format!(
                    "topic username count {k} outside [1, 2^{username_bits}]"
                )));
            }
        }
        Ok(TopicLoad { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn topics(&self) -> usize {
        self.counts.len()
    }
}

/// Probability that a fixed unrelated address matches one of `k` distinct
/// usernames in a topic.
///
/// The hypergeometric ratio `1 - C(2^U - 1, k) / C(2^U, k)` simplifies to
/// exactly `k / 2^U`, which is representable without rounding (an integer
/// divided by a power of two).
pub fn match_prob(k: u32, username_bits: u32) -> Result<f64> {
    let cap = 1u64 << username_bits;
    if k == 0 || k as u64 > cap {
        return Err(Error::usage(format!(
            "k = {k} outside [1, 2^{username_bits}]"
        )));
    }
    Ok(k as f64 / cap as f64)
}

/// Log-domain PMF and survival of the windowed count distribution,
/// truncated at `c_max` with the spilled tail mass tracked explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullTable {
    /// `log Pr(N = n)` for `n` in `0..=c_max`.
    log_pmf: Vec<f64>,
    /// `log Pr(N >= n)` for `n` in `0..=c_max`; includes the remainder.
    log_survival: Vec<f64>,
    /// `log Pr(N > c_max)`, the truncated tail mass.
    log_remainder: f64,
}

impl NullTable {
    pub fn c_max(&self) -> usize {
        self.log_pmf.len() - 1
    }

    pub fn log_pmf(&self) -> &[f64] {
        &self.log_pmf
    }

    pub fn log_remainder(&self) -> f64 {
        self.log_remainder
    }

    /// `log Pr(N >= n)`, the inclusive upper tail. Beyond the truncation
    /// point this returns the tracked remainder bound.
    pub fn log_survival(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self.log_survival.get(n as usize) {
            Some(&v) => v,
            None => self.log_remainder,
        }
    }

    /// Exponentiated mass over `0..=c_max` plus the remainder; 1 up to
    /// rounding.
    pub fn total_mass(&self) -> f64 {
        self.log_pmf.iter().map(|&lp| lp.exp()).sum::<f64>() + self.log_remainder.exp()
    }
}

/// Numerically stable `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Build the null table for one window by convolving per-topic Bernoullis
/// in the log domain. Mass that would shift past `c_max` accumulates into
/// the remainder instead of being dropped.
pub fn window_pmf(loads: &TopicLoad, username_bits: u32, c_max: usize) -> Result<NullTable> {
    if c_max < 1 {
        return Err(Error::usage("c_max must be at least 1"));
    }
    let mut log_pmf = vec![f64::NEG_INFINITY; c_max + 1];
    log_pmf[0] = 0.0;
    let mut log_remainder = f64::NEG_INFINITY;

    for &k in loads.counts() {
        let q = match_prob(k, username_bits)?;
        let log_q = q.ln();
        let log_1mq = (-q).ln_1p();
        if q == 1.0 {
            // Every address matches: the whole distribution shifts by one.
            log_remainder = log_add_exp(log_remainder, log_pmf[c_max]);
            for n in (1..=c_max).rev() {
                log_pmf[n] = log_pmf[n - 1];
            }
            log_pmf[0] = f64::NEG_INFINITY;
            continue;
        }
        log_remainder = log_add_exp(log_remainder, log_pmf[c_max] + log_q);
        for n in (1..=c_max).rev() {
            log_pmf[n] = log_add_exp(log_pmf[n] + log_1mq, log_pmf[n - 1] + log_q);
        }
        log_pmf[0] += log_1mq;
    }

    Ok(finish_table(log_pmf, log_remainder))
}

fn finish_table(log_pmf: Vec<f64>, log_remainder: f64) -> NullTable {
    let mut log_survival = vec![f64::NEG_INFINITY; log_pmf.len()];
    let mut acc = log_remainder;
    for n in (0..log_pmf.len()).rev() {
        acc = log_add_exp(acc, log_pmf[n]);
        log_survival[n] = acc;
    }
    // Pr(N >= 0) is 1 by definition; pin it so downstream comparisons see
    // an exact zero.
    log_survival[0] = 0.0;
    NullTable {
        log_pmf,
        log_survival,
        log_remainder,
    }
}

/// Equivalent construction that groups equal `k` values and convolves
/// binomial PMFs. Kept as an independent route for cross-checking the
/// Bernoulli convolution.
pub fn window_pmf_grouped(
    loads: &TopicLoad,
    username_bits: u32,
    c_max: usize,
) -> Result<NullTable> {
    if c_max < 1 {
        return Err(Error::usage("c_max must be at least 1"));
    }
    let mut groups: std::collections::BTreeMap<u32, u64> = std::collections::BTreeMap::new();
    for &k in loads.counts() {
        *groups.entry(k).or_insert(0) += 1;
    }

    let mut log_pmf = vec![f64::NEG_INFINITY; c_max + 1];
    log_pmf[0] = 0.0;
    let mut log_remainder = f64::NEG_INFINITY;

    for (&k, &m) in &groups {
        let q = match_prob(k, username_bits)?;
        let group = binomial_log_pmf(m, q, c_max);
        let mut next = vec![f64::NEG_INFINITY; c_max + 1];
        // Mass already past the truncation point stays there; mass the
        // group PMF itself carries past c_max joins it.
        let mut next_remainder = log_remainder;
        let group_remainder = group_tail_mass(m, q, c_max);
        if group_remainder != f64::NEG_INFINITY {
            // Combined with the entire current PMF (total mass <= 1).
            let current_mass = log_pmf
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, log_add_exp);
            next_remainder = log_add_exp(next_remainder, current_mass + group_remainder);
        }
        for (i, &lp) in log_pmf.iter().enumerate() {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            for (j, &lg) in group.iter().enumerate() {
                if lg == f64::NEG_INFINITY {
                    continue;
                }
                let mass = lp + lg;
                if i + j <= c_max {
                    next[i + j] = log_add_exp(next[i + j], mass);
                } else {
                    next_remainder = log_add_exp(next_remainder, mass);
                }
            }
        }
        log_pmf = next;
        log_remainder = next_remainder;
    }

    Ok(finish_table(log_pmf, log_remainder))
}

/// `log Pr(Binomial(m, q) = j)` for `j` in `0..=min(m, c_max)`.
fn binomial_log_pmf(m: u64, q: f64, c_max: usize) -> Vec<f64> {
    let top = (m as usize).min(c_max);
    let mut out = vec![f64::NEG_INFINITY; c_max + 1];
    for (j, slot) in out.iter_mut().enumerate().take(top + 1) {
        *slot = binomial_log_term(m, q, j as u64);
    }
    out
}

/// `log Pr(Binomial(m, q) > c_max)`.
fn group_tail_mass(m: u64, q: f64, c_max: usize) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    for j in (c_max as u64 + 1)..=m {
        acc = log_add_exp(acc, binomial_log_term(m, q, j));
    }
    acc
}

fn binomial_log_term(m: u64, q: f64, j: u64) -> f64 {
    if q == 1.0 {
        return if j == m { 0.0 } else { f64::NEG_INFINITY };
    }
    let log_binom =
        ln_gamma(m as f64 + 1.0) - ln_gamma(j as f64 + 1.0) - ln_gamma((m - j) as f64 + 1.0);
    log_binom + j as f64 * q.ln() + (m - j) as f64 * (-q).ln_1p()
}

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Default truncation rule: four times the largest observed count plus
/// headroom, so reported tails always sit far inside the table.
pub fn default_c_max(max_observed: u64) -> usize {
    (4 * max_observed + 64) as usize
}

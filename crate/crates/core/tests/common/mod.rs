//! Shared oracles for the integration suites. Everything here is an
//! independent route to the same quantities the library computes: brute
//! force, exhaustive enumeration, or exact integer arithmetic.

#![allow(dead_code)]

use num_bigint::BigUint;

/// Exhaustive Poisson-binomial PMF by subset enumeration with exact
/// integer arithmetic.
///
/// Every probability `q(k) = k / 2^U` has denominator `2^U`, so the PMF
/// over `T` topics is a rational with denominator `2^(U*T)`. Numerators
/// are summed exactly over all `2^T` on/off patterns; only the final
/// conversion to a log rounds.
pub fn exact_log_pmf(counts: &[u32], username_bits: u32) -> Vec<f64> {
    let t = counts.len();
    assert!(t <= 20, "subset enumeration is 2^T");
    let cap = 1u64 << username_bits;
    let mut numerators = vec![BigUint::from(0u32); t + 1];
    for mask in 0u64..(1u64 << t) {
        let mut product = BigUint::from(1u32);
        let mut ones = 0usize;
        for (j, &k) in counts.iter().enumerate() {
            if (mask >> j) & 1 == 1 {
                product *= k as u64;
                ones += 1;
            } else {
                product *= cap - k as u64;
            }
        }
        numerators[ones] += product;
    }
    let log_denominator = (username_bits as f64) * (t as f64) * std::f64::consts::LN_2;
    numerators.iter().map(|n| big_ln(n) - log_denominator).collect()
}

/// Exact inclusive upper tail from the same numerators.
pub fn exact_log_survival(counts: &[u32], username_bits: u32) -> Vec<f64> {
    let t = counts.len();
    assert!(t <= 20);
    let cap = 1u64 << username_bits;
    let mut numerators = vec![BigUint::from(0u32); t + 1];
    for mask in 0u64..(1u64 << t) {
        let mut product = BigUint::from(1u32);
        let mut ones = 0usize;
        for (j, &k) in counts.iter().enumerate() {
            if (mask >> j) & 1 == 1 {
                product *= k as u64;
                ones += 1;
            } else {
                product *= cap - k as u64;
            }
        }
        numerators[ones] += product;
    }
    let log_denominator = (username_bits as f64) * (t as f64) * std::f64::consts::LN_2;
    let mut tails = vec![BigUint::from(0u32); t + 1];
    let mut acc = BigUint::from(0u32);
    for n in (0..=t).rev() {
        acc += &numerators[n];
        tails[n] = acc.clone();
    }
    tails.iter().map(|n| big_ln(n) - log_denominator).collect()
}

fn big_ln(n: &BigUint) -> f64 {
    use num_bigint::ToBigUint;
    if *n == 0u32.to_biguint().unwrap() {
        return f64::NEG_INFINITY;
    }
    let bits = n.bits();
    if bits <= 1000 {
        // Fits f64's exponent range comfortably after scaling.
        let shift = bits.saturating_sub(52);
        let top: BigUint = n >> shift;
        let top_f64 = top.to_u64_digits().first().copied().unwrap_or(0) as f64;
        top_f64.ln() + (shift as f64) * std::f64::consts::LN_2
    } else {
        panic!("unexpectedly large numerator");
    }
}

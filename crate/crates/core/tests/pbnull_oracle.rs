//! Null-model equivalence against exhaustive subset enumeration in exact
//! arithmetic.

mod common;

use hashslice_core::pbnull::{window_pmf, window_pmf_grouped, TopicLoad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const U: u32 = 16;

fn close_log(a: f64, b: f64, what: &str) {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return;
    }
    let tol = 1e-12 * b.abs().max(1.0);
    assert!((a - b).abs() <= tol, "{what}: {a} vs {b}");
}

fn check_against_oracle(counts: &[u32]) {
    let loads = TopicLoad::new(counts.to_vec(), U).unwrap();
    let c_max = counts.len();
    let table = window_pmf(&loads, U, c_max).unwrap();
    let grouped = window_pmf_grouped(&loads, U, c_max).unwrap();
    let oracle_pmf = common::exact_log_pmf(counts, U);
    let oracle_sf = common::exact_log_survival(counts, U);
    for n in 0..=counts.len() {
        close_log(table.log_pmf()[n], oracle_pmf[n], &format!("pmf n={n}"));
        close_log(grouped.log_pmf()[n], oracle_pmf[n], &format!("grouped pmf n={n}"));
        if n > 0 {
            close_log(
                table.log_survival(n as u64),
                oracle_sf[n],
                &format!("survival n={n}"),
            );
        }
    }
    assert_eq!(table.log_survival(0), 0.0);
}

#[test]
fn fixed_small_instances_match_exact_enumeration() {
    check_against_oracle(&[3, 7, 1, 1, 12]);
    check_against_oracle(&[1]);
    check_against_oracle(&[65536, 5]);
    check_against_oracle(&[1, 1]);
    check_against_oracle(&[40000, 40000, 40000]);
}

#[test]
fn random_instances_match_exact_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    for case in 0..200 {
        let t = rng.random_range(1..=12);
        let counts: Vec<u32> = (0..t)
            .map(|_| {
                // Mix of light, medium, and near-saturated topics.
                match rng.random_range(0..4u32) {
                    0 => rng.random_range(1..=4),
                    1 => rng.random_range(1..=64),
                    2 => rng.random_range(1..=4096),
                    _ => rng.random_range(1..=65536),
                }
            })
            .collect();
        let_assert_case(case, &counts);
    }
}

fn let_assert_case(case: usize, counts: &[u32]) {
    let loads = TopicLoad::new(counts.to_vec(), U).unwrap();
    let table = window_pmf(&loads, U, counts.len()).unwrap();
    let oracle_pmf = common::exact_log_pmf(counts, U);
    let oracle_sf = common::exact_log_survival(counts, U);
    for n in 0..=counts.len() {
        let (a, b) = (table.log_pmf()[n], oracle_pmf[n]);
        if !(a == f64::NEG_INFINITY && b == f64::NEG_INFINITY) {
            assert!(
                (a - b).abs() <= 1e-12 * b.abs().max(1.0),
                "case {case} counts {counts:?} pmf n={n}: {a} vs {b}"
            );
        }
        if n > 0 {
            let (a, b) = (table.log_survival(n as u64), oracle_sf[n]);
            assert!(
                (a - b).abs() <= 1e-12 * b.abs().max(1.0),
                "case {case} counts {counts:?} survival n={n}: {a} vs {b}"
            );
        }
    }
}

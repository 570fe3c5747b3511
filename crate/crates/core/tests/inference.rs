//! Calibration of the permutation tests under the null.

use ccrr_core::inference::{coefficient_tests, local_test, mmd_test, GroupSample};
use ccrr_core::rng::stream;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn null_groups(n1: usize, n2: usize, k: usize, seed: u64) -> (GroupSample, GroupSample) {
    let mut rng = stream(seed, &[]);
    let mut draw = |n| DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let a = draw(n1);
    let b = draw(n2);
    (GroupSample::new(1, a).unwrap(), GroupSample::new(2, b).unwrap())
}

/// Kolmogorov distance from the uniform law.
fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max)
}

#[test]
fn coefficient_p_values_are_uniform_under_the_null() {
    let b = 199;
    let p: Vec<f64> = (0..400)
        .flat_map(|r| {
            let (g1, g2) = null_groups(8, 12, 2, r);
            coefficient_tests(&g1, &g2, b, r).unwrap().p_values
        })
        .collect();
    // 5% critical value plus the lattice spacing of the p-values
    let crit = 1.36 / (p.len() as f64).sqrt() + 1.0 / (b + 1) as f64;
    let d = ks_uniform(p);
    assert!(d < crit, "KS distance {d} ≥ {crit}");
}

#[test]
fn mmd_p_values_are_uniform_under_the_null() {
    let b = 99;
    let p: Vec<f64> = (0..300)
        .map(|r| {
            let (g1, g2) = null_groups(10, 10, 3, 1000 + r);
            mmd_test(&g1, &g2, b, r).unwrap().p_value
        })
        .collect();
    let crit = 1.36 / (p.len() as f64).sqrt() + 1.0 / (b + 1) as f64;
    let d = ks_uniform(p);
    assert!(d < crit, "KS distance {d} ≥ {crit}");
}

#[test]
fn holm_controls_familywise_error() {
    let reps = 400;
    let alpha = 0.05;
    let any = (0..reps)
        .filter(|&r| {
            let (g1, g2) = null_groups(15, 15, 10, 5000 + r);
            !local_test(&g1, &g2, alpha, 199, r).unwrap().rejected.is_empty()
        })
        .count();
    let rate = any as f64 / reps as f64;
    let se = (alpha * (1.0 - alpha) / reps as f64).sqrt();
    assert!(rate <= alpha + 3.0 * se, "familywise rejection rate {rate}");
}

#[test]
fn a_shifted_group_is_detected() {
    let (g1, mut g2) = null_groups(20, 20, 4, 9);
    for i in 0..g2.n() {
        g2.scores[(i, 2)] += 2.0;
    }
    let res = local_test(&g1, &g2, 0.05, 999, 1).unwrap();
    assert_eq!(res.rejected, vec![2]);
    assert!(mmd_test(&g1, &g2, 999, 1).unwrap().p_value < 0.05);
}

use proptest::prelude::*;

use mclab::exact::mc_naive;
use mclab::montecarlo::{
    mc_sample, mean_and_se, regularize, replicate_samples, sample_cov, simulate, simulate_with_input, theoretical_bias,
    theoretical_bias_full_sum,
};
use mclab::reservoir::{generate, gram_exact, GeneratorKind, GeneratorSpec, LinearESN};
use mclab::rng::derive_seed;

fn delay(n: usize) -> LinearESN {
    generate(&GeneratorSpec::new(GeneratorKind::DelayShift, n, None, 0)).unwrap()
}

fn assert_bias_agreement(sys: &LinearESN, t: usize, reps: usize, seed: u64) {
    let n = sys.n();
    let exact = mc_naive(sys, 2 * n + 1, &gram_exact(sys, 1.0).unwrap()).unwrap();
    let samples = replicate_samples(sys, t, 2 * n + 1, reps, seed, 0).unwrap();
    for tau in [0, n, 2 * n] {
        let xs: Vec<f64> = samples.iter().map(|s| s.per_lag[tau] - exact.values[tau]).collect();
        let (mean, se) = mean_and_se(&xs);
        let b = theoretical_bias(sys, t, tau).unwrap();
        assert!((mean - b).abs() <= 3.0 * se, "tau {tau}: observed {mean} vs {b} (se {se})");
    }
}

#[test]
fn bias_agreement_on_delay_line() {
    assert_bias_agreement(&delay(5), 1000, 500, 31);
}

#[test]
fn bias_agreement_on_standardized_cyclic() {
    let sys = regularize(&generate(&GeneratorSpec::new(GeneratorKind::Cyclic, 4, Some(0.8), 0)).unwrap()).unwrap();
    assert_bias_agreement(&sys, 2000, 500, 32);
}

#[test]
fn bias_reference_values() {
    let sys = delay(5);
    assert!((theoretical_bias(&sys, 1000, 2).unwrap() - 7.0 / 998.0).abs() < 1e-15);
    assert!((theoretical_bias(&sys, 1000, 10).unwrap() - 5.0 / 990.0).abs() < 1e-15);
    assert!((theoretical_bias_full_sum(&sys, 1000, 2).unwrap() - 6.0 / 998.0).abs() < 1e-15);
    assert!(theoretical_bias(&sys, 10_000_000, 3).unwrap() < 1e-6);
}

#[test]
fn bias_needs_regular_system() {
    let sys = generate(&GeneratorSpec::new(GeneratorKind::Gaussian, 4, Some(0.5), 1)).unwrap();
    assert!(theoretical_bias(&sys, 1000, 1).is_err());
}

#[test]
fn consistency_in_sample_length() {
    let sys = delay(3);
    let errs: Vec<f64> = [1_000usize, 10_000, 100_000]
        .iter()
        .map(|&t| {
            let s = replicate_samples(&sys, t, 2, 20, derive_seed(9, "consistency", t as u64), 0).unwrap();
            s.iter().map(|x| (x.per_lag[1] - 1.0).abs()).sum::<f64>() / s.len() as f64
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn long_run_on_delay_line() {
    let traj = simulate(&delay(5), 100_000, 4, 0).unwrap();
    let s = mc_sample(&traj, 5).unwrap();
    assert!(s.per_lag.iter().all(|v| (0.97..=1.03).contains(v)), "{:?}", s.per_lag);
}

#[test]
fn far_lag_equals_pure_bias() {
    let sys = delay(5);
    let t = 100_000;
    let xs: Vec<f64> = (0..200)
        .map(|r| {
            let traj = simulate(&sys, t, derive_seed(77, "far_lag", r), 0).unwrap();
            sample_cov(&traj, 50).unwrap().norm_squared()
        })
        .collect();
    let (mean, se) = mean_and_se(&xs);
    let target = 5.0 / (t - 50) as f64;
    assert!((mean - target).abs() <= 3.0 * se, "{mean} vs {target} (se {se})");
}

#[test]
fn delay_states_are_shifted_inputs() {
    let z: Vec<f64> = (0..10).map(|i| i as f64 - 3.5).collect();
    let traj = simulate_with_input(&delay(3), &z, 0).unwrap();
    for t in 2..10 {
        assert_eq!(traj.x[(t, 0)], z[t]);
        assert_eq!(traj.x[(t, 1)], z[t - 1]);
        assert_eq!(traj.x[(t, 2)], z[t - 2]);
    }
}

#[test]
fn zero_input_gives_zero_covariance() {
    let traj = simulate_with_input(&delay(3), &[0.0; 50], 0).unwrap();
    assert_eq!(sample_cov(&traj, 4).unwrap().norm(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sample_capacity_is_nonnegative_and_deterministic(n in 1usize..8, seed in any::<u64>(), t in 50usize..400) {
        let sys = generate(&GeneratorSpec::new(GeneratorKind::Uniform, n, Some(0.8), seed)).unwrap();
        let a = mc_sample(&simulate(&sys, t, seed, 5).unwrap(), 20).unwrap();
        let b = mc_sample(&simulate(&sys, t, seed, 5).unwrap(), 20).unwrap();
        prop_assert!(a.per_lag.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn recursion_holds_exactly(n in 1usize..8, seed in any::<u64>()) {
        let sys = generate(&GeneratorSpec::new(GeneratorKind::Gaussian, n, Some(0.9), seed)).unwrap();
        let traj = simulate(&sys, 60, seed, 0).unwrap();
        for t in 1..60 {
            let prev = traj.x.row(t - 1).transpose();
            let pred = &sys.a * prev + &sys.c * traj.z[t];
            let resid = (pred - traj.x.row(t).transpose()).amax();
            prop_assert!(resid <= 1e-12);
        }
    }
}

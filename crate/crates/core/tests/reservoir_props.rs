use nalgebra::{DMatrix, Schur};
use proptest::prelude::*;

use mclab::McError;
use mclab::reservoir::{
    generate, gram_exact, gram_series, kalman_rank, spectral_rescale, standardize, GeneratorKind, GeneratorSpec, LinearESN,
};

fn kinds() -> impl Strategy<Value = GeneratorKind> {
    prop::sample::select(GeneratorKind::ALL.to_vec())
}

fn spec(kind: GeneratorKind, n: usize, rho: f64, seed: u64) -> GeneratorSpec {
    let rho = if kind == GeneratorKind::DelayShift { None } else { Some(rho) };
    GeneratorSpec::new(kind, n, rho, seed)
}

/// `None` only for the documented non-rescalable outcome of a sparse draw.
fn try_generate(s: &GeneratorSpec) -> Option<LinearESN> {
    match generate(s) {
        Ok(sys) => Some(sys),
        Err(McError::NotRescalable(_)) if matches!(s.kind, GeneratorKind::SparseGaussian | GeneratorKind::ConditionedSparseGaussian) => None,
        Err(e) => panic!("{e}"),
    }
}

/// Spectral radius from nalgebra's own eigenvalue routine, bypassing the
/// crate's spectrum code.
fn nalgebra_radius(a: &DMatrix<f64>) -> Option<f64> {
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)?;
    Some(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Upper bound on the radius from Gelfand's formula, usable on the shift.
fn gelfand_bound(a: &DMatrix<f64>, k: u32) -> f64 {
    let mut p = a.clone();
    for _ in 1..k {
        p = &p * a;
    }
    p.norm().powf(1.0 / k as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_radius_is_inside_unit_disk(kind in kinds(), n in 2usize..16, rho in 0.1f64..0.99, seed in any::<u64>()) {
        let Some(sys) = try_generate(&spec(kind, n, rho, seed)) else { return Ok(()) };
        if kind == GeneratorKind::DelayShift {
            prop_assert_eq!(gelfand_bound(&sys.a, n as u32), 0.0);
        } else {
            let Some(r) = nalgebra_radius(&sys.a) else {
                prop_assert!(gelfand_bound(&sys.a, 64) < 1.0);
                return Ok(());
            };
            prop_assert!(r > 0.0 && r < 1.0);
            prop_assert!((r - rho).abs() < 1e-8, "radius {} vs target {}", r, rho);
        }
    }

    #[test]
    fn generation_is_deterministic(kind in kinds(), n in 1usize..12, seed in any::<u64>()) {
        let s = spec(kind, n, 0.8, seed);
        match (try_generate(&s), try_generate(&s)) {
            (Some(a), Some(b)) => prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap()),
            (None, None) => {}
            _ => prop_assert!(false, "one of two identical draws failed"),
        }
    }

    #[test]
    fn rescaling_preserves_kalman_rank(n in 2usize..10, seed in any::<u64>(), r1 in 0.2f64..0.95, r2 in 0.2f64..0.95) {
        let sys = generate(&spec(GeneratorKind::Gaussian, n, r1, seed)).unwrap();
        let scaled = LinearESN::new(spectral_rescale(&sys.a, r2).unwrap(), sys.c.clone()).unwrap();
        prop_assert_eq!(kalman_rank(&sys), kalman_rank(&scaled));
    }

    #[test]
    fn standardization_is_idempotent(kind in kinds(), n in 2usize..9, seed in any::<u64>()) {
        prop_assume!(kind != GeneratorKind::ConditionedSparseGaussian || n > 2);
        let Some(sys) = try_generate(&spec(kind, n, 0.7, seed)) else { return Ok(()) };
        let Ok(once) = standardize(&sys, &gram_exact(&sys, 1.0).unwrap()) else { return Ok(()) };
        let twice = standardize(&once, &gram_exact(&once, 1.0).unwrap()).unwrap();
        prop_assert!((&once.a - &twice.a).amax() < 1e-8);
        prop_assert!((&once.c - &twice.c).amax() < 1e-8);
    }

    #[test]
    fn lyapunov_matches_series(kind in kinds(), n in 1usize..30, rho in 0.1f64..0.9, seed in any::<u64>()) {
        prop_assume!(kind != GeneratorKind::DelayShift);
        let Some(sys) = try_generate(&spec(kind, n, rho, seed)) else { return Ok(()) };
        let r = sys.spectral_radius();
        let c2 = sys.c.norm_squared();
        let mut m = 1usize;
        while r > 0.0 && c2 * r.powi(2 * m as i32) / (1.0 - r * r) >= 1e-8 {
            m += 1;
        }
        let exact = gram_exact(&sys, 1.0).unwrap();
        let series = gram_series(&sys, 1.0, m + 1).unwrap();
        let bound = c2 * r.powi(2 * m as i32) / (1.0 - r * r) + 1e-10;
        let diff = (&exact.gamma_x - &series.gamma_x).amax();
        prop_assert!(diff <= bound, "diff {} bound {}", diff, bound);
    }
}

#[test]
fn delay_line_rejects_rescaling() {
    let s = GeneratorSpec::new(GeneratorKind::DelayShift, 4, Some(0.5), 0);
    assert!(generate(&s).is_err());
}

#[test]
fn delay_series_is_exact_after_n_terms() {
    let sys = generate(&spec(GeneratorKind::DelayShift, 6, 0.0, 0)).unwrap();
    let exact = gram_exact(&sys, 1.0).unwrap();
    let series = gram_series(&sys, 1.0, 6).unwrap();
    assert!((&exact.gamma_x - &series.gamma_x).amax() < 1e-14);
    assert!((&exact.gamma_x - DMatrix::identity(6, 6)).amax() < 1e-14);
}

#[test]
fn json_round_trip_is_exact() {
    let sys = generate(&spec(GeneratorKind::Uniform, 9, 0.8, 3)).unwrap();
    let back = LinearESN::from_json(&sys.to_json().unwrap()).unwrap();
    assert_eq!(sys.a, back.a);
    assert_eq!(sys.c, back.c);
}

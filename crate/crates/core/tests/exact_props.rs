use proptest::prelude::*;

use mclab::exact::{fischer_curve, gram_cyclic, gram_eigenbasis, mc_naive, mc_neutral, mc_oracle_cyclic, EigenData};
use mclab::reservoir::{draw_mask, generate, gram_exact, kalman_rank, GeneratorKind, GeneratorSpec, LinearESN, MaskSpec};
use mclab::rng::rng_from_seed;

fn random_kind() -> impl Strategy<Value = GeneratorKind> {
    prop::sample::select(vec![
        GeneratorKind::Gaussian,
        GeneratorKind::Uniform,
        GeneratorKind::OrthogonalGaussian,
        GeneratorKind::ConditionedSparseGaussian,
    ])
}

fn dense(kind: GeneratorKind, n: usize, rho: f64, seed: u64) -> Option<LinearESN> {
    generate(&GeneratorSpec::new(kind, n, Some(rho), seed)).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn naive_is_mask_neutral(kind in random_kind(), n in 2usize..=10, seed in any::<u64>(), mseed in any::<u64>()) {
        let Some(base) = dense(kind, n, 0.7, seed) else { return Ok(()) };
        prop_assume!(EigenData::of_system(&base).is_ok());
        let neutral = mc_neutral(&base.a, 3 * n).unwrap();
        let mut rng = rng_from_seed(mseed);
        for _ in 0..2 {
            let sys = base.with_mask(draw_mask(&MaskSpec::default(), n, &mut rng)).unwrap();
            let g = gram_exact(&sys, 1.0).unwrap();
            // A mask nearly orthogonal to a left eigenvector makes G_x
            // ill-conditioned, and then the naive solve is what drifts.
            prop_assume!(g.condition_estimate <= 1e8);
            let curve = mc_naive(&sys, 3 * n, &g).unwrap();
            for (a, b) in curve.values.iter().zip(&neutral.values) {
                prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn naive_total_reaches_n(kind in random_kind(), n in 1usize..=10, rho in 0.2f64..0.8, seed in any::<u64>()) {
        let Some(sys) = dense(kind, n, rho, seed) else { return Ok(()) };
        prop_assume!(kalman_rank(&sys) == n);
        let t_star = (1e-6f64.ln() / rho.ln()).ceil() as usize;
        // The ρ-only tail estimate ignores the 1/σ_min(G) amplification, which
        // matters while T* is comparable to N.
        prop_assume!(t_star >= 2 * n);
        let g = gram_exact(&sys, 1.0).unwrap();
        prop_assume!(g.condition_estimate <= 1e8);
        let curve = mc_naive(&sys, t_star + 1, &g).unwrap();
        prop_assert!((curve.total - n as f64).abs() <= 1e-4, "total {} for N = {}", curve.total, n);
    }

    #[test]
    fn cyclic_naive_matches_closed_form(n in 1usize..=50, rho in 0.3f64..0.95) {
        let sys = generate(&GeneratorSpec::new(GeneratorKind::Cyclic, n, Some(rho), 0)).unwrap();
        let curve = mc_naive(&sys, 3 * n, &gram_cyclic(n, rho)).unwrap();
        for (t, v) in curve.values.iter().enumerate() {
            prop_assert!((v - mc_oracle_cyclic(n, rho, t)).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenbasis_gram_matches_lyapunov(kind in random_kind(), n in 1usize..=30, seed in any::<u64>()) {
        let Some(sys) = dense(kind, n, 0.8, seed) else { return Ok(()) };
        let Ok(eig) = EigenData::of_system(&sys) else { return Ok(()) };
        let a = gram_eigenbasis(&eig).unwrap().g_x;
        let b = gram_exact(&sys, 1.0).unwrap().g_x;
        prop_assert!((&a - &b).amax() <= 1e-6 * b.amax());
    }

    #[test]
    fn fischer_is_dominated(kind in random_kind(), n in 1usize..=10, seed in any::<u64>(), sigma in 0.1f64..3.0) {
        let Some(sys) = dense(kind, n, 0.8, seed) else { return Ok(()) };
        let Ok(mc) = mc_neutral(&sys.a, 3 * n) else { return Ok(()) };
        let f = fischer_curve(&sys, sigma, 3 * n).unwrap();
        for (t, (fi, mi)) in f.iter().zip(&mc.values).enumerate().skip(1) {
            prop_assert!(sigma * sigma * fi < mi + 1e-9, "tau {}: {} vs {}", t, sigma * sigma * fi, mi);
        }
    }

    #[test]
    fn curves_stay_in_unit_range(kind in random_kind(), n in 1usize..=12, seed in any::<u64>()) {
        let Some(sys) = dense(kind, n, 0.85, seed) else { return Ok(()) };
        let g = gram_exact(&sys, 1.0).unwrap();
        prop_assume!(g.condition_estimate <= 1e8);
        let curve = mc_naive(&sys, 4 * n, &g).unwrap();
        prop_assert!(curve.values.iter().all(|&v| (0.0..=1.0 + 1e-6).contains(&v)));
        prop_assert!(curve.total <= n as f64 + 1e-6);
    }
}

#[test]
fn cyclic_oracle_reference_values() {
    // (1 − 0.9⁸) · 0.9⁸, evaluated by hand
    let expect = (1.0 - 0.43046721) * 0.43046721;
    assert!((mc_oracle_cyclic(4, 0.9, 4) - expect).abs() < 1e-15);
    assert!((mc_oracle_cyclic(4, 0.9, 4) - 0.2451651911148159).abs() < 1e-15);
    assert!((mc_oracle_cyclic(4, 0.9, 0) - 0.56953279).abs() < 1e-15);
}

//! Property tests over randomized inputs, one group per module.

use std::f64::consts::PI;
use std::sync::Arc;

use approx::assert_relative_eq;
use harmlil_core::averages::{bloch_approximant_h, ApproximantField, weighted_average_i, weighted_integral_depth};
use harmlil_core::counterexample::checks::parseval_identity_check;
use harmlil_core::harmonic::{
    bloch_seminorm, cone_domain, constant_field, discrete_laplacian, lacunary_series, poisson_extend,
    BoundaryData, GraphDomain, Grid, HarmonicField,
};
use harmlil_core::martingale::{
    bloch_to_martingale, haar_analyze, haar_synthesize, HaarExpansion, MartingaleTable,
};
use harmlil_core::suites::toy_construction;
use harmlil_core::weights::{
    invert_weight_depth, multiplier_symbol, scale_sequence, stieltjes_integrate, ScaleSequence,
};
use harmlil_core::{Depth, Weight};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn builtin_weight() -> impl Strategy<Value = Weight> {
    prop_oneof![
        Just(Weight::w0()),
        (0.05f64..=1.0).prop_map(|b| Weight::power(b).unwrap()),
        (0.25f64..4.0).prop_map(|g| Weight::log_power(g).unwrap()),
    ]
}

// Largest depth whose height is still a positive normal f64.
const LAST_NORMAL_DEPTH: f64 = 708.0;

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn scale_sequence_is_monotone_and_doubling(w in builtin_weight(), k in 1usize..=40) {
        match scale_sequence(&w, k) {
            Ok(seq) => {
                let d2 = w.doubling_constant().powi(2);
                for i in 1..seq.len() {
                    prop_assert!(seq.s[i] < seq.s[i - 1]);
                    prop_assert!(seq.alpha[i] >= seq.alpha[i - 1]);
                    let ratio = w.eval_depth(Depth(seq.alpha[i] as f64 * std::f64::consts::LN_2))
                        / 2f64.powi(i as i32);
                    prop_assert!(ratio >= 1.0 / d2 - 1e-12 && ratio <= d2 + 1e-12, "ratio {ratio}");
                }
            }
            // only allowed when s_k is not representable as a height
            Err(_) => {
                let depth = invert_weight_depth(&w, 2f64.powi(k as i32), 1e-12)
                    .map(|d| d.0)
                    .unwrap_or(f64::INFINITY);
                prop_assert!(depth > LAST_NORMAL_DEPTH, "{} failed at K = {k} with depth {depth}", w.label());
            }
        }
    }

    #[test]
    fn stieltjes_is_additive(
        w in builtin_weight(),
        a in 1e-6f64..0.3,
        frac_b in 0.1f64..0.9,
        freq in 0.5f64..6.0,
    ) {
        let tol = 1e-9;
        let c = 1.0;
        let b = a + frac_b * (c - a);
        let g = |y: f64| (freq * y).cos() + y;
        let whole = stieltjes_integrate(g, &w, a, c, tol).unwrap();
        let left = stieltjes_integrate(g, &w, a, b, tol).unwrap();
        let right = stieltjes_integrate(g, &w, b, c, tol).unwrap();
        prop_assert!((whole - left - right).abs() <= 2.0 * tol * (1.0 + whole.abs()));
    }

    #[test]
    fn stieltjes_of_one_is_the_mass(w in builtin_weight(), a in 1e-9f64..0.5, span in 0.01f64..1.0) {
        let tol = 1e-9;
        let b = (a + span).min(1.0);
        let got = stieltjes_integrate(|_| 1.0, &w, a, b, tol).unwrap();
        let exact = 1.0 / w.eval(b).unwrap() - 1.0 / w.eval(a).unwrap();
        prop_assert!((got - exact).abs() <= tol);
    }

    #[test]
    fn multiplier_is_monotone_in_the_unit_interval(
        w in builtin_weight(),
        mut taus in prop::collection::vec(-50.0f64..50.0, 2..8),
    ) {
        taus.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        let ms: Vec<f64> = taus.iter().map(|&t| multiplier_symbol(&w, t, 1e-10).unwrap()).collect();
        for (m, t) in ms.iter().zip(&taus) {
            prop_assert!(*m > 0.0 && *m <= 1.0 + 1e-12, "m({t}) = {m}");
        }
        for pair in ms.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-10);
        }
    }
}

fn test_fields(seed: u64) -> Vec<Box<dyn HarmonicField>> {
    let w = Weight::power(0.5).unwrap();
    let bump = BoundaryData::new("bump", -1.0, 1.0, |t| 1.0 - t * t).unwrap();
    vec![
        Box::new(constant_field(2.5)),
        Box::new(lacunary_series(&w, 6, None, seed).unwrap()),
        Box::new(poisson_extend(bump, 1e-11).unwrap()),
    ]
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn fields_are_discretely_harmonic(seed in any::<u64>(), x in -2.0f64..2.0, y in 0.05f64..2.0) {
        for u in test_fields(seed) {
            let lap = discrete_laplacian(u.as_ref(), x, y, 1e-4 * y).unwrap();
            let c = u.eval(x, y).unwrap();
            prop_assert!(lap.abs() <= 1e-3 * (1.0 + c.abs()) / (y * y), "{:?}: {lap}", u.kind());
        }
    }

    #[test]
    fn gradients_match_central_differences(seed in any::<u64>(), x in -2.0f64..2.0, y in 0.05f64..2.0) {
        for u in test_fields(seed) {
            let (gx, gy) = u.grad(x, y).unwrap();
            let h = 1e-5 * y;
            let fx = (u.eval(x + h, y).unwrap() - u.eval(x - h, y).unwrap()) / (2.0 * h);
            let fy = (u.eval(x, y + h).unwrap() - u.eval(x, y - h).unwrap()) / (2.0 * h);
            let scale = 1.0 + gx.hypot(gy);
            prop_assert!((gx - fx).abs() <= 1e-5 * scale, "{:?}: {gx} vs {fx}", u.kind());
            prop_assert!((gy - fy).abs() <= 1e-5 * scale, "{:?}: {gy} vs {fy}", u.kind());
        }
    }

    #[test]
    fn cone_domain_is_lipschitz(
        sigma in prop::collection::vec(-3.0f64..3.0, 1..5),
        m in 0.2f64..5.0,
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 20),
    ) {
        let dom = cone_domain(&sigma, m).unwrap();
        for &x0 in &sigma {
            prop_assert_eq!(dom.phi(x0), 0.0);
        }
        for (x, xp) in pairs {
            prop_assert!((dom.phi(x) - dom.phi(xp)).abs() <= dom.lip_constant() * (x - xp).abs() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn averages_are_additive(seed in any::<u64>(), x in 0.0f64..(2.0 * PI), d1 in 1e-4f64..1.0, frac in 0.01f64..0.99) {
        let tol = 1e-9;
        let w = Weight::power(0.5).unwrap();
        let u = lacunary_series(&w, 12, None, seed).unwrap();
        let dom = GraphDomain::flat();
        let d2 = d1 * frac;
        let i1 = weighted_average_i(&u, &dom, &w, x, d1, tol).unwrap();
        let i2 = weighted_average_i(&u, &dom, &w, x, d2, tol).unwrap();
        let piece = weighted_integral_depth(&u, &dom, &w, x, Depth::of_height(d1), Depth::of_height(d2), tol).unwrap();
        prop_assert!((i2 - i1 - piece).abs() <= 2.0 * tol * (1.0 + i2.abs()), "{} vs {}", i2 - i1, piece);
    }

    #[test]
    fn approximant_is_lipschitz_in_log(seed in any::<u64>(), x in 0.0f64..(2.0 * PI), t1 in 1e-3f64..1.0, t2 in 1e-3f64..1.0) {
        let tol = 1e-9;
        let w = Weight::power(0.5).unwrap();
        let u = lacunary_series(&w, 10, None, seed).unwrap();
        let dom = GraphDomain::flat();
        let h = |t: f64| bloch_approximant_h(&u, &dom, &w, x, t, tol).unwrap();
        let field = ApproximantField::new(Arc::new(u.clone()), w.clone(), tol);
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let n = 200;
        let segment = (0..=n).map(|i| (x, lo * (hi / lo).powf(i as f64 / n as f64))).collect();
        let bound = bloch_seminorm(&field, &dom, &Grid::new(segment)).unwrap();
        let lhs = (h(t1) - h(t2)).abs();
        prop_assert!(lhs <= bound * (t1.ln() - t2.ln()).abs() * (1.0 + tol) + 1e-12, "{lhs} vs {bound}");
    }
}

fn expansion(mean: f64, coeffs: Vec<f64>, rank: u32) -> HaarExpansion {
    let mut it = coeffs.into_iter();
    let coeffs = (0..=rank).map(|r| (0..1usize << r).map(|_| it.next().unwrap()).collect()).collect();
    HaarExpansion { mean, coeffs }
}

fn random_expansion() -> impl Strategy<Value = HaarExpansion> {
    (0u32..=6).prop_flat_map(|rank| {
        let n = (1usize << (rank + 1)) - 1;
        (-2.0f64..2.0, prop::collection::vec(-1.0f64..1.0, n)).prop_map(move |(m, c)| expansion(m, c, rank))
    })
}

/// `∫_0^1 g` for `g` constant on the cells of `rank`.
fn cell_integral(rank: u32, g: impl Fn(f64) -> f64) -> f64 {
    let n = 1u64 << rank;
    (0..n).map(|i| g((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn haar_round_trip(e in random_expansion()) {
        let r = e.max_rank().unwrap();
        let back = haar_analyze(|t| haar_synthesize(&e, r, t).unwrap(), r, 1e-13).unwrap();
        assert_relative_eq!(back.mean, e.mean, epsilon = 1e-12);
        for (a, b) in back.coeffs.iter().flatten().zip(e.coeffs.iter().flatten()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn haar_parseval(e in random_expansion()) {
        let r = e.max_rank().unwrap();
        for k in 0..=r {
            let square = cell_integral(k + 1, |t| haar_synthesize(&e, k, t).unwrap().powi(2));
            let quad = cell_integral(k + 1, |t| e.quadratic_function(k, t).unwrap());
            prop_assert!((square - quad).abs() <= 1e-10, "k = {k}: {square} vs {quad}");
        }
    }

    #[test]
    fn exact_tables_satisfy_the_tower_property(freq in 1.0f64..20.0, phase in 0.0f64..(2.0 * PI), steps in prop::collection::vec(1u32..3, 1..5)) {
        let mut filtration = vec![0];
        for s in steps {
            filtration.push(filtration.last().unwrap() + s);
        }
        let table = MartingaleTable::from_function(|t| (freq * t + phase).sin(), filtration, 1e-12).unwrap();
        prop_assert!(table.tower_residual() <= 1e-10);
        for t in (0..64).map(|i| (i as f64 + 0.5) / 64.0) {
            let qs: Vec<f64> = (0..table.len()).map(|k| table.quadratic_function(k, t).unwrap()).collect();
            prop_assert!(qs.windows(2).all(|p| p[1] >= p[0]));
        }
    }

    #[test]
    fn quadratic_function_is_non_decreasing(e in random_expansion(), t in 0.0f64..1.0) {
        let t = t.max(f64::MIN_POSITIVE);
        let r = e.max_rank().unwrap();
        let qs: Vec<f64> = (0..=r).map(|k| e.quadratic_function(k, t).unwrap()).collect();
        prop_assert!(qs.windows(2).all(|p| p[1] >= p[0]));
    }
}

fn pow1_scales() -> ScaleSequence {
    scale_sequence(&Weight::power(1.0).unwrap(), 8).unwrap()
}

proptest! {
    #![proptest_config(config(6))]

    #[test]
    fn martingale_defect_is_linear(seed in any::<u64>(), c in -8.0f64..8.0, n in -3i32..4) {
        let w = Weight::power(1.0).unwrap();
        let u = lacunary_series(&w, 10, None, seed).unwrap();
        let dom = GraphDomain::flat();
        let scales = pow1_scales();
        let build = |factor: f64| {
            bloch_to_martingale(|x, y| Ok(factor * u.eval(x, y)?), &dom, &scales, 1.0, 6).unwrap()
        };
        let base = build(1.0);
        // powers of two scale every rounding step exactly
        let pow2 = 2f64.powi(n) * c.signum();
        let exact = build(pow2);
        for (d, b) in exact.defects.iter().zip(&base.defects) {
            prop_assert_eq!(*d, pow2.abs() * b);
        }
        let general = build(c);
        for (d, b) in general.defects.iter().zip(&base.defects) {
            prop_assert!((d - c.abs() * b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn construction_is_deterministic_and_consistent(a in 2u32..=4, g1 in 1u32..=2, g2 in 1u32..=2) {
        let beta = vec![0, a * g1, (a * (g1 + g2)).min(12)];
        prop_assume!(beta[2] > beta[1]);
        let last = *beta.last().unwrap();
        let mut first = toy_construction(a, beta.clone()).unwrap();
        let mut second = toy_construction(a, beta).unwrap();
        first.materialize_all(last).unwrap();
        second.materialize_all(last).unwrap();
        prop_assert_eq!(first.snapshot(), second.snapshot());
        prop_assert!(first.check_consistency().unwrap() > 0);
        for j in 1..first.params().generations() {
            let report = parseval_identity_check(&first, j, last.min(12)).unwrap();
            prop_assert!(report.residual <= 1e-8, "generation {j}: {}", report.residual);
        }
    }
}

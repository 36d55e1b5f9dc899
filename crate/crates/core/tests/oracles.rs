//! Derived values checked against independent implementations: closed forms, plain
//! bisection, brute-force integration and finer partitions.

use std::f64::consts::{E, PI};

use approx::assert_relative_eq;
use harmlil_core::averages::weighted_average_i;
use harmlil_core::harmonic::{lacunary_series, poisson_extend, BoundaryData, GraphDomain, HarmonicField};
use harmlil_core::martingale::{haar_analyze, DyadicInterval, MartingaleTable};
use harmlil_core::weights::{invert_weight, multiplier_symbol, scale_sequence, stieltjes_integrate};
use harmlil_core::Weight;

fn w0(y: f64) -> f64 {
    if y >= 1.0 {
        1.0
    } else {
        (E / y).ln().ln() + 1.0
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

#[test]
fn w0_level_two_by_bisection() {
    let y = bisect(|y| w0(y) - 2.0, 1e-3, 0.9);
    assert_relative_eq!(y, (1.0 - E).exp(), max_relative = 1e-12);
    assert_relative_eq!(Weight::w0().eval(y).unwrap(), 2.0, max_relative = 1e-12);
}

#[test]
fn w0_scales_match_closed_forms() {
    let w = Weight::w0();
    let seq = scale_sequence(&w, 2).unwrap();
    let expected = [1.0, (1.0 - E).exp(), E * (-E.powi(3)).exp()];
    for (s, e) in seq.s.iter().zip(expected) {
        assert_relative_eq!(*s, e, max_relative = 1e-9);
    }
    // the same level through the log-log form, solved in log space
    let ln_s = bisect(|l| (1.0 - l).ln() + 1.0 - 4.0, -100.0, 0.0);
    assert_relative_eq!(invert_weight(&w, 4.0, 1e-12).unwrap().ln(), ln_s, max_relative = 1e-9);
}

#[test]
fn identity_against_reciprocal_weight() {
    let w = Weight::power(1.0).unwrap();
    for delta in [1e-6, 0.01, 0.3, 0.9] {
        let got = stieltjes_integrate(|y| y, &w, delta, 1.0, 1e-12).unwrap();
        assert_relative_eq!(got, 0.5 * (1.0 - delta * delta), max_relative = 1e-10);
    }
}

#[test]
fn multiplier_closed_form() {
    let w = Weight::power(1.0).unwrap();
    for tau in [0.25f64, 1.0, -3.0, 40.0] {
        let a = 2.0 * PI * tau.abs();
        assert_relative_eq!(multiplier_symbol(&w, tau, 1e-12).unwrap(), (1.0 - (-a).exp()) / a, max_relative = 1e-9);
    }
}

#[test]
fn poisson_indicator_matches_arctan() {
    let f = BoundaryData::new("indicator", -1.0, 1.0, |_| 1.0).unwrap();
    let u = poisson_extend(f, 1e-12).unwrap();
    for (x, y) in [(0.0f64, 1.0f64), (0.5, 0.3), (2.0, 0.7)] {
        let exact = (((1.0 - x) / y).atan() + ((1.0 + x) / y).atan()) / PI;
        assert_relative_eq!(u.eval(x, y).unwrap(), exact, max_relative = 1e-9);
    }
}

#[test]
fn average_matches_a_finer_partition() {
    let levels = 12;
    let phases: Vec<f64> = (0..=levels).map(|k| 0.7 * k as f64).collect();
    let w = Weight::w0();
    let u = lacunary_series(&w, levels, Some(phases.clone()), 0).unwrap();
    let c: Vec<f64> = (0..=levels)
        .map(|k| if k == 0 { 1.0 } else { w0(2f64.powi(-(k as i32))) - w0(2f64.powi(1 - k as i32)) })
        .collect();
    let direct = |x: f64, y: f64| -> f64 {
        (0..=levels)
            .map(|k| {
                let f = 2f64.powi(k as i32);
                c[k] * (-f * y).exp() * (f * x + phases[k]).cos()
            })
            .sum()
    };
    let delta = 2f64.powi(-10);
    let zeta_max = -delta.ln();
    for x in [0.0, 1.3, 4.0] {
        // with y = e^{-ζ}: 1/w0 = 1/(1 + ln(1 + ζ)), so d(1/w0) = -dζ / ((1 + ζ)(1 + ln(1 + ζ))²)
        let integrand = |z: f64| direct(x, (-z).exp()) / ((1.0 + z) * (1.0 + (1.0 + z).ln()).powi(2));
        let oracle = simpson(integrand, 0.0, zeta_max, 1 << 16);
        let got = weighted_average_i(&u, &GraphDomain::flat(), &w, x, delta, 1e-10).unwrap();
        assert!((got - oracle).abs() <= 1e-6, "x = {x}: {got} vs {oracle}");
    }
}

#[test]
fn haar_coefficients_of_the_identity() {
    let e = haar_analyze(|t| t, 6, 1e-13).unwrap();
    assert_relative_eq!(e.mean, 0.5, epsilon = 1e-13);
    for r in 0..=6u32 {
        for i in 0..1u64 << r {
            let iv = DyadicInterval::new(r, i).unwrap();
            // ψ_I is -1 then +1; integrate each half on its own so the jump is never sampled
            let brute = simpson(|t| t, iv.center(), iv.right(), 64) - simpson(|t| t, iv.left(), iv.center(), 64);
            let b = e.coeff(iv);
            assert_relative_eq!(b, brute / iv.length(), epsilon = 1e-13);
            assert_relative_eq!(b, iv.length() / 4.0, epsilon = 1e-13);
        }
    }
}

#[test]
fn quadratic_function_of_the_identity() {
    let table = MartingaleTable::from_function(|t| t, (0..=7).collect(), 1e-13).unwrap();
    for t in [0.01, 0.3, 0.5, 0.77, 1.0] {
        for k in 0..7usize {
            let closed = 0.25 + (0..k).map(|m| (2f64.powi(-(m as i32)) / 4.0).powi(2)).sum::<f64>();
            assert_relative_eq!(table.quadratic_function(k, t).unwrap(), closed, epsilon = 1e-12);
        }
    }
}

//! Weighted vertical averages `I(x, δ)`, the approximant `H`, the operator `Θ_ε` and
//! LIL-normalised profiles.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harmonic::{box_field, BoundaryData, FieldKind, GraphDomain, HarmonicField, Mode};
use crate::quadrature::{try_integrate, QuadOptions};
use crate::weights::{stieltjes_integrate_depth, stieltjes_to_boundary, Depth, StieltjesOptions, Weight};

/// Depth below which `H(x, 0)` treats the field as settled.
pub const BOUNDARY_CUT_DEPTH: f64 = 200.0;

/// `ln ln ln w` is positive only above this weight value, `e^e`.
pub fn lil_guard() -> f64 {
    std::f64::consts::E.exp()
}

/// `∫ u(x, φ(x) + y) d(1/w(y))` over the depths `[top, bottom]`.
pub fn weighted_integral_depth(
    u: &dyn HarmonicField,
    dom: &GraphDomain,
    w: &Weight,
    x: f64,
    top: Depth,
    bottom: Depth,
    tol: f64,
) -> Result<f64> {
    let base = dom.phi(x);
    stieltjes_integrate_depth(
        |d| u.eval_deep(x, base, d),
        w,
        top,
        bottom,
        &[],
        &StieltjesOptions::with_tol(tol),
    )
}

/// `I(x, δ) = ∫_δ^1 u(x, φ(x) + y) d(1/w(y))`.
pub fn weighted_average_i(
    u: &dyn HarmonicField,
    dom: &GraphDomain,
    w: &Weight,
    x: f64,
    delta: f64,
    tol: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::domain(format!("δ must lie in (0, 1], got {delta}")));
    }
    weighted_integral_depth(u, dom, w, x, Depth(0.0), Depth::of_height(delta), tol)
}

/// `I(x, e^{-ℓ})` for depths whose height may underflow.
pub fn weighted_average_i_depth(
    u: &dyn HarmonicField,
    dom: &GraphDomain,
    w: &Weight,
    x: f64,
    delta: Depth,
    tol: f64,
) -> Result<f64> {
    if !(delta.0 >= 0.0) {
        return Err(Error::domain(format!("depth must be non-negative, got {}", delta.0)));
    }
    weighted_integral_depth(u, dom, w, x, Depth(0.0), delta, tol)
}

fn boundary_cut(t: f64) -> Depth {
    if t > 0.0 {
        Depth((-t.ln()).max(0.0) + 40.0)
    } else {
        Depth(BOUNDARY_CUT_DEPTH)
    }
}

/// `H(x, t) = ∫_0^1 u(x, φ(x) + t + y) d(1/w(y))`.
///
/// Returns [`Error::Divergence`] when `u` grows too fast near the boundary for the
/// integral to settle.
pub fn bloch_approximant_h(
    u: &dyn HarmonicField,
    dom: &GraphDomain,
    w: &Weight,
    x: f64,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("H needs t >= 0, got {t}")));
    }
    let base = dom.phi(x) + t;
    stieltjes_to_boundary(
        |d| u.eval_deep(x, base, d),
        w,
        Depth(0.0),
        boundary_cut(t),
        &StieltjesOptions::with_tol(tol),
    )
}

/// `H` as a field on the upper half-plane, `(x, t) ↦ H(x, t)` above `φ ≡ 0`.
///
/// The gradient is the average of the gradient of `u`.
pub struct ApproximantField {
    u: Arc<dyn HarmonicField>,
    w: Weight,
    tol: f64,
}

impl ApproximantField {
    pub fn new(u: Arc<dyn HarmonicField>, w: Weight, tol: f64) -> ApproximantField {
        ApproximantField { u, w, tol }
    }

    fn average<G>(&self, t: f64, g: G) -> Result<f64>
    where
        G: FnMut(Depth) -> Result<f64>,
    {
        stieltjes_to_boundary(g, &self.w, Depth(0.0), boundary_cut(t), &StieltjesOptions::with_tol(self.tol))
    }
}

impl HarmonicField for ApproximantField {
    fn eval(&self, x: f64, y: f64) -> Result<f64> {
        bloch_approximant_h(self.u.as_ref(), &GraphDomain::flat(), &self.w, x, y, self.tol)
    }

    fn grad(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !(y > 0.0) {
            return Err(Error::domain(format!("field evaluated at height {y}; need y > 0")));
        }
        let gx = self.average(y, |d| Ok(self.u.grad(x, y + d.height())?.0))?;
        let gy = self.average(y, |d| Ok(self.u.grad(x, y + d.height())?.1))?;
        Ok((gx, gy))
    }

    fn kind(&self) -> FieldKind {
        FieldKind::Approximant
    }
}

/// Grid suprema of `|H(x, θ) - I(x, θ)|`, one per `θ`.
#[derive(Clone, Debug)]
pub struct ErrorScan {
    pub thetas: Vec<f64>,
    pub sups: Vec<f64>,
}

impl ErrorScan {
    pub fn sup(&self) -> f64 {
        self.sups.iter().copied().fold(0.0, f64::max)
    }
}

/// `max |H(x, θ) - I(x, θ)|` over `xs`, reported per `θ`.
///
/// Over a flat boundary a field made of [`Mode`]s is handled mode by mode: both
/// averages act on `e^{-f y}` as scalars, so each `θ` costs one pair of integrals per
/// mode and `xs` can be dense.
pub fn approximation_error_scan(
    u: &dyn HarmonicField,
    dom: &GraphDomain,
    w: &Weight,
    xs: &[f64],
    thetas: &[f64],
    tol: f64,
) -> Result<ErrorScan> {
    if xs.is_empty() || thetas.is_empty() {
        return Err(Error::domain("error scan needs non-empty x and θ grids"));
    }
    if let Some(theta) = thetas.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::domain(format!("θ must lie in (0, 1], got {theta}")));
    }
    let modes = if dom.is_flat() { u.modes() } else { None };
    let sups = match modes {
        Some(modes) => thetas
            .iter()
            .map(|&theta| modal_error_sup(&modes, w, xs, theta, tol))
            .collect::<Result<Vec<f64>>>()?,
        None => thetas
            .par_iter()
            .map(|&theta| {
                let mut best: f64 = 0.0;
                for &x in xs {
                    let h = bloch_approximant_h(u, dom, w, x, theta, tol)?;
                    let i = weighted_average_i(u, dom, w, x, theta, tol)?;
                    best = best.max((h - i).abs());
                }
                Ok(best)
            })
            .collect::<Result<Vec<f64>>>()?,
    };
    Ok(ErrorScan {
        thetas: thetas.to_vec(),
        sups,
    })
}

fn modal_error_sup(modes: &[Mode], w: &Weight, xs: &[f64], theta: f64, tol: f64) -> Result<f64> {
    let opts = StieltjesOptions::with_tol(tol);
    let gains = modes
        .par_iter()
        .map(|m| {
            let h = stieltjes_to_boundary(
                |d| Ok((-m.freq * (theta + d.height())).exp()),
                w,
                Depth(0.0),
                boundary_cut(theta),
                &opts,
            )?;
            let i = stieltjes_integrate_depth(
                |d| Ok((-m.freq * d.height()).exp()),
                w,
                Depth(0.0),
                Depth::of_height(theta),
                &[],
                &opts,
            )?;
            Ok(m.amp * (h - i))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(xs
        .par_iter()
        .map(|&x| {
            modes
                .iter()
                .zip(&gains)
                .map(|(m, g)| g * (m.freq * x + m.phase).cos())
                .sum::<f64>()
                .abs()
        })
        .reduce(|| 0.0, f64::max))
}

/// Each value is at most `slack` times the median of the values up to and including it.
pub fn trend_free(values: &[f64], slack: f64) -> bool {
    (0..values.len()).all(|k| {
        let mut head = values[..=k].to_vec();
        head.sort_by(f64::total_cmp);
        let n = head.len();
        let median = if n % 2 == 1 {
            head[n / 2]
        } else {
            0.5 * (head[n / 2 - 1] + head[n / 2])
        };
        values[k] <= slack * median + 1e-300
    })
}

fn theta_quad(tol: f64) -> QuadOptions {
    QuadOptions {
        abs_tol: tol * 1e-2,
        rel_tol: tol,
        max_intervals: 20_000,
    }
}

/// `Θ_ε f(x) = ∫_ε^1 (f(x + h) - f(x - h)) h^{-α-1} dh`.
pub fn theta_epsilon(f: &BoundaryData, alpha: f64, eps: f64, x: f64, tol: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::domain(format!("ε must lie in (0, 1/2), got {eps}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("α must lie in (0, 1), got {alpha}")));
    }
    let mut breaks: Vec<f64> = f.knots().iter().map(|&k| (k - x).abs()).collect();
    let (lo, hi) = f.support();
    breaks.extend([(lo - x).abs(), (hi - x).abs()]);
    try_integrate(
        |h| Ok((f.eval(x + h) - f.eval(x - h)) * h.powf(-alpha - 1.0)),
        eps,
        1.0,
        &breaks,
        &theta_quad(tol),
    )
}

/// `((1 - α)/2) Θ_ε f(x) - I(x, ε)` for the box field of `f` under `w(h) = h^{α-1}`.
pub fn theta_identity_residual(f: &BoundaryData, alpha: f64, eps: f64, x: f64, tol: f64) -> Result<f64> {
    let theta = theta_epsilon(f, alpha, eps, x, tol)?;
    let data = match f.holder_alpha() {
        Some(_) => f.clone(),
        None => f.clone().with_holder(alpha)?,
    };
    let u = box_field(data)?;
    let w = Weight::power(1.0 - alpha)?;
    let mut breaks: Vec<Depth> = f
        .knots()
        .iter()
        .chain([f.support().0, f.support().1].iter())
        .map(|&k| (k - x).abs())
        .filter(|&h| h > 0.0)
        .map(Depth::of_height)
        .collect();
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let i = stieltjes_integrate_depth(
        |d| u.eval(x, d.height()),
        &w,
        Depth(0.0),
        Depth::of_height(eps),
        &breaks,
        &StieltjesOptions::with_tol(tol),
    )?;
    Ok(0.5 * (1.0 - alpha) * theta - i)
}

/// `I(x, δ)` along a decreasing `δ` grid with LIL-normalised ratios.
#[derive(Clone, Debug)]
pub struct AverageProfile {
    pub x: f64,
    /// Depths `ℓ = ln(1/δ)`, increasing.
    pub depths: Vec<Depth>,
    pub values: Vec<f64>,
    /// `I / sqrt(ln w · ln ln ln w)` where `w(δ) > e^e`, else `None`.
    pub ratios: Vec<Option<f64>>,
    /// Smallest depth whose weight exceeds `e^e`.
    pub guard_depth: Depth,
}

impl AverageProfile {
    pub fn deltas(&self) -> Vec<f64> {
        self.depths.iter().map(|d| d.height()).collect()
    }

    pub fn max_abs_ratio(&self) -> Option<f64> {
        self.ratios.iter().flatten().map(|r| r.abs()).reduce(f64::max)
    }
}

/// `ln w · ln ln ln w`, or `None` at or below the guard.
pub fn lil_normalizer(wv: f64) -> Option<f64> {
    if wv > lil_guard() {
        let l = wv.ln();
        let lll = l.ln().ln();
        (lll > 0.0).then(|| (l * lll).sqrt())
    } else {
        None
    }
}

/// Profile of `I(x, δ)` over increasing depths, accumulated by additivity.
pub fn lil_ratio_profile(
    u: &dyn HarmonicField,
    dom: &GraphDomain,
    w: &Weight,
    x: f64,
    depths: &[Depth],
    tol: f64,
) -> Result<AverageProfile> {
    if depths.is_empty() {
        return Err(Error::domain("profile needs at least one δ"));
    }
    if depths.iter().any(|d| !(d.0 >= 0.0)) || depths.windows(2).any(|p| !(p[0].0 < p[1].0)) {
        return Err(Error::domain("δ grid must be strictly decreasing inside (0, 1]"));
    }
    let mut values = Vec::with_capacity(depths.len());
    let mut acc = 0.0;
    let mut prev = Depth(0.0);
    for &d in depths {
        acc += weighted_integral_depth(u, dom, w, x, prev, d, tol)?;
        values.push(acc);
        prev = d;
    }
    let ratios = depths
        .iter()
        .zip(&values)
        .map(|(&d, &v)| lil_normalizer(w.eval_depth(d)).map(|n| v / n))
        .collect();
    let guard_depth = crate::weights::invert_weight_depth(w, lil_guard(), 1e-12)?;
    Ok(AverageProfile {
        x,
        depths: depths.to_vec(),
        values,
        ratios,
        guard_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic::{constant_field, lacunary_series, SyntheticField};

    #[test]
    fn average_examples() {
        let dom = GraphDomain::flat();
        for w in [Weight::w0(), Weight::power(0.5).unwrap()] {
            let d = 1e-3;
            let v = weighted_average_i(&constant_field(3.0), &dom, &w, 0.2, d, 1e-10).unwrap();
            assert!((v - 3.0 * (1.0 - 1.0 / w.eval(d).unwrap())).abs() < 1e-12);
            let syn = SyntheticField::new(w.clone(), 1.0);
            let v = weighted_average_i(&syn, &dom, &w, 0.2, d, 1e-10).unwrap();
            assert!((v / w.eval(d).unwrap().ln() - 1.0).abs() < 1e-8);
        }
        assert!(weighted_average_i(&constant_field(1.0), &dom, &Weight::w0(), 0.0, 0.0, 1e-9).is_err());
        assert!(weighted_average_i(&constant_field(1.0), &dom, &Weight::w0(), 0.0, 1.5, 1e-9).is_err());
    }

    /// Hides the modal form so the scan takes the pointwise route.
    struct Opaque(crate::harmonic::LacunaryField);

    impl HarmonicField for Opaque {
        fn eval(&self, x: f64, y: f64) -> Result<f64> {
            self.0.eval(x, y)
        }
        fn grad(&self, x: f64, y: f64) -> Result<(f64, f64)> {
            self.0.grad(x, y)
        }
        fn kind(&self) -> FieldKind {
            self.0.kind()
        }
        fn eval_deep(&self, x: f64, base: f64, depth: Depth) -> Result<f64> {
            self.0.eval_deep(x, base, depth)
        }
    }

    #[test]
    fn modal_scan_matches_pointwise_scan() {
        let dom = GraphDomain::flat();
        for w in [Weight::w0(), Weight::power(0.5).unwrap()] {
            let u = lacunary_series(&w, 12, None, 3).unwrap();
            let xs = [0.0, 0.4, 1.3, 2.9];
            let thetas = [0.5, 0.03, 1e-3];
            let fast = approximation_error_scan(&u, &dom, &w, &xs, &thetas, 1e-9).unwrap();
            let slow = approximation_error_scan(&Opaque(u), &dom, &w, &xs, &thetas, 1e-9).unwrap();
            for (a, b) in fast.sups.iter().zip(&slow.sups) {
                assert!((a - b).abs() < 1e-7 * (1.0 + b), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn approximant_examples() {
        let dom = GraphDomain::flat();
        let w = Weight::w0();
        let h = bloch_approximant_h(&constant_field(2.5), &dom, &w, 0.0, 0.0, 1e-10).unwrap();
        assert!((h - 2.5).abs() < 1e-8);
        let syn = SyntheticField::new(w.clone(), 1.0);
        assert!(matches!(
            bloch_approximant_h(&syn, &dom, &w, 0.0, 0.0, 1e-9),
            Err(Error::Divergence(_))
        ));
        let p = Weight::power(0.5).unwrap();
        let syn = SyntheticField::new(p.clone(), 1.0);
        assert!(matches!(
            bloch_approximant_h(&syn, &dom, &p, 0.0, 0.0, 1e-9),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn error_scan_for_constants() {
        let dom = GraphDomain::flat();
        let w = Weight::w0();
        let thetas = [0.5, 0.25, 0.125];
        let scan = approximation_error_scan(&constant_field(2.0), &dom, &w, &[0.0, 1.0], &thetas, 1e-10).unwrap();
        for (t, s) in thetas.iter().zip(&scan.sups) {
            assert!((s - 2.0 / w.eval(*t).unwrap()).abs() < 1e-7);
        }
        let zero = approximation_error_scan(&constant_field(0.0), &dom, &w, &[0.0], &thetas, 1e-10).unwrap();
        assert_eq!(zero.sup(), 0.0);
    }

    #[test]
    fn theta_examples() {
        let a = 0.5;
        let id = BoundaryData::new("t", -10.0, 10.0, |t| t).unwrap();
        let eps = 2f64.powi(-6);
        let v = theta_epsilon(&id, a, eps, 0.3, 1e-12).unwrap();
        let want = 2.0 * (1.0 - eps.powf(1.0 - a)) / (1.0 - a);
        assert!((v - want).abs() < 1e-10);
        let c = BoundaryData::new("c", -10.0, 10.0, |_| 4.0).unwrap();
        assert_eq!(theta_epsilon(&c, a, eps, 0.3, 1e-12).unwrap(), 0.0);
        assert_eq!(theta_identity_residual(&c, a, eps, 0.3, 1e-10).unwrap(), 0.0);
        let cusp = BoundaryData::new("|t|^a", -10.0, 10.0, move |t: f64| t.abs().powf(a)).unwrap();
        assert_eq!(theta_epsilon(&cusp, a, eps, 0.0, 1e-12).unwrap(), 0.0);
        assert!(theta_epsilon(&id, a, 0.5, 0.0, 1e-12).is_err());
        let r = theta_identity_residual(&id, a, eps, 0.3, 1e-10).unwrap();
        assert!(r.abs() < 1e-8, "{r}");
    }

    #[test]
    fn profile_guard_and_ratios() {
        let dom = GraphDomain::flat();
        let w = Weight::w0();
        let guard = invert(&w);
        let depths = [Depth(10.0), Depth(guard * 2.0), Depth(guard * 10.0)];
        let p = lil_ratio_profile(&constant_field(1.0), &dom, &w, 0.0, &depths, 1e-10).unwrap();
        assert!(p.ratios[0].is_none());
        assert!(p.ratios[1].is_some() && p.ratios[2].is_some());
        assert!((p.guard_depth.0 / guard - 1.0).abs() < 1e-9);
        assert!(p.ratios[2].unwrap() < p.ratios[1].unwrap());
        let syn = SyntheticField::new(w.clone(), 1.0);
        let p = lil_ratio_profile(&syn, &dom, &w, 0.0, &depths, 1e-10).unwrap();
        for (d, v) in depths.iter().zip(&p.values) {
            assert!((v / w.eval_depth(*d).ln() - 1.0).abs() < 1e-7);
        }
        assert!(lil_ratio_profile(&syn, &dom, &w, 0.0, &[Depth(3.0), Depth(2.0)], 1e-9).is_err());
    }

    fn invert(w: &Weight) -> f64 {
        // w0 = 1 + ln(1 + ℓ) = e^e  ⇒  ℓ = exp(e^e - 1) - 1
        assert_eq!(w.label(), "w0");
        (lil_guard() - 1.0).exp() - 1.0
    }

    #[test]
    fn trend_detection() {
        assert!(trend_free(&[1.0, 0.9, 1.1, 1.0, 0.8], 1.2));
        assert!(!trend_free(&[1.0, 1.0, 1.5], 1.2));
        assert!(trend_free(&[], 1.2));
    }

    #[test]
    fn lacunary_average_is_finite_at_depth() {
        let w = Weight::w0();
        let u = lacunary_series(&w, 20, None, 3).unwrap();
        let v = weighted_average_i_depth(&u, &GraphDomain::flat(), &w, 0.4, Depth(1e6), 1e-9).unwrap();
        assert!(v.is_finite());
    }
}

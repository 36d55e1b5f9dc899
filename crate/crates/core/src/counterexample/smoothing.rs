//! Poisson extension `v_k = Φ_k * P_y` and the witness for the lower bound on `|v|`.
//!
//! The integral runs over a graded family of dyadic cells around `x`: a cell is integrated
//! directly once it is far from `x` relative to its length or its length drops below
//! `y · res`. Inside a leaf only the wavelets of rank at most the leaf rank are kept; the
//! neglected finer wavelets have mean zero and contribute through their first moment only.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;
use crate::weights::Weight;

use super::checks::{measure_where, MeasureEstimate, Sampler};
use super::construction::{NodeState, StoppingConstruction};
use super::point::DyadicPoint;

const FAR: f64 = 8.0;

/// A real abscissa: a dyadic base point plus a float offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Abscissa {
    pub base: DyadicPoint,
    pub offset: f64,
}

impl Abscissa {
    pub fn at(base: DyadicPoint) -> Abscissa {
        Abscissa { base, offset: 0.0 }
    }

    /// Any real `x`; points of `(0, 1]` are represented exactly.
    pub fn from_f64(x: f64) -> Result<Abscissa> {
        if !x.is_finite() {
            return Err(Error::domain(format!("abscissa {x} is not finite")));
        }
        let clamped = x.clamp(2f64.powi(-300), 1.0);
        let base = DyadicPoint::from_f64(clamped)?;
        Ok(Abscissa { base, offset: x - clamped })
    }

    fn minus(&self, p: &DyadicPoint) -> f64 {
        self.base.minus(p) + self.offset
    }
}

/// `v`, `∂v/∂x`, `∂v/∂y` and a bound for the neglected fine wavelets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothed {
    pub v: f64,
    pub vx: f64,
    pub vy: f64,
    pub truncation: f64,
}

impl Smoothed {
    pub fn grad_norm(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

struct Ctx<'a> {
    state: &'a StoppingConstruction,
    x: Abscissa,
    y: f64,
    k: u32,
    leaf_rank: u32,
    rule: &'a GaussRule,
    /// `max(FAR, 4|μ1| / (π tol))`: distance, in cell lengths, beyond which a cell is a leaf.
    far_ratio: f64,
}

impl Ctx<'_> {
    fn leaf(&self, p: &DyadicPoint, r: u32, active: &[u32], acc: &mut [f64; 3]) {
        let phi = &self.state.params().wavelet;
        let c = p.center(r);
        let g = self.x.minus(&c);
        let h = 2f64.powi(-(r as i32));
        let terms: Vec<(f64, f64)> = active
            .iter()
            .map(|&q| {
                let ratio = 2f64.powi(q as i32 - r as i32);
                (c.local(q) - 0.5 * ratio, ratio)
            })
            .collect();
        let y = self.y;
        let y2 = y * y;
        for (u, w) in self.rule.unit_nodes() {
            let f: f64 = terms.iter().map(|&(o, ratio)| phi.eval(o + u * ratio)).sum();
            if f == 0.0 {
                continue;
            }
            let s = g - (u - 0.5) * h;
            let d = s * s + y2;
            let wf = w * h * f / std::f64::consts::PI;
            acc[0] += wf * y / d;
            acc[1] += wf * (-2.0 * s * y) / (d * d);
            acc[2] += wf * (s * s - y2) / (d * d);
        }
    }

    fn walk(&self, p: DyadicPoint, parent: Option<NodeState>, active: &mut Vec<u32>, acc: &mut [f64; 3]) {
        let r = parent.map_or(0, |s| s.rank + 1);
        let before = active.len();
        // past rank k the chain carries no new wavelets; the state is only a depth marker
        let s = if r <= self.k {
            StoppingConstruction::decide(self.state.params(), parent.as_ref(), &p, r, active)
        } else {
            NodeState { rank: r, ..parent.expect("rank 0 is at most k") }
        };
        let h = 2f64.powi(-(r as i32));
        let dist = (self.x.minus(&p.center(r)).abs() - 0.5 * h).max(0.0);
        // finer wavelets of a far cell act through the kernel derivative; with h <= ρ d their
        // total over each dyadic distance band is ~ μ1 ρ y / d, which sums to ~ μ1 ρ
        let ratio = if r >= self.k { FAR } else { self.far_ratio };
        let far = dist >= ratio * h;
        if r >= self.leaf_rank || far {
            self.leaf(&p, r, active, acc);
        } else {
            for b in [false, true] {
                self.walk(p.with_bit(r, b), Some(s), active, acc);
            }
        }
        active.truncate(before);
    }
}

/// `∫ φ(u)(u - 1/2) du`.
fn first_moment(state: &StoppingConstruction) -> f64 {
    let phi = &state.params().wavelet;
    GaussRule::new(16).integrate(|u| phi.eval(u) * (u - 0.5), 0.0, 1.0)
}

/// `v_k(x, y)` with its gradient. Cells are refined down to length `y · tol / C`, where `C`
/// comes from the first moment of the wavelet, so the neglected part stays below `tol`.
pub fn poisson_smooth_grad(state: &StoppingConstruction, k: u32, x: Abscissa, y: f64, tol: f64) -> Result<Smoothed> {
    if !(y > 0.0) {
        return Err(Error::domain(format!("height must be positive, got {y}")));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    if k > state.params().max_rank() {
        return Err(Error::domain(format!(
            "rank {k} lies beyond the constructed depth {}",
            state.params().max_rank()
        )));
    }
    // each rank r contributes at most 2|μ1| 2^{-r} / (π y) once 2^{-r} <= y
    let c = 4.0 * first_moment(state).abs() / std::f64::consts::PI;
    let res = (tol / c).min(1.0 / 16.0);
    let leaf_rank = (-(y * res).log2()).ceil().max(0.0) as u32;
    let rule = GaussRule::new(16);
    let ctx = Ctx {
        state,
        x,
        y,
        k,
        leaf_rank,
        rule: &rule,
        far_ratio: FAR.max(c / tol),
    };
    let mut acc = [0.0; 3];
    ctx.walk(DyadicPoint::from_raw([0; 6]), None, &mut Vec::new(), &mut acc);
    let deepest = leaf_rank.min(k);
    let truncation = if k > deepest { c * 2f64.powi(-(deepest as i32)) / y } else { 0.0 };
    Ok(Smoothed {
        v: acc[0],
        vx: acc[1],
        vy: acc[2],
        truncation,
    })
}

/// `v_k(x, y) = (Φ_k * P_y)(x)`.
pub fn poisson_smooth(state: &StoppingConstruction, k: u32, x: f64, y: f64, tol: f64) -> Result<f64> {
    Ok(poisson_smooth_grad(state, k, Abscissa::from_f64(x)?, y, tol)?.v)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochGrowth {
    /// `sup y |∇v|`.
    pub bloch: f64,
    /// `sup |v| / w0(y)`.
    pub growth: f64,
}

/// Bloch and `w0`-growth suprema of `v = v_{β_last}` over the points `(x, y)`, `0 < y <= 1`.
pub fn bloch_and_growth_check_v(state: &StoppingConstruction, points: &[(f64, f64)], tol: f64) -> Result<BlochGrowth> {
    let w0 = Weight::w0();
    let k = state.params().max_rank();
    let vals: Vec<(f64, f64)> = points
        .par_iter()
        .map(|&(x, y)| {
            if !(y > 0.0 && y <= 1.0) {
                return Err(Error::domain(format!("height {y} outside (0, 1]")));
            }
            let s = poisson_smooth_grad(state, k, Abscissa::from_f64(x)?, y, tol)?;
            Ok((y * s.grad_norm(), s.v.abs() / w0.eval(y)?))
        })
        .collect::<Result<_>>()?;
    Ok(BlochGrowth {
        bloch: vals.iter().map(|v| v.0).fold(0.0, f64::max),
        growth: vals.iter().map(|v| v.1).fold(0.0, f64::max),
    })
}

fn witness_setup(state: &StoppingConstruction, k: usize) -> Result<(f64, f64, u32)> {
    let params = state.params();
    if k == 0 || k > params.generations() {
        return Err(Error::domain(format!("generation {k} outside 1..={}", params.generations())));
    }
    if (k as u32) < params.j0 && !params.overrides.relax_j0 {
        return Err(Error::domain(format!(
            "witness generation {k} is below j0 = {}; enable relax_j0 to evaluate it",
            params.j0
        )));
    }
    let y = params.witness_height(k);
    let w = Weight::w0().eval(y)?;
    Ok((y, w, params.max_rank()))
}

/// `|v(x, y_k)|` at each point, with `v` truncated at the deepest constructed rank.
pub fn witness_values(state: &StoppingConstruction, k: usize, points: &[DyadicPoint], tol: f64) -> Result<Vec<f64>> {
    let (y, _, depth) = witness_setup(state, k)?;
    points
        .par_iter()
        .map(|p| Ok(poisson_smooth_grad(state, depth, Abscissa::at(*p), y, tol)?.v.abs()))
        .collect()
}

/// `λ{x : |v(x, y_k)| >= w0(y_k) / A}`.
pub fn proposition_witness(
    state: &StoppingConstruction,
    k: usize,
    a_candidate: f64,
    sampler: &Sampler,
    tol: f64,
) -> Result<MeasureEstimate> {
    if !(a_candidate > 0.0) {
        return Err(Error::domain(format!("A must be positive, got {a_candidate}")));
    }
    let (y, w, depth) = witness_setup(state, k)?;
    let threshold = w / a_candidate;
    measure_where(&sampler.points(), None, |p| {
        Ok(poisson_smooth_grad(state, depth, Abscissa::at(*p), y, tol)?.v.abs() >= threshold)
    })
}

/// Smallest `A` for which the witness measure reaches `share` on the sample:
/// `w0(y_k) / q`, where `q` is exceeded by `|v(·, y_k)|` on a `share` fraction of points.
pub fn measure_witness_constant(
    state: &StoppingConstruction,
    k: usize,
    sampler: &Sampler,
    share: f64,
    tol: f64,
) -> Result<f64> {
    let (_, w, _) = witness_setup(state, k)?;
    let mut vals = witness_values(state, k, &sampler.points(), tol)?;
    if vals.is_empty() {
        return Err(Error::Precision("no sample points".into()));
    }
    vals.sort_by(|a, b| b.total_cmp(a));
    let idx = ((share * vals.len() as f64).ceil() as usize).clamp(1, vals.len()) - 1;
    let q = vals[idx];
    if q <= 0.0 {
        return Err(Error::Construction(format!("|v| vanishes on the top {share} of the sample")));
    }
    Ok(w / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample::{choose_params, MotherWavelet, Overrides, SupRule};
    use crate::quadrature::{integrate, QuadOptions};

    fn toy(a: u32, beta: Vec<u32>, stopping: bool) -> StoppingConstruction {
        let mut o = Overrides::toy(a, beta);
        o.stopping = stopping;
        let p = choose_params(&MotherWavelet::new(), &Weight::w0(), 2, SupRule::Center, o).unwrap();
        StoppingConstruction::new(p)
    }

    fn direct(f: impl Fn(f64) -> f64, x: f64, y: f64) -> [f64; 3] {
        let opts = QuadOptions::with_tol(1e-13, 1e-11);
        let pi = std::f64::consts::PI;
        let k = |s: f64| s * s + y * y;
        let brk: Vec<f64> = (1..64).map(|i| i as f64 / 64.0).collect();
        let v = integrate(|t| f(t) * y / (pi * k(x - t)), 0.0, 1.0, &brk, &opts).unwrap();
        let vx = integrate(|t| f(t) * -2.0 * (x - t) * y / (pi * k(x - t).powi(2)), 0.0, 1.0, &brk, &opts).unwrap();
        let vy = integrate(|t| f(t) * ((x - t).powi(2) - y * y) / (pi * k(x - t).powi(2)), 0.0, 1.0, &brk, &opts).unwrap();
        [v, vx, vy]
    }

    #[test]
    fn matches_direct_quadrature_for_the_mother_wavelet() {
        let s = toy(2, vec![0, 2, 6], true);
        let phi = MotherWavelet::new();
        for &(x, y) in &[(0.3, 0.05), (0.5, 0.2), (0.9, 0.01), (-0.4, 0.3), (1.7, 0.5)] {
            let got = poisson_smooth_grad(&s, 0, Abscissa::from_f64(x).unwrap(), y, 1e-6).unwrap();
            let want = direct(|t| phi.eval(t), x, y);
            assert!((got.v - want[0]).abs() < 1e-9, "{x} {y}: {} vs {}", got.v, want[0]);
            assert!((got.vx - want[1]).abs() < 1e-7 / y);
            assert!((got.vy - want[2]).abs() < 1e-7 / y);
        }
    }

    #[test]
    fn approximate_identity_as_y_vanishes() {
        let s = toy(2, vec![0, 2, 6], true);
        let phi = MotherWavelet::new();
        for &x in &[0.2, 0.4, 0.7] {
            let v = poisson_smooth(&s, 0, x, 1e-7, 1e-6).unwrap();
            assert!((v - phi.eval(x)).abs() < 1e-5);
        }
    }

    #[test]
    fn matches_direct_quadrature_for_a_deeper_partial_sum() {
        let s = toy(2, vec![0, 2, 6], true);
        for &(x, y) in &[(0.31, 0.02), (0.62, 0.1)] {
            let got = poisson_smooth(&s, 6, x, y, 1e-8).unwrap();
            let f = |t: f64| s.value(&DyadicPoint::from_f64(t.clamp(1e-300, 1.0)).unwrap(), 6).unwrap();
            let want = direct(f, x, y);
            assert!((got - want[0]).abs() < 1e-7, "{got} vs {}", want[0]);
        }
    }

    #[test]
    fn witness_respects_j0() {
        let mut o = Overrides::toy(9, vec![0, 9, 27]);
        o.relax_j0 = false;
        let p = choose_params(&MotherWavelet::new(), &Weight::w0(), 2, SupRule::Center, o).unwrap();
        let s = StoppingConstruction::new(p);
        let e = proposition_witness(&s, 2, 16.0, &Sampler::Grid { n: 8, seed: 0 }, 1e-3).unwrap_err();
        assert!(matches!(e, Error::Domain(_)));
    }

    #[test]
    fn huge_constant_gives_full_measure() {
        let s = toy(9, vec![0, 9, 27], true);
        let m = proposition_witness(&s, 2, 1e12, &Sampler::Grid { n: 64, seed: 3 }, 1e-3).unwrap();
        assert!(m.value > 0.95, "{m:?}");
    }
}

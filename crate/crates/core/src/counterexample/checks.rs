//! Quantitative checks on a stopping construction: step and envelope bounds, Haar
//! coefficients of `Φ_{β_{j+1}}`, its quadratic function and level-set measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;

use super::construction::{StoppingConstruction, Trace};
use super::point::{DyadicPoint, WORDS};

/// Point sets for sup estimates and measures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sampler {
    /// One jittered point in each of `n` equal strata.
    Grid { n: usize, seed: u64 },
    /// `n` independent uniform points.
    MonteCarlo { n: usize, seed: u64 },
}

impl Sampler {
    pub fn len(&self) -> usize {
        match *self {
            Sampler::Grid { n, .. } | Sampler::MonteCarlo { n, .. } => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<DyadicPoint> {
        match *self {
            Sampler::Grid { n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n)
                    .map(|i| {
                        let mut m = [0u64; WORDS];
                        let r: u64 = rng.gen();
                        m[0] = (((i as u128) << 64 | r as u128) / n as u128) as u64;
                        for w in &mut m[1..] {
                            *w = rng.gen();
                        }
                        DyadicPoint::from_raw(m)
                    })
                    .collect()
            }
            Sampler::MonteCarlo { n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| DyadicPoint::random(&mut rng)).collect()
            }
        }
    }
}

/// Dyadic points `i / n`, `i = 1..=n`.
pub fn uniform_grid(n: usize) -> Result<Vec<DyadicPoint>> {
    (1..=n).map(|i| DyadicPoint::from_f64(i as f64 / n as f64)).collect()
}

/// A proportion with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn traces(state: &StoppingConstruction, points: &[DyadicPoint], k: u32) -> Result<Vec<Trace>> {
    points.par_iter().map(|p| state.trace(p, k)).collect()
}

/// `sup |Φ_k - Φ_{k-1}|` over the points.
pub fn bloch_step_norm(state: &StoppingConstruction, k: u32, points: &[DyadicPoint]) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("step norm needs k >= 1"));
    }
    let phi = &state.params().wavelet;
    let steps = traces(state, points, k)?
        .iter()
        .zip(points)
        .map(|(t, p)| match t.active.last() {
            Some(&r) if r == k => phi.eval(p.local(k)).abs(),
            _ => 0.0,
        })
        .fold(0.0, f64::max);
    Ok(steps)
}

/// `sup |Φ_k|` over the points.
pub fn growth_envelope(state: &StoppingConstruction, k: u32, points: &[DyadicPoint]) -> Result<f64> {
    Ok(traces(state, points, k)?.iter().map(|t| t.value.abs()).fold(0.0, f64::max))
}

/// Active ancestors `(rank, offset, ratio)` of the rank-`r` interval containing `p`, counting
/// only ranks `<= upto`. `offset` is the left end of the interval in the ancestor's local
/// coordinate and `ratio = 2^{q - r}`.
fn ancestor_terms(trace: &Trace, p: &DyadicPoint, r: u32, upto: u32) -> Vec<(u32, f64, f64)> {
    let lr = p.local(r);
    trace
        .active
        .iter()
        .filter(|&&q| q <= r.min(upto))
        .map(|&q| {
            let ratio = 2f64.powi(q as i32 - r as i32);
            (q, p.local(q) - lr * ratio, ratio)
        })
        .collect()
}

fn rule() -> GaussRule {
    // φ has degree 23, so 16 nodes per half are exact.
    GaussRule::new(16)
}

/// `b_I = 2^{rank I} ⟨Φ_upto, ψ_I⟩` for the rank-`r` interval containing `p`.
pub fn haar_coefficient(state: &StoppingConstruction, p: &DyadicPoint, r: u32, upto: u32) -> Result<f64> {
    let trace = state.trace(p, r.min(state.params().max_rank()))?;
    Ok(coefficient_from_trace(state, &trace, p, r, upto, &rule()))
}

fn coefficient_from_trace(
    state: &StoppingConstruction,
    trace: &Trace,
    p: &DyadicPoint,
    r: u32,
    upto: u32,
    rule: &GaussRule,
) -> f64 {
    let phi = &state.params().wavelet;
    ancestor_terms(trace, p, r, upto)
        .into_iter()
        .map(|(_, o, ratio)| phi.ancestor_pairing(o, ratio, rule))
        .sum()
}

/// Mean of `Φ_upto` over the rank-`r` interval containing `p`.
fn cell_mean(state: &StoppingConstruction, trace: &Trace, p: &DyadicPoint, r: u32, upto: u32, rule: &GaussRule) -> f64 {
    let phi = &state.params().wavelet;
    ancestor_terms(trace, p, r, upto)
        .into_iter()
        .map(|(_, o, ratio)| rule.integrate(|u| phi.eval(o + u * ratio), 0.0, 1.0))
        .sum()
}

/// Interval selection for coefficient checks: rank plus a point inside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalSample {
    pub rank: u32,
    pub point: DyadicPoint,
}

/// Intervals with `c = 1` and rank in `[β_j, β_{j+1})` on the chains of the points.
pub fn active_intervals(state: &StoppingConstruction, j: usize, points: &[DyadicPoint]) -> Result<Vec<IntervalSample>> {
    let (lo, hi) = generation_span(state, j)?;
    let ts = traces(state, points, hi - 1)?;
    let mut out = Vec::new();
    for (t, p) in ts.iter().zip(points) {
        for &r in t.active.iter().filter(|&&r| r >= lo && r < hi) {
            out.push(IntervalSample { rank: r, point: *p });
        }
    }
    Ok(out)
}

fn generation_span(state: &StoppingConstruction, j: usize) -> Result<(u32, u32)> {
    let params = state.params();
    if j == 0 || j >= params.generations() {
        return Err(Error::domain(format!(
            "generation {j} needs 1 <= j < {} (β_{{j+1}} must exist)",
            params.generations()
        )));
    }
    Ok((params.beta_of(j), params.beta_of(j + 1)))
}

/// Smallest `|b_I|` over the sampled active intervals of generation `j`.
pub fn haar_coefficient_bound(state: &StoppingConstruction, j: usize, sample: &[IntervalSample]) -> Result<f64> {
    let (lo, hi) = generation_span(state, j)?;
    let rule = rule();
    let mut min = f64::INFINITY;
    for s in sample {
        if s.rank < lo || s.rank >= hi {
            return Err(Error::ContractViolation(format!("rank {} is outside generation {j}", s.rank)));
        }
        let trace = state.trace(&s.point, s.rank)?;
        if trace.active.last() != Some(&s.rank) {
            return Err(Error::ContractViolation(format!("sampled rank-{} interval has c = 0", s.rank)));
        }
        min = min.min(coefficient_from_trace(state, &trace, &s.point, s.rank, hi, &rule).abs());
    }
    Ok(min)
}

/// Whether the chain of `p` avoids every stopped interval of generation `j`.
pub fn in_good_set(state: &StoppingConstruction, j: usize, p: &DyadicPoint) -> Result<bool> {
    let (_, hi) = generation_span(state, j)?;
    let t = state.trace(p, hi - 1)?;
    Ok(!t.states.last().expect("non-empty chain").halted)
}

/// `Σ b_J²` over the intervals `J ∋ p` with `c_J = 1` and rank in `[β_j, β_{j+1})`.
pub fn quadratic_active_sum(state: &StoppingConstruction, j: usize, p: &DyadicPoint) -> Result<f64> {
    let (lo, hi) = generation_span(state, j)?;
    let t = state.trace(p, hi - 1)?;
    let rule = rule();
    Ok(t.active
        .iter()
        .filter(|&&r| r >= lo)
        .map(|&r| coefficient_from_trace(state, &t, p, r, hi, &rule).powi(2))
        .sum())
}

/// `⟨Λ̃⟩²_k(p) = Σ_{r <= k} b_{I_r}²` for `Φ_{β_{j+1}}`, every rank counted.
pub fn quadratic_function(state: &StoppingConstruction, j: usize, p: &DyadicPoint, k: u32) -> Result<f64> {
    let (_, hi) = generation_span(state, j)?;
    let t = state.trace(p, k.min(state.params().max_rank()))?;
    let rule = rule();
    Ok((0..=k).map(|r| coefficient_from_trace(state, &t, p, r, hi, &rule).powi(2)).sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticBound {
    /// Minimum of the active sum over sampled points of `G_j`; `None` if none was hit.
    pub min: Option<f64>,
    pub threshold: f64,
    pub in_good_set: usize,
    pub samples: usize,
}

impl QuadraticBound {
    pub fn holds(&self) -> bool {
        self.min.is_none_or(|m| m >= self.threshold)
    }
}

/// Lower bound of the quadratic function on the good set `G_j`, against
/// `¼((β_{j+1} - β_j)/a - 1)⟨φ,ψ⟩²`.
pub fn quadratic_lower_bound(state: &StoppingConstruction, j: usize, points: &[DyadicPoint]) -> Result<QuadraticBound> {
    generation_span(state, j)?;
    let vals: Vec<Option<f64>> = points
        .par_iter()
        .map(|p| {
            if in_good_set(state, j, p)? {
                quadratic_active_sum(state, j, p).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let good: Vec<f64> = vals.into_iter().flatten().collect();
    Ok(QuadraticBound {
        min: good.iter().copied().reduce(f64::min),
        threshold: state.params().qfl_threshold(j),
        in_good_set: good.len(),
        samples: points.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParsevalReport {
    /// `∫ ⟨Λ̃⟩²_k`, from the Haar coefficients.
    pub quadratic: f64,
    /// `∫ Λ̃_k²`, from the rank-`k + 1` cell means.
    pub square: f64,
    pub residual: f64,
}

/// Compares `∫⟨Λ̃⟩²_k` and `∫Λ̃_k²` for `Φ_{β_{j+1}}` with `k = max_rank`.
pub fn parseval_identity_check(state: &StoppingConstruction, j: usize, max_rank: u32) -> Result<ParsevalReport> {
    let (_, hi) = generation_span(state, j)?;
    if max_rank > 18 {
        return Err(Error::domain(format!("Parseval check enumerates cells; rank {max_rank} is above 18")));
    }
    let fine = max_rank + 1;
    let depth = fine.min(state.params().max_rank());
    let n = 1u64 << fine;
    let rule = rule();
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = DyadicPoint::from_f64((i as f64 + 0.5) / n as f64)?;
            let t = state.trace(&p, depth)?;
            let mean = cell_mean(state, &t, &p, fine, hi, &rule);
            // each rank-r interval is visited by 2^{fine - r} cells: weight accordingly
            let quad: f64 = (0..=max_rank)
                .map(|r| coefficient_from_trace(state, &t, &p, r, hi, &rule).powi(2))
                .sum();
            Ok((mean * mean, quad))
        })
        .collect::<Result<_>>()?;
    let w = 1.0 / n as f64;
    let square = rows.iter().map(|r| r.0).sum::<f64>() * w;
    let quadratic = rows.iter().map(|r| r.1).sum::<f64>() * w;
    Ok(ParsevalReport {
        quadratic,
        square,
        residual: (quadratic - square).abs(),
    })
}

/// Share of sample points satisfying `pred`, with binomial standard error.
pub fn measure_where<F>(points: &[DyadicPoint], max_std_error: Option<f64>, pred: F) -> Result<MeasureEstimate>
where
    F: Fn(&DyadicPoint) -> Result<bool> + Sync,
{
    let n = points.len();
    if n == 0 {
        return Err(Error::Precision("no sample points".into()));
    }
    if let Some(se) = max_std_error {
        let worst = 0.5 / (n as f64).sqrt();
        if worst > se {
            return Err(Error::Precision(format!(
                "{n} samples give a worst-case standard error {worst:.3e} above the requested {se:.3e}"
            )));
        }
    }
    let hits = points
        .par_iter()
        .map(|p| pred(p).map(|b| b as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    let value = hits as f64 / n as f64;
    Ok(MeasureEstimate {
        value,
        std_error: (value * (1.0 - value) / n as f64).sqrt(),
        samples: n,
    })
}

/// `λ{t : |Φ_{β_{j+1}}(t)| >= threshold}`.
pub fn level_set_measure(
    state: &StoppingConstruction,
    j: usize,
    threshold: f64,
    sampler: &Sampler,
    max_std_error: Option<f64>,
) -> Result<MeasureEstimate> {
    let (_, hi) = generation_span(state, j)?;
    if !(threshold >= 0.0) {
        return Err(Error::domain(format!("threshold must be non-negative, got {threshold}")));
    }
    measure_where(&sampler.points(), max_std_error, |p| Ok(state.value(p, hi)?.abs() >= threshold))
}

/// `λ(G_j)`: the share of points whose chain avoids the stopped family of generation `j`.
pub fn good_set_measure(
    state: &StoppingConstruction,
    j: usize,
    sampler: &Sampler,
    max_std_error: Option<f64>,
) -> Result<MeasureEstimate> {
    generation_span(state, j)?;
    measure_where(&sampler.points(), max_std_error, |p| in_good_set(state, j, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample::{choose_params, MotherWavelet, Overrides, SupRule};
    use crate::weights::Weight;

    fn toy(a: u32, beta: Vec<u32>) -> StoppingConstruction {
        let p = choose_params(&MotherWavelet::new(), &Weight::w0(), 2, SupRule::Center, Overrides::toy(a, beta)).unwrap();
        StoppingConstruction::new(p)
    }

    #[test]
    fn isolated_coefficient_is_the_pairing() {
        let s = toy(9, vec![0, 9]);
        let p = DyadicPoint::from_f64(0.3).unwrap();
        let b = haar_coefficient(&s, &p, 0, 9).unwrap();
        assert!((b - s.params().wavelet.haar_pairing).abs() < 1e-14);
    }

    #[test]
    fn inactive_interval_without_ancestors_has_zero_coefficient() {
        let mut o = Overrides::toy(9, vec![0, 9]);
        o.stopping = false;
        let p = choose_params(&MotherWavelet::new(), &Weight::w0(), 2, SupRule::Center, o).unwrap();
        let s = StoppingConstruction::new(p);
        // rank 3 has c = 0; its only active ancestor is the root, whose pairing is tiny but nonzero
        let q = DyadicPoint::from_f64(0.3).unwrap();
        let b = haar_coefficient(&s, &q, 3, 9).unwrap();
        assert!(b.abs() < 2f64.powi(-3) * s.params().wavelet.deriv_sup);
    }

    #[test]
    fn steps_off_the_lattice_vanish() {
        let s = toy(2, vec![0, 2, 6]);
        let grid = uniform_grid(512).unwrap();
        for k in [1, 3, 5] {
            assert_eq!(bloch_step_norm(&s, k, &grid).unwrap(), 0.0);
        }
        for k in [2, 4, 6] {
            assert!(bloch_step_norm(&s, k, &grid).unwrap() <= 1.0);
        }
        assert!((growth_envelope(&s, 0, &grid).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_threshold_has_full_measure() {
        let s = toy(2, vec![0, 2, 6]);
        let m = level_set_measure(&s, 1, 0.0, &Sampler::Grid { n: 256, seed: 1 }, None).unwrap();
        assert_eq!(m.value, 1.0);
        let m = level_set_measure(&s, 1, 1e6, &Sampler::MonteCarlo { n: 256, seed: 1 }, None).unwrap();
        assert_eq!(m.value, 0.0);
        assert!(matches!(
            level_set_measure(&s, 1, 1.0, &Sampler::Grid { n: 100, seed: 1 }, Some(0.01)),
            Err(Error::Precision(_))
        ));
    }

    #[test]
    fn grid_sampler_is_stratified() {
        let pts = Sampler::Grid { n: 1000, seed: 7 }.points();
        for (i, p) in pts.iter().enumerate() {
            let t = p.to_f64();
            assert!(t > i as f64 / 1000.0 - 1e-15 && t <= (i + 1) as f64 / 1000.0 + 1e-15);
        }
        assert_eq!(pts, Sampler::Grid { n: 1000, seed: 7 }.points());
    }

    #[test]
    fn parseval_for_the_mother_wavelet_alone() {
        let s = toy(9, vec![0, 9]);
        let r = parseval_identity_check(&s, 1, 8).unwrap();
        assert!(r.residual < 1e-10, "{r:?}");
        assert!(r.square > 0.0);
    }
}

//! Plain Lebesgue quadrature: adaptive Gauss–Kronrod and fixed Gauss–Legendre rules.
//!
//! The Riemann–Stieltjes engine against `d(1/w)` lives in [`crate::weights`]; this
//! module only handles `∫ f(t) dt`.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Options for [`integrate`] and [`try_integrate`].
#[derive(Clone, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        QuadOptions {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let f1 = f(c - h * x)?;
        let f2 = f(c + h * x)?;
        kron += wk * (f1 + f2);
        abs += wk * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }
    Ok((kron * h, ((kron - gauss) * h).abs(), abs * h.abs()))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive Gauss–Kronrod (7/15) integration of a fallible integrand over `[a, b]`.
///
/// `breakpoints` inside `(a, b)` seed the initial partition; points outside are ignored.
/// Returns [`Error::Tolerance`] with the partial sum when `max_intervals` is exhausted.
pub fn try_integrate<F>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integration bounds must be finite"));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&p| p > lo && p < hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(lo);
    nodes.extend(cuts);
    nodes.push(hi);

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut total_abs = 0.0;
    for w in nodes.windows(2) {
        let (value, error, abs) = gk15(&mut f, w[0], w[1])?;
        total += value;
        total_err += error;
        total_abs += abs;
        heap.push(Segment {
            a: w[0],
            b: w[1],
            value,
            error,
            abs,
        });
    }

    // The last term is the rounding floor: cancellation below it cannot be resolved.
    while total_err
        > opts
            .abs_tol
            .max(opts.rel_tol * total.abs())
            .max(100.0 * f64::EPSILON * total_abs)
    {
        if heap.len() >= opts.max_intervals {
            return Err(Error::Tolerance {
                message: format!(
                    "adaptive quadrature on [{lo}, {hi}] exhausted {} intervals, error {total_err:e}",
                    opts.max_intervals
                ),
                partial: sign * total,
            });
        }
        let worst = heap.pop().expect("non-empty segment heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval collapsed to adjacent floats; nothing left to refine.
            heap.push(worst);
            break;
        }
        let (v1, e1, a1) = gk15(&mut f, worst.a, mid)?;
        let (v2, e2, a2) = gk15(&mut f, mid, worst.b)?;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        total_abs += a1 + a2 - worst.abs;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
            abs: a1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
            abs: a2,
        });
    }
    // Re-sum to shed the drift of the running updates.
    let total: f64 = heap.iter().map(|s| s.value).sum();
    Ok(sign * total)
}

/// Infallible-integrand convenience wrapper around [`try_integrate`].
pub fn integrate<F>(f: F, a: f64, b: f64, breakpoints: &[f64], opts: &QuadOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    try_integrate(|t| Ok(f(t)), a, b, breakpoints, opts)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * x * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed Gauss–Legendre rule mapped to an arbitrary interval.
#[derive(Clone, Debug)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        GaussRule { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(c + h * x))
            .sum::<f64>()
            * h
    }

    /// Nodes mapped to `[0, 1]` with matching weights.
    pub fn unit_nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussRule::new(8);
        // degree 15 is integrated exactly by 8 nodes
        let v = rule.integrate(|t| t.powi(15) + 3.0 * t.powi(4), 0.0, 1.0);
        assert!((v - (1.0 / 16.0 + 3.0 / 5.0)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_kinks_with_breakpoints() {
        let opts = QuadOptions::with_tol(1e-13, 1e-12);
        let v = integrate(|t: f64| t.abs().sqrt(), -1.0, 1.0, &[0.0], &opts).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let opts = QuadOptions::default();
        let v = integrate(|t| t * t, 1.0, 0.0, &[], &opts).unwrap();
        assert!((v + 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn exhaustion_reports_partial_value() {
        let opts = QuadOptions {
            abs_tol: 1e-300,
            rel_tol: 0.0,
            max_intervals: 3,
        };
        let err = integrate(|t: f64| (1.0 / t).sin(), 1e-6, 1.0, &[], &opts).unwrap_err();
        assert!(matches!(err, Error::Tolerance { .. }));
    }
}

//! The polynomial mother wavelet `φ(t) = c (t(1-t))^11 (1-2t)` on `[0, 1]`.

use crate::quadrature::GaussRule;

const DEGREE: i32 = 11;

/// Mother wavelet with its derived constants.
#[derive(Clone, Debug, PartialEq)]
pub struct MotherWavelet {
    /// Normalising constant making `‖φ‖∞ = 1`.
    pub scale: f64,
    /// `‖φ‖∞` after normalisation.
    pub sup_norm: f64,
    /// `‖φ'‖∞`.
    pub deriv_sup: f64,
    /// `⟨φ, ψ⟩` with the Haar function `ψ = χ[0,1] - 2χ[0,1/2]`.
    pub haar_pairing: f64,
}

fn raw(t: f64) -> f64 {
    (t * (1.0 - t)).powi(DEGREE) * (1.0 - 2.0 * t)
}

fn raw_deriv(t: f64) -> f64 {
    let p = t * (1.0 - t);
    let q = 1.0 - 2.0 * t;
    // d/dt [p^11 q] = 11 p^10 q^2 - 2 p^11
    p.powi(DEGREE - 1) * (DEGREE as f64 * q * q - 2.0 * p)
}

/// Maximum of `|f|` on `[0, 1]`: dense scan, then golden-section refinement of the best cell.
fn sup_abs<F: Fn(f64) -> f64>(f: F) -> f64 {
    const N: usize = 20_000;
    let h = 1.0 / N as f64;
    let (mut best_i, mut best) = (0, 0.0);
    for i in 0..=N {
        let v = f(i as f64 * h).abs();
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut a, mut b) = (((best_i as f64) - 1.0) * h, ((best_i as f64) + 1.0) * h);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-15 {
        let c = b - gr * (b - a);
        let d = a + gr * (b - a);
        if f(c).abs() > f(d).abs() {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(f(0.5 * (a + b)).abs())
}

impl MotherWavelet {
    pub fn new() -> MotherWavelet {
        let scale = 1.0 / sup_abs(raw);
        let sup_norm = sup_abs(|t| scale * raw(t));
        let deriv_sup = sup_abs(|t| scale * raw_deriv(t));
        // degree 23 polynomial: 12 nodes per half are exact
        let rule = GaussRule::new(16);
        let left = rule.integrate(|t| scale * raw(t), 0.0, 0.5);
        let right = rule.integrate(|t| scale * raw(t), 0.5, 1.0);
        MotherWavelet {
            scale,
            sup_norm,
            deriv_sup,
            haar_pairing: right - left,
        }
    }

    /// `φ(t)`; zero outside `[0, 1]`.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if (0.0..=1.0).contains(&t) {
            self.scale * raw(t)
        } else {
            0.0
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        if (0.0..=1.0).contains(&t) {
            self.scale * raw_deriv(t)
        } else {
            0.0
        }
    }

    /// `∫_0^1 φ(o + u r) ψ(u) du` for `r = 2^{rank J - rank I}`: the scaled pairing of an
    /// ancestor wavelet with the Haar function of a descendant at offset `o`.
    pub fn ancestor_pairing(&self, offset: f64, ratio: f64, rule: &GaussRule) -> f64 {
        let left = rule.integrate(|u| self.eval(offset + u * ratio), 0.0, 0.5);
        let right = rule.integrate(|u| self.eval(offset + u * ratio), 0.5, 1.0);
        right - left
    }
}

impl Default for MotherWavelet {
    fn default() -> Self {
        MotherWavelet::new()
    }
}

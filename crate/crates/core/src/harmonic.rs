//! Test fields `u(x, y)` on the upper half-plane, graph domains above Lipschitz
//! functions, and grid estimators for growth and Bloch seminorms.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::{try_integrate, QuadOptions};
use crate::weights::{Depth, Weight};

/// Default relative tolerance of field quadratures.
pub const DEFAULT_FIELD_TOL: f64 = 1e-8;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A compactly supported boundary function.
#[derive(Clone)]
pub struct BoundaryData {
    f: RealFn,
    lo: f64,
    hi: f64,
    holder_alpha: Option<f64>,
    knots: Vec<f64>,
    label: String,
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryData")
            .field("label", &self.label)
            .field("support", &(self.lo, self.hi))
            .field("holder_alpha", &self.holder_alpha)
            .finish()
    }
}

impl BoundaryData {
    /// `f` restricted to `[lo, hi]`.
    pub fn new<F>(label: impl Into<String>, lo: f64, hi: f64, f: F) -> Result<BoundaryData>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::domain(format!("support [{lo}, {hi}] is not a bounded interval")));
        }
        Ok(BoundaryData {
            f: Arc::new(f),
            lo,
            hi,
            holder_alpha: None,
            knots: Vec::new(),
            label: label.into(),
        })
    }

    /// Piecewise-linear interpolation of samples; the support is the sample range.
    pub fn from_samples(label: impl Into<String>, ts: Vec<f64>, fs: Vec<f64>) -> Result<BoundaryData> {
        if ts.len() < 2 || ts.len() != fs.len() {
            return Err(Error::domain("need at least two (t, f) samples of equal length"));
        }
        if ts.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::domain("sample abscissae must be strictly increasing"));
        }
        if fs.iter().chain(&ts).any(|v| !v.is_finite()) {
            return Err(Error::domain("samples must be finite"));
        }
        let (lo, hi) = (ts[0], ts[ts.len() - 1]);
        let knots = ts.clone();
        let interp = move |t: f64| {
            let i = ts.partition_point(|&s| s <= t).clamp(1, ts.len() - 1);
            let (t0, t1) = (ts[i - 1], ts[i]);
            let r = (t - t0) / (t1 - t0);
            fs[i - 1] + r * (fs[i] - fs[i - 1])
        };
        let mut data = BoundaryData::new(label, lo, hi, interp)?;
        data.knots = knots;
        Ok(data)
    }

    pub fn with_holder(mut self, alpha: f64) -> Result<BoundaryData> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::domain(format!("Hölder exponent must lie in (0, 1], got {alpha}")));
        }
        self.holder_alpha = Some(alpha);
        Ok(self)
    }

    /// Points where `f` may fail to be smooth; used as quadrature breakpoints.
    pub fn with_knots(mut self, knots: Vec<f64>) -> BoundaryData {
        self.knots = knots;
        self
    }

    /// `f(t)` on the support, 0 outside.
    pub fn eval(&self, t: f64) -> f64 {
        if t < self.lo || t > self.hi {
            0.0
        } else {
            (self.f)(t)
        }
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn holder_alpha(&self) -> Option<f64> {
        self.holder_alpha
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Largest `|f(s) - f(t)| / |s - t|^alpha` over all pairs of `n` equispaced points of
    /// `[a, b]`.
    pub fn sampled_holder_seminorm(&self, alpha: f64, a: f64, b: f64, n: usize) -> f64 {
        let pts: Vec<f64> = (0..n)
            .map(|i| a + (b - a) * i as f64 / (n.max(2) - 1) as f64)
            .collect();
        let vals: Vec<f64> = pts.iter().map(|&t| self.eval(t)).collect();
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = (pts[j] - pts[i]).abs().powf(alpha);
                if d > 0.0 {
                    best = best.max((vals[j] - vals[i]).abs() / d);
                }
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Poisson,
    Lacunary,
    Box,
    Kernel,
    Constant,
    Affine,
    /// A function of `y` alone built from a weight; not harmonic in general.
    Synthetic,
    /// The weighted vertical average of another field.
    Approximant,
}

impl FieldKind {
    /// Whether fields of this kind are harmonic by construction.
    pub fn is_harmonic(self) -> bool {
        matches!(
            self,
            FieldKind::Poisson | FieldKind::Lacunary | FieldKind::Constant | FieldKind::Affine
        )
    }
}

/// A function on the upper half-plane with its gradient.
pub trait HarmonicField: Send + Sync {
    fn eval(&self, x: f64, y: f64) -> Result<f64>;

    /// `(∂u/∂x, ∂u/∂y)`.
    fn grad(&self, x: f64, y: f64) -> Result<(f64, f64)>;

    fn kind(&self) -> FieldKind;

    /// `u(x, base + e^{-depth})`, for heights that may underflow relative to `base`.
    fn eval_deep(&self, x: f64, base: f64, depth: Depth) -> Result<f64> {
        let y = base + depth.height();
        if y > 0.0 {
            self.eval(x, y)
        } else {
            Err(Error::domain(format!(
                "{:?} field cannot be evaluated at depth {} on the boundary",
                self.kind(),
                depth.0
            )))
        }
    }

    /// Notes recorded while building the field (truncation and similar).
    fn warnings(&self) -> &[String] {
        &[]
    }

    /// The field as a finite sum of [`Mode`]s, when it has that form.
    fn modes(&self) -> Option<Vec<Mode>> {
        None
    }
}

/// `amp · e^{-freq·y} cos(freq·x + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub freq: f64,
    pub amp: f64,
    pub phase: f64,
}

fn check_height(y: f64) -> Result<()> {
    if y > 0.0 && y.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("field evaluated at height {y}; need y > 0")))
    }
}

/// `a + b x + c y`.
#[derive(Clone, Debug)]
pub struct AffineField {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn constant_field(c: f64) -> AffineField {
    AffineField { a: c, b: 0.0, c: 0.0 }
}

impl HarmonicField for AffineField {
    fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_height(y)?;
        Ok(self.a + self.b * x + self.c * y)
    }

    fn grad(&self, _x: f64, y: f64) -> Result<(f64, f64)> {
        check_height(y)?;
        Ok((self.b, self.c))
    }

    fn kind(&self) -> FieldKind {
        if self.b == 0.0 && self.c == 0.0 {
            FieldKind::Constant
        } else {
            FieldKind::Affine
        }
    }

    fn eval_deep(&self, x: f64, base: f64, depth: Depth) -> Result<f64> {
        Ok(self.a + self.b * x + self.c * (base + depth.height()))
    }
}

/// `scale · w(y)^power`, constant in `x`.
#[derive(Clone, Debug)]
pub struct SyntheticField {
    pub weight: Weight,
    pub power: f64,
    pub scale: f64,
}

impl SyntheticField {
    pub fn new(weight: Weight, power: f64) -> SyntheticField {
        SyntheticField {
            weight,
            power,
            scale: 1.0,
        }
    }

    fn at_depth(&self, d: Depth) -> f64 {
        self.scale * self.weight.eval_depth(d).powf(self.power)
    }
}

impl HarmonicField for SyntheticField {
    fn eval(&self, _x: f64, y: f64) -> Result<f64> {
        check_height(y)?;
        Ok(self.at_depth(Depth::of_height(y)))
    }

    fn grad(&self, _x: f64, y: f64) -> Result<(f64, f64)> {
        check_height(y)?;
        let d = Depth::of_height(y);
        let w = self.weight.eval_depth(d);
        // d/dy = -(1/y) d/dℓ
        let dy = -self.scale * self.power * w.powf(self.power - 1.0) * self.weight.depth_derivative(d) / y;
        Ok((0.0, dy))
    }

    fn kind(&self) -> FieldKind {
        FieldKind::Synthetic
    }

    fn eval_deep(&self, x: f64, base: f64, depth: Depth) -> Result<f64> {
        if base == 0.0 {
            Ok(self.at_depth(depth))
        } else {
            self.eval(x, base + depth.height())
        }
    }
}

/// Poisson extension of compactly supported boundary data.
#[derive(Clone, Debug)]
pub struct PoissonField {
    data: BoundaryData,
    opts: QuadOptions,
}

/// Poisson extension `∫ f(t) y / (π (y² + (x - t)²)) dt`, computed to relative `tol`.
pub fn poisson_extend(f: BoundaryData, tol: f64) -> Result<PoissonField> {
    if !(tol > 0.0) {
        return Err(Error::domain("Poisson tolerance must be positive"));
    }
    Ok(PoissonField {
        data: f,
        opts: QuadOptions {
            abs_tol: tol * 1e-4,
            rel_tol: tol,
            max_intervals: 20_000,
        },
    })
}

impl PoissonField {
    fn breaks(&self, x: f64, y: f64) -> Vec<f64> {
        let mut b = vec![x - y, x, x + y, x - 8.0 * y, x + 8.0 * y];
        b.extend_from_slice(self.data.knots());
        b
    }

    fn kernel_integral<K>(&self, x: f64, y: f64, kernel: K) -> Result<f64>
    where
        K: Fn(f64, f64) -> f64,
    {
        check_height(y)?;
        let (lo, hi) = self.data.support();
        let breaks = self.breaks(x, y);
        try_integrate(
            |t| Ok(self.data.eval(t) * kernel(x - t, y)),
            lo,
            hi,
            &breaks,
            &self.opts,
        )
    }
}

impl HarmonicField for PoissonField {
    fn eval(&self, x: f64, y: f64) -> Result<f64> {
        self.kernel_integral(x, y, |s, y| y / (PI * (y * y + s * s)))
    }

    fn grad(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let gx = self.kernel_integral(x, y, |s, y| {
            let r = y * y + s * s;
            -2.0 * y * s / (PI * r * r)
        })?;
        let gy = self.kernel_integral(x, y, |s, y| {
            let r = y * y + s * s;
            (s * s - y * y) / (PI * r * r)
        })?;
        Ok((gx, gy))
    }

    fn kind(&self) -> FieldKind {
        FieldKind::Poisson
    }
}

/// `Σ_{k=0}^{K} c_k e^{-2^k y} cos(2^k x + θ_k)`.
#[derive(Clone, Debug)]
pub struct LacunaryField {
    pub coeffs: Vec<f64>,
    pub phases: Vec<f64>,
    warnings: Vec<String>,
}

/// Lacunary series with `c_0 = 1`, `c_k = w(2^-k) - w(2^{-k+1})`.
///
/// With `phases = None`, phases are drawn uniformly from `[0, 2π)` by a ChaCha8 stream
/// seeded with `seed`.
pub fn lacunary_series(
    w: &Weight,
    levels: usize,
    phases: Option<Vec<f64>>,
    seed: u64,
) -> Result<LacunaryField> {
    if levels == 0 {
        return Err(Error::domain("a lacunary series needs at least one level"));
    }
    let phases = match phases {
        Some(p) if p.len() == levels + 1 => p,
        Some(p) => {
            return Err(Error::domain(format!(
                "expected {} phases, got {}",
                levels + 1,
                p.len()
            )))
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..=levels).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()
        }
    };
    let ln2 = std::f64::consts::LN_2;
    let mut coeffs = vec![1.0];
    let mut warnings = Vec::new();
    for k in 1..=levels {
        let c = w.eval_depth(Depth(k as f64 * ln2)) - w.eval_depth(Depth((k - 1) as f64 * ln2));
        if !(c.is_finite() && c.is_normal()) {
            warnings.push(format!("coefficient c_{k} = {c} underflows or overflows; series truncated at level {}", k - 1));
            break;
        }
        coeffs.push(c);
    }
    if coeffs.len() > 53 {
        warnings.push(format!(
            "frequencies above 2^52 exceed the phase resolution of f64 ({} levels)",
            coeffs.len() - 1
        ));
    }
    let phases = phases[..coeffs.len()].to_vec();
    Ok(LacunaryField {
        coeffs,
        phases,
        warnings,
    })
}

impl LacunaryField {
    pub fn levels(&self) -> usize {
        self.coeffs.len() - 1
    }

    fn sum(&self, x: f64, y: f64) -> f64 {
        let mut total = 0.0;
        let mut freq = 1.0;
        for (c, th) in self.coeffs.iter().zip(&self.phases) {
            total += c * (-freq * y).exp() * (freq * x + th).cos();
            freq *= 2.0;
        }
        total
    }
}

impl HarmonicField for LacunaryField {
    fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_height(y)?;
        Ok(self.sum(x, y))
    }

    fn grad(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        check_height(y)?;
        let (mut gx, mut gy) = (0.0, 0.0);
        let mut freq = 1.0;
        for (c, th) in self.coeffs.iter().zip(&self.phases) {
            let damp = c * freq * (-freq * y).exp();
            let arg = freq * x + th;
            gx -= damp * arg.sin();
            gy -= damp * arg.cos();
            freq *= 2.0;
        }
        Ok((gx, gy))
    }

    fn kind(&self) -> FieldKind {
        FieldKind::Lacunary
    }

    fn eval_deep(&self, x: f64, base: f64, depth: Depth) -> Result<f64> {
        let y = base + depth.height();
        if y < 0.0 {
            return Err(Error::domain("lacunary field evaluated below the boundary"));
        }
        Ok(self.sum(x, y))
    }

    fn warnings(&self) -> &[String] {
        &self.warnings
    }

    fn modes(&self) -> Option<Vec<Mode>> {
        let mut freq = 1.0;
        let mut out = Vec::with_capacity(self.coeffs.len());
        for (&amp, &phase) in self.coeffs.iter().zip(&self.phases) {
            out.push(Mode { freq, amp, phase });
            freq *= 2.0;
        }
        Some(out)
    }
}

fn central_gradient<F: Fn(f64, f64) -> Result<f64>>(f: F, x: f64, y: f64) -> Result<(f64, f64)> {
    let h = 1e-5 * y;
    let gx = (f(x + h, y)? - f(x - h, y)?) / (2.0 * h);
    let gy = (f(x, y + h)? - f(x, y - h)?) / (2.0 * h);
    Ok((gx, gy))
}

/// Symmetric difference quotient `(f(x + y) - f(x - y)) / (2y)`.
#[derive(Clone, Debug)]
pub struct BoxField {
    data: BoundaryData,
}

pub fn box_field(f: BoundaryData) -> Result<BoxField> {
    if f.holder_alpha().is_none() {
        return Err(Error::domain("box field needs boundary data with a Hölder exponent"));
    }
    Ok(BoxField { data: f })
}

impl BoxField {
    pub fn data(&self) -> &BoundaryData {
        &self.data
    }
}

impl HarmonicField for BoxField {
    fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_height(y)?;
        Ok((self.data.eval(x + y) - self.data.eval(x - y)) / (2.0 * y))
    }

    fn grad(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        central_gradient(|a, b| self.eval(a, b), x, y)
    }

    fn kind(&self) -> FieldKind {
        FieldKind::Box
    }
}

/// A compactly supported convolution kernel `Φ`.
#[derive(Clone)]
pub struct Kernel {
    phi: RealFn,
    lo: f64,
    hi: f64,
    breaks: Vec<f64>,
    label: String,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("label", &self.label)
            .field("support", &(self.lo, self.hi))
            .finish()
    }
}

impl Kernel {
    pub fn new<F>(label: impl Into<String>, lo: f64, hi: f64, breaks: Vec<f64>, phi: F) -> Result<Kernel>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::domain("kernel support must be a bounded interval"));
        }
        Ok(Kernel {
            phi: Arc::new(phi),
            lo,
            hi,
            breaks,
            label: label.into(),
        })
    }

    /// `½ χ[-1, 1]`, the averaging box.
    pub fn box_average() -> Kernel {
        Kernel::new("box", -1.0, 1.0, vec![], |_| 0.5).expect("valid support")
    }

    /// `χ[-1, 0] - χ[0, 1]` scaled by ½: mean zero, odd.
    pub fn haar() -> Kernel {
        Kernel::new("haar", -1.0, 1.0, vec![0.0], |s| if s < 0.0 { 0.5 } else { -0.5 })
            .expect("valid support")
    }

    /// `s (1 - s²)³` on `[-1, 1]`: smooth at the endpoints and mean zero.
    pub fn odd_polynomial() -> Kernel {
        Kernel::new("odd-poly", -1.0, 1.0, vec![0.0], |s| s * (1.0 - s * s).powi(3))
            .expect("valid support")
    }

    /// `Φ(s / t) / t`.
    pub fn dilate(&self, t: f64) -> Result<Kernel> {
        if !(t > 0.0) {
            return Err(Error::domain("dilation factor must be positive"));
        }
        let phi = self.phi.clone();
        let breaks = self.breaks.iter().map(|b| b * t).collect();
        Kernel::new(
            format!("{}@{t}", self.label),
            self.lo * t,
            self.hi * t,
            breaks,
            move |s| phi(s / t) / t,
        )
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s < self.lo || s > self.hi {
            0.0
        } else {
            (self.phi)(s)
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// `(f * Φ_y)(x) = ∫ f(x - y s) Φ(s) ds`.
#[derive(Clone, Debug)]
pub struct KernelField {
    data: BoundaryData,
    kernel: Kernel,
    opts: QuadOptions,
}

pub fn kernel_field(f: BoundaryData, kernel: Kernel, tol: f64) -> Result<KernelField> {
    if !(tol > 0.0) {
        return Err(Error::domain("kernel tolerance must be positive"));
    }
    Ok(KernelField {
        data: f,
        kernel,
        opts: QuadOptions {
            abs_tol: tol * 1e-4,
            rel_tol: tol,
            max_intervals: 20_000,
        },
    })
}

impl HarmonicField for KernelField {
    fn eval(&self, x: f64, y: f64) -> Result<f64> {
        check_height(y)?;
        let mut breaks = self.kernel.breaks.clone();
        // data kinks at t = x - y s
        breaks.extend(self.data.knots().iter().map(|&t| (x - t) / y));
        let (lo, hi) = self.data.support();
        breaks.push((x - lo) / y);
        breaks.push((x - hi) / y);
        try_integrate(
            |s| Ok(self.data.eval(x - y * s) * self.kernel.eval(s)),
            self.kernel.lo,
            self.kernel.hi,
            &breaks,
            &self.opts,
        )
    }

    fn grad(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        central_gradient(|a, b| self.eval(a, b), x, y)
    }

    fn kind(&self) -> FieldKind {
        FieldKind::Kernel
    }
}

/// The region `{(x, y) : y > φ(x)}` above a Lipschitz graph.
#[derive(Clone)]
pub struct GraphDomain {
    phi: RealFn,
    lip: f64,
    kinks: Vec<f64>,
    flat: bool,
}

impl fmt::Debug for GraphDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphDomain")
            .field("lip", &self.lip)
            .field("flat", &self.flat)
            .finish()
    }
}

impl GraphDomain {
    /// The upper half-plane, `φ ≡ 0`.
    pub fn flat() -> GraphDomain {
        GraphDomain {
            phi: Arc::new(|_| 0.0),
            lip: 0.0,
            kinks: Vec::new(),
            flat: true,
        }
    }

    pub fn from_fn<F>(lip: f64, phi: F) -> Result<GraphDomain>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lip >= 0.0 && lip.is_finite()) {
            return Err(Error::domain("Lipschitz constant must be finite and non-negative"));
        }
        Ok(GraphDomain {
            phi: Arc::new(phi),
            lip,
            kinks: Vec::new(),
            flat: false,
        })
    }

    pub fn phi(&self, x: f64) -> f64 {
        (self.phi)(x)
    }

    pub fn lip_constant(&self) -> f64 {
        self.lip
    }

    pub fn is_flat(&self) -> bool {
        self.flat
    }

    /// Euclidean distance from `(x, y)` to the graph of `φ`.
    ///
    /// The minimiser lies within the vertical gap of `x`; it is located by a scan of that
    /// window followed by golden-section refinement to `1e-8` of the gap.
    pub fn dist(&self, x: f64, y: f64) -> Result<f64> {
        let gap = y - self.phi(x);
        if !(gap > 0.0) {
            return Err(Error::domain(format!("point ({x}, {y}) is not above the graph")));
        }
        if self.flat {
            return Ok(y);
        }
        let d = |t: f64| (x - t).hypot(y - self.phi(t));
        const SCAN: usize = 64;
        let step = 2.0 * gap / SCAN as f64;
        let (mut best_t, mut best) = (x, gap);
        for i in 0..=SCAN {
            let t = x - gap + step * i as f64;
            let v = d(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        for &k in &self.kinks {
            if (k - x).abs() <= gap {
                let v = d(k);
                if v < best {
                    best = v;
                    best_t = k;
                }
            }
        }
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (best_t - step, best_t + step);
        let tol = 1e-8 * gap;
        let mut c = b - gr * (b - a);
        let mut e = a + gr * (b - a);
        let (mut fc, mut fe) = (d(c), d(e));
        while b - a > tol {
            if fc < fe {
                b = e;
                e = c;
                fe = fc;
                c = b - gr * (b - a);
                fc = d(c);
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + gr * (b - a);
                fe = d(e);
            }
        }
        Ok(best.min(fc).min(fe))
    }
}

/// Cone domain with vertices `sigma`: `φ(x) = min |x - x0| / M`.
pub fn cone_domain(sigma: &[f64], m: f64) -> Result<GraphDomain> {
    if sigma.is_empty() {
        return Err(Error::domain("cone domain needs at least one vertex"));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::domain(format!("cone aperture must be positive, got {m}")));
    }
    let pts = sigma.to_vec();
    let mut kinks = pts.clone();
    let mut sorted = pts.clone();
    sorted.sort_by(f64::total_cmp);
    kinks.extend(sorted.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    Ok(GraphDomain {
        phi: Arc::new(move |x| pts.iter().map(|&p| (x - p).abs()).fold(f64::INFINITY, f64::min) / m),
        lip: 1.0 / m,
        kinks,
        flat: false,
    })
}

/// Absolute evaluation points in the plane.
#[derive(Clone, Debug, Default)]
pub struct Grid {
    pub points: Vec<(f64, f64)>,
}

impl Grid {
    pub fn new(points: Vec<(f64, f64)>) -> Grid {
        Grid { points }
    }

    /// `(x, φ(x) + h)` for every `x` in `xs` and `h` in `heights`.
    pub fn above_graph(dom: &GraphDomain, xs: &[f64], heights: &[f64]) -> Grid {
        let points = xs
            .iter()
            .flat_map(|&x| heights.iter().map(move |&h| (x, dom.phi(x) + h)))
            .collect();
        Grid { points }
    }

    /// Heights `2^-j` for `j = 0..n` (plus `extra` heights above 1).
    pub fn dyadic_heights(n: usize) -> Vec<f64> {
        (0..n).map(|j| 2f64.powi(-(j as i32))).collect()
    }
}

fn grid_max<F>(grid: &Grid, f: F) -> Result<f64>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    if grid.points.is_empty() {
        return Err(Error::domain("empty evaluation grid"));
    }
    let vals: Vec<f64> = grid
        .points
        .par_iter()
        .map(|&(x, y)| f(x, y))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// `max |u| / w(dist)` over the grid.
pub fn growth_norm(u: &dyn HarmonicField, dom: &GraphDomain, w: &Weight, grid: &Grid) -> Result<f64> {
    grid_max(grid, |x, y| {
        let d = dom.dist(x, y)?;
        Ok(u.eval(x, y)?.abs() / w.eval(d)?)
    })
}

/// `max dist · |∇u|` over the grid.
pub fn bloch_seminorm(u: &dyn HarmonicField, dom: &GraphDomain, grid: &Grid) -> Result<f64> {
    grid_max(grid, |x, y| {
        let d = dom.dist(x, y)?;
        let (gx, gy) = u.grad(x, y)?;
        Ok(d * gx.hypot(gy))
    })
}

/// `max θ |∇u|(x, φ(x) + θ) / w(θ)` over the grid, with `θ` the height above the graph.
pub fn gradient_bound_check(u: &dyn HarmonicField, dom: &GraphDomain, w: &Weight, grid: &Grid) -> Result<f64> {
    grid_max(grid, |x, y| {
        let theta = y - dom.phi(x);
        if !(theta > 0.0) {
            return Err(Error::domain(format!("point ({x}, {y}) is not above the graph")));
        }
        let (gx, gy) = u.grad(x, y)?;
        Ok(theta * gx.hypot(gy) / w.eval(theta)?)
    })
}

/// `u_xx + u_yy` by the five-point stencil with step `h`.
pub fn discrete_laplacian(u: &dyn HarmonicField, x: f64, y: f64, h: f64) -> Result<f64> {
    let c = u.eval(x, y)?;
    let s = u.eval(x + h, y)? + u.eval(x - h, y)? + u.eval(x, y + h)? + u.eval(x, y - h)?;
    Ok((s - 4.0 * c) / (h * h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indicator() -> BoundaryData {
        BoundaryData::new("1[-1,1]", -1.0, 1.0, |_| 1.0).unwrap()
    }

    #[test]
    fn poisson_examples() {
        let zero = BoundaryData::new("0", -1.0, 1.0, |_| 0.0).unwrap();
        let u = poisson_extend(zero, 1e-10).unwrap();
        assert_eq!(u.eval(0.3, 0.2).unwrap(), 0.0);

        let u = poisson_extend(indicator(), 1e-12).unwrap();
        assert!((u.eval(0.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
        // closed form (arctan((1-x)/y) + arctan((1+x)/y)) / π
        let (x, y): (f64, f64) = (0.3, 0.2);
        let want = (((1.0 - x) / y).atan() + ((1.0 + x) / y).atan()) / PI;
        assert!((u.eval(x, y).unwrap() - want).abs() < 1e-11);
        let lap = discrete_laplacian(&u, x, y, 1e-3).unwrap();
        assert!(lap.abs() < 1e-4, "{lap}");
    }

    #[test]
    fn poisson_gradient_matches_closed_form() {
        let u = poisson_extend(indicator(), 1e-12).unwrap();
        let (x, y) = (0.7, 0.1);
        // ∂x of the arctan form
        let d = |a: f64| y / (y * y + a * a);
        let gx = (-d(1.0 - x) + d(1.0 + x)) / PI;
        let gy = (-(1.0 - x) / (y * y + (1.0 - x).powi(2)) - (1.0 + x) / (y * y + (1.0 + x).powi(2))) / PI;
        let (ax, ay) = u.grad(x, y).unwrap();
        assert!((ax - gx).abs() < 1e-9 && (ay - gy).abs() < 1e-9);
    }

    #[test]
    fn lacunary_examples() {
        let w = Weight::power(1.0).unwrap();
        let u = lacunary_series(&w, 1, Some(vec![0.0, 0.0]), 0).unwrap();
        for y in [0.1f64, 1.0, 3.0] {
            let want = (-y).exp() + (-2.0 * y).exp();
            assert!((u.eval(0.0, y).unwrap() - want).abs() < 1e-15);
        }
        assert!(lacunary_series(&w, 0, None, 1).is_err());
        assert!(lacunary_series(&w, 2, Some(vec![0.0]), 1).is_err());
    }

    #[test]
    fn lacunary_seed_is_deterministic() {
        let w = Weight::w0();
        let a = lacunary_series(&w, 12, None, 7).unwrap();
        let b = lacunary_series(&w, 12, None, 7).unwrap();
        let c = lacunary_series(&w, 12, None, 8).unwrap();
        assert_eq!(a.phases, b.phases);
        assert_ne!(a.phases, c.phases);
    }

    #[test]
    fn lacunary_truncation_is_recorded() {
        let w = Weight::power(1.0).unwrap();
        let u = lacunary_series(&w, 1100, None, 1).unwrap();
        assert!(u.levels() < 1100);
        assert!(!u.warnings().is_empty());
        let small = lacunary_series(&w, 10, None, 1).unwrap();
        assert!(small.warnings().is_empty());
    }

    #[test]
    fn box_examples() {
        let id = BoundaryData::new("t", -1e6, 1e6, |t| t).unwrap().with_holder(1.0).unwrap();
        let u = box_field(id).unwrap();
        assert!((u.eval(0.4, 0.3).unwrap() - 1.0).abs() < 1e-12);
        let c = BoundaryData::new("3", -10.0, 10.0, |_| 3.0).unwrap().with_holder(1.0).unwrap();
        assert_eq!(box_field(c).unwrap().eval(0.1, 0.5).unwrap(), 0.0);
        let a = 0.5;
        let cusp = BoundaryData::new("|t|^a", -10.0, 10.0, move |t: f64| t.abs().powf(a))
            .unwrap()
            .with_holder(a)
            .unwrap();
        let u = box_field(cusp).unwrap();
        for &y in &[1e-3, 0.1, 0.9] {
            assert_eq!(u.eval(0.0, y).unwrap(), 0.0);
        }
        let plain = BoundaryData::new("t", -1.0, 1.0, |t| t).unwrap();
        assert!(box_field(plain).is_err());
    }

    #[test]
    fn kernel_examples() {
        let c = BoundaryData::new("2", -100.0, 100.0, |_| 2.0).unwrap();
        for k in [Kernel::haar(), Kernel::odd_polynomial()] {
            let u = kernel_field(c.clone(), k, 1e-12).unwrap();
            assert!(u.eval(0.3, 0.5).unwrap().abs() < 1e-12);
        }

        // kernel_field(f', box) against box_field(f) for f = sin
        let f = BoundaryData::new("sin", -50.0, 50.0, f64::sin).unwrap().with_holder(1.0).unwrap();
        let df = BoundaryData::new("cos", -50.0, 50.0, f64::cos).unwrap();
        let b = box_field(f).unwrap();
        let k = kernel_field(df, Kernel::box_average(), 1e-12).unwrap();
        for &(x, y) in &[(0.2, 0.1), (-1.3, 0.7), (2.0, 1e-3)] {
            assert!((b.eval(x, y).unwrap() - k.eval(x, y).unwrap()).abs() < 1e-6);
        }

        let g = BoundaryData::new("bump", -2.0, 2.0, |t: f64| (-t * t).exp() * (3.0 * t).cos()).unwrap();
        let plain = kernel_field(g.clone(), Kernel::odd_polynomial(), 1e-12).unwrap();
        let dil = kernel_field(g, Kernel::odd_polynomial().dilate(2.0).unwrap(), 1e-12).unwrap();
        let (x, y) = (0.25, 0.3);
        assert!((plain.eval(x, 2.0 * y).unwrap() - dil.eval(x, y).unwrap()).abs() < 1e-11);
    }

    #[test]
    fn cone_examples() {
        let d = cone_domain(&[0.0], 1.0).unwrap();
        for &x in &[-2.0, -0.5, 0.0, 1.5] {
            assert_eq!(d.phi(x), f64::abs(x));
        }
        let d = cone_domain(&[0.0, 2.0], 2.0).unwrap();
        assert_eq!(d.phi(1.0), 0.5);
        assert_eq!(d.lip_constant(), 0.5);
        assert!(cone_domain(&[], 1.0).is_err());
        assert!(cone_domain(&[0.0], 0.0).is_err());
    }

    #[test]
    fn distance_to_cone_and_flat_graph() {
        assert_eq!(GraphDomain::flat().dist(3.0, 0.25).unwrap(), 0.25);
        assert!(GraphDomain::flat().dist(0.0, 0.0).is_err());
        // above the vertex of φ = |x|, nearest point is on a 45° ray
        let d = cone_domain(&[0.0], 1.0).unwrap();
        let got = d.dist(0.0, 1.0).unwrap();
        assert!((got - 0.5f64.sqrt()).abs() < 1e-8);
        let got = d.dist(3.0, 4.0).unwrap();
        assert!((got - 0.5f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn seminorm_examples() {
        let dom = GraphDomain::flat();
        let w = Weight::w0();
        let xs = [-1.0, 0.0, 0.5];
        let grid = Grid::above_graph(&dom, &xs, &[2.0, 4.0]);
        assert_eq!(growth_norm(&constant_field(5.0), &dom, &w, &grid).unwrap(), 5.0);

        let grid = Grid::above_graph(&dom, &xs, &Grid::dyadic_heights(30));
        let syn = SyntheticField::new(w.clone(), 1.0);
        assert!((growth_norm(&syn, &dom, &w, &grid).unwrap() - 1.0).abs() < 1e-15);

        let x = AffineField { a: 0.0, b: 1.0, c: 0.0 };
        assert!((bloch_seminorm(&x, &dom, &grid).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(bloch_seminorm(&constant_field(2.0), &dom, &grid).unwrap(), 0.0);
        assert_eq!(gradient_bound_check(&constant_field(2.0), &dom, &w, &grid).unwrap(), 0.0);
        assert!(gradient_bound_check(&syn, &dom, &w, &grid).unwrap().is_finite());

        let bad = Grid::new(vec![(0.0, -1.0)]);
        assert!(growth_norm(&syn, &dom, &w, &bad).is_err());
        assert!(growth_norm(&syn, &dom, &w, &Grid::default()).is_err());
    }

    #[test]
    fn synthetic_gradient_matches_differences() {
        for w in [Weight::w0(), Weight::power(0.5).unwrap(), Weight::log_power(2.0).unwrap()] {
            let u = SyntheticField::new(w, 2.0);
            let y = 0.013;
            let (_, gy) = u.grad(0.0, y).unwrap();
            let h = 1e-6 * y;
            let fd = (u.eval(0.0, y + h).unwrap() - u.eval(0.0, y - h).unwrap()) / (2.0 * h);
            assert!((gy - fd).abs() <= 1e-6 * gy.abs());
        }
    }
}

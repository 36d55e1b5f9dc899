//! Doubling weights `w`, their scale/rank sequences, and integration against `d(1/w)`.
//!
//! A weight is continuous, non-increasing, equal to 1 for `y > 1`, doubling
//! (`w(y) <= D w(2y)`) and unbounded at `0+`. Every built-in weight is a function of
//! the depth `ℓ = ln(1/y)` in closed form, which lets the Stieltjes engine reach heights
//! far below the smallest positive `f64`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Default relative tolerance of the Stieltjes engine.
pub const DEFAULT_STIELTJES_TOL: f64 = 1e-9;
/// Default tolerance of weight inversion.
pub const DEFAULT_INVERSION_TOL: f64 = 1e-12;
/// Smallest height used to bracket an inversion, `2^-1074`.
pub const INVERSION_FLOOR: f64 = f64::MIN_POSITIVE * f64::EPSILON;

/// Depth coordinate `ℓ = ln(1/y)` of a height `y`.
///
/// Depth is the natural coordinate for heights below the `f64` range: `y = e^{-ℓ}` may
/// underflow while `ℓ` stays representable.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Depth(pub f64);

impl Depth {
    pub fn of_height(y: f64) -> Depth {
        Depth(-y.ln())
    }

    /// `e^{-ℓ}`; zero once it underflows.
    pub fn height(self) -> f64 {
        (-self.0).exp()
    }

    fn zeta(self) -> f64 {
        self.0.max(0.0).ln_1p()
    }

    fn from_zeta(z: f64) -> Depth {
        Depth(z.exp_m1())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WeightFamily {
    /// `log log(e/y) + 1`.
    LogLog,
    /// `y^{-beta}`.
    Power { beta: f64 },
    /// `(log(e/y))^gamma`.
    LogPower { gamma: f64 },
    /// `min(1/y, cap)`: bounded, so it violates the blow-up requirement. Error-path tests only.
    Capped { cap: f64 },
}

/// A doubling decreasing weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    family: WeightFamily,
    doubling: f64,
    label: String,
}

impl Weight {
    pub fn w0() -> Weight {
        Weight {
            family: WeightFamily::LogLog,
            // sup of w0(y)/w0(2y) is 1 + ln(1 + ln 2) ≈ 1.53
            doubling: 2.0,
            label: "w0".into(),
        }
    }

    pub fn power(beta: f64) -> Result<Weight> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::domain(format!("power exponent must be positive, got {beta}")));
        }
        Ok(Weight {
            family: WeightFamily::Power { beta },
            doubling: 2f64.powf(beta),
            label: format!("pow:{beta}"),
        })
    }

    pub fn log_power(gamma: f64) -> Result<Weight> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::domain(format!("log-power exponent must be positive, got {gamma}")));
        }
        Ok(Weight {
            family: WeightFamily::LogPower { gamma },
            doubling: (1.0 + std::f64::consts::LN_2).powf(gamma),
            label: format!("logpow:{gamma}"),
        })
    }

    pub fn capped(cap: f64) -> Result<Weight> {
        if !(cap >= 1.0 && cap.is_finite()) {
            return Err(Error::domain(format!("cap must be at least 1, got {cap}")));
        }
        Ok(Weight {
            family: WeightFamily::Capped { cap },
            doubling: 2.0,
            label: format!("capped:{cap}"),
        })
    }

    pub fn family(&self) -> &WeightFamily {
        &self.family
    }

    pub fn doubling_constant(&self) -> f64 {
        self.doubling
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Whether `w(0+) = ∞`.
    pub fn is_unbounded(&self) -> bool {
        !matches!(self.family, WeightFamily::Capped { .. })
    }

    /// `w(y)`; exactly 1 for `y >= 1`.
    pub fn eval(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::domain(format!("weight evaluated at non-positive height {y}")));
        }
        if y >= 1.0 {
            return Ok(1.0);
        }
        Ok(match self.family {
            WeightFamily::LogLog => (-y.ln()).ln_1p() + 1.0,
            WeightFamily::Power { beta } => y.powf(-beta),
            WeightFamily::LogPower { gamma } => (1.0 - y.ln()).powf(gamma),
            WeightFamily::Capped { cap } => (1.0 / y).min(cap),
        })
    }

    /// `w(e^{-ℓ})`, valid for every depth including those whose height underflows.
    pub fn eval_depth(&self, depth: Depth) -> f64 {
        let l = depth.0;
        if l <= 0.0 {
            return 1.0;
        }
        match self.family {
            WeightFamily::LogLog => l.ln_1p() + 1.0,
            WeightFamily::Power { beta } => (beta * l).exp(),
            WeightFamily::LogPower { gamma } => (1.0 + l).powf(gamma),
            WeightFamily::Capped { cap } => l.exp().min(cap),
        }
    }

    /// `dw/dℓ` at depth `ℓ`; zero for `ℓ <= 0`.
    pub fn depth_derivative(&self, depth: Depth) -> f64 {
        let l = depth.0;
        if l <= 0.0 {
            return 0.0;
        }
        match self.family {
            WeightFamily::LogLog => 1.0 / (1.0 + l),
            WeightFamily::Power { beta } => beta * (beta * l).exp(),
            WeightFamily::LogPower { gamma } => gamma * (1.0 + l).powf(gamma - 1.0),
            WeightFamily::Capped { cap } => {
                if l.exp() < cap {
                    l.exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn inv_depth(&self, depth: Depth) -> f64 {
        1.0 / self.eval_depth(depth)
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl FromStr for Weight {
    type Err = Error;

    /// Parses `w0`, `pow:B`, `logpow:G` and `capped:C`.
    fn from_str(token: &str) -> Result<Weight> {
        let token = token.trim();
        let (family, param) = match token.split_once(':') {
            Some((f, p)) => (f, Some(p)),
            None => (token, None),
        };
        let number = |p: Option<&str>| -> Result<f64> {
            let p = p.ok_or_else(|| Error::parse(token, "missing parameter after ':'"))?;
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(p, "not a number"))
        };
        let wrap = |r: Result<Weight>| r.map_err(|e| Error::parse(token, e.to_string()));
        match family {
            "w0" if param.is_none() => Ok(Weight::w0()),
            "pow" => wrap(Weight::power(number(param)?)),
            "logpow" => wrap(Weight::log_power(number(param)?)),
            "capped" => wrap(Weight::capped(number(param)?)),
            _ => Err(Error::parse(token, "unknown weight family (w0, pow:B, logpow:G, capped:C)")),
        }
    }
}

/// Scales `s_k` with `w(s_k) = 2^k` and dyadic ranks `alpha_k = -floor(log2 s_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleSequence {
    pub s: Vec<f64>,
    pub alpha: Vec<u32>,
}

impl ScaleSequence {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Finds `y ∈ (0, 1]` with `w(y) = v` by bisection on the depth.
///
/// `tol` bounds the bracket width relative to the returned height.
pub fn invert_weight(w: &Weight, v: f64, tol: f64) -> Result<f64> {
    if !(v >= 1.0) {
        return Err(Error::domain(format!("weight values are at least 1, got {v}")));
    }
    if v == 1.0 {
        return Ok(1.0);
    }
    let floor = Depth::of_height(INVERSION_FLOOR);
    if w.eval_depth(floor) < v {
        return Err(Error::UnboundedWeight(format!(
            "{} stays below {v} down to 2^-1074",
            w.label()
        )));
    }
    let depth = bisect_depth(w, v, Depth(0.0), floor, tol)?;
    Ok(depth.height())
}

/// Like [`invert_weight`] but returns the depth, so targets beyond `2^-1074` are reachable.
pub fn invert_weight_depth(w: &Weight, v: f64, tol: f64) -> Result<Depth> {
    if !(v >= 1.0) {
        return Err(Error::domain(format!("weight values are at least 1, got {v}")));
    }
    if v == 1.0 {
        return Ok(Depth(0.0));
    }
    let mut hi = 1.0;
    while w.eval_depth(Depth(hi)) < v {
        hi *= 2.0;
        if !hi.is_finite() || hi > 1e300 {
            return Err(Error::UnboundedWeight(format!(
                "{} stays below {v} at every representable depth",
                w.label()
            )));
        }
    }
    bisect_depth(w, v, Depth(0.0), Depth(hi), tol)
}

fn bisect_depth(w: &Weight, v: f64, mut lo: Depth, mut hi: Depth, tol: f64) -> Result<Depth> {
    // Invariant: w(lo) < v <= w(hi).
    for _ in 0..400 {
        let mid = if hi.0 > 4.0 * lo.0.max(1.0) {
            Depth((lo.0.max(1e-3) * hi.0).sqrt())
        } else {
            Depth(0.5 * (lo.0 + hi.0))
        };
        if mid.0 <= lo.0 || mid.0 >= hi.0 {
            break;
        }
        if w.eval_depth(mid) < v {
            lo = mid;
        } else {
            hi = mid;
        }
        // relative height bracket: e^{-lo} - e^{-hi} <= tol * e^{-hi}
        if (hi.0 - lo.0).exp_m1() <= tol {
            break;
        }
    }
    Ok(Depth(0.5 * (lo.0 + hi.0)))
}

/// Scale sequence for `k = 0..=max_k`.
pub fn scale_sequence(w: &Weight, max_k: usize) -> Result<ScaleSequence> {
    let mut s = Vec::with_capacity(max_k + 1);
    let mut alpha = Vec::with_capacity(max_k + 1);
    s.push(1.0);
    alpha.push(0);
    let d2 = w.doubling_constant().powi(2);
    for k in 1..=max_k {
        let target = 2f64.powi(k as i32);
        let sk = invert_weight(w, target, DEFAULT_INVERSION_TOL)?;
        if sk >= *s.last().expect("s[0] is set") {
            return Err(Error::Construction(format!(
                "scale sequence of {} is not strictly decreasing at k = {k}",
                w.label()
            )));
        }
        // Bisection lands within `tol` of the root; a root on a dyadic point must not
        // slip to the next rank.
        let l2 = sk.log2();
        let l2 = if (l2 - l2.round()).abs() < 1e-9 { l2.round() } else { l2 };
        let a = -(l2.floor());
        if a > u32::MAX as f64 {
            return Err(Error::domain("dyadic rank out of range"));
        }
        let a = a as u32;
        let ratio = w.eval_depth(Depth(a as f64 * std::f64::consts::LN_2)) / target;
        if !(ratio >= 1.0 / d2 - 1e-12 && ratio <= d2 + 1e-12) {
            return Err(Error::Construction(format!(
                "w(2^-{a}) / 2^{k} = {ratio} leaves [1/D^2, D^2] for {}",
                w.label()
            )));
        }
        s.push(sk);
        alpha.push(a);
    }
    Ok(ScaleSequence { s, alpha })
}

/// Largest ratio `w(y) / w(2y)` over the grid.
pub fn verify_doubling(w: &Weight, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::domain("doubling check needs a non-empty grid"));
    }
    let mut worst: f64 = 0.0;
    for &y in grid {
        worst = worst.max(w.eval(y)? / w.eval(2.0 * y)?);
    }
    Ok(worst)
}

/// Tuning of the Stieltjes engine.
#[derive(Clone, Debug)]
pub struct StieltjesOptions {
    /// Relative tolerance: refinement stops once the error estimate is below
    /// `tol * (1 + |estimate|)`.
    pub tol: f64,
    pub initial_cells: usize,
    pub max_depth: u32,
    pub max_evals: usize,
}

impl Default for StieltjesOptions {
    fn default() -> Self {
        StieltjesOptions {
            tol: DEFAULT_STIELTJES_TOL,
            initial_cells: 64,
            max_depth: 40,
            max_evals: 4_000_000,
        }
    }
}

impl StieltjesOptions {
    pub fn with_tol(tol: f64) -> Self {
        StieltjesOptions {
            tol,
            ..Default::default()
        }
    }
}

/// A partition cell with its midpoint sum `coarse` and the sums over its halves.
struct Cell {
    z0: f64,
    z1: f64,
    f0: f64,
    f1: f64,
    fm: f64,
    coarse: f64,
    left: f64,
    right: f64,
    level: u32,
}

impl Cell {
    fn fine(&self) -> f64 {
        self.left + self.right
    }

    /// Richardson-corrected value.
    fn value(&self) -> f64 {
        self.fine() + (self.fine() - self.coarse) / 3.0
    }

    fn err(&self) -> f64 {
        (self.fine() - self.coarse).abs() / 3.0
    }
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Cell {}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err().total_cmp(&other.err())
    }
}

/// Riemann–Stieltjes integral `∫ g d(1/w)` over the heights between `top` and `bottom`
/// (`top` is the smaller depth, i.e. the larger height).
///
/// The partition lives in `ζ = ln(1 + ℓ)`. Each cell compares its midpoint sum
/// `g(mid)·Δ(1/w)` with the sum over its two halves; the cell with the largest
/// discrepancy is split until the discrepancies add up to the budget, and a
/// Richardson step is applied to every cell. `breaks` are extra depths forced onto the
/// initial partition (kinks of `g`).
pub fn stieltjes_integrate_depth<G>(
    mut g: G,
    w: &Weight,
    top: Depth,
    bottom: Depth,
    breaks: &[Depth],
    opts: &StieltjesOptions,
) -> Result<f64>
where
    G: FnMut(Depth) -> Result<f64>,
{
    if top.0 < 0.0 || bottom.0 < top.0 {
        return Err(Error::domain(format!(
            "Stieltjes range needs 0 <= top depth <= bottom depth, got {} and {}",
            top.0, bottom.0
        )));
    }
    if top.0 == bottom.0 {
        return Ok(0.0);
    }
    let za = top.zeta();
    let zb = bottom.zeta();
    let span = zb - za;
    let mut nodes: Vec<f64> = (0..=opts.initial_cells)
        .map(|i| za + span * i as f64 / opts.initial_cells as f64)
        .collect();
    nodes.extend(
        breaks
            .iter()
            .map(|d| d.zeta())
            .filter(|&z| z > za && z < zb),
    );
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    *nodes.last_mut().expect("at least two nodes") = zb;
    nodes[0] = za;

    let mut evals = 0usize;
    let mass = |z: f64| w.inv_depth(Depth::from_zeta(z));
    // `g(mid)·Δ(1/w)` on `[z0, z1]`, skipping massless cells
    let mut piece = |z0: f64, z1: f64, f0: f64, f1: f64, evals: &mut usize| -> Result<f64> {
        let df = f0 - f1;
        if df == 0.0 {
            return Ok(0.0);
        }
        *evals += 1;
        let z = 0.5 * (z0 + z1);
        let v = g(Depth::from_zeta(z))?;
        if !v.is_finite() {
            return Err(Error::domain(format!(
                "integrand is not finite at depth {}",
                Depth::from_zeta(z).0
            )));
        }
        Ok(v * df)
    };
    let mut split = |z0: f64, z1: f64, f0: f64, f1: f64, coarse: Option<f64>, level: u32, evals: &mut usize| -> Result<Cell> {
        let coarse = match coarse {
            Some(c) => c,
            None => piece(z0, z1, f0, f1, evals)?,
        };
        let zm = 0.5 * (z0 + z1);
        let fm = mass(zm);
        let left = piece(z0, zm, f0, fm, evals)?;
        let right = piece(zm, z1, fm, f1, evals)?;
        Ok(Cell {
            z0,
            z1,
            f0,
            f1,
            fm,
            coarse,
            left,
            right,
            level,
        })
    };

    let f_nodes: Vec<f64> = nodes.iter().map(|&z| mass(z)).collect();
    let mut heap = std::collections::BinaryHeap::with_capacity(2 * nodes.len());
    let mut finished = 0.0;
    let mut coarse_total = 0.0;
    for i in 0..nodes.len() - 1 {
        let (z0, z1, f0, f1) = (nodes[i], nodes[i + 1], f_nodes[i], f_nodes[i + 1]);
        if f0 == f1 {
            continue;
        }
        let cell = split(z0, z1, f0, f1, None, 0, &mut evals)?;
        coarse_total += cell.coarse;
        heap.push(cell);
    }
    let budget = opts.tol * (1.0 + coarse_total.abs());
    let mut err_total: f64 = heap.iter().map(Cell::err).sum();
    let mut unresolved = false;
    let mut since_resum = 0usize;
    while err_total > budget {
        let Some(cell) = heap.pop() else { break };
        let zm = 0.5 * (cell.z0 + cell.z1);
        if !(zm > cell.z0 && zm < cell.z1) || cell.fm == cell.f0 && cell.fm == cell.f1 {
            // no room left to split: the cell is final
            err_total -= cell.err();
            finished += cell.value();
            continue;
        }
        if cell.level >= opts.max_depth || evals >= opts.max_evals {
            unresolved = true;
            heap.push(cell);
            break;
        }
        err_total -= cell.err();
        let l = split(cell.z0, zm, cell.f0, cell.fm, Some(cell.left), cell.level + 1, &mut evals)?;
        let r = split(zm, cell.z1, cell.fm, cell.f1, Some(cell.right), cell.level + 1, &mut evals)?;
        err_total += l.err() + r.err();
        heap.push(l);
        heap.push(r);
        since_resum += 1;
        if since_resum == 4096 {
            since_resum = 0;
            err_total = heap.iter().map(Cell::err).sum();
        }
    }
    let total = finished + heap.iter().map(Cell::value).sum::<f64>();
    if unresolved {
        return Err(Error::Tolerance {
            message: format!(
                "Stieltjes refinement hit its limit ({evals} evaluations) for {}",
                w.label()
            ),
            partial: total,
        });
    }
    Ok(total)
}

/// `∫_a^b g(y) d(1/w(y))` for `0 < a <= b <= 1`.
pub fn stieltjes_integrate<G>(g: G, w: &Weight, a: f64, b: f64, tol: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    if !(a > 0.0) || a > b || b > 1.0 {
        return Err(Error::domain(format!(
            "Stieltjes bounds need 0 < a <= b <= 1, got a = {a}, b = {b}"
        )));
    }
    stieltjes_integrate_depth(
        |d| Ok(g(d.height())),
        w,
        Depth::of_height(b),
        Depth::of_height(a),
        &[],
        &StieltjesOptions::with_tol(tol),
    )
}

/// `∫ g d(1/w)` from the height `e^{-top}` down to the boundary `y = 0+`.
///
/// The integral is split at the depth `cut`: the part below it is integrated again
/// out to a far depth and its last value times the remaining mass `1/w(far)` closes
/// the range. If the far part disagrees with `g(cut)/w(cut)` beyond the guard the
/// integrand is not integrable against `d(1/w)` at the boundary and
/// [`Error::Divergence`] is returned.
pub fn stieltjes_to_boundary<G>(
    mut g: G,
    w: &Weight,
    top: Depth,
    cut: Depth,
    opts: &StieltjesOptions,
) -> Result<f64>
where
    G: FnMut(Depth) -> Result<f64>,
{
    let cut = Depth(cut.0.max(top.0 + 1.0));
    let far = Depth(cut.0 * 1e6);
    let main = stieltjes_integrate_depth(&mut g, w, top, cut, &[], opts)?;
    let tail = match stieltjes_integrate_depth(&mut g, w, cut, far, &[], opts) {
        Ok(v) => v,
        Err(Error::Domain(msg)) => {
            return Err(Error::Divergence(format!("integrand blows up near the boundary: {msg}")))
        }
        Err(e) => return Err(e),
    };
    let at_cut = g(cut)? * w.inv_depth(cut);
    let g_far = g(far)?;
    let at_far = if w.inv_depth(far) == 0.0 {
        0.0
    } else {
        g_far * w.inv_depth(far)
    };
    if !at_far.is_finite() {
        return Err(Error::Divergence("integrand is not finite at the far cut".into()));
    }
    let value = main + tail + at_far;
    let guard = (100.0 * opts.tol).max(1e-6) * (1.0 + value.abs());
    if (tail + at_far - at_cut).abs() > guard {
        return Err(Error::Divergence(format!(
            "mass near the boundary does not settle for {} (tail {tail:e}, expected {at_cut:e})",
            w.label()
        )));
    }
    Ok(value)
}

/// Fourier multiplier symbol `m(τ) = ∫_0^1 e^{-2π y |τ|} d(1/w(y))`.
pub fn multiplier_symbol(w: &Weight, tau: f64, tol: f64) -> Result<f64> {
    if !tau.is_finite() {
        return Err(Error::domain("multiplier frequency must be finite"));
    }
    let rate = 2.0 * std::f64::consts::PI * tau.abs();
    if rate == 0.0 {
        return Ok(1.0);
    }
    let cut = Depth(rate.ln_1p() + 40.0);
    stieltjes_to_boundary(
        |d| Ok((-rate * d.height()).exp()),
        w,
        Depth(0.0),
        cut,
        &StieltjesOptions::with_tol(tol),
    )
}

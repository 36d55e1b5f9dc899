//! Dyadic intervals of `(0, 1]`, Haar expansions in L∞ normalisation, superdyadic
//! martingale tables and their quadratic functions.
//!
//! Intervals are half-open on the left: `(i 2^-k, (i + 1) 2^-k]`. The Haar function of an
//! interval is `-1` on its left half and `+1` on its right half.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harmonic::GraphDomain;
use crate::quadrature::{try_integrate, QuadOptions};
use crate::weights::ScaleSequence;

/// Largest rank stored densely.
pub const MAX_DENSE_RANK: u32 = 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    pub rank: u32,
    pub index: u64,
}

impl DyadicInterval {
    pub fn new(rank: u32, index: u64) -> Result<DyadicInterval> {
        if rank > 63 || index >= 1u64 << rank {
            return Err(Error::domain(format!("no dyadic interval of rank {rank} with index {index}")));
        }
        Ok(DyadicInterval { rank, index })
    }

    pub fn root() -> DyadicInterval {
        DyadicInterval { rank: 0, index: 0 }
    }

    /// The rank-`k` interval containing `t ∈ (0, 1]`.
    pub fn containing(rank: u32, t: f64) -> Result<DyadicInterval> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::domain(format!("point {t} lies outside (0, 1]")));
        }
        if rank > 63 {
            return Err(Error::domain(format!("rank {rank} exceeds 63")));
        }
        let scaled = t * (1u64 << rank) as f64;
        let index = (scaled.ceil() as u64).saturating_sub(1).min((1u64 << rank) - 1);
        Ok(DyadicInterval { rank, index })
    }

    pub fn parent(self) -> Option<DyadicInterval> {
        (self.rank > 0).then(|| DyadicInterval {
            rank: self.rank - 1,
            index: self.index / 2,
        })
    }

    pub fn children(self) -> [DyadicInterval; 2] {
        let rank = self.rank + 1;
        [
            DyadicInterval { rank, index: 2 * self.index },
            DyadicInterval { rank, index: 2 * self.index + 1 },
        ]
    }

    pub fn length(self) -> f64 {
        2f64.powi(-(self.rank as i32))
    }

    pub fn left(self) -> f64 {
        self.index as f64 * self.length()
    }

    pub fn right(self) -> f64 {
        (self.index + 1) as f64 * self.length()
    }

    pub fn center(self) -> f64 {
        (self.index as f64 + 0.5) * self.length()
    }

    pub fn contains(self, t: f64) -> bool {
        t > self.left() && t <= self.right()
    }

    /// `ψ_I(t)`: `-1` on the left half, `+1` on the right half, `0` outside.
    pub fn haar(self, t: f64) -> f64 {
        if !self.contains(t) {
            0.0
        } else if t <= self.center() {
            -1.0
        } else {
            1.0
        }
    }
}

/// `L + Σ b_I ψ_I` truncated at `max_rank`.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarExpansion {
    pub mean: f64,
    /// `coeffs[r][i]` is `b_I` for the interval of rank `r` and index `i`.
    pub coeffs: Vec<Vec<f64>>,
}

impl HaarExpansion {
    pub fn max_rank(&self) -> Option<u32> {
        self.coeffs.len().checked_sub(1).map(|r| r as u32)
    }

    pub fn coeff(&self, i: DyadicInterval) -> f64 {
        self.coeffs
            .get(i.rank as usize)
            .and_then(|c| c.get(i.index as usize))
            .copied()
            .unwrap_or(0.0)
    }

    /// Expansion-form quadratic function `L² + Σ_{I ∋ t, rank ≤ k} b_I²`.
    pub fn quadratic_function(&self, k: u32, t: f64) -> Result<f64> {
        let mut q = self.mean * self.mean;
        for r in 0..=k.min(self.max_rank().unwrap_or(0)) {
            if self.coeffs.is_empty() {
                break;
            }
            let b = self.coeff(DyadicInterval::containing(r, t)?);
            q += b * b;
        }
        Ok(q)
    }
}

/// Means of `f` over the `2^rank` cells of that rank.
pub fn cell_means<F>(f: F, rank: u32, tol: f64) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64 + Sync,
{
    if rank > MAX_DENSE_RANK {
        return Err(Error::domain(format!("rank {rank} exceeds the dense limit {MAX_DENSE_RANK}")));
    }
    let n = 1usize << rank;
    let h = 1.0 / n as f64;
    let opts = QuadOptions::with_tol(tol * 1e-2, tol);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let a = i as f64 * h;
            try_integrate(|t| Ok(f(t)), a, a + h, &[], &opts).map(|v| v / h)
        })
        .collect()
}

/// Haar expansion from cell means at rank `max_rank + 1`.
pub fn haar_from_means(means: &[f64]) -> Result<HaarExpansion> {
    let n = means.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::domain("cell means must cover at least two cells, a power of two"));
    }
    let top = n.trailing_zeros() - 1;
    let mut coeffs = vec![Vec::new(); top as usize + 1];
    let mut level = means.to_vec();
    for r in (0..=top).rev() {
        let (next, b): (Vec<f64>, Vec<f64>) = level
            .chunks_exact(2)
            .map(|p| (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0])))
            .unzip();
        coeffs[r as usize] = b;
        level = next;
    }
    Ok(HaarExpansion {
        mean: level[0],
        coeffs,
    })
}

/// `L = ∫ f`, `b_I = λ(I)^{-1} ∫ f ψ_I` for every `I` of rank at most `max_rank`.
pub fn haar_analyze<F>(f: F, max_rank: u32, tol: f64) -> Result<HaarExpansion>
where
    F: Fn(f64) -> f64 + Sync,
{
    haar_from_means(&cell_means(f, max_rank + 1, tol)?)
}

/// `L + Σ_{rank ≤ k} b_I ψ_I(t)`.
pub fn haar_synthesize(e: &HaarExpansion, k: u32, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::domain(format!("point {t} lies outside (0, 1]")));
    }
    match e.max_rank() {
        Some(m) if k > m => {
            return Err(Error::domain(format!("rank {k} exceeds expansion rank {m}")));
        }
        None => return Ok(e.mean),
        _ => {}
    }
    let mut v = e.mean;
    for r in 0..=k {
        let i = DyadicInterval::containing(r, t)?;
        v += e.coeff(i) * i.haar(t);
    }
    Ok(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableMode {
    /// Built from conditional expectations; the tower property holds exactly.
    Exact,
    /// Sampled; the tower residual is recorded as a defect.
    Surrogate,
}

/// Martingale levels `Λ_k`, each constant on the intervals of rank `α_k`, with respect
/// to Lebesgue measure on `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleTable {
    pub filtration: Vec<u32>,
    pub levels: Vec<Vec<f64>>,
    pub mode: TableMode,
    /// Per-level tower residual `max_I |E[Λ_{k+1} | I] - Λ_k(I)|` (surrogate tables).
    pub defects: Vec<f64>,
}

impl MartingaleTable {
    pub fn new(filtration: Vec<u32>, levels: Vec<Vec<f64>>, mode: TableMode) -> Result<MartingaleTable> {
        if filtration.is_empty() || filtration.len() != levels.len() {
            return Err(Error::domain("filtration and levels must be non-empty and of equal length"));
        }
        if filtration.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::domain("filtration ranks must be strictly increasing"));
        }
        for (&a, lv) in filtration.iter().zip(&levels) {
            if a > MAX_DENSE_RANK {
                return Err(Error::domain(format!("rank {a} exceeds the dense limit {MAX_DENSE_RANK}")));
            }
            if lv.len() != 1usize << a {
                return Err(Error::domain(format!("level of rank {a} has {} values", lv.len())));
            }
        }
        let mut table = MartingaleTable {
            filtration,
            levels,
            mode,
            defects: Vec::new(),
        };
        table.defects = (0..table.len().saturating_sub(1))
            .map(|k| table.level_defect(k))
            .collect();
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `Λ_k(t)`.
    pub fn value(&self, k: usize, t: f64) -> Result<f64> {
        let a = *self
            .filtration
            .get(k)
            .ok_or_else(|| Error::domain(format!("level {k} outside the table")))?;
        let i = DyadicInterval::containing(a, t)?;
        Ok(self.levels[k][i.index as usize])
    }

    fn block(&self, k: usize, index: u64) -> &[f64] {
        let shift = self.filtration[k + 1] - self.filtration[k];
        let span = 1usize << shift;
        let start = index as usize * span;
        &self.levels[k + 1][start..start + span]
    }

    /// `E[Λ_{k+1} | I]` for `I` of rank `α_k`.
    pub fn conditional_expectation(&self, k: usize, i: DyadicInterval) -> Result<f64> {
        if k + 1 >= self.len() {
            return Err(Error::domain(format!("level {k} has no successor")));
        }
        if i.rank != self.filtration[k] {
            return Err(Error::domain(format!(
                "interval of rank {} does not belong to level {k} (rank {})",
                i.rank, self.filtration[k]
            )));
        }
        let block = self.block(k, i.index);
        Ok(block.iter().sum::<f64>() / block.len() as f64)
    }

    fn level_defect(&self, k: usize) -> f64 {
        (0..self.levels[k].len() as u64)
            .map(|idx| {
                let block = self.block(k, idx);
                let mean = block.iter().sum::<f64>() / block.len() as f64;
                (mean - self.levels[k][idx as usize]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest tower residual over all levels.
    pub fn tower_residual(&self) -> f64 {
        self.defects.iter().copied().fold(0.0, f64::max)
    }

    /// Table-form quadratic function `Λ_0(t)² + Σ_{j=1}^{k} E[(Λ_j - Λ_{j-1})² | F_{α_{j-1}}](t)`.
    pub fn quadratic_function(&self, k: usize, t: f64) -> Result<f64> {
        if k >= self.len() {
            return Err(Error::domain(format!("level {k} outside the table")));
        }
        let mut q = self.value(0, t)?.powi(2);
        for j in 1..=k {
            let i = DyadicInterval::containing(self.filtration[j - 1], t)?;
            let base = self.levels[j - 1][i.index as usize];
            let block = self.block(j - 1, i.index);
            q += block.iter().map(|v| (v - base).powi(2)).sum::<f64>() / block.len() as f64;
        }
        Ok(q)
    }

    /// Sub-table on the given level indices.
    pub fn thin(&self, keep: &[usize]) -> Result<MartingaleTable> {
        if keep.is_empty() || keep.windows(2).any(|p| p[0] >= p[1]) || keep[keep.len() - 1] >= self.len() {
            return Err(Error::domain("thinning needs strictly increasing level indices inside the table"));
        }
        MartingaleTable::new(
            keep.iter().map(|&k| self.filtration[k]).collect(),
            keep.iter().map(|&k| self.levels[k].clone()).collect(),
            self.mode,
        )
    }

    /// Exact table of conditional expectations of a Haar expansion on the given ranks.
    ///
    /// Level `k` is `L + Σ_{rank < α_k} b_I ψ_I`; ranks must not exceed `max_rank + 1`.
    pub fn from_expansion(e: &HaarExpansion, filtration: Vec<u32>) -> Result<MartingaleTable> {
        let limit = e.max_rank().map_or(0, |m| m + 1);
        if filtration.iter().any(|&a| a > limit) {
            return Err(Error::domain(format!("filtration reaches beyond rank {limit}")));
        }
        let levels = filtration
            .iter()
            .map(|&a| {
                (0..1u64 << a)
                    .map(|i| {
                        let c = DyadicInterval { rank: a, index: i }.center();
                        if a == 0 {
                            Ok(e.mean)
                        } else {
                            haar_synthesize(e, a - 1, c)
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        MartingaleTable::new(filtration, levels, TableMode::Exact)
    }

    /// Exact table of cell means of `f`.
    pub fn from_function<F>(f: F, filtration: Vec<u32>, tol: f64) -> Result<MartingaleTable>
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let top = *filtration.last().ok_or_else(|| Error::domain("empty filtration"))?;
        let finest = cell_means(f, top, tol)?;
        let levels = filtration
            .iter()
            .map(|&a| {
                let span = 1usize << (top - a);
                finest.chunks(span).map(|c| c.iter().sum::<f64>() / span as f64).collect()
            })
            .collect();
        MartingaleTable::new(filtration, levels, TableMode::Exact)
    }

    /// Dyadic `±1` random walk: each interval adds `+ε` on its left child and `-ε` on its
    /// right, with `ε = ±1` drawn per interval.
    pub fn coin_flip(depth: u32, seed: u64) -> Result<MartingaleTable> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut levels = vec![vec![0.0]];
        for _ in 0..depth {
            let prev = levels.last().expect("level 0 exists");
            let next: Vec<f64> = prev
                .iter()
                .flat_map(|&v| {
                    let e = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    [v + e, v - e]
                })
                .collect();
            levels.push(next);
        }
        MartingaleTable::new((0..=depth).collect(), levels, TableMode::Exact)
    }
}

/// Surrogate martingale sampled from an evaluator `H(x, y)`.
///
/// Level `k` on `I ∈ Δ_{α_k}` is `H(x_I, φ(x_I) + A 2^{-α_k})` at the centre `x_I`.
pub fn bloch_to_martingale<H>(
    h: H,
    dom: &GraphDomain,
    scales: &ScaleSequence,
    a: f64,
    levels: usize,
) -> Result<MartingaleTable>
where
    H: Fn(f64, f64) -> Result<f64> + Sync,
{
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(format!("offset A must be positive, got {a}")));
    }
    if levels == 0 || levels > scales.len() {
        return Err(Error::domain(format!(
            "{levels} levels requested from a scale sequence of length {}",
            scales.len()
        )));
    }
    let mut filtration: Vec<u32> = Vec::with_capacity(levels);
    for &r in &scales.alpha[..levels] {
        if filtration.last().is_some_and(|&p| p >= r) {
            return Err(Error::domain(format!("ranks {:?} are not strictly increasing", &scales.alpha[..levels])));
        }
        filtration.push(r);
    }
    let vals = filtration
        .iter()
        .map(|&r| {
            if r > MAX_DENSE_RANK {
                return Err(Error::domain(format!("rank {r} exceeds the dense limit {MAX_DENSE_RANK}")));
            }
            let height = a * 2f64.powi(-(r as i32));
            (0..1u64 << r)
                .into_par_iter()
                .map(|i| {
                    let x = DyadicInterval { rank: r, index: i }.center();
                    h(x, dom.phi(x) + height)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    MartingaleTable::new(filtration, vals, TableMode::Surrogate)
}

/// Per-level suprema of `|Λ_k - I(·, s_k)|` and `|Λ_k - Λ_{k+1}|` over a point grid.
#[derive(Clone, Debug)]
pub struct LiBounds {
    pub approx: Vec<f64>,
    pub steps: Vec<f64>,
}

/// `averages[k][j]` must hold `I(xs[j], s_k)` for every table level `k`.
pub fn li_bounds_check(table: &MartingaleTable, xs: &[f64], averages: &[Vec<f64>]) -> Result<LiBounds> {
    if averages.len() != table.len() || averages.iter().any(|r| r.len() != xs.len()) || xs.is_empty() {
        return Err(Error::domain("average grid does not match the table levels and points"));
    }
    let mut approx = Vec::with_capacity(table.len());
    let mut steps = Vec::with_capacity(table.len().saturating_sub(1));
    for (k, row) in averages.iter().enumerate() {
        let mut a: f64 = 0.0;
        let mut s: f64 = 0.0;
        for (&x, &avg) in xs.iter().zip(row) {
            let v = table.value(k, x)?;
            a = a.max((v - avg).abs());
            if k + 1 < table.len() {
                s = s.max((v - table.value(k + 1, x)?).abs());
            }
        }
        approx.push(a);
        if k + 1 < table.len() {
            steps.push(s);
        }
    }
    Ok(LiBounds { approx, steps })
}

/// Per-point `max_{m ≥ 3} |Λ_m(t)| / sqrt(m ln ln m)` and its supremum.
#[derive(Clone, Debug)]
pub struct LilStatistic {
    pub values: Vec<f64>,
    pub sup: f64,
}

pub fn martingale_lil_statistic(table: &MartingaleTable, ts: &[f64]) -> Result<LilStatistic> {
    if table.len() < 4 {
        return Err(Error::domain("the LIL statistic needs at least four levels"));
    }
    let values = ts
        .par_iter()
        .map(|&t| {
            let mut best: f64 = 0.0;
            for m in 3..table.len() {
                let mf = m as f64;
                best = best.max(table.value(m, t)?.abs() / (mf * mf.ln().ln()).sqrt());
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    let sup = values.iter().copied().fold(0.0, f64::max);
    Ok(LilStatistic { values, sup })
}

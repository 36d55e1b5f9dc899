//! Parameter selection: wavelet spacing `a`, threshold generation `j0` and the
//! generation boundaries `β_j`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::weights::{Depth, Weight};

use super::point::MAX_RANK;
use super::wavelet::MotherWavelet;

/// How the supremum of `|Φ_m|` over an interval is approximated in the stopping test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupRule {
    /// `|Φ_m(x_I)|` at the centre.
    Center,
    /// Maximum over `N` equispaced interior points.
    Grid(usize),
}

impl fmt::Display for SupRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupRule::Center => f.write_str("center"),
            SupRule::Grid(n) => write!(f, "grid:{n}"),
        }
    }
}

impl FromStr for SupRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<SupRule> {
        match s.split_once(':') {
            None if s == "center" => Ok(SupRule::Center),
            Some(("grid", n)) => match n.parse::<usize>() {
                Ok(n) if n >= 1 => Ok(SupRule::Grid(n)),
                _ => Err(Error::parse(n, "grid size must be a positive integer")),
            },
            _ => Err(Error::parse(s, "sup rule is `center` or `grid:N`")),
        }
    }
}

/// Desk-scale relaxations. Every field that differs from the default is reported.
#[derive(Clone, Debug, PartialEq)]
pub struct Overrides {
    /// Fixed spacing instead of the smallest admissible one.
    pub a: Option<u32>,
    /// Explicit generation boundaries `[β_1, β_2, ...]` with `β_1 = 0`.
    pub beta: Option<Vec<u32>>,
    /// Minimum number of active ranks per generation when `β` is searched.
    pub gap: Option<u32>,
    /// Skip the bracketing `j - 1 <= w(2^{-β_j}) <= j`.
    pub relax_bracketing: bool,
    /// Skip the lacunarity bound for `j >= j0`.
    pub relax_lacunarity: bool,
    /// Allow witnesses below generation `j0`.
    pub relax_j0: bool,
    /// Disable stopping altogether (negative control).
    pub stopping: bool,
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides {
            a: None,
            beta: None,
            gap: None,
            relax_bracketing: false,
            relax_lacunarity: false,
            relax_j0: false,
            stopping: true,
        }
    }
}

impl Overrides {
    pub fn is_default(&self) -> bool {
        *self == Overrides::default()
    }

    /// Toy overrides: explicit `a` and `β`, every relaxation on.
    pub fn toy(a: u32, beta: Vec<u32>) -> Overrides {
        Overrides {
            a: Some(a),
            beta: Some(beta),
            gap: None,
            relax_bracketing: true,
            relax_lacunarity: true,
            relax_j0: true,
            stopping: true,
        }
    }

    /// `key=value` pairs describing the non-default fields.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if let Some(a) = self.a {
            out.push(("a".into(), a.to_string()));
        }
        if let Some(b) = &self.beta {
            out.push((
                "beta".into(),
                b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            ));
        }
        if let Some(g) = self.gap {
            out.push(("gap".into(), g.to_string()));
        }
        for (k, v) in [
            ("relax_bracketing", self.relax_bracketing),
            ("relax_lacunarity", self.relax_lacunarity),
            ("relax_j0", self.relax_j0),
        ] {
            if v {
                out.push((k.into(), "true".into()));
            }
        }
        if !self.stopping {
            out.push(("stopping".into(), "false".into()));
        }
        out
    }
}

/// Status of the parameter conditions at one generation `j` (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub j: usize,
    pub beta: u32,
    /// `w(2^{-β_j})`.
    pub weight_value: f64,
    pub bracket_ok: bool,
    /// `((β_j - β_{j-1})/a - 1) ⟨φ,ψ⟩²`, from `j = 2` on.
    pub lacunarity: Option<f64>,
    /// Whether the lacunarity bound `>= 4 j²` holds; only required for `j >= j0`.
    pub lacunarity_ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstructionParams {
    pub a: u32,
    pub j0: u32,
    /// `beta[j - 1] = β_j`; `beta[0] = 0`.
    pub beta: Vec<u32>,
    pub weight: Weight,
    pub sup_rule: SupRule,
    pub overrides: Overrides,
    pub wavelet: MotherWavelet,
    /// `2^{-a+1} ‖φ'‖∞ <= |⟨φ,ψ⟩| / 4`.
    pub a_condition_ok: bool,
    pub report: Vec<ConditionReport>,
}

fn a_condition(a: u32, phi: &MotherWavelet) -> bool {
    2f64.powi(1 - a as i32) * phi.deriv_sup <= 0.25 * phi.haar_pairing.abs()
}

fn weight_at_rank(w: &Weight, rank: u32) -> f64 {
    w.eval_depth(Depth(rank as f64 * std::f64::consts::LN_2))
}

impl ConstructionParams {
    /// Number of generations `J` (so `β_1 .. β_J` are known).
    pub fn generations(&self) -> usize {
        self.beta.len()
    }

    /// `β_j` for `1 <= j <= J`.
    pub fn beta_of(&self, j: usize) -> u32 {
        self.beta[j - 1]
    }

    pub fn max_rank(&self) -> u32 {
        *self.beta.last().expect("beta is non-empty")
    }

    /// Generation `j` with `β_j <= m < β_{j+1}`; the last boundary belongs to `J`.
    pub fn generation_of(&self, m: u32) -> usize {
        self.beta.partition_point(|&b| b <= m)
    }

    /// `¼ ((β_{j+1} - β_j)/a - 1) ⟨φ,ψ⟩²`: the quadratic-function floor on `G_j`.
    pub fn qfl_threshold(&self, j: usize) -> f64 {
        let span = (self.beta_of(j + 1) - self.beta_of(j)) as f64 / self.a as f64;
        0.25 * (span - 1.0).max(0.0) * self.wavelet.haar_pairing.powi(2)
    }

    /// Bound on `|Φ_k|` inside generation `j_k` under the centre rule:
    /// `j_k + 1 + 2‖φ'‖∞`.
    pub fn envelope_bound(&self, k: u32) -> f64 {
        self.generation_of(k) as f64 + 1.0 + 2.0 * self.wavelet.deriv_sup
    }

    /// Height `y_k = 2^{-β_k - 2} / (10 ‖φ'‖∞)` of the witness at generation `k`.
    pub fn witness_height(&self, k: usize) -> f64 {
        2f64.powi(-(self.beta_of(k) as i32) - 2) / (10.0 * self.wavelet.deriv_sup)
    }

    fn validate_beta(beta: &[u32], a: u32) -> Result<()> {
        if beta.first() != Some(&0) {
            return Err(Error::Construction("β_1 must be 0".into()));
        }
        if beta.len() < 2 {
            return Err(Error::Construction("need at least two generation boundaries".into()));
        }
        if beta.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Construction("β must be strictly increasing".into()));
        }
        if let Some(b) = beta.iter().find(|&&b| b % a != 0) {
            return Err(Error::Construction(format!("β_j = {b} is not divisible by a = {a}")));
        }
        if let Some(b) = beta.iter().find(|&&b| b > MAX_RANK) {
            return Err(Error::Construction(format!("β_j = {b} exceeds the deepest supported rank {MAX_RANK}")));
        }
        Ok(())
    }
}

/// Chooses `a`, `j0` and `β_1 .. β_{j_max}` for the weight.
pub fn choose_params(
    phi: &MotherWavelet,
    w: &Weight,
    j_max: usize,
    sup_rule: SupRule,
    overrides: Overrides,
) -> Result<ConstructionParams> {
    if j_max < 2 {
        return Err(Error::domain(format!("need at least two generations, got j_max = {j_max}")));
    }
    if let SupRule::Grid(0) = sup_rule {
        return Err(Error::domain("grid sup rule needs at least one point"));
    }
    let minimal_a = (1..64)
        .find(|&a| a_condition(a, phi))
        .ok_or_else(|| Error::Construction("no spacing a satisfies 2^{-a+1}‖φ'‖ <= |⟨φ,ψ⟩|/4".into()))?;
    let a = overrides.a.unwrap_or(minimal_a);
    if a == 0 {
        return Err(Error::Construction("spacing a must be positive".into()));
    }
    let j0 = (4.0 * phi.deriv_sup + 4.0).ceil() as u32;
    let p2 = phi.haar_pairing.powi(2);
    let lacunarity = |j: usize, b: u32, prev: u32| ((b - prev) as f64 / a as f64 - 1.0) * p2 >= 4.0 * (j * j) as f64;

    let beta = match &overrides.beta {
        Some(b) => {
            ConstructionParams::validate_beta(b, a)?;
            b.clone()
        }
        None => {
            let mut beta = vec![0u32];
            let min_steps = overrides.gap.unwrap_or(1).max(1);
            for j in 2..=j_max {
                let prev = *beta.last().expect("β_1 is set");
                let mut b = prev + a * min_steps;
                loop {
                    if b > MAX_RANK {
                        return Err(Error::Construction(format!(
                            "no β_{j} <= {MAX_RANK} satisfies the conditions for {} (a = {a})",
                            w.label()
                        )));
                    }
                    let wv = weight_at_rank(w, b);
                    if !overrides.relax_bracketing && wv > j as f64 {
                        return Err(Error::Construction(format!(
                            "bracketing condition j - 1 <= w(2^-β_j) <= j fails at j = {j}: \
                             smallest admissible β_j = {b} gives w = {wv:.6} > {j} for {}",
                            w.label()
                        )));
                    }
                    let bracket = overrides.relax_bracketing || wv >= (j - 1) as f64;
                    let lac = overrides.relax_lacunarity || (j as u32) < j0 || lacunarity(j, b, prev);
                    if bracket && lac {
                        break;
                    }
                    b += a;
                }
                beta.push(b);
            }
            beta
        }
    };

    let report = beta
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let j = i + 1;
            let wv = weight_at_rank(w, b);
            let lac = (i > 0).then(|| ((b - beta[i - 1]) as f64 / a as f64 - 1.0) * p2);
            ConditionReport {
                j,
                beta: b,
                weight_value: wv,
                bracket_ok: (j as f64 - 1.0) <= wv && wv <= j as f64,
                lacunarity: lac,
                lacunarity_ok: lac.filter(|_| j as u32 >= j0).map(|v| v >= 4.0 * (j * j) as f64),
            }
        })
        .collect();

    Ok(ConstructionParams {
        a,
        j0,
        beta,
        weight: w.clone(),
        sup_rule,
        a_condition_ok: a_condition(a, phi),
        overrides,
        wavelet: phi.clone(),
        report,
    })
}

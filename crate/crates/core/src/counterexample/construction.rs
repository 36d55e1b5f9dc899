//! The stopping-time series `Φ_k = Σ c_J φ_J`, resolved lazily along root-to-leaf chains.
//!
//! Every decision on an interval depends only on its ancestors, so a chain can be walked
//! without any shared state ([`StoppingConstruction::trace`]). The memo trie caches the
//! decisions for snapshots and consistency checks.

use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::params::{ConstructionParams, SupRule};
use super::point::DyadicPoint;

/// Decisions attached to one dyadic interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeState {
    pub rank: u32,
    /// Coefficient `c_I ∈ {0, 1}`.
    pub c: bool,
    /// `I` was added to the stopped family at its own rank.
    pub stopped: bool,
    /// `I` lies inside a stopped interval of its generation (itself included).
    pub halted: bool,
    /// Generation whose threshold applies at this rank.
    pub generation: u32,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    child: [u32; 2],
    state: NodeState,
}

const NONE: u32 = 0;

/// A chain walked from the root down to rank `k` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    /// Ranks `r <= k` whose interval has `c = 1`.
    pub active: Vec<u32>,
    /// `Φ_k(t)`.
    pub value: f64,
    /// States of the chain, one per rank `0..=k`.
    pub states: Vec<NodeState>,
}

#[derive(Clone, Debug)]
pub struct StoppingConstruction {
    params: ConstructionParams,
    nodes: Vec<Node>,
    frozen: bool,
}

impl StoppingConstruction {
    pub fn new(params: ConstructionParams) -> StoppingConstruction {
        let root = Self::decide(&params, None, &DyadicPoint::from_raw([u64::MAX; 6]), 0, &mut Vec::new());
        StoppingConstruction {
            params,
            nodes: vec![Node { child: [NONE; 2], state: root }],
            frozen: false,
        }
    }

    pub fn params(&self) -> &ConstructionParams {
        &self.params
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Stops further memo growth; queries must then stay on materialized chains.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// `max |Σ_{r ∈ active} φ(s.local(r))|` over the sample points of the rank-`m` cell.
    fn sup_value(params: &ConstructionParams, p: &DyadicPoint, m: u32, active: &[u32]) -> f64 {
        let phi = &params.wavelet;
        let at = |s: DyadicPoint| active.iter().map(|&r| phi.eval(s.local(r))).sum::<f64>().abs();
        match params.sup_rule {
            SupRule::Center => at(p.center(m)),
            SupRule::Grid(n) => (1..=n)
                .map(|i| at(p.in_cell(m, i as f64 / (n + 1) as f64)))
                .fold(0.0, f64::max),
        }
    }

    /// State of the rank-`m` interval containing `p`, given its parent state and the ranks
    /// with `c = 1` strictly above it in `active`. Pushes `m` onto `active` when `c = 1`.
    pub(crate) fn decide(
        params: &ConstructionParams,
        parent: Option<&NodeState>,
        p: &DyadicPoint,
        m: u32,
        active: &mut Vec<u32>,
    ) -> NodeState {
        let a = params.a;
        let generation = params.generation_of(m) as u32;
        let c = match parent {
            None => true,
            Some(par) => m.is_multiple_of(a) && !par.halted,
        };
        if c {
            active.push(m);
        }
        let inherited = parent.is_some_and(|par| par.halted && par.generation == generation);
        let check = params.overrides.stopping && m.is_multiple_of(a) && m < params.max_rank() && !inherited;
        let stopped = check && Self::sup_value(params, p, m, active) > generation as f64;
        NodeState {
            rank: m,
            c,
            stopped,
            halted: stopped || inherited,
            generation,
        }
    }

    fn check_rank(&self, k: u32) -> Result<()> {
        if k > self.params.max_rank() {
            return Err(Error::domain(format!(
                "rank {k} lies beyond the constructed depth {}",
                self.params.max_rank()
            )));
        }
        Ok(())
    }

    /// Walks the chain of `p` down to rank `k` without touching the memo.
    pub fn trace(&self, p: &DyadicPoint, k: u32) -> Result<Trace> {
        self.check_rank(k)?;
        let mut active = Vec::new();
        let mut states: Vec<NodeState> = Vec::with_capacity(k as usize + 1);
        for m in 0..=k {
            let s = Self::decide(&self.params, states.last(), p, m, &mut active);
            states.push(s);
        }
        let value = self.sum_active(p, &active);
        Ok(Trace { active, value, states })
    }

    fn sum_active(&self, p: &DyadicPoint, active: &[u32]) -> f64 {
        active.iter().map(|&r| self.params.wavelet.eval(p.local(r))).sum()
    }

    /// `Φ_k(p)` from the pure chain recursion.
    pub fn value(&self, p: &DyadicPoint, k: u32) -> Result<f64> {
        Ok(self.trace(p, k)?.value)
    }

    /// Ranks with `c = 1` on the chain of `p` down to `k`, through the memo.
    ///
    /// Missing nodes are materialized unless the construction is frozen.
    pub fn chain(&mut self, p: &DyadicPoint, k: u32) -> Result<Vec<NodeState>> {
        self.check_rank(k)?;
        let mut out = Vec::with_capacity(k as usize + 1);
        let mut active = Vec::new();
        let mut cur = 0usize;
        let root = self.nodes[0].state;
        if root.c {
            active.push(0);
        }
        out.push(root);
        for m in 1..=k {
            let b = p.bit(m - 1) as usize;
            let next = self.nodes[cur].child[b];
            let idx = if next != NONE {
                let s = self.nodes[next as usize].state;
                if s.c {
                    active.push(m);
                }
                next as usize
            } else {
                if self.frozen {
                    return Err(Error::ContractViolation(format!(
                        "memo is frozen and the rank-{m} interval was never materialized"
                    )));
                }
                let parent = self.nodes[cur].state;
                let s = Self::decide(&self.params, Some(&parent), p, m, &mut active);
                let id = u32::try_from(self.nodes.len()).map_err(|_| Error::Construction("memo trie is full".into()))?;
                self.nodes.push(Node { child: [NONE; 2], state: s });
                self.nodes[cur].child[b] = id;
                id as usize
            };
            out.push(self.nodes[idx].state);
            cur = idx;
        }
        Ok(out)
    }

    /// `Φ_k(p)` through the memo.
    pub fn phi_eval(&mut self, k: u32, p: &DyadicPoint) -> Result<f64> {
        let chain = self.chain(p, k)?;
        let active: Vec<u32> = chain.iter().filter(|s| s.c).map(|s| s.rank).collect();
        Ok(self.sum_active(p, &active))
    }

    /// `Φ_k(t)` for a float point of `(0, 1]`; zero outside.
    pub fn phi_eval_f64(&mut self, k: u32, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 1.0) {
            self.check_rank(k)?;
            return Ok(0.0);
        }
        self.phi_eval(k, &DyadicPoint::from_f64(t)?)
    }

    /// Like [`phi_eval`](Self::phi_eval) but read-only: fails on chains missing from the memo.
    pub fn phi_eval_frozen(&self, k: u32, p: &DyadicPoint) -> Result<f64> {
        self.check_rank(k)?;
        let mut cur = 0usize;
        let mut v = if self.nodes[0].state.c { self.params.wavelet.eval(p.local(0)) } else { 0.0 };
        for m in 1..=k {
            let next = self.nodes[cur].child[p.bit(m - 1) as usize];
            if next == NONE {
                return Err(Error::ContractViolation(format!(
                    "rank-{m} interval was never materialized"
                )));
            }
            cur = next as usize;
            if self.nodes[cur].state.c {
                v += self.params.wavelet.eval(p.local(m));
            }
        }
        Ok(v)
    }

    /// Materializes every interval down to rank `k` (exhaustive, for `k <= 20`).
    pub fn materialize_all(&mut self, k: u32) -> Result<()> {
        if k > 20 {
            return Err(Error::domain(format!("full materialization capped at rank 20, got {k}")));
        }
        self.check_rank(k)?;
        for i in 0..(1u64 << k) {
            let t = (i as f64 + 0.5) / (1u64 << k) as f64;
            self.chain(&DyadicPoint::from_f64(t)?, k)?;
        }
        Ok(())
    }

    /// Visits every memo node with its path bits (most significant first).
    fn visit<F: FnMut(&[bool], &NodeState, Option<&NodeState>)>(&self, mut f: F) {
        let mut stack: Vec<(usize, Vec<bool>, Option<NodeState>)> = vec![(0, Vec::new(), None)];
        while let Some((id, path, parent)) = stack.pop() {
            let node = self.nodes[id];
            f(&path, &node.state, parent.as_ref());
            for b in [1usize, 0] {
                let c = node.child[b];
                if c != NONE {
                    let mut p = path.clone();
                    p.push(b == 1);
                    stack.push((c as usize, p, Some(node.state)));
                }
            }
        }
    }

    /// CSV rows `rank,index,c,stopped,generation` in depth-first order, index in hex.
    pub fn snapshot(&self) -> String {
        let mut out = String::from("rank,index,c,stopped,generation\n");
        self.visit(|path, s, _| {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.rank,
                hex_index(path),
                s.c as u8,
                s.stopped as u8,
                s.generation
            );
        });
        out
    }

    /// Recomputes every memo entry from its ancestors and checks stopping monotonicity and
    /// coefficient sparsity. Returns the number of nodes checked.
    pub fn check_consistency(&self) -> Result<usize> {
        let mut problems = Vec::new();
        let mut count = 0usize;
        self.visit(|path, s, parent| {
            count += 1;
            let k = path.len() as u32;
            let p = point_in(path);
            let recomputed = match self.trace(&p, k) {
                Ok(t) => t,
                Err(e) => {
                    problems.push(e.to_string());
                    return;
                }
            };
            if recomputed.states.last() != Some(s) {
                problems.push(format!("rank {k} index {}: stored state differs from recomputation", hex_index(path)));
            }
            if let Some(par) = parent {
                if par.halted && par.generation == s.generation && (s.c || !s.halted || s.stopped) {
                    problems.push(format!("rank {k} index {}: decision below a stopped interval", hex_index(path)));
                }
            }
            if recomputed.active.windows(2).any(|w| w[1] - w[0] < self.params.a) {
                problems.push(format!("rank {k} index {}: active ranks closer than a", hex_index(path)));
            }
        });
        if problems.is_empty() {
            Ok(count)
        } else {
            Err(Error::ContractViolation(problems.join("; ")))
        }
    }
}

/// Hex digits of the interval index given its path bits.
fn hex_index(path: &[bool]) -> String {
    if path.is_empty() {
        return "0".into();
    }
    let pad = (4 - path.len() % 4) % 4;
    let bits: Vec<bool> = std::iter::repeat_n(false, pad).chain(path.iter().copied()).collect();
    let s: String = bits
        .chunks(4)
        .map(|c| {
            let v = c.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
            char::from_digit(v, 16).expect("nibble")
        })
        .collect();
    let t = s.trim_start_matches('0');
    if t.is_empty() { "0".into() } else { t.into() }
}

/// The centre of the interval with the given path.
fn point_in(path: &[bool]) -> DyadicPoint {
    let mut m = [0u64; 6];
    for (n, &b) in path.iter().enumerate() {
        if b {
            m[n / 64] |= 1u64 << (63 - n % 64);
        }
    }
    DyadicPoint::from_raw(m).center(path.len() as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexample::{choose_params, MotherWavelet, Overrides};
    use crate::weights::Weight;

    fn toy(a: u32, beta: Vec<u32>) -> StoppingConstruction {
        let p = choose_params(&MotherWavelet::new(), &Weight::w0(), 2, SupRule::Center, Overrides::toy(a, beta)).unwrap();
        StoppingConstruction::new(p)
    }

    #[test]
    fn base_case_is_the_mother_wavelet() {
        let mut s = toy(2, vec![0, 2, 6]);
        let phi = MotherWavelet::new();
        for i in 1..=50 {
            let t = i as f64 / 50.0;
            assert_eq!(s.phi_eval_f64(0, t).unwrap(), phi.eval(t));
        }
    }

    #[test]
    fn memo_agrees_with_trace_and_is_consistent() {
        let mut s = toy(2, vec![0, 2, 6]);
        s.materialize_all(6).unwrap();
        assert_eq!(s.node_count(), 127);
        for i in 0..4096u32 {
            let p = DyadicPoint::from_f64((i as f64 + 1.0) / 4096.0).unwrap();
            assert_eq!(s.phi_eval(6, &p).unwrap(), s.value(&p, 6).unwrap());
        }
        assert_eq!(s.check_consistency().unwrap(), 127);
    }

    #[test]
    fn frozen_memo_rejects_new_chains() {
        let mut s = toy(9, vec![0, 9]);
        let p = DyadicPoint::from_f64(0.3).unwrap();
        let v = s.phi_eval(9, &p).unwrap();
        s.freeze();
        assert_eq!(s.phi_eval_frozen(9, &p).unwrap(), v);
        let q = DyadicPoint::from_f64(0.8).unwrap();
        assert!(matches!(s.phi_eval_frozen(9, &q), Err(Error::ContractViolation(_))));
        assert!(matches!(s.phi_eval(9, &q), Err(Error::ContractViolation(_))));
        assert!(matches!(s.phi_eval(10, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn snapshot_lists_every_node() {
        let mut s = toy(2, vec![0, 2]);
        s.materialize_all(2).unwrap();
        let snap = s.snapshot();
        let rows: Vec<&str> = snap.lines().collect();
        assert_eq!(rows[0], "rank,index,c,stopped,generation");
        assert_eq!(rows.len(), 8);
        assert!(rows.contains(&"2,3,1,0,2"));
        assert_eq!(rows[1], "0,0,1,0,1");
    }

    #[test]
    fn hex_indices() {
        assert_eq!(hex_index(&[true, false, true, true, true]), "17");
        assert_eq!(hex_index(&[false, false]), "0");
    }
}

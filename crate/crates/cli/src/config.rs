//! Plain-text experiment configuration: `key = value` lines grouped under `[section]`
//! headers, with keys before the first header belonging to the top level.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use harmlil_core::counterexample::{Overrides, SupRule};
use harmlil_core::Weight;

use crate::CliError;

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    /// `None` for values set on the command line.
    line: Option<usize>,
}

impl Entry {
    fn origin(&self) -> String {
        match self.line {
            Some(n) => format!("line {n}"),
            None => "--override".into(),
        }
    }
}

/// Parsed but untyped configuration, keyed by `(section, key)`.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<(String, String), Entry>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, CliError> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|s| valid_name(s))
                    .ok_or_else(|| CliError::Config(format!("line {n}: malformed section header `{line}`")))?;
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {n}: expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if !valid_name(key) {
                return Err(CliError::Config(format!("line {n}: invalid key `{key}`")));
            }
            let slot = (section.clone(), key.to_string());
            if let Some(prev) = raw.entries.get(&slot) {
                return Err(CliError::Config(format!(
                    "line {n}: `{}` already set on {}",
                    display_key(&slot),
                    prev.origin()
                )));
            }
            raw.entries.insert(slot, Entry { value: value.trim().to_string(), line: Some(n) });
        }
        Ok(raw)
    }

    /// Applies `section.key=value` (or `key=value` for the top level).
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{spec}` is not KEY=VAL")))?;
        let (section, key) = match path.trim().split_once('.') {
            Some((s, k)) => (s.trim(), k.trim()),
            None => ("", path.trim()),
        };
        if !(valid_name(key) && (section.is_empty() || valid_name(section))) {
            return Err(CliError::Config(format!("override `{spec}` names an invalid key")));
        }
        self.entries.insert(
            (section.to_string(), key.to_string()),
            Entry { value: value.trim().to_string(), line: None },
        );
        Ok(())
    }

    pub fn set(&mut self, section: &str, key: &str, value: String) {
        self.entries.insert((section.to_string(), key.to_string()), Entry { value, line: None });
    }
}

fn display_key(slot: &(String, String)) -> String {
    if slot.0.is_empty() {
        slot.1.clone()
    } else {
        format!("[{}] {}", slot.0, slot.1)
    }
}

/// Consumes entries of a [`RawConfig`] so that unknown keys can be reported.
struct Reader {
    entries: BTreeMap<(String, String), Entry>,
}

impl Reader {
    fn take<T>(&mut self, section: &str, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.take_opt(section, key)? {
            Some(v) => Ok(v),
            None => Ok(default),
        }
    }

    fn take_opt<T>(&mut self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let slot = (section.to_string(), key.to_string());
        match self.entries.remove(&slot) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| {
                CliError::Config(format!("{} ({}): cannot parse `{}`: {err}", display_key(&slot), e.origin(), e.value))
            }),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        match self.entries.iter().next() {
            None => Ok(()),
            Some((slot, e)) => Err(CliError::Config(format!("unknown or unused key {} ({})", display_key(slot), e.origin()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldSpec {
    /// Lacunary series with `levels` terms and phases drawn from `seed`.
    Lacunary { levels: usize, seed: u64 },
    Constant { value: f64 },
    /// `u(x, y) = w(y)^power`, not harmonic; the negative control.
    Synthetic { power: f64 },
    /// Poisson extension of the indicator of `[lo, hi]`.
    Poisson { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    Uniform,
    Random,
}

impl FromStr for SampleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(SampleKind::Uniform),
            "random" => Ok(SampleKind::Random),
            _ => Err("expected `uniform` or `random`".into()),
        }
    }
}

impl fmt::Display for SampleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleKind::Uniform => "uniform",
            SampleKind::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSpec {
    pub kind: SampleKind,
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Which `δ` values a profile visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaSpec {
    /// `w(δ) = 2^{j/4}` above the guard, down to the deepest representable depth.
    Lil,
    /// `δ = 2^{-j}` for `j = 1..=n`.
    Dyadic(u32),
    /// `δ = s_k` for `k = 1..=n`.
    Scales(usize),
}

impl FromStr for DeltaSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let count = |n: &str| n.parse::<u32>().ok().filter(|&n| n > 0).ok_or("count must be a positive integer".to_string());
        match s.split_once(':') {
            None if s == "lil" => Ok(DeltaSpec::Lil),
            Some(("dyadic", n)) => Ok(DeltaSpec::Dyadic(count(n)?)),
            Some(("scales", n)) => Ok(DeltaSpec::Scales(count(n)? as usize)),
            _ => Err("expected `lil`, `dyadic:N` or `scales:N`".into()),
        }
    }
}

impl fmt::Display for DeltaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSpec::Lil => f.write_str("lil"),
            DeltaSpec::Dyadic(n) => write!(f, "dyadic:{n}"),
            DeltaSpec::Scales(n) => write!(f, "scales:{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleSpec {
    pub levels: usize,
    /// Offset `A` of the sampling height above the graph.
    pub offset: f64,
    /// Seeded uniform points in `(0, 1)` where the table is compared with the averages.
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleSpec {
    pub j_max: usize,
    pub sup_rule: SupRule,
    pub overrides: Overrides,
    /// Deepest rank materialized for the snapshot.
    pub snapshot_rank: u32,
    /// Snapshot from an earlier build that `counterexample check` must reproduce.
    pub snapshot: Option<PathBuf>,
}

/// Space- or comma-separated list of ranks.
struct RankList(Vec<u32>);

impl FromStr for RankList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<u32>().map_err(|_| format!("`{t}` is not a rank")))
            .collect::<Result<Vec<_>, _>>()
            .map(RankList)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub tol: f64,
    pub out: PathBuf,
    pub weight: Weight,
    pub field: FieldSpec,
    /// Number of dyadic heights `2^-j` in growth-norm grids.
    pub heights: usize,
    pub samples: SampleSpec,
    pub delta: DeltaSpec,
    pub martingale: MartingaleSpec,
    pub counterexample: CounterexampleSpec,
}

pub const DEFAULT_SEED: u64 = 20_240_601;

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<ExperimentConfig, CliError> {
        let mut r = Reader { entries: raw.entries };
        let seed = r.take("", "seed", DEFAULT_SEED)?;
        let tol: f64 = r.take("", "tol", 1e-9)?;
        if !(tol > 0.0 && tol < 1.0) {
            return Err(CliError::Config(format!("tol must lie in (0, 1), got {tol}")));
        }
        let out = r.take("", "out", PathBuf::from("out"))?;
        let weight = r.take("weight", "token", Weight::w0())?;

        let kind: String = r.take("field", "kind", "lacunary".to_string())?;
        let field = match kind.as_str() {
            "lacunary" => FieldSpec::Lacunary {
                levels: r.take("field", "levels", 24)?,
                seed: r.take("field", "seed", seed)?,
            },
            "constant" => FieldSpec::Constant { value: r.take("field", "value", 1.0)? },
            "synthetic" => FieldSpec::Synthetic { power: r.take("field", "power", 1.0)? },
            "poisson" => FieldSpec::Poisson { lo: r.take("field", "lo", -1.0)?, hi: r.take("field", "hi", 1.0)? },
            other => {
                return Err(CliError::Config(format!(
                    "[field] kind: unknown kind `{other}` (lacunary, constant, synthetic, poisson)"
                )))
            }
        };
        let heights = r.take("field", "heights", 40)?;

        let samples = SampleSpec {
            kind: r.take("samples", "kind", SampleKind::Uniform)?,
            count: r.take("samples", "count", 64)?,
            lo: r.take("samples", "lo", 0.0)?,
            hi: r.take("samples", "hi", 2.0 * std::f64::consts::PI)?,
        };
        let ordered = samples.lo < samples.hi;
        if samples.count == 0 || !ordered {
            return Err(CliError::Config("[samples] needs count > 0 and lo < hi".into()));
        }
        let delta = r.take("delta", "grid", DeltaSpec::Lil)?;

        let martingale = MartingaleSpec {
            levels: r.take("martingale", "levels", 10)?,
            offset: r.take("martingale", "offset", 1.0)?,
            points: r.take("martingale", "points", 64)?,
        };
        if martingale.points == 0 {
            return Err(CliError::Config("[martingale] points must be positive".into()));
        }

        let overrides = Overrides {
            a: r.take_opt("counterexample", "a")?,
            beta: r.take_opt::<RankList>("counterexample", "beta")?.map(|l| l.0),
            gap: r.take_opt("counterexample", "gap")?,
            relax_bracketing: r.take("counterexample", "relax_bracketing", false)?,
            relax_lacunarity: r.take("counterexample", "relax_lacunarity", false)?,
            relax_j0: r.take("counterexample", "relax_j0", false)?,
            stopping: r.take("counterexample", "stopping", true)?,
        };
        let default_j_max = overrides.beta.as_ref().map_or(3, |b| b.len().saturating_sub(1).max(2));
        let counterexample = CounterexampleSpec {
            j_max: r.take("counterexample", "j_max", default_j_max)?,
            sup_rule: r.take("counterexample", "sup_rule", SupRule::Center)?,
            overrides,
            snapshot_rank: r.take("counterexample", "snapshot_rank", 12)?,
            snapshot: r.take_opt("counterexample", "snapshot")?,
        };
        r.finish()?;
        Ok(ExperimentConfig {
            seed,
            tol,
            out,
            weight,
            field,
            heights,
            samples,
            delta,
            martingale,
            counterexample,
        })
    }

    /// Canonical text form: every key, fixed order. Parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "\n[weight]\ntoken = {}", self.weight.label());
        s.push_str("\n[field]\n");
        match &self.field {
            FieldSpec::Lacunary { levels, seed } => {
                let _ = writeln!(s, "kind = lacunary\nlevels = {levels}\nseed = {seed}");
            }
            FieldSpec::Constant { value } => {
                let _ = writeln!(s, "kind = constant\nvalue = {value}");
            }
            FieldSpec::Synthetic { power } => {
                let _ = writeln!(s, "kind = synthetic\npower = {power}");
            }
            FieldSpec::Poisson { lo, hi } => {
                let _ = writeln!(s, "kind = poisson\nlo = {lo}\nhi = {hi}");
            }
        }
        let _ = writeln!(s, "heights = {}", self.heights);
        let sm = &self.samples;
        let _ = writeln!(s, "\n[samples]\nkind = {}\ncount = {}\nlo = {}\nhi = {}", sm.kind, sm.count, sm.lo, sm.hi);
        let _ = writeln!(s, "\n[delta]\ngrid = {}", self.delta);
        let m = &self.martingale;
        let _ = writeln!(s, "\n[martingale]\nlevels = {}\noffset = {}\npoints = {}", m.levels, m.offset, m.points);
        let c = &self.counterexample;
        let o = &c.overrides;
        s.push_str("\n[counterexample]\n");
        let _ = writeln!(s, "j_max = {}\nsup_rule = {}\nsnapshot_rank = {}", c.j_max, c.sup_rule, c.snapshot_rank);
        if let Some(a) = o.a {
            let _ = writeln!(s, "a = {a}");
        }
        if let Some(b) = &o.beta {
            let list: Vec<String> = b.iter().map(u32::to_string).collect();
            let _ = writeln!(s, "beta = {}", list.join(" "));
        }
        if let Some(g) = o.gap {
            let _ = writeln!(s, "gap = {g}");
        }
        let _ = writeln!(
            s,
            "relax_bracketing = {}\nrelax_lacunarity = {}\nrelax_j0 = {}\nstopping = {}",
            o.relax_bracketing, o.relax_lacunarity, o.relax_j0, o.stopping
        );
        if let Some(p) = &c.snapshot {
            let _ = writeln!(s, "snapshot = {}", p.display());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::from_raw(RawConfig::parse(text)?)
    }

    #[test]
    fn defaults_round_trip() {
        let c = load("").unwrap();
        assert_eq!(load(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn every_variant_round_trips() {
        let text = "seed = 7\ntol = 1e-7\n[weight]\ntoken = pow:0.5\n[field]\nkind = poisson\nlo = -2\nhi = 0.5\n\
                    [samples]\nkind = random\ncount = 3\n[delta]\ngrid = dyadic:20\n\
                    [counterexample]\na = 2\nbeta = 0, 2, 6\nrelax_j0 = true\nsup_rule = grid:8\nsnapshot = snap.csv\n";
        let c = load(text).unwrap();
        assert_eq!(c.counterexample.overrides.beta, Some(vec![0, 2, 6]));
        assert_eq!(c.counterexample.j_max, 2);
        assert_eq!(load(&c.to_text()).unwrap(), c);
        assert_eq!(load(&c.to_text()).unwrap().to_text(), c.to_text());
    }

    #[test]
    fn errors_name_the_location() {
        let e = load("[weight]\ntoken = pow:-1\n").unwrap_err().to_string();
        assert!(e.contains("[weight] token (line 2)") && e.contains("pow:-1"), "{e}");
        let e = load("[field]\nkind = constant\nlevels = 3\n").unwrap_err().to_string();
        assert!(e.contains("[field] levels (line 3)"), "{e}");
        let e = load("seed = 1\nseed = 2\n").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        assert!(load("[oops\n").is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut raw = RawConfig::parse("[delta]\ngrid = lil\n").unwrap();
        raw.apply_override("delta.grid=scales:4").unwrap();
        raw.apply_override("seed=9").unwrap();
        let c = ExperimentConfig::from_raw(raw).unwrap();
        assert_eq!((c.delta, c.seed), (DeltaSpec::Scales(4), 9));
        let mut raw = RawConfig::default();
        raw.apply_override("martingale.levels=x").unwrap();
        let e = ExperimentConfig::from_raw(raw).unwrap_err().to_string();
        assert!(e.contains("--override"), "{e}");
    }
}

//! One function per subcommand. Each fills a [`Run`] with tables and checks.

use std::fs;
use std::sync::Arc;

use harmlil_core::averages::{bloch_approximant_h, lil_ratio_profile, trend_free, weighted_average_i, AverageProfile};
use harmlil_core::counterexample::{choose_params, MotherWavelet, StoppingConstruction};
use harmlil_core::harmonic::{
    bloch_seminorm, constant_field, discrete_laplacian, growth_norm, lacunary_series, poisson_extend, BoundaryData,
    GraphDomain, Grid, HarmonicField, SyntheticField,
};
use harmlil_core::martingale::{bloch_to_martingale, li_bounds_check, MartingaleTable};
use harmlil_core::suites::{check_construction, lil_depth_grid, multiplier_band, run_criterion, SuiteOptions, CRITERIA};
use harmlil_core::weights::{scale_sequence, verify_doubling, ScaleSequence};
use harmlil_core::Depth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{DeltaSpec, ExperimentConfig, FieldSpec, SampleKind};
use crate::output::{num, Check, Run, Table};
use crate::CliError;

pub fn build_field(cfg: &ExperimentConfig) -> Result<Arc<dyn HarmonicField>, CliError> {
    let w = &cfg.weight;
    let field: Arc<dyn HarmonicField> = match cfg.field {
        FieldSpec::Lacunary { levels, seed } => Arc::new(lacunary_series(w, levels, None, seed).map_err(CliError::config)?),
        FieldSpec::Constant { value } => Arc::new(constant_field(value)),
        FieldSpec::Synthetic { power } => Arc::new(SyntheticField::new(w.clone(), power)),
        FieldSpec::Poisson { lo, hi } => {
            let f = BoundaryData::new("indicator", lo, hi, |_| 1.0).map_err(CliError::config)?;
            Arc::new(poisson_extend(f, cfg.tol).map_err(CliError::config)?)
        }
    };
    for note in field.warnings() {
        eprintln!("warning: {note}");
    }
    Ok(field)
}

pub fn sample_xs(cfg: &ExperimentConfig) -> Vec<f64> {
    let s = &cfg.samples;
    match s.kind {
        SampleKind::Uniform => (0..s.count).map(|i| s.lo + (s.hi - s.lo) * i as f64 / s.count as f64).collect(),
        SampleKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..s.count).map(|_| rng.gen_range(s.lo..s.hi)).collect()
        }
    }
}

fn scales(cfg: &ExperimentConfig, k: usize) -> Result<ScaleSequence, CliError> {
    scale_sequence(&cfg.weight, k).map_err(|e| {
        CliError::Config(format!(
            "weight {} has no scale sequence up to k = {k} ({e}); use a faster-growing weight such as pow:1",
            cfg.weight.label()
        ))
    })
}

fn depths(cfg: &ExperimentConfig) -> Result<Vec<Depth>, CliError> {
    match cfg.delta {
        DeltaSpec::Lil => Ok(lil_depth_grid(&cfg.weight)?),
        DeltaSpec::Dyadic(n) => Ok((1..=n).map(|j| Depth(j as f64 * std::f64::consts::LN_2)).collect()),
        DeltaSpec::Scales(n) => Ok(scales(cfg, n)?.s[1..].iter().map(|s| Depth(-s.ln())).collect()),
    }
}

fn growth_grid(cfg: &ExperimentConfig, xs: &[f64]) -> Grid {
    Grid::above_graph(&GraphDomain::flat(), xs, &Grid::dyadic_heights(cfg.heights))
}

pub fn weights_check(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let w = &cfg.weight;
    let mut check = Check::new("weights");
    let mut seq = scale_sequence(w, 0)?;
    for k in 1..=40 {
        match scale_sequence(w, k) {
            Ok(s) => seq = s,
            Err(e) => {
                eprintln!("note: {} has representable scales up to k = {}: {e}", w.label(), k - 1);
                break;
            }
        }
    }
    let mut t = Table::new(&["k", "s", "alpha"]);
    for (k, (s, a)) in seq.s.iter().zip(&seq.alpha).enumerate() {
        t.push(vec![k.to_string(), num(*s), a.to_string()]);
    }
    run.write_table("scales.csv", &t)?;
    check.measure("scales_representable", (seq.len() - 1) as f64);

    let grid: Vec<f64> = (0..=240).map(|j| 2f64.powf(-(j as f64) / 4.0)).collect();
    let doubling = verify_doubling(w, &grid)?;
    let d = w.doubling_constant();
    check.measure("doubling_ratio_max", doubling);
    check.require(doubling <= d * (1.0 + 1e-12), || format!("w(y)/w(2y) reaches {doubling}, above D = {d}"));

    let band = multiplier_band(w, 100, cfg.tol)?;
    let mut t = Table::new(&["tau", "m_times_w"]);
    for (tau, v) in &band {
        t.push(vec![num(*tau), num(*v)]);
    }
    run.write_table("multiplier.csv", &t)?;
    let lo = band.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
    let hi = band.iter().map(|b| b.1).fold(0.0, f64::max);
    check.measure("band_c", lo);
    check.measure("band_C", hi);
    check.require(lo > 0.0 && hi / lo <= 100.0, || format!("band [{lo:e}, {hi:e}] has ratio above 100"));
    run.checks.push(check);
    Ok(())
}

pub fn field_build(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let u = build_field(cfg)?;
    let dom = GraphDomain::flat();
    let xs = sample_xs(cfg);
    let grid = growth_grid(cfg, &xs);
    let rows = grid
        .points
        .par_iter()
        .map(|&(x, y)| {
            let v = u.eval(x, y)?;
            let (gx, gy) = u.grad(x, y)?;
            let lap = discrete_laplacian(u.as_ref(), x, y, 1e-4 * y)?;
            Ok((x, y, v, gx, gy, lap * y * y / (1.0 + v.abs())))
        })
        .collect::<harmlil_core::Result<Vec<_>>>()?;
    let mut t = Table::new(&["x", "y", "u", "ux", "uy"]);
    for r in &rows {
        t.push(vec![num(r.0), num(r.1), num(r.2), num(r.3), num(r.4)]);
    }
    run.write_table("field.csv", &t)?;

    let mut check = Check::new("field");
    let norm = growth_norm(u.as_ref(), &dom, &cfg.weight, &grid)?;
    let bloch = bloch_seminorm(u.as_ref(), &dom, &grid)?;
    check.measure("growth_norm", norm);
    check.measure("bloch_seminorm", bloch);
    check.require(norm.is_finite() && bloch.is_finite(), || "growth norm or Bloch seminorm is not finite".into());
    if u.kind().is_harmonic() {
        let worst = rows.iter().map(|r| r.5.abs()).fold(0.0, f64::max);
        check.measure("laplacian_residual", worst);
        check.require(worst <= 1e-3, || format!("scaled discrete Laplacian reaches {worst}"));
    }
    run.checks.push(check);
    Ok(())
}

fn profiles(cfg: &ExperimentConfig, u: &dyn HarmonicField, xs: &[f64]) -> Result<Vec<AverageProfile>, CliError> {
    let d = depths(cfg)?;
    let dom = GraphDomain::flat();
    Ok(xs
        .par_iter()
        .map(|&x| lil_ratio_profile(u, &dom, &cfg.weight, x, &d, cfg.tol))
        .collect::<harmlil_core::Result<Vec<_>>>()?)
}

/// Writes `profile_NNN.csv` per point and `profiles.csv` with the per-point maxima.
/// Returns the largest ratio.
fn write_profiles(run: &mut Run, profiles: &[AverageProfile]) -> Result<f64, CliError> {
    let mut summary = Table::new(&["x", "max_ratio"]);
    let mut sup: f64 = 0.0;
    for (i, p) in profiles.iter().enumerate() {
        let mut t = Table::new(&["delta", "value", "ratio", "ratio_valid", "depth"]);
        for ((d, v), r) in p.depths.iter().zip(&p.values).zip(&p.ratios) {
            t.push(vec![
                num(d.height()),
                num(*v),
                r.map(num).unwrap_or_default(),
                r.is_some().to_string(),
                num(d.0),
            ]);
        }
        run.write_table(&format!("profile_{i:03}.csv"), &t)?;
        let m = p.max_abs_ratio().unwrap_or(0.0);
        sup = sup.max(m);
        summary.push(vec![num(p.x), num(m)]);
    }
    run.write_table("profiles.csv", &summary)?;
    Ok(sup)
}

pub fn average_profile(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let u = build_field(cfg)?;
    let ps = profiles(cfg, u.as_ref(), &sample_xs(cfg))?;
    let sup = write_profiles(run, &ps)?;
    let mut check = Check::new("average_profile");
    check.measure("sup_ratio", sup);
    check.measure("points", ps.len() as f64);
    run.checks.push(check);
    Ok(())
}

pub fn experiment_lil(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let u = build_field(cfg)?;
    let xs = sample_xs(cfg);
    let ps = profiles(cfg, u.as_ref(), &xs)?;
    let sup = write_profiles(run, &ps)?;
    let norm = growth_norm(u.as_ref(), &GraphDomain::flat(), &cfg.weight, &growth_grid(cfg, &xs))?;
    let mut check = Check::new("lil_ratio");
    check.measure("sup_ratio", sup);
    check.measure("growth_norm", norm);
    check.measure("ratio_over_norm", if norm > 0.0 { sup / norm } else { 0.0 });
    check.require(sup <= 10.0 * norm, || format!("sup ratio {sup} exceeds 10·growth_norm = {}", 10.0 * norm));
    run.checks.push(check);
    Ok(())
}

fn martingale(cfg: &ExperimentConfig, u: &dyn HarmonicField) -> Result<(ScaleSequence, MartingaleTable), CliError> {
    let levels = cfg.martingale.levels;
    let sc = scales(cfg, levels)?;
    let dom = GraphDomain::flat();
    let (w, tol) = (&cfg.weight, cfg.tol);
    let table = bloch_to_martingale(
        |x, y| bloch_approximant_h(u, &dom, w, x, y, tol),
        &dom,
        &sc,
        cfg.martingale.offset,
        levels,
    )
    .map_err(|e| match e {
        harmlil_core::Error::Domain(_) | harmlil_core::Error::Parse { .. } => CliError::config(e),
        e => CliError::Run(e),
    })?;
    Ok((sc, table))
}

fn write_table_levels(run: &mut Run, table: &MartingaleTable) -> Result<(), CliError> {
    let mut t = Table::new(&["level", "alpha", "index", "value"]);
    for (k, (alpha, vals)) in table.filtration.iter().zip(&table.levels).enumerate() {
        for (i, v) in vals.iter().enumerate() {
            t.push(vec![k.to_string(), alpha.to_string(), i.to_string(), num(*v)]);
        }
    }
    run.write_table("martingale.csv", &t)?;
    let mut d = Table::new(&["level", "defect"]);
    for (k, v) in table.defects.iter().enumerate() {
        d.push(vec![k.to_string(), num(*v)]);
    }
    run.write_table("defects.csv", &d)
}

pub fn martingale_build(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let u = build_field(cfg)?;
    let (_, table) = martingale(cfg, u.as_ref())?;
    write_table_levels(run, &table)?;
    let mut check = Check::new("martingale_build");
    check.measure("levels", table.len() as f64);
    check.measure("defect_max", table.defects.iter().copied().fold(0.0, f64::max));
    run.checks.push(check);
    Ok(())
}

pub fn martingale_check(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let u = build_field(cfg)?;
    let (sc, table) = martingale(cfg, u.as_ref())?;
    write_table_levels(run, &table)?;
    let levels = cfg.martingale.levels;
    let dom = GraphDomain::flat();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs: Vec<f64> = (0..cfg.martingale.points).map(|_| rng.gen_range(0.0..1.0)).collect();
    let averages = (0..=levels)
        .map(|k| {
            xs.par_iter()
                .map(|&x| weighted_average_i(u.as_ref(), &dom, &cfg.weight, x, sc.s[k], cfg.tol))
                .collect::<harmlil_core::Result<Vec<f64>>>()
        })
        .collect::<harmlil_core::Result<Vec<_>>>()?;
    let li = li_bounds_check(&table, &xs, &averages[..table.len()])?;
    let mut t = Table::new(&["level", "approx", "step"]);
    for (k, a) in li.approx.iter().enumerate() {
        t.push(vec![k.to_string(), num(*a), li.steps.get(k).map(|s| num(*s)).unwrap_or_default()]);
    }
    run.write_table("li_bounds.csv", &t)?;

    let mut check = Check::new("martingale_check");
    check.measure("approx_max", li.approx.iter().copied().fold(0.0, f64::max));
    check.measure("step_max", li.steps.iter().copied().fold(0.0, f64::max));
    check.measure("defect_max", table.defects.iter().copied().fold(0.0, f64::max));
    check.require(trend_free(&li.approx, 1.2), || format!("|Λ_k - I(·, s_k)| trends upward: {:?}", li.approx));
    check.require(trend_free(&li.steps, 1.2), || format!("|Λ_k - Λ_(k+1)| trends upward: {:?}", li.steps));
    let norm = growth_norm(u.as_ref(), &dom, &cfg.weight, &growth_grid(cfg, &xs))?;
    let worst = (0..levels)
        .flat_map(|k| (0..xs.len()).map(move |j| (k, j)))
        .map(|(k, j)| (averages[k][j] - averages[k + 1][j]).abs())
        .fold(0.0, f64::max);
    check.measure("growth_norm", norm);
    check.measure("average_step_max", worst);
    check.require(worst <= 2.0 * norm * (1.0 + 1e-6), || format!("|I(x, s_k) - I(x, s_(k+1))| reaches {worst}, above 2·{norm}"));
    run.checks.push(check);
    Ok(())
}

fn construction(cfg: &ExperimentConfig) -> Result<StoppingConstruction, CliError> {
    let c = &cfg.counterexample;
    // parameter failures are refusals of the requested configuration
    let params = choose_params(&MotherWavelet::new(), &cfg.weight, c.j_max, c.sup_rule, c.overrides.clone())
        .map_err(CliError::config)?;
    Ok(StoppingConstruction::new(params))
}

fn snapshot(cfg: &ExperimentConfig) -> Result<(StoppingConstruction, String), CliError> {
    let rank = cfg.counterexample.snapshot_rank;
    if rank > 20 {
        return Err(CliError::Config(format!("[counterexample] snapshot_rank {rank} is above 20")));
    }
    let mut state = construction(cfg)?;
    state.materialize_all(rank.min(state.params().max_rank()))?;
    let snap = state.snapshot();
    Ok((state, snap))
}

pub fn counterexample_build(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let (state, snap) = snapshot(cfg)?;
    run.write("snapshot.csv", snap.as_bytes())?;
    let p = state.params();
    let mut t = Table::new(&["key", "value"]);
    let beta: Vec<String> = p.beta.iter().map(u32::to_string).collect();
    t.push(vec!["a".into(), p.a.to_string()]);
    t.push(vec!["j0".into(), p.j0.to_string()]);
    t.push(vec!["beta".into(), beta.join(" ")]);
    t.push(vec!["a_condition_ok".into(), p.a_condition_ok.to_string()]);
    t.push(vec!["sup_rule".into(), p.sup_rule.to_string()]);
    for (k, v) in p.overrides.describe() {
        t.push(vec![format!("override_{k}"), v]);
    }
    run.write_table("params.csv", &t)?;
    let mut check = Check::new("counterexample_build");
    let nodes = state.check_consistency()?;
    check.measure("nodes", nodes as f64);
    run.checks.push(check);
    Ok(())
}

pub fn counterexample_check(cfg: &ExperimentConfig, run: &mut Run) -> Result<(), CliError> {
    let (_, snap) = snapshot(cfg)?;
    let mut reload = Check::new("snapshot");
    if let Some(path) = &cfg.counterexample.snapshot {
        let saved = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        reload.require(saved == snap, || format!("rebuilt snapshot differs from {}", path.display()));
    }
    reload.measure("rows", snap.lines().count().saturating_sub(1) as f64);
    run.checks.push(reload);

    let report = check_construction("config", construction(cfg)?, cfg.seed);
    let mut t = Table::new(&["name", "value"]);
    for (k, v) in &report.measurements {
        t.push(vec![k.clone(), num(*v)]);
    }
    run.write_table("measures.csv", &t)?;
    let mut check = Check::from_report(&report);
    check.name = "counterexample".into();
    run.checks.push(check);
    Ok(())
}

/// Criterion number from `1`..`8` or its name with spaces or dashes for underscores.
pub fn criterion_ids(name: &str) -> Result<Vec<u8>, CliError> {
    if name == "all" {
        return Ok(CRITERIA.iter().map(|c| c.0).collect());
    }
    let norm = |s: &str| s.replace([' ', '-'], "_").to_lowercase();
    CRITERIA
        .iter()
        .find(|(id, n)| name == id.to_string() || norm(name) == norm(n))
        .map(|c| vec![c.0])
        .ok_or_else(|| {
            let names: Vec<String> = CRITERIA.iter().map(|(id, n)| format!("{id} ({})", norm(n))).collect();
            CliError::Config(format!("unknown suite `{name}`; choose all or one of {}", names.join(", ")))
        })
}

pub fn suite(cfg: &ExperimentConfig, name: &str, run: &mut Run) -> Result<(), CliError> {
    let opts = SuiteOptions { seed: cfg.seed };
    for id in criterion_ids(name)? {
        let report = run_criterion(id, &opts).expect("criterion ids come from the list");
        eprintln!("criterion {id}: {:.2} s of {} s", report.elapsed.as_secs_f64(), report.budget.as_secs());
        run.checks.push(Check::from_report(&report));
    }
    Ok(())
}

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use ltlab_core::birman_schwinger::{
    decay_tail_check, mu_spectrum_with, sphere_potential, BsOptions, SpherePotentialSpec,
};
use ltlab_core::functional::riesz_ratio;
use ltlab_core::grid::{lp_norm_power, mass_profile, Grid1D, RadialGrid};
use ltlab_core::kdv::{exact_spectrum, manifold_distance, normalize_to_manifold, soliton_profile, SolitonSpec};
use ltlab_core::profiles::ProfileRegistry;
use ltlab_core::scf::{self, ScfConfig};
use ltlab_core::verify::CriterionRegistry;

use crate::config::{output_dir, single, FileConfig};
use crate::envelope::{now_unix, ResultEnvelope};
use crate::{ClrArgs, Common, KdvArgs, OptimizeArgs, Outcome, ScfFlags, SweepArgs, VerifyArgs};

type CmdResult = Result<Outcome, String>;

const MASS_RADII: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn setup_workers(common: &Common, file: &FileConfig) -> Result<Option<usize>, String> {
    let workers = common.workers.or(file.workers);
    if let Some(w) = workers {
        if w == 0 {
            return Err("--workers must be at least 1".into());
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    Ok(workers)
}

fn prepare_dir(dir: &Option<PathBuf>) -> Result<(), String> {
    if let Some(d) = dir {
        fs::create_dir_all(d).map_err(|e| format!("cannot create output directory {}: {e}", d.display()))?;
    }
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<fs::File, String> {
    let path = dir.join(name);
    fs::File::create(&path).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), String> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(err(e)),
        _ => Ok(()),
    }
}

fn write_envelope(dir: &Option<PathBuf>, env: &ResultEnvelope) -> Result<(), String> {
    let text = serde_json::to_string_pretty(env).map_err(err)?;
    emit(&text)?;
    if let Some(d) = dir {
        let mut f = create(d, "envelope.json")?;
        writeln!(f, "{text}").map_err(err)?;
    }
    Ok(())
}

/// Builds the solver configuration from flags over file over defaults.
fn scf_config(
    gamma: Option<f64>,
    dim: Option<usize>,
    nstates: Option<usize>,
    flags: &ScfFlags,
    common: &Common,
    file: &FileConfig,
) -> ScfConfig {
    let d = ScfConfig::default();
    ScfConfig {
        gamma: gamma.unwrap_or(d.gamma),
        dim: dim.unwrap_or(d.dim),
        n_states: nstates.unwrap_or(d.n_states),
        eta: flags.eta.or(file.eta).unwrap_or(d.eta),
        max_iter: flags.max_iter.or(file.max_iter).unwrap_or(d.max_iter),
        tol_fixed_point: flags.tol.or(file.tol).unwrap_or(d.tol_fixed_point),
        grid_n: flags.grid_n.or(file.grid_n).unwrap_or(d.grid_n),
        extent: flags.box_size.or(file.box_size).unwrap_or(d.extent),
        l_max: flags.lmax.or(file.lmax).or(d.l_max),
        init: flags.init.clone().or_else(|| file.init.clone()).unwrap_or(d.init),
        seed: common.seed.or(file.seed).unwrap_or(d.seed),
        ..d
    }
}

struct LedgerRow {
    gamma: f64,
    dim: usize,
    n: usize,
    ratio: f64,
    norm_power: f64,
    neg_count: usize,
}

struct OptimizeRun {
    envelope: ResultEnvelope,
    result: scf::ScfResult,
    row: LedgerRow,
}

fn run_optimize(cfg: &ScfConfig, echo: Value) -> Result<OptimizeRun, String> {
    let started = now_unix();
    let grid = cfg.grid().map_err(err)?;
    let res = scf::run(cfg).map_err(err)?;
    let q = cfg.gamma + cfg.dim as f64 / 2.0;
    let norm_power = lp_norm_power(&res.v_star, q).map_err(err)?;
    let mut payload = res.to_json_value(cfg);
    if let Value::Object(m) = &mut payload {
        m.remove("config");
        m.insert("spectrum".into(), res.spectrum.to_json_value());
        m.insert("norm_power".into(), json!(norm_power));
        m.insert("negative_count".into(), json!(res.spectrum.negative_count));
        let radii: Vec<f64> = MASS_RADII.iter().copied().filter(|r| *r < cfg.extent).collect();
        let masses = mass_profile(&res.v_star, q, &radii).map_err(err)?;
        m.insert("mass_profile".into(), json!({ "exponent": q, "radii": radii, "values": masses }));
        if cfg.dim == 1 && cfg.gamma == 1.5 {
            let fit = manifold_distance(&res.v_star, cfg.n_states).map_err(err)?;
            m.insert("manifold_fit".into(), serde_json::to_value(fit).map_err(err)?);
        }
    }
    let provenance = json!({
        "grid": grid,
        "model": if cfg.dim == 1 { "line" } else { "radial potentials, angular channels summed with multiplicity" },
        "tolerances": {
            "fixed_point": cfg.tol_fixed_point,
            "objective": cfg.tol_objective,
            "degeneracy": cfg.degeneracy_tol,
        },
    });
    let row = LedgerRow {
        gamma: cfg.gamma,
        dim: cfg.dim,
        n: cfg.n_states,
        ratio: res.l_estimate,
        norm_power,
        neg_count: res.spectrum.negative_count,
    };
    let envelope = ResultEnvelope::new("optimize", echo, started, payload, provenance);
    Ok(OptimizeRun { envelope, result: res, row })
}

pub fn optimize(a: &OptimizeArgs) -> CmdResult {
    let file = FileConfig::load(a.common.config.as_deref(), "optimize")?;
    let workers = setup_workers(&a.common, &file)?;
    let gamma = a.gamma.or(single(&file.gamma, "gamma")?);
    let dim = a.dim.or(single(&file.dim, "dim")?);
    let nstates = a.nstates.or(single(&file.nstates, "nstates")?);
    let cfg = scf_config(gamma, dim, nstates, &a.scf, &a.common, &file);
    cfg.validate().map_err(err)?;
    let dir = output_dir(&a.common.output, &file, "optimize");
    prepare_dir(&dir)?;
    let echo = json!({ "command": "optimize", "scf": cfg, "output": dir, "workers": workers });
    let run = run_optimize(&cfg, echo)?;
    write_envelope(&dir, &run.envelope)?;
    if let Some(d) = &dir {
        run.result.v_star.write_csv(create(d, "v_star.csv")?).map_err(err)?;
        run.result.write_trace(create(d, "trace.jsonl")?).map_err(err)?;
    }
    Ok(if run.result.converged { Outcome::Done } else { Outcome::NotConverged })
}

pub fn sweep(a: &SweepArgs) -> CmdResult {
    let file = FileConfig::load(a.common.config.as_deref(), "sweep")?;
    let workers = setup_workers(&a.common, &file)?;
    let d = ScfConfig::default();
    let gammas = a.gamma.clone().or_else(|| file.gamma.as_ref().map(|v| v.to_vec())).unwrap_or(vec![d.gamma]);
    let dims = a.dim.clone().or_else(|| file.dim.as_ref().map(|v| v.to_vec())).unwrap_or(vec![d.dim]);
    let ns = a.nstates.clone().or_else(|| file.nstates.as_ref().map(|v| v.to_vec())).unwrap_or(vec![d.n_states]);
    let mut points = Vec::new();
    for &g in &gammas {
        for &dm in &dims {
            for &n in &ns {
                let cfg = scf_config(Some(g), Some(dm), Some(n), &a.scf, &a.common, &file);
                cfg.validate().map_err(|e| format!("sweep point gamma={g} dim={dm} N={n}: {e}"))?;
                points.push(cfg);
            }
        }
    }
    let dir = output_dir(&a.common.output, &file, "sweep");
    prepare_dir(&dir)?;
    let runs: Vec<Result<OptimizeRun, String>> = points
        .par_iter()
        .map(|cfg| {
            let echo = json!({ "command": "sweep", "scf": cfg, "output": dir, "workers": workers });
            run_optimize(cfg, echo)
        })
        .collect();

    // Single appender: lines go out in grid order whatever the worker timing.
    let mut jsonl = match &dir {
        Some(d) => Some(create(d, "ledger.jsonl")?),
        None => None,
    };
    let mut csv = match &dir {
        Some(d) => Some(create(d, "ledger.csv")?),
        None => None,
    };
    if let Some(f) = csv.as_mut() {
        writeln!(f, "gamma,dim,N,ratio,norm_power,neg_count").map_err(err)?;
    }
    let mut all_converged = true;
    for (cfg, run) in points.iter().zip(runs) {
        let run = run.map_err(|e| format!("sweep point gamma={} dim={} N={}: {e}", cfg.gamma, cfg.dim, cfg.n_states))?;
        all_converged &= run.result.converged;
        let line = serde_json::to_string(&run.envelope).map_err(err)?;
        emit(&line)?;
        if let Some(f) = jsonl.as_mut() {
            writeln!(f, "{line}").map_err(err)?;
        }
        if let Some(f) = csv.as_mut() {
            let r = &run.row;
            writeln!(f, "{},{},{},{:.12e},{:.12e},{}", r.gamma, r.dim, r.n, r.ratio, r.norm_power, r.neg_count)
                .map_err(err)?;
        }
    }
    Ok(if all_converged { Outcome::Done } else { Outcome::NotConverged })
}

pub fn kdv(a: &KdvArgs) -> CmdResult {
    let file = FileConfig::load(a.common.config.as_deref(), "kdv")?;
    let workers = setup_workers(&a.common, &file)?;
    let betas = a
        .betas
        .clone()
        .or_else(|| file.betas.clone())
        .ok_or("kdv needs --betas, e.g. --betas 0.8,0.5")?;
    let shifts = a.shifts.clone().or_else(|| file.shifts.clone()).unwrap_or(vec![0.0; betas.len()]);
    let normalize = a.normalize || file.normalize.unwrap_or(false);
    let grid_n = a.grid_n.or(file.grid_n).unwrap_or(8192);
    let half_width = a.box_size.or(file.box_size).unwrap_or(60.0);
    let seed = a.common.seed.or(file.seed).unwrap_or(0);
    let dir = output_dir(&a.common.output, &file, "kdv");
    let echo = json!({
        "command": "kdv",
        "betas": betas,
        "shifts": shifts,
        "normalize": normalize,
        "grid_n": grid_n,
        "box": half_width,
        "seed": seed,
        "output": dir,
        "workers": workers,
    });

    let started = now_unix();
    let mut spec = SolitonSpec::new(betas, shifts).map_err(err)?;
    if normalize {
        spec = normalize_to_manifold(&spec);
    }
    let grid = Grid1D::symmetric(half_width, grid_n).map_err(err)?;
    let v = soliton_profile(&spec, &grid).map_err(err)?;
    let n = spec.order();
    let report = riesz_ratio(&v, 1.5, n).map_err(err)?;
    let exact = exact_spectrum(&spec);
    let rows: Vec<Value> = (0..n)
        .map(|j| {
            let c = report.eigenvalues[j];
            json!({ "j": j + 1, "exact": exact[j], "computed": c, "abs_diff": (c - exact[j]).abs() })
        })
        .collect();
    let max_diff = (0..n).map(|j| (report.eigenvalues[j] - exact[j]).abs()).fold(0.0, f64::max);

    eprintln!("{:>3} {:>22} {:>22} {:>10}", "j", "exact", "computed", "|diff|");
    for j in 0..n {
        let c = report.eigenvalues[j];
        eprintln!("{:>3} {:>22.15e} {:>22.15e} {:>10.2e}", j + 1, exact[j], c, (c - exact[j]).abs());
    }
    eprintln!("ratio at gamma = 3/2: {:.10}", report.ratio);

    let payload = json!({
        "spec": spec,
        "cube_sum": spec.cube_sum(),
        "l2_norm_squared": spec.l2_norm_squared(),
        "spectrum": rows,
        "max_abs_diff": max_diff,
        "riesz": report,
    });
    let provenance = json!({ "grid": grid, "tolerances": { "eigensolver": "machine precision" } });
    let envelope = ResultEnvelope::new("kdv", echo, started, payload, provenance);
    prepare_dir(&dir)?;
    write_envelope(&dir, &envelope)?;
    if let Some(d) = &dir {
        v.write_csv(create(d, "profile.csv")?).map_err(err)?;
        let mut f = create(d, "spectrum.csv")?;
        writeln!(f, "j,exact,computed,abs_diff").map_err(err)?;
        for j in 0..n {
            let c = report.eigenvalues[j];
            writeln!(f, "{},{:.16e},{:.16e},{:.3e}", j + 1, exact[j], c, (c - exact[j]).abs()).map_err(err)?;
        }
    }
    Ok(Outcome::Done)
}

pub fn clr(a: &ClrArgs) -> CmdResult {
    let file = FileConfig::load(a.common.config.as_deref(), "clr")?;
    let workers = setup_workers(&a.common, &file)?;
    let dim = a.dim.or(single(&file.dim, "dim")?).unwrap_or(3);
    if dim < 3 {
        return Err(format!("clr needs d >= 3 (got d = {dim}); the critical CLR bound fails in d = 1, 2"));
    }
    let potential = a.potential.clone().or_else(|| file.potential.clone()).unwrap_or("sobolev".into());
    let count = a.nstates.or(single(&file.nstates, "nstates")?).unwrap_or(dim + 2);
    if count == 0 {
        return Err("--nstates must be at least 1".into());
    }
    let grid_n = a.grid_n.or(file.grid_n).unwrap_or(16384);
    let r_max = a.box_size.or(file.box_size).unwrap_or(200.0);
    let l_max = a.lmax.or(file.lmax);
    let seed = a.common.seed.or(file.seed).unwrap_or(0);
    let opts = BsOptions { count, l_max, ..BsOptions::new(count) };
    let dir = output_dir(&a.common.output, &file, "clr");
    let echo = json!({
        "command": "clr",
        "dim": dim,
        "potential": potential,
        "nstates": count,
        "grid_n": grid_n,
        "box": r_max,
        "lmax": l_max,
        "boundary": opts.boundary,
        "seed": seed,
        "output": dir,
        "workers": workers,
    });

    let started = now_unix();
    let grid = RadialGrid::new(r_max, grid_n, dim).map_err(err)?;
    let v = ProfileRegistry::standard().build(&potential, &grid.clone().into(), seed).map_err(err)?;
    let bs = mu_spectrum_with(&v, &opts).map_err(err)?;
    let (sobolev, _) = sphere_potential(&SpherePotentialSpec::new(0, dim).map_err(err)?, &grid).map_err(err)?;
    let reference = mu_spectrum_with(&sobolev, &BsOptions { count: 1, ..opts.clone() }).map_err(err)?;
    let ell_1 = reference.ell_estimates[&1];
    let gain: BTreeMap<usize, f64> = bs.ell_estimates.iter().map(|(n, e)| (*n, e / ell_1)).collect();
    let payload = json!({
        "result": bs,
        "ell_estimates_sobolev": reference.ell_estimates,
        "gain_over_sobolev": gain,
        "decay_constant": decay_tail_check(&v).map_err(err)?,
    });
    let provenance = json!({
        "grid": grid,
        "model": "radial potentials, angular channels summed with multiplicity",
        "tolerances": { "mass_floor_relative": 1e-14 },
    });
    let envelope = ResultEnvelope::new("clr", echo, started, payload, provenance);
    prepare_dir(&dir)?;
    write_envelope(&dir, &envelope)?;
    Ok(Outcome::Done)
}

pub fn verify(a: &VerifyArgs) -> CmdResult {
    let file = FileConfig::load(a.common.config.as_deref(), "verify")?;
    let workers = setup_workers(&a.common, &file)?;
    let quick = a.quick || file.quick.unwrap_or(false);
    let dir = output_dir(&a.common.output, &file, "verify");
    let started = now_unix();
    let outcomes = CriterionRegistry::standard().run(quick, |o| println!("{}", o.line()));
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("{passed} of {} criteria passed", outcomes.len());
    if let Some(d) = &dir {
        let echo = json!({ "command": "verify", "quick": quick, "output": dir, "workers": workers });
        let results: Vec<Value> = outcomes
            .iter()
            .map(|o| json!({ "id": o.id, "name": o.name, "passed": o.passed, "detail": o.detail }))
            .collect();
        let payload = json!({ "passed": passed, "total": outcomes.len(), "criteria": results });
        let envelope = ResultEnvelope::new("verify", echo, started, payload, json!({}));
        prepare_dir(&dir)?;
        let mut f = create(d, "envelope.json")?;
        writeln!(f, "{}", serde_json::to_string_pretty(&envelope).map_err(err)?).map_err(err)?;
    }
    Ok(if passed == outcomes.len() { Outcome::Done } else { Outcome::Failed })
}

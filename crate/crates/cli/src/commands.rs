//! Pipelines behind each subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use blowup_core::cpplus::{bump_scale, default_horizon, lower_bound_probe, monotonicity_gap, solve_family};
use blowup_core::diagnostics::{
    continuity_experiment, decay_fit, energy_trace, origin_report, sigma_closed_form, sigma_sequence,
    tail_bound_report, zero_census, CheckReport,
};
use blowup_core::io::{num, TraceMetadata};
use blowup_core::model::{v_unchecked, DEFAULT_ABS_TOL, DEFAULT_ETA_MAX, DEFAULT_MAX_FREQUENCY, DEFAULT_REL_TOL};
use blowup_core::pde::{apriori_check, linspace, pde_residual, reconstruct_with, two_signed};
use blowup_core::{integrate, Params, SolutionTrace, WindowMode};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::ConfigFile;
use crate::table::{Cell, Format, Report, Table};
use crate::{Cli, Command, Global};

pub enum Outcome {
    Pass,
    /// A check failed; the report holding it.
    Fail(PathBuf),
}

fn outcome(pass: bool, report: PathBuf) -> Outcome {
    if pass {
        Outcome::Pass
    } else {
        Outcome::Fail(report)
    }
}

/// Tail checks only make sense once the trace reaches this far.
const ORIGIN_CHECK_ETA: f64 = 50.0;
const ORIGIN_LIMIT: f64 = 1e-2;
const DEFAULT_WINDOW: (f64, f64) = (15.0, 50.0);
const DEFAULT_SLACK: f64 = 0.5;
const DEFAULT_MIN_ZEROS: usize = 3;
const DEFAULT_ETA_ALPHA_LIMIT: f64 = 20.0;

struct Run {
    cfg: ConfigFile,
    params: Params,
    out: PathBuf,
    format: Format,
}

fn resolve_params(g: &Global, cfg: &ConfigFile) -> Result<Params> {
    let sec = "params";
    let p = cfg.pick(g.p, sec, "p")?.unwrap_or(0.5);
    let n = cfg.pick(g.n, sec, "n")?.unwrap_or(3);
    let alpha = cfg.pick(g.alpha, sec, "alpha")?.unwrap_or(0.2);
    let rel_tol = cfg.pick(g.rel_tol, sec, "rel-tol")?.unwrap_or(DEFAULT_REL_TOL);
    let abs_tol = cfg.pick(g.abs_tol, sec, "abs-tol")?.unwrap_or(DEFAULT_ABS_TOL);
    let eta_max = cfg.pick(g.eta_max, sec, "eta-max")?.unwrap_or(DEFAULT_ETA_MAX);
    let max_frequency = cfg
        .pick(g.max_frequency, sec, "max-frequency")?
        .unwrap_or(DEFAULT_MAX_FREQUENCY);
    let mode: WindowMode = match cfg.pick(g.mode.clone(), sec, "mode")? {
        Some(m) => m.parse()?,
        None => WindowMode::default(),
    };
    let mut params = Params::new(p, n, alpha)?
        .with_tolerances(rel_tol, abs_tol)?
        .with_eta_max(eta_max)?
        .with_max_frequency(max_frequency)?
        .with_window_mode(mode);
    if let Some(a) = cfg.pick(g.quiescent_amplitude, sec, "quiescent-amplitude")? {
        params = params.with_quiescent_amplitude(a)?;
    }
    if let Some(r) = cfg.pick(g.resolve_to, sec, "resolve-to")? {
        params = params.with_resolve_to(r)?;
    }
    Ok(params)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    let cfg = match &g.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let params = resolve_params(g, &cfg)?;
    // flag, then BLOWUP_PROFILES_OUT (both arrive through `g.out`), then file
    let out = match &g.out {
        Some(dir) => dir.clone(),
        None => cfg.pick::<PathBuf>(None, "output", "out")?.unwrap_or_else(|| "out".into()),
    };
    let format = match g.format {
        Some(f) => f,
        None => match cfg.raw("output", "format") {
            None | Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            Some(other) => bail!("[output] format = {other}: expected csv or json"),
        },
    };
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let ctx = Run {
        cfg,
        params,
        out,
        format,
    };
    match &cli.command {
        Command::Solve => solve(&ctx),
        Command::Decay { window, slack } => decay(&ctx, window.as_deref(), *slack),
        Command::Zeros { min_zeros } => zeros(&ctx, *min_zeros),
        Command::Energy { eta_alpha_limit } => energy(&ctx, *eta_alpha_limit),
        Command::Continuity { deltas, limit } => continuity(&ctx, deltas.as_deref(), *limit),
        Command::PdeCheck {
            r_max,
            r_points,
            t_max,
            t_points,
            t_offset,
            literal_factor,
            min_ratio,
        } => pde_check(
            &ctx,
            PdeOpts {
                r_max: ctx.cfg.pick(*r_max, "pde-check", "r-max")?.unwrap_or(12.0),
                r_points: ctx.cfg.pick(*r_points, "pde-check", "r-points")?.unwrap_or(241),
                t_max: ctx.cfg.pick(*t_max, "pde-check", "t-max")?.unwrap_or(1.0),
                t_points: ctx.cfg.pick(*t_points, "pde-check", "t-points")?.unwrap_or(41),
                t_offset: ctx.cfg.pick(*t_offset, "pde-check", "t-offset")?.unwrap_or(1.0),
                literal: ctx
                    .cfg
                    .pick(*literal_factor, "pde-check", "literal-factor")?
                    .unwrap_or(false),
                min_ratio: ctx.cfg.pick(*min_ratio, "pde-check", "min-ratio")?.unwrap_or(3.0),
            },
        ),
        Command::Cpplus {
            ms,
            eta_star,
            g,
            horizon,
            r_max,
            r_points,
            t_steps,
            probes,
            seed,
        } => {
            let sec = "cpplus";
            cpplus(
                &ctx,
                CpOpts {
                    ms: ctx.cfg.pick_list(ms.as_deref(), sec, "ms")?.unwrap_or(vec![1, 2, 4, 8]),
                    eta_star: ctx.cfg.pick(*eta_star, sec, "eta-star")?.unwrap_or(1.0),
                    g: ctx.cfg.pick(*g, sec, "g")?,
                    horizon: ctx.cfg.pick(*horizon, sec, "horizon")?,
                    r_max: ctx.cfg.pick(*r_max, sec, "r-max")?,
                    r_points: ctx.cfg.pick(*r_points, sec, "r-points")?.unwrap_or(400),
                    t_steps: ctx.cfg.pick(*t_steps, sec, "t-steps")?.unwrap_or(399),
                    probes: ctx.cfg.pick(*probes, sec, "probes")?.unwrap_or(4),
                    seed: ctx.cfg.pick(*seed, sec, "seed")?.unwrap_or(0),
                },
            )
        }
        Command::Sweep {
            alphas,
            window,
            slack,
            min_zeros,
        } => sweep(&ctx, alphas.as_deref(), window.as_deref(), *slack, *min_zeros),
        Command::Sigma { m } => sigma(&ctx, ctx.cfg.pick(*m, "sigma", "m")?.unwrap_or(40)),
    }
}

fn window(ctx: &Run, flag: Option<&str>, section: &str) -> Result<(f64, f64)> {
    match ctx.cfg.pick_list::<f64>(flag, section, "window")? {
        None => Ok(DEFAULT_WINDOW),
        Some(v) if v.len() == 2 => Ok((v[0], v[1])),
        Some(_) => bail!("window must be `lo,hi`"),
    }
}

fn trace_table(trace: &SolutionTrace) -> Table {
    let mut t = Table::new(&["eta", "w", "wp", "V"]);
    for i in 0..trace.len() {
        let (w, wp) = (trace.ws[i], trace.wps[i]);
        t.push_nums(&[trace.etas[i], w, wp, v_unchecked(w, wp, trace.params.p)]);
    }
    t
}

fn solve(ctx: &Run) -> Result<Outcome> {
    let trace = integrate(&ctx.params)?;
    trace_table(&trace).write(&ctx.out, "trace", ctx.format)?;
    let path = Report::new("solve", Some(ctx.params), vec![], TraceMetadata::new(&trace)).write(&ctx.out, "solve.json")?;
    Ok(outcome(true, path))
}

fn decay(ctx: &Run, window_flag: Option<&str>, slack: Option<f64>) -> Result<Outcome> {
    let window = window(ctx, window_flag, "decay")?;
    let slack = ctx.cfg.pick(slack, "decay", "slack")?.unwrap_or(DEFAULT_SLACK);
    let trace = integrate(&ctx.params)?;
    let fit = decay_fit(&trace, window)?;
    let report = Report::new("decay", Some(ctx.params), vec![fit.exponent_report(&ctx.params, slack)], fit);
    let path = report.write(&ctx.out, "decay.json")?;
    Ok(outcome(report.pass, path))
}

fn zeros(ctx: &Run, min_zeros: Option<usize>) -> Result<Outcome> {
    let min_zeros = ctx.cfg.pick(min_zeros, "zeros", "min-zeros")?.unwrap_or(DEFAULT_MIN_ZEROS);
    let trace = integrate(&ctx.params)?;
    let census = zero_census(&trace)?;
    let mut t = Table::new(&["eta_zero", "slope", "window", "slope_floor"]);
    for (r, floor) in census.records.iter().zip(&census.slope_floors) {
        t.push_nums(&[r.eta_zero, r.slope, r.window, *floor]);
    }
    t.write(&ctx.out, "zeros", ctx.format)?;
    let check = census.oscillation_report(&ctx.params, min_zeros);
    let data = json!({
        "count": census.records.len(),
        "alternating": census.alternating,
        "floor_violations": census.floor_violations,
        "spacings": census.spacings(),
        "quiescent_from": trace.quiescent_from,
    });
    let report = Report::new("zeros", Some(ctx.params), vec![check], data);
    let path = report.write(&ctx.out, "zeros_report.json")?;
    Ok(outcome(report.pass, path))
}

/// Energy, convergence and tail checks of one trace.
fn trace_checks(
    trace: &SolutionTrace,
    eta_alpha_limit: f64,
) -> blowup_core::Result<(Vec<CheckReport>, serde_json::Value)> {
    let params = &trace.params;
    let et = energy_trace(trace);
    let tail = tail_bound_report(trace)?;
    let mut checks = vec![et.monotonicity_report(params), et.range_report(params)];
    if trace.eta_end() >= ORIGIN_CHECK_ETA {
        checks.push(origin_report(trace, ORIGIN_LIMIT));
    }
    checks.push(tail.eta_alpha_report(params, eta_alpha_limit));
    checks.push(tail.global_report(params));
    let data = json!({
        "f_inf_estimate": et.f_inf_estimate,
        "max_increase": et.max_increase,
        "derivative_mismatch": et.derivative_mismatch,
        "tail": tail,
    });
    Ok((checks, data))
}

fn energy(ctx: &Run, eta_alpha_limit: Option<f64>) -> Result<Outcome> {
    let limit = ctx
        .cfg
        .pick(eta_alpha_limit, "energy", "eta-alpha-limit")?
        .unwrap_or(DEFAULT_ETA_ALPHA_LIMIT);
    let trace = integrate(&ctx.params)?;
    let et = energy_trace(&trace);
    let mut t = Table::new(&["eta", "F"]);
    for (eta, f) in et.etas.iter().zip(&et.f) {
        t.push_nums(&[*eta, *f]);
    }
    t.write(&ctx.out, "energy", ctx.format)?;
    let (checks, data) = trace_checks(&trace, limit)?;
    let report = Report::new("energy", Some(ctx.params), checks, data);
    let path = report.write(&ctx.out, "energy_report.json")?;
    Ok(outcome(report.pass, path))
}

fn continuity(ctx: &Run, deltas: Option<&str>, limit: Option<f64>) -> Result<Outcome> {
    let deltas = ctx
        .cfg
        .pick_list(deltas, "continuity", "deltas")?
        .unwrap_or(vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6]);
    let limit = ctx.cfg.pick(limit, "continuity", "limit")?.unwrap_or(1e-3);
    let table = continuity_experiment(&ctx.params, &deltas)?;
    let mut t = Table::new(&["delta", "distance"]);
    for row in &table.rows {
        t.push_nums(&[row.delta, row.distance]);
    }
    t.write(&ctx.out, "continuity", ctx.format)?;
    let report = Report::new("continuity", Some(ctx.params), vec![table.report(limit)], json!({ "eta_1": table.eta_1 }));
    let path = report.write(&ctx.out, "continuity_report.json")?;
    Ok(outcome(report.pass, path))
}

struct PdeOpts {
    r_max: f64,
    r_points: usize,
    t_max: f64,
    t_points: usize,
    t_offset: f64,
    literal: bool,
    min_ratio: f64,
}

fn pde_check(ctx: &Run, o: PdeOpts) -> Result<Outcome> {
    if o.r_points < 3 || o.t_points < 3 {
        bail!("pde-check needs at least 3 nodes in r and t");
    }
    let trace = integrate(&ctx.params)?;
    let field_at = |nr: usize, nt: usize| {
        reconstruct_with(
            &trace,
            &linspace(0.0, o.r_max, nr),
            &linspace(0.0, o.t_max, nt),
            o.t_offset,
            o.literal,
        )
    };
    let coarse = field_at(o.r_points, o.t_points)?;
    let fine = field_at(2 * o.r_points - 1, 2 * o.t_points - 1)?;
    let (res_coarse, res_fine) = (pde_residual(&coarse)?, pde_residual(&fine)?);
    let ratio = res_coarse / res_fine;
    let last = coarse.t_grid.len() - 1;
    let signed = two_signed(&coarse, last);
    let checks = vec![
        CheckReport::lower("residual_refinement", Some(ctx.params), ratio, o.min_ratio, 0.0),
        apriori_check(&coarse),
        apriori_check(&fine),
        CheckReport::lower("two_signed", Some(ctx.params), f64::from(u8::from(signed)), 1.0, 0.0),
    ];
    let mut t = Table::new(&["r", "t", "u"]);
    for (row, &time) in coarse.u.iter().zip(&coarse.t_grid) {
        for (&r, &u) in coarse.r_grid.iter().zip(row) {
            t.push_nums(&[r, time, u]);
        }
    }
    t.write(&ctx.out, "field", ctx.format)?;
    let data = json!({
        "residual_coarse": res_coarse,
        "residual_fine": res_fine,
        "ratio": ratio,
        "literal_factor": o.literal,
        "t_offset": o.t_offset,
    });
    let report = Report::new("pde-check", Some(ctx.params), checks, data);
    let path = report.write(&ctx.out, "pde_report.json")?;
    Ok(outcome(report.pass, path))
}

struct CpOpts {
    ms: Vec<u32>,
    eta_star: f64,
    g: Option<f64>,
    horizon: Option<f64>,
    r_max: Option<f64>,
    r_points: usize,
    t_steps: usize,
    probes: usize,
    seed: u64,
}

fn cpplus(ctx: &Run, o: CpOpts) -> Result<Outcome> {
    let p = ctx.params.p;
    let g = match o.g {
        Some(g) => g,
        None => {
            let reach = (2f64.sqrt() * o.eta_star).max(1.0);
            let trace = integrate(&ctx.params.with_eta_max(reach)?)?;
            let (g, straddles) = bump_scale(&trace, o.eta_star)?;
            if straddles {
                eprintln!(
                    "warning: w changes sign on [η*, √2 η*] = [{}, {}]; the bump scale degenerates to 0",
                    o.eta_star,
                    2f64.sqrt() * o.eta_star
                );
            }
            g
        }
    };
    let horizon = match o.horizon {
        Some(t) => t,
        None if g > 0.0 => default_horizon(g, p),
        None => 0.5,
    };
    let r_max = o
        .r_max
        .unwrap_or(2.0 * (4.0 * o.eta_star + 4.0 * horizon.sqrt()));
    let r_grid = linspace(0.0, r_max, o.r_points);
    let evs = solve_family(&o.ms, p, ctx.params.n, o.eta_star, g, horizon, &r_grid, o.t_steps)?;
    let abs_tol = ctx.params.abs_tol;

    let first = &evs[0];
    let t_probe = first
        .t_grid
        .iter()
        .position(|&t| t >= 0.1f64.min(horizon))
        .unwrap_or(0);
    let mut nodes = vec![(0, t_probe)];
    let inside: Vec<usize> = (0..r_grid.len()).filter(|&i| r_grid[i] < o.eta_star).collect();
    let early: Vec<usize> = (0..first.t_grid.len())
        .filter(|&j| first.t_grid[j] <= 0.2f64.min(horizon))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    for _ in 0..o.probes {
        if let (Some(&i), Some(&j)) = (inside.choose(&mut rng), early.choose(&mut rng)) {
            nodes.push((i, j));
        }
    }
    nodes.sort_unstable();
    nodes.dedup();
    let probe = lower_bound_probe(&evs, &nodes)?;

    let mut checks = vec![CheckReport::upper(
        "monotone_in_m",
        None,
        monotonicity_gap(&evs)?.max(0.0),
        0.0,
        abs_tol,
    )];
    for ev in &evs {
        checks.push(CheckReport::lower("non_negative", None, ev.min_value(), 0.0, abs_tol));
        checks.push(ev.bound_report(abs_tol));
        checks.push(ev.far_field_report());
    }
    checks.push(CheckReport::lower(
        "probe_margins_non_decreasing",
        None,
        f64::from(u8::from(probe.non_decreasing)),
        1.0,
        0.0,
    ));

    let mut t = Table::new(&["r", "t", "u", "m"]);
    for ev in &evs {
        for (row, &time) in ev.u.iter().zip(&ev.t_grid) {
            for (&r, &u) in ev.r_grid.iter().zip(row) {
                t.push(vec![Cell::Num(r), Cell::Num(time), Cell::Num(u), Cell::Int(i64::from(ev.m))]);
            }
        }
    }
    t.write(&ctx.out, "cpplus", ctx.format)?;
    let data = json!({
        "g": g,
        "eta_star": o.eta_star,
        "horizon": horizon,
        "r_max": r_max,
        "dt": evs.iter().map(|e| e.dt).collect::<Vec<_>>(),
        "probe": probe,
    });
    let report = Report::new("cpplus", Some(ctx.params), checks, data);
    let path = report.write(&ctx.out, "probe.json")?;
    Ok(outcome(report.pass, path))
}

/// Sweep column for each check.
const FLAG_COLUMNS: [(&str, &str); 7] = [
    ("energy_non_increasing", "energy_non_increasing_ok"),
    ("energy_range", "energy_range_ok"),
    ("convergence_to_origin", "origin_ok"),
    ("tail_bound_eta_alpha", "tail_eta_alpha_ok"),
    ("tail_bound_global", "tail_global_ok"),
    ("oscillation", "oscillation_ok"),
    ("decay_exponent", "decay_exponent_ok"),
];

struct SweepRow {
    alpha: f64,
    zeros: Option<usize>,
    exponent: Option<f64>,
    f_inf: Option<f64>,
    checks: Vec<CheckReport>,
    error: Option<String>,
}

fn sweep_one(params: Params, window: (f64, f64), slack: f64, min_zeros: usize) -> SweepRow {
    let mut row = SweepRow {
        alpha: params.alpha,
        zeros: None,
        exponent: None,
        f_inf: None,
        checks: Vec::new(),
        error: None,
    };
    let result = (|| -> blowup_core::Result<()> {
        let trace = integrate(&params)?;
        let et = energy_trace(&trace);
        row.f_inf = Some(et.f_inf_estimate);
        let (checks, _) = trace_checks(&trace, DEFAULT_ETA_ALPHA_LIMIT)?;
        row.checks = checks;
        let census = zero_census(&trace)?;
        row.zeros = Some(census.records.len());
        row.checks.push(census.oscillation_report(&params, min_zeros));
        let fit = decay_fit(&trace, window)?;
        row.exponent = Some(fit.exponent);
        row.checks.push(fit.exponent_report(&params, slack));
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

fn sweep(
    ctx: &Run,
    alphas: Option<&str>,
    window_flag: Option<&str>,
    slack: Option<f64>,
    min_zeros: Option<usize>,
) -> Result<Outcome> {
    let mut alphas: Vec<f64> = ctx.cfg.pick_list(alphas, "sweep", "alphas")?.unwrap_or_default();
    let window = window(ctx, window_flag, "sweep")?;
    let slack = ctx.cfg.pick(slack, "sweep", "slack")?.unwrap_or(DEFAULT_SLACK);
    let min_zeros = ctx.cfg.pick(min_zeros, "sweep", "min-zeros")?.unwrap_or(DEFAULT_MIN_ZEROS);
    let e = ctx.params.equilibrium();
    if let Some(bad) = alphas.iter().find(|&&a| !(a > 0.0 && a < e)) {
        bail!("sweep values must lie in (0, {e}), got {bad}");
    }
    let given = alphas.len();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    if alphas.len() < given {
        eprintln!("warning: dropped {} duplicate α value(s)", given - alphas.len());
    }
    let params = alphas
        .iter()
        .map(|&a| ctx.params.with_alpha(a))
        .collect::<blowup_core::Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = params
        .par_iter()
        .map(|&p| sweep_one(p, window, slack, min_zeros))
        .collect();

    let mut columns = vec!["alpha", "zeros", "exponent", "f_inf"];
    columns.extend(FLAG_COLUMNS.map(|(_, c)| c));
    columns.extend(["pass", "error"]);
    let mut t = Table::new(&columns);
    let mut all = true;
    for row in &rows {
        let flag = |name: &str| row.checks.iter().find(|c| c.check_name == name).map(|c| c.pass);
        let pass = row.error.is_none() && row.checks.iter().all(|c| c.pass);
        all &= pass;
        let mut cells = vec![
            Cell::Num(row.alpha),
            row.zeros.map_or(Cell::Text(String::new()), |z| Cell::Int(z as i64)),
            Cell::Num(row.exponent.unwrap_or(f64::NAN)),
            Cell::Num(row.f_inf.unwrap_or(f64::NAN)),
        ];
        for (name, _) in FLAG_COLUMNS {
            cells.push(flag(name).map_or(Cell::Text(String::new()), Cell::Bool));
        }
        cells.push(Cell::Bool(pass));
        cells.push(Cell::Text(row.error.clone().unwrap_or_default()));
        t.push(cells);
    }
    t.write(&ctx.out, "sweep", ctx.format)?;
    let checks: Vec<CheckReport> = rows.iter().flat_map(|r| r.checks.clone()).collect();
    let errors: Vec<_> = rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| json!({ "alpha": r.alpha, "error": e })))
        .collect();
    let mut report = Report::new("sweep", Some(ctx.params), checks, json!({ "alphas": alphas, "errors": errors }));
    report.pass &= all;
    let path = report.write(&ctx.out, "sweep_report.json")?;
    Ok(outcome(report.pass, path))
}

fn sigma(ctx: &Run, m: usize) -> Result<Outcome> {
    let p = ctx.params.p;
    let seq = sigma_sequence(p, m)?;
    let mut t = Table::new(&["m", "sigma", "closed_form"]);
    for (k, &s) in seq.iter().enumerate() {
        println!("{}", num(s));
        t.push(vec![Cell::Int(k as i64 + 1), Cell::Num(s), Cell::Num(sigma_closed_form(p, k + 1))]);
    }
    let path: &Path = &t.write(&ctx.out, "sigma", ctx.format)?;
    Ok(outcome(true, path.to_path_buf()))
}

//! The five subcommands. Each writes its artifacts and returns the verdict
//! together with the report, so tests can drive them without a process.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mbsde_core::approximation::{build_cascade, truncate, Calibration, CascadeConfig};
use mbsde_core::diagnostics::{
    convergence_table, exp_integrability, pos_parts, s_components, sweep, ConvergenceTable,
    ExpMoment, IncrementStat, PairedSolutions, PosParts,
};
use mbsde_core::drift::{
    check_all, check_outward_normalized, ConditionReport, DriftSpec, NormalizedDrift,
    PulledBackDrift, Thresholds,
};
use mbsde_core::solver::{
    simulate_forward, solve_bsde, solve_bsde_bounded_stopping, BsdeSolution, ForwardPaths,
    PicardInit, TerminalMap,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::artifacts::{read_solution, Artifacts, Format};
use crate::scenario::{sub_seed, Loaded, PairCfg, Scenario, TerminalCfg};
use crate::setup::{self, stream, Setup};
use crate::{selftest, ConfigError, RunError};

/// Smallest acceptable sample minimum of the drift of `S`.
pub const POS_TOL: f64 = -1e-6;
/// Geometry self-test sizes.
pub const SELFTEST_CASES: usize = 1000;
pub const SELFTEST_SAMPLES: usize = 10_000;

pub struct Options {
    pub out: PathBuf,
    pub format: Format,
    pub threads: usize,
}

pub struct Outcome<T> {
    pub pass: bool,
    pub report: T,
    /// Human-readable table for the terminal.
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// `--out`, else the scenario's `out`, else `out/<name>`.
pub fn output_dir(cli: Option<&Path>, scenario: Option<&Scenario>) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    match scenario {
        Some(s) => s
            .out
            .as_ref()
            .map_or_else(|| Path::new("out").join(&s.name), PathBuf::from),
        None => PathBuf::from("out/geometry-selftest"),
    }
}

fn finish<T>(
    mut a: Artifacts,
    opts: &Options,
    pass: bool,
    report: T,
    summary: String,
) -> Result<Outcome<T>, RunError> {
    a.meta(opts.threads)?;
    Ok(Outcome {
        pass,
        report,
        summary,
        files: a.written().to_vec(),
    })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------- check-drift

#[derive(Clone, Debug, Serialize)]
pub struct CheckDriftReport {
    pub drift: String,
    pub conditions: ConditionReport,
    pub pass: bool,
}

pub fn check_drift(loaded: &Loaded, opts: &Options) -> Result<Outcome<CheckDriftReport>, RunError> {
    let s = &loaded.scenario;
    let st = setup::build(s)?;
    let conditions = check_all(
        &st.drift,
        &st.chart,
        &st.psi,
        &st.domain,
        &st.sampler,
        Thresholds {
            small: s.check.small,
        },
        sub_seed(s.seed, stream::CHECK),
        s.check.samples,
    )?;
    let pass = conditions.verdicts.all_pass();
    let report = CheckDriftReport {
        drift: st.drift.name().to_string(),
        conditions,
        pass,
    };

    let mut a = Artifacts::new(&opts.out, &loaded.hash, opts.format, "check-drift")?;
    a.json("conditions", &report)?;
    let c = &report.conditions;
    a.csv(
        "conditions",
        &[
            ("L_hat", "largest sampled Lipschitz ratio in (b, z)"),
            ("nu_hat", "smallest sampled monotonicity ratio"),
            ("L2_hat", "largest |f(b, x, 0)|"),
            (
                "radial_min",
                "smallest radial component on the boundary of the normalised domain",
            ),
            ("C_growth", "linear growth constant"),
            ("outward", "1 if radial_min >= -1e-9"),
            ("pass", "1 if every requested verdict passes"),
        ],
        &[vec![
            c.l_hat,
            c.nu_hat,
            c.l2_hat,
            c.radial_min,
            c.c_growth,
            flag(c.verdicts.outward),
            flag(pass),
        ]],
    )?;
    let mut t = String::new();
    let _ = writeln!(t, "drift            {}", report.drift);
    let _ = writeln!(t, "L_hat            {:.6e}", c.l_hat);
    let _ = writeln!(t, "nu_hat           {:.6e}", c.nu_hat);
    let _ = writeln!(t, "L2_hat           {:.6e}", c.l2_hat);
    let _ = writeln!(
        t,
        "radial_min       {:.6e}  {}",
        c.radial_min,
        verdict(c.verdicts.outward)
    );
    let _ = writeln!(
        t,
        "C_growth         {:.6e}  {}",
        c.c_growth,
        verdict(c.verdicts.growth_dominated)
    );
    if let Some(v) = c.verdicts.declared_consistent {
        let _ = writeln!(t, "declared         {}", verdict(v));
    }
    if let Some(v) = c.verdicts.small {
        let _ = writeln!(t, "small drift      {}", verdict(v));
    }
    let _ = writeln!(t, "check-drift      {}", verdict(pass));
    finish(a, opts, pass, report, t)
}

// ---------------------------------------------------------------------- solve

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub drift: String,
    pub terminal: String,
    pub n_paths: usize,
    pub n_steps: usize,
    pub converged: bool,
    pub iterations: usize,
    pub picard_residuals: Vec<f64>,
    pub terminal_error: f64,
    /// Largest `chi(X) - level` over all paths and times.
    pub max_level_excess: f64,
    pub stopped_paths: Option<usize>,
    pub x0: Vec<f64>,
    pub pass: bool,
}

fn solve_with(
    st: &Setup,
    s: &Scenario,
    fwd: &ForwardPaths,
    f: &DriftSpec,
    u: &TerminalMap,
    init: PicardInit,
) -> mbsde_core::Result<BsdeSolution> {
    let mut cfg = st.solver.clone();
    cfg.init = init;
    match setup::stopping(s, fwd) {
        Some(tau) => solve_bsde_bounded_stopping(&st.chart, &st.domain, f, u, fwd, &cfg, &tau),
        None => solve_bsde(&st.chart, &st.domain, f, u, fwd, &cfg),
    }
}

fn level_excess(st: &Setup, sol: &BsdeSolution) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for p in 0..sol.n_paths {
        for i in 0..=sol.n_steps {
            worst = worst.max(st.domain.chi(&sol.x(p, i)) - st.domain.level());
        }
    }
    worst
}

fn solution_rows(sol: &BsdeSolution) -> (Vec<(String, String)>, Vec<Vec<f64>>) {
    let mut cols = vec![("t".to_string(), "grid time".to_string())];
    for j in 0..sol.n {
        cols.push((
            format!("mean_x{j}"),
            format!("ensemble mean of coordinate {j} of X"),
        ));
    }
    for j in 0..sol.n {
        cols.push((
            format!("std_x{j}"),
            format!("ensemble standard deviation of coordinate {j} of X"),
        ));
    }
    cols.push((
        "mean_z_norm".into(),
        "ensemble mean of the Frobenius norm of Z (0 at the final time)".into(),
    ));
    let np = sol.n_paths as f64;
    let rows = (0..=sol.n_steps)
        .map(|i| {
            let mean = sol.mean_x(i);
            let mut var = vec![0.0; sol.n];
            let mut zn = 0.0;
            for p in 0..sol.n_paths {
                let x = sol.x(p, i);
                for j in 0..sol.n {
                    var[j] += (x[j] - mean[j]).powi(2);
                }
                if i < sol.n_steps {
                    zn += sol.z(p, i).norm();
                }
            }
            let mut row = vec![sol.times[i]];
            row.extend(mean.iter());
            row.extend(var.iter().map(|v| (v / np).sqrt()));
            row.push(zn / np);
            row
        })
        .collect();
    (cols, rows)
}

fn write_solution_csv(a: &mut Artifacts, name: &str, sol: &BsdeSolution) -> anyhow::Result<()> {
    let (cols, rows) = solution_rows(sol);
    let cols: Vec<(&str, &str)> = cols.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    a.csv(name, &cols, &rows)
}

fn write_residuals(a: &mut Artifacts, name: &str, sol: &BsdeSolution) -> anyhow::Result<()> {
    let rows: Vec<Vec<f64>> = sol
        .picard_residuals
        .iter()
        .enumerate()
        .map(|(i, r)| vec![(i + 1) as f64, *r])
        .collect();
    a.csv(
        name,
        &[
            ("iteration", "Picard pass, from 1"),
            ("residual", "max over time of the mean |X_new - X_old|"),
        ],
        &rows,
    )
}

pub fn solve(loaded: &Loaded, opts: &Options) -> Result<Outcome<SolveReport>, RunError> {
    let s = &loaded.scenario;
    let st = setup::build(s)?;
    let fwd = simulate_forward(&st.sde)?;
    let sol = solve_with(&st, s, &fwd, &st.drift, &st.terminal, st.solver.init)?;
    let stopped =
        setup::stopping(s, &fwd).map(|tau| tau.iter().filter(|t| **t < fwd.n_steps).count());
    let excess = level_excess(&st, &sol);
    let report = SolveReport {
        drift: st.drift.name().to_string(),
        terminal: st.terminal.name().to_string(),
        n_paths: sol.n_paths,
        n_steps: sol.n_steps,
        converged: sol.converged,
        iterations: sol.iterations(),
        picard_residuals: sol.picard_residuals.clone(),
        terminal_error: sol.terminal_error,
        max_level_excess: excess,
        stopped_paths: stopped,
        x0: sol.mean_x(0).iter().copied().collect(),
        pass: sol.converged,
    };

    let mut a = Artifacts::new(&opts.out, &loaded.hash, opts.format, "solve")?;
    a.solution("solution", &sol)?;
    a.json("solve", &report)?;
    write_solution_csv(&mut a, "summary", &sol)?;
    write_residuals(&mut a, "residuals", &sol)?;
    let mut t = String::new();
    let _ = writeln!(t, "drift            {}", report.drift);
    let _ = writeln!(t, "terminal         {}", report.terminal);
    let _ = writeln!(
        t,
        "paths x steps    {} x {}",
        report.n_paths, report.n_steps
    );
    let _ = writeln!(t, "iterations       {}", report.iterations);
    let _ = writeln!(
        t,
        "last residual    {:.3e}",
        report.picard_residuals.last().copied().unwrap_or(0.0)
    );
    let _ = writeln!(t, "X_0              {:?}", report.x0);
    let _ = writeln!(t, "level excess     {:.3e}", report.max_level_excess);
    let _ = writeln!(t, "converged        {}", verdict(report.converged));
    let pass = report.pass;
    finish(a, opts, pass, report, t)
}

// -------------------------------------------------------------------- cascade

#[derive(Clone, Debug, Serialize)]
pub struct CellReport {
    pub k: u32,
    pub l: u32,
    pub epsilon: f64,
    pub a: f64,
    /// Smallest radial component of the mollified drift before correction.
    pub radial_min_raw: f64,
    /// Same for the corrected drift; the outward check needs it `>= -1e-9`.
    pub radial_min_corrected: f64,
    pub outward: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveBrief {
    pub label: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableReport {
    /// Index of each solution; `0` stands for the limit solution placed last.
    pub table: ConvergenceTable,
    /// `mean_t E[Psi(X^a, X^limit)]` for every other label, in order.
    pub errors: Vec<f64>,
    pub z_errors: Vec<f64>,
    pub decreasing: bool,
    /// Finest error over coarsest error.
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CascadeReport {
    pub k_fixed: u32,
    pub calibrations: Vec<Calibration>,
    pub cells: Vec<CellReport>,
    pub outward: bool,
    pub a_stable: bool,
    pub l_table: TableReport,
    pub k_table: TableReport,
    pub solves: Vec<SolveBrief>,
    pub all_converged: bool,
    pub pass: bool,
}

fn table_report(table: ConvergenceTable, ratio: f64) -> TableReport {
    let errors = table.to_last();
    let z_errors = table.to_last_z();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let r = match (errors.first(), errors.last()) {
        (Some(a), Some(b)) if *a > 0.0 => b / a,
        (Some(_), Some(b)) if *b == 0.0 => 0.0,
        _ => f64::INFINITY,
    };
    TableReport {
        pass: decreasing && r <= ratio && errors.len() >= 2,
        table,
        errors,
        z_errors,
        decreasing,
        ratio: r,
    }
}

fn brief(label: String, sol: &BsdeSolution) -> SolveBrief {
    SolveBrief {
        label,
        converged: sol.converged,
        iterations: sol.iterations(),
        final_residual: sol.picard_residuals.last().copied().unwrap_or(0.0),
    }
}

pub fn cascade(loaded: &Loaded, opts: &Options) -> Result<Outcome<CascadeReport>, RunError> {
    let s = &loaded.scenario;
    let cc = s.cascade.as_ref().ok_or_else(|| ConfigError::Invalid {
        field: "cascade".into(),
        reason: "the cascade command needs a [cascade] section".into(),
    })?;
    let st = setup::build(s)?;
    let k_fixed = cc
        .k_fixed
        .unwrap_or_else(|| *cc.ks.iter().max().expect("validated nonempty"));
    let f_norm = NormalizedDrift::spec(st.drift.clone(), st.domain.clone());
    let mut ks = cc.ks.clone();
    if !ks.contains(&k_fixed) {
        ks.push(k_fixed);
    }
    let cfg = CascadeConfig {
        ks,
        ls: cc.ls.clone(),
        mollifier_count: cc.mollifier_count,
        modulus_density: cc.modulus_density,
        probe_count: cc.probe_count,
        seed: sub_seed(s.seed, stream::CASCADE),
    };
    let levels = build_cascade(&f_norm, st.dims, st.domain.normalized_margin(), &cfg)?;

    let check_seed = sub_seed(s.seed, stream::CHECK);
    let n = st.dims.n;
    let mut cells = Vec::new();
    for level in &levels {
        for cell in &level.cells {
            let raw = check_outward_normalized(
                &cell.f_kl,
                n,
                &st.sampler,
                check_seed,
                cc.outward_samples,
            )?;
            let cor = check_outward_normalized(
                &cell.g_kl,
                n,
                &st.sampler,
                check_seed,
                cc.outward_samples,
            )?;
            cells.push(CellReport {
                k: level.k,
                l: cell.l,
                epsilon: cell.epsilon,
                a: level.calibration.a,
                radial_min_raw: raw,
                radial_min_corrected: cor,
                outward: cor >= mbsde_core::drift::OUTWARD_TOL,
            });
        }
    }
    let outward = cells.iter().all(|c| c.outward);
    let a_stable = levels.iter().all(|l| l.calibration.stable);

    let fwd = simulate_forward(&st.sde)?;
    let pull = |f: &DriftSpec| PulledBackDrift::spec(f.clone(), st.domain.clone());
    let run = |f: &DriftSpec| solve_with(&st, s, &fwd, f, &st.terminal, st.solver.init);
    let mut a = Artifacts::new(&opts.out, &loaded.hash, opts.format, "cascade")?;
    let mut solves = Vec::new();

    let fixed = levels
        .iter()
        .find(|l| l.k == k_fixed)
        .expect("k_fixed is part of the cascade");
    let mut l_sols = Vec::new();
    for cell in &fixed.cells {
        let sol = run(&pull(&cell.g_kl))?;
        solves.push(brief(format!("k{}_l{}", k_fixed, cell.l), &sol));
        a.solution(&format!("solution_k{}_l{}", k_fixed, cell.l), &sol)?;
        l_sols.push((cell.l, sol));
    }
    let mut k_sols = Vec::new();
    for level in levels.iter().filter(|l| cc.ks.contains(&l.k)) {
        let sol = run(&pull(&level.f_k))?;
        solves.push(brief(format!("k{}", level.k), &sol));
        a.solution(&format!("solution_k{}", level.k), &sol)?;
        k_sols.push((level.k, sol));
    }
    let limit = run(&pull(&f_norm))?;
    solves.push(brief("limit".into(), &limit));
    a.solution("solution_limit", &limit)?;
    let f_fixed = k_sols
        .iter()
        .find(|(k, _)| *k == k_fixed)
        .map(|(_, s)| s.clone())
        .map_or_else(|| run(&pull(&truncate(&f_norm, k_fixed)?)), Ok)?;

    let mut l_refs: Vec<(u32, &BsdeSolution)> = l_sols.iter().map(|(l, s)| (*l, s)).collect();
    l_refs.push((0, &f_fixed));
    let l_table = table_report(convergence_table(&l_refs, &st.psi, &st.chart)?, cc.ratio);
    let mut k_refs: Vec<(u32, &BsdeSolution)> = k_sols.iter().map(|(k, s)| (*k, s)).collect();
    k_refs.push((0, &limit));
    let k_table = table_report(convergence_table(&k_refs, &st.psi, &st.chart)?, cc.ratio);

    let all_converged = solves.iter().all(|b| b.converged);
    let pass = outward && a_stable && l_table.pass && k_table.pass && all_converged;
    let report = CascadeReport {
        k_fixed,
        calibrations: levels.iter().map(|l| l.calibration.clone()).collect(),
        cells,
        outward,
        a_stable,
        l_table,
        k_table,
        solves,
        all_converged,
        pass,
    };

    a.json("cascade", &report)?;
    a.csv(
        "cells",
        &[
            ("k", "truncation level"),
            ("l", "mollification level"),
            ("epsilon", "modulus of continuity of f_k at 1/l"),
            ("A", "calibrated constant of the correction"),
            (
                "radial_min_raw",
                "smallest radial component of f_kl on the unit sphere",
            ),
            (
                "radial_min_corrected",
                "smallest radial component of g_kl on the unit sphere",
            ),
            ("outward", "1 if radial_min_corrected >= -1e-9"),
        ],
        &report
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.k as f64,
                    c.l as f64,
                    c.epsilon,
                    c.a,
                    c.radial_min_raw,
                    c.radial_min_corrected,
                    flag(c.outward),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    a.csv(
        "calibration",
        &[
            ("k", "truncation level"),
            ("l", "mollification level"),
            ("C_l", "calibration ratio at this l"),
            ("A", "max C_l + 1"),
        ],
        &report
            .calibrations
            .iter()
            .flat_map(|c| {
                c.per_l
                    .iter()
                    .map(move |(l, v)| vec![c.k as f64, *l as f64, *v, c.a])
            })
            .collect::<Vec<_>>(),
    )?;
    for (name, t) in [("l_table", &report.l_table), ("k_table", &report.k_table)] {
        let labels = &t.table.labels;
        let rows = (0..labels.len())
            .flat_map(|i| (0..labels.len()).map(move |j| (i, j)))
            .map(|(i, j)| {
                vec![
                    labels[i] as f64,
                    labels[j] as f64,
                    t.table.psi[i][j],
                    t.table.z_gap[i][j],
                ]
            })
            .collect::<Vec<_>>();
        a.csv(
            name,
            &[
                ("a", "first index (0 = limit solution)"),
                ("b", "second index (0 = limit solution)"),
                ("psi", "mean over time of E[Psi(X^a, X^b)]"),
                (
                    "z_gap",
                    "E of the time integral of |Z^a - Z^b|^2 in chart coordinates",
                ),
            ],
            &rows,
        )?;
    }

    let mut t = String::new();
    let _ = writeln!(
        t,
        "cell (k,l)     eps         A           raw radial    corrected     outward"
    );
    for c in &report.cells {
        let _ = writeln!(
            t,
            "({:>2},{:>3})     {:<10.3e}  {:<10.4}  {:<+12.4e}  {:<+12.4e}  {}",
            c.k,
            c.l,
            c.epsilon,
            c.a,
            c.radial_min_raw,
            c.radial_min_corrected,
            verdict(c.outward)
        );
    }
    for c in &report.calibrations {
        let _ = writeln!(
            t,
            "A stable k={:<3} {}  per l {:?}",
            c.k,
            verdict(c.stable),
            c.per_l
        );
    }
    for (name, tb) in [("l-table", &report.l_table), ("k-table", &report.k_table)] {
        let _ = writeln!(
            t,
            "{name} labels {:?} errors {:?} ratio {:.3e} {}",
            tb.table.labels,
            tb.errors,
            tb.ratio,
            verdict(tb.pass)
        );
    }
    let _ = writeln!(t, "solves converged {}", verdict(report.all_converged));
    let _ = writeln!(t, "cascade          {}", verdict(pass));
    finish(a, opts, pass, report, t)
}

// ------------------------------------------------------------------- diagnose

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub statistical_pass: bool,
    /// Smallest `mean + sigmas * std_error` over the steps; the statistical
    /// verdict needs it nonnegative.
    pub worst_margin: f64,
    pub pos_min: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseReport {
    pub pair: String,
    pub identical: bool,
    /// `mean_t E[Psi(X, X')]`.
    pub mean_psi: f64,
    pub sigmas: f64,
    pub sweep: Vec<SweepRow>,
    /// First passing `(lambda, mu)` in sweep order (`mu` outer).
    pub found: Option<(f64, f64)>,
    pub steps: Vec<IncrementStat>,
    pub time_averaged_increment: f64,
    pub excluded_paths: usize,
    pub exp_moment: [ExpMoment; 2],
    pub solves: Vec<SolveBrief>,
    pub status: String,
    pub pass: bool,
}

fn shifted_terminal(s: &Scenario, shift: &[f64]) -> Result<TerminalMap, ConfigError> {
    match &s.terminal {
        TerminalCfg::Tanh { scale, shift: base } => {
            let total: Vec<f64> = match base {
                Some(b) => b.iter().zip(shift).map(|(a, c)| a + c).collect(),
                None => shift.to_vec(),
            };
            Ok(setup::tanh_map(*scale, Some(&total)))
        }
        _ => Err(ConfigError::Invalid {
            field: "diagnostics.pair".into(),
            reason: "terminal-shift needs a tanh terminal map".into(),
        }),
    }
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Solves or loads the two solutions of the configured pair.
pub fn pair_solutions(
    loaded: &Loaded,
    st: &Setup,
    fwd: &ForwardPaths,
    base_dir: &Path,
) -> Result<(String, BsdeSolution, BsdeSolution), RunError> {
    let s = &loaded.scenario;
    Ok(match &s.diagnostics.pair {
        PairCfg::PicardInits => (
            "picard-inits".into(),
            solve_with(st, s, fwd, &st.drift, &st.terminal, PicardInit::Center)?,
            solve_with(st, s, fwd, &st.drift, &st.terminal, PicardInit::Terminal)?,
        ),
        PairCfg::TerminalShift { shift } => {
            let u2 = shifted_terminal(s, shift)?;
            (
                "terminal-shift".into(),
                solve_with(st, s, fwd, &st.drift, &st.terminal, st.solver.init)?,
                solve_with(st, s, fwd, &st.drift, &u2, st.solver.init)?,
            )
        }
        PairCfg::Files { first, second } => {
            let a = read_solution(&resolve(base_dir, first), &loaded.hash)?;
            let b = read_solution(&resolve(base_dir, second), &loaded.hash)?;
            for sol in [&a, &b] {
                if sol.n_paths != fwd.n_paths
                    || sol.n_steps != fwd.n_steps
                    || sol.times != fwd.times
                {
                    return Err(anyhow::anyhow!(
                        "solution dump does not match the forward grid of the scenario"
                    )
                    .into());
                }
            }
            ("files".into(), a, b)
        }
    })
}

fn pos_table(
    st: &Setup,
    fwd: &ForwardPaths,
    a: &BsdeSolution,
    b: &BsdeSolution,
    alpha: f64,
    samples: usize,
) -> mbsde_core::Result<Vec<PosParts>> {
    let stride = (a.n_paths / samples.max(1)).max(1);
    let mut out = Vec::new();
    for p in (0..a.n_paths).step_by(stride) {
        for i in 0..a.n_steps {
            let bi = fwd.b(p, i);
            let (x, xp, z, zp) = (a.x(p, i), b.x(p, i), a.z(p, i), b.z(p, i));
            let f = st.drift.eval(&bi, &x, &z)?;
            let fp = st.drift.eval(&bi, &xp, &zp)?;
            out.push(pos_parts(
                &st.chart, &st.psi, &x, &xp, &z, &zp, &f, &fp, alpha,
            )?);
        }
    }
    Ok(out)
}

/// Runs the sweep on an already available pair.
pub fn diagnose_pair(
    st: &Setup,
    s: &Scenario,
    fwd: &ForwardPaths,
    pair_name: String,
    first: &BsdeSolution,
    second: &BsdeSolution,
) -> mbsde_core::Result<DiagnoseReport> {
    let g = &s.diagnostics;
    let pair = PairedSolutions::new(first, second)?;
    let comps = s_components(&pair, &st.psi, &st.chart, g.alpha, true)?;
    let mean_psi = comps.psi.iter().sum::<f64>() / comps.psi.len() as f64;
    let identical = comps.psi.iter().all(|v| *v == 0.0) && first.z == second.z;
    let degree = st.solver.basis.degree();
    let results = sweep(&comps, fwd, &g.lambda_grid, &g.mu_grid, degree, g.sigmas)?;
    let parts = pos_table(st, fwd, first, second, g.alpha, g.pos_samples)?;
    let rows: Vec<SweepRow> = results
        .iter()
        .map(|(cfg, rep)| {
            let pos_min = parts
                .iter()
                .map(|p| p.value(cfg))
                .fold(f64::INFINITY, f64::min);
            let worst_margin = rep
                .steps
                .iter()
                .map(|st| st.mean + g.sigmas * st.std_error)
                .fold(f64::INFINITY, f64::min);
            SweepRow {
                lambda: cfg.lambda,
                mu: cfg.mu,
                alpha: cfg.alpha,
                statistical_pass: rep.pass,
                worst_margin,
                pos_min,
                pass: rep.pass && pos_min >= POS_TOL,
            }
        })
        .collect();
    let chosen = rows.iter().position(|r| r.pass);
    let shown = &results[chosen.unwrap_or(0)].1;
    let exp_moment = [
        exp_integrability(first, &st.chart, g.exp_mu)?,
        exp_integrability(second, &st.chart, g.exp_mu)?,
    ];
    let status = match chosen {
        Some(_) => "found",
        None => "inconclusive",
    };
    Ok(DiagnoseReport {
        pair: pair_name,
        identical,
        mean_psi,
        sigmas: g.sigmas,
        found: chosen.map(|i| (rows[i].lambda, rows[i].mu)),
        steps: shown.steps.clone(),
        time_averaged_increment: shown.time_averaged_increment,
        excluded_paths: shown.excluded_paths,
        sweep: rows,
        exp_moment,
        solves: vec![brief("first".into(), first), brief("second".into(), second)],
        status: status.into(),
        pass: chosen.is_some(),
    })
}

pub fn diagnose(
    loaded: &Loaded,
    opts: &Options,
    base_dir: &Path,
) -> Result<Outcome<DiagnoseReport>, RunError> {
    let s = &loaded.scenario;
    let st = setup::build(s)?;
    let fwd = simulate_forward(&st.sde)?;
    let (name, first, second) = pair_solutions(loaded, &st, &fwd, base_dir)?;
    let report = diagnose_pair(&st, s, &fwd, name, &first, &second)?;

    let mut a = Artifacts::new(&opts.out, &loaded.hash, opts.format, "diagnose")?;
    if !matches!(s.diagnostics.pair, PairCfg::Files { .. }) {
        a.solution("first", &first)?;
        a.solution("second", &second)?;
    }
    a.json("diagnose", &report)?;
    a.csv(
        "sweep",
        &[
            ("lambda", "constant rate of A"),
            ("mu", "weight of the Z term of A"),
            ("alpha", "exponent of the Z term of A"),
            (
                "statistical_pass",
                "1 if every step mean is above -sigmas standard errors",
            ),
            (
                "worst_margin",
                "smallest mean + sigmas * standard error over the steps",
            ),
            (
                "pos_min",
                "sample minimum of the drift of S divided by exp(A)",
            ),
            ("pass", "1 if both verdicts pass"),
        ],
        &report
            .sweep
            .iter()
            .map(|r| {
                vec![
                    r.lambda,
                    r.mu,
                    r.alpha,
                    flag(r.statistical_pass),
                    r.worst_margin,
                    r.pos_min,
                    flag(r.pass),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    a.csv(
        "increments",
        &[
            ("t", "left end of the step"),
            (
                "mean",
                "ensemble mean of the fitted conditional increment of S",
            ),
            ("std_error", "standard error of the mean"),
            ("lower", "mean - sigmas * std_error"),
            ("conditional_min", "smallest fitted conditional increment"),
        ],
        &report
            .steps
            .iter()
            .map(|s| vec![s.t, s.mean, s.std_error, s.lower, s.conditional_min])
            .collect::<Vec<_>>(),
    )?;

    let mut t = String::new();
    let _ = writeln!(
        t,
        "pair             {}{}",
        report.pair,
        if report.identical { " (identical)" } else { "" }
    );
    let _ = writeln!(t, "mean Psi         {:.4e}", report.mean_psi);
    let _ = writeln!(t, "lambda     mu       stat   worst margin   pos min");
    for r in &report.sweep {
        let _ = writeln!(
            t,
            "{:<10} {:<8} {}   {:<+13.4e}  {:+.4e}",
            r.lambda,
            r.mu,
            verdict(r.statistical_pass),
            r.worst_margin,
            r.pos_min
        );
    }
    for (i, e) in report.exp_moment.iter().enumerate() {
        let _ = writeln!(
            t,
            "E exp(mu int |Z|^2), solution {}: {:.4e} +- {:.2e}{}",
            i + 1,
            e.mean,
            e.std_error,
            if e.heavy_tail { " heavy tail" } else { "" }
        );
    }
    let _ = writeln!(t, "status           {}", report.status);
    let pass = report.pass;
    finish(a, opts, pass, report, t)
}

// ---------------------------------------------------------- geometry-selftest

/// Hash identifying a self-test run without a scenario.
pub fn selftest_hash(seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(
        format!("geometry-selftest cases={SELFTEST_CASES} samples={SELFTEST_SAMPLES} seed={seed}")
            .as_bytes(),
    );
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn geometry_selftest(
    seed: u64,
    hash: &str,
    opts: &Options,
) -> Result<Outcome<selftest::SelftestReport>, RunError> {
    let report = selftest::run(
        SELFTEST_CASES,
        SELFTEST_SAMPLES,
        sub_seed(seed, stream::SELFTEST),
    )?;
    let mut a = Artifacts::new(&opts.out, hash, opts.format, "geometry-selftest")?;
    a.json("selftest", &report)?;
    a.csv(
        "oracle",
        &[
            ("manifold", "0 sphere, 1 Poincare disc"),
            ("cases", "random cases"),
            ("max_distance_error", "closed form against the geodesic ODE"),
            (
                "max_transport_error",
                "closed form against the transport ODE, relative",
            ),
            (
                "max_isometry_defect",
                "relative change of the norm under transport",
            ),
            ("pass", "1 if within tolerance"),
        ],
        &report
            .oracle
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    i as f64,
                    r.cases as f64,
                    r.max_distance_error,
                    r.max_transport_error,
                    r.max_isometry_defect,
                    flag(r.pass),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    a.csv(
        "transport_constant",
        &[
            ("manifold", "0 euclidean, 1 sphere, 2 Poincare disc"),
            ("samples", "sample count of the first estimate"),
            ("constant", "estimate with samples"),
            ("constant_doubled", "estimate with twice the samples"),
            ("relative_change", "|doubled - first| / first"),
            ("pass", "1 if the change is below 5%"),
        ],
        &report
            .constants
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    i as f64,
                    r.samples as f64,
                    r.constant,
                    r.constant_doubled,
                    r.relative_change,
                    flag(r.pass),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    let mut t = String::new();
    for r in &report.oracle {
        let _ = writeln!(
            t,
            "{:<14} dist {:.2e}  transport {:.2e}  isometry {:.2e}  {}",
            r.manifold,
            r.max_distance_error,
            r.max_transport_error,
            r.max_isometry_defect,
            verdict(r.pass)
        );
    }
    for r in &report.constants {
        let _ = writeln!(
            t,
            "{:<14} C {:.4} -> {:.4} (change {:.2}%)  {}",
            r.manifold,
            r.constant,
            r.constant_doubled,
            100.0 * r.relative_change,
            verdict(r.pass)
        );
    }
    let pass = report.pass;
    let _ = writeln!(t, "geometry-selftest {}", verdict(pass));
    finish(a, opts, pass, report, t)
}

/// Dispatch used by the binary.
pub enum Command {
    CheckDrift,
    Solve,
    Cascade,
    Diagnose,
    GeometrySelftest,
}

/// Runs a command and returns `(pass, summary)`.
pub fn run(
    cmd: Command,
    loaded: Option<&Loaded>,
    scenario_path: Option<&Path>,
    opts: &Options,
    seed_override: Option<u64>,
) -> Result<(bool, String), RunError> {
    let need = || -> Result<&Loaded, RunError> {
        loaded.ok_or_else(|| ConfigError::Io("this command needs --scenario".into()).into())
    };
    macro_rules! out {
        ($o:expr) => {{
            let o = $o;
            Ok((o.pass, o.summary))
        }};
    }
    match cmd {
        Command::CheckDrift => out!(check_drift(need()?, opts)?),
        Command::Solve => out!(solve(need()?, opts)?),
        Command::Cascade => out!(cascade(need()?, opts)?),
        Command::Diagnose => {
            let base = scenario_path
                .and_then(Path::parent)
                .unwrap_or(Path::new("."));
            out!(diagnose(need()?, opts, base)?)
        }
        Command::GeometrySelftest => {
            let (seed, hash) = match loaded {
                Some(l) => (l.scenario.seed, l.hash.clone()),
                None => {
                    let seed = seed_override.unwrap_or(0);
                    (seed, selftest_hash(seed))
                }
            };
            out!(geometry_selftest(seed, &hash, opts)?)
        }
    }
}

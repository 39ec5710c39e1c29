//! The experiment drivers behind each subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hagedorn::basis::{BasisCoefficients, WavepacketFrame};
use hagedorn::classical::{integrate_flow, lyapunov_estimate, FlowOptions, Trajectory};
use hagedorn::grid::GridSpec;
use hagedorn::hierarchy::{integrate_hierarchy, CoefficientHierarchy, HierarchyOptions};
use hagedorn::linalg;
use hagedorn::oracle::{l2_error, write_snapshot, SplitOperator};
use hagedorn::scattering::{classical_asymptotics, smatrix_apply, AsymptoticData, IncomingState, Side};
use hagedorn::truncation::{
    assemble_wavefunction, ehrenfest_schedule, empirical_l, fixed_l, localization_mass, residual_norm,
    truncate_tail_state, EhrenfestSchedule, RunRow, TruncatedInitial, TruncationMode,
};
use hagedorn::validate::{run_invariant_suite, ValidateOptions, ValidationReport};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
const DEFAULT_RADII: [f64; 3] = [0.25, 0.5, 1.0];

#[derive(Clone, Debug)]
pub struct Outputs {
    pub dir: PathBuf,
    /// Adds wall-clock columns; outputs are then no longer reproducible.
    pub timing: bool,
    pub jobs: usize,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

fn run_dir(out: &Outputs, hbar: f64) -> PathBuf {
    out.dir.join(format!("hbar_{hbar}"))
}

fn ctx(hbar: f64, what: &str) -> String {
    format!("hbar = {hbar}, {what}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12e}")).unwrap_or_default()
}

/// Runs `f` for every hbar on a pool of `jobs` threads; results keep the
/// configured order.
fn per_hbar<T, F>(hbars: &[f64], jobs: usize, f: F) -> Result<Vec<T>, CliError>
where
    T: Send,
    F: Fn(f64) -> Result<T, CliError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Output(format!("thread pool: {e}")))?;
    pool.install(|| hbars.par_iter().map(|&h| f(h)).collect())
}

fn trajectory(cfg: &RunConfig, t_end: f64) -> Result<Trajectory, CliError> {
    integrate_flow(
        &cfg.potential,
        &cfg.initial.state,
        t_end,
        &FlowOptions::new(cfg.run.flow_tol),
    )
    .map_err(|e| CliError::numerical("classical flow", e))
}

/// Box covering the orbit plus `12 sqrt(hbar) sup ||A||`, fine enough for the
/// largest wavenumber `(|eta| + 12 sqrt(hbar) ||B||) / hbar`, with a
/// time step well inside the stability limit.
pub fn auto_grid(traj: &Trajectory, t_end: f64, hbar: f64) -> Result<GridSpec, CliError> {
    let d = traj.dim();
    if d > 2 {
        return Err(CliError::Config(ConfigError {
            field: "potential.dim".into(),
            line: None,
            message: "the reference grid supports d <= 2".into(),
        }));
    }
    let n = 400;
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let (mut sup_a, mut sup_b, mut sup_eta): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let s = traj.state_at(t_end * i as f64 / n as f64);
        for k in 0..d {
            lo[k] = lo[k].min(s.a[k]);
            hi[k] = hi[k].max(s.a[k]);
            sup_eta = sup_eta.max(s.eta[k].abs());
        }
        sup_a = sup_a.max(linalg::spectral_norm(&s.a_mat));
        sup_b = sup_b.max(linalg::spectral_norm(&s.b_mat));
    }
    let margin = 12.0 * hbar.sqrt() * sup_a;
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let half: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l) + margin).collect();
    let kmax = (sup_eta + 12.0 * hbar.sqrt() * sup_b) / hbar;
    let dx = std::f64::consts::PI / kmax;
    let widest = half.iter().cloned().fold(0.0, f64::max);
    let cap = if d == 1 { 1 << 15 } else { 1 << 10 };
    let points = ((2.0 * widest / dx).ceil() as usize).next_power_of_two().clamp(64, cap);
    let mut g = GridSpec {
        center,
        half_width: half,
        points,
        dt: 1.0,
    };
    g.dt = (0.25 / (hbar * g.max_kinetic())).min(2e-4);
    g.validated().map_err(|e| CliError::numerical(ctx(hbar, "grid sizing"), e))
}

#[derive(Clone, Copy, Debug)]
enum LChoice {
    Mode(TruncationMode),
    Fixed(usize),
}

/// One hbar: truncation order, hierarchy, assembled and reference states.
struct Simulation {
    l: usize,
    l_mode: &'static str,
    c0: BasisCoefficients,
    tail: Option<TruncatedInitial>,
    hier: CoefficientHierarchy,
    profile: Vec<f64>,
    grid: Option<GridSpec>,
    /// Assembled states at the output times (only with a grid).
    approx: Vec<Vec<Complex64>>,
    exact: Option<Vec<Vec<Complex64>>>,
}

fn initial_coefficients(cfg: &RunConfig, l: usize, hbar: f64) -> Result<(BasisCoefficients, Option<TruncatedInitial>), CliError> {
    match &cfg.initial.tail {
        None => Ok((cfg.initial.coefficients(), None)),
        Some(class) => {
            let t = truncate_tail_state(cfg.initial.state.dim(), &cfg.initial.entries, class, l)
                .map_err(|e| CliError::numerical(ctx(hbar, "tail truncation"), e))?;
            Ok((t.coeffs.clone(), Some(t)))
        }
    }
}

fn hierarchy(
    cfg: &RunConfig,
    traj: &Trajectory,
    c0: &BasisCoefficients,
    l: usize,
    times: &[f64],
    hbar: f64,
) -> Result<CoefficientHierarchy, CliError> {
    integrate_hierarchy(
        traj,
        &cfg.potential,
        c0,
        l,
        &HierarchyOptions::new(cfg.run.hierarchy_tol, times.to_vec()),
    )
    .map_err(|e| CliError::numerical(ctx(hbar, "coefficient hierarchy"), e))
}

fn simulate(
    cfg: &RunConfig,
    traj: &Trajectory,
    hbar: f64,
    choice: LChoice,
    times: &[f64],
    with_grid: bool,
) -> Result<Simulation, CliError> {
    let (l, l_mode, c0, tail, hier) = match choice {
        LChoice::Fixed(l) => {
            let (c0, tail) = initial_coefficients(cfg, l, hbar)?;
            let h = hierarchy(cfg, traj, &c0, l, times, hbar)?;
            (l, "fixed_g", c0, tail, h)
        }
        LChoice::Mode(TruncationMode::FixedG { g }) => {
            let l = fixed_l(g, hbar);
            let (c0, tail) = initial_coefficients(cfg, l, hbar)?;
            let h = hierarchy(cfg, traj, &c0, l, times, hbar)?;
            (l, "fixed_g", c0, tail, h)
        }
        LChoice::Mode(TruncationMode::Empirical) => {
            let l_max = cfg.run.l_max;
            let (c0, tail) = initial_coefficients(cfg, l_max, hbar)?;
            let trial = hierarchy(cfg, traj, &c0, l_max, times, hbar)?;
            let l = empirical_l(&trial.norm_profile(hbar))
                .map_err(|e| CliError::numerical(ctx(hbar, "empirical truncation"), e))?;
            if tail.is_some() {
                let (c0, tail) = initial_coefficients(cfg, l, hbar)?;
                let h = hierarchy(cfg, traj, &c0, l, times, hbar)?;
                (l, "empirical", c0, tail, h)
            } else {
                (l, "empirical", c0, tail, trial)
            }
        }
    };
    let profile = hier.norm_profile(hbar);
    let d = traj.dim();
    let t_end = *times.last().expect("times are non-empty");
    let grid = if with_grid && d <= 2 {
        Some(match &cfg.grid {
            Some(g) => g.clone(),
            None => auto_grid(traj, t_end, hbar)?,
        })
    } else {
        None
    };
    let mut approx = Vec::new();
    let mut exact = None;
    if let Some(g) = &grid {
        let pts = g.points();
        for snap in &hier.snapshots {
            let frame = WavepacketFrame::from_trajectory(traj, snap.t, hbar);
            approx.push(
                assemble_wavefunction(&hier, snap, &frame, l, &pts)
                    .map_err(|e| CliError::numerical(ctx(hbar, &format!("assembly at t = {}", snap.t)), e))?,
            );
        }
        if cfg.run.oracle {
            let f0 = WavepacketFrame::from_trajectory(traj, 0.0, hbar);
            let psi0: Vec<Complex64> = f0
                .synthesize(&c0, &pts)
                .map_err(|e| CliError::numerical(ctx(hbar, "initial state"), e))?
                .into_iter()
                .map(|z| z * f0.phase())
                .collect();
            let states = SplitOperator::new(g, &cfg.potential, hbar)
                .and_then(|mut op| op.propagate_to_times(&psi0, 0.0, times))
                .map_err(|e| CliError::numerical(ctx(hbar, "reference propagation"), e))?;
            exact = Some(states);
        }
    }
    Ok(Simulation {
        l,
        l_mode,
        c0,
        tail,
        hier,
        profile,
        grid,
        approx,
        exact,
    })
}

#[derive(Serialize)]
struct TailSummary {
    j_cut: usize,
    tail: f64,
    bound: f64,
    within_bound: bool,
}

impl TailSummary {
    fn from(t: &Option<TruncatedInitial>) -> Option<Self> {
        t.as_ref().map(|t| TailSummary {
            j_cut: t.j_cut,
            tail: t.tail,
            bound: t.bound,
            within_bound: t.within_bound(),
        })
    }
}

#[derive(Serialize)]
struct PropagateSummary {
    schema_version: u32,
    hbar: f64,
    l_mode: String,
    l: usize,
    norm_profile: Vec<f64>,
    initial_support: usize,
    tail_truncation: Option<TailSummary>,
    sparsity_holds: bool,
    hierarchy_steps: usize,
    grid: Option<GridSpec>,
    max_cond1_residual: f64,
    errors_vs_oracle: Vec<Option<f64>>,
}

fn clock(out: &Outputs, start: Instant) -> Option<f64> {
    out.timing.then(|| start.elapsed().as_secs_f64() * 1e3)
}

pub fn run_propagate(cfg: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    let times = cfg.run.times.clone();
    let traj = trajectory(cfg, cfg.run.t_end)?;
    write(&out.dir.join("trajectory.json"), &traj.to_json())?;
    let results = per_hbar(&cfg.run.hbars, out.jobs, |hbar| {
        let start = Instant::now();
        let sim = simulate(cfg, &traj, hbar, LChoice::Mode(cfg.run.mode), &times, true)?;
        let dir = run_dir(out, hbar);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        for (i, snap) in sim.hier.snapshots.iter().enumerate() {
            let mut row = RunRow {
                hbar,
                t: snap.t,
                l_mode: sim.l_mode.into(),
                l: sim.l,
                error_vs_oracle: None,
                residual_norm: None,
                outside_mass_b: None,
                wall_time_ms: None,
            };
            if let Some(g) = &sim.grid {
                let psi = &sim.approx[i];
                row.error_vs_oracle = sim.exact.as_ref().map(|ex| l2_error(psi, &ex[i], g).raw);
                if cfg.run.residual {
                    let frame = WavepacketFrame::from_trajectory(&traj, snap.t, hbar);
                    row.residual_norm = Some(
                        residual_norm(&sim.hier, snap, &frame, &cfg.potential, sim.l, g)
                            .map_err(|e| CliError::numerical(ctx(hbar, "residual"), e))?,
                    );
                }
                if let Some(&b) = cfg.run.radii.first() {
                    let a = traj.state_at(snap.t).a;
                    row.outside_mass_b = Some(
                        localization_mass(psi, g, &a, b)
                            .map_err(|e| CliError::numerical(ctx(hbar, "outside mass"), e))?,
                    );
                }
                write_snapshot(&dir.join(format!("psi_{i}")), g, hbar, snap.t, psi).map_err(|e| io_err(&dir, e))?;
            }
            errors.push(row.error_vs_oracle);
            rows.push(row);
        }
        let wall = clock(out, start);
        for r in rows.iter_mut() {
            r.wall_time_ms = wall;
        }
        let summary = PropagateSummary {
            schema_version: SCHEMA_VERSION,
            hbar,
            l_mode: sim.l_mode.into(),
            l: sim.l,
            norm_profile: sim.profile.clone(),
            initial_support: sim.c0.support,
            tail_truncation: TailSummary::from(&sim.tail),
            sparsity_holds: sim.hier.sparsity_holds(),
            hierarchy_steps: sim.hier.steps,
            grid: sim.grid.clone(),
            max_cond1_residual: traj.max_cond1_residual(),
            errors_vs_oracle: errors,
        };
        write(&dir.join("summary.json"), &json(&summary))?;
        write(&dir.join("hierarchy.json"), &sim.hier.to_json())?;
        Ok((rows, summary))
    })?;
    let mut csv = RunRow::csv_header();
    for (rows, _) in &results {
        for r in rows {
            csv.push_str(&r.to_csv());
        }
    }
    write(&out.dir.join("runs.csv"), &csv)?;
    let summaries: Vec<&PropagateSummary> = results.iter().map(|(_, s)| s).collect();
    write(&out.dir.join("summary.json"), &json(&summaries))?;
    for (rows, s) in &results {
        let worst = rows.iter().filter_map(|r| r.error_vs_oracle).fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
        println!(
            "hbar {:<8} l {:<3} ({}) max error vs oracle {}",
            s.hbar,
            s.l,
            s.l_mode,
            worst.map_or("n/a".into(), |e| format!("{e:.3e}"))
        );
    }
    Ok(())
}

pub const SCATTER_CSV_COLUMNS: &str = "hbar,l,unitarity_deviation,cauchy_residual,tail_bound,t_start,horizon,wall_time_ms";

pub fn run_scatter(cfg: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    let g = match cfg.run.mode {
        TruncationMode::FixedG { g } => g,
        TruncationMode::Empirical => {
            return Err(CliError::Config(ConfigError {
                field: "run.g".into(),
                line: None,
                message: "scattering runs need a fixed `g`".into(),
            }))
        }
    };
    let sc = cfg.scatter.clone().ok_or_else(|| {
        CliError::Config(ConfigError {
            field: "scatter".into(),
            line: None,
            message: "section [scatter] is required for `scatter`".into(),
        })
    })?;
    let incoming = classical_asymptotics(&cfg.potential, &cfg.initial.state, Side::Past, sc.extraction_tol)
        .map_err(|e| CliError::numerical("incoming asymptotics", e))?;
    write(&out.dir.join("incoming.json"), &json(&incoming))?;
    let reports = per_hbar(&cfg.run.hbars, out.jobs, |hbar| {
        let start = Instant::now();
        let (coeffs, tail) = initial_coefficients(cfg, fixed_l(g, hbar), hbar)?;
        let input = IncomingState {
            data: incoming.clone(),
            coeffs,
        };
        let rep = smatrix_apply(&input, &cfg.potential, hbar, g, sc.tol)
            .map_err(|e| CliError::numerical(ctx(hbar, "scattering"), e))?;
        write(&run_dir(out, hbar).join("report.json"), &(rep.to_json() + "\n"))?;
        Ok((rep, TailSummary::from(&tail), clock(out, start)))
    })?;
    let mut csv = format!("# hagedorn scattering table, csv schema v{SCHEMA_VERSION}\n{SCATTER_CSV_COLUMNS}\n");
    for (r, _, wall) in &reports {
        csv.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            r.hbar,
            r.l,
            r.unitarity_deviation,
            r.cauchy_residual,
            r.tail_bound,
            r.t_start,
            r.horizon,
            fmt_opt(*wall)
        ));
    }
    write(&out.dir.join("scatter.csv"), &csv)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        schema_version: u32,
        incoming: &'a AsymptoticData,
        outgoing: Option<&'a AsymptoticData>,
        low_dimension_caveat: bool,
        runs: Vec<RunSummary<'a>>,
    }
    #[derive(Serialize)]
    struct RunSummary<'a> {
        hbar: f64,
        l: usize,
        unitarity_deviation: f64,
        cauchy_residual: f64,
        tail_truncation: &'a Option<TailSummary>,
    }
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        incoming: &incoming,
        outgoing: reports.first().map(|(r, _, _)| &r.outgoing),
        low_dimension_caveat: cfg.potential.dim < 3,
        runs: reports
            .iter()
            .map(|(r, t, _)| RunSummary {
                hbar: r.hbar,
                l: r.l,
                unitarity_deviation: r.unitarity_deviation,
                cauchy_residual: r.cauchy_residual,
                tail_truncation: t,
            })
            .collect(),
    };
    write(&out.dir.join("summary.json"), &json(&summary))?;
    if cfg.potential.dim < 3 {
        println!("caveat: d = {} < 3, convergence of the coefficient limits is not guaranteed", cfg.potential.dim);
    }
    for (r, _, _) in &reports {
        println!(
            "hbar {:<8} l {:<3} unitarity deviation {:.3e} cauchy residual {:.1e}",
            r.hbar, r.l, r.unitarity_deviation, r.cauchy_residual
        );
    }
    Ok(())
}

pub const EHRENFEST_CSV_COLUMNS: &str =
    "hbar,t_end,lambda,kappa,window_lower,window_upper,g,l,error_vs_oracle,wall_time_ms";

pub fn run_ehrenfest(cfg: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    let es = cfg.ehrenfest.clone().ok_or_else(|| {
        CliError::Config(ConfigError {
            field: "ehrenfest".into(),
            line: None,
            message: "section [ehrenfest] is required for `ehrenfest`".into(),
        })
    })?;
    let (lambda, fit_r2) = match es.lambda {
        Some(l) => (l, None),
        None => {
            let long = trajectory(cfg, es.fit_t_end)?;
            let fit = lyapunov_estimate(&long).map_err(|e| CliError::numerical("Lyapunov fit", e))?;
            (fit.lambda, Some(fit.r_squared))
        }
    };
    let mut schedules = Vec::new();
    for &hbar in &cfg.run.hbars {
        schedules.push(
            ehrenfest_schedule(es.t_prime, lambda, es.tau, es.v, hbar, es.kappa).map_err(|e| match e {
                hagedorn::Error::EmptyWindow { .. } => CliError::Config(ConfigError {
                    field: "ehrenfest.t_prime".into(),
                    line: None,
                    message: e.to_string(),
                }),
                other => CliError::numerical(ctx(hbar, "Ehrenfest schedule"), other),
            })?,
        );
    }
    let t_max = schedules.iter().map(|s| s.t_end).fold(0.0, f64::max);
    let traj = trajectory(cfg, t_max)?;
    let rows = per_hbar(&cfg.run.hbars, out.jobs, |hbar| {
        let start = Instant::now();
        let sched: EhrenfestSchedule = *schedules.iter().find(|s| s.hbar == hbar).expect("one schedule per hbar");
        let sim = simulate(cfg, &traj, hbar, LChoice::Fixed(sched.l), &[sched.t_end], cfg.run.oracle)?;
        let err = match (&sim.grid, &sim.exact) {
            (Some(g), Some(ex)) => Some(l2_error(&sim.approx[0], &ex[0], g).raw),
            _ => None,
        };
        write(&run_dir(out, hbar).join("schedule.json"), &json(&sched))?;
        Ok((sched, err, clock(out, start)))
    })?;
    let mut csv = format!("# hagedorn Ehrenfest table, csv schema v{SCHEMA_VERSION}\n{EHRENFEST_CSV_COLUMNS}\n");
    for (s, err, wall) in &rows {
        csv.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}\n",
            s.hbar,
            s.t_end,
            s.lambda,
            s.kappa,
            s.window.0,
            s.window.1,
            s.g,
            s.l,
            fmt_opt(*err),
            fmt_opt(*wall)
        ));
    }
    write(&out.dir.join("ehrenfest.csv"), &csv)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        schema_version: u32,
        lambda: f64,
        lambda_fit_r_squared: Option<f64>,
        schedules: Vec<&'a EhrenfestSchedule>,
        errors_vs_oracle: Vec<Option<f64>>,
    }
    write(
        &out.dir.join("summary.json"),
        &json(&Summary {
            schema_version: SCHEMA_VERSION,
            lambda,
            lambda_fit_r_squared: fit_r2,
            schedules: rows.iter().map(|(s, _, _)| s).collect(),
            errors_vs_oracle: rows.iter().map(|(_, e, _)| *e).collect(),
        }),
    )?;
    let w = rows[0].0.window;
    println!("lambda {lambda:.6}, kappa window ({:.6}, {:.6})", w.0, w.1);
    for (s, err, _) in &rows {
        println!(
            "hbar {:<8} T {:.5} kappa {:.4} g {:.4e} l {:<3} error vs oracle {}",
            s.hbar,
            s.t_end,
            s.kappa,
            s.g,
            s.l,
            err.map_or("n/a".into(), |e| format!("{e:.3e}"))
        );
    }
    Ok(())
}

pub const LOCALIZE_CSV_COLUMNS: &str = "hbar,t,l,b,outside_mass_approx,outside_mass_oracle";

pub fn run_localize(cfg: &RunConfig, out: &Outputs) -> Result<(), CliError> {
    if cfg.potential.dim > 2 {
        return Err(CliError::Config(ConfigError {
            field: "potential.dim".into(),
            line: None,
            message: "localization masses need a grid, d <= 2".into(),
        }));
    }
    let radii: Vec<f64> = if cfg.run.radii.is_empty() {
        DEFAULT_RADII.to_vec()
    } else {
        cfg.run.radii.clone()
    };
    let times = cfg.run.times.clone();
    let traj = trajectory(cfg, cfg.run.t_end)?;
    let tables = per_hbar(&cfg.run.hbars, out.jobs, |hbar| {
        let sim = simulate(cfg, &traj, hbar, LChoice::Mode(cfg.run.mode), &times, true)?;
        let g = sim.grid.as_ref().expect("grid exists for d <= 2");
        let mut lines = String::new();
        for (i, snap) in sim.hier.snapshots.iter().enumerate() {
            let a = traj.state_at(snap.t).a;
            for &b in &radii {
                let m_approx = localization_mass(&sim.approx[i], g, &a, b)
                    .map_err(|e| CliError::numerical(ctx(hbar, &format!("outside mass at b = {b}")), e))?;
                let m_exact = match &sim.exact {
                    Some(ex) => Some(
                        localization_mass(&ex[i], g, &a, b)
                            .map_err(|e| CliError::numerical(ctx(hbar, &format!("outside mass at b = {b}")), e))?,
                    ),
                    None => None,
                };
                lines.push_str(&format!(
                    "{},{},{},{},{:.12e},{}\n",
                    hbar,
                    snap.t,
                    sim.l,
                    b,
                    m_approx,
                    fmt_opt(m_exact)
                ));
            }
        }
        write(&run_dir(out, hbar).join("localize.csv"), &lines)?;
        Ok(lines)
    })?;
    let mut csv = format!("# hagedorn localization table, csv schema v{SCHEMA_VERSION}\n{LOCALIZE_CSV_COLUMNS}\n");
    for t in &tables {
        csv.push_str(t);
    }
    write(&out.dir.join("localize.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

pub fn run_validate(opts: &ValidateOptions, out: Option<&Outputs>) -> Result<ValidationReport, CliError> {
    let report = run_invariant_suite(opts);
    print!("{}", report.table());
    if let Some(o) = out {
        write(&o.dir.join("validate.json"), &(report.to_json() + "\n"))?;
    }
    let failed: Vec<String> = report.failures().iter().map(|r| format!("{}::{}", r.module, r.name)).collect();
    if failed.is_empty() {
        println!("all {} invariants passed", report.results.len());
        Ok(report)
    } else {
        Err(CliError::Validation(format!(
            "{} of {} invariants failed: {}",
            failed.len(),
            report.results.len(),
            failed.join(", ")
        )))
    }
}

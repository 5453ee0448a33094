//! The five subcommands. Every output directory gets `config.toml` (resolved)
//! and `run.json` (command, config hash); reports carry no wall-clock data.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use slipctl_core::adjoint::{duality_residual, solve_adjoint};
use slipctl_core::control::{
    control_inner, fd_gradient_oracle, optimize, tracking_source, CostModel, CostParams, Termination,
};
use slipctl_core::fields::{l2_norm, BoundaryControl, VelocityField};
use slipctl_core::io::{write_gradient_extracts, write_json, write_snapshot, write_trajectory, SnapshotHeader};
use slipctl_core::lifting::{lifting_divergence, LiftingSolver};
use slipctl_core::linearized::solve_linearized;
use slipctl_core::samples::{rng, smooth_control};
use slipctl_core::state::{energy_terms, solve_state, StateProblem, StateTrajectory};
use slipctl_core::verify::{format_table, run_estimate_suite};
use slipctl_core::SlipError;

use crate::config::Loaded;
use crate::{Command, Failure};

/// Relative error bound between adjoint and finite-difference derivatives.
pub const GRAD_CHECK_TOL: f64 = 1e-6;
pub const DUALITY_TOL: f64 = 1e-9;
/// Lifted fields must be discretely divergence-free to this (relative) level.
pub const LIFT_DIVERGENCE_TOL: f64 = 1e-9;

fn solver(context: &str) -> impl Fn(SlipError) -> Failure + '_ {
    move |e| Failure::Solver(format!("{context}: {e}"))
}

fn io_err(e: impl std::fmt::Display) -> Failure {
    Failure::Solver(format!("writing outputs: {e}"))
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    version: &'a str,
}

fn prepare(loaded: &Loaded, out: &Path, command: &str) -> Result<String, Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;
    let hash = loaded.hash();
    fs::write(out.join("config.toml"), loaded.resolved_toml()).map_err(io_err)?;
    let info = RunInfo {
        command,
        config_hash: hash.clone(),
        seed: loaded.config.seed,
        version: env!("CARGO_PKG_VERSION"),
    };
    write_json(&out.join("run.json"), &info).map_err(io_err)?;
    log::info!("{command}: config hash {hash}");
    Ok(hash)
}

pub fn run(cmd: Command, loaded: &Loaded, out: &Path) -> Result<(), Failure> {
    match cmd {
        Command::Solve => solve(loaded, out),
        Command::Optimize => optimize_cmd(loaded, out),
        Command::GradCheck => grad_check(loaded, out),
        Command::Verify => verify(loaded, out),
        Command::Lift => lift(loaded, out),
    }
}

#[derive(Serialize)]
struct SolveSummary {
    config_hash: String,
    fingerprint: String,
    steps: usize,
    max_l2: f64,
    final_l2: f64,
    max_energy_imbalance: f64,
}

fn energy_csv(traj: &StateTrajectory, problem: &StateProblem) -> Result<(String, f64), Failure> {
    let terms = energy_terms(traj, problem).map_err(solver("energy balance"))?;
    let mut csv = String::from(
        "step,t,kinetic,numerical,lifting_time,dissipation,lifting_strain,friction,slip_work,boundary_flux,lifting_advection,relative_imbalance\n",
    );
    let mut worst: f64 = 0.0;
    for (i, e) in terms.iter().enumerate() {
        let k = i + 1;
        let r = e.relative_imbalance();
        worst = worst.max(r);
        csv.push_str(&format!(
            "{k},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            problem.time.time(k),
            e.kinetic,
            e.numerical,
            e.lifting_time,
            e.dissipation,
            e.lifting_strain,
            e.friction,
            e.slip_work,
            e.boundary_flux,
            e.lifting_advection,
            r
        ));
    }
    Ok((csv, worst))
}

fn solve(loaded: &Loaded, out: &Path) -> Result<(), Failure> {
    let hash = prepare(loaded, out, "solve")?;
    let problem = loaded.problem()?;
    let traj = solve_state(&problem).map_err(solver("state solve"))?;
    let grid = &problem.grid;
    write_trajectory(&out.join("trajectory"), grid, &traj, loaded.config.output.cadence, &hash).map_err(io_err)?;
    let (csv, worst) = energy_csv(&traj, &problem)?;
    fs::write(out.join("energy.csv"), csv).map_err(io_err)?;
    let summary = SolveSummary {
        config_hash: hash,
        fingerprint: traj.fingerprint.clone(),
        steps: problem.time.nt,
        max_l2: traj.max_l2(grid),
        final_l2: l2_norm(grid, &traj.y[problem.time.nt]),
        max_energy_imbalance: worst,
    };
    write_json(&out.join("summary.json"), &summary).map_err(io_err)?;
    log::info!(
        "solve: {} steps, max ‖y‖ = {:.6e}, max energy imbalance = {:.3e}",
        summary.steps,
        summary.max_l2,
        summary.max_energy_imbalance
    );
    Ok(())
}

fn cost_model(loaded: &Loaded, problem: &StateProblem, require_target: bool) -> Result<(CostModel, CostParams), Failure> {
    let y_d = match loaded.target(problem)? {
        Some(t) => t,
        None if require_target => return Err(Failure::Config("this command needs a [target] block".into())),
        None => vec![VelocityField::zeros(&problem.grid); problem.time.n_slices()],
    };
    let ctl = &loaded.config.control;
    let params = CostParams::new(y_d, ctl.lambda1, ctl.lambda2, ctl.radius, ctl.p_exponent)
        .map_err(|e| Failure::Config(format!("cost: {e}")))?;
    let model = CostModel::new(problem.clone(), params.clone()).map_err(|e| Failure::Config(format!("cost: {e}")))?;
    Ok((model, params))
}

fn optimize_cmd(loaded: &Loaded, out: &Path) -> Result<(), Failure> {
    prepare(loaded, out, "optimize")?;
    let problem = loaded.problem()?;
    let (model, params) = cost_model(loaded, &problem, true)?;
    let report = optimize(&model, &problem.controls, &loaded.config.optimizer).map_err(solver("optimizer"))?;
    let t = &report.timings;
    log::info!(
        "optimize: {:?} after {} iterations, J {:.6e} -> {:.6e}, residual {:.3e} -> {:.3e} (state+adjoint {:.2}s, line search {:.2}s, residual {:.2}s)",
        report.termination,
        report.iterations,
        report.initial_cost,
        report.final_cost,
        report.initial_residual,
        report.final_residual,
        t.state_and_adjoint,
        t.line_search,
        t.residual
    );
    write_json(&out.join("report.json"), &report).map_err(io_err)?;
    fs::write(out.join("history.csv"), report.history_csv()).map_err(io_err)?;
    write_json(&out.join("controls.json"), &report.final_controls).map_err(io_err)?;

    let final_problem = problem.with_controls(report.final_controls.clone());
    let eval = model.evaluate(&report.final_controls).map_err(solver("final state"))?;
    let source = tracking_source(&eval.trajectory, &params);
    let adj = solve_adjoint(&final_problem, &eval.trajectory, &source).map_err(solver("final adjoint"))?;
    let times: Vec<f64> = (0..problem.time.n_slices()).map(|k| problem.time.time(k)).collect();
    write_gradient_extracts(&out.join("gradient"), &problem.grid, &adj, &times).map_err(io_err)?;

    match report.termination {
        Termination::Converged => Ok(()),
        Termination::MaxIterations => Err(Failure::Budget(format!(
            "residual {:.3e} above tolerance after {} iterations",
            report.final_residual, report.iterations
        ))),
        Termination::LineSearchFailure => Err(Failure::Budget(format!(
            "line search exhausted its backtracks at iteration {} (residual {:.3e})",
            report.iterations + 1,
            report.final_residual
        ))),
    }
}

#[derive(Serialize)]
struct GradRow {
    direction: usize,
    adjoint: f64,
    finite_difference: f64,
    best_eps: f64,
    relative_error: f64,
    duality_interior: f64,
    duality_boundary: f64,
    duality_residual: f64,
}

#[derive(Serialize)]
struct GradReport {
    config_hash: String,
    rows: Vec<GradRow>,
    max_relative_error: f64,
    max_duality_residual: f64,
    relative_error_tol: f64,
    duality_tol: f64,
    pass: bool,
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn direction(loaded: &Loaded, problem: &StateProblem, i: usize) -> BoundaryControl {
    let ctl = &loaded.config.control;
    let seed = loaded.config.seed ^ 0xD1_u64.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let mut d = smooth_control(&problem.grid, &problem.time, &mut rng(seed), 1.0, ctl.p_exponent, ctl.radius);
    d.a[0].values.iter_mut().for_each(|v| *v = 0.0);
    d.b[0].values.iter_mut().for_each(|v| *v = 0.0);
    d
}

fn grad_check(loaded: &Loaded, out: &Path) -> Result<(), Failure> {
    let hash = prepare(loaded, out, "grad-check")?;
    let problem = loaded.problem()?;
    let (model, params) = cost_model(loaded, &problem, false)?;
    let c = &problem.controls;
    let ge = model.gradient(c).map_err(solver("gradient"))?;
    let eval = model.evaluate(c).map_err(solver("state solve"))?;
    let base: Arc<StateTrajectory> = eval.trajectory;
    let source = tracking_source(&base, &params);
    let mut adj = solve_adjoint(&problem, &base, &source).map_err(solver("adjoint solve"))?;
    let mut gradient = ge.gradient;
    if loaded.config.debug.corrupt_adjoint {
        log::warn!("debug.corrupt_adjoint is set: perturbing the adjoint gradient");
        gradient = gradient.scaled(1.0 + 1e-3);
        for g in adj.g_tangent.iter_mut() {
            g.values.iter_mut().for_each(|v| *v *= 1.0 + 1e-3);
        }
    }

    let mut rows = Vec::new();
    for i in 0..loaded.config.grad_check.directions {
        let d = direction(loaded, &problem, i);
        let ad = control_inner(&problem.grid, &problem.time, &gradient, &d);
        let fd = fd_gradient_oracle(&model, c, &d, &loaded.config.grad_check.eps).map_err(solver("finite differences"))?;
        let z = solve_linearized(&problem, &base, &d).map_err(solver("linearized solve"))?;
        let dual = duality_residual(&problem.grid, &problem.time, &z, &adj, &source, &d).map_err(solver("duality"))?;
        rows.push(GradRow {
            direction: i,
            adjoint: ad,
            finite_difference: fd.richardson,
            best_eps: fd.best_eps,
            relative_error: relative_error(ad, fd.richardson),
            duality_interior: dual.interior,
            duality_boundary: dual.boundary,
            duality_residual: dual.residual,
        });
    }
    let max_rel = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    let max_dual = rows.iter().map(|r| r.duality_residual).fold(0.0, f64::max);
    let pass = max_rel <= GRAD_CHECK_TOL && max_dual <= DUALITY_TOL;
    log::info!("{:>4} {:>16} {:>16} {:>10} {:>10}", "dir", "adjoint", "fd", "rel_err", "duality");
    for r in &rows {
        log::info!(
            "{:>4} {:>16.9e} {:>16.9e} {:>10.2e} {:>10.2e}",
            r.direction,
            r.adjoint,
            r.finite_difference,
            r.relative_error,
            r.duality_residual
        );
    }
    let report = GradReport {
        config_hash: hash,
        rows,
        max_relative_error: max_rel,
        max_duality_residual: max_dual,
        relative_error_tol: GRAD_CHECK_TOL,
        duality_tol: DUALITY_TOL,
        pass,
    };
    write_json(&out.join("grad_check.json"), &report).map_err(io_err)?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed: max relative error {max_rel:.3e} (≤ {GRAD_CHECK_TOL:e}), max duality residual {max_dual:.3e} (≤ {DUALITY_TOL:e})"
        )))
    }
}

fn verify(loaded: &Loaded, out: &Path) -> Result<(), Failure> {
    prepare(loaded, out, "verify")?;
    let reports = run_estimate_suite(&loaded.config.verify).map_err(solver("verify suite"))?;
    write_json(&out.join("verify.json"), &reports).map_err(io_err)?;
    print!("{}", format_table(&reports));
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!("failed checks: {}", failed.join(", "))))
    }
}

#[derive(Serialize)]
struct LiftReport {
    config_hash: String,
    slice: usize,
    t: f64,
    max_divergence: f64,
    multiplier: f64,
    grad_h_l2: f64,
    pass: bool,
}

fn lift(loaded: &Loaded, out: &Path) -> Result<(), Failure> {
    let hash = prepare(loaded, out, "lift")?;
    let grid = loaded.grid()?;
    let time = loaded.time()?;
    let k = loaded.config.lift.slice;
    let a = &loaded.raw_controls()?.a[k];
    let result = LiftingSolver::new(&grid)
        .and_then(|s| s.solve(a))
        .map_err(|e| match e.root() {
            SlipError::IncompatibleFlux { .. } => Failure::Config(e.to_string()),
            _ => Failure::Solver(format!("lifting: {e}")),
        })?;
    let t = time.time(k);
    let div = lifting_divergence(&grid, &result);
    let scale = result.grad_h.max_abs().max(1.0) / grid.hx.min(grid.hy);
    let report = LiftReport {
        config_hash: hash,
        slice: k,
        t,
        max_divergence: div,
        multiplier: result.multiplier,
        grad_h_l2: l2_norm(&grid, &result.grad_h),
        pass: div <= LIFT_DIVERGENCE_TOL * scale,
    };
    slipctl_core::io::write_velocity(&out.join("grad_h.bin"), &grid, t, &result.grad_h).map_err(io_err)?;
    let header = SnapshotHeader {
        kind: "potential".into(),
        nx: grid.nx,
        ny: grid.ny,
        lx: grid.lx,
        ly: grid.ly,
        t,
    };
    write_snapshot(&out.join("h.bin"), &header, &result.h).map_err(io_err)?;
    write_json(&out.join("lift.json"), &report).map_err(io_err)?;
    log::info!("lift: ‖∇h‖ = {:.6e}, max |div| = {:.3e}", report.grad_h_l2, div);
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!("lifted field has divergence {div:.3e}")))
    }
}

//! Tracking cost, adjoint gradient, finite-difference oracle, projection onto
//! the admissible set and the projected-gradient optimizer.
//!
//! Controls are paired in the space-time boundary product
//! `⟨c, d⟩ = Σ_{k≥1} dt Σ_e w_e (a_k a'_k + b_k b'_k)`; gradients are Riesz
//! representers in that product. Slice 0 is never varied: `a(0)` is tied to
//! the initial datum and `b(0)` does not enter the scheme.

use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::solve_adjoint;
use crate::error::{Result, SlipError};
use crate::exec::par_map;
use crate::fields::{velocity_inner, BoundaryControl, BoundaryScalar, VelocityField};
use crate::linearized::perturb;
use crate::mesh::{Grid, TimeGrid};
use crate::samples::{rng, smooth_control};
use crate::state::{solve_state_with, StateProblem, StateTrajectory, StepOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    /// `nt + 1` slices; slice 0 unused.
    pub y_d: Vec<VelocityField>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub radius: f64,
    pub p_exponent: f64,
}

impl CostParams {
    pub fn new(y_d: Vec<VelocityField>, lambda1: f64, lambda2: f64, radius: f64, p_exponent: f64) -> Result<Self> {
        let params = CostParams {
            y_d,
            lambda1,
            lambda2,
            radius,
            p_exponent,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0 && self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return Err(SlipError::InvalidArgument("penalties λ₁, λ₂ must be finite and ≥ 0".into()));
        }
        if !(self.radius > 0.0) {
            return Err(SlipError::InvalidArgument("admissible radius must be positive".into()));
        }
        if !(self.p_exponent.is_finite() && self.p_exponent > 2.0) {
            return Err(SlipError::InvalidArgument("exponent p must lie in (2, ∞)".into()));
        }
        Ok(())
    }

    pub fn check(&self, grid: &Grid, time: &TimeGrid) -> Result<()> {
        self.validate()?;
        if self.y_d.len() != time.n_slices() {
            return Err(SlipError::ShapeMismatch(format!(
                "target has {} slices, expected {}",
                self.y_d.len(),
                time.n_slices()
            )));
        }
        for (k, y) in self.y_d.iter().enumerate() {
            y.check(grid).map_err(|e| SlipError::at_slice(k, e))?;
        }
        Ok(())
    }
}

/// `⟨c, d⟩` over slices `1..=nt`.
pub fn control_inner(grid: &Grid, time: &TimeGrid, c: &BoundaryControl, d: &BoundaryControl) -> f64 {
    let mut total = 0.0;
    for k in 1..=time.nt {
        for (e, node) in grid.boundary().iter().enumerate() {
            total += time.dt * node.weight * (c.a[k].values[e] * d.a[k].values[e] + c.b[k].values[e] * d.b[k].values[e]);
        }
    }
    total
}

pub fn control_norm(grid: &Grid, time: &TimeGrid, c: &BoundaryControl) -> f64 {
    control_inner(grid, time, c, c).sqrt()
}

/// `‖a‖_{L₂(Γ_T)}` over slices `1..=nt`.
pub fn normal_control_norm(grid: &Grid, time: &TimeGrid, c: &BoundaryControl) -> f64 {
    let mut total = 0.0;
    for k in 1..=time.nt {
        for (node, a) in grid.boundary().iter().zip(&c.a[k].values) {
            total += time.dt * node.weight * a * a;
        }
    }
    total.sqrt()
}

/// `½ Σ dt ‖y − y_d‖² + Σ dt ∫_Γ (λ₁/2 a² + λ₂/2 b²)` on slices `1..=nt`.
pub fn evaluate_cost(
    grid: &Grid,
    time: &TimeGrid,
    controls: &BoundaryControl,
    trajectory: &StateTrajectory,
    params: &CostParams,
) -> Result<f64> {
    params.check(grid, time)?;
    controls.check(grid, time)?;
    if trajectory.y.len() != time.n_slices() {
        return Err(SlipError::ShapeMismatch(format!(
            "trajectory has {} slices, expected {}",
            trajectory.y.len(),
            time.n_slices()
        )));
    }
    let mut track = 0.0;
    for k in 1..=time.nt {
        let diff = trajectory.y[k].sub(&params.y_d[k]);
        track += time.dt * velocity_inner(grid, &diff.data, &diff.data);
    }
    let mut penalty = 0.0;
    for k in 1..=time.nt {
        for (e, node) in grid.boundary().iter().enumerate() {
            let (a, b) = (controls.a[k].values[e], controls.b[k].values[e]);
            penalty += time.dt * node.weight * (0.5 * params.lambda1 * a * a + 0.5 * params.lambda2 * b * b);
        }
    }
    Ok(0.5 * track + penalty)
}

/// Adjoint source `y − y_d`, slice 0 zero.
pub fn tracking_source(trajectory: &StateTrajectory, params: &CostParams) -> Vec<VelocityField> {
    trajectory
        .y
        .iter()
        .zip(&params.y_d)
        .enumerate()
        .map(|(k, (y, yd))| if k == 0 { y.scaled(0.0) } else { y.sub(yd) })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub trajectory: Arc<StateTrajectory>,
}

#[derive(Debug, Clone)]
pub struct GradientEvaluation {
    pub cost: f64,
    pub gradient: BoundaryControl,
    pub trajectory: Arc<StateTrajectory>,
}

#[derive(Default)]
struct CacheEntry {
    key: String,
    eval: Option<Evaluation>,
    gradient: Option<BoundaryControl>,
}

/// Reduced cost `c ↦ J(c, y(c))` with a single-entry cache keyed by the
/// problem fingerprint.
pub struct CostModel {
    pub problem: StateProblem,
    pub params: CostParams,
    op: Arc<StepOperator>,
    cache: Mutex<CacheEntry>,
}

impl std::fmt::Debug for CostModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostModel").field("params", &self.params).finish_non_exhaustive()
    }
}

impl CostModel {
    pub fn new(problem: StateProblem, params: CostParams) -> Result<Self> {
        params.check(&problem.grid, &problem.time)?;
        let op = Arc::new(StepOperator::new(&problem.grid, problem.viscosity)?);
        Ok(CostModel {
            problem,
            params,
            op,
            cache: Mutex::new(CacheEntry::default()),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.problem.grid
    }

    pub fn time(&self) -> &TimeGrid {
        &self.problem.time
    }

    fn solve(&self, controls: &BoundaryControl) -> Result<Evaluation> {
        let problem = self.problem.with_controls(controls.clone());
        let trajectory = solve_state_with(&self.op, &problem)?;
        let cost = evaluate_cost(&problem.grid, &problem.time, controls, &trajectory, &self.params)?;
        Ok(Evaluation {
            cost,
            trajectory: Arc::new(trajectory),
        })
    }

    /// Uncached cost; safe to call concurrently.
    pub fn cost_uncached(&self, controls: &BoundaryControl) -> Result<f64> {
        Ok(self.solve(controls)?.cost)
    }

    pub fn evaluate(&self, controls: &BoundaryControl) -> Result<Evaluation> {
        let key = self.problem.with_controls(controls.clone()).fingerprint();
        {
            let cache = self.cache.lock().expect("cost cache poisoned");
            if cache.key == key {
                if let Some(e) = &cache.eval {
                    return Ok(e.clone());
                }
            }
        }
        let eval = self.solve(controls)?;
        *self.cache.lock().expect("cost cache poisoned") = CacheEntry {
            key,
            eval: Some(eval.clone()),
            gradient: None,
        };
        Ok(eval)
    }

    pub fn gradient(&self, controls: &BoundaryControl) -> Result<GradientEvaluation> {
        let eval = self.evaluate(controls)?;
        let key = eval.trajectory.fingerprint.clone();
        {
            let cache = self.cache.lock().expect("cost cache poisoned");
            if cache.key == key {
                if let Some(g) = &cache.gradient {
                    return Ok(GradientEvaluation {
                        cost: eval.cost,
                        gradient: g.clone(),
                        trajectory: eval.trajectory,
                    });
                }
            }
        }
        let problem = self.problem.with_controls(controls.clone());
        let gradient = gradient_from_state(&problem, &eval.trajectory, &self.params)?;
        let mut cache = self.cache.lock().expect("cost cache poisoned");
        if cache.key == key {
            cache.gradient = Some(gradient.clone());
        }
        Ok(GradientEvaluation {
            cost: eval.cost,
            gradient,
            trajectory: eval.trajectory,
        })
    }
}

/// Gradient for a solved state: `(G_normal + λ₁a)` with zero slice mean, `G_tangent + λ₂b`.
pub fn gradient_from_state(
    problem: &StateProblem,
    trajectory: &StateTrajectory,
    params: &CostParams,
) -> Result<BoundaryControl> {
    let grid = &problem.grid;
    let c = &problem.controls;
    let source = tracking_source(trajectory, params);
    let adj = solve_adjoint(problem, trajectory, &source)?;
    let mut grad = BoundaryControl::zeros(grid, &problem.time, c.p_exponent, c.radius);
    for k in 1..=problem.time.nt {
        let gn = adj.g_normal(grid, k);
        let mut ga = BoundaryScalar {
            values: gn.values.iter().zip(&c.a[k].values).map(|(g, a)| g + params.lambda1 * a).collect(),
        };
        ga.remove_mean(grid);
        grad.a[k] = ga;
        grad.b[k] = BoundaryScalar {
            values: adj.g_tangent[k]
                .values
                .iter()
                .zip(&c.b[k].values)
                .map(|(g, b)| g + params.lambda2 * b)
                .collect(),
        };
    }
    Ok(grad)
}

/// Solves state and adjoint for `problem.controls` and returns the gradient.
pub fn cost_gradient(problem: &StateProblem, params: &CostParams) -> Result<BoundaryControl> {
    let model = CostModel::new(problem.clone(), params.clone())?;
    Ok(model.gradient(&problem.controls)?.gradient)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdEstimate {
    pub eps: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdReport {
    pub estimates: Vec<FdEstimate>,
    /// Extrapolated from the consecutive pair with the smallest disagreement.
    pub richardson: f64,
    pub best_eps: f64,
}

/// Central differences `(J(c+εd) − J(c−εd)) / 2ε` with Richardson extrapolation.
pub fn fd_gradient_oracle(
    model: &CostModel,
    controls: &BoundaryControl,
    direction: &BoundaryControl,
    eps_list: &[f64],
) -> Result<FdReport> {
    if eps_list.is_empty() || eps_list.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
        return Err(SlipError::InvalidArgument("ε list must be non-empty and positive".into()));
    }
    direction.check(model.grid(), model.time())?;
    let jobs: Vec<(f64, f64)> = eps_list.iter().flat_map(|&e| [(e, 1.0), (e, -1.0)]).collect();
    let costs = par_map(&jobs, |&(e, s)| model.cost_uncached(&perturb(controls, s * e, direction)));
    let costs: Vec<f64> = costs.into_iter().collect::<Result<_>>()?;
    let estimates: Vec<FdEstimate> = eps_list
        .iter()
        .enumerate()
        .map(|(i, &eps)| FdEstimate {
            eps,
            value: (costs[2 * i] - costs[2 * i + 1]) / (2.0 * eps),
        })
        .collect();
    if estimates.len() == 1 {
        return Ok(FdReport {
            richardson: estimates[0].value,
            best_eps: estimates[0].eps,
            estimates,
        });
    }
    let best = (0..estimates.len() - 1)
        .min_by(|&i, &j| {
            let di = (estimates[i].value - estimates[i + 1].value).abs();
            let dj = (estimates[j].value - estimates[j + 1].value).abs();
            di.total_cmp(&dj)
        })
        .unwrap_or(0);
    let (coarse, fine) = (&estimates[best], &estimates[best + 1]);
    let r2 = (coarse.eps / fine.eps).powi(2);
    let richardson = if (r2 - 1.0).abs() < 1e-12 {
        fine.value
    } else {
        (r2 * fine.value - coarse.value) / (r2 - 1.0)
    };
    Ok(FdReport {
        richardson,
        best_eps: fine.eps,
        estimates,
    })
}

/// Zero-mean `a` per slice, then radial scaling into `hp_norm ≤ R`.
/// Slice 0 of `a` is kept: it is fixed by the initial datum.
pub fn project_admissible(grid: &Grid, time: &TimeGrid, controls: &BoundaryControl) -> Result<BoundaryControl> {
    let mut c = controls.clone();
    for a in c.a.iter_mut().skip(1) {
        let scale = a.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if a.mean(grid).abs() > 1e-15 * scale {
            a.remove_mean(grid);
        }
    }
    let norm = c.hp_norm(grid, time)?;
    let radius = c.radius;
    if norm <= radius {
        return Ok(c);
    }
    if c.a[0].values.iter().all(|&x| x == 0.0) {
        let mut t = radius / norm;
        loop {
            let mut out = c.scaled(t);
            out.a[0] = c.a[0].clone();
            // land inside so that a second projection is the identity
            if out.hp_norm(grid, time)? <= radius {
                return Ok(out);
            }
            t *= 1.0 - 4.0 * f64::EPSILON;
        }
    }
    // fixed a(0): bisection on the scale of the free part
    let scaled = |t: f64| {
        let mut out = c.scaled(t);
        out.a[0] = c.a[0].clone();
        out
    };
    let anchor = scaled(0.0);
    if anchor.hp_norm(grid, time)? > radius {
        return Err(SlipError::InvalidArgument(
            "initial normal flux alone exceeds the admissible radius".into(),
        ));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if scaled(mid).hp_norm(grid, time)? <= radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(scaled(lo))
}

/// Random admissible controls used to probe the variational inequality.
pub fn admissible_probes(grid: &Grid, time: &TimeGrid, template: &BoundaryControl, count: usize, seed: u64) -> Result<Vec<BoundaryControl>> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut probe = smooth_control(grid, time, &mut r, 1.0, template.p_exponent, template.radius);
        probe.a[0] = template.a[0].clone();
        let norm = probe.hp_norm(grid, time)?;
        let target = r.random_range(0.0..1.0) * template.radius;
        if norm > 0.0 {
            probe = probe.scaled(target / norm);
            probe.a[0] = template.a[0].clone();
        }
        out.push(project_admissible(grid, time, &probe)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityResidual {
    pub projection: f64,
    pub probe: f64,
}

impl OptimalityResidual {
    pub fn total(&self) -> f64 {
        self.projection + self.probe
    }
}

/// `hp(c − P(c − g)) + max(0, −min_probe ⟨g, f − c⟩)`.
pub fn optimality_residual(
    grid: &Grid,
    time: &TimeGrid,
    controls: &BoundaryControl,
    gradient: &BoundaryControl,
    probes: &[BoundaryControl],
) -> Result<OptimalityResidual> {
    let stepped = project_admissible(grid, time, &controls.plus(-1.0, gradient))?;
    let projection = controls.plus(-1.0, &stepped).hp_norm(grid, time)?;
    let worst = probes
        .iter()
        .map(|f| control_inner(grid, time, gradient, &f.plus(-1.0, controls)))
        .fold(0.0, f64::min);
    Ok(OptimalityResidual {
        projection,
        probe: (-worst).max(0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    pub tol: f64,
    /// Also stop once the residual falls below `rel_tol ×` its starting value.
    pub rel_tol: f64,
    pub max_iters: usize,
    pub armijo_c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    pub initial_step: f64,
    pub probes: usize,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tol: 1e-6,
            rel_tol: 0.0,
            max_iters: 50,
            armijo_c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 30,
            initial_step: 1.0,
            probes: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub residual: f64,
    pub step: f64,
    pub backtracks: usize,
    /// Ball constraint was active after the step.
    pub projected: bool,
    /// `|J(c+Δ) − J(c) − ⟨g, Δ⟩|` for the accepted step.
    pub taylor_remainder: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub state_and_adjoint: f64,
    pub line_search: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationReport {
    pub termination: Termination,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub history: Vec<IterationRecord>,
    pub final_controls: BoundaryControl,
    /// Seconds per phase; excluded from the serialized report.
    #[serde(skip)]
    pub timings: PhaseTimings,
}

impl OptimizationReport {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iter,J,grad_norm,residual,step\n");
        for r in &self.history {
            out.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", r.iter, r.cost, r.grad_norm, r.residual, r.step));
        }
        out
    }
}

/// Projected gradient with Barzilai–Borwein trial steps and Armijo backtracking.
pub fn optimize(model: &CostModel, start: &BoundaryControl, opts: &OptimizeOptions) -> Result<OptimizationReport> {
    optimize_observed(model, start, opts, |_, _| {})
}

/// As [`optimize`], calling `observe` with every iterate (the projected start included).
pub fn optimize_observed(
    model: &CostModel,
    start: &BoundaryControl,
    opts: &OptimizeOptions,
    mut observe: impl FnMut(&IterationRecord, &BoundaryControl),
) -> Result<OptimizationReport> {
    if !(opts.shrink > 0.0 && opts.shrink < 1.0) || !(opts.initial_step > 0.0) || opts.armijo_c1 <= 0.0 {
        return Err(SlipError::InvalidArgument("invalid line-search parameters".into()));
    }
    let grid = model.grid().clone();
    let time = *model.time();
    let mut timings = PhaseTimings::default();
    let probes = admissible_probes(&grid, &time, start, opts.probes, opts.seed)?;

    let mut c = project_admissible(&grid, &time, start)?;
    let clock = Instant::now();
    let mut ge = model.gradient(&c)?;
    timings.state_and_adjoint += clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let mut residual = optimality_residual(&grid, &time, &c, &ge.gradient, &probes)?.total();
    timings.residual += clock.elapsed().as_secs_f64();

    let initial_cost = ge.cost;
    let initial_residual = residual;
    let mut history = vec![IterationRecord {
        iter: 0,
        cost: ge.cost,
        grad_norm: control_norm(&grid, &time, &ge.gradient),
        residual,
        step: 0.0,
        backtracks: 0,
        projected: false,
        taylor_remainder: 0.0,
    }];
    observe(&history[0], &c);
    let mut step = opts.initial_step;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let tol = opts.tol.max(opts.rel_tol * initial_residual);

    loop {
        if residual <= tol {
            termination = Termination::Converged;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }
        let clock = Instant::now();
        let mut accepted = None;
        let mut s = step;
        for bt in 0..=opts.max_backtracks {
            let trial = project_admissible(&grid, &time, &c.plus(-s, &ge.gradient))?;
            let delta = trial.plus(-1.0, &c);
            let slope = control_inner(&grid, &time, &ge.gradient, &delta);
            let eval = model.evaluate(&trial)?;
            if eval.cost <= ge.cost + opts.armijo_c1 * slope && eval.cost <= ge.cost {
                accepted = Some((trial, delta, slope, eval.cost, bt));
                break;
            }
            s *= opts.shrink;
        }
        timings.line_search += clock.elapsed().as_secs_f64();
        let Some((next, delta, slope, next_cost, backtracks)) = accepted else {
            termination = Termination::LineSearchFailure;
            log::warn!("line search failed at iteration {}", iterations + 1);
            break;
        };
        let clock = Instant::now();
        let next_ge = model.gradient(&next)?;
        timings.state_and_adjoint += clock.elapsed().as_secs_f64();

        let dg = next_ge.gradient.plus(-1.0, &ge.gradient);
        let sy = control_inner(&grid, &time, &delta, &dg);
        let ss = control_inner(&grid, &time, &delta, &delta);
        let yy = control_inner(&grid, &time, &dg, &dg);
        // alternate the long and short Barzilai–Borwein steps
        let bb = if iterations % 2 == 0 { ss / sy } else { sy / yy };
        step = if sy > 0.0 && ss > 0.0 {
            bb.clamp(1e-12, 1e12)
        } else {
            (2.0 * s).min(1e12)
        };
        let projected = next.hp_norm(&grid, &time)? >= next.radius * (1.0 - 1e-12);
        let taylor_remainder = (next_cost - ge.cost - slope).abs();

        c = next;
        ge = next_ge;
        iterations += 1;
        let clock = Instant::now();
        residual = optimality_residual(&grid, &time, &c, &ge.gradient, &probes)?.total();
        timings.residual += clock.elapsed().as_secs_f64();
        log::debug!("iter {iterations}: J = {:.6e}, residual = {residual:.3e}, step = {s:.3e}", ge.cost);
        history.push(IterationRecord {
            iter: iterations,
            cost: ge.cost,
            grad_norm: control_norm(&grid, &time, &ge.gradient),
            residual,
            step: s,
            backtracks,
            projected,
            taylor_remainder,
        });
        observe(history.last().expect("history is non-empty"), &c);
    }
    Ok(OptimizationReport {
        termination,
        iterations,
        initial_cost,
        final_cost: ge.cost,
        initial_residual,
        final_residual: residual,
        history,
        final_controls: c,
        timings,
    })
}

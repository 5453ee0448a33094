//! Semi-implicit Navier–Stokes stepping with Navier slip walls.
//!
//! Each step solves one saddle-point system for `X = [y, p, μ]`:
//!
//! * free velocity rows: `(M/dt) y + 2ν S y + ν F_α y + C(w) y − Gᵀ p = (M/dt) y_prev + ν N b`;
//! * wall-normal rows: `y_s = sign_s · a_s`;
//! * continuity rows: `−G y + |cell| μ = 0`;
//! * mean row: `Σ |cell| p = 0`.
//!
//! `w` is the previous velocity (Picard lag). The advection is the
//! skew-symmetrized trilinear form, so testing the momentum rows with the
//! homogenized velocity gives an algebraic energy identity.

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Result, SlipError};
use crate::fields::{
    check_flux, divergence, normal_trace, strain_inner, velocity_inner, BoundaryControl,
    BoundaryScalar, FrictionField, PressureField, VelocityField, DEFAULT_ALPHA_MIN,
};
use crate::lifting::LiftingSolver;
use crate::linalg::{inf_norm, Factored, Pattern, Triplets};
use crate::mesh::{Grid, TimeGrid};
use crate::stencil::{advection_form, apply};

pub const DIVERGENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct StateProblem {
    pub grid: Grid,
    pub time: TimeGrid,
    pub y0: VelocityField,
    pub controls: BoundaryControl,
    pub friction: FrictionField,
    pub viscosity: f64,
    pub alpha_min: f64,
}

impl StateProblem {
    pub fn new(
        grid: Grid,
        time: TimeGrid,
        y0: VelocityField,
        controls: BoundaryControl,
        friction: FrictionField,
    ) -> Self {
        StateProblem {
            grid,
            time,
            y0,
            controls,
            friction,
            viscosity: 1.0,
            alpha_min: DEFAULT_ALPHA_MIN,
        }
    }

    pub fn with_controls(&self, controls: BoundaryControl) -> Self {
        StateProblem {
            controls,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(self.viscosity.is_finite() && self.viscosity > 0.0) {
            return Err(SlipError::InvalidArgument(format!(
                "viscosity must be positive, got {}",
                self.viscosity
            )));
        }
        self.y0.check(g)?;
        self.controls.check(g, &self.time)?;
        self.controls.check_compatible(g)?;
        self.friction.check(g, &self.time, self.alpha_min)?;
        let scale = self.y0.max_abs().max(1.0);
        let div = inf_norm(&divergence(g, &self.y0));
        if div > DIVERGENCE_TOL * scale {
            return Err(SlipError::InvalidArgument(format!(
                "initial velocity is not divergence-free (max |div| = {div:.3e})"
            )));
        }
        let trace = normal_trace(g, &self.y0);
        let mismatch = trace
            .values
            .iter()
            .zip(&self.controls.a[0].values)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        if mismatch > 1e-12 * scale {
            return Err(SlipError::InvalidArgument(format!(
                "initial normal trace differs from a(0) by {mismatch:.3e}"
            )));
        }
        Ok(())
    }

    /// Content hash of everything the trajectory depends on.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in [self.grid.nx as f64, self.grid.ny as f64, self.grid.lx, self.grid.ly] {
            h.update(v.to_le_bytes());
        }
        h.update(self.time.t_final.to_le_bytes());
        h.update((self.time.nt as u64).to_le_bytes());
        h.update(self.viscosity.to_le_bytes());
        let mut feed = |xs: &[f64]| xs.iter().for_each(|x| h.update(x.to_le_bytes()));
        feed(&self.y0.data);
        for s in self.controls.a.iter().chain(&self.controls.b).chain(&self.friction.alpha) {
            feed(&s.values);
        }
        hex::encode(h.finalize())
    }
}

/// Assembly data shared by all steps on one grid with one viscosity.
pub struct StepOperator {
    pub(crate) grid: Grid,
    pub(crate) viscosity: f64,
    n: usize,
    viscous: Triplets,
    /// `N[r, e] = ν w_e T[e, r]` for free `r`, as (r, e, coef).
    slip: Vec<(usize, usize, f64)>,
    pattern: Pattern,
}

impl std::fmt::Debug for StepOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StepOperator")
            .field("size", &self.n)
            .field("viscosity", &self.viscosity)
            .finish()
    }
}

impl StepOperator {
    pub fn new(grid: &Grid, viscosity: f64) -> Result<Self> {
        let st = grid.stencils();
        let n = grid.n_velocity() + grid.n_cells() + 1;
        let cell = grid.cell_area();

        let mut viscous = Triplets::default();
        for row in st.d11.iter().chain(&st.d22) {
            outer(&mut viscous, row, row, 2.0 * viscosity * cell, &st.free);
        }
        for (k, w) in st.vertex_weight.iter().enumerate() {
            let row: Vec<(usize, f64)> = st.dyu[k]
                .iter()
                .chain(&st.dxv[k])
                .map(|&(d, c)| (d, 0.5 * c))
                .collect();
            outer(&mut viscous, &row, &row, 4.0 * viscosity * w, &st.free);
        }

        let mut slip = Vec::new();
        for (e, (node, row)) in grid.boundary().iter().zip(&st.trace).enumerate() {
            for &(r, c) in row {
                if st.free[r] {
                    slip.push((r, e, viscosity * node.weight * c));
                }
            }
        }

        let mut op = StepOperator {
            grid: grid.clone(),
            viscosity,
            n,
            viscous,
            slip,
            pattern: Pattern::new(1, &Triplets::default())?,
        };
        let w = vec![0.0; grid.n_velocity()];
        let alpha = vec![1.0; grid.n_boundary()];
        let probe = op.assemble(&w, &alpha, 1.0);
        op.pattern = Pattern::new(n, &probe)?;
        Ok(op)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Step matrix for advecting field `w`, friction `alpha`, step `dt`.
    pub fn assemble(&self, w: &[f64], alpha: &[f64], dt: f64) -> Triplets {
        let g = &self.grid;
        let st = g.stencils();
        let nvel = g.n_velocity();
        let nc = g.n_cells();
        let cell = g.cell_area();
        let mut t = Triplets::with_capacity(self.viscous.len() + 4 * st.advection.len());

        for &r in &st.free_dofs {
            t.push(r, r, st.mass[r] / dt);
        }
        for k in 0..self.viscous.len() {
            t.push(self.viscous.rows[k], self.viscous.cols[k], self.viscous.vals[k]);
        }
        for (e, (node, row)) in g.boundary().iter().zip(&st.trace).enumerate() {
            outer(&mut t, row, row, self.viscosity * node.weight * alpha[e], &st.free);
        }
        for term in &st.advection {
            t.push(term.phi as usize, term.y as usize, term.coef * w[term.w as usize]);
        }
        for node in g.boundary() {
            t.push(node.dof, node.dof, 1.0);
        }
        for (c, row) in st.div.iter().enumerate() {
            for &(d, coef) in row {
                if st.free[d] {
                    t.push(d, nvel + c, -cell * coef);
                }
                t.push(nvel + c, d, -cell * coef);
            }
            t.push(nvel + c, nvel + nc, cell);
            t.push(nvel + nc, nvel + c, cell);
        }
        t
    }

    pub fn factor(&self, w: &[f64], alpha: &[f64], dt: f64) -> Result<Factored> {
        self.pattern.factor(&self.assemble(w, alpha, dt))
    }

    /// `ν N b` on the free rows.
    pub fn slip_load(&self, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_velocity()];
        for &(r, e, c) in &self.slip {
            out[r] += c * b[e];
        }
        out
    }

    /// `(ν N)ᵀ λ` per boundary node.
    pub fn slip_load_transpose(&self, lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_boundary()];
        for &(r, e, c) in &self.slip {
            out[e] += c * lambda[r];
        }
        out
    }

    /// Full right-hand side of one state step.
    pub fn rhs(&self, y_prev: &[f64], a: &[f64], b: &[f64], dt: f64) -> Vec<f64> {
        let g = &self.grid;
        let st = g.stencils();
        let mut rhs = vec![0.0; self.n];
        let load = self.slip_load(b);
        for &r in &st.free_dofs {
            rhs[r] = st.mass[r] / dt * y_prev[r] + load[r];
        }
        for (node, &val) in g.boundary().iter().zip(a) {
            rhs[node.dof] = node.sign * val;
        }
        rhs
    }

    pub(crate) fn split(&self, x: &[f64]) -> (VelocityField, PressureField) {
        let g = &self.grid;
        let nvel = g.n_velocity();
        let y = VelocityField {
            nx: g.nx,
            ny: g.ny,
            data: x[..nvel].to_vec(),
        };
        let p = PressureField {
            values: x[nvel..nvel + g.n_cells()].to_vec(),
            mean_zero: true,
        };
        (y, p)
    }
}

/// Adds `scale · row_p · col_q` at `(p, q)` for free `p`.
fn outer(t: &mut Triplets, rows: &[(usize, f64)], cols: &[(usize, f64)], scale: f64, free: &[bool]) {
    for &(p, cp) in rows {
        if !free[p] {
            continue;
        }
        for &(q, cq) in cols {
            t.push(p, q, scale * cp * cq);
        }
    }
}

/// One implicit step: returns the new velocity and mean-zero pressure.
#[allow(clippy::too_many_arguments)]
pub fn stokes_slip_solve(
    op: &StepOperator,
    advecting: &VelocityField,
    y_prev: &VelocityField,
    a_next: &BoundaryScalar,
    b_next: &BoundaryScalar,
    alpha_next: &BoundaryScalar,
    dt: f64,
) -> Result<(VelocityField, PressureField)> {
    let g = &op.grid;
    advecting.check(g)?;
    y_prev.check(g)?;
    a_next.check(g)?;
    b_next.check(g)?;
    alpha_next.check(g)?;
    check_flux(g, &a_next.values)?;
    let fac = op.factor(&advecting.data, &alpha_next.values, dt)?;
    let x = fac.solve(&op.rhs(&y_prev.data, &a_next.values, &b_next.values, dt))?;
    Ok(op.split(&x))
}

#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub time: TimeGrid,
    /// `nt + 1` slices, `y[0]` is the initial datum.
    pub y: Vec<VelocityField>,
    /// `nt` slices; `p[k]` belongs to time level `k + 1`.
    pub p: Vec<PressureField>,
    pub fingerprint: String,
    /// Step matrices `J_1 … J_nt`, kept for the linearized and adjoint sweeps.
    pub(crate) factors: Arc<Vec<Factored>>,
    pub(crate) op: Arc<StepOperator>,
}

impl StateTrajectory {
    pub fn is_complete(&self) -> bool {
        self.y.len() == self.time.n_slices() && self.factors.len() == self.time.nt
    }

    /// `max_k ‖y_k‖`.
    pub fn max_l2(&self, grid: &Grid) -> f64 {
        self.y.iter().map(|y| crate::fields::l2_norm(grid, y)).fold(0.0, f64::max)
    }
}

pub fn solve_state(problem: &StateProblem) -> Result<StateTrajectory> {
    let op = Arc::new(StepOperator::new(&problem.grid, problem.viscosity)?);
    solve_state_with(&op, problem)
}

/// As [`solve_state`] with a prebuilt operator (grid and viscosity must match).
pub fn solve_state_with(op: &Arc<StepOperator>, problem: &StateProblem) -> Result<StateTrajectory> {
    problem.validate()?;
    if op.grid != problem.grid || op.viscosity != problem.viscosity {
        return Err(SlipError::InvalidArgument("step operator built for another problem".into()));
    }
    let time = problem.time;
    let c = &problem.controls;
    let mut y = Vec::with_capacity(time.n_slices());
    let mut p = Vec::with_capacity(time.nt);
    let mut factors = Vec::with_capacity(time.nt);
    y.push(problem.y0.clone());
    for k in 1..=time.nt {
        let step = || -> Result<(VelocityField, PressureField, Factored)> {
            let prev = &y[k - 1];
            let fac = op.factor(&prev.data, &problem.friction.alpha[k].values, time.dt)?;
            let x = fac.solve(&op.rhs(&prev.data, &c.a[k].values, &c.b[k].values, time.dt))?;
            let (yk, pk) = op.split(&x);
            Ok((yk, pk, fac))
        };
        let (yk, pk, fac) = step().map_err(|e| SlipError::at_step(k, e))?;
        y.push(yk);
        p.push(pk);
        factors.push(fac);
    }
    Ok(StateTrajectory {
        time,
        y,
        p,
        fingerprint: problem.fingerprint(),
        factors: Arc::new(factors),
        op: Arc::clone(op),
    })
}

/// Terms of the discrete energy balance of one step, in the homogenized
/// velocity `u = y − ℓ` with `ℓ` the discrete harmonic lifting of `a`.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct EnergyTerms {
    pub kinetic: f64,
    pub numerical: f64,
    pub lifting_time: f64,
    pub dissipation: f64,
    pub lifting_strain: f64,
    pub friction: f64,
    pub slip_work: f64,
    pub boundary_flux: f64,
    pub lifting_advection: f64,
}

impl EnergyTerms {
    fn all(&self) -> [f64; 9] {
        [
            self.kinetic,
            self.numerical,
            self.lifting_time,
            self.dissipation,
            self.lifting_strain,
            self.friction,
            self.slip_work,
            self.boundary_flux,
            self.lifting_advection,
        ]
    }

    pub fn imbalance(&self) -> f64 {
        self.all().iter().sum()
    }

    /// Imbalance relative to the largest term; zero when every term vanishes.
    pub fn relative_imbalance(&self) -> f64 {
        let scale = self.all().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if scale == 0.0 {
            0.0
        } else {
            self.imbalance().abs() / scale
        }
    }
}

pub fn energy_terms(trajectory: &StateTrajectory, problem: &StateProblem) -> Result<Vec<EnergyTerms>> {
    let g = &problem.grid;
    let st = g.stencils();
    let nu = problem.viscosity;
    let dt = problem.time.dt;
    let lifts = LiftingSolver::new(g)?.solve_slices(&problem.controls.a)?;
    let homog = |k: usize| trajectory.y[k].sub(&lifts[k].grad_h);
    let trace = |y: &[f64]| -> Vec<f64> { st.trace.iter().map(|r| apply(r, y)).collect() };

    let mut out = Vec::with_capacity(problem.time.nt);
    let mut u0 = homog(0);
    for k in 1..=problem.time.nt {
        let u1 = homog(k);
        let ell = &lifts[k].grad_h;
        let w = &trajectory.y[k - 1].data;
        let du = u1.sub(&u0);
        let dl = ell.sub(&lifts[k - 1].grad_h);
        let tu = trace(&u1.data);
        let tl = trace(&ell.data);
        let alpha = &problem.friction.alpha[k].values;
        let b = &problem.controls.b[k].values;
        let nodes = g.boundary();
        let mut friction = 0.0;
        let mut slip = 0.0;
        for e in 0..nodes.len() {
            friction += nu * nodes[e].weight * alpha[e] * tu[e] * tu[e];
            slip -= nu * nodes[e].weight * (b[e] - alpha[e] * tl[e]) * tu[e];
        }
        out.push(EnergyTerms {
            kinetic: (velocity_inner(g, &u1.data, &u1.data) - velocity_inner(g, &u0.data, &u0.data))
                / (2.0 * dt),
            numerical: velocity_inner(g, &du.data, &du.data) / (2.0 * dt),
            lifting_time: velocity_inner(g, &dl.data, &u1.data) / dt,
            dissipation: 2.0 * nu * strain_inner(g, &u1, &u1),
            lifting_strain: 2.0 * nu * strain_inner(g, ell, &u1),
            friction,
            slip_work: slip,
            boundary_flux: advection_form(st, w, &u1.data, &u1.data),
            lifting_advection: advection_form(st, w, &ell.data, &u1.data),
        });
        u0 = u1;
    }
    Ok(out)
}

/// Per-step relative imbalance of the discrete energy identity.
pub fn energy_identity_residual(trajectory: &StateTrajectory, problem: &StateProblem) -> Result<Vec<f64>> {
    Ok(energy_terms(trajectory, problem)?
        .iter()
        .map(EnergyTerms::relative_imbalance)
        .collect())
}

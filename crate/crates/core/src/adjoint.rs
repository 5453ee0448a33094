//! Backward sweep with the exact transpose of the linearized step.
//!
//! With `Λ_k` the multiplier of step `k`, the sweep solves
//! `J_kᵀ Λ_k = dt·M·U_k + B_{k+1}ᵀ Λ_{k+1}` from `k = nt` down to 1, where
//! `B_{k+1}` maps `z_k` into the right-hand side of step `k + 1`. The adjoint
//! velocity and pressure are `Λ/dt`, and the boundary kernels pairing with a
//! direction `(f, g)` are read off the wall-normal and slip rows.

use serde::Serialize;

use crate::error::{Result, SlipError};
use crate::fields::{
    strain_inner, velocity_inner, BoundaryControl, BoundaryScalar, FrictionField, PressureField,
    VelocityField,
};
use crate::linalg::Factored;
use crate::linearized::{check_base, LinearizedTrajectory};
use crate::mesh::{Grid, TimeGrid};
use crate::state::{StateProblem, StateTrajectory, StepOperator};
use crate::stencil::{advection_w_derivative_transpose, apply};

#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    /// `nt + 1` slices; `p[nt] = 0`, wall-normal entries zero.
    pub p: Vec<VelocityField>,
    /// `nt` slices, mean zero; `pi[k]` comes from step `k + 1`.
    pub pi: Vec<PressureField>,
    /// Flow part of the normal kernel, `G_normal = π|wall + G_flow`; slice 0 zero.
    pub g_flow: Vec<BoundaryScalar>,
    /// Tangential kernel `ν p·τ`; slice 0 zero.
    pub g_tangent: Vec<BoundaryScalar>,
    pub base: String,
}

impl AdjointTrajectory {
    /// `π` at the cell adjacent to each wall edge, for step `k ≥ 1`.
    pub fn wall_pressure(&self, grid: &Grid, k: usize) -> BoundaryScalar {
        let st = grid.stencils();
        if k == 0 {
            return BoundaryScalar::zeros(grid);
        }
        BoundaryScalar {
            values: st.boundary_cell.iter().map(|&c| self.pi[k - 1].values[c]).collect(),
        }
    }

    pub fn g_normal(&self, grid: &Grid, k: usize) -> BoundaryScalar {
        let mut out = self.wall_pressure(grid, k);
        for (o, f) in out.values.iter_mut().zip(&self.g_flow[k].values) {
            *o += f;
        }
        out
    }
}

/// `B_{k+1}ᵀ Λ_{k+1}` restricted to the velocity unknowns.
pub(crate) fn adjoint_propagate(op: &StepOperator, lambda: &[f64], y_next: &[f64], dt: f64) -> Vec<f64> {
    let st = op.grid.stencils();
    let nvel = op.grid.n_velocity();
    let mut out = advection_w_derivative_transpose(st, &lambda[..nvel], y_next);
    out.iter_mut().for_each(|v| *v = -*v);
    for &r in &st.free_dofs {
        out[r] += st.mass[r] / dt * lambda[r];
    }
    out
}

/// Pairing of `Λ` with the boundary data of a step: `(∂/∂f, ∂/∂g)` per node.
pub(crate) fn adjoint_boundary(op: &StepOperator, lambda: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let df = op.grid.boundary().iter().map(|n| n.sign * lambda[n.dof]).collect();
    (df, op.slip_load_transpose(lambda))
}

pub(crate) fn adjoint_step(fac: &Factored, op: &StepOperator, rho: &[f64]) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; op.size()];
    rhs[..rho.len()].copy_from_slice(rho);
    fac.solve_transpose(&rhs)
}

/// Backward sweep for the velocity source `U` (`nt + 1` slices, slice 0 unused).
pub fn solve_adjoint(
    problem: &StateProblem,
    base: &StateTrajectory,
    source: &[VelocityField],
) -> Result<AdjointTrajectory> {
    check_base(problem, base)?;
    let grid = &problem.grid;
    let time = problem.time;
    if source.len() != time.n_slices() {
        return Err(SlipError::ShapeMismatch(format!(
            "adjoint source has {} slices, expected {}",
            source.len(),
            time.n_slices()
        )));
    }
    for (k, u) in source.iter().enumerate().skip(1) {
        u.check(grid).map_err(|e| SlipError::at_slice(k, e))?;
    }
    let op = &base.op;
    let st = grid.stencils();
    let (nvel, nc, nt, dt) = (grid.n_velocity(), grid.n_cells(), time.nt, time.dt);

    let mut p = vec![VelocityField::zeros(grid); nt + 1];
    let mut pi = vec![PressureField::zeros(grid); nt];
    let mut g_flow = vec![BoundaryScalar::zeros(grid); nt + 1];
    let mut g_tangent = vec![BoundaryScalar::zeros(grid); nt + 1];
    let mut next: Option<Vec<f64>> = None;
    for k in (1..=nt).rev() {
        let mut rho: Vec<f64> = st.mass.iter().zip(&source[k].data).map(|(m, u)| dt * m * u).collect();
        if let Some(lam) = &next {
            let prop = adjoint_propagate(op, lam, &base.y[k + 1].data, dt);
            rho.iter_mut().zip(&prop).for_each(|(r, q)| *r += q);
        }
        let lam = adjoint_step(&base.factors[k - 1], op, &rho).map_err(|e| SlipError::at_step(k, e))?;

        let mut pk = VelocityField::from_vec(grid, lam[..nvel].iter().map(|x| x / dt).collect())?;
        for node in grid.boundary() {
            pk.data[node.dof] = 0.0;
        }
        p[k - 1] = pk;
        pi[k - 1] = PressureField {
            values: lam[nvel..nvel + nc].iter().map(|x| x / dt).collect(),
            mean_zero: true,
        };
        let (df, dg) = adjoint_boundary(op, &lam);
        for (e, node) in grid.boundary().iter().enumerate() {
            let scale = 1.0 / (node.weight * dt);
            g_flow[k].values[e] = df[e] * scale - pi[k - 1].values[st.boundary_cell[e]];
            g_tangent[k].values[e] = dg[e] * scale;
        }
        next = Some(lam);
    }
    Ok(AdjointTrajectory {
        p,
        pi,
        g_flow,
        g_tangent,
        base: base.fingerprint.clone(),
    })
}

/// Space-time pairing `Σ_k dt ⟨z_k, U_k⟩` over slices `1..=nt`.
pub fn space_time_inner(grid: &Grid, time: &TimeGrid, z: &[VelocityField], u: &[VelocityField]) -> f64 {
    (1..=time.nt)
        .map(|k| time.dt * velocity_inner(grid, &z[k].data, &u[k].data))
        .sum()
}

/// Boundary pairing `Σ_k dt ∫_Γ f·G_normal + g·G_tangent` over slices `1..=nt`.
pub fn boundary_pairing(grid: &Grid, time: &TimeGrid, adjoint: &AdjointTrajectory, dir: &BoundaryControl) -> f64 {
    let mut total = 0.0;
    for k in 1..=time.nt {
        let gn = adjoint.g_normal(grid, k);
        for (e, node) in grid.boundary().iter().enumerate() {
            total += time.dt
                * node.weight
                * (dir.a[k].values[e] * gn.values[e] + dir.b[k].values[e] * adjoint.g_tangent[k].values[e]);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DualityCheck {
    pub interior: f64,
    pub boundary: f64,
    pub residual: f64,
}

/// Relative mismatch between `∫ z·U` and the boundary pairing of `(f, g)`.
pub fn duality_residual(
    grid: &Grid,
    time: &TimeGrid,
    z: &LinearizedTrajectory,
    adjoint: &AdjointTrajectory,
    source: &[VelocityField],
    dir: &BoundaryControl,
) -> Result<DualityCheck> {
    if z.base != adjoint.base {
        return Err(SlipError::TrajectoryMismatch {
            left: z.base.clone(),
            right: adjoint.base.clone(),
        });
    }
    let interior = space_time_inner(grid, time, &z.z, source);
    let boundary = boundary_pairing(grid, time, adjoint, dir);
    let residual = (interior - boundary).abs() / (interior.abs() + boundary.abs() + f64::EPSILON);
    Ok(DualityCheck {
        interior,
        boundary,
        residual,
    })
}

/// `(max_k ‖p‖² + Σ dt (‖D(p)‖² + ‖√α p·τ‖²_Γ)) / Σ dt ‖U‖²`, zero for `U = 0`.
pub fn adjoint_energy_check(
    grid: &Grid,
    time: &TimeGrid,
    friction: &FrictionField,
    adjoint: &AdjointTrajectory,
    source: &[VelocityField],
) -> f64 {
    let rhs = space_time_inner(grid, time, source, source);
    if rhs == 0.0 {
        return 0.0;
    }
    let lhs = energy_norm(grid, time, friction, &adjoint.p, 0..time.nt);
    lhs / rhs
}

/// `max ‖v_k‖² + Σ dt (‖D(v_k)‖² + ‖√α v_k·τ‖²_Γ)` over the given slices.
pub fn energy_norm(
    grid: &Grid,
    time: &TimeGrid,
    friction: &FrictionField,
    v: &[VelocityField],
    slices: std::ops::Range<usize>,
) -> f64 {
    let st = grid.stencils();
    let mut sup: f64 = 0.0;
    let mut integral = 0.0;
    for k in slices {
        let vk = &v[k];
        sup = sup.max(velocity_inner(grid, &vk.data, &vk.data));
        let wall: f64 = grid
            .boundary()
            .iter()
            .zip(&st.trace)
            .zip(&friction.alpha[k].values)
            .map(|((n, row), a)| n.weight * a * apply(row, &vk.data).powi(2))
            .sum();
        integral += time.dt * (strain_inner(grid, vk, vk) + wall);
    }
    sup + integral
}

/// `(⟨Lξ, η⟩, ⟨ξ, Lᵀη⟩)` for step `k` of the linearized map `(z, f, g) ↦ z_k`.
pub fn transpose_pair(
    base: &StateTrajectory,
    k: usize,
    xi: (&[f64], &[f64], &[f64]),
    eta: &[f64],
) -> Result<(f64, f64)> {
    if !base.is_complete() {
        return Err(SlipError::BaseTrajectoryMissing);
    }
    if k == 0 || k > base.time.nt {
        return Err(SlipError::InvalidArgument(format!("step index {k} out of range")));
    }
    let op = &base.op;
    let dt = base.time.dt;
    let nvel = op.grid.n_velocity();
    let fac = &base.factors[k - 1];
    let y_next = &base.y[k].data;
    let (z, f, g) = xi;
    let x = crate::linearized::linearized_step(op, fac, y_next, z, f, g, dt)?;
    let forward: f64 = x[..nvel].iter().zip(eta).map(|(a, b)| a * b).sum();

    let lam = adjoint_step(fac, op, eta)?;
    let bz = adjoint_propagate(op, &lam, y_next, dt);
    let (df, dg) = adjoint_boundary(op, &lam);
    let backward: f64 = z.iter().zip(&bz).map(|(a, b)| a * b).sum::<f64>()
        + f.iter().zip(&df).map(|(a, b)| a * b).sum::<f64>()
        + g.iter().zip(&dg).map(|(a, b)| a * b).sum::<f64>();
    Ok((forward, backward))
}

//! Exact derivative of the discrete state map in a control direction `(f, g)`.
//!
//! Step `k` reuses the stored state matrix `J_k`; the Picard lag makes the
//! advecting-field derivative act on `z_{k-1}` against the stored `y_k`.
//! Slice 0 of the direction is ignored because `a(0)` is tied to `y(0)`.

use serde::Serialize;

use crate::error::{Result, SlipError};
use crate::exec::par_map;
use crate::fields::{check_flux, l2_norm, BoundaryControl, PressureField, VelocityField};
use crate::linalg::Factored;
use crate::state::{solve_state, StateProblem, StateTrajectory, StepOperator};
use crate::stencil::advection_w_derivative;

#[derive(Debug, Clone)]
pub struct LinearizedTrajectory {
    /// `nt + 1` slices, `z[0] = 0`.
    pub z: Vec<VelocityField>,
    /// `nt` slices, `pi[k]` belongs to time level `k + 1`.
    pub pi: Vec<PressureField>,
    /// Fingerprint of the base state.
    pub base: String,
}

pub(crate) fn check_base(problem: &StateProblem, base: &StateTrajectory) -> Result<()> {
    if !base.is_complete() {
        return Err(SlipError::BaseTrajectoryMissing);
    }
    let fp = problem.fingerprint();
    if fp != base.fingerprint {
        return Err(SlipError::TrajectoryMismatch {
            left: fp,
            right: base.fingerprint.clone(),
        });
    }
    Ok(())
}

/// Full right-hand side of linearized step `k`.
pub(crate) fn linearized_rhs(
    op: &StepOperator,
    y_next: &[f64],
    z_prev: &[f64],
    f: &[f64],
    g: &[f64],
    dt: f64,
) -> Vec<f64> {
    let grid = &op.grid;
    let st = grid.stencils();
    let mut rhs = vec![0.0; op.size()];
    let adv = advection_w_derivative(st, z_prev, y_next);
    let load = op.slip_load(g);
    for &r in &st.free_dofs {
        rhs[r] = st.mass[r] / dt * z_prev[r] - adv[r] + load[r];
    }
    for (node, &val) in grid.boundary().iter().zip(f) {
        rhs[node.dof] = node.sign * val;
    }
    rhs
}

pub(crate) fn linearized_step(
    op: &StepOperator,
    fac: &Factored,
    y_next: &[f64],
    z_prev: &[f64],
    f: &[f64],
    g: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    fac.solve(&linearized_rhs(op, y_next, z_prev, f, g, dt))
}

pub fn solve_linearized(
    problem: &StateProblem,
    base: &StateTrajectory,
    direction: &BoundaryControl,
) -> Result<LinearizedTrajectory> {
    check_base(problem, base)?;
    let grid = &problem.grid;
    direction.check(grid, &problem.time)?;
    for k in 1..direction.n_slices() {
        check_flux(grid, &direction.a[k].values).map_err(|e| SlipError::at_slice(k, e))?;
    }
    let op = &base.op;
    let dt = problem.time.dt;
    let mut z = vec![VelocityField::zeros(grid)];
    let mut pi = Vec::with_capacity(problem.time.nt);
    for k in 1..=problem.time.nt {
        let x = linearized_step(
            op,
            &base.factors[k - 1],
            &base.y[k].data,
            &z[k - 1].data,
            &direction.a[k].values,
            &direction.b[k].values,
            dt,
        )
        .map_err(|e| SlipError::at_step(k, e))?;
        let (zk, pk) = op.split(&x);
        z.push(zk);
        pi.push(pk);
    }
    Ok(LinearizedTrajectory {
        z,
        pi,
        base: base.fingerprint.clone(),
    })
}

/// Perturbed controls `c + ε d` with `a(0)` held fixed.
pub fn perturb(controls: &BoundaryControl, eps: f64, dir: &BoundaryControl) -> BoundaryControl {
    let mut out = controls.plus(eps, dir);
    out.a[0] = controls.a[0].clone();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateauxRow {
    pub eps: f64,
    /// `max_k ‖(y_ε − y)/ε − z‖`.
    pub discrepancy: f64,
}

/// Compares finite-amplitude re-solves against the linearized trajectory.
pub fn gateaux_discrepancy(
    problem: &StateProblem,
    base: &StateTrajectory,
    direction: &BoundaryControl,
    eps_list: &[f64],
) -> Result<Vec<GateauxRow>> {
    if eps_list.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
        return Err(SlipError::InvalidArgument("ε values must be positive".into()));
    }
    let lin = solve_linearized(problem, base, direction)?;
    let grid = &problem.grid;
    par_map(eps_list, |&eps| -> Result<GateauxRow> {
        let pert = solve_state(&problem.with_controls(perturb(&problem.controls, eps, direction)))?;
        let discrepancy = (0..pert.y.len())
            .map(|k| {
                let mut d = pert.y[k].sub(&base.y[k]).scaled(1.0 / eps);
                d.axpy(-1.0, &lin.z[k]);
                l2_norm(grid, &d)
            })
            .fold(0.0, f64::max);
        Ok(GateauxRow { eps, discrepancy })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{divergence, normal_trace, BoundaryScalar, FrictionField};
    use crate::mesh::{Grid, TimeGrid};
    use crate::samples::{rng, smooth_control};
    use crate::state::stokes_slip_solve;

    fn problem(n: usize, nt: usize, seed: u64) -> StateProblem {
        let g = Grid::new(n, n, 1.0, 1.0).unwrap();
        let t = TimeGrid::new(0.5, nt).unwrap();
        let c = smooth_control(&g, &t, &mut rng(seed), 0.5, 3.0, 100.0);
        StateProblem::new(g.clone(), t, VelocityField::zeros(&g), c, FrictionField::constant(&g, &t, 1.0))
    }

    #[test]
    fn null_direction_gives_null_response() {
        let pb = problem(6, 3, 1);
        let base = solve_state(&pb).unwrap();
        let zero = BoundaryControl::zeros(&pb.grid, &pb.time, 3.0, 1.0);
        let lin = solve_linearized(&pb, &base, &zero).unwrap();
        assert!(lin.z.iter().all(|z| z.max_abs() == 0.0));
    }

    #[test]
    fn response_is_linear_and_admissible() {
        let pb = problem(6, 3, 2);
        let base = solve_state(&pb).unwrap();
        let d1 = smooth_control(&pb.grid, &pb.time, &mut rng(5), 1.0, 3.0, 1.0);
        let d2 = smooth_control(&pb.grid, &pb.time, &mut rng(6), 1.0, 3.0, 1.0);
        let z1 = solve_linearized(&pb, &base, &d1).unwrap();
        let z2 = solve_linearized(&pb, &base, &d2).unwrap();
        let comb = d1.scaled(2.0).plus(-3.0, &d2);
        let z12 = solve_linearized(&pb, &base, &comb).unwrap();
        for k in 0..z1.z.len() {
            let mut e = z1.z[k].scaled(2.0);
            e.axpy(-3.0, &z2.z[k]);
            let scale = l2_norm(&pb.grid, &e).max(1e-300);
            assert!(l2_norm(&pb.grid, &z12.z[k].sub(&e)) <= 1e-10 * scale.max(1.0));
            assert!(divergence(&pb.grid, &z1.z[k]).iter().all(|d| d.abs() < 1e-9));
            let tr = normal_trace(&pb.grid, &z1.z[k]);
            if k > 0 {
                assert_eq!(tr.values, d1.a[k].values);
            }
        }
    }

    #[test]
    fn matches_stokes_step_around_rest() {
        let g = Grid::new(6, 6, 1.0, 1.0).unwrap();
        let t = TimeGrid::new(0.2, 2).unwrap();
        let pb = StateProblem::new(
            g.clone(),
            t,
            VelocityField::zeros(&g),
            BoundaryControl::zeros(&g, &t, 3.0, 1.0),
            FrictionField::constant(&g, &t, 1.0),
        );
        let base = solve_state(&pb).unwrap();
        let mut dir = BoundaryControl::zeros(&g, &t, 3.0, 1.0);
        for k in 1..=2 {
            dir.b[k] = BoundaryScalar::from_fn(&g, |n| (n.s * k as f64).sin());
        }
        let lin = solve_linearized(&pb, &base, &dir).unwrap();
        let mut y = VelocityField::zeros(&g);
        for k in 1..=2 {
            let (yk, _) = stokes_slip_solve(
                &base.op,
                &VelocityField::zeros(&g),
                &y,
                &dir.a[k],
                &dir.b[k],
                &pb.friction.alpha[k],
                t.dt,
            )
            .unwrap();
            assert!(l2_norm(&g, &yk.sub(&lin.z[k])) <= 1e-10 * l2_norm(&g, &yk));
            y = yk;
        }
    }

    #[test]
    fn discrepancy_is_first_order_with_quadratic_direction_scaling() {
        let pb = problem(6, 4, 7);
        let base = solve_state(&pb).unwrap();
        let dir = smooth_control(&pb.grid, &pb.time, &mut rng(8), 1.0, 3.0, 100.0);
        let eps = [1e-1, 1e-2, 1e-3];
        let rows = gateaux_discrepancy(&pb, &base, &dir, &eps).unwrap();
        assert!(rows.windows(2).all(|w| w[1].discrepancy < w[0].discrepancy));
        let r: Vec<f64> = rows.iter().map(|row| row.discrepancy / row.eps).collect();
        assert!(r.iter().all(|x| x.is_finite()) && r[0] / r[2] < 2.0 && r[2] / r[0] < 2.0, "{r:?}");
        let doubled = gateaux_discrepancy(&pb, &base, &dir.scaled(2.0), &[1e-3]).unwrap();
        let factor = doubled[0].discrepancy / rows[2].discrepancy;
        assert!((factor - 4.0).abs() < 0.05, "{factor}");
        let zero = BoundaryControl::zeros(&pb.grid, &pb.time, 3.0, 1.0);
        let z = gateaux_discrepancy(&pb, &base, &zero, &eps).unwrap();
        assert!(z.iter().all(|row| row.discrepancy == 0.0));
    }

    #[test]
    fn mismatched_base_is_rejected() {
        let pb = problem(6, 2, 3);
        let base = solve_state(&pb).unwrap();
        let other = problem(6, 2, 4);
        let dir = BoundaryControl::zeros(&pb.grid, &pb.time, 3.0, 1.0);
        assert!(matches!(
            solve_linearized(&other, &base, &dir),
            Err(SlipError::TrajectoryMismatch { .. })
        ));
    }
}

//! Harmonic lifting of normal boundary data: `−Δh = 0`, `∂h/∂n = a`.
//!
//! Cell-centered five-point Laplacian in flux form. The Neumann data enter
//! boundary cells as prescribed face fluxes, and the nullspace is removed by a
//! bordered multiplier enforcing zero mean. The multiplier vanishes for
//! compatible data.

use crate::error::{Result, SlipError};
use crate::exec::par_map;
use crate::fields::{check_flux, divergence, set_normal_trace, BoundaryScalar, VelocityField};
use crate::linalg::{Factored, Pattern, Triplets};
use crate::mesh::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct LiftingResult {
    /// Cell-centered potential, mean zero.
    pub h: Vec<f64>,
    pub grad_h: VelocityField,
    /// Bordering multiplier; zero up to round-off for compatible data.
    pub multiplier: f64,
}

/// Factorized Neumann operator for one grid.
pub struct LiftingSolver {
    grid: Grid,
    factored: Factored,
}

impl LiftingSolver {
    pub fn new(grid: &Grid) -> Result<Self> {
        let (nx, ny, hx, hy) = (grid.nx, grid.ny, grid.hx, grid.hy);
        let nc = grid.n_cells();
        let mut t = Triplets::with_capacity(5 * nc + 2 * nc);
        for j in 0..ny {
            for i in 0..nx {
                let c = grid.cell_index(i, j);
                let mut link = |d: usize, k: f64| {
                    t.push(c, d, k);
                    t.push(c, c, -k);
                };
                if i > 0 {
                    link(grid.cell_index(i - 1, j), hy / hx);
                }
                if i + 1 < nx {
                    link(grid.cell_index(i + 1, j), hy / hx);
                }
                if j > 0 {
                    link(grid.cell_index(i, j - 1), hx / hy);
                }
                if j + 1 < ny {
                    link(grid.cell_index(i, j + 1), hx / hy);
                }
                t.push(c, nc, grid.cell_area());
                t.push(nc, c, grid.cell_area());
            }
        }
        let pattern = Pattern::new(nc + 1, &t)?;
        let factored = pattern.factor(&t)?;
        Ok(LiftingSolver {
            grid: grid.clone(),
            factored,
        })
    }

    pub fn solve(&self, a: &BoundaryScalar) -> Result<LiftingResult> {
        let grid = &self.grid;
        a.check(grid)?;
        check_flux(grid, &a.values)?;
        let nc = grid.n_cells();
        let st = grid.stencils();
        let mut rhs = vec![0.0; nc + 1];
        for ((node, &val), &cell) in grid.boundary().iter().zip(&a.values).zip(&st.boundary_cell) {
            rhs[cell] -= val * node.weight;
        }
        let sol = self.factored.solve(&rhs)?;
        let h = sol[..nc].to_vec();
        let mut grad_h = crate::fields::discrete_gradient(grid, &h);
        set_normal_trace(grid, &mut grad_h, a);
        Ok(LiftingResult {
            h,
            grad_h,
            multiplier: sol[nc],
        })
    }

    /// Slice-wise lifting of time-indexed data; the factorization is shared.
    pub fn solve_slices(&self, a: &[BoundaryScalar]) -> Result<Vec<LiftingResult>> {
        par_map(a, |s| self.solve(s))
            .into_iter()
            .enumerate()
            .map(|(k, r)| r.map_err(|e| SlipError::at_slice(k, e)))
            .collect()
    }
}

pub fn solve_neumann_lifting(a: &BoundaryScalar, grid: &Grid) -> Result<LiftingResult> {
    LiftingSolver::new(grid)?.solve(a)
}

pub fn time_lifting(a: &[BoundaryScalar], grid: &Grid) -> Result<Vec<LiftingResult>> {
    LiftingSolver::new(grid)?.solve_slices(a)
}

/// Max cell divergence of the lifted field.
pub fn lifting_divergence(grid: &Grid, result: &LiftingResult) -> f64 {
    divergence(grid, &result.grad_h).iter().fold(0.0, |m, d| m.max(d.abs()))
}

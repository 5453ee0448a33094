//! Rectangular domain, MAC staggered grid and boundary loop.
//!
//! Unknown layout on an `nx × ny` cell grid:
//!
//! * `u(i, j)` at `(i·hx, (j+½)·hy)`, `i ∈ 0..=nx`, `j ∈ 0..ny`;
//! * `v(i, j)` at `((i+½)·hx, j·hy)`, `i ∈ 0..nx`, `j ∈ 0..=ny`;
//! * cell scalars at `((i+½)·hx, (j+½)·hy)`.
//!
//! A velocity vector stores all `u` values first (row-major in `j`) followed by
//! all `v` values. The wall-normal velocities (`u` on the left/right walls, `v`
//! on the bottom/top walls) coincide with the boundary edge midpoints, which
//! form the boundary loop used for every boundary scalar (`a`, `b`, `α`).
//! The loop runs counterclockwise from the bottom-left corner, so the tangent
//! is the outward normal rotated by +90°.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipError};
use crate::stencil::Stencils;

pub const MIN_CELLS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wall {
    Bottom,
    Right,
    Top,
    Left,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Bottom, Wall::Right, Wall::Top, Wall::Left];

    pub fn normal(self) -> [f64; 2] {
        match self {
            Wall::Bottom => [0.0, -1.0],
            Wall::Right => [1.0, 0.0],
            Wall::Top => [0.0, 1.0],
            Wall::Left => [-1.0, 0.0],
        }
    }

    /// Normal rotated counterclockwise by 90°.
    pub fn tangent(self) -> [f64; 2] {
        let [nx, ny] = self.normal();
        [-ny, nx]
    }
}

/// One boundary edge midpoint of the loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryNode {
    pub wall: Wall,
    /// Edge index along the wall in increasing coordinate order (`i` for
    /// bottom/top, `j` for left/right).
    pub edge: usize,
    pub x: f64,
    pub y: f64,
    /// Arc length from the bottom-left corner, counterclockwise.
    pub s: f64,
    /// Edge length (quadrature weight).
    pub weight: f64,
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    /// Velocity unknown sitting on this edge midpoint.
    pub dof: usize,
    /// `y·n = sign · y[dof]`.
    pub sign: f64,
    /// First or last edge of its wall, i.e. touching a corner.
    pub corner_adjacent: bool,
}

#[derive(Debug, Clone)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub hx: f64,
    pub hy: f64,
    boundary: Vec<BoundaryNode>,
    stencils: Arc<Stencils>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(SlipError::InvalidGrid(format!(
                "cell counts must be at least {MIN_CELLS}, got {nx}×{ny}"
            )));
        }
        if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
            return Err(SlipError::InvalidGrid(format!(
                "domain lengths must be positive and finite, got {lx}×{ly}"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let nu = (nx + 1) * ny;
        let u_idx = |i: usize, j: usize| j * (nx + 1) + i;
        let v_idx = |i: usize, j: usize| nu + j * nx + i;

        let mut boundary = Vec::with_capacity(2 * (nx + ny));
        let mut s = 0.0;
        let mut push = |wall: Wall, edge: usize, x: f64, y: f64, weight: f64, dof: usize, count: usize| {
            let normal = wall.normal();
            let sign = normal[0] + normal[1];
            boundary.push(BoundaryNode {
                wall,
                edge,
                x,
                y,
                s: s + 0.5 * weight,
                weight,
                normal,
                tangent: wall.tangent(),
                dof,
                sign,
                corner_adjacent: edge == 0 || edge + 1 == count,
            });
            s += weight;
        };
        for i in 0..nx {
            push(Wall::Bottom, i, (i as f64 + 0.5) * hx, 0.0, hx, v_idx(i, 0), nx);
        }
        for j in 0..ny {
            push(Wall::Right, j, lx, (j as f64 + 0.5) * hy, hy, u_idx(nx, j), ny);
        }
        for i in (0..nx).rev() {
            push(Wall::Top, i, (i as f64 + 0.5) * hx, ly, hx, v_idx(i, ny), nx);
        }
        for j in (0..ny).rev() {
            push(Wall::Left, j, 0.0, (j as f64 + 0.5) * hy, hy, u_idx(0, j), ny);
        }

        let mut grid = Grid {
            nx,
            ny,
            lx,
            ly,
            hx,
            hy,
            boundary,
            stencils: Arc::new(Stencils::default()),
        };
        grid.stencils = Arc::new(Stencils::build(&grid));
        Ok(grid)
    }

    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.lx + self.ly)
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub(crate) fn stencils(&self) -> &Stencils {
        &self.stencils
    }

    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn n_velocity(&self) -> usize {
        self.n_u() + self.n_v()
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_vertices(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    #[inline]
    pub fn u_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j < self.ny);
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn v_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j <= self.ny);
        self.n_u() + j * self.nx + i
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn u_position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx, (j as f64 + 0.5) * self.hy)
    }

    pub fn v_position(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx, j as f64 * self.hy)
    }

    /// Position of velocity unknown `dof` and whether it is a `u` (x-component).
    pub fn velocity_position(&self, dof: usize) -> ((f64, f64), bool) {
        let nu = self.n_u();
        if dof < nu {
            let (i, j) = (dof % (self.nx + 1), dof / (self.nx + 1));
            (self.u_position(i, j), true)
        } else {
            let k = dof - nu;
            let (i, j) = (k % self.nx, k / self.nx);
            (self.v_position(i, j), false)
        }
    }

    /// True for wall-normal velocity unknowns, which carry the prescribed flux.
    pub fn is_boundary_dof(&self, dof: usize) -> bool {
        let nu = self.n_u();
        if dof < nu {
            let i = dof % (self.nx + 1);
            i == 0 || i == self.nx
        } else {
            let j = (dof - nu) / self.nx;
            j == 0 || j == self.ny
        }
    }

    /// Cells touching two walls.
    pub fn corner_cells(&self) -> [(usize, usize); 4] {
        [
            (0, 0),
            (self.nx - 1, 0),
            (self.nx - 1, self.ny - 1),
            (0, self.ny - 1),
        ]
    }

    /// Boundary loop traversed clockwise: reversed order, tangents negated.
    pub fn reversed_boundary(&self) -> Vec<BoundaryNode> {
        let perimeter = self.perimeter();
        self.boundary
            .iter()
            .rev()
            .map(|node| {
                let mut node = node.clone();
                node.tangent = [-node.tangent[0], -node.tangent[1]];
                node.s = perimeter - node.s;
                node
            })
            .collect()
    }

    /// Midpoint-rule boundary integral of samples in loop order.
    pub fn integrate_boundary(&self, values: &[f64]) -> Result<f64> {
        integrate_over_nodes(&self.boundary, values)
    }

    /// Midpoint-rule interior integral of cell-centered samples.
    pub fn integrate_interior(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.n_cells() {
            return Err(SlipError::ShapeMismatch(format!(
                "expected {} cell values, got {}",
                self.n_cells(),
                values.len()
            )));
        }
        Ok(values.iter().sum::<f64>() * self.cell_area())
    }
}

/// Boundary quadrature over an arbitrary node list (either orientation).
pub fn integrate_over_nodes(nodes: &[BoundaryNode], values: &[f64]) -> Result<f64> {
    if values.len() != nodes.len() {
        return Err(SlipError::ShapeMismatch(format!(
            "expected {} boundary values, got {}",
            nodes.len(),
            values.len()
        )));
    }
    Ok(nodes.iter().zip(values).map(|(n, v)| n.weight * v).sum())
}

/// Uniform partition of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub nt: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, nt: usize) -> Result<Self> {
        if nt < 1 {
            return Err(SlipError::InvalidArgument("time grid needs nt ≥ 1".into()));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(SlipError::InvalidArgument(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        Ok(TimeGrid {
            t_final,
            nt,
            dt: t_final / nt as f64,
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn n_slices(&self) -> usize {
        self.nt + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_loop_length() {
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        assert_eq!(g.hx, 0.25);
        assert_eq!(g.hy, 0.25);
        assert_eq!(g.n_boundary(), 16);
        let g = Grid::new(8, 4, 2.0, 1.0).unwrap();
        assert_eq!((g.hx, g.hy), (0.25, 0.25));
        let total: f64 = g.boundary().iter().map(|n| n.weight).sum();
        assert!((total - 6.0).abs() < 1e-14);
        assert!((g.perimeter() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn right_wall_frame() {
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let node = g.boundary().iter().find(|n| n.wall == Wall::Right).unwrap();
        assert_eq!(node.normal, [1.0, 0.0]);
        assert_eq!(node.tangent, [0.0, 1.0]);
    }

    #[test]
    fn frames_are_orthonormal_and_right_handed() {
        let g = Grid::new(5, 7, 1.3, 0.7).unwrap();
        for n in g.boundary() {
            let [nx, ny] = n.normal;
            let [tx, ty] = n.tangent;
            assert!(((nx * nx + ny * ny) - 1.0).abs() < 1e-15);
            assert!(((tx * tx + ty * ty) - 1.0).abs() < 1e-15);
            assert_eq!(nx * tx + ny * ty, 0.0);
            // rotating n by +90° gives τ
            assert_eq!([-ny, nx], [tx, ty]);
        }
    }

    #[test]
    fn arc_length_is_monotone_and_closed() {
        let g = Grid::new(6, 4, 1.5, 1.0).unwrap();
        let s: Vec<f64> = g.boundary().iter().map(|n| n.s).collect();
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        let last = g.boundary().last().unwrap();
        assert!((last.s + 0.5 * last.weight - g.perimeter()).abs() < 1e-12);
    }

    #[test]
    fn boundary_dofs_match_loop() {
        let g = Grid::new(4, 5, 1.0, 1.0).unwrap();
        let mut count = 0;
        for dof in 0..g.n_velocity() {
            if g.is_boundary_dof(dof) {
                count += 1;
                assert!(g.boundary().iter().any(|n| n.dof == dof));
            }
        }
        assert_eq!(count, g.n_boundary());
        for n in g.boundary() {
            let ((x, y), _) = g.velocity_position(n.dof);
            assert!((x - n.x).abs() < 1e-14 && (y - n.y).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(Grid::new(3, 4, 1.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 0.0, 1.0).is_err());
        assert!(Grid::new(4, 4, 1.0, -1.0).is_err());
        assert!(Grid::new(4, 4, f64::NAN, 1.0).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
    }

    #[test]
    fn boundary_integrals() {
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        let ones = vec![1.0; g.n_boundary()];
        assert!((g.integrate_boundary(&ones).unwrap() - 4.0).abs() < 1e-14);
        assert_eq!(g.integrate_boundary(&vec![0.0; 16]).unwrap(), 0.0);
        // +1 on the right wall, -1 on the left wall: each contributes ±1·Ly
        let f: Vec<f64> = g
            .boundary()
            .iter()
            .map(|n| match n.wall {
                Wall::Right => 1.0,
                Wall::Left => -1.0,
                _ => 0.0,
            })
            .collect();
        assert_eq!(g.integrate_boundary(&f).unwrap(), 0.0);
        assert!(g.integrate_boundary(&[1.0; 3]).is_err());
    }

    #[test]
    fn interior_integrals() {
        let g = Grid::new(4, 4, 1.0, 1.0).unwrap();
        assert!((g.integrate_interior(&vec![1.0; 16]).unwrap() - 1.0).abs() < 1e-15);
        let g2 = Grid::new(6, 4, 1.5, 2.0).unwrap();
        let c = 2.5;
        assert!((g2.integrate_interior(&vec![c; 24]).unwrap() - c * 3.0).abs() < 1e-13);
        // f = x at cell centers; midpoint rule is exact for linears: ∫x = 1/2
        let f: Vec<f64> = (0..16).map(|k| g.cell_center(k % 4, k / 4).0).collect();
        assert!((g.integrate_interior(&f).unwrap() - 0.5).abs() < 1e-15);
        assert!(g.integrate_interior(&[0.0; 5]).is_err());
    }

    #[test]
    fn reversed_loop_preserves_integrals() {
        let g = Grid::new(5, 4, 1.0, 0.8).unwrap();
        let f: Vec<f64> = g.boundary().iter().map(|n| (n.x * 3.0).sin() + n.y * n.y).collect();
        let rev = g.reversed_boundary();
        let f_rev: Vec<f64> = f.iter().rev().copied().collect();
        let a = g.integrate_boundary(&f).unwrap();
        let b = integrate_over_nodes(&rev, &f_rev).unwrap();
        assert!((a - b).abs() < 1e-14);
        for (n, r) in g.boundary().iter().rev().zip(&rev) {
            assert_eq!(r.tangent, [-n.tangent[0], -n.tangent[1]]);
        }
    }
}

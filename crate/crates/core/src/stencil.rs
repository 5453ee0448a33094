//! Precomputed sparse rows shared by the field operators and the solvers.
//!
//! Every row is a list of `(velocity dof, coefficient)` pairs. Wall-normal
//! derivatives at the boundary are one-sided and exact for linear profiles.
//! Vertex values of the wall-parallel velocity are linearly extrapolated from
//! the first two interior rows; with that choice the trace and the one-sided
//! strain satisfy a discrete summation-by-parts identity.

use crate::mesh::{Grid, Wall};

pub(crate) type Row = Vec<(usize, f64)>;

/// One term `coef · w[w] · y[y] · φ[phi]` of the advection trilinear form.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AdvTerm {
    pub coef: f64,
    pub w: u32,
    pub y: u32,
    pub phi: u32,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Stencils {
    pub n_u: usize,
    pub mass: Vec<f64>,
    pub free: Vec<bool>,
    pub free_dofs: Vec<usize>,
    /// Per cell.
    pub d11: Vec<Row>,
    pub d22: Vec<Row>,
    pub div: Vec<Row>,
    /// Per vertex.
    pub dyu: Vec<Row>,
    pub dxv: Vec<Row>,
    pub vertex_weight: Vec<f64>,
    /// Per boundary node, already dotted with τ.
    pub trace: Vec<Row>,
    /// Cell adjacent to each boundary node.
    pub boundary_cell: Vec<usize>,
    /// Skew-symmetrized advection restricted to free test functions.
    pub advection: Vec<AdvTerm>,
}

impl Stencils {
    pub(crate) fn build(grid: &Grid) -> Self {
        let (nx, ny, hx, hy) = (grid.nx, grid.ny, grid.hx, grid.hy);
        let u = |i: usize, j: usize| grid.u_index(i, j);
        let v = |i: usize, j: usize| grid.v_index(i, j);
        let n_vel = grid.n_velocity();

        let free: Vec<bool> = (0..n_vel).map(|d| !grid.is_boundary_dof(d)).collect();
        let free_dofs = (0..n_vel).filter(|&d| free[d]).collect();
        let mass = free
            .iter()
            .map(|&f| if f { hx * hy } else { 0.5 * hx * hy })
            .collect();

        let mut d11 = Vec::with_capacity(grid.n_cells());
        let mut d22 = Vec::with_capacity(grid.n_cells());
        let mut div = Vec::with_capacity(grid.n_cells());
        for j in 0..ny {
            for i in 0..nx {
                let a = vec![(u(i + 1, j), 1.0 / hx), (u(i, j), -1.0 / hx)];
                let b = vec![(v(i, j + 1), 1.0 / hy), (v(i, j), -1.0 / hy)];
                div.push(a.iter().chain(&b).copied().collect());
                d11.push(a);
                d22.push(b);
            }
        }

        let mut dyu = Vec::with_capacity(grid.n_vertices());
        let mut dxv = Vec::with_capacity(grid.n_vertices());
        let mut vertex_weight = Vec::with_capacity(grid.n_vertices());
        for j in 0..=ny {
            for i in 0..=nx {
                let (jl, jh) = if j == 0 {
                    (0, 1)
                } else if j == ny {
                    (ny - 2, ny - 1)
                } else {
                    (j - 1, j)
                };
                dyu.push(vec![(u(i, jh), 1.0 / hy), (u(i, jl), -1.0 / hy)]);
                let (il, ih) = if i == 0 {
                    (0, 1)
                } else if i == nx {
                    (nx - 2, nx - 1)
                } else {
                    (i - 1, i)
                };
                dxv.push(vec![(v(ih, j), 1.0 / hx), (v(il, j), -1.0 / hx)]);
                let mut w = hx * hy;
                if i == 0 || i == nx {
                    w *= 0.5;
                }
                if j == 0 || j == ny {
                    w *= 0.5;
                }
                vertex_weight.push(w);
            }
        }

        let mut trace = Vec::with_capacity(grid.n_boundary());
        let mut boundary_cell = Vec::with_capacity(grid.n_boundary());
        for node in grid.boundary() {
            let e = node.edge;
            let (row, cell) = match node.wall {
                Wall::Bottom => (
                    edge_trace([u(e, 0), u(e, 1), u(e + 1, 0), u(e + 1, 1)], 1.0),
                    grid.cell_index(e, 0),
                ),
                Wall::Top => (
                    edge_trace(
                        [u(e, ny - 1), u(e, ny - 2), u(e + 1, ny - 1), u(e + 1, ny - 2)],
                        -1.0,
                    ),
                    grid.cell_index(e, ny - 1),
                ),
                Wall::Right => (
                    edge_trace(
                        [v(nx - 1, e), v(nx - 2, e), v(nx - 1, e + 1), v(nx - 2, e + 1)],
                        1.0,
                    ),
                    grid.cell_index(nx - 1, e),
                ),
                Wall::Left => (
                    edge_trace([v(0, e), v(1, e), v(0, e + 1), v(1, e + 1)], -1.0),
                    grid.cell_index(0, e),
                ),
            };
            trace.push(row);
            boundary_cell.push(cell);
        }

        let advection = advection_terms(grid, &free);

        Stencils {
            n_u: grid.n_u(),
            mass,
            free,
            free_dofs,
            d11,
            d22,
            div,
            dyu,
            dxv,
            vertex_weight,
            trace,
            boundary_cell,
            advection,
        }
    }
}

/// Edge average of two extrapolated vertex values, times the tangent sign.
/// `dofs` = [near₀, far₀, near₁, far₁].
fn edge_trace(dofs: [usize; 4], sign: f64) -> Row {
    vec![
        (dofs[0], 0.75 * sign),
        (dofs[1], -0.25 * sign),
        (dofs[2], 0.75 * sign),
        (dofs[3], -0.25 * sign),
    ]
}

pub(crate) fn apply(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(k, c)| c * x[k]).sum()
}

/// Face flux as a linear form in the advecting field.
type Flux = Vec<(usize, f64)>;

fn advection_terms(grid: &Grid, free: &[bool]) -> Vec<AdvTerm> {
    let (nx, ny, hx, hy) = (grid.nx, grid.ny, grid.hx, grid.hy);
    let u = |i: usize, j: usize| grid.u_index(i, j);
    let v = |i: usize, j: usize| grid.v_index(i, j);
    let mut terms = Vec::new();

    let mut interior = |p: usize, n: usize, flux: &Flux| {
        for &(w, c) in flux {
            if free[p] {
                terms.push(term(0.5 * c, w, n, p));
            }
            if free[n] {
                terms.push(term(-0.5 * c, w, p, n));
            }
        }
    };

    // u control volumes
    for j in 0..ny {
        for i in 0..nx {
            interior(u(i, j), u(i + 1, j), &vec![(u(i, j), 0.5 * hy), (u(i + 1, j), 0.5 * hy)]);
        }
    }
    for j in 0..ny - 1 {
        for i in 1..nx {
            let flux = vec![(v(i - 1, j + 1), 0.5 * hx), (v(i, j + 1), 0.5 * hx)];
            interior(u(i, j), u(i, j + 1), &flux);
        }
    }
    // v control volumes
    for j in 0..ny {
        for i in 0..nx {
            interior(v(i, j), v(i, j + 1), &vec![(v(i, j), 0.5 * hx), (v(i, j + 1), 0.5 * hx)]);
        }
    }
    for j in 1..ny {
        for i in 0..nx - 1 {
            let flux = vec![(u(i + 1, j - 1), 0.5 * hy), (u(i + 1, j), 0.5 * hy)];
            interior(v(i, j), v(i + 1, j), &flux);
        }
    }

    // wall faces carry the outward flux
    let mut wall = |p: usize, flux: Flux| {
        for (w, c) in flux {
            terms.push(term(0.5 * c, w, p, p));
        }
    };
    for i in 1..nx {
        wall(u(i, 0), vec![(v(i - 1, 0), -0.5 * hx), (v(i, 0), -0.5 * hx)]);
        wall(u(i, ny - 1), vec![(v(i - 1, ny), 0.5 * hx), (v(i, ny), 0.5 * hx)]);
    }
    for j in 1..ny {
        wall(v(0, j), vec![(u(0, j - 1), -0.5 * hy), (u(0, j), -0.5 * hy)]);
        wall(v(nx - 1, j), vec![(u(nx, j - 1), 0.5 * hy), (u(nx, j), 0.5 * hy)]);
    }
    terms
}

fn term(coef: f64, w: usize, y: usize, phi: usize) -> AdvTerm {
    AdvTerm {
        coef,
        w: w as u32,
        y: y as u32,
        phi: phi as u32,
    }
}

/// `C(w; y, φ)`.
pub(crate) fn advection_form(st: &Stencils, w: &[f64], y: &[f64], phi: &[f64]) -> f64 {
    st.advection
        .iter()
        .map(|t| t.coef * w[t.w as usize] * y[t.y as usize] * phi[t.phi as usize])
        .sum()
}

/// `∂C/∂w [z] (y, ·)` as a vector over test functions.
pub(crate) fn advection_w_derivative(st: &Stencils, z: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    for t in &st.advection {
        out[t.phi as usize] += t.coef * z[t.w as usize] * y[t.y as usize];
    }
    out
}

/// Transpose of [`advection_w_derivative`] in its first argument.
pub(crate) fn advection_w_derivative_transpose(st: &Stencils, lambda: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for t in &st.advection {
        out[t.w as usize] += t.coef * y[t.y as usize] * lambda[t.phi as usize];
    }
    out
}

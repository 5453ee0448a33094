//! Discrete fields on the staggered grid, their norms, and the boundary
//! traces used by the slip condition and the control norm.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SlipError};
use crate::mesh::{Grid, TimeGrid};
use crate::stencil::apply;

/// Velocity unknowns: all `u` values followed by all `v` values.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: &Grid) -> Self {
        VelocityField {
            nx: grid.nx,
            ny: grid.ny,
            data: vec![0.0; grid.n_velocity()],
        }
    }

    pub fn from_vec(grid: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.n_velocity() {
            return Err(SlipError::ShapeMismatch(format!(
                "velocity vector of length {} on a grid with {} unknowns",
                data.len(),
                grid.n_velocity()
            )));
        }
        Ok(VelocityField {
            nx: grid.nx,
            ny: grid.ny,
            data,
        })
    }

    /// Samples `f(x, y) -> (u, v)` at the staggered locations.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let data = (0..grid.n_velocity())
            .map(|dof| {
                let ((x, y), is_u) = grid.velocity_position(dof);
                f(x, y)[if is_u { 0 } else { 1 }]
            })
            .collect();
        VelocityField {
            nx: grid.nx,
            ny: grid.ny,
            data,
        }
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.nx != grid.nx || self.ny != grid.ny || self.data.len() != grid.n_velocity() {
            return Err(SlipError::ShapeMismatch(format!(
                "velocity field {}×{} does not match grid {}×{}",
                self.nx, self.ny, grid.nx, grid.ny
            )));
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(SlipError::InvalidArgument("velocity field has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.data[j * (self.nx + 1) + i]
    }

    pub fn v(&self, i: usize, j: usize) -> f64 {
        self.data[(self.nx + 1) * self.ny + j * self.nx + i]
    }

    pub fn axpy(&mut self, alpha: f64, other: &VelocityField) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += alpha * y;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= alpha);
        out
    }

    pub fn sub(&self, other: &VelocityField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    pub values: Vec<f64>,
    pub mean_zero: bool,
}

impl PressureField {
    pub fn zeros(grid: &Grid) -> Self {
        PressureField {
            values: vec![0.0; grid.n_cells()],
            mean_zero: true,
        }
    }

    /// Subtracts the cell mean and sets the flag.
    pub fn remove_mean(&mut self) {
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        self.values.iter_mut().for_each(|q| *q -= mean);
        self.mean_zero = true;
    }
}

/// Samples at the boundary edge midpoints, in loop order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScalar {
    pub values: Vec<f64>,
}

impl BoundaryScalar {
    pub fn zeros(grid: &Grid) -> Self {
        BoundaryScalar {
            values: vec![0.0; grid.n_boundary()],
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        BoundaryScalar {
            values: vec![c; grid.n_boundary()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&crate::mesh::BoundaryNode) -> f64) -> Self {
        BoundaryScalar {
            values: grid.boundary().iter().map(f).collect(),
        }
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if self.values.len() != grid.n_boundary() {
            return Err(SlipError::ShapeMismatch(format!(
                "boundary scalar of length {} on a loop of {} nodes",
                self.values.len(),
                grid.n_boundary()
            )));
        }
        if self.values.iter().any(|x| !x.is_finite()) {
            return Err(SlipError::InvalidArgument("boundary scalar has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn mean(&self, grid: &Grid) -> f64 {
        boundary_mean(grid, &self.values)
    }

    /// Removes the weighted boundary mean in place.
    pub fn remove_mean(&mut self, grid: &Grid) {
        let m = self.mean(grid);
        self.values.iter_mut().for_each(|x| *x -= m);
    }

    pub fn scaled(&self, c: f64) -> Self {
        BoundaryScalar {
            values: self.values.iter().map(|x| c * x).collect(),
        }
    }
}

pub fn boundary_mean(grid: &Grid, values: &[f64]) -> f64 {
    let total: f64 = grid.boundary().iter().zip(values).map(|(n, v)| n.weight * v).sum();
    total / grid.perimeter()
}

/// Time-indexed control pair with the admissible-set metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryControl {
    pub a: Vec<BoundaryScalar>,
    pub b: Vec<BoundaryScalar>,
    pub p_exponent: f64,
    pub radius: f64,
}

impl BoundaryControl {
    pub fn zeros(grid: &Grid, time: &TimeGrid, p_exponent: f64, radius: f64) -> Self {
        let slice = BoundaryScalar::zeros(grid);
        BoundaryControl {
            a: vec![slice.clone(); time.n_slices()],
            b: vec![slice; time.n_slices()],
            p_exponent,
            radius,
        }
    }

    pub fn n_slices(&self) -> usize {
        self.a.len()
    }

    pub fn check(&self, grid: &Grid, time: &TimeGrid) -> Result<()> {
        if self.a.len() != time.n_slices() || self.b.len() != time.n_slices() {
            return Err(SlipError::ShapeMismatch(format!(
                "control has {}/{} slices, time grid has {}",
                self.a.len(),
                self.b.len(),
                time.n_slices()
            )));
        }
        for (k, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            a.check(grid).map_err(|e| SlipError::at_slice(k, e))?;
            b.check(grid).map_err(|e| SlipError::at_slice(k, e))?;
        }
        Ok(())
    }

    /// Verifies zero boundary flux of every `a` slice.
    pub fn check_compatible(&self, grid: &Grid) -> Result<()> {
        for (k, a) in self.a.iter().enumerate() {
            check_flux(grid, &a.values).map_err(|e| SlipError::at_slice(k, e))?;
        }
        Ok(())
    }

    /// `self + eps·dir`, metadata kept from `self`.
    pub fn plus(&self, eps: f64, dir: &BoundaryControl) -> Self {
        let comb = |x: &[BoundaryScalar], y: &[BoundaryScalar]| {
            x.iter()
                .zip(y)
                .map(|(p, q)| BoundaryScalar {
                    values: p.values.iter().zip(&q.values).map(|(s, t)| s + eps * t).collect(),
                })
                .collect()
        };
        BoundaryControl {
            a: comb(&self.a, &dir.a),
            b: comb(&self.b, &dir.b),
            p_exponent: self.p_exponent,
            radius: self.radius,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        BoundaryControl {
            a: self.a.iter().map(|s| s.scaled(c)).collect(),
            b: self.b.iter().map(|s| s.scaled(c)).collect(),
            p_exponent: self.p_exponent,
            radius: self.radius,
        }
    }

    pub fn hp_norm(&self, grid: &Grid, time: &TimeGrid) -> Result<f64> {
        hp_norm(grid, time, &self.a, &self.b, self.p_exponent)
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().chain(&self.b).all(|s| s.values.iter().all(|&x| x == 0.0))
    }
}

/// Compatibility tolerance for the boundary flux of one slice.
pub fn flux_tolerance(grid: &Grid, values: &[f64]) -> f64 {
    let mass: f64 = grid.boundary().iter().zip(values).map(|(n, v)| n.weight * v.abs()).sum();
    1e-10 * mass.max(1.0)
}

pub fn check_flux(grid: &Grid, values: &[f64]) -> Result<()> {
    let integral = grid.integrate_boundary(values)?;
    let tolerance = flux_tolerance(grid, values);
    if integral.abs() > tolerance {
        return Err(SlipError::IncompatibleFlux { integral, tolerance });
    }
    Ok(())
}

/// Friction coefficient per time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionField {
    pub alpha: Vec<BoundaryScalar>,
}

pub const DEFAULT_ALPHA_MIN: f64 = 1e-3;

impl FrictionField {
    pub fn constant(grid: &Grid, time: &TimeGrid, alpha: f64) -> Self {
        FrictionField {
            alpha: vec![BoundaryScalar::constant(grid, alpha); time.n_slices()],
        }
    }

    pub fn check(&self, grid: &Grid, time: &TimeGrid, alpha_min: f64) -> Result<()> {
        if self.alpha.len() != time.n_slices() {
            return Err(SlipError::ShapeMismatch(format!(
                "friction has {} slices, time grid has {}",
                self.alpha.len(),
                time.n_slices()
            )));
        }
        for (k, s) in self.alpha.iter().enumerate() {
            s.check(grid).map_err(|e| SlipError::at_slice(k, e))?;
            if let Some(bad) = s.values.iter().find(|&&x| x < alpha_min) {
                return Err(SlipError::at_slice(
                    k,
                    SlipError::InvalidArgument(format!(
                        "friction coefficient {bad} below the minimum {alpha_min}"
                    )),
                ));
            }
        }
        Ok(())
    }
}

/// `D11`, `D22` at cell centers, `D12` at vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainField {
    pub d11: Vec<f64>,
    pub d22: Vec<f64>,
    pub d12: Vec<f64>,
}

pub fn divergence(grid: &Grid, y: &VelocityField) -> Vec<f64> {
    grid.stencils().div.iter().map(|r| apply(r, &y.data)).collect()
}

pub fn strain_tensor(grid: &Grid, y: &VelocityField) -> StrainField {
    let st = grid.stencils();
    StrainField {
        d11: st.d11.iter().map(|r| apply(r, &y.data)).collect(),
        d22: st.d22.iter().map(|r| apply(r, &y.data)).collect(),
        d12: st
            .dyu
            .iter()
            .zip(&st.dxv)
            .map(|(a, b)| 0.5 * (apply(a, &y.data) + apply(b, &y.data)))
            .collect(),
    }
}

/// Discrete strain inner product `∫ D(y):D(φ)`.
pub fn strain_inner(grid: &Grid, y: &VelocityField, phi: &VelocityField) -> f64 {
    let (a, b) = (strain_tensor(grid, y), strain_tensor(grid, phi));
    let cell = grid.cell_area();
    let diag: f64 = a
        .d11
        .iter()
        .zip(&b.d11)
        .chain(a.d22.iter().zip(&b.d22))
        .map(|(x, z)| x * z)
        .sum();
    let off: f64 = grid
        .stencils()
        .vertex_weight
        .iter()
        .zip(a.d12.iter().zip(&b.d12))
        .map(|(w, (x, z))| 2.0 * w * x * z)
        .sum();
    cell * diag + off
}

/// Mass-weighted inner product of velocity vectors.
pub fn velocity_inner(grid: &Grid, y: &[f64], z: &[f64]) -> f64 {
    grid.stencils()
        .mass
        .iter()
        .zip(y.iter().zip(z))
        .map(|(m, (a, b))| m * a * b)
        .sum()
}

pub fn l2_norm(grid: &Grid, y: &VelocityField) -> f64 {
    velocity_inner(grid, &y.data, &y.data).sqrt()
}

pub fn cell_l2_norm(grid: &Grid, q: &[f64]) -> f64 {
    (q.iter().map(|x| x * x).sum::<f64>() * grid.cell_area()).sqrt()
}

pub fn h1_seminorm(grid: &Grid, y: &VelocityField) -> f64 {
    let st = grid.stencils();
    let cell: f64 = st
        .d11
        .iter()
        .chain(&st.d22)
        .map(|r| apply(r, &y.data).powi(2))
        .sum::<f64>()
        * grid.cell_area();
    let vert: f64 = st
        .vertex_weight
        .iter()
        .zip(st.dyu.iter().zip(&st.dxv))
        .map(|(w, (a, b))| w * (apply(a, &y.data).powi(2) + apply(b, &y.data).powi(2)))
        .sum();
    (cell + vert).sqrt()
}

pub fn strain_l2(grid: &Grid, y: &VelocityField) -> f64 {
    strain_inner(grid, y, y).sqrt()
}

pub fn tangential_trace(grid: &Grid, y: &VelocityField) -> BoundaryScalar {
    BoundaryScalar {
        values: grid.stencils().trace.iter().map(|r| apply(r, &y.data)).collect(),
    }
}

pub fn normal_trace(grid: &Grid, y: &VelocityField) -> BoundaryScalar {
    BoundaryScalar {
        values: grid.boundary().iter().map(|n| n.sign * y.data[n.dof]).collect(),
    }
}

/// Writes `y·n = a` into the wall-normal unknowns.
pub fn set_normal_trace(grid: &Grid, y: &mut VelocityField, a: &BoundaryScalar) {
    for (n, &val) in grid.boundary().iter().zip(&a.values) {
        y.data[n.dof] = n.sign * val;
    }
}

pub fn spatial_mean(grid: &Grid, y: &VelocityField) -> [f64; 2] {
    let st = grid.stencils();
    let (mu, mv) = st.mass.split_at(st.n_u);
    let (du, dv) = y.data.split_at(st.n_u);
    [
        mu.iter().zip(du).map(|(m, x)| m * x).sum(),
        mv.iter().zip(dv).map(|(m, x)| m * x).sum(),
    ]
}

/// Face differences of a cell scalar; wall-normal faces are zero.
pub fn discrete_gradient(grid: &Grid, q: &[f64]) -> VelocityField {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut y = VelocityField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            y.data[grid.u_index(i, j)] =
                (q[grid.cell_index(i, j)] - q[grid.cell_index(i - 1, j)]) / grid.hx;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            y.data[grid.v_index(i, j)] =
                (q[grid.cell_index(i, j)] - q[grid.cell_index(i, j - 1)]) / grid.hy;
        }
    }
    y
}

/// `∂x v − ∂y u` at interior vertices, row-major over `(1..nx) × (1..ny)`.
pub fn discrete_curl(grid: &Grid, y: &VelocityField) -> Vec<f64> {
    let mut out = Vec::with_capacity((grid.nx - 1) * (grid.ny - 1));
    for j in 1..grid.ny {
        for i in 1..grid.nx {
            out.push((y.v(i, j) - y.v(i - 1, j)) / grid.hx - (y.u(i, j) - y.u(i, j - 1)) / grid.hy);
        }
    }
    out
}

/// The three components of the discrete control norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpParts {
    pub fractional: f64,
    pub time_derivative: f64,
    pub tangential: f64,
}

impl HpParts {
    pub fn total(&self) -> f64 {
        self.fractional + self.time_derivative + self.tangential
    }
}

pub fn hp_norm(
    grid: &Grid,
    time: &TimeGrid,
    a: &[BoundaryScalar],
    b: &[BoundaryScalar],
    p: f64,
) -> Result<f64> {
    Ok(hp_parts(grid, time, a, b, p)?.total())
}

/// Time quadrature: trapezoid on slices.
fn trapezoid_weight(time: &TimeGrid, k: usize) -> f64 {
    if k == 0 || k == time.nt {
        0.5 * time.dt
    } else {
        time.dt
    }
}

pub fn hp_parts(
    grid: &Grid,
    time: &TimeGrid,
    a: &[BoundaryScalar],
    b: &[BoundaryScalar],
    p: f64,
) -> Result<HpParts> {
    if !(p.is_finite() && p > 2.0) {
        return Err(SlipError::InvalidArgument(format!("exponent p must lie in (2, ∞), got {p}")));
    }
    if a.len() < 2 || b.len() != a.len() {
        return Err(SlipError::InvalidArgument(format!(
            "control norm needs at least two matching time slices, got {}/{}",
            a.len(),
            b.len()
        )));
    }
    if a.len() != time.n_slices() {
        return Err(SlipError::ShapeMismatch(format!(
            "{} slices on a time grid with {}",
            a.len(),
            time.n_slices()
        )));
    }
    let nodes = grid.boundary();
    let n = nodes.len();
    let perimeter = grid.perimeter();

    // pair kernel w_i w_j / d_ij^p with d the geodesic arc distance
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let ds = (nodes[i].s - nodes[j].s).abs();
                let d = ds.min(perimeter - ds);
                kernel[i * n + j] = nodes[i].weight * nodes[j].weight / d.powf(p);
            }
        }
    }
    let fractional_slice = |vals: &[f64]| -> f64 {
        let mut gag = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    gag += kernel[i * n + j] * (vals[i] - vals[j]).abs().powf(p);
                }
            }
        }
        let lp: f64 = nodes.iter().zip(vals).map(|(nd, v)| nd.weight * v.abs().powf(p)).sum();
        gag.powf(1.0 / p) + lp.powf(1.0 / p)
    };

    let mut frac2 = 0.0;
    let mut tang2 = 0.0;
    for k in 0..a.len() {
        a[k].check(grid)?;
        b[k].check(grid)?;
        let w = trapezoid_weight(time, k);
        frac2 += w * fractional_slice(&a[k].values).powi(2);
        tang2 += w * nodes.iter().zip(&b[k].values).map(|(nd, v)| nd.weight * v * v).sum::<f64>();
    }

    // H^{-1/2} of forward differences via weighted loop Fourier coefficients
    let half = n / 2;
    let modes: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..=half)
        .map(|m| {
            let arg: Vec<f64> = nodes.iter().map(|nd| 2.0 * PI * m as f64 * nd.s / perimeter).collect();
            (
                m as f64,
                arg.iter().zip(nodes).map(|(t, nd)| nd.weight * t.cos()).collect(),
                arg.iter().zip(nodes).map(|(t, nd)| nd.weight * t.sin()).collect(),
            )
        })
        .collect();
    let mut dt2 = 0.0;
    for k in 1..a.len() {
        let delta: Vec<f64> = a[k]
            .values
            .iter()
            .zip(&a[k - 1].values)
            .map(|(x, y)| (x - y) / time.dt)
            .collect();
        let mut norm2 = 0.0;
        for (m, wc, ws) in &modes {
            let re: f64 = wc.iter().zip(&delta).map(|(c, d)| c * d).sum::<f64>() / perimeter;
            let im: f64 = ws.iter().zip(&delta).map(|(s, d)| s * d).sum::<f64>() / perimeter;
            // ±m share the modulus; m = 0 counted once
            let mult = if *m == 0.0 { 1.0 } else { 2.0 };
            norm2 += mult * (re * re + im * im) / (1.0 + m);
        }
        dt2 += time.dt * perimeter * norm2;
    }

    Ok(HpParts {
        fractional: frac2.sqrt(),
        time_derivative: dt2.sqrt(),
        tangential: tang2.sqrt(),
    })
}

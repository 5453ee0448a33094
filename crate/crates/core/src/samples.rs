//! Seeded random fields: band-limited trigonometric velocities, stream-function
//! fields in the discrete divergence-free, zero-flux space, and smooth
//! zero-mean boundary controls.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fields::{BoundaryControl, BoundaryScalar, VelocityField};
use crate::mesh::{Grid, TimeGrid};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn coeff(rng: &mut SampleRng, k: usize, l: usize) -> f64 {
    rng.random_range(-1.0..1.0) / (1.0 + (k * k + l * l) as f64)
}

/// `Σ c_kl cos(kπx/Lx + φ) cos(lπy/Ly + θ)` per component, `k, l ≤ modes`.
pub fn trig_velocity(grid: &Grid, rng: &mut SampleRng, modes: usize) -> VelocityField {
    let mut terms = Vec::new();
    for comp in 0..2 {
        for k in 0..=modes {
            for l in 0..=modes {
                let c = coeff(rng, k, l);
                let phase_x = rng.random_range(0.0..2.0 * PI);
                let phase_y = rng.random_range(0.0..2.0 * PI);
                terms.push((comp, k as f64, l as f64, c, phase_x, phase_y));
            }
        }
    }
    let (lx, ly) = (grid.lx, grid.ly);
    VelocityField::from_fn(grid, |x, y| {
        let mut out = [0.0; 2];
        for &(comp, k, l, c, px, py) in &terms {
            out[comp] += c * (k * PI * x / lx + px).cos() * (l * PI * y / ly + py).cos();
        }
        out
    })
}

/// Discrete curl of a vertex stream function vanishing on the boundary:
/// exactly divergence-free with zero normal trace.
pub fn stream_velocity(grid: &Grid, psi: impl Fn(f64, f64) -> f64) -> VelocityField {
    let (nx, ny) = (grid.nx, grid.ny);
    let vert = |i: usize, j: usize| {
        if i == 0 || j == 0 || i == nx || j == ny {
            0.0
        } else {
            psi(i as f64 * grid.hx, j as f64 * grid.hy)
        }
    };
    let mut y = VelocityField::zeros(grid);
    for j in 0..ny {
        for i in 0..=nx {
            y.data[grid.u_index(i, j)] = (vert(i, j + 1) - vert(i, j)) / grid.hy;
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            y.data[grid.v_index(i, j)] = -(vert(i + 1, j) - vert(i, j)) / grid.hx;
        }
    }
    y
}

/// Random band-limited stream function `Σ c_kl sin(kπx/Lx) sin(lπy/Ly)`.
pub fn random_stream_velocity(grid: &Grid, rng: &mut SampleRng, modes: usize) -> VelocityField {
    let mut terms = Vec::new();
    for k in 1..=modes {
        for l in 1..=modes {
            terms.push((k as f64, l as f64, coeff(rng, k, l)));
        }
    }
    let (lx, ly) = (grid.lx, grid.ly);
    stream_velocity(grid, |x, y| {
        terms
            .iter()
            .map(|&(k, l, c)| c * (k * PI * x / lx).sin() * (l * PI * y / ly).sin())
            .sum()
    })
}

/// Smooth loop function `Σ_m c_m cos(2πms/L) + d_m sin(2πms/L)`, `1 ≤ m ≤ modes`.
fn loop_profile(rng: &mut SampleRng, modes: usize) -> Vec<(f64, f64, f64)> {
    (1..=modes)
        .map(|m| {
            let scale = 1.0 / m as f64;
            (
                m as f64,
                scale * rng.random_range(-1.0..1.0),
                scale * rng.random_range(-1.0..1.0),
            )
        })
        .collect()
}

fn eval_loop(grid: &Grid, profile: &[(f64, f64, f64)]) -> BoundaryScalar {
    let l = grid.perimeter();
    let mut s = BoundaryScalar::from_fn(grid, |n| {
        profile
            .iter()
            .map(|&(m, c, d)| c * (2.0 * PI * m * n.s / l).cos() + d * (2.0 * PI * m * n.s / l).sin())
            .sum()
    });
    s.remove_mean(grid);
    s
}

/// Smooth space-time control with zero-mean `a`, `a(0) = 0`, amplitude `amp`.
pub fn smooth_control(
    grid: &Grid,
    time: &TimeGrid,
    rng: &mut SampleRng,
    amp: f64,
    p_exponent: f64,
    radius: f64,
) -> BoundaryControl {
    let modes = 3;
    let pa = [loop_profile(rng, modes), loop_profile(rng, modes)];
    let pb = [loop_profile(rng, modes), loop_profile(rng, modes)];
    let (a0, a1) = (eval_loop(grid, &pa[0]), eval_loop(grid, &pa[1]));
    let (b0, b1) = (eval_loop(grid, &pb[0]), eval_loop(grid, &pb[1]));
    let freq = rng.random_range(0.5..1.5);
    let b_shift = rng.random_range(-0.5..0.5);
    let mut a = Vec::with_capacity(time.n_slices());
    let mut b = Vec::with_capacity(time.n_slices());
    for k in 0..time.n_slices() {
        let tau = time.time(k) / time.t_final;
        let (s, c) = ((PI * freq * tau).sin(), (PI * freq * tau).cos());
        a.push(BoundaryScalar {
            values: a0
                .values
                .iter()
                .zip(&a1.values)
                .map(|(x, y)| amp * tau * (c * x + s * y))
                .collect(),
        });
        b.push(BoundaryScalar {
            values: b0
                .values
                .iter()
                .zip(&b1.values)
                .map(|(x, y)| amp * (c * x + s * y + b_shift))
                .collect(),
        });
    }
    BoundaryControl {
        a,
        b,
        p_exponent,
        radius,
    }
}

/// Time-indexed random velocity data (slice 0 zero), e.g. adjoint sources.
pub fn random_source(grid: &Grid, time: &TimeGrid, rng: &mut SampleRng, modes: usize) -> Vec<VelocityField> {
    let base = [trig_velocity(grid, rng, modes), trig_velocity(grid, rng, modes)];
    (0..time.n_slices())
        .map(|k| {
            if k == 0 {
                return VelocityField::zeros(grid);
            }
            let tau = time.time(k) / time.t_final;
            let mut y = base[0].scaled((PI * tau).cos());
            y.axpy((PI * tau).sin(), &base[1]);
            y
        })
        .collect()
}

/// As [`random_source`] with divergence-free, zero-flux slices.
pub fn random_solenoidal_source(
    grid: &Grid,
    time: &TimeGrid,
    rng: &mut SampleRng,
    modes: usize,
) -> Vec<VelocityField> {
    let base = [
        random_stream_velocity(grid, rng, modes),
        random_stream_velocity(grid, rng, modes),
    ];
    (0..time.n_slices())
        .map(|k| {
            if k == 0 {
                return VelocityField::zeros(grid);
            }
            let tau = time.time(k) / time.t_final;
            let mut y = base[0].scaled((PI * tau).cos());
            y.axpy((PI * tau).sin(), &base[1]);
            y
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{divergence, normal_trace};

    #[test]
    fn stream_fields_are_in_the_discrete_space() {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let y = random_stream_velocity(&g, &mut rng(3), 3);
        assert!(divergence(&g, &y).iter().all(|d| d.abs() < 1e-12));
        assert!(normal_trace(&g, &y).values.iter().all(|&v| v == 0.0));
        assert!(y.max_abs() > 0.0);
    }

    #[test]
    fn controls_are_zero_mean_and_start_at_rest() {
        let g = Grid::new(8, 6, 1.0, 0.75).unwrap();
        let t = TimeGrid::new(1.0, 8).unwrap();
        let c = smooth_control(&g, &t, &mut rng(11), 0.3, 3.0, 10.0);
        assert!(c.a[0].values.iter().all(|&v| v == 0.0));
        for a in &c.a {
            assert!(g.integrate_boundary(&a.values).unwrap().abs() < 1e-14);
        }
        let again = smooth_control(&g, &t, &mut rng(11), 0.3, 3.0, 10.0);
        assert_eq!(c, again);
    }
}

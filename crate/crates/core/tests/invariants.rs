use proptest::prelude::*;
use rand::Rng;
use slipctl_core::adjoint::{solve_adjoint, transpose_pair};
use slipctl_core::control::{cost_gradient, project_admissible, CostParams};
use slipctl_core::fields::{
    discrete_curl, discrete_gradient, divergence, h1_seminorm, hp_norm, l2_norm, normal_trace, strain_l2,
    tangential_trace, BoundaryControl, BoundaryScalar, FrictionField, VelocityField,
};
use slipctl_core::lifting::solve_neumann_lifting;
use slipctl_core::linearized::solve_linearized;
use slipctl_core::mesh::{Grid, TimeGrid};
use slipctl_core::samples::{random_solenoidal_source, random_source, rng, smooth_control, trig_velocity};
use slipctl_core::state::{solve_state, StateProblem};

fn grid_strategy() -> impl Strategy<Value = Grid> {
    (4usize..9, 4usize..9, 0.5f64..2.0, 0.5f64..2.0).prop_map(|(nx, ny, lx, ly)| Grid::new(nx, ny, lx, ly).unwrap())
}

fn problem(grid: &Grid, nt: usize, seed: u64, amp: f64) -> StateProblem {
    let time = TimeGrid::new(0.5, nt).unwrap();
    let c = smooth_control(grid, &time, &mut rng(seed), amp, 3.0, 1e3);
    StateProblem::new(
        grid.clone(),
        time,
        VelocityField::zeros(grid),
        c,
        FrictionField::constant(grid, &time, 0.5),
    )
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn boundary_frames_are_orthonormal_and_right_handed(g in grid_strategy()) {
        let mut arc = 0.0;
        for node in g.boundary() {
            let [nx, ny] = node.normal;
            let [tx, ty] = node.tangent;
            prop_assert!(((nx * nx + ny * ny) - 1.0).abs() < 1e-15);
            prop_assert!((nx * tx + ny * ty).abs() < 1e-15);
            prop_assert_eq!([tx, ty], [-ny, nx]);
            arc += node.weight;
        }
        prop_assert!((arc - 2.0 * (g.lx + g.ly)).abs() < 1e-12);
    }

    #[test]
    fn integrals_are_linear_and_orientation_free(
        g in grid_strategy(),
        c1 in -3.0f64..3.0,
        c2 in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let f: Vec<f64> = (0..g.n_boundary()).map(|_| r.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..g.n_boundary()).map(|_| r.random_range(-1.0..1.0)).collect();
        let comb: Vec<f64> = f.iter().zip(&h).map(|(x, y)| c1 * x + c2 * y).collect();
        let lhs = g.integrate_boundary(&comb).unwrap();
        let rhs = c1 * g.integrate_boundary(&f).unwrap() + c2 * g.integrate_boundary(&h).unwrap();
        prop_assert!(close(lhs, rhs, 1e-13));

        let rev = g.reversed_boundary();
        let f_rev: Vec<f64> = f.iter().rev().copied().collect();
        let i_rev = slipctl_core::mesh::integrate_over_nodes(&rev, &f_rev).unwrap();
        prop_assert!(close(i_rev, g.integrate_boundary(&f).unwrap(), 1e-13));
        for (a, b) in rev.iter().zip(g.boundary().iter().rev()) {
            prop_assert_eq!(a.tangent, [-b.tangent[0], -b.tangent[1]]);
        }

        let cells: Vec<f64> = (0..g.n_cells()).map(|_| r.random_range(-1.0..1.0)).collect();
        let doubled: Vec<f64> = cells.iter().map(|x| c1 * x).collect();
        prop_assert!(close(
            g.integrate_interior(&doubled).unwrap(),
            c1 * g.integrate_interior(&cells).unwrap(),
            1e-13
        ));
    }

    #[test]
    fn field_norms_are_homogeneous_and_subadditive(
        g in grid_strategy(),
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        c in -4.0f64..4.0,
    ) {
        let y = trig_velocity(&g, &mut rng(s1), 2);
        let z = trig_velocity(&g, &mut rng(s2), 2);
        let mut sum = y.clone();
        sum.axpy(1.0, &z);
        let norms: [fn(&Grid, &VelocityField) -> f64; 3] = [l2_norm, h1_seminorm, strain_l2];
        for norm in norms {
            prop_assert!(close(norm(&g, &y.scaled(c)), c.abs() * norm(&g, &y), 1e-12));
            prop_assert!(norm(&g, &sum) <= norm(&g, &y) + norm(&g, &z) + 1e-12);
        }
    }

    #[test]
    fn gradient_of_constant_is_divergence_free(g in grid_strategy(), c in -5.0f64..5.0) {
        let q = vec![c; g.n_cells()];
        let grad = discrete_gradient(&g, &q);
        prop_assert!(divergence(&g, &grad).iter().all(|d| *d == 0.0));
    }

    #[test]
    fn tangential_trace_is_linear(g in grid_strategy(), s1 in any::<u64>(), s2 in any::<u64>(), c in -3.0f64..3.0) {
        let y = trig_velocity(&g, &mut rng(s1), 2);
        let z = trig_velocity(&g, &mut rng(s2), 2);
        let mut comb = y.scaled(c);
        comb.axpy(1.0, &z);
        let (ty, tz, tc) = (tangential_trace(&g, &y), tangential_trace(&g, &z), tangential_trace(&g, &comb));
        for k in 0..g.n_boundary() {
            prop_assert!(close(tc.values[k], c * ty.values[k] + tz.values[k], 1e-12));
        }
    }

    #[test]
    fn hp_norm_vanishes_exactly_on_zero(g in grid_strategy(), seed in any::<u64>(), k in 0usize..5, e in 0usize..16) {
        let time = TimeGrid::new(1.0, 4).unwrap();
        let zero = BoundaryControl::zeros(&g, &time, 3.0, 1.0);
        prop_assert_eq!(zero.hp_norm(&g, &time).unwrap(), 0.0);
        let mut spike = zero.clone();
        let e = e % g.n_boundary();
        if seed % 2 == 0 {
            spike.a[k].values[e] = 1e-3;
        } else {
            spike.b[k].values[e] = 1e-3;
        }
        prop_assert!(spike.hp_norm(&g, &time).unwrap() > 0.0);
    }

    #[test]
    fn hp_norm_is_a_norm(g in grid_strategy(), s1 in any::<u64>(), s2 in any::<u64>(), c in -3.0f64..3.0) {
        let time = TimeGrid::new(1.0, 4).unwrap();
        let x = smooth_control(&g, &time, &mut rng(s1), 1.0, 3.0, 1.0);
        let y = smooth_control(&g, &time, &mut rng(s2), 1.0, 3.0, 1.0);
        let n = |c: &BoundaryControl| hp_norm(&g, &time, &c.a, &c.b, 3.0).unwrap();
        prop_assert!(close(n(&x.scaled(c)), c.abs() * n(&x), 1e-12));
        prop_assert!(n(&x.plus(1.0, &y)) <= n(&x) + n(&y) + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lifting_is_linear_and_curl_free(g in grid_strategy(), s1 in any::<u64>(), s2 in any::<u64>(), c in -3.0f64..3.0) {
        let time = TimeGrid::new(1.0, 1).unwrap();
        let a1 = smooth_control(&g, &time, &mut rng(s1), 1.0, 3.0, 1.0).a[1].clone();
        let a2 = smooth_control(&g, &time, &mut rng(s2), 1.0, 3.0, 1.0).a[1].clone();
        let comb = BoundaryScalar {
            values: a1.values.iter().zip(&a2.values).map(|(x, y)| c * x + y).collect(),
        };
        let l1 = solve_neumann_lifting(&a1, &g).unwrap();
        let l2 = solve_neumann_lifting(&a2, &g).unwrap();
        let lc = solve_neumann_lifting(&comb, &g).unwrap();
        let mut expect = l1.grad_h.scaled(c);
        expect.axpy(1.0, &l2.grad_h);
        prop_assert!(lc.grad_h.sub(&expect).max_abs() <= 1e-10 * expect.max_abs().max(1.0));
        let curl = discrete_curl(&g, &lc.grad_h);
        prop_assert!(curl.iter().all(|w| w.abs() <= 1e-9 * lc.grad_h.max_abs().max(1.0) / g.hx.min(g.hy)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn state_slices_conserve_mass_and_runs_repeat(g in grid_strategy(), seed in any::<u64>()) {
        let pb = problem(&g, 3, seed, 0.5);
        let t1 = solve_state(&pb).unwrap();
        let t2 = solve_state(&pb).unwrap();
        for (k, (y1, y2)) in t1.y.iter().zip(&t2.y).enumerate() {
            prop_assert_eq!(&y1.data, &y2.data);
            let div = divergence(&g, y1);
            let scale = y1.max_abs().max(1.0) / g.hx.min(g.hy);
            prop_assert!(div.iter().all(|d| d.abs() <= 1e-9 * scale));
            let total: f64 = div.iter().sum::<f64>() * g.cell_area();
            let flux = g.integrate_boundary(&pb.controls.a[k].values).unwrap();
            prop_assert!((total - flux).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn linearized_response_is_admissible_and_linear(g in grid_strategy(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let pb = problem(&g, 3, s1, 0.5);
        let base = solve_state(&pb).unwrap();
        let d1 = smooth_control(&g, &pb.time, &mut rng(s2), 1.0, 3.0, 1.0);
        let d2 = smooth_control(&g, &pb.time, &mut rng(s2 ^ 1), 1.0, 3.0, 1.0);
        let z1 = solve_linearized(&pb, &base, &d1).unwrap();
        let z2 = solve_linearized(&pb, &base, &d2).unwrap();
        let z12 = solve_linearized(&pb, &base, &d1.plus(-0.5, &d2)).unwrap();
        for k in 1..=pb.time.nt {
            let trace = normal_trace(&g, &z1.z[k]);
            for (x, y) in trace.values.iter().zip(&d1.a[k].values) {
                prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
            let scale = z1.z[k].max_abs().max(1.0) / g.hx.min(g.hy);
            prop_assert!(divergence(&g, &z1.z[k]).iter().all(|d| d.abs() <= 1e-9 * scale));
            let mut e = z1.z[k].clone();
            e.axpy(-0.5, &z2.z[k]);
            prop_assert!(z12.z[k].sub(&e).max_abs() <= 1e-10 * e.max_abs().max(1.0));
        }
    }

    #[test]
    fn adjoint_step_is_exact_transpose(g in grid_strategy(), seed in any::<u64>(), k in 1usize..4) {
        let pb = problem(&g, 3, seed, 0.5);
        let base = solve_state(&pb).unwrap();
        let mut r = rng(seed ^ 0xA5);
        let mut vec = |n: usize| (0..n).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (nv, nb) = (g.n_velocity(), g.n_boundary());
        let (z, f, gt, eta) = (vec(nv), vec(nb), vec(nb), vec(nv));
        let (lhs, rhs) = transpose_pair(&base, k, (&z, &f, &gt), &eta).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn adjoint_velocity_vanishes_normally_and_is_divergence_free(g in grid_strategy(), seed in any::<u64>()) {
        let pb = problem(&g, 3, seed, 0.5);
        let base = solve_state(&pb).unwrap();
        let u = random_source(&g, &pb.time, &mut rng(seed ^ 7), 2);
        let adj = solve_adjoint(&pb, &base, &u).unwrap();
        prop_assert_eq!(adj.p[pb.time.nt].max_abs(), 0.0);
        for p in &adj.p {
            prop_assert!(normal_trace(&g, p).values.iter().all(|&x| x == 0.0));
            let scale = p.max_abs().max(1.0) / g.hx.min(g.hy);
            prop_assert!(divergence(&g, p).iter().all(|d| d.abs() <= 1e-9 * scale));
        }
        let s = random_solenoidal_source(&g, &pb.time, &mut rng(seed ^ 9), 2);
        prop_assert!(solve_adjoint(&pb, &base, &s).is_ok());
    }

    #[test]
    fn gradient_of_normal_control_has_zero_mean(g in grid_strategy(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let pb = problem(&g, 3, s1, 0.5);
        let yd: Vec<VelocityField> = random_source(&g, &pb.time, &mut rng(s2), 2);
        let params = CostParams::new(yd, 0.3, 0.1, 1e3, 3.0).unwrap();
        let grad = cost_gradient(&pb, &params).unwrap();
        for a in &grad.a {
            let mass: f64 = a.values.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            prop_assert!(g.integrate_boundary(&a.values).unwrap().abs() <= 1e-12 * mass);
        }
    }

    #[test]
    fn projection_is_idempotent_and_non_expansive(
        g in grid_strategy(),
        s1 in any::<u64>(),
        s2 in any::<u64>(),
        amp in 0.5f64..4.0,
        offset in -1.0f64..1.0,
    ) {
        let time = TimeGrid::new(1.0, 4).unwrap();
        let mut x = smooth_control(&g, &time, &mut rng(s1), amp, 3.0, 1.0);
        let y = smooth_control(&g, &time, &mut rng(s2), amp, 3.0, 1.0);
        for a in x.a.iter_mut().skip(1) {
            a.values.iter_mut().for_each(|v| *v += offset);
        }
        let px = project_admissible(&g, &time, &x).unwrap();
        let py = project_admissible(&g, &time, &y).unwrap();
        prop_assert_eq!(&project_admissible(&g, &time, &px).unwrap(), &px);
        prop_assert!(px.hp_norm(&g, &time).unwrap() <= 1.0 + 1e-12);
        for a in &px.a {
            prop_assert!(g.integrate_boundary(&a.values).unwrap().abs() < 1e-12);
        }
        // distances measured after removing the boundary means
        let mut x0 = x.clone();
        for a in x0.a.iter_mut() {
            a.remove_mean(&g);
        }
        let before = x0.plus(-1.0, &y).hp_norm(&g, &time).unwrap();
        let after = px.plus(-1.0, &py).hp_norm(&g, &time).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-12), "{} > {}", after, before);
    }
}

#[test]
fn random_sources_are_time_indexed() {
    let g = Grid::new(5, 5, 1.0, 1.0).unwrap();
    let t = TimeGrid::new(1.0, 3).unwrap();
    let u = random_source(&g, &t, &mut rng(1), 2);
    assert_eq!(u.len(), 4);
    assert_eq!(u[0].max_abs(), 0.0);
}

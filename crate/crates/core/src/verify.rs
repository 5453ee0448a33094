//! Measured constants of the functional inequalities and solver estimates.
//!
//! Constants are certified as finite and stable, never as specific values.
//! Samples whose left-hand side vanishes are counted as trivial passes and
//! never enter a ratio.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adjoint::{adjoint_energy_check, duality_residual, energy_norm, solve_adjoint};
use crate::error::{Result, SlipError};
use crate::exec::par_map_range;
use crate::fields::{
    divergence, h1_seminorm, l2_norm, normal_trace, spatial_mean, strain_l2, tangential_trace, BoundaryControl,
    FrictionField, VelocityField,
};
use crate::linearized::{gateaux_discrepancy, perturb, solve_linearized};
use crate::mesh::{Grid, TimeGrid};
use crate::samples::{
    random_solenoidal_source, random_source, random_stream_velocity, rng, smooth_control, trig_velocity, SampleRng};
use crate::state::{solve_state, StateProblem};

pub const GNS_EXPONENTS: [f64; 3] = [3.0, 4.0, 6.0];
pub const LEMMA_STABILITY: f64 = 5.0;
pub const LIPSCHITZ_STABILITY: f64 = 2.0;
pub const GATEAUX_STABILITY: f64 = 2.0;
pub const ESTIMATE_STABILITY: f64 = 3.0;
pub const MEAN_ZERO_TOL: f64 = 1e-10;
pub const DUALITY_TOL: f64 = 1e-9;
/// Left-hand sides below this fraction of the field size count as zero.
const TRIVIAL_FRACTION: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `max / median ≤ tolerance`.
    MaxOverMedian,
    /// `max / min ≤ tolerance` within each sample's sweep.
    SweepSpread,
    /// `max ≤ tolerance`.
    Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub sample_count: usize,
    pub trivial_count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub criterion: Criterion,
    pub tolerance: f64,
    pub pass: bool,
    pub config_hash: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct Stats {
    min: f64,
    median: f64,
    max: f64,
}

fn stats(values: &[f64]) -> Stats {
    if values.is_empty() {
        return Stats {
            min: 0.0,
            median: 0.0,
            max: 0.0,
        };
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    Stats {
        min: v[0],
        median,
        max: v[n - 1],
    }
}

/// `None` for a trivial sample.
fn ratio(lhs: f64, rhs: f64, scale: f64) -> Option<f64> {
    if lhs.abs() <= TRIVIAL_FRACTION * scale || lhs == 0.0 {
        None
    } else {
        Some(lhs / rhs)
    }
}

fn report(name: &str, ratios: &[Option<f64>], criterion: Criterion, tolerance: f64, hash: &str) -> InequalityReport {
    let measured: Vec<f64> = ratios.iter().flatten().copied().collect();
    let s = stats(&measured);
    let finite = measured.iter().all(|r| r.is_finite());
    let pass = finite
        && match criterion {
            Criterion::MaxOverMedian => measured.is_empty() || s.max <= tolerance * s.median,
            Criterion::Bound => s.max <= tolerance,
            Criterion::SweepSpread => measured.is_empty() || s.max <= tolerance * s.min,
        };
    InequalityReport {
        name: name.to_string(),
        sample_count: ratios.len(),
        trivial_count: ratios.len() - measured.len(),
        min: s.min,
        median: s.median,
        max: s.max,
        criterion,
        tolerance,
        pass,
        config_hash: hash.to_string(),
        error: None,
    }
}

fn failed(name: &str, err: &SlipError, criterion: Criterion, tolerance: f64, hash: &str) -> InequalityReport {
    InequalityReport {
        name: name.to_string(),
        sample_count: 0,
        trivial_count: 0,
        min: f64::NAN,
        median: f64::NAN,
        max: f64::NAN,
        criterion,
        tolerance,
        pass: false,
        config_hash: hash.to_string(),
        error: Some(err.to_string()),
    }
}

/// `(Σ_faces m |v|^q)^{1/q}` with the velocity mass weights.
pub fn lq_norm(grid: &Grid, v: &VelocityField, q: f64) -> f64 {
    grid.stencils()
        .mass
        .iter()
        .zip(&v.data)
        .map(|(m, x)| m * x.abs().powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

/// `‖v‖_{L₂(Γ)}` from the normal and tangential edge traces.
pub fn boundary_l2(grid: &Grid, v: &VelocityField) -> f64 {
    let n = normal_trace(grid, v);
    let t = tangential_trace(grid, v);
    grid.boundary()
        .iter()
        .zip(n.values.iter().zip(&t.values))
        .map(|(node, (a, b))| node.weight * (a * a + b * b))
        .sum::<f64>()
        .sqrt()
}

/// `v − v_Ω`.
pub fn remove_spatial_mean(grid: &Grid, v: &VelocityField) -> VelocityField {
    let m = spatial_mean(grid, v);
    let area = grid.area();
    let mean = VelocityField::from_fn(grid, |_, _| [m[0] / area, m[1] / area]);
    v.sub(&mean)
}

fn gns_ratio(grid: &Grid, v: &VelocityField, q: f64) -> Option<f64> {
    let lhs = lq_norm(grid, &remove_spatial_mean(grid, v), q);
    let rhs = l2_norm(grid, v).powf(2.0 / q) * h1_seminorm(grid, v).powf(1.0 - 2.0 / q);
    ratio(lhs, rhs, l2_norm(grid, v))
}

fn trace_ratio(grid: &Grid, v: &VelocityField) -> Option<f64> {
    let lhs = boundary_l2(grid, &remove_spatial_mean(grid, v));
    let rhs = (l2_norm(grid, v) * h1_seminorm(grid, v)).sqrt();
    ratio(lhs, rhs, l2_norm(grid, v))
}

fn check_in_v(grid: &Grid, v: &VelocityField, k: usize) -> Result<()> {
    let scale = v.max_abs().max(f64::MIN_POSITIVE);
    let div = divergence(grid, v).iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let flux = normal_trace(grid, v).values.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if div > 1e-10 * scale / grid.hx.min(grid.hy) || flux > 1e-12 * scale {
        return Err(SlipError::at_slice(
            k,
            SlipError::InvalidArgument("sample is not divergence-free with zero normal trace".into()),
        ));
    }
    Ok(())
}

/// `‖v − v_Ω‖_{L_q} ≤ C ‖v‖^{2/q} ‖∇v‖^{1−2/q}`.
pub fn check_gns(grid: &Grid, samples: &[VelocityField], q: f64, hash: &str) -> InequalityReport {
    let ratios: Vec<_> = samples.iter().map(|v| gns_ratio(grid, v, q)).collect();
    report(&format!("gagliardo_nirenberg_q{q}"), &ratios, Criterion::MaxOverMedian, LEMMA_STABILITY, hash)
}

/// `‖v − v_Ω‖_{L₂(Γ)} ≤ C ‖v‖^{1/2} ‖∇v‖^{1/2}`.
pub fn check_trace(grid: &Grid, samples: &[VelocityField], hash: &str) -> InequalityReport {
    let ratios: Vec<_> = samples.iter().map(|v| trace_ratio(grid, v)).collect();
    report("trace", &ratios, Criterion::MaxOverMedian, LEMMA_STABILITY, hash)
}

/// `‖v‖_{H¹} ≤ C ‖D(v)‖` on discretely divergence-free fields with `v·n = 0`.
pub fn check_korn(grid: &Grid, samples: &[VelocityField], hash: &str) -> Result<InequalityReport> {
    let mut ratios = Vec::with_capacity(samples.len());
    for (k, v) in samples.iter().enumerate() {
        check_in_v(grid, v, k)?;
        let h1 = (l2_norm(grid, v).powi(2) + h1_seminorm(grid, v).powi(2)).sqrt();
        ratios.push(ratio(h1, strain_l2(grid, v), v.max_abs()));
    }
    Ok(report("korn", &ratios, Criterion::MaxOverMedian, LEMMA_STABILITY, hash))
}

/// `|∫_Ω v| ≤ 10⁻¹⁰` per sample; fields outside V are reported, not rejected.
pub fn check_mean_zero(grid: &Grid, samples: &[VelocityField], hash: &str) -> InequalityReport {
    let ratios: Vec<_> = samples
        .iter()
        .map(|v| {
            let m = spatial_mean(grid, v);
            let r = m[0].hypot(m[1]);
            if r == 0.0 {
                None
            } else {
                Some(r)
            }
        })
        .collect();
    report("mean_zero", &ratios, Criterion::Bound, MEAN_ZERO_TOL, hash)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub t_final: f64,
    pub nt: usize,
    pub samples: usize,
    pub seed: u64,
    /// Scales every random field and control; 0 gives the null configuration.
    pub amplitude: f64,
    pub alpha: f64,
    pub p_exponent: f64,
    pub lipschitz_eps: Vec<f64>,
    pub gateaux_eps: Vec<f64>,
    pub energy_scalings: Vec<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            nx: 16,
            ny: 16,
            lx: 1.0,
            ly: 1.0,
            t_final: 1.0,
            nt: 32,
            samples: 5,
            seed: 0,
            amplitude: 1.0,
            alpha: 1.0,
            p_exponent: 3.0,
            lipschitz_eps: vec![1e-1, 1e-2, 1e-3],
            gateaux_eps: vec![1e-1, 1e-2, 1e-3],
            energy_scalings: vec![0.5, 1.0, 2.0],
        }
    }
}

impl SuiteConfig {
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("suite config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

fn sample_rng(seed: u64, stream: u64, i: usize) -> SampleRng {
    rng(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

const STREAM_FIELDS: u64 = 1;
const STREAM_STREAM: u64 = 2;
const STREAM_CONTROL: u64 = 3;
const STREAM_DIRECTION: u64 = 4;
const STREAM_SOURCE: u64 = 5;

/// Band-limited fields for the Lemma 2.1 checks; grid-independent continuum objects.
pub fn lemma_samples(grid: &Grid, cfg: &SuiteConfig) -> (Vec<VelocityField>, Vec<VelocityField>) {
    let trig = (0..cfg.samples)
        .map(|i| trig_velocity(grid, &mut sample_rng(cfg.seed, STREAM_FIELDS, i), 3).scaled(cfg.amplitude))
        .collect();
    let stream = (0..cfg.samples)
        .map(|i| random_stream_velocity(grid, &mut sample_rng(cfg.seed, STREAM_STREAM, i), 3).scaled(cfg.amplitude))
        .collect();
    (trig, stream)
}

struct Setup {
    grid: Grid,
    time: TimeGrid,
    friction: FrictionField,
}

impl Setup {
    fn new(cfg: &SuiteConfig) -> Result<Self> {
        let grid = Grid::new(cfg.nx, cfg.ny, cfg.lx, cfg.ly)?;
        let time = TimeGrid::new(cfg.t_final, cfg.nt)?;
        let friction = FrictionField::constant(&grid, &time, cfg.alpha);
        Ok(Setup { grid, time, friction })
    }

    fn control(&self, cfg: &SuiteConfig, stream: u64, i: usize) -> BoundaryControl {
        smooth_control(
            &self.grid,
            &self.time,
            &mut sample_rng(cfg.seed, stream, i),
            cfg.amplitude,
            cfg.p_exponent,
            f64::MAX,
        )
    }

    fn problem(&self, controls: BoundaryControl) -> StateProblem {
        StateProblem::new(
            self.grid.clone(),
            self.time,
            VelocityField::zeros(&self.grid),
            controls,
            self.friction.clone(),
        )
    }
}

fn collect<T>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

/// Energy of the state over the control size, `E / (‖y₀‖² + hp² + 1)`;
/// energies must grow with the control scaling.
fn energy_item(s: &Setup, cfg: &SuiteConfig) -> Result<(Vec<Option<f64>>, bool)> {
    let rows = collect(par_map_range(cfg.samples, |i| -> Result<Vec<(f64, f64)>> {
        let base = s.control(cfg, STREAM_CONTROL, i);
        let mut out = Vec::new();
        for &scale in &cfg.energy_scalings {
            let c = base.scaled(scale);
            let traj = solve_state(&s.problem(c.clone()))?;
            let e = energy_norm(&s.grid, &s.time, &s.friction, &traj.y, 0..s.time.n_slices());
            let hp = c.hp_norm(&s.grid, &s.time)?;
            out.push((e, hp));
        }
        Ok(out)
    }))?;
    let mut monotone = true;
    let mut ratios = Vec::new();
    for row in &rows {
        let mut order: Vec<(f64, (f64, f64))> = cfg.energy_scalings.iter().copied().zip(row.iter().copied()).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        monotone &= order.windows(2).all(|w| w[1].1 .0 >= w[0].1 .0);
        for &(e, hp) in row {
            ratios.push(ratio(e, 1.0 + hp * hp, 1.0));
        }
    }
    Ok((ratios, monotone))
}

/// `max_k ‖y(c+εd) − y(c)‖ / hp(εd)`; spread within each sample's sweep.
fn lipschitz_item(s: &Setup, cfg: &SuiteConfig) -> Result<Vec<Vec<Option<f64>>>> {
    collect(par_map_range(cfg.samples, |i| -> Result<Vec<Option<f64>>> {
        let base = s.control(cfg, STREAM_CONTROL, i);
        let dir = s.control(cfg, STREAM_DIRECTION, i);
        let y = solve_state(&s.problem(base.clone()))?;
        let mut out = Vec::new();
        for &eps in &cfg.lipschitz_eps {
            let pert = perturb(&base, eps, &dir);
            let y2 = solve_state(&s.problem(pert))?;
            let diff = y.y.iter().zip(&y2.y).map(|(a, b)| l2_norm(&s.grid, &a.sub(b))).fold(0.0, f64::max);
            let hp = dir.scaled(eps).hp_norm(&s.grid, &s.time)?;
            out.push(ratio(diff, hp, y.max_l2(&s.grid).max(1.0)));
        }
        Ok(out)
    }))
}

fn linearized_item(s: &Setup, cfg: &SuiteConfig) -> Result<Vec<Option<f64>>> {
    collect(par_map_range(cfg.samples, |i| -> Result<Option<f64>> {
        let pb = s.problem(s.control(cfg, STREAM_CONTROL, i));
        let base = solve_state(&pb)?;
        let dir = s.control(cfg, STREAM_DIRECTION, i);
        let z = solve_linearized(&pb, &base, &dir)?;
        let lhs = energy_norm(&s.grid, &s.time, &s.friction, &z.z, 0..s.time.n_slices());
        let hp = dir.hp_norm(&s.grid, &s.time)?;
        Ok(ratio(lhs, hp * hp, 1.0))
    }))
}

fn adjoint_item(s: &Setup, cfg: &SuiteConfig) -> Result<Vec<Option<f64>>> {
    collect(par_map_range(cfg.samples, |i| -> Result<Option<f64>> {
        let pb = s.problem(s.control(cfg, STREAM_CONTROL, i));
        let base = solve_state(&pb)?;
        // gradient parts of U are absorbed by π, so the ensemble is solenoidal
        let u: Vec<VelocityField> =
            random_solenoidal_source(&s.grid, &s.time, &mut sample_rng(cfg.seed, STREAM_SOURCE, i), 3)
                .into_iter()
                .map(|f| f.scaled(cfg.amplitude))
                .collect();
        let adj = solve_adjoint(&pb, &base, &u)?;
        let r = adjoint_energy_check(&s.grid, &s.time, &s.friction, &adj, &u);
        Ok(if r == 0.0 { None } else { Some(r) })
    }))
}

/// Per sample: discrepancies over the ε sweep.
fn gateaux_item(s: &Setup, cfg: &SuiteConfig) -> Result<Vec<Vec<(f64, f64)>>> {
    collect(par_map_range(cfg.samples, |i| -> Result<Vec<(f64, f64)>> {
        let pb = s.problem(s.control(cfg, STREAM_CONTROL, i));
        let base = solve_state(&pb)?;
        let dir = s.control(cfg, STREAM_DIRECTION, i);
        let rows = gateaux_discrepancy(&pb, &base, &dir, &cfg.gateaux_eps)?;
        Ok(rows.into_iter().map(|r| (r.eps, r.discrepancy)).collect())
    }))
}

fn duality_item(s: &Setup, cfg: &SuiteConfig) -> Result<Vec<Option<f64>>> {
    collect(par_map_range(cfg.samples, |i| -> Result<Option<f64>> {
        let pb = s.problem(s.control(cfg, STREAM_CONTROL, i));
        let base = solve_state(&pb)?;
        let dir = s.control(cfg, STREAM_DIRECTION, i);
        let u: Vec<VelocityField> = random_source(&s.grid, &s.time, &mut sample_rng(cfg.seed, STREAM_SOURCE, i), 3)
            .into_iter()
            .map(|f| f.scaled(cfg.amplitude))
            .collect();
        let z = solve_linearized(&pb, &base, &dir)?;
        let adj = solve_adjoint(&pb, &base, &u)?;
        let d = duality_residual(&s.grid, &s.time, &z, &adj, &u, &dir)?;
        Ok(if d.interior == 0.0 && d.boundary == 0.0 { None } else { Some(d.residual) })
    }))
}

/// Spread of `r(ε)` within each sweep, one entry per sample.
fn sweep_spread(rows: &[Vec<Option<f64>>]) -> Vec<Option<f64>> {
    rows.iter()
        .map(|row| {
            let vals: Vec<f64> = row.iter().flatten().copied().collect();
            if vals.is_empty() {
                return None;
            }
            let s = stats(&vals);
            Some(s.max / s.min)
        })
        .collect()
}

fn with_error(
    name: &str,
    criterion: Criterion,
    tol: f64,
    hash: &str,
    f: impl FnOnce() -> Result<InequalityReport>,
) -> InequalityReport {
    match f() {
        Ok(r) => r,
        Err(e) => {
            log::error!("{name}: {e}");
            failed(name, &e, criterion, tol, hash)
        }
    }
}

/// All line items; solver failures fail their own item only.
pub fn run_estimate_suite(cfg: &SuiteConfig) -> Result<Vec<InequalityReport>> {
    let hash = cfg.hash();
    let s = Setup::new(cfg)?;
    let (trig, stream) = lemma_samples(&s.grid, cfg);
    let mut out = Vec::new();
    for q in GNS_EXPONENTS {
        out.push(check_gns(&s.grid, &trig, q, &hash));
    }
    out.push(check_trace(&s.grid, &trig, &hash));
    out.push(with_error("korn", Criterion::MaxOverMedian, LEMMA_STABILITY, &hash, || {
        check_korn(&s.grid, &stream, &hash)
    }));
    out.push(check_mean_zero(&s.grid, &stream, &hash));

    out.push(with_error("energy_bound", Criterion::MaxOverMedian, f64::INFINITY, &hash, || {
        let (ratios, monotone) = energy_item(&s, cfg)?;
        let mut r = report("energy_bound", &ratios, Criterion::MaxOverMedian, f64::INFINITY, &hash);
        r.pass &= monotone;
        Ok(r)
    }));
    out.push(with_error("lipschitz", Criterion::SweepSpread, LIPSCHITZ_STABILITY, &hash, || {
        let rows = lipschitz_item(&s, cfg)?;
        let mut r = report("lipschitz", &sweep_spread(&rows), Criterion::Bound, LIPSCHITZ_STABILITY, &hash);
        r.criterion = Criterion::SweepSpread;
        Ok(r)
    }));
    out.push(with_error("linearized_estimate", Criterion::MaxOverMedian, ESTIMATE_STABILITY, &hash, || {
        Ok(report(
            "linearized_estimate",
            &linearized_item(&s, cfg)?,
            Criterion::MaxOverMedian,
            ESTIMATE_STABILITY,
            &hash,
        ))
    }));
    out.push(with_error("adjoint_estimate", Criterion::MaxOverMedian, ESTIMATE_STABILITY, &hash, || {
        Ok(report(
            "adjoint_estimate",
            &adjoint_item(&s, cfg)?,
            Criterion::MaxOverMedian,
            ESTIMATE_STABILITY,
            &hash,
        ))
    }));
    out.push(with_error("gateaux", Criterion::SweepSpread, GATEAUX_STABILITY, &hash, || {
        let rows = gateaux_item(&s, cfg)?;
        let mut monotone = true;
        let ratios: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|row| {
                let mut sorted = row.clone();
                sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
                monotone &= sorted.windows(2).all(|w| w[1].1 <= w[0].1);
                row.iter().map(|&(eps, d)| if d == 0.0 { None } else { Some(d / eps) }).collect()
            })
            .collect();
        let mut r = report("gateaux", &sweep_spread(&ratios), Criterion::Bound, GATEAUX_STABILITY, &hash);
        r.criterion = Criterion::SweepSpread;
        r.pass &= monotone;
        Ok(r)
    }));
    out.push(with_error("duality", Criterion::Bound, DUALITY_TOL, &hash, || {
        Ok(report("duality", &duality_item(&s, cfg)?, Criterion::Bound, DUALITY_TOL, &hash))
    }));
    Ok(out)
}

/// Fixed-width table for standard output.
pub fn format_table(reports: &[InequalityReport]) -> String {
    let mut out = format!(
        "{:<26} {:>7} {:>7} {:>12} {:>12} {:>12} {:>5}\n",
        "check", "samples", "trivial", "min", "median", "max", "pass"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<26} {:>7} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>5}\n",
            r.name,
            r.sample_count,
            r.trivial_count,
            r.min,
            r.median,
            r.max,
            if r.pass { "ok" } else { "FAIL" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::stream_velocity;
    use std::f64::consts::PI;

    #[test]
    fn constant_fields_are_trivial() {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let c = vec![VelocityField::from_fn(&g, |_, _| [0.3, -1.2])];
        for q in GNS_EXPONENTS {
            let r = check_gns(&g, &c, q, "");
            assert_eq!(r.trivial_count, 1);
            assert!(r.pass);
        }
        assert_eq!(check_trace(&g, &c, "").trivial_count, 1);
        let zero = vec![VelocityField::zeros(&g)];
        let k = check_korn(&g, &zero, "").unwrap();
        assert_eq!(k.trivial_count, 1);
        assert!(check_mean_zero(&g, &zero, "").pass);
    }

    #[test]
    fn trace_ratio_of_linear_field_matches_hand_integrals() {
        // v = (x, −y): ‖v − v_Ω‖²_Γ = 4/3 − h²/3, ‖v‖² = 2/3 + h²/3, ‖∇v‖² = 2
        let g = Grid::new(16, 16, 1.0, 1.0).unwrap();
        let v = VelocityField::from_fn(&g, |x, y| [x, -y]);
        let h2 = g.hx * g.hx;
        let expected = (4.0 / 3.0 - h2 / 3.0).sqrt() / ((2.0 / 3.0 + h2 / 3.0) * 2.0).powf(0.25);
        let r = check_trace(&g, &[v], "");
        assert!((r.max - expected).abs() < 1e-12, "{} {}", r.max, expected);
    }

    #[test]
    fn gns_ratio_is_stable_under_refinement() {
        let f = |x: f64, y: f64| [(2.0 * PI * x).sin() * (2.0 * PI * y).sin(), 0.0];
        let r: Vec<f64> = [16, 32]
            .iter()
            .map(|&n| {
                let g = Grid::new(n, n, 1.0, 1.0).unwrap();
                check_gns(&g, &[VelocityField::from_fn(&g, f)], 4.0, "").max
            })
            .collect();
        assert!(r[0].is_finite() && (r[1] / r[0] - 1.0).abs() < 0.1, "{r:?}");
    }

    #[test]
    fn korn_rejects_fields_outside_v_and_mean_zero_detects_them() {
        let g = Grid::new(8, 8, 1.0, 1.0).unwrap();
        let inside = stream_velocity(&g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
        let k = check_korn(&g, std::slice::from_ref(&inside), "").unwrap();
        assert!(k.max.is_finite() && k.max > 0.0);
        assert!(check_mean_zero(&g, &[inside], "").pass);
        let outside = VelocityField::from_fn(&g, |x, _| [x * (1.0 - x) + 0.5, 0.0]);
        assert!(check_korn(&g, std::slice::from_ref(&outside), "").is_err());
        let m = check_mean_zero(&g, &[outside], "");
        assert!(!m.pass && m.max > 0.1);
    }

    #[test]
    fn null_configuration_passes_trivially() {
        let cfg = SuiteConfig {
            nx: 6,
            ny: 6,
            nt: 3,
            samples: 2,
            amplitude: 0.0,
            ..Default::default()
        };
        for r in run_estimate_suite(&cfg).unwrap() {
            assert!(r.pass, "{r:?}");
            assert_eq!(r.trivial_count, r.sample_count, "{}", r.name);
        }
    }

    #[test]
    fn small_suite_passes_and_is_deterministic() {
        let cfg = SuiteConfig {
            nx: 8,
            ny: 8,
            nt: 8,
            samples: 3,
            ..Default::default()
        };
        let a = run_estimate_suite(&cfg).unwrap();
        for r in &a {
            assert!(r.pass, "{r:?}");
        }
        let b = run_estimate_suite(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

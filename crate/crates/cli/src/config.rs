//! Run configuration: TOML schema, validation and resolution into solver inputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use slipctl_core::control::OptimizeOptions;
use slipctl_core::fields::{check_flux, normal_trace, BoundaryControl, BoundaryScalar, FrictionField, VelocityField};
use slipctl_core::io::{read_velocity, TrajectoryManifest};
use slipctl_core::lifting::LiftingSolver;
use slipctl_core::mesh::{Grid, TimeGrid};
use slipctl_core::samples::{rng, smooth_control};
use slipctl_core::state::StateProblem;
use slipctl_core::verify::SuiteConfig;

use crate::expr::{eval_terms, Term, WallTable};
use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub domain: Domain,
    pub time: Time,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub control: Control,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub optimizer: OptimizeOptions,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub grad_check: GradCheck,
    #[serde(default)]
    pub verify: SuiteConfig,
    #[serde(default)]
    pub lift: Lift,
    #[serde(default)]
    pub debug: Debug,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    #[serde(rename = "Lx")]
    pub lx: f64,
    #[serde(rename = "Ly")]
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Time {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub nt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Constant(f64),
    PerWall(WallTable),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub nu: f64,
    pub alpha: AlphaSpec,
    pub alpha_min: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            nu: 1.0,
            alpha: AlphaSpec::Constant(1.0),
            alpha_min: slipctl_core::fields::DEFAULT_ALPHA_MIN,
        }
    }
}

/// Initial velocity; `a(0)` is always taken from its normal trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    Zero,
    /// Discrete harmonic lifting of the control table at `t = 0`.
    #[default]
    Lift,
    /// `y = (c1 + c2·y, 0)`.
    Shear { c1: f64, c2: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomControl {
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Control {
    #[serde(rename = "R")]
    pub radius: f64,
    pub p_exponent: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub a: WallTable,
    pub b: WallTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomControl>,
}

impl Default for Control {
    fn default() -> Self {
        Control {
            radius: 1.0,
            p_exponent: 3.0,
            lambda1: 0.0,
            lambda2: 0.0,
            a: WallTable::default(),
            b: WallTable::default(),
            random: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    #[default]
    None,
    Zero,
    /// Velocity components as term lists in `(x, y, t)`.
    Expression {
        #[serde(default)]
        u: Vec<Term>,
        #[serde(default)]
        v: Vec<Term>,
    },
    /// State driven by another control: a realizable target.
    Control {
        #[serde(default)]
        a: WallTable,
        #[serde(default)]
        b: WallTable,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        random: Option<RandomControl>,
    },
    /// Trajectory directory written by `solve` with cadence 1.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub cadence: usize,
}

impl Default for Output {
    fn default() -> Self {
        Output { dir: None, cadence: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheck {
    pub directions: usize,
    pub eps: Vec<f64>,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            directions: 3,
            eps: vec![1e-3, 1e-4, 1e-5],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lift {
    /// Control slice to lift.
    pub slice: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Debug {
    /// Test hook: perturbs the adjoint-based gradient so `grad-check` must fail.
    pub corrupt_adjoint: bool,
}

fn config_err(msg: impl std::fmt::Display) -> Failure {
    Failure::Config(msg.to_string())
}

/// A parsed config plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl Loaded {
    pub fn from_file(path: &Path, seed: Option<u64>) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base_dir, seed).map_err(|f| match f {
            Failure::Config(msg) => Failure::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_str(text: &str, base_dir: PathBuf, seed: Option<u64>) -> Result<Self, Failure> {
        let mut config: RunConfig = toml::from_str(text).map_err(config_err)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        // the master seed drives every random stream
        config.optimizer.seed = config.seed;
        config.verify.seed = config.seed;
        let loaded = Loaded { config, base_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Resolved config as written next to the outputs; the output location is not part of it.
    pub fn resolved_toml(&self) -> String {
        let mut c = self.config.clone();
        c.output.dir = None;
        toml::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.resolved_toml().as_bytes()))
    }

    pub fn grid(&self) -> Result<Grid, Failure> {
        let d = &self.config.domain;
        Grid::new(d.nx, d.ny, d.lx, d.ly).map_err(config_err)
    }

    pub fn time(&self) -> Result<TimeGrid, Failure> {
        TimeGrid::new(self.config.time.t_final, self.config.time.nt).map_err(config_err)
    }

    fn validate(&self) -> Result<(), Failure> {
        let c = &self.config;
        self.grid()?;
        self.time()?;
        if !(c.physics.nu.is_finite() && c.physics.nu > 0.0) {
            return Err(config_err(format!("physics.nu must be positive, got {}", c.physics.nu)));
        }
        if !(c.physics.alpha_min.is_finite() && c.physics.alpha_min > 0.0) {
            return Err(config_err("physics.alpha_min must be positive"));
        }
        let ctl = &c.control;
        if !(ctl.radius.is_finite() && ctl.radius > 0.0) {
            return Err(config_err(format!("control.R must be positive, got {}", ctl.radius)));
        }
        if !(ctl.p_exponent.is_finite() && ctl.p_exponent > 2.0) {
            return Err(config_err(format!("control.p_exponent must exceed 2, got {}", ctl.p_exponent)));
        }
        for (name, l) in [("lambda1", ctl.lambda1), ("lambda2", ctl.lambda2)] {
            if !(l.is_finite() && l >= 0.0) {
                return Err(config_err(format!("control.{name} must be ≥ 0, got {l}")));
            }
        }
        ctl.a.check().map_err(|e| config_err(format!("control.a: {e}")))?;
        ctl.b.check().map_err(|e| config_err(format!("control.b: {e}")))?;
        if let AlphaSpec::PerWall(t) = &c.physics.alpha {
            t.check().map_err(|e| config_err(format!("physics.alpha: {e}")))?;
        }
        if c.output.cadence == 0 {
            return Err(config_err("output.cadence must be ≥ 1"));
        }
        if c.grad_check.eps.is_empty() || c.grad_check.eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(config_err("grad_check.eps must be a non-empty list of positive steps"));
        }
        if c.lift.slice > c.time.nt {
            return Err(config_err(format!("lift.slice {} exceeds nt = {}", c.lift.slice, c.time.nt)));
        }
        for p in [self.initial_file(), self.target_file()].into_iter().flatten() {
            if !p.exists() {
                return Err(config_err(format!("{} does not exist", p.display())));
            }
        }
        self.friction()?;
        self.raw_controls()?;
        Ok(())
    }

    fn initial_file(&self) -> Option<PathBuf> {
        match &self.config.initial {
            Initial::File { path } => Some(self.path(path)),
            _ => None,
        }
    }

    fn target_file(&self) -> Option<PathBuf> {
        match &self.config.target {
            Target::File { path } => Some(self.path(path).join("manifest.json")),
            _ => None,
        }
    }

    pub fn friction(&self) -> Result<FrictionField, Failure> {
        let (grid, time) = (self.grid()?, self.time()?);
        let phys = &self.config.physics;
        let field = match &phys.alpha {
            AlphaSpec::Constant(a) => FrictionField::constant(&grid, &time, *a),
            AlphaSpec::PerWall(table) => FrictionField {
                alpha: (0..time.n_slices()).map(|k| table.sample(&grid, time.time(k))).collect(),
            },
        };
        field
            .check(&grid, &time, phys.alpha_min)
            .map_err(|e| config_err(format!("physics.alpha: {e}")))?;
        Ok(field)
    }

    /// Control tables sampled on every slice, plus the seeded random part.
    pub fn raw_controls(&self) -> Result<BoundaryControl, Failure> {
        let ctl = &self.config.control;
        let (grid, time) = (self.grid()?, self.time()?);
        let c = sample_control(&grid, &time, &ctl.a, &ctl.b, ctl.random.as_ref(), self.config.seed, ctl);
        for (k, a) in c.a.iter().enumerate() {
            check_flux(&grid, &a.values)
                .map_err(|e| config_err(format!("control.a at t = {}: {e}", time.time(k))))?;
        }
        Ok(c)
    }

    pub fn initial_velocity(&self, grid: &Grid, a0: &BoundaryScalar) -> Result<VelocityField, Failure> {
        match &self.config.initial {
            Initial::Zero => Ok(VelocityField::zeros(grid)),
            Initial::Lift => {
                let lift = LiftingSolver::new(grid)
                    .and_then(|s| s.solve(a0))
                    .map_err(|e| Failure::Solver(format!("initial lifting: {e}")))?;
                Ok(lift.grad_h)
            }
            Initial::Shear { c1, c2 } => Ok(VelocityField::from_fn(grid, |_, y| [c1 + c2 * y, 0.0])),
            Initial::File { path } => {
                let (_, y) = read_velocity(&self.path(path), grid).map_err(config_err)?;
                Ok(y)
            }
        }
    }

    pub fn problem(&self) -> Result<StateProblem, Failure> {
        let (grid, time) = (self.grid()?, self.time()?);
        let mut controls = self.raw_controls()?;
        let y0 = self.initial_velocity(&grid, &controls.a[0])?;
        controls.a[0] = normal_trace(&grid, &y0);
        let mut pb = StateProblem::new(grid, time, y0, controls, self.friction()?);
        pb.viscosity = self.config.physics.nu;
        pb.alpha_min = self.config.physics.alpha_min;
        pb.validate().map_err(|e| config_err(format!("initial data: {e}")))?;
        Ok(pb)
    }

    /// Target velocity per slice, solving for it when the target is control-driven.
    pub fn target(&self, problem: &StateProblem) -> Result<Option<Vec<VelocityField>>, Failure> {
        let (grid, time) = (&problem.grid, &problem.time);
        let slices = time.n_slices();
        match &self.config.target {
            Target::None => Ok(None),
            Target::Zero => Ok(Some(vec![VelocityField::zeros(grid); slices])),
            Target::Expression { u, v } => Ok(Some(
                (0..slices)
                    .map(|k| {
                        let t = time.time(k);
                        VelocityField::from_fn(grid, |x, y| [eval_terms(u, x, y, t), eval_terms(v, x, y, t)])
                    })
                    .collect(),
            )),
            Target::Control { a, b, random } => {
                let ctl = &self.config.control;
                let mut c = sample_control(grid, time, a, b, random.as_ref(), self.config.seed ^ TARGET_STREAM, ctl);
                for (k, s) in c.a.iter().enumerate().skip(1) {
                    check_flux(grid, &s.values)
                        .map_err(|e| config_err(format!("target.a at t = {}: {e}", time.time(k))))?;
                }
                c.a[0] = problem.controls.a[0].clone();
                let traj = slipctl_core::state::solve_state(&problem.with_controls(c))
                    .map_err(|e| Failure::Solver(format!("target state: {e}")))?;
                Ok(Some(traj.y))
            }
            Target::File { path } => {
                let dir = self.path(path);
                let text = fs::read(dir.join("manifest.json")).map_err(|e| config_err(format!("{}: {e}", dir.display())))?;
                let m: TrajectoryManifest = serde_json::from_slice(&text).map_err(config_err)?;
                if m.nx != grid.nx || m.ny != grid.ny || m.nt != time.nt || m.cadence != 1 {
                    return Err(config_err(format!(
                        "{}: target trajectory must match the grid and time grid with cadence 1",
                        dir.display()
                    )));
                }
                m.velocity
                    .iter()
                    .map(|f| read_velocity(&dir.join(f), grid).map(|(_, y)| y).map_err(config_err))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Some)
            }
        }
    }
}

const TARGET_STREAM: u64 = 0x7A46_E7C1_0000_0001;

fn sample_control(
    grid: &Grid,
    time: &TimeGrid,
    a: &WallTable,
    b: &WallTable,
    random: Option<&RandomControl>,
    seed: u64,
    ctl: &Control,
) -> BoundaryControl {
    let mut c = BoundaryControl {
        a: (0..time.n_slices()).map(|k| a.sample(grid, time.time(k))).collect(),
        b: (0..time.n_slices()).map(|k| b.sample(grid, time.time(k))).collect(),
        p_exponent: ctl.p_exponent,
        radius: ctl.radius,
    };
    if let Some(r) = random {
        let extra = smooth_control(grid, time, &mut rng(r.seed.unwrap_or(seed)), r.amplitude, ctl.p_exponent, ctl.radius);
        c = c.plus(1.0, &extra);
    }
    c
}

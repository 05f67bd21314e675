//! Experiment configuration: named solved fields plus an ordered list of checks.
//!
//! ```json
//! {
//!   "scenario": "demo",
//!   "seed": 7,
//!   "fields": {
//!     "sine": {
//!       "m": 1.5,
//!       "grid": { "lo": 0.0, "hi": 1.0, "points": 64 },
//!       "initial": { "kind": "sine", "base": 1.0, "amplitude": 0.3 },
//!       "t_final": 0.5
//!     }
//!   },
//!   "checks": [ { "id": "est1", "field": "sine" } ]
//! }
//! ```
//!
//! Optional parameters left out of a check are filled in by [`ExperimentConfig::resolve`]
//! and echoed back in the report, so the echo alone reproduces the run.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::{discretization_tolerance, Case};
use crate::exact::{Barenblatt, ConstantSolution, ExactSolution, TravelingWave};
use crate::fbsde::TiltMode;
use crate::grid::{
    max_diffusivity, min_max, solve_with, stable_dt, Axis, GridSpec, ScalarFieldHistory,
    SolveDiagnostics, SolveOptions, TimeMesh,
};
use crate::martingale::{beta_roots, eps_from_beta, eps_from_delta, g_delta_star, Functional};
use crate::transform::Regime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub fields: BTreeMap<String, FieldConfig>,
    #[serde(default)]
    pub fbsde: FbsdeDefaults,
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbsdeDefaults {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_sde_dt")]
    pub dt: f64,
}

impl Default for FbsdeDefaults {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            dt: default_sde_dt(),
        }
    }
}

fn default_paths() -> usize {
    10_000
}

fn default_sde_dt() -> f64 {
    1e-3
}

fn default_cfl() -> f64 {
    0.9
}

fn one() -> usize {
    1
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    #[serde(default = "periodic")]
    pub boundary: BoundaryKind,
}

fn periodic() -> BoundaryKind {
    BoundaryKind::Periodic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Constant {
        value: f64,
    },
    /// `base + amplitude · Π_a sin(2π k (x_a − lo)/L)`.
    Sine {
        base: f64,
        amplitude: f64,
        #[serde(default = "one_u32")]
        wavenumber: u32,
    },
    /// Dirichlet data from a traveling wave; `margin` is the smallest admissible `u`.
    TravelingWave {
        speed: f64,
        #[serde(default)]
        shift: f64,
        margin: f64,
    },
    Barenblatt {
        c: f64,
        t0: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        margin: f64,
    },
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub m: f64,
    pub grid: GridConfig,
    pub initial: InitialData,
    pub t_final: f64,
    /// Time step; defaults to `cfl` times the stability limit of the initial data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "one")]
    pub record_every: usize,
}

impl FieldConfig {
    pub fn oracle(&self) -> Option<Arc<dyn ExactSolution>> {
        let m = self.m;
        match &self.initial {
            InitialData::Constant { value } => Some(Arc::new(ConstantSolution { value: *value })),
            InitialData::Sine { .. } => None,
            InitialData::TravelingWave { speed, shift, .. } => Some(Arc::new(TravelingWave {
                m,
                speed: *speed,
                shift: *shift,
            })),
            InitialData::Barenblatt { c, t0, center, .. } => {
                let mut b = Barenblatt::new(m, self.grid.dim, *c, *t0);
                if let Some(center) = center {
                    b.center = center.clone();
                }
                Some(Arc::new(b))
            }
        }
    }

    /// Grid with `points` per axis (the configured count when `None`).
    pub fn grid(&self, points: Option<usize>) -> Result<GridSpec> {
        let g = &self.grid;
        let axes = vec![Axis::new(g.lo, g.hi, points.unwrap_or(g.points)); g.dim];
        match g.boundary {
            BoundaryKind::Periodic => GridSpec::periodic(axes),
            BoundaryKind::Dirichlet => {
                let oracle = self.oracle().ok_or_else(|| {
                    Error::config("initial", "dirichlet grids need data with a closed form")
                })?;
                GridSpec::dirichlet(axes, oracle)
            }
        }
    }

    pub fn initial_values(&self, grid: &GridSpec) -> Vec<f64> {
        match &self.initial {
            InitialData::Sine {
                base,
                amplitude,
                wavenumber,
            } => {
                let (lo, len) = (self.grid.lo, self.grid.hi - self.grid.lo);
                let k = 2.0 * PI * *wavenumber as f64 / len;
                grid.sample(|x| {
                    base + amplitude * x.iter().map(|&xa| (k * (xa - lo)).sin()).product::<f64>()
                })
            }
            _ => {
                let oracle = self.oracle().expect("closed-form data");
                grid.sample(|x| oracle.value(0.0, x))
            }
        }
    }

    /// Angular wavenumber of sine data, zero otherwise.
    pub fn wavenumber(&self) -> f64 {
        match &self.initial {
            InitialData::Sine { wavenumber, .. } => {
                2.0 * PI * *wavenumber as f64 / (self.grid.hi - self.grid.lo)
            }
            _ => 0.0,
        }
    }

    pub fn mesh(&self, grid: &GridSpec, u0: &[f64]) -> Result<TimeMesh> {
        match self.dt {
            Some(dt) => TimeMesh::new(self.t_final, dt),
            None => TimeMesh::with_max_dt(self.t_final, self.cfl * stable_dt(u0, self.m, grid)),
        }
    }

    /// Solve on the configured grid, or with `points` per axis. An explicit `dt` is
    /// scaled with `h²` when refining.
    pub fn solve(&self, points: Option<usize>) -> Result<(ScalarFieldHistory, SolveDiagnostics)> {
        let grid = self.grid(points)?;
        let u0 = self.initial_values(&grid);
        let mesh = match (self.dt, points) {
            (Some(dt), Some(_)) => {
                let r = grid.spacing(0) / self.grid(None)?.spacing(0);
                TimeMesh::with_max_dt(self.t_final, dt * r * r)?
            }
            _ => self.mesh(&grid, &u0)?,
        };
        let opts = SolveOptions {
            record_every: self.record_every,
            ..SolveOptions::default()
        };
        solve_with(&u0, self.m, &mesh, &grid, &opts)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let at = |f: &str| format!("fields.{name}.{f}");
        if !(self.m > 0.0 && self.m.is_finite()) || self.m == 1.0 {
            return Err(Error::config(
                at("m"),
                format!("need m > 0 and m != 1, got {}", self.m),
            ));
        }
        if !(1..=2).contains(&self.grid.dim) {
            return Err(Error::config(
                at("grid.dim"),
                "only 1 and 2 dimensions are supported",
            ));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::config(at("t_final"), "must be positive"));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::config(at("cfl"), "must lie in (0, 1]"));
        }
        let grid = self
            .grid(None)
            .map_err(|e| Error::config(at("grid"), e.to_string()))?;
        let u0 = self.initial_values(&grid);
        let (lo, _) = min_max(&u0);
        if !(lo > 0.0) {
            return Err(Error::config(
                at("initial"),
                format!("initial data must be positive, min {lo}"),
            ));
        }
        if let InitialData::TravelingWave { margin, .. } | InitialData::Barenblatt { margin, .. } =
            &self.initial
        {
            let oracle = self.oracle().expect("closed-form data");
            for t in [0.0, self.t_final] {
                let low = grid
                    .sample(|x| oracle.value(t, x))
                    .into_iter()
                    .fold(f64::INFINITY, f64::min);
                if low < *margin {
                    return Err(Error::config(
                        at("initial.margin"),
                        format!("solution drops to {low} < {margin} at t = {t}"),
                    ));
                }
            }
        }
        self.mesh(&grid, &u0)
            .map_err(|e| Error::config(at("dt"), e.to_string()))?;
        Ok(())
    }

    /// Relative discretization tolerance used by the bound checks when none is given.
    pub fn auto_tolerance(&self) -> Result<f64> {
        let grid = self.grid(None)?;
        let u0 = self.initial_values(&grid);
        let mesh = self.mesh(&grid, &u0)?;
        Ok(discretization_tolerance(
            self.wavenumber(),
            grid.max_spacing(),
            max_diffusivity(&u0, self.m),
            mesh.dt,
        ))
    }

    fn default_x0(&self) -> Vec<f64> {
        vec![self.grid.lo + 0.3 * (self.grid.hi - self.grid.lo); self.grid.dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub field: String,
    /// Relative tolerance on the observed left-hand side.
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbParams {
    pub field: String,
    #[serde(default)]
    pub tolerance: f64,
}

/// Shared path-simulation parameters. Unset values come from the config-level
/// `fbsde` block, the field, and the regime defaults of the check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathParams {
    pub field: String,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "tilted")]
    pub tilt_mode: TiltMode,
    #[serde(default = "ten")]
    pub checkpoints: usize,
}

fn tilted() -> TiltMode {
    TiltMode::TiltedDrift
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QIntegralParams {
    #[serde(flatten)]
    pub paths: PathParams,
    #[serde(default = "z2")]
    pub functional: Functional,
}

fn z2() -> Functional {
    Functional::Z2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsdeParams {
    #[serde(flatten)]
    pub paths: PathParams,
    /// Path time steps; consecutive entries are compared for the RMS ratio.
    #[serde(default)]
    pub dts: Option<Vec<f64>>,
    #[serde(default = "ratio_min")]
    pub ratio_min: f64,
    #[serde(default = "ratio_max")]
    pub ratio_max: f64,
}

fn ratio_min() -> f64 {
    1.2
}

fn ratio_max() -> f64 {
    1.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    #[serde(flatten)]
    pub paths: PathParams,
    #[serde(default = "fd_delta")]
    pub delta: f64,
    #[serde(default = "flow_tol")]
    pub tolerance: f64,
    #[serde(default = "inverse_fraction")]
    pub inverse_fraction: f64,
}

fn fd_delta() -> f64 {
    1e-4
}

fn flow_tol() -> f64 {
    0.05
}

fn inverse_fraction() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditParams {
    #[serde(default = "all_cases")]
    pub cases: Vec<u8>,
}

fn all_cases() -> Vec<u8> {
    vec![1, 2, 3, 4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceParams {
    pub field: String,
    /// Interior points per axis at each refinement.
    pub points: Vec<usize>,
    #[serde(default = "conv_min")]
    pub ratio_min: f64,
    #[serde(default = "conv_max")]
    pub ratio_max: f64,
}

fn conv_min() -> f64 {
    1.7
}

fn conv_max() -> f64 {
    2.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConservationParams {
    pub field: String,
    #[serde(default = "mass_tol")]
    pub mass_tol: f64,
    /// Allowed one-step overshoot of the extrema, relative to `max u₀`.
    #[serde(default = "mp_tol")]
    pub max_principle_tol: f64,
}

fn mass_tol() -> f64 {
    1e-12
}

fn mp_tol() -> f64 {
    1e-13
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualParams {
    pub field: String,
    #[serde(default = "conv_min")]
    pub ratio_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraParams {
    #[serde(default = "twenty")]
    pub samples: usize,
    #[serde(default = "hundred")]
    pub sweep: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn twenty() -> usize {
    20
}

fn hundred() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum CheckSpec {
    Est1(BoundParams),
    Thm3(BoundParams),
    E671(BoundParams),
    Thm6(BoundParams),
    #[serde(rename = "thm1_case1")]
    Thm1Case1(BoundParams),
    #[serde(rename = "thm1_case2")]
    Thm1Case2(BoundParams),
    #[serde(rename = "thm1_case3")]
    Thm1Case3(BoundParams),
    #[serde(rename = "thm1_case4")]
    Thm1Case4(BoundParams),
    AbDiagnostic(AbParams),
    BsdeResidual(BsdeParams),
    SubmartingaleZ2(PathParams),
    SubmartingaleM(PathParams),
    QIntegral(QIntegralParams),
    FlowZ(FlowParams),
    EquivalenceAudit(AuditParams),
    SolverConvergence(ConvergenceParams),
    Conservation(ConservationParams),
    PressureResidual(ResidualParams),
    ConstantAlgebra(AlgebraParams),
    MeasureChange(PathParams),
    TangentFd(FlowParams),
}

impl CheckSpec {
    pub fn id(&self) -> &'static str {
        match self {
            CheckSpec::Est1(_) => "est1",
            CheckSpec::Thm3(_) => "thm3",
            CheckSpec::E671(_) => "e671",
            CheckSpec::Thm6(_) => "thm6",
            CheckSpec::Thm1Case1(_) => "thm1_case1",
            CheckSpec::Thm1Case2(_) => "thm1_case2",
            CheckSpec::Thm1Case3(_) => "thm1_case3",
            CheckSpec::Thm1Case4(_) => "thm1_case4",
            CheckSpec::AbDiagnostic(_) => "ab_diagnostic",
            CheckSpec::BsdeResidual(_) => "bsde_residual",
            CheckSpec::SubmartingaleZ2(_) => "submartingale_z2",
            CheckSpec::SubmartingaleM(_) => "submartingale_m",
            CheckSpec::QIntegral(_) => "q_integral",
            CheckSpec::FlowZ(_) => "flow_z",
            CheckSpec::EquivalenceAudit(_) => "equivalence_audit",
            CheckSpec::SolverConvergence(_) => "solver_convergence",
            CheckSpec::Conservation(_) => "conservation",
            CheckSpec::PressureResidual(_) => "pressure_residual",
            CheckSpec::ConstantAlgebra(_) => "constant_algebra",
            CheckSpec::MeasureChange(_) => "measure_change",
            CheckSpec::TangentFd(_) => "tangent_fd",
        }
    }

    /// The bound case behind an estimate check.
    pub fn case(&self) -> Option<Case> {
        Case::from_id(self.id())
    }

    /// Name of the solved field the check reads, if any.
    pub fn field(&self) -> Option<&str> {
        match self {
            CheckSpec::Est1(p)
            | CheckSpec::Thm3(p)
            | CheckSpec::E671(p)
            | CheckSpec::Thm6(p)
            | CheckSpec::Thm1Case1(p)
            | CheckSpec::Thm1Case2(p)
            | CheckSpec::Thm1Case3(p)
            | CheckSpec::Thm1Case4(p) => Some(&p.field),
            CheckSpec::AbDiagnostic(p) => Some(&p.field),
            CheckSpec::BsdeResidual(p) => Some(&p.paths.field),
            CheckSpec::SubmartingaleZ2(p)
            | CheckSpec::SubmartingaleM(p)
            | CheckSpec::MeasureChange(p) => Some(&p.field),
            CheckSpec::QIntegral(p) => Some(&p.paths.field),
            CheckSpec::FlowZ(p) | CheckSpec::TangentFd(p) => Some(&p.paths.field),
            CheckSpec::SolverConvergence(p) => Some(&p.field),
            CheckSpec::Conservation(p) => Some(&p.field),
            CheckSpec::PressureResidual(p) => Some(&p.field),
            CheckSpec::EquivalenceAudit(_) | CheckSpec::ConstantAlgebra(_) => None,
        }
    }
}

/// Default tilt of a path check: the choice under which the functional it studies is a
/// submartingale.
pub fn default_epsilon(functional: Functional, m: f64, n: usize) -> Result<f64> {
    Ok(match (Regime::of(m)?, functional) {
        (Regime::Super, Functional::Z2) => (5.0 - m) / 2.0,
        (Regime::Super, Functional::MOverU) => (3.0 + m) / 2.0,
        (Regime::Sub, Functional::Z2) => eps_from_delta(Regime::Sub, m, g_delta_star(m)),
        (Regime::Sub, Functional::MOverU) => {
            let b2 = beta_roots(m, n).map(|(_, b)| b).unwrap_or(0.0);
            eps_from_beta(Regime::Sub, m, b2)
        }
    })
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("<root>", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validate and fill every optional parameter.
    pub fn resolve(mut self) -> Result<Self> {
        if self.scenario.trim().is_empty() {
            return Err(Error::config("scenario", "must not be empty"));
        }
        for (name, f) in &self.fields {
            f.validate(name)?;
        }
        if !(self.fbsde.n_paths > 0 && self.fbsde.dt > 0.0) {
            return Err(Error::config("fbsde", "n_paths and dt must be positive"));
        }
        let defaults = self.fbsde.clone();
        let seed = self.seed;
        let fields = self.fields.clone();
        for (i, check) in self.checks.iter_mut().enumerate() {
            let at = |f: &str| format!("checks[{i}].{f}");
            let field = match check.field() {
                Some(name) => Some(fields.get(name).ok_or_else(|| {
                    Error::config(at("field"), format!("unknown field `{name}`"))
                })?),
                None => None,
            };
            let dim = field.map_or(1, |f| f.grid.dim);
            let fill = |p: &mut PathParams, functional: Option<Functional>| -> Result<()> {
                let f = field.expect("path checks read a field");
                if p.epsilon.is_none() {
                    p.epsilon = Some(match functional {
                        Some(func) => default_epsilon(func, f.m, dim)?,
                        None => 0.0,
                    });
                }
                p.t_final.get_or_insert(f.t_final);
                p.dt.get_or_insert(defaults.dt);
                p.n_paths.get_or_insert(defaults.n_paths);
                p.x0.get_or_insert_with(|| f.default_x0());
                p.seed.get_or_insert(seed);
                if p.x0.as_ref().map(Vec::len) != Some(dim) {
                    return Err(Error::config(at("x0"), format!("needs {dim} coordinates")));
                }
                if p.t_final.unwrap() > f.t_final + 1e-12 {
                    return Err(Error::config(at("t_final"), "exceeds the field horizon"));
                }
                if p.checkpoints == 0 {
                    return Err(Error::config(at("checkpoints"), "must be positive"));
                }
                Ok(())
            };
            match check {
                CheckSpec::Est1(p)
                | CheckSpec::Thm3(p)
                | CheckSpec::E671(p)
                | CheckSpec::Thm6(p)
                | CheckSpec::Thm1Case1(p)
                | CheckSpec::Thm1Case2(p)
                | CheckSpec::Thm1Case3(p)
                | CheckSpec::Thm1Case4(p) => {
                    if p.tolerance.is_none() {
                        p.tolerance = Some(field.unwrap().auto_tolerance()?);
                    }
                }
                CheckSpec::AbDiagnostic(_)
                | CheckSpec::Conservation(_)
                | CheckSpec::PressureResidual(_) => {}
                CheckSpec::BsdeResidual(p) => {
                    fill(&mut p.paths, None)?;
                    let dt = p.paths.dt.unwrap();
                    let dts = p.dts.get_or_insert_with(|| vec![dt, dt / 2.0]);
                    if dts.is_empty() || dts.iter().any(|&d| !(d > 0.0)) {
                        return Err(Error::config(at("dts"), "need positive time steps"));
                    }
                }
                CheckSpec::SubmartingaleZ2(p) => fill(p, Some(Functional::Z2))?,
                CheckSpec::SubmartingaleM(p) => fill(p, Some(Functional::MOverU))?,
                CheckSpec::MeasureChange(p) => fill(p, Some(Functional::Z2))?,
                CheckSpec::QIntegral(p) => fill(&mut p.paths, Some(p.functional))?,
                CheckSpec::FlowZ(p) | CheckSpec::TangentFd(p) => fill(&mut p.paths, None)?,
                CheckSpec::EquivalenceAudit(p) => {
                    if p.cases.is_empty() || p.cases.iter().any(|c| !(1..=4).contains(c)) {
                        return Err(Error::config(at("cases"), "cases must lie in 1..=4"));
                    }
                }
                CheckSpec::SolverConvergence(p) => {
                    if p.points.len() < 2 {
                        return Err(Error::config(at("points"), "need at least two resolutions"));
                    }
                    if field.unwrap().grid.boundary != BoundaryKind::Dirichlet {
                        return Err(Error::config(
                            at("field"),
                            "convergence needs a dirichlet field with a closed form",
                        ));
                    }
                }
                CheckSpec::ConstantAlgebra(p) => {
                    p.seed.get_or_insert(seed);
                }
            }
        }
        Ok(self)
    }
}

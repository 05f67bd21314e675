//! Check catalog and execution of a resolved [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    AbParams, AlgebraParams, AuditParams, BoundParams, BsdeParams, CheckSpec, ConservationParams,
    ConvergenceParams, ExperimentConfig, FieldConfig, FlowParams, PathParams, QIntegralParams,
    ResidualParams,
};
use crate::error::{Error, Result};
use crate::estimates::{bound_check, equivalence_audit, Case, CHECK_FROM};
use crate::fbsde::{
    bsde_residual, evaluate_yz, flow_z_check, girsanov_weights, simulate_forward, simulate_tangent,
    tangent_fd_check, CoefficientField, PathEnsemble, SimParams, TiltMode,
};
use crate::grid::{ScalarFieldHistory, SolveDiagnostics};
use crate::martingale::{
    beta_roots, empirical_submartingale, g_delta, g_delta_star, h_beta, q_integral_bound,
    remainder_audit, submartingale_hypothesis, z2_drift_super, Functional,
};
use crate::transform::{
    aronson_benilan_margin, pressure_pde_residual, PressureHistory, ResidualSlice,
};

/// Significance used by the residual and measure-change checks.
pub const SIGMAS: f64 = 3.0;
/// Largest relative defect accepted from the completed-square identities.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Tolerances of the constant algebra battery.
pub const ROOT_TOL: f64 = 1e-10;
pub const CLOSED_FORM_TOL: f64 = 1e-12;
/// Slices sampled by the Aronson-Benilan diagnostic.
const AB_SLICES: usize = 200;

pub struct CatalogEntry {
    pub id: &'static str,
    pub summary: &'static str,
    /// `(name, type and default)`.
    pub params: &'static [(&'static str, &'static str)],
}

const BOUND: &[(&str, &str)] = &[
    ("field", "string"),
    ("tolerance", "number, default from grid and data"),
];
const PATHS: &[(&str, &str)] = &[
    ("field", "string"),
    ("epsilon", "number, default per check"),
    ("t_final", "number, default field horizon"),
    ("dt", "number, default fbsde.dt"),
    ("n_paths", "integer, default fbsde.n_paths"),
    ("x0", "array, default 30% into each axis"),
    ("seed", "integer, default config seed"),
    ("tilt_mode", "tilted_drift | density_weights"),
    ("checkpoints", "integer, default 10"),
];
const FLOW: &[(&str, &str)] = &[
    ("<path parameters>", "as for submartingale_z2"),
    ("delta", "number, default 1e-4"),
    ("tolerance", "number, default 0.05"),
    ("inverse_fraction", "number, default 0.99"),
];

pub const CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        id: "est1",
        summary: "((m-1)f+m)|grad f|^2 <= 2|f0|^2/t on a solved field",
        params: BOUND,
    },
    CatalogEntry {
        id: "thm3",
        summary: "|grad f|^2 <= 2|f0|/(mt), n = 1",
        params: BOUND,
    },
    CatalogEntry {
        id: "e671",
        summary: "|grad f| bound for fast diffusion",
        params: BOUND,
    },
    CatalogEntry {
        id: "thm6",
        summary: "|grad log u| bound for fast diffusion",
        params: BOUND,
    },
    CatalogEntry {
        id: "thm1_case1",
        summary: "|grad u^{3(m-1)/2}| display",
        params: BOUND,
    },
    CatalogEntry {
        id: "thm1_case2",
        summary: "|grad u^{m-1}| display",
        params: BOUND,
    },
    CatalogEntry {
        id: "thm1_case3",
        summary: "|grad u^{1-m}| display",
        params: BOUND,
    },
    CatalogEntry {
        id: "thm1_case4",
        summary: "|grad log u| display",
        params: BOUND,
    },
    CatalogEntry {
        id: "ab_diagnostic",
        summary: "Aronson-Benilan margin on stored slices",
        params: &[("field", "string"), ("tolerance", "number, default 0")],
    },
    CatalogEntry {
        id: "bsde_residual",
        summary: "backward equation residual and its dt refinement",
        params: &[
            (
                "<path parameters>",
                "as for submartingale_z2, epsilon default 0",
            ),
            ("dts", "array, default [dt, dt/2]"),
            ("ratio_min", "number, default 1.2"),
            ("ratio_max", "number, default 1.8"),
        ],
    },
    CatalogEntry {
        id: "submartingale_z2",
        summary: "E^Q|Z|^2 nondecreasing up to 2 sigma",
        params: PATHS,
    },
    CatalogEntry {
        id: "submartingale_m",
        summary: "E^Q|Z|^2/U nondecreasing up to 2 sigma",
        params: PATHS,
    },
    CatalogEntry {
        id: "q_integral",
        summary: "Monte Carlo integral bounds under Q",
        params: &[
            ("<path parameters>", "as for submartingale_z2"),
            ("functional", "z2 | m_over_u"),
        ],
    },
    CatalogEntry {
        id: "flow_z",
        summary: "Z rebuilt from the inverse tangent flow",
        params: FLOW,
    },
    CatalogEntry {
        id: "equivalence_audit",
        summary: "chain-rule audit of the pressure forms against the displays",
        params: &[("cases", "array of 1..4, default all")],
    },
    CatalogEntry {
        id: "solver_convergence",
        summary: "L-infinity error against the closed form under refinement",
        params: &[
            ("field", "string"),
            ("points", "array of interior point counts"),
            ("ratio_min", "number, default 1.7"),
            ("ratio_max", "number, default 2.3"),
        ],
    },
    CatalogEntry {
        id: "conservation",
        summary: "discrete mass and maximum principle per step",
        params: &[
            ("field", "string"),
            ("mass_tol", "number, default 1e-12"),
            ("max_principle_tol", "number, default 1e-13"),
        ],
    },
    CatalogEntry {
        id: "pressure_residual",
        summary: "pressure equation residual under grid halving",
        params: &[("field", "string"), ("ratio_min", "number, default 1.7")],
    },
    CatalogEntry {
        id: "constant_algebra",
        summary: "roots, closed forms and sign sweeps of the drift constants",
        params: &[
            ("samples", "integer, default 20"),
            ("sweep", "integer, default 100"),
            ("seed", "integer, default config seed"),
        ],
    },
    CatalogEntry {
        id: "measure_change",
        summary: "tilted drift against density weights for E^Q|Z_T|^2",
        params: PATHS,
    },
    CatalogEntry {
        id: "tangent_fd",
        summary: "tangent process against finite differences",
        params: FLOW,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    RegimeInvalid,
    Error,
}

/// One row of a per-check time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub bound: Option<f64>,
    pub observed: f64,
    pub margin: Option<f64>,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub index: usize,
    pub id: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub status: Status,
    pub regime_valid: bool,
    pub summary: Value,
    pub detail: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip)]
    pub series: Vec<SeriesRow>,
    #[serde(skip)]
    pub seconds: f64,
}

struct Evaluated {
    regime_valid: bool,
    pass: bool,
    summary: Value,
    detail: Value,
    series: Vec<SeriesRow>,
    message: Option<String>,
}

impl Evaluated {
    fn new(regime_valid: bool, pass: bool, summary: Value, detail: Value) -> Self {
        Self {
            regime_valid,
            pass,
            summary,
            detail,
            series: Vec::new(),
            message: None,
        }
    }
}

/// A solved field with its derived pressure and lazily built interpolant.
pub struct SolvedField {
    pub config: FieldConfig,
    pub hist: ScalarFieldHistory,
    pub diag: SolveDiagnostics,
    pub pressure: PressureHistory,
    coefficients: OnceLock<std::result::Result<CoefficientField, String>>,
    pub seconds: f64,
}

impl SolvedField {
    pub fn solve(config: &FieldConfig) -> Result<Self> {
        let start = Instant::now();
        let (hist, diag) = config.solve(None)?;
        let pressure = PressureHistory::from_history(&hist)?;
        Ok(Self {
            config: config.clone(),
            hist,
            diag,
            pressure,
            coefficients: OnceLock::new(),
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn coefficients(&self) -> Result<&CoefficientField> {
        self.coefficients
            .get_or_init(|| {
                CoefficientField::from_history(&self.pressure).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::Format(format!("interpolating the field: {e}")))
    }

    pub fn dim(&self) -> usize {
        self.hist.grid.dim()
    }
}

/// Solved fields of a config, keyed by name. Fields no check refers to are skipped.
pub struct Lab {
    pub fields: BTreeMap<String, std::result::Result<SolvedField, String>>,
}

impl Lab {
    pub fn prepare(config: &ExperimentConfig) -> Self {
        let mut fields = BTreeMap::new();
        for check in &config.checks {
            if let Some(name) = check.field() {
                if !fields.contains_key(name) {
                    let solved =
                        SolvedField::solve(&config.fields[name]).map_err(|e| e.to_string());
                    fields.insert(name.to_string(), solved);
                }
            }
        }
        Self { fields }
    }

    fn field(&self, name: &str) -> Result<&SolvedField> {
        match self.fields.get(name) {
            Some(Ok(f)) => Ok(f),
            Some(Err(e)) => Err(Error::Format(format!(
                "field `{name}` failed to solve: {e}"
            ))),
            None => Err(Error::config(
                "field",
                format!("field `{name}` was not prepared"),
            )),
        }
    }

    pub fn run(&self, index: usize, spec: &CheckSpec) -> CheckOutcome {
        let start = Instant::now();
        let result = self.evaluate(spec);
        let (status, ev) = match result {
            Ok(ev) => {
                let status = if !ev.regime_valid {
                    Status::RegimeInvalid
                } else if ev.pass {
                    Status::Pass
                } else {
                    Status::Fail
                };
                (status, ev)
            }
            Err(Error::Regime(msg)) => {
                let mut ev = Evaluated::new(false, false, Value::Null, Value::Null);
                ev.message = Some(msg);
                (Status::RegimeInvalid, ev)
            }
            Err(e) => {
                let mut ev = Evaluated::new(true, false, Value::Null, Value::Null);
                ev.message = Some(e.to_string());
                (Status::Error, ev)
            }
        };
        CheckOutcome {
            index,
            id: spec.id(),
            field: spec.field().map(str::to_string),
            status,
            regime_valid: ev.regime_valid,
            summary: ev.summary,
            detail: ev.detail,
            message: ev.message,
            series: ev.series,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn evaluate(&self, spec: &CheckSpec) -> Result<Evaluated> {
        match spec {
            CheckSpec::Est1(p)
            | CheckSpec::Thm3(p)
            | CheckSpec::E671(p)
            | CheckSpec::Thm6(p)
            | CheckSpec::Thm1Case1(p)
            | CheckSpec::Thm1Case2(p)
            | CheckSpec::Thm1Case3(p)
            | CheckSpec::Thm1Case4(p) => self.bound(spec.case().expect("bound case"), p),
            CheckSpec::AbDiagnostic(p) => self.aronson_benilan(p),
            CheckSpec::BsdeResidual(p) => self.bsde(p),
            CheckSpec::SubmartingaleZ2(p) => self.submartingale(p, Functional::Z2),
            CheckSpec::SubmartingaleM(p) => self.submartingale(p, Functional::MOverU),
            CheckSpec::QIntegral(p) => self.q_integral(p),
            CheckSpec::FlowZ(p) => self.flow(p),
            CheckSpec::EquivalenceAudit(p) => audit(p),
            CheckSpec::SolverConvergence(p) => self.convergence(p),
            CheckSpec::Conservation(p) => self.conservation(p),
            CheckSpec::PressureResidual(p) => self.residual(p),
            CheckSpec::ConstantAlgebra(p) => algebra(p),
            CheckSpec::MeasureChange(p) => self.measure_change(p),
            CheckSpec::TangentFd(p) => self.tangent(p),
        }
    }

    fn bound(&self, case: Case, p: &BoundParams) -> Result<Evaluated> {
        let f = self.field(&p.field)?;
        let r = bound_check(case, &f.hist, p.tolerance.unwrap_or(0.0))?;
        let series = r
            .rows
            .iter()
            .map(|row| SeriesRow {
                t: row.t,
                bound: Some(row.bound),
                observed: row.observed,
                margin: Some(row.margin),
                stderr: None,
            })
            .collect();
        let mut ev = Evaluated::new(
            r.regime_valid,
            r.pass,
            json!({
                "m": r.m,
                "n": r.n,
                "norm": r.norm,
                "min_margin": r.min_margin,
                "relative_tolerance": p.tolerance,
                "checked_from": CHECK_FROM,
            }),
            Value::Null,
        );
        ev.series = series;
        Ok(ev)
    }

    fn aronson_benilan(&self, p: &AbParams) -> Result<Evaluated> {
        let f = self.field(&p.field)?;
        let h = &f.hist;
        let last = h.n_slices().saturating_sub(1);
        let first = (1..last).find(|&k| h.time(k) >= CHECK_FROM - 1e-12);
        let Some(first) = first else {
            return Err(Error::HistoryTooShort(format!(
                "no interior slice with t >= {CHECK_FROM}"
            )));
        };
        let count = (last - first).min(AB_SLICES);
        let mut series = Vec::with_capacity(count);
        let mut worst = f64::INFINITY;
        for i in 0..count {
            let k = first + i * (last - first) / count;
            let t = h.time(k);
            let margin = aronson_benilan_margin(h, t)?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            worst = worst.min(margin);
            series.push(SeriesRow {
                t,
                bound: None,
                observed: margin,
                margin: Some(margin + p.tolerance),
                stderr: None,
            });
        }
        let mut ev = Evaluated::new(
            true,
            worst >= -p.tolerance,
            json!({ "min_margin": worst, "tolerance": p.tolerance, "slices": count }),
            Value::Null,
        );
        ev.series = series;
        Ok(ev)
    }

    fn paths(
        &self,
        p: &PathParams,
        dt: f64,
        seed: u64,
        mode: TiltMode,
    ) -> Result<(PathEnsemble, &SolvedField)> {
        let f = self.field(&p.field)?;
        let field = f.coefficients()?;
        let eps = p.epsilon.unwrap_or(0.0);
        let params = SimParams {
            m: f.config.m,
            epsilon: eps,
            t_final: p.t_final.unwrap_or(f.config.t_final),
            dt,
            n_paths: p.n_paths.unwrap_or(10_000),
            seed,
            tilt_mode: mode,
        };
        let x0 = p.x0.clone().unwrap_or_else(|| vec![0.0; f.dim()]);
        let mut paths = simulate_forward(field, &params, &x0)?;
        evaluate_yz(&mut paths, field)?;
        if mode == TiltMode::DensityWeights {
            girsanov_weights(&mut paths, eps)?;
        }
        Ok((paths, f))
    }

    fn default_paths(&self, p: &PathParams) -> Result<(PathEnsemble, &SolvedField)> {
        self.paths(p, p.dt.unwrap_or(1e-3), p.seed.unwrap_or(0), p.tilt_mode)
    }

    fn bsde(&self, p: &BsdeParams) -> Result<Evaluated> {
        let dts = p
            .dts
            .clone()
            .unwrap_or_else(|| vec![p.paths.dt.unwrap_or(1e-3)]);
        let mut runs = Vec::new();
        let mut centered = true;
        for &dt in &dts {
            let (paths, _) =
                self.paths(&p.paths, dt, p.paths.seed.unwrap_or(0), p.paths.tilt_mode)?;
            let r = bsde_residual(&paths, paths.target_measure())?;
            centered &= r.cumulative.covers(0.0, SIGMAS);
            runs.push((dt, r));
        }
        let ratios: Vec<f64> = runs
            .windows(2)
            .map(|w| w[0].1.rms_cumulative / w[1].1.rms_cumulative)
            .collect();
        let ratios_ok = ratios
            .iter()
            .all(|r| (p.ratio_min..=p.ratio_max).contains(r));
        let series = runs
            .iter()
            .map(|(dt, r)| SeriesRow {
                t: *dt,
                bound: None,
                observed: r.rms_cumulative,
                margin: None,
                stderr: Some(r.cumulative.se),
            })
            .collect();
        let mut ev = Evaluated::new(
            true,
            centered && ratios_ok,
            json!({
                "dts": dts,
                "z_scores": runs.iter().map(|(_, r)| r.cumulative.mean / r.cumulative.se).collect::<Vec<_>>(),
                "rms_cumulative": runs.iter().map(|(_, r)| r.rms_cumulative).collect::<Vec<_>>(),
                "rms_ratios": ratios,
                "ratio_range": [p.ratio_min, p.ratio_max],
            }),
            serde_json::to_value(runs.iter().map(|(_, r)| r).collect::<Vec<_>>())?,
        );
        ev.series = series;
        Ok(ev)
    }

    fn submartingale(&self, p: &PathParams, functional: Functional) -> Result<Evaluated> {
        let (paths, f) = self.default_paths(p)?;
        let eps = p.epsilon.unwrap_or(0.0);
        let valid = submartingale_hypothesis(functional, f.config.m, f.dim(), eps)?;
        let r = empirical_submartingale(&paths, functional, &paths.checkpoints(p.checkpoints))?;
        let rem = remainder_audit(&paths, f.coefficients()?, functional, eps)?;
        let identities = rem.min_remainder >= 0.0 && rem.max_identity_defect <= IDENTITY_TOL;
        let series = r
            .points
            .iter()
            .map(|c| SeriesRow {
                t: c.t,
                bound: None,
                observed: c.estimate.mean,
                margin: None,
                stderr: Some(c.estimate.se),
            })
            .collect();
        let mut ev = Evaluated::new(
            valid,
            r.monotone && identities,
            json!({
                "epsilon": eps,
                "monotone": r.monotone,
                "max_decrease_sigmas": r.max_decrease_sigmas,
                "min_remainder": rem.min_remainder,
                "max_identity_defect": rem.max_identity_defect,
                "usable_paths": paths.usable().count(),
            }),
            json!({ "monotonicity": r, "remainders": rem }),
        );
        ev.series = series;
        Ok(ev)
    }

    fn q_integral(&self, p: &QIntegralParams) -> Result<Evaluated> {
        let (paths, f) = self.default_paths(&p.paths)?;
        let r = q_integral_bound(&paths, p.functional, f.pressure.f0_sup())?;
        Ok(Evaluated::new(
            true,
            r.pass,
            json!({
                "functional": p.functional,
                "epsilon": r.eps,
                "estimate": r.estimate.mean,
                "stderr": r.estimate.se,
                "bound": r.bound,
                "margin": r.margin,
            }),
            serde_json::to_value(&r)?,
        ))
    }

    fn flow(&self, p: &FlowParams) -> Result<Evaluated> {
        let (mut paths, f) = self.default_paths(&p.paths)?;
        let field = f.coefficients()?;
        simulate_tangent(&mut paths, field)?;
        let r = flow_z_check(&paths, field, p.delta)?;
        Ok(Evaluated::new(
            true,
            r.rms_relative <= p.tolerance && r.inverse_ok_fraction >= p.inverse_fraction,
            json!({
                "rms_relative": r.rms_relative,
                "inverse_ok_fraction": r.inverse_ok_fraction,
                "tolerance": p.tolerance,
                "required_fraction": p.inverse_fraction,
            }),
            serde_json::to_value(&r)?,
        ))
    }

    fn tangent(&self, p: &FlowParams) -> Result<Evaluated> {
        let f = self.field(&p.paths.field)?;
        let params = SimParams {
            m: f.config.m,
            epsilon: p.paths.epsilon.unwrap_or(0.0),
            t_final: p.paths.t_final.unwrap_or(f.config.t_final),
            dt: p.paths.dt.unwrap_or(1e-3),
            n_paths: p.paths.n_paths.unwrap_or(10_000),
            seed: p.paths.seed.unwrap_or(0),
            tilt_mode: TiltMode::TiltedDrift,
        };
        let x0 = p.paths.x0.clone().unwrap_or_else(|| vec![0.0; f.dim()]);
        let r = tangent_fd_check(f.coefficients()?, &params, &x0, p.delta)?;
        Ok(Evaluated::new(
            true,
            r.rms_relative <= p.tolerance,
            json!({ "rms_relative": r.rms_relative, "tolerance": p.tolerance }),
            serde_json::to_value(&r)?,
        ))
    }

    fn measure_change(&self, p: &PathParams) -> Result<Evaluated> {
        let dt = p.dt.unwrap_or(1e-3);
        let seed = p.seed.unwrap_or(0);
        let (tilted, _) = self.paths(p, dt, seed, TiltMode::TiltedDrift)?;
        let (weighted, _) = self.paths(p, dt, seed.wrapping_add(1), TiltMode::DensityWeights)?;
        let n = tilted.steps();
        let a = tilted.q_expectation(n, |q| tilted.z_norm_sq(q, n));
        let b = weighted.q_expectation(n, |q| weighted.z_norm_sq(q, n));
        let w = weighted.q_expectation(n, |_| 1.0);
        let z = a.z_score(&b);
        Ok(Evaluated::new(
            true,
            z <= SIGMAS && w.covers(1.0, SIGMAS),
            json!({
                "epsilon": p.epsilon,
                "tilted": a.mean,
                "tilted_se": a.se,
                "weighted": b.mean,
                "weighted_se": b.se,
                "z_score": z,
                "mean_weight": w.mean,
                "mean_weight_se": w.se,
            }),
            Value::Null,
        ))
    }

    fn convergence(&self, p: &ConvergenceParams) -> Result<Evaluated> {
        let f = self.field(&p.field)?;
        let oracle = f
            .config
            .oracle()
            .ok_or_else(|| Error::param("field", "convergence needs a closed form"))?;
        let mut errors = Vec::new();
        let mut spacings = Vec::new();
        for &points in &p.points {
            let (h, _) = f.config.solve(Some(points))?;
            let t = h.mesh.t_final;
            let err = h
                .last()
                .iter()
                .enumerate()
                .map(|(k, v)| (v - oracle.value(t, &h.grid.point(k)[..h.grid.dim()])).abs())
                .fold(0.0, f64::max);
            errors.push(err);
            spacings.push(h.grid.max_spacing());
        }
        let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
        let pass = ratios
            .iter()
            .all(|r| (p.ratio_min..=p.ratio_max).contains(r));
        let mut ev = Evaluated::new(
            true,
            pass,
            json!({
                "h": spacings,
                "linf_errors": errors,
                "ratios": ratios,
                "ratio_range": [p.ratio_min, p.ratio_max],
            }),
            Value::Null,
        );
        ev.series = spacings
            .iter()
            .zip(&errors)
            .map(|(&h, &e)| SeriesRow {
                t: h,
                bound: None,
                observed: e,
                margin: None,
                stderr: None,
            })
            .collect();
        Ok(ev)
    }

    fn conservation(&self, p: &ConservationParams) -> Result<Evaluated> {
        let f = self.field(&p.field)?;
        let d = f.diag;
        let Some(mass) = d.max_rel_mass_change else {
            return Err(Error::Regime(
                "mass is conserved on periodic grids only".into(),
            ));
        };
        let (_, hi) = crate::grid::min_max(f.hist.slice(0));
        let slack = p.max_principle_tol * hi;
        let pass =
            mass <= p.mass_tol && d.max_increase_of_max <= slack && d.max_decrease_of_min <= slack;
        Ok(Evaluated::new(
            true,
            pass,
            json!({
                "max_rel_mass_change": mass,
                "max_increase_of_max": d.max_increase_of_max,
                "max_decrease_of_min": d.max_decrease_of_min,
                "mass_tol": p.mass_tol,
                "max_principle_slack": slack,
                "steps": d.steps,
            }),
            Value::Null,
        ))
    }

    fn residual(&self, p: &ResidualParams) -> Result<Evaluated> {
        let f = self.field(&p.field)?;
        let worst = |h: &ScalarFieldHistory| -> Result<f64> {
            let ph = PressureHistory::from_history(h)?;
            Ok(pressure_pde_residual(&ph)?
                .iter()
                .map(ResidualSlice::max_abs)
                .fold(0.0, f64::max))
        };
        let coarse = worst(&f.hist)?;
        let (fine_hist, _) = f.config.solve(Some(2 * f.config.grid.points))?;
        let fine = worst(&fine_hist)?;
        let ratio = coarse / fine;
        Ok(Evaluated::new(
            true,
            ratio >= p.ratio_min,
            json!({ "coarse": coarse, "fine": fine, "ratio": ratio, "ratio_min": p.ratio_min }),
            Value::Null,
        ))
    }
}

fn audit(p: &AuditParams) -> Result<Evaluated> {
    let mut reports = Vec::new();
    let mut pass = true;
    for &c in &p.cases {
        let r = equivalence_audit(Case::display(c)?)?;
        pass &= r.pattern_holds;
        if c == 2 || c == 3 {
            pass &= r.exact;
        }
        reports.push(r);
    }
    let summary: BTreeMap<String, Value> = reports
        .iter()
        .map(|r| {
            (
                r.case.id().to_string(),
                json!({
                    "exact": r.exact,
                    "factor": [r.factor_min, r.factor_max],
                    "derivation_factor": [r.derivation_factor_min, r.derivation_factor_max],
                    "pattern": r.pattern,
                    "pattern_holds": r.pattern_holds,
                }),
            )
        })
        .collect();
    Ok(Evaluated::new(
        true,
        pass,
        serde_json::to_value(summary)?,
        serde_json::to_value(&reports)?,
    ))
}

fn algebra(p: &AlgebraParams) -> Result<Evaluated> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed.unwrap_or(0));
    let (_, b2) = beta_roots(0.5, 1)?;
    let beta2_ok = b2.abs() <= CLOSED_FORM_TOL;

    let mut worst_root: f64 = 0.0;
    let mut worst_g: f64 = 0.0;
    for _ in 0..p.samples {
        let n: usize = rng.random_range(1..=4);
        let nf = n as f64;
        let lo = ((nf - 1.0) / (nf + 3.0)).max(0.02);
        let m: f64 = rng.random_range(lo..1.0);
        let (r1, r2) = beta_roots(m, n)?;
        worst_root = worst_root
            .max(h_beta(m, n, r1).abs())
            .max(h_beta(m, n, r2).abs());
        let closed = ((nf + 8.0) * m - 2.0 - nf) * (1.0 - m);
        worst_g = worst_g.max((g_delta(m, n, g_delta_star(m)) - closed).abs());
    }

    let mut sweep_mismatches = 0usize;
    for n in 1..=3usize {
        let cut = 1.0 + 2.0 / n as f64;
        for i in 0..p.sweep {
            let m = 1.0 + 3.0 * (i as f64 + 0.5) / p.sweep as f64;
            let nonneg = z2_drift_super(m, n, 2.0 * (m - 1.0)) >= 0.0;
            if nonneg != (m <= cut) {
                sweep_mismatches += 1;
            }
        }
    }
    let pass =
        beta2_ok && worst_root <= ROOT_TOL && worst_g <= CLOSED_FORM_TOL && sweep_mismatches == 0;
    Ok(Evaluated::new(
        true,
        pass,
        json!({
            "beta2_n1_m05": b2,
            "max_root_residual": worst_root,
            "max_g_closed_form_error": worst_g,
            "sweep_mismatches": sweep_mismatches,
            "samples": p.samples,
            "sweep_points": p.sweep,
        }),
        Value::Null,
    ))
}

/// Run every check in declared order, optionally on scoped threads.
pub fn run_checks(config: &ExperimentConfig, lab: &Lab, parallel: bool) -> Vec<CheckOutcome> {
    if !parallel {
        return config
            .checks
            .iter()
            .enumerate()
            .map(|(i, c)| lab.run(i, c))
            .collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = config
            .checks
            .iter()
            .enumerate()
            .map(|(i, c)| s.spawn(move || lab.run(i, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("check thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_covers_every_variant() {
        let ids: Vec<&str> = CATALOG.iter().map(|e| e.id).collect();
        for id in [
            "est1",
            "thm3",
            "e671",
            "thm6",
            "thm1_case1",
            "thm1_case2",
            "thm1_case3",
            "thm1_case4",
            "ab_diagnostic",
            "bsde_residual",
            "submartingale_z2",
            "submartingale_m",
            "q_integral",
            "flow_z",
            "equivalence_audit",
        ] {
            assert!(ids.contains(&id), "{id}");
        }
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len());
    }

    #[test]
    fn algebra_battery_passes() {
        let ev = algebra(&AlgebraParams {
            samples: 20,
            sweep: 100,
            seed: Some(3),
        })
        .unwrap();
        assert!(ev.pass, "{}", ev.summary);
    }
}

//! Monte Carlo simulation of the forward-backward system driven by a solved pressure
//! history.
//!
//! Forward equation, with `U`, `σ` and `a` from [`Kinematics`]:
//!
//! * slow: `dX = √U dW + (m−1+2ε)/2·∇f dt`
//! * fast: `dX = m√2/√U dW + m²(2ε − (1−m)/2)/U²·∇f dt`
//!
//! where `ε = 0` under `P`. Substituting `dW = dW̃ + εZ/U dt` into the `P` equation gives
//! the tilted form; `density_weights` keeps `ε = 0` in the dynamics and carries the
//! likelihood ratio `log L = Σ θ·ΔW − ½|θ|²dt` with `θ = εZ/U` instead. Under the
//! Euler scheme this ratio is exact, so both modes sample the same discrete law.
//!
//! Coefficients are read at PDE time `T − t`. Every path draws from its own ChaCha8
//! stream: seed `seed`, stream number equal to the path index.

mod field;
pub mod io;
mod tangent;

pub use field::{CoefficientField, Kinematics, Local};
pub use tangent::{
    flow_z_check, inverse_defect, simulate_tangent, tangent_fd_check, FlowZReport, TangentFdReport,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeMesh;
use crate::stats::{rms, Estimate};
use crate::transform::Regime;

/// Log-density magnitude above which a path is flagged as poorly conditioned.
pub const LOG_DENSITY_GUARD: f64 = 30.0;
/// Fraction of escaped paths above which an ensemble is marked invalid.
pub const MAX_ESCAPE_FRACTION: f64 = 0.01;
/// Frobenius tolerance on `K·J − I`.
pub const TANGENT_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltMode {
    TiltedDrift,
    DensityWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub m: f64,
    /// Girsanov parameter `ε`.
    pub epsilon: f64,
    pub t_final: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub tilt_mode: TiltMode,
}

impl SimParams {
    pub fn regime(&self) -> Result<Regime> {
        Regime::of(self.m)
    }

    pub fn mesh(&self) -> Result<TimeMesh> {
        TimeMesh::new(self.t_final, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        self.regime()?;
        self.mesh()?;
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", "need at least one path"));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::param("epsilon", "must be finite"));
        }
        Ok(())
    }

    /// `ε` in the simulated dynamics.
    pub fn dynamics_eps(&self) -> f64 {
        match self.tilt_mode {
            TiltMode::TiltedDrift => self.epsilon,
            TiltMode::DensityWeights => 0.0,
        }
    }
}

/// Probability measure a drift formula refers to. `Q { eps: 0.0 }` equals `P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    P,
    Q { eps: f64 },
}

impl Measure {
    pub fn eps(self) -> f64 {
        match self {
            Measure::P => 0.0,
            Measure::Q { eps } => eps,
        }
    }
}

/// Paths on a common time mesh. Per-step arrays are path-major:
/// `[path][step][component]`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub params: SimParams,
    pub regime: Regime,
    pub mesh: TimeMesh,
    pub x0: Vec<f64>,
    dim: usize,
    /// Unwrapped positions.
    x: Vec<f64>,
    dw: Vec<f64>,
    escaped: Vec<Option<usize>>,
    y: Option<Vec<f64>>,
    z: Option<Vec<f64>>,
    u: Option<Vec<f64>>,
    log_l: Option<Vec<f64>>,
    density_eps: Option<f64>,
    pub(crate) j: Option<Vec<f64>>,
    pub(crate) k: Option<Vec<f64>>,
    pub(crate) tangent_flag: Vec<bool>,
}

impl PathEnsemble {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.params.n_paths
    }

    pub fn steps(&self) -> usize {
        self.mesh.steps
    }

    pub fn time(&self, n: usize) -> f64 {
        self.mesh.time(n)
    }

    /// RNG stream number of path `p`.
    pub fn stream_id(&self, p: usize) -> u64 {
        p as u64
    }

    fn node(&self, p: usize, n: usize) -> usize {
        p * (self.mesh.steps + 1) + n
    }

    pub fn x(&self, p: usize, n: usize) -> &[f64] {
        let i = self.node(p, n) * self.dim;
        &self.x[i..i + self.dim]
    }

    /// Brownian increment over `[t_n, t_{n+1}]` as drawn (under the simulation measure).
    pub fn dw(&self, p: usize, n: usize) -> &[f64] {
        let i = (p * self.mesh.steps + n) * self.dim;
        &self.dw[i..i + self.dim]
    }

    pub fn escaped_at(&self, p: usize) -> Option<usize> {
        self.escaped[p]
    }

    pub fn n_escaped(&self) -> usize {
        self.escaped.iter().filter(|e| e.is_some()).count()
    }

    /// Escaped fraction stays within [`MAX_ESCAPE_FRACTION`].
    pub fn is_valid(&self) -> bool {
        (self.n_escaped() as f64) <= MAX_ESCAPE_FRACTION * self.n_paths() as f64
    }

    /// Paths never leaving the domain.
    pub fn usable(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_paths()).filter(|&p| self.escaped[p].is_none())
    }

    pub fn has_yz(&self) -> bool {
        self.y.is_some()
    }

    fn need_yz(&self) -> Result<(&[f64], &[f64], &[f64])> {
        match (&self.y, &self.z, &self.u) {
            (Some(y), Some(z), Some(u)) => Ok((y, z, u)),
            _ => Err(Error::param("paths", "Y and Z have not been evaluated")),
        }
    }

    pub fn y(&self, p: usize, n: usize) -> f64 {
        self.y.as_ref().expect("Y not evaluated")[self.node(p, n)]
    }

    pub fn z(&self, p: usize, n: usize) -> &[f64] {
        let i = self.node(p, n) * self.dim;
        &self.z.as_ref().expect("Z not evaluated")[i..i + self.dim]
    }

    /// Coefficient `U` along the path.
    pub fn u(&self, p: usize, n: usize) -> f64 {
        self.u.as_ref().expect("U not evaluated")[self.node(p, n)]
    }

    pub fn z_norm_sq(&self, p: usize, n: usize) -> f64 {
        self.z(p, n).iter().map(|v| v * v).sum()
    }

    pub fn log_l(&self, p: usize, n: usize) -> f64 {
        match &self.log_l {
            Some(l) => l[self.node(p, n)],
            None => 0.0,
        }
    }

    pub fn has_tangent(&self) -> bool {
        self.j.is_some()
    }

    pub fn j(&self, p: usize, n: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        let i = self.node(p, n) * d2;
        &self.j.as_ref().expect("tangent not simulated")[i..i + d2]
    }

    pub fn k(&self, p: usize, n: usize) -> &[f64] {
        let d2 = self.dim * self.dim;
        let i = self.node(p, n) * d2;
        &self.k.as_ref().expect("tangent not simulated")[i..i + d2]
    }

    pub fn tangent_flagged(&self, p: usize) -> bool {
        self.tangent_flag.get(p).copied().unwrap_or(false)
    }

    /// Measure the paths are distributed under (before any density weighting).
    pub fn simulation_measure(&self) -> Measure {
        match self.params.tilt_mode {
            TiltMode::TiltedDrift => Measure::Q {
                eps: self.params.epsilon,
            },
            TiltMode::DensityWeights => Measure::P,
        }
    }

    /// Measure that [`PathEnsemble::q_expectation`] estimates.
    pub fn target_measure(&self) -> Measure {
        match (self.params.tilt_mode, self.density_eps) {
            (TiltMode::DensityWeights, Some(eps)) => Measure::Q { eps },
            _ => self.simulation_measure(),
        }
    }

    /// Estimate of `E[g(p)]` under [`PathEnsemble::target_measure`] at step `n`, over
    /// paths that never escaped. Density mode uses the weight `L_n`.
    pub fn q_expectation(&self, n: usize, g: impl Fn(usize) -> f64) -> Estimate {
        let weighted = self.log_l.is_some();
        Estimate::of(self.usable().map(|p| {
            let w = if weighted {
                self.log_l(p, n).exp()
            } else {
                1.0
            };
            w * g(p)
        }))
    }

    /// Steps of `count` equispaced checkpoints in `(0, T]`.
    pub fn checkpoints(&self, count: usize) -> Vec<usize> {
        let s = self.mesh.steps;
        if s == 0 {
            return vec![0];
        }
        let mut out: Vec<usize> = (1..=count)
            .map(|i| ((i * s) as f64 / count as f64).round() as usize)
            .filter(|&n| n >= 1)
            .collect();
        out.dedup();
        out
    }
}

fn check_x0(field: &CoefficientField, x0: &[f64]) -> Result<()> {
    if x0.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            actual: x0.len(),
        });
    }
    if !field.contains(x0) {
        return Err(Error::OutOfRange(x0.to_vec()));
    }
    Ok(())
}

/// Euler-Maruyama paths of the forward equation started at `x0`.
pub fn simulate_forward(
    field: &CoefficientField,
    p: &SimParams,
    x0: &[f64],
) -> Result<PathEnsemble> {
    p.validate()?;
    let regime = p.regime()?;
    if regime != field.regime || p.m != field.m {
        return Err(Error::param(
            "m",
            format!("simulation m = {} but the field has m = {}", p.m, field.m),
        ));
    }
    check_x0(field, x0)?;
    let mesh = p.mesh()?;
    if field.horizon() < p.t_final * (1.0 - 1e-12) {
        return Err(Error::HistoryTooShort(format!(
            "field covers [0, {}] but T = {}",
            field.horizon(),
            p.t_final
        )));
    }
    let dim = field.dim();
    let steps = mesh.steps;
    let kin = Kinematics {
        regime,
        m: p.m,
        eps: p.dynamics_eps(),
    };
    let sqdt = mesh.dt.sqrt();
    let mut x = vec![0.0; p.n_paths * (steps + 1) * dim];
    let mut dw = vec![0.0; p.n_paths * steps * dim];
    let mut escaped = vec![None; p.n_paths];
    for path in 0..p.n_paths {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        rng.set_stream(path as u64);
        let base = path * (steps + 1) * dim;
        x[base..base + dim].copy_from_slice(x0);
        let mut cur = x0.to_vec();
        for n in 0..steps {
            let inc = &mut dw[(path * steps + n) * dim..(path * steps + n + 1) * dim];
            for v in inc.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *v = g * sqdt;
            }
            if escaped[path].is_none() {
                let e = field.eval(p.t_final - mesh.time(n), &cur)?;
                let l = kin.local(e.value);
                for a in 0..dim {
                    cur[a] += l.sigma * inc[a] + l.a * e.grad[a] * mesh.dt;
                }
                if !field.contains(&cur) {
                    escaped[path] = Some(n + 1);
                }
            }
            let o = base + (n + 1) * dim;
            x[o..o + dim].copy_from_slice(&cur);
        }
    }
    Ok(PathEnsemble {
        params: *p,
        regime,
        mesh,
        x0: x0.to_vec(),
        dim,
        x,
        dw,
        escaped,
        y: None,
        z: None,
        u: None,
        log_l: None,
        density_eps: None,
        j: None,
        k: None,
        tangent_flag: Vec::new(),
    })
}

/// Fill `Y = f(T−t, X)`, `Z = σ∇f(T−t, X)` and `U` along every path. Escaped paths keep
/// zeros from their escape step on.
pub fn evaluate_yz(paths: &mut PathEnsemble, field: &CoefficientField) -> Result<()> {
    let dim = paths.dim;
    let steps = paths.mesh.steps;
    let kin = Kinematics {
        regime: paths.regime,
        m: paths.params.m,
        eps: 0.0,
    };
    let nodes = paths.n_paths() * (steps + 1);
    let mut y = vec![0.0; nodes];
    let mut z = vec![0.0; nodes * dim];
    let mut u = vec![0.0; nodes];
    for p in 0..paths.n_paths() {
        let stop = paths.escaped[p].unwrap_or(steps + 1);
        for n in 0..stop.min(steps + 1) {
            let i = paths.node(p, n);
            let s = if n == steps {
                0.0
            } else {
                paths.params.t_final - paths.mesh.time(n)
            };
            let e = field.eval(s, paths.x(p, n))?;
            let l = kin.local(e.value);
            y[i] = e.value;
            u[i] = l.u;
            for a in 0..dim {
                z[i * dim + a] = l.sigma * e.grad[a];
            }
        }
    }
    paths.y = Some(y);
    paths.z = Some(z);
    paths.u = Some(u);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GirsanovReport {
    pub eps: f64,
    /// `E[exp(log L_T)]` over usable paths.
    pub terminal_weight: Estimate,
    pub max_abs_log_density: f64,
    /// Paths whose `|log L|` exceeded [`LOG_DENSITY_GUARD`].
    pub flagged: usize,
}

/// Accumulate `log L = Σ θ·ΔW − ½|θ|²dt`, `θ = εZ/U`, on paths simulated under `P`.
pub fn girsanov_weights(paths: &mut PathEnsemble, eps: f64) -> Result<GirsanovReport> {
    if paths.params.tilt_mode != TiltMode::DensityWeights {
        return Err(Error::MeasureMismatch(
            "density weights need paths simulated under P (density_weights mode)".into(),
        ));
    }
    let (_, z, u) = paths.need_yz()?;
    let dim = paths.dim;
    let steps = paths.mesh.steps;
    let dt = paths.mesh.dt;
    let mut log_l = vec![0.0; paths.n_paths() * (steps + 1)];
    let mut flagged = 0;
    let mut max_abs: f64 = 0.0;
    for p in 0..paths.n_paths() {
        let mut acc = 0.0;
        let mut hit = false;
        let stop = paths.escaped[p].unwrap_or(steps);
        for n in 0..steps {
            let i = paths.node(p, n);
            if n < stop && eps != 0.0 {
                let dwv = paths.dw(p, n);
                let mut lin = 0.0;
                let mut quad = 0.0;
                for a in 0..dim {
                    let th = eps * z[i * dim + a] / u[i];
                    lin += th * dwv[a];
                    quad += th * th;
                }
                acc += lin - 0.5 * quad * dt;
            }
            log_l[i + 1] = acc;
            if acc.abs() > LOG_DENSITY_GUARD {
                hit = true;
            }
            max_abs = max_abs.max(acc.abs());
        }
        flagged += hit as usize;
    }
    paths.log_l = Some(log_l);
    paths.density_eps = Some(eps);
    let terminal_weight = Estimate::of(paths.usable().map(|p| paths.log_l(p, steps).exp()));
    Ok(GirsanovReport {
        eps,
        terminal_weight,
        max_abs_log_density: max_abs,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BsdeResidualReport {
    pub measure: Measure,
    /// `Σₖ rₖ` over each usable path.
    pub cumulative: Estimate,
    /// RMS over paths of `Σₖ rₖ`.
    pub rms_cumulative: f64,
    /// RMS of the individual `rₖ`.
    pub rms_step: f64,
    pub max_abs_step: f64,
    pub n_excluded: usize,
}

/// Per-step residuals `rₖ = ΔYₖ − Zₖ·ΔWₖ − c|Zₖ|²/Uₖ·dt` of path `p`, with `c` the backward
/// drift coefficient for `measure`.
pub fn residual_series(paths: &PathEnsemble, p: usize, measure: Measure) -> Result<Vec<f64>> {
    let (y, z, u) = paths.need_yz()?;
    let kin = Kinematics {
        regime: paths.regime,
        m: paths.params.m,
        eps: measure.eps(),
    };
    let c = kin.bsde_drift();
    let dim = paths.dim;
    let dt = paths.mesh.dt;
    Ok((0..paths.mesh.steps)
        .map(|n| {
            let i = paths.node(p, n);
            let dwv = paths.dw(p, n);
            let zdw: f64 = (0..dim).map(|a| z[i * dim + a] * dwv[a]).sum();
            let z2: f64 = (0..dim).map(|a| z[i * dim + a].powi(2)).sum();
            y[i + 1] - y[i] - zdw - c * z2 / u[i] * dt
        })
        .collect())
}

/// Residual of the backward equation under `measure`, which must be the measure the
/// increments were drawn under.
pub fn bsde_residual(paths: &PathEnsemble, measure: Measure) -> Result<BsdeResidualReport> {
    let sim = paths.simulation_measure();
    if (sim.eps() - measure.eps()).abs() > 1e-15 {
        return Err(Error::MeasureMismatch(format!(
            "paths were drawn under {sim:?} but the drift refers to {measure:?}"
        )));
    }
    let mut sums = Vec::new();
    let mut all_sq = 0.0;
    let mut count = 0usize;
    let mut max_abs: f64 = 0.0;
    for p in paths.usable() {
        let r = residual_series(paths, p, measure)?;
        sums.push(r.iter().sum::<f64>());
        for v in &r {
            all_sq += v * v;
            max_abs = max_abs.max(v.abs());
        }
        count += r.len();
    }
    Ok(BsdeResidualReport {
        measure,
        cumulative: Estimate::of(sums.iter().copied()),
        rms_cumulative: rms(sums.iter().copied()),
        rms_step: if count > 0 {
            (all_sq / count as f64).sqrt()
        } else {
            0.0
        },
        max_abs_step: max_abs,
        n_excluded: paths.n_escaped(),
    })
}

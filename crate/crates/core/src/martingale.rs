//! Drift coefficients of `|Z|²` and `M = |Z|²/U` under the tilted measure, the
//! remainder terms they leave behind, and Monte Carlo versions of the submartingale and
//! integral statements.
//!
//! Parameter relations, for a tilt `ε`:
//!
//! ```text
//! m > 1:  δ = 3m − 7 + 2ε          β = 2ε − 3 − m
//! m < 1:  δ = 2√2 mε − √2(5m−1)m/2  β = δ − 2√2 m(1−m)
//! ```
//!
//! Taking `δ = 2(m−1)` in the first relation gives `ε = (5−m)/2`, the tilt under which
//! `|Z|²` is a submartingale for `m ≤ 1 + 2/n`. `β = 0` gives `ε = (3+m)/2`.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbsde::{CoefficientField, Kinematics, PathEnsemble};
use crate::stats::Estimate;
use crate::transform::{aronson_benilan_alpha, Regime};

/// Minimum number of usable paths for the empirical tests.
pub const MIN_PATHS: usize = 100;
/// Decreases larger than this many combined standard errors count as violations.
pub const DECREASE_SIGMAS: f64 = 2.0;
/// Standard errors added to an integral estimate before comparing with its bound.
pub const BOUND_SIGMAS: f64 = 3.0;

/// Drift coefficient of `|Z|²` in front of `|Z|⁴/U²` for `m > 1`.
pub fn z2_drift_super(m: f64, n: usize, delta: f64) -> f64 {
    let n = n as f64;
    (n + 3.0 - (n + 1.0) * m) * (m - 1.0) + (m - 1.0) * delta - delta * delta / 4.0
}

/// Drift coefficient of `M` in front of `|Z|⁴/U³` for `m > 1`, as displayed:
/// `(m−1)²(1−n) − β²`.
pub fn m_drift_super(m: f64, n: usize, beta: f64) -> f64 {
    (m - 1.0).powi(2) * (1.0 - n as f64) - beta * beta
}

/// The coefficient left after completing the squares in the drift of `M`:
/// `(m−1)²(1−n) − β²/4`. Same sign as [`m_drift_super`].
pub fn m_drift_super_completed(m: f64, n: usize, beta: f64) -> f64 {
    (m - 1.0).powi(2) * (1.0 - n as f64) - beta * beta / 4.0
}

pub fn g_delta(m: f64, n: usize, delta: f64) -> f64 {
    let n = n as f64;
    3.0 * (3.0 * m - 1.0) * (1.0 - m)
        - n * (1.0 - m).powi(2)
        - SQRT_2 * (1.0 - m) / m * delta
        - delta * delta / (2.0 * m * m)
}

/// Maximizer of [`g_delta`], `−√2 m(1−m)`.
pub fn g_delta_star(m: f64) -> f64 {
    -SQRT_2 * m * (1.0 - m)
}

pub fn h_beta(m: f64, n: usize, beta: f64) -> f64 {
    let n = n as f64;
    (1.0 - m) * ((7.0 + n) * m - 3.0 - n)
        - 2.0 * SQRT_2 * beta * (1.0 - m) / m
        - beta * beta / (2.0 * m * m)
}

/// Roots `β₁ ≤ β₂` of [`h_beta`]; real iff `m ≥ (n−1)/(n+3)`.
pub fn beta_roots(m: f64, n: usize) -> Result<(f64, f64)> {
    if !(m > 0.0 && m <= 1.0) {
        return Err(Error::param("m", format!("roots need 0 < m ≤ 1, got {m}")));
    }
    let nf = n as f64;
    let disc = 2.0 * (1.0 - m) * ((3.0 + nf) * m + 1.0 - nf);
    if disc < 0.0 {
        return Err(Error::Regime(format!(
            "negative discriminant {disc:e}: m = {m} < (n−1)/(n+3) for n = {n}"
        )));
    }
    let c = -2.0 * SQRT_2 * m * (1.0 - m);
    let r = m * disc.sqrt();
    Ok((c - r, c + r))
}

/// `(δ, β)` for tilt `ε`.
pub fn delta_beta(regime: Regime, m: f64, eps: f64) -> (f64, f64) {
    match regime {
        Regime::Super => (3.0 * m - 7.0 + 2.0 * eps, 2.0 * eps - 3.0 - m),
        Regime::Sub => {
            let delta = 2.0 * SQRT_2 * m * eps - SQRT_2 * (5.0 * m - 1.0) * m / 2.0;
            (delta, delta - 2.0 * SQRT_2 * m * (1.0 - m))
        }
    }
}

pub fn eps_from_delta(regime: Regime, m: f64, delta: f64) -> f64 {
    match regime {
        Regime::Super => (delta - 3.0 * m + 7.0) / 2.0,
        Regime::Sub => (delta + SQRT_2 * (5.0 * m - 1.0) * m / 2.0) / (2.0 * SQRT_2 * m),
    }
}

pub fn eps_from_beta(regime: Regime, m: f64, beta: f64) -> f64 {
    match regime {
        Regime::Super => (beta + 3.0 + m) / 2.0,
        Regime::Sub => SQRT_2 * beta / (4.0 * m) + (m + 3.0) / 4.0,
    }
}

/// Every scalar attached to a tilt `ε`. Fields that belong to the other regime are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantSet {
    pub m: f64,
    pub n: usize,
    pub regime: Regime,
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub z2_drift: Option<f64>,
    pub m_drift: Option<f64>,
    pub g: Option<f64>,
    pub h: Option<f64>,
    pub beta_roots: Option<(f64, f64)>,
    pub alpha: f64,
}

impl ConstantSet {
    pub fn new(m: f64, n: usize, eps: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "dimension must be positive"));
        }
        let regime = Regime::of(m)?;
        let (delta, beta) = delta_beta(regime, m, eps);
        let (z2_drift, m_drift, g, h, roots) = match regime {
            Regime::Super => (
                Some(z2_drift_super(m, n, delta)),
                Some(m_drift_super(m, n, beta)),
                None,
                None,
                None,
            ),
            Regime::Sub => (
                None,
                None,
                Some(g_delta(m, n, delta)),
                Some(h_beta(m, n, beta)),
                beta_roots(m, n).ok(),
            ),
        };
        Ok(Self {
            m,
            n,
            regime,
            eps,
            delta,
            beta,
            z2_drift,
            m_drift,
            g,
            h,
            beta_roots: roots,
            alpha: aronson_benilan_alpha(m, n),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    Z2,
    MOverU,
}

impl Functional {
    pub fn as_str(self) -> &'static str {
        match self {
            Functional::Z2 => "z2",
            Functional::MOverU => "m_over_u",
        }
    }

    fn value(self, paths: &PathEnsemble, p: usize, n: usize) -> f64 {
        let z2 = paths.z_norm_sq(p, n);
        match self {
            Functional::Z2 => z2,
            Functional::MOverU => z2 / paths.u(p, n),
        }
    }
}

/// Drift coefficient (after completing squares) that decides whether the functional is a
/// submartingale under the tilt `ε`.
pub fn drift_coefficient(functional: Functional, m: f64, n: usize, eps: f64) -> Result<f64> {
    let regime = Regime::of(m)?;
    let (delta, beta) = delta_beta(regime, m, eps);
    Ok(match (regime, functional) {
        (Regime::Super, Functional::Z2) => z2_drift_super(m, n, delta),
        (Regime::Super, Functional::MOverU) => m_drift_super_completed(m, n, beta),
        (Regime::Sub, Functional::Z2) => g_delta(m, n, delta),
        (Regime::Sub, Functional::MOverU) => h_beta(m, n, beta),
    })
}

/// Nonnegative drift coefficient, i.e. the scalar hypothesis under which the functional
/// is a submartingale.
pub fn submartingale_hypothesis(
    functional: Functional,
    m: f64,
    n: usize,
    eps: f64,
) -> Result<bool> {
    Ok(drift_coefficient(functional, m, n, eps)? >= -1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointEstimate {
    pub step: usize,
    pub t: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmartingaleReport {
    pub functional: Functional,
    pub eps: f64,
    pub points: Vec<CheckpointEstimate>,
    /// Largest decrease between consecutive checkpoints in combined standard errors
    /// (zero when the estimates never decrease).
    pub max_decrease_sigmas: f64,
    /// Indices `i` with a significant decrease from checkpoint `i` to `i + 1`.
    pub violations: Vec<usize>,
    pub monotone: bool,
}

/// `E^Q[functional]` at each checkpoint step and the consecutive-decrease test.
pub fn empirical_submartingale(
    paths: &PathEnsemble,
    functional: Functional,
    checkpoints: &[usize],
) -> Result<SubmartingaleReport> {
    if !paths.has_yz() {
        return Err(Error::param("paths", "Y and Z have not been evaluated"));
    }
    let usable = paths.usable().count();
    if usable < MIN_PATHS {
        return Err(Error::TooFewPaths {
            usable,
            required: MIN_PATHS,
        });
    }
    if let Some(&bad) = checkpoints.iter().find(|&&n| n > paths.steps()) {
        return Err(Error::param(
            "checkpoints",
            format!("step {bad} is past the horizon"),
        ));
    }
    let points: Vec<CheckpointEstimate> = checkpoints
        .iter()
        .map(|&n| CheckpointEstimate {
            step: n,
            t: paths.time(n),
            estimate: paths.q_expectation(n, |p| functional.value(paths, p, n)),
        })
        .collect();
    let mut max_decrease_sigmas: f64 = 0.0;
    let mut violations = Vec::new();
    for (i, w) in points.windows(2).enumerate() {
        let (a, b) = (&w[0].estimate, &w[1].estimate);
        if b.mean >= a.mean {
            continue;
        }
        let z = a.z_score(b);
        max_decrease_sigmas = max_decrease_sigmas.max(z);
        if z > DECREASE_SIGMAS {
            violations.push(i);
        }
    }
    Ok(SubmartingaleReport {
        functional,
        eps: paths.target_measure().eps(),
        points,
        max_decrease_sigmas,
        monotone: violations.is_empty(),
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QIntegralReport {
    pub functional: Functional,
    pub eps: f64,
    /// Estimate of the left-hand side, including its constant prefactor.
    pub estimate: Estimate,
    pub bound: f64,
    /// `bound − (estimate + 3·SE)`.
    pub margin: f64,
    pub pass: bool,
}

/// Monte Carlo check of the integral bounds under the ensemble's target measure:
///
/// ```text
/// Z2:      E^Q ∫₀ᵀ |Z|² dt        ≤ 4‖f₀‖∞²
/// MOverU:  |c| E^Q ∫₀ᵀ |Z|²/U dt  ≤ 2‖f₀‖∞
/// ```
///
/// with `c` the backward drift coefficient for the same tilt. Integrals are left
/// Riemann sums on the path mesh.
pub fn q_integral_bound(
    paths: &PathEnsemble,
    functional: Functional,
    f0_sup: f64,
) -> Result<QIntegralReport> {
    if !paths.has_yz() {
        return Err(Error::param("paths", "Y and Z have not been evaluated"));
    }
    if !(f0_sup >= 0.0) {
        return Err(Error::param("f0_sup", "must be a nonnegative number"));
    }
    let eps = paths.target_measure().eps();
    let c = Kinematics {
        regime: paths.regime,
        m: paths.params.m,
        eps,
    }
    .bsde_drift();
    let (scale, bound) = match functional {
        Functional::Z2 => (1.0, 4.0 * f0_sup * f0_sup),
        Functional::MOverU => (c.abs(), 2.0 * f0_sup),
    };
    let dt = paths.mesh.dt;
    let steps = paths.steps();
    let estimate = paths.q_expectation(steps, |p| {
        scale
            * dt
            * (0..steps)
                .map(|n| functional.value(paths, p, n))
                .sum::<f64>()
    });
    let margin = bound - (estimate.mean + BOUND_SIGMAS * estimate.se);
    Ok(QIntegralReport {
        functional,
        eps,
        estimate,
        bound,
        margin,
        pass: margin >= 0.0,
    })
}

/// Pointwise data entering the drift computations: `U`, `Z`, and
/// `Q_ik = Σ_l K^l_i Z^k_l = ∂_i Z^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSample {
    pub u: f64,
    pub z: Vec<f64>,
    /// Row-major `Q[i][k]`.
    pub q: Vec<f64>,
}

impl TangentSample {
    fn dim(&self) -> usize {
        self.z.len()
    }

    fn q(&self, i: usize, k: usize) -> f64 {
        self.q[i * self.dim() + k]
    }

    fn z2(&self) -> f64 {
        self.z.iter().map(|v| v * v).sum()
    }
}

/// Drift of the functional written before completing squares, and the completed form
/// split into `coefficient · |Z|⁴/U^p` and the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftSplit {
    pub raw: f64,
    pub principal: f64,
    pub remainder: f64,
    /// Sum of the absolute values of the addends of `raw`.
    pub magnitude: f64,
}

impl DriftSplit {
    /// `|raw − principal − remainder|` relative to the size of the terms.
    pub fn defect(&self) -> f64 {
        let scale = self
            .magnitude
            .max(self.principal.abs())
            .max(self.remainder.abs())
            .max(1e-300);
        (self.raw - self.principal - self.remainder).abs() / scale
    }
}

/// Evaluate both sides of the completed-square identity for `functional` at the tilt
/// `ε`. For `m < 1` and `M` the drift is that of `U·M`.
pub fn drift_split(
    functional: Functional,
    m: f64,
    eps: f64,
    s: &TangentSample,
) -> Result<DriftSplit> {
    let regime = Regime::of(m)?;
    let d = s.dim();
    let (delta, beta) = delta_beta(regime, m, eps);
    let u = s.u;
    let z2 = s.z2();
    let z4 = z2 * z2;
    let u32 = u.powf(1.5);
    let off: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| (0..d).map(move |k| (i, k)))
        .filter(|(i, k)| i != k)
        .collect();
    Ok(match regime {
        Regime::Super => {
            let (p, scale, lead, lin) = match functional {
                Functional::Z2 => (delta, u, (3.0 - m) * (m - 1.0) * z4 / (u * u), delta),
                Functional::MOverU => {
                    let lead = 2.0 * (m + 1.0 - eps) * (m - 1.0) * z4 / (u * u * u);
                    (beta, 1.0, lead, beta)
                }
            };
            let mut raw = lead;
            let mut mag = lead.abs();
            let mut rem = 0.0;
            for k in 0..d {
                let th = s.q(k, k);
                let w = p * s.z[k] * s.z[k] - 2.0 * (m - 1.0) * z2;
                raw += scale * (th * w / u32 + th * th);
                mag += scale * ((th * w / u32).abs() + th * th);
                rem += scale * (th + w / (2.0 * u32)).powi(2);
            }
            for &(i, k) in &off {
                let q = s.q(i, k);
                raw += scale * (q * q + lin / u32 * s.z[i] * s.z[k] * q);
                mag += scale * (q * q + (lin / u32 * s.z[i] * s.z[k] * q).abs());
                rem += scale * (q + lin * s.z[i] * s.z[k] / (2.0 * u32)).powi(2);
            }
            let principal = match functional {
                Functional::Z2 => z2_drift_super(m, d, delta) * z4 / (u * u),
                Functional::MOverU => m_drift_super_completed(m, d, beta) * z4 / (u * u * u),
            };
            DriftSplit {
                raw,
                principal,
                remainder: rem,
                magnitude: mag,
            }
        }
        Regime::Sub => {
            let (p, lead) = match functional {
                Functional::Z2 => (delta, 0.75 * (3.0 * m - 1.0) * (1.0 - m) * z4 / (u * u)),
                Functional::MOverU => (beta, (1.0 - m) * (2.0 * m - eps) * z4 / (u * u)),
            };
            let c = SQRT_2 * (1.0 - m) * m;
            let mm = 2.0 * m * m;
            let mut raw = lead;
            let mut mag = lead.abs();
            let mut rem = 0.0;
            for k in 0..d {
                let th = s.q(k, k);
                let w = p * s.z[k] * s.z[k] + c * z2;
                raw += w * th / u32 + mm * th * th / u;
                mag += (w * th / u32).abs() + mm * th * th / u;
                rem += mm * (th / u.sqrt() + w / (4.0 * m * m * u)).powi(2);
            }
            for &(i, k) in &off {
                let q = s.q(i, k);
                raw += mm * q * q / u + p * s.z[i] * s.z[k] * q / u32;
                mag += mm * q * q / u + (p * s.z[i] * s.z[k] * q / u32).abs();
                rem += mm * (q / u.sqrt() + p * s.z[i] * s.z[k] / (4.0 * m * m * u)).powi(2);
            }
            let principal = match functional {
                Functional::Z2 => g_delta(m, d, delta) / 4.0 * z4 / (u * u),
                Functional::MOverU => h_beta(m, d, beta) * z4 / (4.0 * u * u),
            };
            DriftSplit {
                raw,
                principal,
                remainder: rem,
                magnitude: mag,
            }
        }
    })
}

/// `U`, `Z` and `Q` at PDE time `s`, point `x`, from the interpolated pressure.
pub fn sample_field(field: &CoefficientField, s: f64, x: &[f64]) -> Result<TangentSample> {
    let e = field.eval(s, x)?;
    let l = Kinematics {
        regime: field.regime,
        m: field.m,
        eps: 0.0,
    }
    .local(e.value);
    let d = field.dim();
    let z: Vec<f64> = (0..d).map(|k| l.sigma * e.grad[k]).collect();
    let mut q = vec![0.0; d * d];
    for i in 0..d {
        for k in 0..d {
            q[i * d + k] = l.dsigma * e.grad[i] * e.grad[k] + l.sigma * e.hess[i][k];
        }
    }
    Ok(TangentSample { u: l.u, z, q })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderReport {
    pub functional: Functional,
    pub eps: f64,
    pub samples: usize,
    /// Smallest remainder seen; sums of squares, so never negative.
    pub min_remainder: f64,
    /// Largest relative defect of the completed-square identity.
    pub max_identity_defect: f64,
}

/// Evaluate the remainder and the completed-square identity at every stored point of
/// every usable path.
pub fn remainder_audit(
    paths: &PathEnsemble,
    field: &CoefficientField,
    functional: Functional,
    eps: f64,
) -> Result<RemainderReport> {
    let t = paths.params.t_final;
    let mut samples = 0;
    let mut min_remainder = f64::INFINITY;
    let mut max_identity_defect: f64 = 0.0;
    for p in paths.usable() {
        for n in 0..=paths.steps() {
            let s = if n == paths.steps() {
                0.0
            } else {
                t - paths.time(n)
            };
            let sample = sample_field(field, s, paths.x(p, n))?;
            let split = drift_split(functional, paths.params.m, eps, &sample)?;
            samples += 1;
            min_remainder = min_remainder.min(split.remainder);
            max_identity_defect = max_identity_defect.max(split.defect());
        }
    }
    Ok(RemainderReport {
        functional,
        eps,
        samples,
        min_remainder,
        max_identity_defect,
    })
}

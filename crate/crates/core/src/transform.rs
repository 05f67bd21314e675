//! Pressure variables for the slow (`m > 1`) and fast (`m < 1`) regimes.
//!
//! * slow: `f = m/(m−1)·(u^{m−1} − 1)`, `U = 2((m−1)f + m) = 2m·u^{m−1}`
//! * fast: `f = m/(1−m)·(u^{1−m} − 1)`, `U = (1−m)f + m = m·u^{1−m}`
//!
//! Both tend to `log u` as `m → 1`; that limit is available only through
//! [`log_transform`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    gradient, laplacian, norm_sq, with_ghosts, GridSpec, ScalarFieldHistory, TimeMesh,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `m > 1`
    Super,
    /// `0 < m < 1`
    Sub,
}

impl Regime {
    pub fn of(m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            Err(Error::param("m", format!("exponent must be > 0, got {m}")))
        } else if m > 1.0 {
            Ok(Regime::Super)
        } else if m < 1.0 {
            Ok(Regime::Sub)
        } else {
            Err(Error::param(
                "m",
                "m = 1 has no pressure variable; use log_transform",
            ))
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Super => "super",
            Regime::Sub => "sub",
        }
    }
}

/// `f` as a function of `u > 0`.
pub fn pressure_value(regime: Regime, m: f64, u: f64) -> f64 {
    match regime {
        Regime::Super => m / (m - 1.0) * ((m - 1.0) * u.ln()).exp_m1(),
        Regime::Sub => m / (1.0 - m) * ((1.0 - m) * u.ln()).exp_m1(),
    }
}

/// The quantity that must stay positive: `(m−1)f + m` or `(1−m)f + m`.
pub fn positivity_term(regime: Regime, m: f64, f: f64) -> f64 {
    match regime {
        Regime::Super => (m - 1.0) * f + m,
        Regime::Sub => (1.0 - m) * f + m,
    }
}

/// Coefficient field `U` as a function of `f`.
pub fn coefficient(regime: Regime, m: f64, f: f64) -> f64 {
    match regime {
        Regime::Super => 2.0 * positivity_term(regime, m, f),
        Regime::Sub => positivity_term(regime, m, f),
    }
}

/// `u` as a function of `f`, or `None` if the positivity term is not positive.
pub fn inverse_value(regime: Regime, m: f64, f: f64) -> Option<f64> {
    if !(positivity_term(regime, m, f) > 0.0) {
        return None;
    }
    Some(
        match regime {
            Regime::Super => ((m - 1.0) * f / m).ln_1p() / (m - 1.0),
            Regime::Sub => ((1.0 - m) * f / m).ln_1p() / (1.0 - m),
        }
        .exp(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    pub regime: Regime,
    pub m: f64,
    pub f: Vec<f64>,
    /// `U` at each point.
    pub coef: Vec<f64>,
}

fn check_positive(u: &[f64]) -> Result<()> {
    match u
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
    {
        Some((index, &value)) => Err(Error::NonPositive { index, value }),
        None => Ok(()),
    }
}

pub fn to_pressure(u: &[f64], m: f64) -> Result<PressureField> {
    let regime = Regime::of(m)?;
    check_positive(u)?;
    let f: Vec<f64> = u.iter().map(|&v| pressure_value(regime, m, v)).collect();
    let coef = f.iter().map(|&v| coefficient(regime, m, v)).collect();
    Ok(PressureField { regime, m, f, coef })
}

pub fn from_pressure(field: &PressureField) -> Result<Vec<f64>> {
    field
        .f
        .iter()
        .enumerate()
        .map(|(index, &f)| {
            inverse_value(field.regime, field.m, f).ok_or(Error::PressureInvariant {
                index,
                value: positivity_term(field.regime, field.m, f),
            })
        })
        .collect()
}

/// The `m = 1` transform `log u`.
pub fn log_transform(u: &[f64]) -> Result<Vec<f64>> {
    check_positive(u)?;
    Ok(u.iter().map(|v| v.ln()).collect())
}

/// The unshifted pressure `v = m/(m−1)·u^{m−1}`.
pub fn unshifted_pressure(m: f64, u: f64) -> f64 {
    m / (m - 1.0) * u.powf(m - 1.0)
}

/// Pressure variable over every stored slice of a solved history.
#[derive(Debug, Clone)]
pub struct PressureHistory {
    pub regime: Regime,
    pub m: f64,
    pub grid: GridSpec,
    pub mesh: TimeMesh,
    times: Vec<f64>,
    f: Vec<f64>,
    coef: Vec<f64>,
}

impl PressureHistory {
    pub fn from_history(hist: &ScalarFieldHistory) -> Result<Self> {
        let field = to_pressure(hist.values(), hist.m)?;
        Ok(Self {
            regime: field.regime,
            m: hist.m,
            grid: hist.grid.clone(),
            mesh: hist.mesh,
            times: hist.times(),
            f: field.f,
            coef: field.coef,
        })
    }

    pub fn n_slices(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn f(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.f[k * n..(k + 1) * n]
    }

    pub fn coef(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.coef[k * n..(k + 1) * n]
    }

    /// `‖f(0, ·)‖∞` over the grid.
    pub fn f0_sup(&self) -> f64 {
        self.f(0).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `f` of the boundary oracle at time `t`, for Dirichlet ghosts.
    pub fn ghost_map(&self) -> impl Fn(f64) -> f64 {
        let (regime, m) = (self.regime, self.m);
        move |u| pressure_value(regime, m, u)
    }

    pub fn field(&self, k: usize) -> PressureField {
        PressureField {
            regime: self.regime,
            m: self.m,
            f: self.f(k).to_vec(),
            coef: self.coef(k).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSlice {
    pub t: f64,
    pub values: Vec<f64>,
}

impl ResidualSlice {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Right-hand side of the pressure equation for the regime.
fn pressure_rhs(regime: Regime, m: f64, f: f64, lap: f64, grad2: f64) -> f64 {
    match regime {
        Regime::Super => ((m - 1.0) * f + m) * lap + grad2,
        Regime::Sub => {
            let w = (1.0 - m) * f + m;
            m * m / w * lap + m * m * (2.0 * m - 1.0) / (w * w) * grad2
        }
    }
}

/// Central-in-time residual of the pressure equation on every interior stored slice.
pub fn pressure_pde_residual(hist: &PressureHistory) -> Result<Vec<ResidualSlice>> {
    let n = hist.n_slices();
    if n < 3 {
        return Err(Error::HistoryTooShort(format!(
            "{n} slices; central differences need at least 3"
        )));
    }
    let grid = &hist.grid;
    let map = hist.ghost_map();
    let mut out = Vec::with_capacity(n - 2);
    for k in 1..n - 1 {
        let t = hist.times[k];
        let span = hist.times[k + 1] - hist.times[k - 1];
        let f = hist.f(k);
        let (lap, grad) = with_ghosts(grid, t, &map, |g| -> Result<_> {
            Ok((laplacian(f, grid, g)?, gradient(f, grid, g)?))
        })?;
        let g2 = norm_sq(&grad);
        let values = (0..f.len())
            .map(|i| {
                let ft = (hist.f(k + 1)[i] - hist.f(k - 1)[i]) / span;
                ft - pressure_rhs(hist.regime, hist.m, f[i], lap[i], g2[i])
            })
            .collect();
        out.push(ResidualSlice { t, values });
    }
    Ok(out)
}

/// `α = n(m−1)/((m−1)n + 2)`.
pub fn aronson_benilan_alpha(m: f64, n: usize) -> f64 {
    let n = n as f64;
    n * (m - 1.0) / ((m - 1.0) * n + 2.0)
}

/// Pointwise `αv/t − (|∇v|² − ∂ₜv)` with `v = m/(m−1)·u^{m−1}` at the stored slice at
/// time `t`. Needs stored neighbors on both sides of `t`.
pub fn aronson_benilan_margin(hist: &ScalarFieldHistory, t: f64) -> Result<Vec<f64>> {
    let m = hist.m;
    let n = hist.grid.dim();
    if !(m > 1.0 - 2.0 / n as f64) || m == 1.0 {
        return Err(Error::Regime(format!(
            "aronson-benilan needs m > 1 - 2/n and m != 1 (m = {m}, n = {n})"
        )));
    }
    if !(t > 0.0) {
        return Err(Error::param("t", "must be > 0"));
    }
    let k = hist.slice_at(t)?;
    if k == 0 || k + 1 >= hist.n_slices() {
        return Err(Error::HistoryTooShort(format!(
            "slice at t = {t} has no neighbor on both sides"
        )));
    }
    let alpha = aronson_benilan_alpha(m, n);
    let v_of = |s: &[f64]| -> Vec<f64> { s.iter().map(|&u| unshifted_pressure(m, u)).collect() };
    let v = v_of(hist.slice(k));
    let vp = v_of(hist.slice(k + 1));
    let vm = v_of(hist.slice(k - 1));
    let span = hist.time(k + 1) - hist.time(k - 1);
    let t_k = hist.time(k);
    let grad = with_ghosts(
        &hist.grid,
        t_k,
        |u| unshifted_pressure(m, u),
        |g| gradient(&v, &hist.grid, g),
    )?;
    let g2 = norm_sq(&grad);
    Ok((0..v.len())
        .map(|i| {
            let vt = (vp[i] - vm[i]) / span;
            alpha * v[i] / t_k - (g2[i] - vt)
        })
        .collect())
}

//! Explicit gradient bounds: evaluation, comparison with solved fields, and the
//! chain-rule audit between the pressure forms and the displays in `u`.
//!
//! Norms: `N₊ = ‖u₀^{m−1} − 1‖∞`, `N₋ = ‖u₀^{1−m} − 1‖∞`, `F = ‖f₀‖∞`.
//!
//! | case | left-hand side | bound |
//! |------|----------------|-------|
//! | `thm1_case1` | `|∇u^{3(m−1)/2}|` | `3N₊² / (√(2m) t^{3/2})` |
//! | `thm1_case2` | `|∇u^{m−1}|` | `√(2(m−1)N₊) / (m√t)` |
//! | `thm1_case3` | `|∇u^{1−m}|` | `√2 N₋ √(N₋+1) / (√m √t)` |
//! | `thm1_case4` | `|∇log u|` | `2√(m N₋/(1−m)) / (m² √(t|D|))` |
//! | `est1` | `((m−1)f+m)|∇f|²` | `2F²/t` |
//! | `thm3` | `|∇f|²` | `2F/(mt)` |
//! | `e671` | `|∇f|` | `√2 F √((1−m)F+m) / (m√t)` |
//! | `thm6` | `|∇log u|` | `2√F / (m² √(t|D|))` |
//!
//! with `D = 2m − 4 − √2β₂/m`.

use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{gradient, norm_sq, with_ghosts, ScalarFieldHistory};
use crate::martingale::beta_roots;
use crate::transform::{pressure_value, Regime};

/// Times before this are reported but excluded from pass/fail.
pub const CHECK_FROM: f64 = 0.05;
/// Samples drawn by [`equivalence_audit`].
pub const AUDIT_SAMPLES: usize = 100;
/// Agreement required of a constant audit factor.
pub const AUDIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Thm1Case1,
    Thm1Case2,
    Thm1Case3,
    Thm1Case4,
    Est1,
    Thm3,
    E671,
    Thm6,
}

impl Case {
    pub const ALL: [Case; 8] = [
        Case::Thm1Case1,
        Case::Thm1Case2,
        Case::Thm1Case3,
        Case::Thm1Case4,
        Case::Est1,
        Case::Thm3,
        Case::E671,
        Case::Thm6,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Case::Thm1Case1 => "thm1_case1",
            Case::Thm1Case2 => "thm1_case2",
            Case::Thm1Case3 => "thm1_case3",
            Case::Thm1Case4 => "thm1_case4",
            Case::Est1 => "est1",
            Case::Thm3 => "thm3",
            Case::E671 => "e671",
            Case::Thm6 => "thm6",
        }
    }

    pub fn from_id(id: &str) -> Option<Case> {
        Case::ALL.into_iter().find(|c| c.id() == id)
    }

    /// Gradient-form case number, `1..=4`.
    pub fn display(n: u8) -> Result<Case> {
        match n {
            1 => Ok(Case::Thm1Case1),
            2 => Ok(Case::Thm1Case2),
            3 => Ok(Case::Thm1Case3),
            4 => Ok(Case::Thm1Case4),
            _ => Err(Error::param("case", format!("expected 1..=4, got {n}"))),
        }
    }

    /// The pressure form the display is derived from.
    pub fn pressure_form(self) -> Case {
        match self {
            Case::Thm1Case1 | Case::Est1 => Case::Est1,
            Case::Thm1Case2 | Case::Thm3 => Case::Thm3,
            Case::Thm1Case3 | Case::E671 => Case::E671,
            Case::Thm1Case4 | Case::Thm6 => Case::Thm6,
        }
    }

    pub fn is_pressure_form(self) -> bool {
        self.pressure_form() == self
    }

    pub fn regime(self) -> Regime {
        match self.pressure_form() {
            Case::Est1 | Case::Thm3 => Regime::Super,
            _ => Regime::Sub,
        }
    }

    /// Power of the gradient in the left-hand side.
    fn power(self) -> i32 {
        match self {
            Case::Est1 | Case::Thm3 => 2,
            _ => 1,
        }
    }
}

/// Parameter range in which `case` is asserted.
pub fn regime_valid(case: Case, m: f64, n: usize) -> bool {
    let nf = n as f64;
    match case {
        Case::Thm1Case1 => m > 1.0 && m < 1.0 + 2.0 / nf,
        Case::Est1 => m > 1.0 && m <= 1.0 + 2.0 / nf,
        Case::Thm1Case2 | Case::Thm3 => n == 1 && m > 1.0,
        Case::Thm1Case3 => m >= 1.0 - 6.0 / (nf + 8.0) && m < 1.0,
        Case::E671 => m >= 1.0 - 6.0 / (nf + 8.0) && m < 1.0,
        Case::Thm1Case4 => m > (nf - 1.0) / (nf + 3.0) && m < 1.0,
        Case::Thm6 => m >= (nf - 1.0) / (nf + 3.0) && m < 1.0,
    }
}

/// `|2m − 4 − √2β₂/m|`.
pub fn thm6_denominator(m: f64, n: usize) -> Result<f64> {
    let (_, b2) = beta_roots(m, n)?;
    Ok((2.0 * m - 4.0 - SQRT_2 * b2 / m).abs())
}

/// Right-hand side of `case` at time `t` for the input norm of the case.
pub fn bound_value(case: Case, m: f64, n: usize, norm: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param("t", format!("bounds need t > 0, got {t}")));
    }
    if !(m > 0.0) {
        return Err(Error::param("m", format!("must be positive, got {m}")));
    }
    let st = t.sqrt();
    Ok(match case {
        Case::Thm1Case1 => 3.0 * norm * norm / ((2.0 * m).sqrt() * t * st),
        Case::Thm1Case2 => (2.0 * (m - 1.0) * norm).sqrt() / (m * st),
        Case::Thm1Case3 => SQRT_2 * norm * (norm + 1.0).sqrt() / (m.sqrt() * st),
        Case::Thm1Case4 => {
            2.0 * (m / (1.0 - m) * norm).sqrt() / (m * m * (st * thm6_denominator(m, n)?.sqrt()))
        }
        Case::Est1 => 2.0 * norm * norm / t,
        Case::Thm3 => 2.0 * norm / (m * t),
        Case::E671 => SQRT_2 * norm * ((1.0 - m) * norm + m).sqrt() / (m * st),
        Case::Thm6 => 2.0 * norm.sqrt() / (m * m * (t * thm6_denominator(m, n)?).sqrt()),
    })
}

/// Left-hand side of `case` from a value `u > 0` and `|∇u|`.
pub fn lhs_from_gradient(case: Case, m: f64, u: f64, grad_norm: f64) -> f64 {
    let g = grad_norm;
    match case {
        Case::Thm1Case1 => {
            let p = 1.5 * (m - 1.0);
            p.abs() * u.powf(p - 1.0) * g
        }
        Case::Thm1Case2 => (m - 1.0).abs() * u.powf(m - 2.0) * g,
        Case::Thm1Case3 => (1.0 - m).abs() * u.powf(-m) * g,
        Case::Thm1Case4 | Case::Thm6 => g / u,
        Case::Est1 => {
            let df = m * u.powf(m - 2.0) * g;
            m * u.powf(m - 1.0) * df * df
        }
        Case::Thm3 => (m * u.powf(m - 2.0) * g).powi(2),
        Case::E671 => m * u.powf(-m) * g,
    }
}

/// Input norm of `case` for initial data `u0`.
pub fn input_norm(case: Case, m: f64, u0: &[f64]) -> f64 {
    let sup = |f: &dyn Fn(f64) -> f64| u0.iter().map(|&u| f(u).abs()).fold(0.0, f64::max);
    match case {
        Case::Thm1Case1 | Case::Thm1Case2 => sup(&|u| u.powf(m - 1.0) - 1.0),
        Case::Thm1Case3 | Case::Thm1Case4 => sup(&|u| u.powf(1.0 - m) - 1.0),
        Case::Est1 | Case::Thm3 | Case::E671 | Case::Thm6 => {
            sup(&|u| pressure_value(case.regime(), m, u))
        }
    }
}

/// Grid supremum of the left-hand side on stored slice `k`.
fn observed_on_slice(case: Case, hist: &ScalarFieldHistory, k: usize) -> Result<f64> {
    let u = hist.slice(k);
    let grad = with_ghosts(
        &hist.grid,
        hist.time(k),
        |v| v,
        |g| gradient(u, &hist.grid, g),
    )?;
    Ok(norm_sq(&grad)
        .iter()
        .zip(u)
        .map(|(g2, &v)| lhs_from_gradient(case, hist.m, v, g2.sqrt()))
        .fold(0.0, f64::max))
}

/// Grid supremum of the left-hand side of `case` at mesh time `t`.
pub fn observed_lhs(case: Case, hist: &ScalarFieldHistory, t: f64) -> Result<f64> {
    observed_on_slice(case, hist, hist.slice_at(t)?)
}

/// Relative discretization tolerance for a field dominated by wavenumber `k`:
/// `(kh)²/3` from central differences plus `k² D dt` from the time step.
pub fn discretization_tolerance(wavenumber: f64, h: f64, d_max: f64, dt: f64) -> f64 {
    let k2 = wavenumber * wavenumber;
    k2 * h * h / 3.0 + k2 * d_max * dt
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub t: f64,
    pub bound: f64,
    pub observed: f64,
    /// `bound − observed`.
    pub margin: f64,
    /// Absolute allowance for discretization error in `observed`.
    pub tolerance: f64,
    /// Whether the row takes part in pass/fail.
    pub checked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub case: Case,
    pub m: f64,
    pub n: usize,
    pub t_final: f64,
    pub norm: f64,
    pub rows: Vec<EstimateRow>,
    /// Smallest `margin − tolerance` over checked rows.
    pub min_margin: f64,
    pub regime_valid: bool,
    pub pass: bool,
}

/// Compare the bound of `case` with the solved field at every stored time `t > 0`, each
/// time acting as its own horizon. `rel_tol` scales `observed` into the tolerance
/// (doubled for squared left-hand sides).
pub fn bound_check(case: Case, hist: &ScalarFieldHistory, rel_tol: f64) -> Result<EstimateReport> {
    let m = hist.m;
    let n = hist.grid.dim();
    if case.is_pressure_form() && Regime::of(m)? != case.regime() {
        return Err(Error::Regime(format!(
            "{} needs the {} regime, got m = {m}",
            case.id(),
            case.regime().as_str()
        )));
    }
    let valid = regime_valid(case, m, n);
    let norm = input_norm(case, m, hist.slice(0));
    let rel = rel_tol * case.power() as f64;
    let mut rows = Vec::new();
    for k in 0..hist.n_slices() {
        let t = hist.time(k);
        if t <= 0.0 {
            continue;
        }
        let bound = match bound_value(case, m, n, norm, t) {
            Ok(b) => b,
            Err(_) if !valid => f64::NAN,
            Err(e) => return Err(e),
        };
        let observed = observed_on_slice(case, hist, k)?;
        rows.push(EstimateRow {
            t,
            bound,
            observed,
            margin: bound - observed,
            tolerance: rel * observed,
            checked: t >= CHECK_FROM - 1e-12,
        });
    }
    let min_margin = rows
        .iter()
        .filter(|r| r.checked)
        .map(|r| r.margin - r.tolerance)
        .fold(f64::INFINITY, f64::min);
    Ok(EstimateReport {
        case,
        m,
        n,
        t_final: hist.mesh.t_final,
        norm,
        pass: rows.iter().any(|r| r.checked) && min_margin >= 0.0,
        rows,
        min_margin,
        regime_valid: valid,
    })
}

/// [`bound_check`] restricted to the pressure forms, rejecting parameters outside the
/// case's parameter range.
pub fn pressure_bound_check(
    case: Case,
    hist: &ScalarFieldHistory,
    rel_tol: f64,
) -> Result<EstimateReport> {
    if !case.is_pressure_form() {
        return Err(Error::param(
            "case",
            format!("{} is not a pressure form", case.id()),
        ));
    }
    if !regime_valid(case, hist.m, hist.grid.dim()) {
        return Err(Error::Regime(format!(
            "{} does not hold for m = {}, n = {}",
            case.id(),
            hist.m,
            hist.grid.dim()
        )));
    }
    bound_check(case, hist, rel_tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub case: Case,
    pub pressure_form: Case,
    pub samples: usize,
    /// Range of `display / bound implied by the pressure form`.
    pub factor_min: f64,
    pub factor_max: f64,
    /// Range of `display / bound obtained from the integral argument`.
    pub derivation_factor_min: f64,
    pub derivation_factor_max: f64,
    /// The display reproduces the pressure form (factor 1).
    pub exact: bool,
    pub pattern: &'static str,
    /// Every sample matches `pattern` to [`AUDIT_TOL`].
    pub pattern_holds: bool,
}

/// Sample admissible `(m, n, N, t, u, |∇u|)` for a gradient-form case and compare the display
/// with the bound the pressure form implies through the chain rule. Deterministic.
pub fn equivalence_audit(case: Case) -> Result<AuditReport> {
    let display = match case {
        Case::Thm1Case1 | Case::Thm1Case2 | Case::Thm1Case3 | Case::Thm1Case4 => case,
        other => {
            return Err(Error::param(
                "case",
                format!("{} is not a display case", other.id()),
            ));
        }
    };
    let form = display.pressure_form();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + form as u64);
    let pattern = match display {
        Case::Thm1Case1 => "display = (N/t) x implied",
        Case::Thm1Case4 => "display = implied; derivation = m x display",
        _ => "display = implied",
    };
    let (mut f_lo, mut f_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut d_lo, mut d_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut holds = true;
    for _ in 0..AUDIT_SAMPLES {
        let n: usize = if display == Case::Thm1Case2 {
            1
        } else {
            rng.random_range(1..=3)
        };
        let nf = n as f64;
        let m = match display {
            Case::Thm1Case1 => 1.0 + rng.random_range(0.02..0.98) * 2.0 / nf,
            Case::Thm1Case2 => rng.random_range(1.05..4.0),
            Case::Thm1Case3 => {
                let lo = 1.0 - 6.0 / (nf + 8.0);
                rng.random_range(lo..0.98)
            }
            _ => {
                let lo = (nf - 1.0) / (nf + 3.0);
                rng.random_range(lo.max(0.05) + 0.01..0.98)
            }
        };
        let big_n: f64 = rng.random_range(0.05..2.0);
        let t: f64 = rng.random_range(0.01..2.0);
        let u: f64 = rng.random_range(0.2..3.0);
        let g: f64 = rng.random_range(0.01..5.0);
        let f_norm = m / (m - 1.0).abs() * big_n;
        let shown = bound_value(display, m, n, big_n, t)?;
        let b_p = bound_value(form, m, n, f_norm, t)?;
        let l_thm = lhs_from_gradient(display, m, u, g);
        let l_p = lhs_from_gradient(form, m, u, g);
        let implied = l_thm * (b_p / l_p).powf(1.0 / form.power() as f64);
        let factor = shown / implied;
        let derived = if display == Case::Thm1Case4 {
            2.0 * f_norm.sqrt() / (m * (t * thm6_denominator(m, n)?).sqrt())
        } else {
            implied
        };
        let dfac = shown / derived;
        f_lo = f_lo.min(factor);
        f_hi = f_hi.max(factor);
        d_lo = d_lo.min(dfac);
        d_hi = d_hi.max(dfac);
        let expected = match display {
            Case::Thm1Case1 => (big_n / t, big_n / t),
            Case::Thm1Case4 => (1.0, 1.0 / m),
            _ => (1.0, 1.0),
        };
        holds &= (factor / expected.0 - 1.0).abs() <= AUDIT_TOL
            && (dfac / expected.1 - 1.0).abs() <= AUDIT_TOL;
    }
    Ok(AuditReport {
        case: display,
        pressure_form: form,
        samples: AUDIT_SAMPLES,
        factor_min: f_lo,
        factor_max: f_hi,
        derivation_factor_min: d_lo,
        derivation_factor_max: d_hi,
        exact: (f_lo - 1.0).abs() <= AUDIT_TOL && (f_hi - 1.0).abs() <= AUDIT_TOL,
        pattern,
        pattern_holds: holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{solve, stable_dt, GridSpec, TimeMesh};
    use std::f64::consts::PI;

    #[test]
    fn bound_examples() {
        let b = bound_value(Case::Thm1Case2, 2.0, 1, 0.5, 1.0).unwrap();
        assert!((b - 0.5).abs() < 1e-15);
        let b = bound_value(Case::Thm1Case3, 0.5, 1, 0.2, 1.0).unwrap();
        assert!((b - 0.43817804600413285).abs() < 1e-12);
        let b = bound_value(Case::Thm1Case4, 0.5, 1, 0.3, 2.0).unwrap();
        let expected = 2.0 * 0.3f64.sqrt() / (0.25 * (3.0f64 * 2.0).sqrt());
        assert!((b - expected).abs() < 1e-12);
        assert!(bound_value(Case::Est1, 1.5, 1, 1.0, 0.0).is_err());
    }

    #[test]
    fn bounds_blow_up_and_decrease() {
        for case in Case::ALL {
            let (m, n) = if case.regime() == Regime::Super {
                (1.5, 1)
            } else {
                (0.7, 1)
            };
            let mut prev = f64::INFINITY;
            for k in 1..50 {
                let t = 1e-6 * 1.5f64.powi(k);
                let b = bound_value(case, m, n, 0.4, t).unwrap();
                assert!(b < prev, "{case:?}");
                prev = b;
            }
            assert!(bound_value(case, m, n, 0.4, 1e-12).unwrap() > 1e5);
        }
    }

    #[test]
    fn norm_scaling() {
        let a = bound_value(Case::Thm1Case2, 2.0, 1, 0.3, 0.7).unwrap();
        let b = bound_value(Case::Thm1Case2, 2.0, 1, 1.2, 0.7).unwrap();
        assert!((b / a - 2.0).abs() < 1e-14);
        let a = bound_value(Case::Thm1Case1, 1.5, 1, 0.3, 0.7).unwrap();
        let b = bound_value(Case::Thm1Case1, 1.5, 1, 1.2, 0.7).unwrap();
        assert!((b / a - 16.0).abs() < 1e-13);
    }

    #[test]
    fn regime_gates() {
        assert!(!regime_valid(Case::Thm1Case1, 3.0, 2));
        assert!(regime_valid(Case::Thm1Case1, 1.5, 2));
        assert!(!regime_valid(Case::Thm1Case1, 2.0, 2));
        assert!(regime_valid(Case::Est1, 2.0, 2));
        assert!(!regime_valid(Case::Thm3, 2.0, 2));
        assert!(regime_valid(Case::E671, 0.8, 2));
        assert!(!regime_valid(Case::E671, 0.3, 2));
        assert!(regime_valid(Case::Thm6, 0.5, 1));
        assert!(!regime_valid(Case::Thm1Case4, 0.2, 2));
        assert!(regime_valid(Case::Thm6, 0.2, 2));
        for case in Case::ALL {
            assert_eq!(Case::from_id(case.id()), Some(case));
        }
    }

    #[test]
    fn chain_rule_identities() {
        let (u, g) = (1.7, 0.9);
        assert!((lhs_from_gradient(Case::Thm6, 0.5, u, g) - g / u).abs() < 1e-15);
        // |∇ log u| = |∇u^{m−1}| / ((m−1) u^{m−1})
        let m = 2.5;
        let l2 = lhs_from_gradient(Case::Thm1Case2, m, u, g);
        assert!((l2 / ((m - 1.0) * u.powf(m - 1.0)) - g / u).abs() < 1e-12);
    }

    fn sine_history(m: f64, amp: f64) -> ScalarFieldHistory {
        let g = GridSpec::periodic_box(1, 0.0, 1.0, 64).unwrap();
        let u0 = g.sample(|x| 1.0 + amp * (2.0 * PI * x[0]).sin());
        let mesh = TimeMesh::with_max_dt(0.1, 0.9 * stable_dt(&u0, m, &g)).unwrap();
        solve(&u0, m, &mesh, &g).unwrap()
    }

    #[test]
    fn observed_initial_gradient() {
        let h = sine_history(2.0, 0.1);
        let obs = observed_lhs(Case::Thm1Case2, &h, 0.0).unwrap();
        let exact = 0.2 * PI;
        let hh = 1.0 / 64.0;
        assert!((obs - exact).abs() < exact * (2.0 * PI * hh).powi(2) / 6.0 + 1e-12);
        assert!(observed_lhs(Case::Thm1Case2, &h, 0.0123456).is_err());
    }

    #[test]
    fn constant_field_passes_trivially() {
        let g = GridSpec::periodic_box(1, 0.0, 1.0, 16).unwrap();
        let mesh = TimeMesh::with_max_dt(0.1, 0.9 * stable_dt(&[1.2; 16], 1.5, &g)).unwrap();
        let h = solve(&[1.2; 16], 1.5, &mesh, &g).unwrap();
        let r = pressure_bound_check(Case::Est1, &h, 0.0).unwrap();
        assert!(r.pass && r.regime_valid);
        assert!(r
            .rows
            .iter()
            .all(|row| row.observed == 0.0 && row.margin == row.bound));
    }

    #[test]
    fn pressure_forms_hold_on_sine_data() {
        for (case, m) in [
            (Case::Est1, 1.5),
            (Case::Thm3, 2.0),
            (Case::E671, 0.5),
            (Case::Thm6, 0.5),
        ] {
            let h = sine_history(m, 0.3);
            let r = pressure_bound_check(case, &h, 0.05).unwrap();
            assert!(r.pass, "{case:?}: {}", r.min_margin);
        }
    }

    #[test]
    fn pressure_check_rejects_wrong_regime() {
        let h = sine_history(2.0, 0.3);
        assert!(pressure_bound_check(Case::E671, &h, 0.0).is_err());
        assert!(pressure_bound_check(Case::Thm1Case2, &h, 0.0).is_err());
        let r = bound_check(Case::Thm1Case4, &h, 0.0).unwrap();
        assert!(!r.regime_valid);
    }

    #[test]
    fn audit_patterns() {
        for k in 1..=4u8 {
            let r = equivalence_audit(Case::display(k).unwrap()).unwrap();
            assert!(r.pattern_holds, "{r:?}");
            assert_eq!(r.exact, k != 1, "{r:?}");
        }
        assert!(equivalence_audit(Case::Est1).is_err());
    }
}

//! First-variation process `J = ∂X/∂x₀`, its inverse flow `K`, and the checks that use
//! them.
//!
//! With `σ = σ(f)` scalar and drift `b = a(f)∇f`:
//!
//! ```text
//! dJ = Σₖ Bₖ J dWᵏ + C J dt
//! dK = −Σₖ K Bₖ dWᵏ + K(−C + ∇σ⊗∇σ) dt
//! (Bₖ)ⁱₗ = δᵢₖ ∂ₗσ,   C = a ∇²f + a' ∇f⊗∇f
//! ```

use serde::Serialize;

use super::{
    evaluate_yz, simulate_forward, CoefficientField, Kinematics, PathEnsemble, SimParams,
    TANGENT_TOL,
};
use crate::error::{Error, Result};

/// Integrate `J` and `K` along the stored paths with `J₀ = K₀ = I`. Paths whose `K·J`
/// leaves the identity by more than [`TANGENT_TOL`] are flagged.
pub fn simulate_tangent(paths: &mut PathEnsemble, field: &CoefficientField) -> Result<()> {
    let d = paths.dim();
    let d2 = d * d;
    let steps = paths.steps();
    let dt = paths.mesh.dt;
    let kin = Kinematics {
        regime: paths.regime,
        m: paths.params.m,
        eps: paths.params.dynamics_eps(),
    };
    let nodes = paths.n_paths() * (steps + 1);
    let mut jv = vec![0.0; nodes * d2];
    let mut kv = vec![0.0; nodes * d2];
    let mut flags = vec![false; paths.n_paths()];
    for p in 0..paths.n_paths() {
        let mut j = identity(d);
        let mut k = identity(d);
        let stop = paths.escaped_at(p).unwrap_or(steps + 1);
        for n in 0..=steps {
            let at = (p * (steps + 1) + n) * d2;
            jv[at..at + d2].copy_from_slice(&j);
            kv[at..at + d2].copy_from_slice(&k);
            if frobenius_from_identity(&mat_mul(&k, &j, d), d) > TANGENT_TOL {
                flags[p] = true;
            }
            if n == steps || n + 1 >= stop {
                continue;
            }
            let e = field.eval(paths.params.t_final - paths.time(n), paths.x(p, n))?;
            let l = kin.local(e.value);
            let gs: Vec<f64> = (0..d).map(|a| l.dsigma * e.grad[a]).collect();
            let mut c = vec![0.0; d2];
            for r in 0..d {
                for s in 0..d {
                    c[r * d + s] = l.a * e.hess[r][s] + l.da * e.grad[r] * e.grad[s];
                }
            }
            let dw = paths.dw(p, n);
            // J ← J + [ΔWʳ (∇σᵀJ)ₛ] + C J dt
            let gj: Vec<f64> = (0..d)
                .map(|s| (0..d).map(|q| gs[q] * j[q * d + s]).sum())
                .collect();
            let cj = mat_mul(&c, &j, d);
            let mut jn = j.clone();
            for r in 0..d {
                for s in 0..d {
                    jn[r * d + s] += dw[r] * gj[s] + cj[r * d + s] * dt;
                }
            }
            // K ← K − (KΔW)⊗∇σ + K(−C + ∇σ⊗∇σ) dt
            let kdw: Vec<f64> = (0..d)
                .map(|r| (0..d).map(|q| k[r * d + q] * dw[q]).sum())
                .collect();
            let mut g = vec![0.0; d2];
            for r in 0..d {
                for s in 0..d {
                    g[r * d + s] = -c[r * d + s] + gs[r] * gs[s];
                }
            }
            let kg = mat_mul(&k, &g, d);
            let mut kn = k.clone();
            for r in 0..d {
                for s in 0..d {
                    kn[r * d + s] += -kdw[r] * gs[s] + kg[r * d + s] * dt;
                }
            }
            j = jn;
            k = kn;
        }
    }
    paths.j = Some(jv);
    paths.k = Some(kv);
    paths.tangent_flag = flags;
    Ok(())
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn mat_mul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for r in 0..d {
        for s in 0..d {
            out[r * d + s] = (0..d).map(|q| a[r * d + q] * b[q * d + s]).sum();
        }
    }
    out
}

fn frobenius_from_identity(a: &[f64], d: usize) -> f64 {
    let mut s = 0.0;
    for r in 0..d {
        for c in 0..d {
            let v = a[r * d + c] - if r == c { 1.0 } else { 0.0 };
            s += v * v;
        }
    }
    s.sqrt()
}

/// Largest `‖K·J − I‖_F` along path `p`.
pub fn inverse_defect(paths: &PathEnsemble, p: usize) -> f64 {
    let d = paths.dim();
    (0..=paths.steps())
        .map(|n| frobenius_from_identity(&mat_mul(paths.k(p, n), paths.j(p, n), d), d))
        .fold(0.0, f64::max)
}

fn shifted(x0: &[f64], axis: usize, h: f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    x[axis] += h;
    x
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentFdReport {
    /// `√(Σ|J − J_fd|² / Σ|J_fd|²)` over usable paths and steps.
    pub rms_relative: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Compare `J` with common-random-number central differences of `X` in the starting
/// point.
pub fn tangent_fd_check(
    field: &CoefficientField,
    params: &SimParams,
    x0: &[f64],
    delta: f64,
) -> Result<TangentFdReport> {
    let mut base = simulate_forward(field, params, x0)?;
    simulate_tangent(&mut base, field)?;
    let d = base.dim();
    let steps = base.steps();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut bad = vec![false; base.n_paths()];
    let mut cols = Vec::with_capacity(d);
    for l in 0..d {
        let plus = simulate_forward(field, params, &shifted(x0, l, delta))?;
        let minus = simulate_forward(field, params, &shifted(x0, l, -delta))?;
        for p in 0..base.n_paths() {
            bad[p] |= plus.escaped_at(p).is_some() || minus.escaped_at(p).is_some();
        }
        cols.push((plus, minus));
    }
    for p in 0..base.n_paths() {
        if bad[p] || base.escaped_at(p).is_some() || base.tangent_flagged(p) {
            continue;
        }
        for n in 1..=steps {
            let j = base.j(p, n);
            for (l, (plus, minus)) in cols.iter().enumerate() {
                for i in 0..d {
                    let fd = (plus.x(p, n)[i] - minus.x(p, n)[i]) / (2.0 * delta);
                    num += (j[i * d + l] - fd).powi(2);
                    den += fd * fd;
                }
            }
        }
    }
    let n_excluded = (0..base.n_paths())
        .filter(|&p| bad[p] || base.escaped_at(p).is_some() || base.tangent_flagged(p))
        .count();
    Ok(TangentFdReport {
        rms_relative: ratio(num, den),
        n_used: base.n_paths() - n_excluded,
        n_excluded,
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowZReport {
    /// `√(Σ|Z_flow − Z|² / Σ|Z|²)` over usable paths and steps.
    pub rms_relative: f64,
    /// Fraction of paths with `‖K·J − I‖_F ≤ 0.05` throughout.
    pub inverse_ok_fraction: f64,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Rebuild `Zⁱ = σ Yˡ Kˡᵢ` from the inverse flow, with `Yˡ` from common-random-number
/// central differences of `Y` in the starting point, and compare with the grid `Z`.
pub fn flow_z_check(
    paths: &PathEnsemble,
    field: &CoefficientField,
    delta: f64,
) -> Result<FlowZReport> {
    if !paths.has_tangent() || !paths.has_yz() {
        return Err(Error::param(
            "paths",
            "flow check needs Y, Z and the tangent flow",
        ));
    }
    let d = paths.dim();
    let steps = paths.steps();
    let kin = Kinematics {
        regime: paths.regime,
        m: paths.params.m,
        eps: 0.0,
    };
    let mut bad: Vec<bool> = (0..paths.n_paths())
        .map(|p| paths.escaped_at(p).is_some() || paths.tangent_flagged(p))
        .collect();
    let mut shifted_paths = Vec::with_capacity(d);
    for l in 0..d {
        let mut plus = simulate_forward(field, &paths.params, &shifted(&paths.x0, l, delta))?;
        let mut minus = simulate_forward(field, &paths.params, &shifted(&paths.x0, l, -delta))?;
        evaluate_yz(&mut plus, field)?;
        evaluate_yz(&mut minus, field)?;
        for (p, b) in bad.iter_mut().enumerate() {
            *b |= plus.escaped_at(p).is_some() || minus.escaped_at(p).is_some();
        }
        shifted_paths.push((plus, minus));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for p in (0..paths.n_paths()).filter(|&p| !bad[p]) {
        for n in 1..=steps {
            let yl: Vec<f64> = shifted_paths
                .iter()
                .map(|(plus, minus)| (plus.y(p, n) - minus.y(p, n)) / (2.0 * delta))
                .collect();
            let k = paths.k(p, n);
            let u = paths.u(p, n);
            let sigma = match paths.regime {
                crate::transform::Regime::Super => u.sqrt(),
                crate::transform::Regime::Sub => kin.m * std::f64::consts::SQRT_2 / u.sqrt(),
            };
            let z = paths.z(p, n);
            for i in 0..d {
                let zf: f64 = sigma * (0..d).map(|l| yl[l] * k[l * d + i]).sum::<f64>();
                num += (zf - z[i]).powi(2);
                den += z[i] * z[i];
            }
        }
    }
    let n_excluded = bad.iter().filter(|&&b| b).count();
    let inverse_ok = (0..paths.n_paths())
        .filter(|&p| paths.escaped_at(p).is_none() && !paths.tangent_flagged(p))
        .count();
    let usable = paths.usable().count().max(1);
    Ok(FlowZReport {
        rms_relative: ratio(num, den),
        inverse_ok_fraction: inverse_ok as f64 / usable as f64,
        n_used: paths.n_paths() - n_excluded,
        n_excluded,
    })
}

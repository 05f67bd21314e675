//! Space-time interpolant of the pressure history and the regime kinematics built on it.

use crate::error::{Error, Result};
use crate::grid::MAX_DIM;
use crate::spline::{Spline, SplineAxis, SplineEval};
use crate::transform::{pressure_value, PressureHistory, Regime};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Extent {
    lo: f64,
    hi: f64,
    periodic: bool,
}

/// `f(s, x)` with its spatial gradient and Hessian: cubic B-splines in space on every
/// stored slice, linear in time between slices.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub regime: Regime,
    pub m: f64,
    dim: usize,
    times: Vec<f64>,
    splines: Vec<Spline>,
    extent: Vec<Extent>,
}

impl CoefficientField {
    pub fn from_history(hist: &PressureHistory) -> Result<Self> {
        let grid = &hist.grid;
        let dim = grid.dim();
        let periodic = grid.is_periodic();
        let axes: Vec<SplineAxis> = (0..dim)
            .map(|a| SplineAxis {
                origin: grid.axes()[a].lo,
                h: grid.spacing(a),
                nodes: grid.points(a) + if periodic { 0 } else { 2 },
                periodic,
            })
            .collect();
        let extent = grid
            .axes()
            .iter()
            .map(|ax| Extent {
                lo: ax.lo,
                hi: ax.hi,
                periodic,
            })
            .collect();
        let mut splines = Vec::with_capacity(hist.n_slices());
        for k in 0..hist.n_slices() {
            let data = match grid.oracle() {
                None => hist.f(k).to_vec(),
                Some(oracle) => {
                    // Interior values framed by the oracle on the boundary nodes.
                    let t = hist.times()[k];
                    let f = hist.f(k);
                    let n: Vec<usize> = (0..dim).map(|a| grid.points(a) + 2).collect();
                    let total: usize = n.iter().product();
                    let mut out = vec![0.0; total];
                    for (flat, o) in out.iter_mut().enumerate() {
                        let idx = if dim == 1 {
                            [flat, 0]
                        } else {
                            [flat / n[1], flat % n[1]]
                        };
                        let inside = (0..dim).all(|a| idx[a] >= 1 && idx[a] <= grid.points(a));
                        if inside {
                            let mut inner = [0usize; MAX_DIM];
                            for a in 0..dim {
                                inner[a] = idx[a] - 1;
                            }
                            *o = f[grid.flat_index(inner)];
                        } else {
                            let mut x = [0.0; MAX_DIM];
                            for a in 0..dim {
                                x[a] = grid.node_coord(a, idx[a] as isize - 1);
                            }
                            *o = pressure_value(hist.regime, hist.m, oracle.value(t, &x[..dim]));
                        }
                    }
                    out
                }
            };
            splines.push(Spline::new(axes.clone(), &data)?);
        }
        Ok(Self {
            regime: hist.regime,
            m: hist.m,
            dim,
            times: hist.times().to_vec(),
            splines,
            extent,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Latest PDE time covered.
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn is_periodic(&self) -> bool {
        self.extent.iter().all(|e| e.periodic)
    }

    /// Whether `x` lies in the closed domain (always true on periodic grids).
    pub fn contains(&self, x: &[f64]) -> bool {
        self.extent
            .iter()
            .zip(x)
            .all(|(e, &v)| e.periodic || (v >= e.lo && v <= e.hi))
    }

    /// Interpolated `f`, `∇f`, `∇²f` at PDE time `s` and point `x`.
    pub fn eval(&self, s: f64, x: &[f64]) -> Result<SplineEval> {
        let n = self.times.len();
        let tol = 1e-9 * self.horizon().max(1.0);
        if !(s >= self.times[0] - tol && s <= self.horizon() + tol) {
            return Err(Error::OffMesh(s));
        }
        let k = self.times.partition_point(|&t| t <= s);
        if k == 0 || n == 1 {
            return self.splines[0].eval(x);
        }
        if k >= n {
            return self.splines[n - 1].eval(x);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (s - t0) / (t1 - t0);
        let a = self.splines[k - 1].eval(x)?;
        if w == 0.0 {
            return Ok(a);
        }
        let b = self.splines[k].eval(x)?;
        let lerp = |p: f64, q: f64| p + w * (q - p);
        let mut out = SplineEval {
            value: lerp(a.value, b.value),
            ..Default::default()
        };
        for i in 0..MAX_DIM {
            out.grad[i] = lerp(a.grad[i], b.grad[i]);
            for j in 0..MAX_DIM {
                out.hess[i][j] = lerp(a.hess[i][j], b.hess[i][j]);
            }
        }
        Ok(out)
    }
}

/// Coefficients of the forward equation `dX = σ(f) dW + a(f)∇f dt` and of the backward
/// drift `c·|Z|²/U`, for a given tilt `ε` (zero under `P`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub regime: Regime,
    pub m: f64,
    pub eps: f64,
}

/// Pointwise coefficient values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Local {
    pub u: f64,
    pub sigma: f64,
    /// `dσ/df`
    pub dsigma: f64,
    pub a: f64,
    /// `da/df`
    pub da: f64,
}

impl Kinematics {
    pub fn local(&self, f: f64) -> Local {
        let m = self.m;
        let eps = self.eps;
        match self.regime {
            Regime::Super => {
                let u = 2.0 * ((m - 1.0) * f + m);
                let sigma = u.sqrt();
                Local {
                    u,
                    sigma,
                    dsigma: (m - 1.0) / sigma,
                    a: 0.5 * (m - 1.0 + 2.0 * eps),
                    da: 0.0,
                }
            }
            Regime::Sub => {
                let u = (1.0 - m) * f + m;
                let sigma = m * std::f64::consts::SQRT_2 / u.sqrt();
                let a = m * m * (2.0 * eps - 0.5 * (1.0 - m)) / (u * u);
                Local {
                    u,
                    sigma,
                    dsigma: -0.5 * sigma * (1.0 - m) / u,
                    a,
                    da: -2.0 * (1.0 - m) * a / u,
                }
            }
        }
    }

    /// `c` in the backward drift `c·|Z|²/U`.
    pub fn bsde_drift(&self) -> f64 {
        let m = self.m;
        match self.regime {
            Regime::Super => 0.5 * (m - 3.0 + 2.0 * self.eps),
            Regime::Sub => self.eps - 0.25 * (3.0 * m - 1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::TravelingWave;
    use crate::grid::{solve, stable_dt, Axis, GridSpec, TimeMesh};
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn kinematics_match_closed_forms() {
        let k = Kinematics {
            regime: Regime::Super,
            m: 2.0,
            eps: 0.0,
        };
        let l = k.local(1.0);
        assert!((l.u - 6.0).abs() < 1e-15);
        assert!((l.sigma - 6f64.sqrt()).abs() < 1e-15);
        assert!((l.a - 0.5).abs() < 1e-15);
        assert!((k.bsde_drift() + 0.5).abs() < 1e-15);
        let k = Kinematics {
            regime: Regime::Sub,
            m: 0.5,
            eps: 0.0,
        };
        let l = k.local(0.0);
        // U = m, σ = m√2/√U = 1, a = −m²(1−m)/(2U²)
        assert!((l.u - 0.5).abs() < 1e-15);
        assert!((l.sigma - 1.0).abs() < 1e-15);
        assert!((l.a + 0.25 * 0.5 / (2.0 * 0.25)).abs() < 1e-15);
        assert!((k.bsde_drift() + 0.125).abs() < 1e-15);
    }

    #[test]
    fn derivative_terms_match_finite_differences() {
        for (regime, m) in [(Regime::Super, 1.7), (Regime::Sub, 0.6)] {
            let k = Kinematics {
                regime,
                m,
                eps: 0.8,
            };
            let d = 1e-6;
            for &f in &[-0.3, 0.0, 0.4] {
                let l = k.local(f);
                let fd_s = (k.local(f + d).sigma - k.local(f - d).sigma) / (2.0 * d);
                let fd_a = (k.local(f + d).a - k.local(f - d).a) / (2.0 * d);
                assert!((l.dsigma - fd_s).abs() < 1e-7);
                assert!((l.da - fd_a).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn field_reproduces_grid_values_on_slices() {
        let g = GridSpec::periodic_box(1, 0.0, 1.0, 32).unwrap();
        let u0 = g.sample(|x| 1.0 + 0.3 * (2.0 * PI * x[0]).sin());
        let mesh = TimeMesh::with_max_dt(0.01, stable_dt(&u0, 2.0, &g)).unwrap();
        let h = solve(&u0, 2.0, &mesh, &g).unwrap();
        let p = PressureHistory::from_history(&h).unwrap();
        let field = CoefficientField::from_history(&p).unwrap();
        for k in [0, p.n_slices() / 2, p.n_slices() - 1] {
            let s = p.times()[k];
            for i in 0..32 {
                let v = field.eval(s, &g.point(i)[..1]).unwrap().value;
                assert!((v - p.f(k)[i]).abs() < 1e-12);
            }
        }
        assert!(field.eval(0.02, &[0.5]).is_err());
    }

    #[test]
    fn dirichlet_field_uses_oracle_frame() {
        let w: Arc<dyn crate::exact::ExactSolution> = Arc::new(TravelingWave::new(2.0, 1.0));
        let g = GridSpec::dirichlet(vec![Axis::new(-2.0, -1.0, 15)], w.clone()).unwrap();
        let u0 = g.sample(|x| w.value(0.0, x));
        let mesh = TimeMesh::with_max_dt(0.01, stable_dt(&u0, 2.0, &g)).unwrap();
        let h = solve(&u0, 2.0, &mesh, &g).unwrap();
        let p = PressureHistory::from_history(&h).unwrap();
        let field = CoefficientField::from_history(&p).unwrap();
        // The pressure of the traveling wave is affine, so the spline is exact.
        let e = field.eval(0.005, &[-1.37]).unwrap();
        let exact = pressure_value(Regime::Super, 2.0, w.value(0.005, &[-1.37]));
        assert!((e.value - exact).abs() < 1e-9);
        assert!((e.grad[0] + 1.0).abs() < 1e-8);
        assert!(field.contains(&[-1.0]) && !field.contains(&[-0.99]));
        assert!(field.eval(0.005, &[-0.9]).is_err());
    }
}

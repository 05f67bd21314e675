//! Uniform cubic B-spline interpolation in one or two dimensions with value, gradient
//! and Hessian evaluation.
//!
//! Periodic axes solve the cyclic `(1, 4, 1)/6` system by the recursive filter with
//! pole `√3 − 2`. Open axes use a zero second derivative at both end nodes.

use crate::error::{Error, Result};
use crate::grid::MAX_DIM;

const POLE: f64 = -0.267_949_192_431_122_7; // √3 − 2

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineAxis {
    /// Coordinate of node 0.
    pub origin: f64,
    pub h: f64,
    pub nodes: usize,
    pub periodic: bool,
}

impl SplineAxis {
    fn period(&self) -> f64 {
        self.h * self.nodes as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplineEval {
    pub value: f64,
    pub grad: [f64; MAX_DIM],
    pub hess: [[f64; MAX_DIM]; MAX_DIM],
}

#[derive(Debug, Clone)]
pub struct Spline {
    axes: Vec<SplineAxis>,
    /// Coefficients, row-major, padded by one node on each side of open axes.
    coef: Vec<f64>,
    padded: [usize; MAX_DIM],
}

fn solve_periodic(y: &mut [f64]) {
    let n = y.len();
    let z = POLE;
    let zn = z.powi(n as i32);
    // causal pass: c⁺ᵢ = yᵢ + z·c⁺ᵢ₋₁ on the periodic extension
    let mut acc = 0.0;
    let mut zk = 1.0;
    for k in 0..n {
        acc += zk * y[(n - k) % n];
        zk *= z;
    }
    let mut cp = vec![0.0; n];
    cp[0] = acc / (1.0 - zn);
    for i in 1..n {
        cp[i] = y[i] + z * cp[i - 1];
    }
    // anticausal pass: c⁻ᵢ = z(c⁻ᵢ₊₁ − c⁺ᵢ)
    let mut acc = 0.0;
    let mut zk = 1.0;
    for k in 0..n {
        acc += zk * cp[(n - 1 + k) % n];
        zk *= z;
    }
    let mut cm = vec![0.0; n];
    cm[n - 1] = -z * acc / (1.0 - zn);
    for i in (0..n - 1).rev() {
        cm[i] = z * (cm[i + 1] - cp[i]);
    }
    for (yi, c) in y.iter_mut().zip(cm) {
        *yi = 6.0 * c;
    }
}

/// Open axis: `c₀ = y₀`, `c_{n−1} = y_{n−1}` and `(c_{i−1} + 4cᵢ + c_{i+1})/6 = yᵢ` inside.
fn solve_open(y: &mut [f64]) {
    let n = y.len();
    if n < 3 {
        return;
    }
    // Thomas algorithm on the interior unknowns c₁..c_{n−2}.
    let m = n - 2;
    let mut diag = vec![4.0; m];
    let mut rhs: Vec<f64> = (1..n - 1).map(|i| 6.0 * y[i]).collect();
    rhs[0] -= y[0];
    rhs[m - 1] -= y[n - 1];
    for i in 1..m {
        let w = 1.0 / diag[i - 1];
        diag[i] -= w;
        rhs[i] -= w * rhs[i - 1];
    }
    let mut c = vec![0.0; m];
    c[m - 1] = rhs[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        c[i] = (rhs[i] - c[i + 1]) / diag[i];
    }
    y[1..n - 1].copy_from_slice(&c);
}

fn solve_axis(y: &mut [f64], periodic: bool) {
    if periodic {
        solve_periodic(y)
    } else {
        solve_open(y)
    }
}

/// Basis weights and their first two derivatives at fractional offset `t ∈ [0, 1]`.
fn weights(t: f64) -> [[f64; 4]; 3] {
    let s = 1.0 - t;
    let t2 = t * t;
    let t3 = t2 * t;
    [
        [
            s * s * s / 6.0,
            (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
            t3 / 6.0,
        ],
        [
            -0.5 * s * s,
            1.5 * t2 - 2.0 * t,
            -1.5 * t2 + t + 0.5,
            0.5 * t2,
        ],
        [s, 3.0 * t - 2.0, 1.0 - 3.0 * t, t],
    ]
}

impl Spline {
    /// Build the interpolant of `data` (row-major, axis 0 slowest) on the given axes.
    pub fn new(axes: Vec<SplineAxis>, data: &[f64]) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "spline dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        let total: usize = axes.iter().map(|a| a.nodes).product();
        if data.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                actual: data.len(),
            });
        }
        if axes.iter().any(|a| a.nodes < 4 || !(a.h > 0.0)) {
            return Err(Error::InvalidGrid(
                "spline axes need >= 4 nodes and h > 0".into(),
            ));
        }
        let mut raw = data.to_vec();
        match axes.len() {
            1 => solve_axis(&mut raw, axes[0].periodic),
            _ => {
                let (n0, n1) = (axes[0].nodes, axes[1].nodes);
                for row in raw.chunks_mut(n1) {
                    solve_axis(row, axes[1].periodic);
                }
                let mut col = vec![0.0; n0];
                for j in 0..n1 {
                    for i in 0..n0 {
                        col[i] = raw[i * n1 + j];
                    }
                    solve_axis(&mut col, axes[0].periodic);
                    for i in 0..n0 {
                        raw[i * n1 + j] = col[i];
                    }
                }
            }
        }
        Ok(Self::pad(axes, raw))
    }

    /// Store coefficients with one extra node on both sides of every axis so evaluation
    /// never wraps or extrapolates on the fly.
    fn pad(axes: Vec<SplineAxis>, raw: Vec<f64>) -> Self {
        let dim = axes.len();
        let mut padded = [1; MAX_DIM];
        for a in 0..dim {
            padded[a] = axes[a].nodes + 3;
        }
        let src = |a: usize, i: isize| -> (usize, usize, f64) {
            // returns (index0, index1, weight) pairs for linear extrapolation
            let n = axes[a].nodes as isize;
            if axes[a].periodic {
                (i.rem_euclid(n) as usize, 0, 1.0)
            } else if i < 0 {
                (0, 1, -1.0)
            } else if i >= n {
                (n as usize - 1, n as usize - 2, -1.0)
            } else {
                (i as usize, 0, 1.0)
            }
        };
        let mut coef = vec![0.0; padded.iter().product()];
        match dim {
            1 => {
                for p in 0..padded[0] {
                    let (i0, i1, w) = src(0, p as isize - 1);
                    coef[p] = if w > 0.0 {
                        raw[i0]
                    } else {
                        2.0 * raw[i0] - raw[i1]
                    };
                }
            }
            _ => {
                let n1 = axes[1].nodes;
                let row = |i: usize, q: usize| -> f64 {
                    let (j0, j1, w) = src(1, q as isize - 1);
                    if w > 0.0 {
                        raw[i * n1 + j0]
                    } else {
                        2.0 * raw[i * n1 + j0] - raw[i * n1 + j1]
                    }
                };
                for p in 0..padded[0] {
                    let (i0, i1, w) = src(0, p as isize - 1);
                    for q in 0..padded[1] {
                        coef[p * padded[1] + q] = if w > 0.0 {
                            row(i0, q)
                        } else {
                            2.0 * row(i0, q) - row(i1, q)
                        };
                    }
                }
            }
        }
        Self { axes, coef, padded }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Cell index and fractional offset along `axis`, wrapping periodic axes.
    fn locate(&self, axis: usize, x: f64) -> Option<(usize, f64)> {
        let ax = &self.axes[axis];
        let mut s = (x - ax.origin) / ax.h;
        let n = ax.nodes as f64;
        if ax.periodic {
            s = s.rem_euclid(n);
            if s >= n {
                s = 0.0;
            }
        } else {
            let tol = 1e-9;
            if s < -tol || s > n - 1.0 + tol {
                return None;
            }
            s = s.clamp(0.0, n - 1.0);
        }
        let mut i = s.floor();
        if !ax.periodic && i >= n - 1.0 {
            i = n - 2.0;
        }
        Some((i as usize, s - i))
    }

    pub fn eval(&self, x: &[f64]) -> Result<SplineEval> {
        let dim = self.dim();
        let mut cell = [0usize; MAX_DIM];
        let mut w = [[[0.0; 4]; 3]; MAX_DIM];
        for a in 0..dim {
            let (i, t) = self
                .locate(a, x[a])
                .ok_or_else(|| Error::OutOfRange(x[..dim].to_vec()))?;
            cell[a] = i;
            w[a] = weights(t);
        }
        let mut out = SplineEval::default();
        match dim {
            1 => {
                let inv = 1.0 / self.axes[0].h;
                let c = &self.coef[cell[0]..cell[0] + 4];
                let dot = |k: usize| -> f64 { (0..4).map(|j| c[j] * w[0][k][j]).sum() };
                out.value = dot(0);
                out.grad[0] = dot(1) * inv;
                out.hess[0][0] = dot(2) * inv * inv;
            }
            _ => {
                let inv = [1.0 / self.axes[0].h, 1.0 / self.axes[1].h];
                let stride = self.padded[1];
                // s[d0][d1] = Σ c·w0^{(d0)}·w1^{(d1)}
                let mut s = [[0.0; 3]; 3];
                for j in 0..4 {
                    let base = (cell[0] + j) * stride + cell[1];
                    let row = &self.coef[base..base + 4];
                    let mut r = [0.0; 3];
                    for (d1, rv) in r.iter_mut().enumerate() {
                        *rv = (0..4).map(|k| row[k] * w[1][d1][k]).sum();
                    }
                    for d0 in 0..3 {
                        for d1 in 0..3 {
                            if d0 + d1 <= 2 {
                                s[d0][d1] += w[0][d0][j] * r[d1];
                            }
                        }
                    }
                }
                out.value = s[0][0];
                out.grad = [s[1][0] * inv[0], s[0][1] * inv[1]];
                out.hess = [
                    [s[2][0] * inv[0] * inv[0], s[1][1] * inv[0] * inv[1]],
                    [s[1][1] * inv[0] * inv[1], s[0][2] * inv[1] * inv[1]],
                ];
            }
        }
        Ok(out)
    }

    /// Period along `axis`, if periodic.
    pub fn period(&self, axis: usize) -> Option<f64> {
        let ax = &self.axes[axis];
        ax.periodic.then(|| ax.period())
    }
}

//! Closed-form solutions of `∂ₜu = Δuᵐ` used as oracles and Dirichlet data.

use std::fmt;

/// A known solution `u(t, x)` of the porous medium / fast diffusion equation.
pub trait ExactSolution: fmt::Debug + Send + Sync {
    fn value(&self, t: f64, x: &[f64]) -> f64;

    /// Short identifier written into serialized histories.
    fn name(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSolution {
    pub value: f64,
}

impl ExactSolution for ConstantSolution {
    fn value(&self, _t: f64, _x: &[f64]) -> f64 {
        self.value
    }

    fn name(&self) -> String {
        format!("constant({})", self.value)
    }
}

/// Planar traveling wave `u = ((m−1)c(ct − (x₀ − shift))/m)^{1/(m−1)}` moving along the
/// first axis. Its pressure `m/(m−1)·u^{m−1}` is affine in space and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelingWave {
    pub m: f64,
    pub speed: f64,
    pub shift: f64,
}

impl TravelingWave {
    pub fn new(m: f64, speed: f64) -> Self {
        Self {
            m,
            speed,
            shift: 0.0,
        }
    }

    /// Largest `x` at time `t` where the wave is at least `level` (for `m > 1`).
    pub fn front_position(&self, t: f64, level: f64) -> f64 {
        let m = self.m;
        let base = level.powf(m - 1.0) * m / ((m - 1.0) * self.speed);
        self.speed * t - base + self.shift
    }
}

impl ExactSolution for TravelingWave {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let m = self.m;
        let c = self.speed;
        let base = (m - 1.0) * c * (c * t - (x[0] - self.shift)) / m;
        if base <= 0.0 {
            0.0
        } else {
            base.powf(1.0 / (m - 1.0))
        }
    }

    fn name(&self) -> String {
        format!(
            "traveling_wave(m={},c={},shift={})",
            self.m, self.speed, self.shift
        )
    }
}

/// Source-type self-similar solution, shifted in time by `t0` so that it is smooth at
/// `t = 0`. Covers `m > 1` (compact support) and `(n−2)/n < m < 1` (fat tails).
#[derive(Debug, Clone, PartialEq)]
pub struct Barenblatt {
    pub m: f64,
    pub n: usize,
    pub c: f64,
    pub t0: f64,
    pub center: Vec<f64>,
}

impl Barenblatt {
    pub fn new(m: f64, n: usize, c: f64, t0: f64) -> Self {
        Self {
            m,
            n,
            c,
            t0,
            center: vec![0.0; n],
        }
    }

    pub fn alpha(&self) -> f64 {
        let n = self.n as f64;
        n / (n * (self.m - 1.0) + 2.0)
    }

    fn k(&self) -> f64 {
        let n = self.n as f64;
        self.alpha() * (self.m - 1.0).abs() / (2.0 * self.m * n)
    }
}

impl ExactSolution for Barenblatt {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let tau = t + self.t0;
        let alpha = self.alpha();
        let beta = alpha / self.n as f64;
        let r2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(xi, ci)| (xi - ci).powi(2))
            .sum();
        let s = r2 * tau.powf(-2.0 * beta);
        let amp = tau.powf(-alpha);
        if self.m > 1.0 {
            let base = self.c - self.k() * s;
            if base <= 0.0 {
                0.0
            } else {
                amp * base.powf(1.0 / (self.m - 1.0))
            }
        } else {
            amp * (self.c + self.k() * s).powf(-1.0 / (1.0 - self.m))
        }
    }

    fn name(&self) -> String {
        format!(
            "barenblatt(m={},n={},c={},t0={})",
            self.m, self.n, self.c, self.t0
        )
    }
}

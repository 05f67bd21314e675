//! Explicit finite-difference solver for `∂ₜu = Δuᵐ` on 1D/2D rectangular grids.
//!
//! Two boundary treatments are supported:
//!
//! * **Periodic**: `points` nodes at `lo + i·h`, `h = (hi − lo)/points`; the node at `hi`
//!   is identified with the node at `lo` and is not stored.
//! * **Dirichlet (oracle-fed)**: `points` interior unknowns at `lo + (i+1)·h`,
//!   `h = (hi − lo)/(points + 1)`; the boundary nodes `lo` and `hi` act as ghosts whose
//!   values come from an [`ExactSolution`].
//!
//! Values are stored flattened in row-major order (axis 0 slowest).

pub mod io;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactSolution;

pub const MAX_DIM: usize = 2;

/// A fixed-size spatial point; components beyond the grid dimension are zero.
pub type Point = [f64; MAX_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Clone)]
pub enum Boundary {
    Periodic,
    Dirichlet(Arc<dyn ExactSolution>),
}

impl fmt::Debug for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "Periodic"),
            Boundary::Dirichlet(o) => write!(f, "Dirichlet({})", o.name()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    axes: Vec<Axis>,
    boundary: Boundary,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>, boundary: Boundary) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {}",
                axes.len()
            )));
        }
        for (a, ax) in axes.iter().enumerate() {
            if !(ax.lo.is_finite() && ax.hi.is_finite() && ax.hi > ax.lo) {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: extent [{}, {}] is empty",
                    ax.lo, ax.hi
                )));
            }
            if ax.points < 4 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a}: need at least 4 points, got {}",
                    ax.points
                )));
            }
        }
        Ok(Self { axes, boundary })
    }

    pub fn periodic(axes: Vec<Axis>) -> Result<Self> {
        Self::new(axes, Boundary::Periodic)
    }

    pub fn dirichlet(axes: Vec<Axis>, oracle: Arc<dyn ExactSolution>) -> Result<Self> {
        Self::new(axes, Boundary::Dirichlet(oracle))
    }

    /// Square periodic box `[lo, hi)^dim` with `points` nodes per axis.
    pub fn periodic_box(dim: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::periodic(vec![Axis::new(lo, hi, points); dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn boundary(&self) -> &Boundary {
        &self.boundary
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic)
    }

    pub fn oracle(&self) -> Option<&Arc<dyn ExactSolution>> {
        match &self.boundary {
            Boundary::Dirichlet(o) => Some(o),
            Boundary::Periodic => None,
        }
    }

    /// Total number of stored grid points.
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self, axis: usize) -> usize {
        self.axes[axis].points
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let ax = &self.axes[axis];
        match self.boundary {
            Boundary::Periodic => ax.length() / ax.points as f64,
            Boundary::Dirichlet(_) => ax.length() / (ax.points as f64 + 1.0),
        }
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    /// `Π h_a`, the quadrature weight of one node.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    /// Coordinate of node `i` along `axis`. Indices `-1` and `points` are the Dirichlet
    /// boundary nodes; on periodic grids any index is accepted.
    pub fn node_coord(&self, axis: usize, i: isize) -> f64 {
        let ax = &self.axes[axis];
        let h = self.spacing(axis);
        match self.boundary {
            Boundary::Periodic => ax.lo + i as f64 * h,
            Boundary::Dirichlet(_) => ax.lo + (i + 1) as f64 * h,
        }
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        match self.dim() {
            1 => [flat, 0],
            _ => {
                let n1 = self.axes[1].points;
                [flat / n1, flat % n1]
            }
        }
    }

    pub fn flat_index(&self, idx: [usize; MAX_DIM]) -> usize {
        match self.dim() {
            1 => idx[0],
            _ => idx[0] * self.axes[1].points + idx[1],
        }
    }

    pub fn point(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; MAX_DIM];
        for (a, pa) in p.iter_mut().enumerate().take(self.dim()) {
            *pa = self.node_coord(a, idx[a] as isize);
        }
        p
    }

    /// Evaluate `f` at every grid point.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let p = self.point(k);
                f(&p[..self.dim()])
            })
            .collect()
    }

    /// `Σ values · h^dim`; on periodic grids every node is counted once.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }

    fn check_len(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: field.len(),
            });
        }
        Ok(())
    }

    /// Value of `field` at the node one step from `idx` along `axis` in direction `dir`.
    fn neighbor(
        &self,
        field: &[f64],
        idx: [usize; MAX_DIM],
        axis: usize,
        dir: isize,
        ghost: Option<&dyn Fn(&[f64]) -> f64>,
    ) -> Result<f64> {
        let n = self.axes[axis].points as isize;
        let j = idx[axis] as isize + dir;
        let mut nidx = idx;
        if (0..n).contains(&j) {
            nidx[axis] = j as usize;
            return Ok(field[self.flat_index(nidx)]);
        }
        match self.boundary {
            Boundary::Periodic => {
                nidx[axis] = j.rem_euclid(n) as usize;
                Ok(field[self.flat_index(nidx)])
            }
            Boundary::Dirichlet(_) => {
                let g = ghost.ok_or(Error::MissingGhosts)?;
                let mut p = [0.0; MAX_DIM];
                for (a, pa) in p.iter_mut().enumerate().take(self.dim()) {
                    let i = if a == axis { j } else { idx[a] as isize };
                    *pa = self.node_coord(a, i);
                }
                Ok(g(&p[..self.dim()]))
            }
        }
    }
}

/// Time discretization of `[0, T]` with a uniform step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    pub t_final: f64,
    pub dt: f64,
    pub steps: usize,
}

impl TimeMesh {
    /// Requires `t_final / dt` to be an integer (to 1e-9 relative).
    pub fn new(t_final: f64, dt: f64) -> Result<Self> {
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidMesh(format!("T = {t_final} must be >= 0")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidMesh(format!("dt = {dt} must be > 0")));
        }
        let ratio = t_final / dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidMesh(format!(
                "dt = {dt} does not divide T = {t_final}"
            )));
        }
        Self::with_steps(t_final, steps as usize)
    }

    pub fn with_steps(t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            if t_final == 0.0 {
                return Ok(Self {
                    t_final,
                    dt: 0.0,
                    steps,
                });
            }
            return Err(Error::InvalidMesh(
                "zero steps on a positive horizon".into(),
            ));
        }
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidMesh(format!("T = {t_final} must be > 0")));
        }
        Ok(Self {
            t_final,
            dt: t_final / steps as f64,
            steps,
        })
    }

    /// Smallest number of uniform steps whose size does not exceed `dt_max`.
    pub fn with_max_dt(t_final: f64, dt_max: f64) -> Result<Self> {
        if !(dt_max > 0.0) {
            return Err(Error::InvalidMesh(format!("dt_max = {dt_max} must be > 0")));
        }
        let steps = (t_final / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self::with_steps(t_final, steps)
    }

    pub fn time(&self, step: usize) -> f64 {
        if step == self.steps {
            self.t_final
        } else {
            step as f64 * self.dt
        }
    }
}

/// Time-indexed record of a discrete solution.
#[derive(Debug, Clone)]
pub struct ScalarFieldHistory {
    pub grid: GridSpec,
    pub mesh: TimeMesh,
    pub m: f64,
    /// Minimum of the initial data.
    pub u_min: f64,
    /// Mesh steps between stored slices.
    pub record_every: usize,
    steps: Vec<usize>,
    values: Vec<f64>,
}

impl ScalarFieldHistory {
    pub fn from_parts(
        grid: GridSpec,
        mesh: TimeMesh,
        m: f64,
        u_min: f64,
        record_every: usize,
        steps: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != steps.len() * grid.len() {
            return Err(Error::Format(format!(
                "{} values for {} slices of {} points",
                values.len(),
                steps.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            mesh,
            m,
            u_min,
            record_every,
            steps,
            values,
        })
    }

    pub fn n_slices(&self) -> usize {
        self.steps.len()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn last(&self) -> &[f64] {
        self.slice(self.n_slices() - 1)
    }

    pub fn step_index(&self, k: usize) -> usize {
        self.steps[k]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.mesh.time(self.steps[k])
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_slices()).map(|k| self.time(k)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index of the stored slice at time `t`.
    pub fn slice_at(&self, t: f64) -> Result<usize> {
        let tol = 1e-9 * self.mesh.dt.max(f64::MIN_POSITIVE);
        (0..self.n_slices())
            .find(|&k| (self.time(k) - t).abs() <= tol.max(1e-14))
            .ok_or(Error::OffMesh(t))
    }

    /// Apply `f` pointwise to every stored value, keeping grid and time metadata.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.values.iter().map(|&v| f(v)).collect()
    }
}

fn check_exponent(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::param("m", format!("exponent must be > 0, got {m}")));
    }
    Ok(())
}

/// Second-order central-difference Laplacian. `ghost` supplies field values at the
/// Dirichlet boundary nodes and is ignored on periodic grids.
pub fn laplacian(
    field: &[f64],
    grid: &GridSpec,
    ghost: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<Vec<f64>> {
    grid.check_len(field)?;
    let inv_h2: Vec<f64> = (0..grid.dim())
        .map(|a| 1.0 / grid.spacing(a).powi(2))
        .collect();
    let mut out = vec![0.0; field.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let idx = grid.multi_index(k);
        let c = field[k];
        let mut acc = 0.0;
        for (a, w) in inv_h2.iter().enumerate() {
            let up = grid.neighbor(field, idx, a, 1, ghost)?;
            let dn = grid.neighbor(field, idx, a, -1, ghost)?;
            acc += (up - 2.0 * c + dn) * w;
        }
        *o = acc;
    }
    Ok(out)
}

/// Central-difference gradient, returned as one component vector per axis.
pub fn gradient(
    field: &[f64],
    grid: &GridSpec,
    ghost: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<Vec<Vec<f64>>> {
    grid.check_len(field)?;
    let mut out = vec![vec![0.0; field.len()]; grid.dim()];
    for (a, comp) in out.iter_mut().enumerate() {
        let inv = 1.0 / (2.0 * grid.spacing(a));
        for (k, o) in comp.iter_mut().enumerate() {
            let idx = grid.multi_index(k);
            let up = grid.neighbor(field, idx, a, 1, ghost)?;
            let dn = grid.neighbor(field, idx, a, -1, ghost)?;
            *o = (up - dn) * inv;
        }
    }
    Ok(out)
}

/// Pointwise squared norm of a gradient returned by [`gradient`].
pub fn norm_sq(grad: &[Vec<f64>]) -> Vec<f64> {
    let n = grad.first().map_or(0, |g| g.len());
    (0..n)
        .map(|k| grad.iter().map(|c| c[k] * c[k]).sum())
        .collect()
}

/// Run `body` with a ghost supplier built from the grid oracle at time `t`, each oracle
/// value passed through `map`. Periodic grids get `None`.
pub fn with_ghosts<R>(
    grid: &GridSpec,
    t: f64,
    map: impl Fn(f64) -> f64,
    body: impl FnOnce(Option<&dyn Fn(&[f64]) -> f64>) -> R,
) -> R {
    match grid.oracle() {
        Some(oracle) => {
            let g = |x: &[f64]| map(oracle.value(t, x));
            body(Some(&g))
        }
        None => body(None),
    }
}

/// Largest effective diffusivity `m·u^{m−1}` over the range spanned by `u`.
pub fn max_diffusivity(u: &[f64], m: f64) -> f64 {
    let (lo, hi) = min_max(u);
    // m·s^{m−1} is monotone in s, so the extremes of u bound it.
    (m * lo.powf(m - 1.0)).max(m * hi.powf(m - 1.0))
}

/// Explicit-Euler stability limit `1 / (2·D_max·Σ_a h_a⁻²)`.
pub fn stable_dt(u: &[f64], m: f64, grid: &GridSpec) -> f64 {
    let sum_inv_h2: f64 = (0..grid.dim()).map(|a| grid.spacing(a).powi(-2)).sum();
    1.0 / (2.0 * max_diffusivity(u, m) * sum_inv_h2)
}

pub fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// One explicit Euler step `u' = u + dt·Δ_h(uᵐ)` taken from time `t`.
pub fn step_pme(u: &[f64], m: f64, t: f64, dt: f64, grid: &GridSpec) -> Result<Vec<f64>> {
    check_exponent(m)?;
    grid.check_len(u)?;
    if let Some((index, &value)) = u.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositive { index, value });
    }
    let limit = stable_dt(u, m, grid);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StabilityViolated { dt, limit });
    }
    let w: Vec<f64> = u.iter().map(|&v| v.powf(m)).collect();
    let lap = with_ghosts(grid, t, |v| v.powf(m), |g| laplacian(&w, grid, g))?;
    let next: Vec<f64> = u.iter().zip(&lap).map(|(&v, &l)| v + dt * l).collect();
    let (min, _) = min_max(&next);
    if !(min > 0.0) || next.iter().any(|v| !v.is_finite()) {
        return Err(Error::PositivityLost {
            step: 0,
            min,
            floor: 0.0,
        });
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Store every `record_every`-th slice (the final slice is always stored).
    pub record_every: usize,
    /// Abort when `min u` drops below this fraction of the initial minimum.
    pub positivity_floor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            record_every: 1,
            positivity_floor: 0.5,
        }
    }
}

/// Per-run conservation and comparison statistics, gathered at every step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolveDiagnostics {
    /// Largest `|mass' − mass| / |mass|` over single steps (periodic grids only).
    pub max_rel_mass_change: Option<f64>,
    /// Largest single-step increase of `max u` (≤ 0 means nonincreasing).
    pub max_increase_of_max: f64,
    /// Largest single-step decrease of `min u` (≤ 0 means nondecreasing).
    pub max_decrease_of_min: f64,
    pub steps: usize,
}

pub fn solve(u0: &[f64], m: f64, mesh: &TimeMesh, grid: &GridSpec) -> Result<ScalarFieldHistory> {
    solve_with(u0, m, mesh, grid, &SolveOptions::default()).map(|(h, _)| h)
}

pub fn solve_with(
    u0: &[f64],
    m: f64,
    mesh: &TimeMesh,
    grid: &GridSpec,
    opts: &SolveOptions,
) -> Result<(ScalarFieldHistory, SolveDiagnostics)> {
    check_exponent(m)?;
    grid.check_len(u0)?;
    if let Some((index, &value)) = u0
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
    {
        return Err(Error::NonPositive { index, value });
    }
    let record_every = opts.record_every.max(1);
    let (u_min, _) = min_max(u0);
    let floor = opts.positivity_floor * u_min;

    let mut steps = vec![0];
    let mut values = u0.to_vec();
    let mut diag = SolveDiagnostics {
        max_rel_mass_change: grid.is_periodic().then_some(0.0),
        max_increase_of_max: f64::NEG_INFINITY,
        max_decrease_of_min: f64::NEG_INFINITY,
        steps: mesh.steps,
    };

    let mut u = u0.to_vec();
    let (mut lo, mut hi) = min_max(&u);
    let mut mass = grid.integrate(&u);
    for n in 0..mesh.steps {
        let next = step_pme(&u, m, mesh.time(n), mesh.dt, grid).map_err(|e| match e {
            Error::PositivityLost { min, .. } => Error::PositivityLost {
                step: n + 1,
                min,
                floor,
            },
            other => other,
        })?;
        let (nlo, nhi) = min_max(&next);
        if nlo < floor {
            return Err(Error::PositivityLost {
                step: n + 1,
                min: nlo,
                floor,
            });
        }
        diag.max_increase_of_max = diag.max_increase_of_max.max(nhi - hi);
        diag.max_decrease_of_min = diag.max_decrease_of_min.max(lo - nlo);
        if let Some(ref mut worst) = diag.max_rel_mass_change {
            let next_mass = grid.integrate(&next);
            *worst = worst.max((next_mass - mass).abs() / mass.abs());
            mass = next_mass;
        }
        lo = nlo;
        hi = nhi;
        u = next;
        if (n + 1) % record_every == 0 || n + 1 == mesh.steps {
            steps.push(n + 1);
            values.extend_from_slice(&u);
        }
    }
    if mesh.steps == 0 {
        diag.max_increase_of_max = 0.0;
        diag.max_decrease_of_min = 0.0;
    }
    let hist =
        ScalarFieldHistory::from_parts(grid.clone(), *mesh, m, u_min, record_every, steps, values)?;
    Ok((hist, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{Barenblatt, TravelingWave};
    use std::f64::consts::PI;

    fn periodic_1d(n: usize) -> GridSpec {
        GridSpec::periodic_box(1, 0.0, 1.0, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_specs() {
        assert!(GridSpec::periodic_box(3, 0.0, 1.0, 8).is_err());
        assert!(GridSpec::periodic_box(1, 0.0, 1.0, 3).is_err());
        assert!(GridSpec::periodic(vec![Axis::new(1.0, 1.0, 8)]).is_err());
    }

    #[test]
    fn periodic_nodes_do_not_double_count() {
        let g = periodic_1d(10);
        assert!((g.spacing(0) - 0.1).abs() < 1e-15);
        assert!((g.point(9)[0] - 0.9).abs() < 1e-15);
        let ones = vec![1.0; 10];
        assert!((g.integrate(&ones) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = GridSpec::periodic_box(2, 0.0, 1.0, 8).unwrap();
        let lap = laplacian(&vec![3.7; g.len()], &g, None).unwrap();
        assert!(lap.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_of_sine_matches_second_derivative() {
        let g = periodic_1d(128);
        let h = g.spacing(0);
        let u = g.sample(|x| (2.0 * PI * x[0]).sin());
        let lap = laplacian(&u, &g, None).unwrap();
        let bound = (2.0 * PI * h).powi(2) / 12.0 * 1.1;
        for (k, &l) in lap.iter().enumerate() {
            let exact = -(2.0 * PI).powi(2) * u[k];
            if exact.abs() > 1e-8 {
                assert!(((l - exact) / exact).abs() <= bound, "k={k}");
            }
        }
    }

    #[test]
    fn laplacian_exact_on_quadratics_with_ghosts() {
        let oracle = Arc::new(crate::exact::ConstantSolution { value: 1.0 });
        let g = GridSpec::dirichlet(vec![Axis::new(0.0, 1.0, 9)], oracle).unwrap();
        let u = g.sample(|x| x[0] * x[0]);
        let ghost = |x: &[f64]| x[0] * x[0];
        let lap = laplacian(&u, &g, Some(&ghost)).unwrap();
        assert!(lap.iter().all(|&v| (v - 2.0).abs() < 1e-10));
        assert!(matches!(laplacian(&u, &g, None), Err(Error::MissingGhosts)));
    }

    #[test]
    fn laplacian_exact_on_2d_quadratics() {
        let oracle = Arc::new(crate::exact::ConstantSolution { value: 1.0 });
        let g = GridSpec::dirichlet(
            vec![Axis::new(0.0, 1.0, 6), Axis::new(-1.0, 2.0, 7)],
            oracle,
        )
        .unwrap();
        let q = |x: &[f64]| 0.5 * x[0] * x[0] - x[1] * x[1] + x[0] * x[1];
        let lap = laplacian(&g.sample(q), &g, Some(&q)).unwrap();
        assert!(lap.iter().all(|&v| (v - (1.0 - 2.0)).abs() < 1e-9));
    }

    #[test]
    fn gradient_exact_on_linear_and_zero_on_constant() {
        let oracle = Arc::new(crate::exact::ConstantSolution { value: 1.0 });
        let g = GridSpec::dirichlet(vec![Axis::new(0.0, 2.0, 10)], oracle).unwrap();
        let lin = |x: &[f64]| 3.0 * x[0] - 1.0;
        let grad = gradient(&g.sample(lin), &g, Some(&lin)).unwrap();
        assert!(grad[0].iter().all(|&v| (v - 3.0).abs() < 1e-12));
        let grad = gradient(&vec![2.0; g.len()], &g, Some(&|_: &[f64]| 2.0)).unwrap();
        assert!(grad[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_sine() {
        let g = periodic_1d(128);
        let h = g.spacing(0);
        let u = g.sample(|x| (2.0 * PI * x[0]).sin());
        let grad = gradient(&u, &g, None).unwrap();
        for k in 0..g.len() {
            let exact = 2.0 * PI * (2.0 * PI * g.point(k)[0]).cos();
            let tol = 2.0 * PI * (2.0 * PI * h).powi(2) / 6.0 * 1.1;
            assert!((grad[0][k] - exact).abs() <= tol);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = periodic_1d(8);
        assert!(matches!(
            laplacian(&[1.0; 7], &g, None),
            Err(Error::DimensionMismatch {
                expected: 8,
                actual: 7
            })
        ));
    }

    #[test]
    fn constant_field_is_stationary() {
        let g = periodic_1d(16);
        for &m in &[0.5, 1.0, 2.0] {
            let u = vec![2.0; 16];
            let dt = stable_dt(&u, m, &g);
            assert_eq!(step_pme(&u, m, 0.0, dt, &g).unwrap(), u);
        }
    }

    #[test]
    fn step_rejects_unstable_dt_and_bad_exponent() {
        let g = periodic_1d(16);
        let u = g.sample(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin());
        let dt = stable_dt(&u, 2.0, &g);
        assert!(matches!(
            step_pme(&u, 2.0, 0.0, 1.5 * dt, &g),
            Err(Error::StabilityViolated { .. })
        ));
        assert!(step_pme(&u, 0.0, 0.0, dt, &g).is_err());
        assert!(step_pme(&u, -1.0, 0.0, dt, &g).is_err());
    }

    #[test]
    fn stability_limit_uses_largest_diffusivity() {
        let g = periodic_1d(16);
        let u = vec![0.5, 2.0, 1.0, 1.0];
        // m < 1: the diffusivity m·u^{m−1} is largest at the minimum of u.
        assert!((max_diffusivity(&u, 0.5) - 0.5 * 0.5f64.powf(-0.5)).abs() < 1e-15);
        assert!((max_diffusivity(&u, 2.0) - 4.0).abs() < 1e-15);
        let _ = g;
    }

    #[test]
    fn solve_constant_and_history_shape() {
        let g = periodic_1d(8);
        let mesh = TimeMesh::with_steps(0.01, 10).unwrap();
        let h = solve(&vec![1.0; 8], 3.0, &mesh, &g).unwrap();
        assert_eq!(h.n_slices(), 11);
        for k in 0..h.n_slices() {
            assert!(h.slice(k).iter().all(|&v| v == 1.0));
        }
        assert_eq!(h.slice_at(0.01).unwrap(), 10);
        assert!(h.slice_at(0.0055).is_err());
    }

    #[test]
    fn solve_sine_conserves_mass_and_obeys_comparison() {
        let g = periodic_1d(64);
        let u0 = g.sample(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin());
        let mesh = TimeMesh::with_max_dt(0.25, stable_dt(&u0, 2.0, &g)).unwrap();
        let opts = SolveOptions {
            record_every: 100,
            ..Default::default()
        };
        let (h, diag) = solve_with(&u0, 2.0, &mesh, &g, &opts).unwrap();
        let m0 = g.integrate(&u0);
        let m1 = g.integrate(h.last());
        assert!(((m1 - m0) / m0).abs() < 1e-12);
        assert!(diag.max_rel_mass_change.unwrap() < 1e-12);
        assert!(diag.max_increase_of_max <= 1e-14);
        assert!(diag.max_decrease_of_min <= 1e-14);
        let (lo0, hi0) = min_max(&u0);
        let (lo1, hi1) = min_max(h.last());
        assert!(hi1 < hi0 && lo1 > lo0);
    }

    #[test]
    fn two_dimensional_maximum_principle() {
        let g = GridSpec::periodic_box(2, 0.0, 1.0, 16).unwrap();
        let u0 = g.sample(|x| 1.0 + 0.4 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
        let mesh = TimeMesh::with_max_dt(0.05, stable_dt(&u0, 1.5, &g)).unwrap();
        let mut u = u0.clone();
        let (mut lo, mut hi) = min_max(&u);
        for n in 0..mesh.steps {
            u = step_pme(&u, 1.5, mesh.time(n), mesh.dt, &g).unwrap();
            let (nlo, nhi) = min_max(&u);
            assert!(nhi <= hi * (1.0 + 4.0 * f64::EPSILON));
            assert!(nlo >= lo * (1.0 - 4.0 * f64::EPSILON));
            lo = nlo;
            hi = nhi;
        }
    }

    #[test]
    fn heat_equation_limit_matches_mode_decay() {
        let g = periodic_1d(64);
        let u0 = g.sample(|x| 1.0 + 0.1 * (2.0 * PI * x[0]).sin());
        let mesh = TimeMesh::with_max_dt(0.01, 0.5 * stable_dt(&u0, 1.0, &g)).unwrap();
        let h = solve(&u0, 1.0, &mesh, &g).unwrap();
        let decay = (-(2.0 * PI).powi(2) * 0.01f64).exp();
        for k in 0..g.len() {
            let exact = 1.0 + 0.1 * decay * (2.0 * PI * g.point(k)[0]).sin();
            assert!((h.last()[k] - exact).abs() < 2e-4);
        }
    }

    /// The m = 2 traveling wave is affine in x, so the scheme reproduces it up to
    /// rounding; there is no discretization error to converge.
    #[test]
    fn traveling_wave_m2_reproduced_to_rounding() {
        let wave = Arc::new(TravelingWave::new(2.0, 1.0));
        let g = GridSpec::dirichlet(vec![Axis::new(-1.4, -0.4, 63)], wave.clone()).unwrap();
        let u0 = g.sample(|x| wave.value(0.0, x));
        let mesh = TimeMesh::with_max_dt(0.1, stable_dt(&[1.0], 2.0, &g)).unwrap();
        let h = solve(&u0, 2.0, &mesh, &g).unwrap();
        let err = h
            .last()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - wave.value(0.1, &g.point(k)[..1])).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "err = {err}");
    }

    fn wave_error(m: f64, n: usize, t_final: f64) -> f64 {
        let wave = Arc::new(TravelingWave::new(m, 1.0));
        let hi = wave.front_position(0.0, 0.3);
        let g = GridSpec::dirichlet(vec![Axis::new(hi - 1.0, hi, n)], wave.clone()).unwrap();
        let u0 = g.sample(|x| wave.value(0.0, x));
        let h = g.spacing(0);
        // dt ∝ h² with a fixed fraction of the stability limit.
        let dt = 0.4 * h * h / (2.0 * m * 1.6f64.powf(m - 1.0));
        let mesh = TimeMesh::with_max_dt(t_final, dt).unwrap();
        let hist = solve(&u0, m, &mesh, &g).unwrap();
        hist.last()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - wave.value(t_final, &g.point(k)[..1])).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn traveling_wave_m3_converges_second_order() {
        let e1 = wave_error(3.0, 31, 0.05);
        let e2 = wave_error(3.0, 63, 0.05);
        let e3 = wave_error(3.0, 127, 0.05);
        let r1 = e1 / e2;
        let r2 = e2 / e3;
        assert!(r1 > 3.3 && r1 < 4.7, "ratios {r1} {r2}");
        assert!(r2 > 3.3 && r2 < 4.7, "ratios {r1} {r2}");
    }

    fn barenblatt_error(n: usize) -> f64 {
        let b = Arc::new(Barenblatt::new(2.0, 1, 1.0, 1.0));
        // u ≥ 0.2 on [-1, 1] over the run.
        let g = GridSpec::dirichlet(vec![Axis::new(-1.0, 1.0, n)], b.clone()).unwrap();
        let u0 = g.sample(|x| b.value(0.0, x));
        let h = g.spacing(0);
        let dt = 0.4 * h * h / (2.0 * 2.0 * 1.1);
        let mesh = TimeMesh::with_max_dt(0.1, dt).unwrap();
        let hist = solve(&u0, 2.0, &mesh, &g).unwrap();
        hist.last()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - b.value(0.1, &g.point(k)[..1])).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn barenblatt_converges_second_order_in_space() {
        let b = Barenblatt::new(2.0, 1, 1.0, 1.0);
        assert!(b.value(0.0, &[1.0]) > 0.2 && b.value(0.1, &[1.0]) > 0.2);
        let e1 = barenblatt_error(31);
        let e2 = barenblatt_error(63);
        let r = e1 / e2;
        assert!(r > 3.0 && r < 5.0, "ratio {r} ({e1} -> {e2})");
    }

    #[test]
    fn positivity_floor_aborts() {
        let g = periodic_1d(16);
        let u0 = g.sample(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin());
        let mesh = TimeMesh::with_max_dt(0.01, stable_dt(&u0, 2.0, &g)).unwrap();
        let opts = SolveOptions {
            record_every: 1,
            positivity_floor: 1.5,
        };
        let r = solve_with(&u0, 2.0, &mesh, &g, &opts);
        assert!(matches!(r, Err(Error::PositivityLost { .. })));
    }

    #[test]
    fn mesh_requires_exact_division() {
        assert!(TimeMesh::new(1.0, 0.3).is_err());
        let m = TimeMesh::new(1.0, 0.25).unwrap();
        assert_eq!(m.steps, 4);
        assert_eq!(m.time(4), 1.0);
        let m = TimeMesh::with_max_dt(1.0, 0.3).unwrap();
        assert_eq!(m.steps, 4);
    }
}

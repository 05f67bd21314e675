//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then asserts.

use std::path::PathBuf;
use std::time::Instant;

use pme_lab::config::{ExperimentConfig, FieldConfig};
use pme_lab::estimates::{bound_check, equivalence_audit, Case};
use pme_lab::fbsde::{
    bsde_residual, evaluate_yz, flow_z_check, girsanov_weights, simulate_forward, simulate_tangent,
    CoefficientField, PathEnsemble, SimParams, TiltMode,
};
use pme_lab::grid::ScalarFieldHistory;
use pme_lab::martingale::{
    beta_roots, empirical_submartingale, eps_from_beta, g_delta, h_beta, q_integral_bound,
    z2_drift_super, Functional,
};
use pme_lab::report;
use pme_lab::transform::{pressure_pde_residual, PressureHistory, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

// Criterion 1
const C1_RATIO: (f64, f64) = (1.7, 2.3);
const C1_SECONDS: f64 = 60.0;
// Criterion 2
const C2_MASS_TOL: f64 = 1e-12;
const C2_MAX_PRINCIPLE_TOL: f64 = 1e-13;
// Criterion 3
const C3_RATIO_MIN: f64 = 1.7;
// Criterion 4
const C4_T_FINAL: f64 = 0.5;
const C4_FROM: f64 = 0.05;
// Criterion 5
const C5_BETA2_TOL: f64 = 1e-12;
const C5_ROOT_TOL: f64 = 1e-10;
const C5_G_TOL: f64 = 1e-12;
const C5_SAMPLES: usize = 20;
const C5_SWEEP: usize = 100;
// Criterion 6
const C6_SIGMAS: f64 = 3.0;
const C6_RATIO: (f64, f64) = (1.2, 1.8);
const C6_SECONDS: f64 = 120.0;
// Criterion 7
const C7_CHECKPOINTS: usize = 10;
// Criterion 8
const C8_SIGMAS: f64 = 3.0;
// Criterion 9
const C9_RMS: f64 = 0.05;
const C9_INVERSE_FRACTION: f64 = 0.99;
// Criterion 10
const C10_SIGMAS: f64 = 3.0;
// Criterion 11
const C11_EXACT: f64 = 1e-12;

const N_PATHS: usize = 10_000;
const SEED: u64 = 1;

fn verdict(n: u8, pass: bool, detail: String) {
    println!(
        "{} criterion {n}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n}: {detail}");
}

fn field(value: serde_json::Value) -> FieldConfig {
    serde_json::from_value(value).unwrap()
}

fn sine(m: f64, dim: usize, points: usize, t_final: f64, record_every: usize) -> FieldConfig {
    field(json!({
        "m": m,
        "grid": { "dim": dim, "lo": 0.0, "hi": 1.0, "points": points },
        "initial": { "kind": "sine", "base": 1.0, "amplitude": 0.3 },
        "t_final": t_final,
        "record_every": record_every,
    }))
}

fn solved(f: &FieldConfig) -> (ScalarFieldHistory, CoefficientField, f64) {
    let (h, _) = f.solve(None).unwrap();
    let p = PressureHistory::from_history(&h).unwrap();
    let c = CoefficientField::from_history(&p).unwrap();
    (h, c, p.f0_sup())
}

fn params(m: f64, eps: f64, t: f64, dt: f64, seed: u64, mode: TiltMode) -> SimParams {
    SimParams {
        m,
        epsilon: eps,
        t_final: t,
        dt,
        n_paths: N_PATHS,
        seed,
        tilt_mode: mode,
    }
}

fn paths(field: &CoefficientField, p: &SimParams, x0: f64) -> PathEnsemble {
    let mut e = simulate_forward(field, p, &[x0]).unwrap();
    evaluate_yz(&mut e, field).unwrap();
    if p.tilt_mode == TiltMode::DensityWeights {
        girsanov_weights(&mut e, p.epsilon).unwrap();
    }
    e
}

#[test]
fn criterion_01_solver_oracle() {
    let start = Instant::now();
    let wave = field(json!({
        "m": 2.0,
        "grid": { "lo": 0.0, "hi": 1.0, "points": 63, "boundary": "dirichlet" },
        "initial": { "kind": "traveling_wave", "speed": 1.0, "shift": 1.5, "margin": 0.2 },
        "t_final": 0.1,
    }));
    let oracle = wave.oracle().unwrap();
    let mut errors = Vec::new();
    for points in [63, 127, 255] {
        let (h, _) = wave.solve(Some(points)).unwrap();
        let t = h.mesh.t_final;
        let err = h
            .last()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - oracle.value(t, &h.grid.point(k)[..1])).abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = ratios.iter().all(|r| (C1_RATIO.0..=C1_RATIO.1).contains(r)) && secs < C1_SECONDS;
    verdict(
        1,
        pass,
        format!("L-inf errors {errors:.3?}, ratios {ratios:.3?}, {secs:.1}s"),
    );
}

#[test]
fn criterion_02_conservation_and_comparison() {
    let mut worst_mass: f64 = 0.0;
    let mut worst_mp = f64::NEG_INFINITY;
    for m in [0.5, 1.5, 2.0] {
        for dim in [1, 2] {
            let points = if dim == 1 { 64 } else { 32 };
            let f = sine(m, dim, points, 0.05, 1);
            let (h, d) = f.solve(None).unwrap();
            let hi = h.slice(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            worst_mass = worst_mass.max(d.max_rel_mass_change.unwrap());
            worst_mp = worst_mp.max(d.max_increase_of_max.max(d.max_decrease_of_min) / hi);
        }
    }
    let pass = worst_mass <= C2_MASS_TOL && worst_mp <= C2_MAX_PRINCIPLE_TOL;
    verdict(
        2,
        pass,
        format!("max relative mass change per step {worst_mass:.2e}, worst relative max-principle excursion {worst_mp:.2e}"),
    );
}

#[test]
fn criterion_03_pressure_residual() {
    let worst = |f: &FieldConfig, points: usize| -> f64 {
        let (h, _) = f.solve(Some(points)).unwrap();
        let p = PressureHistory::from_history(&h).unwrap();
        pressure_pde_residual(&p)
            .unwrap()
            .iter()
            .map(|s| s.max_abs())
            .fold(0.0, f64::max)
    };
    let mut ratios = Vec::new();
    for (m, dim, points) in [(1.5, 1, 32), (0.5, 1, 32), (2.0, 2, 16), (0.8, 2, 16)] {
        let f = sine(m, dim, points, 0.05, 1);
        let (a, b, c) = (
            worst(&f, points),
            worst(&f, 2 * points),
            worst(&f, 4 * points),
        );
        ratios.push((m, dim, a / b, b / c));
    }
    let pass = ratios
        .iter()
        .all(|&(_, _, r1, r2)| r1 >= C3_RATIO_MIN && r2 >= C3_RATIO_MIN);
    verdict(3, pass, format!("(m, n, ratio, ratio) {ratios:.3?}"));
}

#[test]
fn criterion_04_bounds_on_solved_fields() {
    let runs = [
        (Case::Est1, 1.5, 1),
        (Case::Est1, 1.5, 2),
        (Case::Thm3, 2.0, 1),
        (Case::Thm3, 3.0, 1),
        (Case::E671, 0.5, 1),
        (Case::E671, 0.8, 2),
        (Case::Thm6, 0.5, 1),
    ];
    let mut lines = Vec::new();
    let mut pass = true;
    for (case, m, dim) in runs {
        let f = if dim == 1 {
            sine(m, 1, 64, C4_T_FINAL, 1)
        } else {
            sine(m, 2, 32, C4_T_FINAL, 10)
        };
        let (h, _) = f.solve(None).unwrap();
        let r = bound_check(case, &h, f.auto_tolerance().unwrap()).unwrap();
        let checked = r.rows.iter().filter(|row| row.checked).count();
        let covers = r
            .rows
            .iter()
            .any(|row| row.checked && row.t <= C4_FROM + 0.01)
            && r.rows
                .last()
                .is_some_and(|row| (row.t - C4_T_FINAL).abs() < 1e-12);
        pass &= r.regime_valid && r.pass && covers && checked > 0;
        lines.push(format!(
            "{} m={m} n={dim}: min margin {:.3e} over {checked} slices",
            case.id(),
            r.min_margin
        ));
    }
    verdict(4, pass, lines.join("; "));
}

#[test]
fn criterion_05_constant_algebra() {
    let (_, b2) = beta_roots(0.5, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut root: f64 = 0.0;
    let mut g: f64 = 0.0;
    for _ in 0..C5_SAMPLES {
        let n: usize = rng.random_range(1..=4);
        let nf = n as f64;
        let m: f64 = rng.random_range(((nf - 1.0) / (nf + 3.0)).max(0.02)..1.0);
        let (r1, r2) = beta_roots(m, n).unwrap();
        root = root.max(h_beta(m, n, r1).abs()).max(h_beta(m, n, r2).abs());
        let star = -std::f64::consts::SQRT_2 * m * (1.0 - m);
        g = g.max((g_delta(m, n, star) - ((nf + 8.0) * m - 2.0 - nf) * (1.0 - m)).abs());
    }
    let mut mismatches = 0;
    for n in 1..=3usize {
        for i in 0..C5_SWEEP {
            let m = 1.0 + 3.0 * (i as f64 + 0.5) / C5_SWEEP as f64;
            if (z2_drift_super(m, n, 2.0 * (m - 1.0)) >= 0.0) != (m <= 1.0 + 2.0 / n as f64) {
                mismatches += 1;
            }
        }
    }
    let pass = b2.abs() <= C5_BETA2_TOL && root <= C5_ROOT_TOL && g <= C5_G_TOL && mismatches == 0;
    verdict(
        5,
        pass,
        format!("beta2 {b2:.1e}, max |H| {root:.1e}, max G error {g:.1e}, sweep mismatches {mismatches}"),
    );
}

#[test]
fn criterion_06_bsde_residual() {
    let start = Instant::now();
    let (_, field, _) = solved(&sine(2.0, 1, 128, 0.02, 1));
    let mut rms = Vec::new();
    let mut z = Vec::new();
    for dt in [1e-4, 5e-5] {
        let e = paths(
            &field,
            &params(2.0, 0.0, 0.02, dt, SEED, TiltMode::TiltedDrift),
            0.3,
        );
        let r = bsde_residual(&e, e.target_measure()).unwrap();
        z.push(r.cumulative.mean / r.cumulative.se);
        rms.push(r.rms_cumulative);
    }
    let ratio = rms[0] / rms[1];
    let secs = start.elapsed().as_secs_f64();
    let pass = z.iter().all(|v| v.abs() <= C6_SIGMAS)
        && (C6_RATIO.0..=C6_RATIO.1).contains(&ratio)
        && secs < C6_SECONDS;
    verdict(
        6,
        pass,
        format!("z-scores {z:.2?}, RMS ratio {ratio:.3}, {secs:.1}s"),
    );
}

#[test]
fn criterion_07_submartingale_realizations() {
    let m = 1.5;
    let (_, field, _) = solved(&sine(m, 1, 64, 0.1, 1));
    let mut lines = Vec::new();
    let mut pass = true;
    for (functional, eps) in [
        (Functional::Z2, (5.0 - m) / 2.0),
        (Functional::MOverU, (3.0 + m) / 2.0),
    ] {
        let e = paths(
            &field,
            &params(m, eps, 0.1, 1e-3, SEED, TiltMode::TiltedDrift),
            0.3,
        );
        let r = empirical_submartingale(&e, functional, &e.checkpoints(C7_CHECKPOINTS)).unwrap();
        pass &= r.monotone && r.points.len() == C7_CHECKPOINTS;
        lines.push(format!(
            "{} eps={eps}: violations {:?}, worst drop {:.2} sigma",
            functional.as_str(),
            r.violations,
            r.max_decrease_sigmas
        ));
    }
    verdict(7, pass, lines.join("; "));
}

#[test]
fn criterion_08_q_integral_bounds() {
    let mut lines = Vec::new();
    let mut pass = true;
    let (_, super_field, super_f0) = solved(&sine(1.5, 1, 64, 0.1, 1));
    let (_, sub_field, sub_f0) = solved(&sine(0.5, 1, 64, 0.1, 1));
    let (_, b2) = beta_roots(0.5, 1).unwrap();
    let sub_eps = eps_from_beta(Regime::Sub, 0.5, b2);
    let runs = [
        (&super_field, super_f0, 1.5, Functional::Z2, 1.75),
        (&super_field, super_f0, 1.5, Functional::MOverU, 2.25),
        (&sub_field, sub_f0, 0.5, Functional::MOverU, sub_eps),
    ];
    for (field, f0, m, functional, eps) in runs {
        let e = paths(
            field,
            &params(m, eps, 0.1, 1e-3, SEED, TiltMode::TiltedDrift),
            0.3,
        );
        let r = q_integral_bound(&e, functional, f0).unwrap();
        let upper = r.estimate.mean + C8_SIGMAS * r.estimate.se;
        pass &= upper <= r.bound;
        lines.push(format!(
            "m={m} {}: {upper:.4} <= {:.4}",
            functional.as_str(),
            r.bound
        ));
    }
    verdict(8, pass, lines.join("; "));
}

#[test]
fn criterion_09_flow_representation() {
    let mut lines = Vec::new();
    let mut pass = true;
    for m in [2.0, 0.5] {
        let (_, field, _) = solved(&sine(m, 1, 64, 0.1, 1));
        let mut e = paths(
            &field,
            &SimParams {
                n_paths: 2000,
                ..params(m, 0.0, 0.1, 1e-3, SEED, TiltMode::TiltedDrift)
            },
            0.3,
        );
        simulate_tangent(&mut e, &field).unwrap();
        let r = flow_z_check(&e, &field, 1e-4).unwrap();
        pass &= r.rms_relative <= C9_RMS && r.inverse_ok_fraction >= C9_INVERSE_FRACTION;
        lines.push(format!(
            "m={m}: RMS relative {:.2e}, K.J near identity on {:.3}",
            r.rms_relative, r.inverse_ok_fraction
        ));
    }
    verdict(9, pass, lines.join("; "));
}

#[test]
fn criterion_10_measure_change() {
    let m = 1.5;
    let eps = (5.0 - m) / 2.0;
    let (_, field, _) = solved(&sine(m, 1, 64, 0.1, 1));
    let a = paths(
        &field,
        &params(m, eps, 0.1, 1e-3, SEED, TiltMode::TiltedDrift),
        0.3,
    );
    let b = paths(
        &field,
        &params(m, eps, 0.1, 1e-3, SEED + 1, TiltMode::DensityWeights),
        0.3,
    );
    let n = a.steps();
    let ea = a.q_expectation(n, |p| a.z_norm_sq(p, n));
    let eb = b.q_expectation(n, |p| b.z_norm_sq(p, n));
    let z = ea.z_score(&eb);
    verdict(
        10,
        z <= C10_SIGMAS,
        format!(
            "tilted {:.4} +- {:.4}, weighted {:.4} +- {:.4}, z {z:.2}",
            ea.mean, ea.se, eb.mean, eb.se
        ),
    );
}

#[test]
fn criterion_11_equivalence_audit() {
    let mut lines = Vec::new();
    let mut pass = true;
    for c in 1..=4u8 {
        let r = equivalence_audit(Case::display(c).unwrap()).unwrap();
        if c == 2 || c == 3 {
            pass &=
                (r.factor_min - 1.0).abs() <= C11_EXACT && (r.factor_max - 1.0).abs() <= C11_EXACT;
        }
        pass &= r.pattern_holds;
        lines.push(format!(
            "case {c}: [{:.6}, {:.6}] {}",
            r.factor_min, r.factor_max, r.pattern
        ));
    }
    verdict(11, pass, lines.join("; "));
}

#[test]
fn criterion_12_determinism() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/paper-suite.json");
    let cfg = ExperimentConfig::load(&path).unwrap().resolve().unwrap();
    let a = serde_json::to_string(&report::run(&cfg, false).numeric_json().unwrap()).unwrap();
    let b = serde_json::to_string(&report::run(&cfg, true).numeric_json().unwrap()).unwrap();
    verdict(
        12,
        a == b,
        format!("{} bytes of numeric report, identical: {}", a.len(), a == b),
    );
}

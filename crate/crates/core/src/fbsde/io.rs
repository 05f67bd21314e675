//! Ensemble summaries and raw path dumps as CSV.
//!
//! Summary rows are checkpoints; for every tracked functional `q` there are columns
//! `q_mean`, `q_var`, `q_se`. Functionals: `x{a}` per axis, `y`, `z2` (`|Z|²`),
//! `log_l` and `weight` (`exp(log L)`). Statistics use paths that never escaped and are
//! unweighted, so `weight_mean` shows the density normalization directly.

use std::io::Write;

use super::PathEnsemble;
use crate::error::Result;
use crate::stats::Estimate;

fn functionals(paths: &PathEnsemble) -> Vec<String> {
    let mut names: Vec<String> = (0..paths.dim()).map(|a| format!("x{a}")).collect();
    if paths.has_yz() {
        names.push("y".into());
        names.push("z2".into());
    }
    names.push("log_l".into());
    names.push("weight".into());
    names
}

fn value(paths: &PathEnsemble, name: &str, p: usize, n: usize) -> f64 {
    match name {
        "y" => paths.y(p, n),
        "z2" => paths.z_norm_sq(p, n),
        "log_l" => paths.log_l(p, n),
        "weight" => paths.log_l(p, n).exp(),
        x => {
            let a: usize = x[1..].parse().unwrap_or(0);
            paths.x(p, n)[a]
        }
    }
}

pub fn write_summary_csv<W: Write>(
    paths: &PathEnsemble,
    checkpoints: &[usize],
    mut w: W,
) -> Result<()> {
    let names = functionals(paths);
    write!(w, "t,n_used")?;
    for q in &names {
        write!(w, ",{q}_mean,{q}_var,{q}_se")?;
    }
    writeln!(w)?;
    for &n in checkpoints {
        let mut row = format!("{:.16e},{}", paths.time(n), paths.usable().count());
        for q in &names {
            let e = Estimate::of(paths.usable().map(|p| value(paths, q, p, n)));
            row.push_str(&format!(
                ",{:.16e},{:.16e},{:.16e}",
                e.mean,
                e.variance(),
                e.se
            ));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// One row per (path, step) with the same functionals as the summary.
pub fn write_raw_csv<W: Write>(paths: &PathEnsemble, mut w: W) -> Result<()> {
    let names = functionals(paths);
    write!(w, "path,stream,step,t,escaped")?;
    for q in &names {
        write!(w, ",{q}")?;
    }
    writeln!(w)?;
    for p in 0..paths.n_paths() {
        for n in 0..=paths.steps() {
            let esc = paths.escaped_at(p).is_some_and(|e| e <= n);
            write!(
                w,
                "{p},{},{n},{:.16e},{}",
                paths.stream_id(p),
                paths.time(n),
                esc as u8
            )?;
            for q in &names {
                write!(w, ",{:.16e}", value(paths, q, p, n))?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

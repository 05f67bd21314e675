//! CSV layout for [`ScalarFieldHistory`].
//!
//! ```text
//! # pme-lab field history v1
//! dim,1
//! axis,0,<lo>,<hi>,<points>
//! boundary,periodic                 (or: boundary,dirichlet,<oracle name>)
//! m,<m>
//! T,<T>
//! dt,<dt>
//! steps,<steps>
//! u_min,<u_min>
//! record_every,<k>
//! step,t,v0,v1,...
//! <step>,<t>,<values in row-major order>
//! ```
//!
//! Floats are written with 17 significant digits so reading restores them exactly.

use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{Axis, GridSpec, ScalarFieldHistory, TimeMesh};
use crate::error::{Error, Result};
use crate::exact::ExactSolution;

const MAGIC: &str = "# pme-lab field history v1";

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(hist: &ScalarFieldHistory, mut w: W) -> Result<()> {
    let g = &hist.grid;
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "dim,{}", g.dim())?;
    for (a, ax) in g.axes().iter().enumerate() {
        writeln!(w, "axis,{a},{},{},{}", num(ax.lo), num(ax.hi), ax.points)?;
    }
    match g.oracle() {
        None => writeln!(w, "boundary,periodic")?,
        Some(o) => writeln!(w, "boundary,dirichlet,\"{}\"", o.name())?,
    }
    writeln!(w, "m,{}", num(hist.m))?;
    writeln!(w, "T,{}", num(hist.mesh.t_final))?;
    writeln!(w, "dt,{}", num(hist.mesh.dt))?;
    writeln!(w, "steps,{}", hist.mesh.steps)?;
    writeln!(w, "u_min,{}", num(hist.u_min))?;
    writeln!(w, "record_every,{}", hist.record_every)?;
    write!(w, "step,t")?;
    for k in 0..g.len() {
        write!(w, ",v{k}")?;
    }
    writeln!(w)?;
    for s in 0..hist.n_slices() {
        write!(w, "{},{}", hist.step_index(s), num(hist.time(s)))?;
        for v in hist.slice(s) {
            write!(w, ",{}", num(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<Option<String>> {
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some(l) => {
                    self.line += 1;
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(Some(l));
                    }
                }
            }
        }
    }

    fn expect(&mut self, key: &str) -> Result<Vec<String>> {
        let l = self
            .next_line()?
            .ok_or_else(|| Error::Format(format!("missing `{key}` line")))?;
        let parts: Vec<String> = l.split(',').map(|s| s.trim().to_string()).collect();
        if parts[0] != key {
            return Err(Error::Format(format!(
                "line {}: expected `{key}`, found `{}`",
                self.line, parts[0]
            )));
        }
        Ok(parts[1..].to_vec())
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let p = self.expect(key)?;
        parse(p.first().map(String::as_str).unwrap_or(""), key)
    }
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Format(format!("cannot parse {what} from `{s}`")))
}

/// Read a history written by [`write_csv`]. Dirichlet histories need the oracle that fed
/// their ghosts; the stored name is only checked against it.
pub fn read_csv<R: BufRead>(
    r: R,
    oracle: Option<Arc<dyn ExactSolution>>,
) -> Result<ScalarFieldHistory> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    match lines.next_line()? {
        Some(l) if l.trim() == MAGIC => {}
        _ => return Err(Error::Format("missing header line".into())),
    }
    let dim: usize = lines.scalar("dim")?;
    let mut axes = Vec::with_capacity(dim);
    for a in 0..dim {
        let p = lines.expect("axis")?;
        if p.len() != 4 || parse::<usize>(&p[0], "axis index")? != a {
            return Err(Error::Format(format!("bad axis line for axis {a}")));
        }
        axes.push(Axis::new(
            parse(&p[1], "lo")?,
            parse(&p[2], "hi")?,
            parse(&p[3], "points")?,
        ));
    }
    let b = lines.expect("boundary")?;
    let grid = match (b.first().map(String::as_str), oracle) {
        (Some("periodic"), _) => GridSpec::periodic(axes)?,
        (Some("dirichlet"), Some(o)) => {
            let stored = b[1..].join(",");
            let stored = stored.trim_matches('"');
            if stored != o.name() {
                return Err(Error::Format(format!(
                    "history was fed by `{stored}`, reader supplied `{}`",
                    o.name()
                )));
            }
            GridSpec::dirichlet(axes, o)?
        }
        (Some("dirichlet"), None) => {
            return Err(Error::Format(
                "dirichlet history requires its boundary oracle".into(),
            ))
        }
        _ => return Err(Error::Format("unknown boundary kind".into())),
    };
    let m: f64 = lines.scalar("m")?;
    let t_final: f64 = lines.scalar("T")?;
    let dt: f64 = lines.scalar("dt")?;
    let steps: usize = lines.scalar("steps")?;
    let u_min: f64 = lines.scalar("u_min")?;
    let record_every: usize = lines.scalar("record_every")?;
    let mesh = TimeMesh { t_final, dt, steps };
    let header = lines.expect("step")?;
    let n = grid.len();
    if header.len() != n + 1 {
        return Err(Error::Format(format!(
            "column header lists {} values, grid has {n}",
            header.len().saturating_sub(1)
        )));
    }
    let mut step_idx = Vec::new();
    let mut values = Vec::new();
    while let Some(l) = lines.next_line()? {
        let mut cols = l.split(',');
        let s: usize = parse(cols.next().unwrap_or("").trim(), "step")?;
        let _t: f64 = parse(cols.next().unwrap_or("").trim(), "t")?;
        let before = values.len();
        for c in cols {
            values.push(parse::<f64>(c.trim(), "value")?);
        }
        if values.len() - before != n {
            return Err(Error::Format(format!(
                "line {}: {} values, expected {n}",
                lines.line,
                values.len() - before
            )));
        }
        step_idx.push(s);
    }
    ScalarFieldHistory::from_parts(grid, mesh, m, u_min, record_every, step_idx, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::TravelingWave;
    use crate::grid::{solve_with, stable_dt, SolveOptions};

    #[test]
    fn periodic_round_trip_is_bitwise() {
        let g = GridSpec::periodic(vec![Axis::new(0.0, 1.0, 5), Axis::new(0.0, 2.0, 4)]).unwrap();
        let u0 = g.sample(|x| 1.0 + 0.3 * (x[0] * 7.1).sin() * (x[1] * 1.3).cos() + 1e-17);
        let mesh = TimeMesh::with_max_dt(0.01, stable_dt(&u0, 1.5, &g)).unwrap();
        let opts = SolveOptions {
            record_every: 3,
            ..Default::default()
        };
        let (h, _) = solve_with(&u0, 1.5, &mesh, &g, &opts).unwrap();
        let mut buf = Vec::new();
        write_csv(&h, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), None).unwrap();
        assert_eq!(back.values(), h.values());
        assert_eq!(back.times(), h.times());
        assert_eq!(back.mesh, h.mesh);
        assert_eq!(back.record_every, 3);
    }

    #[test]
    fn dirichlet_needs_matching_oracle() {
        let w: Arc<dyn ExactSolution> = Arc::new(TravelingWave::new(2.0, 1.0));
        let g = GridSpec::dirichlet(vec![Axis::new(-2.0, -1.0, 6)], w.clone()).unwrap();
        let u0 = g.sample(|x| w.value(0.0, x));
        let mesh = TimeMesh::with_max_dt(0.01, stable_dt(&u0, 2.0, &g)).unwrap();
        let (h, _) = solve_with(&u0, 2.0, &mesh, &g, &SolveOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_csv(&h, &mut buf).unwrap();
        assert!(read_csv(buf.as_slice(), None).is_err());
        let other: Arc<dyn ExactSolution> = Arc::new(TravelingWave::new(3.0, 1.0));
        assert!(read_csv(buf.as_slice(), Some(other)).is_err());
        let back = read_csv(buf.as_slice(), Some(w)).unwrap();
        assert_eq!(back.values(), h.values());
    }

    #[test]
    fn truncated_rows_are_rejected() {
        let text = "# pme-lab field history v1\ndim,1\naxis,0,0,1,4\nboundary,periodic\nm,2\nT,1\ndt,1\nsteps,1\nu_min,1\nrecord_every,1\nstep,t,v0,v1,v2,v3\n0,0,1,1,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), None),
            Err(Error::Format(_))
        ));
    }
}

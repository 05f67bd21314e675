//! Run a resolved config and write `report.json` plus per-check CSV series.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::checks::{run_checks, CheckOutcome, Lab, Status};
use crate::config::ExperimentConfig;
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

pub const TOOL: Tool = Tool {
    name: env!("CARGO_PKG_NAME"),
    version: env!("CARGO_PKG_VERSION"),
};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Counts {
    pub pass: usize,
    pub fail: usize,
    pub regime_invalid: usize,
    pub error: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Overall {
    /// No check failed or errored. Regime-invalid checks do not count against the run.
    pub pass: bool,
    pub counts: Counts,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub fields: BTreeMap<String, f64>,
    pub checks: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: Tool,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckOutcome>,
    pub overall: Overall,
    pub timing: Timing,
}

impl RunReport {
    /// The report without its timing section, for reproducibility comparisons.
    pub fn numeric_json(&self) -> Result<Value> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut v {
            map.remove("timing");
        }
        Ok(v)
    }

    pub fn exit_code(&self) -> i32 {
        if self.overall.counts.error > 0 {
            3
        } else if self.overall.pass {
            0
        } else {
            1
        }
    }
}

/// Solve the referenced fields and run every check. The config must already be resolved.
pub fn run(config: &ExperimentConfig, parallel: bool) -> RunReport {
    let start = Instant::now();
    let lab = Lab::prepare(config);
    let checks = run_checks(config, &lab, parallel);
    let mut counts = Counts::default();
    for c in &checks {
        match c.status {
            Status::Pass => counts.pass += 1,
            Status::Fail => counts.fail += 1,
            Status::RegimeInvalid => counts.regime_invalid += 1,
            Status::Error => counts.error += 1,
        }
    }
    let timing = Timing {
        total_seconds: start.elapsed().as_secs_f64(),
        fields: lab
            .fields
            .iter()
            .filter_map(|(k, v)| v.as_ref().ok().map(|f| (k.clone(), f.seconds)))
            .collect(),
        checks: checks.iter().map(|c| c.seconds).collect(),
    };
    RunReport {
        tool: TOOL,
        config: config.clone(),
        overall: Overall {
            pass: counts.fail == 0 && counts.error == 0,
            counts,
        },
        checks,
        timing,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// CSV text for one check's series, or `None` if it has none.
pub fn series_csv(outcome: &CheckOutcome) -> Option<String> {
    if outcome.series.is_empty() {
        return None;
    }
    let mut s = String::from("t,bound,observed,margin,stderr\n");
    for r in &outcome.series {
        s.push_str(&format!(
            "{:e},{},{:e},{},{}\n",
            r.t,
            cell(r.bound),
            r.observed,
            cell(r.margin),
            cell(r.stderr)
        ));
    }
    Some(s)
}

/// Write `report.json` and `checks/<index>_<id>.csv` under `dir`.
pub fn write(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("checks"))?;
    let mut f = fs::File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    writeln!(f)?;
    for c in &report.checks {
        if let Some(csv) = series_csv(c) {
            fs::write(
                dir.join("checks")
                    .join(format!("{:02}_{}.csv", c.index, c.id)),
                csv,
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUITE: &str = r#"{
        "scenario": "unit",
        "fields": { "c": { "m": 2.0, "grid": { "lo": 0.0, "hi": 1.0, "points": 16 },
                           "initial": { "kind": "constant", "value": 1.0 }, "t_final": 0.1 } },
        "checks": [ { "id": "est1", "field": "c" }, { "id": "conservation", "field": "c" },
                    { "id": "constant_algebra" } ]
    }"#;

    #[test]
    fn constant_suite_passes_and_writes() {
        let cfg = ExperimentConfig::from_json(SUITE)
            .unwrap()
            .resolve()
            .unwrap();
        let r = run(&cfg, false);
        assert!(r.overall.pass, "{:#?}", r.checks);
        assert_eq!(r.exit_code(), 0);
        let dir = tempfile::tempdir().unwrap();
        write(&r, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["checks"][0]["status"], "pass");
        assert!(dir.path().join("checks/00_est1.csv").exists());
    }

    #[test]
    fn parallel_matches_serial() {
        let cfg = ExperimentConfig::from_json(SUITE)
            .unwrap()
            .resolve()
            .unwrap();
        let a = run(&cfg, false).numeric_json().unwrap();
        let b = run(&cfg, true).numeric_json().unwrap();
        assert_eq!(a, b);
    }
}

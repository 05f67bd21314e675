use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pme_lab::checks::CATALOG;
use pme_lab::config::ExperimentConfig;
use pme_lab::report::{self, TOOL};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Numerical verification lab for porous medium and fast diffusion equations.
#[derive(Parser)]
#[command(name = "pme-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks of a JSON experiment config.
    Run {
        config: PathBuf,
        /// Output directory. Overrides the config and PME_LAB_OUTPUT_DIR.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run checks on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// List check ids and their parameters.
    ListChecks {
        #[arg(long)]
        json: bool,
    },
    /// Print the tool version.
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Version => {
            println!("{} {}", TOOL.name, TOOL.version);
            ExitCode::SUCCESS
        }
        Command::ListChecks { json } => {
            if json {
                let v: Vec<_> = CATALOG
                    .iter()
                    .map(|e| {
                        serde_json::json!({
                            "id": e.id,
                            "summary": e.summary,
                            "params": e.params.iter().map(|(k, v)| serde_json::json!({"name": k, "type": v})).collect::<Vec<_>>(),
                        })
                    })
                    .collect();
                println!(
                    "{}",
                    serde_json::to_string_pretty(&v).expect("catalog serializes")
                );
            } else {
                for e in CATALOG {
                    println!("{:<20} {}", e.id, e.summary);
                    for (k, v) in e.params {
                        println!("    {k}: {v}");
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            output_dir,
            parallel,
        } => run(config, output_dir, parallel),
    }
}

fn run(path: PathBuf, output_dir: Option<PathBuf>, parallel: bool) -> ExitCode {
    let cfg = match ExperimentConfig::load(&path).and_then(ExperimentConfig::resolve) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let dir = output_dir
        .or_else(|| std::env::var_os("PME_LAB_OUTPUT_DIR").map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("pme-lab-out").join(&cfg.scenario));
    let r = report::run(&cfg, parallel);
    for c in &r.checks {
        let status = serde_json::to_value(c.status).expect("status serializes");
        let status = status.as_str().unwrap_or("?");
        match &c.message {
            Some(m) => println!("[{:02}] {:<20} {status}: {m}", c.index, c.id),
            None => println!("[{:02}] {:<20} {status}", c.index, c.id),
        }
    }
    if let Err(e) = report::write(&r, &dir) {
        eprintln!("writing {}: {e}", dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let n = &r.overall.counts;
    println!(
        "{} pass, {} fail, {} regime-invalid, {} error; report in {}",
        n.pass,
        n.fail,
        n.regime_invalid,
        n.error,
        dir.display()
    );
    ExitCode::from(r.exit_code() as u8)
}

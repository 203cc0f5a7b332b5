use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geored_cli::{
    list_scenarios, run, run_all, CliError, ConfigFile, GateKind, Overrides, RunReport,
    ScenarioConfig, Status,
};

#[derive(Parser)]
#[command(
    name = "geored",
    version,
    about = "Run geometric-reduction verification scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Default)]
struct Common {
    /// Global seed; each scenario derives its own from it.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Absolute and relative tolerance of the adaptive integrator.
    #[arg(long)]
    rk45_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// List registered scenarios.
    List,
    /// Run one scenario.
    Run {
        #[arg(long)]
        scenario: String,
        #[command(flatten)]
        common: Common,
        /// JSON config file; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scenario parameter, repeatable.
        #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_pair)]
        params: Vec<(String, f64)>,
        /// Gate tolerance, repeatable.
        #[arg(long = "tol", value_name = "METRIC=VALUE", value_parser = parse_pair)]
        tolerances: Vec<(String, f64)>,
    },
    /// Run every scenario with defaults or per-scenario files `<name>.json`.
    RunAll {
        #[arg(long)]
        config_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_pair(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected KEY=VALUE")?;
    let v: f64 = v.parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.to_string(), v))
}

fn overrides(common: Common) -> Overrides {
    Overrides {
        seed: common.seed,
        rk45_tol: common.rk45_tol,
        out_dir: common.out_dir,
        ..Default::default()
    }
}

fn print_report(r: &RunReport) {
    println!(
        "{:<44} {:<7} ({:.1}s)",
        r.name,
        r.status.to_string(),
        r.wall_time
    );
    if let Some(e) = &r.error {
        println!("    error: {e}");
    }
    for g in r.gates.iter().filter(|g| !g.ok) {
        let op = match g.kind {
            GateKind::AtMost => "<=",
            GateKind::AtLeast => ">=",
        };
        let note = if g.acceptance {
            ""
        } else {
            " (published closed form)"
        };
        println!(
            "    {} = {:.3e}, wanted {op} {:.1e}{note}",
            g.metric, g.value, g.tol
        );
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::List => {
            for s in list_scenarios() {
                println!("{:<44} {}", s.name, s.description);
                for r in s.references {
                    println!("{:<44}   ref: {r}", "");
                }
            }
            Ok(true)
        }
        Command::Run {
            scenario,
            common,
            config,
            params,
            tolerances,
        } => {
            let file = match &config {
                Some(p) => ConfigFile::load(p)?,
                None => ConfigFile::default(),
            };
            let mut over = overrides(common);
            over.params = params.into_iter().collect();
            over.tolerances = tolerances.into_iter().collect();
            let cfg = ScenarioConfig::resolve(&scenario, file, over)?;
            let report = run(&cfg)?;
            print_report(&report);
            println!(
                "report: {}",
                cfg.output_dir.join(&cfg.name).join("report.json").display()
            );
            Ok(report.status == Status::Pass)
        }
        Command::RunAll { config_dir, common } => {
            let summary = run_all(config_dir.as_deref(), &overrides(common))?;
            for r in &summary.reports {
                print_report(r);
            }
            println!(
                "pass {} fail {} partial {}",
                summary.pass, summary.fail, summary.partial
            );
            Ok(summary.all_pass())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("geored: {e}");
            ExitCode::FAILURE
        }
    }
}

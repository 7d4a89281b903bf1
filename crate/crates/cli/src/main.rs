use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use duostore::{
    run_dispatch, run_plan, run_stage1, run_stage2, summary, write_report, CliError, PlanResult,
    Result, RunConfig,
};
use duostore_core::storage::StorageDesign;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "duostore", version, about = "Two-stage stationary and mobile battery planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    mip_gap: Option<f64>,
    /// Per-solve time limit, seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration, network and scenarios.
    Validate(Common),
    /// Solve one scenario with a fixed set of designs.
    Dispatch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scenario: String,
        /// TOML file with a `[[designs]]` list; no storage when omitted.
        #[arg(long)]
        designs: Option<PathBuf>,
        /// Soft voltage and current limits, counting violations.
        #[arg(long)]
        relaxed: bool,
    },
    /// Size stationary units over the stage-1 days.
    PlanStage1(Common),
    /// Rent mobile modules for the stage-2 days on top of a stage-1 result.
    PlanStage2 {
        #[command(flatten)]
        common: Common,
        /// Stage-1 result; defaults to stage1.json in the output directory.
        #[arg(long)]
        stage1: Option<PathBuf>,
    },
    /// Both stages.
    Plan(Common),
    /// Write tables and hourly CSVs for a saved result.
    Report {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignFile {
    designs: Vec<StorageDesign>,
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(j) = c.jobs {
        cfg.solver.jobs = Some(j);
    }
    if let Some(g) = c.mip_gap {
        cfg.solver.mip_gap = g;
    }
    if let Some(t) = c.time_limit {
        cfg.solver.time_limit_s = Some(t);
    }
    Ok(cfg)
}

/// Saves the result and its report, then fails if the plan is infeasible.
fn finish(cfg: &RunConfig, result: &PlanResult, name: &str) -> Result<()> {
    cfg.prepare_out()?;
    let path = cfg.out.join(name);
    result.save(&path)?;
    write_report(result, &cfg.out)?;
    print!("{}", summary(result));
    println!("\nwrote {}", path.display());
    if !result.feasible() {
        return Err(CliError::Infeasible(
            "the best plan found still breaks the network limits".into(),
        ));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate(c) => {
            let cfg = load_config(&c)?;
            let inputs = cfg.inputs()?;
            println!(
                "network {}: {} buses ({} AC, {} DC), {} branches, {} converters, {} sites; {} scenarios",
                inputs.net.name,
                inputs.net.buses.len(),
                inputs.net.n_ac(),
                inputs.net.n_dc(),
                inputs.net.branches.len(),
                inputs.net.vscs.len(),
                inputs.net.placements.len(),
                inputs.scenarios.len()
            );
            Ok(())
        }
        Command::Dispatch {
            common,
            scenario,
            designs,
            relaxed,
        } => {
            let cfg = load_config(&common)?;
            let inputs = cfg.inputs()?;
            let designs = match designs {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| CliError::Io {
                        path: p.display().to_string(),
                        source: e,
                    })?;
                    toml::from_str::<DesignFile>(&text)
                        .map_err(|e| CliError::Format {
                            path: p.display().to_string(),
                            message: e.to_string(),
                        })?
                        .designs
                }
                None => Vec::new(),
            };
            let result = run_dispatch(&cfg, &inputs, &scenario, &designs, relaxed)?;
            finish(&cfg, &result, &format!("dispatch_{scenario}.json"))
        }
        Command::PlanStage1(c) => {
            let cfg = load_config(&c)?;
            let inputs = cfg.inputs()?;
            let result = run_stage1(&cfg, &inputs)?;
            finish(&cfg, &result, "stage1.json")
        }
        Command::PlanStage2 { common, stage1 } => {
            let cfg = load_config(&common)?;
            let inputs = cfg.inputs()?;
            let path = stage1.unwrap_or_else(|| cfg.out.join("stage1.json"));
            if !path.is_file() {
                return Err(CliError::Sequencing(format!(
                    "no stage-1 result at {}; run plan-stage1 first",
                    path.display()
                )));
            }
            let first = PlanResult::load(&path)?;
            let result = run_stage2(&cfg, &inputs, &first)?;
            finish(&cfg, &result, "plan.json")
        }
        Command::Plan(c) => {
            let cfg = load_config(&c)?;
            let inputs = cfg.inputs()?;
            let result = run_plan(&cfg, &inputs)?;
            finish(&cfg, &result, "plan.json")
        }
        Command::Report { result, out } => {
            let r = PlanResult::load(&result)?;
            let dir = out.unwrap_or_else(|| result.parent().map(PathBuf::from).unwrap_or_default());
            for p in write_report(&r, &dir)? {
                println!("wrote {}", p.display());
            }
            print!("{}", summary(&r));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dcs_reserve::experiment::validate::SuiteOptions;
use dcs_reserve::experiment::{
    cmd_eval, cmd_scenario_gen, cmd_sweep, cmd_train, cmd_validate, ExperimentConfig, Setup, SweepAxis,
};
use dcs_reserve::Error;

#[derive(Parser)]
#[command(name = "dcs", about = "District cooling operating-reserve experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the configured learner and write checkpoints and curves.
    Train(Common),
    /// Run the evaluation event and write the trace and summary.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory holding the checkpoints; defaults to the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate over a range of durations or caps.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated values; defaults to the config's list.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Physics and safe-layer self-checks.
    Validate {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        lp_cases: usize,
        /// Scale exchanger duties before the energy audit (mutation check).
        #[arg(long, default_value_t = 1.0)]
        energy_bug: f64,
    },
    /// Scenario utilities.
    Scenario {
        #[command(subcommand)]
        cmd: ScenarioCmd,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// Write a generated profile as CSV.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
    },
}

fn setup(c: &Common) -> Result<(Setup, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| Path::new("runs").join(cfg.controller.name()));
    Ok((Setup::new(cfg)?, out))
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.cmd {
        Cmd::Train(c) => {
            let (s, out) = setup(&c)?;
            let r = cmd_train(&s, &out)?;
            println!(
                "{} seed {}: converged at {:?}, final mean reward {:.4}, max violation {:.3} kW -> {}",
                r.controller,
                r.seed,
                r.reduction.convergence_episode,
                r.reduction.final_mean_reward,
                r.reduction.max_violation_kw,
                out.display()
            );
        }
        Cmd::Eval { common, checkpoint } => {
            let (s, out) = setup(&common)?;
            let ck = checkpoint.unwrap_or_else(|| out.clone());
            let r = cmd_eval(&s, &ck, &out)?;
            println!("controller  max|dT|  >1C  avg|dT|  peak_red_kW  peak_rec_kW  baseline_kW  viol_steps");
            println!(
                "{:<10}  {:>7.3}  {:>3}  {:>7.3}  {:>11.0}  {:>11.0}  {:>11.0}  {:>10}",
                r.controller,
                r.max_abs_dev,
                r.uncomfortable_count,
                r.avg_abs_dev,
                r.peak_power_reduction,
                r.peak_power_recovery.unwrap_or(f64::NAN),
                r.baseline_peak,
                r.violation_steps
            );
        }
        Cmd::Sweep { common, axis, values, checkpoint } => {
            let (s, out) = setup(&common)?;
            let ck = checkpoint.unwrap_or_else(|| out.clone());
            let r = cmd_sweep(&s, axis, values.as_deref(), &ck, &out)?;
            println!("value  cap_kw  max|dT|  mean±sd  max_P_kw  infeasible");
            for row in &r.rows {
                println!(
                    "{:<5}  {:>6.0}  {:>7.3}  {:.3}±{:.3}  {:>8.0}  {}",
                    row.value,
                    row.p_cap_kw,
                    row.max_dev,
                    row.building_max_dev_mean,
                    row.building_max_dev_spread,
                    row.max_power_kw,
                    row.infeasible
                );
            }
        }
        Cmd::Validate { seed, out, lp_cases, energy_bug } => {
            let opts = SuiteOptions { lp_cases, seed, energy_bug, ..SuiteOptions::default() };
            let r = cmd_validate(&opts, out.as_deref())?;
            print!("{}", r.render());
            return Ok(r.passed());
        }
        Cmd::Scenario { cmd: ScenarioCmd::Gen { config, seed, out } } => {
            let cfg = ExperimentConfig::load(&config)?;
            cmd_scenario_gen(&Setup::new(cfg)?, seed, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Checkpoint(_) | Error::ScenarioParse { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

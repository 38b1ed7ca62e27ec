//! File-producing commands. Every output is a function of the config and
//! seed alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sweep::{run_sweep, write_rows, SweepAxis, SweepRow};
use super::validate::{run_suite, SuiteOptions, ValidationReport};
use super::{evaluate, make_controller, train_agent, write_curve, write_json, AgentBundle, Setup};
use crate::agent::{convergence_episode, final_mean, TrainOutcome};
use crate::env::{EpisodeSummary, SUMMARY_SCHEMA_VERSION};
use crate::error::Result;
use crate::scenario::generate;

pub const CONVERGENCE_WINDOW: usize = 50;
pub const FINAL_WINDOW: usize = 100;
pub const CONVERGENCE_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub episodes: usize,
    pub steps: usize,
    /// Zero-based index of the first episode after which the trailing mean
    /// reward stays within tolerance of the final mean.
    pub convergence_episode: Option<usize>,
    pub final_mean_reward: f64,
    pub max_violation_kw: f64,
    pub violating_episodes: usize,
    pub first_violation_episode: Option<usize>,
}

impl StageReport {
    pub fn of(o: &TrainOutcome) -> Self {
        let viol = |v: &&f64| **v > 0.0;
        Self {
            episodes: o.reward_curve.len(),
            steps: o.steps,
            convergence_episode: convergence_episode(&o.reward_curve, CONVERGENCE_WINDOW, FINAL_WINDOW, CONVERGENCE_TOL),
            final_mean_reward: final_mean(&o.reward_curve, FINAL_WINDOW),
            max_violation_kw: o.max_violation_any,
            violating_episodes: o.violation_curve.iter().filter(viol).count(),
            first_violation_episode: o.violation_curve.iter().position(|v| *v > 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema_version: u32,
    pub controller: String,
    pub seed: u64,
    pub reduction: StageReport,
    pub recovery: Option<StageReport>,
}

/// Train, then write the checkpoints, the curves and `train_summary.json`.
pub fn cmd_train(setup: &Setup, out: &Path) -> Result<TrainReport> {
    std::fs::create_dir_all(out)?;
    let agent = train_agent(setup, setup.cfg.seed)?;
    agent.bundle().save(out)?;
    write_curve(&out.join("reward_curve.csv"), "reward", &agent.reduction.reward_curve)?;
    write_curve(&out.join("violation_curve.csv"), "max_violation_kw", &agent.reduction.violation_curve)?;
    if let Some(r) = &agent.recovery {
        write_curve(&out.join("recovery_reward_curve.csv"), "reward", &r.reward_curve)?;
        write_curve(&out.join("recovery_violation_curve.csv"), "max_violation_kw", &r.violation_curve)?;
    }
    let report = TrainReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        controller: setup.cfg.controller.name().into(),
        seed: setup.cfg.seed,
        reduction: StageReport::of(&agent.reduction),
        recovery: agent.recovery.as_ref().map(StageReport::of),
    };
    write_json(&out.join("train_summary.json"), &report)?;
    write_json(&out.join("config.json"), &setup.cfg)?;
    Ok(report)
}

fn load_bundle(setup: &Setup, checkpoint: &Path) -> Result<Option<AgentBundle>> {
    if setup.cfg.controller.is_learned() {
        Ok(Some(AgentBundle::load(checkpoint, &setup.plant)?))
    } else {
        Ok(None)
    }
}

/// Run the evaluation event; writes `trace.csv` and `eval_summary.json`.
pub fn cmd_eval(setup: &Setup, checkpoint: &Path, out: &Path) -> Result<EpisodeSummary> {
    let bundle = load_bundle(setup, checkpoint)?;
    let mut ctl = make_controller(setup, bundle.as_ref())?;
    let trace = evaluate(setup, ctl.as_mut(), setup.episode())?;
    std::fs::create_dir_all(out)?;
    trace.write_csv(&out.join("trace.csv"))?;
    let summary = trace.summary();
    write_json(&out.join("eval_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub controller: String,
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

/// Sweep one axis; values default to the config's list for that axis.
pub fn cmd_sweep(
    setup: &Setup,
    axis: SweepAxis,
    values: Option<&[f64]>,
    checkpoint: &Path,
    out: &Path,
) -> Result<SweepReport> {
    let bundle = load_bundle(setup, checkpoint)?;
    let values = values.unwrap_or(match axis {
        SweepAxis::Duration => &setup.cfg.sweep.durations_min,
        SweepAxis::PowerCap => &setup.cfg.sweep.cap_fracs,
    });
    let rows = run_sweep(setup, bundle.as_ref(), axis, values)?;
    std::fs::create_dir_all(out)?;
    let stem = match axis {
        SweepAxis::Duration => "sweep_duration",
        SweepAxis::PowerCap => "sweep_power_cap",
    };
    write_rows(&out.join(format!("{stem}.csv")), &rows)?;
    let report = SweepReport {
        schema_version: SUMMARY_SCHEMA_VERSION,
        controller: setup.cfg.controller.name().into(),
        axis,
        rows,
    };
    write_json(&out.join(format!("{stem}.json")), &report)?;
    Ok(report)
}

pub fn cmd_validate(opts: &SuiteOptions, out: Option<&Path>) -> Result<ValidationReport> {
    let report = run_suite(opts)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("validation.json"), &report)?;
    }
    Ok(report)
}

/// Write the generated profile for `seed` as CSV.
pub fn cmd_scenario_gen(setup: &Setup, seed: u64, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    generate(seed, &setup.generator)?.save_csv(path)
}

//! Episode rollouts and their per-step records.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{DcsEnv, EpisodeStart, Stage, StepInfo};
use crate::error::Result;
use crate::safelayer::ProjectionStatus;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Anything that can drive the environment through one control interval.
pub trait Controller {
    fn name(&self) -> String;

    /// Called when a stage begins, before its first interval.
    fn begin_stage(&mut self, _env: &DcsEnv) {}

    fn control(&mut self, env: &mut DcsEnv) -> Result<StepInfo>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Seconds since the event start.
    pub time_s: f64,
    pub stage: Stage,
    pub p_ch_kw: f64,
    pub p_cap_kw: f64,
    pub reward: f64,
    pub violation_kw: f64,
    pub projection: Option<ProjectionStatus>,
    pub delta_t: Vec<f64>,
    pub m_primary: Vec<f64>,
    pub m_wind: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub controller: String,
    /// Power at the event start, kW.
    pub p_t0: f64,
    pub baseline_peak: f64,
    pub p_cap: f64,
    pub p_bar: f64,
    /// Minimum-flow power at the event start, kW.
    pub min_power_t0: f64,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub schema_version: u32,
    pub controller: String,
    /// Largest `|ΔT|` over buildings and steps, °C.
    pub max_abs_dev: f64,
    pub max_abs_dev_per_building: Vec<f64>,
    /// Buildings whose `|ΔT|` exceeded 1 °C at some step.
    pub uncomfortable_count: usize,
    /// Mean `|ΔT|` over buildings and steps, °C.
    pub avg_abs_dev: f64,
    pub p_t0: f64,
    pub baseline_peak: f64,
    pub p_cap: f64,
    pub p_bar: f64,
    pub peak_power_reduction: f64,
    pub peak_power_recovery: Option<f64>,
    pub violation_steps: usize,
    pub max_violation_kw: f64,
    pub infeasible_steps: usize,
    pub return_reduction: f64,
    pub return_recovery: Option<f64>,
}

/// Uncomfortable means a deviation beyond this many °C.
pub const COMFORT_BAND: f64 = 1.0;

impl EpisodeTrace {
    pub fn stage_records(&self, stage: Stage) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(move |r| r.stage == stage)
    }

    pub fn rewards(&self, stage: Stage) -> Vec<f64> {
        self.stage_records(stage).map(|r| r.reward).collect()
    }

    pub fn summary(&self) -> EpisodeSummary {
        let n_b = self.records.first().map_or(0, |r| r.delta_t.len());
        let mut per_b = vec![0.0_f64; n_b];
        let mut sum_abs = 0.0;
        let mut count = 0usize;
        for r in &self.records {
            for (i, d) in r.delta_t.iter().enumerate() {
                per_b[i] = per_b[i].max(d.abs());
                sum_abs += d.abs();
                count += 1;
            }
        }
        let peak = |s: Stage| {
            self.stage_records(s).map(|r| r.p_ch_kw).fold(None, |a: Option<f64>, p| {
                Some(a.map_or(p, |a| a.max(p)))
            })
        };
        let has_recovery = self.stage_records(Stage::Recovery).next().is_some();
        EpisodeSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            controller: self.controller.clone(),
            max_abs_dev: per_b.iter().cloned().fold(0.0, f64::max),
            uncomfortable_count: per_b.iter().filter(|d| **d > COMFORT_BAND).count(),
            max_abs_dev_per_building: per_b,
            avg_abs_dev: if count > 0 { sum_abs / count as f64 } else { 0.0 },
            p_t0: self.p_t0,
            baseline_peak: self.baseline_peak,
            p_cap: self.p_cap,
            p_bar: self.p_bar,
            peak_power_reduction: peak(Stage::Reduction).unwrap_or(f64::NAN),
            peak_power_recovery: peak(Stage::Recovery),
            violation_steps: self.records.iter().filter(|r| r.violation_kw > 0.0).count(),
            max_violation_kw: self.records.iter().map(|r| r.violation_kw).fold(0.0, f64::max),
            infeasible_steps: self
                .records
                .iter()
                .filter(|r| r.projection == Some(ProjectionStatus::Infeasible))
                .count(),
            return_reduction: self.rewards(Stage::Reduction).iter().sum(),
            return_recovery: has_recovery.then(|| self.rewards(Stage::Recovery).iter().sum()),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n_b = self.records.first().map_or(0, |r| r.delta_t.len());
        let mut header: Vec<String> =
            ["step", "time_s", "p_ch_kw", "p_cap_kw", "reward"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=n_b).map(|i| format!("dt_b{i:02}")));
        header.extend((1..=n_b).map(|i| format!("m_b{i:02}")));
        header.extend((1..=n_b).map(|i| format!("mw_b{i:02}")));
        header.extend(["stage", "violation_kw", "projection"].iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.step.to_string(),
                r.time_s.to_string(),
                r.p_ch_kw.to_string(),
                r.p_cap_kw.to_string(),
                r.reward.to_string(),
            ];
            row.extend(r.delta_t.iter().map(|v| v.to_string()));
            row.extend(r.m_primary.iter().map(|v| v.to_string()));
            row.extend(r.m_wind.iter().map(|v| v.to_string()));
            row.push(match r.stage {
                Stage::Reduction => "reduction".into(),
                Stage::Recovery => "recovery".into(),
            });
            row.push(r.violation_kw.to_string());
            row.push(match r.projection {
                None => String::new(),
                Some(s) => serde_json::to_value(s)?.as_str().unwrap_or_default().to_string(),
            });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_stage(
    env: &mut DcsEnv,
    ctl: &mut dyn Controller,
    records: &mut Vec<StepRecord>,
) -> Result<()> {
    ctl.begin_stage(env);
    let stage = env.stage();
    while !env.done() {
        let info = ctl.control(env)?;
        let s = env.state();
        records.push(StepRecord {
            step: records.len() + 1,
            time_s: env.event_time(),
            stage,
            p_ch_kw: info.p_chiller,
            p_cap_kw: info.p_cap,
            reward: info.transition.reward,
            violation_kw: info.violation,
            projection: info.projection,
            delta_t: info.transition.next_obs.delta_t.clone(),
            m_primary: s.m_primary.clone(),
            m_wind: s.m_wind.clone(),
        });
    }
    Ok(())
}

/// Run one event from `start`: the reduction stage and, if asked, the
/// recovery stage.
pub fn rollout(
    env: &mut DcsEnv,
    ctl: &mut dyn Controller,
    start: &EpisodeStart,
    with_recovery: bool,
) -> Result<EpisodeTrace> {
    env.reset_from(start)?;
    let p_t0 = env.state().p_chiller;
    let min_power_t0 = env.plant().min_power(env.state());
    let mut records = Vec::with_capacity(env.cfg().steps_reduction() + env.cfg().steps_recovery());
    run_stage(env, ctl, &mut records)?;
    if with_recovery {
        env.start_recovery()?;
        run_stage(env, ctl, &mut records)?;
    }
    Ok(EpisodeTrace {
        controller: ctl.name(),
        p_t0,
        baseline_peak: env.baseline_peak(),
        p_cap: env.cfg().p_cap,
        p_bar: env.p_bar(),
        min_power_t0,
        records,
    })
}

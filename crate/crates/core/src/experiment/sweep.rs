//! One-parameter sensitivity sweeps over the event settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate, make_controller, AgentBundle, Setup};
use crate::env::{EpisodeSummary, EpisodeTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Reduction-stage length, min.
    Duration,
    /// Cap as a fraction of the event-start power.
    PowerCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub p_cap_kw: f64,
    /// Power with every building at its minimum flow at the event start, kW.
    pub min_power_kw: f64,
    /// The cap lies below the minimum-flow power.
    pub infeasible: bool,
    pub infeasible_steps: usize,
    pub max_dev: f64,
    /// Mean and standard deviation over buildings of each building's largest `|ΔT|`.
    pub building_max_dev_mean: f64,
    pub building_max_dev_spread: f64,
    pub uncomfortable_count: usize,
    pub max_power_kw: f64,
    /// `max(0, P − cap)` after the first interval, kW.
    pub first_violation_kw: f64,
    pub max_violation_kw: f64,
    pub peak_power_recovery_kw: Option<f64>,
}

impl SweepRow {
    pub fn from_trace(value: f64, trace: &EpisodeTrace, s: &EpisodeSummary) -> Self {
        let per = &s.max_abs_dev_per_building;
        let n = per.len().max(1) as f64;
        let mean = per.iter().sum::<f64>() / n;
        let var = per.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        Self {
            value,
            p_cap_kw: trace.p_cap,
            min_power_kw: trace.min_power_t0,
            infeasible: trace.p_cap < trace.min_power_t0,
            infeasible_steps: s.infeasible_steps,
            max_dev: s.max_abs_dev,
            building_max_dev_mean: mean,
            building_max_dev_spread: var.sqrt(),
            uncomfortable_count: s.uncomfortable_count,
            max_power_kw: trace.records.iter().map(|r| r.p_ch_kw).fold(f64::NEG_INFINITY, f64::max),
            first_violation_kw: trace.records.first().map_or(0.0, |r| r.violation_kw),
            max_violation_kw: s.max_violation_kw,
            peak_power_recovery_kw: s.peak_power_recovery,
        }
    }
}

/// Evaluate the configured controller once per value; values must be
/// strictly increasing.
pub fn run_sweep(
    setup: &Setup,
    bundle: Option<&AgentBundle>,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() || values.windows(2).any(|w| !(w[0] < w[1])) || values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Config("sweep values must be positive and strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut s = setup.clone();
        match axis {
            SweepAxis::Duration => s.cfg.event.duration_min = v,
            SweepAxis::PowerCap => {
                s.cfg.event.cap_frac = v;
                s.cfg.event.p_cap_kw = None;
            }
        }
        s.cfg.validate()?;
        let mut ctl = make_controller(&s, bundle)?;
        let trace = evaluate(&s, ctl.as_mut(), s.episode())?;
        rows.push(SweepRow::from_trace(v, &trace, &trace.summary()));
    }
    Ok(rows)
}

pub fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

//! The plant wrapped as a constrained decision process with a power-reduction
//! stage followed by a recovery stage.

pub mod reward;
pub mod trace;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::power_penalty;
use crate::error::{Error, Result};
use crate::safelayer::{project, ProjectionStatus, SafeContext};
use crate::scenario::ScenarioProfile;
use crate::thermal::{Plant, PlantState};

pub use reward::{adaptive_factor, discounted_return, reward_recovery, reward_reduction};
pub use trace::{rollout, Controller, EpisodeSummary, EpisodeTrace, StepRecord, SUMMARY_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Reduction,
    Recovery,
}

/// Event timing (seconds of the scenario day) and reward settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
    /// kW
    pub p_cap: f64,
    /// Recovery cap, kW. Defaults to the power measured at `t0`.
    #[serde(default)]
    pub p_bar: Option<f64>,
    pub lambda: f64,
    pub theta_r: f64,
    pub gamma: f64,
    /// s
    pub dt_control: f64,
    /// Normal operation simulated before `t0`, s.
    pub preroll: f64,
}

impl EpisodeConfig {
    /// A reserve call at 14:00 lasting 15 min, followed by 45 min of recovery.
    pub fn afternoon(p_cap: f64) -> Self {
        let t0 = 14.0 * 3600.0;
        Self {
            t0,
            t1: t0 + 900.0,
            t2: t0 + 900.0 + 2700.0,
            p_cap,
            p_bar: None,
            lambda: 6.0,
            theta_r: 0.01,
            gamma: 0.9,
            dt_control: 60.0,
            preroll: 5400.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("episode: {m}")));
        if !(self.t0 < self.t1 && self.t1 < self.t2) {
            return bad("require t0 < t1 < t2");
        }
        if !(self.p_cap > 0.0) || self.p_bar.is_some_and(|p| !(p > 0.0)) {
            return bad("caps must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.dt_control > 0.0 && self.preroll >= 0.0 && self.preroll < self.t0) {
            return bad("dt_control must be positive and the pre-roll must fit before t0");
        }
        for (name, span) in [("reduction", self.t1 - self.t0), ("recovery", self.t2 - self.t1)] {
            let k = span / self.dt_control;
            if (k - k.round()).abs() > 1e-9 {
                return bad(&format!("{name} span is not a multiple of dt_control"));
            }
        }
        Ok(())
    }

    pub fn steps_reduction(&self) -> usize {
        ((self.t1 - self.t0) / self.dt_control).round() as usize
    }

    pub fn steps_recovery(&self) -> usize {
        ((self.t2 - self.t1) / self.dt_control).round() as usize
    }

    pub fn steps(&self, stage: Stage) -> usize {
        match stage {
            Stage::Reduction => self.steps_reduction(),
            Stage::Recovery => self.steps_recovery(),
        }
    }
}

/// Excess over the cap below this fraction of the cap is rounding, not a
/// violation.
pub const VIOLATION_RTOL: f64 = 1e-9;

/// Which reward the environment pays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RewardKind {
    /// Stage comfort reward only; the cap is enforced by the safe layer.
    Comfort,
    /// Stage comfort reward minus `θ^p·|P − cap| / base_power`.
    Penalty {
        theta_p: f64,
        /// Defaults to the active cap.
        #[serde(default)]
        base_power: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// `P^ch − P^cap`, kW.
    pub delta_p: f64,
    pub m_primary: Vec<f64>,
    pub t_i_return: Vec<f64>,
    /// `T^A − T^set`, °C.
    pub delta_t: Vec<f64>,
}

impl Observation {
    pub fn dim(n_buildings: usize) -> usize {
        3 * n_buildings + 1
    }

    /// Flattened as `[ΔP, m…, T^I,r…, ΔT…]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::dim(self.m_primary.len()));
        v.push(self.delta_p);
        v.extend_from_slice(&self.m_primary);
        v.extend_from_slice(&self.t_i_return);
        v.extend_from_slice(&self.delta_t);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlAction {
    /// kg/s per building
    pub delta_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    /// The executed change, after box clamping and any projection.
    pub action: ControlAction,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub transition: Transition,
    /// Power at the end of the interval, kW.
    pub p_chiller: f64,
    /// Cap active during the interval, kW.
    pub p_cap: f64,
    /// `max(0, P − cap)` in kW, zero within [`VIOLATION_RTOL`] of the cap.
    pub violation: f64,
    /// Outcome of the safe layer, when it was applied.
    pub projection: Option<ProjectionStatus>,
}

/// Supply-temperature valve loop that runs each building in normal operation.
#[derive(Debug, Clone)]
pub struct NormalOperation {
    /// Flow change per °C of supply error, as a fraction of `m_max`.
    pub kp_frac: f64,
    /// Flow change per °C·s of supply error, as a fraction of `m_max`.
    pub ki_frac: f64,
    err: Vec<f64>,
}

impl NormalOperation {
    pub fn new(n: usize) -> Self {
        Self {
            kp_frac: 0.05,
            ki_frac: 0.05 / 240.0,
            err: vec![0.0; n],
        }
    }

    pub fn flows(&mut self, state: &PlantState, plant: &Plant, dt: f64) -> Vec<f64> {
        plant
            .buildings
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let e = state.t_ii_supply[i] - b.t_ii_supply_set;
                let dm = b.m_max * (self.kp_frac * (e - self.err[i]) + self.ki_frac * e * dt);
                self.err[i] = e;
                (state.m_primary[i] + dm).clamp(b.m_min, b.m_max)
            })
            .collect()
    }
}

/// Plant condition at the start of an event, produced by the pre-roll.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStart {
    pub state: PlantState,
    /// Highest power seen during the pre-roll, kW.
    pub baseline_peak: f64,
    /// Shift of the event relative to the configured `t0`, s.
    pub offset: f64,
}

pub struct DcsEnv {
    plant: Plant,
    profile: Arc<ScenarioProfile>,
    cfg: EpisodeConfig,
    reward: RewardKind,
    state: PlantState,
    stage: Stage,
    step_idx: usize,
    done: bool,
    offset: f64,
    p_bar: f64,
    baseline_peak: f64,
    delta_t_t1: Vec<f64>,
}

impl DcsEnv {
    pub fn new(
        plant: Plant,
        profile: Arc<ScenarioProfile>,
        cfg: EpisodeConfig,
        reward: RewardKind,
    ) -> Result<Self> {
        cfg.validate()?;
        if profile.n_buildings() != plant.n() {
            return Err(Error::Config(format!(
                "scenario has {} buildings, plant has {}",
                profile.n_buildings(),
                plant.n()
            )));
        }
        let env = Self {
            state: plant.design_state(&profile.sample(cfg.t0))?,
            plant,
            profile,
            cfg,
            reward,
            stage: Stage::Reduction,
            step_idx: 0,
            done: true,
            offset: 0.0,
            p_bar: 0.0,
            baseline_peak: 0.0,
            delta_t_t1: Vec::new(),
        };
        env.check_horizon(0.0)?;
        Ok(env)
    }

    fn check_horizon(&self, offset: f64) -> Result<()> {
        let end = self.cfg.t2 + offset;
        let start = self.cfg.t0 + offset - self.cfg.preroll;
        if start < 0.0 || end > self.profile.horizon + 1e-9 {
            return Err(Error::Config(format!(
                "event window [{start}, {end}] s is not covered by the scenario horizon {} s",
                self.profile.horizon
            )));
        }
        Ok(())
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn cfg(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn profile(&self) -> &Arc<ScenarioProfile> {
        &self.profile
    }

    pub fn reward_kind(&self) -> RewardKind {
        self.reward
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn step_index(&self) -> usize {
        self.step_idx
    }

    pub fn p_bar(&self) -> f64 {
        self.p_bar
    }

    pub fn baseline_peak(&self) -> f64 {
        self.baseline_peak
    }

    /// Deviations recorded when the recovery stage began.
    pub fn delta_t_at_t1(&self) -> &[f64] {
        &self.delta_t_t1
    }

    /// Seconds since the configured `t0` of the current event.
    pub fn event_time(&self) -> f64 {
        self.state.time - self.offset - self.cfg.t0
    }

    pub fn set_profile(&mut self, profile: Arc<ScenarioProfile>) -> Result<()> {
        if profile.n_buildings() != self.plant.n() {
            return Err(Error::Config("scenario building count mismatch".into()));
        }
        self.profile = profile;
        self.check_horizon(self.offset)
    }

    /// Replace the reduction cap and the optional fixed recovery cap; takes
    /// effect at the next reset.
    pub fn set_caps(&mut self, p_cap: f64, p_bar: Option<f64>) -> Result<()> {
        let mut cfg = self.cfg.clone();
        cfg.p_cap = p_cap;
        cfg.p_bar = p_bar;
        cfg.validate()?;
        self.cfg = cfg;
        Ok(())
    }

    pub fn active_cap(&self) -> f64 {
        match self.stage {
            Stage::Reduction => self.cfg.p_cap,
            Stage::Recovery => self.p_bar,
        }
    }

    /// Simulate normal operation up to the event start shifted by `offset`.
    pub fn preroll(&self, offset: f64) -> Result<EpisodeStart> {
        self.check_horizon(offset)?;
        let dt = self.cfg.dt_control;
        let start = self.cfg.t0 + offset - self.cfg.preroll;
        let mut state = self.plant.design_state(&self.profile.sample(start))?;
        state.time = start;
        let mut ctl = NormalOperation::new(self.plant.n());
        let mut peak = state.p_chiller;
        let n = (self.cfg.preroll / dt).round() as usize;
        for _ in 0..n {
            let m = ctl.flows(&state, &self.plant, dt);
            state = self.plant.step(&state, &m, &self.profile.sample(state.time), dt)?;
            peak = peak.max(state.p_chiller);
        }
        Ok(EpisodeStart {
            state,
            baseline_peak: peak,
            offset,
        })
    }

    pub fn reset(&mut self) -> Result<Observation> {
        let start = self.preroll(0.0)?;
        self.reset_from(&start)
    }

    /// Begin the reduction stage from a pre-rolled state.
    pub fn reset_from(&mut self, start: &EpisodeStart) -> Result<Observation> {
        self.state = start.state.clone();
        self.offset = start.offset;
        self.baseline_peak = start.baseline_peak;
        self.p_bar = self.cfg.p_bar.unwrap_or(self.state.p_chiller);
        self.stage = Stage::Reduction;
        self.step_idx = 0;
        self.done = false;
        self.delta_t_t1.clear();
        Ok(self.observe())
    }

    /// Switch to the recovery stage once the reduction stage is complete.
    pub fn start_recovery(&mut self) -> Result<Observation> {
        if self.stage != Stage::Reduction || !self.done {
            return Err(Error::Config("recovery starts after a finished reduction stage".into()));
        }
        self.delta_t_t1 = self.state.delta_t(&self.plant.buildings);
        self.stage = Stage::Recovery;
        self.step_idx = 0;
        self.done = false;
        Ok(self.observe())
    }

    pub fn observe(&self) -> Observation {
        Observation {
            delta_p: self.state.p_chiller - self.active_cap(),
            m_primary: self.state.m_primary.clone(),
            t_i_return: self.state.t_i_return.clone(),
            delta_t: self.state.delta_t(&self.plant.buildings),
        }
    }

    pub fn safe_context(&self) -> SafeContext {
        SafeContext {
            theta: self.plant.theta(&self.state),
            p_cap_active: self.active_cap(),
            m_now: self.state.m_primary.clone(),
            m_min: self.plant.m_min(),
            m_max: self.plant.m_max(),
        }
    }

    fn stage_reward(&self, delta_t: &[f64], p_next: f64) -> f64 {
        let comfort = match self.stage {
            Stage::Reduction => reward_reduction(delta_t, self.cfg.theta_r),
            Stage::Recovery => {
                let t = self.event_time() + self.cfg.t0;
                let phi: Vec<f64> = self
                    .delta_t_t1
                    .iter()
                    .map(|d| adaptive_factor(*d, t, self.cfg.t1, self.cfg.t2, self.cfg.lambda))
                    .collect();
                reward_recovery(delta_t, &phi)
            }
        };
        match self.reward {
            RewardKind::Comfort => comfort,
            RewardKind::Penalty { theta_p, base_power } => {
                let cap = self.active_cap();
                comfort - power_penalty(p_next, cap, theta_p, base_power.unwrap_or(cap))
            }
        }
    }

    /// Apply a flow change for one control interval. With `shield` the
    /// change is passed through the safe layer first; otherwise it is only
    /// clamped to the flow box.
    pub fn step(&mut self, action: &ControlAction, shield: bool) -> Result<StepInfo> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let n = self.plant.n();
        if action.delta_m.len() != n {
            return Err(Error::Config(format!(
                "action has {} components for {n} buildings",
                action.delta_m.len()
            )));
        }
        let ctx = self.safe_context();
        let (m_next, status) = if shield {
            let p = project(&action.delta_m, &ctx);
            (p.m_next, Some(p.status))
        } else {
            let m = ctx
                .m_now
                .iter()
                .zip(&action.delta_m)
                .enumerate()
                .map(|(i, (m, d))| (m + d).clamp(ctx.m_min[i], ctx.m_max[i]))
                .collect();
            (m, None)
        };
        let dt = self.cfg.dt_control;
        self.advance(dt, &mut |_, _| m_next.clone(), dt, status)
    }

    /// Drive one control interval with flows chosen every `decision_dt`
    /// seconds by `policy`, bypassing the safe layer.
    pub fn step_with(
        &mut self,
        decision_dt: f64,
        policy: &mut dyn FnMut(&PlantState, &SafeContext) -> Vec<f64>,
    ) -> Result<StepInfo> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        self.advance(decision_dt, policy, self.cfg.dt_control, None)
    }

    fn advance(
        &mut self,
        decision_dt: f64,
        policy: &mut dyn FnMut(&PlantState, &SafeContext) -> Vec<f64>,
        span: f64,
        status: Option<ProjectionStatus>,
    ) -> Result<StepInfo> {
        let obs = self.observe();
        let m_start = self.state.m_primary.clone();
        let k = (span / decision_dt).round() as usize;
        if k == 0 || (k as f64 * decision_dt - span).abs() > 1e-9 * span {
            return Err(Error::Config("decision interval must divide the control interval".into()));
        }
        for _ in 0..k {
            let ctx = self.safe_context();
            let m = policy(&self.state, &ctx);
            let m: Vec<f64> =
                m.iter().enumerate().map(|(i, v)| v.clamp(ctx.m_min[i], ctx.m_max[i])).collect();
            let sample = self.profile.sample(self.state.time);
            self.state = self.plant.step(&self.state, &m, &sample, decision_dt)?;
        }
        self.step_idx += 1;
        self.done = self.step_idx >= self.cfg.steps(self.stage);
        let delta_t = self.state.delta_t(&self.plant.buildings);
        let p = self.state.p_chiller;
        let reward = self.stage_reward(&delta_t, p);
        let cap = self.active_cap();
        let action = ControlAction {
            delta_m: self.state.m_primary.iter().zip(&m_start).map(|(a, b)| a - b).collect(),
        };
        Ok(StepInfo {
            transition: Transition {
                obs,
                action,
                reward,
                next_obs: self.observe(),
                done: self.done,
            },
            p_chiller: p,
            p_cap: cap,
            violation: if p - cap > VIOLATION_RTOL * cap { p - cap } else { 0.0 },
            projection: status,
        })
    }
}

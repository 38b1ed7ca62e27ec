//! Reference controllers: the proportional-integral scheme and the
//! penalty-reward variant of the learned controller.

use serde::{Deserialize, Serialize};

use crate::env::{reward_reduction, Controller, ControlAction, DcsEnv, Stage, StepInfo};
use crate::error::{Error, Result};
use crate::thermal::Plant;

/// `θ^p·|P − P^cap| / base_power`.
pub fn power_penalty(p_next: f64, p_cap: f64, theta_p: f64, base_power: f64) -> f64 {
    theta_p * (p_next - p_cap).abs() / base_power
}

/// Comfort reward of the reduction stage minus the power-gap penalty.
pub fn penalty_reward(
    next_delta_t: &[f64],
    p_next: f64,
    p_cap: f64,
    theta_r: f64,
    theta_p: f64,
    base_power: f64,
) -> f64 {
    reward_reduction(next_delta_t, theta_r) - power_penalty(p_next, p_cap, theta_p, base_power)
}

/// Gains of the plant-level and building-level loops.
///
/// The plant loop acts on the power trend and the cap excess, both converted
/// to flow through the current power-per-flow ratio, so its gains are
/// dimensionless (`p_ch_gain`) and per second (`i_ch_gain`). Building gains
/// are in kg/s per °C and kg/s per °C·s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiConfig {
    pub p_ch_gain: f64,
    pub i_ch_gain: f64,
    pub p_building: Vec<f64>,
    pub i_building: Vec<f64>,
    /// Interval between controller decisions, s.
    pub decision_dt: f64,
}

impl PiConfig {
    /// Building gains scaled with each building's flow range.
    pub fn for_plant(plant: &Plant, p_frac: f64, i_frac: f64) -> Self {
        Self {
            p_ch_gain: 0.2,
            i_ch_gain: 0.02,
            p_building: plant.buildings.iter().map(|b| p_frac * b.m_max).collect(),
            i_building: plant.buildings.iter().map(|b| i_frac * b.m_max).collect(),
            decision_dt: 1.0,
        }
    }

    pub fn default_for(plant: &Plant) -> Self {
        Self::for_plant(plant, DEFAULT_P_FRAC, DEFAULT_I_FRAC)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.p_building.len() != n || self.i_building.len() != n {
            return Err(Error::Config(format!("pi: need {n} building gains")));
        }
        let all = [self.p_ch_gain, self.i_ch_gain]
            .into_iter()
            .chain(self.p_building.iter().copied())
            .chain(self.i_building.iter().copied());
        if all.into_iter().any(|g| !g.is_finite()) || !(self.decision_dt > 0.0) {
            return Err(Error::Config("pi: gains must be finite and decision_dt positive".into()));
        }
        Ok(())
    }

    /// Plant-level gains in force during `stage`.
    pub fn plant_gains(&self, stage: Stage) -> (f64, f64) {
        match stage {
            Stage::Reduction => (self.p_ch_gain, self.i_ch_gain),
            Stage::Recovery => (0.0, 0.0),
        }
    }
}

/// Building trend gain as a fraction of `m_max`, per °C.
pub const DEFAULT_P_FRAC: f64 = 0.02;
/// Building integral gain as a fraction of `m_max`, per °C·s.
pub const DEFAULT_I_FRAC: f64 = 0.0003;

/// Measurements the PI law differences against.
#[derive(Debug, Clone, PartialEq)]
pub struct PiMemory {
    pub p_prev: f64,
    pub t_indoor_prev: Vec<f64>,
}

/// Flow changes of one PI decision for the given measurements.
#[allow(clippy::too_many_arguments)]
pub fn pi_step(
    cfg: &PiConfig,
    stage: Stage,
    p_now: f64,
    p_cap: f64,
    theta: f64,
    m_now: &[f64],
    t_indoor: &[f64],
    t_set: &[f64],
    mem: &PiMemory,
) -> ControlAction {
    let dt = cfg.decision_dt;
    let (kp, ki) = cfg.plant_gains(stage);
    let dm_ch = if kp == 0.0 && ki == 0.0 {
        0.0
    } else {
        -(kp * (p_now - mem.p_prev) + ki * dt * (p_now - p_cap)) / theta
    };
    let total: f64 = m_now.iter().sum();
    let delta_m = (0..m_now.len())
        .map(|i| {
            cfg.p_building[i] * (t_indoor[i] - mem.t_indoor_prev[i])
                + cfg.i_building[i] * (t_indoor[i] - t_set[i]) * dt
                + m_now[i] * dm_ch / total
        })
        .collect();
    ControlAction { delta_m }
}

pub struct PiController {
    pub cfg: PiConfig,
    mem: Option<PiMemory>,
}

impl PiController {
    pub fn new(cfg: PiConfig) -> Self {
        Self { cfg, mem: None }
    }
}

impl Controller for PiController {
    fn name(&self) -> String {
        "pi".into()
    }

    fn begin_stage(&mut self, env: &DcsEnv) {
        if env.stage() == Stage::Reduction {
            self.mem = None;
        }
    }

    fn control(&mut self, env: &mut DcsEnv) -> Result<StepInfo> {
        let stage = env.stage();
        let t_set: Vec<f64> = env.plant().buildings.iter().map(|b| b.t_set).collect();
        let cfg = self.cfg.clone();
        let mem = &mut self.mem;
        env.step_with(cfg.decision_dt, &mut |state, ctx| {
            let m = mem.get_or_insert_with(|| PiMemory {
                p_prev: state.p_chiller,
                t_indoor_prev: state.t_indoor.clone(),
            });
            let a = pi_step(
                &cfg,
                stage,
                state.p_chiller,
                ctx.p_cap_active,
                ctx.theta,
                &state.m_primary,
                &state.t_indoor,
                &t_set,
                m,
            );
            m.p_prev = state.p_chiller;
            m.t_indoor_prev.clone_from(&state.t_indoor);
            state.m_primary.iter().zip(&a.delta_m).map(|(m, d)| m + d).collect()
        })
    }
}

/// Holds the flows where they are, optionally through the safe layer.
pub struct HoldController {
    pub shield: bool,
}

impl Controller for HoldController {
    fn name(&self) -> String {
        if self.shield { "hold-shielded".into() } else { "hold".into() }
    }

    fn control(&mut self, env: &mut DcsEnv) -> Result<StepInfo> {
        let n = env.plant().n();
        env.step(&ControlAction { delta_m: vec![0.0; n] }, self.shield)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(n: usize) -> PiConfig {
        PiConfig {
            p_ch_gain: 0.2,
            i_ch_gain: 0.02,
            p_building: vec![10.0; n],
            i_building: vec![0.5; n],
            decision_dt: 1.0,
        }
    }

    #[test]
    fn zero_errors_give_zero_action() {
        let mem = PiMemory { p_prev: 5000.0, t_indoor_prev: vec![22.0, 21.0] };
        let a = pi_step(&cfg(2), Stage::Reduction, 5000.0, 5000.0, 7.0, &[300.0, 400.0], &[22.0, 21.0], &[22.0, 21.0], &mem);
        assert_eq!(a.delta_m, vec![0.0, 0.0]);
    }

    #[test]
    fn uniform_buildings_share_equally() {
        let mem = PiMemory { p_prev: 5000.0, t_indoor_prev: vec![22.0; 3] };
        let a = pi_step(&cfg(3), Stage::Reduction, 5600.0, 5000.0, 7.0, &[300.0; 3], &[22.0; 3], &[22.0; 3], &mem);
        assert!(a.delta_m.iter().all(|d| *d < 0.0));
        assert_eq!(a.delta_m[0], a.delta_m[1]);
        assert_eq!(a.delta_m[1], a.delta_m[2]);
        let total: f64 = a.delta_m.iter().sum();
        assert_relative_eq!(total, -(0.2 * 600.0 + 0.02 * 600.0) / 7.0, max_relative = 1e-12);
    }

    #[test]
    fn recovery_zeroes_plant_loop() {
        let c = cfg(2);
        assert_eq!(c.plant_gains(Stage::Recovery), (0.0, 0.0));
        let mem = PiMemory { p_prev: 4000.0, t_indoor_prev: vec![22.0, 21.0] };
        let a = pi_step(&c, Stage::Recovery, 9000.0, 5000.0, 7.0, &[300.0, 400.0], &[22.0, 21.0], &[22.0, 21.0], &mem);
        assert_eq!(a.delta_m, vec![0.0, 0.0]);
    }

    #[test]
    fn penalty_examples() {
        let base = reward_reduction(&[0.3, -0.2], 0.01);
        assert_eq!(penalty_reward(&[0.3, -0.2], 7000.0, 7000.0, 0.01, 0.05, 7000.0), base);
        assert_relative_eq!(penalty_reward(&[0.0, 0.0], 17_000.0, 7000.0, 0.01, 0.05, 1.0), -500.0, max_relative = 1e-12);
        assert_eq!(
            penalty_reward(&[0.1], 7100.0, 7000.0, 0.01, 0.05, 7000.0),
            penalty_reward(&[0.1], 6900.0, 7000.0, 0.01, 0.05, 7000.0)
        );
    }
}

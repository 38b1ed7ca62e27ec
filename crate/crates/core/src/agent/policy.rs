//! Mapping between physical quantities and network coordinates, and the
//! trained actor packaged as a controller.

use serde::{Deserialize, Serialize};

use super::nn::Mlp;
use crate::env::{ControlAction, Controller, DcsEnv, Observation, Stage, StepInfo};
use crate::error::{Error, Result};
use crate::thermal::Plant;

/// Affine map of each observation field from `[lo, hi]` onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Normalizer {
    /// Ranges from the plant limits. `p_span` is the half-width of the
    /// power-gap range, kW; deviations are scaled over ±`dt_span` °C.
    pub fn for_plant(plant: &Plant, p_span: f64, dt_span: f64) -> Self {
        let n = plant.n();
        let t_s = plant.params.t_ch_supply;
        let mut lo = vec![-p_span];
        let mut hi = vec![p_span];
        lo.extend(plant.buildings.iter().map(|b| b.m_min));
        hi.extend(plant.buildings.iter().map(|b| b.m_max));
        lo.extend(std::iter::repeat_n(t_s, n));
        hi.extend(std::iter::repeat_n(t_s + 20.0, n));
        lo.extend(std::iter::repeat_n(-dt_span, n));
        hi.extend(std::iter::repeat_n(dt_span, n));
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(x, (lo, hi))| 2.0 * (x - lo) / (hi - lo) - 1.0)
            .collect()
    }

    pub fn observation(&self, obs: &Observation) -> Vec<f64> {
        self.apply(&obs.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.iter().zip(&self.hi).any(|(l, h)| !(h > l)) {
            return Err(Error::Config("normalizer ranges must satisfy lo < hi".into()));
        }
        Ok(())
    }
}

/// A trained actor with the scalings it was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub actor: Mlp,
    pub obs_norm: Normalizer,
    /// Flow change at a saturated output, kg/s per building.
    pub action_limit: Vec<f64>,
}

impl Policy {
    pub fn action_limits(plant: &Plant, frac: f64) -> Vec<f64> {
        plant.buildings.iter().map(|b| frac * b.m_max).collect()
    }

    pub fn to_physical(&self, a: &[f64]) -> ControlAction {
        ControlAction { delta_m: a.iter().zip(&self.action_limit).map(|(a, l)| a * l).collect() }
    }

    pub fn to_network(&self, delta_m: &[f64]) -> Vec<f64> {
        delta_m.iter().zip(&self.action_limit).map(|(d, l)| d / l).collect()
    }

    pub fn act(&self, obs: &Observation) -> ControlAction {
        self.to_physical(&self.actor.forward_one(&self.obs_norm.observation(obs)))
    }

    pub fn check_plant(&self, plant: &Plant) -> Result<()> {
        let n = plant.n();
        let d = Observation::dim(n);
        if self.actor.input_dim() != d || self.actor.output_dim() != n || self.obs_norm.dim() != d || self.action_limit.len() != n {
            return Err(Error::Checkpoint(format!(
                "policy shape {:?} does not fit a plant with {n} buildings",
                self.actor.sizes()
            )));
        }
        Ok(())
    }
}

/// Runs one policy per stage. Without a recovery policy the flows are held
/// during recovery.
pub struct AgentController {
    pub name: String,
    pub reduction: Policy,
    pub recovery: Option<Policy>,
    pub shield: bool,
}

impl Controller for AgentController {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn control(&mut self, env: &mut DcsEnv) -> Result<StepInfo> {
        let obs = env.observe();
        let action = match (env.stage(), &self.recovery) {
            (Stage::Reduction, _) => self.reduction.act(&obs),
            (Stage::Recovery, Some(p)) => p.act(&obs),
            (Stage::Recovery, None) => ControlAction { delta_m: vec![0.0; env.plant().n()] },
        };
        env.step(&action, self.shield)
    }
}

//! The training loop: act, shield, execute, store, update.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ddpg::{explore, Ddpg, DdpgConfig};
use super::policy::{Normalizer, Policy};
use super::replay::{Batch, Experience, ReplayBuffer};
use crate::env::{DcsEnv, EpisodeStart, Stage};
use crate::error::{Error, Result};
use crate::safelayer::{clamp_to_box, project};
use crate::scenario::ScenarioProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub batch: usize,
    pub buffer: usize,
    pub noise_sigma: f64,
    /// Per-episode multiplicative decay of the noise; `None` keeps it fixed.
    pub noise_decay: Option<f64>,
    /// Saturated actor output as a fraction of each building's `m_max`.
    pub action_limit_frac: f64,
    /// Half-width of the normalized power-gap range as a fraction of the
    /// mean event-start power.
    pub p_span_frac: f64,
    /// Half-width of the normalized deviation range, °C.
    pub dt_span: f64,
    pub stored_action: StoredAction,
    pub ddpg: DdpgConfig,
}

/// Which action goes into the replay buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoredAction {
    /// The change actually applied; the actor is then trained through the
    /// safe layer.
    Executed,
    /// The actor's noisy proposal; the safe layer is treated as part of the
    /// plant.
    Proposed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 2500,
            batch: 200,
            buffer: 10_000,
            noise_sigma: 0.3,
            noise_decay: None,
            action_limit_frac: 0.25,
            p_span_frac: 0.5,
            dt_span: 2.0,
            stored_action: StoredAction::Proposed,
            ddpg: DdpgConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if self.episodes == 0 || self.batch == 0 || self.buffer < self.batch {
            return bad("need episodes > 0 and 0 < batch <= buffer");
        }
        if !(self.noise_sigma >= 0.0) || self.noise_decay.is_some_and(|d| !(d > 0.0 && d <= 1.0)) {
            return bad("noise_sigma must be >= 0 and noise_decay in (0, 1]");
        }
        if !(self.action_limit_frac > 0.0 && self.p_span_frac > 0.0 && self.dt_span > 0.0) {
            return bad("scales must be positive");
        }
        let d = &self.ddpg;
        if !(0.0..=1.0).contains(&d.gamma) || !(d.tau > 0.0 && d.tau < 1.0) {
            return bad("gamma must lie in [0, 1] and tau in (0, 1)");
        }
        if !(d.lr_actor > 0.0 && d.lr_critic > 0.0) || d.hidden.is_empty() || d.hidden.contains(&0) {
            return bad("learning rates must be positive and hidden sizes non-zero");
        }
        Ok(())
    }
}

/// One pre-rolled event the trainer can start from.
#[derive(Debug, Clone)]
pub struct TrainStart {
    pub profile: Arc<ScenarioProfile>,
    pub start: EpisodeStart,
    pub p_cap: f64,
}

impl TrainStart {
    fn load(&self, env: &mut DcsEnv) -> Result<()> {
        env.set_profile(self.profile.clone())?;
        let p_bar = env.cfg().p_bar;
        env.set_caps(self.p_cap, p_bar)?;
        env.reset_from(&self.start)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Ddpg,
    pub policy: Policy,
    /// Undiscounted reward summed over each episode's trained stage.
    pub reward_curve: Vec<f64>,
    /// Largest `max(0, P − cap)` of each episode, kW.
    pub violation_curve: Vec<f64>,
    /// Largest violation over every executed step, including the reduction
    /// steps replayed to reach a recovery stage, kW.
    pub max_violation_any: f64,
    /// Largest `P / cap` over the same steps, unrounded.
    pub max_cap_ratio: f64,
    pub steps: usize,
}

/// First episode after which the trailing-`window` mean of `curve` stays
/// within `rel_tol` of the mean of the last `final_window` episodes.
pub fn convergence_episode(curve: &[f64], window: usize, final_window: usize, rel_tol: f64) -> Option<usize> {
    if curve.len() < window.max(final_window) || window == 0 {
        return None;
    }
    let target = final_mean(curve, final_window);
    let tol = rel_tol * target.abs();
    let mut first = None;
    let mut sum: f64 = curve[..window].iter().sum();
    for end in window..=curve.len() {
        if end > window {
            sum += curve[end - 1] - curve[end - 1 - window];
        }
        let ok = (sum / window as f64 - target).abs() <= tol;
        match (ok, first) {
            (true, None) => first = Some(end - 1),
            (false, Some(_)) => first = None,
            _ => {}
        }
    }
    first
}

pub fn final_mean(curve: &[f64], final_window: usize) -> f64 {
    let k = final_window.min(curve.len()).max(1);
    curve[curve.len().saturating_sub(k)..].iter().sum::<f64>() / k as f64
}

/// Train an agent for `stage`. For the recovery stage, `lead` drives the
/// reduction stage of every episode. The environment's reward kind decides
/// between the comfort reward and the penalty reward; `shield` switches the
/// safe layer on.
pub fn train(
    env: &mut DcsEnv,
    starts: &[TrainStart],
    stage: Stage,
    lead: Option<&Policy>,
    shield: bool,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    train_with(env, starts, stage, lead, shield, cfg, seed, &mut |_, _| {})
}

/// [`train`] with a callback after every episode, given the episode index and
/// the current greedy policy.
#[allow(clippy::too_many_arguments)]
pub fn train_with(
    env: &mut DcsEnv,
    starts: &[TrainStart],
    stage: Stage,
    lead: Option<&Policy>,
    shield: bool,
    cfg: &TrainConfig,
    seed: u64,
    on_episode: &mut dyn FnMut(usize, &Policy),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if starts.is_empty() {
        return Err(Error::Config("train: no episode starts".into()));
    }
    if stage == Stage::Recovery && lead.is_none() {
        return Err(Error::Config("train: recovery training needs a reduction policy".into()));
    }
    let plant = env.plant().clone();
    let n = plant.n();
    let p_mean = starts.iter().map(|s| s.start.state.p_chiller).sum::<f64>() / starts.len() as f64;
    let obs_norm = Normalizer::for_plant(&plant, cfg.p_span_frac * p_mean, cfg.dt_span);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = Ddpg::new(obs_norm.dim(), n, &cfg.ddpg, &mut rng);
    let mut policy = Policy {
        actor: agent.actor.clone(),
        obs_norm,
        action_limit: Policy::action_limits(&plant, cfg.action_limit_frac),
    };
    let mut buffer = ReplayBuffer::new(cfg.buffer);
    let mut reward_curve = Vec::with_capacity(cfg.episodes);
    let mut violation_curve = Vec::with_capacity(cfg.episodes);
    let mut max_violation_any = 0.0_f64;
    let mut max_cap_ratio = f64::NEG_INFINITY;
    let mut sigma = cfg.noise_sigma;
    let mut steps = 0;

    for episode in 0..cfg.episodes {
        let pick = rng.random_range(0..starts.len());
        starts[pick].load(env)?;
        if stage == Stage::Recovery {
            let lead = lead.expect("checked above");
            while !env.done() {
                let info = env.step(&lead.act(&env.observe()), shield)?;
                max_violation_any = max_violation_any.max(info.violation);
                max_cap_ratio = max_cap_ratio.max(info.p_chiller / info.p_cap);
            }
            env.start_recovery()?;
        }
        let mut total = 0.0;
        let mut worst = 0.0_f64;
        while !env.done() {
            let obs = policy.obs_norm.observation(&env.observe());
            let context = env.safe_context();
            let a = explore(&agent.act(&obs), sigma, &mut rng);
            let info = env.step(&policy.to_physical(&a), shield)?;
            let step = env.step_index();
            if !info.p_chiller.is_finite() || !info.transition.reward.is_finite() {
                return Err(Error::NonFinite { what: "environment output".into(), episode, step });
            }
            let tr = &info.transition;
            buffer.push(Experience {
                obs,
                action: match cfg.stored_action {
                    StoredAction::Executed => policy.to_network(&tr.action.delta_m),
                    StoredAction::Proposed => a,
                },
                reward: tr.reward,
                next_obs: policy.obs_norm.observation(&tr.next_obs),
                done: tr.done,
                context: Some(context),
            });
            total += tr.reward;
            worst = worst.max(info.violation);
            max_cap_ratio = max_cap_ratio.max(info.p_chiller / info.p_cap);
            steps += 1;
            if buffer.len() >= cfg.batch {
                let batch = buffer.sample(cfg.batch, &mut rng);
                agent.critic_update(&batch);
                match cfg.stored_action {
                    StoredAction::Executed => {
                        let map = |k: usize, a: &[f64]| executed(&policy, &batch, k, a, shield);
                        agent.actor_update_mapped(&batch, Some(&map));
                    }
                    StoredAction::Proposed => {
                        agent.actor_update(&batch);
                    }
                }
                agent.soft_update();
                if !agent.is_finite() {
                    return Err(Error::NonFinite { what: "network parameters".into(), episode, step });
                }
            }
        }
        policy.actor.clone_from(&agent.actor);
        max_violation_any = max_violation_any.max(worst);
        reward_curve.push(total);
        violation_curve.push(worst);
        if let Some(d) = cfg.noise_decay {
            sigma *= d;
        }
        on_episode(episode, &policy);
    }
    Ok(TrainOutcome {
        agent,
        policy,
        reward_curve,
        violation_curve,
        max_violation_any,
        max_cap_ratio,
        steps,
    })
}

/// The network action that proposal `a` would have executed as in the
/// plant condition stored with batch row `k`.
fn executed(policy: &Policy, batch: &Batch, k: usize, a: &[f64], shield: bool) -> Vec<f64> {
    let Some(ctx) = &batch.contexts[k] else {
        return a.to_vec();
    };
    let d = policy.to_physical(a).delta_m;
    let d = if shield { project(&d, ctx).delta_m } else { clamp_to_box(&d, ctx) };
    policy.to_network(&d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_of_a_step_curve() {
        let mut c = vec![-10.0; 100];
        c.extend(vec![-1.0; 300]);
        // trailing means reach -1 exactly once the window is past the step
        assert_eq!(convergence_episode(&c, 50, 100, 0.05), Some(149));
        assert_eq!(final_mean(&c, 100), -1.0);
    }

    #[test]
    fn late_excursion_resets_convergence() {
        let mut c = vec![-1.0; 400];
        c[250] = -100.0;
        assert_eq!(convergence_episode(&c, 50, 100, 0.05), Some(300));
        assert_eq!(convergence_episode(&c[..10], 50, 100, 0.05), None);
    }

    #[test]
    fn trailing_mean_matches_direct_sum() {
        let c: Vec<f64> = (0..400).map(|i| -1.0 - 99.0 * (-(i as f64) / 30.0).exp()).collect();
        let e = convergence_episode(&c, 50, 100, 0.05).unwrap();
        let f = final_mean(&c, 100);
        let trail = |end: usize| c[end + 1 - 50..=end].iter().sum::<f64>() / 50.0;
        assert!((trail(e) - f).abs() <= 0.05 * f.abs());
        assert!((trail(e - 1) - f).abs() > 0.05 * f.abs());
    }
}

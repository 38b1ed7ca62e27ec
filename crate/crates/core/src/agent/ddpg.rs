//! Deterministic policy gradient with target networks.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::nn::{hstack, Mlp, OutputActivation, Params};
use super::replay::Batch;

/// Maps a proposed network action of batch row `k` to the executed one.
pub type ActionMap<'a> = dyn Fn(usize, &[f64]) -> Vec<f64> + 'a;

const MAP_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdpgConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub hidden: Vec<usize>,
    /// Half-width of the uniform draw for both output layers.
    pub final_init: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            tau: 0.005,
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            hidden: vec![128, 128],
            final_init: 3e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ddpg {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    opt_actor: Adam,
    opt_critic: Adam,
    pub gamma: f64,
    pub tau: f64,
}

pub fn actor_sizes(obs_dim: usize, act_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut s = vec![obs_dim];
    s.extend_from_slice(hidden);
    s.push(act_dim);
    s
}

pub fn critic_sizes(obs_dim: usize, act_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut s = vec![obs_dim + act_dim];
    s.extend_from_slice(hidden);
    s.push(1);
    s
}

impl Ddpg {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, cfg: &DdpgConfig, rng: &mut R) -> Self {
        let actor = Mlp::new(&actor_sizes(obs_dim, act_dim, &cfg.hidden), OutputActivation::Tanh, cfg.final_init, rng);
        let critic = Mlp::new(&critic_sizes(obs_dim, act_dim, &cfg.hidden), OutputActivation::Linear, cfg.final_init, rng);
        Self::from_networks(actor, critic, cfg)
    }

    pub fn from_networks(actor: Mlp, critic: Mlp, cfg: &DdpgConfig) -> Self {
        Self {
            opt_actor: Adam::new(&actor, cfg.lr_actor),
            opt_critic: Adam::new(&critic, cfg.lr_critic),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            gamma: cfg.gamma,
            tau: cfg.tau,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.output_dim()
    }

    /// Greedy action in `[-1, 1]^n`.
    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        self.actor.forward_one(obs)
    }

    pub fn q_value(&self, obs: &[f64], action: &[f64]) -> f64 {
        let x: Vec<f64> = obs.iter().chain(action).copied().collect();
        self.critic.forward_one(&x)[0]
    }

    /// Bellman targets `r + γ·Q'(s', π'(s'))`, without bootstrap on final
    /// transitions.
    pub fn targets(&self, b: &Batch) -> Array1<f64> {
        let a_next = self.actor_target.forward(&b.next_obs);
        let q_next = self.critic_target.forward(&hstack(&b.next_obs, &a_next)).column(0).to_owned();
        &b.reward + &(self.gamma * &b.not_done * &q_next)
    }

    /// Mean squared Bellman error and its gradient for fixed targets `y`.
    pub fn critic_loss_grad(&self, b: &Batch, y: &Array1<f64>) -> (f64, Params) {
        let k = b.len() as f64;
        let cache = self.critic.forward_cached(&hstack(&b.obs, &b.action));
        let q = cache.output().column(0);
        let err = &q - y;
        let loss = err.mapv(|e| e * e).sum() / k;
        let g_out = (err * (2.0 / k)).insert_axis(Axis(1));
        let (g, _) = self.critic.backward(&cache, &g_out);
        (loss, g)
    }

    /// Sampled objective `(1/K) Σ Q(s, π(s))` and its gradient with respect to
    /// the actor parameters, through the frozen critic.
    pub fn actor_objective_grad(&self, obs: &Array2<f64>) -> (f64, Params) {
        self.actor_objective_grad_mapped(obs, None)
    }

    /// As [`Ddpg::actor_objective_grad`] with the critic evaluated at
    /// `map(k, π(s_k))`, the action that would actually be executed for
    /// sample `k`. The map is piecewise linear, so its Jacobian is taken by
    /// central differences of width `MAP_FD_STEP`.
    pub fn actor_objective_grad_mapped(&self, obs: &Array2<f64>, map: Option<&ActionMap>) -> (f64, Params) {
        let k = obs.nrows() as f64;
        let d_o = obs.ncols();
        let n = self.act_dim();
        let a_cache = self.actor.forward_cached(obs);
        let a = a_cache.output();
        let mut jac = Vec::new();
        let a_exec = match map {
            None => a.clone(),
            Some(f) => {
                let mut out = Array2::zeros(a.dim());
                for (r, row) in a.outer_iter().enumerate() {
                    let row = row.to_vec();
                    out.row_mut(r).assign(&Array1::from(f(r, &row)));
                    let mut j = Array2::zeros((n, n));
                    for c in 0..n {
                        let mut hi = row.clone();
                        hi[c] += MAP_FD_STEP;
                        let mut lo = row.clone();
                        lo[c] -= MAP_FD_STEP;
                        let (yh, yl) = (f(r, &hi), f(r, &lo));
                        for i in 0..n {
                            j[(i, c)] = (yh[i] - yl[i]) / (2.0 * MAP_FD_STEP);
                        }
                    }
                    jac.push(j);
                }
                out
            }
        };
        let c_cache = self.critic.forward_cached(&hstack(obs, &a_exec));
        let objective = c_cache.output().sum() / k;
        let g_q = Array2::from_elem((obs.nrows(), 1), 1.0 / k);
        let (_, g_in) = self.critic.backward(&c_cache, &g_q);
        let mut g_a = g_in.slice(s![.., d_o..]).to_owned();
        if !jac.is_empty() {
            for (r, j) in jac.iter().enumerate() {
                let g = j.t().dot(&g_a.row(r));
                g_a.row_mut(r).assign(&g);
            }
        }
        let (g, _) = self.actor.backward(&a_cache, &g_a);
        (objective, g)
    }

    /// One critic step; returns the loss before the step.
    pub fn critic_update(&mut self, b: &Batch) -> f64 {
        let y = self.targets(b);
        let (loss, g) = self.critic_loss_grad(b, &y);
        self.opt_critic.step(&mut self.critic, &g);
        loss
    }

    /// One actor ascent step; returns the objective before the step.
    pub fn actor_update(&mut self, b: &Batch) -> f64 {
        self.actor_update_mapped(b, None)
    }

    pub fn actor_update_mapped(&mut self, b: &Batch, map: Option<&ActionMap>) -> f64 {
        let (j, mut g) = self.actor_objective_grad_mapped(&b.obs, map);
        g.scale(-1.0);
        self.opt_actor.step(&mut self.actor, &g);
        j
    }

    pub fn soft_update(&mut self) {
        self.actor_target.soft_update_from(&self.actor, self.tau);
        self.critic_target.soft_update_from(&self.critic, self.tau);
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }
}

/// Adds independent `N(0, σ²)` noise to each component, then clamps to
/// `[-1, 1]`.
pub fn explore<R: Rng + ?Sized>(action: &[f64], sigma: f64, rng: &mut R) -> Vec<f64> {
    if sigma == 0.0 {
        return action.to_vec();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    action.iter().map(|a| (a + normal.sample(rng)).clamp(-1.0, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::replay::Experience;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(rng: &mut ChaCha8Rng) -> Ddpg {
        let cfg = DdpgConfig { hidden: vec![6, 5], final_init: 0.3, ..DdpgConfig::default() };
        Ddpg::new(3, 2, &cfg, rng)
    }

    fn batch(rng: &mut ChaCha8Rng, k: usize) -> Batch {
        let items: Vec<Experience> = (0..k)
            .map(|i| Experience {
                obs: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward: rng.random_range(-1.0..0.0),
                next_obs: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: i % 3 == 0,
                context: None,
            })
            .collect();
        Batch::from_experiences(&items.iter().collect::<Vec<_>>())
    }

    #[test]
    fn single_transition_loss_by_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut agent = small(&mut rng);
        let b = batch(&mut rng, 1);
        let obs = b.next_obs.row(0).to_vec();
        let a_next = agent.actor_target.forward_one(&obs);
        let q_next = agent.critic_target.forward_one(&[obs.clone(), a_next].concat())[0];
        let y = b.reward[0] + agent.gamma * b.not_done[0] * q_next;
        let q = agent.q_value(&b.obs.row(0).to_vec(), &b.action.row(0).to_vec());
        let loss = agent.critic_update(&b);
        assert!((loss - (y - q).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn terminal_target_is_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let agent = small(&mut rng);
        let b = batch(&mut rng, 6);
        let y = agent.targets(&b);
        for i in (0..6).step_by(3) {
            assert_eq!(y[i], b.reward[i]);
        }
    }

    #[test]
    fn zero_loss_leaves_critic_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut agent = small(&mut rng);
        agent.critic = Mlp::zeros(&agent.critic.sizes(), OutputActivation::Linear);
        agent.critic_target = agent.critic.clone();
        let mut b = batch(&mut rng, 5);
        b.reward.fill(0.0);
        let before = agent.critic.clone();
        assert_eq!(agent.critic_update(&b), 0.0);
        assert_eq!(agent.critic, before);
    }

    #[test]
    fn constant_critic_gives_zero_actor_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut agent = small(&mut rng);
        let sizes = agent.critic.sizes();
        agent.critic = Mlp::zeros(&sizes, OutputActivation::Linear);
        agent.critic.biases[sizes.len() - 2][0] = 4.0;
        let b = batch(&mut rng, 4);
        let (j, g) = agent.actor_objective_grad(&b.obs);
        assert_eq!(j, 4.0);
        assert!(g.weights.iter().all(|w| w.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn linear_toy_actor_step() {
        // q = w·a with a = W·s (no hidden layer, no squashing)
        let mut actor = Mlp::zeros(&[1, 1], OutputActivation::Linear);
        actor.weights[0][(0, 0)] = 0.2;
        let mut critic = Mlp::zeros(&[2, 1], OutputActivation::Linear);
        let w = 1.5;
        critic.weights[0][(1, 0)] = w;
        let cfg = DdpgConfig { lr_actor: 0.01, ..DdpgConfig::default() };
        let mut agent = Ddpg::from_networks(actor, critic, &cfg);
        let s_val = 0.8;
        let e = Experience { obs: vec![s_val], action: vec![0.0], reward: 0.0, next_obs: vec![0.0], done: true, context: None };
        let b = Batch::from_experiences(&[&e]);
        let (_, g) = agent.actor_objective_grad(&b.obs);
        assert!((g.weights[0][(0, 0)] - w * s_val).abs() < 1e-15);
        assert!((g.biases[0][0] - w).abs() < 1e-15);
        agent.actor_update(&b);
        // the first bias-corrected step is lr along the gradient sign, less the ε term
        let g0 = w * s_val;
        let step = 0.01 * g0 / (g0 + 1e-8 / 0.001f64.sqrt());
        assert!((agent.actor.weights[0][(0, 0)] - (0.2 + step)).abs() < 1e-15);
    }

    #[test]
    fn explore_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(explore(&[0.3, -0.2], 0.0, &mut rng), vec![0.3, -0.2]);
        let n = 100_000;
        let sigma = 0.05;
        let draws: Vec<f64> = (0..n).map(|_| explore(&[0.0], sigma, &mut rng)[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!((sd / sigma - 1.0).abs() < 0.02);
        let a = explore(&[0.9; 8], 0.3, &mut ChaCha8Rng::seed_from_u64(4));
        let b = explore(&[0.9; 8], 0.3, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn agent_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let agent = small(&mut rng);
        let b = batch(&mut rng, 7);
        let y = agent.targets(&b);
        let (_, gc) = agent.critic_loss_grad(&b, &y);
        let (_, ga) = agent.actor_objective_grad(&b.obs);
        let eps = 1e-6;
        for l in 0..agent.critic.weights.len() {
            let idx = (1, 0);
            let mut p = agent.clone();
            p.critic.weights[l][idx] += eps;
            let mut m = agent.clone();
            m.critic.weights[l][idx] -= eps;
            let fd = (p.critic_loss_grad(&b, &y).0 - m.critic_loss_grad(&b, &y).0) / (2.0 * eps);
            assert!((fd - gc.weights[l][idx]).abs() <= 1e-6 * fd.abs().max(1e-3), "critic layer {l}");
        }
        for l in 0..agent.actor.weights.len() {
            let idx = (0, 1);
            let mut p = agent.clone();
            p.actor.weights[l][idx] += eps;
            let mut m = agent.clone();
            m.actor.weights[l][idx] -= eps;
            let fd = (p.actor_objective_grad(&b.obs).0 - m.actor_objective_grad(&b.obs).0) / (2.0 * eps);
            assert!((fd - ga.weights[l][idx]).abs() <= 1e-6 * fd.abs().max(1e-3), "actor layer {l}: {fd} vs {}", ga.weights[l][idx]);
        }
    }

    #[test]
    fn mapped_gradient_follows_the_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let agent = small(&mut rng);
        let b = batch(&mut rng, 5);
        let id = |_: usize, a: &[f64]| a.to_vec();
        let (j0, g0) = agent.actor_objective_grad(&b.obs);
        let (j1, g1) = agent.actor_objective_grad_mapped(&b.obs, Some(&id));
        assert!((j0 - j1).abs() < 1e-15);
        assert!((&g0.weights[0] - &g1.weights[0]).iter().all(|d| d.abs() < 1e-9));
        // a linear map; the sampled objective is checked by finite differences
        let lin = |_: usize, a: &[f64]| vec![0.5 * a[0] - 0.2 * a[1], 0.3 * a[1]];
        let (_, g) = agent.actor_objective_grad_mapped(&b.obs, Some(&lin));
        let eps = 1e-6;
        for l in 0..agent.actor.weights.len() {
            let mut p = agent.clone();
            p.actor.weights[l][(0, 0)] += eps;
            let mut m = agent.clone();
            m.actor.weights[l][(0, 0)] -= eps;
            let fd = (p.actor_objective_grad_mapped(&b.obs, Some(&lin)).0
                - m.actor_objective_grad_mapped(&b.obs, Some(&lin)).0)
                / (2.0 * eps);
            assert!((fd - g.weights[l][(0, 0)]).abs() <= 1e-6 * fd.abs().max(1e-3), "layer {l}");
        }
    }
}

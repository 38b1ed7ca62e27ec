//! JSON checkpoints of trained policies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nn::Mlp;
use super::policy::Policy;
use crate::env::Stage;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub stage: Stage,
    pub shield: bool,
    /// Actor layer sizes, repeated here so a reader can check them first.
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub policy: Policy,
    pub critic: Mlp,
}

impl Checkpoint {
    pub fn new(seed: u64, stage: Stage, shield: bool, policy: Policy, critic: Mlp) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            seed,
            stage,
            shield,
            actor_sizes: policy.actor.sizes(),
            critic_sizes: critic.sizes(),
            policy,
            critic,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        c.check()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Declared sizes, stored matrices and normalization ranges agree.
    pub fn check(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("version {} (expected {CHECKPOINT_VERSION})", self.version)));
        }
        for (what, net, declared) in [
            ("actor", &self.policy.actor, &self.actor_sizes),
            ("critic", &self.critic, &self.critic_sizes),
        ] {
            check_net(what, net, declared)?;
        }
        let d = self.actor_sizes[0];
        let n = *self.actor_sizes.last().unwrap_or(&0);
        if self.policy.obs_norm.dim() != d || self.policy.action_limit.len() != n || self.critic_sizes[0] != d + n {
            return Err(Error::Checkpoint("normalization or action sizes do not match the networks".into()));
        }
        self.policy.obs_norm.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        if !self.policy.actor.is_finite() || !self.critic.is_finite() {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        Ok(())
    }
}

fn check_net(what: &str, net: &Mlp, declared: &[usize]) -> Result<()> {
    if declared.len() < 2 || net.weights.len() != declared.len() - 1 || net.biases.len() != net.weights.len() {
        return Err(Error::Checkpoint(format!("{what}: layer count does not match {declared:?}")));
    }
    for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        if w.dim() != (declared[l], declared[l + 1]) || b.len() != declared[l + 1] {
            return Err(Error::Checkpoint(format!(
                "{what}: layer {l} has shape {:?}, declared {}x{}",
                w.dim(),
                declared[l],
                declared[l + 1]
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::nn::OutputActivation;
    use crate::agent::policy::Normalizer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = Mlp::new(&[4, 8, 1], OutputActivation::Tanh, 0.1, &mut rng);
        let critic = Mlp::new(&[5, 8, 1], OutputActivation::Linear, 0.1, &mut rng);
        let policy = Policy {
            actor,
            obs_norm: Normalizer { lo: vec![-1.0, 0.0, 3.0, -2.0], hi: vec![1.0, 10.0, 23.0, 2.0] },
            action_limit: vec![2.5],
        };
        Checkpoint::new(7, Stage::Reduction, true, policy, critic)
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut c = sample();
        c.actor_sizes = vec![4, 9, 1];
        assert!(matches!(Checkpoint::from_json(&c.to_json().unwrap()), Err(Error::Checkpoint(_))));
        let mut c = sample();
        c.policy.action_limit.push(1.0);
        assert!(matches!(Checkpoint::from_json(&c.to_json().unwrap()), Err(Error::Checkpoint(_))));
    }
}

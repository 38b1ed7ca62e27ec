//! Experiment drivers behind the `dcs` binary: training, evaluation,
//! sweeps and the self-check suite.

pub mod commands;
pub mod config;
pub mod sweep;
pub mod validate;

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

pub use commands::{cmd_eval, cmd_scenario_gen, cmd_sweep, cmd_train, cmd_validate, TrainReport};
pub use config::{ControllerKind, ExperimentConfig, PlantFile, SitePreset};
pub use sweep::{SweepAxis, SweepRow};
pub use validate::{CheckResult, ValidationReport};

use crate::agent::{train, AgentController, Checkpoint, TrainOutcome, TrainStart};
use crate::baselines::PiController;
use crate::env::{rollout, Controller, DcsEnv, EpisodeConfig, EpisodeStart, EpisodeTrace, Stage};
use crate::error::{Error, Result};
use crate::scenario::{generate, ScenarioConfig, ScenarioProfile};
use crate::thermal::Plant;

/// Offset added to the run seed for the recovery agent.
pub const RECOVERY_SEED_OFFSET: u64 = 1_000_000;

pub const REDUCTION_CHECKPOINT: &str = "checkpoint.json";
pub const RECOVERY_CHECKPOINT: &str = "checkpoint_recovery.json";

/// A validated config together with the plant and generator it describes.
#[derive(Debug, Clone)]
pub struct Setup {
    pub cfg: ExperimentConfig,
    pub plant: Plant,
    pub generator: ScenarioConfig,
}

impl Setup {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        cfg.check_files()?;
        let plant = cfg.plant()?;
        let generator = cfg.generator(&plant)?;
        Ok(Self { cfg, plant, generator })
    }

    pub fn episode(&self) -> EpisodeConfig {
        self.cfg.event.episode()
    }

    pub fn env(&self, profile: Arc<ScenarioProfile>, episode: EpisodeConfig) -> Result<DcsEnv> {
        DcsEnv::new(self.plant.clone(), profile, episode, self.cfg.reward())
    }

    pub fn profile(&self, seed: u64) -> Result<Arc<ScenarioProfile>> {
        Ok(Arc::new(generate(seed, &self.generator)?))
    }

    pub fn eval_profile(&self) -> Result<Arc<ScenarioProfile>> {
        match &self.cfg.scenario.eval_csv {
            Some(p) => Ok(Arc::new(ScenarioProfile::load_csv(p)?)),
            None => self.profile(self.cfg.scenario.eval_seed),
        }
    }

    /// Pre-rolled starts for every training seed and offset, each with its
    /// own cap.
    pub fn train_starts(&self) -> Result<Vec<TrainStart>> {
        let mut out = Vec::new();
        for &seed in &self.cfg.scenario.train_seeds {
            let profile = self.profile(seed)?;
            let env = self.env(profile.clone(), self.episode())?;
            for &off in &self.cfg.scenario.train_offsets_s {
                let start = env.preroll(off)?;
                let p_cap = self.cfg.event.cap_for(start.state.p_chiller);
                out.push(TrainStart { profile: profile.clone(), start, p_cap });
            }
        }
        Ok(out)
    }

    /// Evaluation environment for `episode`, pre-rolled and capped.
    pub fn eval_env(&self, episode: EpisodeConfig) -> Result<(DcsEnv, EpisodeStart)> {
        let mut env = self.env(self.eval_profile()?, episode)?;
        let start = env.preroll(self.cfg.event.eval_offset_s)?;
        env.set_caps(self.cfg.event.cap_for(start.state.p_chiller), self.cfg.event.p_bar_kw)?;
        Ok((env, start))
    }
}

/// Reduction agent plus, optionally, the recovery agent trained behind it.
#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub seed: u64,
    pub shield: bool,
    pub reduction: TrainOutcome,
    pub recovery: Option<TrainOutcome>,
}

impl TrainedAgent {
    pub fn controller(&self, name: &str) -> AgentController {
        AgentController {
            name: name.into(),
            reduction: self.reduction.policy.clone(),
            recovery: self.recovery.as_ref().map(|r| r.policy.clone()),
            shield: self.shield,
        }
    }

    pub fn bundle(&self) -> AgentBundle {
        let ck = |o: &TrainOutcome, stage, seed| {
            Checkpoint::new(seed, stage, self.shield, o.policy.clone(), o.agent.critic.clone())
        };
        AgentBundle {
            reduction: ck(&self.reduction, Stage::Reduction, self.seed),
            recovery: self
                .recovery
                .as_ref()
                .map(|r| ck(r, Stage::Recovery, self.seed + RECOVERY_SEED_OFFSET)),
        }
    }
}

/// Train the configured learner: the reduction agent, then the recovery
/// agent driven by it.
pub fn train_agent(setup: &Setup, seed: u64) -> Result<TrainedAgent> {
    let kind = setup.cfg.controller;
    if !kind.is_learned() {
        return Err(Error::Config(format!("controller {} has nothing to train", kind.name())));
    }
    let starts = setup.train_starts()?;
    let mut env = setup.env(starts[0].profile.clone(), setup.episode())?;
    let shield = kind.shield();
    let reduction = train(&mut env, &starts, Stage::Reduction, None, shield, &setup.cfg.train, seed)?;
    let recovery = if setup.cfg.recovery.episodes > 0 {
        let cfg = crate::agent::TrainConfig { episodes: setup.cfg.recovery.episodes, ..setup.cfg.train.clone() };
        let lead = &reduction.policy;
        Some(train(&mut env, &starts, Stage::Recovery, Some(lead), shield, &cfg, seed + RECOVERY_SEED_OFFSET)?)
    } else {
        None
    };
    Ok(TrainedAgent { seed, shield, reduction, recovery })
}

/// Checkpoints of a trained agent as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentBundle {
    pub reduction: Checkpoint,
    pub recovery: Option<Checkpoint>,
}

impl AgentBundle {
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.reduction.save(&dir.join(REDUCTION_CHECKPOINT))?;
        if let Some(r) = &self.recovery {
            r.save(&dir.join(RECOVERY_CHECKPOINT))?;
        }
        Ok(())
    }

    /// Load from `dir` and check the policies against `plant`.
    pub fn load(dir: &Path, plant: &Plant) -> Result<Self> {
        let path = dir.join(REDUCTION_CHECKPOINT);
        if !path.is_file() {
            return Err(Error::Checkpoint(format!("{} not found; run `dcs train` first", path.display())));
        }
        let reduction = Checkpoint::load(&path)?;
        let rec_path = dir.join(RECOVERY_CHECKPOINT);
        let recovery = if rec_path.is_file() { Some(Checkpoint::load(&rec_path)?) } else { None };
        for c in std::iter::once(&reduction).chain(recovery.as_ref()) {
            c.policy.check_plant(plant)?;
        }
        if reduction.stage != Stage::Reduction || recovery.as_ref().is_some_and(|r| r.stage != Stage::Recovery) {
            return Err(Error::Checkpoint("checkpoint stages are swapped".into()));
        }
        Ok(Self { reduction, recovery })
    }

    pub fn controller(&self, name: &str) -> AgentController {
        AgentController {
            name: name.into(),
            reduction: self.reduction.policy.clone(),
            recovery: self.recovery.as_ref().map(|c| c.policy.clone()),
            shield: self.reduction.shield,
        }
    }
}

/// Controller for the configured kind; learned kinds need `bundle`.
pub fn make_controller(setup: &Setup, bundle: Option<&AgentBundle>) -> Result<Box<dyn Controller>> {
    let kind = setup.cfg.controller;
    match (kind, bundle) {
        (ControllerKind::Pi, _) => Ok(Box::new(PiController::new(setup.cfg.pi.build(&setup.plant)?))),
        (_, Some(b)) => {
            if b.reduction.shield != kind.shield() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint was trained with shield={} but controller {} uses shield={}",
                    b.reduction.shield,
                    kind.name(),
                    kind.shield()
                )));
            }
            Ok(Box::new(b.controller(kind.name())))
        }
        (_, None) => Err(Error::Checkpoint(format!("controller {} needs a checkpoint", kind.name()))),
    }
}

/// Run the evaluation event with both stages.
pub fn evaluate(setup: &Setup, ctl: &mut dyn Controller, episode: EpisodeConfig) -> Result<EpisodeTrace> {
    let (mut env, start) = setup.eval_env(episode)?;
    rollout(&mut env, ctl, &start, true)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub(crate) fn write_curve(path: &Path, column: &str, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", column])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

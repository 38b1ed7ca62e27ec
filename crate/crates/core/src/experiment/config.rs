//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::TrainConfig;
use crate::baselines::{PiConfig, DEFAULT_I_FRAC, DEFAULT_P_FRAC};
use crate::env::{EpisodeConfig, RewardKind};
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;
use crate::thermal::{desk_buildings, reference_buildings, BuildingSpec, DesignPoint, Plant, PlantParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Comfort reward, actions passed through the safe layer.
    SafeDrl,
    /// Comfort reward minus a cap penalty, no safe layer.
    Drl,
    Pi,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::SafeDrl => "safe-drl",
            ControllerKind::Drl => "drl",
            ControllerKind::Pi => "pi",
        }
    }

    pub fn is_learned(self) -> bool {
        !matches!(self, ControllerKind::Pi)
    }

    pub fn shield(self) -> bool {
        matches!(self, ControllerKind::SafeDrl)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SitePreset {
    /// Four buildings.
    #[default]
    Desk,
    /// The twelve-building reference site.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub preset: SitePreset,
    /// TOML file with `[params]`, `[design]` and `[[buildings]]`; replaces
    /// the preset when given.
    pub file: Option<PathBuf>,
}

/// Contents of a plant file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    #[serde(default)]
    pub params: PlantParams,
    #[serde(default)]
    pub design: DesignPoint,
    pub buildings: Vec<BuildingSpec>,
}

impl PlantFile {
    pub fn preset(p: SitePreset) -> Self {
        Self {
            params: PlantParams::default(),
            design: DesignPoint::default(),
            buildings: match p {
                SitePreset::Desk => desk_buildings(),
                SitePreset::Paper => reference_buildings(),
            },
        }
    }

    pub fn build(&self) -> Result<Plant> {
        let mut params = self.params.clone();
        params.n_buildings = self.buildings.len();
        let sized = self
            .buildings
            .iter()
            .map(|s| s.size(&params, &self.design))
            .collect::<Result<Vec<_>>>()?;
        Plant::new(params, sized)
    }
}

/// Optional changes to the default daily generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub t_out_min: Option<f64>,
    pub t_out_max: Option<f64>,
    pub t_out_noise: Option<f64>,
    pub load_noise: Option<f64>,
    /// Multiplies every building's design internal load.
    pub load_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub eval_seed: u64,
    /// Evaluation profile read from CSV instead of generated.
    pub eval_csv: Option<PathBuf>,
    pub train_seeds: Vec<u64>,
    /// Event-start shifts of the training pool, s.
    pub train_offsets_s: Vec<f64>,
    pub generator: GeneratorSection,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            eval_seed: 100,
            eval_csv: None,
            train_seeds: vec![1, 2, 3, 4],
            train_offsets_s: vec![-1800.0, -900.0, 0.0, 900.0, 1800.0],
            generator: GeneratorSection::default(),
        }
    }
}

/// Event timing and caps. Caps default to a fraction of the power measured
/// at the event start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSection {
    pub start_hour: f64,
    pub duration_min: f64,
    pub recovery_min: f64,
    pub cap_frac: f64,
    pub p_cap_kw: Option<f64>,
    pub p_bar_kw: Option<f64>,
    pub lambda: f64,
    pub theta_r: f64,
    pub gamma: f64,
    pub dt_control: f64,
    pub preroll_s: f64,
    /// Shift of the evaluated event relative to `start_hour`, s.
    pub eval_offset_s: f64,
}

impl Default for EventSection {
    fn default() -> Self {
        Self {
            start_hour: 14.0,
            duration_min: 15.0,
            recovery_min: 45.0,
            cap_frac: 0.8,
            p_cap_kw: None,
            p_bar_kw: None,
            lambda: 6.0,
            theta_r: 0.01,
            gamma: 0.9,
            dt_control: 60.0,
            preroll_s: 5400.0,
            eval_offset_s: 0.0,
        }
    }
}

impl EventSection {
    /// Episode settings with the cap still to be fixed per start.
    pub fn episode(&self) -> EpisodeConfig {
        let t0 = self.start_hour * 3600.0;
        let t1 = t0 + self.duration_min * 60.0;
        EpisodeConfig {
            t0,
            t1,
            t2: t1 + self.recovery_min * 60.0,
            p_cap: self.p_cap_kw.unwrap_or(1.0),
            p_bar: self.p_bar_kw,
            lambda: self.lambda,
            theta_r: self.theta_r,
            gamma: self.gamma,
            dt_control: self.dt_control,
            preroll: self.preroll_s,
        }
    }

    pub fn cap_for(&self, p_t0: f64) -> f64 {
        self.p_cap_kw.unwrap_or(self.cap_frac * p_t0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoverySection {
    /// Episodes for the recovery agent; 0 leaves flows unchanged after the event.
    pub episodes: usize,
}

impl Default for RecoverySection {
    fn default() -> Self {
        Self { episodes: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySection {
    pub theta_p: f64,
    /// Power that normalizes the penalty, kW; defaults to the active cap.
    pub base_power_kw: Option<f64>,
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self { theta_p: 0.05, base_power_kw: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiSection {
    pub p_ch: f64,
    pub i_ch: f64,
    /// Building gains as fractions of `m_max`.
    pub p_frac: f64,
    pub i_frac: f64,
    pub decision_dt: f64,
}

impl Default for PiSection {
    fn default() -> Self {
        Self { p_ch: 0.2, i_ch: 0.02, p_frac: DEFAULT_P_FRAC, i_frac: DEFAULT_I_FRAC, decision_dt: 1.0 }
    }
}

impl PiSection {
    pub fn build(&self, plant: &Plant) -> Result<PiConfig> {
        let mut c = PiConfig::for_plant(plant, self.p_frac, self.i_frac);
        c.p_ch_gain = self.p_ch;
        c.i_ch_gain = self.i_ch;
        c.decision_dt = self.decision_dt;
        c.validate(plant.n())?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub durations_min: Vec<f64>,
    /// Caps as fractions of the event-start power.
    pub cap_fracs: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            durations_min: vec![5.0, 15.0, 30.0, 50.0],
            cap_fracs: vec![0.02, 0.04, 0.06, 0.2, 0.4, 0.6, 0.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub controller: ControllerKind,
    /// Output directory; relative paths resolve against the working directory.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub plant: PlantSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub event: EventSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub recovery: RecoverySection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub pi: PiSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_seed() -> u64 {
    1
}

impl ExperimentConfig {
    /// Desk-scale defaults for `controller`.
    pub fn desk(controller: ControllerKind) -> Self {
        Self {
            seed: default_seed(),
            controller,
            out: None,
            plant: PlantSection::default(),
            scenario: ScenarioSection::default(),
            event: EventSection::default(),
            train: TrainConfig { episodes: 600, ..TrainConfig::default() },
            recovery: RecoverySection::default(),
            penalty: PenaltySection::default(),
            pi: PiSection::default(),
            sweep: SweepSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Read a config file. Relative file references inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.plant.file, &mut c.scenario.eval_csv].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        c.check_files()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.train.validate()?;
        let e = &self.event;
        if !(e.duration_min > 0.0 && e.recovery_min > 0.0 && (0.0..24.0).contains(&e.start_hour)) {
            return bad("event: need positive durations and start_hour in [0, 24)".into());
        }
        if !(e.cap_frac > 0.0) || e.p_cap_kw.is_some_and(|p| !(p > 0.0)) {
            return bad("event: caps must be positive".into());
        }
        e.episode().validate()?;
        let s = &self.scenario;
        if s.train_seeds.is_empty() || s.train_offsets_s.is_empty() {
            return bad("scenario: need at least one training seed and offset".into());
        }
        if !(self.penalty.theta_p >= 0.0) {
            return bad("penalty: theta_p must be non-negative".into());
        }
        if self.sweep.durations_min.iter().chain(&self.sweep.cap_fracs).any(|v| !(*v > 0.0)) {
            return bad("sweep: values must be positive".into());
        }
        Ok(())
    }

    pub fn check_files(&self) -> Result<()> {
        for p in [&self.plant.file, &self.scenario.eval_csv].into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<Plant> {
        let file = match &self.plant.file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => PlantFile::preset(self.plant.preset),
        };
        file.build()
    }

    pub fn generator(&self, plant: &Plant) -> Result<ScenarioConfig> {
        let g = &self.scenario.generator;
        let scale = g.load_scale.unwrap_or(1.0);
        let mut c = ScenarioConfig::daily(plant.buildings.iter().map(|b| scale * b.zeta_design).collect());
        c.t_out_min = g.t_out_min.unwrap_or(c.t_out_min);
        c.t_out_max = g.t_out_max.unwrap_or(c.t_out_max);
        c.t_out_noise = g.t_out_noise.unwrap_or(c.t_out_noise);
        c.load_noise = g.load_noise.unwrap_or(c.load_noise);
        c.validate()?;
        Ok(c)
    }

    pub fn reward(&self) -> RewardKind {
        match self.controller {
            ControllerKind::Drl => RewardKind::Penalty {
                theta_p: self.penalty.theta_p,
                base_power: self.penalty.base_power_kw,
            },
            _ => RewardKind::Comfort,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let c = ExperimentConfig::from_toml("controller = \"safe-drl\"\n").unwrap();
        assert_eq!(c.seed, 1);
        assert_eq!(c.event, EventSection::default());
        assert_eq!(c.plant().unwrap().n(), 4);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::desk(ControllerKind::Drl);
        c.event.p_cap_kw = Some(12_000.0);
        c.scenario.generator.load_scale = Some(1.1);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("controller = \"mpc\"\n").is_err());
        assert!(ExperimentConfig::from_toml("controller = \"pi\"\nfoo = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("controller = \"pi\"\n[event]\ncap_frac = -0.1\n").is_err());
        assert!(ExperimentConfig::from_toml("controller = \"pi\"\n[train]\nbatch = 0\n").is_err());
    }

    #[test]
    fn event_timing() {
        let e = EventSection { duration_min: 30.0, recovery_min: 20.0, ..EventSection::default() };
        let ep = e.episode();
        assert_eq!(ep.t0, 50_400.0);
        assert_eq!(ep.t1 - ep.t0, 1800.0);
        assert_eq!(ep.t2 - ep.t1, 1200.0);
        assert_eq!(ep.steps_reduction(), 30);
        assert_eq!(e.cap_for(1000.0), 800.0);
    }
}

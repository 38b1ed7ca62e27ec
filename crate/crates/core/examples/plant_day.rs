//! Run the four-building site through a generated day under its normal
//! valve loops and print an hourly log of power and indoor deviations.

use std::sync::Arc;

use dcs_reserve::env::{DcsEnv, EpisodeConfig, RewardKind};
use dcs_reserve::experiment::{PlantFile, SitePreset};
use dcs_reserve::scenario::{generate, ScenarioConfig};

fn main() -> dcs_reserve::Result<()> {
    let plant = PlantFile::preset(SitePreset::Desk).build()?;
    let scen = ScenarioConfig::daily(plant.buildings.iter().map(|b| b.zeta_design).collect());
    let profile = Arc::new(generate(1, &scen)?);

    let env = DcsEnv::new(plant.clone(), profile.clone(), EpisodeConfig::afternoon(1.0), RewardKind::Comfort)?;

    println!("hour  t_out  P_kW     dT per building (C)");
    for hour in 9..=18 {
        // a pre-roll shifted from 14:00 ends at the requested hour
        let shift = (hour as f64 - 14.0) * 3600.0;
        let start = env.preroll(shift)?;
        let s = &start.state;
        let dt: Vec<String> = s.delta_t(&plant.buildings).iter().map(|d| format!("{d:+.2}")).collect();
        println!(
            "{hour:>4}  {:>5.1}  {:>7.0}  {}",
            profile.sample(s.time).t_out,
            s.p_chiller,
            dt.join(" ")
        );
    }
    Ok(())
}

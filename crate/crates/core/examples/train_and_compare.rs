//! Train a shielded agent on the desk site for a short run and compare it
//! with the PI baseline on the held-out evaluation day.
//!
//! `cargo run --release --example train_and_compare -- 150`

use dcs_reserve::experiment::{evaluate, make_controller, train_agent, ControllerKind, ExperimentConfig, Setup};

fn main() -> dcs_reserve::Result<()> {
    let episodes = std::env::args().nth(1).map_or(Ok(150), |a| a.parse()).expect("episode count");
    let mut cfg = ExperimentConfig::desk(ControllerKind::SafeDrl);
    cfg.train.episodes = episodes;
    cfg.recovery.episodes = episodes / 3;
    let safe = Setup::new(cfg)?;
    let agent = train_agent(&safe, 1)?;
    let c = &agent.reduction.reward_curve;
    let tail = &c[c.len().saturating_sub(20)..];
    println!(
        "trained {} episodes, last-20 mean reward {:.3}, worst violation {:.3} kW",
        c.len(),
        tail.iter().sum::<f64>() / tail.len() as f64,
        agent.reduction.max_violation_any
    );

    let pi = Setup::new(ExperimentConfig::desk(ControllerKind::Pi))?;
    let bundle = agent.bundle();
    println!("controller  max|dT|  >1C  peak_rec_kW  p_bar_kW  viol_steps");
    for (setup, bundle) in [(&safe, Some(&bundle)), (&pi, None)] {
        let mut ctl = make_controller(setup, bundle)?;
        let s = evaluate(setup, ctl.as_mut(), setup.episode())?.summary();
        println!(
            "{:<10}  {:>7.3}  {:>3}  {:>11.0}  {:>8.0}  {:>10}",
            s.controller,
            s.max_abs_dev,
            s.uncomfortable_count,
            s.peak_power_recovery.unwrap_or(f64::NAN),
            s.p_bar,
            s.violation_steps
        );
    }
    Ok(())
}

//! Sweep the power cap for the PI baseline and mark caps the plant cannot
//! reach even with every building at minimum flow.

use dcs_reserve::experiment::sweep::run_sweep;
use dcs_reserve::experiment::{ControllerKind, ExperimentConfig, Setup, SweepAxis};

fn main() -> dcs_reserve::Result<()> {
    let setup = Setup::new(ExperimentConfig::desk(ControllerKind::Pi))?;
    let fracs = [0.02, 0.04, 0.06, 0.2, 0.5, 0.8];
    let rows = run_sweep(&setup, None, SweepAxis::PowerCap, &fracs)?;
    println!("cap_frac  cap_kw  min_kw  max|dT|  first_viol_kw  infeasible");
    for r in &rows {
        println!(
            "{:<8}  {:>6.0}  {:>6.0}  {:>7.3}  {:>13.1}  {}",
            r.value, r.p_cap_kw, r.min_power_kw, r.max_dev, r.first_violation_kw, r.infeasible
        );
    }
    Ok(())
}

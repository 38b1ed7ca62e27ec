//! Algebraic relations of the chillers, pipes, exchangers, air handlers and
//! the building air volume.

use crate::error::{domain, Error, Result};
use crate::thermal::params::{BuildingParams, FlowArrangement, PlantParams};

/// Below this relative spread of the two approaches the log-mean is replaced
/// by the arithmetic mean.
const LMTD_EQUAL_TOL: f64 = 1e-6;
/// Relative width of the final bracket in the exchanger bisection.
const HX_BRACKET_TOL: f64 = 1e-13;
/// Largest accepted relative residual of the exchanger transfer equation.
const HX_RESIDUAL_TOL: f64 = 1e-6;
/// Terminal approach (°C) under which the exchanger is reported as pinched.
pub const PINCH_EPS: f64 = 1e-6;

/// Cooling output and electrical power of the chiller group, kW.
pub fn chiller_power(m_chiller: f64, t_ch_return: f64, params: &PlantParams) -> Result<(f64, f64)> {
    if m_chiller < 0.0 {
        return Err(domain(format!("negative chiller flow {m_chiller}")));
    }
    if t_ch_return < params.t_ch_supply {
        return Err(domain(format!(
            "chiller return {t_ch_return} °C below supply set point {} °C",
            params.t_ch_supply
        )));
    }
    let q = m_chiller * params.c_water * (t_ch_return - params.t_ch_supply);
    Ok((q, q / params.cop))
}

/// Mix the building returns and the decoupler bypass into the chiller return.
pub fn mix_return(
    m_primary: &[f64],
    t_i_return: &[f64],
    m_decoupler: f64,
    t_decoupler: f64,
) -> Result<(f64, f64)> {
    if m_primary.len() != t_i_return.len() {
        return Err(domain("flow and temperature arrays differ in length"));
    }
    if m_decoupler < 0.0 || m_primary.iter().any(|&m| m < 0.0) {
        return Err(domain("negative stream flow in return mixing"));
    }
    let mut m_total = m_decoupler;
    let mut heat = m_decoupler * t_decoupler;
    for (&m, &t) in m_primary.iter().zip(t_i_return) {
        m_total += m;
        heat += m * t;
    }
    if m_total <= 0.0 {
        return Err(domain("return mixing with zero total flow"));
    }
    let mut t_mix = heat / m_total;
    // Keep the result inside the convex hull despite rounding.
    let (lo, hi) = m_primary
        .iter()
        .zip(t_i_return)
        .filter(|(&m, _)| m > 0.0)
        .map(|(_, &t)| t)
        .chain((m_decoupler > 0.0).then_some(t_decoupler))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t), hi.max(t)));
    t_mix = t_mix.clamp(lo, hi);
    Ok((m_total, t_mix))
}

/// Supply temperature reaching the buildings after pipeline heat gain.
pub fn pipeline_supply_temp(t_out: f64, params: &PlantParams) -> f64 {
    t_out + params.eta_pipe * (params.t_ch_supply - t_out)
}

/// Log-mean of two positive terminal temperature differences.
pub fn lmtd(d1: f64, d2: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0) {
        return Err(domain(format!("non-positive exchanger approach ({d1}, {d2})")));
    }
    let hi = d1.max(d2);
    if (d1 - d2).abs() / hi < LMTD_EQUAL_TOL {
        return Ok(0.5 * (d1 + d2));
    }
    Ok((d1 - d2) / (d1 / d2).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HxSolution {
    /// kW
    pub q: f64,
    pub t_i_return: f64,
    pub t_ii_supply: f64,
    /// An outlet approach fell below `PINCH_EPS`.
    pub pinched: bool,
}

/// Terminal differences for a transferred duty `q`.
fn approaches(
    q: f64,
    c_hot: f64,
    c_cold: f64,
    t_i_supply: f64,
    t_ii_return: f64,
    arrangement: FlowArrangement,
) -> (f64, f64) {
    let t_ii_s = t_ii_return - q / c_hot;
    let t_i_r = t_i_supply + q / c_cold;
    match arrangement {
        FlowArrangement::Cocurrent => (t_ii_return - t_i_supply, t_ii_s - t_i_r),
        FlowArrangement::Counterflow => (t_ii_return - t_i_r, t_ii_s - t_i_supply),
    }
}

/// Duty at which the exchanger would reach zero approach at one end.
pub fn perfect_exchanger_duty(
    c_hot: f64,
    c_cold: f64,
    dt_in: f64,
    arrangement: FlowArrangement,
) -> f64 {
    match arrangement {
        FlowArrangement::Cocurrent => dt_in * c_hot * c_cold / (c_hot + c_cold),
        FlowArrangement::Counterflow => dt_in * c_hot.min(c_cold),
    }
}

/// Solve the two energy balances and the transfer equation of one exchanger.
///
/// The hot stream is the secondary loop entering at `t_ii_return`; the cold
/// stream is the primary loop entering at `t_i_supply`, seen through the
/// primary loop efficiency `eta1`.
pub fn heat_exchanger_solve(
    m_primary: f64,
    m_secondary: f64,
    t_i_supply: f64,
    t_ii_return: f64,
    b: &BuildingParams,
    plant: &PlantParams,
) -> Result<HxSolution> {
    if m_primary < 0.0 || m_secondary < 0.0 {
        return Err(domain("negative exchanger flow"));
    }
    let kf = b.k_he * b.f_he;
    let dt_in = t_ii_return - t_i_supply;
    if kf == 0.0 || m_primary == 0.0 || m_secondary == 0.0 {
        return Ok(HxSolution {
            q: 0.0,
            t_i_return: t_i_supply,
            t_ii_supply: t_ii_return,
            pinched: false,
        });
    }
    if !(dt_in > 0.0) {
        return Err(domain(format!(
            "secondary return {t_ii_return} °C not above primary supply {t_i_supply} °C"
        )));
    }
    let c_hot = m_secondary * plant.c_water;
    let c_cold = b.eta1 * m_primary * plant.c_water;
    let residual = |q: f64| -> f64 {
        let (d1, d2) = approaches(q, c_hot, c_cold, t_i_supply, t_ii_return, plant.arrangement);
        match lmtd(d1, d2) {
            Ok(l) => kf * l - q,
            // Past the perfect-exchanger duty: transfer capacity is exhausted.
            Err(_) => -q,
        }
    };
    let q_star = perfect_exchanger_duty(c_hot, c_cold, dt_in, plant.arrangement);
    let (mut lo, mut hi) = (0.0_f64, q_star);
    while hi - lo > HX_BRACKET_TOL * q_star {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    let (d1, d2) = approaches(q, c_hot, c_cold, t_i_supply, t_ii_return, plant.arrangement);
    let pinched = d1.min(d2) < PINCH_EPS;
    if !pinched {
        let r = residual(q).abs();
        if r > HX_RESIDUAL_TOL * q.max(1.0) {
            return Err(Error::SolverNonConvergence { residual: r });
        }
    }
    let t_i_return = t_i_supply + q / c_cold;
    let t_ii_supply = (t_ii_return - q / c_hot).max(t_i_supply.min(t_ii_return));
    Ok(HxSolution {
        q,
        t_i_return,
        t_ii_supply,
        pinched,
    })
}

/// Supply-air temperature: coil-side air blended with a fresh-air share.
pub fn ahu_mix(t_ii_supply: f64, t_ii_return: f64, t_out: f64, alpha: f64) -> f64 {
    0.5 * (1.0 - alpha) * (t_ii_supply + t_ii_return) + alpha * t_out
}

/// Secondary flow that carries the air-side duty at the given loop temperatures.
pub fn ahu_energy_balance(
    m_wind: f64,
    t_indoor: f64,
    t_wind: f64,
    t_ii_supply: f64,
    t_ii_return: f64,
    b: &BuildingParams,
    plant: &PlantParams,
) -> Result<f64> {
    let dt = t_ii_return - t_ii_supply;
    if !(dt > 0.0) {
        return Err(domain(format!("secondary loop temperature difference {dt} not positive")));
    }
    Ok(m_wind * plant.c_air * (t_indoor - t_wind) / (b.eta2 * plant.c_water * dt))
}

/// Heat delivered to the building by its air handler, kW.
pub fn ahu_duty(m_wind: f64, t_indoor: f64, t_wind: f64, plant: &PlantParams) -> f64 {
    m_wind * plant.c_air * (t_indoor - t_wind)
}

/// Heat gained through the envelope plus internal sources, kW.
pub fn heat_loss(t_indoor: f64, t_out: f64, zeta: f64, b: &BuildingParams) -> f64 {
    b.envelope_conductance() * (t_out - t_indoor) + zeta
}

/// One explicit-Euler step of the indoor air temperature.
pub fn building_step(
    t_indoor: f64,
    q_dcs: f64,
    t_out: f64,
    zeta: f64,
    b: &BuildingParams,
    plant: &PlantParams,
    dt: f64,
) -> Result<f64> {
    if !(dt > 0.0 && dt <= plant.dt_sub_max) {
        return Err(domain(format!("building step {dt} s outside (0, {}]", plant.dt_sub_max)));
    }
    let q_loss = heat_loss(t_indoor, t_out, zeta, b);
    Ok(t_indoor + dt * (q_loss - q_dcs) / b.air_capacity(plant))
}

/// Air-flow tracking of the set temperature in velocity form.
///
/// The increment is `kp·(e − e_prev) + ki·e·dt` with `e = T^A − T^set`; the
/// output is clamped to `[0, m_wind_max]`, so a saturated controller resumes
/// from the bound without accumulated integral.
pub fn ahu_local_control(
    t_indoor: f64,
    err_prev: f64,
    m_wind_prev: f64,
    b: &BuildingParams,
    dt: f64,
) -> (f64, f64) {
    let e = t_indoor - b.t_set;
    let m = m_wind_prev + b.ahu_kp * (e - err_prev) + b.ahu_ki * e * dt;
    (m.clamp(0.0, b.m_wind_max), e)
}

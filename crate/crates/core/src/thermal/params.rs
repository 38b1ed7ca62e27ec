//! Physical constants of the energy station and the served buildings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::thermal::components::{ahu_energy_balance, ahu_mix, lmtd, pipeline_supply_temp};

/// Which pair of terminal temperature differences enters the log-mean.
///
/// `Cocurrent` pairs the two inlets and the two outlets
/// (`T^II,r - T^I,s` against `T^II,s - T^I,r`); `Counterflow` pairs each
/// inlet with the opposite outlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FlowArrangement {
    #[default]
    Cocurrent,
    Counterflow,
}

/// Energy-station constants plus the integration settings of the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Chiller coefficient of performance.
    pub cop: f64,
    /// Chilled-water set supply temperature, °C.
    pub t_ch_supply: f64,
    /// kJ/(kg·°C)
    pub c_water: f64,
    /// kJ/(kg·°C)
    pub c_air: f64,
    /// kg/m³
    pub rho_air: f64,
    /// Supply pipeline transfer coefficient (1 = lossless).
    pub eta_pipe: f64,
    pub n_buildings: usize,
    /// Primary pump flow in excess of the building demand, as a fraction of
    /// the summed building flow. The excess returns through the decoupler.
    pub pump_margin: f64,
    /// Transport delay of the return header to the chiller inlet, s.
    pub return_delay_s: f64,
    /// Explicit-Euler physics sub-step, s.
    pub dt_sub: f64,
    /// Upper bound accepted for `dt_sub`, s.
    pub dt_sub_max: f64,
    pub arrangement: FlowArrangement,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            cop: 5.5,
            t_ch_supply: 3.0,
            c_water: 4.2,
            c_air: 1.005,
            rho_air: 1.205,
            eta_pipe: 0.95,
            n_buildings: 12,
            pump_margin: 0.0,
            return_delay_s: 60.0,
            dt_sub: 1.0,
            dt_sub_max: 5.0,
            arrangement: FlowArrangement::Cocurrent,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("plant: {m}")));
        if !(self.cop > 0.0) {
            return bad("cop must be positive");
        }
        if !(self.eta_pipe > 0.0 && self.eta_pipe <= 1.0) {
            return bad("eta_pipe must lie in (0, 1]");
        }
        if self.n_buildings == 0 {
            return bad("at least one building is required");
        }
        if !(self.c_water > 0.0 && self.c_air > 0.0 && self.rho_air > 0.0) {
            return bad("heat capacities and air density must be positive");
        }
        if !(self.pump_margin >= 0.0) {
            return bad("pump_margin must be non-negative");
        }
        if !(self.dt_sub > 0.0 && self.dt_sub <= self.dt_sub_max) {
            return bad("dt_sub must lie in (0, dt_sub_max]");
        }
        if !(self.return_delay_s >= 0.0) {
            return bad("return_delay_s must be non-negative");
        }
        Ok(())
    }

    /// Number of sub-steps the return header takes to reach the chillers.
    pub fn delay_substeps(&self) -> usize {
        (self.return_delay_s / self.dt_sub).round() as usize
    }
}

/// Constants of one served building, its exchanger and its air handler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingParams {
    pub name: String,
    /// kg/s
    pub m_max: f64,
    /// kg/s
    pub m_min: f64,
    /// kW/(m²·°C)
    pub k_he: f64,
    /// m²
    pub f_he: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub alpha: f64,
    /// kW/(m²·°C)
    pub u_oa: f64,
    /// m²
    pub a_surf: f64,
    /// m³
    pub volume: f64,
    /// °C
    pub t_set: f64,
    /// kg/s
    pub m_wind_max: f64,
    /// Nominal air flow at the design point, kg/s.
    pub m_wind_design: f64,
    /// Constant secondary pump flow, kg/s.
    pub m_secondary: f64,
    /// Water inventory of the secondary loop, kg.
    pub secondary_mass: f64,
    /// Primary flow at the design point, kg/s.
    pub m_primary_design: f64,
    /// Internal heat load at the design point, kW.
    pub zeta_design: f64,
    /// AHU air-flow controller gains: kg/s per °C and kg/s per °C·s.
    pub ahu_kp: f64,
    pub ahu_ki: f64,
    /// Secondary supply set point held by the building valve in normal operation, °C.
    pub t_ii_supply_set: f64,
}

impl BuildingParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("building {}: {m}", self.name)));
        if !(self.m_min > 0.0 && self.m_min < self.m_max) {
            return bad("require 0 < m_min < m_max");
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in [0, 1)");
        }
        if !(self.eta1 > 0.0 && self.eta1 <= 1.0 && self.eta2 > 0.0 && self.eta2 <= 1.0) {
            return bad("loop efficiencies must lie in (0, 1]");
        }
        if !(self.volume > 0.0) {
            return bad("volume must be positive");
        }
        if !(self.k_he > 0.0 && self.f_he > 0.0 && self.u_oa > 0.0 && self.a_surf > 0.0) {
            return bad("k_he, f_he, u_oa and a_surf must be positive");
        }
        if !(self.m_wind_max > 0.0 && self.m_secondary > 0.0 && self.secondary_mass > 0.0) {
            return bad("air flow bound, secondary flow and loop mass must be positive");
        }
        Ok(())
    }

    /// Air thermal capacity `c^A ρ^A V`, kJ/°C.
    pub fn air_capacity(&self, plant: &PlantParams) -> f64 {
        plant.c_air * plant.rho_air * self.volume
    }

    /// Envelope conductance `U^O-A A^S`, kW/°C.
    pub fn envelope_conductance(&self) -> f64 {
        self.u_oa * self.a_surf
    }
}

/// Nominal temperatures used to size exchangers and air handlers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignPoint {
    pub t_out: f64,
    pub t_i_return: f64,
    pub t_ii_supply: f64,
    pub t_ii_return: f64,
}

impl Default for DesignPoint {
    fn default() -> Self {
        Self {
            t_out: 33.0,
            t_i_return: 12.0,
            t_ii_supply: 13.0,
            t_ii_return: 18.0,
        }
    }
}

/// Inputs from which a building's full parameter set is sized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingSpec {
    pub name: String,
    /// m²
    pub a_surf: f64,
    /// °C
    pub t_set: f64,
    /// kg/s
    pub m_max: f64,
    /// Internal gain at the design point, kW per m² of surface area.
    #[serde(default = "BuildingSpec::default_gain_density")]
    pub gain_density: f64,
    /// Effective height turning surface area into air volume, m.
    #[serde(default = "BuildingSpec::default_h_eff")]
    pub h_eff: f64,
    #[serde(default = "BuildingSpec::default_k_he")]
    pub k_he: f64,
    #[serde(default = "BuildingSpec::default_u_oa")]
    pub u_oa: f64,
    #[serde(default = "BuildingSpec::default_eta")]
    pub eta1: f64,
    #[serde(default = "BuildingSpec::default_eta")]
    pub eta2: f64,
    #[serde(default = "BuildingSpec::default_alpha")]
    pub alpha: f64,
    /// Ratio of the air-flow bound to the design air flow.
    #[serde(default = "BuildingSpec::default_wind_headroom")]
    pub wind_headroom: f64,
    /// Secondary loop inventory expressed as a residence time at design flow, s.
    #[serde(default = "BuildingSpec::default_loop_residence")]
    pub loop_residence_s: f64,
}

impl BuildingSpec {
    fn default_gain_density() -> f64 {
        0.035
    }
    fn default_h_eff() -> f64 {
        4.0
    }
    fn default_k_he() -> f64 {
        4.5
    }
    fn default_u_oa() -> f64 {
        0.0036
    }
    fn default_eta() -> f64 {
        0.9
    }
    fn default_alpha() -> f64 {
        0.1
    }
    fn default_wind_headroom() -> f64 {
        1.5
    }
    fn default_loop_residence() -> f64 {
        120.0
    }

    pub fn new(name: &str, a_surf: f64, t_set: f64, m_max: f64) -> Self {
        Self {
            name: name.to_string(),
            a_surf,
            t_set,
            m_max,
            gain_density: Self::default_gain_density(),
            h_eff: Self::default_h_eff(),
            k_he: Self::default_k_he(),
            u_oa: Self::default_u_oa(),
            eta1: Self::default_eta(),
            eta2: Self::default_eta(),
            alpha: Self::default_alpha(),
            wind_headroom: Self::default_wind_headroom(),
            loop_residence_s: Self::default_loop_residence(),
        }
    }

    /// Size exchanger area, secondary flow and air flow so that the design
    /// load is carried exactly at the design temperatures.
    pub fn size(&self, plant: &PlantParams, design: &DesignPoint) -> Result<BuildingParams> {
        let t_i_supply = pipeline_supply_temp(design.t_out, plant);
        let zeta = self.gain_density * self.a_surf;
        let q_dcs = self.u_oa * self.a_surf * (design.t_out - self.t_set) + zeta;
        let q_he = q_dcs / self.eta2;
        let m_primary = q_he / (self.eta1 * plant.c_water * (design.t_i_return - t_i_supply));
        let dt_secondary = design.t_ii_return - design.t_ii_supply;
        let m_secondary = q_he / (plant.c_water * dt_secondary);
        let (d1, d2) = match plant.arrangement {
            FlowArrangement::Cocurrent => (
                design.t_ii_return - t_i_supply,
                design.t_ii_supply - design.t_i_return,
            ),
            FlowArrangement::Counterflow => (
                design.t_ii_return - design.t_i_return,
                design.t_ii_supply - t_i_supply,
            ),
        };
        let f_he = q_he / (self.k_he * lmtd(d1, d2)?);
        let t_wind = ahu_mix(design.t_ii_supply, design.t_ii_return, design.t_out, self.alpha);
        if !(self.t_set > t_wind) {
            return Err(Error::Config(format!(
                "building {}: set point {} °C is not above the design supply air {t_wind:.2} °C",
                self.name, self.t_set
            )));
        }
        let m_wind = q_dcs / (plant.c_air * (self.t_set - t_wind));
        // Air loop and water loop must agree at the design point.
        let params = BuildingParams {
            name: self.name.clone(),
            m_max: self.m_max,
            m_min: 0.03 * self.m_max,
            k_he: self.k_he,
            f_he,
            eta1: self.eta1,
            eta2: self.eta2,
            alpha: self.alpha,
            u_oa: self.u_oa,
            a_surf: self.a_surf,
            volume: self.a_surf * self.h_eff,
            t_set: self.t_set,
            m_wind_max: self.wind_headroom * m_wind,
            m_wind_design: m_wind,
            m_secondary,
            secondary_mass: m_secondary * self.loop_residence_s,
            m_primary_design: m_primary,
            zeta_design: zeta,
            ahu_kp: 0.25 * m_wind,
            ahu_ki: 0.25 * m_wind / 90.0,
            t_ii_supply_set: design.t_ii_supply,
        };
        let check = ahu_energy_balance(
            m_wind,
            self.t_set,
            t_wind,
            design.t_ii_supply,
            design.t_ii_return,
            &params,
            plant,
        )?;
        debug_assert!((check - m_secondary).abs() <= 1e-9 * m_secondary);
        if m_primary >= self.m_max {
            return Err(Error::Config(format!(
                "building {}: design flow {m_primary:.1} kg/s exceeds m_max {}",
                self.name, self.m_max
            )));
        }
        params.validate()?;
        Ok(params)
    }
}

/// The twelve-building reference site.
pub fn reference_buildings() -> Vec<BuildingSpec> {
    const TABLE: [(f64, f64, f64); 12] = [
        (120_000.0, 22.0, 700.0),
        (280_000.0, 21.0, 1150.0),
        (180_000.0, 23.0, 900.0),
        (100_000.0, 20.0, 600.0),
        (240_000.0, 22.5, 1050.0),
        (150_000.0, 21.5, 800.0),
        (300_000.0, 20.5, 1200.0),
        (210_000.0, 22.0, 950.0),
        (130_000.0, 23.0, 650.0),
        (260_000.0, 21.0, 1100.0),
        (170_000.0, 22.0, 850.0),
        (220_000.0, 20.5, 1000.0),
    ];
    TABLE
        .iter()
        .enumerate()
        .map(|(i, &(a, t, m))| BuildingSpec::new(&format!("b{:02}", i + 1), a, t, m))
        .collect()
}

/// Four buildings drawn from the reference site, spanning its spread of
/// size, set point and flow headroom.
pub fn desk_buildings() -> Vec<BuildingSpec> {
    let all = reference_buildings();
    [0usize, 1, 2, 3]
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let mut spec = all[i].clone();
            spec.name = format!("b{:02}", k + 1);
            spec
        })
        .collect()
}

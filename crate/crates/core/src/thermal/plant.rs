//! Three-loop plant state and its fixed-sub-step integrator.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::thermal::components::{
    ahu_duty, ahu_local_control, ahu_mix, chiller_power, heat_exchanger_solve, heat_loss,
    mix_return, pipeline_supply_temp,
};
use crate::thermal::params::{BuildingParams, PlantParams};

/// Exogenous conditions held over one control interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSample {
    /// °C
    pub t_out: f64,
    /// kW per building
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// s
    pub time: f64,
    pub m_primary: Vec<f64>,
    pub m_secondary: Vec<f64>,
    pub m_wind: Vec<f64>,
    pub m_decoupler: f64,
    pub m_chiller: f64,
    pub t_i_supply: Vec<f64>,
    pub t_i_return: Vec<f64>,
    pub t_ii_supply: Vec<f64>,
    pub t_ii_return: Vec<f64>,
    pub t_wind: Vec<f64>,
    pub t_indoor: Vec<f64>,
    /// Water temperature entering the chillers.
    pub t_ch_return: f64,
    /// Mixed return-header temperature; reaches the chillers after the
    /// return transport delay.
    pub t_return_header: f64,
    pub t_decoupler: f64,
    pub q_chiller: f64,
    pub p_chiller: f64,
    pub q_he: Vec<f64>,
    pub q_dcs: Vec<f64>,
    pub q_loss: Vec<f64>,
    /// Last temperature error seen by each air-handler controller.
    pub ahu_err: Vec<f64>,
    /// Some exchanger reached its pinch during the last interval.
    pub pinched: bool,
    /// Header temperatures still travelling through the return pipe.
    pub return_pipe: VecDeque<f64>,
}

impl PlantState {
    pub fn n_buildings(&self) -> usize {
        self.m_primary.len()
    }

    /// `T^A_i − T^set_i` for every building.
    pub fn delta_t(&self, buildings: &[BuildingParams]) -> Vec<f64> {
        self.t_indoor.iter().zip(buildings).map(|(t, b)| t - b.t_set).collect()
    }
}

/// Heat balance of the return header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAudit {
    /// Heat carried by the mixed return relative to the chiller set point, kW.
    pub q_header: f64,
    /// Exchanger duties seen by the primary loop plus supply-pipe gains, kW.
    pub q_buildings: f64,
    /// `|q_header − q_buildings| / q_chiller`.
    pub residual_rel: f64,
}

/// Plant constants together with the served buildings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub params: PlantParams,
    pub buildings: Vec<BuildingParams>,
}

impl Plant {
    pub fn new(params: PlantParams, buildings: Vec<BuildingParams>) -> Result<Self> {
        params.validate()?;
        if buildings.len() != params.n_buildings {
            return Err(Error::Config(format!(
                "plant declares {} buildings but {} were supplied",
                params.n_buildings,
                buildings.len()
            )));
        }
        for b in &buildings {
            b.validate()?;
        }
        Ok(Self { params, buildings })
    }

    pub fn n(&self) -> usize {
        self.buildings.len()
    }

    pub fn m_min(&self) -> Vec<f64> {
        self.buildings.iter().map(|b| b.m_min).collect()
    }

    pub fn m_max(&self) -> Vec<f64> {
        self.buildings.iter().map(|b| b.m_max).collect()
    }

    /// Chiller power per unit of building primary flow for the coming
    /// interval, kW·s/kg. Uses the return temperature measured now at the
    /// header, which is what the chillers receive one transport delay later.
    pub fn theta(&self, state: &PlantState) -> f64 {
        let p = &self.params;
        (1.0 + p.pump_margin) * p.c_water * (state.t_return_header - p.t_ch_supply) / p.cop
    }

    /// Lowest power reachable in the next interval: every building at `m_min`.
    pub fn min_power(&self, state: &PlantState) -> f64 {
        let theta = self.theta(state);
        self.buildings.iter().map(|b| b.m_min * theta).sum()
    }

    /// Design operating point with every loop at its nominal temperatures,
    /// evaluated under `sample`.
    pub fn design_state(&self, sample: &ScenarioSample) -> Result<PlantState> {
        let n = self.n();
        check_sample(sample, n)?;
        let mut s = PlantState {
            time: 0.0,
            m_primary: self.buildings.iter().map(|b| b.m_primary_design).collect(),
            m_secondary: self.buildings.iter().map(|b| b.m_secondary).collect(),
            m_wind: self.buildings.iter().map(|b| b.m_wind_design).collect(),
            m_decoupler: 0.0,
            m_chiller: 0.0,
            t_i_supply: vec![0.0; n],
            t_i_return: vec![0.0; n],
            t_ii_supply: vec![0.0; n],
            t_ii_return: self.buildings.iter().map(|b| b.t_ii_supply_set + 5.0).collect(),
            t_wind: vec![0.0; n],
            t_indoor: self.buildings.iter().map(|b| b.t_set).collect(),
            t_ch_return: 0.0,
            t_return_header: 0.0,
            t_decoupler: self.params.t_ch_supply,
            q_chiller: 0.0,
            p_chiller: 0.0,
            q_he: vec![0.0; n],
            q_dcs: vec![0.0; n],
            q_loss: vec![0.0; n],
            ahu_err: vec![0.0; n],
            pinched: false,
            return_pipe: VecDeque::new(),
        };
        self.evaluate(&mut s, sample)?;
        s.t_ch_return = s.t_return_header;
        s.return_pipe = std::iter::repeat_n(s.t_return_header, self.params.delay_substeps()).collect();
        let (q, p) = chiller_power(s.m_chiller, s.t_ch_return, &self.params)?;
        s.q_chiller = q;
        s.p_chiller = p;
        Ok(s)
    }

    /// Algebraic part of the model at the current flows and dynamic states.
    fn evaluate(&self, s: &mut PlantState, sample: &ScenarioSample) -> Result<()> {
        let p = &self.params;
        let t_i_s = pipeline_supply_temp(sample.t_out, p);
        for (i, b) in self.buildings.iter().enumerate() {
            let hx = heat_exchanger_solve(s.m_primary[i], s.m_secondary[i], t_i_s, s.t_ii_return[i], b, p)?;
            s.pinched |= hx.pinched;
            s.t_i_supply[i] = t_i_s;
            s.t_i_return[i] = hx.t_i_return;
            s.t_ii_supply[i] = hx.t_ii_supply;
            s.q_he[i] = hx.q;
            s.t_wind[i] = ahu_mix(hx.t_ii_supply, s.t_ii_return[i], sample.t_out, b.alpha);
            s.q_dcs[i] = ahu_duty(s.m_wind[i], s.t_indoor[i], s.t_wind[i], p);
            s.q_loss[i] = heat_loss(s.t_indoor[i], sample.t_out, sample.zeta[i], b);
        }
        s.m_decoupler = p.pump_margin * s.m_primary.iter().sum::<f64>();
        s.t_decoupler = p.t_ch_supply;
        let (m_ch, t_hdr) = mix_return(&s.m_primary, &s.t_i_return, s.m_decoupler, s.t_decoupler)?;
        s.m_chiller = m_ch;
        s.t_return_header = t_hdr;
        Ok(())
    }

    /// Advance one control interval with the primary flows held at `m_next`.
    pub fn step(
        &self,
        state: &PlantState,
        m_next: &[f64],
        sample: &ScenarioSample,
        dt_control: f64,
    ) -> Result<PlantState> {
        let p = &self.params;
        let n = self.n();
        check_sample(sample, n)?;
        if m_next.len() != n {
            return Err(domain(format!("expected {n} primary flows, got {}", m_next.len())));
        }
        for (i, (&m, b)) in m_next.iter().zip(&self.buildings).enumerate() {
            let slack = 1e-9 * b.m_max;
            if !(m >= b.m_min - slack && m <= b.m_max + slack) {
                return Err(domain(format!(
                    "building {i} flow {m} outside [{}, {}]",
                    b.m_min, b.m_max
                )));
            }
        }
        let n_sub = (dt_control / p.dt_sub).round() as usize;
        if n_sub == 0 || ((n_sub as f64) * p.dt_sub - dt_control).abs() > 1e-9 * dt_control {
            return Err(domain(format!(
                "control interval {dt_control} s is not a multiple of the sub-step {} s",
                p.dt_sub
            )));
        }
        let dt = p.dt_sub;
        let mut s = state.clone();
        s.pinched = false;
        s.m_primary = m_next.iter().zip(&self.buildings).map(|(&m, b)| m.clamp(b.m_min, b.m_max)).collect();
        self.evaluate(&mut s, sample)?;
        for k in 1..=n_sub {
            for (i, b) in self.buildings.iter().enumerate() {
                s.t_indoor[i] += dt * (s.q_loss[i] - s.q_dcs[i]) / b.air_capacity(p);
                s.t_ii_return[i] +=
                    dt * (s.q_dcs[i] / b.eta2 - s.q_he[i]) / (b.secondary_mass * p.c_water);
                let (m_w, e) = ahu_local_control(s.t_indoor[i], s.ahu_err[i], s.m_wind[i], b, dt);
                s.m_wind[i] = m_w;
                s.ahu_err[i] = e;
            }
            s.time = state.time + k as f64 * dt;
            self.evaluate(&mut s, sample).map_err(|e| Error::Step {
                step: k,
                source: Box::new(e),
            })?;
            s.t_ch_return = match s.return_pipe.pop_front() {
                Some(t) => {
                    s.return_pipe.push_back(s.t_return_header);
                    t
                }
                None => s.t_return_header,
            };
            let (q, pw) = chiller_power(s.m_chiller, s.t_ch_return, p).map_err(|e| Error::Step {
                step: k,
                source: Box::new(e),
            })?;
            s.q_chiller = q;
            s.p_chiller = pw;
        }
        if s.t_indoor.iter().chain(&s.t_ii_return).any(|v| !v.is_finite()) {
            return Err(domain("non-finite plant temperature"));
        }
        Ok(s)
    }

    pub fn energy_audit(&self, s: &PlantState) -> EnergyAudit {
        let p = &self.params;
        let q_header = s.m_chiller * p.c_water * (s.t_return_header - p.t_ch_supply);
        let q_buildings: f64 = self
            .buildings
            .iter()
            .enumerate()
            .map(|(i, b)| {
                s.q_he[i] / b.eta1 + s.m_primary[i] * p.c_water * (s.t_i_supply[i] - p.t_ch_supply)
            })
            .sum();
        let scale = s.q_chiller.abs().max(f64::MIN_POSITIVE);
        EnergyAudit {
            q_header,
            q_buildings,
            residual_rel: (q_header - q_buildings).abs() / scale,
        }
    }
}

fn check_sample(sample: &ScenarioSample, n: usize) -> Result<()> {
    if sample.zeta.len() != n {
        return Err(domain(format!("scenario has {} loads for {n} buildings", sample.zeta.len())));
    }
    if !sample.t_out.is_finite() || sample.zeta.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
        return Err(domain("scenario sample must be finite with non-negative loads"));
    }
    Ok(())
}

/// Free-function form of [`Plant::step`].
pub fn plant_step(
    state: &PlantState,
    m_primary_next: &[f64],
    sample: &ScenarioSample,
    plant: &Plant,
    dt_control: f64,
) -> Result<PlantState> {
    plant.step(state, m_primary_next, sample, dt_control)
}

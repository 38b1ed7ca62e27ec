//! District cooling plant physics.

pub mod components;
pub mod params;
pub mod plant;

pub use components::{
    ahu_energy_balance, ahu_local_control, ahu_mix, building_step, chiller_power,
    heat_exchanger_solve, lmtd, mix_return, pipeline_supply_temp, HxSolution,
};
pub use params::{
    desk_buildings, reference_buildings, BuildingParams, BuildingSpec, DesignPoint,
    FlowArrangement, PlantParams,
};
pub use plant::{plant_step, EnergyAudit, Plant, PlantState, ScenarioSample};

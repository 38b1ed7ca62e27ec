//! Self-checks of the simulator and the safe layer, each against an
//! independent oracle with a stated tolerance.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{PlantFile, SitePreset};
use crate::env::{adaptive_factor, DcsEnv, EpisodeConfig, RewardKind};
use crate::error::Result;
use crate::safelayer::{lp_constraints, predict_power, project, HalfPlane, ProjectionStatus, SafeContext};
use crate::scenario::{generate, ScenarioConfig};
use crate::thermal::{building_step, lmtd, BuildingParams, Plant, PlantParams, PlantState};

pub const VALIDATION_SCHEMA_VERSION: u32 = 1;

/// Largest tolerated energy-audit residual, as a fraction of `Q^ch`.
pub const AUDIT_TOL: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// What `measured` is compared against `tolerance` with.
    pub metric: String,
    pub measured: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s += &format!(
                "{:<4} {:<26} {} = {:.3e} (tol {:.1e}, n = {})\n",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                c.metric,
                c.measured,
                c.tolerance,
                c.samples
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub lp_cases: usize,
    pub lmtd_cases: usize,
    pub seed: u64,
    /// Multiplies every exchanger duty before the energy audit; 1 audits the
    /// simulator as it is.
    pub energy_bug: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { lp_cases: 10_000, lmtd_cases: 100_000, seed: 7, energy_bug: 1.0 }
    }
}

fn check(name: &str, metric: &str, measured: f64, tolerance: f64, samples: usize) -> CheckResult {
    CheckResult {
        name: name.into(),
        metric: metric.into(),
        measured,
        tolerance,
        samples,
        passed: measured <= tolerance,
    }
}

pub fn run_suite(opts: &SuiteOptions) -> Result<ValidationReport> {
    let plant = PlantFile::preset(SitePreset::Desk).build()?;
    let states = random_walk(&plant, 90, opts.seed)?;
    let mut checks = vec![
        mass_balance(&states),
        power_identity(&plant.params, &states),
        energy_audit(&plant, &states, opts.energy_bug),
        mutation_detected(&plant, &states),
        lmtd_bounds(opts.lmtd_cases, opts.seed),
        time_constant(&plant),
        recovery_law(),
    ];
    checks.extend(lp_vs_oracle(opts.lp_cases, opts.seed));
    Ok(ValidationReport { schema_version: VALIDATION_SCHEMA_VERSION, checks })
}

/// States of an afternoon with random flow changes every minute.
pub fn random_walk(plant: &Plant, steps: usize, seed: u64) -> Result<Vec<PlantState>> {
    let scen = ScenarioConfig::daily(plant.buildings.iter().map(|b| b.zeta_design).collect());
    let profile = Arc::new(generate(seed, &scen)?);
    let env = DcsEnv::new(plant.clone(), profile.clone(), EpisodeConfig::afternoon(1.0), RewardKind::Comfort)?;
    let mut s = env.preroll(0.0)?.state;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![s.clone()];
    for _ in 0..steps {
        let m: Vec<f64> = plant
            .buildings
            .iter()
            .zip(&s.m_primary)
            .map(|(b, m)| (m + rng.random_range(-0.1..0.1) * b.m_max).clamp(b.m_min, b.m_max))
            .collect();
        s = plant.step(&s, &m, &profile.sample(s.time), 60.0)?;
        out.push(s.clone());
    }
    Ok(out)
}

fn mass_balance(states: &[PlantState]) -> CheckResult {
    let worst = states
        .iter()
        .map(|s| (s.m_chiller - s.m_decoupler - s.m_primary.iter().sum::<f64>()).abs() / s.m_chiller)
        .fold(0.0, f64::max);
    check("mass_balance", "max |m_ch - m_dec - sum m| / m_ch", worst, 1e-12, states.len())
}

fn power_identity(params: &PlantParams, states: &[PlantState]) -> CheckResult {
    let worst = states
        .iter()
        .map(|s| (s.p_chiller - s.q_chiller / params.cop).abs() / s.p_chiller)
        .fold(0.0, f64::max);
    check("power_identity", "max |P - Q/COP| / P", worst, 1e-12, states.len())
}

/// Audit residual of `s` with every exchanger duty scaled by `energy_bug`.
fn audit_residual(plant: &Plant, s: &PlantState, energy_bug: f64) -> f64 {
    if energy_bug == 1.0 {
        return plant.energy_audit(s).residual_rel;
    }
    let mut m = s.clone();
    m.q_he.iter_mut().for_each(|q| *q *= energy_bug);
    plant.energy_audit(&m).residual_rel
}

fn energy_audit(plant: &Plant, states: &[PlantState], energy_bug: f64) -> CheckResult {
    let worst = states.iter().map(|s| audit_residual(plant, s, energy_bug)).fold(0.0, f64::max);
    check("energy_audit", "max residual / Q_ch", worst, AUDIT_TOL, states.len())
}

/// The audit must reject a 10 % loss of exchanger duty in every state.
fn mutation_detected(plant: &Plant, states: &[PlantState]) -> CheckResult {
    let missed = states.iter().filter(|s| audit_residual(plant, s, 0.9) <= AUDIT_TOL).count();
    check("energy_mutation_detected", "states where a -10% duty passes", missed as f64, 0.0, states.len())
}

/// Geometric mean ≤ LMTD ≤ arithmetic mean.
fn lmtd_bounds(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a7d);
    let mut worst = 0.0_f64;
    for _ in 0..cases {
        let d1 = 10f64.powf(rng.random_range(-3.0..2.0));
        let d2 = 10f64.powf(rng.random_range(-3.0..2.0));
        let Ok(l) = lmtd(d1, d2) else {
            worst = f64::INFINITY;
            continue;
        };
        let (g, a) = ((d1 * d2).sqrt(), 0.5 * (d1 + d2));
        worst = worst.max((g - l) / g).max((l - a) / a);
    }
    check("lmtd_bounds", "max relative excursion outside [GM, AM]", worst.max(0.0), 1e-12, cases)
}

/// Step response of the indoor air with the air handler's flow and supply
/// temperature frozen, against `K1 / (K2 + K4)`.
pub fn time_constant_error(b: &BuildingParams, params: &PlantParams) -> f64 {
    let k1 = b.air_capacity(params);
    let k2 = b.m_wind_design * params.c_air;
    let k4 = b.envelope_conductance();
    let tau = k1 / (k2 + k4);
    let (t_w, t_out, zeta0) = (13.0, 30.0, b.zeta_design);
    // equilibrium before and after a 20 % load step
    let eq = |z: f64| (k2 * t_w + k4 * t_out + z) / (k2 + k4);
    let (t_start, t_end) = (eq(zeta0), eq(1.2 * zeta0));
    let target = t_start + (1.0 - (-1.0f64).exp()) * (t_end - t_start);
    let dt = params.dt_sub;
    let (mut t, mut time) = (t_start, 0.0);
    loop {
        let q_dcs = k2 * (t - t_w);
        let next = building_step(t, q_dcs, t_out, 1.2 * zeta0, b, params, dt).expect("valid sub-step");
        if next >= target {
            // interpolate the crossing inside the sub-step
            time += dt * (target - t) / (next - t);
            break;
        }
        t = next;
        time += dt;
    }
    (time - tau).abs() / tau
}

fn time_constant(plant: &Plant) -> CheckResult {
    let worst = plant
        .buildings
        .iter()
        .map(|b| time_constant_error(b, &plant.params))
        .fold(0.0, f64::max);
    check("time_constant", "max |t63 - K1/(K2+K4)| / tau", worst, 0.05, plant.n())
}

fn recovery_law() -> CheckResult {
    let (t1, t2, d) = (1000.0, 4600.0, 1.3);
    let mid = (adaptive_factor(d, 0.5 * (t1 + t2), t1, t2, 6.0) - 0.5 * d).abs();
    let end = (adaptive_factor(d, t2, t1, t2, 6.0) - d / (1.0 + 3f64.exp())).abs();
    check("recovery_target_law", "max |phi - closed form|", mid.max(end), 1e-12, 2)
}

/// Maximum of `μ + υ` over `a·μ + b·υ ≤ c`, `μ ≤ 0`, `υ ≤ 0`, found by
/// searching over `υ` alone: for fixed `υ` the best `μ` is the smallest
/// upper bound, which is concave in `υ`.
pub fn lp_oracle(constraints: &[HalfPlane]) -> Option<(f64, f64)> {
    let norm: Vec<(f64, f64, f64)> = constraints
        .iter()
        .map(|h| {
            let s = h.a.abs().max(h.b.abs()).max(h.c.abs()).max(f64::MIN_POSITIVE);
            (h.a / s, h.b / s, h.c / s)
        })
        .collect();
    // (upper bound on μ, infeasibility) for a given υ
    let bounds = |up: f64| {
        let (mut hi, mut lo, mut gap) = (0.0_f64, f64::NEG_INFINITY, 0.0_f64);
        for &(a, b, c) in &norm {
            let r = c - b * up;
            if a > 0.0 {
                hi = hi.min(r / a);
            } else if a < 0.0 {
                lo = lo.max(r / a);
            } else {
                gap = gap.max(-r);
            }
        }
        (hi, gap.max(lo - hi))
    };
    const SPAN: f64 = 1e6;
    let argmin = |f: &dyn Fn(f64) -> f64, mut l: f64, mut r: f64| {
        for _ in 0..300 {
            let (a, b) = (l + (r - l) / 3.0, r - (r - l) / 3.0);
            if f(a) <= f(b) {
                r = b;
            } else {
                l = a;
            }
        }
        0.5 * (l + r)
    };
    let gap = |u: f64| bounds(u).1;
    let u0 = argmin(&gap, -SPAN, 0.0);
    if gap(u0) > 1e-10 {
        return None;
    }
    // edges of the feasible υ interval; the small floor keeps slivers between
    // parallel constraints from collapsing to one point
    let thr = gap(u0).max(1e-13);
    let edge = |mut inside: f64, mut outside: f64| {
        if gap(outside) <= thr {
            return outside;
        }
        for _ in 0..200 {
            let m = 0.5 * (inside + outside);
            if gap(m) <= thr {
                inside = m;
            } else {
                outside = m;
            }
        }
        inside
    };
    let (l, r) = (edge(u0, -SPAN), edge(u0, 0.0));
    let neg_obj = |u: f64| -(bounds(u).0 + u);
    let u = argmin(&neg_obj, l, r);
    Some((bounds(u).0, u))
}

fn random_case(rng: &mut ChaCha8Rng) -> (SafeContext, Vec<f64>) {
    let n = rng.random_range(1..=6);
    let m_max: Vec<f64> = (0..n).map(|_| rng.random_range(300.0..1500.0)).collect();
    let m_min: Vec<f64> = m_max.iter().map(|m| 0.03 * m).collect();
    let m_now: Vec<f64> = (0..n).map(|i| rng.random_range(m_min[i]..m_max[i])).collect();
    let d: Vec<f64> = m_max.iter().map(|m| rng.random_range(-0.4..0.4) * m).collect();
    let theta = rng.random_range(3.0..12.0);
    let mut ctx = SafeContext { theta, p_cap_active: 0.0, m_now, m_min, m_max };
    let d_box = crate::safelayer::clamp_to_box(&d, &ctx);
    let prop: Vec<f64> = ctx.m_now.iter().zip(&d_box).map(|(m, d)| m + d).collect();
    let (lo, hi) = (ctx.min_power(), predict_power(&prop, &ctx));
    // most caps bind; a few lie below the minimum-flow power
    ctx.p_cap_active = if rng.random_bool(0.05) {
        lo * rng.random_range(0.5..1.0)
    } else {
        lo + rng.random_range(0.0..1.0) * (hi - lo).max(0.0)
    };
    (ctx, d)
}

fn lp_vs_oracle(cases: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5afe);
    let (mut obj_err, mut cap_err, mut status_mismatch) = (0.0_f64, 0.0_f64, 0usize);
    for _ in 0..cases {
        let (ctx, d) = random_case(&mut rng);
        let p = project(&d, &ctx);
        let power = predict_power(&p.m_next, &ctx);
        match p.status {
            ProjectionStatus::Infeasible => {
                if ctx.p_cap_active >= ctx.min_power() || p.m_next != ctx.m_min {
                    status_mismatch += 1;
                }
                continue;
            }
            _ => cap_err = cap_err.max((power - ctx.p_cap_active).max(0.0) / ctx.p_cap_active),
        }
        let cons = lp_constraints(&crate::safelayer::clamp_to_box(&d, &ctx), &ctx);
        match (p.status, lp_oracle(&cons)) {
            (ProjectionStatus::Projected, Some((mu, up))) => {
                let o = mu + up;
                obj_err = obj_err.max((p.mu + p.upsilon - o).abs() / o.abs().max(1.0));
            }
            (ProjectionStatus::Fallback, None) | (ProjectionStatus::Unchanged, _) => {}
            _ => status_mismatch += 1,
        }
    }
    vec![
        check("lp_objective", "max |(mu+upsilon) - oracle| / max(1, |oracle|)", obj_err, 1e-9, cases),
        check("lp_cap", "max (P - cap)+ / cap", cap_err, 1e-9, cases),
        check("lp_status", "cases where solver and oracle disagree on feasibility", status_mismatch as f64, 0.0, cases),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safelayer::{solve_lp2, ConstraintLabel};

    fn hp(a: f64, b: f64, c: f64) -> HalfPlane {
        HalfPlane { a, b, c, label: ConstraintLabel::Cap }
    }

    #[test]
    fn oracle_on_a_hand_lp() {
        // μ + 2υ ≤ -1 and μ ≥ -3: trading μ for υ pays until μ = 0, υ = -1/2
        let cons = [hp(1.0, 2.0, -1.0), hp(-1.0, 0.0, 3.0)];
        let (mu, up) = lp_oracle(&cons).unwrap();
        assert!(mu.abs() < 1e-12 && (up + 0.5).abs() < 1e-12, "{mu} {up}");
        // 2μ + υ ≤ -2 with μ ≥ -0.5: objective -1.5 at μ = -0.5, υ = -1
        let cons = [hp(2.0, 1.0, -2.0), hp(-1.0, 0.0, 0.5)];
        let (mu, up) = lp_oracle(&cons).unwrap();
        assert!((mu + up + 1.5).abs() < 1e-9, "{mu} {up}");
        assert!(lp_oracle(&[hp(1.0, 1.0, -2.0), hp(-1.0, 0.0, 0.5), hp(0.0, -1.0, 0.5)]).is_none());
    }

    #[test]
    fn oracle_agrees_with_vertex_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (ctx, d) = random_case(&mut rng);
            let cons = lp_constraints(&crate::safelayer::clamp_to_box(&d, &ctx), &ctx);
            match (solve_lp2(&cons), lp_oracle(&cons)) {
                (Ok((m, u)), Some((om, ou))) => {
                    assert!(((m + u) - (om + ou)).abs() <= 1e-9 * (om + ou).abs().max(1.0));
                }
                (Err(_), None) => {}
                (a, b) => panic!("disagree: {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn suite_passes_and_catches_energy_bug() {
        let opts = SuiteOptions { lp_cases: 300, lmtd_cases: 2000, ..SuiteOptions::default() };
        let r = run_suite(&opts).unwrap();
        assert!(r.passed(), "{}", r.render());
        let bugged = run_suite(&SuiteOptions { energy_bug: 0.9, ..opts }).unwrap();
        assert!(!bugged.check("energy_audit").unwrap().passed);
        assert!(!bugged.passed());
    }

    #[test]
    fn time_constant_of_a_light_building() {
        let plant = PlantFile::preset(SitePreset::Desk).build().unwrap();
        for b in &plant.buildings {
            assert!(time_constant_error(b, &plant.params) < 0.05);
        }
    }
}

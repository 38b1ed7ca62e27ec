//! Power-cap projection of proposed flow changes.
//!
//! A proposed change `Δm` is corrected to `Δm + μΔm + υ·m_now` with the two
//! coefficients chosen by a two-variable linear program: maximise `μ + υ`
//! subject to the power cap on the resulting flows, the per-building flow
//! box, and `μ, υ ≤ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack under which a predicted power counts as meeting the cap.
const CAP_SLACK: f64 = 1e-12;
/// Relative slack used when testing LP vertices for feasibility.
const VERTEX_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeContext {
    /// Power per unit of primary flow for the next interval, kW·s/kg.
    pub theta: f64,
    /// kW
    pub p_cap_active: f64,
    pub m_now: Vec<f64>,
    pub m_min: Vec<f64>,
    pub m_max: Vec<f64>,
}

impl SafeContext {
    pub fn min_power(&self) -> f64 {
        predict_power(&self.m_min, self)
    }
}

/// Next-interval power if the primary flows are set to `m_next`.
pub fn predict_power(m_next: &[f64], ctx: &SafeContext) -> f64 {
    m_next.iter().map(|m| m * ctx.theta).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintLabel {
    Cap,
    Lower(usize),
    Upper(usize),
    MuSign,
    UpsilonSign,
}

/// Half-plane `a·μ + b·υ ≤ c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub label: ConstraintLabel,
}

impl HalfPlane {
    fn slack(&self, mu: f64, up: f64) -> f64 {
        self.c - self.a * mu - self.b * up
    }

    fn scale(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs()).max(f64::MIN_POSITIVE)
    }
}

fn intersect(p: &HalfPlane, q: &HalfPlane) -> Option<(f64, f64)> {
    let det = p.a * q.b - p.b * q.a;
    let norm = p.a.hypot(p.b) * q.a.hypot(q.b);
    if norm == 0.0 || det.abs() <= 1e-14 * norm {
        return None;
    }
    Some(((p.c * q.b - p.b * q.c) / det, (p.a * q.c - p.c * q.a) / det))
}

/// Exact maximiser of `μ + υ` over the given half-planes together with
/// `μ ≤ 0` and `υ ≤ 0`, by enumeration of pairwise vertices.
///
/// Among optimal vertices the one with the larger `μ` is returned.
pub fn solve_lp2(constraints: &[HalfPlane]) -> Result<(f64, f64)> {
    let mut all = constraints.to_vec();
    all.push(HalfPlane { a: 1.0, b: 0.0, c: 0.0, label: ConstraintLabel::MuSign });
    all.push(HalfPlane { a: 0.0, b: 1.0, c: 0.0, label: ConstraintLabel::UpsilonSign });
    let feasible = |mu: f64, up: f64| {
        all.iter().all(|h| h.slack(mu, up) >= -VERTEX_SLACK * h.scale())
    };
    let mut best: Option<(f64, f64)> = None;
    // Worst violation at each vertex, kept to explain infeasibility.
    let mut least_bad: Option<(f64, ConstraintLabel)> = None;
    for i in 0..all.len() {
        for j in (i + 1)..all.len() {
            let Some((mu, up)) = intersect(&all[i], &all[j]) else { continue };
            if !(mu.is_finite() && up.is_finite()) {
                continue;
            }
            if feasible(mu, up) {
                let better = match best {
                    None => true,
                    Some((bm, bu)) => {
                        let (o, bo) = (mu + up, bm + bu);
                        let tol = 1e-12 * (1.0 + o.abs().max(bo.abs()));
                        o > bo + tol || ((o - bo).abs() <= tol && mu > bm)
                    }
                };
                if better {
                    best = Some((mu, up));
                }
            } else {
                let (viol, label) = all
                    .iter()
                    .map(|h| (-h.slack(mu, up) / h.scale(), h.label))
                    .fold((f64::NEG_INFINITY, ConstraintLabel::Cap), |acc, x| {
                        if x.0 > acc.0 { x } else { acc }
                    });
                if least_bad.is_none_or(|(v, _)| viol < v) {
                    least_bad = Some((viol, label));
                }
            }
        }
    }
    best.ok_or_else(|| {
        let label = least_bad.map(|(_, l)| l).unwrap_or(ConstraintLabel::Cap);
        Error::Infeasible(format!("no feasible (mu, upsilon); binding constraint {label:?}"))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionStatus {
    /// The proposal already met the cap.
    Unchanged,
    /// Corrected by the two-coefficient program.
    Projected,
    /// The program had no solution although the cap is reachable; flows were
    /// moved uniformly toward their minima until the cap was met.
    Fallback,
    /// The cap lies below the minimum-flow power; flows were set to their minima.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// Flows to apply, inside the box.
    pub m_next: Vec<f64>,
    /// `m_next − m_now`.
    pub delta_m: Vec<f64>,
    /// Zero unless `status` is `Projected`.
    pub mu: f64,
    pub upsilon: f64,
    pub status: ProjectionStatus,
    /// Power with every building at its minimum flow, kW.
    pub min_power: f64,
}

fn from_flows(
    m_next: Vec<f64>,
    ctx: &SafeContext,
    mu: f64,
    upsilon: f64,
    status: ProjectionStatus,
    min_power: f64,
) -> Projection {
    let m_next: Vec<f64> = m_next
        .iter()
        .enumerate()
        .map(|(i, m)| m.clamp(ctx.m_min[i], ctx.m_max[i]))
        .collect();
    let delta_m = m_next.iter().zip(&ctx.m_now).map(|(a, b)| a - b).collect();
    Projection { m_next, delta_m, mu, upsilon, status, min_power }
}

/// Limit `delta_m` so that `m_now + delta_m` stays inside the flow box.
pub fn clamp_to_box(delta_m: &[f64], ctx: &SafeContext) -> Vec<f64> {
    delta_m
        .iter()
        .enumerate()
        .map(|(i, d)| (ctx.m_now[i] + d).clamp(ctx.m_min[i], ctx.m_max[i]) - ctx.m_now[i])
        .collect()
}

/// Constraints of the correction program for a box-feasible proposal.
pub fn lp_constraints(delta_m: &[f64], ctx: &SafeContext) -> Vec<HalfPlane> {
    let n = delta_m.len();
    let mut out = Vec::with_capacity(2 * n + 1);
    let sum_d: f64 = delta_m.iter().sum();
    let sum_m: f64 = ctx.m_now.iter().sum();
    let base: f64 = ctx.m_now.iter().zip(delta_m).map(|(m, d)| m + d).sum();
    out.push(HalfPlane {
        a: ctx.theta * sum_d,
        b: ctx.theta * sum_m,
        c: ctx.p_cap_active - ctx.theta * base,
        label: ConstraintLabel::Cap,
    });
    for i in 0..n {
        let base = ctx.m_now[i] + delta_m[i];
        out.push(HalfPlane {
            a: delta_m[i],
            b: ctx.m_now[i],
            c: ctx.m_max[i] - base,
            label: ConstraintLabel::Upper(i),
        });
        out.push(HalfPlane {
            a: -delta_m[i],
            b: -ctx.m_now[i],
            c: base - ctx.m_min[i],
            label: ConstraintLabel::Lower(i),
        });
    }
    out
}

/// Map a proposed change onto one that respects the cap and the flow box.
pub fn project(delta_m: &[f64], ctx: &SafeContext) -> Projection {
    let min_power = ctx.min_power();
    let d = clamp_to_box(delta_m, ctx);
    let proposed: Vec<f64> = ctx.m_now.iter().zip(&d).map(|(m, d)| m + d).collect();
    let p_prop = predict_power(&proposed, ctx);
    if p_prop <= ctx.p_cap_active * (1.0 + CAP_SLACK) {
        return from_flows(proposed, ctx, 0.0, 0.0, ProjectionStatus::Unchanged, min_power);
    }
    if ctx.p_cap_active < min_power {
        return from_flows(ctx.m_min.clone(), ctx, 0.0, 0.0, ProjectionStatus::Infeasible, min_power);
    }
    match solve_lp2(&lp_constraints(&d, ctx)) {
        Ok((mu, up)) => {
            let m_next = d
                .iter()
                .zip(&ctx.m_now)
                .map(|(di, m)| m + (1.0 + mu) * di + up * m)
                .collect();
            from_flows(m_next, ctx, mu, up, ProjectionStatus::Projected, min_power)
        }
        Err(_) => {
            // Blend between the proposal and the all-minimum flows.
            let s = ((ctx.p_cap_active - min_power) / (p_prop - min_power)).clamp(0.0, 1.0);
            let m_next = proposed
                .iter()
                .zip(&ctx.m_min)
                .map(|(p, lo)| lo + s * (p - lo))
                .collect();
            from_flows(m_next, ctx, 0.0, 0.0, ProjectionStatus::Fallback, min_power)
        }
    }
}

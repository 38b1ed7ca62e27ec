//! Stage rewards and the recovery pacing factor.

/// Comfort reward of the reduction stage: `−θ^r·mean|ΔT| − var(ΔT)`, with
/// the population variance over buildings.
pub fn reward_reduction(next_delta_t: &[f64], theta_r: f64) -> f64 {
    let n = next_delta_t.len() as f64;
    let mean_abs = next_delta_t.iter().map(|d| d.abs()).sum::<f64>() / n;
    let mean = next_delta_t.iter().sum::<f64>() / n;
    let var = next_delta_t.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    -theta_r * mean_abs - var
}

/// Deviation the building is allowed to keep at time `t` of the recovery
/// window `[t1, t2]`.
pub fn adaptive_factor(delta_t_at_t1: f64, t: f64, t1: f64, t2: f64, lambda: f64) -> f64 {
    let x = (t - t1) / (t2 - t1) - 0.5;
    delta_t_at_t1 / (1.0 + (lambda * x).exp())
}

/// Tracking reward of the recovery stage: `−mean|ΔT − φ|`.
pub fn reward_recovery(next_delta_t: &[f64], phi: &[f64]) -> f64 {
    debug_assert_eq!(next_delta_t.len(), phi.len());
    let n = next_delta_t.len() as f64;
    -next_delta_t.iter().zip(phi).map(|(d, p)| (d - p).abs()).sum::<f64>() / n
}

/// Discounted return `Σ γ^τ r_τ` of a reward sequence.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |g, r| r + gamma * g)
}

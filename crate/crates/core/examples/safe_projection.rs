//! Project a flow increase that would break the power cap and compare the
//! corrected flows with the proposal.

use dcs_reserve::safelayer::{predict_power, project, SafeContext};

fn main() {
    let ctx = SafeContext {
        theta: 7.5,
        p_cap_active: 9000.0,
        m_now: vec![400.0, 300.0, 350.0, 200.0],
        m_min: vec![24.0, 18.0, 21.0, 12.0],
        m_max: vec![800.0, 600.0, 700.0, 400.0],
    };
    let proposal = [80.0, 40.0, -30.0, 60.0];
    let raw: Vec<f64> = ctx.m_now.iter().zip(&proposal).map(|(m, d)| m + d).collect();
    println!("cap {:.0} kW, proposal would draw {:.0} kW", ctx.p_cap_active, predict_power(&raw, &ctx));

    let p = project(&proposal, &ctx);
    println!("status {:?}, mu {:.4}, upsilon {:.4}", p.status, p.mu, p.upsilon);
    for (i, (d, q)) in proposal.iter().zip(&p.delta_m).enumerate() {
        println!("  building {i}: proposed {d:+7.2} kg/s, applied {q:+7.2} kg/s");
    }
    println!("projected power {:.3} kW (minimum reachable {:.0} kW)", predict_power(&p.m_next, &ctx), p.min_power);

    let low = SafeContext { p_cap_active: 0.5 * ctx.min_power(), ..ctx };
    let p = project(&proposal, &low);
    println!("cap below the minimum-flow power: {:?}, flows {:?}", p.status, p.m_next);
}

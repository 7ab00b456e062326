//! Five unicycles enclose a target moving along a line, using only sampled
//! positions of the target.

use std::sync::Arc;

use dgvf::engine::run;
use dgvf::paths::{CompositeManifold, Interception, ParametricCurve, RealTimeTarget, DEFAULT_VELOCITY_WINDOW};
use dgvf::scenario::load_scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut scenario = load_scenario("exp1-circle")?;
    // diagonal target instead of the builtin one
    let target = Arc::new(RealTimeTarget::from_fn(3, scenario.duration + 1.0, 0.01, DEFAULT_VELOCITY_WINDOW, |t| {
        vec![0.015 * t, 0.01 * t, 0.0]
    })?);
    let g = ParametricCurve::parse(&["0.24*cos(w)", "0.24*sin(w)", "0"])?;
    let manifold = CompositeManifold::new(Interception::Target(target.clone()), g)?;
    scenario.manifolds = vec![manifold; scenario.robot_count()];
    scenario.target = Some(target.clone());

    let out = run(&scenario)?;
    let t = out.final_world.t;
    let c = target.position(t);
    println!("target at t = {t}: ({:.3}, {:.3})", c[0], c[1]);
    for (i, s) in out.final_world.robots.iter().enumerate() {
        let r = (s[0] - c[0]).hypot(s[1] - c[1]);
        println!("robot {} distance {r:.4}", i + 1);
    }
    println!("final max |phi| {:.3e}", out.summary.final_max_phi_norm);
    Ok(())
}

mod common;

use dgvf::engine::{run, run_from, InitialBox, ModelKind, Scenario, WorldState};
use dgvf::field::{FieldGains, FieldRoute, PropagationSpeeds};
use dgvf::graph::{OffsetTable, Topology};
use dgvf::paths::{CompositeManifold, ParametricCurve};
use dgvf::robot::SaturationLimits;
use dgvf::scenario::{load, load_scenario, Overrides, BUILTINS};

fn single_robot(dt: f64) -> Scenario {
    let f = ParametricCurve::parse(&["w", "sin(w)", "0"]).unwrap();
    let g = ParametricCurve::parse(&["0", "0", "cos(w)"]).unwrap();
    Scenario {
        name: "single".into(),
        n: 3,
        model: ModelKind::Integrator,
        manifolds: vec![CompositeManifold::parametric(f, g).unwrap()],
        topology: Topology::ring(1),
        offsets: OffsetTable::zeros(1),
        gains: FieldGains::unit(3),
        speeds: PropagationSpeeds::new(1.0, 2.0),
        k_theta: 2.0,
        saturation: SaturationLimits::none(),
        dt,
        duration: 1.0,
        seed: 0,
        init: InitialBox::centered(3, 1.0),
        target: None,
        route: FieldRoute::ClosedForm,
        log_every: 1,
    }
}

#[test]
fn rk4_error_shrinks_sixteenfold_per_halving() {
    let start = WorldState::new(vec![vec![0.7, -0.4, 0.9, 0.2, -0.3]]);
    let end = |dt: f64| run_from(&single_robot(dt), start.clone()).unwrap().final_world.robots[0].clone();
    let dt = 0.05;
    let reference = end(dt / 16.0);
    let err = |dt: f64| common::norm(&end(dt).iter().zip(&reference).map(|(a, b)| a - b).collect::<Vec<_>>());
    let ratio = err(dt) / err(dt / 2.0);
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn disconnected_rings_keep_a_cross_component_error() {
    let mut s = load_scenario("sim2-enclose").unwrap();
    let ring = |base: usize| (0..5).map(move |k| (base + k, base + (k + 1) % 5));
    s.topology = Topology::new(10, ring(0).chain(ring(5))).unwrap();
    assert!(!s.topology.is_connected());
    let out = run(&s).unwrap();
    let world = &out.final_world;
    let n = s.n;
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 5..10 {
            let e1 = world.robots[i][n] - world.robots[j][n] - s.offsets.delta1(i, j);
            let e2 = world.robots[i][n + 1] - world.robots[j][n + 1] - s.offsets.delta2(i, j);
            worst = worst.max(e1.abs()).max(e2.abs());
        }
    }
    assert!(worst > 1e-2, "cross-component error {worst}");
}

#[test]
fn on_manifold_start_estimates_desired_speeds() {
    let s = load_scenario("sim2-enclose").unwrap();
    let start = WorldState::new(
        (0..10)
            .map(|i| {
                let (w1, w2) = (s.offsets.w1_star()[i], s.offsets.w2_star()[i]);
                let mut st = s.manifolds[i].point(w1, w2, 0.0).unwrap();
                st.extend([w1, w2]);
                st
            })
            .collect(),
    );
    // truncation drift off the manifold scales with dt^4
    let short = Scenario { duration: 1.0, dt: 1e-3, log_every: 10, ..s };
    let out = run_from(&short, start).unwrap();
    // end records use one-sided differences
    for r in 1..out.metrics.len() - 1 {
        for i in 0..10 {
            assert!((out.metrics.w1dot[r][i] - 3.0).abs() < 1e-6, "record {r} robot {i}: {}", out.metrics.w1dot[r][i]);
            assert!((out.metrics.w2dot[r][i] - 3.0).abs() < 1e-6, "record {r} robot {i}");
        }
    }
}

#[test]
fn every_builtin_runs_with_finite_states() {
    for b in BUILTINS {
        let loaded = load(b.name, &Overrides { duration: Some(1.0), ..Overrides::default() }).unwrap();
        let out = run(&loaded.scenario).unwrap_or_else(|e| panic!("{}: {e}", b.name));
        assert!(out.final_world.robots.iter().flatten().all(|v| v.is_finite()), "{}", b.name);
        assert!(out.summary.final_max_phi_norm.is_finite());
    }
}

#[test]
fn target_mode_follows_the_moving_target() {
    let s = load_scenario("exp1-circle").unwrap();
    let out = run(&s).unwrap();
    let trace = s.target.as_ref().unwrap();
    let t = out.final_world.t;
    let centre = trace.position(t);
    for st in &out.final_world.robots {
        let r = ((st[0] - centre[0]).powi(2) + (st[1] - centre[1]).powi(2)).sqrt();
        assert!((r - 0.24).abs() < 1e-3, "radius {r}");
    }
}

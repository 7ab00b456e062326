//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::f64::consts::TAU;
use std::process::Command;
use std::time::Instant;

use dgvf::engine::{estimate_parametric_speeds, run, RunOutput, Scenario, TAIL_FRACTION};
use dgvf::field::{
    closed_form_from_sample, grad_phi, wedge_field_from_sample, GeneralizedState,
};
use dgvf::graph::Topology;
use dgvf::paths::{CompositeManifold, Interception};
use dgvf::robot::{unicycle_controls, wrap_angle, SaturationLimits};
use dgvf::scenario::{load_scenario, BUILTINS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn builtin_scenarios() -> Vec<Scenario> {
    BUILTINS.iter().map(|b| load_scenario(b.name).expect("builtin loads")).collect()
}

/// Distinct manifolds of a scenario, each with its scenario's gains and speeds.
fn distinct_manifolds(s: &Scenario) -> Vec<&CompositeManifold> {
    let mut out: Vec<&CompositeManifold> = Vec::new();
    for m in &s.manifolds {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

/// State within 10 m of the manifold, `w` in `[-10, 10]`, `t` in the run.
fn random_state(rng: &mut ChaCha8Rng, m: &CompositeManifold, duration: f64) -> (GeneralizedState, f64) {
    let (w1, w2) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
    let t = rng.gen_range(0.0..=duration);
    let p = m.point(w1, w2, t).expect("manifold point");
    let x = p.iter().map(|v| v + rng.gen_range(-10.0..10.0)).collect();
    (GeneralizedState::new(x, w1, w2), t)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn field_equivalence() -> Outcome {
    let scenarios = builtin_scenarios();
    let (worst, secs) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for s in &scenarios {
            for m in distinct_manifolds(s) {
                for _ in 0..1000 {
                    let (xi, t) = random_state(&mut rng, m, s.duration);
                    let sample = m.sample(&xi, t).unwrap();
                    let a = wedge_field_from_sample(&sample, &s.gains, &s.speeds).unwrap();
                    let b = closed_form_from_sample(&sample, &s.gains, &s.speeds).unwrap();
                    let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
                    worst = worst.max(common::norm(&diff) / common::norm(&b));
                }
            }
        }
        worst
    });
    let detail = format!("max relative gap {worst:.2e} < 1e-9, {secs:.2} s < 5 s");
    if worst < 1e-9 && secs < 5.0 { Ok(detail) } else { Err(detail) }
}

fn singularity_freedom() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lines = Vec::new();
    let mut ok = true;
    for s in builtin_scenarios() {
        let (a, b) = (s.speeds.w1dot_star.abs(), s.speeds.w2dot_star.abs());
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let margin = 0.5 * a.min(b);
        let mut least = f64::INFINITY;
        for m in distinct_manifolds(&s) {
            for _ in 0..100_000 {
                let (xi, t) = random_state(&mut rng, m, s.duration);
                let sample = m.sample(&xi, t).unwrap();
                let chi = closed_form_from_sample(&sample, &s.gains, &s.speeds).unwrap();
                least = least.min(common::norm(&chi));
            }
        }
        ok &= least > 0.0 && least >= margin;
        lines.push(format!("{} min {least:.3} >= {margin:.3}", s.name));
    }
    let detail = lines.join("; ");
    if ok { Ok(detail) } else { Err(detail) }
}

struct Sim2 {
    scenario: Scenario,
    output: RunOutput,
    secs: f64,
}

fn following_error(sim2: &Sim2) -> Outcome {
    let phi = sim2.output.summary.final_max_phi_norm;
    let detail = format!("final max |phi| {phi:.3e} < 1e-2, {:.2} s < 30 s", sim2.secs);
    if phi < 1e-2 && sim2.secs < 30.0 { Ok(detail) } else { Err(detail) }
}

fn coordination(sim2: &Sim2) -> Outcome {
    let log = &sim2.output.metrics;
    let tail = log.tail_start(sim2.scenario.duration, TAIL_FRACTION);
    let edges = max_abs((tail..log.len()).flat_map(|r| log.coord_err_w1[r].iter().chain(&log.coord_err_w2[r]).copied()));
    let w2 = &sim2.output.final_world.robots;
    let n = sim2.scenario.n;
    let gap = max_abs((0..w2.len() - 1).map(|i| w2[i + 1][n + 1] - w2[i][n + 1] - TAU / 10.0));
    let detail = format!("tail edge error {edges:.3e} < 1e-3, w2 gap error {gap:.3e} < 1e-3");
    if edges < 1e-3 && gap < 1e-3 { Ok(detail) } else { Err(detail) }
}

/// Worst relative speed error over the tail of a run.
fn tail_speed_error(s: &Scenario, out: &RunOutput) -> (f64, f64) {
    let (w1dot, w2dot) = estimate_parametric_speeds(&out.metrics).unwrap();
    let tail = out.metrics.tail_start(s.duration, TAIL_FRACTION);
    let rel = |rows: &[Vec<f64>], target: f64| {
        max_abs(rows[tail..].iter().flatten().map(|v| (v - target) / target))
    };
    (rel(&w1dot, s.speeds.w1dot_star), rel(&w2dot, s.speeds.w2dot_star))
}

fn speeds(sim2: &Sim2) -> Outcome {
    let desk = load_scenario("sim3-desk").unwrap();
    let desk_out = run(&desk).map_err(|e| e.to_string())?;
    let (a1, a2) = tail_speed_error(&sim2.scenario, &sim2.output);
    let (b1, b2) = tail_speed_error(&desk, &desk_out);
    let detail = format!(
        "sim2-enclose ({a1:.2e}, {a2:.2e}), sim3-desk ({b1:.2e}, {b2:.2e}) relative < 1e-2"
    );
    if [a1, a2, b1, b2].iter().all(|&e| e < 1e-2) { Ok(detail) } else { Err(detail) }
}

/// Heading loop against a fixed field direction, integrated with RK4.
fn heading_decay() -> Outcome {
    let (k_theta, dt, steps) = (2.0, 1e-3, 5000);
    let theta_d: f64 = 0.4;
    let field = [theta_d.cos(), theta_d.sin(), 0.0, 0.0, 0.0];
    let limits = SaturationLimits::none();
    let rate = |theta: f64| unicycle_controls(&field, theta, k_theta, &limits, None).unwrap().u_theta;
    let mut worst: f64 = 0.0;
    for e0 in [0.1, 1.0, 3.0] {
        let mut theta = wrap_angle(theta_d - e0);
        for i in 1..=steps {
            let k1 = rate(theta);
            let k2 = rate(theta + 0.5 * dt * k1);
            let k3 = rate(theta + 0.5 * dt * k2);
            let k4 = rate(theta + dt * k3);
            theta = wrap_angle(theta + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
            let e = wrap_angle(theta_d - theta);
            worst = worst.max((e - e0 * (-k_theta * i as f64 * dt).exp()).abs());
        }
    }
    let detail = format!("max |e - e0 exp(-2t)| {worst:.2e} < 1e-6");
    if worst < 1e-6 { Ok(detail) } else { Err(detail) }
}

fn scale_run() -> Outcome {
    let s = load_scenario("sim1-formation").unwrap();
    let (out, secs) = timed(|| run(&s));
    let out = out.map_err(|e| e.to_string())?;
    let phi = out.summary.final_max_phi_norm;
    let n = s.n;
    let rel = |i: usize| out.final_world.robots[i][n] - s.offsets.w1_star()[i];
    let offset = max_abs((0..s.robot_count()).map(|i| rel(i) - rel(0)));
    let detail = format!("{secs:.2} s < 60 s, final max |phi| {phi:.3e} < 1e-2, group offset error {offset:.3e} < 1e-3");
    if secs < 60.0 && phi < 1e-2 && offset < 1e-3 { Ok(detail) } else { Err(detail) }
}

fn negative_control() -> Outcome {
    let mut s = load_scenario("sim2-enclose").unwrap();
    let ring = |base: usize| (0..5).map(move |k| (base + k, base + (k + 1) % 5));
    s.topology = Topology::new(10, ring(0).chain(ring(5))).unwrap();
    let out = run(&s).map_err(|e| e.to_string())?;
    let (n, st) = (s.n, &out.final_world.robots);
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 5..10 {
            worst = worst
                .max((st[i][n] - st[j][n] - s.offsets.delta1(i, j)).abs())
                .max((st[i][n + 1] - st[j][n + 1] - s.offsets.delta2(i, j)).abs());
        }
    }
    let detail = format!("two 5-rings, max cross-component error {worst:.3e} > 1e-2");
    if worst > 1e-2 { Ok(detail) } else { Err(detail) }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut differing = Vec::new();
    for b in BUILTINS {
        let mut bytes = Vec::new();
        for pass in 0..2 {
            let out = dir.path().join(format!("{}-{pass}", b.name));
            let status = Command::new(env!("CARGO_BIN_EXE_gvf"))
                .args(["run", "--scenario", b.name, "--seed", "7", "--out"])
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{} exited with {}", b.name, status.status));
            }
            bytes.push(std::fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())?);
        }
        if bytes[0] != bytes[1] {
            differing.push(b.name);
        }
    }
    if differing.is_empty() {
        Ok(format!("{} builtins byte-identical at seed 7", BUILTINS.len()))
    } else {
        Err(format!("metrics differ for {differing:?}"))
    }
}

fn derivative_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut checked, mut worst) = (0, 0.0f64);
    for _ in 0..1000 {
        let e = common::random_expr(&mut rng, 6);
        let w = rng.gen_range(-3.0..3.0);
        let f = |x: f64| e.eval(x).ok().filter(|v| v.is_finite());
        if let Some(fd) = common::smooth_derivative(f, w) {
            let d = e.differentiate().eval(w).map_err(|err| format!("{e}: {err}"))?;
            worst = worst.max((d - fd).abs() / fd.abs().max(1.0));
            checked += 1;
        }
    }
    // windowed target velocities are estimates, not derivatives of the trace
    let mut grad_worst: f64 = 0.0;
    let mut manifolds = 0;
    for s in builtin_scenarios() {
        for m in distinct_manifolds(&s) {
            if matches!(m.interception(), Interception::Target(_)) {
                continue;
            }
            manifolds += 1;
            for _ in 0..50 {
                let (xi, t) = random_state(&mut rng, m, s.duration);
                let base = xi.to_vec();
                for j in 0..s.n {
                    let grad = grad_phi(m, &xi, j, t).unwrap();
                    for slot in 0..s.n + 2 {
                        let phi_j = |v: f64| {
                            let mut p = base.clone();
                            p[slot] = v;
                            m.phi(&GeneralizedState::from_slice(&p), t).ok().map(|phi| phi[j])
                        };
                        let fd = common::central_difference(phi_j, base[slot], 1e-4).unwrap();
                        grad_worst = grad_worst.max((grad[slot] - fd).abs() / fd.abs().max(1.0));
                    }
                }
            }
        }
    }
    let detail = format!(
        "{checked}/1000 smooth expressions, max gap {worst:.2e}; grad_phi on {manifolds} manifolds, max gap {grad_worst:.2e}; both < 1e-5"
    );
    if checked >= 500 && worst < 1e-5 && grad_worst < 1e-5 { Ok(detail) } else { Err(detail) }
}

fn main() {
    let sim2 = {
        let scenario = load_scenario("sim2-enclose").unwrap();
        let (output, secs) = timed(|| run(&scenario).expect("sim2-enclose runs"));
        Sim2 { scenario, output, secs }
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("field-equivalence", Box::new(field_equivalence)),
        ("singularity-free", Box::new(singularity_freedom)),
        ("following-error", Box::new(|| following_error(&sim2))),
        ("coordination", Box::new(|| coordination(&sim2))),
        ("parametric-speeds", Box::new(|| speeds(&sim2))),
        ("heading-decay", Box::new(heading_decay)),
        ("scale-run", Box::new(scale_run)),
        ("negative-control", Box::new(negative_control)),
        ("determinism", Box::new(determinism)),
        ("derivative-oracle", Box::new(derivative_oracle)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    std::process::exit(if failed == 0 { 0 } else { 1 });
}

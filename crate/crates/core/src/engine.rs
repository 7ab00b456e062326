//! Fixed-step simulation of the robot group.
//!
//! Every step is one synchronous exchange round: the virtual coordinates of
//! all robots are snapshotted, each robot computes its consensus residuals
//! from its neighbours' snapshot values, and then every robot advances one
//! classical RK4 step with those residuals held fixed.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{
    add_coordination, navigation_field_from_sample, FieldError, FieldGains, FieldRoute,
    GeneralizedState, PropagationSpeeds,
};
use crate::graph::{coordination_residuals, edge_errors, OffsetTable, Snapshot, Topology, VirtualCoordinates};
use crate::paths::{CompositeManifold, RealTimeTarget};
use crate::robot::{unicycle_controls, wrap_angle, RobotError, SaturationLimits};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("robot {robot} at step {step}: {source}")]
    Field {
        robot: usize,
        step: usize,
        #[source]
        source: FieldError,
    },
    #[error("robot {robot} at step {step}: {source}")]
    Robot {
        robot: usize,
        step: usize,
        #[source]
        source: RobotError,
    },
    #[error("robot {robot} state became non-finite at step {step}")]
    NonFinite { robot: usize, step: usize },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("need at least two records to estimate speeds, got {0}")]
    TooFewRecords(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Integrator,
    Unicycle,
}

/// Seeded uniform initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialBox {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub w1_range: (f64, f64),
    pub w2_range: (f64, f64),
    pub theta_range: (f64, f64),
}

impl InitialBox {
    pub fn centered(n: usize, half_width: f64) -> Self {
        Self {
            center: vec![0.0; n],
            half_width: vec![half_width; n],
            w1_range: (0.0, 1.0),
            w2_range: (0.0, 1.0),
            theta_range: (-PI, PI),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// A fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub model: ModelKind,
    pub manifolds: Vec<CompositeManifold>,
    pub topology: Topology,
    pub offsets: OffsetTable,
    pub gains: FieldGains,
    pub speeds: PropagationSpeeds,
    pub k_theta: f64,
    pub saturation: SaturationLimits,
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub init: InitialBox,
    pub target: Option<Arc<RealTimeTarget>>,
    pub route: FieldRoute,
    /// Log every `log_every`-th step (the final step is always logged).
    pub log_every: usize,
}

impl Scenario {
    pub fn robot_count(&self) -> usize {
        self.manifolds.len()
    }

    pub fn steps(&self) -> usize {
        // tolerate representation error in duration / dt
        ((self.duration / self.dt) + 1e-9).floor() as usize
    }

    /// Entries per robot state vector.
    pub fn state_len(&self) -> usize {
        match self.model {
            ModelKind::Integrator => self.n + 2,
            ModelKind::Unicycle => self.n + 3,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Invalid(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be non-negative, got {}", self.duration));
        }
        let count = self.robot_count();
        if count == 0 {
            return bad("scenario has no robots".into());
        }
        if self.topology.robot_count() != count || self.offsets.len() != count {
            return bad(format!(
                "{count} robots but topology has {} and offsets {}",
                self.topology.robot_count(),
                self.offsets.len()
            ));
        }
        if let Some(m) = self.manifolds.iter().find(|m| m.dim() != self.n) {
            return bad(format!("manifold dimension {} differs from n = {}", m.dim(), self.n));
        }
        if self.gains.k().len() != self.n {
            return bad(format!("{} gains for n = {}", self.gains.k().len(), self.n));
        }
        if self.init.center.len() != self.n || self.init.half_width.len() != self.n {
            return bad("initial box dimension differs from n".into());
        }
        if self.model == ModelKind::Unicycle && !(2..=3).contains(&self.n) {
            return bad(format!("unicycle model needs n = 2 or 3, got {}", self.n));
        }
        if self.log_every == 0 {
            return bad("log_every must be at least 1".into());
        }
        if !self.topology.is_connected() {
            log::warn!("scenario `{}`: communication graph is not connected", self.name);
        }
        Ok(())
    }

    /// Seeded initial world. Robots are sampled in index order.
    pub fn initial_world(&self) -> WorldState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let states = (0..self.robot_count())
            .map(|_| {
                let mut s: Vec<f64> = (0..self.n)
                    .map(|j| {
                        let hw = self.init.half_width[j];
                        self.init.center[j] + uniform(&mut rng, (-hw, hw))
                    })
                    .collect();
                s.push(uniform(&mut rng, self.init.w1_range));
                s.push(uniform(&mut rng, self.init.w2_range));
                if self.model == ModelKind::Unicycle {
                    s.push(wrap_angle(uniform(&mut rng, self.init.theta_range)));
                }
                s
            })
            .collect();
        WorldState::new(states)
    }

    pub fn generalized(&self, state: &[f64]) -> GeneralizedState {
        GeneralizedState::from_slice(&state[..self.n + 2])
    }
}

/// Positions, headings and virtual coordinates of all robots at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub step: usize,
    pub t: f64,
    /// Per robot `(x_1..x_n, w1, w2[, θ])`.
    pub robots: Vec<Vec<f64>>,
    /// Last well-defined heading command per robot (unicycle only).
    pub held_heading: Vec<Option<f64>>,
    /// Robot-steps in which the planar field vanished.
    pub degenerate_count: u64,
}

impl WorldState {
    pub fn new(robots: Vec<Vec<f64>>) -> Self {
        let count = robots.len();
        Self { step: 0, t: 0.0, robots, held_heading: vec![None; count], degenerate_count: 0 }
    }

    fn virtual_coordinates(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        self.robots.iter().map(|s| (s[n], s[n + 1])).unzip()
    }
}

/// Consensus residuals for robot `i` from the exchanged coordinates.
pub fn robot_residuals(scenario: &Scenario, i: usize, coords: &impl VirtualCoordinates) -> (f64, f64) {
    coordination_residuals(&scenario.topology, &scenario.offsets, coords, i)
}

/// Distributed field of robot `i` at its own state. Only the robot's own
/// state, its residuals and (in target mode) the shared trace are read.
pub fn robot_field(
    scenario: &Scenario,
    i: usize,
    state: &[f64],
    residuals: (f64, f64),
    t: f64,
) -> Result<Vec<f64>, FieldError> {
    let xi = scenario.generalized(state);
    let sample = scenario.manifolds[i].sample(&xi, t)?;
    let nav = navigation_field_from_sample(&sample, &scenario.gains, &scenario.speeds, scenario.route)?;
    Ok(add_coordination(nav, &scenario.gains, residuals.0, residuals.1))
}

struct Rate {
    derivative: Vec<f64>,
    heading: Option<f64>,
    degenerate: bool,
}

fn robot_rate(
    scenario: &Scenario,
    i: usize,
    state: &[f64],
    residuals: (f64, f64),
    t: f64,
    held: Option<f64>,
    step: usize,
) -> Result<Rate, EngineError> {
    let field = robot_field(scenario, i, state, residuals, t)
        .map_err(|source| EngineError::Field { robot: i, step, source })?;
    match scenario.model {
        ModelKind::Integrator => Ok(Rate { derivative: field, heading: None, degenerate: false }),
        ModelKind::Unicycle => {
            let n = scenario.n;
            let theta = state[n + 2];
            let u = unicycle_controls(&field, theta, scenario.k_theta, &scenario.saturation, held)
                .map_err(|source| EngineError::Robot { robot: i, step, source })?;
            let mut d = Vec::with_capacity(n + 3);
            d.push(u.v * theta.cos());
            d.push(u.v * theta.sin());
            if n == 3 {
                d.push(u.u_z);
            }
            d.push(field[n]);
            d.push(field[n + 1]);
            d.push(u.u_theta);
            Ok(Rate {
                derivative: d,
                heading: (!u.degenerate).then_some(u.heading),
                degenerate: u.degenerate,
            })
        }
    }
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// One synchronous round of length `dt`.
pub fn step(world: &WorldState, scenario: &Scenario) -> Result<WorldState, EngineError> {
    let n = scenario.n;
    let (w1, w2) = world.virtual_coordinates(n);
    let snapshot = Snapshot { w1: &w1, w2: &w2 };
    let dt = scenario.dt;
    let t = world.t;
    let next_step = world.step + 1;

    let mut next = world.clone();
    next.step = next_step;
    next.t = next_step as f64 * dt;

    for (i, y) in world.robots.iter().enumerate() {
        let residuals = robot_residuals(scenario, i, &snapshot);
        let held = world.held_heading[i];
        let rate = |s: &[f64], tau: f64| robot_rate(scenario, i, s, residuals, tau, held, world.step);
        let k1 = rate(y, t)?;
        let k2 = rate(&axpy(y, dt / 2.0, &k1.derivative), t + dt / 2.0)?;
        let k3 = rate(&axpy(y, dt / 2.0, &k2.derivative), t + dt / 2.0)?;
        let k4 = rate(&axpy(y, dt, &k3.derivative), t + dt)?;
        let mut out: Vec<f64> = (0..y.len())
            .map(|s| {
                y[s] + dt / 6.0
                    * (k1.derivative[s] + 2.0 * k2.derivative[s] + 2.0 * k3.derivative[s] + k4.derivative[s])
            })
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::NonFinite { robot: i, step: next_step });
        }
        if scenario.model == ModelKind::Unicycle {
            out[n + 2] = wrap_angle(out[n + 2]);
            if let Some(h) = k1.heading {
                next.held_heading[i] = Some(h);
            }
            if k1.degenerate {
                next.degenerate_count += 1;
            }
        }
        next.robots[i] = out;
    }
    Ok(next)
}

/// Logged states, one entry per logged step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub model: ModelKind,
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<Vec<f64>>>,
}

/// Error and speed records at each logged step.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    /// `[record][robot]` following-error norm.
    pub phi_norm: Vec<Vec<f64>>,
    /// `[record][edge]` coordination errors.
    pub coord_err_w1: Vec<Vec<f64>>,
    pub coord_err_w2: Vec<Vec<f64>>,
    /// `[record][robot]` virtual coordinates.
    pub w1: Vec<Vec<f64>>,
    pub w2: Vec<Vec<f64>>,
    /// Finite-difference parametric speeds, filled after the run.
    pub w1dot: Vec<Vec<f64>>,
    pub w2dot: Vec<Vec<f64>>,
}

impl MetricsLog {
    fn new() -> Self {
        Self {
            steps: Vec::new(),
            times: Vec::new(),
            phi_norm: Vec::new(),
            coord_err_w1: Vec::new(),
            coord_err_w2: Vec::new(),
            w1: Vec::new(),
            w2: Vec::new(),
            w1dot: Vec::new(),
            w2dot: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the first record inside the last `fraction` of the run.
    pub fn tail_start(&self, duration: f64, fraction: f64) -> usize {
        let cutoff = duration * (1.0 - fraction);
        self.times.iter().position(|&t| t >= cutoff - 1e-9).unwrap_or(self.len().saturating_sub(1))
    }
}

/// Per-robot `(ẇ1, ẇ2)` trajectories by central differences over the logged
/// times (one-sided at the ends).
pub fn estimate_parametric_speeds(log: &MetricsLog) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), EngineError> {
    let m = log.len();
    if m < 2 {
        return Err(EngineError::TooFewRecords(m));
    }
    let diff = |w: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..m)
            .map(|r| {
                let (a, b) = match r {
                    0 => (0, 1),
                    r if r == m - 1 => (m - 2, m - 1),
                    r => (r - 1, r + 1),
                };
                let dt = log.times[b] - log.times[a];
                w[b].iter().zip(&w[a]).map(|(hi, lo)| (hi - lo) / dt).collect()
            })
            .collect()
    };
    Ok((diff(&log.w1), diff(&log.w2)))
}

/// End-of-run scalars.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub robots: usize,
    pub steps: usize,
    pub final_time: f64,
    /// `max_i ‖Φ_i‖` at the final record.
    pub final_max_phi_norm: f64,
    /// Largest `|w_k[i] - w_k[j] - Δ_k[i,j]|` over edges, `k`, and the
    /// last 10% of the run.
    pub final_max_coord_err: f64,
    /// Largest per-robot mean `|ẇ_k - ẇ_k*|` over the last 10% of the run.
    pub mean_speed_err: Option<f64>,
    pub mean_speed_err_w1: Option<f64>,
    pub mean_speed_err_w2: Option<f64>,
    pub degenerate_steps: u64,
}

/// Fraction of the run used for steady-state metrics.
pub const TAIL_FRACTION: f64 = 0.1;

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub metrics: MetricsLog,
    pub summary: Summary,
    pub final_world: WorldState,
}

fn record(
    scenario: &Scenario,
    world: &WorldState,
    trajectory: &mut Trajectory,
    metrics: &mut MetricsLog,
) -> Result<(), EngineError> {
    let n = scenario.n;
    let mut phi_norm = Vec::with_capacity(world.robots.len());
    for (i, s) in world.robots.iter().enumerate() {
        let phi = scenario.manifolds[i]
            .phi(&scenario.generalized(s), world.t)
            .map_err(|e| EngineError::Field { robot: i, step: world.step, source: e.into() })?;
        phi_norm.push(phi.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let (w1, w2) = world.virtual_coordinates(n);
    let (e1, e2) = edge_errors(&scenario.topology, &scenario.offsets, &w1, &w2).into_iter().unzip();
    metrics.steps.push(world.step);
    metrics.times.push(world.t);
    metrics.phi_norm.push(phi_norm);
    metrics.coord_err_w1.push(e1);
    metrics.coord_err_w2.push(e2);
    metrics.w1.push(w1);
    metrics.w2.push(w2);
    trajectory.steps.push(world.step);
    trajectory.times.push(world.t);
    trajectory.states.push(world.robots.clone());
    Ok(())
}

/// Run from the scenario's seeded initial world.
pub fn run(scenario: &Scenario) -> Result<RunOutput, EngineError> {
    run_from(scenario, scenario.initial_world())
}

/// Run `floor(duration / dt)` steps from `world`.
pub fn run_from(scenario: &Scenario, mut world: WorldState) -> Result<RunOutput, EngineError> {
    scenario.validate()?;
    if world.robots.len() != scenario.robot_count()
        || world.robots.iter().any(|s| s.len() != scenario.state_len())
    {
        return Err(EngineError::Invalid("initial world does not match scenario".into()));
    }
    let steps = scenario.steps();
    let mut trajectory = Trajectory {
        n: scenario.n,
        model: scenario.model,
        steps: Vec::new(),
        times: Vec::new(),
        states: Vec::new(),
    };
    let mut metrics = MetricsLog::new();
    record(scenario, &world, &mut trajectory, &mut metrics)?;
    for s in 1..=steps {
        world = step(&world, scenario)?;
        if s % scenario.log_every == 0 || s == steps {
            record(scenario, &world, &mut trajectory, &mut metrics)?;
        }
    }
    if metrics.len() >= 2 {
        let (d1, d2) = estimate_parametric_speeds(&metrics)?;
        metrics.w1dot = d1;
        metrics.w2dot = d2;
    }
    let summary = summarize(scenario, &metrics, &world);
    Ok(RunOutput { trajectory, metrics, summary, final_world: world })
}

fn summarize(scenario: &Scenario, metrics: &MetricsLog, world: &WorldState) -> Summary {
    let last = metrics.len() - 1;
    let final_max_phi_norm = metrics.phi_norm[last].iter().copied().fold(0.0, f64::max);
    let tail = metrics.tail_start(scenario.duration, TAIL_FRACTION);
    let final_max_coord_err = (tail..=last)
        .flat_map(|r| metrics.coord_err_w1[r].iter().chain(&metrics.coord_err_w2[r]))
        .fold(0.0, |acc: f64, e| acc.max(e.abs()));
    let speed_err = |dots: &[Vec<f64>], target: f64| -> Option<f64> {
        if dots.is_empty() {
            return None;
        }
        let count = (last - tail + 1) as f64;
        (0..scenario.robot_count())
            .map(|i| (tail..=last).map(|r| (dots[r][i] - target).abs()).sum::<f64>() / count)
            .reduce(f64::max)
    };
    let e1 = speed_err(&metrics.w1dot, scenario.speeds.w1dot_star);
    let e2 = speed_err(&metrics.w2dot, scenario.speeds.w2dot_star);
    Summary {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        robots: scenario.robot_count(),
        steps: world.step,
        final_time: world.t,
        final_max_phi_norm,
        final_max_coord_err,
        mean_speed_err: e1.zip(e2).map(|(a, b)| a.max(b)),
        mean_speed_err_w1: e1,
        mean_speed_err_w2: e2,
        degenerate_steps: world.degenerate_count,
    }
}

/// Pass/fail thresholds for a finished run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub max_phi_norm: f64,
    pub max_coord_err: f64,
    /// Allowed mean speed error as a fraction of `|ẇ*|`.
    pub speed_rel: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { max_phi_norm: 1e-2, max_coord_err: 1e-3, speed_rel: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Thresholds {
    /// Speed limits are relative to the desired speed; a zero desired speed
    /// uses `speed_rel` as an absolute limit.
    pub fn check(&self, summary: &Summary, speeds: &PropagationSpeeds) -> Vec<CheckLine> {
        let line = |name, value: f64, limit: f64| CheckLine { name, value, limit, pass: value < limit };
        let speed_limit = |target: f64| {
            if target == 0.0 {
                self.speed_rel
            } else {
                self.speed_rel * target.abs()
            }
        };
        vec![
            line("final_max_phi_norm", summary.final_max_phi_norm, self.max_phi_norm),
            line("final_max_coord_err", summary.final_max_coord_err, self.max_coord_err),
            line(
                "mean_speed_err_w1",
                summary.mean_speed_err_w1.unwrap_or(f64::INFINITY),
                speed_limit(speeds.w1dot_star),
            ),
            line(
                "mean_speed_err_w2",
                summary.mean_speed_err_w2.unwrap_or(f64::INFINITY),
                speed_limit(speeds.w2dot_star),
            ),
        ]
    }
}

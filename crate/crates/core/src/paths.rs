//! Interception and enclosing curves and the composite-manifold error.
//!
//! A robot's desired position is `f(w1) + g(w2)`: `f` carries the group
//! reference point (or follows a live target trace), `g` places the robot on
//! a closed curve around it.

use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr, ParseError};
use crate::field::GeneralizedState;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("expression evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("component {index}: {source}")]
    Parse {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("curve needs at least one component")]
    Empty,
    #[error("target trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Curve `w -> (c_1(w), ..., c_n(w))` with cached symbolic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricCurve {
    components: Vec<Expr>,
    first: Vec<Expr>,
    second: Vec<Expr>,
}

impl ParametricCurve {
    pub fn new(components: Vec<Expr>) -> Result<Self, PathError> {
        if components.is_empty() {
            return Err(PathError::Empty);
        }
        let first: Vec<Expr> = components.iter().map(Expr::differentiate).collect();
        let second = first.iter().map(Expr::differentiate).collect();
        Ok(Self { components, first, second })
    }

    pub fn parse<S: AsRef<str>>(components: &[S]) -> Result<Self, PathError> {
        let exprs = components
            .iter()
            .enumerate()
            .map(|(index, s)| {
                Expr::parse(s.as_ref()).map_err(|source| PathError::Parse { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(exprs)
    }

    /// Curve whose every component is a constant.
    pub fn constant(point: &[f64]) -> Result<Self, PathError> {
        Self::new(point.iter().map(|&c| Expr::Const(c)).collect())
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn first_derivatives(&self) -> &[Expr] {
        &self.first
    }

    pub fn second_derivatives(&self) -> &[Expr] {
        &self.second
    }

    pub fn point(&self, w: f64) -> Result<Vec<f64>, EvalError> {
        eval_all(&self.components, w)
    }

    pub fn tangent(&self, w: f64) -> Result<Vec<f64>, EvalError> {
        eval_all(&self.first, w)
    }

    pub fn second_derivative(&self, w: f64) -> Result<Vec<f64>, EvalError> {
        eval_all(&self.second, w)
    }

    /// Largest component magnitudes of the first and second derivatives on
    /// `samples` evenly spaced points of `[lo, hi]`. Non-finite samples
    /// propagate as infinity.
    pub fn derivative_bounds(
        &self,
        lo: f64,
        hi: f64,
        samples: usize,
    ) -> Result<DerivativeBounds, EvalError> {
        let samples = samples.max(2);
        let mut bounds = DerivativeBounds::default();
        for s in 0..samples {
            let w = lo + (hi - lo) * s as f64 / (samples - 1) as f64;
            for v in self.tangent(w)? {
                bounds.first = bounds.first.max(abs_or_inf(v));
            }
            for v in self.second_derivative(w)? {
                bounds.second = bounds.second.max(abs_or_inf(v));
            }
        }
        Ok(bounds)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DerivativeBounds {
    pub first: f64,
    pub second: f64,
}

fn abs_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v.abs()
    } else {
        f64::INFINITY
    }
}

fn eval_all(exprs: &[Expr], w: f64) -> Result<Vec<f64>, EvalError> {
    exprs.iter().map(|e| e.eval(w)).collect()
}

/// Time-indexed target positions, linearly interpolated.
///
/// Velocity comes from a second-order backward difference over `window`
/// seconds rather than from the interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTimeTarget {
    dim: usize,
    times: Vec<f64>,
    positions: Vec<Vec<f64>>,
    window: f64,
    zero_velocity: bool,
}

pub const DEFAULT_VELOCITY_WINDOW: f64 = 0.2;

#[derive(Debug, Deserialize)]
struct TraceRow {
    t: f64,
    x1: f64,
    x2: f64,
    x3: f64,
}

impl RealTimeTarget {
    pub fn new(dim: usize, window: f64) -> Self {
        Self {
            dim,
            times: Vec::new(),
            positions: Vec::new(),
            window,
            zero_velocity: false,
        }
    }

    /// Sample `position(t)` every `sample_dt` seconds on `[0, t_end]`.
    pub fn from_fn(
        dim: usize,
        t_end: f64,
        sample_dt: f64,
        window: f64,
        position: impl Fn(f64) -> Vec<f64>,
    ) -> Result<Self, PathError> {
        let mut trace = Self::new(dim, window);
        let count = (t_end / sample_dt).ceil() as usize;
        for k in 0..=count {
            let t = k as f64 * sample_dt;
            trace.push(t, position(t))?;
        }
        Ok(trace)
    }

    /// Read a `t,x1,x2,x3` CSV trace.
    pub fn from_csv_reader<R: Read>(reader: R, window: f64) -> Result<Self, PathError> {
        let mut trace = Self::new(3, window);
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "x1", "x2", "x3"] {
            return Err(PathError::Trace(format!(
                "expected header `t,x1,x2,x3`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        for row in rdr.deserialize() {
            let row: TraceRow = row?;
            trace.push(row.t, vec![row.x1, row.x2, row.x3])?;
        }
        if trace.is_empty() {
            return Err(PathError::Trace("trace has no samples".into()));
        }
        Ok(trace)
    }

    pub fn from_csv_path(path: &Path, window: f64) -> Result<Self, PathError> {
        Self::from_csv_reader(File::open(path)?, window)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), PathError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t", "x1", "x2", "x3"])?;
        for (t, p) in self.times.iter().zip(&self.positions) {
            let mut rec = vec![t.to_string()];
            rec.extend(p.iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Use a zero velocity estimate instead of finite differences.
    pub fn with_zero_velocity(mut self, zero: bool) -> Self {
        self.zero_velocity = zero;
        self
    }

    pub fn push(&mut self, t: f64, position: Vec<f64>) -> Result<(), PathError> {
        if position.len() != self.dim {
            return Err(PathError::DimensionMismatch { expected: self.dim, got: position.len() });
        }
        if !t.is_finite() || position.iter().any(|v| !v.is_finite()) {
            return Err(PathError::Trace(format!("non-finite sample at t = {t}")));
        }
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(PathError::Trace(format!(
                    "sample times must increase strictly ({t} after {last})"
                )));
            }
        }
        self.times.push(t);
        self.positions.push(position);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn zero_velocity(&self) -> bool {
        self.zero_velocity
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    /// Interpolated position, clamped to the covered time span.
    pub fn position(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if n == 0 {
            return vec![0.0; self.dim];
        }
        if t <= self.times[0] {
            return self.positions[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.positions[n - 1].clone();
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let (t0, t1) = (self.times[lo], self.times[hi]);
        let a = (t - t0) / (t1 - t0);
        self.positions[lo]
            .iter()
            .zip(&self.positions[hi])
            .map(|(p0, p1)| p0 + a * (p1 - p0))
            .collect()
    }

    /// Backward-difference velocity estimate at `t`.
    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if self.zero_velocity || n < 2 {
            return vec![0.0; self.dim];
        }
        let t = t.min(self.times[n - 1]);
        let start = self.times[0];
        if t <= start {
            return vec![0.0; self.dim];
        }
        let w = self.window;
        if t - w >= start {
            // (3 p(t) - 4 p(t - w/2) + p(t - w)) / w, exact for quadratics
            let p0 = self.position(t);
            let p1 = self.position(t - 0.5 * w);
            let p2 = self.position(t - w);
            p0.iter()
                .zip(&p1)
                .zip(&p2)
                .map(|((a, b), c)| (3.0 * a - 4.0 * b + c) / w)
                .collect()
        } else {
            let p0 = self.position(t);
            let p1 = self.position(start);
            let span = t - start;
            p0.iter().zip(&p1).map(|(a, b)| (a - b) / span).collect()
        }
    }
}

/// The interception part of a manifold.
#[derive(Debug, Clone, PartialEq)]
pub enum Interception {
    Curve(ParametricCurve),
    Target(Arc<RealTimeTarget>),
}

impl Interception {
    pub fn dim(&self) -> usize {
        match self {
            Interception::Curve(c) => c.dim(),
            Interception::Target(t) => t.dim(),
        }
    }

    /// `f` and its derivative. In target mode `w1` is ignored: the position
    /// is read at time `t` and the derivative is the velocity estimate.
    pub fn value_and_tangent(&self, w1: f64, t: f64) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        match self {
            Interception::Curve(c) => Ok((c.point(w1)?, c.tangent(w1)?)),
            Interception::Target(trace) => Ok((trace.position(t), trace.velocity(t))),
        }
    }
}

/// Composite 2D manifold `x = f(w1) + g(w2)` for one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeManifold {
    f: Interception,
    g: ParametricCurve,
}

/// Everything the field needs from the manifold at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSample {
    pub phi: Vec<f64>,
    pub df: Vec<f64>,
    pub dg: Vec<f64>,
}

impl CompositeManifold {
    pub fn new(f: Interception, g: ParametricCurve) -> Result<Self, PathError> {
        if f.dim() != g.dim() {
            return Err(PathError::DimensionMismatch { expected: f.dim(), got: g.dim() });
        }
        Ok(Self { f, g })
    }

    pub fn parametric(f: ParametricCurve, g: ParametricCurve) -> Result<Self, PathError> {
        Self::new(Interception::Curve(f), g)
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn interception(&self) -> &Interception {
        &self.f
    }

    pub fn enclosing(&self) -> &ParametricCurve {
        &self.g
    }

    pub fn sample(&self, xi: &GeneralizedState, t: f64) -> Result<ManifoldSample, PathError> {
        let n = self.dim();
        if xi.dim() != n {
            return Err(PathError::DimensionMismatch { expected: n, got: xi.dim() });
        }
        let (f, df) = self.f.value_and_tangent(xi.w1, t)?;
        let g = self.g.point(xi.w2)?;
        let dg = self.g.tangent(xi.w2)?;
        let phi = (0..n).map(|j| xi.x[j] - f[j] - g[j]).collect();
        Ok(ManifoldSample { phi, df, dg })
    }

    /// Following error `x - f(w1) - g(w2)`.
    pub fn phi(&self, xi: &GeneralizedState, t: f64) -> Result<Vec<f64>, PathError> {
        let n = self.dim();
        if xi.dim() != n {
            return Err(PathError::DimensionMismatch { expected: n, got: xi.dim() });
        }
        let f = match &self.f {
            Interception::Curve(c) => c.point(xi.w1)?,
            Interception::Target(trace) => trace.position(t),
        };
        let g = self.g.point(xi.w2)?;
        Ok((0..n).map(|j| xi.x[j] - f[j] - g[j]).collect())
    }

    /// Desired position `f(w1) + g(w2)`.
    pub fn point(&self, w1: f64, w2: f64, t: f64) -> Result<Vec<f64>, EvalError> {
        let (f, _) = self.f.value_and_tangent(w1, t)?;
        let g = self.g.point(w2)?;
        Ok(f.iter().zip(&g).map(|(a, b)| a + b).collect())
    }
}

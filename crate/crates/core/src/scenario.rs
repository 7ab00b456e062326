//! Scenario files: TOML loading, the builtin scenarios, dumping back to
//! TOML, and the connectivity / boundedness audit.
//!
//! Robot indices in files are 1-based; everything resolved is 0-based.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, InitialBox, ModelKind, Scenario};
use crate::expr::Expr;
use crate::field::{FieldGains, FieldRoute, PropagationSpeeds};
use crate::graph::{OffsetTable, Topology};
use crate::paths::{
    CompositeManifold, DerivativeBounds, Interception, ParametricCurve, RealTimeTarget,
    DEFAULT_VELOCITY_WINDOW,
};
use crate::robot::{SaturationLimits, DEFAULT_K_THETA};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown scenario `{0}`: not a builtin name and no such file")]
    NotFound(String),
    #[error("{origin}: {source}")]
    Toml {
        origin: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("{origin}: `{key}`: {message}")]
    Invalid { origin: String, key: String, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot write scenario: {0}")]
    Dump(#[from] toml::ser::Error),
}

pub type Result<T, E = ScenarioError> = std::result::Result<T, E>;

/// A scenario shipped inside the library.
#[derive(Debug, Clone, Copy)]
pub struct Builtin {
    pub name: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
}

pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "sim1-formation",
        summary: "82 integrators track a sine wave in a letter glyph formation",
        source: include_str!("../scenarios/sim1-formation.toml"),
    },
    Builtin {
        name: "sim2-enclose",
        summary: "10 integrators enclose a target circling at radius 30",
        source: include_str!("../scenarios/sim2-enclose.toml"),
    },
    Builtin {
        name: "sim3-circumnav",
        summary: "27 unicycles circumnavigate a target on three orbit families",
        source: include_str!("../scenarios/sim3-circumnav.toml"),
    },
    Builtin {
        name: "sim3-desk",
        summary: "9 unicycles on the inner sim3 orbit family",
        source: include_str!("../scenarios/sim3-desk.toml"),
    },
    Builtin {
        name: "exp1-circle",
        summary: "5 saturated unicycles circle a moving target at 0.24 m",
        source: include_str!("../scenarios/exp1-circle.toml"),
    },
    Builtin {
        name: "exp2-star",
        summary: "5 saturated unicycles on a star orbit around a moving target",
        source: include_str!("../scenarios/exp2-star.toml"),
    },
];

/// Data files referenced by builtin scenarios, keyed by file name.
const BUILTIN_DATA: &[(&str, &str)] =
    &[("glyph.csv", include_str!("../data/glyph.csv"))];

pub fn builtin(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}

// ---------------------------------------------------------------------------
// File schema

/// A number, an expression in the 1-based robot index `w`, an explicit list,
/// or a list of index ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerRobot {
    Scalar(f64),
    Expr(String),
    List(Vec<f64>),
    Ranges(Vec<RangeValue>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeValue {
    pub robots: [usize; 2],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

/// `"ring"`, `"ring:K"`, `"complete"`, `"path"`, or 1-based `[i, j]` edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    Named(String),
    Edges(Vec<[usize; 2]>),
}

impl Default for TopologySpec {
    fn default() -> Self {
        TopologySpec::Named("ring".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InterceptionSpec {
    Curve(Vec<String>),
    /// `"target"`: the real-time target trace.
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnclosingSpec {
    Curve(Vec<String>),
    /// Per-robot constant offsets from a `robot,x1..xn` CSV.
    Table { table: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robots: Option<[usize; 2]>,
    pub f: InterceptionSpec,
    pub g: EnclosingSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<ScalarOrList>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetPreset {
    /// Straight line along `x1` at `speed`.
    Line,
    /// Arc of radius `radius` at `speed`.
    Curve,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<TargetPreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_velocity: Option<bool>,
    /// Inline `[t, x1, .., xn]` rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

/// On-disk scenario. Tables come last so the TOML writer can emit them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default = "default_n")]
    pub n: usize,
    pub robots: usize,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub route: FieldRoute,
    #[serde(default)]
    pub topology: TopologySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<ScalarOrList>,
    #[serde(default = "one")]
    pub kc1: f64,
    #[serde(default = "one")]
    pub kc2: f64,
    #[serde(default)]
    pub w1dot_star: f64,
    #[serde(default)]
    pub w2dot_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1_star: Option<PerRobot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2_star: Option<PerRobot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<SaturationLimits>,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSpec>,
    pub manifold: Vec<ManifoldSpec>,
}

fn default_n() -> usize {
    3
}

fn default_dt() -> f64 {
    0.01
}

fn default_log_every() -> usize {
    1
}

fn one() -> f64 {
    1.0
}

// ---------------------------------------------------------------------------
// Loading

/// Command-line overrides, applied before resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, file: &mut ScenarioFile) {
        if let Some(seed) = self.seed {
            file.seed = seed;
        }
        if let Some(dt) = self.dt {
            file.dt = dt;
        }
        if let Some(duration) = self.duration {
            file.duration = duration;
        }
    }
}

/// Where relative data paths resolve.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Builtin(&'static str),
    File(PathBuf),
    Inline,
}

impl Origin {
    fn label(&self) -> String {
        match self {
            Origin::Builtin(name) => format!("builtin `{name}`"),
            Origin::File(path) => path.display().to_string(),
            Origin::Inline => "inline scenario".into(),
        }
    }

    fn read(&self, rel: &str) -> Result<String> {
        let io = |path: PathBuf, source| ScenarioError::Io { path, source };
        match self {
            Origin::Builtin(_) => {
                let file = Path::new(rel).file_name().and_then(|f| f.to_str()).unwrap_or(rel);
                BUILTIN_DATA
                    .iter()
                    .find(|(name, _)| *name == file)
                    .map(|(_, data)| data.to_string())
                    .ok_or_else(|| {
                        io(rel.into(), std::io::Error::new(std::io::ErrorKind::NotFound, "no builtin data file"))
                    })
            }
            Origin::File(path) => {
                let full = path.parent().unwrap_or(Path::new(".")).join(rel);
                std::fs::read_to_string(&full).map_err(|e| io(full, e))
            }
            Origin::Inline => {
                std::fs::read_to_string(rel).map_err(|e| io(rel.into(), e))
            }
        }
    }
}

/// Assumption-audit settings carried next to a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSettings {
    pub w1: (f64, f64),
    pub w2: (f64, f64),
    pub bound: f64,
    pub samples: usize,
}

/// A resolved scenario plus what only the loader knows about.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub scenario: Scenario,
    pub description: Option<String>,
    pub audit: AuditSettings,
}

/// Load a builtin name or a TOML path.
pub fn load_scenario(spec: &str) -> Result<Scenario> {
    Ok(load(spec, &Overrides::default())?.scenario)
}

pub fn load(spec: &str, overrides: &Overrides) -> Result<Loaded> {
    if let Some(b) = builtin(spec) {
        return load_str(b.source, Origin::Builtin(b.name), overrides);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(ScenarioError::NotFound(spec.into()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    load_str(&text, Origin::File(path.into()), overrides)
}

pub fn load_str(text: &str, origin: Origin, overrides: &Overrides) -> Result<Loaded> {
    let mut file: ScenarioFile = toml::from_str(text)
        .map_err(|source| ScenarioError::Toml { origin: origin.label(), source })?;
    overrides.apply(&mut file);
    resolve(&file, &origin)
}

struct Ctx<'a> {
    origin: &'a Origin,
}

impl Ctx<'_> {
    fn err(&self, key: &str, message: impl ToString) -> ScenarioError {
        ScenarioError::Invalid {
            origin: self.origin.label(),
            key: key.into(),
            message: message.to_string(),
        }
    }
}

fn per_robot(ctx: &Ctx, key: &str, spec: Option<&PerRobot>, count: usize) -> Result<Vec<f64>> {
    match spec {
        None => Ok(vec![0.0; count]),
        Some(PerRobot::Scalar(v)) => Ok(vec![*v; count]),
        Some(PerRobot::Expr(text)) => {
            let e: Expr = text.parse().map_err(|e| ctx.err(key, e))?;
            (1..=count)
                .map(|i| e.eval(i as f64).map_err(|e| ctx.err(key, e)))
                .collect()
        }
        Some(PerRobot::List(values)) => {
            if values.len() != count {
                return Err(ctx.err(key, format!("{} values for {count} robots", values.len())));
            }
            Ok(values.clone())
        }
        Some(PerRobot::Ranges(ranges)) => {
            let mut out = vec![None; count];
            for (r, range) in ranges.iter().enumerate() {
                let sub = format!("{key}[{r}].robots");
                for i in robot_range(ctx, &sub, range.robots, count)? {
                    if out[i].replace(range.value).is_some() {
                        return Err(ctx.err(&sub, format!("robot {} assigned twice", i + 1)));
                    }
                }
            }
            out.iter()
                .enumerate()
                .map(|(i, v)| v.ok_or_else(|| ctx.err(key, format!("robot {} not assigned", i + 1))))
                .collect()
        }
    }
}

fn robot_range(ctx: &Ctx, key: &str, [lo, hi]: [usize; 2], count: usize) -> Result<std::ops::Range<usize>> {
    if lo == 0 || lo > hi || hi > count {
        return Err(ctx.err(key, format!("[{lo}, {hi}] is not a 1-based range within 1..={count}")));
    }
    Ok(lo - 1..hi)
}

fn scalar_or_list(ctx: &Ctx, key: &str, spec: Option<&ScalarOrList>, n: usize, default: f64) -> Result<Vec<f64>> {
    match spec {
        None => Ok(vec![default; n]),
        Some(ScalarOrList::Scalar(v)) => Ok(vec![*v; n]),
        Some(ScalarOrList::List(v)) if v.len() == n => Ok(v.clone()),
        Some(ScalarOrList::List(v)) => Err(ctx.err(key, format!("{} values for n = {n}", v.len()))),
    }
}

fn topology(ctx: &Ctx, spec: &TopologySpec, count: usize) -> Result<Topology> {
    match spec {
        TopologySpec::Named(name) => match name.as_str() {
            "ring" => Ok(Topology::ring(count)),
            "complete" => Ok(Topology::complete(count)),
            "path" => Ok(Topology::path(count)),
            other => {
                let k = other
                    .strip_prefix("ring:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k > 0)
                    .ok_or_else(|| ctx.err("topology", format!("unknown topology `{other}`")))?;
                Ok(Topology::circulant(count, k))
            }
        },
        TopologySpec::Edges(edges) => {
            let mut zero_based = Vec::with_capacity(edges.len());
            for (e, &[i, j]) in edges.iter().enumerate() {
                if i == 0 || j == 0 {
                    return Err(ctx.err(&format!("topology[{e}]"), "robot indices are 1-based"));
                }
                zero_based.push((i - 1, j - 1));
            }
            Topology::new(count, zero_based).map_err(|e| ctx.err("topology", e))
        }
    }
}

fn curve(ctx: &Ctx, key: &str, components: &[String], n: usize) -> Result<ParametricCurve> {
    if components.len() != n {
        return Err(ctx.err(key, format!("{} components for n = {n}", components.len())));
    }
    ParametricCurve::parse(components).map_err(|e| ctx.err(key, e))
}

fn offset_table(ctx: &Ctx, key: &str, rel: &str, n: usize, count: usize) -> Result<Vec<Option<Vec<f64>>>> {
    let text = ctx.origin.read(rel)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = vec![None; count];
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| ctx.err(key, e))?;
        if record.len() != n + 1 {
            return Err(ctx.err(key, format!("row {}: expected robot and {n} values", r + 1)));
        }
        let values: Vec<f64> = record
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ctx.err(key, format!("row {}: {e}", r + 1)))?;
        let robot = values[0] as usize;
        if values[0].fract() != 0.0 || robot == 0 || robot > count {
            return Err(ctx.err(key, format!("row {}: bad robot index {}", r + 1, values[0])));
        }
        rows[robot - 1] = Some(values[1..].to_vec());
    }
    Ok(rows)
}

fn target_trace(ctx: &Ctx, spec: &TargetSpec, n: usize, duration: f64) -> Result<RealTimeTarget> {
    let window = spec.window.unwrap_or(DEFAULT_VELOCITY_WINDOW);
    if !(window > 0.0) {
        return Err(ctx.err("target.window", "must be positive"));
    }
    let sources = [spec.preset.is_some(), spec.file.is_some(), spec.samples.is_some()];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(ctx.err("target", "give exactly one of `preset`, `file`, `samples`"));
    }
    let trace = if let Some(preset) = spec.preset {
        let speed = spec.speed.unwrap_or(0.02);
        let radius = spec.radius.unwrap_or(0.5);
        let sample_dt = spec.sample_dt.unwrap_or(0.01);
        if !(sample_dt > 0.0) || !(radius > 0.0) {
            return Err(ctx.err("target", "`sample_dt` and `radius` must be positive"));
        }
        // one extra second so the backward-difference window never runs off
        RealTimeTarget::from_fn(n, duration + 1.0, sample_dt, window, |t| {
            let mut p = vec![0.0; n];
            match preset {
                TargetPreset::Line => p[0] = speed * t,
                TargetPreset::Curve => {
                    let a = speed * t / radius;
                    p[0] = radius * a.sin();
                    p[1] = radius * (1.0 - a.cos());
                }
            }
            p
        })
    } else if let Some(rel) = &spec.file {
        if n != 3 {
            return Err(ctx.err("target.file", "trace files carry t,x1,x2,x3 and need n = 3"));
        }
        let text = ctx.origin.read(rel)?;
        RealTimeTarget::from_csv_reader(text.as_bytes(), window)
    } else {
        let mut trace = RealTimeTarget::new(n, window);
        for (r, row) in spec.samples.iter().flatten().enumerate() {
            if row.len() != n + 1 {
                return Err(ctx.err(&format!("target.samples[{r}]"), format!("expected {} numbers", n + 1)));
            }
            trace.push(row[0], row[1..].to_vec()).map_err(|e| ctx.err(&format!("target.samples[{r}]"), e))?;
        }
        Ok(trace)
    }
    .map_err(|e| ctx.err("target", e))?;
    if trace.len() < 2 {
        return Err(ctx.err("target", "trace needs at least two samples"));
    }
    Ok(trace.with_zero_velocity(spec.zero_velocity.unwrap_or(false)))
}

fn resolve(file: &ScenarioFile, origin: &Origin) -> Result<Loaded> {
    let ctx = Ctx { origin };
    let (n, count) = (file.n, file.robots);
    if n == 0 {
        return Err(ctx.err("n", "must be at least 1"));
    }
    if count == 0 {
        return Err(ctx.err("robots", "must be at least 1"));
    }
    if !(file.dt > 0.0 && file.dt.is_finite()) {
        return Err(ctx.err("dt", "must be positive"));
    }
    if !(file.duration >= 0.0 && file.duration.is_finite()) {
        return Err(ctx.err("duration", "must be non-negative"));
    }
    if file.duration > 0.0 && file.duration < file.dt {
        return Err(ctx.err("duration", "must be at least dt"));
    }

    let target = file
        .target
        .as_ref()
        .map(|spec| target_trace(&ctx, spec, n, file.duration).map(Arc::new))
        .transpose()?;

    let mut manifolds: Vec<Option<CompositeManifold>> = vec![None; count];
    for (m, spec) in file.manifold.iter().enumerate() {
        let key = format!("manifold[{m}]");
        let range = match spec.robots {
            Some(r) => robot_range(&ctx, &format!("{key}.robots"), r, count)?,
            None => 0..count,
        };
        let f = match &spec.f {
            InterceptionSpec::Curve(c) => Interception::Curve(curve(&ctx, &format!("{key}.f"), c, n)?),
            InterceptionSpec::Keyword(k) if k == "target" => match &target {
                Some(t) => Interception::Target(t.clone()),
                None => return Err(ctx.err(&format!("{key}.f"), "`target` needs a [target] table")),
            },
            InterceptionSpec::Keyword(k) => {
                return Err(ctx.err(&format!("{key}.f"), format!("expected a component list or \"target\", got `{k}`")))
            }
        };
        let table = match &spec.g {
            EnclosingSpec::Table { table } => Some(offset_table(&ctx, &format!("{key}.g"), table, n, count)?),
            EnclosingSpec::Curve(_) => None,
        };
        for i in range {
            let g = match (&spec.g, &table) {
                (EnclosingSpec::Curve(c), _) => curve(&ctx, &format!("{key}.g"), c, n)?,
                (_, Some(rows)) => {
                    let row = rows[i]
                        .as_ref()
                        .ok_or_else(|| ctx.err(&format!("{key}.g"), format!("no table row for robot {}", i + 1)))?;
                    ParametricCurve::constant(row).map_err(|e| ctx.err(&format!("{key}.g"), e))?
                }
                _ => unreachable!("table is loaded for table specs"),
            };
            let manifold = CompositeManifold::new(f.clone(), g).map_err(|e| ctx.err(&key, e))?;
            if manifolds[i].replace(manifold).is_some() {
                return Err(ctx.err(&key, format!("robot {} covered by two manifold entries", i + 1)));
            }
        }
    }
    let manifolds = manifolds
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| ctx.err("manifold", format!("robot {} has no manifold", i + 1))))
        .collect::<Result<Vec<_>>>()?;

    let topology = topology(&ctx, &file.topology, count)?;
    let offsets = OffsetTable::new(
        per_robot(&ctx, "w1_star", file.w1_star.as_ref(), count)?,
        per_robot(&ctx, "w2_star", file.w2_star.as_ref(), count)?,
    )
    .map_err(|e| ctx.err("w1_star", e))?;
    let k = scalar_or_list(&ctx, "k", file.k.as_ref(), n, 1.0)?;
    let gains = FieldGains::new(k, file.kc1, file.kc2).map_err(|e| ctx.err("k", e))?;
    let k_theta = file.k_theta.unwrap_or(DEFAULT_K_THETA);
    if !(k_theta > 0.0) {
        return Err(ctx.err("k_theta", "must be positive"));
    }
    let saturation = file.saturation.unwrap_or_default();
    for (key, lim) in [("v", saturation.v), ("uz", saturation.uz), ("utheta", saturation.utheta)] {
        if lim.is_some_and(|l| !(l >= 0.0)) {
            return Err(ctx.err(&format!("saturation.{key}"), "must be non-negative"));
        }
    }
    let range = |key: &str, r: Option<[f64; 2]>, default: (f64, f64)| -> Result<(f64, f64)> {
        let (lo, hi) = r.map_or(default, |[a, b]| (a, b));
        if lo > hi || !lo.is_finite() || !hi.is_finite() {
            return Err(ctx.err(key, "expected a finite [lo, hi] with lo <= hi"));
        }
        Ok((lo, hi))
    };
    let init = InitialBox {
        center: scalar_or_list(
            &ctx,
            "init.center",
            file.init.center.clone().map(ScalarOrList::List).as_ref(),
            n,
            0.0,
        )?,
        half_width: scalar_or_list(&ctx, "init.half_width", file.init.half_width.as_ref(), n, 10.0)?,
        w1_range: range("init.w1", file.init.w1, (0.0, 1.0))?,
        w2_range: range("init.w2", file.init.w2, (0.0, 1.0))?,
        theta_range: range("init.theta", file.init.theta, (-PI, PI))?,
    };
    if init.half_width.iter().any(|&h| !(h >= 0.0)) {
        return Err(ctx.err("init.half_width", "must be non-negative"));
    }
    if file.log_every == 0 {
        return Err(ctx.err("log_every", "must be at least 1"));
    }

    let scenario = Scenario {
        name: file.name.clone(),
        n,
        model: file.model,
        manifolds,
        topology,
        offsets,
        gains,
        speeds: PropagationSpeeds::new(file.w1dot_star, file.w2dot_star),
        k_theta,
        saturation,
        dt: file.dt,
        duration: file.duration,
        seed: file.seed,
        init,
        target,
        route: file.route,
        log_every: file.log_every,
    };
    scenario.validate()?;

    let spec = file.audit.clone().unwrap_or_default();
    let reach = |speed: f64| (-10.0, 10.0 + speed.abs() * file.duration);
    let audit = AuditSettings {
        w1: range("audit.w1", spec.w1, reach(file.w1dot_star))?,
        w2: range("audit.w2", spec.w2, reach(file.w2dot_star))?,
        bound: spec.bound.unwrap_or(1e3),
        samples: spec.samples.unwrap_or(2001).max(2),
    };
    Ok(Loaded { scenario, description: file.description.clone(), audit })
}

// ---------------------------------------------------------------------------
// Dumping

fn curve_strings(c: &ParametricCurve) -> Vec<String> {
    c.components().iter().map(ToString::to_string).collect()
}

/// Fully resolved file form: per-robot values are explicit lists, table
/// offsets become constant curves, and a target trace is inlined.
pub fn to_file(loaded: &Loaded) -> ScenarioFile {
    let s = &loaded.scenario;
    let count = s.robot_count();
    let topology = if s.topology == Topology::ring(count) {
        TopologySpec::Named("ring".into())
    } else if s.topology == Topology::complete(count) {
        TopologySpec::Named("complete".into())
    } else {
        TopologySpec::Edges(s.topology.edges().iter().map(|&(i, j)| [i + 1, j + 1]).collect())
    };

    let describe = |m: &CompositeManifold| {
        let f = match m.interception() {
            Interception::Curve(c) => InterceptionSpec::Curve(curve_strings(c)),
            Interception::Target(_) => InterceptionSpec::Keyword("target".into()),
        };
        (f, EnclosingSpec::Curve(curve_strings(m.enclosing())))
    };
    let mut manifold: Vec<ManifoldSpec> = Vec::new();
    for (i, m) in s.manifolds.iter().enumerate() {
        let (f, g) = describe(m);
        match manifold.last_mut() {
            Some(last) if last.f == f && last.g == g => {
                if let Some(r) = last.robots.as_mut() {
                    r[1] = i + 1;
                }
            }
            _ => manifold.push(ManifoldSpec { robots: Some([i + 1, i + 1]), f, g }),
        }
    }

    let target = s.target.as_ref().map(|t| TargetSpec {
        window: Some(t.window()),
        zero_velocity: Some(t.zero_velocity()),
        samples: Some(
            t.times()
                .iter()
                .zip(t.positions())
                .map(|(time, p)| std::iter::once(*time).chain(p.iter().copied()).collect())
                .collect(),
        ),
        ..TargetSpec::default()
    });

    let saturation = (s.saturation != SaturationLimits::none()).then_some(s.saturation);
    ScenarioFile {
        name: s.name.clone(),
        description: loaded.description.clone(),
        n: s.n,
        robots: count,
        model: s.model,
        dt: s.dt,
        duration: s.duration,
        seed: s.seed,
        log_every: s.log_every,
        route: s.route,
        topology,
        k: Some(ScalarOrList::List(s.gains.k().to_vec())),
        kc1: s.gains.kc1(),
        kc2: s.gains.kc2(),
        w1dot_star: s.speeds.w1dot_star,
        w2dot_star: s.speeds.w2dot_star,
        k_theta: Some(s.k_theta),
        w1_star: Some(PerRobot::List(s.offsets.w1_star().to_vec())),
        w2_star: Some(PerRobot::List(s.offsets.w2_star().to_vec())),
        saturation,
        init: InitSpec {
            center: Some(s.init.center.clone()),
            half_width: Some(ScalarOrList::List(s.init.half_width.clone())),
            w1: Some([s.init.w1_range.0, s.init.w1_range.1]),
            w2: Some([s.init.w2_range.0, s.init.w2_range.1]),
            theta: Some([s.init.theta_range.0, s.init.theta_range.1]),
        },
        target,
        audit: Some(AuditSpec {
            w1: Some([loaded.audit.w1.0, loaded.audit.w1.1]),
            w2: Some([loaded.audit.w2.0, loaded.audit.w2.1]),
            bound: Some(loaded.audit.bound),
            samples: Some(loaded.audit.samples),
        }),
        manifold,
    }
}

pub fn dump(loaded: &Loaded) -> Result<String> {
    Ok(toml::to_string(&to_file(loaded))?)
}

// ---------------------------------------------------------------------------
// Assumption audit

#[derive(Debug, Clone, PartialEq)]
pub struct CurveAudit {
    pub label: String,
    pub range: (f64, f64),
    pub bounds: DerivativeBounds,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub connected: bool,
    pub components: usize,
    pub bound: f64,
    pub curves: Vec<CurveAudit>,
}

impl AuditReport {
    pub fn bounded(&self) -> bool {
        self.curves.iter().all(|c| c.pass)
    }

    pub fn pass(&self) -> bool {
        self.connected && self.bounded()
    }
}

fn trace_bounds(trace: &RealTimeTarget) -> DerivativeBounds {
    let times = trace.times();
    let velocities: Vec<Vec<f64>> = times.iter().map(|&t| trace.velocity(t)).collect();
    let mut bounds = DerivativeBounds::default();
    for (k, v) in velocities.iter().enumerate() {
        bounds.first = v.iter().fold(bounds.first, |m, x| m.max(x.abs()));
        if k > 0 {
            let dt = times[k] - times[k - 1];
            for (a, b) in v.iter().zip(&velocities[k - 1]) {
                bounds.second = bounds.second.max(((a - b) / dt).abs());
            }
        }
    }
    bounds
}

fn ranges_label(robots: &[usize]) -> String {
    let mut out = String::new();
    let mut k = 0;
    while k < robots.len() {
        let start = robots[k];
        while k + 1 < robots.len() && robots[k + 1] == robots[k] + 1 {
            k += 1;
        }
        if !out.is_empty() {
            out.push(',');
        }
        if robots[k] == start {
            let _ = write!(out, "{}", start + 1);
        } else {
            let _ = write!(out, "{}-{}", start + 1, robots[k] + 1);
        }
        k += 1;
    }
    out
}

/// Connectivity of the communication graph and sampled derivative bounds of
/// every distinct curve.
pub fn audit(loaded: &Loaded) -> AuditReport {
    let s = &loaded.scenario;
    let a = loaded.audit;
    let components = s.topology.components().into_iter().collect::<std::collections::BTreeSet<_>>().len();
    // distinct curves keyed by their printed form, in first-use order
    let mut seen: Vec<(String, String, Vec<usize>, DerivativeBounds, (f64, f64))> = Vec::new();
    let mut note = |role: &str, key: String, robot: usize, bounds: &dyn Fn() -> DerivativeBounds, range| {
        match seen.iter_mut().find(|(r, k, ..)| r == role && *k == key) {
            Some(entry) => entry.2.push(robot),
            None => seen.push((role.into(), key, vec![robot], bounds(), range)),
        }
    };
    let eval_bounds = |c: &ParametricCurve, (lo, hi): (f64, f64)| {
        c.derivative_bounds(lo, hi, a.samples).unwrap_or(DerivativeBounds {
            first: f64::INFINITY,
            second: f64::INFINITY,
        })
    };
    for (i, m) in s.manifolds.iter().enumerate() {
        match m.interception() {
            Interception::Curve(c) => {
                note("f", curve_strings(c).join(", "), i, &|| eval_bounds(c, a.w1), a.w1)
            }
            Interception::Target(t) => {
                let span = (t.times()[0], *t.times().last().unwrap_or(&0.0));
                note("f", "target trace".into(), i, &|| trace_bounds(t), span)
            }
        }
        let g = m.enclosing();
        note("g", curve_strings(g).join(", "), i, &|| eval_bounds(g, a.w2), a.w2);
    }
    let curves = seen
        .into_iter()
        .map(|(role, key, robots, bounds, range)| CurveAudit {
            label: format!("{role} = ({key}) [robots {}]", ranges_label(&robots)),
            range,
            pass: bounds.first <= a.bound && bounds.second <= a.bound,
            bounds,
        })
        .collect();
    AuditReport { connected: components == 1, components, bound: a.bound, curves }
}

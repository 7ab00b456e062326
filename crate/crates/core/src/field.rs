//! Guiding vector field on the composite manifold.
//!
//! For a robot with generalized coordinate `ξ = (x_1..x_n, w1, w2)` and
//! errors `φ_j = x_j - f_j(w1) - g_j(w2)`, the navigation field is
//!
//! ```text
//! χ = ∧(∇φ_1, …, ∇φ_n, λ) - Σ_j k_j φ_j ∇φ_j
//! ```
//!
//! where `λ = (0, …, 0, λ_w2, λ_w1)` and the wedge is the generalized cross
//! product of `n + 1` vectors in `R^{n+2}`. Expanding the wedge gives a
//! closed form that is implemented separately ([`navigation_field_closed_form`]);
//! the two routes are checked against each other in the tests.
//!
//! The distributed field adds the consensus residuals to the `w1` and `w2`
//! rows ([`composite_field`]).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paths::{CompositeManifold, ManifoldSample, PathError};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("wedge needs {expected} vectors of length {len}, got {got}")]
    WedgeArity { expected: usize, len: usize, got: usize },
    #[error("gain `{name}` must be positive and finite, got {value}")]
    Gain { name: String, value: f64 },
    #[error("component index {j} outside 0..{n}")]
    Component { j: usize, n: usize },
}

/// `ξ = (x, w1, w2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub x: Vec<f64>,
    pub w1: f64,
    pub w2: f64,
}

impl GeneralizedState {
    pub fn new(x: Vec<f64>, w1: f64, w2: f64) -> Self {
        Self { x, w1, w2 }
    }

    /// Ambient dimension `n` (the state itself has `n + 2` entries).
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.w1);
        v.push(self.w2);
        v
    }

    /// Inverse of [`to_vec`](Self::to_vec). `v` must have at least two entries.
    pub fn from_slice(v: &[f64]) -> Self {
        let n = v.len() - 2;
        Self { x: v[..n].to_vec(), w1: v[n], w2: v[n + 1] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite()) && self.w1.is_finite() && self.w2.is_finite()
    }
}

/// Manifold attraction gains `k_j` and consensus weights `kc1`, `kc2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGains {
    k: Vec<f64>,
    kc1: f64,
    kc2: f64,
}

impl FieldGains {
    pub fn new(k: Vec<f64>, kc1: f64, kc2: f64) -> Result<Self, FieldError> {
        for (j, &v) in k.iter().enumerate() {
            check_positive(&format!("k[{}]", j + 1), v)?;
        }
        check_positive("kc1", kc1)?;
        check_positive("kc2", kc2)?;
        Ok(Self { k, kc1, kc2 })
    }

    /// `k_j = 1`, `kc1 = kc2 = 1`.
    pub fn unit(n: usize) -> Self {
        Self { k: vec![1.0; n], kc1: 1.0, kc2: 1.0 }
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn kc1(&self) -> f64 {
        self.kc1
    }

    pub fn kc2(&self) -> f64 {
        self.kc2
    }
}

fn check_positive(name: &str, value: f64) -> Result<(), FieldError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FieldError::Gain { name: name.to_string(), value })
    }
}

/// Desired parametric speeds and the matching wedge coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSpeeds {
    pub w1dot_star: f64,
    pub w2dot_star: f64,
}

impl PropagationSpeeds {
    pub fn new(w1dot_star: f64, w2dot_star: f64) -> Self {
        Self { w1dot_star, w2dot_star }
    }

    /// `λ_w1 = (-1)^{n+2} ẇ1*`.
    pub fn lambda_w1(&self, n: usize) -> f64 {
        sign_pow(n + 2) * self.w1dot_star
    }

    /// `λ_w2 = (-1)^{n+1} ẇ2*`.
    pub fn lambda_w2(&self, n: usize) -> f64 {
        sign_pow(n + 1) * self.w2dot_star
    }

    /// `λ = (0, …, 0, λ_w2, λ_w1) ∈ R^{n+2}`.
    pub fn lambda(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n + 2];
        v[n] = self.lambda_w2(n);
        v[n + 1] = self.lambda_w1(n);
        v
    }
}

fn sign_pow(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Generalized cross product of `m` vectors in `R^{m+1}`.
///
/// Component `k` (0-based) is `(-1)^k det(M_k)`, where `M_k` is the stacked
/// input matrix with column `k` removed; this is the cofactor expansion of
/// `det[e; v_1; …; v_m]` along the basis row placed first. For `m = 2` it is
/// the ordinary cross product.
pub fn wedge(vectors: &[Vec<f64>]) -> Result<Vec<f64>, FieldError> {
    let m = vectors.len();
    let len = m + 1;
    if m == 0 || vectors.iter().any(|v| v.len() != len) {
        let got = vectors.iter().find(|v| v.len() != len).map_or(m, Vec::len);
        return Err(FieldError::WedgeArity { expected: m, len, got });
    }
    let stacked = DMatrix::from_fn(m, len, |r, c| vectors[r][c]);
    Ok((0..len)
        .map(|k| sign_pow(k) * stacked.clone().remove_column(k).determinant())
        .collect())
}

/// `∇φ_j = (e_j, -f_j'(w1), -g_j'(w2))`, `j` 0-based.
pub fn grad_phi_from_sample(sample: &ManifoldSample, j: usize) -> Vec<f64> {
    let n = sample.phi.len();
    let mut grad = vec![0.0; n + 2];
    grad[j] = 1.0;
    grad[n] = -sample.df[j];
    grad[n + 1] = -sample.dg[j];
    grad
}

pub fn grad_phi(
    manifold: &CompositeManifold,
    xi: &GeneralizedState,
    j: usize,
    t: f64,
) -> Result<Vec<f64>, FieldError> {
    let n = manifold.dim();
    if j >= n {
        return Err(FieldError::Component { j, n });
    }
    Ok(grad_phi_from_sample(&manifold.sample(xi, t)?, j))
}

/// How the navigation field is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldRoute {
    /// Expanded formula; no determinants.
    #[default]
    ClosedForm,
    /// Explicit wedge product of the gradients and `λ`.
    Wedge,
}

fn gain_checked(gains: &FieldGains, n: usize) -> Result<(), FieldError> {
    if gains.k.len() != n {
        return Err(FieldError::Path(PathError::DimensionMismatch {
            expected: n,
            got: gains.k.len(),
        }));
    }
    Ok(())
}

/// Navigation field through the wedge product.
pub fn wedge_field_from_sample(
    sample: &ManifoldSample,
    gains: &FieldGains,
    speeds: &PropagationSpeeds,
) -> Result<Vec<f64>, FieldError> {
    let n = sample.phi.len();
    gain_checked(gains, n)?;
    let grads: Vec<Vec<f64>> = (0..n).map(|j| grad_phi_from_sample(sample, j)).collect();
    let mut inputs = grads.clone();
    inputs.push(speeds.lambda(n));
    let mut chi = wedge(&inputs)?;
    for (j, grad) in grads.iter().enumerate() {
        let scale = gains.k[j] * sample.phi[j];
        for (c, g) in chi.iter_mut().zip(grad) {
            *c -= scale * g;
        }
    }
    Ok(chi)
}

/// Navigation field from the expanded formula:
///
/// ```text
/// spatial row j: (-1)^n (λ_w1 f_j' - λ_w2 g_j') - k_j φ_j
/// w1 row:        (-1)^n λ_w1 + Σ k_j φ_j f_j'
/// w2 row:       -(-1)^n λ_w2 + Σ k_j φ_j g_j'
/// ```
pub fn closed_form_from_sample(
    sample: &ManifoldSample,
    gains: &FieldGains,
    speeds: &PropagationSpeeds,
) -> Result<Vec<f64>, FieldError> {
    let n = sample.phi.len();
    gain_checked(gains, n)?;
    let s = sign_pow(n);
    let lw1 = speeds.lambda_w1(n);
    let lw2 = speeds.lambda_w2(n);
    let mut chi = vec![0.0; n + 2];
    let mut row_w1 = s * lw1;
    let mut row_w2 = -s * lw2;
    for j in 0..n {
        let kphi = gains.k[j] * sample.phi[j];
        chi[j] = s * (lw1 * sample.df[j] - lw2 * sample.dg[j]) - kphi;
        row_w1 += kphi * sample.df[j];
        row_w2 += kphi * sample.dg[j];
    }
    chi[n] = row_w1;
    chi[n + 1] = row_w2;
    Ok(chi)
}

pub fn navigation_field_from_sample(
    sample: &ManifoldSample,
    gains: &FieldGains,
    speeds: &PropagationSpeeds,
    route: FieldRoute,
) -> Result<Vec<f64>, FieldError> {
    match route {
        FieldRoute::ClosedForm => closed_form_from_sample(sample, gains, speeds),
        FieldRoute::Wedge => wedge_field_from_sample(sample, gains, speeds),
    }
}

/// Navigation field built from the wedge product.
pub fn navigation_field(
    manifold: &CompositeManifold,
    xi: &GeneralizedState,
    gains: &FieldGains,
    speeds: &PropagationSpeeds,
    t: f64,
) -> Result<Vec<f64>, FieldError> {
    wedge_field_from_sample(&manifold.sample(xi, t)?, gains, speeds)
}

pub fn navigation_field_closed_form(
    manifold: &CompositeManifold,
    xi: &GeneralizedState,
    gains: &FieldGains,
    speeds: &PropagationSpeeds,
    t: f64,
) -> Result<Vec<f64>, FieldError> {
    closed_form_from_sample(&manifold.sample(xi, t)?, gains, speeds)
}

/// Adds `kc1·c1` to the `w1` row and `kc2·c2` to the `w2` row.
pub fn add_coordination(mut field: Vec<f64>, gains: &FieldGains, c1: f64, c2: f64) -> Vec<f64> {
    let len = field.len();
    field[len - 2] += gains.kc1 * c1;
    field[len - 1] += gains.kc2 * c2;
    field
}

/// Distributed field: navigation field plus weighted consensus terms.
#[allow(clippy::too_many_arguments)]
pub fn composite_field(
    manifold: &CompositeManifold,
    xi: &GeneralizedState,
    gains: &FieldGains,
    speeds: &PropagationSpeeds,
    c1: f64,
    c2: f64,
    t: f64,
    route: FieldRoute,
) -> Result<Vec<f64>, FieldError> {
    let sample = manifold.sample(xi, t)?;
    let nav = navigation_field_from_sample(&sample, gains, speeds, route)?;
    Ok(add_coordination(nav, gains, c1, c2))
}

//! Domains (half-space and ball), boundary operators and the boundary
//! flattening chart.
//!
//! Normals follow the inward convention: for the half-space `{x_1 > 0}` the
//! normal is `e_1`; for the ball of radius `R` centred at the origin it is
//! `-x/|x|`. Signed distances are positive inside the domain.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::vector::{dot, dot2, norm, two_prod, two_sum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be at least 3, got {0}")]
    DimensionTooSmall(usize),
    #[error("ball radius must be finite and > 0, got {0}")]
    InvalidRadius(f64),
    #[error("point lies outside the flattening chart: {0}")]
    ChartViolation(String),
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    HalfSpace,
    Ball { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
}

impl Domain {
    pub fn half_space(dim: usize) -> Result<Self, GeometryError> {
        if dim < 3 {
            return Err(GeometryError::DimensionTooSmall(dim));
        }
        Ok(Self {
            kind: DomainKind::HalfSpace,
            dim,
        })
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self, GeometryError> {
        if dim < 3 {
            return Err(GeometryError::DimensionTooSmall(dim));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::InvalidRadius(radius));
        }
        Ok(Self {
            kind: DomainKind::Ball { radius },
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    /// Characteristic length: 1 for the half-space, `R` for the ball.
    pub fn scale(&self) -> f64 {
        match self.kind {
            DomainKind::HalfSpace => 1.0,
            DomainKind::Ball { radius } => radius,
        }
    }

    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self.kind {
            DomainKind::HalfSpace => x[0],
            DomainKind::Ball { radius } => radius - norm(x),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) >= 0.0
    }

    /// Inward unit normal of the level set of the signed distance through `x`
    /// (equal to the gradient of the signed distance). At the centre of the
    /// ball, where the gradient is undefined, `e_1` is returned.
    pub fn inward_normal(&self, x: &[f64]) -> Vec<f64> {
        let mut n = vec![0.0; self.dim];
        match self.kind {
            DomainKind::HalfSpace => n[0] = 1.0,
            DomainKind::Ball { .. } => {
                let r = norm(x);
                if r == 0.0 {
                    n[0] = 1.0;
                } else {
                    for (ni, xi) in n.iter_mut().zip(x) {
                        *ni = -xi / r;
                    }
                }
            }
        }
        n
    }

    /// Orthogonal projection onto the boundary.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            DomainKind::HalfSpace => {
                let mut p = x.to_vec();
                p[0] = 0.0;
                p
            }
            DomainKind::Ball { radius } => {
                let r = norm(x);
                if r == 0.0 {
                    let mut p = vec![0.0; self.dim];
                    p[0] = -radius;
                    p
                } else {
                    x.iter().map(|xi| radius * xi / r).collect()
                }
            }
        }
    }

    pub fn frame(&self, x: &[f64]) -> BoundaryFrame {
        BoundaryFrame {
            point: x.to_vec(),
            normal: self.inward_normal(x),
            dist: self.signed_distance(x),
        }
    }

    pub(crate) fn check_len(&self, v: &[f64]) -> Result<(), GeometryError> {
        if v.len() != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Point together with the inward normal and signed distance at that point.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFrame {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
    pub dist: f64,
}

/// Specular reflection `R_x v = v - 2 (v.n) n` in the frame's normal.
pub fn reflect_velocity(frame: &BoundaryFrame, v: &[f64]) -> Vec<f64> {
    reflect_about(&frame.normal, v)
}

/// Householder reflection of `v` about the hyperplane orthogonal to `n`.
///
/// The normal coefficient `(v.n)/|n|^2` and each output component are
/// evaluated with error-free transformations, so the result is within about
/// one rounding of the exact reflection even when `|n|` is one only to
/// working precision. Axis-aligned normals reduce to an exact sign flip.
pub fn reflect_about(n: &[f64], v: &[f64]) -> Vec<f64> {
    let (dh, dl) = dot2(v, n);
    let (nh, nl) = dot2(n, n);
    // coefficient a = (dh + dl) / (nh + nl) as a double-double (ah, al)
    let ah = dh / nh;
    let rem = (-ah).mul_add(nh, dh) + dl - ah * nl;
    let al = rem / nh;
    let (ah2, al2) = (2.0 * ah, 2.0 * al);
    v.iter()
        .zip(n)
        .map(|(vi, ni)| {
            let (ph, pl) = two_prod(-ah2, *ni);
            let (sh, sl) = two_sum(*vi, ph);
            sh + (sl + (pl - al2 * ni))
        })
        .collect()
}

/// Relative tolerance below which a boundary hit counts as tangential.
pub const GRAZING_TOL: f64 = 1e-12;

/// True when `|v.n| < GRAZING_TOL * |v|`, i.e. the hit belongs to the grazing
/// set where reflection has no effect.
pub fn is_grazing(n: &[f64], v: &[f64]) -> bool {
    dot(v, n).abs() < GRAZING_TOL * norm(v)
}

/// Boundary-flattening change of variables `phi(x) = Phi(pi(x)) + dist(x) e_1`.
///
/// For the half-space `phi` is the identity. For the ball, `Phi` is the
/// stereographic projection of the sphere from its pole `-R e_1` onto
/// `{y_1 = 0}` (second tangential coordinate negated so that `det J > 0`).
/// The chart is the shell `R/2 < |x| <= R` restricted to `x_1/|x| > -1/2`,
/// on which `1 <= det J < 8^(d-1)`.
#[derive(Debug, Clone, Copy)]
pub struct FlatteningMap {
    domain: Domain,
}

impl FlatteningMap {
    pub fn new(domain: Domain) -> Self {
        Self { domain }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Upper bound `C_d` with `1/C_d <= det J <= C_d` on the chart.
    pub fn det_bound(&self) -> f64 {
        match self.domain.kind {
            DomainKind::HalfSpace => 1.0,
            DomainKind::Ball { .. } => 8f64.powi(self.domain.dim as i32 - 1),
        }
    }

    fn check_chart(&self, x: &[f64]) -> Result<(), GeometryError> {
        self.domain.check_len(x)?;
        if let DomainKind::Ball { radius } = self.domain.kind {
            let r = norm(x);
            if !(r > 0.5 * radius && r <= radius) {
                return Err(GeometryError::ChartViolation(format!(
                    "|x| = {r} outside (R/2, R] with R = {radius}"
                )));
            }
            if x[0] / r <= -0.5 {
                return Err(GeometryError::ChartViolation(format!(
                    "x_1/|x| = {} too close to the projection pole",
                    x[0] / r
                )));
            }
        }
        Ok(())
    }

    /// Returns `(phi(x), J(x))`.
    pub fn flatten(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>), GeometryError> {
        self.check_chart(x)?;
        let d = self.domain.dim;
        match self.domain.kind {
            DomainKind::HalfSpace => Ok((x.to_vec(), DMatrix::identity(d, d))),
            DomainKind::Ball { radius } => {
                let r = norm(x);
                let s = r + x[0];
                let mut y = vec![0.0; d];
                y[0] = radius - r;
                for k in 1..d {
                    y[k] = tangential_sign(k) * 2.0 * radius * x[k] / s;
                }
                Ok((y, self.ball_jacobian(x, radius)))
            }
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        self.flatten(x).map(|(_, j)| j)
    }

    pub fn jacobian_det(&self, x: &[f64]) -> Result<f64, GeometryError> {
        self.jacobian(x).map(|j| j.determinant())
    }

    fn ball_jacobian(&self, x: &[f64], radius: f64) -> DMatrix<f64> {
        let d = self.domain.dim;
        let r = norm(x);
        let s = r + x[0];
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            jac[(0, j)] = -x[j] / r;
        }
        for k in 1..d {
            let sign = tangential_sign(k);
            for j in 0..d {
                let ds = x[j] / r + if j == 0 { 1.0 } else { 0.0 };
                let mut val = -x[k] * ds / (s * s);
                if j == k {
                    val += 1.0 / s;
                }
                jac[(k, j)] = sign * 2.0 * radius * val;
            }
        }
        jac
    }

    /// Inverse map `psi = phi^{-1}` on the chart image.
    pub fn unflatten(&self, y: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.domain.check_len(y)?;
        match self.domain.kind {
            DomainKind::HalfSpace => Ok(y.to_vec()),
            DomainKind::Ball { radius } => {
                let d = self.domain.dim;
                if !(y[0] >= 0.0 && y[0] < 0.5 * radius) {
                    return Err(GeometryError::ChartViolation(format!(
                        "y_1 = {} outside [0, R/2)",
                        y[0]
                    )));
                }
                let sigma: Vec<f64> = (1..d).map(|k| tangential_sign(k) * y[k] / (2.0 * radius)).collect();
                let q = dot(&sigma, &sigma);
                if q >= 3.0 {
                    return Err(GeometryError::ChartViolation(format!(
                        "tangential coordinate |sigma|^2 = {q} beyond the chart"
                    )));
                }
                let rho = radius - y[0];
                let mut x = vec![0.0; d];
                x[0] = rho * (1.0 - q) / (1.0 + q);
                for k in 1..d {
                    x[k] = rho * 2.0 * sigma[k - 1] / (1.0 + q);
                }
                Ok(x)
            }
        }
    }
}

#[inline]
fn tangential_sign(k: usize) -> f64 {
    if k == 1 {
        -1.0
    } else {
        1.0
    }
}

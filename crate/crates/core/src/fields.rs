//! Kernels, Green functions with image charges, the regularizations of the
//! approximation scheme and O(N^2) field evaluation over particle ensembles.
//!
//! All radial kernels are instances of
//! `h(s) = rbar(s/delta) * c_d/(d-2) * (s^2 + eps^2)^((2-d)/2)`
//! with `delta = 0` meaning "no Green cutoff" and `eps = 0` meaning
//! "no softening". Every Green-function term is `h` evaluated at a distance
//! `s(x, z)` whose gradient in `x` has the form `g / s`, so one routine covers
//! the direct term, the half-space image and the ball image.

use rayon::prelude::*;
use thiserror::Error;

use crate::ensemble::{Ensemble, Frame};
use crate::geometry::{Domain, DomainKind};
use crate::vector::{dot, mirror, norm_sq};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("dimension must be at least 3, got {0}")]
    DimensionTooSmall(usize),
    #[error("Green function is singular at coincident points")]
    CoincidentPoints,
    #[error("cutoff argument must be >= 0, got {0}")]
    NegativeArgument(f64),
    #[error("{0}")]
    InvalidParams(String),
    #[error("green kind {kind:?} is not defined on domain {domain:?}")]
    KindMismatch { kind: GreenKind, domain: DomainKind },
}

/// Reciprocal surface area of the unit sphere `S^{d-1}`, the constant with
/// `c_d div(x |x|^{-d}) = delta_0`.
pub fn c_d(d: usize) -> Result<f64, FieldError> {
    if d < 3 {
        return Err(FieldError::DimensionTooSmall(d));
    }
    // |S^1| = 2 pi, |S^2| = 4 pi, |S^{k+1}| = 2 pi |S^{k-1}| / k
    let mut area = if d.is_multiple_of(2) {
        2.0 * std::f64::consts::PI
    } else {
        4.0 * std::f64::consts::PI
    };
    let mut k = if d.is_multiple_of(2) { 2 } else { 3 };
    while k < d {
        area *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    Ok(1.0 / area)
}

/// Smoothstep cutoff: 0 on `[0, 1]`, 1 on `[2, inf)`, `6t^5 - 15t^4 + 10t^3`
/// with `t = s - 1` in between. C^2, monotone, slope at most 1.875.
pub fn cutoff_rbar(s: f64) -> Result<f64, FieldError> {
    if s < 0.0 || s.is_nan() {
        return Err(FieldError::NegativeArgument(s));
    }
    Ok(rbar(s))
}

#[inline]
pub(crate) fn rbar(s: f64) -> f64 {
    if s <= 1.0 {
        0.0
    } else if s >= 2.0 {
        1.0
    } else {
        let t = s - 1.0;
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

#[inline]
pub(crate) fn rbar_prime(s: f64) -> f64 {
    if s <= 1.0 || s >= 2.0 {
        0.0
    } else {
        let t = s - 1.0;
        let u = t * (1.0 - t);
        30.0 * u * u
    }
}

/// Odd smoothed sign `p(x1/r)` with `p(u) = (3u - u^3)/2`, saturating at
/// `+-1` outside `[-r, r]`.
pub fn smooth_sign(r_sign: f64, x1: f64) -> f64 {
    let u = x1 / r_sign;
    if u >= 1.0 {
        1.0
    } else if u <= -1.0 {
        -1.0
    } else {
        0.5 * u * (3.0 - u * u)
    }
}

/// `rbar(dist(x, boundary) / zeta)`; zero outside the domain.
pub fn boundary_cutoff(domain: &Domain, zeta: f64, x: &[f64]) -> f64 {
    let dist = domain.signed_distance(x);
    if dist <= 0.0 {
        0.0
    } else {
        rbar(dist / zeta)
    }
}

/// The regularization quadruple: Plummer softening, smoothed-sign radius,
/// boundary cutoff width and Green cutoff width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizationParams {
    pub eps_mollify: f64,
    pub r_sign: f64,
    pub zeta: f64,
    pub delta: f64,
}

impl RegularizationParams {
    pub fn new(eps_mollify: f64, r_sign: f64, zeta: f64, delta: f64) -> Result<Self, FieldError> {
        let p = Self {
            eps_mollify,
            r_sign,
            zeta,
            delta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        for (name, val) in [
            ("eps_mollify", self.eps_mollify),
            ("r_sign", self.r_sign),
            ("zeta", self.zeta),
            ("delta", self.delta),
        ] {
            if !(val.is_finite() && val > 0.0) {
                return Err(FieldError::InvalidParams(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Extra check for domains with curved boundaries: the cutoff shell must
    /// sit well inside the region where the distance function is smooth.
    pub fn validate_for(&self, domain: &Domain) -> Result<(), FieldError> {
        self.validate()?;
        if let DomainKind::Ball { radius } = domain.kind() {
            if 2.0 * self.zeta >= 0.5 * radius {
                return Err(FieldError::InvalidParams(format!(
                    "zeta must be < R/4 = {} for a ball of radius {radius}",
                    0.25 * radius
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenKind {
    WholeSpace,
    HalfSpaceImage,
    BallImage,
}

impl GreenKind {
    /// The image kind matching a domain.
    pub fn for_domain(domain: &Domain) -> Self {
        match domain.kind() {
            DomainKind::HalfSpace => GreenKind::HalfSpaceImage,
            DomainKind::Ball { .. } => GreenKind::BallImage,
        }
    }

    fn check(self, domain: &Domain) -> Result<(), FieldError> {
        match (self, domain.kind()) {
            (GreenKind::HalfSpaceImage, DomainKind::Ball { .. }) | (GreenKind::BallImage, DomainKind::HalfSpace) => {
                Err(FieldError::KindMismatch {
                    kind: self,
                    domain: domain.kind(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// Radial kernel `h(s) = rbar(s/delta) c_d/(d-2) (s^2+eps^2)^((2-d)/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialKernel {
    pub eps: f64,
    pub delta: f64,
}

impl RadialKernel {
    pub const BARE: RadialKernel = RadialKernel { eps: 0.0, delta: 0.0 };

    /// `h(s)`, or `None` for a singular bare kernel at `s = 0`.
    #[inline]
    fn value(&self, cd: f64, d: usize, s: f64) -> Option<f64> {
        if self.delta > 0.0 && s <= self.delta {
            return Some(0.0);
        }
        let q = s * s + self.eps * self.eps;
        if q == 0.0 {
            return None;
        }
        let h = cd / (d as f64 - 2.0) * q.powf(0.5 * (2.0 - d as f64));
        if self.delta > 0.0 {
            Some(rbar(s / self.delta) * h)
        } else {
            Some(h)
        }
    }

    /// `h'(s)/s`, or `None` for a singular bare kernel at `s = 0`.
    #[inline]
    fn slope_over_s(&self, cd: f64, d: usize, s: f64) -> Option<f64> {
        if self.delta > 0.0 && s <= self.delta {
            return Some(0.0);
        }
        let q = s * s + self.eps * self.eps;
        if q == 0.0 {
            return None;
        }
        let qd = q.powf(-0.5 * d as f64);
        let dh = -cd * qd;
        if self.delta > 0.0 {
            let u = s / self.delta;
            let h = cd / (d as f64 - 2.0) * qd * q;
            Some(rbar(u) * dh + rbar_prime(u) / (self.delta * s) * h)
        } else {
            Some(dh)
        }
    }
}

/// Image distance and its gradient numerator for the kind, i.e. `(s, g)` with
/// `grad_x s = g / s`. `None` for the whole-space kind.
#[inline]
fn image_term(kind: GreenKind, domain: &Domain, x: &[f64], z: &[f64], g: &mut [f64]) -> Option<f64> {
    match kind {
        GreenKind::WholeSpace => None,
        GreenKind::HalfSpaceImage => {
            g[0] = x[0] + z[0];
            for k in 1..x.len() {
                g[k] = x[k] - z[k];
            }
            Some(norm_sq(g).sqrt())
        }
        GreenKind::BallImage => {
            let r2 = domain.scale() * domain.scale();
            let zz = norm_sq(z);
            let s2 = norm_sq(x) * zz / r2 - 2.0 * dot(x, z) + r2;
            for k in 0..x.len() {
                g[k] = zz * x[k] / r2 - z[k];
            }
            Some(s2.max(0.0).sqrt())
        }
    }
}

/// Kernel value and gradient `(sum, grad)` of `h` summed over the direct term
/// minus the image term, for a single source at `z`, accumulated into `grad`
/// scaled by `q`. Returns the potential contribution (unscaled).
#[inline]
fn green_terms(
    kind: GreenKind,
    domain: &Domain,
    kernel: &RadialKernel,
    cd: f64,
    x: &[f64],
    z: &[f64],
    scratch: &mut [f64],
    q: f64,
    grad: &mut [f64],
) {
    let d = x.len();
    let s_dir = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let f_dir = kernel.slope_over_s(cd, d, s_dir).unwrap_or(0.0);
    match image_term(kind, domain, x, z, scratch) {
        None => {
            if f_dir != 0.0 {
                let a = q * f_dir;
                for k in 0..d {
                    grad[k] += a * (x[k] - z[k]);
                }
            }
        }
        Some(s_img) => {
            let f_img = kernel.slope_over_s(cd, d, s_img).unwrap_or(0.0);
            for k in 0..d {
                let t = f_dir * (x[k] - z[k]) - f_img * scratch[k];
                grad[k] += q * t;
            }
        }
    }
}

fn green_value(kind: GreenKind, domain: &Domain, kernel: &RadialKernel, cd: f64, x: &[f64], z: &[f64]) -> Option<f64> {
    let d = x.len();
    let s_dir = crate::vector::dist(x, z);
    let mut g = vec![0.0; d];
    let direct = kernel.value(cd, d, s_dir)?;
    match image_term(kind, domain, x, z, &mut g) {
        None => Some(direct),
        Some(s_img) => Some(direct - kernel.value(cd, d, s_img)?),
    }
}

/// Bare Green function of the kind (no softening, no cutoff).
pub fn green(kind: GreenKind, domain: &Domain, x: &[f64], z: &[f64]) -> Result<f64, FieldError> {
    kind.check(domain)?;
    if x == z {
        return Err(FieldError::CoincidentPoints);
    }
    let cd = c_d(domain.dim())?;
    green_value(kind, domain, &RadialKernel::BARE, cd, x, z).ok_or(FieldError::CoincidentPoints)
}

/// `grad_x G(x, z)` of the bare Green function.
pub fn green_gradient(kind: GreenKind, domain: &Domain, x: &[f64], z: &[f64]) -> Result<Vec<f64>, FieldError> {
    kind.check(domain)?;
    if x == z {
        return Err(FieldError::CoincidentPoints);
    }
    let cd = c_d(domain.dim())?;
    let mut grad = vec![0.0; x.len()];
    let mut scratch = vec![0.0; x.len()];
    green_terms(
        kind,
        domain,
        &RadialKernel::BARE,
        cd,
        x,
        z,
        &mut scratch,
        1.0,
        &mut grad,
    );
    Ok(grad)
}

/// Green function with the `delta` cutoff. The direct term is cut at
/// `|x - z|`, the image term at the image distance, so the self-image of a
/// charge survives while the singular self-interaction is removed.
pub fn green_cut(kind: GreenKind, domain: &Domain, params: &RegularizationParams, x: &[f64], z: &[f64]) -> f64 {
    let kernel = RadialKernel {
        eps: 0.0,
        delta: params.delta,
    };
    let cd = c_d(domain.dim()).expect("domain dimension is validated");
    green_value(kind, domain, &kernel, cd, x, z).unwrap_or(0.0)
}

/// How the field is switched off near the boundary (domain frame) or near
/// the symmetry plane (Problem B frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    None,
    /// `rbar(dist/zeta)`.
    Cutoff {
        zeta: f64,
    },
    /// `sbar(dist)` with the smoothed sign of the given radius.
    SmoothSign {
        radius: f64,
    },
}

impl Damping {
    #[inline]
    fn profile(&self, dist: f64) -> f64 {
        match *self {
            Damping::None => 1.0,
            Damping::Cutoff { zeta } => {
                if dist <= 0.0 {
                    0.0
                } else {
                    rbar(dist / zeta)
                }
            }
            Damping::SmoothSign { radius } => smooth_sign(radius, dist).max(0.0),
        }
    }
}

/// Complete description of a regularized field: which Green function, which
/// radial regularization and which damping profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldModel {
    pub domain: Domain,
    pub kind: GreenKind,
    pub kernel: RadialKernel,
    pub damping: Damping,
}

impl FieldModel {
    /// Domain-frame regularized field: cut Green function of the domain and
    /// boundary cutoff `rbar(dist/zeta)`.
    pub fn regularized(domain: Domain, params: &RegularizationParams) -> Self {
        Self {
            domain,
            kind: GreenKind::for_domain(&domain),
            kernel: RadialKernel {
                eps: 0.0,
                delta: params.delta,
            },
            damping: Damping::Cutoff { zeta: params.zeta },
        }
    }

    /// Whole-space Problem B field: softened kernel over the odd charge
    /// distribution, damped by the smoothed sign.
    pub fn problem_b(domain: Domain, params: &RegularizationParams) -> Self {
        Self {
            domain,
            kind: GreenKind::WholeSpace,
            kernel: RadialKernel {
                eps: params.eps_mollify,
                delta: 0.0,
            },
            damping: Damping::SmoothSign { radius: params.r_sign },
        }
    }

    /// Half-space image field with Plummer softening and no damping.
    pub fn halfspace_a(domain: Domain, params: &RegularizationParams) -> Self {
        Self {
            domain,
            kind: GreenKind::HalfSpaceImage,
            kernel: RadialKernel {
                eps: params.eps_mollify,
                delta: 0.0,
            },
            damping: Damping::None,
        }
    }

    /// The same kernel and damping, re-targeted for the other frame. Used to
    /// compare a half-space run with its symmetrized whole-space twin.
    pub fn for_frame(mut self, frame: Frame) -> Self {
        self.kind = match frame {
            Frame::ProblemB => GreenKind::WholeSpace,
            Frame::ProblemA => GreenKind::for_domain(&self.domain),
        };
        self
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        self.kind.check(&self.domain)?;
        Ok(())
    }

    /// Signed damping factor at `x` and the reference sign it approximates.
    #[inline]
    pub(crate) fn damping_at(&self, frame: Frame, x: &[f64]) -> (f64, f64) {
        match frame {
            Frame::ProblemA => (self.damping.profile(self.domain.signed_distance(x)), 1.0),
            Frame::ProblemB => {
                let sgn = sign(x[0]);
                (sgn * self.damping.profile(x[0].abs()), sgn)
            }
        }
    }
}

#[inline]
pub(crate) fn sign(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else if a < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Undamped source sum `S(x) = sum_j q_j grad_1 G(x, x_j)` written into `out`.
///
/// Sources are visited in ascending index order. In the Problem B frame the
/// ensemble is a list of mirror pairs and each pair's two contributions are
/// combined before accumulation, which keeps the field exactly
/// mirror-covariant.
pub fn source_gradient(model: &FieldModel, src: &Ensemble, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    let cd = c_d(d).expect("dimension is validated");
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut scratch = vec![0.0; d];
    match src.frame() {
        Frame::ProblemA => {
            for j in 0..src.len() {
                if !src.is_alive(j) {
                    continue;
                }
                green_terms(
                    model.kind,
                    &model.domain,
                    &model.kernel,
                    cd,
                    x,
                    src.pos(j),
                    &mut scratch,
                    src.weight(j),
                    out,
                );
            }
        }
        Frame::ProblemB => {
            // q_p (grad h(x - x_p) - grad h(x - x_p')) per pair, with
            // q_p = w sgn(x_p1); the partner carries charge -q_p.
            let half = HalfPairKernel {
                model,
                domain: Domain::half_space(d).expect("dimension is validated"),
            };
            for k in 0..src.len() / 2 {
                let p = 2 * k;
                if !src.is_alive(p) {
                    continue;
                }
                let z = src.pos(p);
                let q = src.weight(p) * sign(z[0]);
                if q == 0.0 {
                    continue;
                }
                half.accumulate(cd, x, z, &mut scratch, q, out);
            }
        }
    }
}

struct HalfPairKernel<'a> {
    model: &'a FieldModel,
    domain: Domain,
}

impl HalfPairKernel<'_> {
    #[inline]
    fn accumulate(&self, cd: f64, x: &[f64], z: &[f64], scratch: &mut [f64], q: f64, out: &mut [f64]) {
        // identical operation sequence to the half-space image sum
        green_terms(
            GreenKind::HalfSpaceImage,
            &self.domain,
            &self.model.kernel,
            cd,
            x,
            z,
            scratch,
            q,
            out,
        );
    }
}

/// Field at a point: `E(x) = -c(x) S(x)` with the signed damping `c`.
pub fn field_at(model: &FieldModel, src: &Ensemble, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    let (c, _) = model.damping_at(src.frame(), x);
    if c == 0.0 {
        return out;
    }
    source_gradient(model, src, x, &mut out);
    out.iter_mut().for_each(|o| *o *= -c);
    out
}

/// Softened half-space image field with no damping.
pub fn field_halfspace_a(src: &Ensemble, params: &RegularizationParams, x: &[f64]) -> Vec<f64> {
    field_at(&FieldModel::halfspace_a(src.domain(), params), src, x)
}

/// Regularized field of the ensemble's frame: the cut domain Green function
/// with boundary cutoff for Problem A ensembles, the softened odd whole-space
/// field with smoothed sign for Problem B ensembles.
pub fn field_regularized(src: &Ensemble, params: &RegularizationParams, x: &[f64]) -> Vec<f64> {
    let model = match src.frame() {
        Frame::ProblemA => FieldModel::regularized(src.domain(), params),
        Frame::ProblemB => FieldModel::problem_b(src.domain(), params),
    };
    field_at(&model, src, x)
}

/// Field at every particle of `src`, flat `N*d`. Dead particles get zero.
/// Parallel over targets only, so results do not depend on the thread count.
pub fn field_batch(model: &FieldModel, src: &Ensemble) -> Vec<f64> {
    let d = src.dim();
    let mut out = vec![0.0; src.len() * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, e)| {
        if src.is_alive(i) {
            e.copy_from_slice(&field_at(model, src, src.pos(i)));
        }
    });
    out
}

/// Undamped source sums at every particle (flat `N*d`), used by `K_tau`.
pub fn source_gradient_batch(model: &FieldModel, src: &Ensemble) -> Vec<f64> {
    let d = src.dim();
    let mut out = vec![0.0; src.len() * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, e)| {
        if src.is_alive(i) {
            source_gradient(model, src, src.pos(i), e);
        }
    });
    out
}

/// Discrete potential `sum_j q_j G(x, x_j)` for the model's kernel.
pub fn potential_at(model: &FieldModel, src: &Ensemble, x: &[f64]) -> f64 {
    let d = x.len();
    let cd = c_d(d).expect("dimension is validated");
    let mut total = 0.0;
    match src.frame() {
        Frame::ProblemA => {
            for j in 0..src.len() {
                if src.is_alive(j) {
                    let g = green_value(model.kind, &model.domain, &model.kernel, cd, x, src.pos(j));
                    total += src.weight(j) * g.unwrap_or(0.0);
                }
            }
        }
        Frame::ProblemB => {
            let hs = Domain::half_space(d).expect("dimension is validated");
            for k in 0..src.len() / 2 {
                let p = 2 * k;
                if !src.is_alive(p) {
                    continue;
                }
                let z = src.pos(p);
                let q = src.weight(p) * sign(z[0]);
                if q != 0.0 {
                    let g = green_value(GreenKind::HalfSpaceImage, &hs, &model.kernel, cd, x, z);
                    total += q * g.unwrap_or(0.0);
                }
            }
        }
    }
    total
}

/// Mirror of a position through `{x_1 = 0}` (re-exported for callers working
/// with Problem B data).
pub fn mirror_point(x: &[f64]) -> Vec<f64> {
    mirror(x)
}

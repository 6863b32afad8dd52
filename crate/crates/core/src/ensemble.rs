//! Weighted particle ensembles, the half-space / whole-space symmetrization
//! and initial-condition sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::fields::{potential_at, sign, FieldModel, RegularizationParams};
use crate::geometry::{Domain, DomainKind};
use crate::vector::{mirror, norm_sq};

/// High bit marking the mirror partner of a particle in a Problem B ensemble.
pub const MIRROR_BIT: u64 = 1 << 63;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("ensemble is not mirror-symmetric: {0}")]
    AsymmetricInput(String),
    #[error("unsupported density: {0}")]
    UnsupportedDensity(String),
    #[error("invalid particle {index}: {reason}")]
    InvalidParticle { index: usize, reason: String },
}

/// Problem A lives in the physical domain with reflections; Problem B is the
/// even extension to the whole space, stored as interleaved mirror pairs
/// `[p0, p0', p1, p1', ...]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    ProblemA,
    ProblemB,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub w: f64,
}

/// Snapshot of `N` weighted particles stored as flat `N*d` arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    domain: Domain,
    frame: Frame,
    dim: usize,
    time: f64,
    x: Vec<f64>,
    v: Vec<f64>,
    w: Vec<f64>,
    ids: Vec<u64>,
    dead_at: Vec<Option<f64>>,
}

impl Ensemble {
    /// Builds an ensemble with ids `0..N` (Problem A) or the pair ids
    /// `k, k | MIRROR_BIT` (Problem B).
    pub fn from_particles(
        domain: Domain,
        frame: Frame,
        particles: Vec<(Vec<f64>, Vec<f64>, f64)>,
    ) -> Result<Self, EnsembleError> {
        let ids = match frame {
            Frame::ProblemA => (0..particles.len() as u64).collect(),
            Frame::ProblemB => (0..particles.len() as u64)
                .map(|i| if i % 2 == 0 { i / 2 } else { (i / 2) | MIRROR_BIT })
                .collect(),
        };
        Self::with_ids(domain, frame, particles, ids)
    }

    pub fn with_ids(
        domain: Domain,
        frame: Frame,
        particles: Vec<(Vec<f64>, Vec<f64>, f64)>,
        ids: Vec<u64>,
    ) -> Result<Self, EnsembleError> {
        let d = domain.dim();
        let n = particles.len();
        let mut e = Self {
            domain,
            frame,
            dim: d,
            time: 0.0,
            x: Vec::with_capacity(n * d),
            v: Vec::with_capacity(n * d),
            w: Vec::with_capacity(n),
            ids,
            dead_at: vec![None; n],
        };
        if e.ids.len() != n {
            return Err(EnsembleError::InvalidParticle {
                index: n,
                reason: format!("{} ids for {n} particles", e.ids.len()),
            });
        }
        for (i, (x, v, w)) in particles.into_iter().enumerate() {
            if x.len() != d || v.len() != d {
                return Err(EnsembleError::InvalidParticle {
                    index: i,
                    reason: format!("expected dimension {d}"),
                });
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(EnsembleError::InvalidParticle {
                    index: i,
                    reason: format!("weight {w} must be finite and >= 0"),
                });
            }
            if x.iter().chain(&v).any(|c| !c.is_finite()) {
                return Err(EnsembleError::InvalidParticle {
                    index: i,
                    reason: "non-finite phase-space coordinate".into(),
                });
            }
            if frame == Frame::ProblemA && domain.signed_distance(&x) < -1e-12 * domain.scale() {
                return Err(EnsembleError::InvalidParticle {
                    index: i,
                    reason: "position outside the domain".into(),
                });
            }
            e.x.extend_from_slice(&x);
            e.v.extend_from_slice(&v);
            e.w.push(w);
        }
        if frame == Frame::ProblemB {
            if !matches!(domain.kind(), DomainKind::HalfSpace) {
                return Err(EnsembleError::FrameMismatch(
                    "Problem B requires a half-space domain".into(),
                ));
            }
            e.check_mirror_pairs(0.0)?;
        }
        Ok(e)
    }

    fn check_mirror_pairs(&self, tol: f64) -> Result<(), EnsembleError> {
        if !self.len().is_multiple_of(2) {
            return Err(EnsembleError::AsymmetricInput(format!(
                "odd particle count {}",
                self.len()
            )));
        }
        for k in 0..self.len() / 2 {
            let (p, q) = (2 * k, 2 * k + 1);
            let mx = mirror(self.pos(p));
            let mv = mirror(self.vel(p));
            let dev = crate::vector::phase_dist(&mx, &mv, self.pos(q), self.vel(q));
            let scale = tol * (1.0 + crate::vector::phase_norm(self.pos(p), self.vel(p)));
            if dev > scale || self.w[p] != self.w[q] {
                return Err(EnsembleError::AsymmetricInput(format!(
                    "pair {k} deviates from its mirror by {dev:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }
    pub fn frame(&self) -> Frame {
        self.frame
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.w.len()
    }
    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
    pub fn time(&self) -> f64 {
        self.time
    }
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }
    #[inline]
    pub fn pos(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
    #[inline]
    pub fn vel(&self, i: usize) -> &[f64] {
        &self.v[i * self.dim..(i + 1) * self.dim]
    }
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.w[i]
    }
    pub fn id(&self, i: usize) -> u64 {
        self.ids[i]
    }
    pub fn ids(&self) -> &[u64] {
        &self.ids
    }
    pub fn weights(&self) -> &[f64] {
        &self.w
    }
    pub fn positions(&self) -> &[f64] {
        &self.x
    }
    pub fn velocities(&self) -> &[f64] {
        &self.v
    }
    #[inline]
    pub fn is_alive(&self, i: usize) -> bool {
        self.dead_at[i].is_none()
    }
    pub fn dead_at(&self, i: usize) -> Option<f64> {
        self.dead_at[i]
    }

    pub fn particle(&self, i: usize) -> Particle {
        Particle {
            x: self.pos(i).to_vec(),
            v: self.vel(i).to_vec(),
            w: self.w[i],
        }
    }

    pub(crate) fn state_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.x, &mut self.v)
    }

    pub(crate) fn mark_dead(&mut self, i: usize, t: f64) {
        if self.dead_at[i].is_none() {
            self.dead_at[i] = Some(t);
        }
    }

    /// Index of the particle with the given id.
    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.ids.iter().position(|&j| j == id)
    }

    pub fn total_mass(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Charge seen by the field: `w` in Problem A, `w sgn(x_1)` in Problem B.
    #[inline]
    pub fn charge(&self, i: usize) -> f64 {
        match self.frame {
            Frame::ProblemA => self.w[i],
            Frame::ProblemB => self.w[i] * sign(self.pos(i)[0]),
        }
    }

    /// Even extension: every particle followed by its mirror `(x', v')`.
    pub fn symmetrize(&self) -> Result<Ensemble, EnsembleError> {
        if self.frame != Frame::ProblemA {
            return Err(EnsembleError::FrameMismatch(
                "symmetrize expects a Problem A ensemble".into(),
            ));
        }
        if !matches!(self.domain.kind(), DomainKind::HalfSpace) {
            return Err(EnsembleError::FrameMismatch(
                "symmetrize requires a half-space domain".into(),
            ));
        }
        let n = self.len();
        let d = self.dim;
        let mut out = Ensemble {
            domain: self.domain,
            frame: Frame::ProblemB,
            dim: d,
            time: self.time,
            x: Vec::with_capacity(2 * n * d),
            v: Vec::with_capacity(2 * n * d),
            w: Vec::with_capacity(2 * n),
            ids: Vec::with_capacity(2 * n),
            dead_at: Vec::with_capacity(2 * n),
        };
        for i in 0..n {
            out.x.extend_from_slice(self.pos(i));
            out.v.extend_from_slice(self.vel(i));
            out.x.extend_from_slice(&mirror(self.pos(i)));
            out.v.extend_from_slice(&mirror(self.vel(i)));
            out.w.extend([self.w[i], self.w[i]]);
            out.ids.extend([self.ids[i], self.ids[i] | MIRROR_BIT]);
            out.dead_at.extend([self.dead_at[i], self.dead_at[i]]);
        }
        Ok(out)
    }

    /// Restriction to the half-space: from each mirror pair keep the member
    /// with `x_1 > 0` (the primary on ties), under the primary's id.
    pub fn restrict(&self) -> Result<Ensemble, EnsembleError> {
        if self.frame != Frame::ProblemB {
            return Err(EnsembleError::FrameMismatch(
                "restrict expects a Problem B ensemble".into(),
            ));
        }
        self.check_mirror_pairs(1e-12)?;
        let n = self.len() / 2;
        let d = self.dim;
        let mut out = Ensemble {
            domain: self.domain,
            frame: Frame::ProblemA,
            dim: d,
            time: self.time,
            x: Vec::with_capacity(n * d),
            v: Vec::with_capacity(n * d),
            w: Vec::with_capacity(n),
            ids: Vec::with_capacity(n),
            dead_at: Vec::with_capacity(n),
        };
        for k in 0..n {
            let (p, q) = (2 * k, 2 * k + 1);
            let keep = if self.pos(q)[0] > 0.0 { q } else { p };
            out.x.extend_from_slice(self.pos(keep));
            out.v.extend_from_slice(self.vel(keep));
            out.w.push(self.w[keep]);
            out.ids.push(self.ids[p] & !MIRROR_BIT);
            out.dead_at.push(self.dead_at[p]);
        }
        Ok(out)
    }

    /// `sum_i w_i |v_i|^2` over live particles (no factor 1/2).
    pub fn kinetic_energy(&self) -> f64 {
        (0..self.len())
            .filter(|&i| self.is_alive(i))
            .map(|i| self.w[i] * norm_sq(self.vel(i)))
            .sum()
    }

    /// Full double sum `sum_{i,j} q_i q_j G(x_i, x_j)` for the model's kernel,
    /// including the diagonal.
    pub fn potential_energy_with(&self, model: &FieldModel) -> f64 {
        let per: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| {
                if self.is_alive(i) {
                    self.charge(i) * potential_at(model, self, self.pos(i))
                } else {
                    0.0
                }
            })
            .collect();
        per.iter().sum()
    }

    /// Potential energy of the frame's regularized field (see
    /// [`crate::fields::field_regularized`]).
    pub fn potential_energy(&self, params: &RegularizationParams) -> f64 {
        self.potential_energy_with(&self.default_model(params))
    }

    pub fn default_model(&self, params: &RegularizationParams) -> FieldModel {
        match self.frame {
            Frame::ProblemA => FieldModel::regularized(self.domain, params),
            Frame::ProblemB => FieldModel::problem_b(self.domain, params),
        }
    }
}

/// Specification of `f_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Uniform density on the phase-space box `[x_lo, x_hi] x [v_lo, v_hi]`.
    UniformBox {
        x_lo: Vec<f64>,
        x_hi: Vec<f64>,
        v_lo: Vec<f64>,
        v_hi: Vec<f64>,
        n: usize,
        mass: f64,
    },
    /// All mass at one phase-space point.
    Dirac {
        x0: Vec<f64>,
        v0: Vec<f64>,
        n: usize,
        mass: f64,
    },
    /// Uniform positions on a box, Maxwellian velocities with mean `drift`
    /// and per-component variance `temperature`.
    Maxwellian {
        x_lo: Vec<f64>,
        x_hi: Vec<f64>,
        drift: Vec<f64>,
        temperature: f64,
        n: usize,
        mass: f64,
    },
    Explicit(Vec<Particle>),
}

/// Samples `N` equal-weight particles. Particles on or outside the boundary
/// by rounding are moved inward to depth `1e-12 * scale`.
pub fn sample_initial(ic: &InitialCondition, domain: Domain, seed: u64) -> Result<Ensemble, EnsembleError> {
    let d = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let check_dim = |v: &[f64], what: &str| {
        if v.len() != d {
            Err(EnsembleError::UnsupportedDensity(format!(
                "{what} has length {}, expected {d}",
                v.len()
            )))
        } else {
            Ok(())
        }
    };
    let check_mass = |mass: f64, n: usize| {
        if !(mass.is_finite() && mass >= 0.0) {
            return Err(EnsembleError::UnsupportedDensity(format!(
                "mass {mass} must be finite and >= 0"
            )));
        }
        if n == 0 && mass > 0.0 {
            return Err(EnsembleError::UnsupportedDensity(
                "positive mass needs at least one particle".into(),
            ));
        }
        Ok(())
    };
    let check_box = |lo: &[f64], hi: &[f64], positional: bool| {
        if lo
            .iter()
            .zip(hi)
            .any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
        {
            return Err(EnsembleError::UnsupportedDensity(
                "box bounds must satisfy lo <= hi".into(),
            ));
        }
        if positional && !box_inside(&domain, lo, hi) {
            return Err(EnsembleError::UnsupportedDensity(
                "position box is not contained in the domain".into(),
            ));
        }
        Ok(())
    };
    let mut parts = Vec::new();
    match ic {
        InitialCondition::UniformBox {
            x_lo,
            x_hi,
            v_lo,
            v_hi,
            n,
            mass,
        } => {
            for (v, w) in [(x_lo, "x_lo"), (x_hi, "x_hi"), (v_lo, "v_lo"), (v_hi, "v_hi")] {
                check_dim(v, w)?;
            }
            check_mass(*mass, *n)?;
            check_box(x_lo, x_hi, true)?;
            check_box(v_lo, v_hi, false)?;
            let w = mass / *n as f64;
            for _ in 0..*n {
                let x = uniform_in(&mut rng, x_lo, x_hi);
                let v = uniform_in(&mut rng, v_lo, v_hi);
                parts.push((x, v, w));
            }
        }
        InitialCondition::Dirac { x0, v0, n, mass } => {
            check_dim(x0, "x0")?;
            check_dim(v0, "v0")?;
            check_mass(*mass, *n)?;
            if domain.signed_distance(x0) < 0.0 {
                return Err(EnsembleError::UnsupportedDensity("x0 lies outside the domain".into()));
            }
            let w = mass / *n as f64;
            parts = vec![(x0.clone(), v0.clone(), w); *n];
        }
        InitialCondition::Maxwellian {
            x_lo,
            x_hi,
            drift,
            temperature,
            n,
            mass,
        } => {
            check_dim(x_lo, "x_lo")?;
            check_dim(x_hi, "x_hi")?;
            check_dim(drift, "drift")?;
            check_mass(*mass, *n)?;
            check_box(x_lo, x_hi, true)?;
            if !(temperature.is_finite() && *temperature > 0.0) {
                return Err(EnsembleError::UnsupportedDensity("temperature must be > 0".into()));
            }
            let normal =
                Normal::new(0.0, temperature.sqrt()).map_err(|e| EnsembleError::UnsupportedDensity(e.to_string()))?;
            let w = mass / *n as f64;
            for _ in 0..*n {
                let x = uniform_in(&mut rng, x_lo, x_hi);
                let v: Vec<f64> = drift.iter().map(|m| m + normal.sample(&mut rng)).collect();
                parts.push((x, v, w));
            }
        }
        InitialCondition::Explicit(list) => {
            parts = list.iter().map(|p| (p.x.clone(), p.v.clone(), p.w)).collect();
        }
    }
    let depth = 1e-12 * domain.scale();
    for (x, _, _) in parts.iter_mut() {
        if x.len() == d {
            nudge_inside(&domain, x, depth);
        }
    }
    Ensemble::from_particles(domain, Frame::ProblemA, parts)
}

fn uniform_in(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(a, b)| if a == b { *a } else { rng.random_range(*a..*b) })
        .collect()
}

fn box_inside(domain: &Domain, lo: &[f64], hi: &[f64]) -> bool {
    match domain.kind() {
        DomainKind::HalfSpace => lo[0] >= 0.0,
        DomainKind::Ball { radius } => {
            // farthest corner from the origin
            let far: f64 = lo.iter().zip(hi).map(|(a, b)| a.abs().max(b.abs()).powi(2)).sum();
            far.sqrt() <= radius
        }
    }
}

fn nudge_inside(domain: &Domain, x: &mut [f64], depth: f64) {
    let dist = domain.signed_distance(x);
    if dist < depth && dist > -depth {
        let n = domain.inward_normal(x);
        for (xi, ni) in x.iter_mut().zip(&n) {
            *xi += (depth - dist) * ni;
        }
    }
}

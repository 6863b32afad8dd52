//! Randomized audits of the bare Green functions: grounding on the boundary
//! and the pointwise bounds `0 <= G <= C1 |x-z|^(2-d)`,
//! `|grad_x G| <= C2 |x-z|^(1-d)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::DiagnosticsError;
use crate::ensemble::{Ensemble, Frame};
use crate::fields::{c_d, green, green_gradient, potential_at, Damping, FieldModel, GreenKind, RadialKernel};
use crate::geometry::{Domain, DomainKind};
use crate::vector::{dist, norm};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenAudit {
    pub dim: usize,
    pub domain: String,
    pub pairs: usize,
    /// Largest `G / (C1 r^(2-d))`.
    pub max_ratio_value: f64,
    /// Largest `|grad G| / (C2 r^(1-d))`.
    pub max_ratio_gradient: f64,
    pub min_value: f64,
    pub pass: bool,
}

fn random_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&u);
        if n > 1e-12 {
            return u.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Interior point with a log-uniform distance to the boundary, so that
/// near-boundary configurations are well represented.
fn random_interior(rng: &mut ChaCha8Rng, domain: &Domain) -> Vec<f64> {
    let d = domain.dim();
    let depth = 10f64.powf(rng.random_range(-6.0..0.0));
    match domain.kind() {
        DomainKind::HalfSpace => {
            let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            x[0] = 2.0 * depth;
            x
        }
        DomainKind::Ball { radius } => {
            let r = radius * (1.0 - depth * rng.random::<f64>());
            random_direction(rng, d).into_iter().map(|c| r * c).collect()
        }
    }
}

/// Audits both bounds on `pairs` random interior pairs. `C1 = 2 c_d/(d-2)`,
/// `C2 = 2 c_d`.
pub fn audit_green(domain: &Domain, pairs: usize, seed: u64) -> Result<GreenAudit, DiagnosticsError> {
    let d = domain.dim();
    let kind = GreenKind::for_domain(domain);
    let cd = c_d(d)?;
    let c1 = 2.0 * cd / (d as f64 - 2.0);
    let c2 = 2.0 * cd;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audit = GreenAudit {
        dim: d,
        domain: match domain.kind() {
            DomainKind::HalfSpace => "half-space".into(),
            DomainKind::Ball { radius } => format!("ball(R={radius})"),
        },
        pairs,
        max_ratio_value: 0.0,
        max_ratio_gradient: 0.0,
        min_value: f64::INFINITY,
        pass: true,
    };
    let mut done = 0;
    while done < pairs {
        let x = random_interior(&mut rng, domain);
        let z = random_interior(&mut rng, domain);
        let r = dist(&x, &z);
        if r == 0.0 {
            continue;
        }
        let g = green(kind, domain, &x, &z)?;
        let grad = green_gradient(kind, domain, &x, &z)?;
        audit.min_value = audit.min_value.min(g);
        audit.max_ratio_value = audit.max_ratio_value.max(g / (c1 * r.powi(2 - d as i32)));
        audit.max_ratio_gradient = audit.max_ratio_gradient.max(norm(&grad) / (c2 * r.powi(1 - d as i32)));
        done += 1;
    }
    // relative slack for rounding in the image cancellation
    let slack = 1e-12;
    audit.pass = audit.min_value >= -slack * c1
        && audit.max_ratio_value <= 1.0 + slack
        && audit.max_ratio_gradient <= 1.0 + slack;
    Ok(audit)
}

/// Largest relative boundary potential over `ensembles` random ensembles of
/// `n` particles, each probed at `points` boundary points. The potential is
/// normalized by the sum of the direct-term magnitudes at the probe point.
pub fn grounded_potential_audit(
    domain: &Domain,
    ensembles: usize,
    n: usize,
    points: usize,
    seed: u64,
) -> Result<f64, DiagnosticsError> {
    let d = domain.dim();
    let cd = c_d(d)?;
    let model = FieldModel {
        domain: *domain,
        kind: GreenKind::for_domain(domain),
        kernel: RadialKernel::BARE,
        damping: Damping::None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..ensembles {
        let parts: Vec<_> = (0..n)
            .map(|_| {
                (
                    random_interior(&mut rng, domain),
                    vec![0.0; d],
                    rng.random_range(0.1..1.0),
                )
            })
            .collect();
        let e = Ensemble::from_particles(*domain, Frame::ProblemA, parts)
            .map_err(|err| DiagnosticsError::PairMismatch(err.to_string()))?;
        for _ in 0..points {
            let x = match domain.kind() {
                DomainKind::HalfSpace => {
                    let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                    x[0] = 0.0;
                    x
                }
                DomainKind::Ball { radius } => random_direction(&mut rng, d).into_iter().map(|c| radius * c).collect(),
            };
            let scale: f64 = (0..e.len())
                .map(|j| e.weight(j) * cd / (d as f64 - 2.0) * dist(&x, e.pos(j)).powi(2 - d as i32))
                .sum();
            worst = worst.max(potential_at(&model, &e, &x).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_hold_for_all_kinds_and_dimensions() {
        for d in 3..=5 {
            for dom in [Domain::half_space(d).unwrap(), Domain::ball(d, 1.0).unwrap()] {
                let a = audit_green(&dom, 2000, d as u64).unwrap();
                assert!(a.pass, "{a:?}");
                assert!(a.min_value >= 0.0);
            }
        }
    }

    #[test]
    fn gradient_bound_is_nearly_attained_at_the_wall() {
        let a = audit_green(&Domain::half_space(4).unwrap(), 5000, 7).unwrap();
        assert!(a.max_ratio_gradient > 0.9, "{a:?}");
    }

    #[test]
    fn boundary_potential_vanishes() {
        for dom in [Domain::half_space(3).unwrap(), Domain::ball(3, 1.0).unwrap()] {
            let w = grounded_potential_audit(&dom, 20, 8, 50, 11).unwrap();
            assert!(w < 1e-10, "{w}");
        }
    }
}

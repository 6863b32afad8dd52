//! Wasserstein-1 distances between empirical phase-space measures.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{assignment, SelfConsistentError};
use crate::ensemble::Ensemble;
use crate::vector::phase_dist;

/// Largest ensemble handled by the exact matching.
pub const N_EXACT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum W1Method {
    ExactMatching,
    Sliced { directions: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W1Report {
    /// Exact distance, or for the sliced method the raw average of the 1-D
    /// distances (a lower bound of W1).
    pub value: f64,
    pub method: W1Method,
    pub certified: bool,
    /// Sliced method only: `value` rescaled by [`sliced_scale`], which makes
    /// the estimator unbiased for rigid translations of a cloud.
    pub isotropic_estimate: Option<f64>,
}

fn check_mass(a: &Ensemble, b: &Ensemble) -> Result<(f64, f64), SelfConsistentError> {
    let (ma, mb) = (a.total_mass(), b.total_mass());
    if (ma - mb).abs() > 1e-12 * ma.abs().max(mb.abs()) {
        return Err(SelfConsistentError::MassMismatch(ma, mb));
    }
    Ok((ma, mb))
}

/// Exact W1 with Euclidean cost on `(x, v)` via min-cost perfect matching.
pub fn w1_exact(a: &Ensemble, b: &Ensemble) -> Result<W1Report, SelfConsistentError> {
    check_mass(a, b)?;
    let n = a.len();
    for e in [a, b] {
        if e.len() > N_EXACT {
            return Err(SelfConsistentError::TooLarge {
                got: e.len(),
                limit: N_EXACT,
            });
        }
    }
    if b.len() != n {
        return Err(SelfConsistentError::UnequalWeights(format!(
            "particle counts {} and {}",
            n,
            b.len()
        )));
    }
    if n == 0 {
        return Ok(exact_report(0.0));
    }
    let w = a.weight(0);
    for e in [a, b] {
        if e.weights().iter().any(|&x| x != w) {
            return Err(SelfConsistentError::UnequalWeights(
                "weights differ within or across ensembles".into(),
            ));
        }
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = phase_dist(a.pos(i), a.vel(i), b.pos(j), b.vel(j));
        }
    }
    let (_, c) = assignment(&cost, n);
    Ok(exact_report(w * c))
}

fn exact_report(value: f64) -> W1Report {
    W1Report {
        value,
        method: W1Method::ExactMatching,
        certified: true,
        isotropic_estimate: None,
    }
}

/// `E|theta . u| = |u| / sliced_scale(D)` for `theta` uniform on the unit
/// sphere of `R^D`; equals `sqrt(pi) Gamma((D+1)/2) / Gamma(D/2)`.
pub fn sliced_scale(dim: usize) -> f64 {
    // r(D) = Gamma((D+1)/2) / Gamma(D/2), r(1) = 1/sqrt(pi), r(D+1) = (D/2)/r(D)
    let mut r = 1.0 / std::f64::consts::PI.sqrt();
    for k in 1..dim {
        r = 0.5 * k as f64 / r;
    }
    std::f64::consts::PI.sqrt() * r
}

/// Exact 1-D W1 between weighted point sets of equal mass: the integral of
/// the absolute difference of the two distribution functions.
pub(crate) fn w1_1d(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = a.iter().copied().chain(b.iter().map(|&(x, w)| (x, -w))).collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut total = 0.0;
    let mut cdf = 0.0;
    for win in pts.windows(2) {
        cdf += win[0].1;
        total += cdf.abs() * (win[1].0 - win[0].0);
    }
    total
}

/// Sliced W1: average over `directions` random unit vectors of `R^{2d}` of
/// the 1-D W1 of the projected measures.
pub fn w1_sliced(a: &Ensemble, b: &Ensemble, directions: usize, seed: u64) -> Result<W1Report, SelfConsistentError> {
    check_mass(a, b)?;
    let d = a.dim();
    let dd = 2 * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..directions {
        let mut theta: Vec<f64> = (0..dd).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nrm = theta.iter().map(|c| c * c).sum::<f64>().sqrt();
        theta.iter_mut().for_each(|c| *c /= nrm);
        let project = |e: &Ensemble| -> Vec<(f64, f64)> {
            (0..e.len())
                .map(|i| {
                    let s: f64 = e.pos(i).iter().chain(e.vel(i)).zip(&theta).map(|(p, t)| p * t).sum();
                    (s, e.weight(i))
                })
                .collect()
        };
        acc += w1_1d(&project(a), &project(b));
    }
    let value = if directions == 0 { 0.0 } else { acc / directions as f64 };
    Ok(W1Report {
        value,
        method: W1Method::Sliced { directions, seed },
        certified: false,
        isotropic_estimate: Some(value * sliced_scale(dd)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Frame;
    use crate::geometry::Domain;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize, shift: f64, w: f64) -> Ensemble {
        let parts = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0) + shift).collect();
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                (x, v, w)
            })
            .collect();
        Ensemble::from_particles(Domain::half_space(3).unwrap(), Frame::ProblemA, parts).unwrap()
    }

    #[test]
    fn identical_and_single_particle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = cloud(&mut rng, 10, 0.0, 0.1);
        assert_eq!(w1_exact(&a, &a).unwrap().value, 0.0);
        assert_eq!(w1_sliced(&a, &a, 16, 3).unwrap().value, 0.0);
        let hs = Domain::half_space(3).unwrap();
        let p = Ensemble::from_particles(hs, Frame::ProblemA, vec![(vec![1.0, 0.0, 0.0], vec![0.0; 3], 0.7)]).unwrap();
        let q = Ensemble::from_particles(
            hs,
            Frame::ProblemA,
            vec![(vec![1.0, 3.0, 0.0], vec![0.0, 0.0, 4.0], 0.7)],
        )
        .unwrap();
        let r = w1_exact(&p, &q).unwrap();
        assert_relative_eq!(r.value, 0.7 * 5.0, max_relative = 1e-15);
        assert!(r.certified);
        let s = w1_sliced(&p, &q, 64, 1).unwrap();
        assert!(s.value <= 0.7 * 5.0 && !s.certified);
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = cloud(&mut rng, 4, 0.0, 0.25);
        let b = cloud(&mut rng, 4, 0.0, 0.5);
        assert!(matches!(w1_exact(&a, &b), Err(SelfConsistentError::MassMismatch(..))));
        assert!(matches!(
            w1_sliced(&a, &b, 4, 0),
            Err(SelfConsistentError::MassMismatch(..))
        ));
        let c = cloud(&mut rng, 2, 0.0, 0.5);
        assert!(matches!(w1_exact(&a, &c), Err(SelfConsistentError::UnequalWeights(_))));
        let big = cloud(&mut rng, 513, 0.0, 1.0);
        assert!(matches!(
            w1_exact(&big, &big),
            Err(SelfConsistentError::TooLarge { .. })
        ));
    }

    #[test]
    fn sliced_scale_values() {
        // D = 1: E|theta| = 1; D = 2: E|cos| = 2/pi; D = 3: 1/2
        assert_relative_eq!(sliced_scale(1), 1.0, max_relative = 1e-15);
        assert_relative_eq!(sliced_scale(2), std::f64::consts::PI / 2.0, max_relative = 1e-15);
        assert_relative_eq!(sliced_scale(3), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn one_dimensional_w1_oracle() {
        // sorted-quantile matching for equal weights
        let a = [(0.0, 1.0), (2.0, 1.0), (5.0, 1.0)];
        let b = [(1.0, 1.0), (1.5, 1.0), (7.0, 1.0)];
        assert_relative_eq!(w1_1d(&a, &b), 1.0 + 0.5 + 2.0, max_relative = 1e-15);
    }

    #[test]
    fn sliced_tracks_exact_on_gaussian_clouds() {
        // b is a jittered translate of a, so the exact distance is set by the
        // shift rather than by finite-sample matching noise
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hs = Domain::half_space(3).unwrap();
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let base: Vec<[f64; 6]> = (0..64).map(|_| [5.0 + g(), g(), g(), g(), g(), g()]).collect();
        let jitter: Vec<[f64; 6]> = (0..64).map(|_| [g(), g(), g(), g(), g(), g()]).collect();
        let build = |shift: &[f64; 6], sigma: f64| {
            let parts = base
                .iter()
                .zip(&jitter)
                .map(|(p, j)| {
                    let z: Vec<f64> = (0..6).map(|k| p[k] + shift[k] + sigma * j[k]).collect();
                    (z[..3].to_vec(), z[3..].to_vec(), 1.0 / 64.0)
                })
                .collect();
            Ensemble::from_particles(hs, Frame::ProblemA, parts).unwrap()
        };
        let a = build(&[0.0; 6], 0.0);
        for (shift, sigma) in [
            ([1.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.1),
            ([0.5, 0.5, 0.0, 0.0, 0.5, 0.5], 0.2),
            ([0.0, 0.0, 2.0, 0.0, 1.0, 0.0], 0.3),
        ] {
            let b = build(&shift, sigma);
            let exact = w1_exact(&a, &b).unwrap().value;
            let seeds = 8;
            let est: f64 = (0..seeds)
                .map(|s| w1_sliced(&a, &b, 128, s).unwrap().isotropic_estimate.unwrap())
                .sum::<f64>()
                / seeds as f64;
            assert!((est - exact).abs() <= 0.25 * exact, "shift {shift:?}: {est} vs {exact}");
        }
    }

    proptest! {
        #[test]
        fn triangle_and_symmetry(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = cloud(&mut rng, 6, 0.0, 0.5);
            let b = cloud(&mut rng, 6, 0.3, 0.5);
            let c = cloud(&mut rng, 6, 0.7, 0.5);
            let ab = w1_exact(&a, &b).unwrap().value;
            let ba = w1_exact(&b, &a).unwrap().value;
            let bc = w1_exact(&b, &c).unwrap().value;
            let ac = w1_exact(&a, &c).unwrap().value;
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(w1_sliced(&a, &b, 32, seed).unwrap().value <= ab + 1e-12);
        }
    }
}

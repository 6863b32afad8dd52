//! Named initial ensembles and configurations used by the acceptance runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{Ensemble, Frame};
use crate::geometry::{Domain, DomainKind};

use super::config::{parse_config_str, RunConfig};

pub const FIXTURES: [&str; 4] = ["bounce3d", "mirror32", "picard16", "phi32"];

/// `n` equal-weight particles of total mass `mass`, uniform on the given
/// position and velocity boxes, from a fixed stream.
fn boxed(
    domain: Domain,
    seed: u64,
    n: usize,
    mass: f64,
    x: [(f64, f64); 3],
    v: [(f64, f64); 3],
) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = mass / n as f64;
    (0..n)
        .map(|_| {
            let xs: Vec<f64> = (0..domain.dim())
                .map(|k| {
                    let (lo, hi) = x[k.min(2)];
                    rng.random_range(lo..hi)
                })
                .collect();
            let vs: Vec<f64> = (0..domain.dim())
                .map(|k| {
                    let (lo, hi) = v[k.min(2)];
                    rng.random_range(lo..hi)
                })
                .collect();
            (xs, vs, w)
        })
        .collect()
}

/// Problem A ensemble of the named fixture, or `None` for an unknown name
/// or a domain the fixture does not support (all fixtures need a
/// three-dimensional half-space).
pub fn fixture_ensemble(name: &str, domain: Domain) -> Option<Ensemble> {
    if domain.kind() != DomainKind::HalfSpace || domain.dim() != 3 {
        return None;
    }
    let parts = match name {
        // a cloud away from the wall plus one particle bouncing through the
        // cutoff shell
        "bounce3d" => {
            let mut p = boxed(
                domain,
                3,
                63,
                63.0 / 64.0,
                [(0.8, 1.6), (-0.5, 0.5), (-0.5, 0.5)],
                [(-0.2, 0.2); 3],
            );
            p.insert(0, (vec![0.35, 0.0, 0.0], vec![-0.6, 0.05, 0.0], 1.0 / 64.0));
            p
        }
        // particles near the wall with mixed normal velocities
        "mirror32" => boxed(
            domain,
            5,
            32,
            1.0,
            [(0.05, 0.6), (-0.5, 0.5), (-0.5, 0.5)],
            [(-0.5, 0.5); 3],
        ),
        // a tight cluster whose self-field matters over short windows
        "picard16" => boxed(
            domain,
            7,
            16,
            1.0,
            [(1.0, 1.2), (-0.1, 0.1), (-0.1, 0.1)],
            [(-0.3, 0.3); 3],
        ),
        // a cloud reaching into the cutoff shell
        "phi32" => boxed(
            domain,
            11,
            32,
            1.0,
            [(0.05, 0.8), (-0.4, 0.4), (-0.4, 0.4)],
            [(-0.4, 0.4); 3],
        ),
        _ => return None,
    };
    Ensemble::from_particles(domain, Frame::ProblemA, parts).ok()
}

/// Full configuration of the named fixture.
pub fn fixture_config(name: &str) -> Option<RunConfig> {
    let (reg, stepper, frame) = match name {
        "bounce3d" => ("zeta = 0.1\ndelta = 0.05", "dt = 1e-3\nt_end = 2.0", "A"),
        "mirror32" => ("zeta = 0.1\ndelta = 0.05", "dt = 1e-3\nt_end = 1.0", "A"),
        "picard16" => ("zeta = 0.1\ndelta = 0.05", "dt = 1e-3\nt_end = 0.05", "A"),
        "phi32" => ("zeta = 0.1\ndelta = 1e-3", "dt = 1e-3\nt_end = 1.0", "A"),
        _ => return None,
    };
    let text = format!(
        "[domain]\nkind = \"halfspace\"\ndim = 3\n\n[initial]\nkind = \"fixture\"\nfixture = \"{name}\"\nframe = \"{frame}\"\n\n[regularization]\n{reg}\n\n[stepper]\n{stepper}\n"
    );
    parse_config_str(&text).ok()
}

//! Finite-difference Jacobian of the discrete flow map in phase space.

use nalgebra::DMatrix;

use super::DiagnosticsError;
use crate::ensemble::{Ensemble, Frame};
use crate::flow::{integrate, FlowError, ForceField, StepperConfig};
use crate::geometry::Domain;

/// `|det D Z_T - 1|` at `(x0, v0)` from a centred `4d + 1` point stencil of
/// spacing `h`. The tracers carry no charge, so `field` must be external to
/// them (for instance a recorded history).
pub fn incompressibility_probe(
    field: &dyn ForceField,
    domain: &Domain,
    x0: &[f64],
    v0: &[f64],
    h: f64,
    t_end: f64,
    dt: f64,
) -> Result<f64, DiagnosticsError> {
    let d = domain.dim();
    let m = 2 * d;
    let centre: Vec<f64> = x0.iter().chain(v0).copied().collect();
    let mut parts = vec![(x0.to_vec(), v0.to_vec(), 0.0)];
    for k in 0..m {
        for s in [1.0, -1.0] {
            let mut z = centre.clone();
            z[k] += s * h;
            parts.push((z[..d].to_vec(), z[d..].to_vec(), 0.0));
        }
    }
    let tracers = Ensemble::from_particles(*domain, Frame::ProblemA, parts)
        .map_err(|e| FlowError::InvalidConfig(format!("stencil: {e}")))?;
    let run = integrate(&tracers, field, &StepperConfig::new(dt), t_end, &mut [])?;
    if !run.events.is_empty() {
        return Err(DiagnosticsError::StencilReflected);
    }
    let fin = &run.final_state;
    let image = |i: usize| -> Vec<f64> { fin.pos(i).iter().chain(fin.vel(i)).copied().collect() };
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for k in 0..m {
        let p = image(1 + 2 * k);
        let q = image(2 + 2 * k);
        for r in 0..m {
            jac[(r, k)] = (p[r] - q[r]) / (2.0 * h);
        }
    }
    Ok((jac.determinant() - 1.0).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Damping, FieldModel, GreenKind, RadialKernel};
    use crate::flow::{HistoryField, NoField, SelfConsistent, SnapshotRecorder, Uniform};

    fn hs3() -> Domain {
        Domain::half_space(3).unwrap()
    }

    #[test]
    fn zero_and_uniform_fields_preserve_volume() {
        let dom = hs3();
        let r = incompressibility_probe(&NoField, &dom, &[2.0, 0.0, 0.0], &[0.3, 0.1, 0.0], 1e-4, 1.0, 1e-2).unwrap();
        assert!(r < 1e-10, "{r}");
        let r = incompressibility_probe(
            &Uniform(vec![0.5, 0.0, -0.2]),
            &dom,
            &[2.0, 0.0, 0.0],
            &[0.3, 0.1, 0.0],
            1e-4,
            1.0,
            1e-2,
        )
        .unwrap();
        assert!(r < 1e-10, "{r}");
    }

    #[test]
    fn reflection_is_reported() {
        let r = incompressibility_probe(&NoField, &hs3(), &[0.1, 0.0, 0.0], &[-1.0, 0.0, 0.0], 1e-4, 1.0, 1e-2);
        assert_eq!(r, Err(DiagnosticsError::StencilReflected));
    }

    #[test]
    fn two_body_history_field_preserves_volume() {
        let dom = hs3();
        let model = FieldModel {
            domain: dom,
            kind: GreenKind::WholeSpace,
            kernel: RadialKernel { eps: 0.05, delta: 0.0 },
            damping: Damping::None,
        };
        let e = Ensemble::from_particles(
            dom,
            Frame::ProblemA,
            vec![
                (vec![3.0, 0.0, 0.0], vec![0.0, 0.2, 0.0], 1.0),
                (vec![3.0, 0.6, 0.0], vec![0.0, -0.2, 0.0], 1.0),
            ],
        )
        .unwrap();
        let dt = 1e-3;
        let mut rec = SnapshotRecorder::new(1);
        integrate(
            &e,
            &SelfConsistent(model),
            &StepperConfig::new(dt),
            1.0,
            &mut [&mut rec],
        )
        .unwrap();
        let field = HistoryField {
            model,
            history: rec.snapshots,
            dt,
        };
        let r = incompressibility_probe(&field, &dom, &[3.0, 0.3, 0.1], &[0.1, 0.0, 0.0], 1e-5, 1.0, dt).unwrap();
        assert!(r <= 1e-4, "{r}");
    }
}

//! Energy ledger: kinetic and potential energy plus the accumulated error
//! power `K_tau` of the regularized system.

use super::DiagnosticsError;
use crate::ensemble::Ensemble;
use crate::fields::{source_gradient_batch, FieldModel};
use crate::flow::{FlowError, Recorder, ReflectionEvent};
use crate::vector::dot;

/// `K_tau = 2 sum_i w_i (sigma_i - c_i) v_i . S_i` where `S_i` is the
/// undamped source sum at particle `i`, `c_i` the signed damping factor and
/// `sigma_i` the sign it approximates (1 in the domain frame, `sgn(x_1)` in
/// the Problem B frame).
pub fn k_tau(e: &Ensemble, model: &FieldModel) -> f64 {
    let d = e.dim();
    let gaps: Vec<f64> = (0..e.len())
        .map(|i| {
            if !e.is_alive(i) {
                return 0.0;
            }
            let (c, sigma) = model.damping_at(e.frame(), e.pos(i));
            sigma - c
        })
        .collect();
    if gaps.iter().all(|&g| g == 0.0) {
        return 0.0;
    }
    let s = source_gradient_batch(model, e);
    2.0 * (0..e.len())
        .filter(|&i| gaps[i] != 0.0)
        .map(|i| e.weight(i) * gaps[i] * dot(e.vel(i), &s[i * d..(i + 1) * d]))
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub k: f64,
    /// Integral of `K` since the previous sample when it was split at
    /// reflection events (where `K` jumps); `None` means plain trapezoid.
    pub k_segment: Option<f64>,
}

impl EnergySample {
    pub fn of(e: &Ensemble, model: &FieldModel) -> Self {
        Self {
            t: e.time(),
            kinetic: e.kinetic_energy(),
            potential: e.potential_energy_with(model),
            k: k_tau(e, model),
            k_segment: None,
        }
    }
}

/// Collects an [`EnergySample`] at every sampled step. With a cadence of one
/// the `K` integral over steps containing reflections is split at the events.
#[derive(Debug)]
pub struct LedgerRecorder {
    pub model: FieldModel,
    pub every: usize,
    pub samples: Vec<EnergySample>,
    prev: Option<Ensemble>,
    pending: Vec<ReflectionEvent>,
}

impl LedgerRecorder {
    pub fn new(model: FieldModel, every: usize) -> Self {
        Self {
            model,
            every,
            samples: Vec::new(),
            prev: None,
            pending: Vec::new(),
        }
    }

    /// `K` just before and just after each event, with the other particles
    /// interpolated linearly between the bracketing samples.
    fn split_segment(&self, a: &Ensemble, b: &Ensemble, ka: f64, kb: f64) -> Option<f64> {
        let (ta, tb) = (a.time(), b.time());
        let d = a.dim();
        let mut events = self.pending.clone();
        events.sort_by(|p, q| p.t.total_cmp(&q.t));
        let mut pts = vec![(ta, ka)];
        let mut state = a.clone();
        for ev in &events {
            let i = a.index_of(ev.id)?;
            let s = ((ev.t - ta) / (tb - ta)).clamp(0.0, 1.0);
            {
                let (x, v) = state.state_mut();
                for j in 0..a.len() {
                    for k in 0..d {
                        let c = j * d + k;
                        x[c] = a.pos(j)[k] + s * (b.pos(j)[k] - a.pos(j)[k]);
                        v[c] = a.vel(j)[k] + s * (b.vel(j)[k] - a.vel(j)[k]);
                    }
                }
                x[i * d..(i + 1) * d].copy_from_slice(&ev.x);
                v[i * d..(i + 1) * d].copy_from_slice(&ev.v_minus);
            }
            pts.push((ev.t, k_tau(&state, &self.model)));
            state.state_mut().1[i * d..(i + 1) * d].copy_from_slice(&ev.v_plus);
            pts.push((ev.t, k_tau(&state, &self.model)));
        }
        pts.push((tb, kb));
        Some(
            pts.windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                .sum(),
        )
    }
}

impl Recorder for LedgerRecorder {
    fn cadence(&self) -> usize {
        self.every.max(1)
    }

    fn on_sample(&mut self, _step: usize, e: &Ensemble) -> Result<(), FlowError> {
        let mut sample = EnergySample::of(e, &self.model);
        if !self.pending.is_empty() && self.cadence() == 1 {
            if let (Some(prev), Some(last)) = (&self.prev, self.samples.last()) {
                sample.k_segment = self.split_segment(prev, e, last.k, sample.k);
            }
        }
        self.pending.clear();
        if self.cadence() == 1 {
            self.prev = Some(e.clone());
        }
        self.samples.push(sample);
        Ok(())
    }

    fn on_events(&mut self, events: &[ReflectionEvent]) -> Result<(), FlowError> {
        if self.cadence() == 1 {
            self.pending.extend_from_slice(events);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyLedger {
    pub t: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
    pub total: Vec<f64>,
    pub k_integral: Vec<f64>,
    pub drift: Vec<f64>,
}

impl EnergyLedger {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn max_abs_drift(&self) -> f64 {
        self.drift.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Builds a ledger from already tabulated columns (e.g. a ledger CSV),
    /// checking that they share one grid.
    pub fn from_columns(
        t: Vec<f64>,
        kinetic: Vec<f64>,
        potential: Vec<f64>,
        total: Vec<f64>,
        k_integral: Vec<f64>,
        drift: Vec<f64>,
    ) -> Result<Self, DiagnosticsError> {
        let n = t.len();
        if [
            kinetic.len(),
            potential.len(),
            total.len(),
            k_integral.len(),
            drift.len(),
        ]
        .iter()
        .any(|&m| m != n)
        {
            return Err(DiagnosticsError::GridMismatch("column lengths differ".into()));
        }
        Ok(Self {
            t,
            kinetic,
            potential,
            total,
            k_integral,
            drift,
        })
    }
}

/// Trapezoid accumulation of `K` and the drift
/// `total(t) - total(0) - int_0^t K`.
pub fn energy_audit(samples: &[EnergySample]) -> Result<EnergyLedger, DiagnosticsError> {
    for w in samples.windows(2) {
        if !(w[1].t > w[0].t) {
            return Err(DiagnosticsError::GridMismatch(format!(
                "non-increasing sample times {} -> {}",
                w[0].t, w[1].t
            )));
        }
    }
    let mut ledger = EnergyLedger::default();
    let mut acc = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            let p = &samples[i - 1];
            acc += s.k_segment.unwrap_or(0.5 * (p.k + s.k) * (s.t - p.t));
        }
        let total = s.kinetic + s.potential;
        ledger.t.push(s.t);
        ledger.kinetic.push(s.kinetic);
        ledger.potential.push(s.potential);
        ledger.total.push(total);
        ledger.k_integral.push(acc);
    }
    let total0 = ledger.total.first().copied().unwrap_or(0.0);
    ledger.drift = ledger
        .total
        .iter()
        .zip(&ledger.k_integral)
        .map(|(tot, k)| tot - total0 - k)
        .collect();
    Ok(ledger)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub pass: bool,
    /// Smallest `allowed(t) - total(t)`; negative on failure.
    pub min_margin: f64,
    pub worst_time: f64,
}

/// Passes iff `total(t) <= total(0) + tol |total(0)| + |int K|(t) + tol_abs`
/// at every sample.
pub fn energy_bound_check(ledger: &EnergyLedger, tol: f64, tol_abs: f64) -> BoundCheck {
    let mut check = BoundCheck {
        pass: true,
        min_margin: f64::INFINITY,
        worst_time: ledger.t.first().copied().unwrap_or(0.0),
    };
    let Some(&total0) = ledger.total.first() else {
        return check;
    };
    for i in 0..ledger.len() {
        let allowed = total0 + tol * total0.abs() + ledger.k_integral[i].abs() + tol_abs;
        let margin = allowed - ledger.total[i];
        if margin < check.min_margin || margin.is_nan() {
            check.min_margin = margin;
            check.worst_time = ledger.t[i];
        }
    }
    check.pass = check.min_margin >= 0.0;
    check
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Frame;
    use crate::fields::{c_d, Damping, GreenKind, RadialKernel, RegularizationParams};
    use crate::flow::{integrate, SelfConsistent, StepperConfig};
    use crate::geometry::Domain;
    use crate::vector::mirror;
    use approx::assert_relative_eq;

    fn hs3() -> Domain {
        Domain::half_space(3).unwrap()
    }

    fn params() -> RegularizationParams {
        RegularizationParams::new(0.01, 0.1, 0.1, 0.05).unwrap()
    }

    #[test]
    fn k_tau_examples() {
        let model = FieldModel::regularized(hs3(), &params());
        // deep inside: exactly zero
        let e = Ensemble::from_particles(
            hs3(),
            Frame::ProblemA,
            vec![(vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], 1.0)],
        )
        .unwrap();
        assert_eq!(k_tau(&e, &model), 0.0);
        // inside the shell: 2 w (1 - rbar) v . grad(self image)
        let x1 = 0.15;
        let e = Ensemble::from_particles(
            hs3(),
            Frame::ProblemA,
            vec![(vec![x1, 0.0, 0.0], vec![-1.0, 0.0, 0.0], 2.0)],
        )
        .unwrap();
        let rb = crate::fields::cutoff_rbar(x1 / 0.1).unwrap();
        // S = w * c (2 x1) / (2 x1)^3 e1 from minus the image gradient
        let s1 = 2.0 * c_d(3).unwrap() / (2.0 * x1 * 2.0 * x1);
        let oracle = 2.0 * 2.0 * (1.0 - rb) * -s1;
        assert_relative_eq!(k_tau(&e, &model), oracle, max_relative = 1e-13);
        // velocity orthogonal to the field
        let e = Ensemble::from_particles(
            hs3(),
            Frame::ProblemA,
            vec![(vec![x1, 0.0, 0.0], vec![0.0, 1.0, 0.0], 2.0)],
        )
        .unwrap();
        assert_eq!(k_tau(&e, &model), 0.0);
    }

    #[test]
    fn static_ensemble_has_zero_drift() {
        let model = FieldModel {
            domain: hs3(),
            kind: GreenKind::HalfSpaceImage,
            kernel: RadialKernel { eps: 0.0, delta: 0.05 },
            damping: Damping::Cutoff { zeta: 0.1 },
        };
        let e =
            Ensemble::from_particles(hs3(), Frame::ProblemA, vec![(vec![1.0, 0.0, 0.0], vec![0.0; 3], 1.0)]).unwrap();
        let mut rec = LedgerRecorder::new(model, 1);
        integrate(
            &e,
            &crate::flow::NoField,
            &StepperConfig::new(0.1),
            1.0,
            &mut [&mut rec],
        )
        .unwrap();
        let l = energy_audit(&rec.samples).unwrap();
        assert!(l.drift.iter().all(|&d| d == 0.0));
        assert!(energy_bound_check(&l, 1e-4, 0.0).pass);
    }

    fn two_body_ledger(dt: f64) -> EnergyLedger {
        let dom = hs3();
        let model = FieldModel {
            domain: dom,
            kind: GreenKind::WholeSpace,
            kernel: RadialKernel { eps: 0.0, delta: 0.0 },
            damping: Damping::None,
        };
        let e = Ensemble::from_particles(
            dom,
            Frame::ProblemA,
            vec![
                (vec![5.0, 0.0, 0.0], vec![0.0, 0.2, 0.0], 1.0),
                (vec![5.0, 0.5, 0.0], vec![0.0, -0.2, 0.1], 1.0),
            ],
        )
        .unwrap();
        let mut rec = LedgerRecorder::new(model, 1);
        integrate(
            &e,
            &SelfConsistent(model),
            &StepperConfig::new(dt),
            1.0,
            &mut [&mut rec],
        )
        .unwrap();
        energy_audit(&rec.samples).unwrap()
    }

    #[test]
    fn two_body_drift_is_small_and_second_order() {
        let a = two_body_ledger(1e-3);
        let e0 = a.total[0];
        assert!(a.max_abs_drift() <= 1e-6 * e0, "{} vs {}", a.max_abs_drift(), e0);
        let b = two_body_ledger(5e-4);
        let ratio = a.max_abs_drift() / b.max_abs_drift();
        assert!(ratio > 3.0, "ratio {ratio}");
    }

    fn shell_crossing_ledger(dt: f64) -> EnergyLedger {
        // a particle bouncing through the cutoff shell: the identity needs K
        let dom = hs3();
        let p = RegularizationParams::new(0.01, 0.1, 0.1, 0.02).unwrap();
        let model = FieldModel::regularized(dom, &p);
        let e = Ensemble::from_particles(
            dom,
            Frame::ProblemA,
            vec![
                (vec![0.3, 0.0, 0.0], vec![-1.0, 0.1, 0.0], 1.0),
                (vec![0.5, 0.2, 0.0], vec![0.0, 0.0, 0.3], 1.0),
            ],
        )
        .unwrap();
        let mut rec = LedgerRecorder::new(model, 1);
        integrate(
            &e,
            &SelfConsistent(model),
            &StepperConfig::new(dt),
            0.6,
            &mut [&mut rec],
        )
        .unwrap();
        energy_audit(&rec.samples).unwrap()
    }

    #[test]
    fn k_integral_accounts_for_shell_crossing() {
        let a = shell_crossing_ledger(1e-4);
        let last = a.len() - 1;
        let without_k = (a.total[last] - a.total[0]).abs();
        assert!(a.k_integral[last].abs() > 1e-3);
        assert!(
            a.drift[last].abs() < 1e-3 * without_k,
            "{} vs {}",
            a.drift[last],
            without_k
        );
        let b = shell_crossing_ledger(5e-5);
        let ratio = a.max_abs_drift() / b.max_abs_drift();
        assert!(ratio > 3.0, "ratio {ratio}");
    }

    #[test]
    fn bound_check_fails_on_injected_energy() {
        let mut l = two_body_ledger(1e-2);
        assert!(energy_bound_check(&l, 1e-4, 0.0).pass);
        let n = l.len();
        l.total[n - 1] += 1.0;
        let c = energy_bound_check(&l, 1e-4, 0.0);
        assert!(!c.pass && c.min_margin < 0.0);
        assert!(energy_bound_check(&EnergyLedger::default(), 1e-4, 0.0).pass);
        assert!(energy_audit(&[]).unwrap().is_empty());
    }

    #[test]
    fn oversized_step_fails_the_bound() {
        let dom = hs3();
        let model = FieldModel {
            domain: dom,
            kind: GreenKind::WholeSpace,
            kernel: RadialKernel { eps: 0.0, delta: 0.0 },
            damping: Damping::None,
        };
        let e = Ensemble::from_particles(
            dom,
            Frame::ProblemA,
            vec![
                (vec![5.0, 0.0, 0.0], vec![0.0; 3], 1.0),
                (vec![5.0, 0.05, 0.0], vec![0.0; 3], 1.0),
            ],
        )
        .unwrap();
        let mut rec = LedgerRecorder::new(model, 1);
        integrate(
            &e,
            &SelfConsistent(model),
            &StepperConfig::new(0.5),
            2.0,
            &mut [&mut rec],
        )
        .unwrap();
        let c = energy_bound_check(&energy_audit(&rec.samples).unwrap(), 1e-4, 0.0);
        assert!(!c.pass && c.min_margin < 0.0, "{c:?}");
    }

    #[test]
    fn problem_b_ledger_is_mirror_invariant() {
        let dom = hs3();
        let p = params();
        let a = Ensemble::from_particles(
            dom,
            Frame::ProblemA,
            vec![
                (vec![0.05, 0.3, 0.0], vec![0.2, 0.1, 0.0], 0.5),
                (vec![0.4, -0.1, 0.2], vec![-0.3, 0.0, 0.1], 0.5),
            ],
        )
        .unwrap();
        let b = a.symmetrize().unwrap();
        let parts: Vec<_> = (0..b.len())
            .map(|i| (mirror(b.pos(i)), mirror(b.vel(i)), b.weight(i)))
            .collect();
        let m = Ensemble::from_particles(dom, Frame::ProblemB, parts).unwrap();
        let model = FieldModel::problem_b(dom, &p);
        let sb = EnergySample::of(&b, &model);
        let sm = EnergySample::of(&m, &model);
        assert_eq!(sb.kinetic, sm.kinetic);
        assert_eq!(sb.potential, sm.potential);
        assert_eq!(sb.k, sm.k);
    }
}

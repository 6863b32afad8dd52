//! Log-log phase-space moment used to monitor finite-time blow-up.

use crate::ensemble::Ensemble;
use crate::flow::ForceField;
use crate::vector::{norm_sq, phase_norm};

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupReport {
    pub t: Vec<f64>,
    /// `sum_i w_i log log(2 + |Z_i|)`
    pub moment: Vec<f64>,
    /// `sum_i w_i |b(Z_i)| / ((1 + |Z_i|) log(2 + |Z_i|))` with `b = (v, E)`.
    pub integrand: Vec<f64>,
    pub total_variation: f64,
}

/// Evaluates the moment and its integrand bound on each snapshot, with the
/// field taken from `field` at the snapshot time.
pub fn blowup_monitor(snapshots: &[Ensemble], field: &dyn ForceField) -> BlowupReport {
    let mut report = BlowupReport {
        t: Vec::with_capacity(snapshots.len()),
        moment: Vec::with_capacity(snapshots.len()),
        integrand: Vec::with_capacity(snapshots.len()),
        total_variation: 0.0,
    };
    for e in snapshots {
        let d = e.dim();
        let acc = field.forces(e, e.time());
        let mut m = 0.0;
        let mut g = 0.0;
        for i in (0..e.len()).filter(|&i| e.is_alive(i)) {
            let z = phase_norm(e.pos(i), e.vel(i));
            let l = (2.0 + z).ln();
            m += e.weight(i) * l.ln();
            let b = (norm_sq(e.vel(i)) + norm_sq(&acc[i * d..(i + 1) * d])).sqrt();
            g += e.weight(i) * b / ((1.0 + z) * l);
        }
        report.t.push(e.time());
        report.moment.push(m);
        report.integrand.push(g);
    }
    report.total_variation = report.moment.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    report
}

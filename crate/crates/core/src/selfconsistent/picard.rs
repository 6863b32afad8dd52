//! Picard iteration: iterate `n+1` is the flow of `h0` under the field
//! generated by iterate `n`'s recorded history.

use log::warn;

use super::{w1_exact, SelfConsistentError, N_EXACT};
use crate::ensemble::Ensemble;
use crate::fields::FieldModel;
use crate::flow::{integrate, step_plan, HistoryField, SnapshotRecorder, StepperConfig};
use crate::vector::phase_dist;

#[derive(Debug, Clone, Copy)]
pub struct PicardConfig {
    pub model: FieldModel,
    pub stepper: StepperConfig,
    pub t0: f64,
    pub n_max: usize,
    pub tol: f64,
    /// Also compute `max_t W1(mu^{n+1}_t, mu^n_t)` by exact matching when the
    /// ensemble is small enough.
    pub w1_check: bool,
}

#[derive(Debug, Clone)]
pub struct PicardState {
    /// Index of the last computed iterate.
    pub n: usize,
    /// Snapshots of the last iterate on the time grid.
    pub history: Vec<Ensemble>,
    /// `z[k]` is the coupling distance between iterates `k+1` and `k`.
    pub z: Vec<f64>,
    /// `ratios[k] = z[k+1] / z[k]`.
    pub ratios: Vec<f64>,
    pub w1: Vec<Option<f64>>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// `sup_k sum_i w_i |Z^a_i(t_k) - Z^b_i(t_k)|` for two histories of the same
/// particles on the same grid.
pub fn trajectory_distance(a: &[Ensemble], b: &[Ensemble]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(ea, eb)| {
            (0..ea.len())
                .map(|i| ea.weight(i) * phase_dist(ea.pos(i), ea.vel(i), eb.pos(i), eb.vel(i)))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

pub fn picard_iterate(h0: &Ensemble, cfg: &PicardConfig) -> Result<PicardState, SelfConsistentError> {
    if !(cfg.t0.is_finite() && cfg.t0 > 0.0) {
        return Err(SelfConsistentError::InvalidConfig("T0 must be > 0".into()));
    }
    if cfg.n_max == 0 {
        return Err(SelfConsistentError::InvalidConfig("n_max must be >= 1".into()));
    }
    cfg.stepper.validate()?;
    let (steps, _) = step_plan(cfg.stepper.dt, cfg.t0);
    // iterate 0 is constant in time
    let mut prev: Vec<Ensemble> = vec![h0.clone(); steps + 1];
    for (k, e) in prev.iter_mut().enumerate() {
        e.set_time(h0.time() + (k as f64 * cfg.stepper.dt).min(cfg.t0));
    }
    let mut state = PicardState {
        n: 0,
        history: Vec::new(),
        z: Vec::new(),
        ratios: Vec::new(),
        w1: Vec::new(),
        converged: false,
        warnings: Vec::new(),
    };
    let mut above_one = 0;
    for n in 1..=cfg.n_max {
        let field = HistoryField {
            model: cfg.model,
            history: prev,
            dt: cfg.stepper.dt,
        };
        let mut rec = SnapshotRecorder::new(1);
        integrate(h0, &field, &cfg.stepper, cfg.t0, &mut [&mut rec])?;
        let cur = rec.snapshots;
        let z = trajectory_distance(&cur, &field.history);
        let w1 = if cfg.w1_check && h0.len() <= N_EXACT {
            let mut m: f64 = 0.0;
            for (a, b) in cur.iter().zip(&field.history) {
                m = m.max(w1_exact(a, b)?.value);
            }
            Some(m)
        } else {
            None
        };
        if let Some(&last) = state.z.last() {
            let ratio = if last > 0.0 { z / last } else { f64::INFINITY };
            state.ratios.push(ratio);
            above_one = if ratio > 1.0 { above_one + 1 } else { 0 };
            if above_one == 3 {
                let msg =
                    format!("NonContraction: ratio above 1 for 3 consecutive iterates (n = {n}); T0 may be too large");
                warn!("{msg}");
                state.warnings.push(msg);
            }
        }
        state.z.push(z);
        state.w1.push(w1);
        state.n = n;
        prev = cur;
        if z <= cfg.tol {
            state.converged = true;
            break;
        }
    }
    state.history = prev;
    Ok(state)
}

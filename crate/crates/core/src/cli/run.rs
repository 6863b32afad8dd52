//! Run orchestration for the subcommands.

use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{
    blowup_monitor, energy_audit, energy_bound_check, jitter_positions, phi_growth_check, phi_series, BoundCheck,
    LedgerRecorder, PhiGrowth,
};
use crate::ensemble::{Ensemble, Frame};
use crate::flow::{fold, integrate, Backend, FlowError, RunRecord, SelfConsistent, SnapshotRecorder};
use crate::selfconsistent::{picard_iterate, PicardConfig, PicardState};
use crate::vector::phase_dist;

use super::config::RunConfig;
use super::output::{contraction_csv, events_csv, ledger_csv, phi_csv, sha256_hex, snapshots_csv, Manifest, OutputDir};
use super::CliError;

/// Runs `f` on a pool of `workers` threads (0 = one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Hash of the configuration with the scheduling-only fields cleared.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.run.workers = 0;
    c.output.dir = String::new();
    sha256_hex(c.to_toml().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub steps: usize,
    pub events: usize,
    pub t_end: f64,
    pub initial_total_energy: f64,
    pub max_abs_drift: f64,
    pub bound_pass: bool,
    pub bound_min_margin: f64,
    pub weights_constant: bool,
    pub blowup_total_variation: f64,
    pub phi_max_slope: Option<f64>,
    pub phi_bound_shape: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub record: RunRecord,
    pub snapshots: Vec<Ensemble>,
    pub report: SimulationReport,
    pub bound: BoundCheck,
    pub phi: Option<PhiGrowth>,
    pub manifest: Manifest,
}

fn weights_constant(initial: &Ensemble, snaps: &[Ensemble]) -> bool {
    snaps.iter().all(|s| {
        s.weights().len() == initial.weights().len()
            && s.weights()
                .iter()
                .zip(initial.weights())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    })
}

/// `simulate`: integrates the configured ensemble and writes snapshots,
/// events, the energy ledger, a report and the manifest into `out`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<SimulationOutcome, CliError> {
    with_workers(cfg.run.workers, || simulate_inner(cfg, out))?
}

fn simulate_inner(cfg: &RunConfig, out: &Path) -> Result<SimulationOutcome, CliError> {
    let e0 = cfg.initial_ensemble()?;
    let model = cfg.model()?;
    let field = SelfConsistent(model);
    let stepper = cfg.stepper();
    let mut dir = OutputDir::create(out)?;
    let hash = config_hash(cfg);
    let mut snaps = SnapshotRecorder::new(cfg.output.cadence_snapshot);
    let mut ledger = LedgerRecorder::new(model, cfg.output.cadence_ledger);
    let mut phi_base = SnapshotRecorder::new(cfg.output.cadence_phi);
    let result = if cfg.output.phi {
        integrate(
            &e0,
            &field,
            &stepper,
            cfg.stepper.t_end,
            &mut [&mut snaps, &mut ledger, &mut phi_base],
        )
    } else {
        integrate(&e0, &field, &stepper, cfg.stepper.t_end, &mut [&mut snaps, &mut ledger])
    };
    let record = match result {
        Ok(r) => r,
        Err(err) => {
            // keep whatever was recorded and flag the manifest
            dir.write("snapshots.csv", &snapshots_csv(&snaps.snapshots)?)?;
            if let Ok(l) = energy_audit(&ledger.samples) {
                dir.write("ledger.csv", &ledger_csv(&l)?)?;
            }
            dir.finish("simulate", hash, cfg.run.seed, Some(err.to_string()))?;
            return Err(err.into());
        }
    };
    let l = energy_audit(&ledger.samples)?;
    let bound = energy_bound_check(&l, 1e-4, 0.0);
    let blow = blowup_monitor(&snaps.snapshots, &field);
    let phi = if cfg.output.phi {
        let pert0 = jitter_positions(&e0, cfg.output.phi_jitter, cfg.run.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut rec = SnapshotRecorder::new(cfg.output.cadence_phi);
        integrate(&pert0, &field, &stepper, cfg.stepper.t_end, &mut [&mut rec])?;
        let (delta, zeta) = (cfg.regularization.delta, cfg.regularization.zeta);
        let series = phi_series(&phi_base.snapshots, &rec.snapshots, delta, zeta)?;
        dir.write("phi.csv", &phi_csv(&series)?)?;
        Some(phi_growth_check(&series, (0.0, cfg.stepper.t_end), delta, zeta))
    } else {
        None
    };
    let report = SimulationReport {
        steps: record.steps,
        events: record.events.len(),
        t_end: record.t_end,
        initial_total_energy: l.total.first().copied().unwrap_or(0.0),
        max_abs_drift: l.max_abs_drift(),
        bound_pass: bound.pass,
        bound_min_margin: bound.min_margin,
        weights_constant: weights_constant(&e0, &snaps.snapshots),
        blowup_total_variation: blow.total_variation,
        phi_max_slope: phi.map(|p| p.max_slope),
        phi_bound_shape: phi.map(|p| p.bound_shape),
    };
    dir.write("snapshots.csv", &snapshots_csv(&snaps.snapshots)?)?;
    dir.write("events.csv", &events_csv(&record.events, e0.dim())?)?;
    dir.write("ledger.csv", &ledger_csv(&l)?)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    dir.write("report.json", (json + "\n").as_bytes())?;
    let manifest = dir.finish("simulate", hash, cfg.run.seed, None)?;
    Ok(SimulationOutcome {
        record,
        snapshots: snaps.snapshots,
        report,
        bound,
        phi,
        manifest,
    })
}

/// `picard`: fixed-point iteration over `[0, T0]` and its contraction report.
pub fn picard(cfg: &RunConfig, out: &Path) -> Result<(PicardState, Manifest), CliError> {
    with_workers(cfg.run.workers, || {
        let pc = cfg
            .picard
            .as_ref()
            .ok_or_else(|| CliError::Usage("the configuration has no [picard] section".into()))?;
        let e0 = cfg.initial_ensemble()?;
        let pcfg = PicardConfig {
            model: cfg.model()?,
            stepper: cfg.stepper(),
            t0: pc.t0,
            n_max: pc.n_max,
            tol: pc.tol,
            w1_check: pc.w1_check,
        };
        let state = picard_iterate(&e0, &pcfg)?;
        let mut dir = OutputDir::create(out)?;
        dir.write("contraction.csv", &contraction_csv(&state)?)?;
        if !state.warnings.is_empty() {
            dir.write("warnings.txt", (state.warnings.join("\n") + "\n").as_bytes())?;
        }
        let manifest = dir.finish("picard", config_hash(cfg), cfg.run.seed, None)?;
        Ok((state, manifest))
    })?
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BackendComparison {
    /// Largest phase-space distance between the event-driven run and the
    /// folded whole-space run, over particles and samples.
    pub max_deviation: f64,
    /// `10 dt^2 t_end`
    pub bound: f64,
    pub events: usize,
    pub pass: bool,
}

/// Runs the configured half-space ensemble with reflections and its mirror
/// symmetrization through the whole space, then compares the folded paths.
pub fn compare_backends(cfg: &RunConfig) -> Result<BackendComparison, CliError> {
    with_workers(cfg.run.workers, || {
        let mut a_cfg = cfg.clone();
        a_cfg.initial.frame = super::config::FrameName::A;
        let a0 = a_cfg.initial_ensemble()?;
        let b0 = a0.symmetrize()?;
        let model_a = a_cfg.model_for(Frame::ProblemA)?;
        let model_b = model_a.for_frame(Frame::ProblemB);
        let step_a = a_cfg.stepper().with_backend(Backend::EventDriven);
        let step_b = a_cfg.stepper().with_backend(Backend::FoldHalfSpace);
        let t_end = cfg.stepper.t_end;
        let mut ra = SnapshotRecorder::new(1);
        let mut rb = SnapshotRecorder::new(1);
        let run_a = integrate(&a0, &SelfConsistent(model_a), &step_a, t_end, &mut [&mut ra])?;
        integrate(&b0, &SelfConsistent(model_b), &step_b, t_end, &mut [&mut rb])?;
        let mut dev: f64 = 0.0;
        for (sa, sb) in ra.snapshots.iter().zip(&rb.snapshots) {
            let fb = fold(sb)?;
            for i in 0..sa.len() {
                let j = fb
                    .index_of(sa.id(i))
                    .ok_or_else(|| FlowError::FrameMismatch(format!("id {} missing after fold", sa.id(i))))?;
                dev = dev.max(phase_dist(sa.pos(i), sa.vel(i), fb.pos(j), fb.vel(j)));
            }
        }
        let dt = cfg.stepper.dt;
        let bound = 10.0 * dt * dt * t_end.max(dt);
        Ok(BackendComparison {
            max_deviation: dev,
            bound,
            events: run_a.events.len(),
            pass: dev <= bound,
        })
    })?
}

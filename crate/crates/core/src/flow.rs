//! Time integration of the specular flow.
//!
//! Kick-drift-kick leapfrog. Drifts are straight segments; boundary hits are
//! located by bisection on the signed distance, the particle is placed on the
//! boundary, its velocity reflected and the remaining drift continued. The
//! fold backend instead advances a mirror-symmetric Problem B ensemble through
//! the whole space without reflections.

use rayon::prelude::*;
use thiserror::Error;

use crate::ensemble::{Ensemble, Frame};
use crate::fields::{field_at, field_batch, FieldModel};
use crate::geometry::{is_grazing, reflect_about, Domain, DomainKind};
use crate::vector::{norm, norm_sq};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("particle {id} reflected more than {max} times in the step starting at t = {t}")]
    ReflectionOverflow { id: u64, t: f64, max: usize },
    #[error("drift segment does not leave the domain")]
    NoCrossing,
    #[error("frame mismatch: {0}")]
    FrameMismatch(String),
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
    #[error("recorder failed: {0}")]
    Recorder(String),
}

/// A specular velocity jump at a boundary point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionEvent {
    pub t: f64,
    pub id: u64,
    pub x: Vec<f64>,
    pub v_minus: Vec<f64>,
    pub v_plus: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    EventDriven,
    FoldHalfSpace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub max_reflections_per_step: usize,
    pub backend: Backend,
    /// Reuse the end-of-step field for the next step's first kick instead of
    /// recomputing it.
    pub frozen_field: bool,
}

impl StepperConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            max_reflections_per_step: 8,
            backend: Backend::EventDriven,
            frozen_field: true,
        }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(FlowError::InvalidConfig("dt must be > 0".into()));
        }
        if self.max_reflections_per_step < 1 {
            return Err(FlowError::InvalidConfig("max_reflections_per_step must be >= 1".into()));
        }
        Ok(())
    }
}

/// Source of the acceleration acting on an ensemble at a given time.
pub trait ForceField: Sync {
    /// Flat `N*d` accelerations at the particles of `e` at time `t`. Dead
    /// particles receive zero.
    fn forces(&self, e: &Ensemble, t: f64) -> Vec<f64>;
}

/// Field generated by the ensemble itself.
#[derive(Debug, Clone, Copy)]
pub struct SelfConsistent(pub FieldModel);

impl ForceField for SelfConsistent {
    fn forces(&self, e: &Ensemble, _t: f64) -> Vec<f64> {
        field_batch(&self.0, e)
    }
}

/// Constant acceleration, used for closed-form tests.
#[derive(Debug, Clone)]
pub struct Uniform(pub Vec<f64>);

impl ForceField for Uniform {
    fn forces(&self, e: &Ensemble, _t: f64) -> Vec<f64> {
        let mut out = vec![0.0; e.len() * e.dim()];
        for (i, c) in out.chunks_mut(e.dim()).enumerate() {
            if e.is_alive(i) {
                c.copy_from_slice(&self.0);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NoField;

impl ForceField for NoField {
    fn forces(&self, e: &Ensemble, _t: f64) -> Vec<f64> {
        vec![0.0; e.len() * e.dim()]
    }
}

/// Field generated by a recorded sequence of snapshots on the grid
/// `t_k = k dt`; times past the end use the last snapshot.
#[derive(Debug, Clone)]
pub struct HistoryField {
    pub model: FieldModel,
    pub history: Vec<Ensemble>,
    pub dt: f64,
}

impl HistoryField {
    fn snapshot_at(&self, t: f64) -> &Ensemble {
        let k = (t / self.dt).round().max(0.0) as usize;
        &self.history[k.min(self.history.len() - 1)]
    }
}

impl ForceField for HistoryField {
    fn forces(&self, e: &Ensemble, t: f64) -> Vec<f64> {
        let src = self.snapshot_at(t);
        let d = e.dim();
        let mut out = vec![0.0; e.len() * d];
        out.par_chunks_mut(d).enumerate().for_each(|(i, c)| {
            if e.is_alive(i) {
                c.copy_from_slice(&field_at(&self.model, src, e.pos(i)));
            }
        });
        out
    }
}

/// Relative tolerance of the crossing search.
const CROSSING_TOL: f64 = 1e-13;
/// Escape radius (relative to the domain scale) marking a particle as dead.
const BLOWUP_RADIUS: f64 = 1e12;

/// Straight drift from `x_enter` over `dt_remaining` with specular
/// reflections at every boundary hit.
///
/// Returns the exit position, exit velocity and the events in time order.
/// Errors with `NoCrossing` if the first segment stays inside the domain.
pub fn handle_reflection(
    x_enter: &[f64],
    v: &[f64],
    t_enter: f64,
    dt_remaining: f64,
    domain: &Domain,
) -> Result<(Vec<f64>, Vec<f64>, Vec<ReflectionEvent>), FlowError> {
    let end: Vec<f64> = x_enter.iter().zip(v).map(|(x, u)| x + u * dt_remaining).collect();
    if domain.signed_distance(&end) >= 0.0 {
        return Err(FlowError::NoCrossing);
    }
    drift(x_enter, v, t_enter, dt_remaining, domain, 0, usize::MAX)
}

fn drift(
    x0: &[f64],
    v0: &[f64],
    t0: f64,
    tau: f64,
    domain: &Domain,
    id: u64,
    max_events: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<ReflectionEvent>), FlowError> {
    let d = x0.len();
    let scale = domain.scale();
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut t = t0;
    let mut rest = tau;
    let mut events = Vec::new();
    let mut end = vec![0.0; d];
    loop {
        for k in 0..d {
            end[k] = x[k] + v[k] * rest;
        }
        if domain.signed_distance(&end) >= 0.0 {
            return Ok((end, v, events));
        }
        // bisection for the last inside time along the segment
        let mut lo = 0.0;
        let mut hi = rest;
        let mut probe = vec![0.0; d];
        let mut s = 0.5 * rest;
        for _ in 0..200 {
            s = 0.5 * (lo + hi);
            for k in 0..d {
                probe[k] = x[k] + v[k] * s;
            }
            let f = domain.signed_distance(&probe);
            if f.abs() <= CROSSING_TOL * scale || hi - lo <= f64::EPSILON * rest {
                break;
            }
            if f > 0.0 {
                lo = s;
            } else {
                hi = s;
            }
        }
        for k in 0..d {
            probe[k] = x[k] + v[k] * s;
        }
        let hit = domain.project(&probe);
        let n = domain.inward_normal(&hit);
        if is_grazing(&n, &v) {
            // tangential hit: no jump; keep the particle on the closure
            let clamped = if domain.signed_distance(&end) < 0.0 {
                domain.project(&end)
            } else {
                end.clone()
            };
            return Ok((clamped, v, events));
        }
        if events.len() >= max_events {
            return Err(FlowError::ReflectionOverflow {
                id,
                t: t0,
                max: max_events,
            });
        }
        let v_plus = reflect_about(&n, &v);
        events.push(ReflectionEvent {
            t: t + s,
            id,
            x: hit.clone(),
            v_minus: v.clone(),
            v_plus: v_plus.clone(),
        });
        x = hit;
        v = v_plus;
        t += s;
        rest -= s;
        if rest <= 0.0 {
            return Ok((x, v, events));
        }
    }
}

fn kick(e: &mut Ensemble, acc: &[f64], h: f64) {
    let d = e.dim();
    let alive: Vec<bool> = (0..e.len()).map(|i| e.is_alive(i)).collect();
    let (_, v) = e.state_mut();
    v.par_chunks_mut(d)
        .zip(acc.par_chunks(d))
        .enumerate()
        .for_each(|(i, (vi, ai))| {
            if alive[i] {
                for k in 0..d {
                    vi[k] += h * ai[k];
                }
            }
        });
}

fn drift_all(e: &mut Ensemble, t: f64, h: f64, cfg: &StepperConfig) -> Result<Vec<ReflectionEvent>, FlowError> {
    let d = e.dim();
    let domain = e.domain();
    let ids: Vec<u64> = e.ids().to_vec();
    let alive: Vec<bool> = (0..e.len()).map(|i| e.is_alive(i)).collect();
    let reflect = cfg.backend == Backend::EventDriven;
    let max = cfg.max_reflections_per_step;
    let (x, v) = e.state_mut();
    let per: Vec<Result<Vec<ReflectionEvent>, FlowError>> = x
        .par_chunks_mut(d)
        .zip(v.par_chunks_mut(d))
        .enumerate()
        .map(|(i, (xi, vi))| {
            if !alive[i] {
                return Ok(Vec::new());
            }
            if !reflect {
                for k in 0..d {
                    xi[k] += vi[k] * h;
                }
                return Ok(Vec::new());
            }
            let (xn, vn, ev) = drift(xi, vi, t, h, &domain, ids[i], max)?;
            xi.copy_from_slice(&xn);
            vi.copy_from_slice(&vn);
            Ok(ev)
        })
        .collect();
    let mut events = Vec::new();
    for r in per {
        events.extend(r?);
    }
    events.sort_by(|a, b| a.id.cmp(&b.id).then(a.t.total_cmp(&b.t)));
    Ok(events)
}

fn mark_blowups(e: &mut Ensemble, t: f64) {
    let limit = BLOWUP_RADIUS * e.domain().scale();
    let lim2 = limit * limit;
    for i in 0..e.len() {
        if !e.is_alive(i) {
            continue;
        }
        let (x2, v2) = (norm_sq(e.pos(i)), norm_sq(e.vel(i)));
        if !(x2 <= lim2 && v2 <= lim2) {
            e.mark_dead(i, t);
        }
    }
}

fn check_frame(e: &Ensemble, cfg: &StepperConfig) -> Result<(), FlowError> {
    match (cfg.backend, e.frame()) {
        (Backend::EventDriven, Frame::ProblemA) => Ok(()),
        (Backend::FoldHalfSpace, Frame::ProblemB) => {
            if matches!(e.domain().kind(), DomainKind::HalfSpace) {
                Ok(())
            } else {
                Err(FlowError::FrameMismatch("fold backend needs a half-space".into()))
            }
        }
        (Backend::EventDriven, Frame::ProblemB) => Err(FlowError::FrameMismatch(
            "event-driven stepping expects a Problem A ensemble".into(),
        )),
        (Backend::FoldHalfSpace, Frame::ProblemA) => Err(FlowError::FrameMismatch(
            "fold stepping expects a Problem B ensemble".into(),
        )),
    }
}

/// Stateful stepper caching the end-of-step field.
pub struct Stepper<'a> {
    field: &'a dyn ForceField,
    cfg: StepperConfig,
    cached: Option<(f64, Vec<f64>)>,
}

impl<'a> Stepper<'a> {
    pub fn new(field: &'a dyn ForceField, cfg: StepperConfig) -> Result<Self, FlowError> {
        cfg.validate()?;
        Ok(Self {
            field,
            cfg,
            cached: None,
        })
    }

    /// Advances `e` in place from `e.time()` by `h`, returning the events.
    pub fn advance(&mut self, e: &mut Ensemble, h: f64) -> Result<Vec<ReflectionEvent>, FlowError> {
        check_frame(e, &self.cfg)?;
        let t = e.time();
        let start = match self.cached.take() {
            Some((tc, f)) if self.cfg.frozen_field && tc == t && f.len() == e.len() * e.dim() => f,
            _ => self.field.forces(e, t),
        };
        kick(e, &start, 0.5 * h);
        let events = drift_all(e, t, h, &self.cfg)?;
        let t_new = t + h;
        e.set_time(t_new);
        mark_blowups(e, t_new);
        let end = self.field.forces(e, t_new);
        kick(e, &end, 0.5 * h);
        mark_blowups(e, t_new);
        self.cached = Some((t_new, end));
        Ok(events)
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }
}

/// One kick-drift-kick step of length `cfg.dt` on a copy of `e`.
pub fn step(
    e: &Ensemble,
    field: &dyn ForceField,
    cfg: &StepperConfig,
) -> Result<(Ensemble, Vec<ReflectionEvent>), FlowError> {
    let mut out = e.clone();
    let mut s = Stepper::new(field, *cfg)?;
    let ev = s.advance(&mut out, cfg.dt)?;
    Ok((out, ev))
}

/// One whole-space step of a mirror-symmetric Problem B ensemble.
pub fn step_fold_halfspace(e: &Ensemble, field: &dyn ForceField, cfg: &StepperConfig) -> Result<Ensemble, FlowError> {
    let cfg = cfg.with_backend(Backend::FoldHalfSpace);
    step(e, field, &cfg).map(|(out, _)| out)
}

/// Folded half-space view of a Problem B ensemble: `x_1 -> |x_1|`,
/// `v_1 -> sgn(x_1) v_1`, one particle per mirror pair.
pub fn fold(e: &Ensemble) -> Result<Ensemble, FlowError> {
    e.restrict().map_err(|err| FlowError::FrameMismatch(err.to_string()))
}

/// Observer of a run.
pub trait Recorder {
    /// Snapshot every `cadence` steps (step 0 and the final step always).
    fn cadence(&self) -> usize {
        1
    }
    fn on_sample(&mut self, step: usize, e: &Ensemble) -> Result<(), FlowError>;
    fn on_events(&mut self, _events: &[ReflectionEvent]) -> Result<(), FlowError> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub final_state: Ensemble,
    pub events: Vec<ReflectionEvent>,
    pub steps: usize,
    pub dt: f64,
    pub t_end: f64,
}

/// Number of steps covering `[0, t_end]` and the length of the last one.
pub fn step_plan(dt: f64, t_end: f64) -> (usize, f64) {
    if t_end <= 0.0 {
        return (0, 0.0);
    }
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let last = t_end - (n - 1) as f64 * dt;
    (n, last)
}

/// Fixed-step integration over `[t0, t0 + t_end]`.
pub fn integrate(
    e0: &Ensemble,
    field: &dyn ForceField,
    cfg: &StepperConfig,
    t_end: f64,
    recorders: &mut [&mut dyn Recorder],
) -> Result<RunRecord, FlowError> {
    cfg.validate()?;
    check_frame(e0, cfg)?;
    if t_end.is_nan() || t_end < 0.0 {
        return Err(FlowError::InvalidConfig("t_end must be >= 0".into()));
    }
    let mut e = e0.clone();
    let t0 = e0.time();
    let (n, last) = step_plan(cfg.dt, t_end);
    let mut stepper = Stepper::new(field, *cfg)?;
    let mut all_events = Vec::new();
    for r in recorders.iter_mut() {
        r.on_sample(0, &e)?;
    }
    for k in 1..=n {
        let h = if k == n { last } else { cfg.dt };
        let events = stepper.advance(&mut e, h)?;
        // pin the clock to the grid to avoid accumulated rounding
        e.set_time(if k == n { t0 + t_end } else { t0 + k as f64 * cfg.dt });
        if let Some((tc, _)) = stepper.cached.as_mut() {
            *tc = e.time();
        }
        for r in recorders.iter_mut() {
            r.on_events(&events)?;
            if k % r.cadence().max(1) == 0 || k == n {
                r.on_sample(k, &e)?;
            }
        }
        all_events.extend(events);
    }
    Ok(RunRecord {
        final_state: e,
        events: all_events,
        steps: n,
        dt: cfg.dt,
        t_end,
    })
}

/// Keeps every sampled snapshot.
#[derive(Debug, Default)]
pub struct SnapshotRecorder {
    pub every: usize,
    pub snapshots: Vec<Ensemble>,
}

impl SnapshotRecorder {
    pub fn new(every: usize) -> Self {
        Self {
            every,
            snapshots: Vec::new(),
        }
    }
}

impl Recorder for SnapshotRecorder {
    fn cadence(&self) -> usize {
        self.every.max(1)
    }
    fn on_sample(&mut self, _step: usize, e: &Ensemble) -> Result<(), FlowError> {
        self.snapshots.push(e.clone());
        Ok(())
    }
}

/// A recorded path with its reflection events and alive window.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub events: Vec<ReflectionEvent>,
    pub t_minus: f64,
    pub t_plus: Option<f64>,
}

/// Records the trajectories of every particle at every step.
#[derive(Debug, Default)]
pub struct TrajectoryRecorder {
    pub trajectories: Vec<Trajectory>,
}

impl Recorder for TrajectoryRecorder {
    fn on_sample(&mut self, _step: usize, e: &Ensemble) -> Result<(), FlowError> {
        if self.trajectories.is_empty() {
            self.trajectories = (0..e.len())
                .map(|i| Trajectory {
                    id: e.id(i),
                    times: Vec::new(),
                    x: Vec::new(),
                    v: Vec::new(),
                    events: Vec::new(),
                    t_minus: e.time(),
                    t_plus: None,
                })
                .collect();
        }
        for (i, tr) in self.trajectories.iter_mut().enumerate() {
            if tr.t_plus.is_some() {
                continue;
            }
            if let Some(td) = e.dead_at(i) {
                tr.t_plus = Some(td);
                continue;
            }
            tr.times.push(e.time());
            tr.x.push(e.pos(i).to_vec());
            tr.v.push(e.vel(i).to_vec());
        }
        Ok(())
    }

    fn on_events(&mut self, events: &[ReflectionEvent]) -> Result<(), FlowError> {
        for ev in events {
            if let Some(tr) = self.trajectories.iter_mut().find(|t| t.id == ev.id) {
                tr.events.push(ev.clone());
            }
        }
        Ok(())
    }
}

/// Speed of the fastest live particle; handy for choosing `dt`.
pub fn max_speed(e: &Ensemble) -> f64 {
    (0..e.len())
        .filter(|&i| e.is_alive(i))
        .map(|i| norm(e.vel(i)))
        .fold(0.0, f64::max)
}

//! Run configuration: a sectioned `key = value` file in TOML syntax.
//!
//! ```toml
//! [domain]
//! kind = "halfspace"        # or "ball" (requires radius)
//! dim = 3
//!
//! [initial]
//! kind = "uniform_box"      # uniform_box | dirac | maxwellian | fixture
//! n = 64
//! mass = 1.0
//! x_lo = [0.5, -1.0, -1.0]
//! x_hi = [1.5, 1.0, 1.0]
//! v_lo = [-0.1, -0.1, -0.1]
//! v_hi = [0.1, 0.1, 0.1]
//!
//! [regularization]
//! zeta = 0.1
//! delta = 0.05
//!
//! [stepper]
//! dt = 1e-3
//! t_end = 1.0
//! ```
//!
//! Unknown sections or keys are errors. All quantities are dimensionless.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{sample_initial, Ensemble, Frame, InitialCondition};
use crate::fields::{Damping, FieldModel, GreenKind, RadialKernel, RegularizationParams};
use crate::flow::{Backend, StepperConfig};
use crate::geometry::Domain;

use super::fixtures::fixture_ensemble;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainName {
    Halfspace,
    Ball,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub kind: DomainName,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    UniformBox,
    Dirac,
    Maxwellian,
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameName {
    A,
    B,
}

fn default_mass() -> f64 {
    1.0
}

fn default_frame() -> FrameName {
    FrameName::A
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    /// Problem A samples in the domain; Problem B symmetrizes the sample.
    #[serde(default = "default_frame")]
    pub frame: FrameName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    /// Cut Green function of the domain with the boundary cutoff.
    Regularized,
    /// Softened whole-space kernel with the smoothed sign (Problem B only).
    ProblemB,
    /// Softened half-space image kernel without damping.
    HalfspaceA,
    /// Bare whole-space kernel, no damping.
    WholeSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSection {
    #[serde(default = "RegularizationSection::default_model")]
    pub model: ModelName,
    #[serde(default = "RegularizationSection::default_eps")]
    pub eps_mollify: f64,
    #[serde(default = "RegularizationSection::default_r_sign")]
    pub r_sign: f64,
    #[serde(default = "RegularizationSection::default_zeta")]
    pub zeta: f64,
    #[serde(default = "RegularizationSection::default_delta")]
    pub delta: f64,
}

impl RegularizationSection {
    fn default_model() -> ModelName {
        ModelName::Regularized
    }
    fn default_eps() -> f64 {
        0.01
    }
    fn default_r_sign() -> f64 {
        0.1
    }
    fn default_zeta() -> f64 {
        0.1
    }
    fn default_delta() -> f64 {
        0.05
    }
}

impl Default for RegularizationSection {
    fn default() -> Self {
        Self {
            model: Self::default_model(),
            eps_mollify: Self::default_eps(),
            r_sign: Self::default_r_sign(),
            zeta: Self::default_zeta(),
            delta: Self::default_delta(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendName {
    EventDriven,
    FoldHalfspace,
}

fn default_max_reflections() -> usize {
    8
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_max_reflections")]
    pub max_reflections_per_step: usize,
    #[serde(default = "StepperSection::default_backend")]
    pub backend: BackendName,
    #[serde(default = "default_true")]
    pub frozen_field: bool,
}

impl StepperSection {
    fn default_backend() -> BackendName {
        BackendName::EventDriven
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "OutputSection::default_dir")]
    pub dir: String,
    #[serde(default = "OutputSection::default_snapshot")]
    pub cadence_snapshot: usize,
    #[serde(default = "OutputSection::default_one")]
    pub cadence_ledger: usize,
    #[serde(default = "OutputSection::default_phi")]
    pub cadence_phi: usize,
    /// Run a perturbed twin and emit the separation functional.
    #[serde(default)]
    pub phi: bool,
    #[serde(default = "OutputSection::default_jitter")]
    pub phi_jitter: f64,
}

impl OutputSection {
    fn default_dir() -> String {
        "run".into()
    }
    fn default_snapshot() -> usize {
        100
    }
    fn default_one() -> usize {
        1
    }
    fn default_phi() -> usize {
        10
    }
    fn default_jitter() -> f64 {
        1e-6
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: Self::default_dir(),
            cadence_snapshot: Self::default_snapshot(),
            cadence_ledger: Self::default_one(),
            cadence_phi: Self::default_phi(),
            phi: false,
            phi_jitter: Self::default_jitter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core. Never affects results.
    #[serde(default)]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    pub t0: f64,
    #[serde(default = "PicardSection::default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub tol: f64,
    #[serde(default)]
    pub w1_check: bool,
}

impl PicardSection {
    fn default_n_max() -> usize {
        8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub regularization: RegularizationSection,
    pub stepper: StepperSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard: Option<PicardSection>,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ConfigError::Parse {
            line,
            col,
            message: e.message().to_string(),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation(msg.into())
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn domain(&self) -> Result<Domain, ConfigError> {
        let d = self.domain.dim;
        match self.domain.kind {
            DomainName::Halfspace => Domain::half_space(d),
            DomainName::Ball => {
                let r = self
                    .domain
                    .radius
                    .ok_or_else(|| invalid("ball domain needs a radius"))?;
                Domain::ball(d, r)
            }
        }
        .map_err(|e| invalid(e.to_string()))
    }

    pub fn params(&self) -> Result<RegularizationParams, ConfigError> {
        let r = &self.regularization;
        RegularizationParams::new(r.eps_mollify, r.r_sign, r.zeta, r.delta).map_err(|e| invalid(e.to_string()))
    }

    pub fn frame(&self) -> Frame {
        match self.initial.frame {
            FrameName::A => Frame::ProblemA,
            FrameName::B => Frame::ProblemB,
        }
    }

    pub fn stepper(&self) -> StepperConfig {
        let s = &self.stepper;
        StepperConfig {
            dt: s.dt,
            max_reflections_per_step: s.max_reflections_per_step,
            backend: match s.backend {
                BackendName::EventDriven => Backend::EventDriven,
                BackendName::FoldHalfspace => Backend::FoldHalfSpace,
            },
            frozen_field: s.frozen_field,
        }
    }

    /// Field model in the configured frame.
    pub fn model(&self) -> Result<FieldModel, ConfigError> {
        self.model_for(self.frame())
    }

    pub fn model_for(&self, frame: Frame) -> Result<FieldModel, ConfigError> {
        let dom = self.domain()?;
        let p = self.params()?;
        let m = match self.regularization.model {
            ModelName::Regularized => FieldModel::regularized(dom, &p).for_frame(frame),
            ModelName::HalfspaceA => FieldModel::halfspace_a(dom, &p).for_frame(frame),
            ModelName::ProblemB => FieldModel::problem_b(dom, &p),
            ModelName::WholeSpace => FieldModel {
                domain: dom,
                kind: GreenKind::WholeSpace,
                kernel: RadialKernel::BARE,
                damping: Damping::None,
            },
        };
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let dom = self.domain()?;
        let p = self.params()?;
        if self.regularization.model == ModelName::Regularized {
            p.validate_for(&dom).map_err(|e| invalid(e.to_string()))?;
        }
        self.stepper().validate().map_err(|e| invalid(e.to_string()))?;
        if !(self.stepper.t_end.is_finite() && self.stepper.t_end >= 0.0) {
            return Err(invalid("t_end must be >= 0"));
        }
        let b_frame = self.initial.frame == FrameName::B;
        if b_frame && self.domain.kind != DomainName::Halfspace {
            return Err(invalid("frame B requires a half-space domain"));
        }
        if self.stepper.backend == BackendName::FoldHalfspace && !b_frame {
            return Err(invalid("fold_halfspace backend requires frame B"));
        }
        if self.regularization.model == ModelName::ProblemB && !b_frame {
            return Err(invalid("problem_b model requires frame B"));
        }
        let o = &self.output;
        if o.cadence_snapshot == 0 || o.cadence_ledger == 0 || o.cadence_phi == 0 {
            return Err(invalid("cadences must be >= 1"));
        }
        if o.phi && !(o.phi_jitter > 0.0) {
            return Err(invalid("phi_jitter must be > 0"));
        }
        if let Some(pc) = &self.picard {
            if !(pc.t0 > 0.0) {
                return Err(invalid("picard t0 must be > 0"));
            }
            if pc.n_max == 0 {
                return Err(invalid("picard n_max must be >= 1"));
            }
        }
        self.initial_condition(&dom).map(|_| ())
    }

    fn initial_condition(&self, dom: &Domain) -> Result<Option<InitialCondition>, ConfigError> {
        let i = &self.initial;
        let need_vec = |v: &Option<Vec<f64>>, name: &str| -> Result<Vec<f64>, ConfigError> {
            let v = v
                .clone()
                .ok_or_else(|| invalid(format!("initial.{name} is required")))?;
            if v.len() != dom.dim() {
                return Err(invalid(format!("initial.{name} must have {} entries", dom.dim())));
            }
            Ok(v)
        };
        let n = || i.n.ok_or_else(|| invalid("initial.n is required"));
        let ic = match i.kind {
            InitialKind::UniformBox => InitialCondition::UniformBox {
                x_lo: need_vec(&i.x_lo, "x_lo")?,
                x_hi: need_vec(&i.x_hi, "x_hi")?,
                v_lo: need_vec(&i.v_lo, "v_lo")?,
                v_hi: need_vec(&i.v_hi, "v_hi")?,
                n: n()?,
                mass: i.mass,
            },
            InitialKind::Dirac => InitialCondition::Dirac {
                x0: need_vec(&i.x0, "x0")?,
                v0: need_vec(&i.v0, "v0")?,
                n: n()?,
                mass: i.mass,
            },
            InitialKind::Maxwellian => InitialCondition::Maxwellian {
                x_lo: need_vec(&i.x_lo, "x_lo")?,
                x_hi: need_vec(&i.x_hi, "x_hi")?,
                drift: need_vec(&i.drift, "drift")?,
                temperature: i
                    .temperature
                    .ok_or_else(|| invalid("initial.temperature is required"))?,
                n: n()?,
                mass: i.mass,
            },
            InitialKind::Fixture => {
                let name = i
                    .fixture
                    .as_deref()
                    .ok_or_else(|| invalid("initial.fixture is required"))?;
                fixture_ensemble(name, *dom).ok_or_else(|| invalid(format!("unknown fixture {name:?}")))?;
                return Ok(None);
            }
        };
        Ok(Some(ic))
    }

    /// The initial ensemble in the configured frame, at `t = 0`.
    pub fn initial_ensemble(&self) -> Result<Ensemble, ConfigError> {
        let dom = self.domain()?;
        let a = match self.initial_condition(&dom)? {
            Some(ic) => sample_initial(&ic, dom, self.run.seed).map_err(|e| invalid(e.to_string()))?,
            None => {
                let name = self.initial.fixture.as_deref().unwrap_or_default();
                fixture_ensemble(name, dom).ok_or_else(|| invalid(format!("unknown fixture {name:?}")))?
            }
        };
        match self.frame() {
            Frame::ProblemA => Ok(a),
            Frame::ProblemB => a.symmetrize().map_err(|e| invalid(e.to_string())),
        }
    }
}

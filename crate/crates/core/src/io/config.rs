use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Grid2D, GridError, ScalarField};
use crate::model::{regularize_initial_rho, ModelError, NewtonOptions, PotentialMode, SimState};
use crate::params::{
    validate_assumptions, AssumptionConstants, ModelParams, ParamsError, ViscosityLaw,
};
use crate::potentials::FloryHuggins;
use crate::stepper::{default_stab_s1, default_stab_s2, StepConfig, StepError, SINGULAR_RHO_CLIP};

use super::snapshot::{read_snapshot, SnapshotError};

/// Samples used when a configuration is validated.
pub const VALIDATION_SAMPLES: usize = 2000;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("assumption check failed: {0}")]
    Assumption(String),
    #[error("mean of rho0 = {mean} must lie in (0, 1): a pure state admits no mixing")]
    PureState { mean: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("initial snapshot: {0}")]
    Snapshot(#[from] SnapshotError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    #[serde(default)]
    pub penalty_omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub theta1: f64,
    #[serde(default)]
    pub theta2: f64,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
}

fn default_eps1() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViscosityKindName {
    Constant,
    SmoothBlend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscositySection {
    pub kind: ViscosityKindName,
    pub nu1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_ceil: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionsSection {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub l1: f64,
    pub growth_c: f64,
}

impl Default for AssumptionsSection {
    fn default() -> Self {
        let a = AssumptionConstants::default();
        Self {
            c0: a.c0,
            c1: a.c1,
            c2: a.c2,
            c3: a.c3,
            c4: a.c4,
            l1: a.l1,
            growth_c: a.growth_c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialModeName {
    Singular,
    Regularized,
}

impl From<PotentialModeName> for PotentialMode {
    fn from(m: PotentialModeName) -> Self {
        match m {
            PotentialModeName::Singular => PotentialMode::Singular,
            PotentialModeName::Regularized => PotentialMode::Regularized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSection {
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stab_s1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stab_s2: Option<f64>,
    /// Omitted: default clamp. Zero: clamping disabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_clip: Option<f64>,
    #[serde(default)]
    pub ns_enabled: bool,
    pub potential_mode: PotentialModeName,
    #[serde(default = "default_cfl")]
    pub cfl_limit: f64,
    #[serde(default = "default_true")]
    pub korteweg_mean_subtract: bool,
}

fn default_cfl() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    #[serde(default = "default_every")]
    pub output_every: usize,
    /// Zero disables snapshots and renders except the final one.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_mass_tol")]
    pub mass_tol: f64,
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
    /// Largest accepted `(dE + dt D) / (dt D)` per step.
    #[serde(default = "default_energy_law_tol")]
    pub energy_law_tol: f64,
}

fn default_every() -> usize {
    10
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_mass_tol() -> f64 {
    1e-12
}
fn default_energy_tol() -> f64 {
    1e-10
}
fn default_energy_law_tol() -> f64 {
    0.5
}

/// Initial field presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// Uniform white noise around `mean`, optionally projected onto the
    /// lowest `modes` cosine modes.
    Spinodal {
        mean: f64,
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        modes: Option<usize>,
    },
    /// `low` outside and `high` inside a vertical stripe of the given width
    /// centered in x, with tanh transitions of length `interface`.
    TanhStripe {
        low: f64,
        high: f64,
        width: f64,
        interface: f64,
    },
    /// `mean + amplitude cos(kx pi x / lx) cos(ky pi y / ly)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        kx: u32,
        ky: u32,
    },
    /// Field taken from a snapshot file (relative paths resolve against the
    /// config file).
    File {
        path: PathBuf,
    },
}

impl FieldSpec {
    /// Fields that do not depend on the grid resolution beyond sampling.
    pub fn is_analytic(&self) -> bool {
        matches!(
            self,
            FieldSpec::Constant { .. } | FieldSpec::TanhStripe { .. } | FieldSpec::Cosine { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub phi: FieldSpec,
    pub rho: FieldSpec,
    /// Cutoff level for the elliptic regularization of `rho0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularize_k: Option<f64>,
    /// Full state (including velocity) to start from; overrides phi/rho.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub model: ModelSection,
    pub potential: PotentialSection,
    pub viscosity: ViscositySection,
    #[serde(default)]
    pub assumptions: AssumptionsSection,
    pub stepper: StepperSection,
    pub run: RunSection,
    pub initial: InitialSection,
    /// Directory used to resolve relative paths; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |p| before.len() - p - 1)
        + 1;
    (line, column)
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse {
                path: origin.to_path_buf(),
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn grid(&self) -> Result<Grid2D, ConfigError> {
        Ok(Grid2D::new(
            self.grid.nx,
            self.grid.ny,
            self.grid.lx,
            self.grid.ly,
        )?)
    }

    pub fn model_params(&self) -> Result<ModelParams, ConfigError> {
        let v = &self.viscosity;
        let viscosity = match v.kind {
            ViscosityKindName::Constant => {
                let mut law = ViscosityLaw::constant(v.nu1);
                law.nu_floor = v.nu_floor.unwrap_or(v.nu1);
                law.nu_ceil = v.nu_ceil.unwrap_or(v.nu1);
                law
            }
            ViscosityKindName::SmoothBlend => {
                let nu2 = v.nu2.ok_or_else(|| {
                    ConfigError::Invalid("viscosity.nu2 is required for smooth_blend".into())
                })?;
                let mut law = ViscosityLaw::smooth_blend(v.nu1, nu2);
                if let Some(f) = v.nu_floor {
                    law.nu_floor = f;
                }
                if let Some(c) = v.nu_ceil {
                    law.nu_ceil = c;
                }
                law
            }
        };
        let a = &self.assumptions;
        let params = ModelParams {
            alpha: self.model.alpha,
            beta: self.model.beta,
            theta: self.model.theta,
            viscosity,
            potential: FloryHuggins {
                theta1: self.potential.theta1,
                theta2: self.potential.theta2,
                eps1: self.potential.eps1,
            },
            assumptions: AssumptionConstants {
                c0: a.c0,
                c1: a.c1,
                c2: a.c2,
                c3: a.c3,
                c4: a.c4,
                l1: a.l1,
                growth_c: a.growth_c,
            },
            penalty_omega: self.model.penalty_omega,
            regularization_eps: self.model.regularization_eps,
        };
        params.check()?;
        Ok(params)
    }

    /// Fully validated parameters: structural checks plus the sampled
    /// assumption checks.
    pub fn validated_params(&self) -> Result<ModelParams, ConfigError> {
        let params = self.model_params()?;
        let report = validate_assumptions(&params, VALIDATION_SAMPLES)?;
        if let Some(c) = report.first_failure() {
            return Err(ConfigError::Assumption(format!(
                "{} violated (worst margin {:e}): {}",
                c.assumption, c.worst_margin, c.detail
            )));
        }
        Ok(params)
    }

    fn field(
        &self,
        grid: &Grid2D,
        spec: &FieldSpec,
        which: Which,
    ) -> Result<ScalarField, ConfigError> {
        Ok(match spec {
            FieldSpec::Constant { value } => grid.constant(*value),
            FieldSpec::Spinodal {
                mean,
                amplitude,
                seed,
                modes,
            } => {
                let seed = seed.unwrap_or(self.run.seed.wrapping_add(which as u64));
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut f = grid.constant(*mean);
                if *amplitude > 0.0 {
                    for v in f.iter_mut() {
                        *v += rng.random_range(-*amplitude..=*amplitude);
                    }
                }
                if let Some(n) = modes {
                    f = grid.galerkin_project(&f, *n);
                }
                f
            }
            FieldSpec::TanhStripe {
                low,
                high,
                width,
                interface,
            } => {
                let cx = 0.5 * grid.lx();
                grid.scalar_from_fn(|x, _| {
                    let d = 0.5 * width - (x - cx).abs();
                    low + (high - low) * 0.5 * (1.0 + (d / interface).tanh())
                })
            }
            FieldSpec::Cosine {
                mean,
                amplitude,
                kx,
                ky,
            } => {
                let m = grid.cosine_mode(*kx as usize, *ky as usize);
                m.map(|v| mean + amplitude * v)
            }
            FieldSpec::File { path } => {
                let snap = read_snapshot(&self.resolve(path))?;
                if snap.grid != *grid {
                    return Err(ConfigError::Invalid(format!(
                        "snapshot {} does not match the configured grid",
                        path.display()
                    )));
                }
                match which {
                    Which::Phi => snap.phi,
                    Which::Rho => snap.rho,
                }
            }
        })
    }

    /// Build the initial state on `grid` (normally [`RunConfig::grid`]).
    pub fn initial_state_on(
        &self,
        grid: &Grid2D,
        params: &ModelParams,
    ) -> Result<SimState, ConfigError> {
        let mut state = match &self.initial.snapshot {
            Some(path) => {
                let s = read_snapshot(&self.resolve(path))?;
                if s.grid != *grid {
                    return Err(ConfigError::Invalid(format!(
                        "snapshot {} does not match the configured grid",
                        path.display()
                    )));
                }
                s
            }
            None => {
                let phi = self.field(grid, &self.initial.phi, Which::Phi)?;
                let rho = self.field(grid, &self.initial.rho, Which::Rho)?;
                SimState::new(grid.clone(), phi, rho)?
            }
        };
        if let Some(k) = self.initial.regularize_k {
            let out =
                regularize_initial_rho(grid, &state.rho, k, params, &NewtonOptions::default())?;
            state.rho = out.rho;
        }
        let mean = grid.mean(&state.rho);
        if !(mean > 0.0 && mean < 1.0) {
            return Err(ConfigError::PureState { mean });
        }
        if !state.all_finite() {
            return Err(ConfigError::Invalid("initial data is not finite".into()));
        }
        let mode: PotentialMode = self.stepper.potential_mode.into();
        if mode == PotentialMode::Singular {
            let (lo, hi) = (state.rho.min_value(), state.rho.max_value());
            if lo < 0.0 || hi > 1.0 {
                return Err(ConfigError::Invalid(format!(
                    "singular potential needs rho0 in [0, 1], got [{lo}, {hi}]"
                )));
            }
        }
        Ok(state)
    }

    pub fn initial_state(&self, params: &ModelParams) -> Result<SimState, ConfigError> {
        self.initial_state_on(&self.grid()?, params)
    }

    /// Step configuration; unset stabilization constants are sized from
    /// `state`.
    pub fn step_config(
        &self,
        params: &ModelParams,
        state: &SimState,
    ) -> Result<StepConfig, ConfigError> {
        let s = &self.stepper;
        let mode: PotentialMode = s.potential_mode.into();
        let rho_clip = match s.rho_clip {
            Some(0.0) => None,
            Some(c) => Some(c),
            None => match (mode, params.regularization_eps) {
                (PotentialMode::Singular, _) => Some(SINGULAR_RHO_CLIP),
                (PotentialMode::Regularized, Some(eps)) => Some(0.5 * eps),
                (PotentialMode::Regularized, None) => None,
            },
        };
        let cfg = StepConfig {
            dt: s.dt,
            stab_s1: s.stab_s1.unwrap_or_else(default_stab_s1),
            stab_s2: s
                .stab_s2
                .unwrap_or_else(|| default_stab_s2(params, state, mode)),
            rho_clip,
            ns_enabled: s.ns_enabled,
            potential_mode: mode,
            cfl_limit: s.cfl_limit,
            korteweg_mean_subtract: s.korteweg_mean_subtract,
        };
        cfg.check(params)?;
        Ok(cfg)
    }

    /// Checks that do not need the initial state.
    pub fn check_run_section(&self) -> Result<(), ConfigError> {
        let r = &self.run;
        if !(r.t_end > 0.0 && r.t_end.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "run.t_end = {} must be positive",
                r.t_end
            )));
        }
        if r.output_every == 0 {
            return Err(ConfigError::Invalid("run.output_every must be >= 1".into()));
        }
        for (name, v) in [
            ("run.mass_tol", r.mass_tol),
            ("run.energy_tol", r.energy_tol),
            ("run.energy_law_tol", r.energy_law_tol),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Which {
    Phi = 0,
    Rho = 1,
}

/// Read and parse a configuration file without semantic checks.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_toml_str(&text, path)
}

/// Read, parse and fully validate a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let cfg = load_config(path)?;
    cfg.check_run_section()?;
    let params = cfg.validated_params()?;
    let state = cfg.initial_state(&params)?;
    cfg.step_config(&params, &state)?;
    Ok(cfg)
}

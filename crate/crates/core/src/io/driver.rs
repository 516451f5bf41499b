//! Run loop with invariant monitors, file output, and the sweep,
//! convergence and perturbation drivers.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics::{sample, scheme_energy, stability_metrics, StabilityMetrics, TraceRecord};
use crate::grid::{Grid2D, ScalarField};
use crate::model::{energy_lower_bound, SimState};
use crate::params::ModelParams;
use crate::stepper::{refresh_caches, step, StepConfig, StepError};

use super::config::{ConfigError, PotentialModeName, RunConfig};
use super::render::write_pgm;
use super::snapshot::{write_snapshot, SnapshotError};
use super::trace::TraceWriter;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monitor {
    MassDrift,
    NonFinite,
    EnergyBelowBound,
    EnergyGrowth,
    EnergyLaw,
    Cfl,
    RhoBounds,
    Solver,
}

impl fmt::Display for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Monitor::MassDrift => "mass drift",
            Monitor::NonFinite => "NaN",
            Monitor::EnergyBelowBound => "energy below lower bound",
            Monitor::EnergyGrowth => "energy growth",
            Monitor::EnergyLaw => "energy law defect",
            Monitor::Cfl => "CFL",
            Monitor::RhoBounds => "rho bounds",
            Monitor::Solver => "solver",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorTrip {
    pub monitor: Monitor,
    pub step: usize,
    pub t: f64,
    pub detail: String,
}

impl fmt::Display for MonitorTrip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "monitor '{}' tripped at step {} (t = {}): {}",
            self.monitor, self.step, self.t, self.detail
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Trip(MonitorTrip),
    #[error("output error: {0}")]
    Io(String),
    #[error("{0}")]
    Usage(String),
}

impl DriverError {
    /// Process exit code: 2 for invariant trips, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Trip(_) => 2,
            _ => 1,
        }
    }
}

impl From<SnapshotError> for DriverError {
    fn from(e: SnapshotError) -> Self {
        DriverError::Io(e.to_string())
    }
}

impl From<std::io::Error> for DriverError {
    fn from(e: std::io::Error) -> Self {
        DriverError::Io(e.to_string())
    }
}

impl From<csv::Error> for DriverError {
    fn from(e: csv::Error) -> Self {
        DriverError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub mass: f64,
    pub energy_growth: f64,
    pub energy_law: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mass: 1e-12,
            energy_growth: 1e-10,
            energy_law: 0.5,
        }
    }
}

/// A running simulation with its monitors.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: ModelParams,
    cfg: StepConfig,
    state: SimState,
    tol: Tolerances,
    lower_bound: f64,
    mass0: (f64, f64),
    steps: usize,
    last: TraceRecord,
    total_clamp_events: usize,
    max_excursion: f64,
    min_eta: f64,
}

fn excursion(rho: &ScalarField) -> f64 {
    (-rho.min_value()).max(rho.max_value() - 1.0).max(0.0)
}

impl Simulation {
    pub fn new(
        params: ModelParams,
        cfg: StepConfig,
        mut state: SimState,
        tol: Tolerances,
    ) -> Result<Self, StepError> {
        cfg.check(&params)?;
        refresh_caches(&mut state, &params, &cfg)?;
        let g = &state.grid;
        let mass0 = (g.mean(&state.phi), g.mean(&state.rho));
        let lower_bound = energy_lower_bound(&params, g.area());
        let last = sample(&state, &params, &cfg, None, 0);
        Ok(Self {
            max_excursion: excursion(&state.rho),
            min_eta: last.separation_eta,
            params,
            cfg,
            state,
            tol,
            lower_bound,
            mass0,
            steps: 0,
            last,
            total_clamp_events: 0,
        })
    }

    pub fn from_config(c: &RunConfig) -> Result<Self, ConfigError> {
        let params = c.validated_params()?;
        let state = c.initial_state(&params)?;
        Self::from_parts(c, params, state)
    }

    fn from_parts(
        c: &RunConfig,
        params: ModelParams,
        state: SimState,
    ) -> Result<Self, ConfigError> {
        c.check_run_section()?;
        let cfg = c.step_config(&params, &state)?;
        let tol = Tolerances {
            mass: c.run.mass_tol,
            energy_growth: c.run.energy_tol,
            energy_law: c.run.energy_law_tol,
        };
        Ok(Self::new(params, cfg, state, tol)?)
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn step_config(&self) -> &StepConfig {
        &self.cfg
    }
    pub fn record(&self) -> &TraceRecord {
        &self.last
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }
    pub fn total_clamp_events(&self) -> usize {
        self.total_clamp_events
    }
    /// Largest distance of rho outside `[0, 1]` seen so far.
    pub fn max_excursion(&self) -> f64 {
        self.max_excursion
    }
    pub fn min_eta(&self) -> f64 {
        self.min_eta
    }

    /// Number of steps of size `dt` needed to reach `t_end`.
    pub fn steps_for(&self, t_end: f64) -> usize {
        ((t_end - self.state.t) / self.cfg.dt - 1e-9)
            .ceil()
            .max(0.0) as usize
    }

    fn trip(&self, monitor: Monitor, detail: String) -> DriverError {
        DriverError::Trip(MonitorTrip {
            monitor,
            step: self.steps + 1,
            t: self.state.t + self.cfg.dt,
            detail,
        })
    }

    /// One step followed by every monitor.
    pub fn advance(&mut self) -> Result<&TraceRecord, DriverError> {
        let (next, report) = match step(&self.state, &self.params, &self.cfg) {
            Ok(v) => v,
            Err(e) => {
                let monitor = match &e {
                    StepError::Cfl { .. } => Monitor::Cfl,
                    StepError::NonFinite(_) => Monitor::NonFinite,
                    StepError::RhoEscaped { .. } => Monitor::RhoBounds,
                    _ => Monitor::Solver,
                };
                return Err(self.trip(monitor, e.to_string()));
            }
        };
        let prev_e = self.last.energy.total;
        let rec = sample(
            &next,
            &self.params,
            &self.cfg,
            Some(prev_e),
            report.clamp_events,
        );
        let e = rec.energy.total;

        if !next.all_finite() || e.is_nan() || !rec.dissipation.is_finite() {
            return Err(self.trip(Monitor::NonFinite, "non-finite state or energy".into()));
        }
        if e.is_infinite() {
            return Err(self.trip(
                Monitor::RhoBounds,
                format!("rho left [0, 1]: [{}, {}]", rec.rho_min, rec.rho_max),
            ));
        }
        let dphi = (rec.mass_phi - self.mass0.0).abs();
        let drho = (rec.mass_rho - self.mass0.1).abs();
        if dphi > self.tol.mass || drho > self.tol.mass {
            return Err(self.trip(
                Monitor::MassDrift,
                format!("|d mean phi| = {dphi:e}, |d mean rho| = {drho:e}"),
            ));
        }
        if e < self.lower_bound {
            return Err(self.trip(
                Monitor::EnergyBelowBound,
                format!("E = {e} < {}", self.lower_bound),
            ));
        }
        let scale = prev_e.abs().max(e.abs()).max(1.0);
        if e - prev_e > self.tol.energy_growth * scale {
            return Err(self.trip(
                Monitor::EnergyGrowth,
                format!("E rose from {prev_e} to {e}"),
            ));
        }
        let expected = self.cfg.dt * rec.dissipation;
        if expected > 1e-12 * scale && rec.energy_residual > self.tol.energy_law * expected {
            return Err(self.trip(
                Monitor::EnergyLaw,
                format!(
                    "dE + dt D = {:e} exceeds {} of dt D = {expected:e}",
                    rec.energy_residual, self.tol.energy_law
                ),
            ));
        }

        self.state = next;
        self.steps += 1;
        self.total_clamp_events += report.clamp_events;
        self.max_excursion = self.max_excursion.max(excursion(&self.state.rho));
        self.min_eta = self.min_eta.min(rec.separation_eta);
        self.last = rec;
        Ok(&self.last)
    }
}

/// Result of a single run. A tripped monitor is reported, not raised.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<TraceRecord>,
    pub trip: Option<MonitorTrip>,
    pub simulation: Simulation,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.trip.is_some() {
            2
        } else {
            0
        }
    }
}

struct Output {
    dir: PathBuf,
    trace: TraceWriter<fs::File>,
}

impl Output {
    fn frame(&self, state: &SimState, tag: &str) -> Result<(), DriverError> {
        write_snapshot(state, &self.dir.join(format!("snap_{tag}.nschs")))?;
        write_pgm(&state.phi, &self.dir.join(format!("phi_{tag}.pgm")))?;
        write_pgm(&state.rho, &self.dir.join(format!("rho_{tag}.pgm")))?;
        Ok(())
    }
}

/// Run a configuration to `t_end`. With `out_dir`, writes `trace.csv`,
/// periodic snapshots with PGM renders, and a final frame.
pub fn run_simulation(c: &RunConfig, out_dir: Option<&Path>) -> Result<RunOutcome, DriverError> {
    let sim = Simulation::from_config(c)?;
    run_loaded(c, sim, out_dir)
}

fn run_loaded(
    c: &RunConfig,
    mut sim: Simulation,
    out_dir: Option<&Path>,
) -> Result<RunOutcome, DriverError> {
    let mut out = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(Output {
                dir: dir.to_path_buf(),
                trace: TraceWriter::create(&dir.join("trace.csv"))?,
            })
        }
        None => None,
    };
    let every = c.run.output_every;
    let snap_every = c.run.snapshot_every;
    let mut records = vec![*sim.record()];
    if let Some(o) = out.as_mut() {
        o.trace.push(sim.record())?;
        if snap_every > 0 {
            o.frame(sim.state(), &format!("{:06}", 0))?;
        }
    }
    let total = sim.steps_for(c.run.t_end);
    let mut trip = None;
    for k in 1..=total {
        match sim.advance() {
            Ok(rec) => {
                let rec = *rec;
                if k % every == 0 || k == total {
                    records.push(rec);
                    if let Some(o) = out.as_mut() {
                        o.trace.push(&rec)?;
                    }
                }
                if snap_every > 0 && k % snap_every == 0 {
                    if let Some(o) = out.as_ref() {
                        o.frame(sim.state(), &format!("{k:06}"))?;
                    }
                }
            }
            Err(DriverError::Trip(t)) => {
                trip = Some(t);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if let Some(mut o) = out {
        o.frame(sim.state(), "final")?;
        o.trace.flush()?;
    }
    Ok(RunOutcome {
        records,
        trip,
        simulation: sim,
    })
}

/// Thread pool for concurrent members, sized by `NSCHS_THREADS` when set.
pub fn thread_pool() -> rayon::ThreadPool {
    let n = std::env::var("NSCHS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool")
}

#[derive(Debug, Clone)]
pub struct SweepMember {
    pub value: f64,
    pub steps: usize,
    pub trip: Option<MonitorTrip>,
    pub max_excursion: f64,
    pub min_eta: f64,
    pub final_state: SimState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepDistance {
    pub from: f64,
    pub to: f64,
    pub phi_l2: f64,
    pub rho_l2: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub parameter: &'static str,
    pub members: Vec<SweepMember>,
    pub distances: Vec<SweepDistance>,
}

impl SweepReport {
    /// Successive trajectory distances do not grow.
    pub fn distances_decrease(&self) -> bool {
        self.distances.windows(2).all(|w| {
            let a = w[0].phi_l2.hypot(w[0].rho_l2);
            let b = w[1].phi_l2.hypot(w[1].rho_l2);
            b <= a
        })
    }

    pub fn excursions_non_increasing(&self) -> bool {
        self.members
            .windows(2)
            .all(|w| w[1].max_excursion <= w[0].max_excursion)
    }

    pub fn any_trip(&self) -> Option<&MonitorTrip> {
        self.members.iter().find_map(|m| m.trip.as_ref())
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>12} {:>8} {:>14} {:>12}  status",
            self.parameter, "steps", "max_excursion", "min_eta"
        )?;
        for m in &self.members {
            let status = match &m.trip {
                Some(t) => t.to_string(),
                None => "ok".into(),
            };
            writeln!(
                f,
                "{:>12} {:>8} {:>14.6e} {:>12.6e}  {status}",
                m.value, m.steps, m.max_excursion, m.min_eta
            )?;
        }
        for d in &self.distances {
            writeln!(
                f,
                "distance {} -> {}: phi {:.6e} rho {:.6e}",
                d.from, d.to, d.phi_l2, d.rho_l2
            )?;
        }
        if self.distances.len() > 1 {
            writeln!(f, "distances decrease: {}", self.distances_decrease())?;
            writeln!(
                f,
                "excursions non-increasing: {}",
                self.excursions_non_increasing()
            )?;
        }
        Ok(())
    }
}

fn check_decreasing(values: &[f64], name: &str) -> Result<(), DriverError> {
    if values.is_empty() {
        return Err(DriverError::Usage(format!("{name} list is empty")));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(DriverError::Usage(format!(
            "{name} values must be finite and >= 0"
        )));
    }
    if values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DriverError::Usage(format!(
            "{name} list must be strictly decreasing"
        )));
    }
    Ok(())
}

fn sweep(
    base: &RunConfig,
    values: &[f64],
    parameter: &'static str,
    apply: fn(&mut RunConfig, f64),
) -> Result<SweepReport, DriverError> {
    check_decreasing(values, parameter)?;
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            apply(&mut c, v);
            c
        })
        .collect();
    let outcomes: Vec<Result<RunOutcome, DriverError>> = thread_pool().install(|| {
        configs
            .par_iter()
            .map(|c| run_simulation(c, None))
            .collect()
    });
    let mut members = Vec::with_capacity(values.len());
    for (&value, o) in values.iter().zip(outcomes) {
        let o = o?;
        let sim = &o.simulation;
        members.push(SweepMember {
            value,
            steps: sim.steps(),
            trip: o.trip.clone(),
            max_excursion: sim.max_excursion(),
            min_eta: sim.min_eta(),
            final_state: sim.state().clone(),
        });
    }
    let distances = members
        .windows(2)
        .map(|w| {
            let g = &w[0].final_state.grid;
            let d = |a: &ScalarField, b: &ScalarField| g.l2(&a.zip_map(b, |x, y| x - y));
            SweepDistance {
                from: w[0].value,
                to: w[1].value,
                phi_l2: d(&w[0].final_state.phi, &w[1].final_state.phi),
                rho_l2: d(&w[0].final_state.rho, &w[1].final_state.rho),
            }
        })
        .collect();
    Ok(SweepReport {
        parameter,
        members,
        distances,
    })
}

/// Regularized runs for each eps of a decreasing list.
pub fn sweep_eps(base: &RunConfig, eps: &[f64]) -> Result<SweepReport, DriverError> {
    if eps.contains(&0.0) {
        return Err(DriverError::Usage("eps values must be positive".into()));
    }
    sweep(base, eps, "eps", |c, v| {
        c.model.regularization_eps = Some(v);
        c.stepper.potential_mode = PotentialModeName::Regularized;
        // the default clamp follows eps
        c.stepper.rho_clip = None;
    })
}

/// Runs for each penalty weight of a decreasing list.
pub fn sweep_omega(base: &RunConfig, omega: &[f64]) -> Result<SweepReport, DriverError> {
    sweep(base, omega, "omega", |c, v| c.model.penalty_omega = v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `(nx, difference to the next finer grid restricted to this one)`
    pub spatial: Vec<(usize, f64)>,
    pub spatial_order: f64,
    /// `(dt, difference to the run at dt / 2)`
    pub temporal: Vec<(f64, f64)>,
    pub temporal_order: f64,
}

impl ConvergenceReport {
    pub const SPATIAL_TARGET: f64 = 1.8;
    pub const TEMPORAL_TARGET: f64 = 0.9;

    pub fn passed(&self) -> bool {
        self.spatial_order >= Self::SPATIAL_TARGET && self.temporal_order >= Self::TEMPORAL_TARGET
    }
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, e) in &self.spatial {
            writeln!(f, "spatial  nx={n:<5} diff={e:.6e}")?;
        }
        writeln!(
            f,
            "spatial order {:.3} (target >= {})",
            self.spatial_order,
            Self::SPATIAL_TARGET
        )?;
        for (dt, e) in &self.temporal {
            writeln!(f, "temporal dt={dt:<10e} diff={e:.6e}")?;
        }
        writeln!(
            f,
            "temporal order {:.3} (target >= {})",
            self.temporal_order,
            Self::TEMPORAL_TARGET
        )?;
        writeln!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Average 2x2 blocks of a fine field onto the coarse grid.
pub fn restrict(coarse: &Grid2D, fine: &ScalarField) -> ScalarField {
    let mut out = coarse.zeros();
    for ((i, j), v) in out.indexed_iter_mut() {
        *v = 0.25
            * (fine[[2 * i, 2 * j]]
                + fine[[2 * i + 1, 2 * j]]
                + fine[[2 * i, 2 * j + 1]]
                + fine[[2 * i + 1, 2 * j + 1]]);
    }
    out
}

fn final_fields(c: &RunConfig) -> Result<SimState, DriverError> {
    let o = run_simulation(c, None)?;
    if let Some(t) = o.trip {
        return Err(DriverError::Trip(t));
    }
    Ok(o.simulation.state().clone())
}

fn pair_distance(
    g: &Grid2D,
    a: (&ScalarField, &ScalarField),
    b: (&ScalarField, &ScalarField),
) -> f64 {
    let dphi = g.l2(&a.0.zip_map(b.0, |x, y| x - y));
    let drho = g.l2(&a.1.zip_map(b.1, |x, y| x - y));
    dphi.hypot(drho)
}

/// Self-convergence: grids `nx, 2 nx, 4 nx` at fixed `dt`, and step sizes
/// `dt, dt/2, dt/4` on the configured grid.
pub fn converge(c: &RunConfig) -> Result<ConvergenceReport, DriverError> {
    if c.initial.snapshot.is_some() || !c.initial.phi.is_analytic() || !c.initial.rho.is_analytic()
    {
        return Err(ConfigError::Invalid(
            "converge needs resolution-independent initial data (constant, cosine or tanh_stripe)"
                .into(),
        )
        .into());
    }
    if c.initial.regularize_k.is_some() {
        return Err(ConfigError::Invalid("converge does not support regularize_k".into()).into());
    }
    c.grid()?;

    let mut configs = Vec::new();
    for f in [1, 2, 4] {
        let mut s = c.clone();
        s.grid.nx = c.grid.nx * f;
        s.grid.ny = c.grid.ny * f;
        configs.push(s);
    }
    for f in [2.0, 4.0] {
        let mut s = c.clone();
        s.stepper.dt = c.stepper.dt / f;
        configs.push(s);
    }
    let results: Vec<Result<SimState, DriverError>> =
        thread_pool().install(|| configs.par_iter().map(final_fields).collect());
    let states = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut spatial = Vec::new();
    for k in 0..2 {
        let coarse = &states[k];
        let fine = &states[k + 1];
        let g = &coarse.grid;
        let rphi = restrict(g, &fine.phi);
        let rrho = restrict(g, &fine.rho);
        spatial.push((
            g.nx(),
            pair_distance(g, (&coarse.phi, &coarse.rho), (&rphi, &rrho)),
        ));
    }
    let base = &states[0];
    let g = &base.grid;
    let temporal = vec![
        (
            c.stepper.dt,
            pair_distance(g, (&base.phi, &base.rho), (&states[3].phi, &states[3].rho)),
        ),
        (
            c.stepper.dt / 2.0,
            pair_distance(
                g,
                (&states[3].phi, &states[3].rho),
                (&states[4].phi, &states[4].rho),
            ),
        ),
    ];
    Ok(ConvergenceReport {
        spatial_order: (spatial[0].1 / spatial[1].1).log2(),
        spatial,
        temporal_order: (temporal[0].1 / temporal[1].1).log2(),
        temporal,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbReport {
    pub delta: f64,
    pub times: Vec<f64>,
    pub metrics: Vec<StabilityMetrics>,
    /// `None` when the initial metric vanishes.
    pub amplification_y: Option<f64>,
    pub amplification_z: Option<f64>,
    /// Largest `Y(t) / Y(0)` over the run.
    pub max_y_ratio: Option<f64>,
}

impl fmt::Display for PerturbReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "t,Y,Z,W,Y_velocity_proxy")?;
        for (t, m) in self.times.iter().zip(&self.metrics) {
            writeln!(f, "{t},{},{},{},{}", m.y, m.z, m.w, m.y_velocity_proxy)?;
        }
        let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.6e}"));
        writeln!(f, "delta {}", self.delta)?;
        writeln!(
            f,
            "amplification Y(t_end)/Y(0) {}",
            show(self.amplification_y)
        )?;
        writeln!(
            f,
            "amplification Z(t_end)/Z(0) {}",
            show(self.amplification_z)
        )?;
        writeln!(f, "max Y(t)/Y(0) {}", show(self.max_y_ratio))
    }
}

/// Mean-free perturbation of unit discrete L2 norm, smooth (lowest 64
/// cosine modes) and fixed by the run seed.
pub fn unit_perturbation(grid: &Grid2D, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut z = grid.zeros();
    for v in z.iter_mut() {
        *v = rng.random_range(-1.0..=1.0);
    }
    let mut z = grid.galerkin_project(&z, 64.min(grid.num_cells()));
    let m = grid.mean(&z);
    z.mapv_inplace(|v| v - m);
    let n = grid.l2(&z);
    z.scaled(1.0 / n)
}

/// Twin runs from `phi0` and `phi0 + delta * zeta`.
pub fn perturb(c: &RunConfig, delta: f64) -> Result<PerturbReport, DriverError> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(DriverError::Usage(format!("delta = {delta} must be >= 0")));
    }
    let params = c.validated_params()?;
    let base = c.initial_state(&params)?;
    let mut twin = base.clone();
    let zeta = unit_perturbation(&base.grid, c.run.seed);
    twin.phi.axpy(delta, &zeta);
    let mut a = Simulation::from_parts(c, params, base)?;
    let mut b = Simulation::from_parts(c, params, twin)?;
    // identical step configuration for both members
    b.cfg = a.cfg;
    refresh_caches(&mut b.state, &b.params, &b.cfg).map_err(ConfigError::Step)?;

    let mut times = vec![a.state().t];
    let mut metrics = vec![stability_metrics(a.state(), b.state(), &params).expect("same grid")];
    let total = a.steps_for(c.run.t_end);
    for k in 1..=total {
        let (ra, rb) = rayon::join(|| a.advance().map(|_| ()), || b.advance().map(|_| ()));
        ra?;
        rb?;
        if k % c.run.output_every == 0 || k == total {
            times.push(a.state().t);
            metrics.push(stability_metrics(a.state(), b.state(), &params).expect("same grid"));
        }
    }
    let ratio = |end: f64, start: f64| if start > 0.0 { Some(end / start) } else { None };
    let first = metrics[0];
    let last = *metrics.last().expect("at least one sample");
    let max_y = metrics.iter().map(|m| m.y).fold(0.0, f64::max);
    Ok(PerturbReport {
        delta,
        amplification_y: ratio(last.y, first.y),
        amplification_z: ratio(last.z, first.z),
        max_y_ratio: ratio(max_y, first.y),
        times,
        metrics,
    })
}

/// Initial energy report and bound, for `validate`.
pub fn describe(c: &RunConfig) -> Result<String, DriverError> {
    let sim = Simulation::from_config(c)?;
    let cfg = sim.step_config();
    let e = scheme_energy(sim.state(), sim.params(), cfg);
    let mut uncapped = *cfg;
    uncapped.dt = f64::INFINITY;
    let suggested = crate::stepper::suggest_dt(sim.state(), sim.params(), &uncapped);
    let warn = crate::model::backward_diffusion_margin(sim.params(), &sim.state().rho);
    let mut s = String::new();
    use std::fmt::Write;
    let _ = writeln!(s, "initial energy {}", e.total);
    let _ = writeln!(s, "energy lower bound {}", sim.lower_bound());
    let _ = writeln!(s, "stab_s1 {} stab_s2 {}", cfg.stab_s1, cfg.stab_s2);
    let _ = writeln!(s, "suggested dt {suggested:e} (configured {:e})", cfg.dt);
    if warn > 0.0 {
        let _ = writeln!(
            s,
            "warning: theta * rho exceeds 1 by {warn:.3e}; the phi equation has locally negative second-order diffusion"
        );
    }
    Ok(s)
}

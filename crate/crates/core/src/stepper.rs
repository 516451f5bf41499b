//! Linearly implicit, stabilized splitting: phi, then rho, then a projection
//! step for the velocity. Every implicit solve is constant-coefficient and
//! diagonal in the cosine (scalars) or sine (velocity) basis.

use crate::grid::{Grid2D, HelmholtzCoeffs, MacField, ScalarField, SpectralError};
use crate::model::{
    assemble_psi, chemical_potential_phi, korteweg_force, ModelError, PotentialMode, RhoPotential,
    SimState,
};
use crate::params::ModelParams;
use crate::potentials::{Order, QuarticPotential};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("CFL number {cfl:.3} exceeds the limit {limit}")]
    Cfl { cfl: f64, limit: f64 },
    #[error("non-finite value in {0} after the step")]
    NonFinite(&'static str),
    #[error("rho = {value} left (0, 1) at cell ({i}, {j}) with clamping disabled")]
    RhoEscaped { i: usize, j: usize, value: f64 },
    #[error("invalid step configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub stab_s1: f64,
    pub stab_s2: f64,
    /// Clamp for evaluating the singular derivative; `None` disables it.
    pub rho_clip: Option<f64>,
    pub ns_enabled: bool,
    pub potential_mode: PotentialMode,
    pub cfl_limit: f64,
    pub korteweg_mean_subtract: bool,
}

/// Default clamp when the singular potential is used directly.
pub const SINGULAR_RHO_CLIP: f64 = 1e-6;

impl StepConfig {
    /// Configuration with stabilization sized from the state.
    pub fn with_defaults(
        params: &ModelParams,
        state: &SimState,
        dt: f64,
        mode: PotentialMode,
        ns_enabled: bool,
    ) -> Self {
        let rho_clip = match (mode, params.regularization_eps) {
            (PotentialMode::Singular, _) => Some(SINGULAR_RHO_CLIP),
            (PotentialMode::Regularized, Some(eps)) => Some(0.5 * eps),
            (PotentialMode::Regularized, None) => None,
        };
        Self {
            dt,
            stab_s1: default_stab_s1(),
            stab_s2: default_stab_s2(params, state, mode),
            rho_clip,
            ns_enabled,
            potential_mode: mode,
            cfl_limit: 1.0,
            korteweg_mean_subtract: true,
        }
    }

    pub fn check(&self, params: &ModelParams) -> Result<(), StepError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(StepError::Config(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.stab_s1 >= 0.0 && self.stab_s2 >= 0.0) {
            return Err(StepError::Config(
                "stabilization constants must be >= 0".into(),
            ));
        }
        if !(self.cfl_limit > 0.0) {
            return Err(StepError::Config("cfl_limit must be positive".into()));
        }
        if let Some(c) = self.rho_clip {
            if !(c > 0.0 && c < 0.5) {
                return Err(StepError::Config(format!(
                    "rho_clip = {c} must lie in (0, 1/2)"
                )));
            }
            if let Some(eps) = params.regularization_eps {
                if c >= eps {
                    return Err(StepError::Config(format!(
                        "rho_clip = {c} must be below regularization_eps = {eps}"
                    )));
                }
            }
        }
        if self.potential_mode == PotentialMode::Regularized && params.regularization_eps.is_none()
        {
            return Err(ModelError::MissingEps.into());
        }
        Ok(())
    }
}

/// `2 max(1, max |S_phi''|)` over `[-1.2, 1.2]`.
pub fn default_stab_s1() -> f64 {
    let n = 2401;
    let m = (0..n)
        .map(|k| -1.2 + 2.4 * k as f64 / (n - 1) as f64)
        .map(|s| QuarticPotential.eval(s, Order::Second).abs())
        .fold(0.0, f64::max);
    2.0 * m.max(1.0)
}

/// `gamma2 + theta max |grad phi|^2`, plus half the largest curvature of
/// the convex bulk part over the initial surfactant range.
pub fn default_stab_s2(params: &ModelParams, state: &SimState, mode: PotentialMode) -> f64 {
    let fh = params.potential;
    let gamma2 = match params.regularized() {
        Some(r) => r.convexity_certificate().gamma2,
        None => fh.theta2.abs() + (-fh.entropy(0.5, Order::Second).expect("interior")).max(0.0),
    };
    let q_max = state.grid.cell_grad_sq(&state.phi).max_value();
    let pot = RhoPotential::for_mode(params, mode).unwrap_or(RhoPotential::Singular(fh));
    let clip = SINGULAR_RHO_CLIP;
    let curv = state
        .rho
        .iter()
        .map(|&r| {
            let r = match mode {
                PotentialMode::Singular => r.clamp(clip, 1.0 - clip),
                PotentialMode::Regularized => r,
            };
            pot.derivative(r, Order::Second).unwrap_or(0.0)
        })
        .fold(0.0, f64::max);
    gamma2 + params.theta * q_max + 0.5 * curv
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// Cells where the singular derivative was evaluated at a clamped value.
    pub clamp_events: usize,
}

/// Centered divergence-form transport `div(u f_f)`.
pub fn advect_scalar(grid: &Grid2D, u: &MacField, f: &ScalarField) -> ScalarField {
    grid.divergence(&grid.face_average(f).hadamard(u))
}

fn shift_to_mean(grid: &Grid2D, f: &mut ScalarField, target: f64) {
    let d = target - grid.mean(f);
    f.mapv_inplace(|v| v + d);
}

pub fn step_phi(
    state: &SimState,
    params: &ModelParams,
    cfg: &StepConfig,
) -> Result<ScalarField, StepError> {
    let g = &state.grid;
    let dt = cfg.dt;
    let phi = &state.phi;
    // explicit part of mu: everything but the linear terms taken implicitly
    let mut explicit = chemical_potential_phi(g, phi, &state.rho, params);
    explicit.axpy(-params.alpha, &g.biharmonic(phi));
    explicit.axpy(1.0, &g.laplacian(phi));
    explicit.axpy(-cfg.stab_s1, phi);

    let mut rhs = phi.clone();
    rhs.axpy(dt, &g.laplacian(&explicit));
    if cfg.ns_enabled {
        rhs.axpy(-dt, &advect_scalar(g, &state.u, phi));
    }
    let coeffs = HelmholtzCoeffs::new(1.0, -dt * cfg.stab_s1, dt, -dt * params.alpha);
    let mut next = g.helmholtz_solve(coeffs, &rhs)?;
    shift_to_mean(g, &mut next, g.mean(phi));
    if !next.all_finite() {
        return Err(StepError::NonFinite("phi"));
    }
    Ok(next)
}

/// Derivative of the surfactant bulk potential as used by the scheme,
/// together with the number of clamped cells.
pub(crate) fn rho_derivative(
    rho: &ScalarField,
    params: &ModelParams,
    cfg: &StepConfig,
) -> Result<(ScalarField, usize), StepError> {
    let pot = RhoPotential::for_mode(params, cfg.potential_mode)?;
    match cfg.potential_mode {
        PotentialMode::Regularized => Ok((
            rho.map(|s| pot.derivative(s, Order::First).expect("global")),
            0,
        )),
        PotentialMode::Singular => match cfg.rho_clip {
            Some(c) => {
                let clamped = rho.iter().filter(|&&v| !(v >= c && v <= 1.0 - c)).count();
                let d = rho.map(|s| {
                    let s = if s.is_nan() { s } else { s.clamp(c, 1.0 - c) };
                    pot.derivative(s, Order::First).unwrap_or(f64::NAN)
                });
                Ok((d, clamped))
            }
            None => {
                if let Some(((i, j), &value)) =
                    rho.indexed_iter().find(|(_, &v)| !(v > 0.0 && v < 1.0))
                {
                    return Err(StepError::RhoEscaped { i, j, value });
                }
                Ok((
                    rho.map(|s| pot.derivative(s, Order::First).expect("inside")),
                    0,
                ))
            }
        },
    }
}

/// Advance rho given the already advanced `phi_next`.
pub fn step_rho(
    state: &SimState,
    phi_next: &ScalarField,
    params: &ModelParams,
    cfg: &StepConfig,
) -> Result<(ScalarField, usize), StepError> {
    let g = &state.grid;
    let dt = cfg.dt;
    let rho = &state.rho;
    let (d1, clamped) = rho_derivative(rho, params, cfg)?;
    let mut explicit = d1;
    explicit.axpy(-cfg.stab_s2, rho);
    explicit.axpy(-0.5 * params.theta, &g.cell_grad_sq(phi_next));

    let mut rhs = rho.clone();
    rhs.axpy(dt, &g.laplacian(&explicit));
    if cfg.ns_enabled {
        rhs.axpy(-dt, &advect_scalar(g, &state.u, rho));
    }
    let coeffs = HelmholtzCoeffs::new(1.0, -dt * cfg.stab_s2, dt * params.beta, 0.0);
    let mut next = g.helmholtz_solve(coeffs, &rhs)?;
    shift_to_mean(g, &mut next, g.mean(rho));
    if !next.all_finite() {
        return Err(StepError::NonFinite("rho"));
    }
    Ok((next, clamped))
}

/// Cell viscosities from the law.
pub fn viscosity_field(
    grid: &Grid2D,
    phi: &ScalarField,
    rho: &ScalarField,
    params: &ModelParams,
) -> ScalarField {
    let mut nu = grid.zeros();
    for ((i, j), v) in nu.indexed_iter_mut() {
        *v = params.viscosity.eval(phi[[i, j]], rho[[i, j]]);
    }
    nu
}

/// `div(nu D u)` with `D u` the symmetric gradient; diagonal strains at
/// cells, shear strain at nodes with the node viscosity averaged from the
/// adjacent cells. Tangential ghosts are odd (no-slip).
pub fn viscous_operator(grid: &Grid2D, nu: &ScalarField, u: &MacField) -> MacField {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    // nu * D_xx and nu * D_yy at cells
    let mut sxx = grid.zeros();
    let mut syy = grid.zeros();
    for i in 0..nx {
        for j in 0..ny {
            sxx[[i, j]] = nu[[i, j]] * (u.ux[[i + 1, j]] - u.ux[[i, j]]) / hx;
            syy[[i, j]] = nu[[i, j]] * (u.uy[[i, j + 1]] - u.uy[[i, j]]) / hy;
        }
    }
    // nu * D_xy at nodes
    let mut sxy = ndarray::Array2::<f64>::zeros((nx + 1, ny + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            let dux = if i == 0 || i == nx {
                0.0
            } else {
                let below = if j == 0 {
                    -u.ux[[i, 0]]
                } else {
                    u.ux[[i, j - 1]]
                };
                let above = if j == ny {
                    -u.ux[[i, ny - 1]]
                } else {
                    u.ux[[i, j]]
                };
                (above - below) / hy
            };
            let duy = if j == 0 || j == ny {
                0.0
            } else {
                let left = if i == 0 {
                    -u.uy[[0, j]]
                } else {
                    u.uy[[i - 1, j]]
                };
                let right = if i == nx {
                    -u.uy[[nx - 1, j]]
                } else {
                    u.uy[[i, j]]
                };
                (right - left) / hx
            };
            let mut s = 0.0;
            let mut c = 0.0;
            for (ci, cj) in [
                (i.wrapping_sub(1), j.wrapping_sub(1)),
                (i, j.wrapping_sub(1)),
                (i.wrapping_sub(1), j),
                (i, j),
            ] {
                if ci < nx && cj < ny {
                    s += nu[[ci, cj]];
                    c += 1.0;
                }
            }
            sxy[[i, j]] = s / c * 0.5 * (dux + duy);
        }
    }
    let mut out = grid.zero_mac();
    for i in 1..nx {
        for j in 0..ny {
            out.ux[[i, j]] =
                (sxx[[i, j]] - sxx[[i - 1, j]]) / hx + (sxy[[i, j + 1]] - sxy[[i, j]]) / hy;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            out.uy[[i, j]] =
                (sxy[[i + 1, j]] - sxy[[i, j]]) / hx + (syy[[i, j]] - syy[[i, j - 1]]) / hy;
        }
    }
    out
}

/// Momentum advection `div(u (x) u)` in the conservative staggered form.
pub fn momentum_advection(grid: &Grid2D, u: &MacField) -> MacField {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = (grid.hx(), grid.hy());
    let ux = &u.ux;
    let uy = &u.uy;
    // face-normal components averaged to nodes, odd ghosts at walls
    let ux_node = |i: usize, j: usize| -> f64 {
        let below = if j == 0 { -ux[[i, 0]] } else { ux[[i, j - 1]] };
        let above = if j == ny {
            -ux[[i, ny - 1]]
        } else {
            ux[[i, j]]
        };
        0.5 * (below + above)
    };
    let uy_node = |i: usize, j: usize| -> f64 {
        let left = if i == 0 { -uy[[0, j]] } else { uy[[i - 1, j]] };
        let right = if i == nx {
            -uy[[nx - 1, j]]
        } else {
            uy[[i, j]]
        };
        0.5 * (left + right)
    };
    let mut out = grid.zero_mac();
    for i in 1..nx {
        for j in 0..ny {
            let c_r = 0.5 * (ux[[i, j]] + ux[[i + 1, j]]);
            let c_l = 0.5 * (ux[[i - 1, j]] + ux[[i, j]]);
            let xx = (c_r * c_r - c_l * c_l) / hx;
            let yx = (ux_node(i, j + 1) * uy_node(i, j + 1) - ux_node(i, j) * uy_node(i, j)) / hy;
            out.ux[[i, j]] = xx + yx;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            let c_t = 0.5 * (uy[[i, j]] + uy[[i, j + 1]]);
            let c_b = 0.5 * (uy[[i, j - 1]] + uy[[i, j]]);
            let yy = (c_t * c_t - c_b * c_b) / hy;
            let xy = (ux_node(i + 1, j) * uy_node(i + 1, j) - ux_node(i, j) * uy_node(i, j)) / hx;
            out.uy[[i, j]] = yy + xy;
        }
    }
    out
}

/// Remove the gradient part: returns the projected velocity and the
/// mean-free pressure `q` with `u = u_star - dt grad q`.
pub fn project(
    grid: &Grid2D,
    u_star: &MacField,
    dt: f64,
) -> Result<(MacField, ScalarField), StepError> {
    let div = grid.divergence(u_star).scaled(1.0 / dt);
    let m = grid.mean(&div);
    let div = div.map(|v| v - m);
    let q = grid.helmholtz_solve(HelmholtzCoeffs::new(0.0, 1.0, 0.0, 0.0), &div)?;
    let mut u = u_star.clone();
    u.axpy(-dt, &grid.gradient(&q));
    u.enforce_no_slip();
    Ok((u, q))
}

pub fn max_cfl(grid: &Grid2D, u: &MacField, dt: f64) -> f64 {
    u.max_abs() * dt / grid.hx().min(grid.hy())
}

/// Velocity step with the given body force (already evaluated at the new
/// scalars). Viscosity is evaluated at `(phi, rho)`.
pub fn step_ns(
    state: &SimState,
    phi: &ScalarField,
    rho: &ScalarField,
    params: &ModelParams,
    cfg: &StepConfig,
    force: &MacField,
) -> Result<(MacField, ScalarField), StepError> {
    let g = &state.grid;
    let dt = cfg.dt;
    let cfl = max_cfl(g, &state.u, dt);
    if cfl > cfg.cfl_limit {
        return Err(StepError::Cfl {
            cfl,
            limit: cfg.cfl_limit,
        });
    }
    let nu = viscosity_field(g, phi, rho, params);
    let nu_bar = params.viscosity.nu_floor;
    let mut rhs = state.u.clone();
    // explicit excess of the viscous operator over its implicit part
    let mut excess = viscous_operator(g, &nu, &state.u);
    excess.axpy(-0.5 * nu_bar, &g.vector_laplacian(&state.u));
    rhs.axpy(dt, &excess);
    rhs.axpy(-dt, &momentum_advection(g, &state.u));
    rhs.axpy(dt, force);
    let u_star = g.vector_helmholtz_solve(0.5 * nu_bar * dt, &rhs);
    let (u, p) = project(g, &u_star, dt)?;
    if !u.all_finite() {
        return Err(StepError::NonFinite("velocity"));
    }
    Ok((u, p))
}

/// `psi` as the scheme sees it (clamped singular derivative when active).
pub(crate) fn scheme_psi(
    grid: &Grid2D,
    phi: &ScalarField,
    rho: &ScalarField,
    params: &ModelParams,
    cfg: &StepConfig,
) -> Result<ScalarField, StepError> {
    let (d1, _) = rho_derivative(rho, params, cfg)?;
    Ok(assemble_psi(grid, phi, rho, params, &d1))
}

/// Fill the `mu` and `psi` caches of a state the way the scheme does.
pub fn refresh_caches(
    state: &mut SimState,
    params: &ModelParams,
    cfg: &StepConfig,
) -> Result<(), StepError> {
    state.mu = chemical_potential_phi(&state.grid, &state.phi, &state.rho, params);
    state.psi = scheme_psi(&state.grid, &state.phi, &state.rho, params, cfg)?;
    Ok(())
}

/// Full step `phi -> rho -> (mu, psi) -> u`.
pub fn step(
    state: &SimState,
    params: &ModelParams,
    cfg: &StepConfig,
) -> Result<(SimState, StepReport), StepError> {
    let g = &state.grid;
    let phi = step_phi(state, params, cfg)?;
    let (rho, clamp_events) = step_rho(state, &phi, params, cfg)?;
    let mu = chemical_potential_phi(g, &phi, &rho, params);
    let psi = scheme_psi(g, &phi, &rho, params, cfg)?;
    let (u, p) = if cfg.ns_enabled {
        let force = korteweg_force(g, &mu, &psi, &phi, &rho, cfg.korteweg_mean_subtract);
        step_ns(state, &phi, &rho, params, cfg, &force)?
    } else {
        (state.u.clone(), g.zeros())
    };
    let next = SimState {
        grid: g.clone(),
        t: state.t + cfg.dt,
        u,
        p,
        phi,
        rho,
        mu,
        psi,
    };
    Ok((next, StepReport { clamp_events }))
}

/// Largest explicit diffusivity of the coupling terms, used to bound the
/// step size.
fn explicit_diffusivity(state: &SimState, params: &ModelParams, cfg: &StepConfig) -> f64 {
    let phi_part = state
        .phi
        .iter()
        .map(|&s| (QuarticPotential.eval(s, Order::Second) - cfg.stab_s1).abs())
        .fold(0.0, f64::max);
    let coupling = params.theta * state.rho.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let pot = RhoPotential::for_mode(params, cfg.potential_mode)
        .unwrap_or(RhoPotential::Singular(params.potential));
    let clip = cfg.rho_clip.unwrap_or(SINGULAR_RHO_CLIP);
    let rho_part = state
        .rho
        .iter()
        .map(|&r| {
            let r = match cfg.potential_mode {
                PotentialMode::Singular => r.clamp(clip, 1.0 - clip),
                PotentialMode::Regularized => r,
            };
            (pot.derivative(r, Order::Second).unwrap_or(0.0) - cfg.stab_s2).abs()
        })
        .fold(0.0, f64::max);
    phi_part + coupling + rho_part + params.viscosity.nu_ceil
}

/// Step size bound from advective CFL and the explicit coupling terms,
/// never above `cfg.dt`.
pub fn suggest_dt(state: &SimState, params: &ModelParams, cfg: &StepConfig) -> f64 {
    let g = &state.grid;
    let h = g.hx().min(g.hy());
    let advective = h / (4.0 * state.u.max_abs() + f64::EPSILON);
    let coupling = h * h / (4.0 * explicit_diffusivity(state, params, cfg));
    cfg.dt.min(advective).min(coupling)
}

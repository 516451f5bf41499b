//! Chemical potentials, capillary force, the discrete energy and the
//! regularization of initial surfactant data.
//!
//! The discrete energy is
//!
//! ```text
//! E = V sum_cells [ alpha/2 (lap phi)^2 + S_phi(phi) + S_rho(rho)
//!                   - theta/2 rho q + omega/4 q^2 ]
//!   + V sum_faces [ 1/2 (D phi)^2 + beta/2 (D rho)^2 ] + 1/2 |u|^2
//! ```
//!
//! with `q = cell_grad_sq(phi)` and `V = hx hy`. `mu` and `psi` below are
//! its exact gradients in the cell inner product.

use crate::grid::{Grid2D, HelmholtzCoeffs, MacField, ScalarField, SpectralError};
use crate::params::ModelParams;
use crate::potentials::{FloryHuggins, Order, QuarticPotential, RegularizedPotential};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("rho = {value} at cell ({i}, {j}) is outside (0, 1) in singular mode")]
    Domain { i: usize, j: usize, value: f64 },
    #[error("regularized mode requested but regularization_eps is not set")]
    MissingEps,
    #[error("initial data invalid: {0}")]
    BadInitialData(String),
    #[error("Newton solve did not converge: residual {residual:e} after {iterations} iterations")]
    NewtonFailed { iterations: usize, residual: f64 },
    #[error("fields do not match the grid")]
    GridMismatch,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PotentialMode {
    #[default]
    Singular,
    Regularized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyMode {
    /// Singular potential, no penalty.
    Exact,
    /// Singular potential plus the quartic gradient penalty.
    Penalized,
    /// Regularized potential plus penalty; falls back to the singular
    /// potential when no eps is configured.
    Approx,
}

/// Surfactant potential in one of its two forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoPotential {
    Singular(FloryHuggins),
    Regularized(RegularizedPotential),
}

impl RhoPotential {
    pub fn for_mode(params: &ModelParams, mode: PotentialMode) -> Result<Self, ModelError> {
        match mode {
            PotentialMode::Singular => Ok(Self::Singular(params.potential)),
            PotentialMode::Regularized => params
                .regularized()
                .map(Self::Regularized)
                .ok_or(ModelError::MissingEps),
        }
    }

    /// Bulk density; `+inf` outside `[0, 1]` for the singular form.
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Singular(p) => p.eval(s, Order::Value).expect("order 0 is total"),
            Self::Regularized(r) => r.eval(s, Order::Value),
        }
    }

    /// Derivative of order 1 or 2. `None` outside `(0, 1)` for the
    /// singular form.
    pub fn derivative(&self, s: f64, order: Order) -> Option<f64> {
        match self {
            Self::Singular(p) => p.eval(s, order).ok(),
            Self::Regularized(r) => Some(r.eval(s, order)),
        }
    }

    pub fn base(&self) -> &FloryHuggins {
        match self {
            Self::Singular(p) => p,
            Self::Regularized(r) => r.base(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub grid: Grid2D,
    pub t: f64,
    pub u: MacField,
    pub p: ScalarField,
    pub phi: ScalarField,
    pub rho: ScalarField,
    pub mu: ScalarField,
    pub psi: ScalarField,
}

impl SimState {
    /// State at rest; the potential caches start at zero.
    pub fn new(grid: Grid2D, phi: ScalarField, rho: ScalarField) -> Result<Self, ModelError> {
        if !grid.accepts(&phi) || !grid.accepts(&rho) {
            return Err(ModelError::GridMismatch);
        }
        Ok(Self {
            t: 0.0,
            u: grid.zero_mac(),
            p: grid.zeros(),
            mu: grid.zeros(),
            psi: grid.zeros(),
            phi,
            rho,
            grid,
        })
    }

    pub fn all_finite(&self) -> bool {
        self.u.all_finite() && self.p.all_finite() && self.phi.all_finite() && self.rho.all_finite()
    }

    /// Recompute the cached `mu` and `psi`.
    pub fn refresh_potentials(
        &mut self,
        params: &ModelParams,
        mode: PotentialMode,
    ) -> Result<(), ModelError> {
        self.mu = chemical_potential_phi(&self.grid, &self.phi, &self.rho, params);
        self.psi = chemical_potential_rho(&self.grid, &self.phi, &self.rho, params, mode)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyReport {
    pub kinetic: f64,
    pub grad_phi: f64,
    pub laplace_phi: f64,
    pub s_phi_bulk: f64,
    pub grad_rho: f64,
    pub s_rho_bulk: f64,
    pub coupling: f64,
    pub penalty: f64,
    pub total: f64,
}

impl EnergyReport {
    pub fn sum_of_parts(&self) -> f64 {
        self.kinetic
            + self.grad_phi
            + self.laplace_phi
            + self.s_phi_bulk
            + self.grad_rho
            + self.s_rho_bulk
            + self.coupling
            + self.penalty
    }

    /// Everything except the kinetic part.
    pub fn free_energy(&self) -> f64 {
        self.total - self.kinetic
    }
}

/// `div(w_f * D f)` with `w` averaged to faces.
fn weighted_div_grad(grid: &Grid2D, w: &ScalarField, f: &ScalarField) -> ScalarField {
    let flux = grid.face_average(w).hadamard(&grid.gradient(f));
    grid.divergence(&flux)
}

/// `mu = alpha lap^2 phi - lap phi + S_phi'(phi) + theta div(rho_f D phi)
///       - omega div(q_f D phi)`.
pub fn chemical_potential_phi(
    grid: &Grid2D,
    phi: &ScalarField,
    rho: &ScalarField,
    params: &ModelParams,
) -> ScalarField {
    let mut mu = grid.biharmonic(phi).scaled(params.alpha);
    mu.axpy(-1.0, &grid.laplacian(phi));
    mu.axpy(1.0, &phi.map(|s| QuarticPotential.eval(s, Order::First)));
    mu.axpy(params.theta, &weighted_div_grad(grid, rho, phi));
    if params.penalty_omega > 0.0 {
        let q = grid.cell_grad_sq(phi);
        mu.axpy(-params.penalty_omega, &weighted_div_grad(grid, &q, phi));
    }
    mu
}

/// First cell where the singular derivative is undefined.
fn first_outside(rho: &ScalarField) -> Option<ModelError> {
    rho.indexed_iter()
        .find(|(_, &v)| !(v > 0.0 && v < 1.0))
        .map(|((i, j), &value)| ModelError::Domain { i, j, value })
}

/// `psi = -beta lap rho + S_rho'(rho) - theta/2 q`.
pub fn chemical_potential_rho(
    grid: &Grid2D,
    phi: &ScalarField,
    rho: &ScalarField,
    params: &ModelParams,
    mode: PotentialMode,
) -> Result<ScalarField, ModelError> {
    let pot = RhoPotential::for_mode(params, mode)?;
    if mode == PotentialMode::Singular {
        if let Some(e) = first_outside(rho) {
            return Err(e);
        }
    }
    let d1 = rho.map(|s| pot.derivative(s, Order::First).expect("domain checked"));
    Ok(assemble_psi(grid, phi, rho, params, &d1))
}

/// `psi` from a precomputed derivative field of the bulk potential.
pub(crate) fn assemble_psi(
    grid: &Grid2D,
    phi: &ScalarField,
    rho: &ScalarField,
    params: &ModelParams,
    s_prime: &ScalarField,
) -> ScalarField {
    let mut psi = grid.laplacian(rho).scaled(-params.beta);
    psi.axpy(1.0, s_prime);
    psi.axpy(-0.5 * params.theta, &grid.cell_grad_sq(phi));
    psi
}

/// Capillary force on faces. With `subtract_mean` the potentials are
/// replaced by their deviations from the mean, which changes the force by a
/// discrete gradient only.
pub fn korteweg_force(
    grid: &Grid2D,
    mu: &ScalarField,
    psi: &ScalarField,
    phi: &ScalarField,
    rho: &ScalarField,
    subtract_mean: bool,
) -> MacField {
    let center = |f: &ScalarField| {
        if subtract_mean {
            let m = grid.mean(f);
            f.map(|v| v - m)
        } else {
            f.clone()
        }
    };
    let mut force = grid.face_average(&center(mu)).hadamard(&grid.gradient(phi));
    let rho_part = grid
        .face_average(&center(psi))
        .hadamard(&grid.gradient(rho));
    force.axpy(1.0, &rho_part);
    force.enforce_no_slip();
    force
}

/// Energy of the state in the requested mode.
pub fn energy(state: &SimState, params: &ModelParams, mode: EnergyMode) -> EnergyReport {
    let pot = match mode {
        EnergyMode::Approx => params
            .regularized()
            .map(RhoPotential::Regularized)
            .unwrap_or(RhoPotential::Singular(params.potential)),
        EnergyMode::Exact | EnergyMode::Penalized => RhoPotential::Singular(params.potential),
    };
    let omega = match mode {
        EnergyMode::Exact => 0.0,
        _ => params.penalty_omega,
    };
    energy_with(
        &state.grid,
        &state.u,
        &state.phi,
        &state.rho,
        params,
        &pot,
        omega,
    )
}

pub(crate) fn energy_with(
    grid: &Grid2D,
    u: &MacField,
    phi: &ScalarField,
    rho: &ScalarField,
    params: &ModelParams,
    pot: &RhoPotential,
    omega: f64,
) -> EnergyReport {
    let kinetic = 0.5 * grid.mac_inner(u, u);
    let gphi = grid.gradient(phi);
    let grad_phi = 0.5 * grid.mac_inner(&gphi, &gphi);
    let lap = grid.laplacian(phi);
    let laplace_phi = 0.5 * params.alpha * grid.inner(&lap, &lap);
    let s_phi_bulk = grid.integral(&phi.map(|s| QuarticPotential.eval(s, Order::Value)));
    let grho = grid.gradient(rho);
    let grad_rho = 0.5 * params.beta * grid.mac_inner(&grho, &grho);
    let s_rho_bulk = grid.integral(&rho.map(|s| pot.value(s)));
    let q = grid.cell_grad_sq(phi);
    let coupling = -0.5 * params.theta * grid.inner(rho, &q);
    let penalty = if omega > 0.0 {
        0.25 * omega * grid.inner(&q, &q)
    } else {
        0.0
    };
    let mut r = EnergyReport {
        kinetic,
        grad_phi,
        laplace_phi,
        s_phi_bulk,
        grad_rho,
        s_rho_bulk,
        coupling,
        penalty,
        total: 0.0,
    };
    r.total = r.sum_of_parts();
    r
}

/// Lower bound on the total energy valid for every admissible state.
pub fn energy_lower_bound(params: &ModelParams, area: f64) -> f64 {
    let a = &params.assumptions;
    let gamma1 = match params.regularized() {
        Some(r) => r.convexity_certificate().gamma1,
        None => -params
            .potential
            .entropy(0.5, Order::Value)
            .expect("1/2 is interior"),
    };
    let theta4 = params.theta.powi(4);
    -(a.c4 + 17.0 * params.c_r() + 8.0 * theta4 / (a.c3 * params.alpha * params.alpha) + gamma1)
        * area
}

/// `max(theta rho - 1)` over the grid; positive values flag a locally
/// negative effective diffusion of `phi` held in check only by `alpha`.
pub fn backward_diffusion_margin(params: &ModelParams, rho: &ScalarField) -> f64 {
    rho.iter()
        .map(|&r| params.theta * r - 1.0)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub max_cg_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-10,
            max_cg_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedInitial {
    pub rho: ScalarField,
    /// `psi_hat_0` before the cutoff.
    pub psi_hat: ScalarField,
    /// `psi_hat_0` clamped to `[-k, k]`.
    pub psi_hat_k: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    /// `mean(rho_k) - mean(rho_0)`.
    pub mean_shift: f64,
}

/// Replace `rho0` by the solution of `-beta lap rho + S_hat'(rho) =
/// clamp(psi_hat_0, -k, k)` where `psi_hat_0 = -beta lap rho0 + S_hat'(rho0)`.
pub fn regularize_initial_rho(
    grid: &Grid2D,
    rho0: &ScalarField,
    k: f64,
    params: &ModelParams,
    opts: &NewtonOptions,
) -> Result<RegularizedInitial, ModelError> {
    if !grid.accepts(rho0) {
        return Err(ModelError::GridMismatch);
    }
    if let Some(e) = first_outside(rho0) {
        return Err(e);
    }
    if !(k >= 0.0) {
        return Err(ModelError::BadInitialData(format!(
            "cutoff k = {k} must be >= 0"
        )));
    }
    let fh = params.potential;
    let beta = params.beta;
    let d1 = |s: f64| fh.entropy(s, Order::First).expect("inside (0,1)");
    let d2 = |s: f64| fh.entropy(s, Order::Second).expect("inside (0,1)");
    let operator = |r: &ScalarField| {
        let mut out = grid.laplacian(r).scaled(-beta);
        out.axpy(1.0, &r.map(d1));
        out
    };

    let psi_hat = operator(rho0);
    let psi_hat_k = psi_hat.map(|v| v.clamp(-k, k));
    let residual_of = |r: &ScalarField| {
        let mut res = operator(r);
        res.axpy(-1.0, &psi_hat_k);
        res
    };

    let mut rho = rho0.clone();
    let mut res = residual_of(&rho);
    let mut norm = grid.l2(&res);
    let mut iterations = 0;
    while norm > opts.tolerance {
        if iterations == opts.max_iterations {
            return Err(ModelError::NewtonFailed {
                iterations,
                residual: norm,
            });
        }
        iterations += 1;
        let curv = rho.map(d2);
        let rhs = res.scaled(-1.0);
        let delta = jacobian_solve(grid, beta, &curv, &rhs, opts.max_cg_iterations)?;

        let mut step = 1.0;
        loop {
            let mut trial = rho.clone();
            trial.axpy(step, &delta);
            if first_outside(&trial).is_none() {
                let trial_res = residual_of(&trial);
                let trial_norm = grid.l2(&trial_res);
                if trial_norm < norm {
                    rho = trial;
                    res = trial_res;
                    norm = trial_norm;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(ModelError::NewtonFailed {
                    iterations,
                    residual: norm,
                });
            }
        }
    }
    let mean_shift = grid.mean(&rho) - grid.mean(rho0);
    Ok(RegularizedInitial {
        rho,
        psi_hat,
        psi_hat_k,
        iterations,
        residual: norm,
        mean_shift,
    })
}

/// Solve `(-beta lap + diag(curv)) x = b` by conjugate gradients,
/// preconditioned with the constant-coefficient operator at the mean
/// curvature.
fn jacobian_solve(
    grid: &Grid2D,
    beta: f64,
    curv: &ScalarField,
    b: &ScalarField,
    max_iter: usize,
) -> Result<ScalarField, ModelError> {
    let apply = |x: &ScalarField| {
        let mut y = grid.laplacian(x).scaled(-beta);
        y.axpy(1.0, &x.zip_map(curv, |a, c| a * c));
        y
    };
    let pre = HelmholtzCoeffs::new(grid.mean(curv), -beta, 0.0, 0.0);
    let precondition = |r: &ScalarField| grid.helmholtz_solve(pre, r);

    let b_norm = grid.l2(b);
    let mut x = grid.zeros();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut z = precondition(&r)?;
    let mut p = z.clone();
    let mut rz = grid.inner(&r, &z);
    for _ in 0..max_iter {
        let ap = apply(&p);
        let alpha = rz / grid.inner(&p, &ap);
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        if grid.l2(&r) <= 1e-14 * b_norm {
            break;
        }
        z = precondition(&r)?;
        let rz_new = grid.inner(&r, &z);
        let beta_cg = rz_new / rz;
        rz = rz_new;
        let mut next = z.clone();
        next.axpy(beta_cg, &p);
        p = next;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(n, n, 1.0, 1.0).unwrap()
    }

    fn smooth(g: &Grid2D, a: f64) -> ScalarField {
        g.scalar_from_fn(|x, y| a * (3.1 * x).cos() * (2.3 * y + 0.4).sin() + 0.1 * x * y)
    }

    #[test]
    fn constant_fields_give_bulk_mu() {
        let g = grid(8);
        let p = ModelParams::default();
        let mu = chemical_potential_phi(&g, &g.constant(0.3), &g.constant(0.4), &p);
        let want = QuarticPotential.eval(0.3, Order::First);
        assert!(mu.iter().all(|&v| (v - want).abs() < 1e-14));
    }

    #[test]
    fn psi_vanishes_at_half() {
        let g = grid(8);
        let psi = chemical_potential_rho(
            &g,
            &g.zeros(),
            &g.constant(0.5),
            &ModelParams::default(),
            PotentialMode::Singular,
        )
        .unwrap();
        assert!(psi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singular_mode_domain_error() {
        let g = grid(8);
        let mut rho = g.constant(0.5);
        rho[[2, 3]] = 1.2;
        let err = chemical_potential_rho(
            &g,
            &g.zeros(),
            &rho,
            &ModelParams::default(),
            PotentialMode::Singular,
        )
        .unwrap_err();
        assert_eq!(
            err,
            ModelError::Domain {
                i: 2,
                j: 3,
                value: 1.2
            }
        );
    }

    #[test]
    fn energy_of_flat_state() {
        let g = grid(8);
        let s = SimState::new(g.clone(), g.constant(1.0), g.constant(0.5)).unwrap();
        let e = energy(&s, &ModelParams::default(), EnergyMode::Exact);
        assert!((e.total + std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn mean_identities() {
        let g = grid(16);
        let p = ModelParams {
            penalty_omega: 0.3,
            ..ModelParams::default()
        };
        let phi = smooth(&g, 0.7);
        let rho = smooth(&g, 0.2).map(|v| 0.5 + v);
        let mu = chemical_potential_phi(&g, &phi, &rho, &p);
        let sp = phi.map(|s| QuarticPotential.eval(s, Order::First));
        assert!((g.mean(&mu) - g.mean(&sp)).abs() <= 1e-12 * g.mean(&sp).abs().max(1.0));
        let psi = chemical_potential_rho(&g, &phi, &rho, &p, PotentialMode::Singular).unwrap();
        let sr = rho.map(|s| p.potential.eval(s, Order::First).unwrap());
        let want = g.mean(&sr) - 0.5 * p.theta * g.mean(&g.cell_grad_sq(&phi));
        assert!((g.mean(&psi) - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn force_vanishes_for_constants() {
        let g = grid(8);
        let f = korteweg_force(
            &g,
            &smooth(&g, 1.0),
            &smooth(&g, 2.0),
            &g.constant(0.2),
            &g.constant(0.4),
            true,
        );
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn lower_bound_scales_with_area() {
        let p = ModelParams::default();
        assert_eq!(
            2.0 * energy_lower_bound(&p, 1.0),
            energy_lower_bound(&p, 2.0)
        );
    }

    #[test]
    fn regularization_fixed_point() {
        let g = grid(16);
        let p = ModelParams::default();
        let out = regularize_initial_rho(&g, &g.constant(0.5), 0.0, &p, &NewtonOptions::default())
            .unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.rho.iter().all(|&v| v == 0.5));
    }
}

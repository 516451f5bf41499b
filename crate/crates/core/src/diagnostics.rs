//! Per-step measurements: masses, energy and its dissipation balance,
//! surfactant bounds, stability metrics of twin runs, weak-form residuals
//! and the adsorption statistic.

use ndarray::Array2;

use crate::grid::{Grid2D, MacField, ScalarField};
use crate::model::{
    energy_with, korteweg_force, EnergyReport, PotentialMode, RhoPotential, SimState,
};
use crate::params::ModelParams;
use crate::stepper::{momentum_advection, viscosity_field, viscous_operator, StepConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("states live on different grids")]
    GridMismatch,
}

/// One row of the trace. Masses are domain means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub mass_phi: f64,
    pub mass_rho: f64,
    pub energy: EnergyReport,
    pub dissipation: f64,
    pub energy_residual: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub separation_eta: f64,
    pub clamp_events: usize,
    pub max_velocity: f64,
}

/// Energy the scheme is monitored against: penalized, and regularized when
/// the regularized potential drives the run.
pub fn scheme_energy(state: &SimState, params: &ModelParams, cfg: &StepConfig) -> EnergyReport {
    let pot = match cfg.potential_mode {
        PotentialMode::Regularized => params
            .regularized()
            .map(RhoPotential::Regularized)
            .unwrap_or(RhoPotential::Singular(params.potential)),
        PotentialMode::Singular => RhoPotential::Singular(params.potential),
    };
    energy_with(
        &state.grid,
        &state.u,
        &state.phi,
        &state.rho,
        params,
        &pot,
        params.penalty_omega,
    )
}

/// `|sqrt(nu) D u|^2 + |grad mu|^2 + |grad psi|^2` from the cached
/// potentials of the state.
pub fn dissipation(state: &SimState, params: &ModelParams) -> f64 {
    let g = &state.grid;
    let viscous = if state.u.max_abs() > 0.0 {
        let nu = viscosity_field(g, &state.phi, &state.rho, params);
        -g.mac_inner(&state.u, &viscous_operator(g, &nu, &state.u))
    } else {
        0.0
    };
    viscous + g.grad_l2(&state.mu).powi(2) + g.grad_l2(&state.psi).powi(2)
}

/// Measure `state`. With `prev_energy`, the residual
/// `E(t_{n+1}) - E(t_n) + dt * dissipation` is filled in.
pub fn sample(
    state: &SimState,
    params: &ModelParams,
    cfg: &StepConfig,
    prev_energy: Option<f64>,
    clamp_events: usize,
) -> TraceRecord {
    let g = &state.grid;
    let energy = scheme_energy(state, params, cfg);
    let diss = dissipation(state, params);
    let energy_residual = match prev_energy {
        Some(e0) => energy.total - e0 + cfg.dt * diss,
        None => 0.0,
    };
    let rho_min = state.rho.min_value();
    let rho_max = state.rho.max_value();
    TraceRecord {
        t: state.t,
        mass_phi: g.mean(&state.phi),
        mass_rho: g.mean(&state.rho),
        energy,
        dissipation: diss,
        energy_residual,
        rho_min,
        rho_max,
        separation_eta: rho_min.min(1.0 - rho_max),
        clamp_events,
        max_velocity: state.u.max_abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StabilityMetrics {
    /// Velocity proxy norm plus `|phi|^2` plus the dual norm of `rho`.
    pub y: f64,
    pub z: f64,
    pub w: f64,
    /// Velocity part of `y`; a proxy for the inverse Stokes norm.
    pub y_velocity_proxy: f64,
}

/// Dual-norm proxy for a velocity: each cell-interpolated component is made
/// mean free and passed through the inverse Neumann Laplacian.
pub fn velocity_dual_proxy(grid: &Grid2D, u: &MacField) -> f64 {
    let (cx, cy) = grid.mac_to_cells(u);
    [cx, cy]
        .iter()
        .map(|c| {
            let m = grid.mean(c);
            let c = c.map(|v| v - m);
            let n = grid.inv_neumann_laplacian(&c).expect("mean removed");
            grid.grad_l2(&n).powi(2)
        })
        .sum()
}

fn dual_sq(grid: &Grid2D, f: &ScalarField) -> f64 {
    let m = grid.mean(f);
    let c = f.map(|v| v - m);
    let n = grid.inv_neumann_laplacian(&c).expect("mean removed");
    grid.grad_l2(&n).powi(2)
}

pub fn stability_metrics(
    a: &SimState,
    b: &SimState,
    params: &ModelParams,
) -> Result<StabilityMetrics, DiagnosticsError> {
    if a.grid != b.grid {
        return Err(DiagnosticsError::GridMismatch);
    }
    let g = &a.grid;
    let mut du = a.u.clone();
    du.axpy(-1.0, &b.u);
    let dphi = a.phi.zip_map(&b.phi, |x, y| x - y);
    let drho = a.rho.zip_map(&b.rho, |x, y| x - y);

    let y_velocity_proxy = velocity_dual_proxy(g, &du);
    let y = y_velocity_proxy + g.l2(&dphi).powi(2) + dual_sq(g, &drho);

    let lap_phi = g.laplacian(&dphi);
    let z = g.mac_l2(&du).powi(2) + g.l2(&lap_phi).powi(2) + g.grad_l2(&drho).powi(2);

    let grad_u_sq = -g.mac_inner(&du, &g.vector_laplacian(&du));
    let bi = g.laplacian(&lap_phi);
    let w = 0.5 * params.viscosity.nu_floor * grad_u_sq.max(0.0)
        + params.alpha * g.grad_l2(&bi).powi(2)
        + g.l2(&bi).powi(2)
        + params.beta * g.grad_l2(&g.laplacian(&drho)).powi(2);
    Ok(StabilityMetrics {
        y,
        z,
        w,
        y_velocity_proxy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeakResidual {
    pub res_phi: f64,
    pub res_rho: f64,
    pub res_u: f64,
}

/// Solenoidal test fields from node stream functions
/// `sin(m pi x / lx) sin(n pi y / ly)`, lowest `m + n` first.
pub fn solenoidal_test_fields(grid: &Grid2D, count: usize) -> Vec<MacField> {
    let mut pairs: Vec<(usize, usize)> = (1..=grid.nx())
        .flat_map(|m| (1..=grid.ny()).map(move |n| (m, n)))
        .collect();
    pairs.sort_by_key(|&(m, n)| (m + n, m, n));
    let pi = std::f64::consts::PI;
    pairs
        .into_iter()
        .take(count)
        .map(|(m, n)| {
            let s = Array2::from_shape_fn((grid.nx() + 1, grid.ny() + 1), |(i, j)| {
                let x = i as f64 * grid.hx();
                let y = j as f64 * grid.hy();
                (m as f64 * pi * x / grid.lx()).sin() * (n as f64 * pi * y / grid.ly()).sin()
            });
            grid.curl_of_stream(&s)
        })
        .collect()
}

/// Weak-form defect of the step `prev -> next` at the new time level,
/// tested against the first `n_test` cosine modes (scalars, unnormalized)
/// and `n_test` solenoidal fields (velocity). Worst absolute value per
/// equation.
pub fn weak_form_residual(
    prev: &SimState,
    next: &SimState,
    params: &ModelParams,
    cfg: &StepConfig,
    n_test: usize,
) -> Result<WeakResidual, DiagnosticsError> {
    if prev.grid != next.grid {
        return Err(DiagnosticsError::GridMismatch);
    }
    let g = &next.grid;
    let dt = cfg.dt;
    let rate = |a: &ScalarField, b: &ScalarField| b.zip_map(a, |x, y| (x - y) / dt);
    let phi_t = rate(&prev.phi, &next.phi);
    let rho_t = rate(&prev.rho, &next.rho);
    let grad_mu = g.gradient(&next.mu);
    let grad_psi = g.gradient(&next.psi);
    let flux_phi = g.face_average(&next.phi).hadamard(&next.u);
    let flux_rho = g.face_average(&next.rho).hadamard(&next.u);

    let mut res = WeakResidual::default();
    for &(kx, ky) in g.mode_order().iter().take(n_test) {
        let v = g.cosine_mode(kx, ky);
        let gv = g.gradient(&v);
        // (f_t, v) - (u f, grad v) + (grad mu, grad v)
        let r_phi = g.inner(&phi_t, &v)
            - if cfg.ns_enabled {
                g.mac_inner(&flux_phi, &gv)
            } else {
                0.0
            }
            + g.mac_inner(&grad_mu, &gv);
        let r_rho = g.inner(&rho_t, &v)
            - if cfg.ns_enabled {
                g.mac_inner(&flux_rho, &gv)
            } else {
                0.0
            }
            + g.mac_inner(&grad_psi, &gv);
        res.res_phi = res.res_phi.max(r_phi.abs());
        res.res_rho = res.res_rho.max(r_rho.abs());
    }

    if cfg.ns_enabled {
        let mut u_t = next.u.clone();
        u_t.axpy(-1.0, &prev.u);
        let u_t = u_t.scaled(1.0 / dt);
        let nu = viscosity_field(g, &next.phi, &next.rho, params);
        let visc = viscous_operator(g, &nu, &next.u);
        let adv = momentum_advection(g, &next.u);
        let force = korteweg_force(
            g,
            &next.mu,
            &next.psi,
            &next.phi,
            &next.rho,
            cfg.korteweg_mean_subtract,
        );
        let mut lhs = u_t;
        lhs.axpy(1.0, &adv);
        lhs.axpy(-1.0, &visc);
        lhs.axpy(-1.0, &force);
        for w in solenoidal_test_fields(g, n_test) {
            res.res_u = res.res_u.max(g.mac_inner(&lhs, &w).abs());
        }
    }
    Ok(res)
}

/// Pearson correlation of `rho` with the cell-centered `|grad phi|^2`;
/// 0 when either field is constant.
pub fn adsorption_statistic(state: &SimState) -> f64 {
    let q = state.grid.cell_grad_sq(&state.phi);
    pearson(&state.rho, &q)
}

pub fn pearson(a: &ScalarField, b: &ScalarField) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // relative variance floor so rounding noise of a constant field is zero
    let floor_a = 1e-28 * (ma * ma).max(f64::MIN_POSITIVE) * n;
    let floor_b = 1e-28 * (mb * mb).max(f64::MIN_POSITIVE) * n;
    if saa <= floor_a || sbb <= floor_b {
        return 0.0;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::{refresh_caches, step};

    fn flat() -> (SimState, ModelParams, StepConfig) {
        let g = Grid2D::new(16, 16, 1.0, 1.0).unwrap();
        let p = ModelParams::default();
        let mut s = SimState::new(g.clone(), g.constant(0.1), g.constant(0.4)).unwrap();
        let cfg = StepConfig::with_defaults(&p, &s, 1e-3, PotentialMode::Singular, true);
        refresh_caches(&mut s, &p, &cfg).unwrap();
        (s, p, cfg)
    }

    #[test]
    fn stationary_state_has_no_dissipation() {
        let (s, p, cfg) = flat();
        let e0 = scheme_energy(&s, &p, &cfg).total;
        let (n, _) = step(&s, &p, &cfg).unwrap();
        let r = sample(&n, &p, &cfg, Some(e0), 0);
        assert!(r.dissipation.abs() < 1e-20);
        assert!(r.energy_residual.abs() < 1e-12);
        let w = weak_form_residual(&s, &n, &p, &cfg, 10).unwrap();
        assert!(
            w.res_phi < 1e-12 && w.res_rho < 1e-12 && w.res_u < 1e-12,
            "{w:?}"
        );
    }

    #[test]
    fn identical_states_give_zero_metrics() {
        let (s, p, _) = flat();
        assert_eq!(
            stability_metrics(&s, &s, &p).unwrap(),
            StabilityMetrics::default()
        );
    }

    #[test]
    fn pearson_edge_cases() {
        let g = Grid2D::new(8, 8, 1.0, 1.0).unwrap();
        let x = g.scalar_from_fn(|x, y| x + y * y);
        assert_eq!(pearson(&g.constant(0.3), &x), 0.0);
        assert!((pearson(&x.scaled(3.0), &x) - 1.0).abs() < 1e-14);
    }
}

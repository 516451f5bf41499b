mod common;

use common::*;
use nschs::diagnostics::{sample, stability_metrics};
use nschs::grid::{Grid2D, HelmholtzCoeffs};
use nschs::io::snapshot::{decode_snapshot, encode_snapshot};
use nschs::model::{energy, EnergyMode, PotentialMode, SimState};
use nschs::params::ModelParams;
use nschs::stepper::{project, refresh_caches, step, StepConfig};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid2D> {
    (4usize..14, 4usize..14, 0.5f64..5.0, 0.5f64..5.0)
        .prop_map(|(nx, ny, lx, ly)| Grid2D::new(nx, ny, lx, ly).unwrap())
}

fn state(g: &Grid2D, seed: u64) -> SimState {
    let mut r = rng(seed);
    let mut s = SimState::new(
        g.clone(),
        random_field(g, &mut r, -1.2, 1.2),
        random_field(g, &mut r, 0.05, 0.95),
    )
    .unwrap();
    s.u = random_mac(g, &mut r);
    s
}

fn params(theta: f64, omega: f64) -> ModelParams {
    ModelParams {
        theta,
        penalty_omega: omega,
        regularization_eps: Some(0.05),
        ..ModelParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn helmholtz_round_trip(
        g in grid_strategy(),
        seed in any::<u64>(),
        a in 0.1f64..10.0,
        b in 0.0f64..2.0,
        c in 0.0f64..1.0,
        d in 0.0f64..0.5,
    ) {
        let mut r = rng(seed);
        let f = random_field(&g, &mut r, -1.0, 1.0);
        // a - b Lap + c Lap^2 - d Lap^3 is positive definite
        let k = HelmholtzCoeffs::new(a, -b, c, -d);
        let lap = g.laplacian(&f);
        let lap2 = g.laplacian(&lap);
        let lap3 = g.laplacian(&lap2);
        let mut rhs = f.scaled(a);
        rhs.axpy(-b, &lap);
        rhs.axpy(c, &lap2);
        rhs.axpy(-d, &lap3);
        let back = g.helmholtz_solve(k, &rhs).unwrap();
        let lam_max = g.eig_x(g.nx() - 1) + g.eig_y(g.ny() - 1);
        let cond = k.symbol(lam_max).abs() / k.symbol(0.0).abs();
        let err = field_rel_err(&back, &f);
        prop_assert!(err < 1e-13 * cond + 1e-12, "err {} cond {}", err, cond);
    }

    #[test]
    fn galerkin_projection_is_idempotent_and_keeps_the_mean(
        g in grid_strategy(),
        seed in any::<u64>(),
        n in 1usize..200,
    ) {
        let f = random_field(&g, &mut rng(seed), -1.0, 1.0);
        let p = g.galerkin_project(&f, n);
        let pp = g.galerkin_project(&p, n);
        prop_assert!(max_abs_diff(&p, &pp) < 1e-12);
        prop_assert!((g.mean(&p) - g.mean(&f)).abs() < 1e-12);
        prop_assert!(g.l2(&p) <= g.l2(&f) * (1.0 + 1e-12));
    }

    #[test]
    fn laplacian_has_zero_mean(g in grid_strategy(), seed in any::<u64>()) {
        let f = random_field(&g, &mut rng(seed), -1.0, 1.0);
        let lap = g.laplacian(&f);
        let scale = lap.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(g.mean(&lap).abs() <= 1e-13 * scale.max(1.0));
    }

    #[test]
    fn gradient_and_divergence_are_adjoint(g in grid_strategy(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_field(&g, &mut r, -1.0, 1.0);
        let v = random_mac(&g, &mut r);
        let lhs = g.mac_inner(&g.gradient(&f), &v);
        let rhs = -g.inner(&f, &g.divergence(&v));
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (lhs.abs() + 1.0));
    }

    #[test]
    fn projection_is_solenoidal_and_idempotent(g in grid_strategy(), seed in any::<u64>()) {
        let v = random_mac(&g, &mut rng(seed));
        let (w, _) = project(&g, &v, 1.0).unwrap();
        let div = g.divergence(&w);
        prop_assert!(div.iter().all(|d| d.abs() < 1e-10 * (1.0 + v.max_abs())));
        let (ww, _) = project(&g, &w, 1.0).unwrap();
        let mut diff = ww.clone();
        diff.axpy(-1.0, &w);
        prop_assert!(diff.max_abs() < 1e-10 * (1.0 + v.max_abs()));
    }

    #[test]
    fn energy_is_sum_of_parts_and_coupling_is_nonpositive(
        g in grid_strategy(),
        seed in any::<u64>(),
        theta in 0.01f64..5.0,
        omega in 0.0f64..1.0,
    ) {
        let s = state(&g, seed);
        let p = params(theta, omega);
        for mode in [EnergyMode::Exact, EnergyMode::Penalized, EnergyMode::Approx] {
            let e = energy(&s, &p, mode);
            prop_assert!((e.total - e.sum_of_parts()).abs() <= 1e-12 * e.total.abs().max(1.0));
            prop_assert!(e.coupling <= 0.0);
            prop_assert!(e.penalty >= 0.0);
        }
    }

    #[test]
    fn regularized_energy_is_below_singular(
        g in grid_strategy(),
        seed in any::<u64>(),
        omega in 0.0f64..1.0,
    ) {
        let s = state(&g, seed);
        let p = params(1.0, omega);
        let approx = energy(&s, &p, EnergyMode::Approx).total;
        let exact = energy(&s, &p, EnergyMode::Penalized).total;
        prop_assert!(approx <= exact + 1e-12 * exact.abs());
    }

    #[test]
    fn stability_metrics_are_symmetric_and_vanish_only_on_equal_states(
        g in grid_strategy(),
        s1 in any::<u64>(),
        s2 in any::<u64>(),
    ) {
        let p = ModelParams::default();
        let a = state(&g, s1);
        let b = state(&g, s2);
        let ab = stability_metrics(&a, &b, &p).unwrap();
        let ba = stability_metrics(&b, &a, &p).unwrap();
        prop_assert!(rel_err(ab.y, ba.y) < 1e-12 && rel_err(ab.z, ba.z) < 1e-12);
        let aa = stability_metrics(&a, &a, &p).unwrap();
        prop_assert!(aa.y == 0.0 && aa.z == 0.0 && aa.w == 0.0);
        if s1 != s2 {
            prop_assert!(ab.y > 0.0 && ab.z > 0.0);
        }
    }

    #[test]
    fn eta_grows_under_clamping_toward_half(
        g in grid_strategy(),
        seed in any::<u64>(),
        c1 in 0.0f64..0.5,
        c2 in 0.0f64..0.5,
    ) {
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        let s = state(&g, seed);
        let p = params(1.0, 0.0);
        let cfg = StepConfig::with_defaults(&p, &s, 1e-3, PotentialMode::Regularized, false);
        let clamp = |c: f64| {
            let mut t = s.clone();
            t.rho = s.rho.map(|v| v.clamp(c, 1.0 - c));
            sample(&t, &p, &cfg, None, 0).separation_eta
        };
        prop_assert!(clamp(lo) <= clamp(hi));
    }

    #[test]
    fn snapshot_bytes_round_trip(
        nx in 4usize..200,
        ny in 4usize..200,
        lx in 1u32..400,
        ly in 1u32..400,
        seed in any::<u64>(),
        t in 0.0f64..1e6,
    ) {
        // domain lengths on a quarter grid keep the header short
        let g = Grid2D::new(nx, ny, lx as f64 * 0.25, ly as f64 * 0.25).unwrap();
        let mut s = state(&g, seed);
        s.t = t;
        let bytes = encode_snapshot(&s).unwrap();
        let back = decode_snapshot(&bytes).unwrap();
        prop_assert_eq!(encode_snapshot(&back).unwrap(), bytes);
        prop_assert_eq!(back.t.to_bits(), t.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn one_step_conserves_mass(
        seed in any::<u64>(),
        ns in any::<bool>(),
        dt in 1e-4f64..1e-2,
    ) {
        let g = Grid2D::new(16, 12, 4.0, 3.0).unwrap();
        let mut r = rng(seed);
        let mut s = SimState::new(
            g.clone(),
            smooth_field(&g, &mut r, 0.0, 0.5, 20),
            smooth_field(&g, &mut r, 0.4, 0.1, 20),
        )
        .unwrap();
        let p = params(1.0, 0.0);
        let cfg = StepConfig::with_defaults(&p, &s, dt, PotentialMode::Regularized, ns);
        refresh_caches(&mut s, &p, &cfg).unwrap();
        let (n, _) = step(&s, &p, &cfg).unwrap();
        prop_assert!((g.mean(&n.phi) - g.mean(&s.phi)).abs() < 1e-13);
        prop_assert!((g.mean(&n.rho) - g.mean(&s.rho)).abs() < 1e-13);
    }
}

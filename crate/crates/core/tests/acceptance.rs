//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! values. Exits non-zero if any criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DMatrix;
use nschs::diagnostics::{adsorption_statistic, TraceRecord};
use nschs::grid::{Grid2D, HelmholtzCoeffs};
use nschs::io::config::{parse_config, RunConfig};
use nschs::io::driver::{converge, perturb, run_simulation, sweep_eps, RunOutcome};
use nschs::model::{
    chemical_potential_phi, chemical_potential_rho, energy, regularize_initial_rho, EnergyMode,
    NewtonOptions, PotentialMode, SimState,
};
use nschs::params::ModelParams;
use nschs::potentials::{
    convexity_certificate, eval_s_rho_eps, eval_s_rho_singular, FloryHuggins, Order,
    RegularizedPotential,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn config(name: &str) -> RunConfig {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    parse_config(&p).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Run with every step recorded.
fn run_all_steps(mut c: RunConfig, out: Option<&Path>) -> RunOutcome {
    c.run.output_every = 1;
    c.run.snapshot_every = 0;
    run_simulation(&c, out).expect("run")
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Shared benchmark runs.
struct Runs {
    spinodal: RunOutcome,
    spinodal_time: Duration,
    spinodal_trace: PathBuf,
    adsorption: RunOutcome,
    singular: RunOutcome,
    full_flow: RunOutcome,
    eps_sweep: RunOutcome,
    converge_cfg: RunOutcome,
    _dir: tempfile::TempDir,
}

impl Runs {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spin_dir = dir.path().join("spinodal");
        let t0 = Instant::now();
        let spinodal = single_threaded(|| run_all_steps(config("spinodal.toml"), Some(&spin_dir)));
        let spinodal_time = t0.elapsed();
        Runs {
            spinodal,
            spinodal_time,
            spinodal_trace: spin_dir.join("trace.csv"),
            adsorption: run_all_steps(config("adsorption.toml"), None),
            singular: run_all_steps(config("singular.toml"), None),
            full_flow: run_all_steps(config("full_flow.toml"), None),
            eps_sweep: run_all_steps(config("eps_sweep.toml"), None),
            converge_cfg: run_all_steps(config("converge.toml"), None),
            _dir: dir,
        }
    }

    fn all(&self) -> [(&'static str, &RunOutcome); 6] {
        [
            ("spinodal", &self.spinodal),
            ("adsorption", &self.adsorption),
            ("singular", &self.singular),
            ("full_flow", &self.full_flow),
            ("eps_sweep", &self.eps_sweep),
            ("converge", &self.converge_cfg),
        ]
    }
}

fn mass_conservation(runs: &Runs) -> Verdict {
    let o = &runs.spinodal;
    let first = o.records[0];
    let steps = o.simulation.steps();
    let dphi = o
        .records
        .iter()
        .map(|r| (r.mass_phi - first.mass_phi).abs())
        .fold(0.0, f64::max);
    let drho = o
        .records
        .iter()
        .map(|r| (r.mass_rho - first.mass_rho).abs())
        .fold(0.0, f64::max);
    let t = secs(runs.spinodal_time);
    verdict(
        o.trip.is_none() && steps == 2000 && dphi <= 1e-12 && drho <= 1e-12 && t <= 60.0,
        format!(
            "mass conservation, 64x64 spinodal, {steps} steps: drift phi {dphi:.2e} rho {drho:.2e} (<= 1e-12), {t:.1} s single-threaded (<= 60 s)"
        ),
    )
}

fn summed_residual(records: &[TraceRecord]) -> f64 {
    records[1..].iter().map(|r| r.energy_residual.abs()).sum()
}

fn energy_dissipation(runs: &Runs) -> Verdict {
    let rec = &runs.spinodal.records;
    let worst = rec
        .windows(2)
        .map(|w| (w[1].energy.total - w[0].energy.total) / w[0].energy.total.abs())
        .fold(f64::NEG_INFINITY, f64::max);
    let monotone = worst <= 1e-10;

    let dts = [2e-4, 1e-4, 5e-5];
    let sums: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let mut c = config("full_flow.toml");
            c.stepper.dt = dt;
            let o = run_all_steps(c, None);
            assert!(o.trip.is_none(), "full flow dt {dt}: {:?}", o.trip);
            summed_residual(&o.records)
        })
        .collect();
    let orders: Vec<f64> = sums.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order_ok = orders.iter().all(|&p| p >= 0.9);
    verdict(
        monotone && order_ok,
        format!(
            "energy dissipation: max relative step increase {worst:.2e} (<= 1e-10); full-flow summed |residual| {:.3e} {:.3e} {:.3e}, orders {:.3} {:.3} (>= 0.9)",
            sums[0], sums[1], sums[2], orders[0], orders[1]
        ),
    )
}

fn lower_bound(runs: &Runs) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, o) in runs.all() {
        let bound = o.simulation.lower_bound();
        let min = o
            .records
            .iter()
            .map(|r| r.energy.total)
            .fold(f64::INFINITY, f64::min);
        pass &= o.trip.is_none() && min >= bound;
        parts.push(format!("{name} {min:.4e} >= {bound:.4e}"));
    }
    verdict(pass, format!("energy lower bound: {}", parts.join(", ")))
}

const DELTA: f64 = 1e-6;

fn fd_errors() -> (f64, f64) {
    let g = Grid2D::new(16, 16, 4.0, 4.0).unwrap();
    let p = ModelParams {
        penalty_omega: 0.3,
        regularization_eps: Some(0.05),
        ..ModelParams::default()
    };
    let mut r = rng(2024);
    let phi = random_field(&g, &mut r, -1.0, 1.0);
    let rho = random_field(&g, &mut r, 0.1, 0.9);
    let total = |phi: &nschs::grid::ScalarField, rho: &nschs::grid::ScalarField, mode| {
        energy(
            &SimState::new(g.clone(), phi.clone(), rho.clone()).unwrap(),
            &p,
            mode,
        )
        .total
    };
    let mu = chemical_potential_phi(&g, &phi, &rho, &p);
    let mut mu_err = 0.0_f64;
    for _ in 0..10 {
        let v = random_field(&g, &mut r, -1.0, 1.0);
        let mut plus = phi.clone();
        plus.axpy(DELTA, &v);
        let mut minus = phi.clone();
        minus.axpy(-DELTA, &v);
        let fd = (total(&plus, &rho, EnergyMode::Penalized)
            - total(&minus, &rho, EnergyMode::Penalized))
            / (2.0 * DELTA);
        mu_err = mu_err.max(rel_err(g.inner(&mu, &v), fd));
    }
    let mut psi_err = 0.0_f64;
    for (mode, emode) in [
        (PotentialMode::Singular, EnergyMode::Penalized),
        (PotentialMode::Regularized, EnergyMode::Approx),
    ] {
        let psi = chemical_potential_rho(&g, &phi, &rho, &p, mode).unwrap();
        for _ in 0..10 {
            let w = random_field(&g, &mut r, -0.05, 0.05);
            let mut plus = rho.clone();
            plus.axpy(DELTA, &w);
            let mut minus = rho.clone();
            minus.axpy(-DELTA, &w);
            let fd = (total(&phi, &plus, emode) - total(&phi, &minus, emode)) / (2.0 * DELTA);
            psi_err = psi_err.max(rel_err(g.inner(&psi, &w), fd));
        }
    }
    (mu_err, psi_err)
}

fn variational_consistency() -> Verdict {
    let t0 = Instant::now();
    let (mu, psi) = fd_errors();
    let t = secs(t0.elapsed());
    verdict(
        mu <= 1e-5 && psi <= 1e-5 && t <= 5.0,
        format!(
            "variational consistency, 16x16, 10 directions: mu {mu:.2e} psi {psi:.2e} (<= 1e-5), {t:.2} s (<= 5 s)"
        ),
    )
}

fn operator_oracles() -> Verdict {
    let g = Grid2D::new(8, 8, 1.3, 0.9).unwrap();
    let n = g.num_cells();
    let faces = interior_faces(&g).len();
    let mut grad = DMatrix::zeros(faces, n);
    for k in 0..n {
        grad.set_column(k, &mac_to_vec(&g, &g.gradient(&unit(&g, k))));
    }
    let mut div = DMatrix::zeros(n, faces);
    for k in 0..faces {
        let mut e = nalgebra::DVector::zeros(faces);
        e[k] = 1.0;
        div.set_column(k, &to_vec(&g.divergence(&mac_from_vec(&g, &e))));
    }
    let adjoint = mat_rel_err(&div, &(-grad.transpose()));
    let lap = assemble(&g, |f| g.laplacian(f));
    let sbp = mat_rel_err(&lap, &(-grad.transpose() * &grad));

    let mut r = rng(55);
    let id = DMatrix::<f64>::identity(n, n);
    let mut helm = 0.0_f64;
    for c in [
        HelmholtzCoeffs::new(1.0, -1.0, 0.0, 0.0),
        HelmholtzCoeffs::new(1.0, -0.3, 0.01, -0.002),
        HelmholtzCoeffs::new(1.0, -6.64e-3, 1e-3, -0.5e-3),
    ] {
        let a = &id * c.a + &lap * c.b + &lap * &lap * c.c + &lap * &lap * &lap * c.d;
        let rhs = random_field(&g, &mut r, -1.0, 1.0);
        let dense = from_vec(&g, &a.lu().solve(&to_vec(&rhs)).unwrap());
        helm = helm.max(field_rel_err(&dense, &g.helmholtz_solve(c, &rhs).unwrap()));
    }

    let p0 = DMatrix::from_element(n, n, 1.0 / n as f64);
    let inv = (-&lap + &p0).try_inverse().unwrap();
    let mut neumann = 0.0_f64;
    for _ in 0..5 {
        let f = mean_free(&g, &random_field(&g, &mut r, -1.0, 1.0));
        let dense = from_vec(&g, &(&inv * to_vec(&f)));
        neumann = neumann.max(field_rel_err(&dense, &g.inv_neumann_laplacian(&f).unwrap()));
    }

    let mut proj = 0.0_f64;
    for m in [1, 5, 20, 64] {
        let p = assemble(&g, |f| g.galerkin_project(f, m));
        proj = proj.max(mat_rel_err(&p, &p.transpose()));
    }
    let worst = adjoint.max(sbp).max(helm).max(neumann).max(proj);
    verdict(
        worst <= 1e-10,
        format!(
            "operator oracles, 8x8: adjoint {adjoint:.1e} sbp {sbp:.1e} helmholtz {helm:.1e} inverse {neumann:.1e} projector {proj:.1e} (<= 1e-10)"
        ),
    )
}

fn regularized_potential() -> Verdict {
    let p = FloryHuggins::new(2.0, 0.0, 0.25).unwrap();
    let orders = [Order::Value, Order::First, Order::Second];
    let mut c2 = 0.0_f64;
    for eps in [0.1, 0.05, 0.025, 0.01] {
        let r = RegularizedPotential::new(p, eps).unwrap();
        for s in [eps, 1.0 - eps] {
            for o in orders {
                let a = eval_s_rho_eps(&r, s, o);
                let b = eval_s_rho_singular(&p, s, o).unwrap();
                c2 = c2.max((a - b).abs() / (f64::EPSILON * b.abs().max(1.0)));
            }
        }
    }
    let mut ordered = true;
    let mut sup = f64::NEG_INFINITY;
    for eps in [0.1, 0.01] {
        let r = RegularizedPotential::new(p, eps).unwrap();
        for k in 0..=10_000 {
            let s = k as f64 / 10_000.0;
            let sing = p.entropy(s, Order::Value).unwrap();
            ordered &= r.entropy(s, Order::Value) <= sing + 1e-15;
            sup = sup.max(sing);
        }
    }
    let a = convexity_certificate(&RegularizedPotential::new(p, 0.1).unwrap());
    let b = convexity_certificate(&RegularizedPotential::new(p, 0.01).unwrap());
    let dg1 = (a.gamma1 - b.gamma1).abs();
    let dg2 = (a.gamma2 - b.gamma2).abs();
    verdict(
        c2 <= 8.0 && ordered && sup <= 0.0 && dg1 <= 1e-12 && dg2 <= 1e-12,
        format!(
            "regularized potential: C2 match {c2:.1} eps (<= 8); S_eps <= S <= {sup:.3e} on 10^4 points: {ordered}; gamma1 {:.6} vs {:.6}, gamma2 {:.6} vs {:.6}",
            a.gamma1, b.gamma1, a.gamma2, b.gamma2
        ),
    )
}

fn boundedness(runs: &Runs) -> Verdict {
    let o = &runs.singular;
    let rho0 = &o.records[0];
    let inside = o.records.iter().all(|r| r.rho_min > 0.0 && r.rho_max < 1.0);
    let clamps = o.simulation.total_clamp_events();
    let eta = o.simulation.min_eta();
    let initial_ok = rho0.rho_min >= 0.2 && rho0.rho_max <= 0.8;

    let sweep = sweep_eps(&config("eps_sweep.toml"), &[0.1, 0.05, 0.025]).expect("sweep");
    let exc: Vec<String> = sweep
        .members
        .iter()
        .map(|m| format!("{:.3e}", m.max_excursion))
        .collect();
    let pass = o.trip.is_none()
        && initial_ok
        && inside
        && clamps == 0
        && eta >= 0.01
        && sweep.any_trip().is_none()
        && sweep.excursions_non_increasing();
    verdict(
        pass,
        format!(
            "boundedness: singular run rho0 in [{:.3}, {:.3}], rho in (0,1) throughout: {inside}, clamp events {clamps} (= 0), min eta {eta:.3e} (>= 0.01); eps sweep 0.1/0.05/0.025 max excursion {} non-increasing: {}",
            rho0.rho_min,
            rho0.rho_max,
            exc.join(" "),
            sweep.excursions_non_increasing()
        ),
    )
}

fn adsorption(runs: &Runs) -> Verdict {
    let a = adsorption_statistic(runs.adsorption.simulation.state());
    verdict(
        runs.adsorption.trip.is_none() && a > 0.5,
        format!("surfactant adsorption: statistic {a:.4} (> 0.5)"),
    )
}

fn convergence() -> Verdict {
    let t0 = Instant::now();
    let r = converge(&config("converge.toml")).expect("converge");
    let t = secs(t0.elapsed());
    verdict(
        r.passed() && t <= 600.0,
        format!(
            "convergence: spatial order {:.3} (>= 1.8), temporal order {:.3} (>= 0.9), {t:.1} s (<= 600 s)",
            r.spatial_order, r.temporal_order
        ),
    )
}

fn determinism(runs: &Runs) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let again = run_all_steps(config("spinodal.toml"), Some(dir.path()));
    let a = std::fs::read(&runs.spinodal_trace).unwrap();
    let b = std::fs::read(dir.path().join("trace.csv")).unwrap();
    let identical = again.trip.is_none() && a == b;

    let c = config("spinodal.toml");
    let big = perturb(&c, 1e-4).expect("perturb");
    let small = perturb(&c, 1e-6).expect("perturb");
    let max_ratio = small.max_y_ratio.unwrap_or(f64::INFINITY);
    let agree = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) if x > 0.0 && y > 0.0 => (x / y).max(y / x),
        _ => f64::INFINITY,
    };
    let fy = agree(big.amplification_y, small.amplification_y);
    let fz = agree(big.amplification_z, small.amplification_z);
    let show = |v: Option<f64>| v.map_or("undefined".into(), |x| format!("{x:.4}"));
    verdict(
        identical && max_ratio <= 1e3 && fy <= 2.0 && fz <= 2.0,
        format!(
            "determinism: traces bitwise identical: {identical}; delta 1e-6 max Y(t)/Y(0) {max_ratio:.4} (<= 1e3); amplification Y {} vs {} (factor {fy:.3}), Z {} vs {} (factor {fz:.3}) (<= 2)",
            show(big.amplification_y),
            show(small.amplification_y),
            show(big.amplification_z),
            show(small.amplification_z)
        ),
    )
}

fn initial_regularization() -> Verdict {
    let g = Grid2D::new(16, 16, 2.0, 2.0).unwrap();
    let p = ModelParams::default();
    let opts = NewtonOptions::default();
    let mut residual = 0.0_f64;

    let mut fixed = true;
    for k in [0.0, 0.5, 10.0] {
        let out = regularize_initial_rho(&g, &g.constant(0.5), k, &p, &opts).unwrap();
        fixed &= out.psi_hat.iter().all(|v| v.abs() < 1e-14);
        fixed &= out.rho.iter().all(|v| (v - 0.5).abs() < 1e-12);
        residual = residual.max(out.residual);
    }

    let rho0 = g.scalar_from_fn(|x, y| 0.5 + 0.3 * (x * 2.0).cos() * (y * 1.5).sin());
    let probe = regularize_initial_rho(&g, &rho0, f64::INFINITY, &p, &opts).unwrap();
    let sup = probe.psi_hat.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let out = regularize_initial_rho(&g, &rho0, 1.5 * sup, &p, &opts).unwrap();
    residual = residual.max(out.residual);
    let inactive = max_abs_diff(&out.rho, &rho0);

    let rho0 = g.scalar_from_fn(|x, y| 0.5 + 0.45 * ((x * 3.0).cos() * (y * 2.0).cos()));
    let full = regularize_initial_rho(&g, &rho0, f64::INFINITY, &p, &opts).unwrap();
    let sup = full.psi_hat.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let a = regularize_initial_rho(&g, &rho0, 0.2 * sup, &p, &opts).unwrap();
    let b = regularize_initial_rho(&g, &rho0, 0.6 * sup, &p, &opts).unwrap();
    residual = residual.max(a.residual).max(b.residual);
    let h1 = |f: &nschs::grid::ScalarField| g.norms(f).h1;
    let (n1, n2, n0) = (h1(&a.psi_hat_k), h1(&b.psi_hat_k), h1(&full.psi_hat));
    let monotone = n1 <= n2 && n2 <= n0;
    let interior = a
        .rho
        .iter()
        .chain(b.rho.iter())
        .all(|&v| v > 0.0 && v < 1.0);

    verdict(
        fixed && inactive <= 1e-9 && monotone && interior && residual <= 1e-10,
        format!(
            "initial-data regularization: fixed point {fixed}; inactive cutoff deviation {inactive:.1e}; H1 norms {n1:.4} <= {n2:.4} <= {n0:.4}; Newton residual {residual:.1e} (<= 1e-10)"
        ),
    )
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let runs = Runs::new();
    let results: Vec<Verdict> = vec![
        mass_conservation(&runs),
        energy_dissipation(&runs),
        lower_bound(&runs),
        variational_consistency(),
        operator_oracles(),
        regularized_potential(),
        boundedness(&runs),
        adsorption(&runs),
        convergence(),
        determinism(&runs),
        initial_regularization(),
    ];
    let mut failed = 0;
    for (k, v) in results.iter().enumerate() {
        println!(
            "criterion {:>2}: {}  {}",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1} s)",
        results.len() - failed,
        secs(t0.elapsed())
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

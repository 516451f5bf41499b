//! Model constants and sample-based checks of the structural assumptions.

use std::fmt;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::potentials::{
    FloryHuggins, Order, PotentialError, QuarticPotential, RegularizedPotential,
};

/// Seed of the random part of the viscosity sampling.
pub const VALIDATION_SEED: u64 = 0x5eed_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    H1,
    H2,
    H3,
    H4,
    H5,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::H1 => "H1",
            Assumption::H2 => "H2",
            Assumption::H3 => "H3",
            Assumption::H4 => "H4",
            Assumption::H5 => "H5",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamsError {
    #[error("parameter {0} is not finite")]
    NonFinite(&'static str),
    #[error("{assumption} violated: {detail}")]
    Violated {
        assumption: Assumption,
        detail: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("sample_count must be at least 100, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViscosityKind {
    #[default]
    Constant,
    SmoothBlend,
}

/// `nu(phi, rho)`; the blend depends on `phi` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityLaw {
    pub kind: ViscosityKind,
    pub nu1: f64,
    pub nu2: f64,
    pub nu_floor: f64,
    pub nu_ceil: f64,
}

impl Default for ViscosityLaw {
    fn default() -> Self {
        Self::constant(1.0)
    }
}

impl ViscosityLaw {
    pub fn constant(nu: f64) -> Self {
        Self {
            kind: ViscosityKind::Constant,
            nu1: nu,
            nu2: nu,
            nu_floor: nu,
            nu_ceil: nu,
        }
    }

    /// Blend with floor and ceiling set to the closed-form range.
    pub fn smooth_blend(nu1: f64, nu2: f64) -> Self {
        Self {
            kind: ViscosityKind::SmoothBlend,
            nu1,
            nu2,
            nu_floor: nu1.min(nu2),
            nu_ceil: nu1.max(nu2),
        }
    }

    pub fn eval(&self, phi: f64, _rho: f64) -> f64 {
        let raw = match self.kind {
            ViscosityKind::Constant => self.nu1,
            ViscosityKind::SmoothBlend => {
                self.nu2 + (self.nu1 - self.nu2) * 0.5 * (1.0 + phi.tanh())
            }
        };
        // rounding in the blend can step one ulp past the closed-form range
        raw.clamp(self.nu_floor, self.nu_ceil)
    }

    /// Range of the unclamped law over all reals.
    pub fn closed_form_range(&self) -> (f64, f64) {
        match self.kind {
            ViscosityKind::Constant => (self.nu1, self.nu1),
            ViscosityKind::SmoothBlend => (self.nu1.min(self.nu2), self.nu1.max(self.nu2)),
        }
    }

    fn check(&self) -> Result<(), ParamsError> {
        for (name, v) in [
            ("viscosity.nu1", self.nu1),
            ("viscosity.nu2", self.nu2),
            ("viscosity.nu_floor", self.nu_floor),
            ("viscosity.nu_ceil", self.nu_ceil),
        ] {
            if !v.is_finite() {
                return Err(ParamsError::NonFinite(name));
            }
        }
        let h1 = |detail: String| ParamsError::Violated {
            assumption: Assumption::H1,
            detail,
        };
        if self.nu_floor <= 0.0 {
            return Err(h1(format!("nu_floor = {} must be positive", self.nu_floor)));
        }
        if self.nu_ceil < self.nu_floor {
            return Err(h1(format!(
                "nu_ceil = {} is below nu_floor = {}",
                self.nu_ceil, self.nu_floor
            )));
        }
        let (lo, hi) = self.closed_form_range();
        if lo < self.nu_floor || hi > self.nu_ceil {
            return Err(h1(format!(
                "law range [{lo}, {hi}] leaves [{}, {}]",
                self.nu_floor, self.nu_ceil
            )));
        }
        Ok(())
    }
}

pub fn viscosity_eval(law: &ViscosityLaw, phi: f64, rho: f64) -> f64 {
    law.eval(phi, rho)
}

/// Constants of the growth and lower-bound conditions on the potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionConstants {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub l1: f64,
    pub growth_c: f64,
}

impl Default for AssumptionConstants {
    /// Admissible for the quartic double well. `growth_c = 4` is sharp at
    /// `s = 1/2` for `theta1 = 2`; 5 leaves slack.
    fn default() -> Self {
        Self {
            c0: 1.0,
            c1: 4.0,
            c2: 1.0,
            c3: 0.125,
            c4: 1.0,
            l1: 1.0,
            growth_c: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub viscosity: ViscosityLaw,
    pub potential: FloryHuggins,
    pub assumptions: AssumptionConstants,
    pub penalty_omega: f64,
    pub regularization_eps: Option<f64>,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 1.0,
            theta: 1.0,
            viscosity: ViscosityLaw::default(),
            potential: FloryHuggins::default(),
            assumptions: AssumptionConstants::default(),
            penalty_omega: 0.0,
            regularization_eps: None,
        }
    }
}

impl ModelParams {
    /// Structural checks: finiteness, signs, ranges of omega and eps.
    pub fn check(&self) -> Result<(), ParamsError> {
        let a = &self.assumptions;
        let p = &self.potential;
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("theta", self.theta),
            ("penalty_omega", self.penalty_omega),
            ("potential.theta1", p.theta1),
            ("potential.theta2", p.theta2),
            ("potential.eps1", p.eps1),
            ("assumptions.c0", a.c0),
            ("assumptions.c1", a.c1),
            ("assumptions.c2", a.c2),
            ("assumptions.c3", a.c3),
            ("assumptions.c4", a.c4),
            ("assumptions.l1", a.l1),
            ("assumptions.growth_c", a.growth_c),
        ] {
            if !v.is_finite() {
                return Err(ParamsError::NonFinite(name));
            }
        }
        if let Some(eps) = self.regularization_eps {
            if !eps.is_finite() {
                return Err(ParamsError::NonFinite("regularization_eps"));
            }
        }
        self.viscosity.check()?;
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("theta", self.theta),
        ] {
            if v <= 0.0 {
                return Err(ParamsError::Violated {
                    assumption: Assumption::H4,
                    detail: format!("{name} = {v} must be positive"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.penalty_omega) {
            return Err(ParamsError::Invalid(format!(
                "penalty_omega = {} must lie in [0, 1]",
                self.penalty_omega
            )));
        }
        FloryHuggins::new(p.theta1, p.theta2, p.eps1).map_err(|e| ParamsError::Violated {
            assumption: Assumption::H3,
            detail: e.to_string(),
        })?;
        if let Some(eps) = self.regularization_eps {
            RegularizedPotential::new(*p, eps)?;
        }
        if a.c1 <= 0.0 || a.c3 <= 0.0 || a.c0 < 0.0 || a.c2 < 0.0 || a.c4 < 0.0 {
            return Err(ParamsError::Violated {
                assumption: Assumption::H2,
                detail: "need c1 > 0, c3 > 0 and c0, c2, c4 >= 0".into(),
            });
        }
        if a.l1 < 0.0 {
            return Err(ParamsError::Violated {
                assumption: Assumption::H3,
                detail: format!("l1 = {} must be nonnegative", a.l1),
            });
        }
        if a.growth_c <= 0.0 {
            return Err(ParamsError::Violated {
                assumption: Assumption::H5,
                detail: format!("growth_c = {} must be positive", a.growth_c),
            });
        }
        Ok(())
    }

    pub fn regularized(&self) -> Option<RegularizedPotential> {
        self.regularization_eps
            .map(|eps| RegularizedPotential::new(self.potential, eps).expect("checked eps"))
    }

    /// Growth constant of the smooth remainder.
    pub fn c_r(&self) -> f64 {
        self.potential
            .remainder_growth_constant(self.assumptions.l1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    /// Smallest sampled slack; negative means violated.
    pub worst_margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    /// Advisory tail condition `k1 >= C_R + theta^2 / (2 omega)`; only
    /// present when both eps and a positive omega are configured.
    pub tail_advisory: Option<(bool, f64)>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {} worst_margin={:.6e} {}",
                c.assumption,
                if c.passed { "pass" } else { "FAIL" },
                c.worst_margin,
                c.detail
            )?;
        }
        if let Some((ok, margin)) = self.tail_advisory {
            writeln!(
                f,
                "tail advisory {} margin={margin:.6e}",
                if ok { "ok" } else { "not met" }
            )?;
        }
        Ok(())
    }
}

const MARGIN_TOL: f64 = 1e-12;

fn linspace(a: f64, b: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| a + (b - a) * k as f64 / (n - 1) as f64)
}

fn worst(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

fn check_from(assumption: Assumption, margin: f64, detail: String) -> AssumptionCheck {
    AssumptionCheck {
        assumption,
        passed: margin >= -MARGIN_TOL,
        worst_margin: margin,
        detail,
    }
}

pub fn validate_assumptions(
    params: &ModelParams,
    sample_count: usize,
) -> Result<ValidationReport, ParamsError> {
    if sample_count < 100 {
        return Err(ParamsError::TooFewSamples(sample_count));
    }
    params.check()?;
    let a = &params.assumptions;
    let fh = &params.potential;
    let quartic = QuarticPotential;
    let mut checks = Vec::with_capacity(5);

    // H1: bounds of the viscosity on a tensor grid plus seeded random points
    let per_axis = (sample_count as f64).sqrt().ceil() as usize;
    let law = &params.viscosity;
    let margin_at = |phi: f64, rho: f64| {
        let nu = law.eval(phi, rho);
        (nu - law.nu_floor).min(law.nu_ceil - nu)
    };
    let mut h1 = f64::INFINITY;
    for phi in linspace(-3.0, 3.0, per_axis) {
        for rho in linspace(-1.0, 2.0, per_axis) {
            h1 = h1.min(margin_at(phi, rho));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(VALIDATION_SEED);
    for _ in 0..sample_count {
        let phi = rng.random_range(-3.0..=3.0);
        let rho = rng.random_range(-1.0..=2.0);
        h1 = h1.min(margin_at(phi, rho));
    }
    checks.push(check_from(
        Assumption::H1,
        h1,
        format!("nu in [{}, {}] on [-3,3]x[-1,2]", law.nu_floor, law.nu_ceil),
    ));

    // H2: curvature floor, coercivity and quartic growth of S_phi
    let h2 = worst(linspace(-5.0, 5.0, sample_count).map(|s| {
        let v = quartic.eval(s, Order::Value);
        let d1 = quartic.eval(s, Order::First);
        let d2 = quartic.eval(s, Order::Second);
        let m1 = d2 + a.c0;
        let m2 = d1 * s - a.c1 * v + a.c2;
        let m3 = v - a.c3 * s.powi(4) + a.c4;
        m1.min(m2).min(m3)
    }));
    checks.push(check_from(
        Assumption::H2,
        h2,
        "S'' >= -c0, S' s >= c1 S - c2, S >= c3 s^4 - c4 on [-5,5]".into(),
    ));

    // H3: remainder curvature and monotone entropy curvature near the ends
    let curv_margin = worst(
        linspace(-5.0, 5.0, sample_count).map(|s| a.l1 - fh.remainder(s, Order::Second).abs()),
    );
    let n_end = sample_count.max(2);
    let left: Vec<f64> = linspace(1e-8, fh.eps1, n_end)
        .map(|s| fh.entropy(s, Order::Second).expect("interior"))
        .collect();
    let right: Vec<f64> = linspace(1.0 - fh.eps1, 1.0 - 1e-8, n_end)
        .map(|s| fh.entropy(s, Order::Second).expect("interior"))
        .collect();
    let mono = worst(
        left.windows(2)
            .map(|w| (w[0] - w[1]) / w[0].abs().max(1.0))
            .chain(
                right
                    .windows(2)
                    .map(|w| (w[1] - w[0]) / w[1].abs().max(1.0)),
            ),
    );
    checks.push(check_from(
        Assumption::H3,
        curv_margin.min(mono),
        format!(
            "|R''| <= l1 = {} on [-5,5]; S'' monotone within eps1 = {} of the ends",
            a.l1, fh.eps1
        ),
    ));

    // H4: positivity was enforced by check(); report the smallest constant
    let h4 = params.alpha.min(params.beta).min(params.theta);
    checks.push(check_from(
        Assumption::H4,
        h4,
        "alpha, beta, theta > 0".into(),
    ));

    // H5 in log form to avoid overflow of the exponential
    let c = a.growth_c;
    let h5 = worst(linspace(1e-8, 1.0 - 1e-8, sample_count).map(|s| {
        let d1 = fh.entropy(s, Order::First).expect("interior");
        let d2 = fh.entropy(s, Order::Second).expect("interior");
        c.ln() + c * d1.abs() - d2.ln()
    }));
    checks.push(check_from(
        Assumption::H5,
        h5,
        format!("ln S'' <= ln C + C |S'| with C = {c}"),
    ));

    let tail_advisory = match (params.regularized(), params.penalty_omega > 0.0) {
        (Some(reg), true) => {
            let margin = reg.tail_coefficient()
                - params.c_r()
                - params.theta * params.theta / (2.0 * params.penalty_omega);
            Some((margin >= 0.0, margin))
        }
        _ => None,
    };

    Ok(ValidationReport {
        checks,
        tail_advisory,
    })
}

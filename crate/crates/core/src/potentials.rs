//! Bulk potentials: the quartic double well for the phase field, the
//! Flory-Huggins mixing entropy for the surfactant, and the C^2 quadratic
//! extension of the entropy outside `(eps, 1 - eps)`.

use std::fmt;

/// Derivative order requested from a potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

impl TryFrom<u8> for Order {
    type Error = PotentialError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Order::Value),
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            other => Err(PotentialError::BadOrder(other)),
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Order::Value => 0,
            Order::First => 1,
            Order::Second => 2,
        };
        write!(f, "{n}")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PotentialError {
    #[error("singular potential of order {order} is undefined at s = {s} (use the regularized potential or clamp)")]
    Domain { s: f64, order: Order },
    #[error("derivative order {0} is not supported (0, 1 or 2)")]
    BadOrder(u8),
    #[error("regularization eps = {eps} must lie in (0, {eps1})")]
    BadEps { eps: f64, eps1: f64 },
    #[error("Flory-Huggins parameters invalid: {0}")]
    BadParams(String),
}

/// `S(s) = (s^2 - 1)^2 / 4`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuarticPotential;

impl QuarticPotential {
    pub fn eval(&self, s: f64, order: Order) -> f64 {
        match order {
            Order::Value => 0.25 * (s * s - 1.0).powi(2),
            Order::First => s * s * s - s,
            Order::Second => 3.0 * s * s - 1.0,
        }
    }
}

pub fn eval_s_phi(s: f64, order: Order) -> f64 {
    QuarticPotential.eval(s, order)
}

/// `S(s) = theta1/2 [s ln s + (1-s) ln(1-s)] + theta2/2 s (1-s)`.
///
/// The entropy part is convex with second derivative nonincreasing on
/// `(0, 1/2]` and nondecreasing on `[1/2, 1)`, so any `eps1 <= 1/2` is an
/// admissible monotonicity neighborhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloryHuggins {
    pub theta1: f64,
    pub theta2: f64,
    pub eps1: f64,
}

impl Default for FloryHuggins {
    fn default() -> Self {
        Self {
            theta1: 2.0,
            theta2: 0.0,
            eps1: 0.25,
        }
    }
}

fn xlogx(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s * s.ln()
    }
}

impl FloryHuggins {
    pub fn new(theta1: f64, theta2: f64, eps1: f64) -> Result<Self, PotentialError> {
        if !(theta1.is_finite() && theta1 > 0.0) {
            return Err(PotentialError::BadParams(format!(
                "theta1 = {theta1} must be positive"
            )));
        }
        if !theta2.is_finite() {
            return Err(PotentialError::BadParams(format!(
                "theta2 = {theta2} must be finite"
            )));
        }
        if !(eps1 > 0.0 && eps1 < 0.5) {
            return Err(PotentialError::BadParams(format!(
                "eps1 = {eps1} must lie in (0, 1/2)"
            )));
        }
        Ok(Self {
            theta1,
            theta2,
            eps1,
        })
    }

    /// Entropy part alone. Order 0 is extended by continuity to `[0, 1]`
    /// and is `+inf` outside; higher orders need `s` in `(0, 1)`.
    pub fn entropy(&self, s: f64, order: Order) -> Result<f64, PotentialError> {
        let h = 0.5 * self.theta1;
        match order {
            Order::Value => {
                if (0.0..=1.0).contains(&s) {
                    Ok(h * (xlogx(s) + xlogx(1.0 - s)))
                } else {
                    Ok(f64::INFINITY)
                }
            }
            _ if !(s > 0.0 && s < 1.0) => Err(PotentialError::Domain { s, order }),
            Order::First => Ok(h * (s / (1.0 - s)).ln()),
            Order::Second => Ok(h * (1.0 / s + 1.0 / (1.0 - s))),
        }
    }

    /// Smooth remainder `R(s) = theta2/2 s (1 - s)`, defined on all reals.
    pub fn remainder(&self, s: f64, order: Order) -> f64 {
        let h = 0.5 * self.theta2;
        match order {
            Order::Value => h * s * (1.0 - s),
            Order::First => h * (1.0 - 2.0 * s),
            Order::Second => -2.0 * h,
        }
    }

    /// Full singular potential `S_rho = S_hat + R`.
    pub fn eval(&self, s: f64, order: Order) -> Result<f64, PotentialError> {
        Ok(self.entropy(s, order)? + self.remainder(s, order))
    }

    /// Constant with `|R(s)| <= C_R (1 + s^2)`, built from `R(0)`, `R'(0)`
    /// and the curvature bound `l1`.
    pub fn remainder_growth_constant(&self, l1: f64) -> f64 {
        self.remainder(0.0, Order::Value).abs()
            + 0.5 * self.remainder(0.0, Order::First).abs()
            + 0.5 * l1
    }
}

pub fn eval_s_rho_singular(p: &FloryHuggins, s: f64, order: Order) -> Result<f64, PotentialError> {
    p.eval(s, order)
}

/// Lower and upper curvature constants of the regularized entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityCertificate {
    /// `S_hat_eps >= -gamma1` on the real line.
    pub gamma1: f64,
    /// `S_eps'' >= -gamma2`.
    pub gamma2: f64,
    /// `S_eps'' <= gamma3`; grows as `eps -> 0`.
    pub gamma3: f64,
}

/// Entropy replaced by its second-order Taylor polynomial about `eps`
/// (left) and `1 - eps` (right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedPotential {
    base: FloryHuggins,
    eps: f64,
    // Taylor data (value, first, second) at eps and 1 - eps
    left: [f64; 3],
    right: [f64; 3],
}

impl RegularizedPotential {
    pub fn new(base: FloryHuggins, eps: f64) -> Result<Self, PotentialError> {
        if !(eps > 0.0 && eps < base.eps1) {
            return Err(PotentialError::BadEps {
                eps,
                eps1: base.eps1,
            });
        }
        let taylor = |s: f64| -> [f64; 3] {
            [
                base.entropy(s, Order::Value).expect("inside (0,1)"),
                base.entropy(s, Order::First).expect("inside (0,1)"),
                base.entropy(s, Order::Second).expect("inside (0,1)"),
            ]
        };
        Ok(Self {
            base,
            eps,
            left: taylor(eps),
            right: taylor(1.0 - eps),
        })
    }

    pub fn base(&self) -> &FloryHuggins {
        &self.base
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn quadratic(data: &[f64; 3], d: f64, order: Order) -> f64 {
        match order {
            Order::Value => data[0] + data[1] * d + 0.5 * data[2] * d * d,
            Order::First => data[1] + data[2] * d,
            Order::Second => data[2],
        }
    }

    /// Regularized entropy part only.
    pub fn entropy(&self, s: f64, order: Order) -> f64 {
        if s <= self.eps {
            Self::quadratic(&self.left, s - self.eps, order)
        } else if s >= 1.0 - self.eps {
            Self::quadratic(&self.right, s - (1.0 - self.eps), order)
        } else {
            self.base.entropy(s, order).expect("inside (eps, 1-eps)")
        }
    }

    /// `S_hat_eps + R`.
    pub fn eval(&self, s: f64, order: Order) -> f64 {
        self.entropy(s, order) + self.base.remainder(s, order)
    }

    /// Curvature bounds. The interior supremum of the entropy curvature is
    /// found by scanning; the minimum sits at `s = 1/2` by symmetry.
    pub fn convexity_certificate(&self) -> ConvexityCertificate {
        let b = &self.base;
        let theta2 = b.theta2.abs();
        let min_curv = b.entropy(0.5, Order::Second).expect("1/2 is interior");
        let gamma2 = theta2 + (-min_curv).max(0.0);

        let n = 10_000;
        let (lo, hi) = (self.eps, 1.0 - self.eps);
        let scan_sup = (1..n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .map(|s| b.entropy(s, Order::Second).expect("interior"))
            .fold(f64::NEG_INFINITY, f64::max);
        let gamma3 = theta2 + self.left[2].max(self.right[2]).max(scan_sup);

        // closed-form minimum of each piece
        let quad_min = |data: &[f64; 3], allowed: &dyn Fn(f64) -> bool| -> f64 {
            let d_star = -data[1] / data[2];
            let at_vertex = data[0] + data[1] * d_star + 0.5 * data[2] * d_star * d_star;
            if allowed(d_star) {
                at_vertex
            } else {
                data[0]
            }
        };
        let left_min = quad_min(&self.left, &|d| d <= 0.0);
        let right_min = quad_min(&self.right, &|d| d >= 0.0);
        let mid_min = b.entropy(0.5, Order::Value).expect("interior");
        let gamma1 = -left_min.min(right_min).min(mid_min);

        ConvexityCertificate {
            gamma1,
            gamma2,
            gamma3,
        }
    }

    /// Coefficient `k1` of the quadratic tails, `S_hat_eps(s) >= -gamma1 +
    /// k1 s^2` for `s <= 0` and `s >= 4`.
    pub fn tail_coefficient(&self) -> f64 {
        (0.5 * self.left[2]).min(0.25 * self.right[2])
    }
}

pub fn eval_s_rho_eps(p: &RegularizedPotential, s: f64, order: Order) -> f64 {
    p.eval(s, order)
}

pub fn convexity_certificate(p: &RegularizedPotential) -> ConvexityCertificate {
    p.convexity_certificate()
}

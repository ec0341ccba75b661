//! Step-size schedules and the accelerated balanced and dual-primal
//! balanced ALM iterations for strongly convex `f`.

use std::fmt;
use std::sync::Arc;

use crate::baseline::Method;
use crate::diagnostics::Iterate;
use crate::linalg::RegularizedGramFactor;
use crate::problem::ConvexProblem;
use crate::{Error, Result, Vector};

/// Relative slack on the schedule conditions. The default schedule meets
/// the growth condition with equality at `k = 0`.
pub const SCHEDULE_SLACK: f64 = 1e-12;

#[derive(Clone)]
pub enum RateRule {
    Constant(f64),
    /// `r^k = scale * (k + 1)`.
    Linear {
        scale: f64,
    },
    Custom(Arc<dyn Fn(i64) -> f64 + Send + Sync>),
}

impl fmt::Debug for RateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateRule::Constant(r) => write!(f, "Constant({r})"),
            RateRule::Linear { scale } => write!(f, "Linear {{ scale: {scale} }}"),
            RateRule::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// `r^k` for `k >= -1` together with `delta'` and the modulus `mu` the
/// schedule was designed for. `r^{-1}` is always `r^0`.
#[derive(Debug, Clone)]
pub struct Schedule {
    rule: RateRule,
    delta_prime: f64,
    mu: f64,
}

impl Schedule {
    fn build(rule: RateRule, delta_prime: f64, mu: f64) -> Result<Self> {
        if !(delta_prime > 0.0 && delta_prime.is_finite()) {
            return Err(Error::Parameter(format!("delta' must be positive, got {delta_prime}")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Parameter(format!("mu must be nonnegative, got {mu}")));
        }
        let s = Schedule { rule, delta_prime, mu };
        let r0 = s.r(0);
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::Parameter(format!("r^0 must be positive, got {r0}")));
        }
        Ok(s)
    }

    /// `r^k = r` for all `k`; valid for every `mu >= 0`.
    pub fn constant(r: f64, delta_prime: f64) -> Result<Self> {
        Self::build(RateRule::Constant(r), delta_prime, 0.0)
    }

    /// `r^k = mu (k + 1) / 3`.
    pub fn linear(mu: f64, delta_prime: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::Parameter("acceleration requires strong convexity (mu > 0)".into()));
        }
        Self::build(RateRule::Linear { scale: mu / 3.0 }, delta_prime, mu)
    }

    pub fn custom(r: impl Fn(i64) -> f64 + Send + Sync + 'static, delta_prime: f64, mu: f64) -> Result<Self> {
        Self::build(RateRule::Custom(Arc::new(r)), delta_prime, mu)
    }

    pub fn r(&self, k: i64) -> f64 {
        let k = k.max(0);
        match &self.rule {
            RateRule::Constant(r) => *r,
            RateRule::Linear { scale } => scale * (k + 1) as f64,
            RateRule::Custom(f) => f(k),
        }
    }

    /// `theta^k = r^k / r^{k+1}`, so `theta^{-1} = 1`.
    pub fn theta(&self, k: i64) -> f64 {
        self.r(k) / self.r(k + 1)
    }

    pub fn delta_prime(&self) -> f64 {
        self.delta_prime
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rule(&self) -> &RateRule {
        &self.rule
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.rule, RateRule::Constant(_))
    }

    /// Sum of `r^k` over `k = 0..=k_max`.
    pub fn weight_sum(&self, k_max: usize) -> f64 {
        (0..=k_max as i64).map(|k| self.r(k)).sum()
    }
}

/// `r^k = mu (k + 1) / 3` with `theta^k = (k + 1)/(k + 2)`.
pub fn default_schedule(mu: f64, delta_prime: f64) -> Result<Schedule> {
    Schedule::linear(mu, delta_prime)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccelAlgorithm {
    /// Accelerated balanced ALM.
    Balanced,
    /// Accelerated dual-primal balanced ALM; needs nondecreasing `r^k`.
    DualPrimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Positivity,
    /// `(r^k + mu) r^k < (r^{k+1})^2`.
    Growth,
    /// `r^k > r^{k+1}`.
    Monotonicity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleViolation {
    pub k: usize,
    pub kind: ViolationKind,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::Positivity => "r^k > 0",
            ViolationKind::Growth => "(r^k + mu) r^k >= (r^{k+1})^2",
            ViolationKind::Monotonicity => "r^k <= r^{k+1}",
        };
        write!(f, "schedule violates {what} at k={}: {} vs {}", self.k, self.lhs, self.rhs)
    }
}

pub(crate) fn check_at(schedule: &Schedule, k: usize, algorithm: AccelAlgorithm) -> Option<ScheduleViolation> {
    let ki = k as i64;
    let (rk, rn) = (schedule.r(ki), schedule.r(ki + 1));
    for (kk, r) in [(k, rk), (k + 1, rn)] {
        if !(r > 0.0 && r.is_finite()) {
            return Some(ScheduleViolation {
                k: kk,
                kind: ViolationKind::Positivity,
                lhs: r,
                rhs: 0.0,
            });
        }
    }
    let lhs = (rk + schedule.mu()) * rk;
    let rhs = rn * rn;
    if lhs < rhs * (1.0 - SCHEDULE_SLACK) {
        return Some(ScheduleViolation {
            k,
            kind: ViolationKind::Growth,
            lhs,
            rhs,
        });
    }
    if algorithm == AccelAlgorithm::DualPrimal && rk > rn * (1.0 + SCHEDULE_SLACK) {
        return Some(ScheduleViolation {
            k,
            kind: ViolationKind::Monotonicity,
            lhs: rk,
            rhs: rn,
        });
    }
    None
}

/// Checks the schedule conditions for `k = 0..=horizon` and reports the
/// first violation, if any.
pub fn validate_schedule(schedule: &Schedule, horizon: usize, algorithm: AccelAlgorithm) -> Option<ScheduleViolation> {
    (0..=horizon).find_map(|k| check_at(schedule, k, algorithm))
}

/// Iterate bundle of the accelerated methods. `x_tilde` is the primal
/// extrapolation of the balanced variant, `lambda_tilde` the multiplier
/// extrapolation of the dual-primal variant.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelState {
    pub x: Vector,
    pub x_prev: Vector,
    pub lambda: Vector,
    pub lambda_prev: Vector,
    pub x_tilde: Option<Vector>,
    pub lambda_tilde: Option<Vector>,
    pub k: usize,
}

impl AccelState {
    pub fn new(x0: Vector, lambda0: Vector) -> Self {
        AccelState {
            x_prev: x0.clone(),
            lambda_prev: lambda0.clone(),
            x: x0,
            lambda: lambda0,
            x_tilde: None,
            lambda_tilde: None,
            k: 0,
        }
    }

    pub fn zeros(problem: &ConvexProblem) -> Self {
        Self::new(Vector::zeros(problem.n()), Vector::zeros(problem.m()))
    }

    fn check_dims(&self, problem: &ConvexProblem) -> Result<()> {
        let (n, m) = (problem.n(), problem.m());
        if self.x.len() != n || self.x_prev.len() != n {
            return Err(Error::dims("x", n, self.x.len().max(self.x_prev.len())));
        }
        if self.lambda.len() != m || self.lambda_prev.len() != m {
            return Err(Error::dims("lambda", m, self.lambda.len().max(self.lambda_prev.len())));
        }
        Ok(())
    }

    fn finite(&self) -> bool {
        [&self.x, &self.x_prev, &self.lambda, &self.lambda_prev]
            .into_iter()
            .all(crate::all_finite)
            && self.x_tilde.as_ref().is_none_or(crate::all_finite)
            && self.lambda_tilde.as_ref().is_none_or(crate::all_finite)
    }
}

pub(crate) fn accel_setup(problem: &ConvexProblem, schedule: &Schedule) -> Result<RegularizedGramFactor> {
    if schedule.mu() > problem.mu() * (1.0 + 1e-12) {
        return Err(Error::Parameter(format!(
            "schedule assumes mu = {} but f is only {}-strongly convex",
            schedule.mu(),
            problem.mu()
        )));
    }
    RegularizedGramFactor::new(problem.a(), 1.0, schedule.delta_prime())
}

/// Accelerated balanced ALM. With `H = A A' + delta' I`:
///
/// ```text
/// x^{k+1}       = prox_{f/r^k}(x^k - A' lambda^k / r^k)
/// x~^{k+1}      = x^{k+1} + theta^k (x^{k+1} - x^k)
/// lambda^{k+1}  = lambda^k + r^{k+1} H^{-1} (A x~^{k+1} - b)
/// ```
#[derive(Debug, Clone)]
pub struct AcceleratedBalancedAlm {
    schedule: Schedule,
    h: RegularizedGramFactor,
}

impl AcceleratedBalancedAlm {
    pub fn new(problem: &ConvexProblem, schedule: Schedule) -> Result<Self> {
        let h = accel_setup(problem, &schedule)?;
        Ok(AcceleratedBalancedAlm { schedule, h })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }
}

impl Method for AcceleratedBalancedAlm {
    type State = AccelState;

    fn step(&self, problem: &ConvexProblem, s: &AccelState) -> Result<AccelState> {
        s.check_dims(problem)?;
        if let Some(v) = check_at(&self.schedule, s.k, AccelAlgorithm::Balanced) {
            return Err(Error::Parameter(v.to_string()));
        }
        let k = s.k as i64;
        let rk = self.schedule.r(k);
        let x = problem.prox_raw(1.0 / rk, &(&s.x - problem.a().tr_mul(&s.lambda) / rk));
        let x_tilde = &x + (&x - &s.x) * self.schedule.theta(k);
        let lambda = &s.lambda + self.h.solve_raw(&problem.residual(&x_tilde)) * self.schedule.r(k + 1);
        Ok(AccelState {
            x_prev: s.x.clone(),
            lambda_prev: s.lambda.clone(),
            x,
            lambda,
            x_tilde: Some(x_tilde),
            lambda_tilde: None,
            k: s.k + 1,
        })
    }

    fn snapshot(&self, _: &ConvexProblem, s: &AccelState) -> Iterate {
        Iterate::new(s.x.clone(), s.lambda.clone())
    }

    fn is_finite(&self, s: &AccelState) -> bool {
        s.finite()
    }
}

pub fn accel_balanced_step(problem: &ConvexProblem, state: &AccelState, schedule: &Schedule) -> Result<AccelState> {
    AcceleratedBalancedAlm::new(problem, schedule.clone())?.step(problem, state)
}

/// Accelerated dual-primal balanced ALM:
///
/// ```text
/// lambda~^k     = lambda^k + theta^{k-1} (lambda^k - lambda^{k-1})
/// x^{k+1}       = prox_{f/r^k}(x^k - A' lambda~^k / r^k)
/// lambda^{k+1}  = lambda^k + r^k H^{-1} (A x^{k+1} - b)
/// ```
#[derive(Debug, Clone)]
pub struct AcceleratedDualPrimalAlm {
    schedule: Schedule,
    h: RegularizedGramFactor,
}

impl AcceleratedDualPrimalAlm {
    pub fn new(problem: &ConvexProblem, schedule: Schedule) -> Result<Self> {
        let h = accel_setup(problem, &schedule)?;
        Ok(AcceleratedDualPrimalAlm { schedule, h })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }
}

impl Method for AcceleratedDualPrimalAlm {
    type State = AccelState;

    fn step(&self, problem: &ConvexProblem, s: &AccelState) -> Result<AccelState> {
        s.check_dims(problem)?;
        if let Some(v) = check_at(&self.schedule, s.k, AccelAlgorithm::DualPrimal) {
            return Err(Error::Parameter(v.to_string()));
        }
        let k = s.k as i64;
        let rk = self.schedule.r(k);
        let lambda_tilde = &s.lambda + (&s.lambda - &s.lambda_prev) * self.schedule.theta(k - 1);
        let x = problem.prox_raw(1.0 / rk, &(&s.x - problem.a().tr_mul(&lambda_tilde) / rk));
        let lambda = &s.lambda + self.h.solve_raw(&problem.residual(&x)) * rk;
        Ok(AccelState {
            x_prev: s.x.clone(),
            lambda_prev: s.lambda.clone(),
            x,
            lambda,
            x_tilde: None,
            lambda_tilde: Some(lambda_tilde),
            k: s.k + 1,
        })
    }

    fn snapshot(&self, _: &ConvexProblem, s: &AccelState) -> Iterate {
        Iterate::new(s.x.clone(), s.lambda.clone())
    }

    fn is_finite(&self, s: &AccelState) -> bool {
        s.finite()
    }
}

pub fn accel_dual_primal_step(problem: &ConvexProblem, state: &AccelState, schedule: &Schedule) -> Result<AccelState> {
    AcceleratedDualPrimalAlm::new(problem, schedule.clone())?.step(problem, state)
}

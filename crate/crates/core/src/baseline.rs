//! Single-step updates and run loops for the primal-dual baselines:
//! classical ALM, proximal ALM, Chambolle-Pock, balanced ALM and dual-primal
//! balanced ALM.

use nalgebra::{Cholesky, Dyn};

use crate::diagnostics::{Iterate, Trace, TraceRow};
use crate::linalg::{spectral_norm_sq, RegularizedGramFactor};
use crate::problem::{ConvexProblem, SaddleCertificate};
use crate::{Error, Result, Vector};

/// Relative tolerance for the power iteration behind step-size checks.
pub const SPECTRAL_TOL: f64 = 1e-12;

/// A fixed-parameter iteration over some state type.
pub trait Method: Sync {
    type State: Clone + Send + Sync;

    fn step(&self, problem: &ConvexProblem, state: &Self::State) -> Result<Self::State>;

    /// The `(x, lambda)` pair this state stands for in the original problem.
    fn snapshot(&self, problem: &ConvexProblem, state: &Self::State) -> Iterate;

    /// Every float in the state, for divergence detection.
    fn is_finite(&self, state: &Self::State) -> bool;
}

/// `x^k, x^{k-1}, lambda^k, lambda^{k-1}` and the counter.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualState {
    pub x: Vector,
    pub x_prev: Vector,
    pub lambda: Vector,
    pub lambda_prev: Vector,
    pub k: usize,
}

impl PrimalDualState {
    /// Start at `(x0, lambda0)` with history equal to the start.
    pub fn new(x0: Vector, lambda0: Vector) -> Self {
        PrimalDualState {
            x_prev: x0.clone(),
            lambda_prev: lambda0.clone(),
            x: x0,
            lambda: lambda0,
            k: 0,
        }
    }

    pub fn zeros(problem: &ConvexProblem) -> Self {
        Self::new(Vector::zeros(problem.n()), Vector::zeros(problem.m()))
    }

    pub fn check_dims(&self, problem: &ConvexProblem) -> Result<()> {
        let (n, m) = (problem.n(), problem.m());
        for (what, len, want) in [
            ("x", self.x.len(), n),
            ("x_prev", self.x_prev.len(), n),
            ("lambda", self.lambda.len(), m),
            ("lambda_prev", self.lambda_prev.len(), m),
        ] {
            if len != want {
                return Err(Error::dims(what, want, len));
            }
        }
        Ok(())
    }

    pub(crate) fn advance(&self, x: Vector, lambda: Vector) -> Self {
        PrimalDualState {
            x_prev: self.x.clone(),
            lambda_prev: self.lambda.clone(),
            x,
            lambda,
            k: self.k + 1,
        }
    }

    pub(crate) fn finite(&self) -> bool {
        crate::all_finite(&self.x)
            && crate::all_finite(&self.x_prev)
            && crate::all_finite(&self.lambda)
            && crate::all_finite(&self.lambda_prev)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive, got {v}")))
    }
}

/// Applies `method` `k` times and returns the `k + 1` states including the start.
pub fn collect_states<M: Method>(method: &M, problem: &ConvexProblem, init: M::State, k: usize) -> Result<Vec<M::State>> {
    let mut states = Vec::with_capacity(k + 1);
    states.push(init);
    for i in 0..k {
        let next = method.step(problem, &states[i])?;
        if !method.is_finite(&next) {
            return Err(Error::Divergence {
                iteration: i + 1,
                detail: "non-finite iterate".into(),
            });
        }
        states.push(next);
    }
    Ok(states)
}

/// As [`collect_states`], mapped to `(x, lambda)` pairs.
pub fn collect_iterates<M: Method>(method: &M, problem: &ConvexProblem, init: M::State, k: usize) -> Result<Vec<Iterate>> {
    let states = collect_states(method, problem, init, k)?;
    Ok(states.iter().map(|s| method.snapshot(problem, s)).collect())
}

/// Runs `k >= 1` steps and records one trace row per iterate, `k + 1` rows
/// in all. With a reference pair the gap column is filled.
pub fn run<M: Method>(
    method: &M,
    problem: &ConvexProblem,
    init: M::State,
    k: usize,
    reference: Option<&SaddleCertificate>,
) -> Result<Trace> {
    if k == 0 {
        return Err(Error::Parameter("iteration count must be at least 1".into()));
    }
    let mut trace = Trace::new();
    let mut state = init;
    trace.push(TraceRow::new(problem, 0, method.snapshot(problem, &state), reference))?;
    for i in 1..=k {
        state = method.step(problem, &state)?;
        let it = method.snapshot(problem, &state);
        if !method.is_finite(&state) || !it.is_finite() {
            return Err(Error::Divergence {
                iteration: i,
                detail: "non-finite iterate".into(),
            });
        }
        trace.push(TraceRow::new(problem, i, it, reference))?;
    }
    Ok(trace)
}

macro_rules! primal_dual_method {
    ($ty:ty) => {
        impl Method for $ty {
            type State = PrimalDualState;

            fn step(&self, problem: &ConvexProblem, state: &PrimalDualState) -> Result<PrimalDualState> {
                state.check_dims(problem)?;
                Ok(self.step_unchecked(problem, state))
            }

            fn snapshot(&self, _: &ConvexProblem, state: &PrimalDualState) -> Iterate {
                Iterate::new(state.x.clone(), state.lambda.clone())
            }

            fn is_finite(&self, state: &PrimalDualState) -> bool {
                state.finite()
            }
        }
    };
}

/// Classical ALM with an exact inner solve, available for quadratic `f` only.
#[derive(Debug, Clone)]
pub struct ClassicalAlm {
    beta: f64,
    chol: Cholesky<f64, Dyn>,
    rhs_const: Vector,
}

impl ClassicalAlm {
    pub fn new(problem: &ConvexProblem, beta: f64) -> Result<Self> {
        positive("beta", beta)?;
        let (q, c) = problem.function().as_quadratic().ok_or_else(|| {
            Error::Unsupported("classical ALM needs a direct solver for its coupled subproblem; only quadratic f has one".into())
        })?;
        let a = problem.a();
        let system = q + a.tr_mul(a) * beta;
        let chol = Cholesky::new(system).ok_or_else(|| Error::Rank("Q + beta A'A is not positive definite".into()))?;
        let rhs_const = a.tr_mul(problem.b()) * beta - c;
        Ok(ClassicalAlm { beta, chol, rhs_const })
    }

    fn step_unchecked(&self, problem: &ConvexProblem, s: &PrimalDualState) -> PrimalDualState {
        let a = problem.a();
        let x = self.chol.solve(&(&self.rhs_const - a.tr_mul(&s.lambda)));
        let lambda = &s.lambda + problem.residual(&x) * self.beta;
        s.advance(x, lambda)
    }
}
primal_dual_method!(ClassicalAlm);

pub fn classical_alm_step(problem: &ConvexProblem, state: &PrimalDualState, beta: f64) -> Result<PrimalDualState> {
    ClassicalAlm::new(problem, beta)?.step(problem, state)
}

/// Linearized (proximal) ALM, valid for `r > beta * rho(A'A)`.
#[derive(Debug, Clone)]
pub struct ProximalAlm {
    beta: f64,
    r: f64,
}

impl ProximalAlm {
    pub fn new(problem: &ConvexProblem, beta: f64, r: f64) -> Result<Self> {
        positive("beta", beta)?;
        positive("r", r)?;
        let rho = spectral_norm_sq(problem.a(), SPECTRAL_TOL)?;
        if !(r > beta * rho) {
            return Err(Error::StepSize(format!(
                "proximal ALM needs r > beta*rho(A'A) = {}, got r = {r}",
                beta * rho
            )));
        }
        Ok(ProximalAlm { beta, r })
    }

    fn step_unchecked(&self, problem: &ConvexProblem, s: &PrimalDualState) -> PrimalDualState {
        let a = problem.a();
        let dual = &s.lambda + problem.residual(&s.x) * self.beta;
        let x = problem.prox_raw(1.0 / self.r, &(&s.x - a.tr_mul(&dual) / self.r));
        let lambda = &s.lambda + problem.residual(&x) * self.beta;
        s.advance(x, lambda)
    }
}
primal_dual_method!(ProximalAlm);

pub fn proximal_alm_step(problem: &ConvexProblem, state: &PrimalDualState, beta: f64, r: f64) -> Result<PrimalDualState> {
    ProximalAlm::new(problem, beta, r)?.step(problem, state)
}

/// Chambolle-Pock primal-dual method, valid for `r s > rho_factor * rho(A'A)`.
#[derive(Debug, Clone)]
pub struct ChambollePock {
    r: f64,
    s: f64,
}

impl ChambollePock {
    pub fn new(problem: &ConvexProblem, r: f64, s: f64, rho_factor: f64) -> Result<Self> {
        positive("r", r)?;
        positive("s", s)?;
        if !(rho_factor > 0.0 && rho_factor <= 1.0) {
            return Err(Error::Parameter(format!("rho_factor must lie in (0, 1], got {rho_factor}")));
        }
        let rho = spectral_norm_sq(problem.a(), SPECTRAL_TOL)?;
        if !(r * s > rho_factor * rho) {
            return Err(Error::Parameter(format!(
                "Chambolle-Pock step sizes violate rs > ρ(AᵀA): r*s = {} but rho_factor*rho(A'A) = {}",
                r * s,
                rho_factor * rho
            )));
        }
        Ok(ChambollePock { r, s })
    }

    fn step_unchecked(&self, problem: &ConvexProblem, st: &PrimalDualState) -> PrimalDualState {
        let a = problem.a();
        let x = problem.prox_raw(1.0 / self.r, &(&st.x - a.tr_mul(&st.lambda) / self.r));
        let extrap = &x * 2.0 - &st.x;
        let lambda = &st.lambda + problem.residual(&extrap) / self.s;
        st.advance(x, lambda)
    }
}
primal_dual_method!(ChambollePock);

pub fn chambolle_pock_step(problem: &ConvexProblem, state: &PrimalDualState, r: f64, s: f64, rho_factor: f64) -> Result<PrimalDualState> {
    ChambollePock::new(problem, r, s, rho_factor)?.step(problem, state)
}

fn gram_for(problem: &ConvexProblem, r: f64, delta: f64, factor: Option<RegularizedGramFactor>) -> Result<RegularizedGramFactor> {
    positive("r", r)?;
    positive("delta", delta)?;
    match factor {
        None => RegularizedGramFactor::new(problem.a(), 1.0 / r, delta),
        Some(f) => {
            if !f.matches(1.0 / r, delta) {
                return Err(Error::Config(format!(
                    "factor built for (beta, delta) = ({}, {}) but the step needs ({}, {delta})",
                    f.beta(),
                    f.delta(),
                    1.0 / r
                )));
            }
            if f.a().shape() != problem.a().shape() {
                return Err(Error::Config("factor was built for a different constraint matrix".into()));
            }
            Ok(f)
        }
    }
}

/// Balanced ALM: a prox step in `x`, then a multiplier step through
/// `((1/r) A A' + delta I)^{-1}` applied to `A(2x^{k+1} - x^k) - b`.
#[derive(Debug, Clone)]
pub struct BalancedAlm {
    r: f64,
    factor: RegularizedGramFactor,
}

impl BalancedAlm {
    pub fn new(problem: &ConvexProblem, r: f64, delta: f64) -> Result<Self> {
        Ok(BalancedAlm {
            r,
            factor: gram_for(problem, r, delta, None)?,
        })
    }

    pub fn with_factor(problem: &ConvexProblem, r: f64, delta: f64, factor: RegularizedGramFactor) -> Result<Self> {
        Ok(BalancedAlm {
            r,
            factor: gram_for(problem, r, delta, Some(factor))?,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn delta(&self) -> f64 {
        self.factor.delta()
    }

    fn step_unchecked(&self, problem: &ConvexProblem, s: &PrimalDualState) -> PrimalDualState {
        let a = problem.a();
        let x = problem.prox_raw(1.0 / self.r, &(&s.x - a.tr_mul(&s.lambda) / self.r));
        let extrap = &x * 2.0 - &s.x;
        let lambda = &s.lambda + self.factor.solve_raw(&problem.residual(&extrap));
        s.advance(x, lambda)
    }
}
primal_dual_method!(BalancedAlm);

pub fn balanced_alm_step(
    problem: &ConvexProblem,
    state: &PrimalDualState,
    r: f64,
    delta: f64,
    factor: &RegularizedGramFactor,
) -> Result<PrimalDualState> {
    BalancedAlm::with_factor(problem, r, delta, factor.clone())?.step(problem, state)
}

/// Dual-primal balanced ALM: the prox step sees `2 lambda^k - lambda^{k-1}`,
/// the multiplier step sees `A x^{k+1} - b`.
#[derive(Debug, Clone)]
pub struct DualPrimalBalancedAlm {
    r: f64,
    factor: RegularizedGramFactor,
}

impl DualPrimalBalancedAlm {
    pub fn new(problem: &ConvexProblem, r: f64, delta: f64) -> Result<Self> {
        Ok(DualPrimalBalancedAlm {
            r,
            factor: gram_for(problem, r, delta, None)?,
        })
    }

    pub fn with_factor(problem: &ConvexProblem, r: f64, delta: f64, factor: RegularizedGramFactor) -> Result<Self> {
        Ok(DualPrimalBalancedAlm {
            r,
            factor: gram_for(problem, r, delta, Some(factor))?,
        })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn delta(&self) -> f64 {
        self.factor.delta()
    }

    fn step_unchecked(&self, problem: &ConvexProblem, s: &PrimalDualState) -> PrimalDualState {
        let a = problem.a();
        let extrap = &s.lambda * 2.0 - &s.lambda_prev;
        let x = problem.prox_raw(1.0 / self.r, &(&s.x - a.tr_mul(&extrap) / self.r));
        let lambda = &s.lambda + self.factor.solve_raw(&problem.residual(&x));
        s.advance(x, lambda)
    }
}
primal_dual_method!(DualPrimalBalancedAlm);

pub fn dual_primal_balanced_alm_step(
    problem: &ConvexProblem,
    state: &PrimalDualState,
    r: f64,
    delta: f64,
    factor: &RegularizedGramFactor,
) -> Result<PrimalDualState> {
    DualPrimalBalancedAlm::with_factor(problem, r, delta, factor.clone())?.step(problem, state)
}

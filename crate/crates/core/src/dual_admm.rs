//! Proximal ADMM on the compact dual `min f*(u) + lambda'b s.t. A'lambda + u = 0`
//! in its two update orders, its accelerated form, and the multiplier
//! extrapolation variant with weight `r^k / r^{k-1}`.

use crate::accelerated::{accel_setup, check_at, AccelAlgorithm, Schedule};
use crate::baseline::{Method, PrimalDualState};
use crate::diagnostics::Iterate;
use crate::linalg::RegularizedGramFactor;
use crate::problem::ConvexProblem;
use crate::scheme::SchemeParams;
use crate::{Error, Result, Vector};

/// `u, lambda, xbar` plus `xbar` and `lambda` from the start of the
/// current step, used by the dual-primal primal recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct DualAdmmState {
    pub u: Vector,
    pub lambda: Vector,
    pub xbar: Vector,
    pub xbar_prev: Vector,
    pub lambda_prev: Vector,
    pub k: usize,
}

impl DualAdmmState {
    pub fn new(u: Vector, lambda: Vector, xbar: Vector) -> Self {
        DualAdmmState {
            xbar_prev: xbar.clone(),
            lambda_prev: lambda.clone(),
            u,
            lambda,
            xbar,
            k: 0,
        }
    }

    /// `xbar = -x0`, `u = -A' lambda0`.
    pub fn for_balanced(problem: &ConvexProblem, x0: &Vector, lambda0: &Vector) -> Self {
        DualAdmmState::new(-problem.a().tr_mul(lambda0), lambda0.clone(), -x0)
    }

    /// `xbar = -x0 + beta1 A'(lambda0 - lambda_prev)`, with history slots
    /// chosen so the recovered `x^0` is `x0`.
    pub fn for_dual_primal(problem: &ConvexProblem, beta1: f64, x0: &Vector, lambda0: &Vector, lambda_prev: &Vector) -> Self {
        let a = problem.a();
        let mut s = DualAdmmState::new(
            -a.tr_mul(lambda0),
            lambda0.clone(),
            -x0 + a.tr_mul(&(lambda0 - lambda_prev)) * beta1,
        );
        s.xbar_prev = -x0;
        s
    }

    fn check_dims(&self, problem: &ConvexProblem) -> Result<()> {
        let (n, m) = (problem.n(), problem.m());
        for (what, len, want) in [
            ("u", self.u.len(), n),
            ("xbar", self.xbar.len(), n),
            ("xbar_prev", self.xbar_prev.len(), n),
            ("lambda", self.lambda.len(), m),
            ("lambda_prev", self.lambda_prev.len(), m),
        ] {
            if len != want {
                return Err(Error::dims(what, want, len));
            }
        }
        Ok(())
    }

    fn finite(&self) -> bool {
        [&self.u, &self.lambda, &self.xbar, &self.xbar_prev, &self.lambda_prev]
            .into_iter()
            .all(crate::all_finite)
    }

    /// `||u + A' lambda||`, the dual constraint residual.
    pub fn dual_residual(&self, problem: &ConvexProblem) -> f64 {
        (&self.u + problem.a().tr_mul(&self.lambda)).norm()
    }
}

fn gram(problem: &ConvexProblem, params: &SchemeParams) -> Result<RegularizedGramFactor> {
    RegularizedGramFactor::new(problem.a(), params.beta1, params.beta2)
}

/// Proximal ADMM with order `u, xbar, lambda`:
///
/// ```text
/// u^{k+1}      = prox_{f*/beta1}(-A' lambda^k - xbar^k / beta1)
/// xbar^{k+1}   = xbar^k + beta1 (u^{k+1} + A' lambda^k)
/// (beta1 A A' + beta2 I)(lambda^{k+1} - lambda^k)
///              = -b - A xbar^{k+1} - beta1 A u^{k+1} - beta1 A A' lambda^k
/// ```
#[derive(Debug, Clone)]
pub struct ProxAdmmBalanced {
    params: SchemeParams,
    factor: RegularizedGramFactor,
}

impl ProxAdmmBalanced {
    pub fn new(problem: &ConvexProblem, params: SchemeParams) -> Result<Self> {
        Ok(ProxAdmmBalanced {
            factor: gram(problem, &params)?,
            params,
        })
    }
}

fn lambda_step(problem: &ConvexProblem, factor: &RegularizedGramFactor, beta1: f64, xbar: &Vector, u: &Vector, lambda: &Vector) -> Vector {
    let a = problem.a();
    let rhs = -problem.b() - a * xbar - (a * (u + a.tr_mul(lambda))) * beta1;
    lambda + factor.solve_raw(&rhs)
}

impl Method for ProxAdmmBalanced {
    type State = DualAdmmState;

    fn step(&self, problem: &ConvexProblem, s: &DualAdmmState) -> Result<DualAdmmState> {
        s.check_dims(problem)?;
        let a = problem.a();
        let beta1 = self.params.beta1;
        let u = problem.prox_conjugate_raw(1.0 / beta1, &(-a.tr_mul(&s.lambda) - &s.xbar / beta1));
        let xbar = &s.xbar + (&u + a.tr_mul(&s.lambda)) * beta1;
        let lambda = lambda_step(problem, &self.factor, beta1, &xbar, &u, &s.lambda);
        Ok(DualAdmmState {
            u,
            lambda,
            xbar,
            xbar_prev: s.xbar.clone(),
            lambda_prev: s.lambda.clone(),
            k: s.k + 1,
        })
    }

    fn snapshot(&self, _: &ConvexProblem, s: &DualAdmmState) -> Iterate {
        Iterate::new(-&s.xbar, s.lambda.clone())
    }

    fn is_finite(&self, s: &DualAdmmState) -> bool {
        s.finite()
    }
}

pub fn prox_admm_balanced_step(problem: &ConvexProblem, state: &DualAdmmState, params: SchemeParams) -> Result<DualAdmmState> {
    ProxAdmmBalanced::new(problem, params)?.step(problem, state)
}

/// Proximal ADMM with order `u, lambda, xbar`: the multiplier solve uses
/// `xbar^k`, and `xbar` is then updated with `lambda^{k+1}`.
#[derive(Debug, Clone)]
pub struct ProxAdmmDualPrimal {
    params: SchemeParams,
    factor: RegularizedGramFactor,
}

impl ProxAdmmDualPrimal {
    pub fn new(problem: &ConvexProblem, params: SchemeParams) -> Result<Self> {
        Ok(ProxAdmmDualPrimal {
            factor: gram(problem, &params)?,
            params,
        })
    }
}

impl Method for ProxAdmmDualPrimal {
    type State = DualAdmmState;

    fn step(&self, problem: &ConvexProblem, s: &DualAdmmState) -> Result<DualAdmmState> {
        s.check_dims(problem)?;
        let a = problem.a();
        let beta1 = self.params.beta1;
        let u = problem.prox_conjugate_raw(1.0 / beta1, &(-a.tr_mul(&s.lambda) - &s.xbar / beta1));
        let lambda = lambda_step(problem, &self.factor, beta1, &s.xbar, &u, &s.lambda);
        let xbar = &s.xbar + (&u + a.tr_mul(&lambda)) * beta1;
        Ok(DualAdmmState {
            u,
            lambda,
            xbar,
            xbar_prev: s.xbar.clone(),
            lambda_prev: s.lambda.clone(),
            k: s.k + 1,
        })
    }

    /// `x^{k+1} = -xbar^k - beta1 (u^{k+1} + A' lambda^k)`.
    fn snapshot(&self, problem: &ConvexProblem, s: &DualAdmmState) -> Iterate {
        let x = -&s.xbar_prev - (&s.u + problem.a().tr_mul(&s.lambda_prev)) * self.params.beta1;
        Iterate::new(x, s.lambda.clone())
    }

    fn is_finite(&self, s: &DualAdmmState) -> bool {
        s.finite()
    }
}

pub fn prox_admm_dual_primal_step(problem: &ConvexProblem, state: &DualAdmmState, params: SchemeParams) -> Result<DualAdmmState> {
    ProxAdmmDualPrimal::new(problem, params)?.step(problem, state)
}

/// Proximal ADMM on the compact dual with growing steps. With
/// `H = A A' + delta' I`:
///
/// ```text
/// u^{k+1}      = prox_{r^k f*}(-A' lambda^k - r^k xbar^k)
/// xbar^{k+1}   = xbar^k + (u^{k+1} + A' lambda^k) / r^k
/// lambda^{k+1} = lambda^k + r^{k+1} H^{-1}(-b - A xbar^{k+1}
///                - (A u^{k+1} + A A' lambda^k) / r^{k+1})
/// ```
#[derive(Debug, Clone)]
pub struct AccelProxAdmm {
    schedule: Schedule,
    h: RegularizedGramFactor,
}

impl AccelProxAdmm {
    pub fn new(problem: &ConvexProblem, schedule: Schedule) -> Result<Self> {
        let h = accel_setup(problem, &schedule)?;
        Ok(AccelProxAdmm { schedule, h })
    }
}

impl Method for AccelProxAdmm {
    type State = DualAdmmState;

    fn step(&self, problem: &ConvexProblem, s: &DualAdmmState) -> Result<DualAdmmState> {
        s.check_dims(problem)?;
        if let Some(v) = check_at(&self.schedule, s.k, AccelAlgorithm::Balanced) {
            return Err(Error::Parameter(v.to_string()));
        }
        let a = problem.a();
        let k = s.k as i64;
        let (rk, rn) = (self.schedule.r(k), self.schedule.r(k + 1));
        let u = problem.prox_conjugate_raw(rk, &(-a.tr_mul(&s.lambda) - &s.xbar * rk));
        let xbar = &s.xbar + (&u + a.tr_mul(&s.lambda)) / rk;
        let rhs = -problem.b() - a * &xbar - (a * (&u + a.tr_mul(&s.lambda))) / rn;
        let lambda = &s.lambda + self.h.solve_raw(&rhs) * rn;
        Ok(DualAdmmState {
            u,
            lambda,
            xbar,
            xbar_prev: s.xbar.clone(),
            lambda_prev: s.lambda.clone(),
            k: s.k + 1,
        })
    }

    fn snapshot(&self, _: &ConvexProblem, s: &DualAdmmState) -> Iterate {
        Iterate::new(-&s.xbar, s.lambda.clone())
    }

    fn is_finite(&self, s: &DualAdmmState) -> bool {
        s.finite()
    }
}

pub fn accel_prox_admm_step(problem: &ConvexProblem, state: &DualAdmmState, schedule: &Schedule) -> Result<DualAdmmState> {
    AccelProxAdmm::new(problem, schedule.clone())?.step(problem, state)
}

/// Dual-primal iteration whose multiplier extrapolation weight is
/// `r^k / r^{k-1}` instead of `r^{k-1} / r^k`:
///
/// ```text
/// x^{k+1}      = prox_{f/r^k}(x^k - A'(lambda^k + (r^k/r^{k-1})(lambda^k - lambda^{k-1})) / r^k)
/// lambda^{k+1} = lambda^k + r^k H^{-1}(A x^{k+1} - b)
/// ```
#[derive(Debug, Clone)]
pub struct RatioWeightedAlm {
    schedule: Schedule,
    h: RegularizedGramFactor,
}

impl RatioWeightedAlm {
    pub fn new(problem: &ConvexProblem, schedule: Schedule) -> Result<Self> {
        let h = accel_setup(problem, &schedule)?;
        Ok(RatioWeightedAlm { schedule, h })
    }
}

impl Method for RatioWeightedAlm {
    type State = PrimalDualState;

    fn step(&self, problem: &ConvexProblem, s: &PrimalDualState) -> Result<PrimalDualState> {
        s.check_dims(problem)?;
        if let Some(v) = check_at(&self.schedule, s.k, AccelAlgorithm::DualPrimal) {
            return Err(Error::Parameter(v.to_string()));
        }
        let k = s.k as i64;
        let rk = self.schedule.r(k);
        let weight = rk / self.schedule.r(k - 1);
        let extrap = &s.lambda + (&s.lambda - &s.lambda_prev) * weight;
        let x = problem.prox_raw(1.0 / rk, &(&s.x - problem.a().tr_mul(&extrap) / rk));
        let lambda = &s.lambda + self.h.solve_raw(&problem.residual(&x)) * rk;
        Ok(s.advance(x, lambda))
    }

    fn snapshot(&self, _: &ConvexProblem, s: &PrimalDualState) -> Iterate {
        Iterate::new(s.x.clone(), s.lambda.clone())
    }

    fn is_finite(&self, s: &PrimalDualState) -> bool {
        s.finite()
    }
}

pub fn ratio_weighted_step(problem: &ConvexProblem, state: &PrimalDualState, schedule: &Schedule) -> Result<PrimalDualState> {
    RatioWeightedAlm::new(problem, schedule.clone())?.step(problem, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accelerated::{default_schedule, AccelState, AcceleratedBalancedAlm, AcceleratedDualPrimalAlm};
    use crate::baseline::{collect_iterates, collect_states, BalancedAlm, DualPrimalBalancedAlm};
    use crate::problem::make_quadratic_problem;
    use crate::Matrix;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn unit() -> ConvexProblem {
        make_quadratic_problem(
            Matrix::identity(2, 2),
            Vector::zeros(2),
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            v(&[1.0]),
        )
        .unwrap()
    }

    fn scalar() -> ConvexProblem {
        make_quadratic_problem(Matrix::identity(1, 1), Vector::zeros(1), Matrix::identity(1, 1), v(&[1.0])).unwrap()
    }

    fn zero(p: &ConvexProblem) -> DualAdmmState {
        DualAdmmState::new(Vector::zeros(p.n()), Vector::zeros(p.m()), Vector::zeros(p.n()))
    }

    fn close(a: &[Iterate], b: &[Iterate], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (k, (x, y)) in a.iter().zip(b).enumerate() {
            let d = (x.stacked() - y.stacked()).norm() / (1.0 + y.stacked().norm());
            assert!(d <= tol, "k={k}: {d:e}");
        }
    }

    #[test]
    fn scripted_first_steps() {
        let p = unit();
        let params = SchemeParams::new(1.0, 1.0).unwrap();
        let s = prox_admm_balanced_step(&p, &zero(&p), params).unwrap();
        assert_eq!(s.u, Vector::zeros(2));
        assert_eq!(s.xbar, Vector::zeros(2));
        assert_abs_diff_eq!(s.lambda[0], -1.0 / 3.0, epsilon = 1e-15);
        let s = prox_admm_dual_primal_step(&p, &zero(&p), params).unwrap();
        assert_abs_diff_eq!(s.lambda[0], -1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.xbar, v(&[-1.0 / 3.0, -1.0 / 3.0]), epsilon = 1e-15);
    }

    #[test]
    fn stationary_start_is_fixed() {
        let p = unit();
        let c = p.certificate().unwrap();
        let params = SchemeParams::new(0.7, 1.9).unwrap();
        let s0 = DualAdmmState::for_balanced(&p, &c.x_star, &c.lambda_star);
        for s1 in [
            prox_admm_balanced_step(&p, &s0, params).unwrap(),
            prox_admm_dual_primal_step(&p, &s0, params).unwrap(),
        ] {
            assert_abs_diff_eq!(s1.u, s0.u, epsilon = 1e-12);
            assert_abs_diff_eq!(s1.lambda, s0.lambda, epsilon = 1e-12);
            assert_abs_diff_eq!(s1.xbar, s0.xbar, epsilon = 1e-12);
        }
    }

    #[test]
    fn matches_balanced_and_dual_primal_alm() {
        let p = unit();
        let (r, delta) = (0.8, 1.4);
        let params = SchemeParams::from_alm(r, delta).unwrap();
        let x0 = v(&[2.0, -1.0]);
        let l0 = v(&[0.5]);
        let a = collect_iterates(
            &ProxAdmmBalanced::new(&p, params).unwrap(),
            &p,
            DualAdmmState::for_balanced(&p, &x0, &l0),
            200,
        )
        .unwrap();
        let b = collect_iterates(
            &BalancedAlm::new(&p, r, delta).unwrap(),
            &p,
            PrimalDualState::new(x0.clone(), l0.clone()),
            200,
        )
        .unwrap();
        close(&a, &b, 1e-10);
        let start = DualAdmmState::for_dual_primal(&p, params.beta1, &x0, &l0, &l0);
        let a = collect_iterates(&ProxAdmmDualPrimal::new(&p, params).unwrap(), &p, start, 200).unwrap();
        let b = collect_iterates(
            &DualPrimalBalancedAlm::new(&p, r, delta).unwrap(),
            &p,
            PrimalDualState::new(x0, l0),
            200,
        )
        .unwrap();
        close(&a, &b, 1e-10);
    }

    #[test]
    fn accelerated_dual_admm_matches_accelerated_balanced() {
        let p = unit();
        let sched = default_schedule(1.0, 1.0).unwrap();
        let s1 = accel_prox_admm_step(&p, &zero(&p), &sched).unwrap();
        // x^1 = prox_{3 f}(0) = 0, so u^1 = 0 and xbar^1 = 0; lambda^1 = (2/3)(-1)/3
        assert_eq!(s1.u, Vector::zeros(2));
        assert_abs_diff_eq!(s1.lambda[0], -2.0 / 9.0, epsilon = 1e-15);

        let x0 = v(&[1.0, -0.5]);
        let l0 = v(&[0.25]);
        let a = collect_iterates(
            &AccelProxAdmm::new(&p, sched.clone()).unwrap(),
            &p,
            DualAdmmState::for_balanced(&p, &x0, &l0),
            200,
        )
        .unwrap();
        let b = collect_iterates(
            &AcceleratedBalancedAlm::new(&p, sched.clone()).unwrap(),
            &p,
            AccelState::new(x0.clone(), l0.clone()),
            200,
        )
        .unwrap();
        close(&a, &b, 1e-10);

        let admm = collect_states(
            &AccelProxAdmm::new(&p, sched.clone()).unwrap(),
            &p,
            DualAdmmState::for_balanced(&p, &x0, &l0),
            20,
        )
        .unwrap();
        for k in 0..20 {
            let xk = -&admm[k].xbar;
            let xn = -&admm[k + 1].xbar;
            let expect = -p.a().tr_mul(&admm[k].lambda) - (xn - xk) * sched.r(k as i64);
            assert_abs_diff_eq!(admm[k + 1].u, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_schedule_reduces_to_algorithm_5() {
        let p = unit();
        let (r, delta) = (1.3, 0.4);
        let x0 = v(&[0.2, 0.9]);
        let l0 = v(&[-1.0]);
        let sched = Schedule::constant(r, r * delta).unwrap();
        let params = SchemeParams::from_alm(r, delta).unwrap();
        let a = collect_iterates(
            &AccelProxAdmm::new(&p, sched).unwrap(),
            &p,
            DualAdmmState::for_balanced(&p, &x0, &l0),
            100,
        )
        .unwrap();
        let b = collect_iterates(
            &ProxAdmmBalanced::new(&p, params).unwrap(),
            &p,
            DualAdmmState::for_balanced(&p, &x0, &l0),
            100,
        )
        .unwrap();
        close(&a, &b, 1e-12);
    }

    #[test]
    fn ratio_weighted_examples() {
        let p = scalar();
        let sched = default_schedule(1.0, 1.0).unwrap();
        let s0 = PrimalDualState::zeros(&p);
        let a = ratio_weighted_step(&p, &s0, &sched).unwrap();
        let b = crate::accelerated::accel_dual_primal_step(&p, &AccelState::zeros(&p), &sched).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.lambda, b.lambda);

        let (r, delta) = (2.0, 0.5);
        let constant = Schedule::constant(r, r * delta).unwrap();
        let x = collect_iterates(&RatioWeightedAlm::new(&p, constant).unwrap(), &p, s0.clone(), 30).unwrap();
        let y = collect_iterates(&DualPrimalBalancedAlm::new(&p, r, delta).unwrap(), &p, s0.clone(), 30).unwrap();
        close(&x, &y, 1e-12);

        let x = collect_iterates(&RatioWeightedAlm::new(&p, sched.clone()).unwrap(), &p, s0, 3).unwrap();
        let y = collect_iterates(&AcceleratedDualPrimalAlm::new(&p, sched).unwrap(), &p, AccelState::zeros(&p), 3).unwrap();
        let gap = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a.stacked() - b.stacked()).norm())
            .fold(0.0, f64::max);
        assert!(gap > 1e-6);
    }
}

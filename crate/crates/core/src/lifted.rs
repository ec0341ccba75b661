//! ADMM on the primal lift `min f(x) s.t. Ay = b, x = y`, generic
//! Douglas-Rachford splitting, the resolvents of the lifted affine sets, and
//! the two DRS configurations that reproduce balanced and dual-primal
//! balanced ALM.

use crate::baseline::Method;
use crate::diagnostics::Iterate;
use crate::linalg::{LiftedSystem, RegularizedGramFactor};
use crate::problem::ConvexProblem;
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedAdmmState {
    pub x: Vector,
    pub y: Vector,
    pub lambda1: Vector,
    pub lambda2: Vector,
    pub k: usize,
}

impl LiftedAdmmState {
    pub fn zeros(problem: &ConvexProblem) -> Self {
        let n = problem.n();
        LiftedAdmmState {
            x: Vector::zeros(n),
            y: Vector::zeros(n),
            lambda1: Vector::zeros(problem.m()),
            lambda2: Vector::zeros(n),
            k: 0,
        }
    }

    /// The stationary point matching a saddle pair: `y = x`, `lambda2 = A' lambda`.
    pub fn from_saddle(problem: &ConvexProblem, x: &Vector, lambda: &Vector) -> Self {
        LiftedAdmmState {
            x: x.clone(),
            y: x.clone(),
            lambda1: lambda.clone(),
            lambda2: problem.a().tr_mul(lambda),
            k: 0,
        }
    }
}

/// ADMM on the primal lift with penalty `beta`. The `y`-system
/// `(A'A + I) y = q` goes through Sherman-Morrison when `m < n`.
#[derive(Debug, Clone)]
pub struct LiftedAdmm {
    beta: f64,
    system: LiftedSystem,
}

impl LiftedAdmm {
    pub fn new(problem: &ConvexProblem, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!("beta must be positive, got {beta}")));
        }
        Ok(LiftedAdmm {
            beta,
            system: LiftedSystem::new(problem.a())?,
        })
    }
}

impl Method for LiftedAdmm {
    type State = LiftedAdmmState;

    fn step(&self, problem: &ConvexProblem, s: &LiftedAdmmState) -> Result<LiftedAdmmState> {
        let (n, m) = (problem.n(), problem.m());
        if s.x.len() != n || s.y.len() != n || s.lambda2.len() != n {
            return Err(Error::dims("lifted primal block", n, s.x.len()));
        }
        if s.lambda1.len() != m {
            return Err(Error::dims("lambda1", m, s.lambda1.len()));
        }
        let a = problem.a();
        let beta = self.beta;
        let x = problem.prox_raw(1.0 / beta, &(&s.y - &s.lambda2 / beta));
        let q = (&s.lambda2 + a.tr_mul(problem.b()) * beta + &x * beta - a.tr_mul(&s.lambda1)) / beta;
        let y = self.system.solve(&q);
        let lambda1 = &s.lambda1 + problem.residual(&y) * beta;
        let lambda2 = &s.lambda2 + (&x - &y) * beta;
        Ok(LiftedAdmmState {
            x,
            y,
            lambda1,
            lambda2,
            k: s.k + 1,
        })
    }

    fn snapshot(&self, _: &ConvexProblem, s: &LiftedAdmmState) -> Iterate {
        Iterate::new(s.x.clone(), s.lambda1.clone())
    }

    fn is_finite(&self, s: &LiftedAdmmState) -> bool {
        [&s.x, &s.y, &s.lambda1, &s.lambda2].into_iter().all(crate::all_finite)
    }
}

pub fn lifted_admm_step(problem: &ConvexProblem, state: &LiftedAdmmState, beta: f64) -> Result<LiftedAdmmState> {
    LiftedAdmm::new(problem, beta)?.step(problem, state)
}

/// Resolvent of `sigma y = b`: the constant `b / sigma`.
pub fn affine_resolvent_y(sigma: f64, b: &Vector, _y: &Vector) -> Vector {
    b / sigma
}

/// A resolvent `(I + tau T)^{-1}` on the stacked space `(x; y)`.
pub trait Resolvent: Send + Sync {
    fn apply(&self, problem: &ConvexProblem, z: &Vector) -> Vector;
}

/// The identity map, the resolvent of the zero operator.
#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl Resolvent for Identity {
    fn apply(&self, _: &ConvexProblem, z: &Vector) -> Vector {
        z.clone()
    }
}

/// Euclidean projection onto `{(x, y) : A x = sigma y}`:
/// `z - (A'; -sigma I) (A A' + sigma^2 I)^{-1} (A x - sigma y)`.
#[derive(Debug, Clone)]
pub struct AffineProjection {
    sigma: f64,
    factor: RegularizedGramFactor,
}

impl AffineProjection {
    pub fn new(a: &Matrix, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(AffineProjection {
            sigma,
            factor: RegularizedGramFactor::new(a, 1.0, sigma * sigma)?,
        })
    }

    pub fn project(&self, z: &Vector) -> Vector {
        let a = self.factor.a();
        let (n, m) = (a.ncols(), a.nrows());
        let x = z.rows(0, n);
        let y = z.rows(n, m);
        let t = self.factor.solve_raw(&(a * x - y * self.sigma));
        let mut out = z.clone();
        out.rows_mut(0, n).copy_from(&(x - a.tr_mul(&t)));
        out.rows_mut(n, m).copy_from(&(y + &t * self.sigma));
        out
    }
}

impl Resolvent for AffineProjection {
    fn apply(&self, _: &ConvexProblem, z: &Vector) -> Vector {
        self.project(z)
    }
}

pub fn affine_resolvent_z(a: &Matrix, sigma: f64, z: &Vector) -> Result<Vector> {
    if z.len() != a.ncols() + a.nrows() {
        return Err(Error::dims("stacked (x; y)", a.ncols() + a.nrows(), z.len()));
    }
    Ok(AffineProjection::new(a, sigma)?.project(z))
}

/// Resolvent of `F(x, y) = f(x) + indicator(sigma y = b)`: `prox_{tau f}` on
/// the `x` block, `b / sigma` on the `y` block.
#[derive(Debug, Clone)]
pub struct FResolvent {
    tau: f64,
    sigma: f64,
}

impl FResolvent {
    pub fn new(tau: f64, sigma: f64) -> Result<Self> {
        if !(tau > 0.0 && sigma > 0.0) {
            return Err(Error::Parameter(format!("tau and sigma must be positive, got {tau}, {sigma}")));
        }
        Ok(FResolvent { tau, sigma })
    }
}

impl Resolvent for FResolvent {
    fn apply(&self, problem: &ConvexProblem, z: &Vector) -> Vector {
        let (n, m) = (problem.n(), problem.m());
        let mut out = Vector::zeros(n + m);
        out.rows_mut(0, n)
            .copy_from(&problem.prox_raw(self.tau, &z.rows(0, n).into_owned()));
        out.rows_mut(n, m)
            .copy_from(&affine_resolvent_y(self.sigma, problem.b(), &z.rows(n, m).into_owned()));
        out
    }
}

/// `w` and `z` of the splitting, plus the last output of the first
/// resolvent, from which the dual-primal configuration reads its `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrsState {
    pub w: Vector,
    pub z: Vector,
    pub last_first: Vector,
    pub k: usize,
}

impl DrsState {
    pub fn new(w: Vector, z: Vector) -> Self {
        DrsState {
            last_first: z.clone(),
            w,
            z,
            k: 0,
        }
    }
}

/// `w^{k+1} = R_A(2 z^k - w^k) + w^k - z^k`, `z^{k+1} = R_B(w^{k+1})`.
pub fn drs_step(first: &dyn Resolvent, second: &dyn Resolvent, problem: &ConvexProblem, s: &DrsState) -> DrsState {
    let reflected = &s.z * 2.0 - &s.w;
    let ra = first.apply(problem, &reflected);
    let w = &ra + &s.w - &s.z;
    let z = second.apply(problem, &w);
    DrsState {
        w,
        z,
        last_first: ra,
        k: s.k + 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrsRoles {
    /// First resolvent is the projection, second the `F`-resolvent;
    /// reproduces balanced ALM.
    ProjectionFirst,
    /// First resolvent is the `F`-resolvent, second the projection;
    /// reproduces dual-primal balanced ALM.
    FFirst,
}

/// DRS with `tau = 1/r` and `sigma = sqrt(r delta)`, so `tau r = 1` and
/// `tau sigma^2 = delta`.
#[derive(Debug, Clone)]
pub struct DrsConfig {
    pub tau: f64,
    pub sigma: f64,
    pub roles: DrsRoles,
    projection: AffineProjection,
    f_resolvent: FResolvent,
}

fn drs_config(problem: &ConvexProblem, r: f64, delta: f64, roles: DrsRoles) -> Result<DrsConfig> {
    if !(r > 0.0 && delta > 0.0) {
        return Err(Error::Parameter(format!("r and delta must be positive, got {r}, {delta}")));
    }
    let tau = 1.0 / r;
    let sigma = (r * delta).sqrt();
    Ok(DrsConfig {
        tau,
        sigma,
        roles,
        projection: AffineProjection::new(problem.a(), sigma)?,
        f_resolvent: FResolvent::new(tau, sigma)?,
    })
}

pub fn drs_balanced_config(problem: &ConvexProblem, r: f64, delta: f64) -> Result<DrsConfig> {
    drs_config(problem, r, delta, DrsRoles::ProjectionFirst)
}

pub fn drs_dual_primal_config(problem: &ConvexProblem, r: f64, delta: f64) -> Result<DrsConfig> {
    drs_config(problem, r, delta, DrsRoles::FFirst)
}

fn stack(x: &Vector, y: &Vector) -> Vector {
    let mut out = Vector::zeros(x.len() + y.len());
    out.rows_mut(0, x.len()).copy_from(x);
    out.rows_mut(x.len(), y.len()).copy_from(y);
    out
}

impl DrsConfig {
    fn resolvents(&self) -> (&dyn Resolvent, &dyn Resolvent) {
        match self.roles {
            DrsRoles::ProjectionFirst => (&self.projection, &self.f_resolvent),
            DrsRoles::FFirst => (&self.f_resolvent, &self.projection),
        }
    }

    /// Multiplier read off a `y~` block: `(y~ - b/sigma)/(tau sigma)`, negated
    /// in the dual-primal configuration.
    pub fn extract_lambda(&self, problem: &ConvexProblem, y_tilde: &Vector) -> Vector {
        let centered = (y_tilde - problem.b() / self.sigma) / (self.tau * self.sigma);
        match self.roles {
            DrsRoles::ProjectionFirst => centered,
            DrsRoles::FFirst => -centered,
        }
    }

    /// A DRS start whose extracted sequence begins at `(x0, lambda0)` with
    /// multiplier history `lambda_prev` (used by the dual-primal roles only).
    pub fn initial_state(&self, problem: &ConvexProblem, x0: &Vector, lambda0: &Vector, lambda_prev: &Vector) -> DrsState {
        let (tau, sigma) = (self.tau, self.sigma);
        let a = problem.a();
        let c = problem.b() / sigma;
        match self.roles {
            DrsRoles::ProjectionFirst => {
                // w^1 = (x0 - tau A' lambda0, c + tau sigma lambda0); z0 - w^1 lies
                // in the range of (A'; -sigma I), so the projection of 2z0 - w0 vanishes
                let z = stack(x0, &c);
                let w1 = stack(&(x0 - a.tr_mul(lambda0) * tau), &(&c + lambda0 * (tau * sigma)));
                DrsState::new(&z + w1, z)
            }
            DrsRoles::FFirst => {
                let w = stack(&(x0 + a.tr_mul(lambda_prev) * tau), &(&c - lambda_prev * (tau * sigma)));
                let z = stack(
                    &(x0 + a.tr_mul(&(lambda_prev - lambda0)) * tau),
                    &(&c + (lambda0 - lambda_prev) * (tau * sigma)),
                );
                let mut s = DrsState::new(w, z);
                s.last_first = stack(x0, &c);
                s
            }
        }
    }
}

impl Method for DrsConfig {
    type State = DrsState;

    fn step(&self, problem: &ConvexProblem, s: &DrsState) -> Result<DrsState> {
        let len = problem.n() + problem.m();
        if s.w.len() != len || s.z.len() != len {
            return Err(Error::dims("DRS state", len, s.w.len()));
        }
        let (first, second) = self.resolvents();
        Ok(drs_step(first, second, problem, s))
    }

    fn snapshot(&self, problem: &ConvexProblem, s: &DrsState) -> Iterate {
        let (n, m) = (problem.n(), problem.m());
        match self.roles {
            DrsRoles::ProjectionFirst => {
                let ra = self.projection.project(&(&s.z * 2.0 - &s.w));
                let w_next_y = ra.rows(n, m) + s.w.rows(n, m) - s.z.rows(n, m);
                Iterate::new(s.z.rows(0, n).into_owned(), self.extract_lambda(problem, &w_next_y))
            }
            DrsRoles::FFirst => {
                // the F-resolvent always returns b/sigma in y, so w^{k+1}.y = b/sigma + w.y - z.y
                let w_next_y = problem.b() / self.sigma + s.w.rows(n, m) - s.z.rows(n, m);
                Iterate::new(s.last_first.rows(0, n).into_owned(), self.extract_lambda(problem, &w_next_y))
            }
        }
    }

    fn is_finite(&self, s: &DrsState) -> bool {
        [&s.w, &s.z, &s.last_first].into_iter().all(crate::all_finite)
    }
}

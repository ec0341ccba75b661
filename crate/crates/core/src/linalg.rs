//! Dense kernels: the regularized Gram factorization behind every multiplier
//! update, the Sherman-Morrison reduction for the lifted ADMM, and power
//! iteration for spectral norms.

use nalgebra::{Cholesky, Dyn};

use crate::{Error, Matrix, Result, Vector};

/// Cholesky factor of `beta * A A' + delta * I` (size `m x m`).
///
/// Built once and reused for every multiplier solve. Accelerated runs with
/// `delta^k = delta' / r^k` reuse one factor of `A A' + delta' I` scaled by
/// the current step, since `(A A'/r + (delta'/r) I)^{-1} = r (A A' + delta' I)^{-1}`.
#[derive(Debug, Clone)]
pub struct RegularizedGramFactor {
    beta: f64,
    delta: f64,
    chol: Cholesky<f64, Dyn>,
    a: Matrix,
}

pub fn factorize_regularized_gram(a: &Matrix, beta: f64, delta: f64) -> Result<RegularizedGramFactor> {
    RegularizedGramFactor::new(a, beta, delta)
}

impl RegularizedGramFactor {
    pub fn new(a: &Matrix, beta: f64, delta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Parameter(format!("Gram weight beta must be positive, got {beta}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Parameter(format!("regularization delta must be positive, got {delta}")));
        }
        if !a.iter().all(|v| v.is_finite()) {
            return Err(Error::Input("matrix has non-finite entries".into()));
        }
        let m = a.nrows();
        let mut gram = a * a.transpose() * beta;
        for i in 0..m {
            gram[(i, i)] += delta;
        }
        let chol = Cholesky::new(gram).ok_or_else(|| Error::Rank("regularized Gram matrix is not positive definite".into()))?;
        Ok(RegularizedGramFactor {
            beta,
            delta,
            chol,
            a: a.clone(),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    /// Lower-triangular `L` with `L L' = beta A A' + delta I`.
    pub fn lower(&self) -> Matrix {
        self.chol.l()
    }

    /// The factored matrix, rebuilt from `L`.
    pub fn reconstruct(&self) -> Matrix {
        let l = self.chol.l();
        &l * l.transpose()
    }

    /// `(beta A A' + delta I) v` without touching the factor.
    pub fn apply(&self, v: &Vector) -> Vector {
        (&self.a * self.a.tr_mul(v)) * self.beta + v * self.delta
    }

    /// Returns `z` with `(beta A A' + delta I) z = rhs`.
    pub fn solve(&self, rhs: &Vector) -> Result<Vector> {
        if rhs.len() != self.dim() {
            return Err(Error::dims("Gram right-hand side", self.dim(), rhs.len()));
        }
        Ok(self.solve_raw(rhs))
    }

    pub(crate) fn solve_raw(&self, rhs: &Vector) -> Vector {
        self.chol.solve(rhs)
    }

    /// True when the factor was built for `(beta, delta)` up to rounding.
    pub fn matches(&self, beta: f64, delta: f64) -> bool {
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
        close(self.beta, beta) && close(self.delta, delta)
    }
}

/// `(A'A + I)^{-1} q` through the `m x m` system `(I + A A') y = A q`,
/// returning `q - A' y`.
pub fn sherman_morrison_solve(a: &Matrix, q: &Vector) -> Result<Vector> {
    if q.len() != a.ncols() {
        return Err(Error::dims("Sherman-Morrison right-hand side", a.ncols(), q.len()));
    }
    let factor = RegularizedGramFactor::new(a, 1.0, 1.0)?;
    Ok(sherman_morrison_apply(&factor, q))
}

fn sherman_morrison_apply(small: &RegularizedGramFactor, q: &Vector) -> Vector {
    let a = small.a();
    let y = small.solve_raw(&(a * q));
    q - a.tr_mul(&y)
}

/// Cached solver for `(A'A + I) z = q`.
///
/// Uses the Sherman-Morrison route through an `m x m` factor when `m < n`,
/// and a direct `n x n` Cholesky otherwise.
#[derive(Debug, Clone)]
pub enum LiftedSystem {
    ShermanMorrison(RegularizedGramFactor),
    Direct(Cholesky<f64, Dyn>),
}

impl LiftedSystem {
    pub fn new(a: &Matrix) -> Result<Self> {
        if a.nrows() < a.ncols() {
            Ok(LiftedSystem::ShermanMorrison(RegularizedGramFactor::new(a, 1.0, 1.0)?))
        } else {
            if !a.iter().all(|v| v.is_finite()) {
                return Err(Error::Input("matrix has non-finite entries".into()));
            }
            let n = a.ncols();
            let m = a.tr_mul(a) + Matrix::identity(n, n);
            let chol = Cholesky::new(m).ok_or_else(|| Error::Rank("A'A + I is not positive definite".into()))?;
            Ok(LiftedSystem::Direct(chol))
        }
    }

    pub fn solve(&self, q: &Vector) -> Vector {
        match self {
            LiftedSystem::ShermanMorrison(f) => sherman_morrison_apply(f, q),
            LiftedSystem::Direct(chol) => chol.solve(q),
        }
    }
}

const POWER_MAX_ITERS: usize = 100_000;

/// Largest eigenvalue of `A'A` (the squared spectral norm of `A`) by power
/// iteration from the normalized all-ones vector.
pub fn spectral_norm_sq(a: &Matrix, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 || a.amax() == 0.0 {
        return Ok(0.0);
    }
    let mut v = Vector::from_element(n, 1.0).normalize();
    let mut w = a.tr_mul(&(a * &v));
    if w.norm() == 0.0 {
        // all-ones lies in the null space of A'A
        v[0] += 1e-8;
        v.normalize_mut();
        w = a.tr_mul(&(a * &v));
        if w.norm() == 0.0 {
            v = Vector::from_fn(n, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 }).normalize();
            w = a.tr_mul(&(a * &v));
        }
    }
    let mut estimate = v.dot(&w);
    for _ in 0..POWER_MAX_ITERS {
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
        w = a.tr_mul(&(a * &v));
        let next = v.dot(&w);
        let converged = (next - estimate).abs() <= tol * next.abs();
        estimate = next;
        if converged {
            break;
        }
    }
    Ok(estimate)
}

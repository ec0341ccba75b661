//! Problem definitions: `min f(x) s.t. Ax = b` with `f` given by a proximal
//! oracle, a value oracle and a strong-convexity modulus.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// A closed proper convex function reachable only through oracles.
///
/// Implementations must be pure: identical inputs give identical outputs.
pub trait ConvexFunction: Send + Sync + fmt::Debug {
    /// Number of variables.
    fn dim(&self) -> usize;

    /// `argmin_y f(y) + ||y - z||^2 / (2 gamma)`. Callers guarantee
    /// `gamma > 0` and `z.len() == self.dim()`.
    fn prox(&self, gamma: f64, z: &Vector) -> Vector;

    fn value(&self, x: &Vector) -> f64;

    /// Strong-convexity modulus, `0` for merely convex functions.
    fn modulus(&self) -> f64;

    /// `f(x) - f(y)`. Overridden where a form with less cancellation exists.
    fn value_difference(&self, x: &Vector, y: &Vector) -> f64 {
        self.value(x) - self.value(y)
    }

    /// `(Q, c)` when `f(x) = x'Qx/2 + c'x`.
    fn as_quadratic(&self) -> Option<(&Matrix, &Vector)> {
        None
    }
}

/// `f(x) = x'Qx/2 + c'x` with `Q` symmetric positive definite.
///
/// The prox is evaluated through a cached eigendecomposition of `Q`, so every
/// step size costs one pair of dense matvecs.
#[derive(Debug, Clone)]
pub struct Quadratic {
    q: Matrix,
    c: Vector,
    eigenvalues: Vector,
    eigenvectors: Matrix,
}

impl Quadratic {
    pub fn new(q: Matrix, c: Vector) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(Error::Construction(format!("Q must be square, got {}x{}", n, q.ncols())));
        }
        if c.len() != n {
            return Err(Error::dims("linear term c", n, c.len()));
        }
        if !q.iter().chain(c.iter()).all(|v| v.is_finite()) {
            return Err(Error::Construction("Q and c must be finite".into()));
        }
        let scale = q.amax().max(1.0);
        if (&q - q.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Construction("Q is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(q.clone());
        let min = eig.eigenvalues.min();
        if min <= 0.0 {
            return Err(Error::Construction(format!(
                "Q is not positive definite (smallest eigenvalue {min:e})"
            )));
        }
        Ok(Quadratic {
            q,
            c,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }
}

impl ConvexFunction for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn prox(&self, gamma: f64, z: &Vector) -> Vector {
        // (Q + I/gamma) y = z/gamma - c, diagonalized by the eigenbasis of Q.
        let rhs = z / gamma - &self.c;
        let mut coords = self.eigenvectors.tr_mul(&rhs);
        for (w, lam) in coords.iter_mut().zip(self.eigenvalues.iter()) {
            *w /= lam + 1.0 / gamma;
        }
        &self.eigenvectors * coords
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    fn modulus(&self) -> f64 {
        self.eigenvalues.min()
    }

    fn value_difference(&self, x: &Vector, y: &Vector) -> f64 {
        let d = x - y;
        let s = x + y;
        0.5 * d.dot(&(&self.q * s)) + self.c.dot(&d)
    }

    fn as_quadratic(&self) -> Option<(&Matrix, &Vector)> {
        Some((&self.q, &self.c))
    }
}

/// `f(x) = weight * ||x||_1 + (mu/2) ||x||^2`.
///
/// `mu = 0` gives the plain weighted l1 norm; `mu = weight = 0` is the zero
/// function.
#[derive(Debug, Clone)]
pub struct ElasticNet {
    n: usize,
    mu: f64,
    weight: f64,
}

impl ElasticNet {
    pub fn new(n: usize, mu: f64, weight: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Parameter(format!("mu must be nonnegative, got {mu}")));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::Parameter(format!("weight must be nonnegative, got {weight}")));
        }
        Ok(ElasticNet { n, mu, weight })
    }

    pub fn l1(n: usize, weight: f64) -> Result<Self> {
        Self::new(n, 0.0, weight)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl ConvexFunction for ElasticNet {
    fn dim(&self) -> usize {
        self.n
    }

    fn prox(&self, gamma: f64, z: &Vector) -> Vector {
        let shrink = 1.0 + gamma * self.mu;
        let t = gamma * self.weight / shrink;
        z.map(|v| soft_threshold(v / shrink, t))
    }

    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.lp_norm(1) + 0.5 * self.mu * x.norm_squared()
    }

    fn modulus(&self) -> f64 {
        self.mu
    }
}

/// Exact primal-dual solution pair of a constrained problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleCertificate {
    pub x_star: Vector,
    pub lambda_star: Vector,
}

impl SaddleCertificate {
    /// Checks `||A x* - b|| <= tol` and the stationarity fixed point
    /// `x* = prox(gamma, x* - gamma A' lambda*)` at `gamma = 1`.
    pub fn verify(&self, problem: &ConvexProblem, tol: f64) -> Result<()> {
        let residual = problem.residual_norm(&self.x_star);
        if residual > tol {
            return Err(Error::Input(format!("certificate infeasible: ||Ax-b|| = {residual:e}")));
        }
        let stationarity = self.stationarity(problem, 1.0);
        if stationarity > tol {
            return Err(Error::Input(format!(
                "certificate not stationary: prox fixed-point error {stationarity:e}"
            )));
        }
        Ok(())
    }

    /// `||x* - prox(gamma, x* - gamma A' lambda*)||`.
    pub fn stationarity(&self, problem: &ConvexProblem, gamma: f64) -> f64 {
        let z = &self.x_star - problem.a().tr_mul(&self.lambda_star) * gamma;
        (problem.prox_raw(gamma, &z) - &self.x_star).norm()
    }
}

/// Immutable problem data shared by every solver run.
#[derive(Debug, Clone)]
pub struct ConvexProblem {
    a: Matrix,
    b: Vector,
    f: Arc<dyn ConvexFunction>,
    certificate: Option<SaddleCertificate>,
}

impl ConvexProblem {
    pub fn new(a: Matrix, b: Vector, f: Arc<dyn ConvexFunction>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::dims("right-hand side b", a.nrows(), b.len()));
        }
        if a.ncols() != f.dim() {
            return Err(Error::Dimension(format!(
                "A has {} columns but f acts on {} variables",
                a.ncols(),
                f.dim()
            )));
        }
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::Input("A and b must be finite".into()));
        }
        Ok(ConvexProblem {
            a,
            b,
            f,
            certificate: None,
        })
    }

    pub fn with_certificate(mut self, certificate: SaddleCertificate) -> Self {
        self.certificate = Some(certificate);
        self
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn function(&self) -> &dyn ConvexFunction {
        self.f.as_ref()
    }

    pub fn mu(&self) -> f64 {
        self.f.modulus()
    }

    pub fn certificate(&self) -> Option<&SaddleCertificate> {
        self.certificate.as_ref()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.f.value(x)
    }

    pub fn residual(&self, x: &Vector) -> Vector {
        &self.a * x - &self.b
    }

    pub fn residual_norm(&self, x: &Vector) -> f64 {
        self.residual(x).norm()
    }

    fn check_prox_args(&self, gamma: f64, z: &Vector) -> Result<()> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!("prox step must be positive, got {gamma}")));
        }
        if z.len() != self.n() {
            return Err(Error::dims("prox argument", self.n(), z.len()));
        }
        Ok(())
    }

    /// `argmin_y f(y) + ||y - z||^2 / (2 gamma)`.
    pub fn prox_f(&self, gamma: f64, z: &Vector) -> Result<Vector> {
        self.check_prox_args(gamma, z)?;
        Ok(self.prox_raw(gamma, z))
    }

    /// Prox of the conjugate `f*` via the Moreau identity
    /// `prox_{gamma f*}(z) = z - gamma prox_{f/gamma}(z/gamma)`.
    pub fn prox_f_conjugate(&self, gamma: f64, z: &Vector) -> Result<Vector> {
        self.check_prox_args(gamma, z)?;
        Ok(self.prox_conjugate_raw(gamma, z))
    }

    pub(crate) fn prox_raw(&self, gamma: f64, z: &Vector) -> Vector {
        self.f.prox(gamma, z)
    }

    pub(crate) fn prox_conjugate_raw(&self, gamma: f64, z: &Vector) -> Vector {
        z - self.f.prox(1.0 / gamma, &(z / gamma)) * gamma
    }
}

/// `f(x) = x'Qx/2 + c'x` subject to `Ax = b`. When `A` has full row rank the
/// exact saddle point is attached as the problem's certificate.
pub fn make_quadratic_problem(q: Matrix, c: Vector, a: Matrix, b: Vector) -> Result<ConvexProblem> {
    let quad = Quadratic::new(q.clone(), c.clone())?;
    let problem = ConvexProblem::new(a.clone(), b.clone(), Arc::new(quad))?;
    Ok(match kkt_oracle(&q, &c, &a, &b) {
        Ok(cert) => problem.with_certificate(cert),
        Err(_) => problem,
    })
}

/// `f(x) = weight ||x||_1 + (mu/2)||x||^2` subject to `Ax = b`.
pub fn make_elastic_net_problem(mu: f64, weight: f64, a: Matrix, b: Vector) -> Result<ConvexProblem> {
    if !(mu > 0.0) {
        return Err(Error::Parameter(format!("elastic net needs mu > 0, got {mu}")));
    }
    let f = ElasticNet::new(a.ncols(), mu, weight)?;
    ConvexProblem::new(a, b, Arc::new(f))
}

/// Solves `[Q A'; A 0] [x; lambda] = [-c; b]` by dense LU.
pub fn kkt_oracle(q: &Matrix, c: &Vector, a: &Matrix, b: &Vector) -> Result<SaddleCertificate> {
    let n = q.nrows();
    let m = a.nrows();
    if q.ncols() != n || a.ncols() != n || c.len() != n || b.len() != m {
        return Err(Error::Dimension(format!(
            "KKT blocks: Q {}x{}, c {}, A {}x{}, b {}",
            q.nrows(),
            q.ncols(),
            c.len(),
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut kkt = Matrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(q);
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = Vector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-c));
    rhs.rows_mut(n, m).copy_from(b);

    let scale = kkt.amax().max(1.0);
    let lu = kkt.lu();
    let diag_min = lu.u().diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if diag_min <= 1e-13 * scale {
        return Err(Error::Rank("KKT matrix is singular (A rank deficient?)".into()));
    }
    let sol = lu.solve(&rhs).ok_or_else(|| Error::Rank("KKT matrix is singular".into()))?;
    Ok(SaddleCertificate {
        x_star: sol.rows(0, n).into_owned(),
        lambda_star: sol.rows(n, m).into_owned(),
    })
}

/// On-disk problem description. Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProblemSpec {
    Quadratic {
        #[serde(rename = "Q")]
        q: Vec<Vec<f64>>,
        c: Vec<f64>,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    ElasticNet {
        mu: f64,
        #[serde(default)]
        weight: f64,
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    /// Seeded random strongly convex quadratic with `m < n` constraints.
    RandomQuadratic {
        n: usize,
        m: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    RandomElasticNet {
        n: usize,
        m: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Input(format!("{what}: rows have unequal lengths")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ProblemSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Builds the problem; `default_seed` fills in a missing seed of the
    /// random variants.
    pub fn build(&self, default_seed: u64) -> Result<ConvexProblem> {
        match self {
            ProblemSpec::Quadratic { q, c, a, b } => make_quadratic_problem(
                matrix_from_rows(q, "Q")?,
                Vector::from_column_slice(c),
                matrix_from_rows(a, "A")?,
                Vector::from_column_slice(b),
            ),
            ProblemSpec::ElasticNet { mu, weight, a, b } => {
                make_elastic_net_problem(*mu, *weight, matrix_from_rows(a, "A")?, Vector::from_column_slice(b))
            }
            ProblemSpec::RandomQuadratic { n, m, seed } => random_quadratic(*n, *m, seed.unwrap_or(default_seed)),
            ProblemSpec::RandomElasticNet { n, m, seed } => random_elastic_net(*n, *m, seed.unwrap_or(default_seed)),
        }
    }

    pub fn quadratic(q: &Matrix, c: &Vector, a: &Matrix, b: &Vector) -> Self {
        ProblemSpec::Quadratic {
            q: matrix_to_rows(q),
            c: c.iter().copied().collect(),
            a: matrix_to_rows(a),
            b: b.iter().copied().collect(),
        }
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn uniform_vector(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 || m > n {
        return Err(Error::Parameter(format!("random instances need 0 < m <= n, got n={n}, m={m}")));
    }
    Ok(())
}

/// Random instance with `Q = M'M/n + I/2`, entries of `A`, `c` uniform in
/// `[-1, 1]` and `b = A x0` for a random `x0`.
pub fn random_quadratic(n: usize, m: usize, seed: u64) -> Result<ConvexProblem> {
    check_sizes(n, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = uniform_matrix(&mut rng, n, n);
    let mut q = factor.tr_mul(&factor) / n as f64;
    for i in 0..n {
        q[(i, i)] += 0.5;
    }
    // exact symmetry for the SPD check
    let q = (&q + q.transpose()) * 0.5;
    let c = uniform_vector(&mut rng, n);
    let a = uniform_matrix(&mut rng, m, n);
    let b = &a * uniform_vector(&mut rng, n);
    make_quadratic_problem(q, c, a, b)
}

/// Random elastic-net instance with `mu = 1`, `weight = 0.1`.
pub fn random_elastic_net(n: usize, m: usize, seed: u64) -> Result<ConvexProblem> {
    check_sizes(n, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = uniform_matrix(&mut rng, m, n);
    let b = &a * uniform_vector(&mut rng, n);
    make_elastic_net_problem(1.0, 0.1, a, b)
}

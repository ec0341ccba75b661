//! Traces, the saddle gap function, ergodic averages, iterate-equivalence
//! checks, log-log rate fitting and the ergodic gap bounds of the balanced
//! ALM family.

use std::io;

use crate::accelerated::Schedule;
use crate::linalg::RegularizedGramFactor;
use crate::problem::{ConvexProblem, SaddleCertificate};
use crate::{Error, Matrix, Result, Vector};

/// A primal-dual pair `(x, lambda)` in the coordinates of the original problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Vector,
    pub lambda: Vector,
}

impl Iterate {
    pub fn new(x: Vector, lambda: Vector) -> Self {
        Iterate { x, lambda }
    }

    /// `(x; lambda)` as one vector.
    pub fn stacked(&self) -> Vector {
        let n = self.x.len();
        let mut out = Vector::zeros(n + self.lambda.len());
        out.rows_mut(0, n).copy_from(&self.x);
        out.rows_mut(n, self.lambda.len()).copy_from(&self.lambda);
        out
    }

    pub fn is_finite(&self) -> bool {
        crate::all_finite(&self.x) && crate::all_finite(&self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub x: Vector,
    pub lambda: Vector,
    pub objective: f64,
    pub primal_residual: f64,
    pub gap: Option<f64>,
}

impl TraceRow {
    pub fn new(problem: &ConvexProblem, k: usize, iterate: Iterate, reference: Option<&SaddleCertificate>) -> Self {
        let gap = reference.map(|r| gap_value(problem, &iterate.x, &iterate.lambda, &r.x_star, &r.lambda_star));
        TraceRow {
            k,
            objective: problem.value(&iterate.x),
            primal_residual: problem.residual_norm(&iterate.x),
            gap,
            x: iterate.x,
            lambda: iterate.lambda,
        }
    }
}

/// Per-iteration record of one solver run. Row `k` holds the iterate after
/// `k` steps, so a run of `K` steps has `K + 1` rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    pub fn push(&mut self, row: TraceRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.k <= last.k {
                return Err(Error::Input(format!("trace rows must increase: {} after {}", row.k, last.k)));
            }
            if row.x.len() != last.x.len() || row.lambda.len() != last.lambda.len() {
                return Err(Error::Input("trace rows must share dimensions".into()));
            }
        } else if row.k != 0 {
            return Err(Error::Input("trace must start at k = 0".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn iterates(&self) -> Vec<Iterate> {
        self.rows.iter().map(|r| Iterate::new(r.x.clone(), r.lambda.clone())).collect()
    }

    pub fn header(n: usize, m: usize) -> Vec<String> {
        let mut h: Vec<String> = ["k", "objective", "primal_residual", "gap"].iter().map(|s| s.to_string()).collect();
        h.extend((0..n).map(|i| format!("x_{i}")));
        h.extend((0..m).map(|i| format!("lambda_{i}")));
        h
    }

    /// Writes the CSV form. Floats use Rust's shortest round-trip decimal
    /// formatting; an unset gap is an empty field.
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let (n, m) = self.rows.first().map_or((0, 0), |r| (r.x.len(), r.lambda.len()));
        w.write_record(Self::header(n, m))?;
        for row in &self.rows {
            let mut rec = vec![
                row.k.to_string(),
                row.objective.to_string(),
                row.primal_residual.to_string(),
                row.gap.map(|g| g.to_string()).unwrap_or_default(),
            ];
            rec.extend(row.x.iter().map(f64::to_string));
            rec.extend(row.lambda.iter().map(f64::to_string));
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(input: R) -> Result<Trace> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let n = headers.iter().filter(|h| h.starts_with("x_")).count();
        let m = headers.iter().filter(|h| h.starts_with("lambda_")).count();
        let expected = Self::header(n, m);
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::Input("unexpected trace header".into()));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Input(format!("bad float {s:?}: {e}")));
        let mut trace = Trace::new();
        for rec in r.records() {
            let rec = rec?;
            let k = rec[0].parse::<usize>().map_err(|e| Error::Input(format!("bad k: {e}")))?;
            let gap = if rec[3].is_empty() { None } else { Some(parse(&rec[3])?) };
            let x = (0..n).map(|i| parse(&rec[4 + i])).collect::<Result<Vec<_>>>()?;
            let lambda = (0..m).map(|i| parse(&rec[4 + n + i])).collect::<Result<Vec<_>>>()?;
            trace.push(TraceRow {
                k,
                x: Vector::from_vec(x),
                lambda: Vector::from_vec(lambda),
                objective: parse(&rec[1])?,
                primal_residual: parse(&rec[2])?,
                gap,
            })?;
        }
        Ok(trace)
    }
}

/// `f(x_hat) + lambda_ref'(A x_hat - b) - f(x_ref) - lambda_hat'(A x_ref - b)`.
///
/// Evaluated as
/// `[f(x_hat) - f(x_ref)] + lambda_ref' A (x_hat - x_ref) + (lambda_ref - lambda_hat)'(A x_ref - b)`,
/// which keeps precision when the gap is many orders smaller than the objective.
pub fn gap_value(problem: &ConvexProblem, x_hat: &Vector, lambda_hat: &Vector, x_ref: &Vector, lambda_ref: &Vector) -> f64 {
    let a = problem.a();
    let df = problem.function().value_difference(x_hat, x_ref);
    let coupling = lambda_ref.dot(&(a * (x_hat - x_ref)));
    let ref_residual = problem.residual(x_ref);
    df + coupling + (lambda_ref - lambda_hat).dot(&ref_residual)
}

#[derive(Debug, Clone)]
pub enum Weights {
    Uniform,
    /// Weight `r^k` on the `k`-th summand.
    Schedule(Schedule),
}

/// Which iterates enter an ergodic average: `x^{k+1}` always, and `lambda^k`
/// or `lambda^{k+1}` depending on `lambda_offset`.
#[derive(Debug, Clone)]
pub struct ErgodicSpec {
    pub weights: Weights,
    pub lambda_offset: usize,
}

impl ErgodicSpec {
    pub const X_OFFSET: usize = 1;

    pub fn uniform(lambda_offset: usize) -> Self {
        ErgodicSpec {
            weights: Weights::Uniform,
            lambda_offset,
        }
    }

    pub fn weighted(schedule: Schedule, lambda_offset: usize) -> Self {
        ErgodicSpec {
            weights: Weights::Schedule(schedule),
            lambda_offset,
        }
    }

    fn weight(&self, k: usize) -> f64 {
        match &self.weights {
            Weights::Uniform => 1.0,
            Weights::Schedule(s) => s.r(k as i64),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambda_offset > 1 {
            return Err(Error::Input(format!("lambda offset must be 0 or 1, got {}", self.lambda_offset)));
        }
        Ok(())
    }
}

/// One ergodic average together with its total weight.
#[derive(Debug, Clone)]
pub struct ErgodicPoint {
    pub k: usize,
    pub x_hat: Vector,
    pub lambda_hat: Vector,
    pub weight_sum: f64,
}

/// `x_hat^K = sum w_k x^{k+1} / sum w_k` and the matching `lambda_hat^K`,
/// sums over `k = 0..=K`.
pub fn ergodic_average(trace: &Trace, spec: &ErgodicSpec, k: usize) -> Result<(Vector, Vector)> {
    let mut series = ergodic_series(trace, spec, k)?;
    let last = series.pop().expect("series has k + 1 entries");
    Ok((last.x_hat, last.lambda_hat))
}

/// All ergodic averages for `K = 0..=k_max` by running sums.
pub fn ergodic_series(trace: &Trace, spec: &ErgodicSpec, k_max: usize) -> Result<Vec<ErgodicPoint>> {
    spec.validate()?;
    let needed = k_max + ErgodicSpec::X_OFFSET.max(spec.lambda_offset) + 1;
    if trace.len() < needed {
        return Err(Error::Input(format!(
            "trace has {} rows, averaging to K={k_max} needs {needed}",
            trace.len()
        )));
    }
    let rows = trace.rows();
    let mut sx = Vector::zeros(rows[0].x.len());
    let mut sl = Vector::zeros(rows[0].lambda.len());
    let mut sw = 0.0;
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let w = spec.weight(k);
        if !(w > 0.0) {
            return Err(Error::Input(format!("ergodic weight at k={k} is not positive")));
        }
        sx.axpy(w, &rows[k + ErgodicSpec::X_OFFSET].x, 1.0);
        sl.axpy(w, &rows[k + spec.lambda_offset].lambda, 1.0);
        sw += w;
        out.push(ErgodicPoint {
            k,
            x_hat: &sx / sw,
            lambda_hat: &sl / sw,
            weight_sum: sw,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// `||a_k - b_k|| / (1 + ||b_k||)` for `k = 0..=K`.
    pub deviations: Vec<f64>,
    pub tol: f64,
    pub first_violation: Option<usize>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares two already-mapped iterate sequences over `k = 0..=K`.
pub fn iterate_equivalence(a: &[Vector], b: &[Vector], tol: f64, k: usize) -> Result<EquivalenceReport> {
    if a.len() <= k || b.len() <= k {
        return Err(Error::Input(format!(
            "traces of length {} and {} do not reach K={k}",
            a.len(),
            b.len()
        )));
    }
    let mut deviations = Vec::with_capacity(k + 1);
    let mut first_violation = None;
    for i in 0..=k {
        if a[i].len() != b[i].len() {
            return Err(Error::Dimension(format!("iterate {i}: {} vs {} entries", a[i].len(), b[i].len())));
        }
        let d = (&a[i] - &b[i]).norm() / (1.0 + b[i].norm());
        if first_violation.is_none() && !(d <= tol) {
            first_violation = Some(i);
        }
        deviations.push(d);
    }
    Ok(EquivalenceReport {
        deviations,
        tol,
        first_violation,
    })
}

/// Least-squares slope of `log(gap)` against `log(K)` over the points with
/// `k_min <= K <= k_max`.
pub fn rate_fit(points: &[(f64, f64)], k_min: f64, k_max: f64) -> Result<f64> {
    let window: Vec<(f64, f64)> = points.iter().copied().filter(|(k, _)| *k >= k_min && *k <= k_max).collect();
    if window.len() < 2 {
        return Err(Error::Input(format!("rate window [{k_min}, {k_max}] holds fewer than two points")));
    }
    if let Some((k, g)) = window.iter().find(|(_, g)| !(*g > 0.0)) {
        return Err(Error::Input(format!(
            "nonpositive gap {g:e} at K={k}; shrink the window or report exact convergence"
        )));
    }
    let xs: Vec<f64> = window.iter().map(|(k, _)| k.ln()).collect();
    let ys: Vec<f64> = window.iter().map(|(_, g)| g.ln()).collect();
    let count = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / count;
    let my = ys.iter().sum::<f64>() / count;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("rate window has a single distinct K".into()));
    }
    Ok(sxy / sxx)
}

/// Default fitting window `[K/10, K]`.
pub fn default_rate_window(k: usize) -> (f64, f64) {
    ((k as f64 / 10.0).max(1.0), k as f64)
}

/// `v' (A A' + delta' I) v`, one matvec.
pub fn h_norm_sq(a: &Matrix, delta_prime: f64, v: &Vector) -> f64 {
    a.tr_mul(v).norm_squared() + delta_prime * v.norm_squared()
}

/// The two families of ergodic gap bounds.
///
/// `Balanced` covers balanced ALM and its accelerated form: `lambda_hat`
/// averages `lambda^k`. `DualPrimal` covers the dual-primal method and its
/// accelerated form: `lambda_hat` averages `lambda^{k+1}`. A constant
/// schedule gives the plain `O(1/K)` bounds, the growing schedule the
/// `O(1/K^2)` ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundFamily {
    Balanced,
    DualPrimal,
}

impl BoundFamily {
    pub fn lambda_offset(self) -> usize {
        match self {
            BoundFamily::Balanced => 0,
            BoundFamily::DualPrimal => 1,
        }
    }
}

/// Relative slack granted to the left side of a bound for rounding.
pub const BOUND_SLACK: f64 = 1e-9;

/// Everything the right-hand side of a bound depends on.
#[derive(Debug, Clone)]
pub struct BoundSetup {
    pub family: BoundFamily,
    pub schedule: Schedule,
    pub x0: Vector,
    pub lambda0: Vector,
    /// `lambda^{-1}` as seen by the iteration. For the balanced family the
    /// iteration never reads it, and [`BoundSetup::new`] replaces it with the
    /// value that makes `lambda^0` a genuine multiplier step from `x^{-1} = x^0`.
    pub lambda_prev: Vector,
}

impl BoundSetup {
    /// `x^{-1} = x^0`, `r^{-1} = r^0`. For the dual-primal family
    /// `lambda^{-1} = lambda^0`; for the balanced family
    /// `lambda^{-1} = lambda^0 - r^0 H^{-1} (A x^0 - b)`.
    pub fn new(problem: &ConvexProblem, family: BoundFamily, schedule: Schedule, x0: Vector, lambda0: Vector) -> Result<Self> {
        let lambda_prev = match family {
            BoundFamily::DualPrimal => lambda0.clone(),
            BoundFamily::Balanced => {
                let h = RegularizedGramFactor::new(problem.a(), 1.0, schedule.delta_prime())?;
                let step = h.solve(&problem.residual(&x0))? * schedule.r(0);
                &lambda0 - step
            }
        };
        Ok(BoundSetup {
            family,
            schedule,
            x0,
            lambda0,
            lambda_prev,
        })
    }

    /// Constant term the weighted ergodic gap is bounded by, at reference `(x, lambda)`.
    pub fn rhs(&self, problem: &ConvexProblem, x: &Vector, lambda: &Vector) -> f64 {
        let a = problem.a();
        let dp = self.schedule.delta_prime();
        let r0 = self.schedule.r(0);
        let r_prev = self.schedule.r(-1);
        let x_prev = &self.x0;
        match self.family {
            BoundFamily::Balanced => {
                0.5 * r0 * r0 * (&self.x0 - x).norm_squared()
                    + 0.5 * r_prev * r_prev * (x_prev - &self.x0).norm_squared()
                    + 0.5 * h_norm_sq(a, dp, &(&self.lambda_prev - lambda))
                    + r_prev * (&self.lambda_prev - lambda).dot(&(a * (&self.x0 - x_prev)))
            }
            BoundFamily::DualPrimal => {
                let jump = &self.lambda_prev - &self.lambda0;
                0.5 * r0 * r0 * (&self.x0 - x).norm_squared()
                    + 0.5 * h_norm_sq(a, dp, &(&self.lambda0 - lambda))
                    + 0.5 * h_norm_sq(a, dp, &jump)
                    - r_prev * jump.dot(&(a * (&self.x0 - x)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundViolation {
    pub k: usize,
    pub reference: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BoundReport {
    pub checked: usize,
    pub violations: Vec<BoundViolation>,
    /// Largest `lhs / rhs` over checks with positive `rhs`.
    pub max_ratio: f64,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `(sum_{k<=K} r^k) * gap(x_hat^K, lambda_hat^K; x, lambda) <= rhs(x, lambda)`
/// for every `K <= k_max` and every reference pair.
pub fn check_ergodic_bound(
    problem: &ConvexProblem,
    trace: &Trace,
    setup: &BoundSetup,
    references: &[Iterate],
    k_max: usize,
) -> Result<BoundReport> {
    let spec = ErgodicSpec::weighted(setup.schedule.clone(), setup.family.lambda_offset());
    check_bound_with_spec(problem, trace, setup, &spec, references, k_max)
}

/// As [`check_ergodic_bound`] with a caller-chosen averaging rule. Used to
/// show that the wrong multiplier offset breaks the bound.
pub fn check_bound_with_spec(
    problem: &ConvexProblem,
    trace: &Trace,
    setup: &BoundSetup,
    spec: &ErgodicSpec,
    references: &[Iterate],
    k_max: usize,
) -> Result<BoundReport> {
    let series = ergodic_series(trace, spec, k_max)?;
    let rhs: Vec<f64> = references.iter().map(|r| setup.rhs(problem, &r.x, &r.lambda)).collect();
    let mut report = BoundReport::default();
    for point in &series {
        // sum of r^k over k = 0..=K; uniform weights are measured in units of r
        let total = match spec.weights {
            Weights::Uniform => setup.schedule.r(0) * point.weight_sum,
            Weights::Schedule(_) => point.weight_sum,
        };
        for (j, (reference, rhs)) in references.iter().zip(&rhs).enumerate() {
            let lhs = total * gap_value(problem, &point.x_hat, &point.lambda_hat, &reference.x, &reference.lambda);
            report.checked += 1;
            if *rhs > 0.0 {
                report.max_ratio = report.max_ratio.max(lhs / rhs);
            }
            if !(lhs <= rhs + BOUND_SLACK * (1.0 + rhs.abs())) {
                report.violations.push(BoundViolation {
                    k: point.k,
                    reference: j,
                    lhs,
                    rhs: *rhs,
                });
            }
        }
    }
    Ok(report)
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use liftperm::accelerated::{default_schedule, AccelState, AcceleratedBalancedAlm, AcceleratedDualPrimalAlm, Schedule};
use liftperm::baseline::{collect_states, run, BalancedAlm, DualPrimalBalancedAlm, PrimalDualState};
use liftperm::cli::{rate_study, ExperimentConfig, ProblemSource};
use liftperm::diagnostics::{check_ergodic_bound, BoundFamily, BoundSetup, Iterate, Trace};
use liftperm::linalg::{sherman_morrison_solve, RegularizedGramFactor};
use liftperm::pairings::{reference_solution, run_pairing, standard_instances, PairingSetup};
use liftperm::parallel::Execution;
use liftperm::problem::{kkt_oracle, make_elastic_net_problem, make_quadratic_problem, ConvexProblem, ProblemSpec};
use liftperm::scheme::{
    check_scheme_invariants, enumerate_orders, sweep_orders, OrderClass, PermutedScheme, SchemeParams, SchemeState, UpdateOrder,
};
use liftperm::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_TOL: f64 = 1e-10;
const ORACLE_BUDGET: Duration = Duration::from_secs(5);
const PAIRING_TOL: f64 = 1e-8;
const PAIRING_ITERS: usize = 200;
const PAIRING_BUDGET: Duration = Duration::from_secs(30);
const INVARIANT_TOL: f64 = 1e-10;
const INVARIANT_ITERS: usize = 100;
const SWEEP_TOL: f64 = 1e-5;
const SWEEP_ITERS: usize = 5000;
const BOUND_HORIZON: usize = 2000;
const RATE_WINDOW: (f64, f64) = (100.0, 5000.0);
const PLAIN_SLOPE_MAX: f64 = -0.85;
const ACCEL_SLOPE_MAX: f64 = -1.8;
const SEPARATION_MIN: f64 = 1e-6;
const SEPARATION_BY: usize = 3;
const DEGENERATION_TOL: f64 = 1e-12;
const DEGENERATION_ITERS: usize = 100;

type Check = fn() -> Outcome;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn instances() -> Vec<(&'static str, ConvexProblem)> {
    standard_instances().expect("standard instances")
}

/// Moreau decomposition, prox optimality against closed forms, firm
/// nonexpansiveness, Sherman-Morrison against a dense LU solve and KKT
/// certificates against the stationarity equations.
fn oracle_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut note = |e: f64| worst = worst.max(e);
    for _ in 0..50 {
        let n = rng.random_range(2..8);
        let m = rng.random_range(1..n);
        let f = random_matrix(&mut rng, n, n);
        let q = f.tr_mul(&f) + Matrix::identity(n, n) * 0.5;
        let q = (&q + q.transpose()) * 0.5;
        let c = random_vector(&mut rng, n);
        let a = random_matrix(&mut rng, m, n);
        let b = random_vector(&mut rng, m);
        let quad = make_quadratic_problem(q.clone(), c.clone(), a.clone(), b.clone()).unwrap();
        let (mu, w) = (rng.random_range(0.1..2.0), rng.random_range(0.0..1.0));
        let net = make_elastic_net_problem(mu, w, a.clone(), b.clone()).unwrap();
        let gamma = rng.random_range(0.1..5.0);
        let z = random_vector(&mut rng, n) * 3.0;
        let z2 = random_vector(&mut rng, n) * 3.0;

        // quadratic: (Q + I/gamma) p = z/gamma - c, and (Q + gamma I) p* = Q z + gamma c
        let p = quad.prox_f(gamma, &z).unwrap();
        note((&q * &p + &c + (&p - &z) / gamma).norm());
        let pc = quad.prox_f_conjugate(gamma, &z).unwrap();
        let lu = (&q + Matrix::identity(n, n) * gamma).lu();
        note((&pc - lu.solve(&(&q * &z + &c * gamma)).unwrap()).norm());
        // Moreau decomposition z = prox_{gamma f}(z) + gamma prox_{f*/gamma}(z/gamma)
        let back = quad.prox_f(gamma, &z).unwrap() + quad.prox_f_conjugate(1.0 / gamma, &(&z / gamma)).unwrap() * gamma;
        note((&back - &z).norm());

        // elastic net, coordinatewise closed forms
        let pn = net.prox_f(gamma, &z).unwrap();
        let pn_star = net.prox_f_conjugate(gamma, &z).unwrap();
        for i in 0..n {
            let zi = z[i];
            let expect = if zi.abs() <= gamma * w {
                0.0
            } else {
                (zi - gamma * w * zi.signum()) / (1.0 + gamma * mu)
            };
            note((pn[i] - expect).abs());
            let expect_star = if zi.abs() <= w {
                zi
            } else {
                (mu * zi + gamma * w * zi.signum()) / (mu + gamma)
            };
            note((pn_star[i] - expect_star).abs());
        }

        // firm nonexpansiveness
        for prob in [&quad, &net] {
            let (p1, p2) = (prob.prox_f(gamma, &z).unwrap(), prob.prox_f(gamma, &z2).unwrap());
            let d = &p1 - &p2;
            note((d.norm_squared() - d.dot(&(&z - &z2))).max(0.0));
        }

        // Sherman-Morrison and the regularized Gram factor
        let y = sherman_morrison_solve(&a, &z).unwrap();
        let dense = (a.tr_mul(&a) + Matrix::identity(n, n)).lu().solve(&z).unwrap();
        note((&y - dense).norm());
        let (beta, delta) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let g = RegularizedGramFactor::new(&a, beta, delta).unwrap();
        let rhs = random_vector(&mut rng, m);
        let s = g.solve(&rhs).unwrap();
        note(((&a * a.transpose() * beta + Matrix::identity(m, m) * delta) * &s - &rhs).norm());

        // KKT certificate
        let cert = kkt_oracle(&q, &c, &a, &b).unwrap();
        note((&q * &cert.x_star + &c + a.tr_mul(&cert.lambda_star)).norm());
        note((&a * &cert.x_star - &b).norm());
    }
    // the 2-D instance: x* = (1/2, 1/2), lambda* = -1/2
    let unit = kkt_oracle(
        &Matrix::identity(2, 2),
        &Vector::zeros(2),
        &Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
        &Vector::from_element(1, 1.0),
    )
    .unwrap();
    note((unit.x_star - Vector::from_element(2, 0.5)).norm());
    note((unit.lambda_star[0] + 0.5).abs());
    let elapsed = start.elapsed();
    outcome(
        worst <= ORACLE_TOL && elapsed < ORACLE_BUDGET,
        format!(
            "max error {worst:.2e} (tol {ORACLE_TOL:e}), {:.2}s (budget {}s)",
            elapsed.as_secs_f64(),
            ORACLE_BUDGET.as_secs()
        ),
    )
}

const MATCH_PAIRINGS: [&str; 9] = [
    "theorem1",
    "theorem2",
    "theorem3",
    "theorem4",
    "theorem5",
    "theorem6",
    "corollary1",
    "corollary2",
    "remark1",
];

fn iterate_equivalences() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut count = 0;
    for (label, problem) in instances() {
        let setup = PairingSetup::seeded(&problem, 17);
        for name in MATCH_PAIRINGS {
            let out = run_pairing(name, &problem, &setup, PAIRING_ITERS).unwrap();
            count += 1;
            let dev = out.report.max_deviation();
            worst = worst.max(dev);
            if dev.is_nan() || dev > PAIRING_TOL {
                failures.push(format!("{name}/{label}"));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < PAIRING_BUDGET,
        format!(
            "{count} runs ({} pairings x 2 instances), max relative deviation {worst:.2e} (tol {PAIRING_TOL:e}), {:.2}s{}",
            MATCH_PAIRINGS.len(),
            elapsed.as_secs_f64(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failures.join(", "))
            }
        ),
    )
}

fn scheme_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for (label, problem) in instances() {
        let (n, m) = (problem.n(), problem.m());
        for order in [UpdateOrder::BALANCED_V_FIRST, UpdateOrder::DUAL_PRIMAL_V_FIRST] {
            for trial in 0..5 {
                let params = SchemeParams::new(rng.random_range(0.3..3.0), rng.random_range(0.3..3.0)).unwrap();
                let scheme = PermutedScheme::new(&problem, order, params).unwrap();
                let mut state = SchemeState::new(
                    random_vector(&mut rng, n),
                    random_vector(&mut rng, m),
                    random_vector(&mut rng, m),
                    random_vector(&mut rng, n),
                    random_vector(&mut rng, m),
                );
                // odd trials start on ybar = b, where the claims hold from k = 0
                if trial % 2 == 1 {
                    state.ybar = problem.b().clone();
                }
                let states = collect_states(&scheme, &problem, state, INVARIANT_ITERS).unwrap();
                let report = check_scheme_invariants(&order, &states, &problem, &params, INVARIANT_TOL).unwrap();
                runs += 1;
                worst = worst.max(report.max_v_minus_lambda).max(report.max_ybar_error);
                if let Some(v) = report.first_violation {
                    failures.push(format!("{order}/{label}: {} at k={} ({:.2e})", v.what, v.k, v.value));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{runs} random starts, max invariant error {worst:.2e} (tol {INVARIANT_TOL:e}){}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join("; "))
            }
        ),
    )
}

fn taxonomy() -> Outcome {
    let problem = instances().remove(0).1;
    let cert = problem.certificate().expect("quadratic instance has a certificate").clone();
    let orders = enumerate_orders();
    let setup = PairingSetup::seeded(&problem, 23);
    let params = SchemeParams::new(1.0, 1.0).unwrap();
    let results = sweep_orders(&problem, params, &setup.x0, &setup.lambda0, SWEEP_ITERS, Execution::default()).unwrap();
    let sizes: Vec<usize> = OrderClass::ALL
        .iter()
        .map(|c| results.iter().filter(|r| r.class == *c).count())
        .collect();
    let worst = results
        .iter()
        .map(|r| (&r.x - &cert.x_star).norm().max((&r.lambda - &cert.lambda_star).norm()))
        .fold(0.0, f64::max);
    let passed = orders.len() == 24 && OrderClass::ALL.len() == 4 && sizes == vec![6, 6, 6, 6] && worst <= SWEEP_TOL;
    outcome(
        passed,
        format!(
            "{} orders, class sizes {sizes:?}, max distance to saddle {worst:.2e} after {SWEEP_ITERS} sweeps (tol {SWEEP_TOL:e})",
            orders.len()
        ),
    )
}

fn random_references(problem: &ConvexProblem, star: &Iterate, rng: &mut ChaCha8Rng) -> Vec<Iterate> {
    let mut refs = vec![star.clone()];
    for _ in 0..5 {
        refs.push(Iterate::new(
            &star.x + random_vector(rng, problem.n()),
            &star.lambda + random_vector(rng, problem.m()),
        ));
    }
    refs
}

fn trace_of(
    problem: &ConvexProblem,
    family: BoundFamily,
    schedule: &Schedule,
    x0: &Vector,
    l0: &Vector,
    k: usize,
    accelerated: bool,
) -> Trace {
    let init = AccelState::new(x0.clone(), l0.clone());
    let pd = PrimalDualState::new(x0.clone(), l0.clone());
    match (family, accelerated) {
        (BoundFamily::Balanced, true) => run(
            &AcceleratedBalancedAlm::new(problem, schedule.clone()).unwrap(),
            problem,
            init,
            k,
            None,
        ),
        (BoundFamily::DualPrimal, true) => run(
            &AcceleratedDualPrimalAlm::new(problem, schedule.clone()).unwrap(),
            problem,
            init,
            k,
            None,
        ),
        (BoundFamily::Balanced, false) => {
            let r = schedule.r(0);
            run(
                &BalancedAlm::new(problem, r, schedule.delta_prime() / r).unwrap(),
                problem,
                pd,
                k,
                None,
            )
        }
        (BoundFamily::DualPrimal, false) => {
            let r = schedule.r(0);
            run(
                &DualPrimalBalancedAlm::new(problem, r, schedule.delta_prime() / r).unwrap(),
                problem,
                pd,
                k,
                None,
            )
        }
    }
    .unwrap()
}

fn bound_checks(accelerated: bool) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(if accelerated { 404 } else { 303 });
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut max_ratio: f64 = 0.0;
    for (label, problem) in instances() {
        let cert = reference_solution(&problem, 1e-10).unwrap();
        let star = Iterate::new(cert.x_star.clone(), cert.lambda_star.clone());
        let refs = random_references(&problem, &star, &mut rng);
        let setup = PairingSetup::seeded(&problem, 29);
        let schedule = if accelerated {
            default_schedule(problem.mu(), 1.0).unwrap()
        } else {
            Schedule::constant(setup.r, setup.r * setup.delta).unwrap()
        };
        for family in [BoundFamily::Balanced, BoundFamily::DualPrimal] {
            let trace = trace_of(
                &problem,
                family,
                &schedule,
                &setup.x0,
                &setup.lambda0,
                BOUND_HORIZON + 1,
                accelerated,
            );
            let bs = BoundSetup::new(&problem, family, schedule.clone(), setup.x0.clone(), setup.lambda0.clone()).unwrap();
            let report = check_ergodic_bound(&problem, &trace, &bs, &refs, BOUND_HORIZON).unwrap();
            checked += report.checked;
            max_ratio = max_ratio.max(report.max_ratio);
            if let Some(v) = report.violations.first() {
                failures.push(format!(
                    "{family:?}/{label}: {} violations, first K={} lhs {:.3e} > rhs {:.3e}",
                    report.violations.len(),
                    v.k,
                    v.lhs,
                    v.rhs
                ));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{checked} checks (K <= {BOUND_HORIZON}, 2 algorithms x 2 problems x 6 references), max lhs/rhs {max_ratio:.3}{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join("; "))
            }
        ),
    )
}

fn rate_config(algorithm: &str) -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSource::Inline(ProblemSpec::RandomQuadratic {
            n: 12,
            m: 5,
            seed: Some(7),
        }),
        algorithm: algorithm.to_string(),
        params: Default::default(),
        iterations: RATE_WINDOW.1 as usize,
        seed: 0,
        output: None,
        schedule: None,
    }
}

fn rate_separation() -> Outcome {
    let mut parts = Vec::new();
    let mut passed = true;
    for (algorithm, limit) in [
        ("balanced_alm", PLAIN_SLOPE_MAX),
        ("dual_primal_alm", PLAIN_SLOPE_MAX),
        ("accel_balanced", ACCEL_SLOPE_MAX),
        ("accel_dual_primal", ACCEL_SLOPE_MAX),
    ] {
        let cfg = rate_config(algorithm);
        let problem = cfg.build_problem().unwrap();
        let study = rate_study(&cfg, &problem, Some(RATE_WINDOW)).unwrap();
        match study.slope {
            Ok(s) => {
                passed &= s <= limit;
                parts.push(format!("{algorithm} {s:.3} (<= {limit})"));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("{algorithm} unavailable: {e}"));
            }
        }
    }
    outcome(
        passed,
        format!("slopes over K in [{}, {}]: {}", RATE_WINDOW.0, RATE_WINDOW.1, parts.join(", ")),
    )
}

fn negative_separation() -> Outcome {
    let mut parts = Vec::new();
    let mut passed = true;
    for (label, problem) in instances() {
        let setup = PairingSetup::seeded(&problem, 31);
        let out = run_pairing("remark2-negative", &problem, &setup, 10).unwrap();
        let first = out.report.deviations.iter().position(|d| *d > SEPARATION_MIN);
        let ok = first.is_some_and(|k| k <= SEPARATION_BY);
        passed &= ok;
        parts.push(format!(
            "{label}: deviation {:.2e} at k={SEPARATION_BY}, first above {SEPARATION_MIN:e} at k={}",
            out.report.deviations[SEPARATION_BY],
            first.map_or("never".to_string(), |k| k.to_string())
        ));
    }
    outcome(passed, parts.join("; "))
}

fn degeneration() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for (_, problem) in instances() {
        let setup = PairingSetup::seeded(&problem, 37);
        for name in ["degeneration7", "degeneration8"] {
            let out = run_pairing(name, &problem, &setup, DEGENERATION_ITERS).unwrap();
            let dev = out.report.max_deviation();
            worst = worst.max(dev);
            passed &= dev <= DEGENERATION_TOL;
        }
    }
    outcome(
        passed,
        format!("max relative deviation {worst:.2e} over {DEGENERATION_ITERS} iterations (tol {DEGENERATION_TOL:e})"),
    )
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("oracle identities", oracle_identities),
        ("iterate equivalences", iterate_equivalences),
        ("scheme invariants", scheme_invariants),
        ("order taxonomy", taxonomy),
        ("uniform ergodic bounds", || bound_checks(false)),
        ("weighted ergodic bounds", || bound_checks(true)),
        ("rate separation", rate_separation),
        ("negative equivalence", negative_separation),
        ("degeneration", degeneration),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let out = check();
        if !out.passed {
            failed += 1;
        }
        println!(
            "{} criterion {} ({name}): {}",
            if out.passed { "PASS" } else { "FAIL" },
            i + 1,
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}

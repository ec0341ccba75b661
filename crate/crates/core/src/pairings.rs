//! Registry of iterate-level equivalences between solvers, each run as a
//! pair of matched traces compared in the original `(x, lambda)` coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accelerated::{default_schedule, AccelState, AcceleratedBalancedAlm, AcceleratedDualPrimalAlm, Schedule};
use crate::baseline::{collect_iterates, BalancedAlm, DualPrimalBalancedAlm, Method, PrimalDualState};
use crate::diagnostics::{iterate_equivalence, EquivalenceReport, Iterate};
use crate::dual_admm::{AccelProxAdmm, DualAdmmState, ProxAdmmBalanced, ProxAdmmDualPrimal, RatioWeightedAlm};
use crate::lifted::{drs_balanced_config, drs_dual_primal_config};
use crate::parallel::{self, Execution};
use crate::problem::{random_elastic_net, random_quadratic, ConvexProblem, SaddleCertificate};
use crate::scheme::{PermutedScheme, SchemeParams, UpdateOrder};
use crate::{Error, Result, Vector};

/// Tolerance for the exact iterate matches.
pub const MATCH_TOL: f64 = 1e-8;
/// Tolerance for constant-schedule degeneration.
pub const DEGENERATION_TOL: f64 = 1e-12;
/// Minimum deviation that counts as a genuine difference.
pub const DIFFER_TOL: f64 = 1e-6;
/// Horizon within which the negative pairing must separate.
pub const DIFFER_HORIZON: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    /// Sequences agree to the tolerance at every `k`.
    Match,
    /// Sequences differ by more than [`DIFFER_TOL`] by iteration [`DIFFER_HORIZON`].
    Differ,
}

#[derive(Debug, Clone, Copy)]
pub struct PairingInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub expectation: Expectation,
    pub tol: f64,
}

pub const PAIRINGS: [PairingInfo; 12] = [
    PairingInfo {
        name: "theorem1",
        description: "DRS (projection first) vs balanced ALM",
        expectation: Expectation::Match,
        tol: MATCH_TOL,
    },
    PairingInfo {
        name: "theorem2",
        description: "DRS (F first) vs dual-primal balanced ALM",
        expectation: Expectation::Match,
        tol: MATCH_TOL,
    },
    PairingInfo {
        name: "theorem3",
        description: "order u-xbar-v-lambda-ybar vs balanced ALM",
        expectation: Expectation::Match,
        tol: MATCH_TOL,
    },
    PairingInfo {
        name: "theorem4",
        description: "order u-v-lambda-xbar-ybar vs dual-primal balanced ALM",
        expectation: Expectation::Match,
        tol: MATCH_TOL,
    },
    PairingInfo {
        name: "theorem5",
        description: "order u-xbar-lambda-v-ybar vs balanced ALM",
        expectation: Expectation::Match,
        tol: MATCH_TOL,
    },
    PairingInfo {
        name: "theorem6",
        description: "order u-lambda-v-xbar-ybar vs dual-primal balanced ALM",
        expectation: Expectation::Match,
        tol: MATCH_TOL,
    },
    PairingInfo {
        name: "corollary1",
        description: "dual proximal ADMM (u, xbar, lambda) vs balanced ALM",
        expectation: Expectation::Match,
        tol: MATCH_TOL,
    },
    PairingInfo {
        name: "corollary2",
        description: "dual proximal ADMM (u, lambda, xbar) vs dual-primal balanced ALM",
        expectation: Expectation::Match,
        tol: MATCH_TOL,
    },
    PairingInfo {
        name: "remark1",
        description: "accelerated dual proximal ADMM vs accelerated balanced ALM",
        expectation: Expectation::Match,
        tol: MATCH_TOL,
    },
    PairingInfo {
        name: "remark2-negative",
        description: "variant with weight r^k/r^{k-1} vs accelerated dual-primal ALM",
        expectation: Expectation::Differ,
        tol: DIFFER_TOL,
    },
    PairingInfo {
        name: "degeneration7",
        description: "accelerated balanced ALM, constant schedule, vs balanced ALM",
        expectation: Expectation::Match,
        tol: DEGENERATION_TOL,
    },
    PairingInfo {
        name: "degeneration8",
        description: "accelerated dual-primal ALM, constant schedule, vs dual-primal balanced ALM",
        expectation: Expectation::Match,
        tol: DEGENERATION_TOL,
    },
];

pub fn pairing_info(name: &str) -> Result<PairingInfo> {
    PAIRINGS.iter().find(|p| p.name == name).copied().ok_or_else(|| {
        let known: Vec<&str> = PAIRINGS.iter().map(|p| p.name).collect();
        Error::Config(format!("unknown pairing {name:?}; known: {}", known.join(", ")))
    })
}

/// Parameters and start shared by both sides of a pairing.
#[derive(Debug, Clone)]
pub struct PairingSetup {
    pub r: f64,
    pub delta: f64,
    pub x0: Vector,
    pub lambda0: Vector,
    pub delta_prime: f64,
}

impl PairingSetup {
    /// `r = 1.3`, `delta = 0.7`, `delta' = 1` and a start drawn uniformly
    /// from `[-1, 1]` with the given seed.
    pub fn seeded(problem: &ConvexProblem, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = Vector::from_fn(problem.n(), |_, _| rng.random_range(-1.0..=1.0));
        let lambda0 = Vector::from_fn(problem.m(), |_, _| rng.random_range(-1.0..=1.0));
        PairingSetup {
            r: 1.3,
            delta: 0.7,
            x0,
            lambda0,
            delta_prime: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairingOutcome {
    pub info: PairingInfo,
    pub report: EquivalenceReport,
    pub passed: bool,
}

fn compare(info: PairingInfo, a: &[Iterate], b: &[Iterate], k: usize) -> Result<PairingOutcome> {
    let sa: Vec<Vector> = a.iter().map(Iterate::stacked).collect();
    let sb: Vec<Vector> = b.iter().map(Iterate::stacked).collect();
    let report = iterate_equivalence(&sa, &sb, info.tol, k)?;
    let passed = match info.expectation {
        Expectation::Match => report.passed(),
        Expectation::Differ => report.first_violation.is_some_and(|i| i <= DIFFER_HORIZON),
    };
    Ok(PairingOutcome { info, report, passed })
}

fn accel_schedule(problem: &ConvexProblem, setup: &PairingSetup) -> Result<Schedule> {
    default_schedule(problem.mu(), setup.delta_prime)
        .map_err(|_| Error::Config("accelerated pairings need a strongly convex f (mu > 0)".into()))
}

/// Runs both sides of pairing `name` for `k` steps.
pub fn run_pairing(name: &str, problem: &ConvexProblem, setup: &PairingSetup, k: usize) -> Result<PairingOutcome> {
    let info = pairing_info(name)?;
    let (r, delta) = (setup.r, setup.delta);
    let (x0, l0) = (&setup.x0, &setup.lambda0);
    let pd = || PrimalDualState::new(x0.clone(), l0.clone());
    let params = SchemeParams::from_alm(r, delta)?;
    let balanced = || -> Result<Vec<Iterate>> { collect_iterates(&BalancedAlm::new(problem, r, delta)?, problem, pd(), k) };
    let dual_primal = || -> Result<Vec<Iterate>> { collect_iterates(&DualPrimalBalancedAlm::new(problem, r, delta)?, problem, pd(), k) };
    let scheme = |order: UpdateOrder| -> Result<Vec<Iterate>> {
        let s = PermutedScheme::new(problem, order, params)?;
        let start = s.matched_start(problem, x0, l0);
        collect_iterates(&s, problem, start, k)
    };
    let (a, b) = match name {
        "theorem1" => {
            let cfg = drs_balanced_config(problem, r, delta)?;
            let start = cfg.initial_state(problem, x0, l0, l0);
            (collect_iterates(&cfg, problem, start, k)?, balanced()?)
        }
        "theorem2" => {
            let cfg = drs_dual_primal_config(problem, r, delta)?;
            let start = cfg.initial_state(problem, x0, l0, l0);
            (collect_iterates(&cfg, problem, start, k)?, dual_primal()?)
        }
        "theorem3" => (scheme(UpdateOrder::BALANCED_V_FIRST)?, balanced()?),
        "theorem4" => (scheme(UpdateOrder::DUAL_PRIMAL_V_FIRST)?, dual_primal()?),
        "theorem5" => (scheme(UpdateOrder::BALANCED_LAMBDA_FIRST)?, balanced()?),
        "theorem6" => (scheme(UpdateOrder::DUAL_PRIMAL_LAMBDA_FIRST)?, dual_primal()?),
        "corollary1" => {
            let m = ProxAdmmBalanced::new(problem, params)?;
            (
                collect_iterates(&m, problem, DualAdmmState::for_balanced(problem, x0, l0), k)?,
                balanced()?,
            )
        }
        "corollary2" => {
            let m = ProxAdmmDualPrimal::new(problem, params)?;
            let start = DualAdmmState::for_dual_primal(problem, params.beta1, x0, l0, l0);
            (collect_iterates(&m, problem, start, k)?, dual_primal()?)
        }
        "remark1" => {
            let sched = accel_schedule(problem, setup)?;
            let m = AccelProxAdmm::new(problem, sched.clone())?;
            let a = collect_iterates(&m, problem, DualAdmmState::for_balanced(problem, x0, l0), k)?;
            let b = collect_iterates(
                &AcceleratedBalancedAlm::new(problem, sched)?,
                problem,
                AccelState::new(x0.clone(), l0.clone()),
                k,
            )?;
            (a, b)
        }
        "remark2-negative" => {
            let sched = accel_schedule(problem, setup)?;
            let a = collect_iterates(&RatioWeightedAlm::new(problem, sched.clone())?, problem, pd(), k)?;
            let b = collect_iterates(
                &AcceleratedDualPrimalAlm::new(problem, sched)?,
                problem,
                AccelState::new(x0.clone(), l0.clone()),
                k,
            )?;
            (a, b)
        }
        "degeneration7" => {
            let sched = Schedule::constant(r, r * delta)?;
            let a = collect_iterates(
                &AcceleratedBalancedAlm::new(problem, sched)?,
                problem,
                AccelState::new(x0.clone(), l0.clone()),
                k,
            )?;
            (a, balanced()?)
        }
        "degeneration8" => {
            let sched = Schedule::constant(r, r * delta)?;
            let a = collect_iterates(
                &AcceleratedDualPrimalAlm::new(problem, sched)?,
                problem,
                AccelState::new(x0.clone(), l0.clone()),
                k,
            )?;
            (a, dual_primal()?)
        }
        _ => unreachable!("pairing_info accepted {name}"),
    };
    compare(info, &a, &b, k)
}

/// The two desk-scale instances every pairing is checked on: a random
/// strongly convex quadratic and a random elastic net, both with
/// `n = 12`, `m = 5`.
pub fn standard_instances() -> Result<Vec<(&'static str, ConvexProblem)>> {
    Ok(vec![
        ("quadratic", random_quadratic(12, 5, 7)?),
        ("elastic_net", random_elastic_net(12, 5, 11)?),
    ])
}

/// Every registered pairing on every instance.
pub fn run_all(
    instances: &[(&'static str, ConvexProblem)],
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<(&'static str, PairingOutcome)>> {
    let jobs: Vec<(usize, &'static str)> = (0..instances.len())
        .flat_map(|i| PAIRINGS.iter().map(move |p| (i, p.name)))
        .collect();
    parallel::map(exec, &jobs, |(i, name)| {
        let (label, problem) = &instances[*i];
        let setup = PairingSetup::seeded(problem, seed);
        run_pairing(name, problem, &setup, k).map(|o| (*label, o))
    })
    .into_iter()
    .collect()
}

/// A saddle pair for `problem`: its certificate when it has one, otherwise
/// the limit of a long balanced ALM run, accepted once the stationarity
/// residual of the certificate check falls below `tol`.
pub fn reference_solution(problem: &ConvexProblem, tol: f64) -> Result<SaddleCertificate> {
    if let Some(c) = problem.certificate() {
        return Ok(c.clone());
    }
    let m = BalancedAlm::new(problem, 1.0, 1.0)?;
    let mut state = PrimalDualState::zeros(problem);
    for _ in 0..REFERENCE_MAX_ITERS {
        for _ in 0..100 {
            state = m.step(problem, &state)?;
        }
        let cert = SaddleCertificate {
            x_star: state.x.clone(),
            lambda_star: state.lambda.clone(),
        };
        if cert.verify(problem, tol).is_ok() {
            return Ok(cert);
        }
    }
    Err(Error::Input(format!("reference run did not reach tolerance {tol:e}")))
}

const REFERENCE_MAX_ITERS: usize = 2000;

//! Command-line front end: experiment configs, algorithm dispatch and the
//! `run`, `verify`, `sweep-orders`, `rate-study` and `classify` commands.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::accelerated::{default_schedule, AccelState, AcceleratedBalancedAlm, AcceleratedDualPrimalAlm, Schedule};
use crate::baseline::{
    run, BalancedAlm, ChambollePock, ClassicalAlm, DualPrimalBalancedAlm, Method, PrimalDualState, ProximalAlm, SPECTRAL_TOL,
};
use crate::diagnostics::{
    check_ergodic_bound, default_rate_window, ergodic_series, gap_value, rate_fit, BoundFamily, BoundSetup, ErgodicSpec, Iterate, Trace,
};
use crate::dual_admm::{DualAdmmState, ProxAdmmBalanced, ProxAdmmDualPrimal, RatioWeightedAlm};
use crate::lifted::{drs_balanced_config, drs_dual_primal_config, LiftedAdmm, LiftedAdmmState};
use crate::linalg::spectral_norm_sq;
use crate::pairings::{self, reference_solution, PairingSetup};
use crate::parallel::Execution;
use crate::problem::{ConvexProblem, ProblemSpec, SaddleCertificate};
use crate::scheme::{classify_order, sweep_orders, PermutedScheme, SchemeParams, UpdateOrder};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DIVERGENCE: i32 = 2;
pub const EXIT_VERIFICATION: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "liftperm",
    version,
    about = "Balanced ALM, lifted ADMM and DRS solvers with equivalence and rate diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one algorithm from a JSON experiment config and write its trace as CSV.
    Run {
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check one registered equivalence pairing.
    Verify {
        pair: String,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        /// Overrides the pairing's registered tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Problem JSON; defaults to the built-in random quadratic.
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run all 24 update orders and report where each one ends up.
    SweepOrders {
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        iterations: usize,
        #[arg(long, default_value_t = 1.0)]
        beta1: f64,
        #[arg(long, default_value_t = 1.0)]
        beta2: f64,
        #[arg(long)]
        sequential: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Ergodic gap table, fitted log-log slope and bound checks for one algorithm.
    RateStudy {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the equivalence class of an update order.
    Classify { order: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Path(PathBuf),
    Inline(ProblemSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant {
        r: f64,
    },
    #[serde(rename = "paper_linear")]
    Linear {
        delta_prime: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub algorithm: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
}

const PARAM_NAMES: [&str; 8] = ["r", "delta", "beta", "beta1", "beta2", "delta_prime", "s", "rho_factor"];

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let ProblemSource::Path(p) = &mut cfg.problem {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if let Some(bad) = self.params.keys().find(|k| !PARAM_NAMES.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "unknown parameter {bad:?}; known: {}",
                PARAM_NAMES.join(", ")
            )));
        }
        Algorithm::parse(&self.algorithm)?;
        Ok(())
    }

    pub fn build_problem(&self) -> Result<ConvexProblem> {
        let spec = match &self.problem {
            ProblemSource::Path(p) => ProblemSpec::load(p).map_err(|e| Error::Config(format!("problem {}: {e}", p.display())))?,
            ProblemSource::Inline(spec) => spec.clone(),
        };
        spec.build(self.seed)
    }

    fn param(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    fn param_or(&self, name: &str, default: f64) -> f64 {
        self.param(name).unwrap_or(default)
    }

    /// The schedule for accelerated runs: the config's, or the linear rule
    /// with `delta'` from the params (default 1).
    pub fn schedule(&self, problem: &ConvexProblem) -> Result<Schedule> {
        let dp = self.param_or("delta_prime", 1.0);
        let s = match &self.schedule {
            Some(ScheduleSpec::Constant { r }) => {
                Schedule::constant(*r, self.param("delta_prime").unwrap_or(r * self.param_or("delta", 1.0)))
            }
            Some(ScheduleSpec::Linear { delta_prime }) => default_schedule(problem.mu(), *delta_prime),
            None => default_schedule(problem.mu(), dp),
        };
        s.map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    ClassicalAlm,
    ProximalAlm,
    ChambollePock,
    BalancedAlm,
    DualPrimalAlm,
    LiftedAdmm,
    DrsBalanced,
    DrsDualPrimal,
    Scheme(UpdateOrder),
    ProxAdmm5,
    ProxAdmm6,
    AccelBalanced,
    AccelDualPrimal,
    RatioWeightedAlm,
}

pub const ALGORITHM_NAMES: [&str; 14] = [
    "classical_alm",
    "proximal_alm",
    "chambolle_pock",
    "balanced_alm",
    "dual_primal_alm",
    "lifted_admm",
    "drs_balanced",
    "drs_dual_primal",
    "scheme:<order>",
    "prox_admm_5",
    "prox_admm_6",
    "accel_balanced",
    "accel_dual_primal",
    "variant_81",
];

impl Algorithm {
    pub fn parse(name: &str) -> Result<Self> {
        if let Some(order) = name.strip_prefix("scheme:") {
            return Ok(Algorithm::Scheme(order.parse()?));
        }
        Ok(match name {
            "classical_alm" => Algorithm::ClassicalAlm,
            "proximal_alm" => Algorithm::ProximalAlm,
            "chambolle_pock" => Algorithm::ChambollePock,
            "balanced_alm" => Algorithm::BalancedAlm,
            "dual_primal_alm" => Algorithm::DualPrimalAlm,
            "lifted_admm" => Algorithm::LiftedAdmm,
            "drs_balanced" => Algorithm::DrsBalanced,
            "drs_dual_primal" => Algorithm::DrsDualPrimal,
            "prox_admm_5" => Algorithm::ProxAdmm5,
            "prox_admm_6" => Algorithm::ProxAdmm6,
            "accel_balanced" => Algorithm::AccelBalanced,
            "accel_dual_primal" => Algorithm::AccelDualPrimal,
            "variant_81" => Algorithm::RatioWeightedAlm,
            other => {
                return Err(Error::Config(format!(
                    "unknown algorithm {other:?}; known: {}",
                    ALGORITHM_NAMES.join(", ")
                )));
            }
        })
    }

    pub fn is_accelerated(self) -> bool {
        matches!(
            self,
            Algorithm::AccelBalanced | Algorithm::AccelDualPrimal | Algorithm::RatioWeightedAlm
        )
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Divergence { .. } | Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Runs the configured algorithm from the zero start and returns its trace.
/// Construction failures surface as configuration errors.
pub fn run_experiment(cfg: &ExperimentConfig, problem: &ConvexProblem) -> Result<Trace> {
    let algorithm = Algorithm::parse(&cfg.algorithm)?;
    let k = cfg.iterations;
    let reference = problem.certificate();
    let x0 = crate::Vector::zeros(problem.n());
    let l0 = crate::Vector::zeros(problem.m());
    let pd = PrimalDualState::new(x0.clone(), l0.clone());
    let r = cfg.param_or("r", 1.0);
    let delta = cfg.param_or("delta", 1.0);
    let beta = cfg.param_or("beta", 1.0);
    let scheme_params =
        || -> Result<SchemeParams> { SchemeParams::new(cfg.param_or("beta1", 1.0 / r), cfg.param_or("beta2", delta)).map_err(config_err) };
    fn go<M: Method>(
        m: Result<M>,
        problem: &ConvexProblem,
        init: impl FnOnce(&M) -> M::State,
        k: usize,
        reference: Option<&SaddleCertificate>,
    ) -> Result<Trace> {
        let m = m.map_err(config_err)?;
        let init = init(&m);
        run(&m, problem, init, k, reference)
    }
    match algorithm {
        Algorithm::ClassicalAlm => go(ClassicalAlm::new(problem, beta), problem, |_| pd, k, reference),
        Algorithm::ProximalAlm => {
            let rho = spectral_norm_sq(problem.a(), SPECTRAL_TOL)?;
            let r = cfg.param("r").unwrap_or(2.0 * beta * rho.max(0.5));
            go(ProximalAlm::new(problem, beta, r), problem, |_| pd, k, reference)
        }
        Algorithm::ChambollePock => {
            let rho = spectral_norm_sq(problem.a(), SPECTRAL_TOL)?;
            let rho_factor = cfg.param_or("rho_factor", 1.0);
            let s = cfg.param("s").unwrap_or(2.0 * rho.max(0.5) / r);
            go(ChambollePock::new(problem, r, s, rho_factor), problem, |_| pd, k, reference)
        }
        Algorithm::BalancedAlm => go(BalancedAlm::new(problem, r, delta), problem, |_| pd, k, reference),
        Algorithm::DualPrimalAlm => go(DualPrimalBalancedAlm::new(problem, r, delta), problem, |_| pd, k, reference),
        Algorithm::LiftedAdmm => go(
            LiftedAdmm::new(problem, beta),
            problem,
            |_| LiftedAdmmState::zeros(problem),
            k,
            reference,
        ),
        Algorithm::DrsBalanced => go(
            drs_balanced_config(problem, r, delta),
            problem,
            |c| c.initial_state(problem, &x0, &l0, &l0),
            k,
            reference,
        ),
        Algorithm::DrsDualPrimal => go(
            drs_dual_primal_config(problem, r, delta),
            problem,
            |c| c.initial_state(problem, &x0, &l0, &l0),
            k,
            reference,
        ),
        Algorithm::Scheme(order) => {
            let params = scheme_params()?;
            go(
                PermutedScheme::new(problem, order, params),
                problem,
                |s| s.matched_start(problem, &x0, &l0),
                k,
                reference,
            )
        }
        Algorithm::ProxAdmm5 => {
            let params = scheme_params()?;
            go(
                ProxAdmmBalanced::new(problem, params),
                problem,
                |_| DualAdmmState::for_balanced(problem, &x0, &l0),
                k,
                reference,
            )
        }
        Algorithm::ProxAdmm6 => {
            let params = scheme_params()?;
            let start = DualAdmmState::for_dual_primal(problem, params.beta1, &x0, &l0, &l0);
            go(ProxAdmmDualPrimal::new(problem, params), problem, |_| start, k, reference)
        }
        Algorithm::AccelBalanced => {
            let s = cfg.schedule(problem)?;
            go(
                AcceleratedBalancedAlm::new(problem, s),
                problem,
                |_| AccelState::new(x0.clone(), l0.clone()),
                k,
                reference,
            )
        }
        Algorithm::AccelDualPrimal => {
            let s = cfg.schedule(problem)?;
            go(
                AcceleratedDualPrimalAlm::new(problem, s),
                problem,
                |_| AccelState::new(x0.clone(), l0.clone()),
                k,
                reference,
            )
        }
        Algorithm::RatioWeightedAlm => {
            let s = cfg.schedule(problem)?;
            go(RatioWeightedAlm::new(problem, s), problem, |_| pd, k, reference)
        }
    }
}

pub fn write_trace(trace: &Trace, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => trace.write_csv(File::create(path)?),
        None => trace.write_csv(io::stdout().lock()),
    }
}

fn load_problem(path: Option<&Path>) -> Result<ConvexProblem> {
    match path {
        Some(p) => ProblemSpec::load(p).and_then(|s| s.build(0)).map_err(config_err),
        None => Ok(pairings::standard_instances()?.remove(0).1),
    }
}

/// One row of a rate study.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub k: usize,
    pub gap: f64,
    pub bound_ok: bool,
}

#[derive(Debug, Clone)]
pub struct RateStudy {
    pub rows: Vec<RateRow>,
    pub slope: Result<f64, String>,
    pub bound_violations: usize,
}

/// Table sizes `50, 100, 200, ...` up to `k_max`, and `k_max` itself.
pub fn rate_grid(k_max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut k = 50;
    while k < k_max {
        out.push(k);
        k *= 2;
    }
    out.push(k_max);
    out
}

/// Points on a geometric grid of `count` sizes spanning `[lo, hi]`.
pub fn log_grid(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let (a, b) = ((lo.max(1)) as f64, hi as f64);
    let mut ks: Vec<usize> = (0..count)
        .map(|i| (a * (b / a).powf(i as f64 / (count - 1) as f64)).round() as usize)
        .collect();
    ks.dedup();
    ks
}

/// Ergodic gaps at the saddle point for a balanced or dual-primal algorithm
/// (plain or accelerated), a log-log slope over `window`, and the bound
/// check at every `K`.
pub fn rate_study(cfg: &ExperimentConfig, problem: &ConvexProblem, window: Option<(f64, f64)>) -> Result<RateStudy> {
    let algorithm = Algorithm::parse(&cfg.algorithm)?;
    let (family, schedule) = match algorithm {
        Algorithm::BalancedAlm | Algorithm::DualPrimalAlm => {
            let r = cfg.param_or("r", 1.0);
            let s = Schedule::constant(r, r * cfg.param_or("delta", 1.0))?;
            let fam = if algorithm == Algorithm::BalancedAlm {
                BoundFamily::Balanced
            } else {
                BoundFamily::DualPrimal
            };
            (fam, s)
        }
        Algorithm::AccelBalanced => (BoundFamily::Balanced, cfg.schedule(problem)?),
        Algorithm::AccelDualPrimal => (BoundFamily::DualPrimal, cfg.schedule(problem)?),
        other => {
            return Err(Error::Config(format!(
                "rate studies cover balanced and dual-primal ALM and their accelerated forms, not {other:?}"
            )))
        }
    };
    let k_max = cfg.iterations;
    let mut run_cfg = cfg.clone();
    run_cfg.iterations = k_max + 1;
    let trace = run_experiment(&run_cfg, problem)?;
    let reference = reference_solution(problem, 1e-10)?;
    let setup = BoundSetup::new(
        problem,
        family,
        schedule.clone(),
        trace.rows()[0].x.clone(),
        trace.rows()[0].lambda.clone(),
    )?;
    let spec = ErgodicSpec::weighted(schedule, family.lambda_offset());
    let series = ergodic_series(&trace, &spec, k_max)?;
    let star = Iterate::new(reference.x_star.clone(), reference.lambda_star.clone());
    let bound = check_ergodic_bound(problem, &trace, &setup, std::slice::from_ref(&star), k_max)?;
    let gap_at = |k: usize| gap_value(problem, &series[k].x_hat, &series[k].lambda_hat, &star.x, &star.lambda);
    let rows = rate_grid(k_max)
        .into_iter()
        .map(|k| RateRow {
            k,
            gap: gap_at(k),
            bound_ok: !bound.violations.iter().any(|v| v.k == k),
        })
        .collect();
    let (lo, hi) = window.unwrap_or_else(|| default_rate_window(k_max));
    let points: Vec<(f64, f64)> = log_grid(lo as usize, hi as usize, 40)
        .into_iter()
        .map(|k| (k as f64, gap_at(k)))
        .collect();
    let slope = rate_fit(&points, lo, hi).map_err(|e| e.to_string());
    Ok(RateStudy {
        rows,
        slope,
        bound_violations: bound.violations.len(),
    })
}

fn report(err: &Error) -> i32 {
    eprintln!("error: {err}");
    exit_code(err)
}

/// Executes a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { config, output } => {
            let result = ExperimentConfig::load(&config).and_then(|cfg| {
                let problem = cfg.build_problem().map_err(config_err)?;
                let trace = run_experiment(&cfg, &problem)?;
                write_trace(&trace, output.as_deref().or(cfg.output.as_deref()))
            });
            result.map_or_else(|e| report(&e), |_| EXIT_OK)
        }
        Command::Verify {
            pair,
            iterations,
            tol,
            problem,
            seed,
        } => {
            let result = (|| -> Result<bool> {
                let mut info = pairings::pairing_info(&pair)?;
                let problem = load_problem(problem.as_deref())?;
                let setup = PairingSetup::seeded(&problem, seed);
                let mut out = pairings::run_pairing(&pair, &problem, &setup, iterations)?;
                if let Some(t) = tol {
                    info.tol = t;
                    out.report.first_violation = out.report.deviations.iter().position(|d| !(*d <= t));
                    out.report.tol = t;
                    out.passed = match info.expectation {
                        pairings::Expectation::Match => out.report.first_violation.is_none(),
                        pairings::Expectation::Differ => out.report.first_violation.is_some_and(|i| i <= pairings::DIFFER_HORIZON),
                    };
                }
                let mut stdout = io::stdout().lock();
                writeln!(stdout, "pairing {}: {}", info.name, info.description)?;
                writeln!(stdout, "k,deviation")?;
                for (k, d) in out.report.deviations.iter().enumerate() {
                    writeln!(stdout, "{k},{d:e}")?;
                }
                let verdict = match (info.expectation, out.passed) {
                    (pairings::Expectation::Match, true) => "PASS".to_string(),
                    (pairings::Expectation::Match, false) => {
                        format!(
                            "FAIL (first deviation above {:e} at k={})",
                            out.report.tol,
                            out.report.first_violation.unwrap_or(0)
                        )
                    }
                    (pairings::Expectation::Differ, true) => {
                        format!("PASS (expected DIVERGENCE at k={})", out.report.first_violation.unwrap_or(0))
                    }
                    (pairings::Expectation::Differ, false) => "FAIL (sequences did not separate)".to_string(),
                };
                writeln!(stdout, "max deviation {:e}; {verdict}", out.report.max_deviation())?;
                Ok(out.passed)
            })();
            match result {
                Ok(true) => EXIT_OK,
                Ok(false) => EXIT_VERIFICATION,
                Err(e) => report(&e),
            }
        }
        Command::SweepOrders {
            problem,
            iterations,
            beta1,
            beta2,
            sequential,
            seed,
        } => {
            let result = (|| -> Result<()> {
                let problem = load_problem(problem.as_deref())?;
                let params = SchemeParams::new(beta1, beta2).map_err(config_err)?;
                let setup = PairingSetup::seeded(&problem, seed);
                let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
                let results = sweep_orders(&problem, params, &setup.x0, &setup.lambda0, iterations, exec)?;
                let mut stdout = io::stdout().lock();
                writeln!(stdout, "order,class,x_error,primal_residual")?;
                for r in results {
                    let err = r.x_error.map(|e| format!("{e:e}")).unwrap_or_default();
                    writeln!(stdout, "{},{},{err},{:e}", r.order, r.class, r.primal_residual)?;
                }
                Ok(())
            })();
            result.map_or_else(|e| report(&e), |_| EXIT_OK)
        }
        Command::RateStudy { config, output } => {
            let result = (|| -> Result<()> {
                let cfg = ExperimentConfig::load(&config)?;
                let problem = cfg.build_problem().map_err(config_err)?;
                let study = rate_study(&cfg, &problem, None)?;
                let mut table = String::from("K,gap,bound_ok\n");
                for r in &study.rows {
                    table.push_str(&format!("{},{},{}\n", r.k, r.gap, r.bound_ok));
                }
                match output.as_deref().or(cfg.output.as_deref()) {
                    Some(p) => std::fs::write(p, &table)?,
                    None => print!("{table}"),
                }
                match &study.slope {
                    Ok(s) => eprintln!("fitted slope {s:.4}"),
                    Err(e) => eprintln!("slope unavailable: {e}"),
                }
                eprintln!("bound violations: {}", study.bound_violations);
                Ok(())
            })();
            result.map_or_else(|e| report(&e), |_| EXIT_OK)
        }
        Command::Classify { order } => match order.parse::<UpdateOrder>().and_then(|o| classify_order(&o).map(|c| (o, c))) {
            Ok((o, c)) => {
                println!("{o} {c}");
                EXIT_OK
            }
            Err(e) => report(&e),
        },
    }
}

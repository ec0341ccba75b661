//! Gauss-Seidel sweeps over the five blocks `u, v, lambda, xbar, ybar` of the
//! lifted dual `min f*(u) + lambda'b s.t. -A'v = u, v = lambda`, the 24
//! canonical update orders and their four equivalence classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{collect_states, Method};
use crate::diagnostics::Iterate;
use crate::linalg::RegularizedGramFactor;
use crate::parallel::{self, Execution};
use crate::problem::ConvexProblem;
use crate::{Error, Result, Vector};

/// Declaration order is the enumeration order: `lambda < v < xbar < ybar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Block {
    U,
    Lambda,
    V,
    XBar,
    YBar,
}

impl Block {
    pub const ALL: [Block; 5] = [Block::U, Block::Lambda, Block::V, Block::XBar, Block::YBar];

    pub fn name(self) -> &'static str {
        match self {
            Block::U => "u",
            Block::Lambda => "lambda",
            Block::V => "v",
            Block::XBar => "xbar",
            Block::YBar => "ybar",
        }
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Block {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "u" => Ok(Block::U),
            "lambda" | "λ" => Ok(Block::Lambda),
            "v" => Ok(Block::V),
            "xbar" | "x̄" => Ok(Block::XBar),
            "ybar" | "ȳ" => Ok(Block::YBar),
            other => Err(Error::Config(format!("unknown block {other:?}"))),
        }
    }
}

/// A permutation of the five blocks, stored in canonical form (`u` first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UpdateOrder([Block; 5]);

impl UpdateOrder {
    /// Accepts any permutation and rotates it so that `u` comes first.
    pub fn new(blocks: [Block; 5]) -> Result<Self> {
        let mut sorted = blocks;
        sorted.sort();
        if sorted != Block::ALL {
            return Err(Error::Config(format!("an update order must use each block once, got {blocks:?}")));
        }
        let start = blocks.iter().position(|b| *b == Block::U).expect("u present");
        let mut out = blocks;
        out.rotate_left(start);
        Ok(UpdateOrder(out))
    }

    pub fn blocks(&self) -> &[Block; 5] {
        &self.0
    }

    pub const BALANCED_V_FIRST: UpdateOrder = UpdateOrder([Block::U, Block::XBar, Block::V, Block::Lambda, Block::YBar]);
    pub const DUAL_PRIMAL_V_FIRST: UpdateOrder = UpdateOrder([Block::U, Block::V, Block::Lambda, Block::XBar, Block::YBar]);
    pub const BALANCED_LAMBDA_FIRST: UpdateOrder = UpdateOrder([Block::U, Block::XBar, Block::Lambda, Block::V, Block::YBar]);
    pub const DUAL_PRIMAL_LAMBDA_FIRST: UpdateOrder = UpdateOrder([Block::U, Block::Lambda, Block::V, Block::XBar, Block::YBar]);
}

impl fmt::Display for UpdateOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|b| b.name()).collect();
        f.write_str(&names.join("-"))
    }
}

impl FromStr for UpdateOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<Block> = s.split('-').map(str::parse).collect::<Result<_>>()?;
        let blocks: [Block; 5] = parts
            .try_into()
            .map_err(|p: Vec<Block>| Error::Config(format!("an update order has 5 blocks, got {}", p.len())))?;
        UpdateOrder::new(blocks)
    }
}

/// All 24 canonical orders, lexicographic in `lambda < v < xbar < ybar`.
pub fn enumerate_orders() -> Vec<UpdateOrder> {
    let rest = [Block::Lambda, Block::V, Block::XBar, Block::YBar];
    let mut out = Vec::with_capacity(24);
    for a in rest {
        for b in rest {
            for c in rest {
                for d in rest {
                    let tail = [a, b, c, d];
                    let mut sorted = tail;
                    sorted.sort();
                    if sorted == rest {
                        out.push(UpdateOrder([Block::U, a, b, c, d]));
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrderClass {
    BalancedAlm,
    BalancedAlmVariant,
    DualPrimal,
    DualPrimalVariant,
}

impl OrderClass {
    pub const ALL: [OrderClass; 4] = [
        OrderClass::BalancedAlm,
        OrderClass::BalancedAlmVariant,
        OrderClass::DualPrimal,
        OrderClass::DualPrimalVariant,
    ];

    pub fn representative(self) -> UpdateOrder {
        match self {
            OrderClass::BalancedAlm => UpdateOrder::BALANCED_V_FIRST,
            OrderClass::BalancedAlmVariant => UpdateOrder::BALANCED_LAMBDA_FIRST,
            OrderClass::DualPrimal => UpdateOrder::DUAL_PRIMAL_V_FIRST,
            OrderClass::DualPrimalVariant => UpdateOrder::DUAL_PRIMAL_LAMBDA_FIRST,
        }
    }

    /// Whether the class reproduces balanced ALM (rather than its dual-primal form).
    pub fn is_balanced(self) -> bool {
        matches!(self, OrderClass::BalancedAlm | OrderClass::BalancedAlmVariant)
    }

    pub fn label(self) -> &'static str {
        match self {
            OrderClass::BalancedAlm => "BALANCED_ALM",
            OrderClass::BalancedAlmVariant => "BALANCED_ALM_VARIANT",
            OrderClass::DualPrimal => "DUAL_PRIMAL",
            OrderClass::DualPrimalVariant => "DUAL_PRIMAL_VARIANT",
        }
    }
}

impl fmt::Display for OrderClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

const CLASS_TABLE: [(&str, OrderClass); 24] = [
    ("u-xbar-v-lambda-ybar", OrderClass::BalancedAlm),
    ("u-xbar-lambda-ybar-v", OrderClass::BalancedAlm),
    ("u-xbar-ybar-v-lambda", OrderClass::BalancedAlm),
    ("u-lambda-xbar-ybar-v", OrderClass::BalancedAlm),
    ("u-lambda-ybar-xbar-v", OrderClass::BalancedAlm),
    ("u-ybar-xbar-v-lambda", OrderClass::BalancedAlm),
    ("u-xbar-lambda-v-ybar", OrderClass::BalancedAlmVariant),
    ("u-xbar-v-ybar-lambda", OrderClass::BalancedAlmVariant),
    ("u-xbar-ybar-lambda-v", OrderClass::BalancedAlmVariant),
    ("u-lambda-xbar-v-ybar", OrderClass::BalancedAlmVariant),
    ("u-ybar-xbar-lambda-v", OrderClass::BalancedAlmVariant),
    ("u-ybar-lambda-xbar-v", OrderClass::BalancedAlmVariant),
    ("u-v-lambda-xbar-ybar", OrderClass::DualPrimal),
    ("u-v-lambda-ybar-xbar", OrderClass::DualPrimal),
    ("u-v-xbar-lambda-ybar", OrderClass::DualPrimal),
    ("u-lambda-ybar-v-xbar", OrderClass::DualPrimal),
    ("u-ybar-v-xbar-lambda", OrderClass::DualPrimal),
    ("u-ybar-v-lambda-xbar", OrderClass::DualPrimal),
    ("u-lambda-v-xbar-ybar", OrderClass::DualPrimalVariant),
    ("u-v-xbar-ybar-lambda", OrderClass::DualPrimalVariant),
    ("u-v-ybar-lambda-xbar", OrderClass::DualPrimalVariant),
    ("u-v-ybar-xbar-lambda", OrderClass::DualPrimalVariant),
    ("u-lambda-v-ybar-xbar", OrderClass::DualPrimalVariant),
    ("u-ybar-lambda-v-xbar", OrderClass::DualPrimalVariant),
];

pub fn classify_order(order: &UpdateOrder) -> Result<OrderClass> {
    let name = order.to_string();
    CLASS_TABLE
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| *c)
        .ok_or_else(|| Error::Config(format!("order {name} is not in the classification table")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeParams {
    pub beta1: f64,
    pub beta2: f64,
}

impl SchemeParams {
    pub fn new(beta1: f64, beta2: f64) -> Result<Self> {
        if !(beta1 > 0.0 && beta2 > 0.0 && beta1.is_finite() && beta2.is_finite()) {
            return Err(Error::Parameter(format!("beta1 and beta2 must be positive, got {beta1}, {beta2}")));
        }
        Ok(SchemeParams { beta1, beta2 })
    }

    /// `beta1 = 1/r`, `beta2 = delta`.
    pub fn from_alm(r: f64, delta: f64) -> Result<Self> {
        Self::new(1.0 / r, delta)
    }
}

/// The five blocks plus `xbar` and `v` from the start of the current
/// sweep, which the dual-primal primal recovery reads.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub u: Vector,
    pub v: Vector,
    pub lambda: Vector,
    pub xbar: Vector,
    pub ybar: Vector,
    pub xbar_prev: Vector,
    pub v_prev: Vector,
    pub k: usize,
}

impl SchemeState {
    pub fn new(u: Vector, v: Vector, lambda: Vector, xbar: Vector, ybar: Vector) -> Self {
        SchemeState {
            xbar_prev: xbar.clone(),
            v_prev: v.clone(),
            u,
            v,
            lambda,
            xbar,
            ybar,
            k: 0,
        }
    }

    /// Start matching balanced ALM at `(x0, lambda0)`: `xbar = -x0`,
    /// `v = lambda = lambda0`, `ybar = b`, `u = -A' v`.
    pub fn for_balanced(problem: &ConvexProblem, x0: &Vector, lambda0: &Vector) -> Self {
        let u = -problem.a().tr_mul(lambda0);
        SchemeState::new(u, lambda0.clone(), lambda0.clone(), -x0, problem.b().clone())
    }

    /// Start matching dual-primal balanced ALM at `(x0, lambda0)` with
    /// history `lambda_prev`: `xbar = -x0 + beta1 A'(lambda0 - lambda_prev)`.
    /// The history slots are set so that the recovered `x^0` is `x0`.
    pub fn for_dual_primal(problem: &ConvexProblem, params: &SchemeParams, x0: &Vector, lambda0: &Vector, lambda_prev: &Vector) -> Self {
        let a = problem.a();
        let xbar = -x0 + a.tr_mul(&(lambda0 - lambda_prev)) * params.beta1;
        let mut s = SchemeState::new(-a.tr_mul(lambda0), lambda0.clone(), lambda0.clone(), xbar, problem.b().clone());
        s.xbar_prev = -x0;
        s
    }

    fn check_dims(&self, problem: &ConvexProblem) -> Result<()> {
        let (n, m) = (problem.n(), problem.m());
        for (what, len, want) in [
            ("u", self.u.len(), n),
            ("xbar", self.xbar.len(), n),
            ("xbar_prev", self.xbar_prev.len(), n),
            ("v", self.v.len(), m),
            ("v_prev", self.v_prev.len(), m),
            ("lambda", self.lambda.len(), m),
            ("ybar", self.ybar.len(), m),
        ] {
            if len != want {
                return Err(Error::dims(what, want, len));
            }
        }
        Ok(())
    }

    fn finite(&self) -> bool {
        [
            &self.u,
            &self.v,
            &self.lambda,
            &self.xbar,
            &self.ybar,
            &self.xbar_prev,
            &self.v_prev,
        ]
        .into_iter()
        .all(crate::all_finite)
    }
}

/// Replaces one block using the current values of all others.
///
/// ```text
/// u     <- prox_{f*/beta1}(-A'v - xbar/beta1)
/// v     <- (beta1 A A' + beta2 I)^{-1}(-A xbar - ybar - beta1 A u + beta2 lambda)
/// lambda<- v - (b - ybar)/beta2
/// xbar  <- xbar + beta1 (u + A'v)
/// ybar  <- ybar + beta2 (v - lambda)
/// ```
pub fn block_update(block: Block, state: &mut SchemeState, params: &SchemeParams, problem: &ConvexProblem, factor: &RegularizedGramFactor) {
    let a = problem.a();
    let SchemeParams { beta1, beta2 } = *params;
    match block {
        Block::U => {
            let z = -a.tr_mul(&state.v) - &state.xbar / beta1;
            state.u = problem.prox_conjugate_raw(1.0 / beta1, &z);
        }
        Block::V => {
            let rhs = -(a * &state.xbar) - &state.ybar - (a * &state.u) * beta1 + &state.lambda * beta2;
            state.v = factor.solve_raw(&rhs);
        }
        Block::Lambda => {
            state.lambda = &state.v - (problem.b() - &state.ybar) / beta2;
        }
        Block::XBar => {
            state.xbar += (&state.u + a.tr_mul(&state.v)) * beta1;
        }
        Block::YBar => {
            state.ybar += (&state.v - &state.lambda) * beta2;
        }
    }
}

/// One algorithm of the scheme: a fixed order and parameters.
#[derive(Debug, Clone)]
pub struct PermutedScheme {
    order: UpdateOrder,
    class: Option<OrderClass>,
    params: SchemeParams,
    factor: RegularizedGramFactor,
}

impl PermutedScheme {
    pub fn new(problem: &ConvexProblem, order: UpdateOrder, params: SchemeParams) -> Result<Self> {
        let factor = RegularizedGramFactor::new(problem.a(), params.beta1, params.beta2)?;
        Ok(PermutedScheme {
            order,
            class: classify_order(&order).ok(),
            params,
            factor,
        })
    }

    pub fn order(&self) -> UpdateOrder {
        self.order
    }

    pub fn params(&self) -> SchemeParams {
        self.params
    }

    pub fn class(&self) -> Option<OrderClass> {
        self.class
    }

    /// A start that makes the class representative reproduce its ALM
    /// counterpart from `(x0, lambda0)` with multiplier history `lambda0`.
    pub fn matched_start(&self, problem: &ConvexProblem, x0: &Vector, lambda0: &Vector) -> SchemeState {
        match self.class {
            Some(c) if !c.is_balanced() => SchemeState::for_dual_primal(problem, &self.params, x0, lambda0, lambda0),
            _ => SchemeState::for_balanced(problem, x0, lambda0),
        }
    }
}

pub fn scheme_step(
    order: &UpdateOrder,
    state: &SchemeState,
    params: &SchemeParams,
    problem: &ConvexProblem,
    factor: &RegularizedGramFactor,
) -> Result<SchemeState> {
    state.check_dims(problem)?;
    if !factor.matches(params.beta1, params.beta2) {
        return Err(Error::Config("factor does not match (beta1, beta2)".into()));
    }
    let mut next = state.clone();
    next.xbar_prev = state.xbar.clone();
    next.v_prev = state.v.clone();
    for block in order.blocks() {
        block_update(*block, &mut next, params, problem, factor);
    }
    next.k += 1;
    Ok(next)
}

impl Method for PermutedScheme {
    type State = SchemeState;

    fn step(&self, problem: &ConvexProblem, state: &SchemeState) -> Result<SchemeState> {
        scheme_step(&self.order, state, &self.params, problem, &self.factor)
    }

    /// `lambda = v`; `x` by the recovery map of the order's class.
    fn snapshot(&self, problem: &ConvexProblem, s: &SchemeState) -> Iterate {
        let x = match self.class {
            Some(c) if !c.is_balanced() => dual_primal_x(problem, &self.params, s),
            _ => -&s.xbar,
        };
        Iterate::new(x, s.v.clone())
    }

    fn is_finite(&self, s: &SchemeState) -> bool {
        s.finite()
    }
}

fn dual_primal_x(problem: &ConvexProblem, params: &SchemeParams, s: &SchemeState) -> Vector {
    -&s.xbar_prev - (&s.u + problem.a().tr_mul(&s.v_prev)) * params.beta1
}

/// `x^k = -xbar^k`.
pub fn recover_primal_balanced(states: &[SchemeState]) -> Vec<Vector> {
    states.iter().map(|s| -&s.xbar).collect()
}

/// `x^{k+1} = -xbar^k - beta1 u^{k+1} - beta1 A' v^k` over consecutive
/// states; the result has one entry fewer than `states`.
pub fn recover_primal_dual_primal(problem: &ConvexProblem, states: &[SchemeState], params: &SchemeParams) -> Result<Vec<Vector>> {
    if states.len() < 2 {
        return Err(Error::Input("recovery needs at least two consecutive states".into()));
    }
    Ok(states
        .windows(2)
        .map(|w| -&w[0].xbar - (&w[1].u + problem.a().tr_mul(&w[0].v)) * params.beta1)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantViolation {
    /// Index `k + 1` of the offending state.
    pub k: usize,
    pub what: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    pub max_v_minus_lambda: f64,
    pub max_ybar_error: f64,
    pub first_violation: Option<InvariantViolation>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks the invariants that hold along runs of the four representative
/// orders, for states `1..` of `states`.
///
/// Orders with `v` before `lambda`: `ybar^{k+1} = b` for all `k >= 0`, and
/// `v^{k+1} = lambda^{k+1}` whenever `ybar^k = b` (so for `k >= 1`, and at
/// `k = 0` too if the start has `ybar^0 = b`). Orders with `lambda` before
/// `v`: `ybar^{k+1} = b + beta2 (v^{k+1} - v^k)`.
pub fn check_scheme_invariants(
    order: &UpdateOrder,
    states: &[SchemeState],
    problem: &ConvexProblem,
    params: &SchemeParams,
    tol: f64,
) -> Result<InvariantReport> {
    let v_first = *order == UpdateOrder::BALANCED_V_FIRST || *order == UpdateOrder::DUAL_PRIMAL_V_FIRST;
    let lambda_first = *order == UpdateOrder::BALANCED_LAMBDA_FIRST || *order == UpdateOrder::DUAL_PRIMAL_LAMBDA_FIRST;
    if !v_first && !lambda_first {
        return Err(Error::Config(format!("no closed-form invariants are known for order {order}")));
    }
    let b = problem.b();
    let mut report = InvariantReport {
        max_v_minus_lambda: 0.0,
        max_ybar_error: 0.0,
        first_violation: None,
    };
    let flag = |report: &mut InvariantReport, k: usize, what: &'static str, value: f64| {
        if report.first_violation.is_none() && !(value <= tol) {
            report.first_violation = Some(InvariantViolation { k, what, value });
        }
    };
    for k in 1..states.len() {
        let (prev, cur) = (&states[k - 1], &states[k]);
        if v_first {
            let ybar_err = (&cur.ybar - b).norm();
            report.max_ybar_error = report.max_ybar_error.max(ybar_err);
            flag(&mut report, k, "ybar = b", ybar_err);
            let prev_on_b = k >= 2 || (&prev.ybar - b).norm() <= tol;
            if prev_on_b {
                let d = (&cur.v - &cur.lambda).norm();
                report.max_v_minus_lambda = report.max_v_minus_lambda.max(d);
                flag(&mut report, k, "v = lambda", d);
            }
        } else {
            let target = b + (&cur.v - &prev.v) * params.beta2;
            let err = (&cur.ybar - target).norm();
            report.max_ybar_error = report.max_ybar_error.max(err);
            flag(&mut report, k, "ybar = b + beta2 (v - v_prev)", err);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub order: UpdateOrder,
    pub class: OrderClass,
    pub x: Vector,
    pub lambda: Vector,
    pub x_error: Option<f64>,
    pub primal_residual: f64,
}

/// Runs every canonical order for `k` sweeps from the same start and
/// reports the class-appropriate recovered primal iterate.
pub fn sweep_orders(
    problem: &ConvexProblem,
    params: SchemeParams,
    x0: &Vector,
    lambda0: &Vector,
    k: usize,
    exec: Execution,
) -> Result<Vec<SweepResult>> {
    let orders = enumerate_orders();
    let results = parallel::map(exec, &orders, |order| -> Result<SweepResult> {
        let scheme = PermutedScheme::new(problem, *order, params)?;
        let start = scheme.matched_start(problem, x0, lambda0);
        let states = collect_states(&scheme, problem, start, k)?;
        let last = scheme.snapshot(problem, states.last().expect("nonempty"));
        Ok(SweepResult {
            order: *order,
            class: classify_order(order)?,
            x_error: problem.certificate().map(|c| (&last.x - &c.x_star).norm()),
            primal_residual: problem.residual_norm(&last.x),
            x: last.x,
            lambda: last.lambda,
        })
    });
    results.into_iter().collect()
}

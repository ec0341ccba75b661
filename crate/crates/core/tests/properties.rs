use liftperm::baseline::{collect_iterates, BalancedAlm, PrimalDualState};
use liftperm::diagnostics::{gap_value, Iterate, Trace, TraceRow};
use liftperm::linalg::{sherman_morrison_solve, spectral_norm_sq, RegularizedGramFactor};
use liftperm::parallel::Execution;
use liftperm::problem::{make_elastic_net_problem, make_quadratic_problem, random_quadratic};
use liftperm::scheme::{classify_order, enumerate_orders, sweep_orders, SchemeParams, UpdateOrder};
use liftperm::{Matrix, Vector};
use proptest::prelude::*;

fn vec_of(len: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-5.0..5.0f64, len).prop_map(Vector::from_vec)
}

fn mat_of(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0..2.0f64, rows * cols).prop_map(move |v| Matrix::from_row_slice(rows, cols, &v))
}

fn sized() -> impl Strategy<Value = (usize, usize)> {
    (1usize..6).prop_flat_map(|n| (Just(n), 1..=n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prox_is_firmly_nonexpansive(
        (z1, z2) in (vec_of(4), vec_of(4)),
        gamma in 0.05..10.0f64,
        mu in 0.01..3.0f64,
        weight in 0.0..2.0f64,
    ) {
        let a = Matrix::from_element(1, 4, 1.0);
        let p = make_elastic_net_problem(mu, weight, a, Vector::from_element(1, 0.0)).unwrap();
        let (p1, p2) = (p.prox_f(gamma, &z1).unwrap(), p.prox_f(gamma, &z2).unwrap());
        let d = &p1 - &p2;
        prop_assert!(d.norm_squared() <= d.dot(&(&z1 - &z2)) + 1e-12);
        let (c1, c2) = (p.prox_f_conjugate(gamma, &z1).unwrap(), p.prox_f_conjugate(gamma, &z2).unwrap());
        let d = &c1 - &c2;
        prop_assert!(d.norm_squared() <= d.dot(&(&z1 - &z2)) + 1e-12);
    }

    #[test]
    fn prox_satisfies_subgradient_inclusion(
        z in vec_of(5),
        gamma in 0.05..10.0f64,
        mu in 0.0..3.0f64,
        weight in 0.0..2.0f64,
    ) {
        let a = Matrix::from_element(1, 5, 1.0);
        let p = make_elastic_net_problem(mu.max(1e-3), weight, a, Vector::from_element(1, 0.0)).unwrap();
        let mu = mu.max(1e-3);
        let x = p.prox_f(gamma, &z).unwrap();
        for i in 0..5 {
            // (z - x)/gamma - mu x must lie in weight * d|x|
            let g = (z[i] - x[i]) / gamma - mu * x[i];
            if x[i] == 0.0 {
                prop_assert!(g.abs() <= weight + 1e-10);
            } else {
                prop_assert!((g - weight * x[i].signum()).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn sherman_morrison_matches_direct((n, m) in sized(), seed in any::<u64>()) {
        let a = Matrix::from_fn(m, n, |i, j| (((seed as usize).wrapping_add(i * 31 + j * 17) % 97) as f64 / 48.5) - 1.0);
        let q = Vector::from_fn(n, |i, _| i as f64 - 1.5);
        let y = sherman_morrison_solve(&a, &q).unwrap();
        let direct = (a.tr_mul(&a) + Matrix::identity(n, n)).lu().solve(&q).unwrap();
        prop_assert!((y - direct).norm() <= 1e-10 * (1.0 + q.norm()));
    }

    #[test]
    fn gram_solve_has_small_residual(a in mat_of(3, 5), rhs in vec_of(3), beta in 0.01..10.0f64, delta in 0.01..10.0f64) {
        let f = RegularizedGramFactor::new(&a, beta, delta).unwrap();
        let s = f.solve(&rhs).unwrap();
        prop_assert!((f.apply(&s) - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        let explicit = &a * a.transpose() * beta + Matrix::identity(3, 3) * delta;
        prop_assert!((f.reconstruct() - explicit).amax() <= 1e-10);
    }

    #[test]
    fn spectral_norm_bounds(a in mat_of(3, 4), x in vec_of(4)) {
        let rho = spectral_norm_sq(&a, 1e-12).unwrap();
        prop_assert!((&a * &x).norm_squared() <= rho * x.norm_squared() * (1.0 + 1e-8) + 1e-10);
        prop_assert!(rho <= a.norm_squared() * (1.0 + 1e-12) + 1e-12);
        prop_assert!(rho >= a.amax() * a.amax() * (1.0 - 1e-8));
    }

    #[test]
    fn gap_at_saddle_reference_is_nonnegative(seed in 0u64..500, x in vec_of(6), l in vec_of(3)) {
        let p = random_quadratic(6, 3, seed).unwrap();
        let c = p.certificate().unwrap();
        prop_assert!(gap_value(&p, &x, &l, &c.x_star, &c.lambda_star) >= -1e-12);
    }

    #[test]
    fn classes_are_invariant_under_rotation(i in 0usize..24, shift in 0usize..5) {
        let order = enumerate_orders()[i];
        let mut blocks = *order.blocks();
        blocks.rotate_left(shift);
        let rotated = UpdateOrder::new(blocks).unwrap();
        prop_assert_eq!(rotated, order);
        prop_assert_eq!(classify_order(&rotated).unwrap(), classify_order(&order).unwrap());
        prop_assert_eq!(order.to_string().parse::<UpdateOrder>().unwrap(), order);
    }
}

#[test]
fn gap_along_a_converging_run_is_nonnegative() {
    let p = random_quadratic(8, 3, 4).unwrap();
    let c = p.certificate().unwrap();
    let m = BalancedAlm::new(&p, 1.0, 1.0).unwrap();
    for it in collect_iterates(&m, &p, PrimalDualState::zeros(&p), 300).unwrap() {
        assert!(gap_value(&p, &it.x, &it.lambda, &c.x_star, &c.lambda_star) >= -1e-12);
    }
}

#[test]
fn trace_csv_round_trips_exactly() {
    let p = make_quadratic_problem(
        Matrix::identity(2, 2),
        Vector::zeros(2),
        Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
        Vector::from_element(1, 1.0),
    )
    .unwrap();
    let m = BalancedAlm::new(&p, 1.3, 0.7).unwrap();
    let mut trace = Trace::new();
    for (k, it) in collect_iterates(&m, &p, PrimalDualState::zeros(&p), 25)
        .unwrap()
        .into_iter()
        .enumerate()
    {
        trace.push(TraceRow::new(&p, k, it, p.certificate())).unwrap();
    }
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let back = Trace::read_csv(buf.as_slice()).unwrap();
    let (a, b): (Vec<Iterate>, Vec<Iterate>) = (trace.iterates(), back.iterates());
    assert_eq!(a, b);
    assert_eq!(trace.rows(), back.rows());
}

#[test]
fn sequential_and_parallel_sweeps_agree() {
    let p = random_quadratic(6, 2, 8).unwrap();
    let params = SchemeParams::new(1.0, 1.0).unwrap();
    let x0 = Vector::from_element(6, 0.3);
    let l0 = Vector::from_element(2, -0.2);
    let a = sweep_orders(&p, params, &x0, &l0, 50, Execution::Sequential).unwrap();
    let b = sweep_orders(&p, params, &x0, &l0, 50, Execution::default()).unwrap();
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.order, rb.order);
        assert_eq!(ra.x, rb.x);
        assert_eq!(ra.lambda, rb.lambda);
    }
}

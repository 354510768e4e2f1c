use approx::assert_relative_eq;
use itinerant_core::analysis::{grid_entropy, transition_stats, GridPlane, SymbolGrid};
use itinerant_core::feedback::Classifier;
use itinerant_core::innate::rls_update;
use itinerant_core::linalg::{ridge_solve, Gram};
use itinerant_core::{sample_fsm_schedule, Fsm, Network, SimConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stream(
    dim: usize,
    len: impl Into<prop::collection::SizeRange>,
) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, dim), len)
}

fn run_rls(xs: &[Vec<f64>], errors: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let d = xs[0].len();
    let mut p = DMatrix::identity(d, d);
    let mut w = DVector::zeros(d);
    for (x, &e) in xs.iter().zip(errors) {
        let (dj, next) = rls_update(&p, x, e).unwrap();
        w -= DVector::from_column_slice(&dj);
        p = next;
    }
    (p, w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rls_matrix_is_the_regularized_inverse(xs in (1usize..6).prop_flat_map(|d| stream(d, 1..60))) {
        let d = xs[0].len();
        let zeros = vec![0.0; xs.len()];
        let (p, _) = run_rls(&xs, &zeros);
        let mut c = DMatrix::identity(d, d);
        for x in &xs {
            let v = DVector::from_column_slice(x);
            c += &v * v.transpose();
        }
        let direct = c.try_inverse().unwrap();
        prop_assert!((&p - &direct).abs().max() < 1e-9);
        prop_assert!((&p - p.transpose()).abs().max() < 1e-12);
        prop_assert!(p.clone().cholesky().is_some());
    }

    #[test]
    fn rls_tracks_regularized_least_squares(
        xs in stream(4, 5..80),
        w_true in prop::collection::vec(-2.0..2.0f64, 4),
    ) {
        // online fit of y = w_true·x starting from w = 0, error = w·x - y
        let d = 4;
        let wt = DVector::from_column_slice(&w_true);
        let mut p = DMatrix::identity(d, d);
        let mut w = DVector::zeros(d);
        for x in &xs {
            let xv = DVector::from_column_slice(x);
            let e = w.dot(&xv) - wt.dot(&xv);
            let (dj, next) = rls_update(&p, x, e).unwrap();
            w -= DVector::from_column_slice(&dj);
            p = next;
        }
        let mut a = DMatrix::zeros(d, d);
        let mut b = DMatrix::zeros(d, 1);
        for x in &xs {
            let xv = DVector::from_column_slice(x);
            a += &xv * xv.transpose();
            b += &xv * wt.dot(&xv);
        }
        let batch = ridge_solve(&a, &b, 1.0, "batch").unwrap();
        for i in 0..d {
            prop_assert!((w[i] - batch[(i, 0)]).abs() < 1e-9);
        }
    }

    #[test]
    fn ridge_is_stationary_and_shrinks(
        xs in stream(3, 10..40),
        ys in prop::collection::vec(-1.0..1.0f64, 40),
        alpha in 0.01..10.0f64,
    ) {
        let n = xs.len();
        let mut g = Gram::new(3, 1);
        g.add(&xs.concat(), &ys[..n], 1.0);
        let w = g.ridge(alpha, "test").unwrap();
        // gradient of |Xw - y|² + alpha |w|² vanishes
        let grad = &g.xtx * &w - &g.xty + &w * alpha;
        prop_assert!(grad.abs().max() < 1e-9);
        let stronger = g.ridge(alpha * 10.0, "test").unwrap();
        prop_assert!(stronger.norm() <= w.norm() + 1e-12);
    }

    #[test]
    fn states_stay_in_the_unit_box(seed in 0u64..1000, steps in 1usize..200, symbol in 0usize..2) {
        let cfg = SimConfig { n_in: 12, n_ch: 30, density: 0.2, ..SimConfig::desk() }.with_seed(seed);
        let net = Network::build(cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = net.washout(20.0, None, &mut rng).unwrap();
        net.advance(&mut state, Some(symbol), steps).unwrap();
        prop_assert!(state.x.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn empirical_transition_rows_are_stochastic(seed in 0u64..500, m in 2usize..5, self_loops: bool) {
        let fsm = Fsm::uniform(m, self_loops, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sched = sample_fsm_schedule(&fsm, 2000.0, &mut rng).unwrap();
        let stats = transition_stats(&sched.per_step(1.0), 1.0, m);
        for row in &stats.probabilities {
            let sum: f64 = row.iter().sum();
            prop_assert!(sum == 0.0 || (sum - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }

    #[test]
    fn grid_entropy_is_bounded(cells in (3usize..12).prop_flat_map(|n| prop::collection::vec(0usize..3, n * n))) {
        let n = (cells.len() as f64).sqrt() as usize;
        let grid = SymbolGrid {
            plane: GridPlane { resolution: n, ..Default::default() },
            horizon_ms: 0.0,
            n_symbols: 3,
            cells: cells.into_iter().map(Some).collect(),
        };
        let h = grid_entropy(&grid).unwrap();
        let windows = ((n - 2) * (n - 2)) as f64;
        prop_assert!(h >= 0.0);
        prop_assert!(h <= windows.log2().min(9.0 * 3f64.log2()) + 1e-9);
    }

    #[test]
    fn classification_ignores_positive_weight_scaling(
        w in prop::collection::vec(-1.0..1.0f64, 12),
        x in prop::collection::vec(-1.0..1.0f64, 3),
        c in 0.1..50.0f64,
    ) {
        let weights = DMatrix::from_row_slice(3, 4, &w);
        let a = Classifier::new(weights.clone(), true).unwrap();
        let b = Classifier::new(weights * c, true).unwrap();
        let (sa, sb) = (a.scores(&x), b.scores(&x));
        let top = |s: &[f64]| s.iter().cloned().fold(f64::MIN, f64::max);
        // skip near-ties, where rounding may pick either class
        let mut sorted = sa.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted[2] - sorted[1] > 1e-9);
        prop_assert_eq!(a.classify(&x), b.classify(&x));
        assert_relative_eq!(top(&sb), c * top(&sa), max_relative = 1e-9);
    }
}

mod support;

use frm_core::quantile::{
    check_loss, lambda_max, sample_quantile, select_gacv, solve, QuantileProblem,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_instance(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (Array1<f64>, Array2<f64>) {
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let y = Array1::from_shape_fn(n, |t| {
        x.row(t).iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * 0.5 * v).sum::<f64>()
            + rng.sample::<f64, _>(StandardNormal)
    });
    (y, x)
}

fn rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[test]
fn matches_lattice_oracle_on_small_instance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (y, x) = random_instance(&mut rng, 10, 2);
    let fit = solve(&QuantileProblem::new(y.clone(), x.clone(), 0.25, 0.1)).unwrap();
    let (oracle, _) = support::lattice::minimise(y.as_slice().unwrap(), &rows(&x), 0.25, 0.1);
    assert!(fit.objective <= oracle + 1e-4, "lp {} oracle {}", fit.objective, oracle);
    assert!((fit.objective - oracle).abs() < 1e-4);
}

#[test]
fn lambda_max_is_the_entry_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (y, x) = random_instance(&mut rng, 25, 4);
        for tau in [0.05, 0.5] {
            let lmax = lambda_max(y.view(), x.view(), tau);
            let at = solve(&QuantileProblem::new(y.clone(), x.clone(), tau, lmax)).unwrap();
            assert!(at.beta.iter().map(|b| b.abs()).sum::<f64>() <= 1e-10);
            let below = solve(&QuantileProblem::new(y.clone(), x.clone(), tau, 0.5 * lmax)).unwrap();
            assert!(below.beta.iter().any(|b| b.abs() > 1e-8));
        }
    }
}

#[test]
fn unpenalised_fit_interpolates_at_least_p_plus_one_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in 0..4 {
        let (y, x) = random_instance(&mut rng, 30, p);
        let fit = solve(&QuantileProblem::new(y, x, 0.3, 0.0)).unwrap();
        let zeros = fit.residuals.iter().filter(|r| r.abs() <= 1e-8).count();
        assert!(zeros >= p + 1, "p={p}: {zeros} interpolated");
    }
}

#[test]
fn objective_recomputes_from_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..10 {
        let (y, x) = random_instance(&mut rng, 20, 3);
        let lambda = [0.0, 0.01, 0.3][k % 3];
        let fit = solve(&QuantileProblem::new(y.clone(), x.clone(), 0.1, lambda)).unwrap();
        let resid = &y - &x.dot(&fit.beta) - fit.alpha;
        let obj = resid.iter().map(|&u| check_loss(u, 0.1)).sum::<f64>() / 20.0
            + lambda * fit.beta.iter().map(|b| b.abs()).sum::<f64>();
        assert!((obj - fit.objective).abs() < 1e-9);
        let df = 1 + fit.beta.iter().filter(|b| b.abs() > 1e-8).count();
        assert_eq!(df, fit.df);
    }
}

#[test]
fn infinite_penalty_returns_sample_quantile() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for tau in [0.05, 0.1, 0.25, 0.5, 0.9] {
        let (y, x) = random_instance(&mut rng, 40, 3);
        let fit = solve(&QuantileProblem::new(y.clone(), x, tau, 1e8)).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert!((fit.alpha - sample_quantile(y.view(), tau)).abs() < 1e-9);
    }
}

#[test]
fn gacv_finds_planted_signal() {
    let mut hits = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((63, 8), |_| rng.sample::<f64, _>(StandardNormal) * 0.02);
        let y = x.column(3).mapv(|v| 1.5 * v);
        let res = select_gacv(y.view(), x.view(), 0.05, 50).unwrap();
        if res.selected_fit.active_set().contains(&3) {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn frm_sized_path_is_fast_enough() {
    // one institution-window of the default protocol: n = 63, p = 24 + 13
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (y, x) = random_instance(&mut rng, 63, 37);
    let start = std::time::Instant::now();
    let reps = 20;
    for _ in 0..reps {
        select_gacv(y.view(), x.view(), 0.05, 50).unwrap();
    }
    let per = start.elapsed() / reps;
    eprintln!("GACV path n=63 p=37 grid=50: {per:?}");
    assert!(per.as_millis() < 200);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn scaling_response_scales_fit(seed in 0u64..1000, c in 0.1f64..20.0, tau in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (y, x) = random_instance(&mut rng, 15, 2);
        let base = solve(&QuantileProblem::new(y.clone(), x.clone(), tau, 0.0)).unwrap();
        let scaled = solve(&QuantileProblem::new(&y * c, x.clone(), tau, 0.0)).unwrap();
        prop_assert!((scaled.objective - c * base.objective).abs() < 1e-9 * (1.0 + c * base.objective));
        for (a, b) in base.beta.iter().zip(scaled.beta.iter()) {
            prop_assert_eq!(a.signum() * (a.abs() > 1e-8) as i32 as f64, b.signum() * (b.abs() > 1e-8) as i32 as f64);
        }
        // with the penalty held fixed the whole coefficient vector scales by c
        let lam = 0.05;
        let pb = solve(&QuantileProblem::new(y.clone(), x.clone(), tau, lam)).unwrap();
        let ps = solve(&QuantileProblem::new(&y * c, x.clone(), tau, lam)).unwrap();
        for (a, b) in pb.beta.iter().zip(ps.beta.iter()) {
            prop_assert!((b - c * a).abs() < 1e-9 * (1.0 + c * a.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn zero_design_returns_smallest_quantile(seed in 0u64..10_000, n in 2usize..80, tau in 0.01f64..0.99, p in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // integer responses make ties common
        let y = Array1::from_shape_fn(n, |_| rng.random_range(-5..5) as f64);
        let fit = solve(&QuantileProblem::new(y.clone(), Array2::zeros((n, p)), tau, 0.0)).unwrap();
        prop_assert_eq!(fit.alpha, sample_quantile(y.view(), tau));
        prop_assert!(fit.beta.iter().all(|&b| b == 0.0));
    }
}

mod common;

use common::{gaussian_matrix, gaussian_vector, median, pick, stable_matrix};
use ndss_core::graph::Adjacency;
use ndss_core::state_inference::{
    check_local_estimability, estimate_initial_state, observability_bundle, observability_matrix,
    solve_full_rank, sparse_initial_state, spark_condition,
};
use ndss_core::{build_consensus_benchmark, simulate, DMatrix, DVector, Error, NoiseSpec, SystemModel};
use proptest::prelude::*;

fn benchmark_errors(sigma_v_sq: f64, t: usize, seeds: std::ops::Range<u64>) -> Vec<f64> {
    let (model, x0) = build_consensus_benchmark();
    seeds
        .map(|s| {
            let tr = simulate(&model, &x0, t, &NoiseSpec::zero(), &NoiseSpec::gaussian(sigma_v_sq), None, s).unwrap();
            let est = estimate_initial_state(&model, &tr.y, 0, t).unwrap().with_truth(&x0);
            est.error_norm.unwrap()
        })
        .collect()
}

#[test]
fn noise_free_recovery_on_random_systems() {
    for case in 0..60u64 {
        let n = pick(1, 8, case, 0);
        let m = pick(1, n, case, 1);
        let a = stable_matrix(n, 0.95, case, 2);
        let c = gaussian_matrix(m, n, case, 3);
        let model = SystemModel::new(a, None, Some(c)).unwrap();
        let t = 2 * n + 2;
        if !observability_bundle(&model, t, 1e-9).unwrap().observable {
            continue;
        }
        let x0 = gaussian_vector(n, case, 4);
        let tr = simulate(&model, &x0, t, &NoiseSpec::zero(), &NoiseSpec::zero(), None, case).unwrap();
        let est = estimate_initial_state(&model, &tr.y, 0, t).unwrap();
        assert!((&est.x_hat - &x0).norm() <= 1e-9 * x0.norm(), "case {case}: n={n} m={m}");
    }
}

#[test]
fn error_matches_replayed_noise() {
    let (model, x0) = build_consensus_benchmark();
    let t = 20;
    let tr = simulate(&model, &x0, t, &NoiseSpec::zero(), &NoiseSpec::gaussian(0.25), None, 8).unwrap();
    let est = estimate_initial_state(&model, &tr.y, 0, t).unwrap();
    let m_o = observability_matrix(model.a(), &model.c(), t);
    let v = tr.v.as_ref().unwrap();
    let v_stack = DVector::from_fn(5 * t, |i, _| v[(i % 5, i / 5)]);
    let (predicted, _) = solve_full_rank(&m_o, &v_stack).unwrap();
    assert!(((&est.x_hat - &x0) - predicted).amax() < 1e-10);
}

#[test]
fn windowed_estimate_targets_window_start() {
    let (model, x0) = build_consensus_benchmark();
    let tr = simulate(&model, &x0, 40, &NoiseSpec::zero(), &NoiseSpec::zero(), None, 0).unwrap();
    let est = estimate_initial_state(&model, &tr.y, 25, 10).unwrap();
    assert!((est.x_hat - tr.state(25)).amax() < 1e-9);
}

#[test]
fn error_grows_with_observation_noise() {
    let medians: Vec<f64> = [0.01, 0.25, 1.0].iter().map(|&s| median(&benchmark_errors(s, 100, 0..30))).collect();
    assert!(medians[0] < medians[1] && medians[1] < medians[2], "{medians:?}");
}

#[test]
fn error_shrinks_with_horizon() {
    let short = median(&benchmark_errors(1.0, 50, 0..200));
    let long = median(&benchmark_errors(1.0, 400, 0..200));
    assert!(long < short, "T=400 {long} vs T=50 {short}");
}

#[test]
fn estimator_is_unbiased() {
    let (model, x0) = build_consensus_benchmark();
    let seeds = 2000;
    let t = 10;
    let ests: Vec<DVector<f64>> = (0..seeds)
        .map(|s| {
            let tr = simulate(&model, &x0, t, &NoiseSpec::zero(), &NoiseSpec::gaussian(1.0), None, s).unwrap();
            estimate_initial_state(&model, &tr.y, 0, t).unwrap().x_hat
        })
        .collect();
    for i in 0..5 {
        let vals: Vec<f64> = ests.iter().map(|e| e[i]).collect();
        let mean = vals.iter().sum::<f64>() / seeds as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64).sqrt();
        let se = sd / (seeds as f64).sqrt();
        assert!((mean - x0[i]).abs() < 5.0 * se, "component {i}: {mean} vs {}", x0[i]);
    }
}

#[test]
fn short_window_is_rank_deficient() {
    let model = SystemModel::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        None,
        Some(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])),
    )
    .unwrap();
    let y = DMatrix::from_row_slice(1, 2, &[1.0, 3.0]);
    assert!(matches!(estimate_initial_state(&model, &y, 0, 1), Err(Error::RankDeficient { rank: 1, n: 2 })));
    let est = estimate_initial_state(&model, &y, 0, 2).unwrap();
    assert!((est.x_hat - DVector::from_vec(vec![1.0, 2.0])).amax() < 1e-12);
}

#[test]
fn planted_sparse_supports_are_recovered() {
    let mut checked = 0;
    for case in 0..40u64 {
        let n = pick(3, 10, case, 10);
        let rows = pick(6, 2 * n, case, 11);
        let m_o = gaussian_matrix(rows, n, case, 12);
        if !spark_condition(&m_o, 3) {
            continue;
        }
        let mut x = DVector::zeros(n);
        let mut support: Vec<usize> = (0..3).map(|j| pick(0, n - 1, case, 20 + j)).collect();
        support.sort_unstable();
        support.dedup();
        for (j, &s) in support.iter().enumerate() {
            x[s] = 1.0 + j as f64;
        }
        let rec = sparse_initial_state(&m_o, &(&m_o * &x), 3).unwrap();
        assert_eq!(rec.support, support, "case {case}");
        assert!(rec.unique);
        assert!((rec.x_hat - &x).amax() < 1e-8);
        checked += 1;
    }
    assert!(checked > 20);
}

#[test]
fn underdetermined_sparse_problem_is_not_unique() {
    let m_o = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, -0.3, 0.2, 1.0, 0.8]);
    let x = DVector::from_vec(vec![1.0, 0.0, 2.0]);
    let rec = sparse_initial_state(&m_o, &(&m_o * &x), 3).unwrap();
    assert!(!rec.unique);
}

#[test]
fn local_estimability_on_a_path() {
    let path = Adjacency::path(3);
    assert!(check_local_estimability(&path, 0, 1).unwrap());
    assert!(!check_local_estimability(&path, 1, 0).unwrap());
    let full = Adjacency::complete(4);
    assert!(check_local_estimability(&full, 3, 0).unwrap());
    assert!(matches!(check_local_estimability(&path, 5, 0), Err(Error::UnknownNode(5))));
}

proptest! {
    #[test]
    fn one_sparse_recovery(n in 2usize..7, idx in 0usize..7, value in -5.0f64..5.0, seed in 0u64..1000) {
        let idx = idx % n;
        prop_assume!(value.abs() > 1e-3);
        let m_o = gaussian_matrix(n + 2, n, seed, 0);
        prop_assume!(spark_condition(&m_o, 1));
        let mut x = DVector::zeros(n);
        x[idx] = value;
        let rec = sparse_initial_state(&m_o, &(&m_o * &x), 2).unwrap();
        prop_assert_eq!(rec.support, vec![idx]);
        prop_assert!(rec.unique);
    }

    #[test]
    fn residual_is_recomputable(seed in 0u64..500) {
        let (model, x0) = build_consensus_benchmark();
        let tr = simulate(&model, &x0, 8, &NoiseSpec::zero(), &NoiseSpec::gaussian(0.5), None, seed).unwrap();
        let est = estimate_initial_state(&model, &tr.y, 0, 8).unwrap();
        let m_o = observability_matrix(model.a(), &model.c(), 8);
        let y = ndss_core::linalg::stack_columns(&tr.y, 0, 8);
        prop_assert!(((y - m_o * &est.x_hat).norm() - est.residual_norm).abs() < 1e-9);
    }
}

mod common;

use common::{gaussian_matrix, median};
use ndss_core::graph::Adjacency;
use ndss_core::topology_inference::{
    compute_v_h, infer_causality, infer_granger, infer_local, infer_ols, ridge_estimate, CovarianceAccumulator,
    CovariancePair,
};
use ndss_core::{build_consensus_benchmark, simulate, DMatrix, DVector, NoiseSpec, ObservationStacks, SystemModel};

fn scalar_run(t: usize, seed: u64) -> ObservationStacks {
    let model = SystemModel::autonomous(DMatrix::from_element(1, 1, 0.5)).unwrap();
    let x0 = DVector::from_element(1, 0.0);
    let tr = simulate(&model, &x0, t, &NoiseSpec::gaussian(1.0), &NoiseSpec::gaussian(1.0), None, seed).unwrap();
    ObservationStacks::from_trajectory(&tr).unwrap()
}

#[test]
fn scalar_limits_of_ols_and_causality() {
    let obs = scalar_run(300_000, 1);
    let ols = infer_ols(&obs).unwrap().a_hat[(0, 0)];
    let cau = infer_causality(&obs, 1.0).unwrap().a_hat[(0, 0)];
    assert!((ols - 2.0 / 7.0).abs() < 0.015, "ols {ols}");
    assert!((cau - 0.5).abs() < 0.015, "causality {cau}");
}

#[test]
fn causality_is_negative_ridge() {
    for seed in 0..5 {
        let a = gaussian_matrix(4, 4, seed, 0) * 0.3;
        let model = SystemModel::autonomous(a).unwrap();
        let tr = simulate(&model, &DVector::zeros(4), 200, &NoiseSpec::gaussian(1.0), &NoiseSpec::gaussian(0.3), None, seed)
            .unwrap();
        let obs = ObservationStacks::from_trajectory(&tr).unwrap();
        let cau = infer_causality(&obs, 0.3).unwrap().a_hat;
        let t = obs.t() as f64;
        // Direct evaluation of the ridge normal equations.
        let (minus, plus) = (obs.y_minus(), obs.y_plus());
        let oracle = &plus * minus.transpose()
            * (&minus * minus.transpose() - DMatrix::identity(4, 4) * (t * 0.3)).try_inverse().unwrap();
        assert!((&cau - &oracle).amax() < 1e-10);
        assert!((&cau - ridge_estimate(&obs, -t * 0.3).unwrap()).amax() < 1e-10);
    }
}

#[test]
fn streaming_covariances_match_batch() {
    let obs = scalar_run(500, 3);
    let mut acc = CovarianceAccumulator::new(1);
    for k in 0..=obs.t() {
        acc.push(&obs.sequence().column(k).into_owned());
    }
    let batch = CovariancePair::from_stacks(&obs);
    let streamed = acc.covariances().unwrap();
    assert!((batch.sigma0 - streamed.sigma0).amax() < 1e-12);
    assert!((batch.sigma1 - streamed.sigma1).amax() < 1e-12);
}

#[test]
fn causality_beats_ols_on_benchmark() {
    let (model, x0) = build_consensus_benchmark();
    let t = 30_000;
    let mut ols = Vec::new();
    let mut cau = Vec::new();
    for seed in 0..6 {
        let tr = simulate(&model, &x0, t, &NoiseSpec::gaussian(1.0), &NoiseSpec::gaussian(1.0), None, seed).unwrap();
        let obs = ObservationStacks::from_trajectory(&tr).unwrap();
        ols.push(infer_ols(&obs).unwrap().with_truth(model.a()).unwrap().frobenius_error.unwrap());
        cau.push(infer_causality(&obs, 1.0).unwrap().with_truth(model.a()).unwrap().frobenius_error.unwrap());
    }
    assert!(median(&cau) < 0.5 * median(&ols), "causality {cau:?} ols {ols:?}");
}

#[test]
fn covariance_identity_on_stable_system() {
    let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.2, 0.0, 0.1, 0.4, 0.2, 0.0, 0.3, 0.6]);
    let model = SystemModel::autonomous(a.clone()).unwrap();
    let tr = simulate(&model, &DVector::zeros(3), 1_000_000, &NoiseSpec::gaussian(1.0), &NoiseSpec::gaussian(1.0), None, 2)
        .unwrap();
    let cov = CovariancePair::from_stacks(&ObservationStacks::from_trajectory(&tr).unwrap());
    let gap = &cov.sigma1 - &a * (&cov.sigma0 - DMatrix::identity(3, 3));
    assert!(gap.norm() / a.norm() < 0.02, "{}", gap.norm() / a.norm());
}

#[test]
fn granger_over_rounds() {
    let model = SystemModel::autonomous(DMatrix::from_element(1, 1, 0.5)).unwrap();
    let rounds: Vec<ObservationStacks> = (0..10_000u64)
        .map(|s| {
            let tr = simulate(&model, &DVector::from_element(1, 1.0), 50, &NoiseSpec::gaussian(1.0), &NoiseSpec::zero(), None, s)
                .unwrap();
            ObservationStacks::from_trajectory(&tr).unwrap()
        })
        .collect();
    let est = infer_granger(&rounds).unwrap().a_hat[(0, 0)];
    assert!((est - 0.5).abs() < 0.02, "{est}");
}

#[test]
fn local_estimates_on_a_chain() {
    let adj = Adjacency::path(4);
    let mut a = DMatrix::zeros(4, 4);
    for i in 0..4 {
        a[(i, i)] = 0.5;
        for j in adj.neighbors(i) {
            a[(i, j)] = 0.2;
        }
    }
    let model = SystemModel::autonomous(a.clone()).unwrap();
    let tr = simulate(&model, &DVector::zeros(4), 100_000, &NoiseSpec::gaussian(1.0), &NoiseSpec::zero(), None, 6).unwrap();
    let v_f = [0, 1, 2];
    let v_h = compute_v_h(&adj, &v_f).unwrap();
    assert_eq!(v_h, vec![0, 1]);
    let obs_f = ObservationStacks::from_trajectory(&tr).unwrap().rows(&v_f).unwrap();
    let local = infer_local(&obs_f, &v_f, Some(&v_h)).unwrap().with_truth(&a).unwrap();
    let hf = &local.hf.as_ref().unwrap().a_hat;
    assert!((hf - a.select_rows(&[0, 1]).select_columns(&v_f)).amax() < 0.05);
    let row3 = local.truncated.a_hat.row(2) - a.select_rows(&[2]).select_columns(&v_f);
    assert!(row3.amax() >= 0.01, "hidden node 4 should bias row 3: {row3}");
}

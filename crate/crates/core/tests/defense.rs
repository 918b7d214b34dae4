mod common;

use common::{gaussian_matrix, median, pick};
use ndss_core::secrecy_defense::{
    boundary_noise_step, p5_objective, run_defended, verify_convergence_condition,
};
use ndss_core::secrecy_metrics::k_step_predictability;
use ndss_core::topology_inference::infer_ols;
use ndss_core::{
    build_consensus_benchmark_rational, Channel, DMatrix, DVector, DefenseConfig, EtaDesigner, NoiseFamily, NoiseSpec,
    NoiseStream, ObservationStacks,
};
use proptest::prelude::*;

fn adjacent(family: NoiseFamily, k_max: usize) -> DefenseConfig {
    DefenseConfig {
        theta: NoiseSpec::zero(),
        eta: EtaDesigner::AdjacentCancellation { alpha: 3.0, rho: 0.95, family },
        k_max,
    }
}

fn boundary(k_max: usize) -> DefenseConfig {
    DefenseConfig { theta: NoiseSpec::zero(), eta: EtaDesigner::Boundary { alpha: 3.0, rho: 0.95 }, k_max }
}

/// History, observations and bounds of a random two-node instance.
fn instance(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, Vec<(f64, f64)>) {
    let k = pick(2, 6, seed, 0);
    let phi = gaussian_matrix(2, k, seed, 1);
    let y = gaussian_matrix(2, k + 1, seed, 2);
    let raw = gaussian_matrix(2, 2, seed, 3);
    let bounds = (0..2)
        .map(|i| {
            let (a, b) = (raw[(i, 0)], raw[(i, 1)]);
            (a.min(b), a.max(b))
        })
        .collect();
    (phi, y, bounds)
}

fn objective_with(phi: &DMatrix<f64>, y: &DMatrix<f64>, eta: &DVector<f64>) -> f64 {
    let mut full = phi.clone().insert_column(phi.ncols(), 0.0);
    full.set_column(phi.ncols(), eta);
    p5_objective(&full, y).unwrap()
}

#[test]
fn vertex_choice_beats_grid() {
    for seed in 0..25 {
        let (phi, y, bounds) = instance(seed);
        let eta = boundary_noise_step(&phi, &y, &bounds).unwrap();
        let best = objective_with(&phi, &y, &eta);
        let mut grid_best = f64::NEG_INFINITY;
        for i in 0..41 {
            for j in 0..41 {
                let p = |b: (f64, f64), s: usize| b.0 + (b.1 - b.0) * s as f64 / 40.0;
                let cand = DVector::from_vec(vec![p(bounds[0], i), p(bounds[1], j)]);
                grid_best = grid_best.max(objective_with(&phi, &y, &cand));
            }
        }
        assert!(best >= grid_best - 1e-9 * grid_best.abs().max(1.0), "seed {seed}: {best} < {grid_best}");
    }
}

#[test]
fn vertex_choice_beats_interior_points() {
    let n = 4;
    let stream = NoiseStream::new(3, Channel(200));
    let phi = gaussian_matrix(n, 7, 3, 0);
    let y = gaussian_matrix(n, 8, 3, 1);
    let bounds: Vec<(f64, f64)> = (0..n).map(|i| (-0.5 - 0.1 * i as f64, 0.3 + 0.2 * i as f64)).collect();
    let eta = boundary_noise_step(&phi, &y, &bounds).unwrap();
    for (i, v) in eta.iter().enumerate() {
        assert!(*v == bounds[i].0 || *v == bounds[i].1);
    }
    let best = objective_with(&phi, &y, &eta);
    for r in 0..1000 {
        let mut rng = stream.at(r);
        let cand = DVector::from_fn(n, |i, _| bounds[i].0 + (bounds[i].1 - bounds[i].0) * rng.open01());
        assert!(objective_with(&phi, &y, &cand) <= best + 1e-12);
    }
}

#[test]
fn large_networks_use_ascent_and_stay_on_vertices() {
    let n = 14;
    let phi = gaussian_matrix(n, 20, 8, 0);
    let y = gaussian_matrix(n, 21, 8, 1);
    let bounds = vec![(-1.0, 0.5); n];
    let eta = boundary_noise_step(&phi, &y, &bounds).unwrap();
    assert!(eta.iter().all(|&v| v == -1.0 || v == 0.5));
    let best = objective_with(&phi, &y, &eta);
    for i in 0..n {
        let mut flipped = eta.clone();
        flipped[i] = if eta[i] == -1.0 { 0.5 } else { -1.0 };
        assert!(objective_with(&phi, &y, &flipped) <= best + 1e-12);
    }
}

#[test]
fn cancellation_converges_for_every_seed() {
    let (model, x0) = build_consensus_benchmark_rational();
    for seed in 0..50 {
        for family in [NoiseFamily::Uniform, NoiseFamily::Gaussian] {
            let run = run_defended(&model, &x0, &adjacent(family, 500), seed).unwrap();
            assert!(run.deviation < 1e-2, "seed {seed}: {}", run.deviation);
            let eta = run.trajectory.eta.as_ref().unwrap();
            let cap = 3.0 * 0.95f64.powi(500) / 2.0;
            for i in 0..5 {
                assert!(eta.row(i).sum().abs() <= cap + 1e-15);
            }
            // Adjacent differences obey alpha rho^(k-1); the k = 0 draw obeys alpha / 2.
            assert!(eta.column(0).amax() <= 1.5 + 1e-12);
            for k in 1..=500 {
                assert!(eta.column(k).amax() <= 3.0 * 0.95f64.powi(k as i32 - 1) + 1e-12);
            }
        }
    }
}

#[test]
fn cancellation_meets_exact_convergence_condition() {
    let (model, x0) = build_consensus_benchmark_rational();
    let run = run_defended(&model, &x0, &adjacent(NoiseFamily::Uniform, 500), 7).unwrap();
    let applied = run.trajectory.eta.as_ref().unwrap().columns(0, 500).into_owned();
    let check = verify_convergence_condition(model.a(), &applied, 3.0, 0.95, 1e-6).unwrap();
    assert!(check.exact_ok);
    let constant = DMatrix::from_element(5, 500, 1e-3);
    assert!(!verify_convergence_condition(model.a(), &constant, 3.0, 0.95, 1e-6).unwrap().exact_ok);
}

#[test]
fn boundary_noise_hurts_topology_inference_most() {
    let (model, x0) = build_consensus_benchmark_rational();
    let k = 200;
    let error = |cfg: &DefenseConfig, seed: u64| {
        let run = run_defended(&model, &x0, cfg, seed).unwrap();
        let obs = ObservationStacks::from_sequence(run.trajectory.y.columns(0, k + 1).into_owned()).unwrap();
        infer_ols(&obs).unwrap().with_truth(model.a()).unwrap().frobenius_error.unwrap()
    };
    let med = |cfg: DefenseConfig| median(&(0..8).map(|s| error(&cfg, s)).collect::<Vec<_>>());
    let b = med(boundary(k));
    let u = med(adjacent(NoiseFamily::Uniform, k));
    let g = med(adjacent(NoiseFamily::Gaussian, k));
    assert!(b > u && b > g, "boundary {b} uniform {u} gaussian {g}");
}

/// A deterministic offset added to the exact one-step prediction never
/// raises the hit rate for symmetric unimodal noise.
#[test]
fn biased_prediction_is_never_more_accurate() {
    let runs = 100_000;
    for family in [NoiseFamily::Uniform, NoiseFamily::Gaussian, NoiseFamily::Laplace] {
        let spec = NoiseSpec::of_family(family, 1.0);
        let factory = |seed: u64| -> ndss_core::Result<DMatrix<f64>> {
            let x0 = 1.0;
            let w = spec.sample(&NoiseStream::new(seed, Channel::ETA), 0, 1)[0];
            Ok(DMatrix::from_row_slice(1, 2, &[x0, 0.8 * x0 + w]))
        };
        let hit = |bias: f64| {
            k_step_predictability(factory, move |h, _| DVector::from_element(1, 0.8 * h[(0, 0)] + bias), 1, 0.3, runs, 0)
                .unwrap()
                .p_eps
        };
        let p0 = hit(0.0);
        for bias in [0.05, 0.2, 0.5, 1.0] {
            let pb = hit(bias);
            let slack = 3.0 * (p0 * (1.0 - p0) / runs as f64).sqrt();
            assert!(pb <= p0 + slack, "{family:?} bias {bias}: {pb} > {p0}");
        }
    }
}

proptest! {
    #[test]
    fn boundary_output_is_a_vertex(seed in 0u64..10_000) {
        let (phi, y, bounds) = instance(seed);
        let eta = boundary_noise_step(&phi, &y, &bounds).unwrap();
        for i in 0..2 {
            prop_assert!(eta[i] == bounds[i].0 || eta[i] == bounds[i].1);
        }
    }

    #[test]
    fn telescoping_sum(seed in any::<u64>(), k_max in 1usize..80) {
        let (model, x0) = build_consensus_benchmark_rational();
        let run = run_defended(&model, &x0, &adjacent(NoiseFamily::Laplace, k_max), seed).unwrap();
        let eta = run.trajectory.eta.as_ref().unwrap();
        let xi = run.xi.as_ref().unwrap();
        for i in 0..5 {
            let total: f64 = eta.row(i).sum();
            prop_assert!((total - xi[(i, k_max)]).abs() < 1e-12);
            prop_assert!(xi[(i, k_max)].abs() <= 1.5 * 0.95f64.powi(k_max as i32) + 1e-15);
        }
    }
}

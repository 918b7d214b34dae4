#![allow(dead_code)]

use ndss_core::{Channel, DMatrix, DVector, NoiseSpec, NoiseStream};

/// Stream reserved for test fixtures, apart from the simulation channels.
const FIXTURE: Channel = Channel(100);

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64, step: u64) -> DMatrix<f64> {
    let v = NoiseSpec::gaussian(1.0).sample(&NoiseStream::new(seed, FIXTURE), step, rows * cols);
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn gaussian_vector(n: usize, seed: u64, step: u64) -> DVector<f64> {
    NoiseSpec::gaussian(1.0).sample(&NoiseStream::new(seed, FIXTURE), step, n)
}

/// Uniform integer in `lo..=hi` from the fixture stream.
pub fn pick(lo: usize, hi: usize, seed: u64, step: u64) -> usize {
    let u = NoiseStream::new(seed, FIXTURE).at(step).open01();
    lo + ((hi - lo + 1) as f64 * u) as usize
}

/// Random matrix rescaled to the given spectral radius.
pub fn stable_matrix(n: usize, radius: f64, seed: u64, step: u64) -> DMatrix<f64> {
    let a = gaussian_matrix(n, n, seed, step);
    let r = ndss_core::linalg::spectral_radius(&a);
    a * (radius / r)
}

pub fn median(v: &[f64]) -> f64 {
    ndss_core::montecarlo::median(v)
}

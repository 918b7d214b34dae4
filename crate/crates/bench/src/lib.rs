//! Shared fixtures for the benchmarks.

use ndss_core::{Channel, DMatrix, NoiseSpec, NoiseStream};

/// Deterministic standard normal matrix.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let v = NoiseSpec::gaussian(1.0).sample(&NoiseStream::new(seed, Channel(300)), 0, rows * cols);
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

//! Attacks on state secrecy: observability, least-squares initial-state
//! estimation, exhaustive sparse recovery, and the local estimability test.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::SystemModel;
use crate::error::{dim_err, Error, Result};
use crate::graph::Adjacency;
use crate::linalg::{self, serde_vec};

/// Singular values below this fraction of the largest make `M_o` rank deficient.
pub const RANK_TOL: f64 = 1e-9;

/// Default residual tolerance for exact sparse recovery.
pub const SPARSE_RESIDUAL_TOL: f64 = 1e-9;

/// Stacks `C, CA, ..., CA^(T-1)` vertically (Tm x n).
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
    let (m, n) = c.shape();
    let mut out = DMatrix::zeros(t * m, n);
    let mut block = c.clone();
    for k in 0..t {
        out.view_mut((k * m, 0), (m, n)).copy_from(&block);
        if k + 1 < t {
            block = &block * a;
        }
    }
    out
}

/// Concatenates `B, AB, ..., A^(T-1)B` horizontally (n x Tq).
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
    let (n, q) = b.shape();
    let mut out = DMatrix::zeros(n, t * q);
    let mut block = b.clone();
    for k in 0..t {
        out.view_mut((0, k * q), (n, q)).copy_from(&block);
        if k + 1 < t {
            block = a * &block;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ObservabilityBundle {
    pub m_o: DMatrix<f64>,
    /// Present only when the model has an input matrix.
    pub m_c: Option<DMatrix<f64>>,
    pub rank_mo: usize,
    pub rank_mc: usize,
    pub observable: bool,
    pub measurable: bool,
}

pub fn observability_bundle(model: &SystemModel, t: usize, tol: f64) -> Result<ObservabilityBundle> {
    if t == 0 {
        return Err(Error::InvalidArgument("horizon T must be at least 1".into()));
    }
    let n = model.n();
    let c = model.c();
    let m_o = observability_matrix(model.a(), &c, t);
    let rank_mo = linalg::numerical_rank(&m_o, tol);
    let m_c = model.b().map(|b| controllability_matrix(model.a(), b, t));
    let rank_mc = m_c.as_ref().map_or(0, |m| linalg::numerical_rank(m, tol));
    Ok(ObservabilityBundle {
        observable: rank_mo == n,
        measurable: linalg::numerical_rank(&c, tol) == n,
        m_o,
        m_c,
        rank_mo,
        rank_mc,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateEstimate {
    #[serde(with = "serde_vec")]
    pub x_hat: DVector<f64>,
    /// `(k_start, T)`: the estimate is of `x(k_start)` from `T` outputs.
    pub window: (usize, usize),
    pub residual_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_norm: Option<f64>,
}

impl StateEstimate {
    pub fn with_truth(mut self, truth: &DVector<f64>) -> Self {
        self.error_norm = Some((&self.x_hat - truth).norm());
        self
    }
}

/// Least-squares estimate of `x(k_start)` from the outputs
/// `y(k_start), ..., y(k_start + len - 1)` (columns of `outputs`) of an
/// autonomous system.
///
/// The window's own start is treated as the initial state, so the same code
/// serves for `x(0)` and for any later `x(k)`.
pub fn estimate_initial_state(
    model: &SystemModel,
    outputs: &DMatrix<f64>,
    k_start: usize,
    len: usize,
) -> Result<StateEstimate> {
    if outputs.nrows() != model.m() {
        return Err(dim_err(format!("outputs have {} rows, expected {}", outputs.nrows(), model.m())));
    }
    if len == 0 || k_start + len > outputs.ncols() {
        return Err(dim_err(format!(
            "window [{k_start}, {}) does not fit {} output columns",
            k_start + len,
            outputs.ncols()
        )));
    }
    let m_o = observability_matrix(model.a(), &model.c(), len);
    let y_stack = linalg::stack_columns(outputs, k_start, len);
    let (x_hat, residual_norm) = solve_full_rank(&m_o, &y_stack)?;
    Ok(StateEstimate { x_hat, window: (k_start, len), residual_norm, error_norm: None })
}

/// Solves `m_o x = y` in the least-squares sense, refusing rank-deficient `m_o`.
pub fn solve_full_rank(m_o: &DMatrix<f64>, y_stack: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let n = m_o.ncols();
    if m_o.nrows() != y_stack.len() {
        return Err(dim_err("observability matrix and stacked outputs disagree in length"));
    }
    if m_o.nrows() < n {
        let rank = linalg::numerical_rank(m_o, RANK_TOL);
        return Err(Error::RankDeficient { rank, n });
    }
    let svd = m_o.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min < RANK_TOL * max {
        let rank = svd.singular_values.iter().filter(|&&s| max > 0.0 && s >= RANK_TOL * max).count();
        return Err(Error::RankDeficient { rank, n });
    }
    let x = svd.solve(y_stack, 0.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let residual = (y_stack - m_o * &x).norm();
    Ok((x, residual))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseRecovery {
    #[serde(with = "serde_vec")]
    pub x_hat: DVector<f64>,
    pub support: Vec<usize>,
    pub residual_norm: f64,
    /// Exactly one minimal support fits and every `2q` columns of `M_o` are
    /// linearly independent, `q` being the recovered sparsity.
    pub unique: bool,
}

/// Minimum-cardinality solution of `m_o x = y_stack` found by enumerating
/// all supports of size at most `q_max`.
///
/// A support fits when its least-squares residual is at most
/// `residual_tol * max(1, |y|)`; among fitting supports of the minimal size
/// the one with the smallest residual is returned.
pub fn sparse_initial_state_with_tol(
    m_o: &DMatrix<f64>,
    y_stack: &DVector<f64>,
    q_max: usize,
    residual_tol: f64,
) -> Result<SparseRecovery> {
    let (rows, n) = m_o.shape();
    if rows != y_stack.len() {
        return Err(dim_err(format!("M_o has {rows} rows but y has {} entries", y_stack.len())));
    }
    let tol = residual_tol * y_stack.norm().max(1.0);
    let y = DMatrix::from_column_slice(rows, 1, y_stack.as_slice());

    for size in 0..=q_max.min(n) {
        let mut hits: Vec<(Vec<usize>, DVector<f64>, f64)> = Vec::new();
        for support in (0..n).combinations(size) {
            let (coef, residual) = if size == 0 {
                (DVector::zeros(0), y_stack.norm())
            } else {
                let sub = m_o.select_columns(&support);
                let (sol, _) = linalg::lstsq(&sub, &y, 1e-12);
                let coef = sol.column(0).into_owned();
                let residual = (y_stack - &sub * &coef).norm();
                (coef, residual)
            };
            if residual <= tol {
                hits.push((support, coef, residual));
            }
        }
        if hits.is_empty() {
            continue;
        }
        let count = hits.len();
        let (support, coef, residual) = hits
            .into_iter()
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .expect("nonempty");
        let mut x_hat = DVector::zeros(n);
        for (&idx, &c) in support.iter().zip(coef.iter()) {
            x_hat[idx] = c;
        }
        let unique = count == 1 && spark_condition(m_o, size);
        return Ok(SparseRecovery { x_hat, support, residual_norm: residual, unique });
    }
    Err(Error::NoSolution { q_max })
}

pub fn sparse_initial_state(m_o: &DMatrix<f64>, y_stack: &DVector<f64>, q_max: usize) -> Result<SparseRecovery> {
    sparse_initial_state_with_tol(m_o, y_stack, q_max, SPARSE_RESIDUAL_TOL)
}

/// True when every set of `min(2q, n)` columns of `m` has full column rank,
/// which makes a `q`-sparse solution of `m x = y` unique.
pub fn spark_condition(m: &DMatrix<f64>, q: usize) -> bool {
    let (rows, n) = m.shape();
    let k = (2 * q).min(n);
    if k == 0 {
        return true;
    }
    if k > rows {
        return false;
    }
    (0..n)
        .combinations(k)
        .all(|cols| linalg::numerical_rank(&m.select_columns(&cols), RANK_TOL) == k)
}

/// Necessary condition for node `j` to estimate the state of node `i` from
/// local information: `{i} ∪ N_i ⊆ {j} ∪ N_j`.
pub fn check_local_estimability(adjacency: &Adjacency, i: usize, j: usize) -> Result<bool> {
    adjacency.check(i)?;
    adjacency.check(j)?;
    Ok(adjacency.closed_neighborhood(i).is_subset(&adjacency.closed_neighborhood(j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, SystemModel};
    use crate::noise::NoiseSpec;

    fn jordan_model() -> SystemModel {
        SystemModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            None,
            Some(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])),
        )
        .unwrap()
    }

    #[test]
    fn bundle_examples() {
        let ident = SystemModel::autonomous(DMatrix::identity(2, 2)).unwrap();
        let b = observability_bundle(&ident, 1, 1e-10).unwrap();
        assert_eq!(b.m_o, DMatrix::identity(2, 2));
        assert!(b.observable && b.measurable);
        assert!(b.m_c.is_none());

        let b2 = observability_bundle(&jordan_model(), 2, 1e-10).unwrap();
        assert_eq!(b2.m_o, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        assert_eq!(b2.rank_mo, 2);
        assert!(b2.observable && !b2.measurable);

        let b1 = observability_bundle(&jordan_model(), 1, 1e-10).unwrap();
        assert_eq!(b1.rank_mo, 1);
        assert!(!b1.observable);
        assert!(observability_bundle(&jordan_model(), 0, 1e-10).is_err());
    }

    #[test]
    fn controllability_blocks() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let model = SystemModel::new(a.clone(), Some(b.clone()), None).unwrap();
        let bundle = observability_bundle(&model, 3, 1e-10).unwrap();
        let mc = bundle.m_c.unwrap();
        assert_eq!(mc.column(1).into_owned(), &a * &b);
        assert_eq!(mc.column(2).into_owned(), &a * &a * &b);
        assert_eq!(bundle.rank_mc, 2);
    }

    #[test]
    fn identity_noise_free_window() {
        let model = SystemModel::autonomous(DMatrix::identity(2, 2)).unwrap();
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let tr = simulate(&model, &x0, 3, &NoiseSpec::zero(), &NoiseSpec::zero(), None, 0).unwrap();
        let est = estimate_initial_state(&model, &tr.y, 0, 3).unwrap();
        assert!((est.x_hat - x0).norm() < 1e-14);
    }

    #[test]
    fn jordan_window_matches_direct_solve() {
        // y_stack = [1, 3]; solving [[1,0],[1,1]] x = [1,3] by hand gives [1, 2].
        let model = jordan_model();
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let tr = simulate(&model, &x0, 2, &NoiseSpec::zero(), &NoiseSpec::zero(), None, 0).unwrap();
        assert_eq!(linalg::stack_columns(&tr.y, 0, 2).as_slice(), &[1.0, 3.0]);
        let est = estimate_initial_state(&model, &tr.y, 0, 2).unwrap();
        assert!((est.x_hat - x0).norm() < 1e-14);
        assert!(est.residual_norm < 1e-14);
    }

    #[test]
    fn later_window_estimates_later_state() {
        let model = jordan_model();
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let tr = simulate(&model, &x0, 6, &NoiseSpec::zero(), &NoiseSpec::zero(), None, 0).unwrap();
        let est = estimate_initial_state(&model, &tr.y, 3, 3).unwrap();
        assert!((est.x_hat - tr.state(3)).norm() < 1e-12);
    }

    #[test]
    fn short_window_is_rank_deficient() {
        let model = jordan_model();
        let y = DMatrix::from_row_slice(1, 3, &[1.0, 3.0, 5.0]);
        match estimate_initial_state(&model, &y, 0, 1) {
            Err(Error::RankDeficient { rank: 1, n: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(estimate_initial_state(&model, &y, 2, 2).is_err());
    }

    #[test]
    fn sparse_zero_observation() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 2.0, 0.7, -0.4, 1.1]);
        let r = sparse_initial_state(&m, &DVector::zeros(3), 2).unwrap();
        assert_eq!(r.x_hat, DVector::zeros(3));
        assert!(r.unique && r.support.is_empty());
    }

    #[test]
    fn sparse_no_solution() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert_eq!(sparse_initial_state(&m, &y, 2).unwrap_err(), Error::NoSolution { q_max: 2 });
    }

    #[test]
    fn local_estimability_examples() {
        let complete = Adjacency::complete(4);
        for i in 0..4 {
            for j in 0..4 {
                assert!(check_local_estimability(&complete, i, j).unwrap());
            }
        }
        let path = Adjacency::path(3);
        assert!(check_local_estimability(&path, 0, 1).unwrap());
        assert!(!check_local_estimability(&path, 1, 0).unwrap());
        assert_eq!(check_local_estimability(&path, 0, 3).unwrap_err(), Error::UnknownNode(3));
    }
}

//! Attacks through known excitation: Markov-parameter least squares,
//! Ho-Kalman realization, and state-feedback gain regression.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, serde_rows};

/// Relative singular-value threshold for the excitation and Hankel rank checks.
pub const SYSID_RANK_TOL: f64 = 1e-10;

/// `[CB, CAB, ..., CA^(T-1)B]`, m x Tq.
pub fn markov_parameters(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
    let (m, q) = (c.nrows(), b.ncols());
    let mut g = DMatrix::zeros(m, t * q);
    let mut ab = b.clone();
    for k in 0..t {
        g.view_mut((0, k * q), (m, q)).copy_from(&(c * &ab));
        ab = a * ab;
    }
    g
}

/// Block upper-triangular Toeplitz matrix of the inputs, Tq x T: block
/// `(i, j)` is `u(j - i)` for `j >= i` and zero below the diagonal.
pub fn input_toeplitz(inputs: &DMatrix<f64>) -> DMatrix<f64> {
    let (q, t) = inputs.shape();
    let mut u = DMatrix::zeros(t * q, t);
    for i in 0..t {
        for j in i..t {
            u.view_mut((i * q, j), (q, 1)).copy_from(&inputs.column(j - i));
        }
    }
    u
}

/// Input/output pair aligned for [`estimate_markov`]: inputs `u(0..T)` and
/// outputs `y(1..=T)`, so that output column `j` is
/// `sum_k G_k u(j - k)` for a zero initial state.
pub fn markov_data(tr: &Trajectory) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let u = tr.u.as_ref().ok_or_else(|| dim_err("trajectory has no inputs"))?;
    let t = u.ncols();
    Ok((u.clone(), tr.y.columns(1, t).into_owned()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovEstimate {
    #[serde(rename = "G_hat", with = "serde_rows")]
    pub g_hat: DMatrix<f64>,
    #[serde(rename = "T")]
    pub t: usize,
    pub q: usize,
    pub residual_norm: f64,
}

impl MarkovEstimate {
    pub fn block(&self, k: usize) -> DMatrix<f64> {
        self.g_hat.columns(k * self.q, self.q).into_owned()
    }

    pub fn m(&self) -> usize {
        self.g_hat.nrows()
    }
}

/// Solves `min_G |Y - G U_T|_F` for one experiment.
pub fn estimate_markov(inputs: &DMatrix<f64>, outputs: &DMatrix<f64>) -> Result<MarkovEstimate> {
    estimate_markov_multi(&[(inputs.clone(), outputs.clone())])
}

/// Same problem pooled over several experiments of equal horizon; with
/// `q > 1` inputs a single run cannot excite all `Tq` unknowns per row.
pub fn estimate_markov_multi(experiments: &[(DMatrix<f64>, DMatrix<f64>)]) -> Result<MarkovEstimate> {
    let (first_u, first_y) = experiments.first().ok_or_else(|| dim_err("no experiments supplied"))?;
    let (q, t) = first_u.shape();
    let m = first_y.nrows();
    if q == 0 || t == 0 {
        return Err(dim_err("inputs must be nonempty"));
    }
    for (u, y) in experiments {
        if u.shape() != (q, t) || y.shape() != (m, t) {
            return Err(dim_err("experiments must share input/output shapes q x T and m x T"));
        }
    }
    let blocks: Vec<DMatrix<f64>> = experiments.iter().map(|(u, _)| input_toeplitz(u)).collect();
    let cols = t * experiments.len();
    let mut u_all = DMatrix::zeros(t * q, cols);
    let mut y_all = DMatrix::zeros(m, cols);
    for (e, ((_, y), ut)) in experiments.iter().zip(&blocks).enumerate() {
        u_all.columns_mut(e * t, t).copy_from(ut);
        y_all.columns_mut(e * t, t).copy_from(y);
    }
    let required = t * q;
    let (gt, rank) = linalg::lstsq(&u_all.transpose(), &y_all.transpose(), SYSID_RANK_TOL);
    if rank < required {
        return Err(Error::NotPersistentlyExciting { rank, required });
    }
    let g_hat = gt.transpose();
    let residual_norm = (&y_all - &g_hat * &u_all).norm();
    Ok(MarkovEstimate { g_hat, t, q, residual_norm })
}

/// State-space realization recovered up to an unknown similarity transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizedModel {
    #[serde(with = "serde_rows")]
    pub a_t: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub b_t: DMatrix<f64>,
    #[serde(with = "serde_rows")]
    pub c_t: DMatrix<f64>,
    pub n_assumed: usize,
    pub hankel_singular_values: Vec<f64>,
}

impl RealizedModel {
    /// Eigenvalues of the realized transition matrix, sorted.
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        linalg::eigenvalues(&self.a_t)
    }

    pub fn markov_parameters(&self, t: usize) -> DMatrix<f64> {
        markov_parameters(&self.a_t, &self.b_t, &self.c_t, t)
    }

    /// Zero-initial-state, noise-free outputs `y(1..=T)` for inputs `u(0..T)`.
    pub fn respond(&self, inputs: &DMatrix<f64>) -> DMatrix<f64> {
        respond(&self.a_t, &self.b_t, &self.c_t, inputs)
    }
}

/// Outputs `y(1..=T)` of `(A, B, C)` from a zero state under `inputs`.
pub fn respond(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, inputs: &DMatrix<f64>) -> DMatrix<f64> {
    let t = inputs.ncols();
    let mut x = DVector::zeros(a.nrows());
    let mut y = DMatrix::zeros(c.nrows(), t);
    for k in 0..t {
        x = a * x + b * inputs.column(k);
        y.set_column(k, &(c * &x));
    }
    y
}

/// Ho-Kalman realization of order `n_assumed` from Markov parameters.
///
/// The block Hankel matrix uses `ceil((T-1)/2)` block rows; its rank-`n`
/// truncated SVD gives balanced observability and controllability factors,
/// from which `C` (first block row), `B` (first block column) and `A`
/// (shift of the Hankel matrix) are read off.
pub fn ho_kalman(markov: &MarkovEstimate, n_assumed: usize) -> Result<RealizedModel> {
    let t = markov.t;
    let (m, q) = (markov.m(), markov.q);
    if n_assumed == 0 {
        return Err(Error::InvalidArgument("assumed order must be positive".into()));
    }
    if t < 2 * n_assumed + 1 {
        return Err(Error::InvalidArgument(format!(
            "horizon T = {t} is too short for order {n_assumed}; need T >= {}",
            2 * n_assumed + 1
        )));
    }
    let rows = t / 2; // ceil((T-1)/2)
    let cols = t - rows;
    let mut h = DMatrix::zeros(rows * m, cols * q);
    let mut h_shift = DMatrix::zeros(rows * m, cols * q);
    for i in 0..rows {
        for j in 0..cols {
            h.view_mut((i * m, j * q), (m, q)).copy_from(&markov.block(i + j));
            if i + j + 1 < t {
                h_shift.view_mut((i * m, j * q), (m, q)).copy_from(&markov.block(i + j + 1));
            }
        }
    }
    // The last anti-diagonal of the shifted Hankel would need G_T; drop the
    // final block column from both matrices so every entry is known.
    let h = h.columns(0, (cols - 1) * q).into_owned();
    let h_shift = h_shift.columns(0, (cols - 1) * q).into_owned();

    let svd = h.clone().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let top = sv.first().cloned().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| top > 0.0 && s >= SYSID_RANK_TOL * top).count();
    if rank < n_assumed {
        return Err(Error::HankelRankDeficient { rank, n_assumed });
    }
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let keep = &order[..n_assumed];
    let u_n = u.select_columns(keep);
    let vt_n = vt.select_rows(keep);
    let sqrt_s = DVector::from_iterator(n_assumed, sv[..n_assumed].iter().map(|s| s.sqrt()));
    let inv_sqrt_s = sqrt_s.map(|s| 1.0 / s);

    let obs = DMatrix::from_fn(u_n.nrows(), n_assumed, |i, j| u_n[(i, j)] * sqrt_s[j]);
    let ctrl = DMatrix::from_fn(n_assumed, vt_n.ncols(), |i, j| sqrt_s[i] * vt_n[(i, j)]);
    let left = DMatrix::from_fn(n_assumed, u_n.nrows(), |i, j| inv_sqrt_s[i] * u_n[(j, i)]);
    let right = DMatrix::from_fn(vt_n.ncols(), n_assumed, |i, j| vt_n[(j, i)] * inv_sqrt_s[j]);

    let a_t = &left * &h_shift * &right;
    let c_t = obs.rows(0, m).into_owned();
    let b_t = ctrl.columns(0, q).into_owned();
    Ok(RealizedModel { a_t, b_t, c_t, n_assumed, hankel_singular_values: sv })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackGain {
    #[serde(rename = "K_hat", with = "serde_rows")]
    pub k_hat: DMatrix<f64>,
    pub residual_norm: f64,
}

/// Least-squares regression of `-u(k)` on `x(k)`: the static gain `K` with
/// `u(k) ≈ -K x(k)`.
pub fn infer_feedback_gain(states: &DMatrix<f64>, inputs: &DMatrix<f64>) -> Result<FeedbackGain> {
    let (n, t) = states.shape();
    if inputs.ncols() != t {
        return Err(dim_err(format!("{} input columns for {t} state columns", inputs.ncols())));
    }
    let rank = linalg::numerical_rank(states, SYSID_RANK_TOL);
    if rank < n {
        return Err(Error::RankDeficientStates { rank, n });
    }
    let (kt, _) = linalg::lstsq(&states.transpose(), &(-inputs.transpose()), SYSID_RANK_TOL);
    let k_hat = kt.transpose();
    let residual_norm = (inputs + &k_hat * states).norm();
    Ok(FeedbackGain { k_hat, residual_norm })
}

//! Attacks on structure secrecy: estimating the interaction matrix from
//! observed trajectories.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{dim_err, Error, Result};
use crate::graph::Adjacency;
use crate::linalg::{self, serde_rows};

/// Reciprocal-condition threshold below which a Gram matrix counts as singular.
pub const GRAM_RCOND_TOL: f64 = 1e-10;

/// One observed sequence `y(0), ..., y(T)`, viewed as the pair
/// `Y- = [y(0) .. y(T-1)]`, `Y+ = [y(1) .. y(T)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStacks {
    seq: DMatrix<f64>,
}

impl ObservationStacks {
    pub fn from_sequence(seq: DMatrix<f64>) -> Result<Self> {
        if seq.ncols() < 2 {
            return Err(dim_err("at least two observations are needed to form shifted stacks"));
        }
        Ok(ObservationStacks { seq })
    }

    pub fn from_trajectory(tr: &Trajectory) -> Result<Self> {
        Self::from_sequence(tr.y.clone())
    }

    /// The first `t + 1` observations only.
    pub fn prefix(&self, t: usize) -> Result<Self> {
        if t + 1 > self.seq.ncols() {
            return Err(dim_err(format!("prefix T = {t} exceeds available horizon {}", self.t())));
        }
        Self::from_sequence(self.seq.columns(0, t + 1).into_owned())
    }

    /// Restriction to the given rows (node subset), in the given order.
    pub fn rows(&self, nodes: &[usize]) -> Result<Self> {
        if let Some(&bad) = nodes.iter().find(|&&i| i >= self.n()) {
            return Err(Error::UnknownNode(bad));
        }
        Self::from_sequence(self.seq.select_rows(nodes))
    }

    pub fn n(&self) -> usize {
        self.seq.nrows()
    }

    pub fn t(&self) -> usize {
        self.seq.ncols() - 1
    }

    pub fn sequence(&self) -> &DMatrix<f64> {
        &self.seq
    }

    pub fn y_minus(&self) -> DMatrix<f64> {
        self.seq.columns(0, self.t()).into_owned()
    }

    pub fn y_plus(&self) -> DMatrix<f64> {
        self.seq.columns(1, self.t()).into_owned()
    }
}

/// `Sigma0 = Y- Y-ᵀ / T` and `Sigma1 = Y+ Y-ᵀ / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub sigma0: DMatrix<f64>,
    pub sigma1: DMatrix<f64>,
    pub t: usize,
}

impl CovariancePair {
    pub fn from_stacks(obs: &ObservationStacks) -> Self {
        let t = obs.t();
        let minus = obs.seq.columns(0, t);
        let plus = obs.seq.columns(1, t);
        let tf = t as f64;
        CovariancePair {
            sigma0: &minus * minus.transpose() / tf,
            sigma1: &plus * minus.transpose() / tf,
            t,
        }
    }

    /// Least-squares estimate `Sigma1 Sigma0^{-1}`.
    pub fn ols(&self) -> Result<DMatrix<f64>> {
        linalg::right_divide(&self.sigma1, &self.sigma0, GRAM_RCOND_TOL)
            .map_err(|rcond| Error::SingularGram { rcond })
    }

    /// Observation-noise-corrected estimate `Sigma1 (Sigma0 - sigma_v^2 I)^{-1}`.
    pub fn causality(&self, sigma_v_sq: f64) -> Result<DMatrix<f64>> {
        let n = self.sigma0.nrows();
        let shifted = &self.sigma0 - DMatrix::identity(n, n) * sigma_v_sq;
        linalg::right_divide(&self.sigma1, &shifted, GRAM_RCOND_TOL)
            .map_err(|rcond| Error::SingularShiftedGram { rcond })
    }
}

/// Single-pass accumulator of the lag-0 and lag-1 sums, for evaluating
/// estimators on growing prefixes of one long run.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    s0: DMatrix<f64>,
    s1: DMatrix<f64>,
    t: usize,
    last: Option<DVector<f64>>,
}

impl CovarianceAccumulator {
    pub fn new(n: usize) -> Self {
        CovarianceAccumulator { s0: DMatrix::zeros(n, n), s1: DMatrix::zeros(n, n), t: 0, last: None }
    }

    /// Appends the next observation `y(t)`.
    pub fn push(&mut self, y: &DVector<f64>) {
        if let Some(prev) = self.last.take() {
            self.s0.ger(1.0, &prev, &prev, 1.0);
            self.s1.ger(1.0, y, &prev, 1.0);
            self.t += 1;
        }
        self.last = Some(y.clone());
    }

    /// Number of transitions seen so far.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn covariances(&self) -> Option<CovariancePair> {
        (self.t > 0).then(|| {
            let tf = self.t as f64;
            CovariancePair { sigma0: &self.s0 / tf, sigma1: &self.s1 / tf, t: self.t }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMethod {
    Ols,
    Causality,
    Granger,
    LocalTruncated,
    LocalHf,
}

impl TopologyMethod {
    pub fn name(self) -> &'static str {
        match self {
            TopologyMethod::Ols => "ols",
            TopologyMethod::Causality => "causality",
            TopologyMethod::Granger => "granger",
            TopologyMethod::LocalTruncated => "local_truncated",
            TopologyMethod::LocalHf => "local_hf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyEstimate {
    pub method: TopologyMethod,
    #[serde(rename = "A_hat", with = "serde_rows")]
    pub a_hat: DMatrix<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frobenius_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_error: Option<f64>,
    #[serde(rename = "T")]
    pub t: usize,
}

impl TopologyEstimate {
    pub fn new(method: TopologyMethod, a_hat: DMatrix<f64>, t: usize) -> Self {
        TopologyEstimate { method, a_hat, frobenius_error: None, spectral_error: None, t }
    }

    /// Fills the error fields against the matching block of the ground truth.
    pub fn with_truth(mut self, truth: &DMatrix<f64>) -> Result<Self> {
        if truth.shape() != self.a_hat.shape() {
            return Err(dim_err("ground truth and estimate shapes differ"));
        }
        let diff = &self.a_hat - truth;
        self.frobenius_error = Some(diff.norm());
        self.spectral_error = Some(linalg::spectral_norm(&diff));
        Ok(self)
    }
}

/// Ordinary least squares `Y+ Y-ᵀ (Y- Y-ᵀ)^{-1}`.
pub fn infer_ols(obs: &ObservationStacks) -> Result<TopologyEstimate> {
    let cov = CovariancePair::from_stacks(obs);
    Ok(TopologyEstimate::new(TopologyMethod::Ols, cov.ols()?, obs.t()))
}

/// Causality-corrected estimator with known observation-noise variance.
/// With `sigma_v_sq = 0` it reproduces [`infer_ols`] bit for bit.
pub fn infer_causality(obs: &ObservationStacks, sigma_v_sq: f64) -> Result<TopologyEstimate> {
    if !(sigma_v_sq >= 0.0) {
        return Err(Error::InvalidArgument("sigma_v_sq must be nonnegative".into()));
    }
    let cov = CovariancePair::from_stacks(obs);
    Ok(TopologyEstimate::new(TopologyMethod::Causality, cov.causality(sigma_v_sq)?, obs.t()))
}

/// Ridge regression of `Y+` on `Y-` with weight `beta`:
/// `Y+ Y-ᵀ (Y- Y-ᵀ + beta I)^{-1}`. A negative weight is allowed; the
/// causality estimator is the case `beta = -T sigma_v^2`.
pub fn ridge_estimate(obs: &ObservationStacks, beta: f64) -> Result<DMatrix<f64>> {
    let minus = obs.y_minus();
    let n = obs.n();
    let gram = &minus * minus.transpose() + DMatrix::identity(n, n) * beta;
    linalg::right_divide(&(obs.y_plus() * minus.transpose()), &gram, GRAM_RCOND_TOL)
        .map_err(|rcond| Error::SingularShiftedGram { rcond })
}

/// Multi-round estimator `R1(t) R0(t-1)^{-1}` from ensemble averages over
/// rounds, at the largest time index `t` available in every round.
pub fn infer_granger(rounds: &[ObservationStacks]) -> Result<TopologyEstimate> {
    if rounds.len() < 2 {
        return Err(Error::InvalidArgument("at least two observation rounds are required".into()));
    }
    let n = rounds[0].n();
    if rounds.iter().any(|r| r.n() != n) {
        return Err(dim_err("rounds observe different numbers of nodes"));
    }
    let t = rounds.iter().map(ObservationStacks::t).min().expect("nonempty");
    let mut r0 = DMatrix::zeros(n, n);
    let mut r1 = DMatrix::zeros(n, n);
    for round in rounds {
        let now = round.seq.column(t);
        let before = round.seq.column(t - 1);
        r0.ger(1.0, &before, &before, 1.0);
        r1.ger(1.0, &now, &before, 1.0);
    }
    let count = rounds.len() as f64;
    r0 /= count;
    r1 /= count;
    let a_hat = linalg::right_divide(&r1, &r0, GRAM_RCOND_TOL).map_err(|rcond| Error::SingularEnsemble { rcond })?;
    Ok(TopologyEstimate::new(TopologyMethod::Granger, a_hat, t))
}

#[derive(Debug, Clone)]
pub struct LocalEstimate {
    /// Observed nodes, the row/column labels of `truncated`.
    pub v_f: Vec<usize>,
    /// Truncated least squares on the observed block, `|F| x |F|`.
    pub truncated: TopologyEstimate,
    /// Rows of `V_H` against columns of `V_F`, `|H| x |F|`.
    pub hf: Option<TopologyEstimate>,
    pub v_h: Option<Vec<usize>>,
}

impl LocalEstimate {
    pub fn with_truth(mut self, a: &DMatrix<f64>) -> Result<Self> {
        let ff = a.select_rows(&self.v_f).select_columns(&self.v_f);
        self.truncated = self.truncated.with_truth(&ff)?;
        if let (Some(hf), Some(v_h)) = (self.hf.take(), self.v_h.as_ref()) {
            let block = a.select_rows(v_h).select_columns(&self.v_f);
            self.hf = Some(hf.with_truth(&block)?);
        }
        Ok(self)
    }
}

/// Local estimators from observations of the node subset `v_f` only.
///
/// `obs_f` holds the rows of `v_f`, in that order. When `v_h` is supplied,
/// every in-neighbor of its nodes must be observed for the row-block
/// estimate to be unaffected by the hidden part of the network.
pub fn infer_local(
    obs_f: &ObservationStacks,
    v_f: &[usize],
    v_h: Option<&[usize]>,
) -> Result<LocalEstimate> {
    if obs_f.n() != v_f.len() {
        return Err(dim_err(format!("{} observed rows for {} listed nodes", obs_f.n(), v_f.len())));
    }
    let cov = CovariancePair::from_stacks(obs_f);
    let truncated = TopologyEstimate::new(TopologyMethod::LocalTruncated, cov.ols()?, obs_f.t());
    let hf = match v_h {
        None => None,
        Some([]) => return Err(Error::EmptyH),
        Some(h) => {
            let positions = h
                .iter()
                .map(|node| {
                    v_f.iter()
                        .position(|f| f == node)
                        .ok_or_else(|| Error::InvalidArgument(format!("node {node} of V_H is not in V_F")))
                })
                .collect::<Result<Vec<_>>>()?;
            let sigma1_h = cov.sigma1.select_rows(&positions);
            let a_hf = linalg::right_divide(&sigma1_h, &cov.sigma0, GRAM_RCOND_TOL)
                .map_err(|rcond| Error::SingularGram { rcond })?;
            Some(TopologyEstimate::new(TopologyMethod::LocalHf, a_hf, obs_f.t()))
        }
    };
    Ok(LocalEstimate { v_f: v_f.to_vec(), truncated, hf, v_h: v_h.map(<[usize]>::to_vec) })
}

/// Observed nodes whose in-neighbors are all observed.
///
/// Needs the true graph, so it belongs to evaluation code; an attacker has
/// to choose `V_H` from prior knowledge.
pub fn compute_v_h(adjacency: &Adjacency, v_f: &[usize]) -> Result<Vec<usize>> {
    for &i in v_f {
        adjacency.check(i)?;
    }
    let observed: BTreeSet<usize> = v_f.iter().cloned().collect();
    Ok(v_f.iter().cloned().filter(|&i| adjacency.neighbors(i).is_subset(&observed)).collect())
}

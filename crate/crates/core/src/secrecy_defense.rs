//! Countermeasures: perturbed sharing, adjacent noise cancellation,
//! boundary noise against topology inference, and checks on the injected
//! noise sequence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemModel, Trajectory};
use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::noise::{Channel, NoiseFamily, NoiseSpec, NoiseStream};
use crate::topology_inference::GRAM_RCOND_TOL;

/// Exhaustive vertex enumeration is used up to this many nodes.
pub const EXHAUSTIVE_MAX_NODES: usize = 12;

/// Restarts of the coordinate-ascent vertex search above
/// [`EXHAUSTIVE_MAX_NODES`].
pub const ASCENT_RESTARTS: usize = 5;

/// Largest state increment at the horizon for which a run counts as converged.
pub const CONVERGED_STEP_TOL: f64 = 1e-6;

/// How the injected input `eta` is generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaDesigner {
    None,
    /// `eta(k) = xi(k) - xi(k-1)` with `xi(k)` drawn from `family` and
    /// mapped into `[-alpha rho^k / 2, alpha rho^k / 2]`.
    #[serde(rename = "adjacent")]
    AdjacentCancellation { alpha: f64, rho: f64, family: NoiseFamily },
    /// Per-step vertex choice maximizing the least-squares topology error.
    Boundary { alpha: f64, rho: f64 },
}

impl EtaDesigner {
    pub fn name(&self) -> &'static str {
        match self {
            EtaDesigner::None => "none",
            EtaDesigner::AdjacentCancellation { .. } => "adjacent",
            EtaDesigner::Boundary { .. } => "boundary",
        }
    }

    fn decay(&self) -> Option<(f64, f64)> {
        match *self {
            EtaDesigner::None => None,
            EtaDesigner::AdjacentCancellation { alpha, rho, .. } | EtaDesigner::Boundary { alpha, rho } => {
                Some((alpha, rho))
            }
        }
    }

    pub fn violations(&self, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        if let Some((alpha, rho)) = self.decay() {
            if !(alpha.is_finite() && alpha > 0.0) {
                out.push(format!("{name}.alpha must be positive"));
            }
            if !(0.0..1.0).contains(&rho) {
                out.push("rho must lie in [0,1)".to_string());
            }
        }
        if let EtaDesigner::AdjacentCancellation { family: NoiseFamily::Zero, .. } = self {
            out.push(format!("{name}.family must be gaussian, uniform or laplace"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    #[serde(default)]
    pub theta: NoiseSpec,
    pub eta: EtaDesigner,
    pub k_max: usize,
}

impl DefenseConfig {
    pub fn violations(&self, n: usize) -> Vec<String> {
        let mut out = self.theta.violations("defense.theta", Some(n));
        out.extend(self.eta.violations("defense.eta"));
        if self.k_max == 0 {
            out.push("defense.k_max must be positive".to_string());
        }
        out
    }
}

/// Result of [`run_defended`].
///
/// `trajectory.x` holds `x(0..=k_max)`, `trajectory.y` the shared values
/// `x(k) + theta(k)`, `trajectory.v` and `trajectory.theta` the perturbations.
/// `trajectory.eta` and `xi` have `k_max + 1` columns: the last one is the
/// injection pending for the step after the horizon, drawn as the final
/// iteration of the cancellation loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DefendedRun {
    pub trajectory: Trajectory,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "linalg::serde_rows::option")]
    pub xi: Option<DMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged_value: Option<Vec<f64>>,
    /// `|x(k_max) - mean(x0) 1|_inf`.
    pub deviation: f64,
}

/// Maps a uniform draw to `[-1, 1]`: uniform draws directly, Gaussian and
/// Laplace draws truncated at three standard deviations and rescaled.
fn unit_interval_draw(family: NoiseFamily, u: f64) -> f64 {
    match family {
        NoiseFamily::Zero => 0.0,
        NoiseFamily::Uniform => 2.0 * u - 1.0,
        f => NoiseSpec::of_family(f, 1.0).with_bound(3.0).centered_from_uniform(u) / 3.0,
    }
}

/// Vertex interval for the boundary design at step `k`: the noise stays
/// within `alpha rho^k` and the running sum within `alpha rho^k / 2`. If the
/// two constraints do not intersect (possible only for `rho < 1/3`), the
/// running-sum constraint alone is used.
fn boundary_bounds(alpha: f64, rho: f64, k: usize, running: f64) -> (f64, f64) {
    let cap = alpha * rho.powi(k as i32);
    let lo = (-cap).max(-cap / 2.0 - running);
    let hi = cap.min(cap / 2.0 - running);
    if lo <= hi {
        (lo, hi)
    } else {
        (-cap / 2.0 - running, cap / 2.0 - running)
    }
}

/// Runs `x(k+1) = A (x(k) + theta(k)) + eta(k)` for `cfg.k_max` steps.
pub fn run_defended(model: &SystemModel, x0: &DVector<f64>, cfg: &DefenseConfig, seed: u64) -> Result<DefendedRun> {
    let n = model.n();
    if x0.len() != n {
        return Err(dim_err(format!("x0 has length {}, expected {n}", x0.len())));
    }
    if model.b().is_some() {
        return Err(Error::InvalidArgument("defended runs take no external input channel".into()));
    }
    let problems = cfg.violations(n);
    if !problems.is_empty() {
        return Err(Error::InvalidArgument(problems.join("; ")));
    }
    let k_max = cfg.k_max;
    let a = model.a();
    let theta_stream = NoiseStream::new(seed, Channel::THETA);
    let eta_stream = NoiseStream::new(seed, Channel::ETA);

    let mut x = DMatrix::zeros(n, k_max + 1);
    let mut theta = DMatrix::zeros(n, k_max + 1);
    let mut eta = DMatrix::zeros(n, k_max + 1);
    let mut xi = DMatrix::zeros(n, k_max + 1);
    let mut xi_prev = DVector::zeros(n);
    x.set_column(0, x0);

    for k in 0..=k_max {
        let xk = x.column(k).into_owned();
        let th = cfg.theta.sample(&theta_stream, k as u64, n);
        theta.set_column(k, &th);
        let shared = &xk + &th;

        let eta_k = match cfg.eta {
            EtaDesigner::None => DVector::zeros(n),
            EtaDesigner::AdjacentCancellation { alpha, rho, family } => {
                let half = alpha * rho.powi(k as i32) / 2.0;
                let mut rng = eta_stream.at(k as u64);
                let xi_k = DVector::from_fn(n, |_, _| half * unit_interval_draw(family, rng.open01()));
                let e = &xi_k - &xi_prev;
                xi_prev = xi_k;
                e
            }
            EtaDesigner::Boundary { alpha, rho } => {
                let bounds: Vec<(f64, f64)> =
                    (0..n).map(|i| boundary_bounds(alpha, rho, k, xi_prev[i])).collect();
                // Shared values observed so far, y(0..=k).
                let y_minus = DMatrix::from_fn(n, k + 1, |i, j| x[(i, j)] + theta[(i, j)]);
                let phi_prev = eta.columns(0, k).into_owned();
                let e = match boundary_noise_step(&phi_prev, &y_minus, &bounds) {
                    Ok(e) => e,
                    // Before the Gram matrix has full rank no estimate exists
                    // yet; take the larger-magnitude endpoint.
                    Err(Error::SingularGram { .. }) => DVector::from_fn(n, |i, _| {
                        let (lo, hi) = bounds[i];
                        if lo.abs() > hi.abs() {
                            lo
                        } else {
                            hi
                        }
                    }),
                    Err(e) => return Err(e),
                };
                xi_prev += &e;
                e
            }
        };
        eta.set_column(k, &eta_k);
        xi.set_column(k, &xi_prev);
        if k < k_max {
            x.set_column(k + 1, &(a * shared + eta_k));
        }
    }

    let last = x.column(k_max).into_owned();
    let x_c = x0.mean();
    let deviation = last.iter().map(|v| (v - x_c).abs()).fold(0.0, f64::max);
    let step = if k_max > 0 { (&last - x.column(k_max - 1)).amax() } else { f64::INFINITY };
    let converged_value = (step < CONVERGED_STEP_TOL).then(|| last.iter().cloned().collect());
    let y = &x + &theta;
    let has_xi = !matches!(cfg.eta, EtaDesigner::None);
    let trajectory =
        Trajectory { x, y, u: None, omega: None, v: Some(theta.clone()), theta: Some(theta), eta: Some(eta), seed };
    Ok(DefendedRun { trajectory, xi: has_xi.then_some(xi), converged_value, deviation })
}

/// Least-squares topology error caused by the noise history:
/// `|Phi Y-ᵀ (Y- Y-ᵀ)^{-1}|_F^2` for `Phi` and `Y-` of equal width.
pub fn p5_objective(phi: &DMatrix<f64>, y_minus: &DMatrix<f64>) -> Result<f64> {
    if phi.shape() != y_minus.shape() {
        return Err(dim_err(format!("noise history {:?} vs observations {:?}", phi.shape(), y_minus.shape())));
    }
    let gram = y_minus * y_minus.transpose();
    let e = linalg::right_divide(&(phi * y_minus.transpose()), &gram, GRAM_RCOND_TOL)
        .map_err(|rcond| Error::SingularGram { rcond })?;
    Ok(e.norm_squared())
}

/// Chooses `eta(k)` at a vertex of the per-node intervals so as to maximize
/// [`p5_objective`] of `[phi_prev, eta(k)]` against `y_minus`.
///
/// `phi_prev` holds `eta(0..k)` (n x k) and `y_minus` holds `y(0..=k)`
/// (n x (k+1)). Up to [`EXHAUSTIVE_MAX_NODES`] nodes every sign pattern is
/// scored; above that a coordinate ascent with [`ASCENT_RESTARTS`] starts is
/// used. The objective is a sum of one convex quadratic per node, so both
/// searches return the global optimum.
pub fn boundary_noise_step(
    phi_prev: &DMatrix<f64>,
    y_minus: &DMatrix<f64>,
    bounds: &[(f64, f64)],
) -> Result<DVector<f64>> {
    let n = y_minus.nrows();
    let k = phi_prev.ncols();
    if phi_prev.nrows() != n || y_minus.ncols() != k + 1 || bounds.len() != n {
        return Err(dim_err(format!(
            "expected phi n x k, y n x (k+1) and n bounds; got {:?}, {:?}, {}",
            phi_prev.shape(),
            y_minus.shape(),
            bounds.len()
        )));
    }
    if let Some(i) = bounds.iter().position(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::InvalidArgument(format!("bound interval {i} is empty")));
    }
    let gram = y_minus * y_minus.transpose();
    let rc = linalg::rcond(&gram);
    if !(rc >= GRAM_RCOND_TOL) {
        return Err(Error::SingularGram { rcond: rc });
    }
    let gram_inv = gram.try_inverse().ok_or(Error::SingularGram { rcond: 0.0 })?;
    let s = phi_prev * y_minus.columns(0, k).transpose() * &gram_inv;
    let p = y_minus.column(k).transpose() * &gram_inv;

    // Row i of the error matrix is s_i + eta_i p.
    let score = |i: usize, v: f64| (s.row(i) + p.scale(v)).norm_squared();
    let values: Vec<[f64; 2]> =
        (0..n).map(|i| [score(i, bounds[i].0), score(i, bounds[i].1)]).collect();

    let choice: Vec<usize> = if n <= EXHAUSTIVE_MAX_NODES {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for pattern in 0..(1usize << n) {
            let total: f64 = (0..n).map(|i| values[i][(pattern >> i) & 1]).sum();
            if total > best.0 {
                best = (total, pattern);
            }
        }
        (0..n).map(|i| (best.1 >> i) & 1).collect()
    } else {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for r in 0..ASCENT_RESTARTS {
            let mut c: Vec<usize> = (0..n).map(|i| (i * (r + 1) + r) % 2).collect();
            loop {
                let mut improved = false;
                for i in 0..n {
                    let other = 1 - c[i];
                    if values[i][other] > values[i][c[i]] {
                        c[i] = other;
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
            let total: f64 = (0..n).map(|i| values[i][c[i]]).sum();
            if best.as_ref().is_none_or(|(b, _)| total > *b) {
                best = Some((total, c));
            }
        }
        best.map(|(_, c)| c).unwrap_or_default()
    };
    Ok(DVector::from_fn(n, |i, _| if choice[i] == 0 { bounds[i].0 } else { bounds[i].1 }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    /// The accumulated noise response `sum_l A^{K-1-l} eta(l)` vanishes.
    pub exact_ok: bool,
    /// Every `|eta(k)|_inf <= alpha rho^k` and the total noise sums to zero.
    pub doubly_stochastic_ok: bool,
}

/// Checks an injected sequence `eta` (n x K) against the exact convergence
/// condition for `A` and against the decaying zero-sum sufficient condition.
pub fn verify_convergence_condition(
    a: &DMatrix<f64>,
    eta: &DMatrix<f64>,
    alpha: f64,
    rho: f64,
    tol: f64,
) -> Result<ConvergenceCheck> {
    let (n, kk) = eta.shape();
    if a.shape() != (n, n) {
        return Err(dim_err(format!("A is {:?} but eta has {n} rows", a.shape())));
    }
    if kk == 0 {
        return Err(Error::InvalidArgument("eta must have at least one column".into()));
    }
    // Horner form of sum_{l<K} A^{K-1-l} eta(l).
    let mut acc = DVector::zeros(n);
    for l in 0..kk {
        acc = a * acc + eta.column(l);
    }
    let exact_ok = acc.amax() < tol;
    let decays = (0..kk).all(|k| eta.column(k).amax() <= alpha * rho.powi(k as i32) + 1e-12);
    let doubly_stochastic_ok = decays && eta.sum().abs() < tol;
    Ok(ConvergenceCheck { exact_ok, doubly_stochastic_ok })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnpredictabilityObjective {
    ExpectedSquareError,
    AccuracyProbability,
}

/// Noise maximizing unpredictability at variance `sigma_eta^2`. Any family
/// with that variance is optimal for the expected square error; uniform
/// noise on `[-sqrt(3) sigma, sqrt(3) sigma]` minimizes the accuracy
/// probability, and it is returned for both.
pub fn optimal_unpredictability_spec(sigma_eta: f64, _objective: UnpredictabilityObjective) -> Result<NoiseSpec> {
    if !(sigma_eta.is_finite() && sigma_eta > 0.0) {
        return Err(Error::InvalidArgument("sigma_eta must be positive".into()));
    }
    Ok(NoiseSpec::uniform(sigma_eta * sigma_eta))
}

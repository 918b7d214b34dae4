//! Secrecy metrics: disclosure probability, expected square error,
//! K-step predictability, topology error and cooperation cost.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::montecarlo;
use crate::noise::{Channel, NoiseFamily, NoiseSpec, NoiseStream};

/// Half-width of the box the Monte Carlo truth values are drawn from.
const TRUTH_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisclosureMethod {
    ClosedForm,
    MonteCarlo { runs: usize, seed: u64 },
}

impl DisclosureMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DisclosureMethod::ClosedForm => "closed_form",
            DisclosureMethod::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecrecyReport {
    pub family: NoiseFamily,
    pub epsilon: f64,
    pub delta: f64,
    pub method: DisclosureMethod,
    /// 95% binomial half-width of a Monte Carlo estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_halfwidth: Option<f64>,
}

/// Probability mass of `[-eps, eps]` under the zero-mean noise, accounting
/// for truncation.
fn window_mass(noise: &NoiseSpec, eps: f64) -> f64 {
    let sd = noise.std_dev();
    let f = noise.family;
    match noise.truncation() {
        None => f.cdf(eps, sd) - f.cdf(-eps, sd),
        Some(b) if b <= 0.0 => 1.0,
        Some(b) => {
            let w = eps.min(b);
            let total = f.cdf(b, sd) - f.cdf(-b, sd);
            ((f.cdf(w, sd) - f.cdf(-w, sd)) / total).min(1.0)
        }
    }
}

/// Probability that the optimal estimate of an initial state, made from one
/// perturbed shared value `x(0) + theta`, lands within `epsilon` of `x(0)`.
///
/// For independent, zero-mean, symmetric unimodal noise the optimal estimate
/// is the shared value itself, so the probability is the noise mass of
/// `[-epsilon, epsilon]`.
pub fn disclosure_probability(noise: &NoiseSpec, epsilon: f64, method: DisclosureMethod) -> Result<SecrecyReport> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    noise.validate("noise", None)?;
    if noise.family == NoiseFamily::Zero || noise.variance == 0.0 {
        return Err(Error::UnsupportedFamily("zero (degenerate)".into()));
    }
    if noise.mean.iter().any(|&m| m != 0.0) {
        return Err(Error::UnsupportedFamily(format!("{} with nonzero mean", noise.family.name())));
    }
    let family = noise.family;
    match method {
        DisclosureMethod::ClosedForm => {
            Ok(SecrecyReport { family, epsilon, delta: window_mass(noise, epsilon), method, ci_halfwidth: None })
        }
        DisclosureMethod::MonteCarlo { runs, seed } => {
            if runs == 0 {
                return Err(Error::InvalidArgument("runs must be positive".into()));
            }
            let theta = NoiseStream::new(seed, Channel::THETA);
            let truth = NoiseStream::new(seed, Channel::TRUTH);
            let hits = (0..runs as u64)
                .filter(|&r| {
                    let x0 = TRUTH_HALF_WIDTH * (2.0 * truth.at(r).open01() - 1.0);
                    let shared = x0 + noise.sample(&theta, r, 1)[0];
                    let estimate = shared;
                    (estimate - x0).abs() <= epsilon
                })
                .count();
            let p = hits as f64 / runs as f64;
            let ci = 1.96 * (p * (1.0 - p) / runs as f64).sqrt();
            Ok(SecrecyReport { family, epsilon, delta: p, method, ci_halfwidth: Some(ci) })
        }
    }
}

/// Sample mean of `|x_hat - x|^2` over the estimates.
pub fn expected_square_error(estimates: &[DVector<f64>], truth: &DVector<f64>) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no estimates supplied".into()));
    }
    let mut total = 0.0;
    for e in estimates {
        if e.len() != truth.len() {
            return Err(dim_err(format!("estimate has length {}, truth {}", e.len(), truth.len())));
        }
        total += (e - truth).norm_squared();
    }
    Ok(total / estimates.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictabilityReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub epsilon: f64,
    /// Product of the per-step success frequencies.
    pub p_eps: f64,
    pub per_step: Vec<f64>,
    /// Frequency of runs in which every step succeeded.
    pub joint: f64,
}

/// Monte Carlo K-step predictability.
///
/// `factory(seed)` returns the states `x(0..=K)` of one run (n x (K+1) or
/// wider); `predictor(history, k)` sees `x(0..k)` and returns `x_hat(k|k-1)`.
/// Run `r` uses seed `seed + r`.
pub fn k_step_predictability<F, P>(
    factory: F,
    predictor: P,
    k: usize,
    epsilon: f64,
    runs: usize,
    seed: u64,
) -> Result<PredictabilityReport>
where
    F: Fn(u64) -> Result<DMatrix<f64>> + Sync + Send,
    P: Fn(&DMatrix<f64>, usize) -> DVector<f64> + Sync + Send,
{
    if k == 0 || runs == 0 {
        return Err(Error::InvalidArgument("K and runs must be positive".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let seeds = montecarlo::seed_range(seed, runs);
    let outcomes = montecarlo::try_map_seeds(&seeds, |s| -> Result<Vec<bool>> {
        let states = factory(s)?;
        if states.ncols() < k + 1 {
            return Err(dim_err(format!("run has {} states, need {}", states.ncols(), k + 1)));
        }
        Ok((1..=k)
            .map(|step| {
                let history = states.columns(0, step).into_owned();
                let pred = predictor(&history, step);
                (pred - states.column(step)).amax() <= epsilon
            })
            .collect())
    })?;
    let per_step: Vec<f64> = (0..k)
        .map(|j| outcomes.iter().filter(|o| o[j]).count() as f64 / runs as f64)
        .collect();
    let joint = outcomes.iter().filter(|o| o.iter().all(|&b| b)).count() as f64 / runs as f64;
    Ok(PredictabilityReport { k, epsilon, p_eps: per_step.iter().product(), per_step, joint })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyError {
    pub frobenius: f64,
    pub spectral: f64,
    /// Frobenius error over `|A|_F`.
    pub relative: f64,
}

pub fn topology_error(a_hat: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<TopologyError> {
    if a_hat.shape() != a.shape() {
        return Err(dim_err(format!("A_hat is {:?}, A is {:?}", a_hat.shape(), a.shape())));
    }
    let diff = a_hat - a;
    let frobenius = diff.norm();
    Ok(TopologyError { frobenius, spectral: linalg::spectral_norm(&diff), relative: frobenius / a.norm() })
}

fn check_psd(name: &str, w: &DMatrix<f64>, dim: usize) -> Result<()> {
    if w.shape() != (dim, dim) {
        return Err(dim_err(format!("{name} is {:?}, expected {dim} x {dim}", w.shape())));
    }
    let scale = w.amax().max(1.0);
    if (w - w.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotPsd(format!("{name} is not symmetric")));
    }
    let min = w.clone().symmetric_eigenvalues().min();
    if min < -1e-12 * scale {
        return Err(Error::NotPsd(format!("{name} has eigenvalue {min:.3e}")));
    }
    Ok(())
}

/// One realization of the cooperation cost
/// `(x_T - x_T*)ᵀ H (x_T - x_T*) + sum_{k<T} x(k)ᵀ Q x(k) + u~(k)ᵀ R u~(k)`.
pub fn cooperation_cost(
    trajectory: &Trajectory,
    inputs_tilde: &DMatrix<f64>,
    x_t_star: &DVector<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<f64> {
    let n = trajectory.x.nrows();
    let t = trajectory.horizon();
    if x_t_star.len() != n {
        return Err(dim_err(format!("target has length {}, state {n}", x_t_star.len())));
    }
    if inputs_tilde.ncols() != t {
        return Err(dim_err(format!("{} input columns for horizon {t}", inputs_tilde.ncols())));
    }
    check_psd("H", h, n)?;
    check_psd("Q", q, n)?;
    check_psd("R", r, inputs_tilde.nrows())?;
    let e = trajectory.x.column(t) - x_t_star;
    let mut cost = (e.transpose() * h * &e)[(0, 0)];
    for k in 0..t {
        let x = trajectory.x.column(k);
        let u = inputs_tilde.column(k);
        cost += (x.transpose() * q * x)[(0, 0)] + (u.transpose() * r * u)[(0, 0)];
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed(spec: NoiseSpec, eps: f64) -> f64 {
        disclosure_probability(&spec, eps, DisclosureMethod::ClosedForm).unwrap().delta
    }

    #[test]
    fn closed_forms_at_unit_variance() {
        assert!((closed(NoiseSpec::uniform(1.0), 0.1) - 0.1 / 3f64.sqrt()).abs() < 1e-12);
        assert!((closed(NoiseSpec::gaussian(1.0), 0.1) - 0.0796557).abs() < 1e-6);
        assert!((closed(NoiseSpec::laplace(1.0), 0.1) - (1.0 - (-0.1 * 2f64.sqrt()).exp())).abs() < 1e-12);
        for spec in [NoiseSpec::uniform(1.0), NoiseSpec::gaussian(1.0), NoiseSpec::laplace(1.0)] {
            assert!(closed(spec, 50.0) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn truncated_window() {
        let spec = NoiseSpec::gaussian(1.0).with_bound(1.0);
        assert_eq!(closed(spec.clone(), 2.0), 1.0);
        assert!(closed(spec, 0.1) > closed(NoiseSpec::gaussian(1.0), 0.1));
    }

    #[test]
    fn unsupported_specs() {
        let m = DisclosureMethod::ClosedForm;
        assert!(matches!(disclosure_probability(&NoiseSpec::zero(), 0.1, m), Err(Error::UnsupportedFamily(_))));
        let shifted = NoiseSpec::gaussian(1.0).with_mean(vec![0.5]);
        assert!(matches!(disclosure_probability(&shifted, 0.1, m), Err(Error::UnsupportedFamily(_))));
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let m = DisclosureMethod::MonteCarlo { runs: 2000, seed: 3 };
        let a = disclosure_probability(&NoiseSpec::laplace(1.0), 0.5, m).unwrap();
        let b = disclosure_probability(&NoiseSpec::laplace(1.0), 0.5, m).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_halfwidth.unwrap() > 0.0);
    }

    #[test]
    fn square_error_basics() {
        let truth = DVector::from_vec(vec![0.0]);
        let est = [DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])];
        assert_eq!(expected_square_error(&est, &truth).unwrap(), 1.0);
        assert!(expected_square_error(&[], &truth).is_err());
    }

    #[test]
    fn topology_error_of_identity_shift() {
        let a = DMatrix::from_fn(5, 5, |i, j| (i + 2 * j) as f64 / 10.0);
        let err = topology_error(&(&a + DMatrix::identity(5, 5) * 0.1), &a).unwrap();
        assert!((err.frobenius - 0.1 * 5f64.sqrt()).abs() < 1e-12);
        assert!((err.spectral - 0.1).abs() < 1e-12);
        assert_eq!(topology_error(&a, &a).unwrap().frobenius, 0.0);
    }

    #[test]
    fn cost_terminal_only() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let y = x.clone();
        let tr = Trajectory { x, y, u: None, omega: None, v: None, theta: None, eta: None, seed: 0 };
        let i2 = DMatrix::identity(2, 2);
        let z = DMatrix::zeros(2, 2);
        let c = cooperation_cost(&tr, &DMatrix::zeros(2, 1), &DVector::zeros(2), &i2, &z, &z).unwrap();
        assert_eq!(c, 1.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            cooperation_cost(&tr, &DMatrix::zeros(2, 1), &DVector::zeros(2), &bad, &z, &z),
            Err(Error::NotPsd(_))
        ));
    }

    #[test]
    fn exact_rollout_is_fully_predictable() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.8]);
        let a2 = a.clone();
        let factory = move |_s: u64| -> Result<DMatrix<f64>> {
            let mut x = DMatrix::zeros(2, 6);
            x.set_column(0, &DVector::from_vec(vec![1.0, -1.0]));
            for k in 0..5 {
                let next = &a2 * x.column(k);
                x.set_column(k + 1, &next);
            }
            Ok(x)
        };
        let rep = k_step_predictability(factory, |h, k| &a * h.column(k - 1), 5, 1e-9, 10, 0).unwrap();
        assert_eq!(rep.p_eps, 1.0);
        assert_eq!(rep.joint, 1.0);
    }
}

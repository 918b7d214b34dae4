//! Linear networked system models, stability classes, and trajectory simulation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, serde_rows};
use crate::noise::{Channel, NoiseSpec, NoiseStream};

/// Average of the benchmark initial state, the consensus value it converges to.
pub const BENCHMARK_CONSENSUS_VALUE: f64 = 2.9;

/// Default tolerance on the spectral radius for [`classify_stability`].
pub const DEFAULT_STABILITY_TOL: f64 = 1e-9;

/// `x(k+1) = A x(k) + B u(k) + w(k)`, `y(k) = C x(k) + v(k)`.
///
/// An absent `B` means the system has no input channel; an absent `C` means
/// the full state is observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemModel {
    #[serde(rename = "A", with = "serde_rows")]
    a: DMatrix<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none", with = "serde_rows::option")]
    b: Option<DMatrix<f64>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none", with = "serde_rows::option")]
    c: Option<DMatrix<f64>>,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, b: Option<DMatrix<f64>>, c: Option<DMatrix<f64>>) -> Result<Self> {
        let model = SystemModel { a, b, c };
        let v = model.violations();
        if v.is_empty() {
            Ok(model)
        } else {
            Err(Error::Dimension(v.join("; ")))
        }
    }

    /// Fully measured autonomous system.
    pub fn autonomous(a: DMatrix<f64>) -> Result<Self> {
        Self::new(a, None, None)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.a.nrows();
        if self.a.nrows() != self.a.ncols() {
            out.push("A must be square".to_string());
        }
        if n == 0 {
            out.push("A must be nonempty".to_string());
        }
        if let Some(b) = &self.b {
            if b.nrows() != n {
                out.push(format!("B must have {n} rows, found {}", b.nrows()));
            }
            if b.ncols() == 0 {
                out.push("B must have at least one column".to_string());
            }
        }
        if let Some(c) = &self.c {
            if c.ncols() != self.a.ncols() {
                out.push(format!("C must have {} columns, found {}", self.a.ncols(), c.ncols()));
            }
            if c.nrows() == 0 {
                out.push("C must have at least one row".to_string());
            }
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&self.a)
            || self.b.as_ref().is_some_and(|b| !finite(b))
            || self.c.as_ref().is_some_and(|c| !finite(c))
        {
            out.push("model matrices must be finite".to_string());
        }
        out
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> Option<&DMatrix<f64>> {
        self.b.as_ref()
    }

    pub fn c_opt(&self) -> Option<&DMatrix<f64>> {
        self.c.as_ref()
    }

    /// Observation matrix, materialising the identity when absent.
    pub fn c(&self) -> DMatrix<f64> {
        self.c.clone().unwrap_or_else(|| DMatrix::identity(self.n(), self.n()))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.c.as_ref().map_or(self.n(), |c| c.nrows())
    }

    pub fn q(&self) -> usize {
        self.b.as_ref().map_or(0, |b| b.ncols())
    }

    pub fn with_b(mut self, b: DMatrix<f64>) -> Result<Self> {
        self.b = Some(b);
        Self::new(self.a, self.b, self.c)
    }

    pub fn with_c(mut self, c: DMatrix<f64>) -> Result<Self> {
        self.c = Some(c);
        Self::new(self.a, self.b, self.c)
    }

    pub fn stability(&self, tol: f64) -> StabilityClass {
        classify_stability(&self.a, tol).expect("model A is square")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    /// Spectral radius strictly below one.
    Asymptotic,
    /// Spectral radius one with a simple (geometric multiplicity one) unit eigenvalue.
    Marginal,
    Other,
}

pub fn classify_stability(a: &DMatrix<f64>, tol: f64) -> Result<StabilityClass> {
    if a.nrows() != a.ncols() {
        return Err(dim_err(format!("A is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    let radius = linalg::spectral_radius(a);
    if radius < 1.0 - tol {
        return Ok(StabilityClass::Asymptotic);
    }
    if (radius - 1.0).abs() <= tol {
        let n = a.nrows();
        let shifted = a - DMatrix::identity(n, n);
        let multiplicity = n - linalg::numerical_rank(&shifted, tol);
        if multiplicity == 1 {
            return Ok(StabilityClass::Marginal);
        }
    }
    Ok(StabilityClass::Other)
}

/// One simulation run. Columns are time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// States `x(0..=T)`, n x (T+1).
    #[serde(with = "serde_rows")]
    pub x: DMatrix<f64>,
    /// Outputs `y(0..=T)`, m x (T+1).
    #[serde(with = "serde_rows")]
    pub y: DMatrix<f64>,
    /// Inputs `u(0..T)`, q x T.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_rows::option")]
    pub u: Option<DMatrix<f64>>,
    /// Process noise `w(0..T)`, n x T.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_rows::option")]
    pub omega: Option<DMatrix<f64>>,
    /// Observation noise `v(0..=T)`, m x (T+1).
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_rows::option")]
    pub v: Option<DMatrix<f64>>,
    /// Shared-state perturbations of a defended run.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_rows::option")]
    pub theta: Option<DMatrix<f64>>,
    /// Injected inputs of a defended run.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "serde_rows::option")]
    pub eta: Option<DMatrix<f64>>,
    pub seed: u64,
}

impl Trajectory {
    /// Number of transitions T.
    pub fn horizon(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.x.column(k).into_owned()
    }
}

/// Produces the input applied at each step. Implementations may read the
/// current state (state feedback) and the step's random stream.
pub trait InputSource: Sync {
    fn input(&self, step: usize, state: &DVector<f64>, rng: &NoiseStream) -> DVector<f64>;
}

/// I.i.d. Gaussian excitation, the usual persistently exciting input.
#[derive(Debug, Clone)]
pub struct GaussianExcitation {
    pub dim: usize,
    pub variance: f64,
}

impl InputSource for GaussianExcitation {
    fn input(&self, step: usize, _state: &DVector<f64>, rng: &NoiseStream) -> DVector<f64> {
        NoiseSpec::gaussian(self.variance).sample(rng, step as u64, self.dim)
    }
}

/// Replays a fixed q x T input matrix.
#[derive(Debug, Clone)]
pub struct InputSequence(pub DMatrix<f64>);

impl InputSource for InputSequence {
    fn input(&self, step: usize, _state: &DVector<f64>, _rng: &NoiseStream) -> DVector<f64> {
        self.0.column(step).into_owned()
    }
}

/// `u(k) = -K x(k) + e(k)` with `e` drawn from `perturbation`.
#[derive(Debug, Clone)]
pub struct StateFeedback {
    pub gain: DMatrix<f64>,
    pub perturbation: NoiseSpec,
}

impl InputSource for StateFeedback {
    fn input(&self, step: usize, state: &DVector<f64>, rng: &NoiseStream) -> DVector<f64> {
        let e = self.perturbation.sample(rng, step as u64, self.gain.nrows());
        -(&self.gain * state) + e
    }
}

/// Runs `x(k+1) = A x(k) + B u(k) + w(k)` for `t` steps and records every draw.
///
/// Process noise, observation noise, and inputs use independent channels of
/// the same seed.
pub fn simulate(
    model: &SystemModel,
    x0: &DVector<f64>,
    t: usize,
    process_noise: &NoiseSpec,
    obs_noise: &NoiseSpec,
    input: Option<&dyn InputSource>,
    seed: u64,
) -> Result<Trajectory> {
    let n = model.n();
    let m = model.m();
    if x0.len() != n {
        return Err(dim_err(format!("x0 has length {}, expected {n}", x0.len())));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("horizon T must be positive".into()));
    }
    if input.is_some() && model.b().is_none() {
        return Err(dim_err("an input source was given but the model has no B"));
    }
    process_noise.validate("process_noise", Some(n))?;
    obs_noise.validate("obs_noise", Some(m))?;

    let w_stream = NoiseStream::new(seed, Channel::PROCESS);
    let v_stream = NoiseStream::new(seed, Channel::OBSERVATION);
    let u_stream = NoiseStream::new(seed, Channel::INPUT);
    let q = model.q();
    let c = model.c();

    let mut x = DMatrix::zeros(n, t + 1);
    let mut y = DMatrix::zeros(m, t + 1);
    let mut omega = DMatrix::zeros(n, t);
    let mut v = DMatrix::zeros(m, t + 1);
    let mut u = model.b().map(|_| DMatrix::zeros(q, t));

    let mut xk = x0.clone();
    x.set_column(0, &xk);
    for k in 0..=t {
        let vk = obs_noise.sample(&v_stream, k as u64, m);
        let yk = &c * &xk + &vk;
        y.set_column(k, &yk);
        v.set_column(k, &vk);
        if k == t {
            break;
        }
        let mut next = model.a() * &xk;
        if let (Some(b), Some(u)) = (model.b(), u.as_mut()) {
            let uk = match input {
                Some(src) => src.input(k, &xk, &u_stream),
                None => DVector::zeros(q),
            };
            if uk.len() != q {
                return Err(dim_err(format!("input source produced {} values, expected {q}", uk.len())));
            }
            next += b * &uk;
            u.set_column(k, &uk);
        }
        let wk = process_noise.sample(&w_stream, k as u64, n);
        next += &wk;
        omega.set_column(k, &wk);
        xk = next;
        x.set_column(k + 1, &xk);
    }

    Ok(Trajectory { x, y, u, omega: Some(omega), v: Some(v), theta: None, eta: None, seed })
}

/// Integer numerators of the 5-node benchmark; every printed entry is one of
/// these over 45, rounded to four decimals.
const BENCHMARK_NUMERATORS: [[f64; 5]; 5] = [
    [41.0, 2.0, 0.0, 0.0, 2.0],
    [2.0, 36.0, 3.0, 1.0, 3.0],
    [0.0, 3.0, 41.0, 1.0, 0.0],
    [0.0, 1.0, 1.0, 41.0, 2.0],
    [2.0, 3.0, 0.0, 2.0, 38.0],
];

fn benchmark_x0() -> DVector<f64> {
    DVector::from_vec(vec![-26.0, -3.0, 13.0, 28.0, 17.0]) / 2.0
}

/// The 5-node consensus benchmark with its four-decimal printed entries and
/// `x0 = [-26, -3, 13, 28, 17] / 2`.
///
/// Three rows of the printed matrix sum to 0.9999, so its spectral radius is
/// about 0.99994 and noise-free states drift slowly towards zero. Use
/// [`build_consensus_benchmark_rational`] where exact average consensus matters.
pub fn build_consensus_benchmark() -> (SystemModel, DVector<f64>) {
    let a = DMatrix::from_fn(5, 5, |i, j| (BENCHMARK_NUMERATORS[i][j] / 45.0 * 1e4).round() / 1e4);
    (SystemModel::autonomous(a).expect("benchmark is square"), benchmark_x0())
}

/// The benchmark with its exact doubly stochastic entries `k / 45`.
pub fn build_consensus_benchmark_rational() -> (SystemModel, DVector<f64>) {
    let a = DMatrix::from_fn(5, 5, |i, j| BENCHMARK_NUMERATORS[i][j] / 45.0);
    (SystemModel::autonomous(a).expect("benchmark is square"), benchmark_x0())
}

/// Sampled double-integrator robots under the position/velocity consensus law.
///
/// State order is `[p_1, v_1, p_2, v_2, ...]`. `weights[(i, j)] > 0` means
/// robot `i` listens to robot `j`.
pub fn build_double_integrator_network(
    t0: f64,
    alpha: f64,
    weights: &DMatrix<f64>,
) -> Result<SystemModel> {
    let n = weights.nrows();
    if weights.ncols() != n {
        return Err(dim_err("weight matrix must be square"));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    if (0..n).any(|i| weights[(i, i)] != 0.0) {
        return Err(Error::InvalidArgument("weight matrix must have a zero diagonal".into()));
    }
    if !(t0 > 0.0 && alpha > 0.0) {
        return Err(Error::InvalidArgument("T0 and alpha must be positive".into()));
    }
    let half_t2 = t0 * t0 / 2.0;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let deg: f64 = weights.row(i).sum();
        a[(2 * i, 2 * i)] = 1.0 - half_t2 * deg;
        a[(2 * i, 2 * i + 1)] = t0 - alpha * half_t2 * deg;
        a[(2 * i + 1, 2 * i)] = -t0 * deg;
        a[(2 * i + 1, 2 * i + 1)] = 1.0 - alpha * t0 * deg;
        for j in (0..n).filter(|&j| j != i) {
            let w = weights[(i, j)];
            a[(2 * i, 2 * j)] = half_t2 * w;
            a[(2 * i, 2 * j + 1)] = alpha * w * half_t2;
            a[(2 * i + 1, 2 * j)] = t0 * w;
            a[(2 * i + 1, 2 * j + 1)] = alpha * t0 * w;
        }
    }
    SystemModel::autonomous(a)
}

//! Subcommand implementations. Each returns what it printed or wrote so the
//! binary only has to map errors to exit codes.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use ndss_core::montecarlo::{seed_range, try_map_seeds};
use ndss_core::secrecy_metrics::{cooperation_cost, disclosure_probability, DisclosureMethod};
use ndss_core::state_inference::estimate_initial_state;
use ndss_core::sysid::{estimate_markov, ho_kalman, infer_feedback_gain};
use ndss_core::topology_inference::{infer_causality, infer_ols, ObservationStacks};
use ndss_core::{DMatrix, DVector, Error, NoiseFamily, NoiseSpec, ScenarioConfig, Trajectory};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::experiments;
use crate::io::{ensure_dir, fmt_f64, read_json, read_series, write_json, Table};
use crate::spec::{ExperimentKind, ExperimentSpec};

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> CliResult<ScenarioConfig> {
        let sc: ScenarioConfig = read_json(&self.config)?;
        let v = sc.violations();
        if !v.is_empty() {
            return Err(CliError::Schema(v.join("; ")));
        }
        Ok(sc)
    }
}

#[derive(Debug, Subcommand)]
pub enum InferCommand {
    /// Least-squares estimate of the state at the start of an output window.
    State {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output CSV (`y*` columns) used instead of simulating the scenario.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Window length; defaults to all remaining outputs.
        #[arg(long)]
        len: Option<usize>,
    },
    /// Interaction matrix from full-state observations.
    Topology {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = TopologyChoice::Causality)]
        method: TopologyChoice,
        /// Observation-noise variance for the causality correction; defaults
        /// to the scenario's.
        #[arg(long)]
        sigma_v_sq: Option<f64>,
    },
    /// Markov parameters and a realization of the given order.
    Sysid {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// CSV with `u*` and `y*` columns; row k holds u(k) and y(k).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        order: usize,
        /// Number of input steps used; defaults to all.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// State-feedback gain from states and inputs.
    Gain {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// CSV with `u*` and `y*` columns, `y` taken as the full state.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopologyChoice {
    Ols,
    Causality,
}

#[derive(Debug, Subcommand)]
pub enum MetricsCommand {
    /// Probability that an observer lands within epsilon of the truth.
    Disclosure {
        #[arg(long, value_enum)]
        family: FamilyChoice,
        #[arg(long, default_value_t = 1.0)]
        variance: f64,
        #[arg(long)]
        epsilon: f64,
        /// Monte Carlo runs; the closed form alone when absent.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cooperation cost averaged over seeds, with H = I, Q = 0, R = I and
    /// the average of x0 as target.
    Cost {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyChoice {
    Gaussian,
    Uniform,
    Laplace,
}

impl From<FamilyChoice> for NoiseFamily {
    fn from(f: FamilyChoice) -> Self {
        match f {
            FamilyChoice::Gaussian => NoiseFamily::Gaussian,
            FamilyChoice::Uniform => NoiseFamily::Uniform,
            FamilyChoice::Laplace => NoiseFamily::Laplace,
        }
    }
}

/// Where a command's result goes: a file in `out`, or stdout.
fn emit<T: Serialize>(value: &T, out: Option<&Path>, file: &str) -> CliResult<String> {
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            let path = dir.join(file);
            write_json(&path, value)?;
            Ok(format!("wrote {}", path.display()))
        }
        None => serde_json::to_string_pretty(value).map_err(|e| CliError::Schema(e.to_string())),
    }
}

fn trajectory_table(tr: &Trajectory) -> Table {
    let (n, m) = (tr.x.nrows(), tr.y.nrows());
    let q = tr.u.as_ref().map_or(0, |u| u.nrows());
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("y{i}")));
    header.extend((1..=q).map(|i| format!("u{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new("trajectory.csv", &header);
    for k in 0..tr.x.ncols() {
        let mut row = vec![k.to_string()];
        row.extend(tr.x.column(k).iter().map(|v| fmt_f64(*v)));
        row.extend(tr.y.column(k).iter().map(|v| fmt_f64(*v)));
        if let Some(u) = &tr.u {
            row.extend((0..q).map(|i| fmt_f64(if k < u.ncols() { u[(i, k)] } else { f64::NAN })));
        }
        table.push(row);
    }
    table
}

fn write_trajectory(tr: &Trajectory, dir: &Path, provenance: &str) -> CliResult<()> {
    ensure_dir(dir)?;
    write_json(&dir.join("trajectory.json"), tr)?;
    trajectory_table(tr).write(dir, provenance)
}

pub fn simulate(args: &ScenarioArgs, out: Option<&Path>) -> CliResult<String> {
    let sc = args.load()?;
    let tr = sc.simulate(args.seed)?;
    match out {
        Some(dir) => {
            write_trajectory(&tr, dir, &format!("seed={}; version={}", tr.seed, crate::io::VERSION))?;
            Ok(format!("wrote {}", dir.display()))
        }
        None => emit(&tr, None, ""),
    }
}

pub fn defend(args: &ScenarioArgs, out: Option<&Path>) -> CliResult<String> {
    let sc = args.load()?;
    let run = sc.run_defense(args.seed)?;
    let summary = json!({
        "seed": run.trajectory.seed,
        "deviation": run.deviation,
        "converged_value": run.converged_value,
    });
    match out {
        Some(dir) => {
            write_trajectory(&run.trajectory, dir, &format!("seed={}; version={}", run.trajectory.seed, crate::io::VERSION))?;
            write_json(&dir.join("defense.json"), &run)?;
            Ok(serde_json::to_string_pretty(&summary).expect("plain json"))
        }
        None => emit(&run, None, ""),
    }
}

/// Outputs and, when present, inputs: from `--data` or a fresh simulation.
fn series(args: &ScenarioArgs, sc: &ScenarioConfig, data: Option<&Path>) -> CliResult<(DMatrix<f64>, Option<DMatrix<f64>>, Option<Trajectory>)> {
    match data {
        Some(path) => {
            let s = read_series(path)?;
            Ok((s.outputs, s.inputs, None))
        }
        None => {
            let tr = sc.simulate(args.seed)?;
            Ok((tr.y.clone(), tr.u.clone(), Some(tr)))
        }
    }
}

pub fn infer(cmd: &InferCommand, out: Option<&Path>) -> CliResult<String> {
    match cmd {
        InferCommand::State { scenario, data, start, len } => {
            let sc = scenario.load()?;
            let (y, _, tr) = series(scenario, &sc, data.as_deref())?;
            if *start >= y.ncols() {
                return Err(CliError::Schema(format!("start: {start} is past the last of {} outputs", y.ncols())));
            }
            let len = len.unwrap_or(y.ncols() - start);
            let mut est = estimate_initial_state(&sc.model, &y, *start, len)?;
            if let Some(tr) = tr {
                est = est.with_truth(&tr.state(*start));
            }
            emit(&est, out, "state_estimate.json")
        }
        InferCommand::Topology { scenario, data, method, sigma_v_sq } => {
            let sc = scenario.load()?;
            let (y, _, _) = series(scenario, &sc, data.as_deref())?;
            let obs = ObservationStacks::from_sequence(y)?;
            let est = match method {
                TopologyChoice::Ols => infer_ols(&obs)?,
                TopologyChoice::Causality => {
                    let s = sigma_v_sq.unwrap_or(if sc.obs_noise.is_zero() { 0.0 } else { sc.obs_noise.variance });
                    infer_causality(&obs, s)?
                }
            };
            let est = if data.is_none() && est.a_hat.shape() == sc.model.a().shape() {
                est.with_truth(sc.model.a())?
            } else {
                est
            };
            emit(&est, out, "topology_estimate.json")
        }
        InferCommand::Sysid { scenario, data, order, horizon } => {
            let sc = scenario.load()?;
            let (y, u, _) = series(scenario, &sc, data.as_deref())?;
            let u = u.ok_or_else(|| CliError::Schema("data: system identification needs inputs".into()))?;
            let available = u.ncols().min(y.ncols()).saturating_sub(1);
            let t = horizon.unwrap_or(available);
            if t == 0 || t > available {
                return Err(CliError::Schema(format!("horizon: must lie in 1..={available}")));
            }
            let markov = estimate_markov(&u.columns(0, t).into_owned(), &y.columns(1, t).into_owned())?;
            let realized = ho_kalman(&markov, *order)?;
            let eig: Vec<[f64; 2]> = realized.eigenvalues().iter().map(|z| [z.re, z.im]).collect();
            emit(&json!({ "markov": markov, "realized": realized, "eigenvalues": eig }), out, "sysid.json")
        }
        InferCommand::Gain { scenario, data } => {
            let sc = scenario.load()?;
            let (states, u) = match data {
                Some(path) => {
                    let s = read_series(path)?;
                    (s.outputs, s.inputs)
                }
                None => {
                    let tr = sc.simulate(scenario.seed)?;
                    (tr.x, tr.u)
                }
            };
            let u = u.ok_or_else(|| CliError::Schema("data: gain inference needs inputs".into()))?;
            let t = u.ncols().min(states.ncols());
            let t = if u.column(t - 1).iter().any(|v| v.is_nan()) { t - 1 } else { t };
            let gain = infer_feedback_gain(&states.columns(0, t).into_owned(), &u.columns(0, t).into_owned())?;
            emit(&gain, out, "gain.json")
        }
    }
}

pub fn metrics(cmd: &MetricsCommand, out: Option<&Path>) -> CliResult<String> {
    match cmd {
        MetricsCommand::Disclosure { family, variance, epsilon, runs, seed } => {
            let noise = NoiseSpec::of_family((*family).into(), *variance);
            let closed = disclosure_probability(&noise, *epsilon, DisclosureMethod::ClosedForm)?;
            let mc = runs
                .map(|runs| disclosure_probability(&noise, *epsilon, DisclosureMethod::MonteCarlo { runs, seed: *seed }))
                .transpose()?;
            emit(&json!({ "closed_form": closed, "monte_carlo": mc }), out, "disclosure.json")
        }
        MetricsCommand::Cost { scenario, runs } => {
            let sc = scenario.load()?;
            if *runs == 0 {
                return Err(CliError::Schema("runs: must be positive".into()));
            }
            let n = sc.model.n();
            let q = sc.model.q();
            let target = DVector::from_element(n, sc.x0.mean());
            let (h, qm, r) = (DMatrix::identity(n, n), DMatrix::zeros(n, n), DMatrix::identity(q.max(1), q.max(1)));
            let base = scenario.seed.unwrap_or(sc.seed);
            let costs = try_map_seeds(&seed_range(base, *runs), |seed| -> Result<f64, Error> {
                let tr = sc.simulate(Some(seed))?;
                let u = tr.u.clone().unwrap_or_else(|| DMatrix::zeros(1, tr.horizon()));
                cooperation_cost(&tr, &u, &target, &h, &qm, &r)
            })?;
            let mean = costs.iter().sum::<f64>() / costs.len() as f64;
            emit(&json!({ "runs": runs, "seed_base": base, "mean_cost": mean, "costs": costs }), out, "cost.json")
        }
    }
}

/// Parses `path` as an experiment spec when it names a kind (or `kind` is
/// given), as a scenario otherwise, and lists every problem found.
pub fn validate(path: &Path, kind: Option<ExperimentKind>) -> CliResult<String> {
    let value: Value = read_json(path)?;
    let is_spec = kind.is_some() || value.get("kind").is_some_and(|k| k.is_string());
    if is_spec {
        ExperimentSpec::from_json(&value.to_string(), kind)?;
        return Ok(format!("ok: {} is a valid experiment spec", path.display()));
    }
    let sc: ScenarioConfig = serde_json::from_value(value).map_err(|e| CliError::Schema(e.to_string()))?;
    let v = sc.violations();
    if v.is_empty() {
        Ok(format!("ok: {} is a valid scenario", path.display()))
    } else {
        Err(CliError::Schema(v.join("; ")))
    }
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub kind: ExperimentKind,
    /// Experiment spec JSON; built-in defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; the spec's `out_dir`, else `out/<kind>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// First seed; the seed list becomes consecutive from here.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo runs for fig6, number of seeds otherwise.
    #[arg(long)]
    pub runs: Option<usize>,
}

pub fn reproduce(args: &ReproduceArgs) -> CliResult<String> {
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_file(path, Some(args.kind))?,
        None if args.kind == ExperimentKind::Custom => {
            return Err(CliError::Schema("config: custom experiments need a spec file".into()))
        }
        None => ExperimentSpec::defaults(args.kind),
    };
    if let Some(base) = args.seed {
        spec = spec.with_seed_base(base);
    }
    if let Some(runs) = args.runs {
        spec = spec.with_runs(runs);
    }
    let out = args
        .out
        .clone()
        .or_else(|| spec.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(spec.kind.name()));
    let files = experiments::run_to_dir(&spec, &out)?;
    Ok(files.iter().map(|p| format!("wrote {}", p.display())).collect::<Vec<_>>().join("\n"))
}

//! The reproducible studies behind `ndss reproduce`.

use std::path::Path;

use ndss_core::montecarlo::try_map_seeds;
use ndss_core::secrecy_defense::run_defended;
use ndss_core::secrecy_metrics::{disclosure_probability, DisclosureMethod};
use ndss_core::state_inference::estimate_initial_state;
use ndss_core::topology_inference::CovarianceAccumulator;
use ndss_core::{
    simulate, DMatrix, DVector, DefenseConfig, Error, EtaDesigner, NoiseFamily, NoiseSpec, SystemModel,
};

use crate::error::CliResult;
use crate::io::{describe_seeds, ensure_dir, fmt_f64, spec_hash, Table, VERSION};
use crate::spec::{ExperimentKind, ExperimentSpec};

/// Provenance comment for every CSV of `spec`.
pub fn provenance(spec: &ExperimentSpec) -> String {
    let mut parts = vec![
        format!("spec-hash={}", spec_hash(spec)),
        format!("experiment={}", spec.kind.name()),
        format!("seeds={}", describe_seeds(&spec.seeds)),
    ];
    let join = |v: Vec<String>| v.join(" ");
    if !spec.t_grid.is_empty() {
        parts.push(format!("t_grid={}", join(spec.t_grid.iter().map(usize::to_string).collect())));
    }
    match spec.kind {
        ExperimentKind::Fig5 | ExperimentKind::Fig6 => {
            parts.push(format!("noise_variances={}", join(spec.noise_variances.iter().map(|v| fmt_f64(*v)).collect())));
        }
        ExperimentKind::Fig8 => {
            let d = &spec.defense;
            parts.push(format!("sigma_eta={} alpha={} rho={} k_max={}", d.sigma_eta, d.alpha, d.rho, d.k_max));
        }
        _ => {}
    }
    if spec.kind == ExperimentKind::Fig6 {
        parts.push(format!("runs={}", spec.runs));
    }
    parts.push(format!("version={VERSION}"));
    parts.join("; ")
}

/// Runs the experiment and returns its tables in output order.
pub fn run(spec: &ExperimentSpec) -> CliResult<Vec<Table>> {
    spec.check()?;
    match spec.kind {
        ExperimentKind::Fig5 => state_error(spec).map(|t| vec![t]),
        ExperimentKind::Fig6 => secrecy(spec).map(|t| vec![t]),
        ExperimentKind::Fig7 => topology_error(spec).map(|t| vec![t]),
        ExperimentKind::Fig8 => defense(spec),
        ExperimentKind::Custom => custom(spec).map(|t| vec![t]),
    }
}

/// Runs the experiment and writes its CSVs into `out`.
pub fn run_to_dir(spec: &ExperimentSpec, out: &Path) -> CliResult<Vec<std::path::PathBuf>> {
    let tables = run(spec)?;
    ensure_dir(out)?;
    let prov = provenance(spec);
    tables
        .iter()
        .map(|t| {
            t.write(out, &prov)?;
            Ok(out.join(&t.file))
        })
        .collect()
}

fn with_variance(spec: &NoiseSpec, variance: f64) -> NoiseSpec {
    let family = if spec.family == NoiseFamily::Zero { NoiseFamily::Gaussian } else { spec.family };
    NoiseSpec { family, variance, ..spec.clone() }
}

/// Initial-state estimation error against observation-noise variance and
/// window length.
pub fn state_error(spec: &ExperimentSpec) -> CliResult<Table> {
    let sc = &spec.scenario;
    let t_max = *spec.t_grid.last().expect("checked nonempty");
    let per_seed = try_map_seeds(&spec.seeds, |seed| -> Result<Vec<f64>, Error> {
        let mut errors = Vec::new();
        for &var in &spec.noise_variances {
            let obs = with_variance(&sc.obs_noise, var);
            let tr = simulate(&sc.model, &sc.x0, t_max, &sc.process_noise, &obs, None, seed)?;
            for &t in &spec.t_grid {
                let est = estimate_initial_state(&sc.model, &tr.y, 0, t)?.with_truth(&sc.x0);
                errors.push(est.error_norm.expect("truth supplied"));
            }
        }
        Ok(errors)
    })?;
    let mut table = Table::new("state_error.csv", &["sigma_v_sq", "T", "seed", "error_norm"]);
    let nt = spec.t_grid.len();
    for (vi, &var) in spec.noise_variances.iter().enumerate() {
        for (ti, &t) in spec.t_grid.iter().enumerate() {
            for (si, &seed) in spec.seeds.iter().enumerate() {
                let e = per_seed[si][vi * nt + ti];
                table.push(vec![fmt_f64(var), t.to_string(), seed.to_string(), fmt_f64(e)]);
            }
        }
    }
    Ok(table)
}

/// Monte Carlo and closed-form disclosure probabilities per family.
pub fn secrecy(spec: &ExperimentSpec) -> CliResult<Table> {
    let seed = spec.seeds[0];
    let mut table = Table::new("secrecy.csv", &["family", "sigma_sq", "epsilon", "delta_mc", "delta_closed", "runs"]);
    let families = [NoiseFamily::Gaussian, NoiseFamily::Laplace, NoiseFamily::Uniform];
    for family in families {
        for &var in &spec.noise_variances {
            let noise = NoiseSpec::of_family(family, var);
            for &eps in &spec.epsilon_grid {
                let mc = disclosure_probability(&noise, eps, DisclosureMethod::MonteCarlo { runs: spec.runs, seed })?;
                let cf = disclosure_probability(&noise, eps, DisclosureMethod::ClosedForm)?;
                table.push(vec![
                    family.name().to_string(),
                    fmt_f64(var),
                    fmt_f64(eps),
                    fmt_f64(mc.delta),
                    fmt_f64(cf.delta),
                    spec.runs.to_string(),
                ]);
            }
        }
    }
    Ok(table)
}

fn frobenius_or_nan(est: Result<DMatrix<f64>, Error>, a: &DMatrix<f64>) -> Result<f64, Error> {
    match est {
        Ok(a_hat) => Ok((a_hat - a).norm()),
        Err(e) if e.is_numerical() => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// OLS and causality topology errors along one long run per seed, read off
/// at every horizon in the grid.
pub fn topology_error(spec: &ExperimentSpec) -> CliResult<Table> {
    let sc = &spec.scenario;
    let a = sc.model.a();
    let sigma_v_sq = if sc.obs_noise.is_zero() { 0.0 } else { sc.obs_noise.variance };
    let t_max = *spec.t_grid.last().expect("checked nonempty");
    let per_seed = try_map_seeds(&spec.seeds, |seed| -> Result<Vec<(f64, f64)>, Error> {
        let tr = simulate(&sc.model, &sc.x0, t_max, &sc.process_noise, &sc.obs_noise, None, seed)?;
        let mut acc = CovarianceAccumulator::new(sc.model.n());
        let mut out = Vec::new();
        let mut grid = spec.t_grid.iter().peekable();
        for k in 0..=t_max {
            acc.push(&tr.y.column(k).into_owned());
            while grid.peek() == Some(&&acc.t()) && acc.t() > 0 {
                let cov = acc.covariances().expect("t > 0");
                out.push((frobenius_or_nan(cov.ols(), a)?, frobenius_or_nan(cov.causality(sigma_v_sq), a)?));
                grid.next();
            }
        }
        Ok(out)
    })?;
    let mut table = Table::new("topo_error.csv", &["T", "method", "seed", "frobenius_error"]);
    for (ti, &t) in spec.t_grid.iter().enumerate() {
        for method in ["causality", "ols"] {
            for (si, &seed) in spec.seeds.iter().enumerate() {
                let (ols, cau) = per_seed[si][ti];
                let e = if method == "ols" { ols } else { cau };
                table.push(vec![t.to_string(), method.to_string(), seed.to_string(), fmt_f64(e)]);
            }
        }
    }
    Ok(table)
}

/// Noise designs compared in the defense study, in output order.
pub fn defense_designs(spec: &ExperimentSpec) -> Vec<(&'static str, DefenseConfig)> {
    let d = &spec.defense;
    let cfg = |eta| DefenseConfig { theta: NoiseSpec::zero(), eta, k_max: d.k_max };
    vec![
        ("boundary", cfg(EtaDesigner::Boundary { alpha: d.alpha, rho: d.rho })),
        (
            "gaussian",
            cfg(EtaDesigner::AdjacentCancellation { alpha: d.alpha, rho: d.rho, family: NoiseFamily::Gaussian }),
        ),
        (
            "uniform",
            cfg(EtaDesigner::AdjacentCancellation { alpha: d.alpha, rho: d.rho, family: NoiseFamily::Uniform }),
        ),
    ]
}

/// Per-step trace of one defended run.
pub struct DefenseTrace {
    pub states: DMatrix<f64>,
    /// `|x(k) - mean(x0) 1|_inf` for every k.
    pub deviation: Vec<f64>,
    /// OLS topology error from the shared values `y(0..=k)`; NaN while the
    /// Gram matrix is singular.
    pub topo_error: Vec<f64>,
}

pub fn defense_trace(model: &SystemModel, x0: &DVector<f64>, cfg: &DefenseConfig, seed: u64) -> Result<DefenseTrace, Error> {
    let run = run_defended(model, x0, cfg, seed)?;
    let tr = &run.trajectory;
    let x_c = x0.mean();
    let a = model.a();
    let mut acc = CovarianceAccumulator::new(model.n());
    let mut deviation = Vec::with_capacity(cfg.k_max + 1);
    let mut topo_error = Vec::with_capacity(cfg.k_max + 1);
    for k in 0..=cfg.k_max {
        deviation.push(tr.x.column(k).iter().map(|v| (v - x_c).abs()).fold(0.0, f64::max));
        acc.push(&tr.y.column(k).into_owned());
        let e = match acc.covariances() {
            Some(cov) => frobenius_or_nan(cov.ols(), a)?,
            None => f64::NAN,
        };
        topo_error.push(e);
    }
    Ok(DefenseTrace { states: tr.x.clone(), deviation, topo_error })
}

/// Convergence and topology secrecy of the three noise designs.
///
/// `defense.csv` traces the first seed step by step; `defense_seeds.csv`
/// gives the final deviation and topology error of every seed.
pub fn defense(spec: &ExperimentSpec) -> CliResult<Vec<Table>> {
    let sc = &spec.scenario;
    let k_max = spec.defense.k_max;
    let mut trace = Table::new("defense.csv", &["noise_design", "k", "node", "state", "deviation", "topo_error_at_k"]);
    let mut summary = Table::new("defense_seeds.csv", &["noise_design", "seed", "deviation", "topo_error_at_k"]);
    for (name, cfg) in defense_designs(spec) {
        let runs = try_map_seeds(&spec.seeds, |seed| defense_trace(&sc.model, &sc.x0, &cfg, seed))?;
        let first = &runs[0];
        for k in 0..=k_max {
            for node in 0..sc.model.n() {
                trace.push(vec![
                    name.to_string(),
                    k.to_string(),
                    (node + 1).to_string(),
                    fmt_f64(first.states[(node, k)]),
                    fmt_f64(first.deviation[k]),
                    fmt_f64(first.topo_error[k]),
                ]);
            }
        }
        for (run, &seed) in runs.iter().zip(&spec.seeds) {
            summary.push(vec![
                name.to_string(),
                seed.to_string(),
                fmt_f64(run.deviation[k_max]),
                fmt_f64(run.topo_error[k_max]),
            ]);
        }
    }
    Ok(vec![trace, summary])
}

/// The scenario itself, once per seed: defended when it has a defense
/// section, plain simulation otherwise.
pub fn custom(spec: &ExperimentSpec) -> CliResult<Table> {
    let sc = &spec.scenario;
    let runs = try_map_seeds(&spec.seeds, |seed| -> Result<DMatrix<f64>, Error> {
        match &sc.defense {
            Some(_) => Ok(sc.run_defense(Some(seed))?.trajectory.x),
            None => Ok(sc.simulate(Some(seed))?.x),
        }
    })?;
    let mut table = Table::new("custom.csv", &["seed", "k", "node", "state"]);
    for (x, &seed) in runs.iter().zip(&spec.seeds) {
        for k in 0..x.ncols() {
            for node in 0..x.nrows() {
                table.push(vec![seed.to_string(), k.to_string(), (node + 1).to_string(), fmt_f64(x[(node, k)])]);
            }
        }
    }
    Ok(table)
}


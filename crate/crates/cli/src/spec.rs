//! Experiment specifications: which study to run, over which grids and seeds.

use std::path::{Path, PathBuf};

use ndss_core::{
    build_consensus_benchmark, build_consensus_benchmark_rational, NoiseSpec, ScenarioConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::read_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fig5 => "fig5",
            ExperimentKind::Fig6 => "fig6",
            ExperimentKind::Fig7 => "fig7",
            ExperimentKind::Fig8 => "fig8",
            ExperimentKind::Custom => "custom",
        }
    }
}

/// Noise-design sweep for the defense study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseSweep {
    pub sigma_eta: f64,
    pub alpha: f64,
    pub rho: f64,
    pub k_max: usize,
}

/// Spec as written in a file; absent fields take the defaults of `kind`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: Option<ExperimentKind>,
    scenario: Option<ScenarioConfig>,
    t_grid: Option<Vec<usize>>,
    epsilon_grid: Option<Vec<f64>>,
    noise_variances: Option<Vec<f64>>,
    seeds: Option<Vec<u64>>,
    runs: Option<usize>,
    defense: Option<DefenseSweep>,
    out_dir: Option<PathBuf>,
}

/// Fully resolved experiment. Its JSON form is what the provenance hash covers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub scenario: ScenarioConfig,
    pub t_grid: Vec<usize>,
    pub epsilon_grid: Vec<f64>,
    pub noise_variances: Vec<f64>,
    pub seeds: Vec<u64>,
    pub runs: usize,
    pub defense: DefenseSweep,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

fn benchmark_scenario(rational: bool, process: NoiseSpec, obs: NoiseSpec) -> ScenarioConfig {
    let (model, x0) = if rational { build_consensus_benchmark_rational() } else { build_consensus_benchmark() };
    ScenarioConfig { model, x0, t: 1, process_noise: process, obs_noise: obs, seed: 0, input: None, defense: None }
}

fn seeds(count: u64) -> Vec<u64> {
    (0..count).collect()
}

impl ExperimentSpec {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let defense = DefenseSweep { sigma_eta: 1.0, alpha: 3.0, rho: 0.95, k_max: 500 };
        let epsilon_grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
        let base = ExperimentSpec {
            kind,
            scenario: benchmark_scenario(false, NoiseSpec::zero(), NoiseSpec::zero()),
            t_grid: Vec::new(),
            epsilon_grid: Vec::new(),
            noise_variances: Vec::new(),
            seeds: seeds(50),
            runs: 0,
            defense,
            out_dir: None,
        };
        match kind {
            ExperimentKind::Fig5 => ExperimentSpec {
                t_grid: vec![5, 10, 20, 50, 100, 200, 500, 1000],
                noise_variances: vec![0.01, 0.25, 1.0],
                ..base
            },
            ExperimentKind::Fig6 => ExperimentSpec {
                epsilon_grid,
                noise_variances: vec![1.0],
                seeds: vec![0],
                runs: 3000,
                ..base
            },
            ExperimentKind::Fig7 => ExperimentSpec {
                scenario: benchmark_scenario(false, NoiseSpec::gaussian(1.0), NoiseSpec::gaussian(1.0)),
                t_grid: vec![100, 300, 1_000, 3_000, 10_000, 30_000, 100_000],
                ..base
            },
            ExperimentKind::Fig8 => ExperimentSpec {
                scenario: benchmark_scenario(true, NoiseSpec::zero(), NoiseSpec::zero()),
                seeds: seeds(20),
                ..base
            },
            ExperimentKind::Custom => ExperimentSpec { seeds: vec![0], ..base },
        }
    }

    /// Parses a spec file; `kind` overrides the file's kind when given.
    pub fn from_file(path: &Path, kind: Option<ExperimentKind>) -> CliResult<Self> {
        let raw: RawSpec = read_json(path)?;
        Self::resolve(raw, kind)
    }

    pub fn from_json(text: &str, kind: Option<ExperimentKind>) -> CliResult<Self> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        Self::resolve(raw, kind)
    }

    fn resolve(raw: RawSpec, kind: Option<ExperimentKind>) -> CliResult<Self> {
        let kind = match (kind, raw.kind) {
            (Some(k), Some(f)) if k != f => {
                return Err(CliError::Schema(format!(
                    "kind: spec file is {} but {} was requested",
                    f.name(),
                    k.name()
                )))
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(CliError::Schema("kind: missing experiment kind".into())),
        };
        let d = Self::defaults(kind);
        if kind == ExperimentKind::Custom && raw.scenario.is_none() {
            return Err(CliError::Schema("scenario: custom experiments need a scenario".into()));
        }
        let spec = ExperimentSpec {
            kind,
            scenario: raw.scenario.unwrap_or(d.scenario),
            t_grid: raw.t_grid.unwrap_or(d.t_grid),
            epsilon_grid: raw.epsilon_grid.unwrap_or(d.epsilon_grid),
            noise_variances: raw.noise_variances.unwrap_or(d.noise_variances),
            seeds: raw.seeds.unwrap_or(d.seeds),
            runs: raw.runs.unwrap_or(d.runs),
            defense: raw.defense.unwrap_or(d.defense),
            out_dir: raw.out_dir,
        };
        spec.check()?;
        Ok(spec)
    }

    /// Shifts the seed list to consecutive seeds starting at `base`.
    pub fn with_seed_base(mut self, base: u64) -> Self {
        let count = self.seeds.len() as u64;
        self.seeds = (0..count).map(|i| base.wrapping_add(i)).collect();
        self
    }

    /// Monte Carlo runs for the secrecy study, seed count for the others.
    pub fn with_runs(mut self, runs: usize) -> Self {
        if self.kind == ExperimentKind::Fig6 {
            self.runs = runs;
        } else {
            let base = self.seeds.first().cloned().unwrap_or(0);
            self.seeds = (0..runs as u64).map(|i| base.wrapping_add(i)).collect();
        }
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self.scenario.violations().into_iter().map(|v| format!("scenario: {v}")).collect();
        if self.seeds.is_empty() {
            out.push("seeds: list must be nonempty".into());
        }
        let increasing_f = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !self.t_grid.windows(2).all(|w| w[0] < w[1]) {
            out.push("t_grid: must be strictly increasing".into());
        }
        if self.t_grid.first() == Some(&0) {
            out.push("t_grid: entries must be positive".into());
        }
        if !increasing_f(&self.epsilon_grid) {
            out.push("epsilon_grid: must be strictly increasing".into());
        }
        if self.epsilon_grid.iter().any(|e| !(*e > 0.0)) {
            out.push("epsilon_grid: entries must be positive".into());
        }
        if !increasing_f(&self.noise_variances) {
            out.push("noise_variances: must be strictly increasing".into());
        }
        if self.noise_variances.iter().any(|v| !(*v >= 0.0)) {
            out.push("noise_variances: entries must be nonnegative".into());
        }
        let needs = |ok: bool, msg: &str, out: &mut Vec<String>| {
            if !ok {
                out.push(msg.to_string());
            }
        };
        match self.kind {
            ExperimentKind::Fig5 => {
                needs(!self.t_grid.is_empty(), "t_grid: required for fig5", &mut out);
                needs(!self.noise_variances.is_empty(), "noise_variances: required for fig5", &mut out);
            }
            ExperimentKind::Fig6 => {
                needs(!self.epsilon_grid.is_empty(), "epsilon_grid: required for fig6", &mut out);
                needs(!self.noise_variances.is_empty(), "noise_variances: required for fig6", &mut out);
                needs(self.runs > 0, "runs: must be positive", &mut out);
            }
            ExperimentKind::Fig7 => {
                needs(!self.t_grid.is_empty(), "t_grid: required for fig7", &mut out);
                needs(self.scenario.model.c_opt().is_none(), "scenario.model.C: fig7 needs full observation", &mut out);
            }
            ExperimentKind::Fig8 => {
                let d = &self.defense;
                needs(d.sigma_eta > 0.0, "defense.sigma_eta: must be positive", &mut out);
                needs(d.alpha > 0.0, "defense.alpha: must be positive", &mut out);
                needs((0.0..1.0).contains(&d.rho), "rho must lie in [0,1)", &mut out);
                needs(d.k_max > 0, "defense.k_max: must be positive", &mut out);
                needs(self.scenario.model.b().is_none(), "scenario.model.B: defense runs take no input", &mut out);
            }
            ExperimentKind::Custom => {}
        }
        out
    }

    pub fn check(&self) -> CliResult<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Schema(v.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for kind in [ExperimentKind::Fig5, ExperimentKind::Fig6, ExperimentKind::Fig7, ExperimentKind::Fig8] {
            assert!(ExperimentSpec::defaults(kind).violations().is_empty(), "{kind:?}");
        }
    }

    #[test]
    fn grids_must_increase() {
        let err = ExperimentSpec::from_json(r#"{"kind": "fig5", "t_grid": [10, 5]}"#, None).unwrap_err();
        assert!(err.to_string().contains("t_grid"));
        let err = ExperimentSpec::from_json(r#"{"kind": "fig6", "seeds": []}"#, None).unwrap_err();
        assert!(err.to_string().contains("seeds"));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentSpec::from_json(r#"{"kind": "fig5", "t_grd": [1]}"#, None).unwrap_err();
        assert!(err.to_string().contains("t_grd"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn overrides() {
        let s = ExperimentSpec::defaults(ExperimentKind::Fig7).with_seed_base(100).with_runs(3);
        assert_eq!(s.seeds, vec![100, 101, 102]);
        let s = ExperimentSpec::defaults(ExperimentKind::Fig6).with_runs(10);
        assert_eq!(s.runs, 10);
    }
}

//! Scenario files: one model, initial state, noise channels and optional
//! excitation or defense, as read from JSON.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    simulate, GaussianExcitation, InputSequence, InputSource, StateFeedback, SystemModel, Trajectory,
};
use crate::error::{Error, Result};
use crate::linalg::{serde_rows, serde_vec};
use crate::noise::NoiseSpec;
use crate::secrecy_defense::{run_defended, DefendedRun, DefenseConfig};

/// External input applied through `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputConfig {
    Gaussian { variance: f64 },
    Sequence {
        #[serde(rename = "U", with = "serde_rows")]
        u: DMatrix<f64>,
    },
    Feedback {
        #[serde(rename = "K", with = "serde_rows")]
        k: DMatrix<f64>,
        #[serde(default)]
        perturbation: NoiseSpec,
    },
}

impl InputConfig {
    pub fn source(&self, q: usize) -> Box<dyn InputSource> {
        match self {
            InputConfig::Gaussian { variance } => Box::new(GaussianExcitation { dim: q, variance: *variance }),
            InputConfig::Sequence { u } => Box::new(InputSequence(u.clone())),
            InputConfig::Feedback { k, perturbation } => {
                Box::new(StateFeedback { gain: k.clone(), perturbation: perturbation.clone() })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: SystemModel,
    #[serde(with = "serde_vec")]
    pub x0: DVector<f64>,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(default)]
    pub process_noise: NoiseSpec,
    #[serde(default)]
    pub obs_noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<InputConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defense: Option<DefenseConfig>,
}

impl ScenarioConfig {
    /// Every schema problem found, empty when the scenario is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.model.violations();
        let (n, m, q) = (self.model.n(), self.model.m(), self.model.q());
        if self.x0.len() != n {
            out.push(format!("x0 must have length {n}, found {}", self.x0.len()));
        }
        if self.t == 0 {
            out.push("T must be positive".to_string());
        }
        out.extend(self.process_noise.violations("process_noise", Some(n)));
        out.extend(self.obs_noise.violations("obs_noise", Some(m)));
        if let Some(input) = &self.input {
            if self.model.b().is_none() {
                out.push("input requires B".to_string());
            }
            match input {
                InputConfig::Gaussian { variance } if !(variance.is_finite() && *variance >= 0.0) => {
                    out.push("input.variance must be a finite nonnegative number".to_string());
                }
                InputConfig::Sequence { u } if u.nrows() != q || u.ncols() < self.t => {
                    out.push(format!("input.U must be {q} x {} or wider, found {:?}", self.t, u.shape()));
                }
                InputConfig::Feedback { k, perturbation } => {
                    if k.shape() != (q, n) {
                        out.push(format!("input.K must be {q} x {n}, found {:?}", k.shape()));
                    }
                    out.extend(perturbation.violations("input.perturbation", Some(q)));
                }
                _ => {}
            }
        }
        if let Some(d) = &self.defense {
            out.extend(d.violations(n));
            if self.model.b().is_some() {
                out.push("defense runs take no B".to_string());
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }

    /// Simulates the scenario with its seed, or `seed` when given.
    pub fn simulate(&self, seed: Option<u64>) -> Result<Trajectory> {
        self.validate()?;
        let source = self.input.as_ref().map(|i| i.source(self.model.q()));
        simulate(
            &self.model,
            &self.x0,
            self.t,
            &self.process_noise,
            &self.obs_noise,
            source.as_deref(),
            seed.unwrap_or(self.seed),
        )
    }

    pub fn run_defense(&self, seed: Option<u64>) -> Result<DefendedRun> {
        self.validate()?;
        let cfg = self
            .defense
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("scenario has no defense section".into()))?;
        run_defended(&self.model, &self.x0, cfg, seed.unwrap_or(self.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BENCH: &str = r#"{
        "model": {"A": [[0.9, 0.1], [0.2, 0.8]]},
        "x0": [1.0, -1.0],
        "T": 10,
        "obs_noise": {"family": "gaussian", "variance": 0.25}
    }"#;

    #[test]
    fn parses_and_runs() {
        let s: ScenarioConfig = serde_json::from_str(BENCH).unwrap();
        assert!(s.violations().is_empty());
        let tr = s.simulate(Some(3)).unwrap();
        assert_eq!(tr.x.shape(), (2, 11));
    }

    #[test]
    fn reports_schema_problems() {
        let mut s: ScenarioConfig = serde_json::from_str(BENCH).unwrap();
        s.model = serde_json::from_str(r#"{"A": [[1,0],[0,1],[1,1]]}"#).unwrap();
        s.obs_noise = NoiseSpec::gaussian(1.0).with_decay(1.0, 1.2);
        let v = s.violations();
        assert!(v.contains(&"A must be square".to_string()), "{v:?}");
        assert!(v.contains(&"rho must lie in [0,1)".to_string()), "{v:?}");
    }
}

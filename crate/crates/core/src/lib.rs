//! Inference attacks on the state, topology, and control laws of linear
//! networked dynamical systems, together with the noise-injection defenses
//! and secrecy metrics used to evaluate them.

pub mod dynamics;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod montecarlo;
pub mod noise;
pub mod scenario;
pub mod secrecy_defense;
pub mod secrecy_metrics;
pub mod state_inference;
pub mod sysid;
pub mod topology_inference;

pub use dynamics::{
    build_consensus_benchmark, build_consensus_benchmark_rational, build_double_integrator_network,
    classify_stability, simulate, InputSource, StabilityClass, SystemModel, Trajectory,
};
pub use error::{Error, Result};
pub use noise::{Channel, NoiseFamily, NoiseSpec, NoiseStream};
pub use scenario::ScenarioConfig;
pub use secrecy_defense::{DefendedRun, DefenseConfig, EtaDesigner};
pub use secrecy_metrics::{PredictabilityReport, SecrecyReport};
pub use state_inference::{ObservabilityBundle, StateEstimate};
pub use sysid::{MarkovEstimate, RealizedModel};
pub use topology_inference::{ObservationStacks, TopologyEstimate, TopologyMethod};

pub use nalgebra::{DMatrix, DVector};

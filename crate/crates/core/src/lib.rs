//! Distributed output regulation for heterogeneous, uncertain linear agents
//! over switching directed networks.
//!
//! Each agent runs two consensus-driven pieces: an exosystem generator that
//! reconstructs the exosystem state and matrix locally, and a dynamic
//! compensator embedding an internal model whose eigenvalues are themselves
//! learned by consensus. The crate provides the synthesis kernels, the
//! closed-loop simulator, proof-level numerical checks and scenario I/O.
//!
//! All numerics are generic over [`Real`]; `f64` aliases are provided at the
//! crate root.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controllers;
pub mod error;
pub mod graphnet;
pub mod integrate;
pub mod io;
pub mod internal_model;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod sim;
pub mod verification;

pub use error::{Error, Result};
pub use scalar::Real;

pub use controllers::{CompensatorGains, CompensatorState, GeneratorState};
pub use graphnet::{TopologySchedule, WeightedDigraph};
pub use internal_model::InternalModelEstimate;
pub use model::{AgentModel, Exosystem};
pub use sim::{Scenario, SimulationTrace};

pub type Model = model::AgentModel<f64>;
pub type Exo = model::Exosystem<f64>;
pub type Digraph = graphnet::WeightedDigraph<f64>;
pub type Schedule = graphnet::TopologySchedule<f64>;
pub type Estimate = internal_model::InternalModelEstimate<f64>;
pub type Gains = controllers::CompensatorGains<f64>;
pub type Compensator = controllers::CompensatorState<f64>;
pub type Generator = controllers::GeneratorState<f64>;
pub type Zeros = linalg::ZeroStructure<f64>;
pub type Scenario64 = sim::Scenario<f64>;
pub type Trace = sim::SimulationTrace<f64>;
pub type Regulator = verification::RegulatorSolution<f64>;

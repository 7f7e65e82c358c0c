//! Spreading processes with higher-order interactions on directed weighted hypergraphs.

#![allow(clippy::needless_range_loop)]

pub mod bi_virus;
pub mod error;
pub mod general_model;
pub mod hypergraph;
pub mod io;
pub mod matrix;
pub mod ode;
pub mod scenario;
pub mod single_virus;
pub mod spectral;
pub mod stochastic;
pub mod system;

pub use error::{Error, Result};
pub use matrix::SquareMatrix;
pub use bi_virus::{BiModel, BiVirusModel, Virus};
pub use general_model::{FamilySpec, GeneralBiModel, GeneralModel};
pub use hypergraph::{DirectedHypergraph, Hyperedge, InteractionRule, NodeSet};
pub use ode::{Domain, IntegratorConfig, TrajectoryRecord};
pub use scenario::{Scenario, ScenarioModel};
pub use single_virus::{Rates, SingleVirusModel};
pub use system::{Dynamics, EquilibriumReport, HealthyStability, SpreadingModel, Stability};

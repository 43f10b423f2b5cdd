//! Model-based optimization over constrained categorical domains with ReLU
//! network surrogates whose acquisition step is solved exactly as a MILP.

pub mod domain;
pub mod evo;
pub mod harness;
pub mod mbo;
pub mod milp;
pub mod nas;
pub mod netencode;
pub mod objectives;
pub mod rng;
pub mod surrogate;

pub use domain::{CategoricalDomain, DomainError, EncodedPoint, LinearConstraint, OneHot, Point, Sense};
pub use evo::{EvoConfig, EvoError, SubsetPairs};
pub use harness::{ExperimentConfig, HarnessError, ScoreTable};
pub use mbo::{History, MboConfig, MboError, Record, RecordStatus};
pub use milp::{MilpBackend, MilpError, MilpModel, SolveOptions, SolveResult, SolveStatus};
pub use nas::{Cell, CellSpec, NasTable};
pub use objectives::{BlackBox, Objective};
pub use surrogate::{Mlp, Surrogate, TrainConfig};

//! Coupled low-rank function factorization over nonlocal groups.

mod engine;
pub mod bounds;
mod model;
mod plan;
mod train;

pub use bounds::{frank_bound_check, lipschitz_bound_check, BoundReport, RankReport};
pub use model::{contract_core, CrnlModel, FactorSpec, ModelCheckpoint, ModelLayout};
pub use plan::{ContractionPlan, PlanForward};
pub use train::{train, train_model, LossParts, Objective, TrainConfig, TrainReport};

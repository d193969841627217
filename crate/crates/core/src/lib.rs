//! Permutation flow-shop scheduling with finite intermediate buffers.
//!
//! Scheduling rule-sets (one attribute-weight vector per cell of a decomposed
//! state space) are evolved by a genetic algorithm and compared against
//! Johnson's rule, simulated annealing and exhaustive search.

pub mod baselines;
pub mod bench;
pub mod dispatch;
pub mod engine;
pub mod error;
pub mod gbml;
pub mod model;
pub mod monitor;

pub use baselines::{brute_force_optimal, johnson_sequence, simulated_annealing, SaConfig};
pub use dispatch::{
    dispatch_schedule, Dispatcher, RuleSet, StateDecomposition, TieBreak, WeightVector,
};
pub use engine::{
    run_algorithm, Algorithm, AlgorithmSpec, EngineConfig, RunResult, TimelineDocument,
};
pub use error::{BaselineError, BenchError, DispatchError, GbmlError, ModelError};
pub use gbml::{evolve, GbmlConfig, Genome};
pub use model::{
    buffer_occupancy, evaluate_timeline, makespan, validate_instance, Capacity, Instance,
    ScheduleTimeline, Sequence, Time,
};

//! HTTP front end for the flow-shop engine: instance storage, queued
//! optimization runs with pollable progress, and what-if evaluation.

pub mod api;
pub mod runs;
pub mod store;

pub use api::{app, ApiError, AppState};
pub use runs::{RunManager, RunProgress, RunRecord, RunStatus};
pub use store::Store;

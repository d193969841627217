//! Progress reporting and cooperative cancellation for long-running searches.

use std::sync::atomic::{AtomicBool, Ordering};

/// Snapshot emitted after each GA generation or SA temperature block.
#[derive(Debug, Clone, PartialEq)]
pub struct Progress<'a> {
    /// Generation number (GA, 1-based) or evaluations spent so far (SA).
    pub step: usize,
    pub best_objective: f64,
    pub mean_objective: Option<f64>,
    pub best_fitness: Option<f64>,
    pub best_sequence: &'a [usize],
}

/// Receives progress and is polled for cancellation between iteration blocks.
pub trait Monitor {
    fn report(&mut self, _progress: &Progress<'_>) {}

    fn should_stop(&self) -> bool {
        false
    }
}

impl Monitor for () {}

/// Monitor that only honors a shared cancellation flag.
impl Monitor for AtomicBool {
    fn should_stop(&self) -> bool {
        self.load(Ordering::Relaxed)
    }
}

/// Adapts a closure into a [`Monitor`] with an optional cancellation flag.
pub struct FnMonitor<'f, F> {
    pub on_progress: F,
    pub cancel: Option<&'f AtomicBool>,
}

impl<F: FnMut(&Progress<'_>)> Monitor for FnMonitor<'_, F> {
    fn report(&mut self, progress: &Progress<'_>) {
        (self.on_progress)(progress)
    }

    fn should_stop(&self) -> bool {
        self.cancel.is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

//! Asynchronous run execution.
//!
//! Runs wait in a FIFO queue (a fair semaphore) and execute on the blocking
//! pool, at most `workers` at a time. The executor is the only writer of a
//! running record; readers take snapshots under a read lock.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use flowshop_core::engine::{run_algorithm, Algorithm, AlgorithmSpec, HistoryPoint, RunResult};
use flowshop_core::monitor::{Monitor, Progress};
use flowshop_core::{Capacity, Instance};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::store::Store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    Running,
    Done,
    Cancelled,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            RunStatus::Done | RunStatus::Cancelled | RunStatus::Failed
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunProgress {
    /// Generation (GA) or evaluations spent (SA).
    pub counter: usize,
    pub best_objective: Option<f64>,
    pub best_sequence: Option<Vec<usize>>,
    pub curve: Vec<HistoryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub algorithm: Algorithm,
    pub instance_id: String,
    pub buffers: Vec<Capacity>,
    pub config: serde_json::Value,
    pub status: RunStatus,
    pub progress: RunProgress,
    pub result: Option<RunResult>,
    pub error: Option<String>,
    pub created_at: u64,
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn run_token() -> String {
    let bits: u64 = rand::thread_rng().gen();
    format!("r{bits:016x}")
}

struct RunHandle {
    record: RwLock<RunRecord>,
    cancel: AtomicBool,
}

impl RunHandle {
    fn snapshot(&self) -> RunRecord {
        self.record.read().expect("run lock").clone()
    }

    fn update(&self, f: impl FnOnce(&mut RunRecord)) -> RunRecord {
        let mut guard = self.record.write().expect("run lock");
        f(&mut guard);
        guard.clone()
    }
}

struct ProgressWriter<'a> {
    handle: &'a RunHandle,
}

impl Monitor for ProgressWriter<'_> {
    fn report(&mut self, p: &Progress<'_>) {
        self.handle.update(|r| {
            r.progress.counter = r.progress.counter.max(p.step);
            r.progress.best_objective = Some(
                r.progress
                    .best_objective
                    .map_or(p.best_objective, |b| b.min(p.best_objective)),
            );
            r.progress.best_sequence = Some(p.best_sequence.to_vec());
            r.progress.curve.push(HistoryPoint {
                step: p.step,
                best_objective: p.best_objective,
                mean_objective: p.mean_objective,
                best_fitness: p.best_fitness,
            });
        });
    }

    fn should_stop(&self) -> bool {
        self.handle.cancel.load(Ordering::Relaxed)
    }
}

/// Owns all run records and the worker queue.
pub struct RunManager {
    store: Store,
    runs: RwLock<HashMap<String, Arc<RunHandle>>>,
    slots: Arc<Semaphore>,
}

impl RunManager {
    /// Loads persisted runs; any that were queued or running are marked failed.
    pub fn open(store: Store, workers: usize) -> std::io::Result<Self> {
        let mut runs = HashMap::new();
        for mut record in store.load_runs()? {
            if !record.status.is_terminal() {
                record.status = RunStatus::Failed;
                record.error = Some("interrupted by service restart".into());
                record.finished_at = Some(now_ms());
                store.put_run(&record)?;
            }
            runs.insert(
                record.id.clone(),
                Arc::new(RunHandle {
                    record: RwLock::new(record),
                    cancel: AtomicBool::new(false),
                }),
            );
        }
        Ok(RunManager {
            store,
            runs: RwLock::new(runs),
            slots: Arc::new(Semaphore::new(workers.max(1))),
        })
    }

    pub fn get(&self, id: &str) -> Option<RunRecord> {
        self.runs
            .read()
            .expect("runs lock")
            .get(id)
            .map(|h| h.snapshot())
    }

    pub fn list(&self) -> Vec<RunRecord> {
        let mut all: Vec<RunRecord> = self
            .runs
            .read()
            .expect("runs lock")
            .values()
            .map(|h| h.snapshot())
            .collect();
        all.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        all
    }

    /// Requests cancellation; takes effect between generations or iteration blocks.
    pub fn cancel(&self, id: &str) -> Option<RunRecord> {
        let handle = self.runs.read().expect("runs lock").get(id).cloned()?;
        handle.cancel.store(true, Ordering::Relaxed);
        Some(handle.snapshot())
    }

    /// Queues a run on the blocking pool. The caller has validated the spec.
    pub fn submit(
        self: &Arc<Self>,
        instance_key: String,
        instance: Instance,
        spec: AlgorithmSpec,
        config: serde_json::Value,
    ) -> std::io::Result<RunRecord> {
        let record = RunRecord {
            id: run_token(),
            algorithm: spec.algorithm(),
            instance_id: instance_key,
            buffers: instance.buffers().to_vec(),
            config,
            status: RunStatus::Queued,
            progress: RunProgress::default(),
            result: None,
            error: None,
            created_at: now_ms(),
            started_at: None,
            finished_at: None,
        };
        self.store.put_run(&record)?;
        let handle = Arc::new(RunHandle {
            record: RwLock::new(record.clone()),
            cancel: AtomicBool::new(false),
        });
        self.runs
            .write()
            .expect("runs lock")
            .insert(record.id.clone(), handle.clone());

        let manager = Arc::clone(self);
        let slots = Arc::clone(&self.slots);
        tokio::spawn(async move {
            let Ok(_permit) = slots.acquire_owned().await else {
                return;
            };
            let job = {
                let manager = Arc::clone(&manager);
                let handle = Arc::clone(&handle);
                move || manager.execute(&handle, &instance, &spec)
            };
            if let Err(e) = tokio::task::spawn_blocking(job).await {
                let record = handle.update(|r| {
                    r.status = RunStatus::Failed;
                    r.error = Some(format!("worker panicked: {e}"));
                    r.finished_at = Some(now_ms());
                });
                let _ = manager.store.put_run(&record);
            }
        });
        Ok(record)
    }

    fn execute(&self, handle: &RunHandle, instance: &Instance, spec: &AlgorithmSpec) {
        let record = handle.update(|r| {
            r.status = RunStatus::Running;
            r.started_at = Some(now_ms());
        });
        self.persist(&record);

        let outcome = if handle.cancel.load(Ordering::Relaxed) {
            None
        } else {
            Some(run_algorithm(
                instance,
                spec,
                &mut ProgressWriter { handle },
            ))
        };
        let record = handle.update(|r| {
            r.finished_at = Some(now_ms());
            match outcome {
                None => r.status = RunStatus::Cancelled,
                Some(Ok(o)) if o.cancelled => {
                    r.status = RunStatus::Cancelled;
                    r.progress.best_sequence = Some(o.result.sequence);
                    r.progress.best_objective = Some(o.result.makespan as f64);
                }
                Some(Ok(o)) => {
                    r.status = RunStatus::Done;
                    r.result = Some(o.result);
                }
                Some(Err(e)) => {
                    r.status = RunStatus::Failed;
                    r.error = Some(e.to_string());
                }
            }
        });
        self.persist(&record);
    }

    fn persist(&self, record: &RunRecord) {
        if let Err(e) = self.store.put_run(record) {
            tracing::error!(run = %record.id, error = %e, "failed to persist run record");
        }
    }
}

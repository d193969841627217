//! Problem instances, job sequences and exact schedule timelines.
//!
//! Jobs visit machines `0..m` in the same order. Between machine `k` and
//! machine `k + 1` sits an intermediate buffer of capacity `buffers[k]`. A job
//! that finishes on machine `k` while the downstream buffer is full keeps the
//! machine occupied (blocking) until a slot frees up.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Integer time units.
pub type Time = u64;

/// Capacity of one intermediate buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capacity {
    Bounded(u32),
    Unbounded,
}

impl Capacity {
    /// `true` when `self` holds at least as many jobs as `other`.
    pub fn at_least(self, other: Capacity) -> bool {
        match (self, other) {
            (Capacity::Unbounded, _) => true,
            (Capacity::Bounded(_), Capacity::Unbounded) => false,
            (Capacity::Bounded(a), Capacity::Bounded(b)) => a >= b,
        }
    }

    pub fn as_option(self) -> Option<u32> {
        match self {
            Capacity::Bounded(b) => Some(b),
            Capacity::Unbounded => None,
        }
    }
}

impl From<Option<u32>> for Capacity {
    fn from(v: Option<u32>) -> Self {
        v.map_or(Capacity::Unbounded, Capacity::Bounded)
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Bounded(b) => write!(f, "{b}"),
            Capacity::Unbounded => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Capacity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "Inf" | "INF" | "unbounded" | "null" | "∞" => Ok(Capacity::Unbounded),
            other => other
                .parse::<u32>()
                .map(Capacity::Bounded)
                .map_err(|_| format!("invalid buffer capacity `{other}`")),
        }
    }
}

impl Serialize for Capacity {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.as_option().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Capacity {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Option::<u32>::deserialize(deserializer).map(Capacity::from)
    }
}

/// Unvalidated instance document, as read from JSON.
///
/// Field order is the canonical serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawInstance {
    pub id: String,
    pub m: i64,
    pub n: i64,
    pub p: Vec<Vec<i64>>,
    pub buffers: Vec<Option<i64>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A validated flow-shop instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    id: String,
    p: Vec<Vec<Time>>,
    buffers: Vec<Capacity>,
    seed: Option<u64>,
}

impl Instance {
    /// Builds an instance from a job-major processing-time matrix.
    pub fn new(
        id: impl Into<String>,
        p: Vec<Vec<Time>>,
        buffers: Vec<Capacity>,
        seed: Option<u64>,
    ) -> Result<Self, ModelError> {
        let n = p.len();
        if n == 0 {
            return Err(ModelError::NoJobs);
        }
        let m = p[0].len();
        if m == 0 {
            return Err(ModelError::NoMachines);
        }
        for (row, times) in p.iter().enumerate() {
            if times.len() != m {
                return Err(ModelError::RowLength {
                    row,
                    expected: m,
                    found: times.len(),
                });
            }
        }
        if buffers.len() != m - 1 {
            return Err(ModelError::BufferCount {
                expected: m - 1,
                found: buffers.len(),
            });
        }
        Ok(Instance {
            id: id.into(),
            p,
            buffers,
            seed,
        })
    }

    /// Same processing times, every buffer set to `capacity`.
    pub fn with_uniform_buffers(&self, capacity: Capacity) -> Self {
        Instance {
            buffers: vec![capacity; self.machines() - 1],
            ..self.clone()
        }
    }

    pub fn with_buffers(&self, buffers: Vec<Capacity>) -> Result<Self, ModelError> {
        if buffers.len() != self.machines() - 1 {
            return Err(ModelError::BufferCount {
                expected: self.machines() - 1,
                found: buffers.len(),
            });
        }
        Ok(Instance {
            buffers,
            ..self.clone()
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn machines(&self) -> usize {
        self.p[0].len()
    }

    pub fn jobs(&self) -> usize {
        self.p.len()
    }

    /// Processing time of `job` on `machine`.
    pub fn time(&self, job: usize, machine: usize) -> Time {
        self.p[job][machine]
    }

    pub fn processing_times(&self) -> &[Vec<Time>] {
        &self.p
    }

    pub fn buffers(&self) -> &[Capacity] {
        &self.buffers
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn to_raw(&self) -> RawInstance {
        RawInstance {
            id: self.id.clone(),
            m: self.machines() as i64,
            n: self.jobs() as i64,
            p: self
                .p
                .iter()
                .map(|row| row.iter().map(|&t| t as i64).collect())
                .collect(),
            buffers: self
                .buffers
                .iter()
                .map(|b| b.as_option().map(i64::from))
                .collect(),
            seed: self.seed,
        }
    }

    /// Canonical JSON document (`id, m, n, p, buffers, seed`).
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_raw()).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let raw: RawInstance =
            serde_json::from_str(s).map_err(|e| ModelError::Parse(e.to_string()))?;
        validate_instance(raw)
    }
}

/// Checks every instance invariant and converts to [`Instance`].
pub fn validate_instance(raw: RawInstance) -> Result<Instance, ModelError> {
    if raw.m < 1 {
        return Err(ModelError::NoMachines);
    }
    if raw.n < 1 {
        return Err(ModelError::NoJobs);
    }
    let (m, n) = (raw.m as usize, raw.n as usize);
    if raw.p.len() != n {
        return Err(ModelError::RowCount {
            expected: n,
            found: raw.p.len(),
        });
    }
    let mut p = Vec::with_capacity(n);
    for (job, row) in raw.p.iter().enumerate() {
        if row.len() != m {
            return Err(ModelError::RowLength {
                row: job,
                expected: m,
                found: row.len(),
            });
        }
        let mut times = Vec::with_capacity(m);
        for (machine, &value) in row.iter().enumerate() {
            if value < 0 {
                return Err(ModelError::NegativeTime {
                    job,
                    machine,
                    value,
                });
            }
            times.push(value as Time);
        }
        p.push(times);
    }
    if raw.buffers.len() != m - 1 {
        return Err(ModelError::BufferCount {
            expected: m - 1,
            found: raw.buffers.len(),
        });
    }
    let mut buffers = Vec::with_capacity(m - 1);
    for (stage, cap) in raw.buffers.iter().enumerate() {
        buffers.push(match *cap {
            None => Capacity::Unbounded,
            Some(v) if v < 0 || v > i64::from(u32::MAX) => {
                return Err(ModelError::InvalidCapacity { stage, value: v })
            }
            Some(v) => Capacity::Bounded(v as u32),
        });
    }
    Instance::new(raw.id, p, buffers, raw.seed)
}

/// A permutation of job indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Sequence(Vec<usize>);

impl Sequence {
    /// Validates that `order` is a permutation of `0..n`.
    pub fn new(order: Vec<usize>, n: usize) -> Result<Self, ModelError> {
        if order.len() != n {
            return Err(ModelError::SequenceLength {
                expected: n,
                found: order.len(),
            });
        }
        let mut seen = vec![false; n];
        for (position, &job) in order.iter().enumerate() {
            if job >= n {
                return Err(ModelError::JobOutOfRange { position, job, n });
            }
            if std::mem::replace(&mut seen[job], true) {
                return Err(ModelError::DuplicateJob { position, job });
            }
        }
        Ok(Sequence(order))
    }

    pub fn identity(n: usize) -> Self {
        Sequence((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    /// Swaps two positions. Indices must be in range.
    pub fn swap(&mut self, a: usize, b: usize) {
        self.0.swap(a, b);
    }

    /// Removes the job at `from` and reinserts it at `to`.
    pub fn reinsert(&mut self, from: usize, to: usize) {
        let job = self.0.remove(from);
        self.0.insert(to, job);
    }
}

/// Per-job, per-machine start/finish/departure times of a complete or partial
/// schedule. Rows are indexed by job id, not by sequence position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScheduleTimeline {
    pub order: Vec<usize>,
    pub start: Vec<Vec<Time>>,
    pub finish: Vec<Vec<Time>>,
    pub depart: Vec<Vec<Time>>,
    pub makespan: Time,
}

/// A span during which `job` sat finished on `machine` waiting for buffer space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingInterval {
    pub job: usize,
    pub machine: usize,
    pub from: Time,
    pub to: Time,
}

impl ScheduleTimeline {
    pub fn machines(&self) -> usize {
        self.start.first().map_or(0, Vec::len)
    }

    pub fn blocking_intervals(&self) -> Vec<BlockingInterval> {
        let mut out = Vec::new();
        for &job in &self.order {
            for machine in 0..self.machines() {
                let (from, to) = (self.finish[job][machine], self.depart[job][machine]);
                if to > from {
                    out.push(BlockingInterval {
                        job,
                        machine,
                        from,
                        to,
                    });
                }
            }
        }
        out
    }

    /// Occupancy of buffer `stage` as a right-continuous step function:
    /// `(t, count)` pairs, each count holding from `t` until the next pair.
    pub fn occupancy_steps(&self, stage: usize) -> Result<Vec<(Time, usize)>, ModelError> {
        self.check_stage(stage)?;
        let mut times: Vec<Time> = self
            .order
            .iter()
            .flat_map(|&j| [self.depart[j][stage], self.start[j][stage + 1]])
            .collect();
        times.sort_unstable();
        times.dedup();
        let mut steps: Vec<(Time, usize)> = Vec::new();
        for t in times {
            let count = self.occupancy_at(stage, t as f64);
            if steps.last().is_none_or(|&(_, c)| c != count) {
                steps.push((t, count));
            }
        }
        Ok(steps)
    }

    fn check_stage(&self, stage: usize) -> Result<(), ModelError> {
        let stages = self.machines().saturating_sub(1);
        if stage >= stages {
            return Err(ModelError::StageOutOfRange { stage, stages });
        }
        Ok(())
    }

    fn occupancy_at(&self, stage: usize, t: f64) -> usize {
        self.order
            .iter()
            .filter(|&&j| self.depart[j][stage] as f64 <= t && t < self.start[j][stage + 1] as f64)
            .count()
    }
}

/// Number of jobs that have left machine `stage` but not yet started machine
/// `stage + 1` at time `t`.
pub fn buffer_occupancy(
    timeline: &ScheduleTimeline,
    stage: usize,
    t: f64,
) -> Result<usize, ModelError> {
    if timeline.order.is_empty() {
        return Ok(0);
    }
    timeline.check_stage(stage)?;
    Ok(timeline.occupancy_at(stage, t))
}

/// Incremental timeline construction, one job appended at a time.
///
/// Position `i` on machine `k`:
/// `S = max(D[k-1][i], D[k][i-1])`, `F = S + p`, and for non-final machines
/// `D = max(F, S[k+1][i-b])` with `b = buffers[k]`. For `b = 0` the release
/// time is the departure of the predecessor from machine `k + 1`.
#[derive(Debug, Clone)]
pub struct TimelineBuilder<'a> {
    instance: &'a Instance,
    timeline: ScheduleTimeline,
}

impl<'a> TimelineBuilder<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        let (n, m) = (instance.jobs(), instance.machines());
        TimelineBuilder {
            instance,
            timeline: ScheduleTimeline {
                order: Vec::with_capacity(n),
                start: vec![vec![0; m]; n],
                finish: vec![vec![0; m]; n],
                depart: vec![vec![0; m]; n],
                makespan: 0,
            },
        }
    }

    pub fn timeline(&self) -> &ScheduleTimeline {
        &self.timeline
    }

    pub fn scheduled(&self) -> usize {
        self.timeline.order.len()
    }

    /// Appends `job` after the jobs already placed. The caller guarantees the
    /// job has not been placed before.
    pub fn push(&mut self, job: usize) {
        let inst = self.instance;
        let m = inst.machines();
        let tl = &mut self.timeline;
        let pos = tl.order.len();
        let prev = pos.checked_sub(1).map(|q| tl.order[q]);
        let mut arrival: Time = 0;
        for k in 0..m {
            let free = prev.map_or(0, |q| tl.depart[q][k]);
            let start = arrival.max(free);
            let finish = start + inst.time(job, k);
            let depart = if k + 1 == m {
                finish
            } else {
                let release = match inst.buffers()[k] {
                    Capacity::Unbounded => 0,
                    Capacity::Bounded(0) => prev.map_or(0, |q| tl.depart[q][k + 1]),
                    Capacity::Bounded(b) => pos
                        .checked_sub(b as usize)
                        .map_or(0, |q| tl.start[tl.order[q]][k + 1]),
                };
                finish.max(release)
            };
            tl.start[job][k] = start;
            tl.finish[job][k] = finish;
            tl.depart[job][k] = depart;
            arrival = depart;
        }
        tl.makespan = tl.makespan.max(tl.finish[job][m - 1]);
        tl.order.push(job);
    }

    pub fn finish(self) -> ScheduleTimeline {
        self.timeline
    }
}

/// Exact timeline of `seq` on `instance`.
pub fn evaluate_timeline(instance: &Instance, seq: &Sequence) -> ScheduleTimeline {
    debug_assert_eq!(seq.len(), instance.jobs());
    let mut builder = TimelineBuilder::new(instance);
    for &job in seq.as_slice() {
        builder.push(job);
    }
    builder.finish()
}

/// Makespan of `order` without materializing the full timeline.
pub fn makespan_of(instance: &Instance, order: &[usize]) -> Time {
    let m = instance.machines();
    let buffers = instance.buffers();
    // start/depart per position, machine-major rows reused across positions
    let n = order.len();
    let mut start = vec![0 as Time; n * m];
    let mut depart = vec![0 as Time; n * m];
    let mut makespan = 0;
    for (pos, &job) in order.iter().enumerate() {
        let mut arrival = 0;
        for k in 0..m {
            let free = if pos > 0 {
                depart[(pos - 1) * m + k]
            } else {
                0
            };
            let s = arrival.max(free);
            let f = s + instance.time(job, k);
            let d = if k + 1 == m {
                makespan = makespan.max(f);
                f
            } else {
                let release = match buffers[k] {
                    Capacity::Unbounded => 0,
                    Capacity::Bounded(0) => {
                        if pos > 0 {
                            depart[(pos - 1) * m + k + 1]
                        } else {
                            0
                        }
                    }
                    Capacity::Bounded(b) => pos
                        .checked_sub(b as usize)
                        .map_or(0, |q| start[q * m + k + 1]),
                };
                f.max(release)
            };
            start[pos * m + k] = s;
            depart[pos * m + k] = d;
            arrival = d;
        }
    }
    makespan
}

/// Makespan of `seq` on `instance`; equal to `evaluate_timeline(..).makespan`.
pub fn makespan(instance: &Instance, seq: &Sequence) -> Time {
    makespan_of(instance, seq.as_slice())
}

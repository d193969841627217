//! Single-algorithm runs with a shared result document, used by both the CLI
//! and the HTTP service so their outputs are byte-identical.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{johnson_sequence, simulated_annealing, SaConfig};
use crate::dispatch::DispatchConfig;
use crate::error::{BaselineError, DispatchError, GbmlError};
use crate::gbml::{evolve, GbmlConfig};
use crate::model::{
    evaluate_timeline, makespan, BlockingInterval, Capacity, Instance, Sequence, Time,
};
use crate::monitor::Monitor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gbml,
    Johnson,
    Sa,
    Brute,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Gbml => "gbml",
            Algorithm::Johnson => "johnson",
            Algorithm::Sa => "sa",
            Algorithm::Brute => "brute",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gbml" => Ok(Algorithm::Gbml),
            "johnson" => Ok(Algorithm::Johnson),
            "sa" => Ok(Algorithm::Sa),
            "brute" => Ok(Algorithm::Brute),
            other => Err(EngineError::UnknownAlgorithm(other.to_string())),
        }
    }
}

/// GA parameters together with the dispatch section they evolve rules for.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub gbml: GbmlConfig,
    pub dispatch: DispatchConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlgorithmSpec {
    Johnson,
    Sa(SaConfig),
    Gbml(EngineConfig),
    Brute,
}

impl AlgorithmSpec {
    /// Parses the algorithm-specific config; `null` selects defaults.
    pub fn from_json(
        algorithm: Algorithm,
        config: &serde_json::Value,
    ) -> Result<Self, EngineError> {
        let cfg = if config.is_null() {
            serde_json::json!({})
        } else {
            config.clone()
        };
        let bad = |e: serde_json::Error| EngineError::Config(e.to_string());
        Ok(match algorithm {
            Algorithm::Johnson => AlgorithmSpec::Johnson,
            Algorithm::Brute => AlgorithmSpec::Brute,
            Algorithm::Sa => AlgorithmSpec::Sa(serde_json::from_value(cfg).map_err(bad)?),
            Algorithm::Gbml => AlgorithmSpec::Gbml(serde_json::from_value(cfg).map_err(bad)?),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            AlgorithmSpec::Johnson => Algorithm::Johnson,
            AlgorithmSpec::Sa(_) => Algorithm::Sa,
            AlgorithmSpec::Gbml(_) => Algorithm::Gbml,
            AlgorithmSpec::Brute => Algorithm::Brute,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            AlgorithmSpec::Sa(c) => c.seed = seed,
            AlgorithmSpec::Gbml(c) => c.gbml.seed = seed,
            _ => {}
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub step: usize,
    pub best_objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_fitness: Option<f64>,
}

/// Result payload of one algorithm run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub instance_id: String,
    pub buffers: Vec<Capacity>,
    pub sequence: Vec<usize>,
    pub makespan: Time,
    /// Evolved weights, one vector per state cell (GBML only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule_set: Option<Vec<Vec<i64>>>,
    pub history: Vec<HistoryPoint>,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub result: RunResult,
    pub cancelled: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Gbml(#[from] GbmlError),
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

/// Runs one algorithm on `instance` (buffers already applied).
pub fn run_algorithm(
    instance: &Instance,
    spec: &AlgorithmSpec,
    monitor: &mut dyn Monitor,
) -> Result<RunOutcome, EngineError> {
    let base = |sequence: Vec<usize>, makespan: Time| RunResult {
        algorithm: spec.algorithm(),
        instance_id: instance.id().to_string(),
        buffers: instance.buffers().to_vec(),
        sequence,
        makespan,
        rule_set: None,
        history: vec![HistoryPoint {
            step: 1,
            best_objective: makespan as f64,
            mean_objective: None,
            best_fitness: None,
        }],
    };
    match spec {
        AlgorithmSpec::Johnson => {
            let seq = johnson_sequence(instance)?;
            let c = makespan(instance, &seq);
            Ok(RunOutcome {
                result: base(seq.into_inner(), c),
                cancelled: false,
            })
        }
        AlgorithmSpec::Brute => {
            let (seq, c) = crate::baselines::brute_force_optimal(instance)?;
            Ok(RunOutcome {
                result: base(seq.into_inner(), c),
                cancelled: false,
            })
        }
        AlgorithmSpec::Sa(cfg) => {
            let out = simulated_annealing(instance, cfg, monitor)?;
            let mut result = base(out.sequence.into_inner(), out.makespan);
            result.history = out
                .trace
                .iter()
                .map(|e| HistoryPoint {
                    step: e.evaluations,
                    best_objective: e.best as f64,
                    mean_objective: None,
                    best_fitness: None,
                })
                .collect();
            Ok(RunOutcome {
                result,
                cancelled: out.cancelled,
            })
        }
        AlgorithmSpec::Gbml(cfg) => {
            let dispatcher = cfg.dispatch.build()?;
            let out = evolve(
                &cfg.gbml,
                &dispatcher,
                std::slice::from_ref(instance),
                monitor,
            )?;
            let c = makespan(instance, &out.best_sequence);
            let mut result = base(out.best_sequence.into_inner(), c);
            result.rule_set = Some(out.best.weights.iter().map(|w| w.0.clone()).collect());
            result.history = out
                .history
                .iter()
                .map(|h| HistoryPoint {
                    step: h.generation,
                    best_objective: h.best_objective,
                    mean_objective: Some(h.mean_objective),
                    best_fitness: Some(h.best_fitness),
                })
                .collect();
            Ok(RunOutcome {
                result,
                cancelled: out.cancelled,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationTimes {
    pub job: usize,
    pub machine: usize,
    pub start: Time,
    pub finish: Time,
    pub depart: Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyStep {
    pub t: Time,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOccupancy {
    pub stage: usize,
    pub capacity: Capacity,
    pub steps: Vec<OccupancyStep>,
}

/// Serialized timeline of one sequence: what-if evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineDocument {
    pub instance_id: String,
    pub buffers: Vec<Capacity>,
    pub sequence: Vec<usize>,
    pub makespan: Time,
    /// Sequence order, machines ascending within a job.
    pub operations: Vec<OperationTimes>,
    pub blocking: Vec<BlockingInterval>,
    pub occupancy: Vec<StageOccupancy>,
}

impl TimelineDocument {
    pub fn new(instance: &Instance, seq: &Sequence) -> Self {
        let tl = evaluate_timeline(instance, seq);
        let operations = tl
            .order
            .iter()
            .flat_map(|&job| {
                let tl = &tl;
                (0..instance.machines()).map(move |machine| OperationTimes {
                    job,
                    machine,
                    start: tl.start[job][machine],
                    finish: tl.finish[job][machine],
                    depart: tl.depart[job][machine],
                })
            })
            .collect();
        let occupancy = instance
            .buffers()
            .iter()
            .enumerate()
            .map(|(stage, &capacity)| StageOccupancy {
                stage,
                capacity,
                steps: tl
                    .occupancy_steps(stage)
                    .expect("stage in range")
                    .into_iter()
                    .map(|(t, count)| OccupancyStep { t, count })
                    .collect(),
            })
            .collect();
        TimelineDocument {
            instance_id: instance.id().to_string(),
            buffers: instance.buffers().to_vec(),
            sequence: seq.as_slice().to_vec(),
            makespan: tl.makespan,
            operations,
            blocking: tl.blocking_intervals(),
            occupancy,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_job() -> Instance {
        Instance::new(
            "two",
            vec![vec![3, 1], vec![1, 3]],
            vec![Capacity::Unbounded],
            None,
        )
        .unwrap()
    }

    #[test]
    fn johnson_result_document() {
        let out = run_algorithm(&two_job(), &AlgorithmSpec::Johnson, &mut ()).unwrap();
        assert_eq!(
            out.result.to_json(),
            r#"{"algorithm":"johnson","instance_id":"two","buffers":[null],"sequence":[1,0],"makespan":5,"history":[{"step":1,"best_objective":5.0}]}"#
        );
    }

    #[test]
    fn timeline_document_shows_blocking() {
        let i = Instance::new(
            "blk",
            vec![vec![1, 5], vec![1, 1]],
            vec![Capacity::Bounded(0)],
            None,
        )
        .unwrap();
        let doc = TimelineDocument::new(&i, &Sequence::identity(2));
        assert_eq!(doc.makespan, 7);
        assert_eq!(
            doc.blocking,
            vec![BlockingInterval {
                job: 1,
                machine: 0,
                from: 2,
                to: 6
            }]
        );
        assert_eq!(doc.operations.len(), 4);
        assert_eq!(doc.occupancy[0].capacity, Capacity::Bounded(0));
    }

    #[test]
    fn saturated_buffer_document_matches_unbounded() {
        let p = vec![vec![4, 1], vec![1, 6], vec![3, 3], vec![2, 5]];
        let a = Instance::new("s", p.clone(), vec![Capacity::Unbounded], None).unwrap();
        let b = Instance::new("s", p, vec![Capacity::Bounded(3)], None).unwrap();
        let seq = Sequence::new(vec![2, 0, 3, 1], 4).unwrap();
        let (mut da, mut db) = (
            TimelineDocument::new(&a, &seq),
            TimelineDocument::new(&b, &seq),
        );
        da.buffers.clear();
        db.buffers.clear();
        da.occupancy[0].capacity = Capacity::Unbounded;
        db.occupancy[0].capacity = Capacity::Unbounded;
        assert_eq!(da, db);
    }

    #[test]
    fn spec_parsing() {
        let spec = AlgorithmSpec::from_json(
            Algorithm::Gbml,
            &serde_json::json!({"gbml": {"generations": 3}}),
        )
        .unwrap();
        match spec {
            AlgorithmSpec::Gbml(c) => {
                assert_eq!(c.gbml.generations, 3);
                assert_eq!(c.gbml.population_size, 50);
            }
            _ => panic!(),
        }
        assert!(
            AlgorithmSpec::from_json(Algorithm::Sa, &serde_json::json!({"cooling": "x"})).is_err()
        );
        assert!("tabu".parse::<Algorithm>().is_err());
    }

    #[test]
    fn gbml_result_has_rules() {
        let spec = AlgorithmSpec::Gbml(EngineConfig {
            gbml: GbmlConfig {
                population_size: 10,
                generations: 5,
                ..Default::default()
            },
            ..Default::default()
        });
        let out = run_algorithm(&two_job(), &spec, &mut ()).unwrap();
        assert_eq!(out.result.rule_set.as_ref().unwrap().len(), 8);
        assert_eq!(out.result.history.len(), 5);
        assert_eq!(out.result.makespan, 5);
    }
}

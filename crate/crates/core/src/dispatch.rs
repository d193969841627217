//! Priority-rule list scheduling driven by a state-indexed rule-set.
//!
//! At every selection step the current shop state is mapped to a point in
//! `[0,1]^d`, the point picks a cell of the [`StateDecomposition`], and that
//! cell's weight vector scores each remaining job as `Σ w_i · a_i`. The job
//! with the highest score is appended and the timeline is extended.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::DispatchError;
use crate::model::{Capacity, Instance, ScheduleTimeline, Sequence, TimelineBuilder};

/// Job attribute extractor, selected by name in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attribute {
    /// Processing time on the given (0-based) machine. Named `p1`, `p2`, ...
    Processing(usize),
    /// Sum of processing times over all machines. Named `total`.
    TotalProcessing,
}

impl Attribute {
    pub fn parse(name: &str) -> Result<Self, DispatchError> {
        if name == "total" {
            return Ok(Attribute::TotalProcessing);
        }
        name.strip_prefix('p')
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k >= 1)
            .map(|k| Attribute::Processing(k - 1))
            .ok_or_else(|| DispatchError::UnknownAttribute(name.to_string()))
    }

    pub fn name(&self) -> String {
        match self {
            Attribute::Processing(k) => format!("p{}", k + 1),
            Attribute::TotalProcessing => "total".to_string(),
        }
    }

    fn read(&self, instance: &Instance, job: usize) -> i64 {
        match *self {
            Attribute::Processing(k) => instance.time(job, k) as i64,
            Attribute::TotalProcessing => instance.processing_times()[job]
                .iter()
                .map(|&t| t as i64)
                .sum(),
        }
    }
}

/// Ordered attribute list plus the machine count it was designed for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSet {
    attributes: Vec<Attribute>,
    required_machines: Option<usize>,
}

impl Default for AttributeSet {
    /// Processing times on machine 1 and machine 2 of a two-machine shop.
    fn default() -> Self {
        AttributeSet {
            attributes: vec![Attribute::Processing(0), Attribute::Processing(1)],
            required_machines: Some(2),
        }
    }
}

impl AttributeSet {
    pub fn from_names<S: AsRef<str>>(
        names: &[S],
        required_machines: Option<usize>,
    ) -> Result<Self, DispatchError> {
        let attributes = names
            .iter()
            .map(|n| Attribute::parse(n.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(AttributeSet {
            attributes,
            required_machines,
        })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn check(&self, instance: &Instance) -> Result<(), DispatchError> {
        let machines = instance.machines();
        if let Some(required) = self.required_machines {
            if required != machines {
                return Err(DispatchError::MachineCount {
                    required,
                    found: machines,
                });
            }
        }
        for a in &self.attributes {
            if let Attribute::Processing(k) = *a {
                if k >= machines {
                    return Err(DispatchError::AttributeMachine {
                        name: a.name(),
                        machine: k,
                        machines,
                    });
                }
            }
        }
        Ok(())
    }

    /// Attribute vector of job `j`.
    pub fn job_attributes(
        &self,
        instance: &Instance,
        j: usize,
    ) -> Result<AttributeVector, DispatchError> {
        self.check(instance)?;
        Ok(self.extract(instance, j))
    }

    fn extract(&self, instance: &Instance, j: usize) -> AttributeVector {
        AttributeVector(
            self.attributes
                .iter()
                .map(|a| a.read(instance, j))
                .collect(),
        )
    }
}

/// Default-configuration attributes of job `j`.
pub fn job_attributes(instance: &Instance, j: usize) -> Result<AttributeVector, DispatchError> {
    AttributeSet::default().job_attributes(instance, j)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeVector(pub Vec<i64>);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<i64>);

/// `α = Σ w_i a_i` in exact integer arithmetic.
pub fn priority(w: &WeightVector, a: &AttributeVector) -> Result<i64, DispatchError> {
    if w.0.len() != a.0.len() {
        return Err(DispatchError::LengthMismatch {
            weights: w.0.len(),
            attributes: a.0.len(),
        });
    }
    Ok(dot(&w.0, &a.0))
}

fn dot(w: &[i64], a: &[i64]) -> i64 {
    w.iter().zip(a).map(|(w, a)| w * a).sum()
}

/// A scalar descriptor of the partially built schedule, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateFeature {
    /// Fraction of jobs already sequenced. Named `completion`.
    CompletionFraction,
    /// Occupancy of the first intermediate buffer, divided by its capacity, at
    /// the moment the last sequenced job leaves machine 1. Zero for unbounded
    /// or zero-capacity buffers. Named `buffer_occupancy`.
    BufferOccupancy,
}

impl StateFeature {
    pub fn parse(name: &str) -> Result<Self, DispatchError> {
        match name {
            "completion" => Ok(StateFeature::CompletionFraction),
            "buffer_occupancy" => Ok(StateFeature::BufferOccupancy),
            other => Err(DispatchError::UnknownFeature(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StateFeature::CompletionFraction => "completion",
            StateFeature::BufferOccupancy => "buffer_occupancy",
        }
    }

    fn measure(&self, ctx: &DispatchContext<'_>) -> f64 {
        let tl = ctx.timeline;
        let n = ctx.instance.jobs();
        match self {
            StateFeature::CompletionFraction => tl.order.len() as f64 / n as f64,
            StateFeature::BufferOccupancy => {
                let Some(&last) = tl.order.last() else {
                    return 0.0;
                };
                let cap = match ctx.instance.buffers().first() {
                    Some(Capacity::Bounded(b)) if *b > 0 => *b as usize,
                    _ => return 0.0,
                };
                let t = tl.depart[last][0];
                let held = tl
                    .order
                    .iter()
                    .filter(|&&j| tl.depart[j][0] <= t && t < tl.start[j][1])
                    .count();
                (held as f64 / cap as f64).min(1.0)
            }
        }
    }
}

/// What the state extractor sees: the instance and the timeline built so far.
#[derive(Debug, Clone, Copy)]
pub struct DispatchContext<'a> {
    pub instance: &'a Instance,
    pub timeline: &'a ScheduleTimeline,
}

/// Axis-aligned box `[lo, hi)` per dimension; an upper edge at 1 is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub bounds: Vec<(f64, f64)>,
}

impl Cell {
    fn contains(&self, s: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(s)
            .all(|(&(lo, hi), &x)| lo <= x && (x < hi || (hi >= 1.0 && x <= 1.0)))
    }

    fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    fn overlaps(&self, other: &Cell) -> bool {
        self.bounds
            .iter()
            .zip(&other.bounds)
            .all(|(&(a_lo, a_hi), &(b_lo, b_hi))| a_lo < b_hi && b_lo < a_hi)
    }
}

/// Partition of `[0,1]^d` into disjoint boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDecomposition {
    features: Vec<StateFeature>,
    cells: Vec<Cell>,
}

impl StateDecomposition {
    /// One cell covering everything; no features are measured.
    pub fn single() -> Self {
        StateDecomposition {
            features: Vec::new(),
            cells: vec![Cell { bounds: Vec::new() }],
        }
    }

    /// Explicit cells, checked to be pairwise disjoint and to cover the cube.
    pub fn from_cells(
        features: Vec<StateFeature>,
        cells: Vec<Cell>,
    ) -> Result<Self, DispatchError> {
        let d = features.len();
        if cells.is_empty() {
            return Err(DispatchError::BadDecomposition("no cells".into()));
        }
        for (i, cell) in cells.iter().enumerate() {
            if cell.bounds.len() != d {
                return Err(DispatchError::BadDecomposition(format!(
                    "cell {i} has {} bounds for {d} features",
                    cell.bounds.len()
                )));
            }
            if cell
                .bounds
                .iter()
                .any(|&(lo, hi)| !(0.0..1.0).contains(&lo) || hi <= lo || hi > 1.0)
            {
                return Err(DispatchError::BadDecomposition(format!(
                    "cell {i} has an empty or out-of-range interval"
                )));
            }
        }
        for i in 0..cells.len() {
            for j in i + 1..cells.len() {
                if cells[i].overlaps(&cells[j]) {
                    return Err(DispatchError::BadDecomposition(format!(
                        "cells {i} and {j} overlap"
                    )));
                }
            }
        }
        // disjoint half-open boxes: full volume implies full coverage
        let volume: f64 = cells.iter().map(Cell::volume).sum();
        if (volume - 1.0).abs() > 1e-9 {
            return Err(DispatchError::BadDecomposition(format!(
                "cells cover volume {volume}, not 1"
            )));
        }
        Ok(StateDecomposition { features, cells })
    }

    /// Cartesian grid. `edges` are the interior cut points of each feature;
    /// cells are numbered row-major with the first feature most significant.
    pub fn grid(axes: &[(StateFeature, Vec<f64>)]) -> Result<Self, DispatchError> {
        let mut intervals_per_axis = Vec::with_capacity(axes.len());
        for (feature, edges) in axes {
            let mut points = vec![0.0];
            for &e in edges {
                if !(e > *points.last().unwrap() && e < 1.0) {
                    return Err(DispatchError::BadDecomposition(format!(
                        "edges of `{}` must be strictly increasing inside (0, 1)",
                        feature.name()
                    )));
                }
                points.push(e);
            }
            points.push(1.0);
            intervals_per_axis.push(points.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>());
        }
        let mut cells = vec![Cell { bounds: Vec::new() }];
        for intervals in &intervals_per_axis {
            cells = cells
                .iter()
                .flat_map(|c| {
                    intervals.iter().map(move |&iv| {
                        let mut bounds = c.bounds.clone();
                        bounds.push(iv);
                        Cell { bounds }
                    })
                })
                .collect();
        }
        StateDecomposition::from_cells(axes.iter().map(|(f, _)| *f).collect(), cells)
    }

    /// 4 equal bins on completion fraction × 2 bins on buffer occupancy split
    /// at 0.5: eight cells.
    pub fn default_grid() -> Self {
        StateDecomposition::grid(&[
            (StateFeature::CompletionFraction, vec![0.25, 0.5, 0.75]),
            (StateFeature::BufferOccupancy, vec![0.5]),
        ])
        .expect("default grid is well formed")
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn features(&self) -> &[StateFeature] {
        &self.features
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Index of the cell containing `s`.
    pub fn select_cell(&self, s: &[f64]) -> Result<usize, DispatchError> {
        if s.len() == self.features.len() {
            if let Some(k) = self.cells.iter().position(|c| c.contains(s)) {
                return Ok(k);
            }
        }
        Err(DispatchError::Uncovered(s.to_vec()))
    }
}

/// Measures every feature of `features` on the given context.
pub fn extract_state(features: &[StateFeature], ctx: &DispatchContext<'_>) -> Vec<f64> {
    features.iter().map(|f| f.measure(ctx)).collect()
}

/// One weight vector per decomposition cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub decomposition: Arc<StateDecomposition>,
    pub weights: Vec<WeightVector>,
}

impl RuleSet {
    pub fn new(
        decomposition: Arc<StateDecomposition>,
        weights: Vec<WeightVector>,
    ) -> Result<Self, DispatchError> {
        if weights.len() != decomposition.cell_count() {
            return Err(DispatchError::CellCount {
                expected: decomposition.cell_count(),
                found: weights.len(),
            });
        }
        Ok(RuleSet {
            decomposition,
            weights,
        })
    }

    pub fn single(weights: WeightVector) -> Self {
        RuleSet {
            decomposition: Arc::new(StateDecomposition::single()),
            weights: vec![weights],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    HighestIndex,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateEvaluation {
    /// Re-measure the state before every selection.
    #[default]
    PerDecision,
    /// Measure once, on the empty schedule, and keep that cell throughout.
    Once,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureAxis {
    pub name: String,
    pub edges: Vec<f64>,
}

/// Serialized form of the dispatch section of the engine config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispatchConfig {
    pub attributes: Vec<String>,
    pub required_machines: Option<usize>,
    pub features: Vec<FeatureAxis>,
    pub tie_break: TieBreak,
    pub state_evaluation: StateEvaluation,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        DispatchConfig {
            attributes: vec!["p1".into(), "p2".into()],
            required_machines: Some(2),
            features: vec![
                FeatureAxis {
                    name: "completion".into(),
                    edges: vec![0.25, 0.5, 0.75],
                },
                FeatureAxis {
                    name: "buffer_occupancy".into(),
                    edges: vec![0.5],
                },
            ],
            tie_break: TieBreak::LowestIndex,
            state_evaluation: StateEvaluation::PerDecision,
        }
    }
}

impl DispatchConfig {
    pub fn build(&self) -> Result<Dispatcher, DispatchError> {
        let attributes = AttributeSet::from_names(&self.attributes, self.required_machines)?;
        let axes = self
            .features
            .iter()
            .map(|f| Ok((StateFeature::parse(&f.name)?, f.edges.clone())))
            .collect::<Result<Vec<_>, DispatchError>>()?;
        let decomposition = if axes.is_empty() {
            StateDecomposition::single()
        } else {
            StateDecomposition::grid(&axes)?
        };
        Ok(Dispatcher {
            attributes,
            decomposition: Arc::new(decomposition),
            tie_break: self.tie_break,
            state_evaluation: self.state_evaluation,
        })
    }
}

/// Everything except the weights: attributes, decomposition and policies.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatcher {
    pub attributes: AttributeSet,
    pub decomposition: Arc<StateDecomposition>,
    pub tie_break: TieBreak,
    pub state_evaluation: StateEvaluation,
}

impl Default for Dispatcher {
    fn default() -> Self {
        DispatchConfig::default()
            .build()
            .expect("default config builds")
    }
}

impl Dispatcher {
    pub fn genome_len(&self) -> usize {
        self.decomposition.cell_count() * self.attributes.len()
    }

    /// Runs the list scheduler and returns the emitted sequence and timeline.
    pub fn schedule(
        &self,
        instance: &Instance,
        ruleset: &RuleSet,
    ) -> Result<(Sequence, ScheduleTimeline), DispatchError> {
        self.attributes.check(instance)?;
        if ruleset.weights.len() != ruleset.decomposition.cell_count() {
            return Err(DispatchError::CellCount {
                expected: ruleset.decomposition.cell_count(),
                found: ruleset.weights.len(),
            });
        }
        if let Some(w) = ruleset
            .weights
            .iter()
            .find(|w| w.0.len() != self.attributes.len())
        {
            return Err(DispatchError::LengthMismatch {
                weights: w.0.len(),
                attributes: self.attributes.len(),
            });
        }

        let n = instance.jobs();
        let attrs: Vec<AttributeVector> = (0..n)
            .map(|j| self.attributes.extract(instance, j))
            .collect();
        // priorities of every job under every cell, computed on first use
        let mut alpha: Vec<Option<Vec<i64>>> = vec![None; ruleset.weights.len()];
        let dec = &ruleset.decomposition;

        let mut builder = TimelineBuilder::new(instance);
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut fixed_cell = None;
        while !remaining.is_empty() {
            let cell = match fixed_cell {
                Some(c) => c,
                None => {
                    let ctx = DispatchContext {
                        instance,
                        timeline: builder.timeline(),
                    };
                    let c = dec.select_cell(&extract_state(dec.features(), &ctx))?;
                    if self.state_evaluation == StateEvaluation::Once {
                        fixed_cell = Some(c);
                    }
                    c
                }
            };
            let scores = alpha[cell].get_or_insert_with(|| {
                let w = &ruleset.weights[cell].0;
                attrs.iter().map(|a| dot(w, &a.0)).collect()
            });
            let mut best = 0;
            for idx in 1..remaining.len() {
                let (cand, cur) = (scores[remaining[idx]], scores[remaining[best]]);
                let better = match self.tie_break {
                    TieBreak::LowestIndex => cand > cur,
                    TieBreak::HighestIndex => cand >= cur,
                };
                if better {
                    best = idx;
                }
            }
            builder.push(remaining.remove(best));
        }
        let timeline = builder.finish();
        let seq = Sequence::new(timeline.order.clone(), n)?;
        Ok((seq, timeline))
    }
}

/// List scheduling with the default attributes and per-decision state.
pub fn dispatch_schedule(
    instance: &Instance,
    ruleset: &RuleSet,
    tie_break: TieBreak,
) -> Result<(Sequence, ScheduleTimeline), DispatchError> {
    let dispatcher = Dispatcher {
        attributes: AttributeSet::default(),
        decomposition: ruleset.decomposition.clone(),
        tie_break,
        state_evaluation: StateEvaluation::PerDecision,
    };
    dispatcher.schedule(instance, ruleset)
}

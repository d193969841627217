//! Instance generation, experiment orchestration and report emission.
//!
//! An experiment crosses examples × buffer capacities × algorithms × trials.
//! Every cell is independent and seeded from the master seed alone, so the
//! aggregated table does not depend on worker count or completion order.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::SaConfig;
use crate::engine::{run_algorithm, Algorithm, AlgorithmSpec, EngineConfig};
use crate::error::BenchError;
use crate::model::{Capacity, Instance, Time};

/// Integer processing times drawn uniformly from `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformTimes {
    pub lo: u64,
    pub hi: u64,
}

impl Default for UniformTimes {
    fn default() -> Self {
        UniformTimes { lo: 1, hi: 10 }
    }
}

impl UniformTimes {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.lo < 1 || self.hi < self.lo {
            return Err(BenchError::Plan(format!(
                "processing-time bounds [{}, {}] must satisfy 1 <= lo <= hi",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Random instance with times drawn job-major from `dist`.
pub fn generate_instance(
    n: usize,
    m: usize,
    dist: UniformTimes,
    buffers: Vec<Capacity>,
    seed: u64,
) -> Result<Instance, BenchError> {
    dist.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<Vec<Time>> = (0..n)
        .map(|_| (0..m).map(|_| rng.gen_range(dist.lo..=dist.hi)).collect())
        .collect();
    let id = format!("u{}-{}-n{n}-m{m}-s{seed}", dist.lo, dist.hi);
    Ok(Instance::new(id, p, buffers, Some(seed))?)
}

/// SplitMix64 finalizer over a tagged tuple; derives independent seeds.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut z = master;
    for &p in parts {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub n_examples: usize,
    pub n: usize,
    pub m: usize,
    pub processing: UniformTimes,
    /// Uniform capacity applied to every intermediate buffer; `null` = unbounded.
    pub buffers: Vec<Capacity>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub gbml: EngineConfig,
    pub sa: SaConfig,
    /// Run SA on unbounded-buffer rows as well.
    pub sa_at_unbounded: bool,
    pub master_seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            n_examples: 10,
            n: 50,
            m: 2,
            processing: UniformTimes::default(),
            buffers: vec![
                Capacity::Unbounded,
                Capacity::Bounded(1),
                Capacity::Bounded(3),
                Capacity::Bounded(5),
            ],
            trials: 10,
            algorithms: vec![Algorithm::Gbml, Algorithm::Johnson, Algorithm::Sa],
            gbml: EngineConfig::default(),
            sa: SaConfig::default(),
            sa_at_unbounded: false,
            master_seed: 1,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.trials < 1 {
            return Err(BenchError::Plan("trials must be at least 1".into()));
        }
        if self.n < 1 || self.m < 1 {
            return Err(BenchError::Plan("n and m must be positive".into()));
        }
        self.processing.validate()?;
        self.gbml.gbml.validate()?;
        self.gbml.dispatch.build()?;
        self.sa.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let plan: ExperimentPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Example `i` (0-based) with all buffers unbounded.
    pub fn instance(&self, example: usize) -> Result<Instance, BenchError> {
        generate_instance(
            self.n,
            self.m,
            self.processing,
            vec![Capacity::Unbounded; self.m - 1],
            derive_seed(self.master_seed, &[1, example as u64]),
        )
    }

    fn runs(&self, algorithm: Algorithm, buffer: Capacity) -> bool {
        !(algorithm == Algorithm::Sa && buffer == Capacity::Unbounded && !self.sa_at_unbounded)
    }

    fn spec(&self, algorithm: Algorithm, example: usize, trial: usize) -> AlgorithmSpec {
        let seed = derive_seed(
            self.master_seed,
            &[2, algorithm as u64, example as u64, trial as u64],
        );
        match algorithm {
            Algorithm::Gbml => AlgorithmSpec::Gbml(self.gbml.clone()),
            Algorithm::Sa => AlgorithmSpec::Sa(self.sa.clone()),
            Algorithm::Johnson => AlgorithmSpec::Johnson,
            Algorithm::Brute => AlgorithmSpec::Brute,
        }
        .with_seed(seed)
    }
}

/// One executed (example, buffer, algorithm, trial) cell; a JSON line in the
/// resume file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub example: usize,
    pub buffer: Capacity,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub makespan: Option<Time>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

type CellKey = (usize, Option<u32>, Algorithm, usize);

impl CellRecord {
    fn key(&self) -> CellKey {
        (
            self.example,
            self.buffer.as_option(),
            self.algorithm,
            self.trial,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub mean: f64,
    pub min: Time,
    pub max: Time,
    pub std_dev: f64,
    pub trials: usize,
}

impl TrialStats {
    fn from_values(values: &[Time]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<Time>() as f64 / k;
        let var = values
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / k;
        TrialStats {
            mean,
            min: *values.iter().min().expect("non-empty"),
            max: *values.iter().max().expect("non-empty"),
            std_dev: var.sqrt(),
            trials: values.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    /// 1-based example number.
    pub example: usize,
    pub buffer: Capacity,
    pub stats: BTreeMap<Algorithm, TrialStats>,
}

impl ResultRow {
    pub fn mean(&self, algorithm: Algorithm) -> Option<f64> {
        self.stats.get(&algorithm).map(|s| s.mean)
    }

    fn ratio(&self, num: Algorithm, den: Algorithm) -> Option<f64> {
        Some(self.mean(num)? / self.mean(den)?)
    }

    /// GBML / Johnson.
    pub fn ratio_i_ii(&self) -> Option<f64> {
        self.ratio(Algorithm::Gbml, Algorithm::Johnson)
    }

    /// GBML / SA.
    pub fn ratio_i_iii(&self) -> Option<f64> {
        self.ratio(Algorithm::Gbml, Algorithm::Sa)
    }

    /// Johnson / SA.
    pub fn ratio_ii_iii(&self) -> Option<f64> {
        self.ratio(Algorithm::Johnson, Algorithm::Sa)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    /// Cells whose run failed; the run continues past them.
    pub failures: Vec<CellRecord>,
}

/// Example index, buffer size and algorithm of one table cell.
type RowCell = (usize, Option<u32>, Algorithm);

impl ResultTable {
    pub fn rows_for(&self, buffer: Capacity) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.buffer == buffer)
    }

    /// Builds the table from executed cells. Rows follow the plan's buffer
    /// order, then example order.
    pub fn aggregate(plan: &ExperimentPlan, records: &[CellRecord]) -> Self {
        let mut by_cell: BTreeMap<RowCell, Vec<(usize, Time)>> = BTreeMap::new();
        let mut failures = Vec::new();
        for r in records {
            match r.makespan {
                Some(c) => by_cell
                    .entry((r.example, r.buffer.as_option(), r.algorithm))
                    .or_default()
                    .push((r.trial, c)),
                None => failures.push(r.clone()),
            }
        }
        failures.sort_by_key(CellRecord::key);
        let mut rows = Vec::new();
        for &buffer in &plan.buffers {
            for example in 0..plan.n_examples {
                let mut stats = BTreeMap::new();
                for &alg in &plan.algorithms {
                    if let Some(values) = by_cell.get_mut(&(example, buffer.as_option(), alg)) {
                        values.sort_unstable();
                        values.dedup_by_key(|v| v.0);
                        let v: Vec<Time> = values.iter().map(|v| v.1).collect();
                        stats.insert(alg, TrialStats::from_values(&v));
                    }
                }
                rows.push(ResultRow {
                    example: example + 1,
                    buffer,
                    stats,
                });
            }
        }
        ResultTable { rows, failures }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// JSON-lines file of completed cells: read on start, appended as cells finish.
    pub resume: Option<PathBuf>,
}

/// Reads finished cells. A final line cut short by an interrupted write is
/// dropped and the file rewritten without it.
fn load_resume(path: &Path) -> Result<Vec<CellRecord>, BenchError> {
    let text = fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<CellRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                let mut kept = String::new();
                for r in &records {
                    kept.push_str(&serde_json::to_string(r)?);
                    kept.push('\n');
                }
                fs::write(path, kept)?;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(records)
}

/// Executes every cell of the plan not already present in the resume file.
pub fn run_experiment(plan: &ExperimentPlan, opts: &RunOptions) -> Result<ResultTable, BenchError> {
    plan.validate()?;
    let mut records = Vec::new();
    if let Some(path) = &opts.resume {
        if path.exists() {
            records = load_resume(path)?;
        }
    }
    let done: HashSet<CellKey> = records.iter().map(CellRecord::key).collect();

    let instances = (0..plan.n_examples)
        .map(|i| plan.instance(i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pending = Vec::new();
    for example in 0..plan.n_examples {
        for &buffer in &plan.buffers {
            for &alg in &plan.algorithms {
                if !plan.runs(alg, buffer) {
                    continue;
                }
                for trial in 0..plan.trials {
                    if !done.contains(&(example, buffer.as_option(), alg, trial)) {
                        pending.push((example, buffer, alg, trial));
                    }
                }
            }
        }
    }

    let run_cell = |&(example, buffer, algorithm, trial): &(usize, Capacity, Algorithm, usize)| {
        let inst = instances[example].with_uniform_buffers(buffer);
        let outcome = run_algorithm(&inst, &plan.spec(algorithm, example, trial), &mut ());
        let (makespan, error) = match outcome {
            Ok(o) => (Some(o.result.makespan), None),
            Err(e) => (None, Some(e.to_string())),
        };
        CellRecord {
            example,
            buffer,
            algorithm,
            trial,
            makespan,
            error,
        }
    };

    let pool = if opts.workers > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(opts.workers)
                .build()
                .map_err(|e| BenchError::Plan(e.to_string()))?,
        )
    } else {
        None
    };
    let mut sink = match &opts.resume {
        Some(path) => Some(OpenOptions::new().create(true).append(true).open(path)?),
        None => None,
    };

    let (tx, rx) = mpsc::channel::<CellRecord>();
    std::thread::scope(|scope| -> Result<(), BenchError> {
        scope.spawn(move || {
            let work = || {
                pending.par_iter().for_each_with(tx, |tx, cell| {
                    let _ = tx.send(run_cell(cell));
                })
            };
            match &pool {
                Some(p) => p.install(work),
                None => work(),
            }
        });
        for record in rx {
            if let Some(f) = sink.as_mut() {
                writeln!(f, "{}", serde_json::to_string(&record)?)?;
                f.flush()?;
            }
            records.push(record);
        }
        Ok(())
    })?;

    Ok(ResultTable::aggregate(plan, &records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(BenchError::UnknownFormat(other.to_string())),
        }
    }
}

pub const CSV_HEADER: &str =
    "example,buffer,mean_gbml,mean_johnson,mean_sa,ratio_I_II,ratio_I_III,ratio_II_III";

fn fmt_mean(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_ratio(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

pub fn emit_report(table: &ResultTable, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = format!("{CSV_HEADER}\n");
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    r.example,
                    r.buffer,
                    fmt_mean(r.mean(Algorithm::Gbml)),
                    fmt_mean(r.mean(Algorithm::Johnson)),
                    fmt_mean(r.mean(Algorithm::Sa)),
                    fmt_ratio(r.ratio_i_ii()),
                    fmt_ratio(r.ratio_i_iii()),
                    fmt_ratio(r.ratio_ii_iii()),
                );
            }
            out
        }
        ReportFormat::Json => serde_json::to_string_pretty(table).expect("table serializes") + "\n",
        ReportFormat::Markdown => {
            let dash = |s: String| if s.is_empty() { "-".to_string() } else { s };
            let mut out = String::from(
                "| Example | Buffer | GBML (I) | Johnson (II) | SA (III) | I/II | I/III | II/III | GBML range |\n\
                 |---:|---:|---:|---:|---:|---:|---:|---:|---:|\n",
            );
            for r in &table.rows {
                let spread = r
                    .stats
                    .get(&Algorithm::Gbml)
                    .map(|s| format!("{}–{}", s.min, s.max))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    r.example,
                    if r.buffer == Capacity::Unbounded {
                        "∞".to_string()
                    } else {
                        r.buffer.to_string()
                    },
                    dash(fmt_mean(r.mean(Algorithm::Gbml))),
                    dash(fmt_mean(r.mean(Algorithm::Johnson))),
                    dash(fmt_mean(r.mean(Algorithm::Sa))),
                    dash(fmt_ratio(r.ratio_i_ii())),
                    dash(fmt_ratio(r.ratio_i_iii())),
                    dash(fmt_ratio(r.ratio_ii_iii())),
                    dash(spread),
                );
            }
            out
        }
    }
}

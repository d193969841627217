//! Genetics-based machine learning of dispatching rule-sets.
//!
//! An individual is a flat integer array holding one weight vector per state
//! cell (cell-major). Fitness is relative to the current population:
//! `F_i = max(0, C − Σ_j o_ij / ō_j)` where `o_ij` is the makespan individual
//! `i` produces on training problem `j` and `ō_j` is the population mean on
//! that problem. Parents are chosen by remainder stochastic sampling with
//! replacement; the best individuals by raw makespan survive unchanged.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispatch::{Dispatcher, RuleSet, StateDecomposition, WeightVector};
use crate::error::GbmlError;
use crate::model::{Instance, Sequence, Time};
use crate::monitor::{Monitor, Progress};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome(pub Vec<i64>);

impl Genome {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn within(&self, bound: i64) -> bool {
        self.0.iter().all(|g| g.abs() <= bound)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Genome>,
    pub generation: usize,
}

/// Default fitness constant per training problem. Makespan ratios cluster
/// within a few percent of 1, so individuals more than 10% worse than the
/// population mean on average get zero fitness.
pub const DEFAULT_FITNESS_SLACK: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmlConfig {
    pub population_size: usize,
    pub generations: usize,
    /// Genes range over `[-weight_bound, weight_bound]`.
    pub weight_bound: i64,
    pub crossover_rate: f64,
    /// Per-gene probability.
    pub mutation_rate: f64,
    /// Fitness constant `C`; `None` means `1.1 · n_H`.
    pub fitness_constant: Option<f64>,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GbmlConfig {
    fn default() -> Self {
        GbmlConfig {
            population_size: 50,
            generations: 100,
            weight_bound: 10,
            crossover_rate: 0.8,
            mutation_rate: 0.05,
            fitness_constant: None,
            elitism: 1,
            seed: 0,
        }
    }
}

impl GbmlConfig {
    pub fn validate(&self) -> Result<(), GbmlError> {
        let bad = |m: &str| Err(GbmlError::Config(m.to_string()));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if self.generations < 1 {
            return bad("generations must be at least 1");
        }
        if self.weight_bound < 0 {
            return bad("weight_bound must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate)
        {
            return bad("rates must lie in [0, 1]");
        }
        if let Some(c) = self.fitness_constant {
            if c.is_nan() || c <= 0.0 {
                return bad("fitness_constant must be positive");
            }
        }
        if self.elitism < 1 || self.elitism > self.population_size {
            return bad("elitism must be in [1, population_size]");
        }
        Ok(())
    }

    pub fn fitness_constant_for(&self, problems: usize) -> f64 {
        self.fitness_constant
            .unwrap_or(DEFAULT_FITNESS_SLACK * problems as f64)
    }
}

/// Unpacks a cell-major genome into one weight vector per cell.
pub fn decode(
    genome: &Genome,
    decomposition: &Arc<StateDecomposition>,
    attributes: usize,
) -> Result<RuleSet, GbmlError> {
    let expected = decomposition.cell_count() * attributes;
    if genome.len() != expected || attributes == 0 {
        return Err(GbmlError::GenomeLength {
            expected,
            found: genome.len(),
        });
    }
    let weights = genome
        .0
        .chunks(attributes)
        .map(|c| WeightVector(c.to_vec()))
        .collect();
    Ok(RuleSet::new(decomposition.clone(), weights)?)
}

/// Inverse of [`decode`].
pub fn encode(ruleset: &RuleSet) -> Genome {
    Genome(
        ruleset
            .weights
            .iter()
            .flat_map(|w| w.0.iter().copied())
            .collect(),
    )
}

pub fn init_population<R: Rng>(cfg: &GbmlConfig, genome_len: usize, rng: &mut R) -> Population {
    let b = cfg.weight_bound;
    let members = (0..cfg.population_size)
        .map(|_| Genome((0..genome_len).map(|_| rng.gen_range(-b..=b)).collect()))
        .collect();
    Population {
        members,
        generation: 1,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessReport {
    /// `objectives[i][j]`: makespan of individual `i` on problem `j`.
    pub objectives: Vec<Vec<Time>>,
    /// Population mean per problem.
    pub means: Vec<f64>,
    pub fitness: Vec<f64>,
    /// Mean makespan over problems, per individual.
    pub raw: Vec<f64>,
    /// Index of the individual with the lowest raw objective (first on ties).
    pub best: usize,
}

impl FitnessReport {
    pub fn best_objective(&self) -> f64 {
        self.raw[self.best]
    }

    /// `Σ_j o_ij / ō_j` for individual `i`.
    pub fn ratio_sum(&self, i: usize) -> f64 {
        self.objectives[i]
            .iter()
            .zip(&self.means)
            .map(|(&o, &mean)| if mean > 0.0 { o as f64 / mean } else { 1.0 })
            .sum()
    }
}

/// Makespan of every individual on every problem and the resulting fitness.
/// Evaluation runs in parallel and draws no randomness.
pub fn evaluate_fitness(
    pop: &Population,
    problems: &[Instance],
    dispatcher: &Dispatcher,
    fitness_constant: f64,
) -> Result<FitnessReport, GbmlError> {
    if problems.is_empty() {
        return Err(GbmlError::NoProblems);
    }
    let n_attr = dispatcher.attributes.len();
    let objectives = pop
        .members
        .par_iter()
        .map(|g| {
            let rules = decode(g, &dispatcher.decomposition, n_attr)?;
            problems
                .iter()
                .map(|h| Ok(dispatcher.schedule(h, &rules)?.1.makespan))
                .collect::<Result<Vec<Time>, GbmlError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(fitness_from_objectives(objectives, fitness_constant))
}

/// Fitness computation from a precomputed objective matrix.
pub fn fitness_from_objectives(objectives: Vec<Vec<Time>>, fitness_constant: f64) -> FitnessReport {
    let np = objectives.len() as f64;
    let nh = objectives.first().map_or(0, Vec::len);
    let means: Vec<f64> = (0..nh)
        .map(|j| objectives.iter().map(|o| o[j] as f64).sum::<f64>() / np)
        .collect();
    let raw: Vec<f64> = objectives
        .iter()
        .map(|o| o.iter().map(|&v| v as f64).sum::<f64>() / nh as f64)
        .collect();
    let mut best = 0;
    for (i, &r) in raw.iter().enumerate() {
        if r < raw[best] {
            best = i;
        }
    }
    let mut report = FitnessReport {
        objectives,
        means,
        fitness: Vec::new(),
        raw,
        best,
    };
    report.fitness = (0..report.objectives.len())
        .map(|i| (fitness_constant - report.ratio_sum(i)).max(0.0))
        .collect();
    report
}

/// Outcome of remainder stochastic sampling with replacement.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Pool of parent indices: deterministic copies first, then stochastic draws.
    pub pool: Vec<usize>,
    /// `⌊e_i⌋` per individual.
    pub guaranteed: Vec<usize>,
    /// All fitness values were zero and the pool was drawn uniformly.
    pub degenerate: bool,
}

/// Each individual gets `⌊e_i⌋` copies with `e_i = N·F_i/ΣF`; the remaining
/// slots are drawn independently, proportionally to `e_i − ⌊e_i⌋`.
pub fn select_rsswr<R: Rng>(fitness: &[f64], pool_size: usize, rng: &mut R) -> Selection {
    let total: f64 = fitness.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Selection {
            pool: (0..pool_size)
                .map(|_| rng.gen_range(0..fitness.len()))
                .collect(),
            guaranteed: vec![0; fitness.len()],
            degenerate: true,
        };
    }
    let expected: Vec<f64> = fitness
        .iter()
        .map(|&f| {
            let e = pool_size as f64 * f / total;
            // snap rounding noise so integral expectations stay integral
            let r = e.round();
            if (e - r).abs() < 1e-9 {
                r
            } else {
                e
            }
        })
        .collect();
    let mut guaranteed: Vec<usize> = expected.iter().map(|e| e.floor() as usize).collect();
    let mut pool = Vec::with_capacity(pool_size);
    for (i, &c) in guaranteed.iter().enumerate() {
        pool.extend(std::iter::repeat_n(i, c));
    }
    if pool.len() > pool_size {
        pool.truncate(pool_size);
        let mut counts = vec![0; fitness.len()];
        pool.iter().for_each(|&i| counts[i] += 1);
        guaranteed = counts;
    }
    let rest = pool_size - pool.len();
    if rest > 0 {
        let fractions: Vec<f64> = expected.iter().map(|e| e - e.floor()).collect();
        let weights = WeightedIndex::new(&fractions)
            .or_else(|_| WeightedIndex::new(fitness))
            .expect("positive total fitness");
        pool.extend((0..rest).map(|_| weights.sample(rng)));
    }
    Selection {
        pool,
        guaranteed,
        degenerate: false,
    }
}

/// One-point crossover at `cut`: children swap tails from `cut` on.
pub fn crossover_at(a: &Genome, b: &Genome, cut: usize) -> (Genome, Genome) {
    let mut c = a.0[..cut].to_vec();
    c.extend_from_slice(&b.0[cut..]);
    let mut d = b.0[..cut].to_vec();
    d.extend_from_slice(&a.0[cut..]);
    (Genome(c), Genome(d))
}

/// With probability `rate`, one-point crossover at a uniform cut in
/// `[1, len − 1]`; otherwise copies of the parents.
pub fn crossover<R: Rng>(
    a: &Genome,
    b: &Genome,
    rate: f64,
    rng: &mut R,
) -> Result<(Genome, Genome), GbmlError> {
    if a.len() != b.len() {
        return Err(GbmlError::GenomeLength {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() >= 2 && rng.gen_bool(rate) {
        let cut = rng.gen_range(1..a.len());
        Ok(crossover_at(a, b, cut))
    } else {
        Ok((a.clone(), b.clone()))
    }
}

/// Resets each gene with probability `rate` to a uniform value in `[-bound, bound]`.
pub fn mutate<R: Rng>(g: &Genome, rate: f64, bound: i64, rng: &mut R) -> Genome {
    Genome(
        g.0.iter()
            .map(|&v| {
                if rng.gen_bool(rate) {
                    rng.gen_range(-bound..=bound)
                } else {
                    v
                }
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_objective: f64,
    pub mean_objective: f64,
    pub best_fitness: f64,
    /// Selection fell back to uniform sampling because every fitness was zero.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate_selection: bool,
}

/// Per-generation history as CSV.
pub fn history_csv(history: &[GenerationStats]) -> String {
    let mut out = String::from("generation,best_objective,mean_objective,best_fitness\n");
    for h in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            h.generation, h.best_objective, h.mean_objective, h.best_fitness
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOutcome {
    pub best: RuleSet,
    pub best_genome: Genome,
    /// Mean makespan of the best rule-set over the training problems.
    pub best_objective: f64,
    /// Sequence the best rule-set emits on the first training problem.
    pub best_sequence: Sequence,
    pub history: Vec<GenerationStats>,
    pub cancelled: bool,
}

/// Runs the full generation loop and returns the best-so-far rule-set.
pub fn evolve(
    cfg: &GbmlConfig,
    dispatcher: &Dispatcher,
    problems: &[Instance],
    monitor: &mut dyn Monitor,
) -> Result<EvolveOutcome, GbmlError> {
    cfg.validate()?;
    if problems.is_empty() {
        return Err(GbmlError::NoProblems);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_attr = dispatcher.attributes.len();
    let c_fit = cfg.fitness_constant_for(problems.len());
    let np = cfg.population_size;

    let mut pop = init_population(cfg, dispatcher.genome_len(), &mut rng);
    let mut history = Vec::with_capacity(cfg.generations);
    let mut best: Option<(f64, Genome, Sequence)> = None;
    let mut cancelled = false;

    loop {
        let report = evaluate_fitness(&pop, problems, dispatcher, c_fit)?;
        let gen_best = report.best_objective();
        if best.as_ref().is_none_or(|(b, _, _)| gen_best < *b) {
            let g = pop.members[report.best].clone();
            let rules = decode(&g, &dispatcher.decomposition, n_attr)?;
            let seq = dispatcher.schedule(&problems[0], &rules)?.0;
            best = Some((gen_best, g, seq));
        }
        let best_fitness = report.fitness.iter().copied().fold(0.0, f64::max);
        let mean_objective = report.raw.iter().sum::<f64>() / np as f64;

        let t = pop.generation;
        let total_fitness: f64 = report.fitness.iter().sum();
        let degenerate = total_fitness.is_nan() || total_fitness <= 0.0;
        history.push(GenerationStats {
            generation: t,
            best_objective: gen_best,
            mean_objective,
            best_fitness,
            degenerate_selection: degenerate && t < cfg.generations,
        });
        let (best_so_far, _, best_seq) = best.as_ref().expect("set above");
        monitor.report(&Progress {
            step: t,
            best_objective: *best_so_far,
            mean_objective: Some(mean_objective),
            best_fitness: Some(best_fitness),
            best_sequence: best_seq.as_slice(),
        });
        if t >= cfg.generations {
            break;
        }
        if monitor.should_stop() {
            cancelled = true;
            break;
        }

        let mut ranked: Vec<usize> = (0..np).collect();
        ranked.sort_by(|&a, &b| report.raw[a].total_cmp(&report.raw[b]));
        let elites: Vec<Genome> = ranked[..cfg.elitism]
            .iter()
            .map(|&i| pop.members[i].clone())
            .collect();

        let mut pool = select_rsswr(&report.fitness, np, &mut rng).pool;
        pool.shuffle(&mut rng);
        let mut children = Vec::with_capacity(np);
        for pair in pool.chunks(2) {
            match *pair {
                [a, b] => {
                    let (c, d) = crossover(
                        &pop.members[a],
                        &pop.members[b],
                        cfg.crossover_rate,
                        &mut rng,
                    )?;
                    children.push(c);
                    children.push(d);
                }
                [a] => children.push(pop.members[a].clone()),
                _ => unreachable!(),
            }
        }
        let mut next = elites;
        next.extend(
            children
                .iter()
                .take(np - cfg.elitism)
                .map(|c| mutate(c, cfg.mutation_rate, cfg.weight_bound, &mut rng)),
        );
        pop = Population {
            members: next,
            generation: t + 1,
        };
    }

    let (best_objective, best_genome, best_sequence) = best.expect("at least one generation");
    Ok(EvolveOutcome {
        best: decode(&best_genome, &dispatcher.decomposition, n_attr)?,
        best_genome,
        best_objective,
        best_sequence,
        history,
        cancelled,
    })
}

//! Reference algorithms: Johnson's rule, simulated annealing and exhaustive search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::BaselineError;
use crate::model::{makespan_of, Instance, Sequence, Time};
use crate::monitor::{Monitor, Progress};

/// Largest job count accepted by [`brute_force_optimal`].
pub const BRUTE_FORCE_LIMIT: usize = 9;

/// Johnson's rule for two machines: jobs with `p1 <= p2` by ascending `p1`,
/// then the rest by descending `p2`. Ties keep the lower job index first.
pub fn johnson_sequence(instance: &Instance) -> Result<Sequence, BaselineError> {
    if instance.machines() != 2 {
        return Err(BaselineError::NotTwoMachines(instance.machines()));
    }
    let p = |j: usize, k: usize| instance.time(j, k);
    let (mut first, mut second): (Vec<usize>, Vec<usize>) =
        (0..instance.jobs()).partition(|&j| p(j, 0) <= p(j, 1));
    first.sort_by_key(|&j| (p(j, 0), j));
    second.sort_by_key(|&j| (std::cmp::Reverse(p(j, 1)), j));
    first.extend(second);
    Ok(Sequence::new(first, instance.jobs()).expect("partition of all jobs"))
}

/// Exhaustive search over all `n!` orders; returns the lexicographically
/// smallest optimal sequence.
pub fn brute_force_optimal(instance: &Instance) -> Result<(Sequence, Time), BaselineError> {
    let n = instance.jobs();
    if n > BRUTE_FORCE_LIMIT {
        return Err(BaselineError::TooManyJobs {
            n,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = (order.clone(), makespan_of(instance, &order));
    while next_permutation(&mut order) {
        let c = makespan_of(instance, &order);
        if c < best.1 {
            best = (order.clone(), c);
        }
    }
    Ok((Sequence::new(best.0, n).expect("permutation"), best.1))
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = v.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = v
        .iter()
        .rposition(|&x| x > v[i])
        .expect("pivot has a successor");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// Exchange the jobs at two uniform positions.
    #[default]
    Swap,
    /// Remove a job and reinsert it at another uniform position.
    Insert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaConfig {
    /// Makespan evaluations, counting the initial solution.
    pub iterations: usize,
    /// `None`: mean positive Δ over 100 random probe moves.
    pub initial_temperature: Option<f64>,
    pub cooling: f64,
    /// `None`: the job count.
    pub moves_per_temperature: Option<usize>,
    pub neighborhood: Neighborhood,
    pub seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            iterations: 5000,
            initial_temperature: None,
            cooling: 0.95,
            moves_per_temperature: None,
            neighborhood: Neighborhood::Swap,
            seed: 0,
        }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.iterations < 1 {
            return Err(BaselineError::Config(
                "iterations must be at least 1".into(),
            ));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(BaselineError::Config("cooling must lie in (0, 1)".into()));
        }
        if let Some(t) = self.initial_temperature {
            if t.is_nan() || t <= 0.0 {
                return Err(BaselineError::Config(
                    "initial_temperature must be positive".into(),
                ));
            }
        }
        if self.moves_per_temperature == Some(0) {
            return Err(BaselineError::Config(
                "moves_per_temperature must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// State at the end of a temperature block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaTraceEntry {
    pub evaluations: usize,
    pub temperature: f64,
    pub current: Time,
    pub best: Time,
    /// Moves accepted within the block.
    pub accepted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaOutcome {
    pub sequence: Sequence,
    pub makespan: Time,
    pub initial_temperature: f64,
    pub trace: Vec<SaTraceEntry>,
    pub cancelled: bool,
}

const PROBE_MOVES: usize = 100;
const REPORT_EVERY: usize = 1000;

fn propose<R: Rng>(order: &mut [usize], hood: Neighborhood, rng: &mut R) {
    let n = order.len();
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    match hood {
        Neighborhood::Swap => order.swap(a, b),
        Neighborhood::Insert => {
            if a < b {
                order[a..=b].rotate_left(1);
            } else {
                order[b..=a].rotate_right(1);
            }
        }
    }
}

/// Simulated annealing from the Johnson sequence (two machines) or the
/// identity. Returns the best sequence ever visited.
pub fn simulated_annealing(
    instance: &Instance,
    cfg: &SaConfig,
    monitor: &mut dyn Monitor,
) -> Result<SaOutcome, BaselineError> {
    cfg.validate()?;
    let n = instance.jobs();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial = if instance.machines() == 2 {
        johnson_sequence(instance)?
    } else {
        Sequence::identity(n)
    };
    let mut current = initial.into_inner();
    let mut current_cost = makespan_of(instance, &current);
    let mut best = current.clone();
    let mut best_cost = current_cost;

    let t0 = match cfg.initial_temperature {
        Some(t) => t,
        None if n < 2 => 1.0,
        None => {
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut probe = current.clone();
            for _ in 0..PROBE_MOVES {
                probe.copy_from_slice(&current);
                propose(&mut probe, cfg.neighborhood, &mut rng);
                let delta = makespan_of(instance, &probe) as f64 - current_cost as f64;
                if delta > 0.0 {
                    sum += delta;
                    count += 1;
                }
            }
            if count > 0 {
                sum / count as f64
            } else {
                1.0
            }
        }
    };

    let block = cfg.moves_per_temperature.unwrap_or(n).max(1);
    let mut temperature = t0;
    let mut trace = Vec::new();
    let mut evaluations = 1;
    let mut in_block = 0;
    let mut accepted = 0;
    let mut cancelled = false;
    let mut candidate = current.clone();
    while evaluations < cfg.iterations && n >= 2 {
        candidate.copy_from_slice(&current);
        propose(&mut candidate, cfg.neighborhood, &mut rng);
        let cost = makespan_of(instance, &candidate);
        evaluations += 1;
        let delta = cost as f64 - current_cost as f64;
        if delta <= 0.0 || rng.gen::<f64>() < (-delta / temperature).exp() {
            std::mem::swap(&mut current, &mut candidate);
            current_cost = cost;
            accepted += 1;
            if cost < best_cost {
                best_cost = cost;
                best.copy_from_slice(&current);
            }
        }
        in_block += 1;
        let block_done = in_block == block;
        if block_done {
            trace.push(SaTraceEntry {
                evaluations,
                temperature,
                current: current_cost,
                best: best_cost,
                accepted,
            });
            temperature *= cfg.cooling;
            in_block = 0;
            accepted = 0;
        }
        if block_done || evaluations % REPORT_EVERY == 0 {
            monitor.report(&Progress {
                step: evaluations,
                best_objective: best_cost as f64,
                mean_objective: None,
                best_fitness: None,
                best_sequence: &best,
            });
            if evaluations < cfg.iterations && monitor.should_stop() {
                cancelled = true;
                break;
            }
        }
    }
    if trace.last().is_none_or(|e| e.evaluations != evaluations) {
        trace.push(SaTraceEntry {
            evaluations,
            temperature,
            current: current_cost,
            best: best_cost,
            accepted,
        });
        monitor.report(&Progress {
            step: evaluations,
            best_objective: best_cost as f64,
            mean_objective: None,
            best_fitness: None,
            best_sequence: &best,
        });
    }
    Ok(SaOutcome {
        sequence: Sequence::new(best, n).expect("moves preserve permutations"),
        makespan: best_cost,
        initial_temperature: t0,
        trace,
        cancelled,
    })
}

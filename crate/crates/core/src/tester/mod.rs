//! Statistical detection of privacy violations by repeated execution.
//!
//! For every adjacent pair from the pattern catalogue the mechanism runs a
//! quarter of the trial budget per side to pick, for each test epsilon, the
//! (pair, event, orientation) cell with the smallest p-value. Chosen cells
//! are then re-estimated on fresh runs with the full budget, and that second
//! estimate is what gets reported. The best cell of every pair is
//! re-estimated the same way and returned alongside.

mod events;
mod fisher;
mod patterns;

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DistError, Noise};
use crate::lang::{ArgBinding, BindError, HoleId, MechanismSketch, NoiseSource, Output, Program, RunError};
use crate::rng::{self, Stream};
use crate::search::NoiseVector;

pub use events::{gen_events, Event};
pub use fisher::{binomial_quantiles, fisher_upper, hypergeometric_sf, hypothesis_test, THINNINGS};
pub use patterns::{gen_input_pairs, pattern_pair, InputPair};

/// Most events kept per input pair.
pub const EVENT_CAP: usize = 64;
/// Smallest accepted per-side trial count.
pub const MIN_TRIALS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TesterError {
    #[error("hypothesis test needs at least one trial")]
    NoTrials,
    #[error("count {count} exceeds the {trials} trials")]
    CountExceedsTrials { count: u64, trials: u64 },
    #[error("at least {MIN_TRIALS} trials per side are required, got {0}")]
    TooFewTrials(u64),
    #[error("noise vector has {got} entries but the sketch has {expected} holes")]
    Arity { expected: usize, got: usize },
    #[error("no outputs to build events from")]
    EmptySample,
    #[error("no test epsilon given")]
    NoTestEpsilon,
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Evidence that the mechanism is not `test_epsilon`-private: `event` is
/// likelier on `d1` than `e^test_epsilon` times its chance on `d2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub pattern: String,
    pub d1: Vec<i64>,
    pub d2: Vec<i64>,
    pub event: Event,
    #[serde(rename = "p")]
    pub p_value: f64,
    pub test_epsilon: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Result of one tester call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    /// The selected cell per test epsilon, re-estimated.
    pub per_epsilon: Vec<Counterexample>,
    /// The entry of `per_epsilon` at the target epsilon.
    pub best: Option<Counterexample>,
    /// Every pair's best cell per test epsilon, re-estimated.
    pub cells: Vec<Counterexample>,
}

/// The default neighbourhood `{0.8, 1, 1.2} * eps0`.
pub fn default_test_epsilons(eps0: f64) -> Vec<f64> {
    vec![0.8 * eps0, eps0, 1.2 * eps0]
}

/// Draws fresh noise from concrete kernels.
pub struct Sampler<'a, R: Rng> {
    kernels: &'a [Option<Noise>],
    rng: &'a mut R,
}

impl<'a, R: Rng> Sampler<'a, R> {
    pub fn new(kernels: &'a [Option<Noise>], rng: &'a mut R) -> Self {
        Self { kernels, rng }
    }
}

impl<R: Rng> NoiseSource for Sampler<'_, R> {
    fn draw(&mut self, hole: HoleId) -> Result<Option<i64>, RunError> {
        Ok(self.kernels[hole].map(|k| k.sample_offset(self.rng)))
    }
}

/// Output counts on both sides of a pair.
type PairCounts = BTreeMap<Output, [u64; 2]>;

fn run_pair(
    program: &Program<'_>,
    kernels: &[Option<Noise>],
    pair: &InputPair,
    runs: u64,
    seed: u64,
    path: [u64; 2],
) -> Result<PairCounts, RunError> {
    let mut counts: HashMap<Output, [u64; 2]> = HashMap::new();
    for (side, d) in [&pair.d1, &pair.d2].into_iter().enumerate() {
        let mut rng: Stream = rng::stream(seed, &[path[0], path[1], side as u64]);
        let mut src = Sampler::new(kernels, &mut rng);
        for _ in 0..runs {
            let out = program.run(d, &mut src)?;
            counts.entry(out).or_default()[side] += 1;
        }
    }
    Ok(counts.into_iter().collect())
}

fn event_counts(counts: &PairCounts, event: &Event) -> [u64; 2] {
    counts
        .iter()
        .filter(|(o, _)| event.contains(o))
        .fold([0, 0], |acc, (_, c)| [acc[0] + c[0], acc[1] + c[1]])
}

/// A candidate cell from the selection phase.
#[derive(Debug, Clone)]
struct Cell {
    p: f64,
    event: Event,
    /// Whether `d2` plays the role of the likelier side.
    flipped: bool,
}

const PHASE_SELECT: u64 = 0;
const PHASE_FINAL: u64 = 1;

/// Tests the sketch completed with `noise` at each epsilon in `test_eps`.
///
/// `target_eps` is added to the test set when missing; `best` is the
/// reported cell at the target.
pub fn test_mechanism(
    sketch: &MechanismSketch,
    args: &ArgBinding,
    noise: &NoiseVector,
    target_eps: f64,
    test_eps: &[f64],
    trials: u64,
    seed: u64,
) -> Result<TestOutcome, TesterError> {
    if noise.len() != sketch.n_holes() {
        return Err(TesterError::Arity { expected: sketch.n_holes(), got: noise.len() });
    }
    if trials < MIN_TRIALS {
        return Err(TesterError::TooFewTrials(trials));
    }
    let mut eps_set: Vec<f64> = test_eps.to_vec();
    if !eps_set.iter().any(|e| (e - target_eps).abs() < 1e-12) {
        eps_set.push(target_eps);
    }
    if eps_set.is_empty() {
        return Err(TesterError::NoTestEpsilon);
    }
    let kernels = noise.kernels(&sketch.families())?;
    let program = Program::new(sketch, args)?;
    let pairs = gen_input_pairs(sketch.adjacency, args.size);
    let select_runs = (trials / 4).max(1);

    // Selection: best cell per (pair, test epsilon).
    let per_pair: Vec<Vec<Option<Cell>>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| -> Result<Vec<Option<Cell>>, TesterError> {
            let counts = run_pair(&program, &kernels, pair, select_runs, seed, [PHASE_SELECT, i as u64])?;
            let pooled: BTreeMap<Output, u64> = counts.iter().map(|(o, c)| (o.clone(), c[0] + c[1])).collect();
            let mut scored: Vec<(u64, usize, Event, [u64; 2])> = gen_events(sketch.output_type, &pooled)?
                .into_iter()
                .enumerate()
                .map(|(k, e)| {
                    let c = event_counts(&counts, &e);
                    (c[0].abs_diff(c[1]), k, e, c)
                })
                .filter(|(_, _, _, c)| c[0] + c[1] > 0)
                .collect();
            scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            scored.truncate(EVENT_CAP);
            let mut best: Vec<Option<Cell>> = vec![None; eps_set.len()];
            for (_, _, event, c) in &scored {
                for (t, &eps) in eps_set.iter().enumerate() {
                    for flipped in [false, true] {
                        let (a, b) = if flipped { (c[1], c[0]) } else { (c[0], c[1]) };
                        let p = hypothesis_test(a, b, select_runs, eps)?;
                        if best[t].as_ref().is_none_or(|cell| p < cell.p) {
                            best[t] = Some(Cell { p, event: event.clone(), flipped });
                        }
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<_, _>>()?;

    let chosen: Vec<Option<(usize, usize)>> = (0..eps_set.len())
        .map(|t| {
            per_pair
                .iter()
                .enumerate()
                .filter_map(|(i, cells)| cells[t].as_ref().map(|c| (i, c.p)))
                .fold(None, |acc: Option<(usize, f64)>, c| match acc {
                    Some(a) if a.1 <= c.1 => Some(a),
                    _ => Some(c),
                })
                .map(|(i, _)| (i, t))
        })
        .collect();

    // Fresh full-budget runs for every pair with a selected cell.
    let active: Vec<usize> = (0..pairs.len()).filter(|&i| per_pair[i].iter().any(Option::is_some)).collect();
    let fresh: Vec<PairCounts> = active
        .par_iter()
        .map(|&i| run_pair(&program, &kernels, &pairs[i], trials, seed, [PHASE_FINAL, i as u64]))
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::new();
    let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
    for (counts, &i) in fresh.iter().zip(&active) {
        for (t, cell) in per_pair[i].iter().enumerate() {
            let Some(cell) = cell else { continue };
            let c = event_counts(counts, &cell.event);
            let (a, b) = if cell.flipped { (c[1], c[0]) } else { (c[0], c[1]) };
            if a + b == 0 {
                continue;
            }
            let pair = &pairs[i];
            let (d1, d2) = if cell.flipped { (&pair.d2, &pair.d1) } else { (&pair.d1, &pair.d2) };
            lookup.insert((i, t), cells.len());
            cells.push(Counterexample {
                pattern: pair.pattern.clone(),
                d1: d1.clone(),
                d2: d2.clone(),
                event: cell.event.clone(),
                p_value: hypothesis_test(a, b, trials, eps_set[t])?,
                test_epsilon: eps_set[t],
                rho1: a as f64 / trials as f64,
                rho2: b as f64 / trials as f64,
                trials,
                seed,
            });
        }
    }

    let mut per_epsilon = Vec::new();
    let mut best = None;
    for key in chosen.into_iter().flatten() {
        let Some(&k) = lookup.get(&key) else { continue };
        let cx = cells[k].clone();
        if (eps_set[key.1] - target_eps).abs() < 1e-12 {
            best = Some(cx.clone());
        }
        per_epsilon.push(cx);
    }
    Ok(TestOutcome { per_epsilon, best, cells })
}

#[cfg(test)]
mod tests;

//! Line search along a few directions in scale space, collecting the
//! counterexamples the tester finds hard to decide.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lang::{ArgBinding, MechanismSketch};
use crate::rng;
use crate::tester::{self, Event, TesterError};

use super::NoiseVector;

/// Default line-search scales.
pub const SCALE_GRID: [f64; 8] = [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0];
/// Default zone of confusion.
pub const ZONE: (f64, f64) = (0.05, 0.9);

/// A challenging input pair and event, with where it was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub pattern: String,
    pub d1: Vec<i64>,
    pub d2: Vec<i64>,
    pub event: Event,
    /// Line-search direction, when found by the line search.
    pub direction: Option<Vec<u8>>,
    /// Concrete scales the tester ran with.
    pub concretization: NoiseVector,
    pub p_value: f64,
}

impl Example {
    /// Same pair (in either orientation) and event.
    pub fn same_as(&self, other: &Example) -> bool {
        self.event == other.event
            && ((self.d1 == other.d1 && self.d2 == other.d2) || (self.d1 == other.d2 && self.d2 == other.d1))
    }
}

/// Unit vectors and the all-ones vector; a single hole has just `(1)`.
pub fn directions(n: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![1u8; n]];
    for i in 0..n {
        let mut u = vec![0u8; n];
        u[i] = 1;
        if !out.contains(&u) {
            out.push(u);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub trials: u64,
    pub zone: (f64, f64),
    pub seed: u64,
}

/// Runs the tester at every `scale * direction` and keeps the distinct
/// counterexamples whose p-value lies inside the zone of confusion.
pub fn select_examples(
    sketch: &MechanismSketch,
    args: &ArgBinding,
    dirs: &[Vec<u8>],
    scales: &[f64],
    cfg: &SelectConfig,
) -> Result<Vec<Example>, TesterError> {
    let eps = args.eps();
    let test_eps = tester::default_test_epsilons(eps);
    let jobs: Vec<(usize, &Vec<u8>, f64)> = dirs
        .iter()
        .enumerate()
        .flat_map(|(i, d)| scales.iter().map(move |&s| (i, d, s)))
        .collect();
    let found: Vec<Vec<Example>> = jobs
        .par_iter()
        .enumerate()
        .map(|(j, &(_, dir, scale))| {
            let v = NoiseVector(dir.iter().map(|&u| (u == 1).then_some(scale)).collect());
            let seed = rng::derive(cfg.seed, &[rng::tag::LINE_SEARCH, j as u64]);
            let out = tester::test_mechanism(sketch, args, &v, eps, &test_eps, cfg.trials, seed)?;
            Ok(out
                .cells
                .into_iter()
                .filter(|c| c.p_value >= cfg.zone.0 && c.p_value <= cfg.zone.1)
                .map(|c| Example {
                    pattern: c.pattern,
                    d1: c.d1,
                    d2: c.d2,
                    event: c.event,
                    direction: Some(dir.clone()),
                    concretization: v.clone(),
                    p_value: c.p_value,
                })
                .collect())
        })
        .collect::<Result<_, TesterError>>()?;
    Ok(dedup(found.into_iter().flatten()))
}

/// Keeps the first occurrence of each pair and event.
pub fn dedup(items: impl IntoIterator<Item = Example>) -> Vec<Example> {
    let mut out: Vec<Example> = Vec::new();
    for e in items {
        if !out.iter().any(|o| o.same_as(&e)) {
            out.push(e);
        }
    }
    out
}

/// [`select_examples`] with the fallbacks used by the pipeline: a wider
/// zone with twice the trials, then every counterexample found at all.
pub fn select_examples_total(
    sketch: &MechanismSketch,
    args: &ArgBinding,
    dirs: &[Vec<u8>],
    scales: &[f64],
    cfg: &SelectConfig,
) -> Result<Vec<Example>, TesterError> {
    let first = select_examples(sketch, args, dirs, scales, cfg)?;
    if !first.is_empty() {
        return Ok(first);
    }
    let wide = SelectConfig { trials: cfg.trials * 2, zone: (0.01, 0.99), seed: cfg.seed };
    let second = select_examples(sketch, args, dirs, scales, &wide)?;
    if !second.is_empty() {
        return Ok(second);
    }
    let everything = SelectConfig { zone: (0.0, 1.0), ..wide };
    select_examples(sketch, args, dirs, scales, &everything)
}

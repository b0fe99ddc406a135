//! Differential evolution (rand/1/bin) over concrete noise scales.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;

use super::{objective, NoiseVector, PresampleBank, SearchError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub population: usize,
    /// Number of generations.
    pub steps: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover rate.
    pub cr: f64,
    /// Lower end of the search box; at [`super::SNAP`] or above no hole goes silent.
    #[serde(default)]
    pub lower: f64,
    /// Upper end of the search box `[lower, upper]^n`.
    pub upper: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Holes pinned to a value (`Some(None)` pins "no noise").
    pub fixed: Vec<Option<Option<f64>>>,
    /// Evaluated points within this much of the final best objective are
    /// kept in the region's archive; negative disables the archive.
    pub archive_tol: f64,
}

/// Default for [`DeConfig::archive_tol`].
pub const ARCHIVE_TOL: f64 = 0.05;
/// Archive points are deduplicated on a lattice of this spacing.
pub const ARCHIVE_CELL: f64 = 0.25;
/// At most this many archive points are kept, best first.
pub const ARCHIVE_CAP: usize = 400;

impl DeConfig {
    pub fn new(n_holes: usize, lambda: f64, seed: u64) -> Self {
        Self {
            population: 50,
            steps: 500 * n_holes,
            f: 0.7,
            cr: 0.9,
            lower: 0.0,
            upper: 16.0,
            lambda,
            seed,
            fixed: vec![None; n_holes],
            archive_tol: ARCHIVE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMember {
    pub raw: Vec<f64>,
    pub vector: NoiseVector,
    pub objective: f64,
}

/// Final population, best first, plus an archive of near-best points seen
/// along the way. A flat valley in the objective lets the population
/// contract onto one arbitrary point of it; the archive keeps the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRegion {
    pub members: Vec<RegionMember>,
    #[serde(default)]
    pub archive: Vec<RegionMember>,
    /// Best objective after initialisation and after every generation.
    pub history: Vec<f64>,
    pub lambda: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl NoiseRegion {
    pub fn best(&self) -> &RegionMember {
        &self.members[0]
    }

    /// Population and archive together.
    pub fn points(&self) -> impl Iterator<Item = &RegionMember> {
        self.members.iter().chain(&self.archive)
    }
}

type CellKey = Vec<i64>;

fn cell_of(raw: &[f64]) -> CellKey {
    let v = NoiseVector::from_raw(raw);
    v.0.iter().map(|x| x.map_or(-1, |x| (x / ARCHIVE_CELL).round() as i64)).collect()
}

fn remember(archive: &mut HashMap<CellKey, (Vec<f64>, f64)>, x: &[f64], s: f64) {
    let slot = archive.entry(cell_of(x)).or_insert_with(|| (x.to_vec(), s));
    if s < slot.1 {
        *slot = (x.to_vec(), s);
    }
}

fn pin(raw: &mut [f64], fixed: &[Option<Option<f64>>]) {
    for (x, f) in raw.iter_mut().zip(fixed) {
        if let Some(v) = f {
            *x = v.unwrap_or(0.0);
        }
    }
}

/// Runs the optimizer and returns its final population.
pub fn get_noise_region(bank: &PresampleBank<'_>, eps: f64, cfg: &DeConfig) -> Result<NoiseRegion, SearchError> {
    let n = bank.n_holes();
    if cfg.population < 4 {
        return Err(SearchError::Config(format!("population must be at least 4, got {}", cfg.population)));
    }
    if cfg.steps == 0 {
        return Err(SearchError::Config("at least one generation is required".into()));
    }
    if !(0.0..cfg.upper).contains(&cfg.lower) {
        return Err(SearchError::Config(format!("box [{}, {}] is empty or negative", cfg.lower, cfg.upper)));
    }
    let draw = |r: &mut rng::Stream| cfg.lower + r.random::<f64>() * (cfg.upper - cfg.lower);
    if cfg.fixed.len() != n {
        return Err(SearchError::Arity { expected: n, got: cfg.fixed.len() });
    }
    let eval = |pop: &[Vec<f64>]| -> Result<Vec<f64>, SearchError> {
        pop.par_iter()
            .map(|raw| objective(bank, &NoiseVector::from_raw(raw), eps, cfg.lambda))
            .collect()
    };

    let mut r = rng::stream(cfg.seed, &[rng::tag::DE, 0]);
    let mut pop: Vec<Vec<f64>> = (0..cfg.population)
        .map(|_| {
            let mut x: Vec<f64> = (0..n).map(|_| draw(&mut r)).collect();
            pin(&mut x, &cfg.fixed);
            x
        })
        .collect();
    let mut scores = eval(&pop)?;
    let best_of = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
    let mut history = vec![best_of(&scores)];
    let keep = cfg.archive_tol >= 0.0;
    let mut archive = HashMap::new();
    if keep {
        for (x, &s) in pop.iter().zip(&scores) {
            remember(&mut archive, x, s);
        }
    }

    for g in 0..cfg.steps {
        let mut r = rng::stream(cfg.seed, &[rng::tag::DE, g as u64 + 1]);
        let trials: Vec<Vec<f64>> = (0..cfg.population)
            .map(|i| {
                let mut pick = |taken: &[usize]| loop {
                    let k = r.random_range(0..cfg.population);
                    if k != i && !taken.contains(&k) {
                        break k;
                    }
                };
                let a = pick(&[]);
                let b = pick(&[a]);
                let c = pick(&[a, b]);
                let forced = r.random_range(0..n);
                let mut x = pop[i].clone();
                for j in 0..n {
                    if j == forced || r.random::<f64>() < cfg.cr {
                        let v = pop[a][j] + cfg.f * (pop[b][j] - pop[c][j]);
                        // out of the box: redraw uniformly rather than pile up on a face
                        x[j] = if (cfg.lower..=cfg.upper).contains(&v) { v } else { draw(&mut r) };
                    }
                }
                pin(&mut x, &cfg.fixed);
                x
            })
            .collect();
        let trial_scores = eval(&trials)?;
        for (i, (x, s)) in trials.into_iter().zip(trial_scores).enumerate() {
            if keep {
                remember(&mut archive, &x, s);
            }
            if s <= scores[i] {
                pop[i] = x;
                scores[i] = s;
            }
        }
        history.push(best_of(&scores));
    }

    let mut members: Vec<RegionMember> = pop
        .into_iter()
        .zip(scores)
        .map(|(raw, objective)| RegionMember { vector: NoiseVector::from_raw(&raw), raw, objective })
        .collect();
    members.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    let bound = members[0].objective + cfg.archive_tol;
    let mut archive: Vec<RegionMember> = archive
        .into_values()
        .filter(|(_, s)| *s <= bound)
        .map(|(raw, objective)| RegionMember { vector: NoiseVector::from_raw(&raw), raw, objective })
        .collect();
    // hash order is arbitrary, so sort on the full key
    archive.sort_by(|a, b| a.objective.total_cmp(&b.objective).then_with(|| a.raw.partial_cmp(&b.raw).expect("finite")));
    archive.truncate(ARCHIVE_CAP);
    Ok(NoiseRegion { members, archive, history, lambda: cfg.lambda, epsilon: eps, seed: cfg.seed })
}

//! Example selection, the presampled estimator, and the optimizer that
//! turns them into a region of good concrete noise scales.

mod bank;
mod de;
mod examples;
mod vector;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::DistError;
use crate::lang::{BindError, RunError};
use crate::tester::TesterError;

pub use bank::{robust_loss, PresampleBank, CONFIDENCE_Z, PROPOSAL_SCALE};
pub use de::{get_noise_region, DeConfig, NoiseRegion, RegionMember, ARCHIVE_CAP, ARCHIVE_CELL, ARCHIVE_TOL};
pub use examples::{dedup, directions, select_examples, select_examples_total, Example, SelectConfig, SCALE_GRID, ZONE};
pub use vector::{NoiseVector, SNAP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error(transparent)]
    Tester(#[from] TesterError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Bind(#[from] BindError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("noise vector has {got} entries but the sketch has {expected} holes")]
    Arity { expected: usize, got: usize },
    #[error("the objective needs at least one example")]
    NoExamples,
    #[error("the presample bank needs at least one trace")]
    NoPresamples,
    #[error("input or event is not registered with the bank")]
    Unregistered,
    #[error("{0}")]
    Config(String),
}

/// Distance of the worst estimated loss from `e^eps`, plus `lambda` per
/// noisy hole.
pub fn objective(bank: &PresampleBank<'_>, cand: &NoiseVector, eps: f64, lambda: f64) -> Result<f64, SearchError> {
    let worst = worst_loss(bank, cand)?;
    Ok((worst - eps.exp()).abs() + lambda * cand.l0() as f64)
}

/// Largest estimated two-sided loss over the bank's examples.
pub fn worst_loss(bank: &PresampleBank<'_>, cand: &NoiseVector) -> Result<f64, SearchError> {
    if bank.n_examples() == 0 {
        return Err(SearchError::NoExamples);
    }
    Ok(bank.losses(cand)?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub scale1: f64,
    pub scale2: f64,
    pub objective: f64,
    /// `|ln L - eps|` for the worst example.
    pub log_gap: f64,
}

/// Objective over the lattice `xs × ys` on holes `holes`, the other holes
/// taken from `base`.
pub fn objective_grid(
    bank: &PresampleBank<'_>,
    base: &NoiseVector,
    holes: (usize, usize),
    xs: &[f64],
    ys: &[f64],
    eps: f64,
    lambda: f64,
) -> Result<Vec<GridPoint>, SearchError> {
    use rayon::prelude::*;
    let n = base.len();
    for h in [holes.0, holes.1] {
        if h >= n {
            return Err(SearchError::Config(format!("hole index {} out of range for {n} holes", h + 1)));
        }
    }
    if holes.0 == holes.1 {
        return Err(SearchError::Config("grid holes must differ".into()));
    }
    let points: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    points
        .par_iter()
        .map(|&(x, y)| {
            let mut v = base.clone();
            v.0[holes.0] = (x >= SNAP).then_some(x);
            v.0[holes.1] = (y >= SNAP).then_some(y);
            let worst = worst_loss(bank, &v)?;
            Ok(GridPoint {
                scale1: x,
                scale2: y,
                objective: (worst - eps.exp()).abs() + lambda * v.l0() as f64,
                log_gap: (worst.ln() - eps).abs(),
            })
        })
        .collect()
}

//! Shared presampled traces and the self-normalised importance estimator.
//!
//! Every registered input runs once per trace; a run is summarised by its
//! output together with, per hole, the number of draws consumed and the sum
//! of their magnitudes. Those two numbers fix the run's importance weight
//! for any target scale, so runs sharing them are pooled into one key and an
//! estimate costs one pass over the keys.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::dist::{Family, Noise};
use crate::lang::{ArgBinding, HoleId, MechanismSketch, NoiseSource, Output, Program, RunError};
use crate::rng;
use crate::tester::Event;

use super::{Example, NoiseVector, SearchError};

/// Scale of the proposal every hole is presampled from.
pub const PROPOSAL_SCALE: f64 = 4.0;

const CHUNK: usize = 2048;

/// Replays one presampled trace, skipping masked holes and recording what
/// each hole consumed.
struct Replay<'t> {
    draws: &'t [Vec<i64>],
    proposals: &'t [Noise],
    mask: u32,
    pos: Vec<usize>,
    mags: Vec<u64>,
}

impl NoiseSource for Replay<'_> {
    fn draw(&mut self, hole: HoleId) -> Result<Option<i64>, RunError> {
        if self.mask >> hole & 1 == 1 {
            return Ok(None);
        }
        let p = self.pos[hole];
        let v = *self.draws[hole].get(p).ok_or(RunError::TraceExhausted { hole })?;
        self.pos[hole] = p + 1;
        self.mags[hole] += self.proposals[hole].magnitude(v).expect("proposal draws lie in the support") as u64;
        Ok(Some(v))
    }
}

/// Pooled runs of one input under one no-noise mask.
#[derive(Debug)]
struct RunTable {
    /// Draw counts, `n_holes` per key.
    counts: Vec<u32>,
    /// Magnitude sums, `n_holes` per key.
    mags: Vec<u64>,
    totals: Vec<f64>,
    /// Per registered event of the input, runs per key landing in it.
    hits: Vec<Vec<f64>>,
}

type Key = (Vec<u32>, Vec<u64>);

#[derive(Debug)]
pub struct PresampleBank<'s> {
    program: Program<'s>,
    families: Vec<Family>,
    proposals: Vec<Noise>,
    traces: Vec<Vec<Vec<i64>>>,
    inputs: Vec<Vec<i64>>,
    events: Vec<Vec<Event>>,
    /// Per example: `(input, event)` indices of both sides.
    sides: Vec<[(usize, usize); 2]>,
    tables: Vec<Vec<OnceLock<Result<RunTable, RunError>>>>,
    z: f64,
}

/// Standard errors taken off each log loss ratio unless set otherwise.
pub const CONFIDENCE_Z: f64 = 1.0;

/// Lower confidence bound on the two-sided loss between probabilities
/// `p1` and `p2` resting on `c1` and `c2` (effective) hits. A side with
/// under half a hit is valued at half a hit of the other side, then the
/// log ratio shrinks by `z` delta-method standard errors, floored at 0.
pub fn robust_loss(p1: f64, c1: f64, p2: f64, c2: f64, z: f64) -> f64 {
    let (c1, c2) = (c1.max(0.0), c2.max(0.0));
    if c1 < 0.5 && c2 < 0.5 {
        return 1.0;
    }
    let half = |p: f64, c: f64| p * 0.5 / c.max(0.5);
    let (p1, p2) = if c1 < 0.5 { (half(p2, c2), p2) } else if c2 < 0.5 { (p1, half(p1, c1)) } else { (p1, p2) };
    let se = (1.0 / c1.max(0.5) + 1.0 / c2.max(0.5)).sqrt();
    ((p1 / p2).ln().abs() - z * se).max(0.0).exp()
}

/// One event's estimate with its effective number of hits.
#[derive(Debug, Clone, Copy)]
struct Estimate {
    p: f64,
    hits: f64,
}

impl<'s> PresampleBank<'s> {
    /// Draws `m` traces and registers the inputs and events of `examples`.
    pub fn new(
        sketch: &'s MechanismSketch,
        args: &ArgBinding,
        examples: &[Example],
        m: usize,
        seed: u64,
    ) -> Result<Self, SearchError> {
        if m == 0 {
            return Err(SearchError::NoPresamples);
        }
        let program = Program::new(sketch, args)?;
        let families = sketch.families();
        let proposals: Vec<Noise> =
            families.iter().map(|&f| Noise::new(f, PROPOSAL_SCALE)).collect::<Result<_, _>>()?;
        let caps = crate::lang::count_hole_draws(sketch, args);
        let traces: Vec<Vec<Vec<i64>>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut r = rng::stream(seed, &[rng::tag::BANK, j as u64]);
                proposals
                    .iter()
                    .zip(&caps)
                    .map(|(p, &c)| (0..c).map(|_| p.sample_offset(&mut r)).collect())
                    .collect()
            })
            .collect();
        let mut inputs: Vec<Vec<i64>> = Vec::new();
        let mut events: Vec<Vec<Event>> = Vec::new();
        let mut sides = Vec::with_capacity(examples.len());
        for ex in examples {
            let mut pair = [(0, 0); 2];
            for (s, d) in [&ex.d1, &ex.d2].into_iter().enumerate() {
                let i = match inputs.iter().position(|x| x == d) {
                    Some(i) => i,
                    None => {
                        inputs.push(d.clone());
                        events.push(Vec::new());
                        inputs.len() - 1
                    }
                };
                let e = match events[i].iter().position(|x| x == &ex.event) {
                    Some(e) => e,
                    None => {
                        events[i].push(ex.event.clone());
                        events[i].len() - 1
                    }
                };
                pair[s] = (i, e);
            }
            sides.push(pair);
        }
        let masks = 1usize << families.len();
        let tables = inputs.iter().map(|_| (0..masks).map(|_| OnceLock::new()).collect()).collect();
        Ok(Self { program, families, proposals, traces, inputs, events, sides, tables, z: CONFIDENCE_Z })
    }

    pub fn m(&self) -> usize {
        self.traces.len()
    }

    pub fn n_examples(&self) -> usize {
        self.sides.len()
    }

    pub fn n_holes(&self) -> usize {
        self.families.len()
    }

    fn table(&self, input: usize, mask: u32) -> Result<&RunTable, SearchError> {
        self.tables[input][mask as usize]
            .get_or_init(|| self.build(input, mask))
            .as_ref()
            .map_err(|e| SearchError::Run(e.clone()))
    }

    fn build(&self, input: usize, mask: u32) -> Result<RunTable, RunError> {
        let d = &self.inputs[input];
        let n = self.n_holes();
        let chunks: Vec<Vec<(Key, Output)>> = self
            .traces
            .chunks(CHUNK)
            .map(|chunk| {
                let mut out = Vec::with_capacity(chunk.len());
                for draws in chunk {
                    let mut src = Replay {
                        draws,
                        proposals: &self.proposals,
                        mask,
                        pos: vec![0; n],
                        mags: vec![0; n],
                    };
                    let o = self.program.run(d, &mut src)?;
                    let counts = src.pos.iter().map(|&p| p as u32).collect();
                    out.push(((counts, src.mags), o));
                }
                Ok(out)
            })
            .collect::<Result<_, RunError>>()?;

        let mut index: HashMap<Key, usize> = HashMap::new();
        let mut keys: Vec<Key> = Vec::new();
        let mut outputs: Vec<Output> = Vec::new();
        let mut out_index: HashMap<Output, usize> = HashMap::new();
        let mut cells: Vec<HashMap<usize, u64>> = Vec::new();
        for (key, o) in chunks.into_iter().flatten() {
            let k = *index.entry(key.clone()).or_insert_with(|| {
                keys.push(key);
                cells.push(HashMap::new());
                keys.len() - 1
            });
            let oi = *out_index.entry(o.clone()).or_insert_with(|| {
                outputs.push(o);
                outputs.len() - 1
            });
            *cells[k].entry(oi).or_default() += 1;
        }
        let member: Vec<Vec<bool>> =
            self.events[input].iter().map(|e| outputs.iter().map(|o| e.contains(o)).collect()).collect();
        let totals = cells.iter().map(|c| c.values().sum::<u64>() as f64).collect();
        let hits = member
            .iter()
            .map(|inside| {
                cells
                    .iter()
                    .map(|c| c.iter().filter(|(oi, _)| inside[**oi]).map(|(_, &n)| n).sum::<u64>() as f64)
                    .collect()
            })
            .collect();
        Ok(RunTable {
            counts: keys.iter().flat_map(|k| k.0.iter().copied()).collect(),
            mags: keys.iter().flat_map(|k| k.1.iter().copied()).collect(),
            totals,
            hits,
        })
    }

    /// Builds the run tables for `masks` on every input up front, in
    /// parallel. Tables are otherwise built on first use, one thread each.
    pub fn warm(&self, masks: &[u32]) -> Result<(), SearchError> {
        let jobs: Vec<(usize, u32)> =
            (0..self.inputs.len()).flat_map(|i| masks.iter().map(move |&m| (i, m))).collect();
        jobs.par_iter().try_for_each(|&(i, m)| self.table(i, m).map(|_| ()))
    }

    fn clamp(&self, p: f64) -> f64 {
        let floor = 1.0 / (10.0 * self.m() as f64);
        p.clamp(floor, 1.0 - floor)
    }

    /// Sets the number of standard errors `losses` takes off each log ratio.
    pub fn with_confidence(mut self, z: f64) -> Self {
        self.z = z;
        self
    }

    /// Clamped estimates of every registered event of `input`.
    fn estimates(&self, input: usize, cand: &NoiseVector) -> Result<Vec<Estimate>, SearchError> {
        if cand.len() != self.n_holes() {
            return Err(SearchError::Arity { expected: self.n_holes(), got: cand.len() });
        }
        let table = self.table(input, cand.bottom_mask())?;
        let n = self.n_holes();
        let mut lk = vec![0.0; n];
        let mut la = vec![0.0; n];
        for h in 0..n {
            if let Some(s) = cand.0[h] {
                let t = Noise::new(self.families[h], s)?;
                lk[h] = t.ln_norm() - self.proposals[h].ln_norm();
                la[h] = t.ln_alpha() - self.proposals[h].ln_alpha();
            }
        }
        let keys = table.totals.len();
        let mut lw = Vec::with_capacity(keys);
        let mut top = f64::NEG_INFINITY;
        for k in 0..keys {
            let mut w = 0.0;
            for h in 0..n {
                w += table.counts[k * n + h] as f64 * lk[h] + table.mags[k * n + h] as f64 * la[h];
            }
            top = top.max(w);
            lw.push(w);
        }
        let mut den = 0.0;
        let mut nums = vec![0.0; table.hits.len()];
        let mut squares = vec![0.0; table.hits.len()];
        for (k, w) in lw.iter().enumerate() {
            let w = (w - top).exp();
            den += w * table.totals[k];
            for ((num, sq), hits) in nums.iter_mut().zip(squares.iter_mut()).zip(&table.hits) {
                *num += w * hits[k];
                *sq += w * w * hits[k];
            }
        }
        // Kish effective sample size of the hitting runs
        Ok(nums
            .into_iter()
            .zip(squares)
            .map(|(x, sq)| Estimate { p: self.clamp(x / den), hits: if sq > 0.0 { x * x / sq } else { 0.0 } })
            .collect())
    }

    /// Estimated chance of `event` on input `d` under `cand`. Both must have
    /// been registered through the bank's examples.
    pub fn estimate(&self, d: &[i64], event: &Event, cand: &NoiseVector) -> Result<f64, SearchError> {
        let i = self.inputs.iter().position(|x| x == d).ok_or(SearchError::Unregistered)?;
        let e = self.events[i].iter().position(|x| x == event).ok_or(SearchError::Unregistered)?;
        Ok(self.estimates(i, cand)?[e].p)
    }

    /// Two-sided privacy loss estimate for every example, in order. Each
    /// ratio is shrunk towards 1 by the configured number of standard
    /// errors, which keeps rare events from dominating.
    pub fn losses(&self, cand: &NoiseVector) -> Result<Vec<f64>, SearchError> {
        let per_input: Vec<Vec<Estimate>> =
            (0..self.inputs.len()).map(|i| self.estimates(i, cand)).collect::<Result<_, _>>()?;
        Ok(self
            .sides
            .iter()
            .map(|[(i1, e1), (i2, e2)]| {
                let (a, b) = (per_input[*i1][*e1], per_input[*i2][*e2]);
                if self.z == 0.0 {
                    (a.p / b.p).max(b.p / a.p)
                } else {
                    robust_loss(a.p, a.hits, b.p, b.hits, self.z)
                }
            })
            .collect())
    }
}

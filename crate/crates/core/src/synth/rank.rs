//! Scoring candidates on test examples at several argument bindings, and
//! the final re-test of the best ones.
//!
//! Probabilities here come from direct simulation at each candidate's own
//! scales. All candidates at a binding share one table of uniforms, pushed
//! through each kernel's inverse CDF, so candidate differences are not
//! drowned by sampling noise.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Noise;
use crate::lang::{count_hole_draws, ArgBinding, HoleId, MechanismSketch, NoiseSource, Program, RunError};
use crate::rng;
use crate::search::{robust_loss, Example, NoiseVector};
use crate::tester::{self, Event, TesterError};

use super::grammar::ExprVector;
use super::SynthError;

/// Examples to score against at one binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestBinding {
    pub args: ArgBinding,
    pub examples: Vec<Example>,
}

/// Outcome of re-testing a candidate at every test binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Smallest p-value at the target epsilon, per binding, in order.
    /// Binding tests stop after the first rejection.
    pub p_values: Vec<f64>,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub exprs: ExprVector,
    pub labels: Vec<String>,
    /// Examples (over all bindings) whose loss is confidently above the allowance.
    pub violations: usize,
    /// Mean of `ln(loss) / eps` over all bindings and examples.
    pub loss: f64,
    /// Largest `ln(loss) / eps` over all bindings and examples.
    pub worst: f64,
    /// Summed scales at the default binding.
    pub magnitude: f64,
    #[serde(with = "crate::lang::ratio_text")]
    pub magnitude_exact: Ratio<i64>,
    /// Position in enumeration order.
    pub index: usize,
    pub verdict: Option<Verdict>,
}

fn key_order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    a.violations
        .cmp(&b.violations)
        .then_with(|| b.loss.total_cmp(&a.loss))
        .then_with(|| a.magnitude_exact.cmp(&b.magnitude_exact))
}

/// Sorts by (violations, higher loss, smaller magnitude), keeping
/// enumeration order among ties.
pub fn sort_ranked(c: &mut [RankedCandidate]) {
    c.sort_by(|a, b| key_order(a, b).then(a.index.cmp(&b.index)));
}

struct UniformReplay<'a> {
    us: &'a [Vec<f64>],
    kernels: &'a [Option<Noise>],
    pos: Vec<usize>,
}

impl NoiseSource for UniformReplay<'_> {
    fn draw(&mut self, hole: HoleId) -> Result<Option<i64>, RunError> {
        let Some(k) = self.kernels[hole] else { return Ok(None) };
        let p = self.pos[hole];
        let u = *self.us[hole].get(p).ok_or(RunError::TraceExhausted { hole })?;
        self.pos[hole] = p + 1;
        Ok(Some(k.quantile_offset(u)))
    }
}

type LossKey = Vec<Option<u64>>;

struct BindingState<'s> {
    args: ArgBinding,
    program: Program<'s>,
    /// Per trial, per hole uniforms.
    uniforms: Vec<Vec<Vec<f64>>>,
    inputs: Vec<Vec<i64>>,
    events: Vec<Vec<Event>>,
    sides: Vec<[(usize, usize); 2]>,
    memo: Mutex<HashMap<LossKey, Arc<Vec<ExampleLoss>>>>,
}

/// Loss estimates of concrete noise vectors on the test examples.
pub struct RankEstimator<'s> {
    sketch: &'s MechanismSketch,
    bindings: Vec<BindingState<'s>>,
    trials: usize,
    z: f64,
    violation_z: f64,
}

/// Loss of one example under the two confidence levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleLoss {
    /// Shrunk by the estimator's `z`; feeds the loss key.
    pub loss: f64,
    /// Shrunk by `violation_z`; compared against the allowance.
    pub bound: f64,
}

impl<'s> RankEstimator<'s> {
    pub fn new(
        sketch: &'s MechanismSketch,
        tests: &[TestBinding],
        trials: usize,
        z: f64,
        violation_z: f64,
        seed: u64,
    ) -> Result<Self, SynthError> {
        let mut bindings = Vec::with_capacity(tests.len());
        for (b, t) in tests.iter().enumerate() {
            let program = Program::new(sketch, &t.args).map_err(SynthError::rank)?;
            let caps = count_hole_draws(sketch, &t.args);
            let uniforms = (0..trials)
                .into_par_iter()
                .map(|j| {
                    let mut r = rng::stream(seed, &[b as u64, j as u64]);
                    caps.iter()
                        .map(|&c| {
                            (0..c)
                                .map(|_| {
                                    let u: f64 = r.random();
                                    if u == 0.0 { f64::MIN_POSITIVE } else { u }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let mut inputs: Vec<Vec<i64>> = Vec::new();
            let mut events: Vec<Vec<Event>> = Vec::new();
            let mut sides = Vec::new();
            for ex in &t.examples {
                let mut pair = [(0, 0); 2];
                for (s, d) in [&ex.d1, &ex.d2].into_iter().enumerate() {
                    let i = inputs.iter().position(|x| x == d).unwrap_or_else(|| {
                        inputs.push(d.clone());
                        events.push(Vec::new());
                        inputs.len() - 1
                    });
                    let e = events[i].iter().position(|x| x == &ex.event).unwrap_or_else(|| {
                        events[i].push(ex.event.clone());
                        events[i].len() - 1
                    });
                    pair[s] = (i, e);
                }
                sides.push(pair);
            }
            bindings.push(BindingState {
                args: t.args.clone(),
                program,
                uniforms,
                inputs,
                events,
                sides,
                memo: Mutex::new(HashMap::new()),
            });
        }
        Ok(Self { sketch, bindings, trials, z, violation_z })
    }

    /// Robust two-sided loss per example at binding `b` for concrete `scales`.
    pub fn losses(&self, b: usize, scales: &[Option<f64>]) -> Result<Arc<Vec<ExampleLoss>>, SynthError> {
        let st = &self.bindings[b];
        let key: LossKey = scales.iter().map(|s| s.map(f64::to_bits)).collect();
        if let Some(hit) = st.memo.lock().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        let kernels = NoiseVector(scales.to_vec()).kernels(&self.sketch.families()).map_err(SynthError::rank)?;
        let n = self.trials as f64;
        let mut hits: Vec<Vec<f64>> = Vec::with_capacity(st.inputs.len());
        for (d, evs) in st.inputs.iter().zip(&st.events) {
            let mut h = vec![0u64; evs.len()];
            for us in &st.uniforms {
                let mut src = UniformReplay { us, kernels: &kernels, pos: vec![0; kernels.len()] };
                let out = st.program.run(d, &mut src).map_err(SynthError::rank)?;
                for (c, e) in h.iter_mut().zip(evs) {
                    *c += e.contains(&out) as u64;
                }
            }
            hits.push(h.into_iter().map(|c| c as f64).collect());
        }
        let losses: Vec<ExampleLoss> = st
            .sides
            .iter()
            .map(|[(i1, e1), (i2, e2)]| {
                let (c1, c2) = (hits[*i1][*e1], hits[*i2][*e2]);
                ExampleLoss {
                    loss: robust_loss(c1 / n, c1, c2 / n, c2, self.z),
                    bound: robust_loss(c1 / n, c1, c2 / n, c2, self.violation_z),
                }
            })
            .collect();
        let losses = Arc::new(losses);
        st.memo.lock().expect("memo lock").insert(key, losses.clone());
        Ok(losses)
    }

    pub fn n_bindings(&self) -> usize {
        self.bindings.len()
    }

    pub fn binding(&self, b: usize) -> &ArgBinding {
        &self.bindings[b].args
    }
}

/// Scores and sorts `cands`. `gamma` fixes the magnitude key.
pub fn rank_candidates(
    cands: &[ExprVector],
    est: &RankEstimator<'_>,
    gamma: &ArgBinding,
    slack: f64,
) -> Result<Vec<RankedCandidate>, SynthError> {
    let mut ranked: Vec<RankedCandidate> = cands
        .par_iter()
        .enumerate()
        .map(|(index, exprs)| {
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            let (mut total, mut count) = (0.0, 0usize);
            for b in 0..est.n_bindings() {
                let args = est.binding(b);
                let scales = exprs.concretize(args).ok_or_else(|| SynthError::rank("expression not defined"))?;
                let eps = args.eps();
                let allowance = eps.exp() * (1.0 + slack);
                for l in est.losses(b, &scales)?.iter() {
                    violations += (l.bound > allowance) as usize;
                    worst = worst.max(l.loss.ln() / eps);
                    total += l.loss.ln() / eps;
                    count += 1;
                }
            }
            let magnitude_exact = exprs.magnitude(gamma).ok_or_else(|| SynthError::rank("expression not defined"))?;
            Ok(RankedCandidate {
                labels: exprs.labels(),
                exprs: exprs.clone(),
                violations,
                loss: if count == 0 { 0.0 } else { total / count as f64 },
                worst,
                magnitude: num_traits::ToPrimitive::to_f64(&magnitude_exact).unwrap_or(f64::INFINITY),
                magnitude_exact,
                index,
                verdict: None,
            })
        })
        .collect::<Result<_, SynthError>>()?;
    sort_ranked(&mut ranked);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub trials: u64,
    /// p-values below this at the target epsilon reject.
    pub reject_below: f64,
    pub seed: u64,
}

/// Re-tests the first `budget` ranked candidates at every binding and
/// attaches verdicts. Returns the survivors in rank order.
pub fn final_verify(
    sketch: &MechanismSketch,
    ranked: &mut [RankedCandidate],
    bindings: &[ArgBinding],
    budget: usize,
    cfg: &VerifyConfig,
) -> Result<Vec<RankedCandidate>, SynthError> {
    let top = budget.min(ranked.len());
    let verdicts: Vec<Verdict> = ranked[..top]
        .par_iter()
        .map(|cand| -> Result<Verdict, TesterError> {
            let mut p_values = Vec::new();
            for (b, args) in bindings.iter().enumerate() {
                let Some(scales) = cand.exprs.concretize(args) else {
                    return Ok(Verdict { p_values, rejected: true });
                };
                let eps = args.eps();
                let seed = rng::derive(cfg.seed, &[cand.index as u64, b as u64]);
                let out = tester::test_mechanism(
                    sketch,
                    args,
                    &NoiseVector(scales),
                    eps,
                    &tester::default_test_epsilons(eps),
                    cfg.trials,
                    seed,
                )?;
                let p = out.best.map_or(1.0, |c| c.p_value);
                p_values.push(p);
                if p < cfg.reject_below {
                    return Ok(Verdict { p_values, rejected: true });
                }
            }
            Ok(Verdict { p_values, rejected: false })
        })
        .collect::<Result<_, _>>()
        .map_err(SynthError::verify)?;
    let mut survivors = Vec::new();
    for (cand, v) in ranked.iter_mut().zip(verdicts) {
        let keep = !v.rejected;
        cand.verdict = Some(v);
        if keep {
            survivors.push(cand.clone());
        }
    }
    Ok(survivors)
}

//! From a sketch to a ranked, re-tested list of scale expressions.

mod grammar;
mod prune;
mod rank;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{ArgBinding, MechanismSketch};
use crate::rng::{self, tag};
use crate::search::{self, DeConfig, Example, NoiseRegion, NoiseVector, PresampleBank, RegionMember, SelectConfig};
use crate::tester;

pub use grammar::{ExprVector, Grammar, ScaleExpr, THRESHOLD_ARG};
pub use prune::{enumerate_and_prune, l1_distance};
pub use rank::{final_verify, rank_candidates, sort_ranked, RankEstimator, RankedCandidate, TestBinding, Verdict, VerifyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Opti,
    Enum,
    Verify,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::Opti => "opti",
            Phase::Enum => "enum",
            Phase::Verify => "verify",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{phase}: {message}")]
pub struct SynthError {
    pub phase: Phase,
    pub message: String,
}

impl SynthError {
    pub fn new(phase: Phase, e: impl ToString) -> Self {
        Self { phase, message: e.to_string() }
    }

    pub(crate) fn rank(e: impl ToString) -> Self {
        Self::new(Phase::Enum, e)
    }

    pub(crate) fn verify(e: impl ToString) -> Self {
        Self::new(Phase::Verify, e)
    }
}

/// Every knob of the pipeline, echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Tester trials per side.
    pub trials: u64,
    /// Presampled traces in the optimizer's bank.
    pub presamples: usize,
    pub lambda: f64,
    pub population: usize,
    /// Generations per hole.
    pub steps: usize,
    pub de_f: f64,
    pub de_cr: f64,
    pub de_upper: f64,
    pub zone: (f64, f64),
    pub proposal_scale: f64,
    pub scale_grid: Vec<f64>,
    pub radius: f64,
    pub wide_radius: f64,
    pub grammar: Grammar,
    pub size: usize,
    #[serde(with = "crate::lang::ratio_text")]
    pub epsilon: Ratio<i64>,
    /// Integer arguments overriding the sketch's header defaults.
    pub ints: BTreeMap<String, i64>,
    #[serde(with = "crate::lang::ratio_list")]
    pub test_epsilons: Vec<Ratio<i64>>,
    pub test_sizes: Vec<usize>,
    /// Simulated runs per probability when ranking.
    pub rank_trials: usize,
    pub slack: f64,
    /// Standard errors taken off each estimated log loss ratio.
    pub confidence_z: f64,
    /// Standard errors taken off before a ranking loss counts as a violation.
    pub violation_z: f64,
    /// Extra optimizer runs, one per pattern of silenced holes.
    pub mask_restarts: bool,
    /// Members of each pattern run merged into the region.
    pub restart_keep: usize,
    /// Near-best tolerance of the optimizer's archive; negative disables it.
    pub archive_tol: f64,
    /// Candidates re-tested per hole.
    pub verify_per_hole: usize,
    pub reject_below: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 20_000,
            presamples: 50_000,
            lambda: 1.0,
            population: 50,
            steps: 500,
            de_f: 0.7,
            de_cr: 0.9,
            de_upper: 16.0,
            zone: search::ZONE,
            proposal_scale: search::PROPOSAL_SCALE,
            scale_grid: search::SCALE_GRID.to_vec(),
            radius: 3.0,
            wide_radius: 6.0,
            grammar: Grammar::default(),
            size: 5,
            epsilon: Ratio::new(1, 2),
            ints: BTreeMap::new(),
            test_epsilons: vec![Ratio::new(1, 5), Ratio::new(1, 2), Ratio::new(3, 2)],
            test_sizes: vec![5, 10],
            rank_trials: 10_000,
            slack: 0.1,
            confidence_z: search::CONFIDENCE_Z,
            violation_z: 2.0,
            mask_restarts: true,
            restart_keep: 10,
            archive_tol: search::ARCHIVE_TOL,
            verify_per_hole: 5,
            reject_below: 0.05,
        }
    }
}

impl SynthConfig {
    /// Five times the tester trials and presamples.
    pub fn paper_scale(mut self) -> Self {
        self.trials *= 5;
        self.presamples *= 5;
        self
    }

    pub fn check(&self) -> Result<(), String> {
        let positive = [
            ("trials", self.trials as f64),
            ("presamples", self.presamples as f64),
            ("population", self.population as f64),
            ("steps", self.steps as f64),
            ("radius", self.radius),
            ("size", self.size as f64),
            ("rank trials", self.rank_trials as f64),
            ("de upper bound", self.de_upper),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.lambda < 0.0 || self.slack < 0.0 || self.confidence_z < 0.0 || self.violation_z < 0.0 {
            return Err("lambda, slack and confidence levels must not be negative".into());
        }
        if self.population < 4 {
            return Err("population must be at least 4".into());
        }
        if !(0.0..=1.0).contains(&self.zone.0) || !(self.zone.0..=1.0).contains(&self.zone.1) {
            return Err("zone of confusion must satisfy 0 <= low <= high <= 1".into());
        }
        if self.epsilon <= Ratio::from_integer(0) || self.test_epsilons.iter().any(|e| *e <= Ratio::from_integer(0)) {
            return Err("epsilon values must be positive".into());
        }
        if self.test_epsilons.is_empty() || self.test_sizes.is_empty() || self.test_sizes.contains(&0) {
            return Err("test bindings must be non-empty with positive sizes".into());
        }
        if self.scale_grid.is_empty() || self.scale_grid.iter().any(|s| !(*s > 0.0)) {
            return Err("scale grid must hold positive scales".into());
        }
        if self.trials < tester::MIN_TRIALS {
            return Err(format!("trials must be at least {}", tester::MIN_TRIALS));
        }
        Ok(())
    }
}

/// Default binding and test bindings. Integer overrides for arguments the
/// sketch does not declare are ignored.
pub fn fix_params(sketch: &MechanismSketch, cfg: &SynthConfig) -> Result<(ArgBinding, Vec<ArgBinding>), SynthError> {
    let ints: BTreeMap<String, i64> =
        cfg.ints.iter().filter(|(k, _)| sketch.arg(k).is_some()).map(|(k, v)| (k.clone(), *v)).collect();
    let gamma = ArgBinding::for_sketch(sketch, cfg.size, cfg.epsilon, &ints).map_err(|e| SynthError::new(Phase::Init, e))?;
    let mut tests = Vec::new();
    for &eps in &cfg.test_epsilons {
        for &size in &cfg.test_sizes {
            tests.push(gamma.with(size, eps));
        }
    }
    Ok((gamma, tests))
}

/// Test examples at `args`: the shapes of `examples` rebuilt at the new
/// length, then a fresh tester pass on `probe`.
pub fn test_examples_for(
    sketch: &MechanismSketch,
    args: &ArgBinding,
    gamma_size: usize,
    examples: &[Example],
    probe: &NoiseVector,
    trials: u64,
    seed: u64,
) -> Result<Vec<Example>, SynthError> {
    let mut out = Vec::new();
    for ex in examples {
        let (Some(at_gamma), Some(here)) = (
            tester::pattern_pair(sketch.adjacency, &ex.pattern, gamma_size),
            tester::pattern_pair(sketch.adjacency, &ex.pattern, args.size),
        ) else {
            continue;
        };
        let (d1, d2) = if at_gamma.d1 == ex.d1 { (here.d1, here.d2) } else { (here.d2, here.d1) };
        out.push(Example { d1, d2, ..ex.clone() });
    }
    let eps = args.eps();
    let fresh = tester::test_mechanism(sketch, args, probe, eps, &tester::default_test_epsilons(eps), trials, seed)
        .map_err(|e| SynthError::new(Phase::Enum, e))?;
    out.extend(fresh.per_epsilon.into_iter().map(|c| Example {
        pattern: c.pattern,
        d1: c.d1,
        d2: c.d2,
        event: c.event,
        direction: None,
        concretization: probe.clone(),
        p_value: c.p_value,
    }));
    Ok(search::dedup(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub size: usize,
    /// Near-best points kept besides the population.
    pub archive_size: usize,
    pub best: RegionMember,
    /// Leading members, best first.
    pub top: Vec<RegionMember>,
    pub initial_best: f64,
    pub generations: usize,
}

impl RegionSummary {
    fn of(r: &NoiseRegion) -> Self {
        Self {
            size: r.members.len(),
            archive_size: r.archive.len(),
            best: r.best().clone(),
            top: r.members.iter().take(10).cloned().collect(),
            initial_best: r.history[0],
            generations: r.history.len() - 1,
        }
    }
}

/// Deterministic synthesis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub sketch: String,
    pub holes: usize,
    pub config: SynthConfig,
    pub gamma: ArgBinding,
    pub test_bindings: Vec<ArgBinding>,
    pub examples: Vec<Example>,
    /// Test examples per binding.
    pub test_example_counts: Vec<usize>,
    pub region: RegionSummary,
    pub radius_used: f64,
    pub candidates: usize,
    /// Every candidate in rank order; re-tested ones carry verdicts.
    pub ranked: Vec<RankedCandidate>,
    /// Candidates that passed re-testing, best first.
    pub verified: Vec<RankedCandidate>,
    pub diagnostics: Vec<String>,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub init: f64,
    pub opti: f64,
    #[serde(rename = "enum")]
    pub enumerate: f64,
    pub verify: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct SynthOutcome {
    pub report: SynthReport,
    pub times: PhaseTimes,
}

/// The full pipeline.
pub fn synth(sketch: &MechanismSketch, cfg: &SynthConfig) -> Result<SynthOutcome, SynthError> {
    cfg.check().map_err(|e| SynthError::new(Phase::Init, e))?;
    let n = sketch.n_holes();
    let mut times = PhaseTimes::default();
    let mut diagnostics = Vec::new();
    let start = Instant::now();

    // init: default arguments and challenging examples
    let (gamma, tests) = fix_params(sketch, cfg)?;
    let select = SelectConfig { trials: cfg.trials, zone: cfg.zone, seed: rng::derive(cfg.seed, &[tag::TESTER_SELECT]) };
    let examples = search::select_examples_total(sketch, &gamma, &search::directions(n), &cfg.scale_grid, &select)
        .map_err(|e| SynthError::new(Phase::Init, e))?;
    if examples.is_empty() {
        return Err(SynthError::new(Phase::Init, "the tester produced no examples"));
    }
    times.init = start.elapsed().as_secs_f64();

    // opti: noise region
    let t = Instant::now();
    let bank = PresampleBank::new(sketch, &gamma, &examples, cfg.presamples, rng::derive(cfg.seed, &[tag::BANK]))
        .map_err(|e| SynthError::new(Phase::Opti, e))?
        .with_confidence(cfg.confidence_z);
    bank.warm(&[0]).map_err(|e| SynthError::new(Phase::Opti, e))?;
    let de = DeConfig {
        population: cfg.population,
        steps: cfg.steps * n,
        f: cfg.de_f,
        cr: cfg.de_cr,
        upper: cfg.de_upper,
        lambda: cfg.lambda,
        seed: rng::derive(cfg.seed, &[tag::DE]),
        fixed: vec![None; n],
        lower: 0.0,
        archive_tol: cfg.archive_tol,
    };
    let mut region = search::get_noise_region(&bank, gamma.eps(), &de).map_err(|e| SynthError::new(Phase::Opti, e))?;
    if cfg.mask_restarts && n > 1 {
        // the L0 term lets a fit with fewer noisy holes crowd out every
        // other pattern, so each pattern of silenced holes (none included)
        // gets its own run and keeps its own near-best archive
        let masks: Vec<u32> = (0..(1u32 << n) - 1).collect();
        bank.warm(&masks).map_err(|e| SynthError::new(Phase::Opti, e))?;
        for &mask in &masks {
            let fixed = (0..n).map(|h| (mask >> h & 1 == 1).then_some(None)).collect();
            let free = n - mask.count_ones() as usize;
            let lower = if mask == 0 { search::SNAP } else { 0.0 };
            let seed = rng::derive(cfg.seed, &[tag::DE, mask as u64 + 1]);
            let sub = DeConfig { steps: cfg.steps * free, seed, fixed, lower, ..de.clone() };
            let r = search::get_noise_region(&bank, gamma.eps(), &sub).map_err(|e| SynthError::new(Phase::Opti, e))?;
            region.members.extend(r.members.into_iter().take(cfg.restart_keep));
            region.archive.extend(r.archive);
        }
        region.members.sort_by(|a, b| a.objective.total_cmp(&b.objective));
        region.archive.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    }
    drop(bank);
    times.opti = t.elapsed().as_secs_f64();

    // enum: prune, build test sets, rank
    let t = Instant::now();
    let mut radius_used = cfg.radius;
    let mut cands = enumerate_and_prune(&cfg.grammar, &region, &gamma, cfg.radius);
    if cands.is_empty() {
        diagnostics.push(format!("no candidate within radius {}; widened to {}", cfg.radius, cfg.wide_radius));
        radius_used = cfg.wide_radius;
        cands = enumerate_and_prune(&cfg.grammar, &region, &gamma, cfg.wide_radius);
    }
    if cands.is_empty() {
        return Err(SynthError::new(Phase::Enum, "no grammar expression lies near the noise region"));
    }
    let probe = &region.best().vector;
    let mut test_sets = Vec::with_capacity(tests.len());
    for (b, args) in tests.iter().enumerate() {
        let ratio = gamma.eps() / args.eps();
        let scaled = NoiseVector(probe.0.iter().map(|s| s.map(|s| s * ratio)).collect());
        let seed = rng::derive(cfg.seed, &[tag::EX_TEST, b as u64]);
        let ex = test_examples_for(sketch, args, gamma.size, &examples, &scaled, cfg.trials, seed)?;
        test_sets.push(TestBinding { args: args.clone(), examples: ex });
    }
    let est = RankEstimator::new(sketch, &test_sets, cfg.rank_trials, cfg.confidence_z, cfg.violation_z, rng::derive(cfg.seed, &[tag::RANK]))?;
    let mut ranked = rank_candidates(&cands, &est, &gamma, cfg.slack)?;
    drop(est);
    times.enumerate = t.elapsed().as_secs_f64();

    // verify: re-test the leaders
    let t = Instant::now();
    let vcfg = VerifyConfig { trials: cfg.trials, reject_below: cfg.reject_below, seed: rng::derive(cfg.seed, &[tag::VERIFY]) };
    let verified = final_verify(sketch, &mut ranked, &tests, cfg.verify_per_hole * n, &vcfg)?;
    if verified.is_empty() {
        diagnostics.push("every re-tested candidate was rejected".into());
    }
    times.verify = t.elapsed().as_secs_f64();
    times.total = start.elapsed().as_secs_f64();

    let report = SynthReport {
        sketch: sketch.name.clone(),
        holes: n,
        config: cfg.clone(),
        gamma,
        test_bindings: tests,
        test_example_counts: test_sets.iter().map(|t| t.examples.len()).collect(),
        examples,
        region: RegionSummary::of(&region),
        radius_used,
        candidates: cands.len(),
        ranked,
        verified,
        diagnostics,
    };
    Ok(SynthOutcome { report, times })
}

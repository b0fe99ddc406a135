//! Command-line front end: `synth`, `test` and `grid`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use dpsketch::lang::{parse_ratio, parse_sketch, ArgBinding, MechanismSketch};
use dpsketch::rng::{self, tag};
use dpsketch::search::{self, NoiseVector, PresampleBank, SelectConfig};
use dpsketch::synth::{self, Grammar, SynthConfig};
use dpsketch::tester;

pub const EXIT_OK: i32 = 0;
/// A violation was found, or synthesis produced no verified candidate.
pub const EXIT_FINDING: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "dpsketch", version, about = "Complete noise scales in sketches of private mechanisms")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Synthesize and rank noise-scale expressions for a sketch.
    Synth(SynthArgs),
    /// Test a sketch completed with concrete scales.
    Test(TestArgs),
    /// Emit the optimization objective over a lattice of two hole scales.
    Grid(GridArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Sketch file (.dpm).
    #[arg(long)]
    sketch: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Tester trials per side.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integer argument override, `NAME=VALUE`; repeatable.
    #[arg(long = "arg", value_parser = parse_int_arg)]
    ints: Vec<(String, i64)>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Privacy level of the default binding.
    #[arg(long, value_parser = parse_positive_ratio)]
    epsilon: Option<Ratio<i64>>,
    #[arg(long)]
    presamples: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    population: Option<usize>,
    /// Generations per hole.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    /// Simulated runs per probability when ranking.
    #[arg(long)]
    rank_trials: Option<usize>,
    /// Five times the default trial and presample budgets.
    #[arg(long)]
    paper_scale: bool,
    /// Allow powers of the threshold argument T in expressions.
    #[arg(long)]
    threshold_exprs: bool,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[command(flatten)]
    common: Common,
    /// Scales per hole, e.g. `4` or `2,_` (`_` for no noise).
    #[arg(long)]
    noise: String,
    #[arg(long, value_parser = parse_positive_ratio)]
    epsilon: Ratio<i64>,
    /// Length of the answer vector.
    #[arg(long, default_value_t = 5)]
    size: usize,
    /// Five times the default trial budget.
    #[arg(long)]
    paper_scale: bool,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    /// The two holes to vary, 1-based, e.g. `1,2`.
    #[arg(long, value_parser = parse_hole_pair)]
    holes: (usize, usize),
    /// Lattice `lo:hi:step`, shared by both holes.
    #[arg(long, value_parser = parse_lattice)]
    grid: Lattice,
    /// Scales for the remaining holes, in hole order (`_` for no noise).
    #[arg(long)]
    fix: Option<String>,
    #[arg(long, value_parser = parse_positive_ratio)]
    epsilon: Option<Ratio<i64>>,
    #[arg(long)]
    presamples: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Standard errors taken off each estimated log loss; 0 gives the plain ratio.
    #[arg(long)]
    confidence_z: Option<f64>,
    #[arg(long)]
    paper_scale: bool,
}

/// Effective settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn parse_int_arg(s: &str) -> Result<(String, i64), String> {
    let (k, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let v = v.trim().parse::<i64>().map_err(|e| e.to_string())?;
    Ok((k.trim().to_string(), v))
}

fn parse_positive_ratio(s: &str) -> Result<Ratio<i64>, String> {
    match parse_ratio(s) {
        Some(r) if r > Ratio::from_integer(0) => Ok(r),
        _ => Err(format!("'{s}' is not a positive number")),
    }
}

fn parse_hole_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected two hole numbers like 1,2")?;
    let a: usize = a.trim().parse().map_err(|_| "bad hole number")?;
    let b: usize = b.trim().parse().map_err(|_| "bad hole number")?;
    if a == 0 || b == 0 || a == b {
        return Err("holes are numbered from 1 and must differ".into());
    }
    Ok((a - 1, b - 1))
}

#[derive(Debug, Clone)]
struct Lattice(Vec<f64>);

fn parse_lattice(s: &str) -> Result<Lattice, String> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number in '{s}'")))
        .collect::<Result<_, _>>()?;
    let (lo, hi, step) = match parts[..] {
        [lo, hi, step] => (lo, hi, step),
        [lo, hi] => (lo, hi, 1.0),
        [x] => (x, x, 1.0),
        _ => return Err("expected lo:hi:step".into()),
    };
    if !(lo > 0.0) || hi < lo || !(step > 0.0) {
        return Err("need 0 < lo <= hi and step > 0".into());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok(Lattice((0..count).map(|i| lo + step * i as f64).collect()))
}

/// Runs the tool on `args` (including the program name) and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Test(a) => cmd_test(a),
        Cmd::Grid(a) => cmd_grid(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}

fn load_sketch(path: &Path) -> Result<MechanismSketch> {
    let src = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_sketch(&src).map_err(|e| anyhow!("{}:{e}", path.display()))
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        // A pool may already exist when running inside a test harness.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn base_config(common: &Common, paper_scale: bool) -> SynthConfig {
    let mut cfg = SynthConfig { seed: common.seed, ..SynthConfig::default() };
    if paper_scale {
        cfg = cfg.paper_scale();
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    cfg.ints = common.ints.iter().cloned().collect::<BTreeMap<_, _>>();
    cfg
}

fn check_ints(sketch: &MechanismSketch, ints: &BTreeMap<String, i64>) -> Result<()> {
    for k in ints.keys() {
        if sketch.arg(k).is_none() {
            bail!("sketch {} has no argument '{k}'", sketch.name);
        }
    }
    Ok(())
}

/// Effective configuration for `synth` after defaulting.
fn synth_config(a: &SynthArgs) -> RunConfig {
    let mut cfg = base_config(&a.common, a.paper_scale);
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
    if let Some(m) = a.presamples {
        cfg.presamples = m;
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(p) = a.population {
        cfg.population = p;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(r) = a.radius {
        cfg.radius = r;
    }
    if let Some(r) = a.rank_trials {
        cfg.rank_trials = r;
    }
    if a.threshold_exprs {
        cfg.grammar = Grammar::with_threshold();
    }
    RunConfig { synth: cfg, out: a.common.out.clone(), threads: a.common.threads }
}

fn default_out(sketch: &Path, suffix: &str) -> PathBuf {
    let stem = sketch.file_stem().map_or_else(|| "sketch".into(), |s| s.to_string_lossy().into_owned());
    PathBuf::from(format!("{stem}.{suffix}"))
}

fn timing_path(out: &Path) -> PathBuf {
    let s = out.to_string_lossy();
    let base = s.strip_suffix(".json").unwrap_or(&s);
    PathBuf::from(format!("{base}.timing.json"))
}

fn cmd_synth(a: SynthArgs) -> Result<i32> {
    let run = synth_config(&a);
    run.synth.check().map_err(|e| anyhow!("{e}"))?;
    set_threads(run.threads)?;
    let sketch = load_sketch(&a.common.sketch)?;
    check_ints(&sketch, &run.synth.ints)?;
    let outcome = synth::synth(&sketch, &run.synth).map_err(|e| anyhow!("synthesis failed in phase {e}"))?;
    let out = run.out.clone().unwrap_or_else(|| default_out(&a.common.sketch, "report.json"));
    let text = serde_json::to_string_pretty(&outcome.report)? + "\n";
    fs::write(&out, text).with_context(|| format!("cannot write {}", out.display()))?;
    let timing = serde_json::to_string_pretty(&outcome.times)? + "\n";
    fs::write(timing_path(&out), timing)?;

    let r = &outcome.report;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}: {} examples, {} candidates, {} verified", r.sketch, r.examples.len(), r.candidates, r.verified.len())?;
    writeln!(stdout, "{:>4}  {:<32} {:>5} {:>8} {:>8} {:>10}  verdict", "rank", "expression", "viol", "loss", "worst", "magnitude")?;
    for (i, c) in r.ranked.iter().take(r.holes * r.config.verify_per_hole).enumerate() {
        let verdict = match &c.verdict {
            Some(v) if v.rejected => "rejected",
            Some(_) => "ok",
            None => "-",
        };
        writeln!(
            stdout,
            "{:>4}  {:<32} {:>5} {:>8.4} {:>8.4} {:>10.3}  {verdict}",
            i + 1,
            c.exprs.to_string(),
            c.violations,
            c.loss,
            c.worst,
            c.magnitude
        )?;
    }
    let t = &outcome.times;
    eprintln!(
        "time: init {:.1}s, opti {:.1}s, enum {:.1}s, verify {:.1}s, total {:.1}s",
        t.init, t.opti, t.enumerate, t.verify, t.total
    );
    eprintln!("report written to {}", out.display());
    Ok(if r.verified.is_empty() { EXIT_FINDING } else { EXIT_OK })
}

fn cmd_test(a: TestArgs) -> Result<i32> {
    let cfg = base_config(&a.common, a.paper_scale);
    set_threads(a.common.threads)?;
    let sketch = load_sketch(&a.common.sketch)?;
    check_ints(&sketch, &cfg.ints)?;
    let noise = NoiseVector::parse(&a.noise).ok_or_else(|| anyhow!("cannot parse noise assignment '{}'", a.noise))?;
    if noise.len() != sketch.n_holes() {
        bail!("noise assignment has {} entries but {} has {} holes", noise.len(), sketch.name, sketch.n_holes());
    }
    if a.size == 0 {
        bail!("--size must be positive");
    }
    let args = ArgBinding::for_sketch(&sketch, a.size, a.epsilon, &cfg.ints)?;
    let eps = args.eps();
    let out = tester::test_mechanism(&sketch, &args, &noise, eps, &tester::default_test_epsilons(eps), cfg.trials, cfg.seed)?;
    let mut lines = String::new();
    for c in &out.per_epsilon {
        lines += &serde_json::to_string(c)?;
        lines.push('\n');
    }
    print!("{lines}");
    if let Some(path) = &a.common.out {
        fs::write(path, &lines).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let violated = out.per_epsilon.iter().any(|c| c.p_value < 0.05);
    Ok(if violated { EXIT_FINDING } else { EXIT_OK })
}

fn cmd_grid(a: GridArgs) -> Result<i32> {
    let mut cfg = base_config(&a.common, a.paper_scale);
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
    if let Some(m) = a.presamples {
        cfg.presamples = m;
    }
    if let Some(l) = a.lambda {
        cfg.lambda = l;
    }
    if let Some(z) = a.confidence_z {
        cfg.confidence_z = z;
    }
    cfg.check().map_err(|e| anyhow!("{e}"))?;
    set_threads(a.common.threads)?;
    let sketch = load_sketch(&a.common.sketch)?;
    check_ints(&sketch, &cfg.ints)?;
    let n = sketch.n_holes();
    let (h1, h2) = a.holes;
    if h1 >= n || h2 >= n {
        bail!("{} has {n} holes; requested holes {} and {}", sketch.name, h1 + 1, h2 + 1);
    }
    let mut base = NoiseVector::bottom(n);
    if let Some(fix) = &a.fix {
        let rest = NoiseVector::parse(fix).ok_or_else(|| anyhow!("cannot parse --fix '{fix}'"))?;
        let others: Vec<usize> = (0..n).filter(|h| *h != h1 && *h != h2).collect();
        if rest.len() != others.len() {
            bail!("--fix needs {} entries, got {}", others.len(), rest.len());
        }
        for (h, v) in others.into_iter().zip(rest.0) {
            base.0[h] = v;
        }
    }
    let (gamma, _) = synth::fix_params(&sketch, &cfg).map_err(|e| anyhow!("{e}"))?;
    let select = SelectConfig { trials: cfg.trials, zone: cfg.zone, seed: rng::derive(cfg.seed, &[tag::TESTER_SELECT]) };
    let examples = search::select_examples_total(&sketch, &gamma, &search::directions(n), &cfg.scale_grid, &select)?;
    if examples.is_empty() {
        bail!("the tester produced no examples");
    }
    let bank = PresampleBank::new(&sketch, &gamma, &examples, cfg.presamples, rng::derive(cfg.seed, &[tag::BANK]))?
        .with_confidence(cfg.confidence_z);
    let points = search::objective_grid(&bank, &base, (h1, h2), &a.grid.0, &a.grid.0, gamma.eps(), cfg.lambda)?;
    let mut csv = String::from("scale1,scale2,objective,log_gap\n");
    for p in &points {
        csv += &format!("{},{},{},{}\n", p.scale1, p.scale2, p.objective, p.log_gap);
    }
    match &a.common.out {
        Some(path) => fs::write(path, &csv).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(EXIT_OK)
}

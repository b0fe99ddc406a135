//! One PASS/FAIL line per acceptance criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines reach the
//! terminal under `cargo test`. A failing criterion is reported, not
//! raised; set `DPSKETCH_STRICT=1` to turn any FAIL into a non-zero exit.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use num_rational::Ratio;

use dpsketch::dist::{DiscreteExponential, DiscreteLaplace, IntDistribution};
use dpsketch::lang::{parse_sketch, Adjacency, ArgBinding, Output};
use dpsketch::rng::{self, tag};
use dpsketch::search::{self, get_noise_region, DeConfig, Example, NoiseRegion, NoiseVector, PresampleBank, RegionMember, SelectConfig};
use dpsketch::synth::{self, enumerate_and_prune, ExprVector, Grammar, SynthConfig};
use dpsketch::tester::{self, gen_input_pairs, hypothesis_test, Event};
use dpsketch::corpus;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
    took: Duration,
}

fn run(id: &'static str, limit: Duration, f: impl FnOnce() -> (bool, String)) -> Line {
    let t = Instant::now();
    let (ok, detail) = f();
    let took = t.elapsed();
    let within = took <= limit;
    let detail = if within { detail } else { format!("{detail}; over the {}s limit", limit.as_secs()) };
    let line = Line { id, pass: ok && within, detail, took };
    println!("{} {}: {} ({:.1}s)", if line.pass { "PASS" } else { "FAIL" }, line.id, line.detail, line.took.as_secs_f64());
    line
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn distributions() -> (bool, String) {
    let mut worst_norm = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut chi_ok = true;
    let mut notes = Vec::new();
    for (i, b) in [0.5f64, 1.0, 2.0, 4.0].into_iter().enumerate() {
        let a = (-1.0 / b).exp();
        let closed = (1.0 + a) / (1.0 - a);
        worst_norm = worst_norm.max((DiscreteLaplace::normalizer(b).unwrap() - closed).abs());
        let d = DiscreteLaplace::new(0, b).unwrap();
        let k = 30i64;
        let body: f64 = (-k..=k).map(|y| d.pmf(y)).sum();
        worst_mass = worst_mass.max((body + 2.0 * a.powi(k as i32 + 1) / (1.0 + a) - 1.0).abs());
        let e = DiscreteExponential::new(0, b).unwrap();
        let body: f64 = (0..=k).map(|y| e.pmf(y)).sum();
        worst_mass = worst_mass.max((body + a.powi(k as i32 + 1) - 1.0).abs());

        let n = 100_000u64;
        let mut r = rng::stream(2024, &[i as u64]);
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        for _ in 0..n {
            *counts.entry(d.sample(&mut r)).or_default() += 1;
        }
        let span = (6.0 * b).ceil() as i64;
        let mut stat = 0.0;
        let mut bins = 0usize;
        let mut inside = 0.0;
        for y in -span..=span {
            let p = d.pmf(y);
            inside += p;
            let exp = p * n as f64;
            stat += (counts.get(&y).copied().unwrap_or(0) as f64 - exp).powi(2) / exp;
            bins += 1;
        }
        let tail_obs: u64 = counts.iter().filter(|(y, _)| y.abs() > span).map(|(_, c)| c).sum();
        let exp = (1.0 - inside) * n as f64;
        stat += (tail_obs as f64 - exp).powi(2) / exp;
        let crit = chi2_critical(bins as f64, 1e-3);
        chi_ok &= stat < crit;
        notes.push(format!("b={b}: chi2 {stat:.1}<{crit:.1}"));
    }
    let ok = worst_norm < 1e-12 && worst_mass < 1e-9 && chi_ok;
    (ok, format!("normalizer err {worst_norm:.1e}, mass err {worst_mass:.1e}, {}", notes.join(", ")))
}

fn chi2_critical(k: f64, alpha: f64) -> f64 {
    ChiSquared::new(k).unwrap().inverse_cdf(1.0 - alpha)
}

const MICRO: &str = "mechanism Micro\nprivate q\narg eps: epsilon\nhole ?1: Lap\nx <- q[1] + Lap(?1)\nreturn x\n";

fn example(d1: i64, d2: i64, event: Event) -> Example {
    Example {
        pattern: "oracle".into(),
        d1: vec![d1],
        d2: vec![d2],
        event,
        direction: None,
        concretization: NoiseVector(vec![Some(1.0)]),
        p_value: 0.5,
    }
}

fn estimator() -> (bool, String) {
    let s = parse_sketch(MICRO).unwrap();
    let a = ArgBinding::for_sketch(&s, 1, Ratio::new(1, 2), &BTreeMap::new()).unwrap();
    let zero = Event::Equals(Output::Int(0));
    let bank = PresampleBank::new(&s, &a, &[example(0, 0, zero.clone())], 100_000, 11).unwrap().with_confidence(0.0);
    let mut worst = 0.0f64;
    for b in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let est = bank.estimate(&[0], &zero, &NoiseVector(vec![Some(b)])).unwrap();
        let exact = (1.0 - (-1.0f64 / b).exp()) / (1.0 + (-1.0f64 / b).exp());
        worst = worst.max((est / exact - 1.0).abs());
    }
    let bank = PresampleBank::new(&s, &a, &[example(0, 1, Event::AtMost(0))], 100_000, 12).unwrap().with_confidence(0.0);
    let loss = bank.losses(&NoiseVector(vec![Some(2.0)])).unwrap()[0];
    let exact = 0.5f64.exp();
    let rel = (loss / exact - 1.0).abs();
    (worst < 0.05 && rel < 0.05, format!("pmf rel err {:.2}%, loss {loss:.4} vs {exact:.4} ({:.2}%)", 100.0 * worst, 100.0 * rel))
}

fn load(name: &str) -> dpsketch::lang::MechanismSketch {
    corpus::load(name).unwrap().unwrap()
}

fn calibration() -> (bool, String) {
    let s = load("noisymax1");
    let a = ArgBinding::for_sketch(&s, 5, Ratio::new(1, 2), &BTreeMap::new()).unwrap();
    let out = tester::test_mechanism(&s, &a, &NoiseVector(vec![Some(4.0)]), 0.5, &[0.2, 0.9], 100_000, 7).unwrap();
    let p_at = |e: f64| out.per_epsilon.iter().find(|c| (c.test_epsilon - e).abs() < 1e-12).map_or(1.0, |c| c.p_value);
    let (lo, hi) = (p_at(0.2), p_at(0.9));
    (lo < 0.05 && hi > 0.9, format!("min-p {lo:.2e} at eps 0.2, {hi:.3} at eps 0.9"))
}

fn non_private() -> (bool, String) {
    let s = load("sum");
    let a = ArgBinding::for_sketch(&s, 5, Ratio::new(1, 2), &BTreeMap::new()).unwrap();
    let out = tester::test_mechanism(&s, &a, &NoiseVector::bottom(1), 0.5, &tester::default_test_epsilons(0.5), 20_000, 3).unwrap();
    let p = out.best.as_ref().map_or(1.0, |c| c.p_value);
    (p < 1e-4, format!("best p {p:.2e} at eps 0.5"))
}

fn label(v: &ExprVector) -> String {
    v.to_string()
}

fn synth_ranks() -> Vec<Line> {
    let cfg = SynthConfig::default();
    let limit = secs(90 * 60);
    let mut lines = Vec::new();
    let cases: [(&str, &'static str); 9] = [
        ("sum", "5 Sum"),
        ("histogram", "5 Histogram"),
        ("noisymax1", "5 NoisyMax1"),
        ("svt", "5 SVT"),
        ("noisymax2", "5 NoisyMax2"),
        ("expnoisymax", "5 ExpNoisyMax"),
        ("abovet1", "5 AboveT1"),
        ("abovet2", "5 AboveT2"),
        ("smartsum", "5 SmartSum"),
    ];
    for (name, id) in cases {
        lines.push(run(id, limit, || {
            let s = load(name);
            let out = match synth::synth(&s, &cfg) {
                Ok(o) => o,
                Err(e) => return (false, format!("synthesis failed: {e}")),
            };
            let v: Vec<String> = out.report.verified.iter().map(|c| label(&c.exprs)).collect();
            let top = |k: usize| v.iter().take(k).cloned().collect::<Vec<_>>();
            let first = v.first().cloned().unwrap_or_else(|| "none".into());
            let ok = match name {
                "sum" | "histogram" => first == "(1/eps)",
                "noisymax1" => first == "(2/eps)",
                "svt" => first == "(2/eps, 4/eps)",
                "noisymax2" => first == "(2/eps, _)",
                "expnoisymax" => out.report.verified.first().is_some_and(|c| c.exprs.0[1].is_none()),
                "abovet1" => {
                    let want: BTreeSet<String> = ["(2/eps, 4/eps)", "(3/eps, 3/eps)"].map(String::from).into();
                    top(2).into_iter().collect::<BTreeSet<_>>() == want
                }
                "abovet2" => top(2).iter().any(|c| c == "(2/eps, 4/eps, _)"),
                "smartsum" => top(5).iter().any(|c| c == "(2/eps, 2/eps)"),
                _ => unreachable!(),
            };
            (ok, format!("final order {}", top(5).join(" ")))
        }));
    }
    lines
}

fn region_sanity() -> (bool, String) {
    let s = load("abovet1");
    let cfg = SynthConfig::default();
    let (gamma, _) = synth::fix_params(&s, &cfg).unwrap();
    let select = SelectConfig { trials: cfg.trials, zone: cfg.zone, seed: rng::derive(cfg.seed, &[tag::TESTER_SELECT]) };
    let examples = search::select_examples_total(&s, &gamma, &search::directions(2), &cfg.scale_grid, &select).unwrap();
    let bank = PresampleBank::new(&s, &gamma, &examples, cfg.presamples, rng::derive(cfg.seed, &[tag::BANK]))
        .unwrap()
        .with_confidence(0.0);
    let axis: Vec<f64> = (1..=12).map(f64::from).collect();
    let grid = search::objective_grid(&bank, &NoiseVector::bottom(2), (0, 1), &axis, &axis, gamma.eps(), cfg.lambda).unwrap();
    let lo = grid.iter().map(|p| p.objective).fold(f64::INFINITY, f64::min);
    let hi = grid.iter().map(|p| p.objective).fold(f64::NEG_INFINITY, f64::max);
    // darkest of ten equal-width colour levels
    let band = lo + (hi - lo) / 10.0;
    let at = |x: f64, y: f64| grid.iter().find(|p| p.scale1 == x && p.scale2 == y).unwrap().objective;
    let in_band = grid.iter().filter(|p| p.objective <= band).count();
    let (a, b) = (at(4.0, 8.0), at(6.0, 6.0));

    let de = DeConfig::new(2, cfg.lambda, rng::derive(cfg.seed, &[tag::DE]));
    let region = get_noise_region(&bank, gamma.eps(), &de).unwrap();
    let best = region.best().objective;
    let corner = |x: f64| search::objective(&bank, &NoiseVector(vec![Some(x), Some(x)]), gamma.eps(), cfg.lambda).unwrap();
    let (c1, c16) = (corner(1.0), corner(16.0));
    let ok = a <= band && b <= band && best <= c1 && best <= c16;
    (
        ok,
        format!(
            "band <= {band:.3} ({in_band}/144 points), obj(4,8) {a:.3}, obj(6,6) {b:.3}; DE best {best:.3} vs (1,1) {c1:.3}, (16,16) {c16:.3}"
        ),
    )
}

fn determinism() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let sketch = format!("{}/../../benchmarks/sum.dpm", env!("CARGO_MANIFEST_DIR"));
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}.json"));
        let code = dpsketch_cli::main_with(["dpsketch", "synth", "--sketch", &sketch, "--seed", "5", "--out", out.to_str().unwrap()]);
        if code != dpsketch_cli::EXIT_OK {
            return (false, format!("run {k} exited with {code}"));
        }
        reports.push(std::fs::read(&out).unwrap());
    }
    (reports[0] == reports[1], format!("two Sum reports, {} bytes, identical: {}", reports[0].len(), reports[0] == reports[1]))
}

fn properties() -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;

    // pruning against brute force over the whole 25^n grammar
    let grammar = Grammar::default();
    let choices = grammar.choices();
    let args = ArgBinding { size: 5, epsilon: Ratio::new(1, 2), ints: BTreeMap::new() };
    let mut r = rng::stream(77, &[]);
    let mut checked = 0usize;
    for n in 1..=3usize {
        for _ in 0..4 {
            let pts: Vec<Vec<Option<f64>>> = (0..3)
                .map(|_| (0..n).map(|_| if r.random::<f64>() < 0.2 { None } else { Some(r.random_range(0.25..16.0)) }).collect())
                .collect();
            let wrap = |p: &Vec<Option<f64>>| RegionMember { raw: vec![0.0; n], vector: NoiseVector(p.clone()), objective: 0.0 };
            let region = NoiseRegion {
                members: pts[..2].iter().map(wrap).collect(),
                archive: pts[2..].iter().map(wrap).collect(),
                history: vec![],
                lambda: 1.0,
                epsilon: 0.5,
                seed: 0,
            };
            let got = enumerate_and_prune(&grammar, &region, &args, 3.0);
            let mut want = Vec::new();
            for code in 0..choices.len().pow(n as u32) {
                let mut rest = code;
                let mut pick = vec![None; n];
                for h in (0..n).rev() {
                    pick[h] = choices[rest % choices.len()];
                    rest /= choices.len();
                }
                let vals: Vec<Option<f64>> = pick
                    .iter()
                    .map(|c| c.map(|e| { let v = e.eval(&args).unwrap(); *v.numer() as f64 / *v.denom() as f64 }))
                    .collect();
                let near = pts.iter().any(|p| {
                    vals.iter()
                        .zip(p)
                        .map(|(v, q)| match (v, q) {
                            (None, None) => 0.0,
                            (None, Some(_)) => f64::INFINITY,
                            (Some(v), q) => (v - q.unwrap_or(0.0)).abs(),
                        })
                        .sum::<f64>()
                        <= 3.0
                });
                if near {
                    want.push(ExprVector(pick));
                }
                checked += 1;
            }
            ok &= got == want;
        }
    }
    notes.push(format!("pruning exact over {checked} vectors"));

    // p-value monotone in the test epsilon
    let mut mono = true;
    for (c1, c2) in [(900u64, 600u64), (5000, 4000), (300, 310), (12_000, 2000), (0, 40)] {
        let ps: Vec<f64> = (1..=30).map(|k| hypothesis_test(c1, c2, 20_000, k as f64 * 0.05).unwrap()).collect();
        mono &= ps.windows(2).all(|w| w[0] <= w[1] + 1e-12);
    }
    ok &= mono;
    notes.push(format!("p monotone {mono}"));

    // best objective never worsens across generations
    let s = parse_sketch(MICRO).unwrap();
    let a = ArgBinding::for_sketch(&s, 1, Ratio::new(1, 2), &BTreeMap::new()).unwrap();
    let bank = PresampleBank::new(&s, &a, &[example(0, 1, Event::AtMost(0))], 5000, 4).unwrap();
    let mut de_ok = true;
    for seed in 0..4 {
        let mut cfg = DeConfig::new(1, 1.0, seed);
        cfg.steps = 60;
        let reg = get_noise_region(&bank, 0.5, &cfg).unwrap();
        de_ok &= reg.history.windows(2).all(|w| w[1] <= w[0]);
    }
    ok &= de_ok;
    notes.push(format!("DE monotone {de_ok}"));

    // adjacency on every generated pair
    let mut adj = true;
    let mut pairs = 0;
    for len in 1..=40 {
        for rel in [Adjacency::Linf, Adjacency::Single] {
            for p in gen_input_pairs(rel, len) {
                adj &= rel.holds(&p.d1, &p.d2) && p.d1 != p.d2 && p.d1.len() == len;
                pairs += 1;
            }
        }
    }
    ok &= adj;
    notes.push(format!("{pairs} pairs adjacent {adj}"));
    (ok, notes.join(", "))
}

fn main() {
    let mut lines = vec![
        run("1 distributions", secs(10), distributions),
        run("2 estimator", secs(60), estimator),
        run("3 calibration", secs(600), calibration),
        run("4 non-private", secs(300), non_private),
    ];
    lines.extend(synth_ranks());
    lines.push(run("6 region", secs(600), region_sanity));
    lines.push(run("7 determinism", secs(600), determinism));
    lines.push(run("8 properties", secs(600), properties));
    let passed = lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} passed", lines.len());
    if passed < lines.len() && std::env::var("DPSKETCH_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}

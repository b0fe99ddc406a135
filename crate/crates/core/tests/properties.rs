use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use proptest::prelude::*;

use dpsketch::lang::{parse_sketch, Adjacency, ArgBinding, Output};
use dpsketch::search::{get_noise_region, DeConfig, Example, NoiseRegion, NoiseVector, PresampleBank, RegionMember};
use dpsketch::synth::{enumerate_and_prune, ExprVector, Grammar};
use dpsketch::tester::{gen_input_pairs, hypothesis_test, Event};

fn binding(size: usize, eps: Ratio<i64>) -> ArgBinding {
    ArgBinding { size, epsilon: eps, ints: BTreeMap::new() }
}

// Independent distance: expression value against a region coordinate.
fn far(value: Option<f64>, point: Option<f64>) -> f64 {
    match (value, point) {
        (None, None) => 0.0,
        (None, Some(_)) => f64::INFINITY,
        (Some(v), p) => (v - p.unwrap_or(0.0)).abs(),
    }
}

fn brute_force(grammar: &Grammar, points: &[Vec<Option<f64>>], args: &ArgBinding, radius: f64) -> Vec<ExprVector> {
    let choices = grammar.choices();
    let n = points[0].len();
    let total = choices.len().pow(n as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut rest = code;
        let mut picks = vec![None; n];
        for h in (0..n).rev() {
            picks[h] = choices[rest % choices.len()];
            rest /= choices.len();
        }
        let values: Vec<Option<f64>> = picks.iter().map(|c| c.map(|e| e.eval(args).unwrap().to_f64().unwrap())).collect();
        let near = points.iter().any(|p| values.iter().zip(p).map(|(v, r)| far(*v, *r)).sum::<f64>() <= radius);
        if near {
            out.push(ExprVector(picks));
        }
    }
    out
}

fn region_of(members: &[Vec<Option<f64>>], archive: &[Vec<Option<f64>>]) -> NoiseRegion {
    let wrap = |ps: &[Vec<Option<f64>>]| -> Vec<RegionMember> {
        ps.iter()
            .map(|p| RegionMember { raw: p.iter().map(|x| x.unwrap_or(0.0)).collect(), vector: NoiseVector(p.clone()), objective: 0.0 })
            .collect()
    };
    NoiseRegion { members: wrap(members), archive: wrap(archive), history: vec![], lambda: 1.0, epsilon: 0.5, seed: 0 }
}

fn coordinate() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![1 => Just(None), 4 => (0.25f64..16.0).prop_map(Some)]
}

fn points(n: usize, k: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    prop::collection::vec(prop::collection::vec(coordinate(), n), k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pruning_is_exact_over_the_full_grammar(
        (members, archive) in (1usize..=3).prop_flat_map(|n| (points(n, 1..4), points(n, 0..3))),
        size in 1usize..=6,
        eps_num in 1i64..=4,
        eps_den in 1i64..=4,
        radius in 0.5f64..6.0,
    ) {
        let args = binding(size, Ratio::new(eps_num, eps_den));
        let grammar = Grammar::default();
        prop_assert_eq!(grammar.choices().len(), 25);
        let region = region_of(&members, &archive);
        let got = enumerate_and_prune(&grammar, &region, &args, radius);
        let all: Vec<Vec<Option<f64>>> = members.iter().chain(&archive).cloned().collect();
        let want = brute_force(&grammar, &all, &args, radius);
        prop_assert_eq!(got, want);
    }
}

proptest! {
    #[test]
    fn generated_pairs_are_adjacent(length in 1usize..40) {
        for adj in [Adjacency::Linf, Adjacency::Single] {
            let pairs = gen_input_pairs(adj, length);
            prop_assert!(!pairs.is_empty());
            for p in &pairs {
                prop_assert_eq!(p.d1.len(), length);
                prop_assert_eq!(p.d2.len(), length);
                prop_assert!(p.d1 != p.d2);
                prop_assert!(p.d1.iter().zip(&p.d2).all(|(a, b)| (a - b).abs() <= 1));
                if adj == Adjacency::Single {
                    prop_assert_eq!(p.d1.iter().zip(&p.d2).filter(|(a, b)| a != b).count(), 1);
                }
                prop_assert!(adj.holds(&p.d1, &p.d2) && adj.holds(&p.d2, &p.d1));
            }
            for (i, p) in pairs.iter().enumerate() {
                prop_assert!(pairs[i + 1..].iter().all(|q| q.d1 != p.d1 || q.d2 != p.d2));
            }
        }
    }

    #[test]
    fn p_value_falls_as_test_epsilon_falls(
        n in 1000u64..200_000,
        f1 in 0.0f64..1.0,
        f2 in 0.0f64..1.0,
        e1 in 0.01f64..3.0,
        e2 in 0.01f64..3.0,
    ) {
        let c1 = (f1 * n as f64) as u64;
        let c2 = (f2 * n as f64) as u64;
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let p_lo = hypothesis_test(c1, c2, n, lo).unwrap();
        let p_hi = hypothesis_test(c1, c2, n, hi).unwrap();
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        prop_assert!(p_lo <= p_hi + 1e-12, "p({lo}) = {p_lo} > p({hi}) = {p_hi}");
    }
}

const TWO_HOLES: &str = "mechanism Two\nprivate q\narg eps: epsilon\nhole ?1: Lap\nhole ?2: Lap\n\
x <- q[1] + Lap(?1)\ny <- q[2] + Lap(?2)\nz <- x + y\nreturn z\n";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn evolution_best_never_worsens(seed in any::<u64>(), lambda in 0.0f64..2.0, steps in 5usize..40) {
        let s = parse_sketch(TWO_HOLES).unwrap();
        let args = ArgBinding::for_sketch(&s, 2, Ratio::new(1, 2), &BTreeMap::new()).unwrap();
        let ex = Example {
            pattern: "p".into(),
            d1: vec![0, 0],
            d2: vec![1, 1],
            event: Event::AtMost(0),
            direction: None,
            concretization: NoiseVector(vec![Some(4.0), Some(4.0)]),
            p_value: 0.5,
        };
        let ex2 = Example { event: Event::Equals(Output::Int(1)), ..ex.clone() };
        let bank = PresampleBank::new(&s, &args, &[ex, ex2], 4000, seed).unwrap().with_confidence(1.0);
        let mut cfg = DeConfig::new(2, lambda, seed);
        cfg.population = 12;
        cfg.steps = steps;
        let region = get_noise_region(&bank, 0.5, &cfg).unwrap();
        prop_assert_eq!(region.history.len(), steps + 1);
        prop_assert!(region.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(region.best().objective, *region.history.last().unwrap());
        prop_assert!(region.members.windows(2).all(|w| w[0].objective <= w[1].objective));
        let tol = cfg.archive_tol;
        prop_assert!(region.archive.iter().all(|m| m.objective <= region.best().objective + tol + 1e-12));
    }
}

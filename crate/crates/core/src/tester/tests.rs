use std::collections::BTreeMap;

use num_rational::Ratio;

use super::*;
use crate::corpus;

fn setup(name: &str) -> (MechanismSketch, ArgBinding) {
    let s = corpus::load(name).unwrap().unwrap();
    let a = ArgBinding::for_sketch(&s, 5, Ratio::new(1, 2), &BTreeMap::new()).unwrap();
    (s, a)
}

#[test]
fn deterministic_sum_is_caught() {
    let (s, a) = setup("sum");
    let out = test_mechanism(&s, &a, &NoiseVector::bottom(1), 0.5, &default_test_epsilons(0.5), 5000, 3).unwrap();
    let best = out.best.unwrap();
    assert!(best.p_value < 1e-4, "{best:?}");
    assert!(s.adjacency.holds(&best.d1, &best.d2));
}

#[test]
fn noisymax_calibration_shape() {
    let (s, a) = setup("noisymax1");
    let v = NoiseVector(vec![Some(4.0)]);
    let low = test_mechanism(&s, &a, &v, 0.2, &[0.2], 20000, 11).unwrap();
    assert!(low.best.unwrap().p_value < 0.05);
    let high = test_mechanism(&s, &a, &v, 0.9, &[0.9], 20000, 11).unwrap();
    assert!(high.best.unwrap().p_value > 0.9);
}

#[test]
fn same_seed_same_outcome() {
    let (s, a) = setup("noisymax2");
    let v = NoiseVector(vec![Some(3.0), None]);
    let eps = default_test_epsilons(0.5);
    let x = test_mechanism(&s, &a, &v, 0.5, &eps, 2000, 9).unwrap();
    let y = test_mechanism(&s, &a, &v, 0.5, &eps, 2000, 9).unwrap();
    assert_eq!(x, y);
    assert_eq!(x.per_epsilon.len(), 3);
    for cx in &x.per_epsilon {
        assert!((0.0..=1.0).contains(&cx.p_value));
        assert!(cx.rho1 + cx.rho2 > 0.0);
        assert!(s.adjacency.holds(&cx.d1, &cx.d2));
    }
}

#[test]
fn target_joins_the_test_set() {
    let (s, a) = setup("noisymax1");
    let out = test_mechanism(&s, &a, &NoiseVector(vec![Some(4.0)]), 0.5, &[0.3], 2000, 1).unwrap();
    assert_eq!(out.per_epsilon.len(), 2);
    assert_eq!(out.best.unwrap().test_epsilon, 0.5);
}

#[test]
fn bad_calls() {
    let (s, a) = setup("noisymax1");
    let eps = default_test_epsilons(0.5);
    assert!(matches!(
        test_mechanism(&s, &a, &NoiseVector::bottom(2), 0.5, &eps, 2000, 1),
        Err(TesterError::Arity { expected: 1, got: 2 })
    ));
    assert!(matches!(
        test_mechanism(&s, &a, &NoiseVector::bottom(1), 0.5, &eps, 10, 1),
        Err(TesterError::TooFewTrials(10))
    ));
}

#[test]
fn counterexamples_serialize() {
    let (s, a) = setup("svt");
    let out = test_mechanism(&s, &a, &NoiseVector(vec![Some(2.0), Some(4.0)]), 0.5, &[0.5], 1000, 2).unwrap();
    let cx = out.best.unwrap();
    let line = serde_json::to_string(&cx).unwrap();
    for key in ["\"d1\"", "\"d2\"", "\"event\"", "\"p\"", "\"test_epsilon\"", "\"rho1\"", "\"rho2\"", "\"trials\"", "\"seed\""] {
        assert!(line.contains(key), "{line}");
    }
    assert_eq!(serde_json::from_str::<Counterexample>(&line).unwrap(), cx);
}

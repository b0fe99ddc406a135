//! Adjacent input pairs built from a fixed catalogue of shapes.

use serde::{Deserialize, Serialize};

use crate::lang::Adjacency;

/// A named adjacent pair of answer vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputPair {
    pub pattern: String,
    pub d1: Vec<i64>,
    pub d2: Vec<i64>,
}

type Shape = fn(usize) -> (Vec<i64>, Vec<i64>);

fn fill(n: usize, v: i64) -> Vec<i64> {
    vec![v; n]
}

fn ones_against(n: usize, f: impl Fn(usize) -> i64) -> (Vec<i64>, Vec<i64>) {
    ((0..n).map(f).collect(), fill(n, 1))
}

fn twos_against(n: usize, f: impl Fn(usize) -> i64) -> (Vec<i64>, Vec<i64>) {
    ((0..n).map(f).collect(), fill(n, 2))
}

// the last four straddle a threshold of 2 so comparisons can flip without noise
const LINF: [(&str, Shape); 16] = [
    ("all-below", |n| (fill(n, 0), fill(n, 1))),
    ("all-above", |n| (fill(n, 1), fill(n, 0))),
    ("one-above", |n| ones_against(n, |i| if i == 0 { 2 } else { 1 })),
    ("one-below", |n| ones_against(n, |i| if i == 0 { 0 } else { 1 })),
    ("one-above-rest-below", |n| ones_against(n, |i| if i == 0 { 2 } else { 0 })),
    ("one-below-rest-above", |n| ones_against(n, |i| if i == 0 { 0 } else { 2 })),
    ("half-raised", |n| ones_against(n, |i| if i < n / 2 { 2 } else { 0 })),
    ("half-lowered", |n| ones_against(n, |i| if i < n / 2 { 0 } else { 2 })),
    ("all-raised", |n| ones_against(n, |_| 2)),
    ("alternating", |n| ones_against(n, |i| if i % 2 == 0 { 2 } else { 0 })),
    ("split-high", |n| ones_against(n, |i| if i < n.div_ceil(2) { 1 } else { 0 })),
    ("split-low", |n| ones_against(n, |i| if i < n.div_ceil(2) { 1 } else { 2 })),
    ("all-crossing", |n| twos_against(n, |_| 3)),
    ("none-crossing", |n| (fill(n, 2), fill(n, 3))),
    ("one-crossing", |n| twos_against(n, |i| if i == 0 { 3 } else { 2 })),
    ("last-crossing", |n| twos_against(n, |i| if i + 1 == n { 3 } else { 1 })),
];

fn bump(n: usize, at: usize, base: i64, delta: i64) -> (Vec<i64>, Vec<i64>) {
    let mut d1 = fill(n, base);
    d1[at] += delta;
    (d1, fill(n, base))
}

const SINGLE: [(&str, Shape); 6] = [
    ("first-up", |n| bump(n, 0, 0, 1)),
    ("first-down", |n| bump(n, 0, 1, -1)),
    ("last-up", |n| bump(n, n - 1, 0, 1)),
    ("last-down", |n| bump(n, n - 1, 1, -1)),
    ("middle-up", |n| bump(n, n / 2, 0, 1)),
    ("first-raised", |n| bump(n, 0, 1, 1)),
];

fn catalogue(adjacency: Adjacency) -> &'static [(&'static str, Shape)] {
    match adjacency {
        Adjacency::Linf => &LINF,
        Adjacency::Single => &SINGLE,
    }
}

/// All pattern pairs at `length`, deduplicated in catalogue order.
pub fn gen_input_pairs(adjacency: Adjacency, length: usize) -> Vec<InputPair> {
    assert!(length >= 1, "answer vectors need at least one entry");
    let mut out: Vec<InputPair> = Vec::new();
    for (name, shape) in catalogue(adjacency) {
        let (d1, d2) = shape(length);
        if d1 == d2 || out.iter().any(|p| p.d1 == d1 && p.d2 == d2) {
            continue;
        }
        debug_assert!(adjacency.holds(&d1, &d2));
        out.push(InputPair { pattern: name.to_string(), d1, d2 });
    }
    out
}

/// The pair a named pattern produces at `length`, if the pattern exists.
pub fn pattern_pair(adjacency: Adjacency, pattern: &str, length: usize) -> Option<InputPair> {
    catalogue(adjacency).iter().find(|(name, _)| *name == pattern).map(|(name, shape)| {
        let (d1, d2) = shape(length);
        InputPair { pattern: name.to_string(), d1, d2 }
    })
}

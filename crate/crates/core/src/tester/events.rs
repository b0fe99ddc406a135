//! Candidate output events built from observed outputs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::ast::Type;
use crate::lang::Output;

use super::TesterError;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Event {
    Equals(Output),
    /// Sorted set of outputs.
    OneOf(Vec<Output>),
    AtLeast(i64),
    AtMost(i64),
    /// Boolean list outputs starting with the given flags.
    Prefix(Vec<bool>),
    CoordAtLeast { index: usize, value: i64 },
    CoordAtMost { index: usize, value: i64 },
    All(Vec<Event>),
}

impl Event {
    /// Membership; outputs of another shape are never members.
    pub fn contains(&self, out: &Output) -> bool {
        match (self, out) {
            (Event::Equals(v), o) => v == o,
            (Event::OneOf(vs), o) => vs.binary_search(o).is_ok(),
            (Event::AtLeast(v), Output::Int(x)) => x >= v,
            (Event::AtMost(v), Output::Int(x)) => x <= v,
            (Event::Prefix(p), Output::BoolList(l)) => l.len() >= p.len() && l[..p.len()] == p[..],
            (Event::CoordAtLeast { index, value }, Output::IntList(l)) => l.get(*index).is_some_and(|x| x >= value),
            (Event::CoordAtMost { index, value }, Output::IntList(l)) => l.get(*index).is_some_and(|x| x <= value),
            (Event::All(es), o) => es.iter().all(|e| e.contains(o)),
            _ => false,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Equals(v) => write!(f, "{{{v}}}"),
            Event::OneOf(vs) => {
                let parts: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                write!(f, "{{{}}}", parts.join(", "))
            }
            Event::AtLeast(v) => write!(f, "out >= {v}"),
            Event::AtMost(v) => write!(f, "out <= {v}"),
            Event::Prefix(p) => {
                let s: String = p.iter().map(|&b| if b { 'T' } else { 'F' }).collect();
                write!(f, "prefix {s}")
            }
            Event::CoordAtLeast { index, value } => write!(f, "out[{}] >= {value}", index + 1),
            Event::CoordAtMost { index, value } => write!(f, "out[{}] <= {value}", index + 1),
            Event::All(es) => {
                let parts: Vec<String> = es.iter().map(|e| e.to_string()).collect();
                write!(f, "{}", parts.join(" and "))
            }
        }
    }
}

const MAX_SINGLETONS: usize = 32;
const MAX_CUTS: usize = 24;
const COORD_CUTS: usize = 8;
const MAX_PREFIX: usize = 3;

/// Events covering the observed support of `samples` (a multiset given as
/// output counts).
pub fn gen_events(output_type: Type, samples: &BTreeMap<Output, u64>) -> Result<Vec<Event>, TesterError> {
    let mut events = Vec::new();
    if samples.values().all(|&c| c == 0) {
        return Err(TesterError::EmptySample);
    }
    let mut by_freq: Vec<(&Output, u64)> = samples.iter().map(|(o, &c)| (o, c)).collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let top: Vec<&Output> = by_freq.iter().take(MAX_SINGLETONS).map(|(o, _)| *o).collect();
    events.extend(top.iter().map(|o| Event::Equals((*o).clone())));

    match output_type {
        Type::Int => {
            let values: Vec<(i64, u64)> = samples
                .iter()
                .filter_map(|(o, &c)| match o {
                    Output::Int(v) => Some((*v, c)),
                    _ => None,
                })
                .collect();
            let cuts = cut_points(&values, MAX_CUTS);
            for &v in &cuts {
                events.push(Event::AtLeast(v));
                events.push(Event::AtMost(v));
            }
            if values.len() > MAX_CUTS {
                for o in &top {
                    if let Output::Int(v) = o {
                        events.push(Event::OneOf(vec![Output::Int(*v), Output::Int(v + 1)]));
                    }
                }
            }
        }
        Type::IntList => {
            let width = samples
                .keys()
                .map(|o| match o {
                    Output::IntList(l) => l.len(),
                    _ => 0,
                })
                .max()
                .unwrap_or(0);
            let mut coord_cuts = Vec::with_capacity(width);
            for index in 0..width {
                let mut column: BTreeMap<i64, u64> = BTreeMap::new();
                for (o, &c) in samples {
                    if let Output::IntList(l) = o {
                        if let Some(&x) = l.get(index) {
                            *column.entry(x).or_default() += c;
                        }
                    }
                }
                let column: Vec<(i64, u64)> = column.into_iter().collect();
                let cuts = cut_points(&column, COORD_CUTS);
                for &value in &cuts {
                    events.push(Event::CoordAtLeast { index, value });
                    events.push(Event::CoordAtMost { index, value });
                }
                coord_cuts.push(cut_points(&column, 4));
            }
            for index in 0..width.saturating_sub(1) {
                for &a in &coord_cuts[index] {
                    for &b in &coord_cuts[index + 1] {
                        let lo_a = Event::CoordAtMost { index, value: a };
                        let hi_a = Event::CoordAtLeast { index, value: a };
                        let lo_b = Event::CoordAtMost { index: index + 1, value: b };
                        let hi_b = Event::CoordAtLeast { index: index + 1, value: b };
                        for (x, y) in [(&lo_a, &lo_b), (&lo_a, &hi_b), (&hi_a, &lo_b), (&hi_a, &hi_b)] {
                            events.push(Event::All(vec![x.clone(), y.clone()]));
                        }
                    }
                }
            }
        }
        Type::BoolList => {
            for len in 1..=MAX_PREFIX {
                for bits in 0..(1u32 << len) {
                    events.push(Event::Prefix((0..len).map(|i| bits >> (len - 1 - i) & 1 == 1).collect()));
                }
            }
        }
        Type::Bool | Type::AnyList => {}
    }
    let mut seen = std::collections::HashSet::new();
    events.retain(|e| seen.insert(e.clone()));
    Ok(events)
}

/// Up to `max` weighted quantile points of sorted `(value, count)` data,
/// or every distinct value when there are few.
fn cut_points(values: &[(i64, u64)], max: usize) -> Vec<i64> {
    if values.len() <= max {
        return values.iter().map(|v| v.0).collect();
    }
    let total: u64 = values.iter().map(|v| v.1).sum();
    let mut cuts = Vec::new();
    let mut acc = 0u64;
    let mut k = 1;
    for &(v, c) in values {
        acc += c;
        while k < max && acc * max as u64 >= total * k as u64 {
            if cuts.last() != Some(&v) {
                cuts.push(v);
            }
            k += 1;
        }
    }
    cuts
}

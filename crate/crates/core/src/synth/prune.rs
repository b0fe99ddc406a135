//! Keeping only the expression vectors that evaluate close to the region.

use num_traits::ToPrimitive;

use crate::lang::ArgBinding;
use crate::search::NoiseRegion;

use super::grammar::{ExprVector, Grammar};

/// L1 distance from the values of `exprs` at `args` to a region point.
/// A no-noise hole only matches a no-noise coordinate; a no-noise
/// coordinate counts as 0 for distance purposes.
pub fn l1_distance(values: &[Option<f64>], point: &[Option<f64>]) -> f64 {
    values
        .iter()
        .zip(point)
        .map(|(v, r)| match (v, r) {
            (None, None) => 0.0,
            (None, Some(_)) => f64::INFINITY,
            (Some(v), r) => (v - r.unwrap_or(0.0)).abs(),
        })
        .sum()
}

/// Every vector in `grammar^n` within `radius` of some region point,
/// in enumeration order (first hole varying slowest).
pub fn enumerate_and_prune(grammar: &Grammar, region: &NoiseRegion, args: &ArgBinding, radius: f64) -> Vec<ExprVector> {
    let n = region.members.first().map_or(0, |m| m.vector.len());
    let choices = grammar.choices();
    let values: Vec<Option<Option<f64>>> = choices
        .iter()
        .map(|c| match c {
            None => Some(None),
            Some(e) => e.eval(args).and_then(|r| r.to_f64()).map(Some),
        })
        .collect();
    let points: Vec<&[Option<f64>]> = region.points().map(|m| m.vector.0.as_slice()).collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    if n == 0 || choices.is_empty() {
        return out;
    }
    loop {
        let vals: Option<Vec<Option<f64>>> = idx.iter().map(|&i| values[i]).collect();
        if let Some(vals) = vals {
            if points.iter().any(|p| l1_distance(&vals, p) <= radius) {
                out.push(ExprVector(idx.iter().map(|&i| choices[i]).collect()));
            }
        }
        // odometer, last hole fastest
        let mut h = n;
        loop {
            if h == 0 {
                return out;
            }
            h -= 1;
            idx[h] += 1;
            if idx[h] < choices.len() {
                break;
            }
            idx[h] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{NoiseVector, RegionMember};
    use num_rational::Ratio;
    use std::collections::BTreeMap;

    fn region(points: &[Vec<Option<f64>>]) -> NoiseRegion {
        NoiseRegion {
            members: points
                .iter()
                .map(|p| RegionMember {
                    raw: p.iter().map(|x| x.unwrap_or(0.0)).collect(),
                    vector: NoiseVector(p.clone()),
                    objective: 0.0,
                })
                .collect(),
            archive: vec![],
            history: vec![],
            lambda: 1.0,
            epsilon: 0.5,
            seed: 0,
        }
    }

    fn gamma() -> ArgBinding {
        ArgBinding { size: 5, epsilon: Ratio::new(1, 2), ints: BTreeMap::new() }
    }

    #[test]
    fn distance_rules() {
        assert_eq!(l1_distance(&[Some(4.0), Some(4.0)], &[Some(2.0), Some(4.0)]), 2.0);
        assert_eq!(l1_distance(&[None], &[None]), 0.0);
        assert_eq!(l1_distance(&[None], &[Some(0.3)]), f64::INFINITY);
        assert_eq!(l1_distance(&[Some(2.0)], &[None]), 2.0);
    }

    #[test]
    fn keeps_textbook_abovet() {
        let r = region(&[vec![Some(4.2), Some(7.5), None]]);
        let cands = enumerate_and_prune(&Grammar::default(), &r, &gamma(), 3.0);
        assert!(cands.iter().any(|c| c.to_string() == "(2/eps, 4/eps, _)"));
        // a silent coordinate counts as 0, so only small scales reach it
        let g = gamma();
        assert!(cands.iter().all(|c| c.0[2].is_none_or(|e| e.eval(&g).unwrap() <= Ratio::from_integer(3))));
    }

    #[test]
    fn empty_when_far() {
        let r = region(&[vec![Some(500.0)]]);
        assert!(enumerate_and_prune(&Grammar::default(), &r, &gamma(), 3.0).is_empty());
    }
}

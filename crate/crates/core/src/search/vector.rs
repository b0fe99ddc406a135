use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::{DistError, Family, Noise};

/// Entries below this scale are treated as "no noise".
pub const SNAP: f64 = 0.25;

/// A concrete scale, or `None` for a hole without noise, per hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseVector(pub Vec<Option<f64>>);

impl NoiseVector {
    pub fn bottom(n: usize) -> Self {
        Self(vec![None; n])
    }

    /// From raw optimizer coordinates, snapping small values to no noise.
    pub fn from_raw(raw: &[f64]) -> Self {
        Self(raw.iter().map(|&x| (x >= SNAP).then_some(x)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of holes carrying noise.
    pub fn l0(&self) -> usize {
        self.0.iter().filter(|e| e.is_some()).count()
    }

    /// Bit `h` set when hole `h` carries no noise.
    pub fn bottom_mask(&self) -> u32 {
        self.0.iter().enumerate().fold(0, |m, (h, e)| if e.is_none() { m | 1 << h } else { m })
    }

    pub fn kernels(&self, families: &[Family]) -> Result<Vec<Option<Noise>>, DistError> {
        self.0
            .iter()
            .zip(families)
            .map(|(e, &f)| e.map(|s| Noise::new(f, s)).transpose())
            .collect()
    }

    /// Parses `"4"`, `"2,_"` or `"2.5, bot"`; `_`, `bot` and `⊥` mean no noise.
    pub fn parse(text: &str) -> Option<Self> {
        text.split(',')
            .map(|t| match t.trim() {
                "_" | "bot" | "⊥" | "none" => Some(None),
                t => t.parse::<f64>().ok().filter(|s| *s > 0.0 && s.is_finite()).map(Some),
            })
            .collect::<Option<Vec<_>>>()
            .map(Self)
    }
}

impl fmt::Display for NoiseVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|e| match e {
                Some(s) => format!("{s}"),
                None => "_".into(),
            })
            .collect();
        write!(f, "({})", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_snap() {
        let v = NoiseVector::parse("4, _,0.5").unwrap();
        assert_eq!(v.0, vec![Some(4.0), None, Some(0.5)]);
        assert_eq!(v.l0(), 2);
        assert_eq!(v.bottom_mask(), 0b010);
        assert!(NoiseVector::parse("4,-1").is_none());
        assert_eq!(NoiseVector::from_raw(&[0.2, 0.25, 7.0]).0, vec![None, Some(0.25), Some(7.0)]);
        assert_eq!(v.to_string(), "(4, _, 0.5)");
    }
}

//! The mechanism language: sketches with noise holes, their parser, and a
//! replayable interpreter.

pub mod ast;
mod interp;
mod lexer;
mod parse;

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{Adjacency, ArgKind, HoleId, MechanismSketch};
pub use interp::{NoiseSource, NoiseTrace, Output, Program, RunError};
pub use parse::parse_sketch;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SketchError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: type error: {msg}")]
    Type { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: undeclared symbol '{name}'")]
    Undeclared { line: usize, col: usize, name: String },
    #[error("{line}:{col}: hole ?{hole} is used more than once")]
    HoleReused { line: usize, col: usize, hole: usize },
}

impl SketchError {
    pub(crate) fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        SketchError::Syntax { line, col, msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("argument '{0}' is not bound")]
    Missing(String),
    #[error("argument '{0}' is not declared by the sketch")]
    Unknown(String),
    #[error("argument '{name}' must be positive, got {value}")]
    NotPositive { name: String, value: String },
}

/// Concrete values for every declared argument.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArgBinding {
    /// Length of the private answer vector.
    pub size: usize,
    #[serde(with = "ratio_text")]
    pub epsilon: Ratio<i64>,
    /// Integer arguments by name.
    pub ints: BTreeMap<String, i64>,
}

impl ArgBinding {
    /// Binding with integer arguments taken from `overrides`, falling back to
    /// the defaults in the sketch header.
    pub fn for_sketch(
        sketch: &MechanismSketch,
        size: usize,
        epsilon: Ratio<i64>,
        overrides: &BTreeMap<String, i64>,
    ) -> Result<Self, BindError> {
        let mut ints = BTreeMap::new();
        for decl in &sketch.args {
            if matches!(decl.kind, ArgKind::Int | ArgKind::PosInt) {
                let v = match overrides.get(&decl.name) {
                    Some(v) => *v,
                    None => decl
                        .default
                        .and_then(|d| d.to_integer().to_i64())
                        .ok_or_else(|| BindError::Missing(decl.name.clone()))?,
                };
                ints.insert(decl.name.clone(), v);
            }
        }
        for name in overrides.keys() {
            if !ints.contains_key(name) {
                return Err(BindError::Unknown(name.clone()));
            }
        }
        let b = Self { size, epsilon, ints };
        b.check(sketch)?;
        Ok(b)
    }

    pub fn check(&self, sketch: &MechanismSketch) -> Result<(), BindError> {
        if self.size == 0 {
            return Err(BindError::NotPositive { name: format!("|{}|", sketch.private), value: "0".into() });
        }
        if self.epsilon <= Ratio::from_integer(0) {
            return Err(BindError::NotPositive { name: "epsilon".into(), value: self.epsilon.to_string() });
        }
        for decl in &sketch.args {
            if matches!(decl.kind, ArgKind::Int | ArgKind::PosInt) {
                let v = *self.ints.get(&decl.name).ok_or_else(|| BindError::Missing(decl.name.clone()))?;
                if decl.kind == ArgKind::PosInt && v <= 0 {
                    return Err(BindError::NotPositive { name: decl.name.clone(), value: v.to_string() });
                }
            }
        }
        for name in self.ints.keys() {
            let declared = sketch
                .args
                .iter()
                .any(|d| &d.name == name && matches!(d.kind, ArgKind::Int | ArgKind::PosInt));
            if !declared {
                return Err(BindError::Unknown(name.clone()));
            }
        }
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        self.epsilon.to_f64().unwrap_or(f64::NAN)
    }

    /// Same integer arguments at another size and privacy level.
    pub fn with(&self, size: usize, epsilon: Ratio<i64>) -> Self {
        Self { size, epsilon, ints: self.ints.clone() }
    }
}

/// Exact rational from `"3"`, `"0.25"`, `"1/5"` or `"-1.5"`.
pub fn parse_ratio(text: &str) -> Option<Ratio<i64>> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n = parse_ratio(n)?;
        let d = parse_ratio(d)?;
        return (d != Ratio::from_integer(0)).then(|| n / d);
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac}");
    let num: i64 = digits.parse().ok()?;
    let den = 10i64.checked_pow(frac.len() as u32)?;
    let r = Ratio::new(num, den);
    Some(if neg { -r } else { r })
}

/// Rationals serialise as `"p/q"` text.
pub mod ratio_text {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Ratio<i64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<i64>, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_ratio(&text).ok_or_else(|| serde::de::Error::custom(format!("bad rational '{text}'")))
    }
}

/// Lists of rationals serialise as lists of `"p/q"` text.
pub mod ratio_list {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rs: &[Ratio<i64>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(rs.iter().map(|r| r.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Ratio<i64>>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|t| super::parse_ratio(t).ok_or_else(|| serde::de::Error::custom(format!("bad rational '{t}'"))))
            .collect()
    }
}

/// Upper bound on the draws each hole can make in one run.
///
/// A hole inside `k` nested loops is charged `size^k` draws, times `size`
/// again when it draws a vector.
pub fn count_hole_draws(sketch: &MechanismSketch, args: &ArgBinding) -> Vec<usize> {
    sketch
        .holes
        .iter()
        .map(|h| {
            let loops = args.size.pow(h.loop_depth as u32);
            if h.vector {
                loops * args.size
            } else {
                loops
            }
        })
        .collect()
}

/// Convenience wrapper: bind, then replay `trace`.
pub fn run(
    sketch: &MechanismSketch,
    args: &ArgBinding,
    answers: &[i64],
    trace: &mut NoiseTrace,
) -> Result<Output, RunError> {
    let program = Program::new(sketch, args).map_err(|e| RunError::Unbound(e.to_string()))?;
    program.run(answers, trace)
}

//! Symbolic scale expressions `c * |q|^a * T^t / eps^b`.

use std::fmt;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::lang::ArgBinding;

/// Name of the integer argument the optional `T` exponent refers to.
pub const THRESHOLD_ARG: &str = "T";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScaleExpr {
    pub coef: i64,
    pub size_exp: u32,
    pub inv_eps_exp: u32,
    pub t_exp: u32,
}

impl ScaleExpr {
    /// Exact value under `args`; `None` when a `T` power is requested but
    /// `T` is missing or not positive.
    pub fn eval(&self, args: &ArgBinding) -> Option<Ratio<i64>> {
        let size = Ratio::from_integer(args.size as i64);
        let mut v = Ratio::from_integer(self.coef) * size.pow(self.size_exp as i32)
            / args.epsilon.pow(self.inv_eps_exp as i32);
        if self.t_exp > 0 {
            let t = *args.ints.get(THRESHOLD_ARG)?;
            if t <= 0 {
                return None;
            }
            v *= Ratio::from_integer(t).pow(self.t_exp as i32);
        }
        Some(v)
    }
}

impl fmt::Display for ScaleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coef)?;
        match self.size_exp {
            0 => {}
            1 => write!(f, "*|q|")?,
            a => write!(f, "*|q|^{a}")?,
        }
        match self.t_exp {
            0 => {}
            1 => write!(f, "*T")?,
            t => write!(f, "*T^{t}")?,
        }
        match self.inv_eps_exp {
            0 => Ok(()),
            1 => write!(f, "/eps"),
            b => write!(f, "/eps^{b}"),
        }
    }
}

/// One scale expression per hole; `None` is "no noise".
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExprVector(pub Vec<Option<ScaleExpr>>);

impl ExprVector {
    /// Concrete scales under `args`, as used by the estimators.
    pub fn concretize(&self, args: &ArgBinding) -> Option<Vec<Option<f64>>> {
        self.0
            .iter()
            .map(|e| match e {
                None => Some(None),
                Some(e) => e.eval(args).and_then(|r| r.to_f64()).map(Some),
            })
            .collect()
    }

    /// Total injected scale `sum of eta_i(args)`, no-noise holes counting 0.
    pub fn magnitude(&self, args: &ArgBinding) -> Option<Ratio<i64>> {
        self.0.iter().try_fold(Ratio::from_integer(0), |acc, e| match e {
            None => Some(acc),
            Some(e) => e.eval(args).map(|v| acc + v),
        })
    }

    pub fn labels(&self) -> Vec<String> {
        self.0.iter().map(|e| e.map_or_else(|| "_".to_string(), |e| e.to_string())).collect()
    }
}

impl fmt::Display for ExprVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.labels().join(", "))
    }
}

/// Exponent and coefficient ranges, inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grammar {
    pub coef: (i64, i64),
    pub size_exp: (u32, u32),
    pub inv_eps_exp: (u32, u32),
    pub t_exp: (u32, u32),
}

impl Default for Grammar {
    fn default() -> Self {
        Self { coef: (1, 4), size_exp: (0, 2), inv_eps_exp: (1, 2), t_exp: (0, 0) }
    }
}

impl Grammar {
    /// Default ranges with `T^0..T^1` enabled.
    pub fn with_threshold() -> Self {
        Self { t_exp: (0, 1), ..Self::default() }
    }

    /// Every per-hole choice in enumeration order, "no noise" last.
    pub fn choices(&self) -> Vec<Option<ScaleExpr>> {
        let mut out = Vec::new();
        for inv_eps_exp in self.inv_eps_exp.0..=self.inv_eps_exp.1 {
            for size_exp in self.size_exp.0..=self.size_exp.1 {
                for t_exp in self.t_exp.0..=self.t_exp.1 {
                    for coef in self.coef.0..=self.coef.1 {
                        out.push(Some(ScaleExpr { coef, size_exp, inv_eps_exp, t_exp }));
                    }
                }
            }
        }
        out.push(None);
        out
    }
}

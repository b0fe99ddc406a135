use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dist::Family;

pub type Slot = usize;
pub type HoleId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    /// Equality on booleans.
    Iff,
    Xor,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "mod",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Iff => "=",
            BinOp::Xor => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    EmptyList,
    Var(Slot),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Len(Box<Expr>),
    /// 1-based list indexing.
    Index(Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Skip,
    Assign(Slot, Expr),
    /// `target <- base + Noise(hole)`; a missing base means zero. Vector
    /// draws add one independent sample to every element of the base list.
    Noisy {
        target: Slot,
        base: Option<Expr>,
        hole: HoleId,
        vector: bool,
    },
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
    Append(Slot, Expr),
    Prepend(Slot, Expr),
    Break,
}

/// Static type of a variable or expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Type {
    Int,
    Bool,
    /// List whose element type is not yet known (only `[]` so far).
    AnyList,
    IntList,
    BoolList,
}

impl Type {
    pub fn is_list(self) -> bool {
        matches!(self, Type::AnyList | Type::IntList | Type::BoolList)
    }

    /// Least upper bound for assignment compatibility.
    pub fn unify(self, other: Type) -> Option<Type> {
        use Type::*;
        match (self, other) {
            (a, b) if a == b => Some(a),
            (AnyList, l @ (IntList | BoolList)) | (l @ (IntList | BoolList), AnyList) => Some(l),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Type::Int => "int",
            Type::Bool => "bool",
            Type::AnyList => "list",
            Type::IntList => "int list",
            Type::BoolList => "bool list",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgKind {
    /// Length of the private answer vector.
    Size,
    Epsilon,
    Int,
    PosInt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArgDecl {
    pub name: String,
    pub kind: ArgKind,
    /// Variable slot for integer arguments readable from the body.
    pub slot: Option<Slot>,
    pub default: Option<Ratio<i64>>,
}

/// Adjacency relation on answer vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjacency {
    /// Every coordinate may change by at most one.
    Linf,
    /// A single coordinate changes by at most one.
    Single,
}

impl Adjacency {
    pub fn name(self) -> &'static str {
        match self {
            Adjacency::Linf => "linf",
            Adjacency::Single => "single",
        }
    }

    pub fn holds(self, d1: &[i64], d2: &[i64]) -> bool {
        if d1.len() != d2.len() {
            return false;
        }
        let mut changed = 0;
        for (a, b) in d1.iter().zip(d2) {
            let gap = (a - b).abs();
            if gap > 1 {
                return false;
            }
            changed += (gap > 0) as usize;
        }
        match self {
            Adjacency::Linf => true,
            Adjacency::Single => changed <= 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hole {
    pub id: HoleId,
    pub family: Family,
    /// Whether the use site draws a whole vector.
    pub vector: bool,
    /// Number of enclosing loops at the use site.
    pub loop_depth: usize,
    pub line: usize,
}

/// A parsed, type-checked mechanism with abstract noise holes.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismSketch {
    pub name: String,
    pub private: String,
    pub private_slot: Slot,
    pub args: Vec<ArgDecl>,
    pub adjacency: Adjacency,
    pub holes: Vec<Hole>,
    pub body: Vec<Stmt>,
    pub output: Slot,
    pub output_type: Type,
    pub vars: Vec<String>,
    pub var_types: Vec<Type>,
}

impl MechanismSketch {
    pub fn n_holes(&self) -> usize {
        self.holes.len()
    }

    pub fn families(&self) -> Vec<Family> {
        self.holes.iter().map(|h| h.family).collect()
    }

    pub fn arg(&self, name: &str) -> Option<&ArgDecl> {
        self.args.iter().find(|a| a.name == name)
    }

    pub fn arg_names(&self) -> Vec<&str> {
        self.args.iter().map(|a| a.name.as_str()).collect()
    }
}

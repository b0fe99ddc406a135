//! Big-step interpreter. Randomness is supplied by a [`NoiseSource`], so a run
//! is a pure function of its inputs and the values the source hands out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use super::{ArgBinding, BindError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("noise trace for hole ?{} exhausted", hole + 1)]
    TraceExhausted { hole: HoleId },
    #[error("division by zero")]
    DivisionByZero,
    #[error("loop exceeded its fuel of {limit} iterations")]
    FuelExhausted { limit: u64 },
    #[error("read of uninitialised variable '{var}'")]
    Uninitialized { var: String },
    #[error("index {index} out of range for list of length {len}")]
    IndexOutOfRange { index: i64, len: usize },
    #[error("integer overflow")]
    Overflow,
    #[error("expected {expected} answers, got {got}")]
    AnswerLength { expected: usize, got: usize },
    #[error("{0}")]
    Unbound(String),
}

/// Program output, typed by the sketch's return variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Output {
    Int(i64),
    Bool(bool),
    IntList(Vec<i64>),
    BoolList(Vec<bool>),
}

impl std::fmt::Display for Output {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Output::Int(v) => write!(f, "{v}"),
            Output::Bool(b) => write!(f, "{b}"),
            Output::IntList(v) => write!(f, "{v:?}"),
            Output::BoolList(v) => {
                let s: String = v.iter().map(|&b| if b { 'T' } else { 'F' }).collect();
                write!(f, "[{s}]")
            }
        }
    }
}

/// Supplier of noise offsets, one call per drawn value.
pub trait NoiseSource {
    /// Next zero-centred offset for `hole`, or `None` when the hole carries no
    /// noise (the assignment is then deterministic and nothing is consumed).
    fn draw(&mut self, hole: HoleId) -> Result<Option<i64>, RunError>;
}

/// Pre-drawn offsets per hole. `None` marks a hole without noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    draws: Vec<Option<Vec<i64>>>,
    pos: Vec<usize>,
}

impl NoiseTrace {
    pub fn new(draws: Vec<Option<Vec<i64>>>) -> Self {
        let pos = vec![0; draws.len()];
        Self { draws, pos }
    }

    /// All-zero trace with the given per-hole capacities.
    pub fn zeros(capacities: &[usize]) -> Self {
        Self::new(capacities.iter().map(|&c| Some(vec![0; c])).collect())
    }

    pub fn capacity(&self, hole: HoleId) -> usize {
        self.draws[hole].as_ref().map_or(0, Vec::len)
    }

    /// Values handed out for `hole` since the last rewind.
    pub fn consumed(&self, hole: HoleId) -> &[i64] {
        match &self.draws[hole] {
            Some(d) => &d[..self.pos[hole]],
            None => &[],
        }
    }

    pub fn rewind(&mut self) {
        self.pos.iter_mut().for_each(|p| *p = 0);
    }
}

impl NoiseSource for NoiseTrace {
    fn draw(&mut self, hole: HoleId) -> Result<Option<i64>, RunError> {
        match &self.draws[hole] {
            None => Ok(None),
            Some(d) => {
                let p = self.pos[hole];
                let v = *d.get(p).ok_or(RunError::TraceExhausted { hole })?;
                self.pos[hole] = p + 1;
                Ok(Some(v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Bool(bool),
    /// Boolean lists are stored as 0/1.
    List(Vec<i64>),
}

/// A sketch with its arguments bound, ready to run many times.
#[derive(Debug, Clone)]
pub struct Program<'s> {
    sketch: &'s MechanismSketch,
    init: Vec<Option<Value>>,
    size: usize,
    fuel: u64,
}

enum Flow {
    Next,
    Break,
}

impl<'s> Program<'s> {
    pub fn new(sketch: &'s MechanismSketch, args: &ArgBinding) -> Result<Self, BindError> {
        args.check(sketch)?;
        let mut init = vec![None; sketch.vars.len()];
        for decl in &sketch.args {
            if let Some(slot) = decl.slot {
                init[slot] = Some(Value::Int(args.ints[&decl.name]));
            }
        }
        Ok(Self {
            sketch,
            init,
            size: args.size,
            fuel: 10 * args.size as u64 + 100,
        })
    }

    pub fn sketch(&self) -> &'s MechanismSketch {
        self.sketch
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn run<S: NoiseSource + ?Sized>(&self, answers: &[i64], src: &mut S) -> Result<Output, RunError> {
        if answers.len() != self.size {
            return Err(RunError::AnswerLength { expected: self.size, got: answers.len() });
        }
        let mut mem = self.init.clone();
        mem[self.sketch.private_slot] = Some(Value::List(answers.to_vec()));
        let mut ctx = Ctx { p: self, mem, src };
        ctx.block(&self.sketch.body)?;
        let slot = self.sketch.output;
        let v = ctx.mem[slot].take().ok_or_else(|| ctx.uninit(slot))?;
        Ok(match (v, self.sketch.output_type) {
            (Value::Int(i), _) => Output::Int(i),
            (Value::Bool(b), _) => Output::Bool(b),
            (Value::List(l), Type::BoolList) => Output::BoolList(l.into_iter().map(|x| x != 0).collect()),
            (Value::List(l), _) => Output::IntList(l),
        })
    }
}

struct Ctx<'p, 's, S: ?Sized> {
    p: &'p Program<'s>,
    mem: Vec<Option<Value>>,
    src: &'p mut S,
}

impl<S: NoiseSource + ?Sized> Ctx<'_, '_, S> {
    fn uninit(&self, slot: Slot) -> RunError {
        RunError::Uninitialized { var: self.p.sketch.vars[slot].clone() }
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, RunError> {
        for s in stmts {
            if let Flow::Break = self.stmt(s)? {
                return Ok(Flow::Break);
            }
        }
        Ok(Flow::Next)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Flow, RunError> {
        match s {
            Stmt::Skip => {}
            Stmt::Break => return Ok(Flow::Break),
            Stmt::Assign(slot, e) => {
                let v = self.value(e, self.p.sketch.var_types[*slot])?;
                self.mem[*slot] = Some(v);
            }
            Stmt::Noisy { target, base, hole, vector } => {
                let v = if *vector {
                    let mut list = self.list(base.as_ref().expect("vector noise has a base"))?;
                    for x in list.iter_mut() {
                        if let Some(z) = self.src.draw(*hole)? {
                            *x = x.checked_add(z).ok_or(RunError::Overflow)?;
                        }
                    }
                    Value::List(list)
                } else {
                    let b = match base {
                        Some(e) => self.int(e)?,
                        None => 0,
                    };
                    let z = self.src.draw(*hole)?.unwrap_or(0);
                    Value::Int(b.checked_add(z).ok_or(RunError::Overflow)?)
                };
                self.mem[*target] = Some(v);
            }
            Stmt::If(c, t, e) => {
                return if self.boolean(c)? { self.block(t) } else { self.block(e) };
            }
            Stmt::While(c, body) => {
                let mut iters = 0u64;
                while self.boolean(c)? {
                    iters += 1;
                    if iters > self.p.fuel {
                        return Err(RunError::FuelExhausted { limit: self.p.fuel });
                    }
                    if let Flow::Break = self.block(body)? {
                        break;
                    }
                }
            }
            Stmt::Append(slot, e) | Stmt::Prepend(slot, e) => {
                let x = if self.p.sketch.var_types[*slot] == Type::BoolList {
                    self.boolean(e)? as i64
                } else {
                    self.int(e)?
                };
                match self.mem[*slot].as_mut() {
                    Some(Value::List(l)) => {
                        if matches!(s, Stmt::Append(..)) {
                            l.push(x)
                        } else {
                            l.insert(0, x)
                        }
                    }
                    _ => return Err(self.uninit(*slot)),
                }
            }
        }
        Ok(Flow::Next)
    }

    fn value(&mut self, e: &Expr, ty: Type) -> Result<Value, RunError> {
        Ok(match ty {
            Type::Int => Value::Int(self.int(e)?),
            Type::Bool => Value::Bool(self.boolean(e)?),
            _ => Value::List(self.list(e)?),
        })
    }

    fn list(&mut self, e: &Expr) -> Result<Vec<i64>, RunError> {
        match e {
            Expr::EmptyList => Ok(Vec::new()),
            Expr::Var(s) => match &self.mem[*s] {
                Some(Value::List(l)) => Ok(l.clone()),
                _ => Err(self.uninit(*s)),
            },
            _ => unreachable!("type checker admits no other list expressions"),
        }
    }

    fn with_list<T>(&mut self, e: &Expr, f: impl FnOnce(&[i64]) -> Result<T, RunError>) -> Result<T, RunError> {
        match e {
            Expr::Var(s) => match &self.mem[*s] {
                Some(Value::List(l)) => f(l),
                _ => Err(self.uninit(*s)),
            },
            _ => {
                let l = self.list(e)?;
                f(&l)
            }
        }
    }

    fn index(&mut self, base: &Expr, idx: &Expr) -> Result<i64, RunError> {
        let i = self.int(idx)?;
        self.with_list(base, |l| {
            if i >= 1 && (i as usize) <= l.len() {
                Ok(l[i as usize - 1])
            } else {
                Err(RunError::IndexOutOfRange { index: i, len: l.len() })
            }
        })
    }

    fn int(&mut self, e: &Expr) -> Result<i64, RunError> {
        match e {
            Expr::Int(v) => Ok(*v),
            Expr::Var(s) => match &self.mem[*s] {
                Some(Value::Int(v)) => Ok(*v),
                Some(Value::Bool(b)) => Ok(*b as i64),
                _ => Err(self.uninit(*s)),
            },
            Expr::Neg(x) => self.int(x)?.checked_neg().ok_or(RunError::Overflow),
            Expr::Len(x) => self.with_list(x, |l| Ok(l.len() as i64)),
            Expr::Index(b, i) => self.index(b, i),
            Expr::Bin(op, l, r) => {
                let a = self.int(l)?;
                let b = self.int(r)?;
                match op {
                    BinOp::Add => a.checked_add(b).ok_or(RunError::Overflow),
                    BinOp::Sub => a.checked_sub(b).ok_or(RunError::Overflow),
                    BinOp::Mul => a.checked_mul(b).ok_or(RunError::Overflow),
                    // Truncation toward zero, remainder takes the dividend's sign.
                    BinOp::Div if b == 0 => Err(RunError::DivisionByZero),
                    BinOp::Mod if b == 0 => Err(RunError::DivisionByZero),
                    BinOp::Div => a.checked_div(b).ok_or(RunError::Overflow),
                    BinOp::Mod => a.checked_rem(b).ok_or(RunError::Overflow),
                    _ => unreachable!("type checker: comparison used as int"),
                }
            }
            Expr::Bool(_) | Expr::Not(_) | Expr::EmptyList => unreachable!("type checker: non-int used as int"),
        }
    }

    fn boolean(&mut self, e: &Expr) -> Result<bool, RunError> {
        match e {
            Expr::Bool(b) => Ok(*b),
            Expr::Var(s) => match &self.mem[*s] {
                Some(Value::Bool(b)) => Ok(*b),
                _ => Err(self.uninit(*s)),
            },
            Expr::Not(x) => Ok(!self.boolean(x)?),
            Expr::Index(b, i) => Ok(self.index(b, i)? != 0),
            Expr::Bin(op, l, r) => match op {
                BinOp::And => Ok(self.boolean(l)? && self.boolean(r)?),
                BinOp::Or => Ok(self.boolean(l)? || self.boolean(r)?),
                BinOp::Iff => Ok(self.boolean(l)? == self.boolean(r)?),
                BinOp::Xor => Ok(self.boolean(l)? != self.boolean(r)?),
                _ => {
                    let a = self.int(l)?;
                    let b = self.int(r)?;
                    Ok(match op {
                        BinOp::Eq => a == b,
                        BinOp::Ne => a != b,
                        BinOp::Lt => a < b,
                        BinOp::Le => a <= b,
                        BinOp::Gt => a > b,
                        BinOp::Ge => a >= b,
                        _ => unreachable!("type checker: arithmetic used as bool"),
                    })
                }
            },
            _ => unreachable!("type checker: non-bool used as bool"),
        }
    }
}

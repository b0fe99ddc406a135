//! Line-oriented recursive-descent parser with the type checker folded in.
//!
//! Variables are declared by their first assignment in textual order and keep
//! one type for the whole program. Every expression is typed as it is built,
//! so a sketch that parses is well typed.

use std::collections::HashMap;

use num_rational::Ratio;

use super::ast::*;
use super::lexer::{lex_line, Tok, TokKind};
use super::{parse_ratio, SketchError};
use crate::dist::Family;

const KEYWORDS: &[&str] = &[
    "if", "then", "else", "end", "while", "do", "break", "skip", "return", "append", "prepend",
    "len", "mod", "and", "or", "not", "true", "false", "mechanism", "private", "arg",
    "adjacency", "hole", "Lap", "Exp", "LapVec", "ExpVec",
];

pub fn parse_sketch(source: &str) -> Result<MechanismSketch, SketchError> {
    let mut lines = Vec::new();
    for (i, text) in source.lines().enumerate() {
        let toks = lex_line(text, i + 1)?;
        if !toks.is_empty() {
            lines.push(toks);
        }
    }
    let mut p = Parser {
        lines,
        at: 0,
        scope: Scope::default(),
        header: Header::default(),
        loop_depth: 0,
        hole_uses: Vec::new(),
    };
    p.header()?;
    p.finish()
}

#[derive(Default)]
struct Scope {
    names: HashMap<String, Slot>,
    vars: Vec<String>,
    types: Vec<Type>,
}

impl Scope {
    fn declare(&mut self, name: &str, ty: Type) -> Slot {
        let slot = self.vars.len();
        self.names.insert(name.to_string(), slot);
        self.vars.push(name.to_string());
        self.types.push(ty);
        slot
    }
}

#[derive(Default)]
struct Header {
    name: Option<String>,
    private: Option<(String, Slot)>,
    args: Vec<ArgDecl>,
    adjacency: Option<Adjacency>,
    holes: Vec<(Family, usize)>,
    eps_name: Option<String>,
}

struct Parser {
    lines: Vec<Vec<Tok>>,
    at: usize,
    scope: Scope,
    header: Header,
    loop_depth: usize,
    hole_uses: Vec<Option<Hole>>,
}

/// Cursor over the tokens of a single line.
struct Cur<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
}

impl<'a> Cur<'a> {
    fn new(toks: &'a [Tok]) -> Self {
        Cur { toks, pos: 0, line: toks[0].line }
    }

    fn peek(&self) -> Option<&'a TokKind> {
        self.toks.get(self.pos).map(|t| &t.kind)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|t| t.col)
            .unwrap_or_else(|| self.toks.last().map(|t| t.col + 1).unwrap_or(1))
    }

    fn err(&self, msg: impl Into<String>) -> SketchError {
        SketchError::syntax(self.line, self.col(), msg)
    }

    fn type_err(&self, col: usize, msg: impl Into<String>) -> SketchError {
        SketchError::Type { line: self.line, col, msg: msg.into() }
    }

    fn bump(&mut self) -> Option<&'a TokKind> {
        let t = self.peek();
        self.pos += 1;
        t
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(TokKind::Sym(x)) if *x == s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(TokKind::Ident(x)) if x == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), SketchError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{s}'")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SketchError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{kw}'")))
        }
    }

    fn ident(&mut self) -> Result<String, SketchError> {
        match self.peek() {
            Some(TokKind::Ident(name)) if !KEYWORDS.contains(&name.as_str()) => {
                self.pos += 1;
                Ok(name.clone())
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn done(&self) -> Result<(), SketchError> {
        if self.pos < self.toks.len() {
            Err(self.err("unexpected trailing tokens"))
        } else {
            Ok(())
        }
    }

}

fn noise_call(name: &str) -> Option<(Family, bool)> {
    match name {
        "Lap" => Some((Family::Laplace, false)),
        "Exp" => Some((Family::Exponential, false)),
        "LapVec" => Some((Family::Laplace, true)),
        "ExpVec" => Some((Family::Exponential, true)),
        _ => None,
    }
}

enum Terminator {
    End,
    Else,
    Eof,
}

impl Parser {
    fn header(&mut self) -> Result<(), SketchError> {
        while self.at < self.lines.len() {
            let toks = self.lines[self.at].clone();
            let mut c = Cur::new(&toks);
            let Some(TokKind::Ident(word)) = c.peek() else { break };
            match word.as_str() {
                "mechanism" => {
                    c.bump();
                    let name = match c.bump() {
                        Some(TokKind::Ident(n)) => n.clone(),
                        _ => return Err(c.err("expected mechanism name")),
                    };
                    if self.header.name.replace(name).is_some() {
                        return Err(c.err("duplicate 'mechanism' line"));
                    }
                }
                "private" => {
                    c.bump();
                    let name = c.ident()?;
                    if self.header.private.is_some() {
                        return Err(c.err("only one private input is supported"));
                    }
                    let slot = self.scope.declare(&name, Type::IntList);
                    self.header.args.insert(
                        0,
                        ArgDecl { name: format!("|{name}|"), kind: ArgKind::Size, slot: None, default: None },
                    );
                    self.header.private = Some((name, slot));
                }
                "arg" => {
                    c.bump();
                    let name = c.ident()?;
                    c.expect_sym(":")?;
                    let kind = match c.bump() {
                        Some(TokKind::Ident(k)) if k == "int" => ArgKind::Int,
                        Some(TokKind::Ident(k)) if k == "posint" => ArgKind::PosInt,
                        Some(TokKind::Ident(k)) if k == "epsilon" => ArgKind::Epsilon,
                        _ => return Err(c.err("expected argument type int, posint or epsilon")),
                    };
                    let default = if c.eat_sym("=") { Some(self.literal(&mut c)?) } else { None };
                    c.done()?;
                    if self.scope.names.contains_key(&name) || self.header.eps_name.as_deref() == Some(&name) {
                        return Err(c.err(format!("'{name}' declared twice")));
                    }
                    let slot = match kind {
                        ArgKind::Epsilon => {
                            if self.header.eps_name.is_some() {
                                return Err(c.err("only one epsilon argument is allowed"));
                            }
                            self.header.eps_name = Some(name.clone());
                            if matches!(default, Some(d) if d <= Ratio::from_integer(0)) {
                                return Err(c.err("epsilon must be positive"));
                            }
                            None
                        }
                        _ => {
                            if let Some(d) = default {
                                if !d.is_integer() || (kind == ArgKind::PosInt && d <= Ratio::from_integer(0)) {
                                    return Err(c.err(format!("bad default for '{name}'")));
                                }
                            }
                            Some(self.scope.declare(&name, Type::Int))
                        }
                    };
                    self.header.args.push(ArgDecl { name, kind, slot, default });
                }
                "adjacency" => {
                    c.bump();
                    let adj = match c.bump() {
                        Some(TokKind::Ident(a)) if a == "linf" => Adjacency::Linf,
                        Some(TokKind::Ident(a)) if a == "single" => Adjacency::Single,
                        _ => return Err(c.err("expected adjacency 'linf' or 'single'")),
                    };
                    if self.header.adjacency.replace(adj).is_some() {
                        return Err(c.err("duplicate 'adjacency' line"));
                    }
                }
                "hole" => {
                    c.bump();
                    let k = match c.bump() {
                        Some(TokKind::Hole(k)) => *k,
                        _ => return Err(c.err("expected hole reference like ?1")),
                    };
                    if k != self.header.holes.len() + 1 {
                        return Err(c.err(format!("holes must be declared in order; expected ?{}", self.header.holes.len() + 1)));
                    }
                    c.expect_sym(":")?;
                    let family = match c.bump() {
                        Some(TokKind::Ident(f)) if f == "Lap" => Family::Laplace,
                        Some(TokKind::Ident(f)) if f == "Exp" => Family::Exponential,
                        _ => return Err(c.err("expected noise family Lap or Exp")),
                    };
                    self.header.holes.push((family, c.line));
                }
                _ => break,
            }
            c.done()?;
            self.at += 1;
        }
        let line = self.lines.get(self.at).map(|l| l[0].line).unwrap_or(1);
        if self.header.name.is_none() {
            return Err(SketchError::syntax(line, 1, "missing 'mechanism' line"));
        }
        if self.header.private.is_none() {
            return Err(SketchError::syntax(line, 1, "missing 'private' line"));
        }
        if self.header.eps_name.is_none() {
            return Err(SketchError::syntax(line, 1, "missing epsilon argument"));
        }
        if self.header.holes.is_empty() {
            return Err(SketchError::syntax(line, 1, "a sketch needs at least one hole"));
        }
        self.hole_uses = vec![None; self.header.holes.len()];
        Ok(())
    }

    fn literal(&self, c: &mut Cur) -> Result<Ratio<i64>, SketchError> {
        let neg = c.eat_sym("-");
        let text = match c.bump() {
            Some(TokKind::Num(n)) => n.clone(),
            _ => return Err(c.err("expected number")),
        };
        let mut value = parse_ratio(&text).ok_or_else(|| c.err("bad number"))?;
        if c.eat_sym("/") {
            let den = match c.bump() {
                Some(TokKind::Num(n)) => parse_ratio(n).ok_or_else(|| c.err("bad number"))?,
                _ => return Err(c.err("expected denominator")),
            };
            if den == Ratio::from_integer(0) {
                return Err(c.err("zero denominator"));
            }
            value /= den;
        }
        Ok(if neg { -value } else { value })
    }

    fn finish(mut self) -> Result<MechanismSketch, SketchError> {
        let (body, term, output) = self.block(true)?;
        if !matches!(term, Terminator::Eof) {
            let line = self.lines[self.at - 1][0].line;
            return Err(SketchError::syntax(line, 1, "unmatched 'end' or 'else'"));
        }
        let (output, out_line) = output.ok_or_else(|| {
            let line = self.lines.last().map(|l| l[0].line).unwrap_or(1);
            SketchError::syntax(line, 1, "missing final 'return'")
        })?;
        let mut holes = Vec::new();
        for (id, used) in self.hole_uses.iter().enumerate() {
            match used {
                Some(h) => holes.push(h.clone()),
                None => {
                    return Err(SketchError::Type {
                        line: self.header.holes[id].1,
                        col: 1,
                        msg: format!("hole ?{} is declared but never used", id + 1),
                    })
                }
            }
        }
        let mut var_types = self.scope.types.clone();
        for t in var_types.iter_mut() {
            if *t == Type::AnyList {
                *t = Type::IntList;
            }
        }
        let (private, private_slot) = self.header.private.clone().unwrap();
        let output_type = var_types[output];
        let _ = out_line;
        Ok(MechanismSketch {
            name: self.header.name.clone().unwrap(),
            private,
            private_slot,
            args: self.header.args,
            adjacency: self.header.adjacency.unwrap_or(Adjacency::Linf),
            holes,
            body,
            output,
            output_type,
            vars: self.scope.vars,
            var_types,
        })
    }

    /// Parses statements until `end`, `else` or end of input. At top level a
    /// trailing `return x` closes the program.
    #[allow(clippy::type_complexity)]
    fn block(&mut self, top: bool) -> Result<(Vec<Stmt>, Terminator, Option<(Slot, usize)>), SketchError> {
        let mut out = Vec::new();
        while self.at < self.lines.len() {
            let toks = self.lines[self.at].clone();
            self.at += 1;
            let mut c = Cur::new(&toks);
            let first = c.peek().cloned();
            match first {
                Some(TokKind::Ident(ref w)) if w == "end" => {
                    c.bump();
                    c.done()?;
                    return Ok((out, Terminator::End, None));
                }
                Some(TokKind::Ident(ref w)) if w == "else" => {
                    c.bump();
                    c.done()?;
                    return Ok((out, Terminator::Else, None));
                }
                Some(TokKind::Ident(ref w)) if w == "return" => {
                    c.bump();
                    let name = c.ident()?;
                    let slot = self.lookup(&c, &name, c.col())?;
                    c.done()?;
                    if !top || self.loop_depth > 0 {
                        return Err(SketchError::syntax(c.line, 1, "'return' must be the last statement of the program"));
                    }
                    if self.at < self.lines.len() {
                        return Err(SketchError::syntax(self.lines[self.at][0].line, 1, "statements after 'return'"));
                    }
                    return Ok((out, Terminator::Eof, Some((slot, c.line))));
                }
                _ => out.push(self.stmt(&mut c)?),
            }
        }
        Ok((out, Terminator::Eof, None))
    }

    fn stmt(&mut self, c: &mut Cur) -> Result<Stmt, SketchError> {
        let col = c.col();
        let Some(TokKind::Ident(word)) = c.peek().cloned() else {
            return Err(c.err("expected statement"));
        };
        match word.as_str() {
            "skip" => {
                c.bump();
                c.done()?;
                Ok(Stmt::Skip)
            }
            "break" => {
                c.bump();
                c.done()?;
                if self.loop_depth == 0 {
                    return Err(SketchError::syntax(c.line, col, "'break' outside of a loop"));
                }
                Ok(Stmt::Break)
            }
            "if" => {
                c.bump();
                let (cond, ty) = self.expr(c)?;
                if ty != Type::Bool {
                    return Err(c.type_err(col, "condition must be bool"));
                }
                c.expect_kw("then")?;
                c.done()?;
                let (then_b, term, _) = self.block(false)?;
                let else_b = match term {
                    Terminator::Else => {
                        let (b, term, _) = self.block(false)?;
                        if !matches!(term, Terminator::End) {
                            return Err(SketchError::syntax(c.line, col, "'if' without matching 'end'"));
                        }
                        b
                    }
                    Terminator::End => Vec::new(),
                    Terminator::Eof => {
                        return Err(SketchError::syntax(c.line, col, "'if' without matching 'end'"))
                    }
                };
                Ok(Stmt::If(cond, then_b, else_b))
            }
            "while" => {
                c.bump();
                let (cond, ty) = self.expr(c)?;
                if ty != Type::Bool {
                    return Err(c.type_err(col, "loop condition must be bool"));
                }
                c.expect_kw("do")?;
                c.done()?;
                self.loop_depth += 1;
                let (body, term, _) = self.block(false)?;
                self.loop_depth -= 1;
                if !matches!(term, Terminator::End) {
                    return Err(SketchError::syntax(c.line, col, "'while' without matching 'end'"));
                }
                Ok(Stmt::While(cond, body))
            }
            "append" | "prepend" => {
                c.bump();
                c.expect_sym("(")?;
                let name_col = c.col();
                let name = c.ident()?;
                let slot = self.lookup(c, &name, name_col)?;
                c.expect_sym(",")?;
                let ecol = c.col();
                let (e, ety) = self.expr(c)?;
                c.expect_sym(")")?;
                c.done()?;
                let list_ty = match ety {
                    Type::Int => Type::IntList,
                    Type::Bool => Type::BoolList,
                    _ => return Err(c.type_err(ecol, "list elements must be int or bool")),
                };
                let cur = self.scope.types[slot];
                let merged = cur
                    .unify(list_ty)
                    .ok_or_else(|| c.type_err(name_col, format!("cannot add {} to '{name}' of type {}", ety.name(), cur.name())))?;
                self.scope.types[slot] = merged;
                Ok(if word == "append" { Stmt::Append(slot, e) } else { Stmt::Prepend(slot, e) })
            }
            _ => self.assign(c),
        }
    }

    fn assign(&mut self, c: &mut Cur) -> Result<Stmt, SketchError> {
        let name_col = c.col();
        let name = c.ident()?;
        c.expect_sym("<-")?;
        if name == self.header.private.as_ref().unwrap().0 || self.header.args.iter().any(|a| a.name == name) {
            return Err(c.type_err(name_col, format!("cannot assign to input '{name}'")));
        }
        // A noise term is only legal as the final addend: `base + Lap(?k)` or
        // a bare `Lap(?k)`.
        let rest = &c.toks[c.pos..];
        let noise = match rest {
            [.., Tok { kind: TokKind::Ident(f), .. }, Tok { kind: TokKind::Sym("("), .. }, Tok { kind: TokKind::Hole(k), col: hcol, .. }, Tok { kind: TokKind::Sym(")"), .. }] =>
            {
                noise_call(f).map(|(fam, vec)| (fam, vec, *k, *hcol, rest.len() - 4))
            }
            _ => None,
        };
        let (ty, stmt_fn): (Type, Box<dyn FnOnce(Slot) -> Stmt>) = match noise {
            Some((family, vector, k, hcol, base_len)) => {
                let base = if base_len == 0 {
                    None
                } else {
                    if !matches!(rest[base_len - 1].kind, TokKind::Sym("+")) || base_len == 1 {
                        return Err(SketchError::syntax(c.line, rest[base_len - 1].col, "noise must be added as the last term: 'x <- e + Lap(?k)'"));
                    }
                    let sub = &rest[..base_len - 1];
                    let mut sc = Cur { toks: sub, pos: 0, line: c.line };
                    let (e, t) = self.expr(&mut sc)?;
                    sc.done()?;
                    Some((e, t, sub[0].col))
                };
                c.pos = c.toks.len();
                let hole = self.use_hole(c.line, hcol, k, family, vector)?;
                let ty = match (&base, vector) {
                    (None, false) => Type::Int,
                    (None, true) => {
                        return Err(SketchError::Type { line: c.line, col: hcol, msg: "vector noise needs a base list".into() })
                    }
                    (Some((_, Type::Int, _)), false) => Type::Int,
                    (Some((_, Type::IntList, _)), true) => Type::IntList,
                    (Some((_, t, bcol)), false) => {
                        return Err(c.type_err(*bcol, format!("scalar noise added to {}", t.name())))
                    }
                    (Some((_, t, bcol)), true) => {
                        return Err(c.type_err(*bcol, format!("vector noise added to {}", t.name())))
                    }
                };
                let base = base.map(|(e, _, _)| e);
                (ty, Box::new(move |target| Stmt::Noisy { target, base, hole, vector }))
            }
            None => {
                let (e, t) = self.expr(c)?;
                c.done()?;
                (t, Box::new(move |slot| Stmt::Assign(slot, e)))
            }
        };
        let slot = match self.scope.names.get(&name).copied() {
            Some(slot) => {
                let cur = self.scope.types[slot];
                let merged = cur.unify(ty).ok_or_else(|| {
                    c.type_err(name_col, format!("'{name}' has type {} but is assigned {}", cur.name(), ty.name()))
                })?;
                self.scope.types[slot] = merged;
                slot
            }
            None => {
                if KEYWORDS.contains(&name.as_str()) {
                    return Err(SketchError::syntax(c.line, name_col, format!("'{name}' is reserved")));
                }
                self.scope.declare(&name, ty)
            }
        };
        Ok(stmt_fn(slot))
    }

    fn use_hole(&mut self, line: usize, col: usize, k: usize, family: Family, vector: bool) -> Result<HoleId, SketchError> {
        let id = k - 1;
        let Some(&(declared, _)) = self.header.holes.get(id) else {
            return Err(SketchError::Undeclared { line, col, name: format!("?{k}") });
        };
        if declared != family {
            return Err(SketchError::Type {
                line,
                col,
                msg: format!("hole ?{k} is declared {} but used as {}", declared.name(), family.name()),
            });
        }
        if self.hole_uses[id].is_some() {
            return Err(SketchError::HoleReused { line, col, hole: k });
        }
        self.hole_uses[id] = Some(Hole { id, family, vector, loop_depth: self.loop_depth, line });
        Ok(id)
    }

    fn lookup(&self, c: &Cur, name: &str, col: usize) -> Result<Slot, SketchError> {
        if self.header.eps_name.as_deref() == Some(name) {
            return Err(c.type_err(col, format!("'{name}' is the privacy parameter and only enters noise scales")));
        }
        self.scope
            .names
            .get(name)
            .copied()
            .ok_or_else(|| SketchError::Undeclared { line: c.line, col, name: name.to_string() })
    }

    fn expr(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        self.or_expr(c)
    }

    fn or_expr(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        let mut lhs = self.and_expr(c)?;
        loop {
            let col = c.col();
            if !c.eat_kw("or") {
                return Ok(lhs);
            }
            let rhs = self.and_expr(c)?;
            lhs = self.binary(c, col, BinOp::Or, lhs, rhs)?;
        }
    }

    fn and_expr(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        let mut lhs = self.not_expr(c)?;
        loop {
            let col = c.col();
            if !c.eat_kw("and") {
                return Ok(lhs);
            }
            let rhs = self.not_expr(c)?;
            lhs = self.binary(c, col, BinOp::And, lhs, rhs)?;
        }
    }

    fn not_expr(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        let col = c.col();
        if c.eat_kw("not") {
            let (e, t) = self.not_expr(c)?;
            if t != Type::Bool {
                return Err(c.type_err(col, "'not' needs a bool"));
            }
            return Ok((Expr::Not(Box::new(e)), Type::Bool));
        }
        self.cmp_expr(c)
    }

    fn cmp_expr(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        let lhs = self.add_expr(c)?;
        let col = c.col();
        let op = match c.peek() {
            Some(TokKind::Sym("=")) => BinOp::Eq,
            Some(TokKind::Sym("!=")) => BinOp::Ne,
            Some(TokKind::Sym("<")) => BinOp::Lt,
            Some(TokKind::Sym("<=")) => BinOp::Le,
            Some(TokKind::Sym(">")) => BinOp::Gt,
            Some(TokKind::Sym(">=")) => BinOp::Ge,
            _ => return Ok(lhs),
        };
        c.bump();
        let rhs = self.add_expr(c)?;
        self.binary(c, col, op, lhs, rhs)
    }

    fn add_expr(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        let mut lhs = self.mul_expr(c)?;
        loop {
            let col = c.col();
            let op = if c.eat_sym("+") {
                BinOp::Add
            } else if c.eat_sym("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.mul_expr(c)?;
            lhs = self.binary(c, col, op, lhs, rhs)?;
        }
    }

    fn mul_expr(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        let mut lhs = self.unary(c)?;
        loop {
            let col = c.col();
            let op = if c.eat_sym("*") {
                BinOp::Mul
            } else if c.eat_sym("/") {
                BinOp::Div
            } else if c.eat_kw("mod") {
                BinOp::Mod
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary(c)?;
            lhs = self.binary(c, col, op, lhs, rhs)?;
        }
    }

    fn unary(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        let col = c.col();
        if c.eat_sym("-") {
            let (e, t) = self.unary(c)?;
            if t != Type::Int {
                return Err(c.type_err(col, "unary '-' needs an int"));
            }
            return Ok((Expr::Neg(Box::new(e)), Type::Int));
        }
        self.postfix(c)
    }

    fn postfix(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        let (mut e, mut t) = self.primary(c)?;
        loop {
            let col = c.col();
            if !c.eat_sym("[") {
                return Ok((e, t));
            }
            let (idx, it) = self.expr(c)?;
            c.expect_sym("]")?;
            if it != Type::Int {
                return Err(c.type_err(col, "index must be an int"));
            }
            let elem = match t {
                Type::IntList | Type::AnyList => Type::Int,
                Type::BoolList => Type::Bool,
                _ => return Err(c.type_err(col, format!("cannot index a {}", t.name()))),
            };
            e = Expr::Index(Box::new(e), Box::new(idx));
            t = elem;
        }
    }

    fn primary(&self, c: &mut Cur) -> Result<(Expr, Type), SketchError> {
        let col = c.col();
        match c.bump() {
            Some(TokKind::Num(n)) => {
                let v = n.parse::<i64>().map_err(|_| SketchError::syntax(c.line, col, "expected integer literal"))?;
                Ok((Expr::Int(v), Type::Int))
            }
            Some(TokKind::Sym("(")) => {
                let e = self.expr(c)?;
                c.expect_sym(")")?;
                Ok(e)
            }
            Some(TokKind::Sym("[")) => {
                c.expect_sym("]")?;
                Ok((Expr::EmptyList, Type::AnyList))
            }
            Some(TokKind::Ident(w)) => match w.as_str() {
                "true" => Ok((Expr::Bool(true), Type::Bool)),
                "false" => Ok((Expr::Bool(false), Type::Bool)),
                "len" => {
                    c.expect_sym("(")?;
                    let (e, t) = self.expr(c)?;
                    c.expect_sym(")")?;
                    if !t.is_list() {
                        return Err(c.type_err(col, "len() needs a list"));
                    }
                    Ok((Expr::Len(Box::new(e)), Type::Int))
                }
                w if noise_call(w).is_some() => Err(SketchError::syntax(
                    c.line,
                    col,
                    "noise terms may only appear as the last addend of an assignment",
                )),
                w if KEYWORDS.contains(&w) => Err(SketchError::syntax(c.line, col, format!("unexpected '{w}'"))),
                name => {
                    let slot = self.lookup(c, name, col)?;
                    Ok((Expr::Var(slot), self.scope.types[slot]))
                }
            },
            _ => Err(SketchError::syntax(c.line, col, "expected expression")),
        }
    }

    fn binary(&self, c: &Cur, col: usize, op: BinOp, (l, lt): (Expr, Type), (r, rt): (Expr, Type)) -> Result<(Expr, Type), SketchError> {
        use BinOp::*;
        let ty = match op {
            Add | Sub | Mul | Div | Mod if lt == Type::Int && rt == Type::Int => Type::Int,
            Lt | Le | Gt | Ge if lt == Type::Int && rt == Type::Int => Type::Bool,
            Eq | Ne if lt == Type::Int && rt == Type::Int => Type::Bool,
            Eq | Ne if lt == Type::Bool && rt == Type::Bool => {
                let op = if op == Eq { Iff } else { Xor };
                return Ok((Expr::Bin(op, Box::new(l), Box::new(r)), Type::Bool));
            }
            And | Or if lt == Type::Bool && rt == Type::Bool => Type::Bool,
            _ => {
                return Err(c.type_err(
                    col,
                    format!("operator '{}' does not apply to {} and {}", op.symbol(), lt.name(), rt.name()),
                ))
            }
        };
        Ok((Expr::Bin(op, Box::new(l), Box::new(r)), ty))
    }
}

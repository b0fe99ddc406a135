use super::SketchError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokKind {
    Ident(String),
    /// Numeric literal as written; integers and decimals share the token.
    Num(String),
    /// `?k`, a 1-based hole reference.
    Hole(usize),
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tok {
    pub kind: TokKind,
    pub line: usize,
    pub col: usize,
}

const SYMBOLS: [&str; 17] = [
    "<-", "<=", ">=", "!=", "=", "<", ">", "+", "-", "*", "/", "(", ")", "[", "]", ",", ":",
];

/// Tokenises one source line. `line` is 1-based and only used for errors.
pub fn lex_line(src: &str, line: usize) -> Result<Vec<Tok>, SketchError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Tok { kind: TokKind::Ident(word), line, col });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            let mut seen_dot = false;
            while i < chars.len()
                && (chars[i].is_ascii_digit() || (chars[i] == '.' && !seen_dot))
            {
                seen_dot |= chars[i] == '.';
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Tok { kind: TokKind::Num(word), line, col });
            continue;
        }
        if c == '?' {
            let start = i + 1;
            i += 1;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            let k = digits
                .parse::<usize>()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| SketchError::syntax(line, col, "expected hole number after '?'"))?;
            out.push(Tok { kind: TokKind::Hole(k), line, col });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                out.push(Tok { kind: TokKind::Sym(s), line, col });
                i += s.len();
            }
            None => {
                return Err(SketchError::syntax(line, col, format!("unexpected character '{c}'")))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_assignment_with_hole() {
        let toks = lex_line("s <- s + q[i] + Lap(?1)  # noisy", 3).unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind.clone()).collect();
        assert_eq!(kinds[1], TokKind::Sym("<-"));
        assert_eq!(kinds[kinds.len() - 2], TokKind::Hole(1));
        assert_eq!(toks[0].line, 3);
        assert_eq!(toks[2].col, 6);
    }

    #[test]
    fn rejects_stray_characters() {
        let err = lex_line("x <- 1 $ 2", 7).unwrap_err();
        assert!(matches!(err, SketchError::Syntax { line: 7, col: 8, .. }), "{err:?}");
    }

    #[test]
    fn decimals_are_single_tokens() {
        let toks = lex_line("0.5 1/2", 1).unwrap();
        assert_eq!(toks[0].kind, TokKind::Num("0.5".into()));
        assert_eq!(toks.len(), 4);
    }
}

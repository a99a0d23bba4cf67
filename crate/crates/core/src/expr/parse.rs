//! Recursive-descent parser for the infix expression syntax.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | feature | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! A minus sign in front of a literal yields a negative constant; in front of
//! anything else it becomes multiplication by `-1`. Operators whose operands
//! are all constants are folded while parsing, so `2/3` is a single leaf.

use std::fmt;

use super::{fold_binary, fold_unary, BinaryOp, Expr, UnaryOp};
use crate::features::FEATURE_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownIdentifier,
    UnknownOperator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the input.
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::UnknownIdentifier => "unknown identifier",
            ParseErrorKind::UnknownOperator => "unknown operator",
        };
        write!(f, "{kind} at offset {}: {}", self.position, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let t = lx.next()?;
            let end = t.0 == Tok::End;
            out.push(t);
            if end {
                return Ok(out);
            }
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        while self.peek_char().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(c) = self.peek_char() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            return self.number(start);
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while self.peek_char().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
                self.pos += 1;
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
        }
        if "+-*/^(),".contains(c) {
            self.pos += c.len_utf8();
            return Ok((Tok::Sym(c), start));
        }
        Err(ParseError {
            kind: ParseErrorKind::UnknownOperator,
            position: start,
            message: format!("unexpected character `{c}`"),
        })
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        let digits = |pos: &mut usize| {
            while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
                *pos += 1;
            }
        };
        let mut p = self.pos;
        digits(&mut p);
        if p < bytes.len() && bytes[p] == b'.' {
            p += 1;
            digits(&mut p);
        }
        if p < bytes.len() && (bytes[p] == b'e' || bytes[p] == b'E') {
            let mut q = p + 1;
            if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                q += 1;
            }
            let before = q;
            digits(&mut q);
            if q > before {
                p = q;
            }
        }
        self.pos = p;
        let text = &self.src[start..p];
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(|v| (Tok::Num(v), start))
            .ok_or_else(|| ParseError {
                kind: ParseErrorKind::Syntax,
                position: start,
                message: format!("malformed number `{text}`"),
            })
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn position(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn syntax(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            kind: ParseErrorKind::Syntax,
            position: self.position(),
            message: message.into(),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinaryOp::Add,
                Tok::Sym('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = fold_binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinaryOp::Mul,
                Tok::Sym('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = fold_binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Sym('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::binary(BinaryOp::Mul, Expr::Const(-1.0), other),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if *self.peek() == Tok::Sym('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(fold_binary(BinaryOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.position();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Sym('(') {
                    self.call(&name, pos)
                } else {
                    feature_leaf(&name).ok_or(ParseError {
                        kind: ParseErrorKind::UnknownIdentifier,
                        position: pos,
                        message: format!("`{name}` is not a feature (X1..X{FEATURE_COUNT})"),
                    })
                }
            }
            Tok::End => Err(ParseError {
                kind: ParseErrorKind::Syntax,
                position: pos,
                message: "unexpected end of input".into(),
            }),
            Tok::Sym(c) => Err(ParseError {
                kind: ParseErrorKind::Syntax,
                position: pos,
                message: format!("unexpected `{c}`"),
            }),
        }
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<Expr, ParseError> {
        let binary = match name {
            "max" => Some(BinaryOp::Max),
            "min" => Some(BinaryOp::Min),
            "pow" => Some(BinaryOp::Pow),
            _ => None,
        };
        let unary = UnaryOp::from_name(name);
        if binary.is_none() && unary.is_none() {
            return Err(ParseError {
                kind: ParseErrorKind::UnknownOperator,
                position: pos,
                message: format!("`{name}` is not in the operator library"),
            });
        }
        self.expect('(')?;
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Sym(',') {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(')')?;
        let arity = if binary.is_some() { 2 } else { 1 };
        if args.len() != arity {
            return Err(ParseError {
                kind: ParseErrorKind::Syntax,
                position: pos,
                message: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
            });
        }
        let mut args = args.into_iter();
        let a = args.next().unwrap();
        Ok(match (binary, unary) {
            (Some(op), _) => fold_binary(op, a, args.next().unwrap()),
            (None, Some(op)) => fold_unary(op, a),
            (None, None) => unreachable!(),
        })
    }
}

fn feature_leaf(name: &str) -> Option<Expr> {
    let idx: usize = name.strip_prefix('X')?.parse().ok()?;
    if name.len() > 1 && !name[1..].starts_with('0') && (1..=FEATURE_COUNT).contains(&idx) {
        Some(Expr::Feature(idx as u8))
    } else {
        None
    }
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, at: 0 };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.syntax("trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discovered_ast_shape() {
        let e = parse("max(pow(X9/X10 * X13/X14, 0.495), 0.000001)").unwrap();
        let ratio = Expr::binary(
            BinaryOp::Div,
            Expr::binary(
                BinaryOp::Mul,
                Expr::binary(BinaryOp::Div, Expr::feature(9), Expr::feature(10)),
                Expr::feature(13),
            ),
            Expr::feature(14),
        );
        let expect = Expr::binary(
            BinaryOp::Max,
            Expr::binary(BinaryOp::Pow, ratio, Expr::Const(0.495)),
            Expr::Const(1e-6),
        );
        assert_eq!(e, expect);
    }

    #[test]
    fn precedence() {
        assert_eq!(parse("X1 + X2 * X3").unwrap().to_string(), "(X1 + (X2 * X3))");
        assert_eq!(parse("X1 - X2 - X3").unwrap().to_string(), "((X1 - X2) - X3)");
        assert_eq!(parse("X1 ^ X2 ^ X3").unwrap().to_string(), "pow(X1, pow(X2, X3))");
        assert_eq!(parse("-X1 ^ 2").unwrap().to_string(), "((-1.0) * pow(X1, 2.0))");
        assert_eq!(parse("2 ^ -1").unwrap(), Expr::Const(0.5));
    }

    #[test]
    fn errors_carry_kind_and_position() {
        let e = parse("sin(X1)").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownOperator);
        assert_eq!(e.position, 0);
        let e = parse("X1 + Y").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier);
        assert_eq!(e.position, 5);
        for bad in ["X21", "X0", "X09"] {
            assert_eq!(parse(bad).unwrap_err().kind, ParseErrorKind::UnknownIdentifier, "{bad}");
        }
        let e = parse("X1 +").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Syntax);
        assert_eq!(e.position, 4);
        assert_eq!(parse("max(X1)").unwrap_err().kind, ParseErrorKind::Syntax);
        assert_eq!(parse("(X1").unwrap_err().kind, ParseErrorKind::Syntax);
        assert_eq!(parse("X1 X2").unwrap_err().kind, ParseErrorKind::Syntax);
        assert_eq!(parse("X1 % X2").unwrap_err().kind, ParseErrorKind::UnknownOperator);
        assert_eq!(parse("").unwrap_err().kind, ParseErrorKind::Syntax);
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("1e-6").unwrap(), Expr::Const(1e-6));
        assert_eq!(parse("2.5E+3").unwrap(), Expr::Const(2500.0));
        assert_eq!(parse(".5").unwrap(), Expr::Const(0.5));
        assert!(parse("1e999").is_err());
    }
}

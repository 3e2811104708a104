//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' INTEGER)?
//! primary := NUMBER ['i'] | 'i' | 'z' DIGITS | FUNC '(' expr ')' | '(' expr ')' | LITERAL
//! FUNC    := 'exp' | 'sin' | 'cos'
//! LITERAL := '(' ['-'] NUMBER [('+' | '-') NUMBER 'i'] ')' | '(' ['-'] NUMBER 'i' ')'
//! ```
//!
//! `LITERAL` is lexed as one token and must contain no whitespace; it is the
//! printed form of constants that are not non-negative reals or imaginaries.

use std::sync::OnceLock;

use num_complex::Complex64;
use regex::Regex;
use thiserror::Error;

use super::{Expr, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{name}` at position {position}")]
    UnknownIdentifier { name: String, position: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num { value: f64, imag: bool },
    Literal(Complex64),
    Var(Var),
    Func(&'static str),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

const NUM: &str = r"(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?";

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!("^{NUM}")).unwrap())
}

fn literal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"^\((-?)({NUM})(?:(i)|([+-])({NUM})i)?\)"
        ))
        .unwrap()
    })
}

fn parse_f64(s: &str) -> f64 {
    // The regex only admits strings Rust's float parser accepts.
    s.parse().expect("number token")
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let ch = bytes[pos] as char;
        if ch.is_whitespace() {
            pos += 1;
            continue;
        }
        let rest = &text[pos..];
        // After a function name the parenthesis is the call, not a literal.
        let after_func = matches!(toks.last(), Some((Tok::Func(_), _)));
        if ch == '(' && !after_func {
            if let Some(caps) = literal_re().captures(rest) {
                let negative = !caps[1].is_empty();
                let first = parse_f64(&caps[2]);
                let first = if negative { -first } else { first };
                let value = if caps.get(3).is_some() {
                    Complex64::new(0.0, first)
                } else if let Some(sign) = caps.get(4) {
                    let im = parse_f64(&caps[5]);
                    let im = if sign.as_str() == "-" { -im } else { im };
                    Complex64::new(first, im)
                } else {
                    Complex64::new(first, 0.0)
                };
                toks.push((Tok::Literal(value), pos));
                pos += caps[0].len();
                continue;
            }
        }
        if ch.is_ascii_digit() || ch == '.' {
            let m = number_re().find(rest).ok_or_else(|| ParseError::Syntax {
                position: pos,
                message: "malformed number".into(),
            })?;
            let value = parse_f64(m.as_str());
            let mut end = pos + m.end();
            let mut imag = false;
            if end < bytes.len() && bytes[end] == b'i' {
                let after = bytes.get(end + 1).copied();
                if !after.is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_') {
                    imag = true;
                    end += 1;
                }
            }
            toks.push((Tok::Num { value, imag }, pos));
            pos = end;
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            let len = rest
                .bytes()
                .take_while(|b| b.is_ascii_alphanumeric() || *b == b'_')
                .count();
            let word = &rest[..len];
            let tok = match word {
                "i" => Tok::Num { value: 1.0, imag: true },
                "exp" => Tok::Func("exp"),
                "sin" => Tok::Func("sin"),
                "cos" => Tok::Func("cos"),
                _ => {
                    let id = word
                        .strip_prefix('z')
                        .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                        .and_then(|d| d.parse::<u32>().ok());
                    match id {
                        Some(id) => Tok::Var(Var(id)),
                        None => {
                            return Err(ParseError::UnknownIdentifier {
                                name: word.to_string(),
                                position: pos,
                            })
                        }
                    }
                }
            };
            toks.push((tok, pos));
            pos += len;
            continue;
        }
        let tok = match ch {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => {
                return Err(ParseError::Syntax {
                    position: pos,
                    message: format!("unexpected character `{ch}`"),
                })
            }
        };
        toks.push((tok, pos));
        pos += ch.len_utf8();
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn position(&self) -> usize {
        self.toks.get(self.at).map(|&(_, p)| p).unwrap_or(self.end)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { position: self.position(), message: message.into() })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|(t, _)| t.clone());
        self.at += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.at += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.at += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Tok::Minus) => {
                    self.at += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(Expr::Neg(Box::new(rhs))));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.at += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.at += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.at += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek() != Some(&Tok::Caret) {
            return Ok(base);
        }
        self.at += 1;
        match self.peek().cloned() {
            Some(Tok::Num { value, imag: false })
                if value.fract() == 0.0 && value >= 0.0 && value <= u32::MAX as f64 =>
            {
                self.at += 1;
                Ok(Expr::Pow(Box::new(base), value as u32))
            }
            _ => self.error("exponent must be a non-negative integer literal"),
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.position();
        match self.bump() {
            Some(Tok::Num { value, imag }) => Ok(Expr::Const(if imag {
                Complex64::new(0.0, value)
            } else {
                Complex64::new(value, 0.0)
            })),
            Some(Tok::Literal(c)) => Ok(Expr::Const(c)),
            Some(Tok::Var(v)) => Ok(Expr::Var(v)),
            Some(Tok::Func(name)) => {
                self.expect(Tok::LParen, "`(` after function name")?;
                let arg = Box::new(self.expr()?);
                self.expect(Tok::RParen, "`)`")?;
                Ok(match name {
                    "exp" => Expr::Exp(arg),
                    "sin" => Expr::Sin(arg),
                    _ => Expr::Cos(arg),
                })
            }
            Some(Tok::LParen) => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(_) => Err(ParseError::Syntax {
                position: pos,
                message: "expected a number, variable, function or `(`".into(),
            }),
            None => Err(ParseError::Syntax {
                position: pos,
                message: "unexpected end of input".into(),
            }),
        }
    }
}

/// Parses expression text. No simplification is applied.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, at: 0, end: text.len() };
    let e = p.expr()?;
    if p.at < p.toks.len() {
        return p.error("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Expr {
        Expr::Const(Complex64::new(re, im))
    }

    #[test]
    fn grammar_examples() {
        assert_eq!(parse("z1").unwrap(), Expr::var(1));
        assert_eq!(
            parse("2^3 + 0.5i").unwrap(),
            Expr::Add(Box::new(Expr::Pow(Box::new(c(2.0, 0.0)), 3)), Box::new(c(0.0, 0.5)))
        );
        let e = parse("exp(z1*z2) + 1/(1 - z3)").unwrap();
        assert_eq!(e.free_vars().len(), 3);
    }

    #[test]
    fn subtraction_and_unary_minus() {
        assert_eq!(
            parse("z1 - z2").unwrap(),
            Expr::Add(Box::new(Expr::var(1)), Box::new(Expr::Neg(Box::new(Expr::var(2)))))
        );
        assert_eq!(
            parse("-z1^2").unwrap(),
            Expr::Neg(Box::new(Expr::Pow(Box::new(Expr::var(1)), 2)))
        );
    }

    #[test]
    fn literals() {
        assert_eq!(parse("i").unwrap(), c(0.0, 1.0));
        assert_eq!(parse("(1.5-2i)").unwrap(), c(1.5, -2.0));
        assert_eq!(parse("(-3)").unwrap(), c(-3.0, 0.0));
        assert_eq!(parse("1e-3i").unwrap(), c(0.0, 1e-3));
        // With whitespace the parenthesized form is an ordinary sum.
        assert!(matches!(parse("(1 + 2i)").unwrap(), Expr::Add(..)));
    }

    #[test]
    fn errors_carry_positions() {
        match parse("z1 + log(z2)") {
            Err(ParseError::UnknownIdentifier { name, position }) => {
                assert_eq!(name, "log");
                assert_eq!(position, 5);
            }
            other => panic!("{other:?}"),
        }
        match parse("z1 + * z2") {
            Err(ParseError::Syntax { position, .. }) => assert_eq!(position, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("(z1"), Err(ParseError::Syntax { position: 3, .. })));
        assert!(parse("z1^2.5").is_err());
        assert!(parse("z1^z2").is_err());
        assert!(parse("x").is_err());
        assert!(parse("").is_err());
        assert!(parse("z1 z2").is_err());
    }

    fn arb_const() -> impl Strategy<Value = Complex64> {
        let part = prop_oneof![
            Just(0.0),
            Just(-0.0),
            -1e3..1e3f64,
            (-20i32..20).prop_map(|e| 10f64.powi(e) * 1.2345),
        ];
        (part.clone(), part).prop_map(|(a, b)| Complex64::new(a, b))
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![arb_const().prop_map(Expr::Const), (0u32..5).prop_map(Expr::var)];
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), 0u32..6).prop_map(|(a, k)| Expr::Pow(Box::new(a), k)),
                inner.clone().prop_map(|a| Expr::Exp(Box::new(a))),
                inner.clone().prop_map(|a| Expr::Sin(Box::new(a))),
                inner.prop_map(|a| Expr::Cos(Box::new(a))),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let back = parse(&printed).unwrap();
            // Bitwise comparison so signed zeros must survive too.
            prop_assert_eq!(format!("{back:?}"), format!("{e:?}"));
            prop_assert_eq!(back.to_string(), printed);
        }
    }
}

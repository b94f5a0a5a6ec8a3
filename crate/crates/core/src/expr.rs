//! A small total expression grammar for time-dependent coefficients.
//!
//! Expressions are built from real literals, the variables `t` and `s`,
//! the binary operators `+ - * / ^`, unary minus, and the functions
//! `abs`, `min`, `max`, `sin`, `cos`, `exp`, `log`. Evaluation is
//! deterministic and every domain violation (division by zero, log of a
//! nonpositive value, fractional power of a negative base) is a hard
//! error rather than a silent NaN.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("division by zero while evaluating `{ctx}`")]
    DivisionByZero { ctx: String },
    #[error("log of nonpositive value {arg} while evaluating `{ctx}`")]
    LogDomain { arg: f64, ctx: String },
    #[error("invalid power {base}^{exponent} while evaluating `{ctx}`")]
    PowDomain { base: f64, exponent: f64, ctx: String },
    #[error("non-finite result while evaluating `{ctx}`")]
    NonFinite { ctx: String },
    #[error("expression uses variable `s` but no kernel argument was supplied")]
    MissingKernelVar,
}

/// Variables admitted by the grammar: `t` is absolute time, `s` the
/// (nonpositive) memory offset used by kernels and tail bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    T,
    S,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Abs(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        Parser::new(src).parse()
    }

    /// Evaluates with `t` bound and, when present, `s` bound.
    pub fn eval(&self, t: f64, s: Option<f64>) -> Result<f64, ExprError> {
        let v = self.eval_inner(t, s)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite {
                ctx: self.to_string(),
            })
        }
    }

    fn eval_inner(&self, t: f64, s: Option<f64>) -> Result<f64, ExprError> {
        use Expr::*;
        Ok(match self {
            Const(c) => *c,
            Var(self::Var::T) => t,
            Var(self::Var::S) => s.ok_or(ExprError::MissingKernelVar)?,
            Neg(e) => -e.eval_inner(t, s)?,
            Add(a, b) => a.eval_inner(t, s)? + b.eval_inner(t, s)?,
            Sub(a, b) => a.eval_inner(t, s)? - b.eval_inner(t, s)?,
            Mul(a, b) => a.eval_inner(t, s)? * b.eval_inner(t, s)?,
            Div(a, b) => {
                let den = b.eval_inner(t, s)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero {
                        ctx: self.to_string(),
                    });
                }
                a.eval_inner(t, s)? / den
            }
            Pow(a, b) => {
                let base = a.eval_inner(t, s)?;
                let exponent = b.eval_inner(t, s)?;
                let v = base.powf(exponent);
                if v.is_nan() {
                    return Err(ExprError::PowDomain {
                        base,
                        exponent,
                        ctx: self.to_string(),
                    });
                }
                v
            }
            Abs(e) => e.eval_inner(t, s)?.abs(),
            Sin(e) => e.eval_inner(t, s)?.sin(),
            Cos(e) => e.eval_inner(t, s)?.cos(),
            Exp(e) => e.eval_inner(t, s)?.exp(),
            Log(e) => {
                let arg = e.eval_inner(t, s)?;
                if arg <= 0.0 {
                    return Err(ExprError::LogDomain {
                        arg,
                        ctx: self.to_string(),
                    });
                }
                arg.ln()
            }
            Min(a, b) => a.eval_inner(t, s)?.min(b.eval_inner(t, s)?),
            Max(a, b) => a.eval_inner(t, s)?.max(b.eval_inner(t, s)?),
        })
    }

    /// True when the expression references the given variable.
    pub fn uses(&self, var: Var) -> bool {
        use Expr::*;
        match self {
            Const(_) => false,
            Var(v) => *v == var,
            Neg(e) | Abs(e) | Sin(e) | Cos(e) | Exp(e) | Log(e) => e.uses(var),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) | Min(a, b) | Max(a, b) => {
                a.uses(var) || b.uses(var)
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Expr::*;
        match self {
            Const(c) => write!(f, "{}", c),
            Var(self::Var::T) => write!(f, "t"),
            Var(self::Var::S) => write!(f, "s"),
            Neg(e) => write!(f, "(-{})", e),
            Add(a, b) => write!(f, "({} + {})", a, b),
            Sub(a, b) => write!(f, "({} - {})", a, b),
            Mul(a, b) => write!(f, "({} * {})", a, b),
            Div(a, b) => write!(f, "({} / {})", a, b),
            Pow(a, b) => write!(f, "({} ^ {})", a, b),
            Abs(e) => write!(f, "abs({})", e),
            Sin(e) => write!(f, "sin({})", e),
            Cos(e) => write!(f, "cos({})", e),
            Exp(e) => write!(f, "exp({})", e),
            Log(e) => write!(f, "log({})", e),
            Min(a, b) => write!(f, "min({}, {})", a, b),
            Max(a, b) => write!(f, "max({}, {})", a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            tokens: Vec::new(),
            pos: 0,
        }
    }

    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Parse {
            pos,
            msg: msg.into(),
        })
    }

    fn tokenize(&mut self) -> Result<(), ExprError> {
        let bytes = self.src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            match c {
                ' ' | '\t' | '\n' | '\r' => i += 1,
                '+' => {
                    self.tokens.push((i, Token::Plus));
                    i += 1;
                }
                '-' => {
                    self.tokens.push((i, Token::Minus));
                    i += 1;
                }
                '*' => {
                    self.tokens.push((i, Token::Star));
                    i += 1;
                }
                '/' => {
                    self.tokens.push((i, Token::Slash));
                    i += 1;
                }
                '^' => {
                    self.tokens.push((i, Token::Caret));
                    i += 1;
                }
                '(' => {
                    self.tokens.push((i, Token::LParen));
                    i += 1;
                }
                ')' => {
                    self.tokens.push((i, Token::RParen));
                    i += 1;
                }
                ',' => {
                    self.tokens.push((i, Token::Comma));
                    i += 1;
                }
                '0'..='9' | '.' => {
                    let start = i;
                    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                        i += 1;
                    }
                    // optional exponent part
                    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                        let mut j = i + 1;
                        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                            j += 1;
                        }
                        if j < bytes.len() && bytes[j].is_ascii_digit() {
                            i = j;
                            while i < bytes.len() && bytes[i].is_ascii_digit() {
                                i += 1;
                            }
                        }
                    }
                    let text = &self.src[start..i];
                    match text.parse::<f64>() {
                        Ok(v) => self.tokens.push((start, Token::Num(v))),
                        Err(_) => return self.err(start, format!("bad number literal `{text}`")),
                    }
                }
                'a'..='z' | 'A'..='Z' | '_' => {
                    let start = i;
                    while i < bytes.len()
                        && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                    {
                        i += 1;
                    }
                    self.tokens
                        .push((start, Token::Ident(self.src[start..i].to_string())));
                }
                _ => return self.err(i, format!("unexpected character `{c}`")),
            }
        }
        Ok(())
    }

    fn parse(mut self) -> Result<Expr, ExprError> {
        self.tokenize()?;
        if self.tokens.is_empty() {
            return self.err(0, "empty expression");
        }
        let e = self.expr()?;
        if self.pos != self.tokens.len() {
            let (p, _) = self.tokens[self.pos];
            return self.err(p, "trailing input after expression");
        }
        Ok(e)
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.src.len())
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Expr::Neg(Box::new(e)));
        }
        if matches!(self.peek(), Some(Token::Plus)) {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    // power := atom ('^' unary)?   (right-associative)
    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let pos = self.here();
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(e),
                    _ => self.err(self.here(), "expected `)`"),
                }
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "t" => Ok(Expr::Var(Var::T)),
                "s" => Ok(Expr::Var(Var::S)),
                "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                "abs" | "sin" | "cos" | "exp" | "log" => {
                    let arg = self.fn_args(&name, 1)?.pop().unwrap();
                    Ok(match name.as_str() {
                        "abs" => Expr::Abs(Box::new(arg)),
                        "sin" => Expr::Sin(Box::new(arg)),
                        "cos" => Expr::Cos(Box::new(arg)),
                        "exp" => Expr::Exp(Box::new(arg)),
                        _ => Expr::Log(Box::new(arg)),
                    })
                }
                "min" | "max" => {
                    let mut args = self.fn_args(&name, 2)?;
                    let b = args.pop().unwrap();
                    let a = args.pop().unwrap();
                    Ok(if name == "min" {
                        Expr::Min(Box::new(a), Box::new(b))
                    } else {
                        Expr::Max(Box::new(a), Box::new(b))
                    })
                }
                _ => self.err(pos, format!("unknown identifier `{name}`")),
            },
            _ => self.err(pos, "expected a literal, variable, function or `(`"),
        }
    }

    fn fn_args(&mut self, name: &str, count: usize) -> Result<Vec<Expr>, ExprError> {
        match self.bump() {
            Some(Token::LParen) => {}
            _ => return self.err(self.here(), format!("expected `(` after `{name}`")),
        }
        let mut args = vec![self.expr()?];
        while matches!(self.peek(), Some(Token::Comma)) {
            self.pos += 1;
            args.push(self.expr()?);
        }
        match self.bump() {
            Some(Token::RParen) => {}
            _ => return self.err(self.here(), format!("expected `)` closing `{name}(`")),
        }
        if args.len() != count {
            return self.err(
                0,
                format!("`{name}` takes {count} argument(s), got {}", args.len()),
            );
        }
        Ok(args)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ev(src: &str, t: f64) -> f64 {
        Expr::parse(src).unwrap().eval(t, None).unwrap()
    }

    #[test]
    fn precedence_and_functions() {
        assert_relative_eq!(ev("1 + 2*3", 0.0), 7.0);
        assert_relative_eq!(ev("2^3^2", 0.0), 512.0); // right-assoc
        assert_relative_eq!(ev("-2^2", 0.0), -4.0);
        assert_relative_eq!(ev("(1+cos(t)^2)", 0.0), 2.0);
        assert_relative_eq!(ev("min(3, max(1, 2))", 0.0), 2.0);
        assert_relative_eq!(ev("abs(-3.5)", 0.0), 3.5);
        assert_relative_eq!(ev("exp(log(2.5))", 0.0), 2.5, epsilon = 1e-14);
        assert_relative_eq!(ev("1e-3 + 2E2", 0.0), 200.001);
    }

    #[test]
    fn kernel_variable() {
        let k = Expr::parse("exp(-(t+s))").unwrap();
        assert_relative_eq!(k.eval(2.0, Some(-1.0)).unwrap(), (-1.0f64).exp());
        assert!(matches!(
            k.eval(2.0, None),
            Err(ExprError::MissingKernelVar)
        ));
    }

    #[test]
    fn hard_domain_errors() {
        assert!(matches!(
            ev_err("1/t", 0.0),
            ExprError::DivisionByZero { .. }
        ));
        assert!(matches!(ev_err("log(t)", -1.0), ExprError::LogDomain { .. }));
        assert!(matches!(
            ev_err("(-1)^0.5", 0.0),
            ExprError::PowDomain { .. }
        ));
        assert!(matches!(
            ev_err("exp(t)", 1e9),
            ExprError::NonFinite { .. }
        ));
    }

    fn ev_err(src: &str, t: f64) -> ExprError {
        Expr::parse(src).unwrap().eval(t, None).unwrap_err()
    }

    #[test]
    fn parse_errors_carry_position() {
        match Expr::parse("1 + ") {
            Err(ExprError::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("min(1)").is_err());
    }

    #[test]
    fn uses_reports_variables() {
        let e = Expr::parse("2*t + 1").unwrap();
        assert!(e.uses(Var::T));
        assert!(!e.uses(Var::S));
    }
}

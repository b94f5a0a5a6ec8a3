//! Time-dependent scalar data: parsed expressions for the CLI path and
//! opaque evaluation routines for the library path. Both are immutable
//! and reentrant, so systems built from them can be shared across
//! workers.

use crate::expr::{Expr, ExprError, Var};
use std::fmt;
use std::sync::Arc;

pub type SignalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A scalar function of time `t`.
#[derive(Clone)]
pub enum ScalarSignal {
    Const(f64),
    Expr { src: String, ast: Arc<Expr> },
    Func(SignalFn),
}

impl fmt::Debug for ScalarSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarSignal::Const(c) => write!(f, "Const({c})"),
            ScalarSignal::Expr { src, .. } => write!(f, "Expr({src})"),
            ScalarSignal::Func(_) => write!(f, "Func(<opaque>)"),
        }
    }
}

impl ScalarSignal {
    pub fn constant(c: f64) -> Self {
        ScalarSignal::Const(c)
    }

    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let ast = Expr::parse(src)?;
        if ast.uses(Var::S) {
            return Err(ExprError::Parse {
                pos: 0,
                msg: "scalar signal must not reference the kernel variable `s`".into(),
            });
        }
        if ast.uses(Var::T) {
            Ok(ScalarSignal::Expr {
                src: src.to_string(),
                ast: Arc::new(ast),
            })
        } else {
            // constant-fold; evaluation is total for t-free expressions
            match ast.eval(0.0, None) {
                Ok(v) => Ok(ScalarSignal::Const(v)),
                Err(_) => Ok(ScalarSignal::Expr {
                    src: src.to_string(),
                    ast: Arc::new(ast),
                }),
            }
        }
    }

    pub fn func(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarSignal::Func(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> Result<f64, ExprError> {
        match self {
            ScalarSignal::Const(c) => Ok(*c),
            ScalarSignal::Expr { ast, .. } => ast.eval(t, None),
            ScalarSignal::Func(f) => {
                let v = f(t);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ExprError::NonFinite {
                        ctx: "<opaque signal>".into(),
                    })
                }
            }
        }
    }

    /// Returns the constant value when the signal is structurally constant.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            ScalarSignal::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// The expression source when serializable.
    pub fn source(&self) -> Option<String> {
        match self {
            ScalarSignal::Const(c) => Some(format!("{c}")),
            ScalarSignal::Expr { src, .. } => Some(src.clone()),
            ScalarSignal::Func(_) => None,
        }
    }

    /// Multiplies by a constant, preserving serializability of expressions.
    pub fn scaled(&self, factor: f64) -> Self {
        if factor == 1.0 {
            return self.clone();
        }
        match self {
            ScalarSignal::Const(c) => ScalarSignal::Const(c * factor),
            ScalarSignal::Expr { src, ast } => ScalarSignal::Expr {
                src: format!("({factor}) * ({src})"),
                ast: Arc::new(Expr::Mul(
                    Box::new(Expr::Const(factor)),
                    Box::new((**ast).clone()),
                )),
            },
            ScalarSignal::Func(f) => {
                let f = f.clone();
                ScalarSignal::func(move |t| factor * f(t))
            }
        }
    }

    /// Pointwise product with another signal (used by the exponential
    /// change of variables).
    pub fn product(&self, other: &ScalarSignal) -> Self {
        match (self, other) {
            (ScalarSignal::Const(a), _) => other.scaled(*a),
            (_, ScalarSignal::Const(b)) => self.scaled(*b),
            (
                ScalarSignal::Expr { src: s1, ast: a1 },
                ScalarSignal::Expr { src: s2, ast: a2 },
            ) => ScalarSignal::Expr {
                src: format!("({s1}) * ({s2})"),
                ast: Arc::new(Expr::Mul(
                    Box::new((**a1).clone()),
                    Box::new((**a2).clone()),
                )),
            },
            _ => {
                let a = self.clone();
                let b = other.clone();
                ScalarSignal::func(move |t| {
                    a.eval(t).unwrap_or(f64::NAN) * b.eval(t).unwrap_or(f64::NAN)
                })
            }
        }
    }

    /// Adds a constant offset.
    pub fn offset(&self, delta: f64) -> Self {
        if delta == 0.0 {
            return self.clone();
        }
        match self {
            ScalarSignal::Const(c) => ScalarSignal::Const(c + delta),
            ScalarSignal::Expr { src, ast } => ScalarSignal::Expr {
                src: format!("({src}) + ({delta})"),
                ast: Arc::new(Expr::Add(
                    Box::new((**ast).clone()),
                    Box::new(Expr::Const(delta)),
                )),
            },
            ScalarSignal::Func(f) => {
                let f = f.clone();
                ScalarSignal::func(move |t| f(t) + delta)
            }
        }
    }
}

/// A kernel `K(t, s)` on `t >= 0`, `s <= 0`.
#[derive(Clone)]
pub enum Kernel {
    Expr { src: String, ast: Arc<Expr> },
    Func(KernelFn),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Expr { src, .. } => write!(f, "Kernel({src})"),
            Kernel::Func(_) => write!(f, "Kernel(<opaque>)"),
        }
    }
}

impl Kernel {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let ast = Expr::parse(src)?;
        Ok(Kernel::Expr {
            src: src.to_string(),
            ast: Arc::new(ast),
        })
    }

    pub fn func(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Func(Arc::new(f))
    }

    pub fn eval(&self, t: f64, s: f64) -> Result<f64, ExprError> {
        match self {
            Kernel::Expr { ast, .. } => ast.eval(t, Some(s)),
            Kernel::Func(f) => {
                let v = f(t, s);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(ExprError::NonFinite {
                        ctx: "<opaque kernel>".into(),
                    })
                }
            }
        }
    }

    pub fn source(&self) -> Option<String> {
        match self {
            Kernel::Expr { src, .. } => Some(src.clone()),
            Kernel::Func(_) => None,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        if factor == 1.0 {
            return self.clone();
        }
        match self {
            Kernel::Expr { src, ast } => Kernel::Expr {
                src: format!("({factor}) * ({src})"),
                ast: Arc::new(Expr::Mul(
                    Box::new(Expr::Const(factor)),
                    Box::new((**ast).clone()),
                )),
            },
            Kernel::Func(f) => {
                let f = f.clone();
                Kernel::func(move |t, s| factor * f(t, s))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_folding() {
        let s = ScalarSignal::parse("2^3 + 1").unwrap();
        assert_eq!(s.as_const(), Some(9.0));
        let s = ScalarSignal::parse("1 + cos(t)^2").unwrap();
        assert_eq!(s.as_const(), None);
        assert_relative_eq!(s.eval(0.0).unwrap(), 2.0);
    }

    #[test]
    fn rejects_kernel_var_in_signal() {
        assert!(ScalarSignal::parse("s + 1").is_err());
    }

    #[test]
    fn scaling_keeps_source() {
        let s = ScalarSignal::parse("t + 1").unwrap().scaled(2.0);
        assert_relative_eq!(s.eval(3.0).unwrap(), 8.0);
        assert!(s.source().is_some());
    }
}

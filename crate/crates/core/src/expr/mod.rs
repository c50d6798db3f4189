//! A small arithmetic expression language for coefficients in config files.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' exponent)?
//! exponent := '-' exponent | power          (must not contain variables)
//! atom   := number | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Variables are `x1 .. xn` and, when enabled, `z`. Functions: `exp`, `log`,
//! `sin`, `cos`, `sqrt`, `abs` (one argument) and `min`, `max` (two).

mod parser;

use std::fmt;

use thiserror::Error;

pub use parser::parse;

/// Identifiers an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarSet {
    pub dim: usize,
    pub allow_z: bool,
}

impl VarSet {
    pub fn coords(dim: usize) -> Self {
        VarSet { dim, allow_z: false }
    }

    pub fn with_z(dim: usize) -> Self {
        VarSet { dim, allow_z: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// Zero-based coordinate index; printed as `x{i+1}`.
    X(usize),
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Base raised to a constant exponent.
    Pow(Box<Expr>, f64),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected {0}")]
    Unexpected(String),
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("`{func}` takes {expected} argument(s), got {got}")]
    Arity { func: &'static str, expected: usize, got: usize },
    #[error("exponent must be constant")]
    VariableExponent,
    #[error("invalid number `{0}`")]
    InvalidNumber(String),
}

/// Syntax error at a byte offset of the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("{func} of {value} is undefined")]
    Domain { func: &'static str, value: f64 },
    #[error("expression uses z but no z was supplied")]
    MissingZ,
    #[error("expression uses x{index} but the point has {dim} coordinates")]
    Dimension { index: usize, dim: usize },
    #[error("non-finite result")]
    NonFinite,
}

impl Expr {
    /// Evaluates at the point `x`, with `z` for right-hand sides `f(x, z)`.
    pub fn eval(&self, x: &[f64], z: Option<f64>) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X(i)) => *x.get(*i).ok_or(EvalError::Dimension { index: i + 1, dim: x.len() })?,
            Expr::Var(Var::Z) => z.ok_or(EvalError::MissingZ)?,
            Expr::Neg(a) => -a.eval(x, z)?,
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x, z)?, b.eval(x, z)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(base, e) => {
                let b = base.eval(x, z)?;
                if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
                    b.powi(*e as i32)
                } else if b > 0.0 {
                    b.powf(*e)
                } else {
                    return Err(EvalError::Domain { func: "^", value: b });
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(x, z)?;
                match f {
                    Func::Exp => a.exp(),
                    Func::Log if a > 0.0 => a.ln(),
                    Func::Log => return Err(EvalError::Domain { func: "log", value: a }),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Sqrt if a >= 0.0 => a.sqrt(),
                    Func::Sqrt => return Err(EvalError::Domain { func: "sqrt", value: a }),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(x, z)?),
                    Func::Max => a.max(args[1].eval(x, z)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn uses_z(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == Var::Z,
            Expr::Neg(a) | Expr::Pow(a, _) => a.uses_z(),
            Expr::Binary(_, a, b) => a.uses_z() || b.uses_z(),
            Expr::Call(_, args) => args.iter().any(Expr::uses_z),
        }
    }

    fn has_vars(&self) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) => a.has_vars(),
            Expr::Binary(_, a, b) => a.has_vars() || b.has_vars(),
            Expr::Call(_, args) => args.iter().any(Expr::has_vars),
        }
    }
}

/// Fully parenthesized rendering; parsing it yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(Var::X(i)) => write!(f, "x{}", i + 1),
            Expr::Var(Var::Z) => write!(f, "z"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Pow(a, e) if *e < 0.0 => write!(f, "({a}^(-{}))", -e),
            Expr::Pow(a, e) => write!(f, "({a}^{e})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str, x: &[f64]) -> Result<f64, EvalError> {
        parse(text, VarSet::coords(x.len())).unwrap().eval(x, None)
    }

    #[test]
    fn evaluates_examples() {
        assert_eq!(eval("x1^2 + x2^2", &[1.0, 2.0]).unwrap(), 5.0);
        let v = eval("log((1 + x1^2 + x2^2 + x3^2)/2)", &[0.0; 3]).unwrap();
        assert!((v + 0.6931472).abs() < 5e-8);
        assert_eq!(eval("exp(0)", &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(eval("0.5*(x1^2+x2^2+x3^2)", &[1.0, 1.0, 1.0]).unwrap(), 1.5);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("-x1^2", &[3.0, 0.0]).unwrap(), -9.0);
        assert_eq!(eval("2^3^2", &[0.0, 0.0]).unwrap(), 512.0);
        assert_eq!(eval("8/4/2", &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(eval("1 - 2 - 3", &[0.0, 0.0]).unwrap(), -4.0);
        assert_eq!(eval("2*3 + 4*5", &[0.0, 0.0]).unwrap(), 26.0);
        assert_eq!(eval("x1^-1", &[4.0, 0.0]).unwrap(), 0.25);
        assert_eq!(eval("max(x1, x2) - min(x1, x2)", &[1.0, 4.0]).unwrap(), 3.0);
        assert_eq!(eval("  1e-1*  10 ", &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(eval("log(x1)", &[-1.0, 0.0]), Err(EvalError::Domain { func: "log", .. })));
        assert!(matches!(eval("sqrt(x1)", &[-1.0, 0.0]), Err(EvalError::Domain { .. })));
        assert!(matches!(eval("x1^0.5", &[-1.0, 0.0]), Err(EvalError::Domain { func: "^", .. })));
        assert!(matches!(eval("1/x1", &[0.0, 0.0]), Err(EvalError::NonFinite)));
        let e = parse("z + x1", VarSet::with_z(2)).unwrap();
        assert_eq!(e.eval(&[1.0, 0.0], None), Err(EvalError::MissingZ));
        assert_eq!(e.eval(&[1.0, 0.0], Some(2.0)), Ok(3.0));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        let e = parse("x1 + * 2", VarSet::coords(3)).unwrap_err();
        assert_eq!(e.offset, 5);
        let e = parse("x4 + 1", VarSet::coords(3)).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("x4".into()));
        let e = parse("z", VarSet::coords(3)).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("z".into()));
        let e = parse("min(x1)", VarSet::coords(3)).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Arity { func: "min", expected: 2, got: 1 }));
        let e = parse("2^x1", VarSet::coords(3)).unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::VariableExponent);
        assert!(parse("(1 + 2", VarSet::coords(3)).is_err());
        assert!(parse("1 2", VarSet::coords(3)).is_err());
        assert!(parse("", VarSet::coords(3)).is_err());
    }
}

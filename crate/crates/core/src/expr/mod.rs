//! Symbolic scoring expressions over the twenty features.
//!
//! The language has seven binary operators (`+ - * / max min pow`), five
//! unary ones (`sqrt ln exp tanh abs`), feature leaves `X1..X20` and numeric
//! constants. Evaluation is total: invalid operations produce NaN, which
//! propagates to the final score.

mod cascade;
mod parse;

use std::fmt;

use crate::features::{FeatureVector, FEATURE_COUNT};

pub use cascade::{
    cascade_evaluate, cascade_evaluate_text, eval_set_scenarios, feedback_render, CascadeConfig, EvalInstance,
    EvalSetSizes, EvalSets, FitnessReport, GENERAL_N_RANGE, TRAIN_N_RANGE,
};
pub use parse::{parse, ParseError, ParseErrorKind};

/// Canonical texts of the three reference scorers.
pub const SEED_TEXT: &str = "X9^(2/3)";
pub const DISCOVERED_TEXT: &str = "max(pow(X9/X10 * X13/X14, 0.495), 0.000001)";
pub const SUBOPTIMAL_TEXT: &str =
    "max(pow(X9/X10 * (X13/X14 + 0.35*X17/X18) * (1 + 0.082*tanh(X8/X10)), 0.493), 0.000001)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Max,
    Min,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Sqrt,
    Ln,
    Exp,
    Tanh,
    Abs,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 7] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Max,
        BinaryOp::Min,
        BinaryOp::Pow,
    ];

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => {
                if b == 0.0 {
                    f64::NAN
                } else {
                    a / b
                }
            }
            // f64::max would swallow NaN
            BinaryOp::Max => {
                if a.is_nan() || b.is_nan() {
                    f64::NAN
                } else {
                    a.max(b)
                }
            }
            BinaryOp::Min => {
                if a.is_nan() || b.is_nan() {
                    f64::NAN
                } else {
                    a.min(b)
                }
            }
            BinaryOp::Pow => guarded_pow(a, b),
        }
    }

    fn function_name(self) -> Option<&'static str> {
        match self {
            BinaryOp::Max => Some("max"),
            BinaryOp::Min => Some("min"),
            BinaryOp::Pow => Some("pow"),
            _ => None,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Max => "max",
            BinaryOp::Min => "min",
            BinaryOp::Pow => "pow",
        }
    }
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 5] = [UnaryOp::Sqrt, UnaryOp::Ln, UnaryOp::Exp, UnaryOp::Tanh, UnaryOp::Abs];

    pub fn apply(self, a: f64) -> f64 {
        match self {
            UnaryOp::Sqrt => {
                if a < 0.0 {
                    f64::NAN
                } else {
                    a.sqrt()
                }
            }
            UnaryOp::Ln => {
                if a <= 0.0 {
                    f64::NAN
                } else {
                    a.ln()
                }
            }
            UnaryOp::Exp => a.exp(),
            UnaryOp::Tanh => a.tanh(),
            UnaryOp::Abs => a.abs(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Ln => "ln",
            UnaryOp::Exp => "exp",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        UnaryOp::ALL.into_iter().find(|op| op.name() == name)
    }
}

/// Negative bases are allowed only for integer exponents (within 1e-9).
fn guarded_pow(a: f64, b: f64) -> f64 {
    if a < 0.0 {
        let r = b.round();
        if (b - r).abs() > 1e-9 {
            return f64::NAN;
        }
        return a.powf(r);
    }
    a.powf(b)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// One-based feature index.
    Feature(u8),
    Const(f64),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn feature(index: usize) -> Self {
        assert!(
            (1..=FEATURE_COUNT).contains(&index),
            "feature index {index} out of range"
        );
        Expr::Feature(index as u8)
    }

    pub fn unary(op: UnaryOp, a: Expr) -> Self {
        Expr::Unary(op, Box::new(a))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Self {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Const(_))
    }
}

/// Evaluates on one feature row; NaN marks an invalid value.
pub fn evaluate(e: &Expr, row: &FeatureVector) -> f64 {
    match e {
        Expr::Feature(i) => row.x(*i as usize),
        Expr::Const(c) => *c,
        Expr::Unary(op, a) => op.apply(evaluate(a, row)),
        Expr::Binary(op, a, b) => op.apply(evaluate(a, row), evaluate(b, row)),
    }
}

/// Total node count, operators plus leaves.
pub fn complexity(e: &Expr) -> usize {
    match e {
        Expr::Feature(_) | Expr::Const(_) => 1,
        Expr::Unary(_, a) => 1 + complexity(a),
        Expr::Binary(_, a, b) => 1 + complexity(a) + complexity(b),
    }
}

/// Collapses every operator whose operands are all constants, when the
/// result is finite.
pub fn fold_constants(e: Expr) -> Expr {
    match e {
        Expr::Unary(op, a) => fold_unary(op, fold_constants(*a)),
        Expr::Binary(op, a, b) => fold_binary(op, fold_constants(*a), fold_constants(*b)),
        leaf => leaf,
    }
}

pub(crate) fn fold_unary(op: UnaryOp, a: Expr) -> Expr {
    if let Expr::Const(x) = a {
        let v = op.apply(x);
        if v.is_finite() {
            return Expr::Const(v);
        }
    }
    Expr::unary(op, a)
}

pub(crate) fn fold_binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        let v = op.apply(*x, *y);
        if v.is_finite() {
            return Expr::Const(v);
        }
    }
    Expr::binary(op, a, b)
}

fn write_const(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    // Debug output is the shortest text that parses back to the same bits
    if c.is_sign_negative() {
        write!(f, "(-{:?})", -c)
    } else {
        write!(f, "{c:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Feature(i) => write!(f, "X{i}"),
            Expr::Const(c) => write_const(f, *c),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => match op.function_name() {
                Some(name) => write!(f, "{name}({a}, {b})"),
                None => write!(f, "({a} {} {b})", op.symbol()),
            },
        }
    }
}

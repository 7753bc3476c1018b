//! Arithmetic expressions over state, input, and observation variables.
//!
//! Expressions represent vector fields, storage functions, and certificate
//! bounds. Three variable families are distinguished syntactically — states
//! `x1, x2, …`, inputs `a1, a2, …`, observations `o1, o2, …` — so that
//! side conditions like "α must not depend on the state" are decidable by
//! inspection, not by sampling.
//!
//! Differentiation is symbolic and is defined exactly on the smooth
//! fragment; asking for a derivative through `abs`, `min`, or `max` is an
//! error rather than a subgradient choice, which keeps every produced
//! gradient honest.

use std::fmt;

use crate::error::AglError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VarKind {
    State,
    Input,
    Obs,
}

impl VarKind {
    pub fn prefix(self) -> &'static str {
        match self {
            VarKind::State => "x",
            VarKind::Input => "a",
            VarKind::Obs => "o",
        }
    }
}

/// Expression AST. Variable indices are 1-based, matching the textual form
/// (`x1` is the first state coordinate). `Pow` exponents are integer
/// literals, possibly negative.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(VarKind, usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Abs(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

/// Values bound to the three variable families during evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Env<'e> {
    pub x: &'e [f64],
    pub a: &'e [f64],
    pub o: &'e [f64],
}

impl<'e> Env<'e> {
    pub fn new(x: &'e [f64], a: &'e [f64], o: &'e [f64]) -> Self {
        Env { x, a, o }
    }

    fn slot(&self, kind: VarKind) -> &'e [f64] {
        match kind {
            VarKind::State => self.x,
            VarKind::Input => self.a,
            VarKind::Obs => self.o,
        }
    }

    fn describe_dims(&self) -> String {
        format!("x:{}, a:{}, o:{}", self.x.len(), self.a.len(), self.o.len())
    }
}

/// Evaluate an expression in an environment.
pub fn eval_expr(e: &Expr, env: &Env) -> Result<f64, AglError> {
    Ok(match e {
        Expr::Const(c) => *c,
        Expr::Var(kind, idx) => {
            let slot = env.slot(*kind);
            if *idx == 0 || *idx > slot.len() {
                return Err(AglError::UnboundVariable(
                    format!("{}{}", kind.prefix(), idx),
                    env.describe_dims(),
                ));
            }
            slot[*idx - 1]
        }
        Expr::Neg(e) => -eval_expr(e, env)?,
        Expr::Add(l, r) => eval_expr(l, env)? + eval_expr(r, env)?,
        Expr::Sub(l, r) => eval_expr(l, env)? - eval_expr(r, env)?,
        Expr::Mul(l, r) => eval_expr(l, env)? * eval_expr(r, env)?,
        Expr::Div(l, r) => {
            let denom = eval_expr(r, env)?;
            if denom == 0.0 {
                return Err(AglError::DivisionByZero);
            }
            eval_expr(l, env)? / denom
        }
        Expr::Pow(base, n) => {
            let b = eval_expr(base, env)?;
            if b == 0.0 && *n < 0 {
                return Err(AglError::ZeroToNegativePower(*n));
            }
            b.powi(*n)
        }
        Expr::Abs(e) => eval_expr(e, env)?.abs(),
        Expr::Sin(e) => eval_expr(e, env)?.sin(),
        Expr::Cos(e) => eval_expr(e, env)?.cos(),
        Expr::Exp(e) => eval_expr(e, env)?.exp(),
        Expr::Min(l, r) => eval_expr(l, env)?.min(eval_expr(r, env)?),
        Expr::Max(l, r) => eval_expr(l, env)?.max(eval_expr(r, env)?),
    })
}

// Smart constructors with constant folding, used when building derivatives
// so nested product rules stay readable and cheap to evaluate.
impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(kind: VarKind, idx: usize) -> Expr {
        Expr::Var(kind, idx)
    }

    pub fn add(l: Expr, r: Expr) -> Expr {
        match (l, r) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a + b),
            (Expr::Const(z), r) if z == 0.0 => r,
            (l, Expr::Const(z)) if z == 0.0 => l,
            (l, r) => Expr::Add(Box::new(l), Box::new(r)),
        }
    }

    pub fn sub(l: Expr, r: Expr) -> Expr {
        match (l, r) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a - b),
            (l, Expr::Const(z)) if z == 0.0 => l,
            (Expr::Const(z), r) if z == 0.0 => Expr::neg(r),
            (l, r) => Expr::Sub(Box::new(l), Box::new(r)),
        }
    }

    pub fn mul(l: Expr, r: Expr) -> Expr {
        match (l, r) {
            (Expr::Const(a), Expr::Const(b)) => Expr::Const(a * b),
            // 0·e folds to 0 even when e is partial (division by zero); the
            // fold is standard for symbolic derivatives and only ever
            // removes error cases, never introduces them silently into a
            // certificate the user wrote.
            (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
            (Expr::Const(one), r) if one == 1.0 => r,
            (l, Expr::Const(one)) if one == 1.0 => l,
            (l, r) => Expr::Mul(Box::new(l), Box::new(r)),
        }
    }

    pub fn div(l: Expr, r: Expr) -> Expr {
        match (l, r) {
            (l, Expr::Const(one)) if one == 1.0 => l,
            (Expr::Const(a), Expr::Const(b)) if b != 0.0 => Expr::Const(a / b),
            (l, r) => Expr::Div(Box::new(l), Box::new(r)),
        }
    }

    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            e => Expr::Neg(Box::new(e)),
        }
    }

    pub fn pow(base: Expr, n: i32) -> Expr {
        match n {
            0 => Expr::Const(1.0), // powi convention: 0⁰ = 1
            1 => base,
            _ => Expr::Pow(Box::new(base), n),
        }
    }
}

/// Symbolic partial derivative with respect to one variable. Errors on the
/// non-smooth node kinds (`abs`, `min`, `max`): functions to be
/// differentiated must be written in smooth form.
pub fn diff_expr(e: &Expr, kind: VarKind, index: usize) -> Result<Expr, AglError> {
    Ok(match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(k, i) => {
            if *k == kind && *i == index {
                Expr::Const(1.0)
            } else {
                Expr::Const(0.0)
            }
        }
        Expr::Neg(e) => Expr::neg(diff_expr(e, kind, index)?),
        Expr::Add(l, r) => Expr::add(diff_expr(l, kind, index)?, diff_expr(r, kind, index)?),
        Expr::Sub(l, r) => Expr::sub(diff_expr(l, kind, index)?, diff_expr(r, kind, index)?),
        Expr::Mul(l, r) => Expr::add(
            Expr::mul(diff_expr(l, kind, index)?, (**r).clone()),
            Expr::mul((**l).clone(), diff_expr(r, kind, index)?),
        ),
        Expr::Div(l, r) => Expr::div(
            Expr::sub(
                Expr::mul(diff_expr(l, kind, index)?, (**r).clone()),
                Expr::mul((**l).clone(), diff_expr(r, kind, index)?),
            ),
            Expr::pow((**r).clone(), 2),
        ),
        Expr::Pow(base, n) => {
            if *n == 0 {
                Expr::Const(0.0)
            } else {
                Expr::mul(
                    Expr::mul(Expr::Const(f64::from(*n)), Expr::pow((**base).clone(), n - 1)),
                    diff_expr(base, kind, index)?,
                )
            }
        }
        Expr::Sin(e) => Expr::mul(
            Expr::Cos(Box::new((**e).clone())),
            diff_expr(e, kind, index)?,
        ),
        Expr::Cos(e) => Expr::neg(Expr::mul(
            Expr::Sin(Box::new((**e).clone())),
            diff_expr(e, kind, index)?,
        )),
        Expr::Exp(e) => Expr::mul(
            Expr::Exp(Box::new((**e).clone())),
            diff_expr(e, kind, index)?,
        ),
        Expr::Abs(_) => return Err(AglError::NonSmooth("abs")),
        Expr::Min(_, _) => return Err(AglError::NonSmooth("min")),
        Expr::Max(_, _) => return Err(AglError::NonSmooth("max")),
    })
}

/// Largest 1-based index used per variable family `(x, a, o)`; 0 means the
/// family does not occur.
pub fn var_limits(e: &Expr) -> (usize, usize, usize) {
    fn walk(e: &Expr, lim: &mut (usize, usize, usize)) {
        match e {
            Expr::Const(_) => {}
            Expr::Var(kind, idx) => match kind {
                VarKind::State => lim.0 = lim.0.max(*idx),
                VarKind::Input => lim.1 = lim.1.max(*idx),
                VarKind::Obs => lim.2 = lim.2.max(*idx),
            },
            Expr::Neg(a) | Expr::Abs(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) => {
                walk(a, lim)
            }
            Expr::Pow(a, _) => walk(a, lim),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => {
                walk(a, lim);
                walk(b, lim);
            }
        }
    }
    let mut lim = (0, 0, 0);
    walk(e, &mut lim);
    lim
}

/// Validate that every variable fits within the declared dimensions.
pub fn check_vars(e: &Expr, x_dim: usize, a_dim: usize, o_dim: usize) -> Result<(), AglError> {
    let (x, a, o) = var_limits(e);
    let dims = format!("x:{x_dim}, a:{a_dim}, o:{o_dim}");
    if x > x_dim {
        return Err(AglError::UnboundVariable(format!("x{x}"), dims));
    }
    if a > a_dim {
        return Err(AglError::UnboundVariable(format!("a{a}"), dims));
    }
    if o > o_dim {
        return Err(AglError::UnboundVariable(format!("o{o}"), dims));
    }
    Ok(())
}

/// Replace variables by expressions. `None` leaves a family untouched; a
/// provided slice must cover every index of that family that occurs.
pub fn substitute(
    e: &Expr,
    x_sub: Option<&[Expr]>,
    a_sub: Option<&[Expr]>,
    o_sub: Option<&[Expr]>,
) -> Result<Expr, AglError> {
    let subst = |kind: VarKind, idx: usize| -> Result<Option<Expr>, AglError> {
        let table = match kind {
            VarKind::State => x_sub,
            VarKind::Input => a_sub,
            VarKind::Obs => o_sub,
        };
        match table {
            None => Ok(None),
            Some(t) => {
                if idx == 0 || idx > t.len() {
                    return Err(AglError::UnboundVariable(
                        format!("{}{}", kind.prefix(), idx),
                        format!("substitution provides {} expressions", t.len()),
                    ));
                }
                Ok(Some(t[idx - 1].clone()))
            }
        }
    };
    substitute_with(e, &subst)
}

/// Shift every variable index by a per-family offset (used to lay two
/// expression spaces side by side on a product space).
pub fn shift_vars(e: &Expr, x_shift: usize, a_shift: usize, o_shift: usize) -> Expr {
    let shift = |kind: VarKind, idx: usize| -> Result<Option<Expr>, AglError> {
        let offset = match kind {
            VarKind::State => x_shift,
            VarKind::Input => a_shift,
            VarKind::Obs => o_shift,
        };
        Ok(Some(Expr::Var(kind, idx + offset)))
    };
    // The closure never errors, so the rebuild cannot either.
    substitute_with(e, &shift).expect("shifting variables is total")
}

fn substitute_with(
    e: &Expr,
    subst: &dyn Fn(VarKind, usize) -> Result<Option<Expr>, AglError>,
) -> Result<Expr, AglError> {
    Ok(match e {
        Expr::Const(c) => Expr::Const(*c),
        Expr::Var(kind, idx) => match subst(*kind, *idx)? {
            Some(replacement) => replacement,
            None => Expr::Var(*kind, *idx),
        },
        Expr::Neg(a) => Expr::Neg(Box::new(substitute_with(a, subst)?)),
        Expr::Add(a, b) => Expr::Add(
            Box::new(substitute_with(a, subst)?),
            Box::new(substitute_with(b, subst)?),
        ),
        Expr::Sub(a, b) => Expr::Sub(
            Box::new(substitute_with(a, subst)?),
            Box::new(substitute_with(b, subst)?),
        ),
        Expr::Mul(a, b) => Expr::Mul(
            Box::new(substitute_with(a, subst)?),
            Box::new(substitute_with(b, subst)?),
        ),
        Expr::Div(a, b) => Expr::Div(
            Box::new(substitute_with(a, subst)?),
            Box::new(substitute_with(b, subst)?),
        ),
        Expr::Pow(a, n) => Expr::Pow(Box::new(substitute_with(a, subst)?), *n),
        Expr::Abs(a) => Expr::Abs(Box::new(substitute_with(a, subst)?)),
        Expr::Sin(a) => Expr::Sin(Box::new(substitute_with(a, subst)?)),
        Expr::Cos(a) => Expr::Cos(Box::new(substitute_with(a, subst)?)),
        Expr::Exp(a) => Expr::Exp(Box::new(substitute_with(a, subst)?)),
        Expr::Min(a, b) => Expr::Min(
            Box::new(substitute_with(a, subst)?),
            Box::new(substitute_with(b, subst)?),
        ),
        Expr::Max(a, b) => Expr::Max(
            Box::new(substitute_with(a, subst)?),
            Box::new(substitute_with(b, subst)?),
        ),
    })
}

/// Format a float in the shortest form the expression grammar re-reads
/// exactly: integers print without a fractional part, everything else uses
/// the shortest round-trip representation.
pub(crate) fn fmt_float(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if v.fract() == 0.0 && v.abs() < 1e15 {
        return format!("{v:.0}");
    }
    format!("{v:?}")
}

// Precedence levels for printing: Add/Sub < Mul/Div < unary minus < Pow <
// atoms. Children are parenthesized exactly when needed, so printing then
// parsing reproduces the AST node for node.
fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(_, _) | Expr::Sub(_, _) => 1,
        Expr::Mul(_, _) | Expr::Div(_, _) => 2,
        Expr::Neg(_) => 3,
        Expr::Const(c) if *c < 0.0 => 3,
        Expr::Pow(_, _) => 4,
        _ => 5,
    }
}

fn write_prec(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let prec = precedence(e);
    if prec < min_prec {
        write!(f, "(")?;
        write_prec(e, 0, f)?;
        return write!(f, ")");
    }
    match e {
        Expr::Const(c) => write!(f, "{}", fmt_float(*c)),
        Expr::Var(kind, idx) => write!(f, "{}{}", kind.prefix(), idx),
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_prec(a, 3, f)
        }
        Expr::Add(a, b) => {
            write_prec(a, 1, f)?;
            write!(f, "+")?;
            write_prec(b, 2, f)
        }
        Expr::Sub(a, b) => {
            write_prec(a, 1, f)?;
            write!(f, "-")?;
            write_prec(b, 2, f)
        }
        Expr::Mul(a, b) => {
            write_prec(a, 2, f)?;
            write!(f, "*")?;
            write_prec(b, 3, f)
        }
        Expr::Div(a, b) => {
            write_prec(a, 2, f)?;
            write!(f, "/")?;
            write_prec(b, 3, f)
        }
        Expr::Pow(a, n) => {
            write_prec(a, 5, f)?;
            write!(f, "^{n}")
        }
        Expr::Abs(a) => write!(f, "abs({a})"),
        Expr::Sin(a) => write!(f, "sin({a})"),
        Expr::Cos(a) => write!(f, "cos({a})"),
        Expr::Exp(a) => write!(f, "exp({a})"),
        Expr::Min(a, b) => write!(f, "min({a},{b})"),
        Expr::Max(a, b) => write!(f, "max({a},{b})"),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_prec(self, 0, f)
    }
}

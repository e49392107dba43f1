//! Symbolic expression kernel: parse, print, evaluate, differentiate,
//! substitute, simplify, and numerically compare scalar expressions.
//!
//! Every formula in the toolkit (right-hand sides, first integrals, stage
//! maps, Lyapunov functions) is an [`Expr`] or a vector of them. Trees are
//! immutable; all operations are pure functions returning new trees.

mod calculus;
mod eval;
mod grid;
mod parse;
mod simplify;

pub use calculus::{lie_derivative, CalculusError};
pub use eval::{Binding, EvalError, EPS_DOM};
pub use grid::{equiv_sample, linspace, EquivError, EquivReport, Grid};
pub use parse::{parse, ParseError};
pub use simplify::SimplifyOptions;

use std::fmt;

/// Function vocabulary. Exactly the functions the bundled systems need;
/// extending it means touching eval, diff and the parser table together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Ln,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            "ln" => Some(Func::Ln),
            _ => None,
        }
    }
}

/// Immutable symbolic expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Fn(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }

    pub fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }

    pub fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }

    pub fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }

    pub fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }

    pub fn pow(self, rhs: Expr) -> Expr {
        Expr::Pow(Box::new(self), Box::new(rhs))
    }

    pub fn apply(func: Func, arg: Expr) -> Expr {
        Expr::Fn(func, Box::new(arg))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 1.0)
    }

    /// Collects the free variable names, sorted and deduplicated.
    pub fn free_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(name) => out.push(name.clone()),
            Expr::Neg(a) | Expr::Fn(_, a) => a.collect_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn contains_var(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => v == name,
            Expr::Neg(a) | Expr::Fn(_, a) => a.contains_var(name),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.contains_var(name) || b.contains_var(name),
        }
    }

    /// Simultaneous substitution: replacements are not re-scanned.
    pub fn substitute(&self, subst: &std::collections::HashMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(name) => match subst.get(name) {
                Some(replacement) => replacement.clone(),
                None => self.clone(),
            },
            Expr::Neg(a) => a.substitute(subst).neg(),
            Expr::Fn(f, a) => Expr::apply(*f, a.substitute(subst)),
            Expr::Add(a, b) => a.substitute(subst).add(b.substitute(subst)),
            Expr::Sub(a, b) => a.substitute(subst).sub(b.substitute(subst)),
            Expr::Mul(a, b) => a.substitute(subst).mul(b.substitute(subst)),
            Expr::Div(a, b) => a.substitute(subst).div(b.substitute(subst)),
            Expr::Pow(a, b) => a.substitute(subst).pow(b.substitute(subst)),
        }
    }

    /// Substitutes a single variable.
    pub fn subst_var(&self, name: &str, replacement: &Expr) -> Expr {
        let mut map = std::collections::HashMap::new();
        map.insert(name.to_string(), replacement.clone());
        self.substitute(&map)
    }

    pub fn simplify(&self) -> Expr {
        simplify::simplify(self, &SimplifyOptions::default())
    }

    pub fn simplify_with(&self, opts: &SimplifyOptions) -> Expr {
        simplify::simplify(self, opts)
    }

    pub fn diff(&self, var: &str) -> Expr {
        calculus::diff(self, var)
    }

    pub fn eval(&self, binding: &Binding) -> Result<f64, EvalError> {
        eval::eval(self, binding)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(_) | Expr::Var(_) | Expr::Fn(..) => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.precedence();
        let needs_parens = prec < min
            || matches!(self, Expr::Const(v) if *v < 0.0 && min > 1);
        if needs_parens {
            write!(f, "(")?;
        }
        match self {
            Expr::Const(v) => write!(f, "{}", fmt_num(*v))?,
            Expr::Var(name) => write!(f, "{name}")?,
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.fmt_prec(f, 3)?;
            }
            Expr::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)?;
            }
            Expr::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "*")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "/")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Pow(a, b) => {
                a.fmt_prec(f, 5)?;
                write!(f, "^")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Fn(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if needs_parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_round_trips_structurally() {
        for text in [
            "(x1 - x2)*exp(xi1*t)",
            "sin(xi4*t)^2",
            "x1 + x2*x3 - x4/x5",
            "-x1^2",
            "x1^-2",
            "2^3^2",
            "(2^3)^2",
            "-(x1 + x2)",
            "sqrt(x2)/(2*x1)",
        ] {
            let e = parse(text).unwrap();
            let reparsed = parse(&e.to_string()).unwrap();
            assert_eq!(e, reparsed, "round trip failed for {text}");
        }
    }

    #[test]
    fn substitution_is_simultaneous() {
        let e = parse("x1 + x2").unwrap();
        let mut map = std::collections::HashMap::new();
        map.insert("x1".to_string(), Expr::var("x2"));
        map.insert("x2".to_string(), Expr::var("x1"));
        assert_eq!(e.substitute(&map), parse("x2 + x1").unwrap());
    }

    #[test]
    fn substitution_with_empty_map_is_identity() {
        let e = parse("(x1 - x2)*exp(t)").unwrap();
        assert_eq!(e.substitute(&std::collections::HashMap::new()), e);
    }

    #[test]
    fn substitution_does_not_retrigger() {
        // x1 <- y1 + x2 + c1*exp(-t) inside (x1-x2)*exp(t)
        let e = parse("(x1 - x2)*exp(t)").unwrap();
        let r = e.subst_var("x1", &parse("y1 + x2 + c1*exp(-t)").unwrap());
        let expected = parse("(y1 + x2 + c1*exp(-t) - x2)*exp(t)").unwrap();
        assert_eq!(r, expected);
    }

    #[test]
    fn free_vars_sorted_unique() {
        let e = parse("x2*x1 + x1 - t").unwrap();
        assert_eq!(e.free_vars(), vec!["t", "x1", "x2"]);
    }
}

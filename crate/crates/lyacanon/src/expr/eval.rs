//! Numeric evaluation with domain guards.
//!
//! Guards raise errors instead of letting NaN/Inf propagate: a silent NaN
//! inside a grid scan would corrupt max/abs statistics downstream.

use super::{Expr, Func};
use std::collections::HashMap;
use thiserror::Error;

/// Tolerance below which a divisor counts as zero.
pub const EPS_DOM: f64 = 1e-12;

/// Map from variable name to value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Binding {
    map: HashMap<String, f64>,
}

impl Binding {
    pub fn new() -> Self {
        Binding::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.map.insert(name.into(), value);
        self
    }

    /// Builder-style insert.
    pub fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.map.insert(name.into(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.map.get(name).copied()
    }

    pub fn merged(&self, other: &Binding) -> Binding {
        let mut map = self.map.clone();
        for (k, v) in &other.map {
            map.insert(k.clone(), *v);
        }
        Binding { map }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.map.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, f64)> for Binding {
    fn from_iter<T: IntoIterator<Item = (S, f64)>>(iter: T) -> Self {
        Binding {
            map: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unbound variable '{0}'")]
    UnboundVar(String),
    #[error("domain violation in `{expr}`: {detail}")]
    DomainViolation { expr: String, detail: String },
}

pub(super) fn eval(e: &Expr, b: &Binding) -> Result<f64, EvalError> {
    match e {
        Expr::Const(v) => Ok(*v),
        Expr::Var(name) => b.get(name).ok_or_else(|| EvalError::UnboundVar(name.clone())),
        Expr::Neg(a) => Ok(-eval(a, b)?),
        Expr::Add(x, y) => Ok(eval(x, b)? + eval(y, b)?),
        Expr::Sub(x, y) => Ok(eval(x, b)? - eval(y, b)?),
        Expr::Mul(x, y) => Ok(eval(x, b)? * eval(y, b)?),
        Expr::Div(x, y) => {
            let num = eval(x, b)?;
            let den = eval(y, b)?;
            if den.abs() <= EPS_DOM {
                return Err(domain(e, format!("division by {den} (|den| <= {EPS_DOM})")));
            }
            Ok(num / den)
        }
        Expr::Pow(x, y) => {
            let base = eval(x, b)?;
            let exp = eval(y, b)?;
            if base < 0.0 {
                // negative base only with a constant integer exponent
                let is_const_int = matches!(**y, Expr::Const(c) if c == c.trunc());
                if !is_const_int {
                    return Err(domain(
                        e,
                        format!("negative base {base} with non-integer-constant exponent"),
                    ));
                }
                return Ok(base.powi(exp as i32));
            }
            if base == 0.0 && exp < 0.0 {
                return Err(domain(e, "zero base with negative exponent".to_string()));
            }
            Ok(base.powf(exp))
        }
        Expr::Fn(func, a) => {
            let arg = eval(a, b)?;
            match func {
                Func::Sin => Ok(arg.sin()),
                Func::Cos => Ok(arg.cos()),
                Func::Exp => Ok(arg.exp()),
                Func::Sqrt => {
                    if arg < 0.0 {
                        Err(domain(e, format!("sqrt of negative value {arg}")))
                    } else {
                        Ok(arg.sqrt())
                    }
                }
                Func::Ln => {
                    if arg <= 0.0 {
                        Err(domain(e, format!("ln of non-positive value {arg}")))
                    } else {
                        Ok(arg.ln())
                    }
                }
            }
        }
    }
}

fn domain(e: &Expr, detail: String) -> EvalError {
    EvalError::DomainViolation { expr: e.to_string(), detail }
}

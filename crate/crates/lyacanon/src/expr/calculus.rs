//! Symbolic differentiation and Lie derivatives along a flow.

use super::{Expr, Func};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CalculusError {
    #[error("dimension mismatch: {states} state names but {rhs} right-hand sides")]
    DimensionMismatch { states: usize, rhs: usize },
}

/// Exact partial derivative of `e` with respect to `var`.
pub(super) fn diff(e: &Expr, var: &str) -> Expr {
    match e {
        Expr::Const(_) => Expr::zero(),
        Expr::Var(name) => {
            if name == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Expr::Neg(a) => diff(a, var).neg(),
        Expr::Add(a, b) => diff(a, var).add(diff(b, var)),
        Expr::Sub(a, b) => diff(a, var).sub(diff(b, var)),
        Expr::Mul(a, b) => diff(a, var)
            .mul((**b).clone())
            .add((**a).clone().mul(diff(b, var))),
        Expr::Div(a, b) => {
            // (a'b - ab') / b^2
            let num = diff(a, var)
                .mul((**b).clone())
                .sub((**a).clone().mul(diff(b, var)));
            num.div((**b).clone().pow(Expr::constant(2.0)))
        }
        Expr::Pow(a, b) => {
            let da = diff(a, var);
            let db = diff(b, var);
            if db.is_zero() {
                // b * a^(b-1) * a'
                if da.is_zero() {
                    return Expr::zero();
                }
                // fold a constant exponent so negative bases stay evaluable
                let reduced = match **b {
                    Expr::Const(bv) => Expr::constant(bv - 1.0),
                    _ => (**b).clone().sub(Expr::one()),
                };
                (**b).clone().mul((**a).clone().pow(reduced)).mul(da)
            } else {
                // a^b * (b' ln a + b a'/a)
                let inner = db
                    .mul(Expr::apply(Func::Ln, (**a).clone()))
                    .add((**b).clone().mul(da.div((**a).clone())));
                e.clone().mul(inner)
            }
        }
        Expr::Fn(func, a) => {
            let da = diff(a, var);
            if da.is_zero() {
                return Expr::zero();
            }
            let outer = match func {
                Func::Sin => Expr::apply(Func::Cos, (**a).clone()),
                Func::Cos => Expr::apply(Func::Sin, (**a).clone()).neg(),
                Func::Exp => e.clone(),
                Func::Sqrt => Expr::one().div(Expr::constant(2.0).mul(e.clone())),
                Func::Ln => Expr::one().div((**a).clone()),
            };
            outer.mul(da)
        }
    }
}

/// Derivative of `e` along the flow dt/dt = 1, ds_i/dt = rhs_i:
/// de/dt + sum_i (de/ds_i) * rhs_i. Vanishes identically for first integrals.
pub fn lie_derivative(
    e: &Expr,
    time_var: &str,
    states: &[String],
    rhs: &[Expr],
) -> Result<Expr, CalculusError> {
    if states.len() != rhs.len() {
        return Err(CalculusError::DimensionMismatch { states: states.len(), rhs: rhs.len() });
    }
    let mut out = e.diff(time_var);
    for (state, f) in states.iter().zip(rhs) {
        out = out.add(e.diff(state).mul(f.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Binding};

    #[test]
    fn derivative_of_linear_factor() {
        let e = parse("(x1 - x2)*exp(t)").unwrap();
        let d = e.diff("x1").simplify();
        assert_eq!(d, parse("exp(t)").unwrap());
    }

    #[test]
    fn derivative_of_gamma() {
        // d/dt (xi2 + xi3*sin(xi4*t)) = xi3*xi4*cos(xi4*t)
        let e = parse("xi2 + xi3*sin(xi4*t)").unwrap();
        let d = e.diff("t").simplify();
        let expected = parse("xi3*xi4*cos(xi4*t)").unwrap();
        let b = Binding::new()
            .with("t", 0.7)
            .with("xi2", 2.0)
            .with("xi3", 1.0)
            .with("xi4", 1.0);
        assert!((d.eval(&b).unwrap() - expected.eval(&b).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_unrelated_var_is_zero() {
        let e = parse("c1").unwrap();
        assert_eq!(e.diff("y1"), Expr::zero());
    }

    #[test]
    fn lie_derivative_of_constant_is_zero() {
        let rhs = vec![parse("x1").unwrap()];
        let ld = lie_derivative(&Expr::constant(5.0), "t", &["x1".to_string()], &rhs).unwrap();
        assert_eq!(ld.simplify(), Expr::zero());
    }

    #[test]
    fn lie_derivative_dimension_mismatch() {
        let rhs = vec![parse("x1").unwrap()];
        let states = vec!["x1".to_string(), "x2".to_string()];
        assert!(lie_derivative(&Expr::var("x1"), "t", &states, &rhs).is_err());
    }

    #[test]
    fn general_power_rule() {
        // d/dx x^x = x^x (ln x + 1)
        let e = parse("x^x").unwrap();
        let d = e.diff("x");
        let b = Binding::new().with("x", 1.7);
        let expected = 1.7f64.powf(1.7) * (1.7f64.ln() + 1.0);
        assert!((d.eval(&b).unwrap() - expected).abs() < 1e-12);
    }
}

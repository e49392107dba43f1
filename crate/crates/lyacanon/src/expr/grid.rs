//! Cartesian sample grids and numeric equivalence checking.

use super::{Binding, EvalError, Expr};
use thiserror::Error;

/// A Cartesian product of per-variable sample values, optionally merged
/// over a base binding for variables held fixed.
#[derive(Debug, Clone, Default)]
pub struct Grid {
    axes: Vec<(String, Vec<f64>)>,
}

impl Grid {
    pub fn new() -> Grid {
        Grid::default()
    }

    pub fn axis(mut self, name: impl Into<String>, values: Vec<f64>) -> Grid {
        self.axes.push((name.into(), values));
        self
    }

    pub fn linspace(self, name: impl Into<String>, lo: f64, hi: f64, count: usize) -> Grid {
        self.axis(name, linspace(lo, hi, count))
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty() || self.axes.iter().any(|(_, v)| v.is_empty())
    }

    pub fn len(&self) -> usize {
        if self.axes.is_empty() {
            return 0;
        }
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Iterates all grid points in lexicographic axis order.
    pub fn points(&self) -> GridIter<'_> {
        GridIter { grid: self, idx: 0, total: self.len() }
    }
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

pub struct GridIter<'a> {
    grid: &'a Grid,
    idx: usize,
    total: usize,
}

impl Iterator for GridIter<'_> {
    type Item = Binding;

    fn next(&mut self) -> Option<Binding> {
        if self.idx >= self.total {
            return None;
        }
        let mut rem = self.idx;
        let mut b = Binding::new();
        for (name, values) in self.grid.axes.iter().rev() {
            b.set(name.clone(), values[rem % values.len()]);
            rem /= values.len();
        }
        self.idx += 1;
        Some(b)
    }
}

#[derive(Debug, Clone)]
pub struct EquivReport {
    pub equivalent: bool,
    pub max_abs_diff: f64,
    pub witness: Option<Binding>,
    pub valid_points: usize,
    pub skipped_points: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquivError {
    #[error("all {0} grid points violate domain guards of one of the expressions")]
    AllPointsInvalid(usize),
    #[error("unbound variable while sampling: {0}")]
    Unbound(String),
}

/// Compares two expressions numerically over a grid. Points where either
/// expression hits a domain guard are skipped; unbound variables are an
/// error (the grid is simply missing an axis).
pub fn equiv_sample(
    a: &Expr,
    b: &Expr,
    grid: &Grid,
    base: &Binding,
    tol: f64,
) -> Result<EquivReport, EquivError> {
    let mut max_abs_diff: f64 = 0.0;
    let mut witness = None;
    let mut valid = 0usize;
    let mut skipped = 0usize;
    for point in grid.points() {
        let binding = base.merged(&point);
        let va = match a.eval(&binding) {
            Ok(v) => v,
            Err(EvalError::UnboundVar(name)) => return Err(EquivError::Unbound(name)),
            Err(EvalError::DomainViolation { .. }) => {
                skipped += 1;
                continue;
            }
        };
        let vb = match b.eval(&binding) {
            Ok(v) => v,
            Err(EvalError::UnboundVar(name)) => return Err(EquivError::Unbound(name)),
            Err(EvalError::DomainViolation { .. }) => {
                skipped += 1;
                continue;
            }
        };
        valid += 1;
        let diff = (va - vb).abs();
        if diff > max_abs_diff {
            max_abs_diff = diff;
            if diff > tol {
                witness = Some(binding);
            }
        }
    }
    if valid == 0 {
        return Err(EquivError::AllPointsInvalid(grid.len()));
    }
    Ok(EquivReport {
        equivalent: max_abs_diff <= tol,
        max_abs_diff,
        witness,
        valid_points: valid,
        skipped_points: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn identical_expressions_have_zero_diff() {
        let a = parse("sin(t)*x1").unwrap();
        let grid = Grid::new().linspace("t", 0.0, 6.0, 7).linspace("x1", -1.0, 1.0, 5);
        let r = equiv_sample(&a, &a, &grid, &Binding::new(), 1e-9).unwrap();
        assert!(r.equivalent);
        assert_eq!(r.max_abs_diff, 0.0);
        assert_eq!(r.valid_points, 35);
    }

    #[test]
    fn offset_detected_with_witness() {
        let a = parse("y1").unwrap();
        let b = parse("y1 + 1e-3").unwrap();
        let grid = Grid::new().linspace("y1", -1.0, 1.0, 11);
        let r = equiv_sample(&a, &b, &grid, &Binding::new(), 1e-9).unwrap();
        assert!(!r.equivalent);
        assert!(r.witness.is_some());
        assert!((r.max_abs_diff - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn invalid_points_skipped() {
        let a = parse("sqrt(x1)").unwrap();
        let b = parse("sqrt(x1)").unwrap();
        let grid = Grid::new().axis("x1", vec![-1.0, 1.0, 4.0]);
        let r = equiv_sample(&a, &b, &grid, &Binding::new(), 1e-9).unwrap();
        assert_eq!(r.valid_points, 2);
        assert_eq!(r.skipped_points, 1);
    }

    #[test]
    fn all_invalid_is_error() {
        let a = parse("sqrt(x1)").unwrap();
        let grid = Grid::new().axis("x1", vec![-1.0, -2.0]);
        assert!(matches!(
            equiv_sample(&a, &a, &grid, &Binding::new(), 1e-9),
            Err(EquivError::AllPointsInvalid(2))
        ));
    }

    #[test]
    fn grid_iteration_is_lexicographic() {
        let grid = Grid::new().axis("a", vec![0.0, 1.0]).axis("b", vec![10.0, 20.0]);
        let pts: Vec<(f64, f64)> = grid
            .points()
            .map(|p| (p.get("a").unwrap(), p.get("b").unwrap()))
            .collect();
        assert_eq!(pts, vec![(0.0, 10.0), (0.0, 20.0), (1.0, 10.0), (1.0, 20.0)]);
    }
}

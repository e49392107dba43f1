//! Conservative rewriting: constant folding, 0/1 identities, double
//! negation. No trig or exponential identities; whether two expressions
//! agree is settled numerically by `equiv_sample`, not by canonical forms.

use super::{Expr, Func};

#[derive(Debug, Clone, Copy, Default)]
pub struct SimplifyOptions {
    /// Enables `a/a -> 1` for structurally equal non-constant `a`.
    /// Off by default: the rewrite is only value-preserving where `a != 0`.
    pub assume_nonzero: bool,
}

pub(super) fn simplify(e: &Expr, opts: &SimplifyOptions) -> Expr {
    let node = match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => simplify(a, opts).neg(),
        Expr::Add(a, b) => simplify(a, opts).add(simplify(b, opts)),
        Expr::Sub(a, b) => simplify(a, opts).sub(simplify(b, opts)),
        Expr::Mul(a, b) => simplify(a, opts).mul(simplify(b, opts)),
        Expr::Div(a, b) => simplify(a, opts).div(simplify(b, opts)),
        Expr::Pow(a, b) => simplify(a, opts).pow(simplify(b, opts)),
        Expr::Fn(f, a) => Expr::apply(*f, simplify(a, opts)),
    };
    let node = match &node {
        Expr::Add(..) | Expr::Sub(..) => cancel_terms(&node).unwrap_or(node),
        _ => node,
    };
    rewrite(node, opts)
}

/// The `a - a -> 0` rule applied across a flattened sum: structurally equal
/// terms with opposite signs cancel and constants merge. Returns None when
/// nothing cancels, leaving the tree untouched.
fn cancel_terms(e: &Expr) -> Option<Expr> {
    let mut terms: Vec<(bool, Expr)> = Vec::new();
    flatten_sum(e, false, &mut terms);
    let mut changed = false;
    let mut constant = 0.0f64;
    let mut const_seen = 0usize;
    let mut kept: Vec<(bool, Expr)> = Vec::new();
    'outer: for (neg, term) in terms {
        if let Expr::Const(v) = term {
            constant += if neg { -v } else { v };
            const_seen += 1;
            continue;
        }
        for i in 0..kept.len() {
            if kept[i].0 != neg && kept[i].1 == term {
                kept.remove(i);
                changed = true;
                continue 'outer;
            }
        }
        kept.push((neg, term));
    }
    if !changed && const_seen < 2 {
        return None;
    }
    let mut acc: Option<Expr> = None;
    for (neg, term) in kept {
        acc = Some(match acc {
            None => {
                if neg {
                    term.neg()
                } else {
                    term
                }
            }
            Some(a) => {
                if neg {
                    a.sub(term)
                } else {
                    a.add(term)
                }
            }
        });
    }
    if constant != 0.0 || acc.is_none() {
        let c = Expr::constant(constant);
        acc = Some(match acc {
            None => c,
            Some(a) => {
                if constant < 0.0 {
                    a.sub(Expr::constant(-constant))
                } else {
                    a.add(c)
                }
            }
        });
    }
    acc
}

fn flatten_sum(e: &Expr, neg: bool, out: &mut Vec<(bool, Expr)>) {
    match e {
        Expr::Add(a, b) => {
            flatten_sum(a, neg, out);
            flatten_sum(b, neg, out);
        }
        Expr::Sub(a, b) => {
            flatten_sum(a, neg, out);
            flatten_sum(b, !neg, out);
        }
        Expr::Neg(a) => flatten_sum(a, !neg, out),
        _ => out.push((neg, e.clone())),
    }
}

/// Applies local rules at one node until none fires. Children are already
/// simplified, so the loop terminates quickly.
fn rewrite(mut e: Expr, opts: &SimplifyOptions) -> Expr {
    loop {
        let next = step(&e, opts);
        match next {
            Some(n) if n != e => e = n,
            _ => return e,
        }
    }
}

fn step(e: &Expr, opts: &SimplifyOptions) -> Option<Expr> {
    match e {
        Expr::Neg(a) => match &**a {
            Expr::Const(v) => Some(Expr::constant(-v)),
            Expr::Neg(inner) => Some((**inner).clone()),
            _ => None,
        },
        Expr::Add(a, b) => match (&**a, &**b) {
            (Expr::Const(x), Expr::Const(y)) => Some(Expr::constant(x + y)),
            (_, z) if z.is_zero() => Some((**a).clone()),
            (z, _) if z.is_zero() => Some((**b).clone()),
            _ => None,
        },
        Expr::Sub(a, b) => match (&**a, &**b) {
            (Expr::Const(x), Expr::Const(y)) => Some(Expr::constant(x - y)),
            (_, z) if z.is_zero() => Some((**a).clone()),
            (z, _) if z.is_zero() => Some((**b).clone().neg()),
            (x, y) if x == y => Some(Expr::zero()),
            _ => None,
        },
        Expr::Mul(a, b) => match (&**a, &**b) {
            (Expr::Const(x), Expr::Const(y)) => Some(Expr::constant(x * y)),
            (z, _) | (_, z) if z.is_zero() => Some(Expr::zero()),
            (o, _) if o.is_one() => Some((**b).clone()),
            (_, o) if o.is_one() => Some((**a).clone()),
            _ => None,
        },
        Expr::Div(a, b) => match (&**a, &**b) {
            (Expr::Const(x), Expr::Const(y)) if y.abs() > super::eval::EPS_DOM => {
                Some(Expr::constant(x / y))
            }
            (z, d) if z.is_zero() && !d.is_zero() => Some(Expr::zero()),
            (_, o) if o.is_one() => Some((**a).clone()),
            (x, y) if x == y && (opts.assume_nonzero || matches!(x, Expr::Const(v) if *v != 0.0)) => {
                Some(Expr::one())
            }
            _ => None,
        },
        Expr::Pow(a, b) => match (&**a, &**b) {
            (Expr::Const(x), Expr::Const(y)) if !(*x < 0.0 && *y != y.trunc()) && !(*x == 0.0 && *y < 0.0) => {
                Some(Expr::constant(if *x < 0.0 { x.powi(*y as i32) } else { x.powf(*y) }))
            }
            (_, o) if o.is_one() => Some((**a).clone()),
            // a^0 -> 1 assumes a != 0 on the domain of interest
            (_, z) if z.is_zero() => Some(Expr::one()),
            _ => None,
        },
        Expr::Fn(func, a) => match &**a {
            Expr::Const(v) => {
                let folded = match func {
                    Func::Sin => Some(v.sin()),
                    Func::Cos => Some(v.cos()),
                    Func::Exp => Some(v.exp()),
                    Func::Sqrt if *v >= 0.0 => Some(v.sqrt()),
                    Func::Ln if *v > 0.0 => Some(v.ln()),
                    _ => None,
                };
                folded.map(Expr::constant)
            }
            _ => None,
        },
        _ => None,
    }
}

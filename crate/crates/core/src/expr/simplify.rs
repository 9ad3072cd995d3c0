use std::sync::Arc;

use super::{eval, Env, Expr};

/// Conservative, value-preserving rewrite.
///
/// Rules: constant folding, `x+0`, `x-0`, `x*1`, `x*0`, `x-x`, `(x+c)-c`,
/// `(x-c)+c` and double negation. One bottom-up pass reaches a fixed point
/// because every rule returns either a constant or an already-simplified
/// child.
pub fn simplify(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Neg(a) => {
            let a = simplify(a);
            match a {
                Expr::Const(c) => Expr::Const(-c),
                Expr::Neg(inner) => (*inner).clone(),
                other => Expr::Neg(Arc::new(other)),
            }
        }
        Expr::Call(f, a) => {
            let a = simplify(a);
            let node = Expr::Call(*f, Arc::new(a));
            fold(node)
        }
        Expr::Add(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            if b.is_zero() {
                return a;
            }
            if a.is_zero() {
                return b;
            }
            if let (Expr::Sub(x, c), Some(k)) = (&a, b.as_const()) {
                if c.as_const() == Some(k) {
                    return (**x).clone();
                }
            }
            fold(a + b)
        }
        Expr::Sub(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            if b.is_zero() {
                return a;
            }
            if a == b {
                return Expr::zero();
            }
            if a.is_zero() {
                return simplify(&-b);
            }
            if let (Expr::Add(x, c), Some(k)) = (&a, b.as_const()) {
                if c.as_const() == Some(k) {
                    return (**x).clone();
                }
            }
            fold(a - b)
        }
        Expr::Mul(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            if a.is_zero() || b.is_zero() {
                return Expr::zero();
            }
            if a.as_const() == Some(1.0) {
                return b;
            }
            if b.as_const() == Some(1.0) {
                return a;
            }
            fold(a * b)
        }
        Expr::Div(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            fold(a / b)
        }
        Expr::Pow(a, b) => {
            let (a, b) = (simplify(a), simplify(b));
            fold(a.pow(b))
        }
    }
}

// Folds a node whose children are all constants, unless evaluation fails or
// leaves the finite range.
fn fold(node: Expr) -> Expr {
    let all_const = match &node {
        Expr::Call(_, a) => a.as_const().is_some(),
        Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
            a.as_const().is_some() && b.as_const().is_some()
        }
        _ => false,
    };
    if all_const {
        if let Ok(v) = eval(&node, &Env::new()) {
            if v.is_finite() {
                return Expr::Const(v);
            }
        }
    }
    node
}

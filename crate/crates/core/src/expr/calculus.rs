use std::sync::Arc;

use super::{simplify, Expr, Func};

/// Ordered `(state, component)` pairs: a vector field on the state space.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    states: Vec<String>,
    comps: Vec<Expr>,
}

impl VectorField {
    /// Panics if the state names are not distinct or the lengths differ.
    pub fn new(states: Vec<String>, comps: Vec<Expr>) -> Self {
        assert_eq!(states.len(), comps.len(), "vector field dimension mismatch");
        for (i, s) in states.iter().enumerate() {
            assert!(!states[..i].contains(s), "duplicate state `{s}` in vector field");
        }
        VectorField { states, comps }
    }

    pub fn zero(states: Vec<String>) -> Self {
        let comps = vec![Expr::zero(); states.len()];
        VectorField { states, comps }
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Expr)> {
        self.states.iter().map(String::as_str).zip(&self.comps)
    }
}

fn arc(e: Expr) -> Arc<Expr> {
    Arc::new(e)
}

/// Unsimplified partial derivative; [`Expr::diff`] is the public entry point.
pub(super) fn derivative(e: &Expr, v: &str) -> Expr {
    if !e.depends_on(v) {
        return Expr::zero();
    }
    match e {
        Expr::Const(_) => Expr::zero(),
        Expr::Var(name) => Expr::Const(if &**name == v { 1.0 } else { 0.0 }),
        Expr::Neg(a) => -derivative(a, v),
        Expr::Add(a, b) => derivative(a, v) + derivative(b, v),
        Expr::Sub(a, b) => derivative(a, v) - derivative(b, v),
        Expr::Mul(a, b) => derivative(a, v) * (**b).clone() + (**a).clone() * derivative(b, v),
        Expr::Div(a, b) => {
            let num = derivative(a, v) * (**b).clone() - (**a).clone() * derivative(b, v);
            num / (**b).clone().pow(Expr::Const(2.0))
        }
        Expr::Pow(a, b) => {
            let (a, b) = ((**a).clone(), (**b).clone());
            if !b.depends_on(v) {
                // d(a^c) = c a^(c-1) da
                let power = match b.as_const() {
                    Some(c) if c == 2.0 => a.clone(),
                    Some(c) => a.clone().pow(Expr::Const(c - 1.0)),
                    None => a.clone().pow(b.clone() - Expr::one()),
                };
                b * power * derivative(&a, v)
            } else if !a.depends_on(v) {
                e.clone() * a.ln() * derivative(&b, v)
            } else {
                let inner = derivative(&b, v) * a.clone().ln() + b * derivative(&a, v) / a;
                e.clone() * inner
            }
        }
        Expr::Call(f, a) => {
            let da = derivative(a, v);
            let outer = match f {
                Func::Exp => e.clone(),
                Func::Log => Expr::one() / (**a).clone(),
                Func::Sin => Expr::call(Func::Cos, (**a).clone()),
                Func::Cos => -Expr::call(Func::Sin, (**a).clone()),
                Func::Sqrt => Expr::one() / (Expr::Const(2.0) * e.clone()),
            };
            Expr::Mul(arc(outer), arc(da))
        }
    }
}

/// One application of the directional derivative `sum_k f_k d/dx_k`.
pub fn lie_along(h: &Expr, f: &VectorField) -> Expr {
    let terms = f.iter().filter_map(|(x, fk)| {
        let d = h.diff(x);
        if d.is_zero() || fk.is_zero() {
            None
        } else {
            Some(fk.clone() * d)
        }
    });
    simplify(&Expr::sum(terms))
}

/// k-fold Lie derivative `L_f^k h`, simplified after each application.
pub fn lie(h: &Expr, f: &VectorField, k: usize) -> Expr {
    let mut g = simplify(h);
    for _ in 0..k {
        g = lie_along(&g, f);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{eval, parse, Env, Symbols};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn syms() -> Symbols {
        ["x", "x1", "x2", "theta", "E1"].into_iter().collect()
    }

    fn p(t: &str) -> Expr {
        parse(t, &syms()).unwrap()
    }

    fn rotation() -> VectorField {
        VectorField::new(vec!["x1".into(), "x2".into()], vec![p("x2"), p("-x1")])
    }

    #[test]
    fn simple_derivatives() {
        assert_eq!(p("x^2").diff("x"), p("2*x"));
        assert!(p("x1*x2").diff("x").is_zero());
        let d = p("exp(-E1/theta)").diff("theta");
        let expected = p("(E1/theta^2)*exp(-E1/theta)");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let env = Env::from_pairs([("theta", rng.random_range(0.5..2.0)), ("E1", rng.random_range(0.5..2.0))]);
            let (a, b) = (eval(&d, &env).unwrap(), eval(&expected, &env).unwrap());
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn rotation_conserves_radius() {
        let l = lie(&p("x1^2 + x2^2"), &rotation(), 1);
        assert!(crate::expr::equivalent(&l, &Expr::zero(), &["x1", "x2"], &Env::new(), 50, 1e-9));
    }

    #[test]
    fn second_lie_derivative_of_coordinate() {
        let l2 = lie(&p("x1"), &rotation(), 2);
        let env = Env::from_pairs([("x1", 0.3), ("x2", -1.7)]);
        assert_eq!(eval(&l2, &env).unwrap(), -0.3);
        assert_eq!(lie(&p("x1"), &rotation(), 0), p("x1"));
    }

    #[test]
    #[should_panic(expected = "duplicate state")]
    fn duplicate_states_rejected() {
        VectorField::new(vec!["x".into(), "x".into()], vec![p("x"), p("x")]);
    }
}

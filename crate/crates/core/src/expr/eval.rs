use std::collections::HashMap;

use super::{Expr, Func};

/// Symbol bindings for point evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Env(HashMap<String, f64>);

impl Env {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<K: Into<String>, I: IntoIterator<Item = (K, f64)>>(pairs: I) -> Self {
        Env(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn extend(&mut self, other: &Env) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), *v);
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("domain violation in `{expr}`: {reason}")]
    Domain { expr: String, reason: String },
}

fn domain(expr: &dyn std::fmt::Display, reason: impl Into<String>) -> EvalError {
    EvalError::Domain {
        expr: expr.to_string(),
        reason: reason.into(),
    }
}

fn apply_func(f: Func, x: f64) -> Result<f64, String> {
    let y = match f {
        Func::Exp => x.exp(),
        Func::Log => {
            if x <= 0.0 {
                return Err(format!("log argument {x} <= 0"));
            }
            x.ln()
        }
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Sqrt => {
            if x < 0.0 {
                return Err(format!("sqrt argument {x} < 0"));
            }
            x.sqrt()
        }
    };
    if !y.is_finite() {
        return Err(format!("{}({x}) overflows", f.name()));
    }
    Ok(y)
}

fn apply_div(a: f64, b: f64) -> Result<f64, String> {
    if b == 0.0 {
        return Err("division by zero".into());
    }
    let y = a / b;
    if !y.is_finite() {
        return Err(format!("{a} / {b} overflows"));
    }
    Ok(y)
}

fn apply_pow(a: f64, b: f64) -> Result<f64, String> {
    if a < 0.0 && b.fract() != 0.0 {
        return Err(format!("negative base {a} with non-integer exponent {b}"));
    }
    if a == 0.0 && b < 0.0 {
        return Err("zero base with negative exponent".into());
    }
    let y = if b == 2.0 { a * a } else { a.powf(b) };
    if !y.is_finite() {
        return Err(format!("{a} ^ {b} overflows"));
    }
    Ok(y)
}

/// Evaluates `e` with every variable looked up in `env`.
pub fn eval(e: &Expr, env: &Env) -> Result<f64, EvalError> {
    Ok(match e {
        Expr::Const(c) => *c,
        Expr::Var(v) => env.get(v).ok_or_else(|| EvalError::Unbound(v.to_string()))?,
        Expr::Neg(a) => -eval(a, env)?,
        Expr::Add(a, b) => eval(a, env)? + eval(b, env)?,
        Expr::Sub(a, b) => eval(a, env)? - eval(b, env)?,
        Expr::Mul(a, b) => eval(a, env)? * eval(b, env)?,
        Expr::Div(a, b) => apply_div(eval(a, env)?, eval(b, env)?).map_err(|r| domain(e, r))?,
        Expr::Pow(a, b) => apply_pow(eval(a, env)?, eval(b, env)?).map_err(|r| domain(e, r))?,
        Expr::Call(f, a) => apply_func(*f, eval(a, env)?).map_err(|r| domain(e, r))?,
    })
}

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Slot(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div(usize),
    Pow(usize),
    Square,
    Call(Func, usize),
}

/// Postfix program over indexed slots, for evaluating the same expression
/// at many points.
///
/// Variables named in `slots` read from the value slice by position;
/// variables bound in the constants environment are folded in at compile
/// time.
#[derive(Clone, Debug)]
pub struct Compiled {
    ops: Vec<Op>,
    // subexpressions reported by domain errors
    sources: Vec<String>,
    depth: usize,
}

impl Compiled {
    pub fn new<S: AsRef<str>>(e: &Expr, slots: &[S], consts: &Env) -> Result<Compiled, EvalError> {
        let mut c = Compiled {
            ops: Vec::with_capacity(e.size()),
            sources: Vec::new(),
            depth: 0,
        };
        let mut depth = 0usize;
        c.emit(e, slots, consts, &mut depth)?;
        Ok(c)
    }

    fn push(&mut self, op: Op, depth: &mut usize, delta: isize) {
        self.ops.push(op);
        *depth = (*depth as isize + delta) as usize;
        self.depth = self.depth.max(*depth);
    }

    fn emit<S: AsRef<str>>(
        &mut self,
        e: &Expr,
        slots: &[S],
        consts: &Env,
        depth: &mut usize,
    ) -> Result<(), EvalError> {
        match e {
            Expr::Const(v) => self.push(Op::Const(*v), depth, 1),
            Expr::Var(name) => {
                if let Some(i) = slots.iter().position(|s| s.as_ref() == &**name) {
                    self.push(Op::Slot(i), depth, 1);
                } else if let Some(v) = consts.get(name) {
                    self.push(Op::Const(v), depth, 1);
                } else {
                    return Err(EvalError::Unbound(name.to_string()));
                }
            }
            Expr::Neg(a) => {
                self.emit(a, slots, consts, depth)?;
                self.push(Op::Neg, depth, 0);
            }
            Expr::Call(f, a) => {
                self.emit(a, slots, consts, depth)?;
                let src = self.source(e);
                self.push(Op::Call(*f, src), depth, 0);
            }
            Expr::Pow(a, b) if b.as_const() == Some(2.0) => {
                self.emit(a, slots, consts, depth)?;
                self.push(Op::Square, depth, 0);
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                self.emit(a, slots, consts, depth)?;
                self.emit(b, slots, consts, depth)?;
                let op = match e {
                    Expr::Add(..) => Op::Add,
                    Expr::Sub(..) => Op::Sub,
                    Expr::Mul(..) => Op::Mul,
                    Expr::Div(..) => Op::Div(self.source(e)),
                    _ => Op::Pow(self.source(e)),
                };
                self.push(op, depth, -1);
            }
        }
        Ok(())
    }

    fn source(&mut self, e: &Expr) -> usize {
        self.sources.push(e.to_string());
        self.sources.len() - 1
    }

    /// Evaluates at `values`, using `stack` as scratch space.
    pub fn eval_with(&self, values: &[f64], stack: &mut Vec<f64>) -> Result<f64, EvalError> {
        stack.clear();
        stack.reserve(self.depth);
        for op in &self.ops {
            match *op {
                Op::Const(c) => stack.push(c),
                Op::Slot(i) => stack.push(values[i]),
                Op::Neg => {
                    let a = stack.last_mut().expect("stack underflow");
                    *a = -*a;
                }
                Op::Square => {
                    let a = stack.last_mut().expect("stack underflow");
                    *a *= *a;
                    if !a.is_finite() {
                        return Err(EvalError::Domain {
                            expr: "square".into(),
                            reason: "overflow".into(),
                        });
                    }
                }
                Op::Call(f, src) => {
                    let a = stack.last_mut().expect("stack underflow");
                    *a = apply_func(f, *a).map_err(|r| self.err(src, r))?;
                }
                Op::Add | Op::Sub | Op::Mul | Op::Div(_) | Op::Pow(_) => {
                    let b = stack.pop().expect("stack underflow");
                    let a = stack.last_mut().expect("stack underflow");
                    *a = match *op {
                        Op::Add => *a + b,
                        Op::Sub => *a - b,
                        Op::Mul => *a * b,
                        Op::Div(src) => apply_div(*a, b).map_err(|r| self.err(src, r))?,
                        Op::Pow(src) => apply_pow(*a, b).map_err(|r| self.err(src, r))?,
                        _ => unreachable!(),
                    };
                }
            }
        }
        Ok(stack.pop().expect("empty program"))
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64, EvalError> {
        let mut stack = Vec::new();
        self.eval_with(values, &mut stack)
    }

    fn err(&self, src: usize, reason: String) -> EvalError {
        EvalError::Domain {
            expr: self.sources[src].clone(),
            reason,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Symbols};

    fn p(text: &str) -> Expr {
        let s: Symbols = ["x", "y"].into_iter().collect();
        parse(text, &s).unwrap()
    }

    #[test]
    fn basic_values() {
        let env = Env::from_pairs([("x", 3.0)]);
        assert_eq!(eval(&p("x^2"), &env).unwrap(), 9.0);
        assert_eq!(eval(&p("exp(0)"), &Env::new()).unwrap(), 1.0);
    }

    #[test]
    fn domain_violations() {
        let env = Env::from_pairs([("x", 0.0)]);
        match eval(&p("1/x"), &env) {
            Err(EvalError::Domain { expr, .. }) => assert_eq!(expr, "(1 / x)"),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(matches!(eval(&p("log(x)"), &env), Err(EvalError::Domain { .. })));
        let env = Env::from_pairs([("x", -1.0)]);
        assert!(matches!(eval(&p("sqrt(x)"), &env), Err(EvalError::Domain { .. })));
        assert!(matches!(eval(&p("x^0.5"), &env), Err(EvalError::Domain { .. })));
        assert_eq!(eval(&p("x^3"), &env).unwrap(), -1.0);
    }

    #[test]
    fn unbound_symbol() {
        assert_eq!(eval(&p("x + y"), &Env::from_pairs([("x", 1.0)])), Err(EvalError::Unbound("y".into())));
    }

    #[test]
    fn compiled_matches_tree_walk() {
        let e = p("sqrt(x*x + 1) / (2 + y)^2 - exp(-x/y) + sin(x)*cos(y) - log(y)");
        let c = Compiled::new(&e, &["y"], &Env::from_pairs([("x", 0.7)])).unwrap();
        for y in [0.3, 1.0, 2.5] {
            let env = Env::from_pairs([("x", 0.7), ("y", y)]);
            assert_eq!(c.eval(&[y]).unwrap(), eval(&e, &env).unwrap());
        }
        assert!(matches!(c.eval(&[0.0]), Err(EvalError::Domain { .. })));
        assert!(Compiled::new(&e, &["x"], &Env::new()).is_err());
    }
}

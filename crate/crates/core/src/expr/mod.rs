//! Symbolic scalar expressions.
//!
//! Every scalar field the toolkit manipulates (dynamics, outputs, the
//! estimated functional, disturbance columns, observer maps) is an [`Expr`].
//! Trees are immutable and share subtrees through `Arc`, so cloning is cheap
//! and values can be handed across threads.

mod calculus;
mod eval;
mod parse;
mod simplify;

use std::collections::BTreeSet;
use std::fmt;
use std::ops;
use std::sync::Arc;

pub use calculus::{lie, lie_along, VectorField};
pub use eval::{eval, Compiled, Env, EvalError};
pub use parse::{parse, ParseError, ParseErrorKind, Symbols};
pub use simplify::simplify;

/// Elementary functions available in the expression grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Arc<str>),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(Arc::from(name))
    }

    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        Expr::Pow(Arc::new(self), Arc::new(exponent))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        Expr::Call(func, Arc::new(arg))
    }

    pub fn exp(self) -> Expr {
        Expr::call(Func::Exp, self)
    }

    pub fn ln(self) -> Expr {
        Expr::call(Func::Log, self)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// Names of every variable occurring in the tree.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.to_string());
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => &**v == name,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(name),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on(name) || b.depends_on(name),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Neg(a) | Expr::Call(_, a) => 1 + a.size(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Replaces variables by expressions. Variables without a mapping are kept.
    pub fn substitute<F>(&self, map: &F) -> Expr
    where
        F: Fn(&str) -> Option<Expr>,
    {
        let bin = |a: &Arc<Expr>, b: &Arc<Expr>| (Arc::new(a.substitute(map)), Arc::new(b.substitute(map)));
        match self {
            Expr::Const(_) => self.clone(),
            Expr::Var(v) => map(v).unwrap_or_else(|| self.clone()),
            Expr::Neg(a) => Expr::Neg(Arc::new(a.substitute(map))),
            Expr::Call(f, a) => Expr::Call(*f, Arc::new(a.substitute(map))),
            Expr::Add(a, b) => {
                let (a, b) = bin(a, b);
                Expr::Add(a, b)
            }
            Expr::Sub(a, b) => {
                let (a, b) = bin(a, b);
                Expr::Sub(a, b)
            }
            Expr::Mul(a, b) => {
                let (a, b) = bin(a, b);
                Expr::Mul(a, b)
            }
            Expr::Div(a, b) => {
                let (a, b) = bin(a, b);
                Expr::Div(a, b)
            }
            Expr::Pow(a, b) => {
                let (a, b) = bin(a, b);
                Expr::Pow(a, b)
            }
        }
    }

    /// Replaces every variable bound in `env` by its value.
    pub fn bind(&self, env: &Env) -> Expr {
        self.substitute(&|name| env.get(name).map(Expr::Const))
    }

    /// Symbolic partial derivative, simplified.
    pub fn diff(&self, var: &str) -> Expr {
        simplify(&calculus::derivative(self, var))
    }

    /// Linear combination `sum_i coeffs[i] * terms[i]`, skipping zero weights.
    pub fn linear_combination(coeffs: &[f64], terms: &[Expr]) -> Expr {
        let mut acc: Option<Expr> = None;
        for (c, t) in coeffs.iter().zip(terms) {
            if *c == 0.0 {
                continue;
            }
            let term = if *c == 1.0 { t.clone() } else { Expr::Const(*c) * t.clone() };
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
        acc.unwrap_or_else(Expr::zero)
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms
            .into_iter()
            .reduce(|a, b| a + b)
            .unwrap_or_else(Expr::zero)
    }
}

/// Sampled numeric equality: `a` and `b` agree to `rel_tol` (relative to
/// `1 + |b|`) at `samples` seeded points with each of `vars` drawn from
/// `[0.5, 2]` and everything else taken from `base`. Points where either
/// side fails to evaluate count as disagreement.
pub fn equivalent(a: &Expr, b: &Expr, vars: &[&str], base: &Env, samples: usize, rel_tol: f64) -> bool {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    let mut env = base.clone();
    (0..samples).all(|_| {
        for v in vars {
            env.set(*v, rng.random_range(0.5..2.0));
        }
        match (eval(a, &env), eval(b, &env)) {
            (Ok(x), Ok(y)) => (x - y).abs() <= rel_tol * (1.0 + y.abs()),
            _ => false,
        }
    })
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Arc::new(self), Arc::new(rhs))
            }
        }

        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$variant(Arc::new(self.clone()), Arc::new(rhs.clone()))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Arc::new(self))
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::Const(c)
    }
}

fn fmt_const(c: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let a = c.abs();
    let body = if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{:e}", a)
    } else {
        format!("{}", a)
    };
    if c.is_sign_negative() && c != 0.0 {
        write!(f, "(-{body})")
    } else {
        f.write_str(&body)
    }
}

impl Expr {
    fn fmt_node(&self, f: &mut fmt::Formatter<'_>, bare: bool) -> fmt::Result {
        let (op, a, b) = match self {
            Expr::Const(c) => return fmt_const(*c, f),
            Expr::Var(v) => return f.write_str(v),
            Expr::Neg(a) => {
                // `(-(2))` keeps a negated constant distinct from `Const(-2)`.
                if let Expr::Const(c) = **a {
                    f.write_str("(-(")?;
                    fmt_const(c, f)?;
                    return f.write_str("))");
                }
                f.write_str("(-")?;
                a.fmt_node(f, false)?;
                return f.write_str(")");
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_node(f, true)?;
                return f.write_str(")");
            }
            Expr::Add(a, b) => ("+", a, b),
            Expr::Sub(a, b) => ("-", a, b),
            Expr::Mul(a, b) => ("*", a, b),
            Expr::Div(a, b) => ("/", a, b),
            Expr::Pow(a, b) => ("^", a, b),
        };
        if !bare {
            f.write_str("(")?;
        }
        a.fmt_node(f, false)?;
        write!(f, " {op} ")?;
        b.fmt_node(f, false)?;
        if !bare {
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Fully parenthesized canonical text; reparses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_node(f, false)
    }
}

mod common;

use ddfo::expr::{eval, lie, parse, simplify, Env, Expr, Func, Symbols, VectorField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARS: [&str; 3] = ["x", "y", "w"];

fn syms() -> Symbols {
    VARS.into_iter().collect()
}

fn p(text: &str) -> Expr {
    parse(text, &syms()).unwrap()
}

fn at(e: &Expr, x: &[f64]) -> Result<f64, ddfo::expr::EvalError> {
    eval(e, &Env::from_pairs(VARS.iter().copied().zip(x.iter().copied())))
}

fn expr_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        prop::sample::select(VARS.to_vec()).prop_map(Expr::var),
        (-3i32..=3).prop_map(|k| Expr::constant(k as f64 * 0.5)),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
            (inner.clone(), 1i32..=3).prop_map(|(a, k)| a.pow(Expr::constant(k as f64))),
            inner.clone().prop_map(|a| -a),
            (inner, prop::sample::select(vec![Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Sqrt]))
                .prop_map(|(a, f)| Expr::call(f, a)),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5f64..2.0, VARS.len())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn print_parse_round_trip(e in expr_tree()) {
        let back = parse(&e.to_string(), &syms()).unwrap();
        prop_assert_eq!(&back, &e);
    }

    #[test]
    fn simplify_preserves_value_and_is_idempotent(e in expr_tree(), x in point()) {
        let s = simplify(&e);
        prop_assert_eq!(simplify(&s), s.clone());
        if let (Ok(a), Ok(b)) = (at(&e, &x), at(&s, &x)) {
            if a.is_finite() && b.is_finite() {
                prop_assert!(close(a, b, 1e-12), "{} -> {}: {} vs {}", e, s, a, b);
            }
        }
    }

    #[test]
    fn derivative_matches_central_difference(e in expr_tree(), x in point(), k in 0usize..3) {
        let d = e.diff(VARS[k]);
        let h = 1e-6;
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let vals = (at(&d, &x), at(&e, &xp), at(&e, &xm));
        if let (Ok(dv), Ok(fp), Ok(fm)) = vals {
            let fd = (fp - fm) / (2.0 * h);
            // Only smooth, moderately scaled neighbourhoods say anything
            // about the symbolic derivative.
            prop_assume!(dv.is_finite() && fd.is_finite() && dv.abs() < 1e3 && fp.abs() < 1e3);
            let dd = e.diff(VARS[k]).diff(VARS[k]);
            let curv = at(&dd.diff(VARS[k]), &x).unwrap_or(f64::INFINITY);
            prop_assume!(curv.is_finite() && curv.abs() < 1e4);
            prop_assert!((dv - fd).abs() <= 1e-6 * (1.0 + dv.abs()), "d/d{} {} = {}: {} vs fd {}", VARS[k], e, d, dv, fd);
        }
    }

    #[test]
    fn lie_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, x in point()) {
        let f = field();
        let (h1, h2) = (p("x*y + sin(w)"), p("exp(-x)*w"));
        let combo = Expr::constant(a) * h1.clone() + Expr::constant(b) * h2.clone();
        let lhs = at(&lie(&combo, &f, 1), &x).unwrap();
        let rhs = a * at(&lie(&h1, &f, 1), &x).unwrap() + b * at(&lie(&h2, &f, 1), &x).unwrap();
        prop_assert!(close(lhs, rhs, 1e-10));
    }

    #[test]
    fn constant_pull_out(beta in prop::collection::vec(-2.0f64..2.0, 2), x in point(), k in 1usize..4) {
        let f = field();
        let hs = [p("y"), p("w*x")];
        let combo = Expr::linear_combination(&beta, &hs);
        let lhs = at(&lie(&combo, &f, k), &x).unwrap();
        let rhs: f64 = beta.iter().zip(&hs).map(|(b, h)| b * at(&lie(h, &f, k), &x).unwrap()).sum();
        prop_assert!(close(lhs, rhs, 1e-10));
    }

    #[test]
    fn lie_composes(x in point(), k in 1usize..4) {
        let f = field();
        let h = p("x^2*w - cos(y)");
        let direct = at(&lie(&h, &f, k), &x).unwrap();
        let stepped = at(&lie(&lie(&h, &f, k - 1), &f, 1), &x).unwrap();
        prop_assert!(close(direct, stepped, 1e-10));
    }
}

fn field() -> VectorField {
    VectorField::new(
        VARS.iter().map(|s| s.to_string()).collect(),
        vec![p("-x + y*w"), p("sin(x) - y"), p("1/(1 + x^2)")],
    )
}

#[test]
fn operator_library_against_finite_differences() {
    let library = [
        "x + y", "x - y", "x*y", "x/y", "x^3", "y^x", "-x*w", "exp(-w/x)", "log(x*y)", "sin(x*w)", "cos(y^2)", "sqrt(x + y)",
        "x^2*exp(-1/w)/(1 + y*exp(-2/w))",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for text in library {
        let e = p(text);
        for v in 0..VARS.len() {
            let d = e.diff(VARS[v]);
            for _ in 0..100 {
                let x: Vec<f64> = (0..VARS.len()).map(|_| rng.random_range(0.5..2.0)).collect();
                let h = 1e-6;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[v] += h;
                xm[v] -= h;
                let fd = (at(&e, &xp).unwrap() - at(&e, &xm).unwrap()) / (2.0 * h);
                let dv = at(&d, &x).unwrap();
                assert!((dv - fd).abs() <= 1e-6 * (1.0 + dv.abs()), "d/d{} {text}: {dv} vs {fd}", VARS[v]);
            }
        }
    }
}

#[test]
fn arrhenius_chain_rule() {
    let s: Symbols = ["E1", "theta"].into_iter().collect();
    let e = parse("exp(-E1/theta)", &s).unwrap();
    let expected = parse("(E1/theta^2)*exp(-E1/theta)", &s).unwrap();
    let d = e.diff("theta");
    for (e1, th) in [(3952.0, 300.0), (1.0, 0.7), (12989.0, 386.2)] {
        let env = Env::from_pairs([("E1", e1), ("theta", th)]);
        let (a, b) = (eval(&d, &env).unwrap(), eval(&expected, &env).unwrap());
        assert!(close(a, b, 1e-13), "{a} vs {b}");
    }
}

/// Directional derivative of `theta'` along the deviation reactor field,
/// against a finite-difference step along the field.
#[test]
fn lie_on_deviation_reactor() {
    let m = common::load("cstr_deviation.model");
    let s = m.extract_structure();
    let l = lie(&Expr::var("theta'"), &s.drift, 1);
    let ld = lie(&l, &s.drift, 1);
    let env_at = |x: &[f64]| {
        let mut env = s.params.clone();
        for (k, v) in m.states.iter().zip(x) {
            env.set(k.clone(), *v);
        }
        env
    };
    let f = |x: &[f64]| -> Vec<f64> {
        s.drift.components().iter().map(|c| eval(c, &env_at(x)).unwrap()).collect()
    };
    let pts = m.random_points(&m.states, 20, 3);
    for x in pts {
        let fx = f(&x);
        // L_F theta' is the third component itself.
        assert!(close(eval(&l, &env_at(&x)).unwrap(), fx[2], 1e-12));
        // L_F^2 theta' = d/dt F_3 along the flow.
        let h = 1e-4;
        let xp: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a - h * b).collect();
        let fd = (f(&xp)[2] - f(&xm)[2]) / (2.0 * h);
        let exact = eval(&ld, &env_at(&x)).unwrap();
        assert!((exact - fd).abs() <= 1e-6 * (1.0 + exact.abs()), "{exact} vs {fd}");
    }
}

#[test]
fn grammar_examples() {
    let e = p("x + 2*y");
    assert_eq!(e, Expr::var("x") + Expr::constant(2.0) * Expr::var("y"));
    assert!(parse("x + * 2", &syms()).is_err());
    assert_eq!(at(&p("x^2"), &[3.0, 0.0, 0.0]).unwrap(), 9.0);
    assert_eq!(at(&p("exp(0)"), &[0.0; 3]).unwrap(), 1.0);
    assert!(at(&p("1/x"), &[0.0; 3]).is_err());
    assert_eq!(p("2^3^2").to_string(), p("2^(3^2)").to_string());
}

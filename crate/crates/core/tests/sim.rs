mod common;

use common::cstr::{F, V};
use ddfo::design::{
    alphas_from_eigenvalues, construct_observer, design_end_to_end, DesignSpec, ObserverRealization, Problem, Target,
};
use ddfo::model::PlantModel;
use ddfo::sim::{
    integrate_rk4, predict_error, simulate, simulate_many, transformation_error, ObserverInit, Scenario, Signal,
    Trajectory,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const DECOUPLED: Target = Target::Functional { decouple: true };

fn reactor_observer() -> (PlantModel, ObserverRealization) {
    let m = common::load("cstr_deviation.model");
    let d = design_end_to_end(&m, &DECOUPLED, &DesignSpec::real(&[-F / V]), 1).unwrap();
    (m, d.observer)
}

fn quiet(sc: &Scenario) -> Scenario {
    let mut s = sc.clone();
    for sig in s.signals.values_mut() {
        *sig = Signal::zero();
    }
    s
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn rk4_order_on_logistic_growth() {
    // x' = x (1 - x), x(0) = 0.1, exact x = 1 / (1 + 9 e^-t).
    let exact = 1.0 / (1.0 + 9.0 * (-4.0f64).exp());
    let err = |h: f64| {
        let g = integrate_rk4(
            |_, x, dx| {
                dx[0] = x[0] * (1.0 - x[0]);
                Ok(())
            },
            &[0.1],
            4.0,
            h,
        )
        .unwrap();
        (g.x.last().unwrap()[0] - exact).abs()
    };
    let order = (err(0.1) / err(0.05)).log2();
    assert!(order >= 3.9, "observed order {order}");
}

#[test]
fn second_order_error_law_against_integration() {
    let m = common::load("toy_plain.model");
    let problem = Problem::new(&m, &Target::Functional { decouple: false }).unwrap();
    let spec = DesignSpec::real(&[-1.0, -2.0]);
    let alphas = alphas_from_eigenvalues(&spec.eigenvalues).unwrap();
    let obs = construct_observer(&problem, &alphas, &[vec![0.0], vec![0.0], vec![0.0]], &spec.eigenvalues).unwrap();
    assert_eq!(obs.a, DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 1.0, -3.0]));
    let g = integrate_rk4(
        |_, e, de| {
            de[0] = -2.0 * e[1];
            de[1] = e[0] - 3.0 * e[1];
            Ok(())
        },
        &[1.0, 0.0],
        6.0,
        1e-3,
    )
    .unwrap();
    let predicted = predict_error(&obs, &[1.0, 0.0], &g.t).unwrap();
    let integrated: Vec<f64> = g.x.iter().map(|e| e[1]).collect();
    assert!(max_abs_diff(&predicted, &integrated) <= 1e-9);
    assert!(predict_error(&obs, &[1.0], &g.t).is_err());
}

#[test]
fn equilibrium_stays_put() {
    let (m, obs) = reactor_observer();
    let sc = Scenario {
        t_end: 50.0,
        ..Scenario::default()
    };
    let tr = simulate(&m, &obs, &sc).unwrap();
    assert!(tr.x.iter().flatten().all(|v| v.abs() < 1e-9));
    assert!(tr.err.iter().all(|e| e.abs() < 1e-12));
    assert!(tr.zhat.iter().all(|e| e.abs() < 1e-9));
}

#[test]
fn startup_run_is_blind_to_disturbances() {
    let (m, obs) = reactor_observer();
    let sc = common::scenario("fig1.scenario");
    let on = simulate(&m, &obs, &sc).unwrap();
    let off = simulate(&m, &obs, &quiet(&sc)).unwrap();
    assert_eq!(on.t, off.t);
    assert!(max_abs_diff(&on.err, &off.err) <= 1e-8);
    let state_gap = on.x.iter().zip(&off.x).map(|(a, b)| max_abs_diff(a, b)).fold(0.0, f64::max);
    assert!(state_gap > 1e-4, "{state_gap}");

    // Error law: e0 exp(-F/V t).
    let law: Vec<f64> = on.t.iter().map(|t| (-F / V * t).exp()).collect();
    assert!(max_abs_diff(&on.err, &law) <= 1e-7);
    assert!(on.err.windows(2).all(|w| w[1].abs() < w[0].abs()));
    assert!((on.err[0] - 1.0).abs() < 1e-12);
}

#[test]
fn transformation_tracks_homogeneous_solution() {
    let m = common::load("toy_decoupled.model");
    let d = design_end_to_end(&m, &DECOUPLED, &DesignSpec::real(&[-1.0, -3.0]), 2).unwrap();
    let obs = d.observer;
    let mut sc = Scenario::parse(
        "[scenario]\nt_end = 8\nh = 0.01\n[init]\nx1 = 0.5\nx2 = -1\n[signals]\nw = sine(0.7, 2.0)\n",
    )
    .unwrap();
    sc.observer = ObserverInit::Error(vec![1.0, -0.5]);
    let tr = simulate(&m, &obs, &sc).unwrap();
    let e0 = DVector::from_column_slice(&[1.0, -0.5]);
    for (t, e) in tr.t.iter().zip(transformation_error(&obs, &tr, &sc).unwrap()) {
        let want = (&obs.a * *t).exp() * &e0;
        assert!((e - want).amax() <= 1e-7, "t = {t}");
    }
    let predicted = predict_error(&obs, e0.as_slice(), &tr.t).unwrap();
    assert!(max_abs_diff(&tr.err, &predicted) <= 1e-7);
}

#[test]
fn one_integration_serves_several_observers() {
    let (m, obs) = reactor_observer();
    let sc = Scenario {
        t_end: 30.0,
        ..common::scenario("fig1.scenario")
    };
    let single = simulate(&m, &obs, &sc).unwrap();
    let both = simulate_many(&m, &[&obs, &obs], &sc).unwrap();
    assert_eq!(both.len(), 2);
    assert_eq!(both[0], single);
    assert_eq!(both[1], single);
}

#[test]
fn csv_file_shape_and_round_trip() {
    let (m, obs) = reactor_observer();
    let sc = Scenario {
        t_end: 0.5,
        h: Some(0.25),
        ..common::scenario("fig1.scenario")
    };
    let tr = simulate(&m, &obs, &sc).unwrap();
    assert_eq!(tr.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    std::fs::write(&path, tr.to_csv()).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.ends_with('\n'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "t,cA',cB',theta',thetaJ',y1,y2,z,zhat,err,xi1");
    assert_eq!(Trajectory::from_csv(&text, m.n()).unwrap(), tr);
}

#[test]
fn startup_csv_error_column_decays() {
    let (m, obs) = reactor_observer();
    let tr = simulate(&m, &obs, &common::scenario("fig1.scenario")).unwrap();
    let text = tr.decimate(32).to_csv();
    let mut rows = text.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "err").unwrap();
    let err: Vec<f64> = rows.map(|r| r.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert_eq!(err.len(), 401);
    assert!(err.windows(2).all(|w| w[1].abs() < w[0].abs()));
    assert!((err[0] - 1.0).abs() < 1e-12);
}

#[test]
fn signal_profiles() {
    let ramp = Signal::parse("ramp(2000, 0.001)").unwrap();
    assert_eq!(ramp.eval(1999.0), 0.0);
    assert!((ramp.eval(3000.0) - 1.0).abs() < 1e-12);
    let fig3 = &common::scenario("fig3.scenario");
    assert!((fig3.signal("f1").eval(2000.0) - 1.0).abs() < 1e-12);
    assert!((fig3.signal("f1").eval(3000.0) - 2.0).abs() < 1e-12);
    let step = fig3.signal("f2");
    assert_eq!((step.eval(4999.0), step.eval(5000.0)), (0.0, 10.0));
    assert_eq!(Signal::parse("constant(3)").unwrap().eval(123.0), 3.0);
    assert_eq!(fig3.signal("unbound").eval(7.0), 0.0);
}

#[test]
fn scenario_files_round_trip() {
    for name in ["fig1.scenario", "fig3.scenario"] {
        let sc = common::scenario(name);
        assert_eq!(Scenario::parse(&sc.to_text()).unwrap(), sc, "{name}");
    }
    assert!(Scenario::parse("[scenario]\nt_end = -1\n").is_err());
    assert!(Scenario::parse("[signals]\nw = wobble(1)\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Whatever the disturbance, a decoupled observer's error is the free
    /// response of its own dynamics.
    #[test]
    fn error_law_under_arbitrary_disturbance(
        amp in -2.0f64..2.0, omega in 0.1f64..3.0, level in -1.0f64..1.0, e0 in -2.0f64..2.0,
    ) {
        let m = common::load("toy_decoupled.model");
        let obs = design_end_to_end(&m, &DECOUPLED, &DesignSpec::real(&[-1.0]), 1).unwrap().observer;
        let mut sc = Scenario { t_end: 5.0, h: Some(0.01), observer: ObserverInit::Error(vec![e0]), ..Scenario::default() };
        sc.init = vec![("x1".into(), 0.3), ("x2".into(), -0.2)];
        sc.signals.insert("w".into(), Signal::Sinusoid { amplitude: amp, omega, phase: level });
        let tr = simulate(&m, &obs, &sc).unwrap();
        let law = predict_error(&obs, &[e0], &tr.t).unwrap();
        prop_assert!(max_abs_diff(&tr.err, &law) <= 1e-9);
    }
}

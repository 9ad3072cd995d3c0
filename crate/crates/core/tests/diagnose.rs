mod common;

use std::sync::OnceLock;

use common::cstr::{F, V};
use ddfo::design::{design_end_to_end, DesignSpec, Family, ObserverDocument, Target};
use ddfo::diagnose::{
    design_bank, detect, events_report, run_bank, verify_member, with_exact_init, BankError, BankRun, DetectionPolicy,
    FaultBank, MemberSpec, MANIFEST,
};
use ddfo::model::{ExoKind, ExoSystem, PlantModel};
use ddfo::sim::{Scenario, Signal};
use proptest::prelude::*;

fn reactor_bank() -> (PlantModel, FaultBank) {
    let m = common::load("cstr_fault_deviation.model");
    let bank = design_bank(
        &m,
        &[MemberSpec::new("f1", ExoKind::Ramp, &[-F / V]), MemberSpec::new("f2", ExoKind::Step, &[-0.01])],
        1,
    )
    .unwrap();
    (m, bank)
}

/// The isolation run, shortened to just past the coolant step's settling.
fn isolation_run() -> &'static (FaultBank, BankRun) {
    static RUN: OnceLock<(FaultBank, BankRun)> = OnceLock::new();
    RUN.get_or_init(|| {
        let (m, bank) = reactor_bank();
        let sc = Scenario {
            t_end: 6000.0,
            ..common::scenario("fig3.scenario")
        };
        let run = run_bank(&bank, &m, &sc).unwrap();
        (bank, run)
    })
}

const TWO_STATE_FAULT: &str = "[states]\nx1 x2\n[dynamics]\nx1' = -x1 + x2\nx2' = -2*x2 + f\n[outputs]\ny1 = x1\ny2 = x2\n[faults]\nf\n";

#[test]
fn reactor_bank_structure() {
    let (_, bank) = reactor_bank();
    let names: Vec<&str> = bank.members.iter().map(|b| b.fault.as_str()).collect();
    assert_eq!(names, ["f1", "f2"]);
    assert_eq!(bank.members[0].kind, ExoKind::Ramp);
    assert_eq!(bank.members[1].kind, ExoKind::Step);
    for b in &bank.members {
        assert_eq!(b.observer.order, 1);
        assert!(b.report.passed(), "{}", b.fault);
        // The other fault is one of the decoupled channels.
        assert_eq!(b.report.family(Family::Decoupling).rows, 2);
    }
    assert_eq!(bank.members[0].observer.a[(0, 0)], -F / V);
    assert_eq!(bank.members[1].observer.a[(0, 0)], -0.01);
}

#[test]
fn single_fault_bank_is_a_plain_design() {
    let m = PlantModel::parse(TWO_STATE_FAULT).unwrap();
    let bank = design_bank(&m, &[MemberSpec::new("f", ExoKind::Step, &[-1.0])], 1).unwrap();
    assert_eq!(bank.members.len(), 1);
    let direct = design_end_to_end(
        &m,
        &Target::Fault {
            fault: "f".into(),
            exo: ExoSystem::new(ExoKind::Step),
        },
        &DesignSpec::real(&[-1.0]),
        1,
    )
    .unwrap();
    let member = &bank.members[0];
    assert_eq!(member.observer.betas, direct.observer.betas);
    assert_eq!(member.observer.t, direct.observer.t);
    assert_eq!(member.report, direct.report);
}

#[test]
fn unobservable_fault_fails_the_bank_by_name() {
    let m = PlantModel::parse(
        "[states]\nx1 x2\n[dynamics]\nx1' = -x1 + f1\nx2' = -x2 + f2\n[outputs]\ny1 = x1\n[faults]\nf1 f2\n",
    )
    .unwrap();
    let specs = [MemberSpec::new("f1", ExoKind::Step, &[-1.0]), MemberSpec::new("f2", ExoKind::Step, &[-1.0])];
    match design_bank(&m, &specs, 2) {
        Err(BankError::Member { fault, .. }) => assert_eq!(fault, "f2"),
        other => panic!("expected member failure, got {other:?}"),
    }
    assert!(matches!(design_bank(&m, &specs[..1], 1), Err(BankError::MissingFault(f)) if f == "f2"));
    let bogus = [MemberSpec::new("f9", ExoKind::Step, &[-1.0])];
    assert!(matches!(design_bank(&m, &bogus, 1), Err(BankError::UnknownFault(_))));
    let healthy = PlantModel::parse("[states]\nx\n[dynamics]\nx' = -x\n[outputs]\ny1 = x\n").unwrap();
    assert!(matches!(design_bank(&healthy, &[], 1), Err(BankError::NoFaults)));
}

#[test]
fn healthy_plant_gives_zero_estimates() {
    let (m, bank) = reactor_bank();
    let base = common::scenario("fig3.scenario");
    let mut sc = with_exact_init(&Scenario { t_end: 1500.0, ..base });
    sc.signals.remove("f1");
    sc.signals.remove("f2");
    let run = run_bank(&bank, &m, &sc).unwrap();
    for tr in &run.traces {
        let worst = tr.zhat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst <= 1e-9, "{worst}");
    }
    let policy = DetectionPolicy::new(&[("f1", 0.05), ("f2", 0.5)], 100.0);
    assert!(detect(&run.estimates(), &policy).is_empty());
}

#[test]
fn ramp_observer_follows_a_step() {
    let (m, bank) = reactor_bank();
    let mut sc = Scenario {
        t_end: 2800.0,
        ..common::scenario("fig3.scenario")
    };
    sc.signals.insert("f1".into(), Signal::Step { t0: 2000.0, amplitude: 1.5 });
    sc.signals.remove("f2");
    let run = run_bank(&bank, &m, &sc).unwrap();
    let tr = run.trace("f1").unwrap();
    let settle = 2000.0 + 7.0 * V / F;
    let worst = tr.t.iter().zip(&tr.zhat).filter(|(t, _)| **t >= settle).fold(0.0f64, |a, (_, v)| a.max((v - 1.5).abs()));
    assert!(worst <= 0.015, "{worst}");
}

#[test]
fn each_estimate_ignores_the_other_fault() {
    let (_, run) = isolation_run();
    let (f1, f2) = (run.trace("f1").unwrap(), run.trace("f2").unwrap());
    let before_step = f2.t.iter().zip(&f2.zhat).filter(|(t, _)| (2000.0..5000.0).contains(*t));
    assert!(before_step.fold(0.0f64, |a, (_, v)| a.max(v.abs())) <= 0.05);
    // f1's estimate is on its ramp well before f2 appears.
    let k = f1.t.iter().position(|t| *t >= 2500.0).unwrap();
    assert!((f1.zhat[k] - 1.5).abs() < 0.01, "{}", f1.zhat[k]);
    // After the coolant step the analyser estimate still follows its ramp.
    let tail = f1.t.iter().zip(&f1.zhat).filter(|(t, _)| **t >= 2000.0 + 7.0 * V / F);
    let worst = tail.fold(0.0f64, |a, (t, v)| {
        let truth = 0.001 * (t - 2000.0) + 1.0;
        a.max((v - truth).abs() / (1.0 + truth.abs()))
    });
    assert!(worst <= 0.01, "{worst}");
    let last = *f2.zhat.last().unwrap();
    assert!((last - 10.0).abs() < 0.1, "{last}");
}

#[test]
fn fixed_thresholds_order_the_events() {
    let (_, run) = isolation_run();
    let policy = DetectionPolicy::new(&[("f1", 0.05), ("f2", 0.5)], 100.0);
    let events = detect(&run.estimates(), &policy);
    assert_eq!(events.iter().map(|e| e.fault.as_str()).collect::<Vec<_>>(), ["f1", "f2"]);
    assert!((2000.0..=2600.0).contains(&events[0].time), "{}", events[0].time);
    assert!((5000.0..=5600.0).contains(&events[1].time), "{}", events[1].time);
    let tr = run.trace("f1").unwrap();
    assert_eq!(tr.t[events[0].index], events[0].time);

    let report = events_report(run, &events);
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "fault,detected,time,peak");
    assert!(lines[1].starts_with("f1,true,"));
    assert!(lines[2].starts_with("f2,true,"));
}

#[test]
fn members_verify_with_other_faults_as_disturbances() {
    let (m, bank) = reactor_bank();
    for b in &bank.members {
        let r = verify_member(&m, &b.observer, 200, 77, 1e-8).unwrap();
        assert!(r.passed(), "{}: {}", b.fault, r.max_residual());
        assert!(r.family(Family::Decoupling).max <= 1e-8);
        assert!(r.family(Family::Feedthrough).max <= 1e-12);
    }
}

#[test]
fn bank_directory_round_trip() {
    let (m, bank) = reactor_bank();
    let dir = tempfile::tempdir().unwrap();
    let manifest = bank.save(dir.path(), Some("cstr_fault_deviation.model")).unwrap();
    assert_eq!(manifest.observers.len(), 2);
    assert!(dir.path().join(MANIFEST).exists());
    let back = FaultBank::load(dir.path(), &m, 3, 1e-6).unwrap();
    for (a, b) in bank.members.iter().zip(&back.members) {
        assert_eq!(a.fault, b.fault);
        assert_eq!(a.kind, b.kind);
        assert_eq!(a.observer.betas, b.observer.betas);
        assert_eq!(a.observer.t, b.observer.t);
    }

    // A stored observer that no longer satisfies the conditions is refused.
    let path = dir.path().join(&manifest.observers[1].file);
    let mut doc = ObserverDocument::from_toml(&std::fs::read_to_string(&path).unwrap()).unwrap();
    doc.b[0][2] *= 1.5;
    std::fs::write(&path, doc.to_toml().unwrap()).unwrap();
    match FaultBank::load(dir.path(), &m, 3, 1e-6) {
        Err(BankError::Unverified { fault, .. }) => assert_eq!(fault, "f2"),
        other => panic!("expected verification failure, got {other:?}"),
    }
    let empty = tempfile::tempdir().unwrap();
    assert!(FaultBank::load(empty.path(), &m, 3, 1e-6).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    /// A step of any size is estimated to 1% after seven time constants.
    #[test]
    fn step_estimate_converges(a in -5.0f64..5.0, t0 in 0.5f64..3.0, lambda in -2.0f64..-0.5) {
        prop_assume!(a.abs() > 1e-3);
        let m = PlantModel::parse(TWO_STATE_FAULT).unwrap();
        let bank = design_bank(&m, &[MemberSpec::new("f", ExoKind::Step, &[lambda])], 1).unwrap();
        let settle = t0 + 7.0 / lambda.abs();
        let mut sc = Scenario { t_end: settle + 2.0, h: Some(0.005), ..Scenario::default() };
        sc.signals.insert("f".into(), Signal::Step { t0, amplitude: a });
        let run = run_bank(&bank, &m, &sc).unwrap();
        let tr = &run.traces[0];
        for (t, v) in tr.t.iter().zip(&tr.zhat) {
            if *t >= settle {
                prop_assert!((v - a).abs() <= 0.01 * a.abs(), "t {} fhat {} a {}", t, v, a);
            }
        }
    }
}

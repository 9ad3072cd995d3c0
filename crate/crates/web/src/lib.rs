//! Browser front end over the bundled reactor models.
//!
//! Each exported function returns a JSON document; the page in `www/` plots
//! the series it contains. The plain-Rust functions behind the exports are
//! public so they can be tested natively.

use ddfo::design::{design_end_to_end, DesignSpec, Target};
use ddfo::diagnose::{design_bank, detect, run_bank, DetectionPolicy, MemberSpec};
use ddfo::model::{ExoKind, PlantModel};
use ddfo::sim::{simulate, Scenario, Signal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const DEVIATION_MODEL: &str = include_str!("../../../data/cstr_deviation.model");
const FAULT_MODEL: &str = include_str!("../../../data/cstr_fault_deviation.model");
const STARTUP: &str = include_str!("../../../data/fig1.scenario");
const FAULTS: &str = include_str!("../../../data/fig3.scenario");

/// Browser runs use a coarser grid than the bundled scenarios; it stays
/// inside RK4's stability region for the jacket mode.
const WEB_STEP: f64 = 0.0625;
/// Points per plotted series.
const PLOT_POINTS: usize = 800;

#[derive(Debug, Serialize)]
pub struct DesignSummary {
    pub feasible: bool,
    pub order: usize,
    pub residual: f64,
    pub threshold: f64,
    pub betas: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub t: Vec<String>,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct StartupRun {
    pub t: Vec<f64>,
    pub err: Vec<f64>,
    /// Error trace of the same run with both disturbances removed.
    pub err_undisturbed: Vec<f64>,
    pub z: Vec<f64>,
    pub zhat: Vec<f64>,
    pub max_gap: f64,
}

#[derive(Debug, Serialize)]
pub struct Event {
    pub fault: String,
    pub time: f64,
}

#[derive(Debug, Serialize)]
pub struct BankRunSummary {
    pub t: Vec<f64>,
    pub f1: Vec<f64>,
    pub f1_hat: Vec<f64>,
    pub f2: Vec<f64>,
    pub f2_hat: Vec<f64>,
    pub events: Vec<Event>,
}

fn model(text: &str) -> Result<PlantModel, String> {
    PlantModel::parse(text).map_err(|e| e.to_string())
}

fn stride(len: usize) -> usize {
    len.div_ceil(PLOT_POINTS).max(1)
}

fn thin(v: &[f64], every: usize) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().step_by(every).copied().collect();
    if (v.len() - 1) % every != 0 {
        out.push(*v.last().unwrap());
    }
    out
}

/// Decoupled first-order observer for `cA' + cB'` with eigenvalue `lambda`.
pub fn design_reactor(lambda: f64) -> Result<DesignSummary, String> {
    let m = model(DEVIATION_MODEL)?;
    let target = Target::Functional { decouple: true };
    match design_end_to_end(&m, &target, &DesignSpec::real(&[lambda]), 1) {
        Ok(d) => Ok(DesignSummary {
            feasible: true,
            order: d.observer.order,
            residual: d.solution.verification_residual,
            threshold: d.solution.threshold,
            betas: d.solution.betas.clone(),
            a: d.observer.a.iter().copied().collect(),
            b: d.observer.b.iter().copied().collect(),
            d: d.observer.d.iter().copied().collect(),
            t: d.observer.t.iter().map(|e| e.to_string()).collect(),
            message: format!("feasible at order {}", d.observer.order),
        }),
        Err(ddfo::design::DesignError::Infeasible { attempts }) => {
            let last = attempts.last().ok_or("no attempt recorded")?;
            Ok(DesignSummary {
                feasible: false,
                order: last.order,
                residual: last.residual,
                threshold: last.threshold,
                betas: Vec::new(),
                a: Vec::new(),
                b: Vec::new(),
                d: Vec::new(),
                t: Vec::new(),
                message: format!("infeasible: residual {:.3e} above {:.3e}", last.residual, last.threshold),
            })
        }
        Err(e) => Err(e.to_string()),
    }
}

/// Start-up run with the given disturbance levels, next to the same run
/// without disturbances.
pub fn startup_run(lambda: f64, w1: f64, w2: f64, e0: f64, t_end: f64) -> Result<StartupRun, String> {
    let m = model(DEVIATION_MODEL)?;
    let obs = design_end_to_end(&m, &Target::Functional { decouple: true }, &DesignSpec::real(&[lambda]), 1)
        .map_err(|e| e.to_string())?
        .observer;
    let mut sc = Scenario::parse(STARTUP).map_err(|e| e.to_string())?;
    sc.t_end = t_end;
    sc.h = Some(WEB_STEP);
    sc.observer = ddfo::sim::ObserverInit::Error(vec![e0]);
    sc.signals.insert("w1".into(), Signal::Constant(w1));
    sc.signals.insert("w2".into(), Signal::Constant(w2));
    let on = simulate(&m, &obs, &sc).map_err(|e| e.to_string())?;
    sc.signals.insert("w1".into(), Signal::zero());
    sc.signals.insert("w2".into(), Signal::zero());
    let off = simulate(&m, &obs, &sc).map_err(|e| e.to_string())?;
    let max_gap = on.err.iter().zip(&off.err).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    let k = stride(on.len());
    Ok(StartupRun {
        t: thin(&on.t, k),
        err: thin(&on.err, k),
        err_undisturbed: thin(&off.err, k),
        z: thin(&on.z, k),
        zhat: thin(&on.zhat, k),
        max_gap,
    })
}

/// Fault isolation run with fixed thresholds and hold time.
pub fn bank_run(delta1: f64, delta2: f64, hold: f64, w1: f64) -> Result<BankRunSummary, String> {
    let m = model(FAULT_MODEL)?;
    let bank = design_bank(
        &m,
        &[MemberSpec::new("f1", ExoKind::Ramp, &[-0.02]), MemberSpec::new("f2", ExoKind::Step, &[-0.01])],
        1,
    )
    .map_err(|e| e.to_string())?;
    let mut sc = Scenario::parse(FAULTS).map_err(|e| e.to_string())?;
    sc.h = Some(WEB_STEP);
    sc.signals.insert("w1".into(), Signal::Constant(w1));
    let run = run_bank(&bank, &m, &sc).map_err(|e| e.to_string())?;
    let events = detect(&run.estimates(), &DetectionPolicy::new(&[("f1", delta1), ("f2", delta2)], hold))
        .into_iter()
        .map(|e| Event { fault: e.fault, time: e.time })
        .collect();
    let (t1, t2) = (run.trace("f1").ok_or("missing f1")?, run.trace("f2").ok_or("missing f2")?);
    let k = stride(t1.len());
    Ok(BankRunSummary {
        t: thin(&t1.t, k),
        f1: thin(&t1.z, k),
        f1_hat: thin(&t1.zhat, k),
        f2: thin(&t2.z, k),
        f2_hat: thin(&t2.zhat, k),
        events,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = designReactor)]
pub fn design_reactor_js(lambda: f64) -> Result<String, JsValue> {
    to_js(design_reactor(lambda))
}

#[wasm_bindgen(js_name = startupRun)]
pub fn startup_run_js(lambda: f64, w1: f64, w2: f64, e0: f64, t_end: f64) -> Result<String, JsValue> {
    to_js(startup_run(lambda, w1, w2, e0, t_end))
}

#[wasm_bindgen(js_name = bankRun)]
pub fn bank_run_js(delta1: f64, delta2: f64, hold: f64, w1: f64) -> Result<String, JsValue> {
    to_js(bank_run(delta1, delta2, hold, w1))
}

//! Fault isolation bank: one disturbance-decoupled observer per fault, each
//! treating the remaining faults as disturbances.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{
    design_problem, verify_conditions, ConditionReport, Design, DesignError, DesignSpec, DocumentError, ObserverDocument,
    ObserverRealization, Problem, Provenance, Target,
};
use crate::model::{ExoKind, ExoSystem, PlantModel};
use crate::sim::{simulate_many, ObserverInit, Scenario, SimError, Signal, Trajectory};

#[derive(Debug, thiserror::Error)]
pub enum BankError {
    #[error("model declares no faults")]
    NoFaults,
    #[error("no exo-system given for fault `{0}`")]
    MissingFault(String),
    #[error("`{0}` is not a declared fault")]
    UnknownFault(String),
    #[error("fault `{fault}`: {source}")]
    Member {
        fault: String,
        #[source]
        source: DesignError,
    },
    #[error("fault `{fault}`: stored observer fails verification (max residual {residual:e})")]
    Unverified { fault: String, residual: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Document {
        path: String,
        #[source]
        source: DocumentError,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Design request for one bank member.
#[derive(Clone, Debug)]
pub struct MemberSpec {
    pub fault: String,
    pub exo: ExoSystem,
    pub spec: DesignSpec,
}

impl MemberSpec {
    pub fn new(fault: &str, kind: ExoKind, eigenvalues: &[f64]) -> MemberSpec {
        MemberSpec {
            fault: fault.to_string(),
            exo: ExoSystem::new(kind),
            spec: DesignSpec::real(eigenvalues),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BankMember {
    pub fault: String,
    pub kind: ExoKind,
    pub observer: ObserverRealization,
    pub report: ConditionReport,
}

#[derive(Clone, Debug)]
pub struct FaultBank {
    pub members: Vec<BankMember>,
}

/// Designs one observer per declared fault, in the model's fault order.
pub fn design_bank(model: &PlantModel, requests: &[MemberSpec], v_max: usize) -> Result<FaultBank, BankError> {
    if model.faults.is_empty() {
        return Err(BankError::NoFaults);
    }
    if let Some(r) = requests.iter().find(|r| !model.faults.contains(&r.fault)) {
        return Err(BankError::UnknownFault(r.fault.clone()));
    }
    let mut members = Vec::new();
    for f in &model.faults {
        let req = requests
            .iter()
            .find(|r| &r.fault == f)
            .ok_or_else(|| BankError::MissingFault(f.clone()))?;
        let Design { observer, report, .. } = design_member(model, req, v_max)?;
        members.push(BankMember {
            fault: f.clone(),
            kind: req.exo.kind,
            observer,
            report,
        });
    }
    Ok(FaultBank { members })
}

fn design_member(model: &PlantModel, req: &MemberSpec, v_max: usize) -> Result<Design, BankError> {
    let member = |source| BankError::Member {
        fault: req.fault.clone(),
        source,
    };
    let target = Target::Fault {
        fault: req.fault.clone(),
        exo: req.exo.clone(),
    };
    let problem = Problem::new(model, &target).map_err(member)?;
    design_problem(&problem, &req.spec, v_max).map_err(member)
}

/// Re-runs the existence-condition check of a stored observer against
/// `model` with every other fault treated as a disturbance.
pub fn verify_member(model: &PlantModel, obs: &ObserverRealization, samples: usize, seed: u64, tol: f64) -> Result<ConditionReport, BankError> {
    let Provenance::Fault { fault, exo, .. } = &obs.provenance else {
        return Err(BankError::Manifest("bank member is not a fault observer".into()));
    };
    let member = |source| BankError::Member {
        fault: fault.clone(),
        source,
    };
    let target = Target::Fault {
        fault: fault.clone(),
        exo: exo.clone(),
    };
    let problem = Problem::new(model, &target).map_err(member)?;
    verify_conditions(&problem, obs, samples, seed, tol).map_err(member)
}

/// Estimates from one bank run: `traces[i].zhat` is `fhat_i`, `traces[i].z`
/// the injected fault.
#[derive(Clone, Debug)]
pub struct BankRun {
    pub faults: Vec<String>,
    pub traces: Vec<Trajectory>,
}

impl BankRun {
    pub fn trace(&self, fault: &str) -> Option<&Trajectory> {
        self.faults.iter().position(|f| f == fault).map(|i| &self.traces[i])
    }

    pub fn estimates(&self) -> Vec<(&str, &[f64], &[f64])> {
        self.faults
            .iter()
            .zip(&self.traces)
            .map(|(f, tr)| (f.as_str(), tr.t.as_slice(), tr.zhat.as_slice()))
            .collect()
    }
}

/// Single plant integration driving every bank member.
pub fn run_bank(bank: &FaultBank, model: &PlantModel, scenario: &Scenario) -> Result<BankRun, BankError> {
    let observers: Vec<&ObserverRealization> = bank.members.iter().map(|m| &m.observer).collect();
    let traces = simulate_many(model, &observers, scenario)?;
    Ok(BankRun {
        faults: bank.members.iter().map(|m| m.fault.clone()).collect(),
        traces,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionPolicy {
    /// Threshold on `|fhat|` per fault symbol.
    pub thresholds: BTreeMap<String, f64>,
    /// How long `|fhat|` must stay above its threshold.
    pub hold: f64,
    /// Ignore a fault until its estimate has first dropped to or below the
    /// threshold, so the observer's initialization transient is not
    /// reported as a fault.
    pub arm_on_settle: bool,
}

impl DetectionPolicy {
    pub fn new(thresholds: &[(&str, f64)], hold: f64) -> DetectionPolicy {
        DetectionPolicy {
            thresholds: thresholds.iter().map(|(f, d)| (f.to_string(), *d)).collect(),
            hold,
            arm_on_settle: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaultEvent {
    pub fault: String,
    /// Grid time at which the hold requirement was first met.
    pub time: f64,
    /// Grid index of `time`.
    pub index: usize,
    /// `max |fhat|` over the whole run.
    pub peak: f64,
}

/// At most one event per fault, sorted by detection time. Faults without a
/// threshold in `policy` are never flagged.
pub fn detect(estimates: &[(&str, &[f64], &[f64])], policy: &DetectionPolicy) -> Vec<FaultEvent> {
    let mut events = Vec::new();
    for &(fault, t, fhat) in estimates {
        let Some(&delta) = policy.thresholds.get(fault) else {
            continue;
        };
        let peak = fhat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut since: Option<f64> = None;
        let mut armed = !policy.arm_on_settle;
        for (k, (&tk, &fk)) in t.iter().zip(fhat).enumerate() {
            armed |= fk.abs() <= delta;
            if armed && fk.abs() > delta {
                let start = *since.get_or_insert(tk);
                if tk - start >= policy.hold - 1e-9 * policy.hold.max(1.0) {
                    events.push(FaultEvent {
                        fault: fault.to_string(),
                        time: tk,
                        index: k,
                        peak,
                    });
                    break;
                }
            } else {
                since = None;
            }
        }
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    events
}

/// Thresholds from a fault-free rerun of `scenario` (all fault signals set to
/// zero, exact observer initialization): `3 max|fhat| + 1e-6`, hold `10 h`.
pub fn calibrate(bank: &FaultBank, model: &PlantModel, scenario: &Scenario, h: f64) -> Result<DetectionPolicy, BankError> {
    let mut quiet = with_exact_init(scenario);
    for f in &model.faults {
        quiet.signals.insert(f.clone(), Signal::zero());
    }
    let run = run_bank(bank, model, &quiet)?;
    let thresholds = run
        .faults
        .iter()
        .zip(&run.traces)
        .map(|(f, tr)| (f.clone(), 3.0 * tr.zhat.iter().fold(0.0f64, |a, v| a.max(v.abs())) + 1e-6))
        .collect();
    Ok(DetectionPolicy {
        thresholds,
        hold: 10.0 * h,
        arm_on_settle: true,
    })
}

// Persistence.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub fault: String,
    pub file: String,
    /// `step`, `ramp`, `sine(<omega>)` or `custom`; the document holds `R`, `Q`.
    pub kind: String,
    pub eigenvalues: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(rename = "observer")]
    pub observers: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.toml";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BankError + '_ {
    move |source| BankError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl FaultBank {
    pub fn member(&self, fault: &str) -> Option<&BankMember> {
        self.members.iter().find(|m| m.fault == fault)
    }

    /// Writes `manifest.toml` plus one observer document per fault.
    pub fn save(&self, dir: &Path, model: Option<&str>) -> Result<Manifest, BankError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut observers = Vec::new();
        for m in &self.members {
            let file = format!("observer_{}.toml", m.fault);
            let path = dir.join(&file);
            let text = ObserverDocument::from_realization(&m.observer, model)
                .to_toml()
                .map_err(|source| BankError::Document {
                    path: path.display().to_string(),
                    source,
                })?;
            std::fs::write(&path, text).map_err(io_err(&path))?;
            observers.push(ManifestEntry {
                fault: m.fault.clone(),
                file,
                kind: m.kind.to_string(),
                eigenvalues: m.observer.eigenvalues.iter().map(|l| [l.re, l.im]).collect(),
            });
        }
        let manifest = Manifest {
            model: model.map(str::to_string),
            observers,
        };
        let path = dir.join(MANIFEST);
        let text = toml::to_string_pretty(&manifest).map_err(|e| BankError::Manifest(e.to_string()))?;
        std::fs::write(&path, text).map_err(io_err(&path))?;
        Ok(manifest)
    }

    /// Loads a saved bank and re-verifies every member against `model`.
    pub fn load(dir: &Path, model: &PlantModel, seed: u64, tol: f64) -> Result<FaultBank, BankError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| BankError::Manifest(e.to_string()))?;
        let mut members = Vec::new();
        for e in &manifest.observers {
            let path = dir.join(&e.file);
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let doc_err = |source| BankError::Document {
                path: path.display().to_string(),
                source,
            };
            let observer = ObserverDocument::from_toml(&text)
                .and_then(|d| d.to_realization())
                .map_err(doc_err)?;
            let kind = match &observer.provenance {
                Provenance::Fault { fault, exo, .. } if fault == &e.fault => exo.kind,
                _ => return Err(BankError::Manifest(format!("{} is not an observer for `{}`", e.file, e.fault))),
            };
            let report = verify_member(model, &observer, 100, seed, tol)?;
            if !report.passed() {
                return Err(BankError::Unverified {
                    fault: e.fault.clone(),
                    residual: report.max_residual(),
                });
            }
            if kind.to_string() != e.kind {
                return Err(BankError::Manifest(format!("{}: manifest says `{}`, document says `{kind}`", e.file, e.kind)));
            }
            members.push(BankMember {
                fault: e.fault.clone(),
                kind,
                observer,
                report,
            });
        }
        Ok(FaultBank { members })
    }
}

/// `fault,detected,time,peak` with one row per bank member.
pub fn events_report(run: &BankRun, events: &[FaultEvent]) -> String {
    let mut s = String::from("fault,detected,time,peak\n");
    for (f, tr) in run.faults.iter().zip(&run.traces) {
        let peak = tr.zhat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        match events.iter().find(|e| &e.fault == f) {
            Some(e) => s.push_str(&format!("{f},true,{:?},{peak:?}\n", e.time)),
            None => s.push_str(&format!("{f},false,,{peak:?}\n")),
        }
    }
    s
}

/// Zero initialization error on every observer component.
pub fn with_exact_init(scenario: &Scenario) -> Scenario {
    Scenario {
        observer: ObserverInit::Error(vec![0.0]),
        ..scenario.clone()
    }
}

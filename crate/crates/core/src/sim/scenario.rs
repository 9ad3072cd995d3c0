//! Scenario text format.
//!
//! ```text
//! [scenario]
//! t_end = 400
//! h = 0.03125          # optional; derived from the spectra when absent
//! [init]
//! cA' = -3.99          # plant initial state, unlisted states start at 0
//! e0 = 1               # observer initialization error xi(0) - T(x(0))
//! [signals]
//! w1 = constant(1e-4)
//! f1 = ramp(2000, 0.001, 1)
//! ```
//!
//! `e0` and `xi0` accept a comma-separated list; a single value is applied
//! to every observer component. `xi0` overrides `e0`.

use std::collections::BTreeMap;

use super::{Signal, SimError};
use crate::expr::{eval, parse, Env, Symbols};
use crate::model::file::{sectioned_lines, split_assignment};
use crate::model::ModelError;

#[derive(Clone, Debug, PartialEq)]
pub enum ObserverInit {
    /// `xi(0) = T(x(0)) + e0`.
    Error(Vec<f64>),
    Explicit(Vec<f64>),
}

impl ObserverInit {
    /// Resolves a length-1 list against the observer order.
    pub fn values(&self, order: usize) -> Result<Vec<f64>, SimError> {
        let v = match self {
            ObserverInit::Error(v) | ObserverInit::Explicit(v) => v,
        };
        match v.len() {
            1 => Ok(vec![v[0]; order]),
            n if n == order => Ok(v.clone()),
            n => Err(SimError::Dimension(format!("observer initialization has {n} entries, order is {order}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub t_end: f64,
    pub h: Option<f64>,
    /// Plant initial state by name; missing states start at zero.
    pub init: Vec<(String, f64)>,
    pub observer: ObserverInit,
    /// Disturbance and fault profiles; unbound symbols are held at zero.
    pub signals: BTreeMap<String, Signal>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            t_end: 1.0,
            h: None,
            init: Vec::new(),
            observer: ObserverInit::Error(vec![0.0]),
            signals: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Scenario,
    Init,
    Signals,
}

fn number(text: &str, line: usize) -> Result<f64, ModelError> {
    let e = parse(text, &Symbols::new()).map_err(|source| ModelError::Expr { line, source })?;
    Ok(eval(&e, &Env::new())?)
}

fn list(text: &str, line: usize) -> Result<Vec<f64>, ModelError> {
    text.split(',').map(|s| number(s.trim(), line)).collect()
}

impl Scenario {
    pub fn signal(&self, symbol: &str) -> Signal {
        self.signals.get(symbol).cloned().unwrap_or_else(Signal::zero)
    }

    pub fn initial_state(&self, states: &[String]) -> Result<Vec<f64>, SimError> {
        if let Some((name, _)) = self.init.iter().find(|(n, _)| !states.contains(n)) {
            return Err(SimError::Dimension(format!("initial value for unknown state `{name}`")));
        }
        Ok(states
            .iter()
            .map(|s| self.init.iter().find(|(n, _)| n == s).map_or(0.0, |(_, v)| *v))
            .collect())
    }

    pub fn parse(text: &str) -> Result<Scenario, SimError> {
        let lines = sectioned_lines(text, |h| match h {
            "scenario" => Some(Section::Scenario),
            "init" => Some(Section::Init),
            "signals" => Some(Section::Signals),
            _ => None,
        })?;
        let mut sc = Scenario::default();
        let mut t_end = None;
        let mut e0 = None;
        let mut xi0 = None;
        for (no, sec, line) in &lines {
            let no = *no;
            let (lhs, rhs) = split_assignment(line, no)?;
            match sec {
                Section::Scenario => match lhs {
                    "t_end" => t_end = Some(number(rhs, no)?),
                    "h" => sc.h = Some(number(rhs, no)?),
                    other => {
                        return Err(ModelError::Syntax {
                            line: no,
                            msg: format!("unknown scenario key `{other}`"),
                        }
                        .into())
                    }
                },
                Section::Init => match lhs {
                    "e0" => e0 = Some(list(rhs, no)?),
                    "xi0" => xi0 = Some(list(rhs, no)?),
                    state => sc.init.push((state.to_string(), number(rhs, no)?)),
                },
                Section::Signals => {
                    let s = Signal::parse(rhs).map_err(|e| ModelError::Syntax {
                        line: no,
                        msg: e.to_string(),
                    })?;
                    if sc.signals.insert(lhs.to_string(), s).is_some() {
                        return Err(ModelError::Syntax {
                            line: no,
                            msg: format!("signal `{lhs}` bound twice"),
                        }
                        .into());
                    }
                }
            }
        }
        sc.t_end = t_end.ok_or_else(|| ModelError::Syntax {
            line: 0,
            msg: "missing `t_end` in [scenario]".into(),
        })?;
        if !(sc.t_end > 0.0 && sc.t_end.is_finite()) {
            return Err(ModelError::Syntax {
                line: 0,
                msg: format!("t_end must be positive, got {}", sc.t_end),
            }
            .into());
        }
        if let Some(h) = sc.h {
            if !(h > 0.0) {
                return Err(SimError::Step(h));
            }
        }
        sc.observer = match (xi0, e0) {
            (Some(x), _) => ObserverInit::Explicit(x),
            (None, Some(e)) => ObserverInit::Error(e),
            (None, None) => ObserverInit::Error(vec![0.0]),
        };
        Ok(sc)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Scenario, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("[scenario]\nt_end = {:?}\n", self.t_end);
        if let Some(h) = self.h {
            s.push_str(&format!("h = {h:?}\n"));
        }
        s.push_str("\n[init]\n");
        for (k, v) in &self.init {
            s.push_str(&format!("{k} = {v:?}\n"));
        }
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        match &self.observer {
            ObserverInit::Error(e) => s.push_str(&format!("e0 = {}\n", join(e))),
            ObserverInit::Explicit(x) => s.push_str(&format!("xi0 = {}\n", join(x))),
        }
        if !self.signals.is_empty() {
            s.push_str("\n[signals]\n");
            for (k, v) in &self.signals {
                s.push_str(&format!("{k} = {v}\n"));
            }
        }
        s
    }
}

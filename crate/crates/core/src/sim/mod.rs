//! Co-simulation of plant and observers.
//!
//! The plant runs on the declared model with disturbance and fault symbols
//! driven by [`Signal`]s; each observer sees only `y(t)`. Fault ground truth
//! is the injected signal, not an exo-system state.

mod csv;
mod rk4;
mod scenario;
mod signal;

use nalgebra::{DMatrix, DVector};

use crate::design::{DesignError, ObserverRealization, Provenance};
use crate::expr::{Compiled, EvalError};
use crate::model::{ModelError, PlantModel};

pub use csv::CsvError;
pub use rk4::{integrate_rk4, time_grid, Grid};
pub use scenario::{ObserverInit, Scenario};
pub use signal::{Signal, SignalError};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("t = {t}: {source}")]
    Rhs {
        t: f64,
        #[source]
        source: EvalError,
    },
    #[error("state left the finite range at t = {0}")]
    Diverged(f64),
    #[error("step size must be positive and finite, got {0}")]
    Step(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One observer's run. `x` and `y` are shared by every observer of a
/// simulation; `z` is `q(x)` or the injected fault.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<String>,
    pub outputs: Vec<String>,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub zhat: Vec<f64>,
    pub err: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Every `every`-th grid point, always keeping the last one.
    pub fn decimate(&self, every: usize) -> Trajectory {
        let every = every.max(1);
        let n = self.len();
        let keep: Vec<usize> = (0..n).filter(|k| k % every == 0 || *k + 1 == n).collect();
        let pick = |v: &Vec<f64>| keep.iter().map(|&k| v[k]).collect::<Vec<_>>();
        let pick_rows = |v: &Vec<Vec<f64>>| keep.iter().map(|&k| v[k].clone()).collect::<Vec<_>>();
        Trajectory {
            states: self.states.clone(),
            outputs: self.outputs.clone(),
            t: pick(&self.t),
            x: pick_rows(&self.x),
            y: pick_rows(&self.y),
            z: pick(&self.z),
            zhat: pick(&self.zhat),
            err: pick(&self.err),
            xi: pick_rows(&self.xi),
        }
    }
}

/// Compiled plant: dynamics and outputs over `(x, W, f)`.
struct Plant {
    n: usize,
    exo: Vec<String>,
    signals: Vec<Signal>,
    dynamics: Vec<Compiled>,
    outputs: Vec<Compiled>,
    functional: Option<Compiled>,
}

impl Plant {
    fn new(m: &PlantModel, sc: &Scenario) -> Result<Plant, SimError> {
        let exo: Vec<String> = m.disturbances.iter().chain(&m.faults).cloned().collect();
        let mut slots = m.states.clone();
        slots.extend(exo.iter().cloned());
        let consts = m.param_env();
        let compile = |e| Compiled::new(e, &slots, &consts);
        Ok(Plant {
            n: m.n(),
            signals: exo.iter().map(|s| sc.signal(s)).collect(),
            exo,
            dynamics: m.dynamics.iter().map(compile).collect::<Result<_, _>>()?,
            outputs: m.outputs.iter().map(|(_, e)| compile(e)).collect::<Result<_, _>>()?,
            functional: m.functional.as_ref().map(compile).transpose()?,
        })
    }

    fn fill(&self, t: f64, x: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend_from_slice(&x[..self.n]);
        buf.extend(self.signals.iter().map(|s| s.eval(t)));
    }
}

/// How an observer's `T` and `z` relate to the plant run.
struct Attached<'a> {
    obs: &'a ObserverRealization,
    /// Index into the plant's exo symbols for fault observers.
    fault: Option<usize>,
    offset: usize,
}

fn attach<'a>(m: &PlantModel, plant: &Plant, obs: &'a ObserverRealization, offset: usize) -> Result<Attached<'a>, SimError> {
    if obs.p() != m.p() {
        return Err(SimError::Dimension(format!(
            "observer expects {} outputs, model has {}",
            obs.p(),
            m.p()
        )));
    }
    let fault = match &obs.provenance {
        Provenance::Fault { fault, base_states, .. } => {
            if base_states != &m.states {
                return Err(SimError::Dimension(format!(
                    "fault observer built over {base_states:?}, model states are {:?}",
                    m.states
                )));
            }
            Some(plant.exo.iter().position(|s| s == fault).ok_or_else(|| {
                SimError::Dimension(format!("model has no symbol `{fault}`"))
            })?)
        }
        _ => {
            if obs.states != m.states {
                return Err(SimError::Dimension(format!(
                    "observer built over {:?}, model states are {:?}",
                    obs.states, m.states
                )));
            }
            if plant.functional.is_none() {
                return Err(SimError::Dimension("model declares no functional for z".into()));
            }
            None
        }
    };
    Ok(Attached { obs, fault, offset })
}

/// Point at which `T` is evaluated: the plant state, followed by the exo
/// state reproducing the injected fault's value and derivatives at `t`.
pub fn observer_point(obs: &ObserverRealization, x: &[f64], t: f64, sc: &Scenario) -> Vec<f64> {
    let mut pt = x.to_vec();
    if let Provenance::Fault { fault, exo, .. } = &obs.provenance {
        let sig = sc.signal(fault);
        let derivs: Vec<f64> = (0..exo.order()).map(|k| sig.derivative(k, t)).collect();
        pt.extend(exo.state_from_derivatives(&derivs).iter());
    }
    pt
}

/// `xi(t) - T(x(t))` along a simulated run.
pub fn transformation_error(
    obs: &ObserverRealization,
    traj: &Trajectory,
    sc: &Scenario,
) -> Result<Vec<DVector<f64>>, SimError> {
    traj.t
        .iter()
        .zip(&traj.x)
        .zip(&traj.xi)
        .map(|((t, x), xi)| {
            let tx = obs.eval_t(&observer_point(obs, x, *t, sc))?;
            Ok(DVector::from_column_slice(xi) - tx)
        })
        .collect()
}

/// Runs one plant and one observer.
pub fn simulate(m: &PlantModel, obs: &ObserverRealization, sc: &Scenario) -> Result<Trajectory, SimError> {
    Ok(simulate_many(m, &[obs], sc)?.remove(0))
}

/// Single plant integration driving every observer with the same `y(t)`.
pub fn simulate_many(m: &PlantModel, observers: &[&ObserverRealization], sc: &Scenario) -> Result<Vec<Trajectory>, SimError> {
    let plant = Plant::new(m, sc)?;
    let x0 = sc.initial_state(&m.states)?;
    let mut offset = m.n();
    let mut att = Vec::new();
    for obs in observers {
        att.push(attach(m, &plant, obs, offset)?);
        offset += obs.order;
    }
    let mut state0 = x0.clone();
    for a in &att {
        let init = sc.observer.values(a.obs.order)?;
        let xi0: Vec<f64> = match &sc.observer {
            ObserverInit::Explicit(_) => init,
            ObserverInit::Error(_) => {
                let t0 = a.obs.eval_t(&observer_point(a.obs, &x0, 0.0, sc))?;
                t0.iter().zip(&init).map(|(t, e)| t + e).collect()
            }
        };
        state0.extend(xi0);
    }
    let h = match sc.h {
        Some(h) => h,
        None => default_step(m, observers, &x0, sc.t_end)?,
    };

    let mut slot_buf = Vec::with_capacity(plant.n + plant.exo.len());
    let mut stack = Vec::new();
    let mut y = vec![0.0; m.p()];
    let rhs = |t: f64, s: &[f64], ds: &mut [f64]| -> Result<(), EvalError> {
        plant.fill(t, s, &mut slot_buf);
        for (k, f) in plant.dynamics.iter().enumerate() {
            ds[k] = f.eval_with(&slot_buf, &mut stack)?;
        }
        for (j, g) in plant.outputs.iter().enumerate() {
            y[j] = g.eval_with(&slot_buf, &mut stack)?;
        }
        for a in &att {
            let v = a.obs.order;
            for k in 0..v {
                let mut acc = 0.0;
                for l in 0..v {
                    acc += a.obs.a[(k, l)] * s[a.offset + l];
                }
                for (j, yj) in y.iter().enumerate() {
                    acc += a.obs.b[(k, j)] * yj;
                }
                ds[a.offset + k] = acc;
            }
        }
        Ok(())
    };
    let grid = integrate_rk4(rhs, &state0, sc.t_end, h)?;

    let n = plant.n;
    let mut buf = Vec::new();
    let mut ys = Vec::with_capacity(grid.t.len());
    let mut q = Vec::with_capacity(grid.t.len());
    for (t, s) in grid.t.iter().zip(&grid.x) {
        plant.fill(*t, s, &mut buf);
        let yk = plant
            .outputs
            .iter()
            .map(|g| g.eval_with(&buf, &mut stack))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| SimError::Rhs { t: *t, source })?;
        ys.push(yk);
        let qk = match &plant.functional {
            Some(c) => c.eval_with(&buf, &mut stack).map_err(|source| SimError::Rhs { t: *t, source })?,
            None => f64::NAN,
        };
        q.push(qk);
    }
    let xs: Vec<Vec<f64>> = grid.x.iter().map(|s| s[..n].to_vec()).collect();
    let mut out = Vec::new();
    for a in &att {
        let v = a.obs.order;
        let xi: Vec<Vec<f64>> = grid.x.iter().map(|s| s[a.offset..a.offset + v].to_vec()).collect();
        let zhat: Vec<f64> = xi
            .iter()
            .zip(&ys)
            .map(|(xk, yk)| {
                let cx: f64 = (0..v).map(|l| a.obs.c[l] * xk[l]).sum();
                let dy: f64 = yk.iter().enumerate().map(|(j, yj)| a.obs.d[j] * yj).sum();
                cx + dy
            })
            .collect();
        let z: Vec<f64> = match a.fault {
            Some(i) => grid.t.iter().map(|t| plant.signals[i].eval(*t)).collect(),
            None => q.clone(),
        };
        let err = zhat.iter().zip(&z).map(|(a, b)| a - b).collect();
        out.push(Trajectory {
            states: m.states.clone(),
            outputs: m.output_names(),
            t: grid.t.clone(),
            x: xs.clone(),
            y: ys.clone(),
            z,
            zhat,
            err,
            xi,
        });
    }
    Ok(out)
}

/// `C e^(A t) e0` on `times`.
pub fn predict_error(obs: &ObserverRealization, e0: &[f64], times: &[f64]) -> Result<Vec<f64>, SimError> {
    let v = obs.order;
    if e0.len() != v {
        return Err(SimError::Dimension(format!("e0 has {} entries, order is {v}", e0.len())));
    }
    let e0 = DVector::from_column_slice(e0);
    Ok(times
        .iter()
        .map(|&t| {
            if v == 1 {
                obs.c[0] * (obs.a[(0, 0)] * t).exp() * e0[0]
            } else {
                let m: DMatrix<f64> = (&obs.a * t).exp();
                (&obs.c * m * &e0)[0]
            }
        })
        .collect())
}

/// Fiftieth of the slowest-decaying time constant among the observer
/// eigenvalues and the plant linearized at `x0`; falls back to
/// `t_end / 1000` when every mode is marginal.
pub fn default_step(m: &PlantModel, observers: &[&ObserverRealization], x0: &[f64], t_end: f64) -> Result<f64, SimError> {
    let s = m.extract_structure();
    let n = m.n();
    let mut jac = DMatrix::zeros(n, n);
    for (k, fk) in s.drift.components().iter().enumerate() {
        for (l, xl) in m.states.iter().enumerate() {
            jac[(k, l)] = Compiled::new(&fk.diff(xl), &m.states, &s.params)?.eval(x0)?;
        }
    }
    let mut res: Vec<f64> = jac.complex_eigenvalues().iter().map(|l| l.re).collect();
    for o in observers {
        res.extend(o.eigenvalues.iter().map(|l| l.re));
    }
    let tau = res
        .iter()
        .filter(|re| re.abs() > 1e-12 && re.is_finite())
        .map(|re| 1.0 / re.abs())
        .fold(f64::INFINITY, f64::min);
    Ok(if tau.is_finite() { tau / 50.0 } else { t_end / 1000.0 })
}

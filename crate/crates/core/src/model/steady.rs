use nalgebra::{DMatrix, DVector};

use super::{ModelError, PlantModel};
use crate::expr::{simplify, Compiled, Env, Expr};

#[derive(Clone, Debug)]
pub struct SteadyStateOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions { tol: 1e-10, max_iter: 100 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatingPoint {
    pub state: Vec<f64>,
    /// `max_k |F_k(x_s)|` with disturbances and faults at zero.
    pub residual: f64,
    pub iterations: usize,
}

impl OperatingPoint {
    pub fn origin(n: usize) -> Self {
        OperatingPoint {
            state: vec![0.0; n],
            residual: 0.0,
            iterations: 0,
        }
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration on `F(x) = 0` with the symbolic Jacobian.
pub(super) fn newton(m: &PlantModel, guess: &[f64], opts: &SteadyStateOptions) -> Result<OperatingPoint, ModelError> {
    let n = m.n();
    if guess.len() != n {
        return Err(ModelError::Dimension(format!("initial guess has {} entries, model has {n} states", guess.len())));
    }
    let s = m.extract_structure();
    let consts = s.params.clone();
    let f: Vec<Compiled> = s
        .drift
        .components()
        .iter()
        .map(|e| Compiled::new(e, &m.states, &consts))
        .collect::<Result<_, _>>()?;
    let jac: Vec<Vec<Compiled>> = s
        .drift
        .components()
        .iter()
        .map(|e| {
            m.states
                .iter()
                .map(|x| Compiled::new(&e.diff(x), &m.states, &consts))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut stack = Vec::new();
    let mut residual_at = |x: &[f64]| -> Result<DVector<f64>, ModelError> {
        let mut r = DVector::zeros(n);
        for (k, fk) in f.iter().enumerate() {
            r[k] = fk.eval_with(x, &mut stack)?;
        }
        Ok(r)
    };

    let mut x = DVector::from_column_slice(guess);
    let mut r = residual_at(x.as_slice())?;
    let mut norm = inf_norm(&r);
    for it in 0..opts.max_iter {
        if norm <= opts.tol {
            return Ok(OperatingPoint {
                state: x.iter().copied().collect(),
                residual: norm,
                iterations: it,
            });
        }
        let mut jm = DMatrix::zeros(n, n);
        for k in 0..n {
            for l in 0..n {
                jm[(k, l)] = jac[k][l].eval(x.as_slice())?;
            }
        }
        if jm.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::SingularJacobian(it));
        }
        // rank-deficient Jacobians fall back to the minimum-norm step
        let step = match jm.clone().lu().solve(&(-&r)) {
            Some(step) if step.iter().all(|v| v.is_finite()) => step,
            _ => jm
                .svd(true, true)
                .solve(&(-&r), 1e-14)
                .map_err(|_| ModelError::SingularJacobian(it))?,
        };
        let mut lambda = 1.0;
        let mut taken = None;
        for _ in 0..20 {
            let trial = &x + &step * lambda;
            if let Ok(rt) = residual_at(trial.as_slice()) {
                if inf_norm(&rt) < norm {
                    taken = Some((trial, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match taken {
            Some((trial, rt)) => {
                x = trial;
                norm = inf_norm(&rt);
                r = rt;
            }
            None => {
                return Err(ModelError::NonConvergence {
                    iterations: it + 1,
                    residual: norm,
                })
            }
        }
    }
    if norm <= opts.tol {
        return Ok(OperatingPoint {
            state: x.iter().copied().collect(),
            residual: norm,
            iterations: opts.max_iter,
        });
    }
    Err(ModelError::NonConvergence {
        iterations: opts.max_iter,
        residual: norm,
    })
}

pub(super) fn deviation<F: Fn(&str) -> String>(m: &PlantModel, op: &OperatingPoint, rename: F) -> PlantModel {
    let new_names: Vec<String> = m.states.iter().map(|s| rename(s)).collect();
    let shift = |e: &Expr| {
        simplify(&e.substitute(&|name| {
            m.states.iter().position(|s| s == name).map(|k| {
                let v = Expr::var(&new_names[k]);
                if op.state[k] == 0.0 {
                    v
                } else {
                    v + Expr::Const(op.state[k])
                }
            })
        }))
    };
    // outputs and functional are re-centred on their values at x_s
    let mut env: Env = m.param_env();
    for (s, v) in m.states.iter().zip(&op.state) {
        env.set(s.clone(), *v);
    }
    for w in m.disturbances.iter().chain(&m.faults) {
        env.set(w.clone(), 0.0);
    }
    let recentre = |e: &Expr| {
        let at_op = crate::expr::eval(e, &env).unwrap_or(0.0);
        let shifted = shift(e);
        if at_op == 0.0 {
            shifted
        } else {
            simplify(&(shifted - Expr::Const(at_op)))
        }
    };
    let dynamics = m.dynamics.iter().map(shift).collect();
    let outputs = m.outputs.iter().map(|(n, e)| (n.clone(), recentre(e))).collect();
    let functional = m.functional.as_ref().map(recentre);
    PlantModel {
        states: new_names.clone(),
        params: m.params.clone(),
        dynamics,
        outputs,
        functional,
        disturbances: m.disturbances.clone(),
        faults: m.faults.clone(),
        boxes: m
            .boxes
            .iter()
            .zip(&op.state)
            .map(|(b, v)| b.map(|b| b.shifted(-v)))
            .collect(),
    }
}

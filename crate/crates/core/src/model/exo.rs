use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Interval, ModelError, PlantModel};
use crate::expr::{simplify, Expr};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ExoKind {
    Step,
    Ramp,
    Sine { omega: f64 },
    Custom,
}

impl ExoKind {
    /// Parses `step`, `ramp` or `sine(<omega>)`.
    pub fn parse(text: &str) -> Option<ExoKind> {
        let t = text.trim();
        match t {
            "step" => Some(ExoKind::Step),
            "ramp" => Some(ExoKind::Ramp),
            _ => {
                let inner = t.strip_prefix("sine(")?.strip_suffix(')')?;
                inner.trim().parse().ok().map(|omega| ExoKind::Sine { omega })
            }
        }
    }
}

impl std::fmt::Display for ExoKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExoKind::Step => f.write_str("step"),
            ExoKind::Ramp => f.write_str("ramp"),
            ExoKind::Sine { omega } => write!(f, "sine({omega})"),
            ExoKind::Custom => f.write_str("custom"),
        }
    }
}

/// Fault generator `dx_o/dt = R x_o`, `f = Q x_o`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExoSystem {
    pub r: DMatrix<f64>,
    pub q: DVector<f64>,
    pub kind: ExoKind,
}

impl ExoSystem {
    pub fn new(kind: ExoKind) -> ExoSystem {
        let (r, q) = match kind {
            ExoKind::Step | ExoKind::Custom => (DMatrix::zeros(1, 1), DVector::from_element(1, 1.0)),
            ExoKind::Ramp => (
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
                DVector::from_column_slice(&[1.0, 0.0]),
            ),
            ExoKind::Sine { omega } => (
                DMatrix::from_row_slice(2, 2, &[0.0, omega, -omega, 0.0]),
                DVector::from_column_slice(&[1.0, 0.0]),
            ),
        };
        ExoSystem { r, q, kind }
    }

    pub fn custom(r: DMatrix<f64>, q: DVector<f64>) -> Result<ExoSystem, ModelError> {
        if !r.is_square() || r.nrows() != q.len() || q.is_empty() {
            return Err(ModelError::Exo(format!(
                "R is {}x{} but Q has {} entries",
                r.nrows(),
                r.ncols(),
                q.len()
            )));
        }
        if q.iter().all(|v| *v == 0.0) {
            return Err(ModelError::Exo("Q must be nonzero".into()));
        }
        Ok(ExoSystem {
            r,
            q,
            kind: ExoKind::Custom,
        })
    }

    pub fn order(&self) -> usize {
        self.q.len()
    }

    /// Row vector `Q R^k`.
    pub fn q_r_power(&self, k: usize) -> DVector<f64> {
        let mut row = self.q.transpose();
        for _ in 0..k {
            row *= &self.r;
        }
        row.transpose()
    }

    /// Exo state producing `f(0) = derivs[0]`, `f'(0) = derivs[1]`, ...,
    /// by solving the observability system `[Q; QR; ...] x_o = derivs`
    /// in the least-squares sense.
    pub fn state_from_derivatives(&self, derivs: &[f64]) -> DVector<f64> {
        let n = self.order();
        let mut obs = DMatrix::zeros(n, n);
        for k in 0..n {
            obs.set_row(k, &self.q_r_power(k).transpose());
        }
        let rhs = DVector::from_iterator(n, (0..n).map(|k| derivs.get(k).copied().unwrap_or(0.0)));
        obs.svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(n))
    }
}

/// Plant cascaded with one fault's exo-system.
#[derive(Clone, Debug)]
pub struct AugmentedModel {
    /// Extended model over `(x, x_o)` with `z = Q x_o` and the remaining
    /// faults reclassified as disturbances.
    pub model: PlantModel,
    pub fault: String,
    pub exo: ExoSystem,
    pub exo_states: Vec<String>,
    pub base_states: Vec<String>,
}

pub(super) fn augment(m: &PlantModel, fault: &str, exo: &ExoSystem) -> Result<AugmentedModel, ModelError> {
    if !m.faults.iter().any(|f| f == fault) {
        return Err(ModelError::UnknownFault(fault.to_string()));
    }
    let taken = m.symbols();
    let exo_states: Vec<String> = (1..=exo.order())
        .map(|k| {
            let mut name = format!("{fault}_o{k}");
            while taken.contains(&name) {
                name.push('_');
            }
            name
        })
        .collect();
    let qx = simplify(&Expr::linear_combination(
        exo.q.as_slice(),
        &exo_states.iter().map(|s| Expr::var(s)).collect::<Vec<_>>(),
    ));
    let replace = |e: &Expr| simplify(&e.substitute(&|n| (n == fault).then(|| qx.clone())));

    let mut states = m.states.clone();
    states.extend(exo_states.iter().cloned());
    let mut dynamics: Vec<Expr> = m.dynamics.iter().map(replace).collect();
    let xo: Vec<Expr> = exo_states.iter().map(|s| Expr::var(s)).collect();
    for k in 0..exo.order() {
        let row: Vec<f64> = exo.r.row(k).iter().copied().collect();
        dynamics.push(simplify(&Expr::linear_combination(&row, &xo)));
    }
    let mut disturbances = m.disturbances.clone();
    disturbances.extend(m.faults.iter().filter(|f| *f != fault).cloned());
    let mut boxes = m.boxes.clone();
    boxes.extend(std::iter::repeat_n(Some(Interval::symmetric(1.0)), exo.order()));

    let model = PlantModel {
        states,
        params: m.params.clone(),
        dynamics,
        outputs: m.outputs.iter().map(|(n, e)| (n.clone(), replace(e))).collect(),
        functional: Some(qx),
        disturbances,
        faults: Vec::new(),
        boxes,
    };
    Ok(AugmentedModel {
        model,
        fault: fault.to_string(),
        exo: exo.clone(),
        exo_states,
        base_states: m.states.clone(),
    })
}

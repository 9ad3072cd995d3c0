//! TOML persistence for observer realizations.
//!
//! ```toml
//! order = 1
//! provenance = "decoupled"
//! states = ["cA'", "cB'", "theta'", "thetaJ'"]
//! outputs = ["y1", "y2"]
//! eigenvalues = [[-0.02, 0.0]]
//! alphas = [0.02]
//! betas = [[...], [...]]
//! A = [[-0.02]]
//! B = [[0.0, 0.0501]]
//! C = [1.0]
//! D = [-0.051, -0.00153]
//! T = ["(cA' + cB') + ..."]
//! ```
//!
//! Fault observers add a `[fault]` table with the exo-system.

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use super::{ObserverRealization, Provenance};
use crate::expr::{parse, ParseError, Symbols};
use crate::model::{ExoKind, ExoSystem};

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error("invalid observer document: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("cannot serialize observer: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("T{index}: {source}")]
    Expr {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error("inconsistent observer document: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSection {
    pub symbol: String,
    pub kind: String,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    pub exo_states: Vec<String>,
    pub base_states: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverDocument {
    pub order: usize,
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub states: Vec<String>,
    pub outputs: Vec<String>,
    pub eigenvalues: Vec<[f64; 2]>,
    pub alphas: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultSection>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>, DocumentError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(DocumentError::Shape(format!("{name} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ObserverDocument {
    pub fn from_realization(obs: &ObserverRealization, model: Option<&str>) -> Self {
        let fault = match &obs.provenance {
            Provenance::Fault {
                fault,
                exo,
                exo_states,
                base_states,
            } => Some(FaultSection {
                symbol: fault.clone(),
                kind: exo.kind.to_string(),
                r: rows(&exo.r),
                q: exo.q.iter().copied().collect(),
                exo_states: exo_states.clone(),
                base_states: base_states.clone(),
            }),
            _ => None,
        };
        ObserverDocument {
            order: obs.order,
            provenance: obs.provenance.name().to_string(),
            model: model.map(str::to_string),
            states: obs.states.clone(),
            outputs: obs.outputs.clone(),
            eigenvalues: obs.eigenvalues.iter().map(|l| [l.re, l.im]).collect(),
            alphas: obs.alphas.clone(),
            betas: obs.betas.clone(),
            a: rows(&obs.a),
            b: rows(&obs.b),
            c: obs.c.iter().copied().collect(),
            d: obs.d.iter().copied().collect(),
            t: obs.t.iter().map(|e| e.to_string()).collect(),
            fault,
        }
    }

    pub fn to_realization(&self) -> Result<ObserverRealization, DocumentError> {
        let v = self.order;
        let p = self.d.len();
        if self.alphas.len() != v || self.t.len() != v || self.c.len() != v || self.eigenvalues.len() != v {
            return Err(DocumentError::Shape(format!("order {v} disagrees with alphas/C/T/eigenvalues")));
        }
        if self.betas.len() != v + 1 || self.betas.iter().any(|b| b.len() != p) {
            return Err(DocumentError::Shape(format!("betas must be {}x{p}", v + 1)));
        }
        let symbols: Symbols = self.states.iter().cloned().collect();
        let t = self
            .t
            .iter()
            .enumerate()
            .map(|(k, s)| parse(s, &symbols).map_err(|source| DocumentError::Expr { index: k + 1, source }))
            .collect::<Result<_, _>>()?;
        let provenance = match (self.provenance.as_str(), &self.fault) {
            ("plain", None) => Provenance::Plain,
            ("decoupled", None) => Provenance::Decoupled,
            ("fault", Some(f)) => {
                let n = f.q.len();
                let r = matrix("R", &f.r, n, n)?;
                let q = DVector::from_column_slice(&f.q);
                let mut exo = ExoSystem::custom(r, q).map_err(|e| DocumentError::Shape(e.to_string()))?;
                exo.kind = ExoKind::parse(&f.kind).unwrap_or(ExoKind::Custom);
                Provenance::Fault {
                    fault: f.symbol.clone(),
                    exo,
                    exo_states: f.exo_states.clone(),
                    base_states: f.base_states.clone(),
                }
            }
            (other, _) => {
                return Err(DocumentError::Shape(format!(
                    "provenance `{other}` does not match the presence of a [fault] table"
                )))
            }
        };
        Ok(ObserverRealization {
            order: v,
            alphas: self.alphas.clone(),
            betas: self.betas.clone(),
            eigenvalues: self.eigenvalues.iter().map(|[re, im]| Complex::new(*re, *im)).collect(),
            a: matrix("A", &self.a, v, v)?,
            b: matrix("B", &self.b, v, p)?,
            c: RowDVector::from_row_slice(&self.c),
            d: RowDVector::from_row_slice(&self.d),
            t,
            states: self.states.clone(),
            outputs: self.outputs.clone(),
            provenance,
        })
    }

    pub fn to_toml(&self) -> Result<String, DocumentError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, DocumentError> {
        Ok(toml::from_str(text)?)
    }
}

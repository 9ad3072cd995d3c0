//! Plant descriptions and their structural decomposition.
//!
//! A [`PlantModel`] is the declared system
//!
//! ```text
//! dx/dt = F(x) + G(x) f + E(x) W
//!     y = H(x) + J(x) f + K(x) W
//!     z = q(x)
//! ```
//!
//! written as plain expressions; [`PlantModel::extract_structure`] recovers
//! the individual blocks by differentiating with respect to the disturbance
//! and fault symbols.

mod exo;
pub(crate) mod file;
mod steady;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{self, simplify, Compiled, Env, EvalError, Expr, ParseError, Symbols, VectorField};

pub use exo::{AugmentedModel, ExoKind, ExoSystem};
pub use steady::{OperatingPoint, SteadyStateOptions};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Expr {
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{entry} is not affine in `{symbol}`")]
    NonAffine { symbol: String, entry: String },
    #[error("unknown fault symbol `{0}`")]
    UnknownFault(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),
    #[error("invalid exo-system: {0}")]
    Exo(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Sampling interval for one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn symmetric(r: f64) -> Self {
        Interval { lo: -r, hi: r }
    }

    pub fn shifted(self, by: f64) -> Self {
        Interval {
            lo: self.lo + by,
            hi: self.hi + by,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.hi > self.lo {
            rng.random_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantModel {
    pub states: Vec<String>,
    /// Parameter bindings in declaration order.
    pub params: Vec<(String, f64)>,
    pub dynamics: Vec<Expr>,
    pub outputs: Vec<(String, Expr)>,
    pub functional: Option<Expr>,
    pub disturbances: Vec<String>,
    pub faults: Vec<String>,
    /// Optional per-state sampling ranges.
    pub boxes: Vec<Option<Interval>>,
}

impl PlantModel {
    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn p(&self) -> usize {
        self.outputs.len()
    }

    pub fn param_env(&self) -> Env {
        Env::from_pairs(self.params.iter().map(|(k, v)| (k.clone(), *v)))
    }

    pub fn symbols(&self) -> Symbols {
        self.states
            .iter()
            .chain(self.params.iter().map(|(k, _)| k))
            .chain(&self.disturbances)
            .chain(&self.faults)
            .cloned()
            .collect()
    }

    /// Sampling box, with `default_radius` for states without a range.
    pub fn sampling_box(&self, default_radius: f64) -> Vec<Interval> {
        self.boxes
            .iter()
            .map(|b| b.unwrap_or(Interval::symmetric(default_radius)))
            .collect()
    }

    pub fn output_names(&self) -> Vec<String> {
        self.outputs.iter().map(|(n, _)| n.clone()).collect()
    }

    fn exogenous(&self) -> Vec<String> {
        self.disturbances.iter().chain(&self.faults).cloned().collect()
    }

    /// Checks dimensions and that every dynamics/output entry is affine in
    /// the disturbance and fault symbols, jointly (mixed second derivatives
    /// must vanish too).
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dynamics.len() != self.n() {
            return Err(ModelError::Dimension(format!(
                "{} states but {} dynamics equations",
                self.n(),
                self.dynamics.len()
            )));
        }
        if self.outputs.is_empty() {
            return Err(ModelError::Dimension("at least one output is required".into()));
        }
        if self.boxes.len() != self.n() {
            return Err(ModelError::Dimension("box list does not match states".into()));
        }
        let exo = self.exogenous();
        let entries = self
            .states
            .iter()
            .zip(&self.dynamics)
            .map(|(s, e)| (format!("dynamics of `{s}`"), e))
            .chain(self.outputs.iter().map(|(n, e)| (format!("output `{n}`"), e)));
        let mut slots: Vec<String> = self.states.clone();
        slots.extend(exo.iter().cloned());
        let points = self.random_points(&slots, 20, 0xaff1);
        let consts = self.param_env();
        for (label, e) in entries {
            for (i, s) in exo.iter().enumerate() {
                if !e.depends_on(s) {
                    continue;
                }
                let d = e.diff(s);
                for t in &exo[i..] {
                    let dd = d.diff(t);
                    if dd.is_zero() {
                        continue;
                    }
                    let c = Compiled::new(&dd, &slots, &consts)?;
                    for pt in &points {
                        let v = c.eval(pt)?;
                        if v.abs() > 1e-12 {
                            return Err(ModelError::NonAffine {
                                symbol: if s == t { s.clone() } else { format!("{s}, {t}") },
                                entry: label,
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Seeded random points over `slots`: states from their sampling box,
    /// any other slot from [-1, 1].
    pub fn random_points(&self, slots: &[String], count: usize, seed: u64) -> Vec<Vec<f64>> {
        let boxes = self.sampling_box(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                slots
                    .iter()
                    .map(|s| match self.states.iter().position(|x| x == s) {
                        Some(k) => boxes[k].sample(&mut rng),
                        None => rng.random_range(-1.0..1.0),
                    })
                    .collect()
            })
            .collect()
    }

    /// Decomposes the declared equations into `(F, E, H, K, q, G, J)`.
    pub fn extract_structure(&self) -> ExtractedStructure {
        let exo = self.exogenous();
        let zero_exo = |e: &Expr| simplify(&e.substitute(&|n| exo.iter().any(|s| s == n).then(Expr::zero)));
        let column = |syms: &[String], rows: &[Expr]| -> Vec<Vec<Expr>> {
            syms.iter()
                .map(|s| rows.iter().map(|e| zero_exo(&e.diff(s))).collect())
                .collect()
        };
        let outputs: Vec<Expr> = self.outputs.iter().map(|(_, e)| e.clone()).collect();
        let field = |comps: Vec<Expr>| VectorField::new(self.states.clone(), comps);
        let transpose = |cols: Vec<Vec<Expr>>| -> Vec<Vec<Expr>> {
            (0..outputs.len())
                .map(|j| cols.iter().map(|c| c[j].clone()).collect())
                .collect()
        };
        ExtractedStructure {
            states: self.states.clone(),
            params: self.param_env(),
            drift: field(self.dynamics.iter().map(&zero_exo).collect()),
            e_cols: column(&self.disturbances, &self.dynamics).into_iter().map(field).collect(),
            g_cols: column(&self.faults, &self.dynamics).into_iter().map(field).collect(),
            h: outputs.iter().map(&zero_exo).collect(),
            k: transpose(column(&self.disturbances, &outputs)),
            j: transpose(column(&self.faults, &outputs)),
            q: self.functional.as_ref().map(simplify),
            disturbances: self.disturbances.clone(),
            faults: self.faults.clone(),
            boxes: self.sampling_box(1.0),
        }
    }

    pub fn find_steady_state(&self, guess: &[f64], opts: &SteadyStateOptions) -> Result<OperatingPoint, ModelError> {
        steady::newton(self, guess, opts)
    }

    /// Translates the model so `op` sits at the origin; states are renamed by
    /// appending a prime.
    pub fn to_deviation_form(&self, op: &OperatingPoint) -> PlantModel {
        steady::deviation(self, op, |s| format!("{s}'"))
    }

    pub fn to_deviation_form_named<F: Fn(&str) -> String>(&self, op: &OperatingPoint, rename: F) -> PlantModel {
        steady::deviation(self, op, rename)
    }

    pub fn augment_with_exosystem(&self, fault: &str, exo: &ExoSystem) -> Result<AugmentedModel, ModelError> {
        exo::augment(self, fault, exo)
    }

    pub fn parse(text: &str) -> Result<PlantModel, ModelError> {
        file::parse_model(text)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<PlantModel, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        file::write_model(self)
    }
}

/// `(F, E, H, K, q, G, J)` blocks of a [`PlantModel`].
///
/// `k[j][i]` is the coefficient of disturbance `i` in output `j`; `j_mat`
/// follows the same layout for faults.
#[derive(Clone, Debug)]
pub struct ExtractedStructure {
    pub states: Vec<String>,
    pub params: Env,
    pub drift: VectorField,
    pub e_cols: Vec<VectorField>,
    pub g_cols: Vec<VectorField>,
    pub h: Vec<Expr>,
    pub k: Vec<Vec<Expr>>,
    pub j: Vec<Vec<Expr>>,
    pub q: Option<Expr>,
    pub disturbances: Vec<String>,
    pub faults: Vec<String>,
    pub boxes: Vec<Interval>,
}

impl ExtractedStructure {
    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn p(&self) -> usize {
        self.h.len()
    }

    pub fn m(&self) -> usize {
        self.e_cols.len()
    }

    /// Rebuilds `F + E W + G f` for every state.
    pub fn reassemble_dynamics(&self) -> Vec<Expr> {
        (0..self.n())
            .map(|k| {
                let mut e = self.drift.components()[k].clone();
                for (col, w) in self.e_cols.iter().zip(&self.disturbances) {
                    e = e + col.components()[k].clone() * Expr::var(w);
                }
                for (col, f) in self.g_cols.iter().zip(&self.faults) {
                    e = e + col.components()[k].clone() * Expr::var(f);
                }
                simplify(&e)
            })
            .collect()
    }

    /// Rebuilds `H + K W + J f` for every output.
    pub fn reassemble_outputs(&self) -> Vec<Expr> {
        (0..self.p())
            .map(|j| {
                let mut e = self.h[j].clone();
                for (kji, w) in self.k[j].iter().zip(&self.disturbances) {
                    e = e + kji.clone() * Expr::var(w);
                }
                for (jji, f) in self.j[j].iter().zip(&self.faults) {
                    e = e + jji.clone() * Expr::var(f);
                }
                simplify(&e)
            })
            .collect()
    }
}

/// Seeded uniform points from a box, one coordinate per interval.
pub fn sample_box(boxes: &[Interval], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| boxes.iter().map(|b| b.sample(&mut rng)).collect())
        .collect()
}

/// Largest `|a - b| / (1 + |b|)` over paired expressions and points.
pub fn max_relative_mismatch(
    a: &[Expr],
    b: &[Expr],
    slots: &[String],
    consts: &Env,
    points: &[Vec<f64>],
) -> Result<f64, EvalError> {
    let mut worst: f64 = 0.0;
    for (ea, eb) in a.iter().zip(b) {
        let ca = Compiled::new(ea, slots, consts)?;
        let cb = Compiled::new(eb, slots, consts)?;
        for pt in points {
            let (x, y) = (ca.eval(pt)?, cb.eval(pt)?);
            worst = worst.max((x - y).abs() / (1.0 + y.abs()));
        }
    }
    Ok(worst)
}

pub(crate) fn parse_expr_at(text: &str, symbols: &Symbols, line: usize) -> Result<Expr, ModelError> {
    expr::parse(text, symbols).map_err(|source| ModelError::Expr { line, source })
}

//! Observer synthesis.
//!
//! For an order `v` and assigned characteristic polynomial
//! `s^v + a_1 s^(v-1) + ... + a_v`, the unknowns are constant rows
//! `b_0 .. b_v` (one entry per output). Every existence condition is linear
//! in those rows, so [`assemble_conditions`] turns the conditions into
//! symbolic rows `sum coeff * b_lj = known`, [`solve_betas`] samples the rows
//! and solves the stacked least-squares problem, and [`construct_observer`]
//! builds the companion realization `(A, B, C, D)` and the map `T`.
//!
//! Fault observers use the same machinery on an [`AugmentedModel`]: the
//! drift already carries `G Q x_o` and the exo dynamics, the functional is
//! `Q x_o`, and the `x_o`-only terms are written in closed form through
//! `Q R^k`.

mod conditions;
mod document;
mod observer;
mod solve;

use nalgebra::Complex;

use crate::expr::EvalError;
use crate::model::{AugmentedModel, ExoSystem, ExtractedStructure, Interval, ModelError, PlantModel};

pub use conditions::{assemble_conditions, ConditionKind, ConditionRow, ConditionSet};
pub use document::{DocumentError, FaultSection, ObserverDocument};
pub use observer::{
    companion, construct_observer, verify_conditions, ConditionReport, Family, FamilyResidual, ObserverRealization,
    Provenance, RowResidual,
};
pub use solve::{solve_betas, BetaSolution};

#[derive(Debug, thiserror::Error)]
pub enum DesignError {
    #[error("eigenvalue {0} has no conjugate partner")]
    NotConjugateClosed(Complex<f64>),
    #[error("eigenvalue {0} is not in the open left half-plane")]
    Unstable(Complex<f64>),
    #[error("at least one eigenvalue is required")]
    NoEigenvalues,
    #[error("cannot parse eigenvalue `{0}`")]
    BadEigenvalue(String),
    #[error("the functional q is not declared")]
    NoFunctional,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no feasible observer up to order {}: {}", .attempts.last().map_or(0, |a| a.order), summarize(.attempts))]
    Infeasible { attempts: Vec<Attempt> },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn summarize(attempts: &[Attempt]) -> String {
    attempts
        .iter()
        .map(|a| format!("v={} residual {:.3e}", a.order, a.residual))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Outcome of one order tried by [`design_end_to_end`].
#[derive(Clone, Debug, PartialEq)]
pub struct Attempt {
    pub order: usize,
    pub residual: f64,
    pub threshold: f64,
    pub feasible: bool,
}

/// Monic characteristic-polynomial coefficients `a_1 .. a_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaCoeffs(pub Vec<f64>);

impl AlphaCoeffs {
    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// `a_l` with `a_0 = 1`.
    pub fn get(&self, l: usize) -> f64 {
        if l == 0 {
            1.0
        } else {
            self.0[l - 1]
        }
    }
}

/// Expands `prod (s - lambda)` over a conjugate-closed, strictly stable set.
pub fn alphas_from_eigenvalues(eigs: &[Complex<f64>]) -> Result<AlphaCoeffs, DesignError> {
    if eigs.is_empty() {
        return Err(DesignError::NoEigenvalues);
    }
    if let Some(l) = eigs.iter().find(|l| !(l.re < 0.0) || !l.im.is_finite()) {
        return Err(DesignError::Unstable(*l));
    }
    let mut used = vec![false; eigs.len()];
    // coefficients in descending powers, leading 1
    let mut poly = vec![1.0];
    let mut mul = |factor: &[f64]| {
        let mut out = vec![0.0; poly.len() + factor.len() - 1];
        for (i, a) in poly.iter().enumerate() {
            for (j, b) in factor.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        poly = out;
    };
    for i in 0..eigs.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let l = eigs[i];
        if l.im == 0.0 {
            mul(&[1.0, -l.re]);
            continue;
        }
        let tol = 1e-12 * (1.0 + l.norm());
        let partner = (0..eigs.len()).find(|&j| !used[j] && (eigs[j] - l.conj()).norm() <= tol);
        match partner {
            Some(j) => {
                used[j] = true;
                mul(&[1.0, -2.0 * l.re, l.norm_sqr()]);
            }
            None => return Err(DesignError::NotConjugateClosed(l)),
        }
    }
    Ok(AlphaCoeffs(poly[1..].to_vec()))
}

/// Parses a comma-separated eigenvalue list such as `-1, -2+0.5i, -2-0.5i`.
pub fn parse_eigenvalues(text: &str) -> Result<Vec<Complex<f64>>, DesignError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_complex)
        .collect()
}

fn parse_complex(s: &str) -> Result<Complex<f64>, DesignError> {
    let bad = || DesignError::BadEigenvalue(s.to_string());
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let Some(body) = compact.strip_suffix(['i', 'j']) else {
        return compact.parse().map(|re| Complex::new(re, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        other => other,
    };
    Ok(Complex::new(re.parse().map_err(|_| bad())?, im.parse().map_err(|_| bad())?))
}

/// Solver settings for one design.
#[derive(Clone, Debug)]
pub struct DesignSpec {
    pub eigenvalues: Vec<Complex<f64>>,
    /// Training sample count; `None` means `20 (v + 1) p`.
    pub samples: Option<usize>,
    /// Sampling box override; `None` uses the model's box.
    pub sampling_box: Option<Vec<Interval>>,
    pub tol: f64,
    pub seed: u64,
}

impl DesignSpec {
    pub fn new(eigenvalues: Vec<Complex<f64>>) -> Self {
        DesignSpec {
            eigenvalues,
            samples: None,
            sampling_box: None,
            tol: 1e-6,
            seed: 1,
        }
    }

    pub fn real(eigenvalues: &[f64]) -> Self {
        Self::new(eigenvalues.iter().map(|&re| Complex::new(re, 0.0)).collect())
    }

    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn sample_count(&self, p: usize) -> usize {
        self.samples.unwrap_or(20 * (self.order() + 1) * p)
    }

    /// Spectrum used when the search moves to order `v`: the requested
    /// eigenvalues, padded with copies of the slowest real one (or `-1`).
    pub fn at_order(&self, v: usize) -> DesignSpec {
        let mut eigs: Vec<Complex<f64>> = self.eigenvalues.iter().copied().take(v).collect();
        let pad = self
            .eigenvalues
            .iter()
            .filter(|l| l.im == 0.0)
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .copied()
            .unwrap_or(Complex::new(-1.0, 0.0));
        while eigs.len() < v {
            eigs.push(pad);
        }
        DesignSpec {
            eigenvalues: eigs,
            ..self.clone()
        }
    }
}

/// What the observer should estimate.
#[derive(Clone, Debug)]
pub enum Target {
    /// The declared functional `q`, optionally decoupled from every
    /// disturbance.
    Functional { decouple: bool },
    /// One fault, modelled by an exo-system; the remaining faults join the
    /// disturbances and everything is decoupled.
    Fault { fault: String, exo: ExoSystem },
}

/// Design problem after model preparation: the structure the conditions are
/// written on, plus the exo-system context for fault targets.
#[derive(Clone, Debug)]
pub struct Problem {
    pub structure: ExtractedStructure,
    pub decouple: bool,
    pub fault: Option<FaultContext>,
}

#[derive(Clone, Debug)]
pub struct FaultContext {
    pub fault: String,
    pub exo: ExoSystem,
    pub exo_states: Vec<String>,
    pub base_states: Vec<String>,
}

impl Problem {
    pub fn new(model: &PlantModel, target: &Target) -> Result<Problem, DesignError> {
        match target {
            Target::Functional { decouple } => {
                if model.functional.is_none() {
                    return Err(DesignError::NoFunctional);
                }
                Ok(Problem {
                    structure: model.extract_structure(),
                    decouple: *decouple,
                    fault: None,
                })
            }
            Target::Fault { fault, exo } => {
                let aug = model.augment_with_exosystem(fault, exo)?;
                Ok(Problem::from_augmented(&aug))
            }
        }
    }

    pub fn from_augmented(aug: &AugmentedModel) -> Problem {
        Problem {
            structure: aug.model.extract_structure(),
            decouple: true,
            fault: Some(FaultContext {
                fault: aug.fault.clone(),
                exo: aug.exo.clone(),
                exo_states: aug.exo_states.clone(),
                base_states: aug.base_states.clone(),
            }),
        }
    }
}

/// Result of [`design_end_to_end`].
#[derive(Clone, Debug)]
pub struct Design {
    pub observer: ObserverRealization,
    pub solution: BetaSolution,
    pub report: ConditionReport,
    pub attempts: Vec<Attempt>,
}

/// Extract, assemble, solve, construct and verify, trying orders from the
/// spec's order up to `v_max`.
pub fn design_end_to_end(
    model: &PlantModel,
    target: &Target,
    spec: &DesignSpec,
    v_max: usize,
) -> Result<Design, DesignError> {
    let problem = Problem::new(model, target)?;
    design_problem(&problem, spec, v_max)
}

pub fn design_problem(problem: &Problem, spec: &DesignSpec, v_max: usize) -> Result<Design, DesignError> {
    let v0 = spec.order();
    if v0 == 0 {
        return Err(DesignError::NoEigenvalues);
    }
    let mut attempts = Vec::new();
    for v in v0..=v_max.max(v0) {
        let spec_v = spec.at_order(v);
        let alphas = alphas_from_eigenvalues(&spec_v.eigenvalues)?;
        let rows = assemble_conditions(&problem.structure, &alphas, problem.decouple, problem.fault.as_ref());
        let solution = solve_betas(&rows, &problem.structure, &spec_v)?;
        attempts.push(Attempt {
            order: v,
            residual: solution.verification_residual,
            threshold: solution.threshold,
            feasible: solution.feasible,
        });
        if !solution.feasible {
            continue;
        }
        let observer = construct_observer(problem, &alphas, &solution.betas, &spec_v.eigenvalues)?;
        let report = verify_conditions(problem, &observer, 200, spec_v.seed ^ 0x9e37_79b9, spec_v.tol)?;
        return Ok(Design {
            observer,
            solution,
            report,
            attempts,
        });
    }
    Err(DesignError::Infeasible { attempts })
}

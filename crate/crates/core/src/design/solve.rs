use nalgebra::{DMatrix, DVector};

use super::{ConditionSet, DesignError, DesignSpec};
use crate::expr::Compiled;
use crate::model::{sample_box, ExtractedStructure};

/// Relative singular-value cutoff for rank decisions.
const RANK_CUTOFF: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct BetaSolution {
    /// `betas[l][j]`, rows `b_0 .. b_v`.
    pub betas: Vec<Vec<f64>>,
    pub training_residual: f64,
    /// `max |M' b - r'|` on fresh samples.
    pub verification_residual: f64,
    /// `tol (1 + max |r'|)`.
    pub threshold: f64,
    pub nullspace_dim: usize,
    pub samples: usize,
    pub feasible: bool,
}

struct CompiledRow {
    known: Compiled,
    coeffs: Vec<(usize, Compiled)>,
}

fn compile(set: &ConditionSet, s: &ExtractedStructure) -> Result<Vec<CompiledRow>, DesignError> {
    set.rows
        .iter()
        .filter(|r| !r.is_vacuous())
        .map(|r| {
            let known = Compiled::new(&r.known, &s.states, &s.params)?;
            let coeffs = r
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(k, c)| Ok((k, Compiled::new(c, &s.states, &s.params)?)))
                .collect::<Result<_, DesignError>>()?;
            Ok(CompiledRow { known, coeffs })
        })
        .collect()
}

fn stack(rows: &[CompiledRow], points: &[Vec<f64>], unknowns: usize) -> Result<(DMatrix<f64>, DVector<f64>), DesignError> {
    let mut m = DMatrix::zeros(rows.len() * points.len(), unknowns);
    let mut r = DVector::zeros(rows.len() * points.len());
    let mut st = Vec::new();
    let mut k = 0;
    for pt in points {
        for row in rows {
            r[k] = row.known.eval_with(pt, &mut st)?;
            for (col, c) in &row.coeffs {
                m[(k, *col)] = c.eval_with(pt, &mut st)?;
            }
            k += 1;
        }
    }
    Ok((m, r))
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Seeded sampled least squares for the stacked conditions.
///
/// Each stacked equation is scaled to unit size for the factorization only;
/// the minimum-norm solution of a consistent system does not depend on row
/// scaling, and the reported residuals are unscaled.
pub fn solve_betas(set: &ConditionSet, s: &ExtractedStructure, spec: &DesignSpec) -> Result<BetaSolution, DesignError> {
    let v = set.order;
    let p = set.outputs;
    let unknowns = set.unknowns();
    let rows = compile(set, s)?;
    let count = spec.sample_count(p).max(1);
    let boxes = spec.sampling_box.as_deref().unwrap_or(&s.boxes);
    let train = sample_box(boxes, count, spec.seed);
    let fresh = sample_box(boxes, count, spec.seed.wrapping_add(0x5bd1_e995));

    let (m, r) = stack(&rows, &train, unknowns)?;
    let (beta, nullspace_dim) = if m.nrows() == 0 {
        (DVector::zeros(unknowns), unknowns)
    } else {
        min_norm(&m, &r)
    };
    let training_residual = inf_norm(&(&m * &beta - &r));
    let (mv, rv) = stack(&rows, &fresh, unknowns)?;
    let verification_residual = inf_norm(&(&mv * &beta - &rv));
    let threshold = spec.tol * (1.0 + inf_norm(&rv));
    let betas = (0..=v).map(|l| beta.as_slice()[l * p..(l + 1) * p].to_vec()).collect();
    Ok(BetaSolution {
        betas,
        training_residual,
        verification_residual,
        threshold,
        nullspace_dim,
        samples: count,
        feasible: verification_residual.is_finite() && verification_residual <= threshold,
    })
}

fn min_norm(m: &DMatrix<f64>, r: &DVector<f64>) -> (DVector<f64>, usize) {
    let mut ms = m.clone();
    let mut rs = r.clone();
    for k in 0..ms.nrows() {
        let scale = ms.row(k).iter().chain(std::iter::once(&rs[k])).fold(0.0f64, |a, x| a.max(x.abs()));
        if scale > 0.0 {
            ms.row_mut(k).scale_mut(1.0 / scale);
            rs[k] /= scale;
        }
    }
    let svd = ms.svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |a, s| a.max(*s));
    let cutoff = RANK_CUTOFF * smax;
    let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
    let beta = if smax == 0.0 {
        DVector::zeros(m.ncols())
    } else {
        svd.solve(&rs, cutoff).unwrap_or_else(|_| DVector::zeros(m.ncols()))
    };
    (beta, m.ncols() - rank)
}

pub(super) fn sample_points(s: &ExtractedStructure, count: usize, seed: u64) -> Vec<Vec<f64>> {
    sample_box(&s.boxes, count, seed)
}

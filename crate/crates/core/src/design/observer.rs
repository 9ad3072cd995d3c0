use nalgebra::{Complex, DMatrix, DVector, RowDVector};

use super::conditions::exo_polynomial;
use super::solve::sample_points;
use super::{assemble_conditions, AlphaCoeffs, DesignError, FaultContext, Problem};
use crate::expr::{lie, lie_along, simplify, Compiled, Expr};
use crate::model::{ExoSystem, ExtractedStructure};

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Plain,
    Decoupled,
    Fault {
        fault: String,
        exo: ExoSystem,
        exo_states: Vec<String>,
        base_states: Vec<String>,
    },
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::Plain => "plain",
            Provenance::Decoupled => "decoupled",
            Provenance::Fault { .. } => "fault",
        }
    }
}

/// `dxi/dt = A xi + B y`, `zhat = C xi + D y`, with `xi - T(x)` obeying
/// `d/dt e = A e`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObserverRealization {
    pub order: usize,
    pub alphas: Vec<f64>,
    pub betas: Vec<Vec<f64>>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: RowDVector<f64>,
    pub d: RowDVector<f64>,
    /// Components of `T`, with parameters bound, over `states`.
    pub t: Vec<Expr>,
    pub states: Vec<String>,
    pub outputs: Vec<String>,
    pub provenance: Provenance,
}

impl ObserverRealization {
    pub fn p(&self) -> usize {
        self.d.len()
    }

    /// `T(point)` where `point` follows `self.states`.
    pub fn eval_t(&self, point: &[f64]) -> Result<DVector<f64>, DesignError> {
        let consts = crate::expr::Env::new();
        let mut out = DVector::zeros(self.order);
        for (k, tk) in self.t.iter().enumerate() {
            out[k] = Compiled::new(tk, &self.states, &consts)?.eval(point)?;
        }
        Ok(out)
    }
}

/// Companion matrix with `A[k][k-1] = 1` and last column `-a_v .. -a_1`.
pub fn companion(alphas: &AlphaCoeffs) -> DMatrix<f64> {
    let v = alphas.order();
    let mut a = DMatrix::zeros(v, v);
    for k in 0..v {
        if k > 0 {
            a[(k, k - 1)] = 1.0;
        }
        a[(k, v - 1)] = -alphas.get(v - k);
    }
    a
}

fn lf_chains(s: &ExtractedStructure, v: usize) -> Vec<Vec<Expr>> {
    s.h.iter()
        .map(|h| {
            let mut chain = vec![h.clone()];
            for k in 1..=v {
                chain.push(lie_along(&chain[k - 1], &s.drift));
            }
            chain
        })
        .collect()
}

/// Builds `(A, B, C, D)` and `T` from solved rows `b_0 .. b_v`.
pub fn construct_observer(
    problem: &Problem,
    alphas: &AlphaCoeffs,
    betas: &[Vec<f64>],
    eigenvalues: &[Complex<f64>],
) -> Result<ObserverRealization, DesignError> {
    let s = &problem.structure;
    let v = alphas.order();
    let p = s.p();
    if betas.len() != v + 1 || betas.iter().any(|b| b.len() != p) {
        return Err(DesignError::Dimension(format!(
            "expected {} rows of {p} entries, got {:?}",
            v + 1,
            betas.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    let a = companion(alphas);
    let mut b = DMatrix::zeros(v, p);
    for k in 0..v {
        let l = v - k;
        for j in 0..p {
            b[(k, j)] = betas[l][j] - alphas.get(l) * betas[0][j];
        }
    }
    let mut c = RowDVector::zeros(v);
    c[v - 1] = 1.0;
    let d = RowDVector::from_row_slice(&betas[0]);

    let lf_h = lf_chains(s, v);
    let q = s.q.clone().unwrap_or_else(Expr::zero);
    let q_part = |m: usize| -> Expr {
        match &problem.fault {
            Some(fc) => exo_polynomial(fc, alphas, m),
            None => Expr::sum((0..=m).map(|l| Expr::Const(alphas.get(l)) * lie(&q, &s.drift, m - l))),
        }
    };
    let t = (1..=v)
        .map(|k| {
            let m = v - k;
            let mut e = q_part(m);
            for l in 0..=m {
                for j in 0..p {
                    if betas[l][j] != 0.0 {
                        e = e - Expr::Const(betas[l][j]) * lf_h[j][m - l].clone();
                    }
                }
            }
            simplify(&e.bind(&s.params))
        })
        .collect();
    Ok(ObserverRealization {
        order: v,
        alphas: alphas.0.clone(),
        betas: betas.to_vec(),
        eigenvalues: eigenvalues.to_vec(),
        a,
        b,
        c,
        d,
        t,
        states: s.states.clone(),
        outputs: output_names(problem),
        provenance: provenance(problem),
    })
}

fn output_names(problem: &Problem) -> Vec<String> {
    (1..=problem.structure.p()).map(|j| format!("y{j}")).collect()
}

fn provenance(problem: &Problem) -> Provenance {
    match &problem.fault {
        Some(FaultContext {
            fault,
            exo,
            exo_states,
            base_states,
        }) => Provenance::Fault {
            fault: fault.clone(),
            exo: exo.clone(),
            exo_states: exo_states.clone(),
            base_states: base_states.clone(),
        },
        None if problem.decouple => Provenance::Decoupled,
        None => Provenance::Plain,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// `dT/dx F - A T - B H`
    Pde,
    /// `q - C T - D H`
    Output,
    /// `dT/dx E_i - B K_i`
    Decoupling,
    /// `D K_i`
    Feedthrough,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Pde, Family::Output, Family::Decoupling, Family::Feedthrough];

    pub fn label(self) -> &'static str {
        match self {
            Family::Pde => "dT/dx F = A T + B H",
            Family::Output => "q = C T + D H",
            Family::Decoupling => "dT/dx E = B K",
            Family::Feedthrough => "D K = 0",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowResidual {
    pub label: String,
    pub family: Option<Family>,
    /// One residual per sample.
    pub values: Vec<f64>,
    pub max: f64,
    pub rms: f64,
    /// Largest magnitude of any term entering the residual.
    pub scale: f64,
}

impl RowResidual {
    fn new(label: String, family: Option<Family>, values: Vec<f64>, scale: f64) -> Self {
        let max = values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let rms = if values.is_empty() {
            0.0
        } else {
            (values.iter().map(|x| x * x).sum::<f64>() / values.len() as f64).sqrt()
        };
        RowResidual {
            label,
            family,
            values,
            max,
            rms,
            scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FamilyResidual {
    pub family: Family,
    pub rows: usize,
    pub max: f64,
    pub rms: f64,
    pub scale: f64,
}

impl FamilyResidual {
    pub fn passes(&self, tol: f64) -> bool {
        self.max <= tol * (1.0 + self.scale)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub samples: usize,
    pub tol: f64,
    /// The assembled existence conditions evaluated at the observer's rows.
    pub conditions: Vec<RowResidual>,
    /// Component-wise observer identities.
    pub identities: Vec<RowResidual>,
    pub families: Vec<FamilyResidual>,
}

impl ConditionReport {
    pub fn family(&self, f: Family) -> &FamilyResidual {
        self.families.iter().find(|r| r.family == f).expect("every family is reported")
    }

    pub fn max_residual(&self) -> f64 {
        self.families.iter().fold(0.0, |a, f| a.max(f.max))
    }

    pub fn passed(&self) -> bool {
        self.families.iter().all(|f| f.passes(self.tol))
    }
}

/// Sum of terms compiled separately so the residual scale can be reported.
struct Terms(Vec<(f64, Compiled)>);

impl Terms {
    fn new(terms: Vec<(f64, Expr)>, s: &ExtractedStructure) -> Result<Terms, DesignError> {
        let compiled = terms
            .into_iter()
            .filter(|(w, e)| *w != 0.0 && !e.is_zero())
            .map(|(w, e)| Ok((w, Compiled::new(&e, &s.states, &s.params)?)))
            .collect::<Result<_, DesignError>>()?;
        Ok(Terms(compiled))
    }

    fn eval(&self, pt: &[f64], st: &mut Vec<f64>) -> Result<(f64, f64), DesignError> {
        let mut sum = 0.0;
        let mut scale: f64 = 0.0;
        for (w, c) in &self.0 {
            let t = w * c.eval_with(pt, st)?;
            sum += t;
            scale = scale.max(t.abs());
        }
        Ok((sum, scale))
    }
}

/// Evaluates the observer identities and the assembled conditions at
/// `samples` seeded points of the structure's box.
pub fn verify_conditions(
    problem: &Problem,
    obs: &ObserverRealization,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<ConditionReport, DesignError> {
    let s = &problem.structure;
    let v = obs.order;
    let p = s.p();
    if obs.p() != p || obs.states != s.states {
        return Err(DesignError::Dimension(format!(
            "observer over {:?} with {} outputs does not match model over {:?} with {p} outputs",
            obs.states,
            obs.p(),
            s.states
        )));
    }
    let q = s.q.clone().unwrap_or_else(Expr::zero);
    let mut rows: Vec<(String, Option<Family>, Terms)> = Vec::new();
    for k in 0..v {
        let mut terms = vec![(1.0, lie_along(&obs.t[k], &s.drift))];
        terms.extend((0..v).map(|l| (-obs.a[(k, l)], obs.t[l].clone())));
        terms.extend((0..p).map(|j| (-obs.b[(k, j)], s.h[j].clone())));
        rows.push((format!("pde T{}", k + 1), Some(Family::Pde), Terms::new(terms, s)?));
    }
    let mut terms = vec![(1.0, q.clone())];
    terms.extend((0..v).map(|l| (-obs.c[l], obs.t[l].clone())));
    terms.extend((0..p).map(|j| (-obs.d[j], s.h[j].clone())));
    rows.push(("output".into(), Some(Family::Output), Terms::new(terms, s)?));
    // Decoupling identities are only imposed when the design asked for them.
    let channels = if problem.decouple { s.e_cols.len() } else { 0 };
    for (i, e) in s.e_cols.iter().enumerate().take(channels) {
        let w = &s.disturbances[i];
        for k in 0..v {
            let mut terms = vec![(1.0, lie_along(&obs.t[k], e))];
            terms.extend((0..p).map(|j| (-obs.b[(k, j)], s.k[j][i].clone())));
            rows.push((format!("decoupling T{} {w}", k + 1), Some(Family::Decoupling), Terms::new(terms, s)?));
        }
        let terms = (0..p).map(|j| (obs.d[j], s.k[j][i].clone())).collect();
        rows.push((format!("feedthrough {w}"), Some(Family::Feedthrough), Terms::new(terms, s)?));
    }

    let alphas = AlphaCoeffs(obs.alphas.clone());
    let set = assemble_conditions(s, &alphas, problem.decouple, problem.fault.as_ref());
    for r in &set.rows {
        let mut terms = vec![(-1.0, r.known.clone())];
        for (idx, c) in r.coeffs.iter().enumerate() {
            terms.push((obs.betas[idx / p][idx % p], c.clone()));
        }
        rows.push((r.label.clone(), None, Terms::new(terms, s)?));
    }

    let points = sample_points(s, samples, seed);
    let mut st = Vec::new();
    let mut identities = Vec::new();
    let mut conditions = Vec::new();
    for (label, family, terms) in rows {
        let mut values = Vec::with_capacity(points.len());
        let mut scale: f64 = 0.0;
        for pt in &points {
            let (r, sc) = terms.eval(pt, &mut st)?;
            values.push(r);
            scale = scale.max(sc);
        }
        let row = RowResidual::new(label, family, values, scale);
        if family.is_some() {
            identities.push(row);
        } else {
            conditions.push(row);
        }
    }
    let families = Family::ALL
        .iter()
        .map(|&f| {
            let members: Vec<&RowResidual> = identities.iter().filter(|r| r.family == Some(f)).collect();
            let n: usize = members.iter().map(|r| r.values.len()).sum();
            let sq: f64 = members.iter().flat_map(|r| &r.values).map(|x| x * x).sum();
            FamilyResidual {
                family: f,
                rows: members.len(),
                max: members.iter().fold(0.0, |a, r| a.max(r.max)),
                rms: if n == 0 { 0.0 } else { (sq / n as f64).sqrt() },
                scale: members.iter().fold(0.0, |a, r| a.max(r.scale)),
            }
        })
        .collect();
    Ok(ConditionReport {
        samples: points.len(),
        tol,
        conditions,
        identities,
        families,
    })
}

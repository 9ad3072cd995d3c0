use super::{AlphaCoeffs, FaultContext};
use crate::expr::{lie, lie_along, simplify, Expr};
use crate::model::ExtractedStructure;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConditionKind {
    /// `sum_l L_F^(v-l)(b_l H) = L_F^v q + sum_l a_l L_F^(v-l) q`.
    Functional,
    /// Disturbance row for `kappa` in `1..=v` and channel `channel`.
    Decoupling { kappa: usize, channel: usize },
    /// `b_0 K_i = 0`.
    Feedthrough { channel: usize },
}

/// One scalar identity in `x`, linear in the unknown rows:
/// `sum_(l, j) coeffs[l p + j] * b_lj = known`.
#[derive(Clone, Debug)]
pub struct ConditionRow {
    pub kind: ConditionKind,
    pub label: String,
    pub known: Expr,
    pub coeffs: Vec<Expr>,
}

impl ConditionRow {
    /// Both sides vanish identically (e.g. feedthrough rows with `K = 0`).
    pub fn is_vacuous(&self) -> bool {
        self.known.is_zero() && self.coeffs.iter().all(Expr::is_zero)
    }
}

#[derive(Clone, Debug)]
pub struct ConditionSet {
    pub order: usize,
    pub outputs: usize,
    pub alphas: AlphaCoeffs,
    pub rows: Vec<ConditionRow>,
}

impl ConditionSet {
    pub fn unknowns(&self) -> usize {
        (self.order + 1) * self.outputs
    }
}

/// `sum_(l=0..=k) a_l Q R^(k-l) x_o` as an expression in the exo states.
pub(super) fn exo_polynomial(fault: &FaultContext, alphas: &AlphaCoeffs, k: usize) -> Expr {
    let n = fault.exo.order();
    let mut row = vec![0.0; n];
    for l in 0..=k {
        let term = fault.exo.q_r_power(k - l);
        for (r, t) in row.iter_mut().zip(term.iter()) {
            *r += alphas.get(l) * t;
        }
    }
    let xo: Vec<Expr> = fault.exo_states.iter().map(|s| Expr::var(s)).collect();
    simplify(&Expr::linear_combination(&row, &xo))
}

/// Builds every existence condition for order `alphas.order()`.
///
/// With `fault` set, the functional is `Q x_o` on the augmented state and
/// the `q`-terms are written in closed form: the right side of the
/// functional row is `Q (R^v + a_1 R^(v-1) + ... + a_v I) x_o` and the
/// decoupling rows have zero right side.
pub fn assemble_conditions(
    s: &ExtractedStructure,
    alphas: &AlphaCoeffs,
    decouple: bool,
    fault: Option<&FaultContext>,
) -> ConditionSet {
    let v = alphas.order();
    let p = s.p();
    let f = &s.drift;
    let q = s.q.clone().unwrap_or_else(Expr::zero);
    // lf_h[j][k] = L_F^k H_j
    let lf_h: Vec<Vec<Expr>> = s
        .h
        .iter()
        .map(|h| {
            let mut chain = vec![h.clone()];
            for k in 1..=v {
                chain.push(lie_along(&chain[k - 1], f));
            }
            chain
        })
        .collect();
    let lf_q: Vec<Expr> = if fault.is_some() {
        Vec::new()
    } else {
        (0..=v).map(|k| lie(&q, f, k)).collect()
    };
    let q_combo = |k: usize| -> Expr {
        match fault {
            Some(fc) => exo_polynomial(fc, alphas, k),
            None => simplify(&Expr::sum((0..=k).map(|l| {
                let a = alphas.get(l);
                if a == 1.0 {
                    lf_q[k - l].clone()
                } else {
                    Expr::Const(a) * lf_q[k - l].clone()
                }
            }))),
        }
    };
    let idx = |l: usize, j: usize| l * p + j;
    let blank = || vec![Expr::zero(); (v + 1) * p];

    let mut rows = Vec::new();
    let mut coeffs = blank();
    for l in 0..=v {
        for j in 0..p {
            coeffs[idx(l, j)] = lf_h[j][v - l].clone();
        }
    }
    rows.push(ConditionRow {
        kind: ConditionKind::Functional,
        label: "functional".into(),
        known: q_combo(v),
        coeffs,
    });

    if decouple {
        for (i, e) in s.e_cols.iter().enumerate() {
            let w = &s.disturbances[i];
            for kappa in 1..=v {
                let mut coeffs = blank();
                for l in 0..=(v - kappa) {
                    for j in 0..p {
                        coeffs[idx(l, j)] = lie_along(&lf_h[j][v - kappa - l], e);
                    }
                }
                for j in 0..p {
                    coeffs[idx(v - kappa + 1, j)] = s.k[j][i].clone();
                }
                let known = match fault {
                    Some(_) => Expr::zero(),
                    None => lie_along(&q_combo(v - kappa), e),
                };
                rows.push(ConditionRow {
                    kind: ConditionKind::Decoupling { kappa, channel: i },
                    label: format!("decoupling kappa={kappa} {w}"),
                    known,
                    coeffs,
                });
            }
        }
        for (i, w) in s.disturbances.iter().enumerate() {
            let mut coeffs = blank();
            for j in 0..p {
                coeffs[idx(0, j)] = s.k[j][i].clone();
            }
            rows.push(ConditionRow {
                kind: ConditionKind::Feedthrough { channel: i },
                label: format!("feedthrough {w}"),
                known: Expr::zero(),
                coeffs,
            });
        }
    }
    ConditionSet {
        order: v,
        outputs: p,
        alphas: alphas.clone(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{equivalent, parse, Env};
    use crate::model::PlantModel;

    fn toy(text: &str) -> ExtractedStructure {
        PlantModel::parse(text).unwrap().extract_structure()
    }

    fn same(a: &Expr, b: &str, vars: &[&str], syms: &[&str]) -> bool {
        let b = parse(b, &syms.iter().copied().collect()).unwrap();
        equivalent(a, &b, vars, &Env::new(), 50, 1e-9)
    }

    #[test]
    fn first_order_plain_row() {
        let s = toy("[states]\nx1 x2\n[dynamics]\nx1' = -x1 + x2\nx2' = -2*x2\n[outputs]\ny = x2\n[functional]\nz = x1\n");
        let set = assemble_conditions(&s, &AlphaCoeffs(vec![1.0]), false, None);
        assert_eq!(set.rows.len(), 1);
        let r = &set.rows[0];
        let v = ["x1", "x2"];
        // L_F q + q = (-x1 + x2) + x1
        assert!(same(&r.known, "x2", &v, &v));
        // b_0 L_F H + b_1 H
        assert!(same(&r.coeffs[0], "-2*x2", &v, &v));
        assert!(same(&r.coeffs[1], "x2", &v, &v));
    }

    #[test]
    fn decoupling_rows_with_zero_feedthrough() {
        let s = toy(
            "[states]\nx1 x2\n[dynamics]\nx1' = -x1 + x2\nx2' = -2*x2 + w\n[outputs]\ny = x2\n[functional]\nz = x1\n[disturbances]\nw\n",
        );
        let set = assemble_conditions(&s, &AlphaCoeffs(vec![1.0]), true, None);
        assert_eq!(set.rows.len(), 3);
        let dec = &set.rows[1];
        assert_eq!(dec.kind, ConditionKind::Decoupling { kappa: 1, channel: 0 });
        // L_E(b_0 H) + b_1 K = L_E q
        assert_eq!(dec.coeffs[0], Expr::one());
        assert!(dec.coeffs[1].is_zero());
        assert!(dec.known.is_zero());
        assert!(set.rows[2].is_vacuous());
    }

    #[test]
    fn decoupling_row_count_at_order_two() {
        let s = toy(
            "[states]\nx1 x2\n[dynamics]\nx1' = x2 + w1\nx2' = -x1 + w2\n[outputs]\ny1 = x1\ny2 = x2 + w1\n[functional]\nz = x1\n[disturbances]\nw1 w2\n",
        );
        let set = assemble_conditions(&s, &AlphaCoeffs(vec![3.0, 2.0]), true, None);
        // 1 functional + v*m decoupling + m feedthrough
        assert_eq!(set.rows.len(), 1 + 2 * 2 + 2);
        assert_eq!(set.unknowns(), 6);
        let kappa2 = set
            .rows
            .iter()
            .find(|r| r.kind == ConditionKind::Decoupling { kappa: 2, channel: 0 })
            .unwrap();
        // L_E1(b_0 H) + b_1 K_1: K_1 = (0, 1) lands on b_1 of output 2
        assert_eq!(kappa2.coeffs[0], Expr::one());
        assert_eq!(kappa2.coeffs[3], Expr::one());
        assert!(kappa2.coeffs[2].is_zero());
        assert_eq!(kappa2.known, Expr::one());
    }
}

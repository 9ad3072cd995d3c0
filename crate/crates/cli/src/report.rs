//! Human-readable report formatting. Numbers are shown to 6 significant
//! digits; documents keep full precision.

use ddfo::design::{Attempt, ConditionReport, Design, Family, ObserverRealization};
use nalgebra::DMatrix;

pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let s = format!("{:.*}", (5 - mag).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

pub fn row(v: impl IntoIterator<Item = f64>) -> String {
    let items: Vec<String> = v.into_iter().map(sig6).collect();
    format!("[{}]", items.join(", "))
}

pub fn matrix(name: &str, m: &DMatrix<f64>) -> String {
    let cells: Vec<Vec<String>> = m.row_iter().map(|r| r.iter().map(|x| sig6(*x)).collect()).collect();
    let width = cells.iter().flatten().map(String::len).max().unwrap_or(1);
    let mut s = String::new();
    for (i, r) in cells.iter().enumerate() {
        let lead = if i == 0 { format!("{name} =") } else { String::new() };
        let body: Vec<String> = r.iter().map(|c| format!("{c:>width$}")).collect();
        s.push_str(&format!("{lead:<5}[ {} ]\n", body.join("  ")));
    }
    s
}

pub fn observer(obs: &ObserverRealization) -> String {
    let mut s = String::new();
    let eigs: Vec<String> = obs
        .eigenvalues
        .iter()
        .map(|l| if l.im == 0.0 { sig6(l.re) } else { format!("{}{:+}i", sig6(l.re), sig6(l.im)) })
        .collect();
    s.push_str(&format!("order {}, eigenvalues {}\n", obs.order, eigs.join(", ")));
    s.push_str(&format!("alphas = {}\n", row(obs.alphas.iter().copied())));
    for (l, b) in obs.betas.iter().enumerate() {
        s.push_str(&format!("beta_{l} = {}\n", row(b.iter().copied())));
    }
    s.push_str(&matrix("A", &obs.a));
    s.push_str(&matrix("B", &obs.b));
    s.push_str(&format!("C    = {}\n", row(obs.c.iter().copied())));
    s.push_str(&format!("D    = {}\n", row(obs.d.iter().copied())));
    s.push_str(&format!("outputs {}\n", obs.outputs.join(", ")));
    for (k, t) in obs.t.iter().enumerate() {
        s.push_str(&format!("T_{}({}) = {t}\n", k + 1, obs.states.join(", ")));
    }
    s
}

pub fn conditions(r: &ConditionReport) -> String {
    let mut s = format!("identity families over {} samples (pass: max <= {} (1 + scale))\n", r.samples, sig6(r.tol));
    s.push_str(&format!("  {:<22} {:>5} {:>13} {:>13} {:>13}  status\n", "family", "rows", "max", "rms", "scale"));
    for f in Family::ALL {
        let fr = r.family(f);
        let status = match (fr.rows, fr.passes(r.tol)) {
            (0, _) => "not imposed",
            (_, true) => "ok",
            (_, false) => "FAIL",
        };
        s.push_str(&format!(
            "  {:<22} {:>5} {:>13.4e} {:>13.4e} {:>13.4e}  {status}\n",
            f.label(),
            fr.rows,
            fr.max,
            fr.rms,
            fr.scale
        ));
    }
    s
}

pub fn attempts(a: &[Attempt]) -> String {
    let mut s = format!("  {:>5} {:>13} {:>13}  result\n", "order", "residual", "threshold");
    for at in a {
        s.push_str(&format!(
            "  {:>5} {:>13.4e} {:>13.4e}  {}\n",
            at.order,
            at.residual,
            at.threshold,
            if at.feasible { "feasible" } else { "infeasible" }
        ));
    }
    s
}

pub fn design(d: &Design) -> String {
    let mut s = String::from("feasible\n");
    s.push_str(&attempts(&d.attempts));
    let sol = &d.solution;
    s.push_str(&format!(
        "training residual {:.4e}, verification residual {:.4e} on {} samples, nullspace dimension {}{}\n",
        sol.training_residual,
        sol.verification_residual,
        sol.samples,
        sol.nullspace_dim,
        if sol.nullspace_dim == 0 { " (unique)" } else { " (minimum-norm representative)" }
    ));
    s.push_str(&observer(&d.observer));
    s.push_str(&conditions(&d.report));
    s
}

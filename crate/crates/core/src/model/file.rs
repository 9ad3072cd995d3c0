//! Sectioned model text format.
//!
//! ```text
//! [states]        state symbols, whitespace or comma separated
//! [params]        name = expr   (may reference earlier params)
//! [dynamics]      state' = expr, one per state in declaration order
//! [outputs]       y<k> = expr
//! [functional]    z = expr
//! [disturbances]  symbol list
//! [faults]        symbol list
//! [box]           state = lo .. hi
//! ```
//!
//! `#` starts a comment.

use super::{parse_expr_at, Interval, ModelError, PlantModel};
use crate::expr::{eval, Env, Expr, Symbols};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    States,
    Params,
    Dynamics,
    Outputs,
    Functional,
    Disturbances,
    Faults,
    Box,
}

impl Section {
    fn from_header(h: &str) -> Option<Section> {
        Some(match h {
            "states" => Section::States,
            "params" => Section::Params,
            "dynamics" => Section::Dynamics,
            "outputs" => Section::Outputs,
            "functional" => Section::Functional,
            "disturbances" => Section::Disturbances,
            "faults" => Section::Faults,
            "box" => Section::Box,
            _ => return None,
        })
    }
}

/// Splits text into `(line number, section, content)` triples, dropping
/// comments and blank lines.
pub(crate) fn sectioned_lines<S: Copy>(
    text: &str,
    lookup: impl Fn(&str) -> Option<S>,
) -> Result<Vec<(usize, S, String)>, ModelError> {
    let mut current = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('[') {
            let name = h.strip_suffix(']').ok_or(ModelError::Syntax {
                line: line_no,
                msg: format!("malformed section header `{line}`"),
            })?;
            current = Some(lookup(name.trim()).ok_or(ModelError::Syntax {
                line: line_no,
                msg: format!("unknown section `[{}]`", name.trim()),
            })?);
            continue;
        }
        let sec = current.ok_or(ModelError::Syntax {
            line: line_no,
            msg: "content before the first section header".into(),
        })?;
        out.push((line_no, sec, line.to_string()));
    }
    Ok(out)
}

pub(crate) fn split_assignment(line: &str, line_no: usize) -> Result<(&str, &str), ModelError> {
    let (lhs, rhs) = line.split_once('=').ok_or(ModelError::Syntax {
        line: line_no,
        msg: format!("expected `name = value`, found `{line}`"),
    })?;
    Ok((lhs.trim(), rhs.trim()))
}

fn symbol_list(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

fn check_identifier(name: &str, line: usize) -> Result<(), ModelError> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.trim_end_matches('\'').chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(ModelError::Syntax {
            line,
            msg: format!("invalid identifier `{name}`"),
        })
    }
}

pub(crate) fn parse_model(text: &str) -> Result<PlantModel, ModelError> {
    let lines = sectioned_lines(text, Section::from_header)?;
    let mut states = Vec::new();
    let mut disturbances = Vec::new();
    let mut faults = Vec::new();
    for (no, sec, line) in &lines {
        let target = match sec {
            Section::States => &mut states,
            Section::Disturbances => &mut disturbances,
            Section::Faults => &mut faults,
            _ => continue,
        };
        for s in symbol_list(line) {
            check_identifier(s, *no)?;
            target.push(s.to_string());
        }
    }
    let mut declared: Vec<&String> = states.iter().chain(&disturbances).chain(&faults).collect();
    declared.sort();
    if let Some(w) = declared.windows(2).find(|w| w[0] == w[1]) {
        return Err(ModelError::Syntax {
            line: 0,
            msg: format!("symbol `{}` declared twice", w[0]),
        });
    }

    // parameters, evaluated in order
    let mut params: Vec<(String, f64)> = Vec::new();
    let mut env = Env::new();
    let mut param_syms = Symbols::new();
    for (no, sec, line) in &lines {
        if *sec != Section::Params {
            continue;
        }
        let (name, rhs) = split_assignment(line, *no)?;
        check_identifier(name, *no)?;
        if declared.iter().any(|d| *d == name) || params.iter().any(|(p, _)| p == name) {
            return Err(ModelError::Syntax {
                line: *no,
                msg: format!("parameter `{name}` clashes with an existing symbol"),
            });
        }
        let e = parse_expr_at(rhs, &param_syms, *no)?;
        let v = eval(&e, &env)?;
        env.set(name, v);
        param_syms.declare(name);
        params.push((name.to_string(), v));
    }

    let mut model = PlantModel {
        states,
        params,
        dynamics: Vec::new(),
        outputs: Vec::new(),
        functional: None,
        disturbances,
        faults,
        boxes: Vec::new(),
    };
    model.boxes = vec![None; model.n()];
    let symbols = model.symbols();

    for (no, sec, line) in &lines {
        let no = *no;
        match sec {
            Section::Dynamics => {
                let (lhs, rhs) = split_assignment(line, no)?;
                let state = lhs.strip_suffix('\'').ok_or(ModelError::Syntax {
                    line: no,
                    msg: format!("dynamics line must start with `state' =`, found `{lhs}`"),
                })?;
                let k = model.dynamics.len();
                match model.states.get(k) {
                    Some(s) if s == state => {}
                    Some(s) => {
                        return Err(ModelError::Syntax {
                            line: no,
                            msg: format!("expected the equation for `{s}` (declaration order), found `{state}`"),
                        })
                    }
                    None => {
                        return Err(ModelError::Dimension(format!(
                            "line {no}: more dynamics equations than states"
                        )))
                    }
                }
                model.dynamics.push(parse_expr_at(rhs, &symbols, no)?);
            }
            Section::Outputs => {
                let (lhs, rhs) = split_assignment(line, no)?;
                check_identifier(lhs, no)?;
                model.outputs.push((lhs.to_string(), parse_expr_at(rhs, &symbols, no)?));
            }
            Section::Functional => {
                let (_, rhs) = split_assignment(line, no)?;
                if model.functional.is_some() {
                    return Err(ModelError::Dimension(format!("line {no}: a single functional is supported")));
                }
                model.functional = Some(parse_expr_at(rhs, &symbols, no)?);
            }
            Section::Box => {
                let (lhs, rhs) = split_assignment(line, no)?;
                let k = model.states.iter().position(|s| s == lhs).ok_or(ModelError::Syntax {
                    line: no,
                    msg: format!("box entry for unknown state `{lhs}`"),
                })?;
                let (lo, hi) = rhs.split_once("..").ok_or(ModelError::Syntax {
                    line: no,
                    msg: format!("expected `lo .. hi`, found `{rhs}`"),
                })?;
                let lo = eval(&parse_expr_at(lo.trim(), &param_syms, no)?, &env)?;
                let hi = eval(&parse_expr_at(hi.trim(), &param_syms, no)?, &env)?;
                if hi < lo {
                    return Err(ModelError::Syntax {
                        line: no,
                        msg: format!("empty box for `{lhs}`"),
                    });
                }
                model.boxes[k] = Some(Interval { lo, hi });
            }
            _ => {}
        }
    }
    model.validate()?;
    Ok(model)
}

fn num(v: f64) -> String {
    Expr::Const(v).to_string()
}

pub(crate) fn write_model(m: &PlantModel) -> String {
    let mut s = String::new();
    s.push_str("[states]\n");
    s.push_str(&m.states.join(" "));
    s.push('\n');
    if !m.params.is_empty() {
        s.push_str("\n[params]\n");
        for (k, v) in &m.params {
            s.push_str(&format!("{k} = {}\n", num(*v)));
        }
    }
    s.push_str("\n[dynamics]\n");
    for (x, e) in m.states.iter().zip(&m.dynamics) {
        s.push_str(&format!("{x}' = {e}\n"));
    }
    s.push_str("\n[outputs]\n");
    for (y, e) in &m.outputs {
        s.push_str(&format!("{y} = {e}\n"));
    }
    if let Some(q) = &m.functional {
        s.push_str(&format!("\n[functional]\nz = {q}\n"));
    }
    if !m.disturbances.is_empty() {
        s.push_str(&format!("\n[disturbances]\n{}\n", m.disturbances.join(" ")));
    }
    if !m.faults.is_empty() {
        s.push_str(&format!("\n[faults]\n{}\n", m.faults.join(" ")));
    }
    if m.boxes.iter().any(Option::is_some) {
        s.push_str("\n[box]\n");
        for (x, b) in m.states.iter().zip(&m.boxes) {
            if let Some(b) = b {
                s.push_str(&format!("{x} = {} .. {}\n", num(b.lo), num(b.hi)));
            }
        }
    }
    s
}

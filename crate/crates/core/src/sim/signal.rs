use std::fmt;

use crate::expr::{eval, parse, Env, Symbols};

/// Exogenous input profile. `step`, `ramp` and `piecewise` are zero before
/// their first breakpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum Signal {
    Constant(f64),
    Step { t0: f64, amplitude: f64 },
    /// `offset + slope (t - t0)` for `t >= t0`.
    Ramp { t0: f64, slope: f64, offset: f64 },
    /// `amplitude sin(omega t + phase)`.
    Sinusoid { amplitude: f64, omega: f64, phase: f64 },
    /// Zero-order hold through `(t, value)` breakpoints.
    Piecewise(Vec<(f64, f64)>),
}

#[derive(Debug, thiserror::Error)]
#[error("signal `{text}`: {msg}")]
pub struct SignalError {
    pub text: String,
    pub msg: String,
}

impl Signal {
    pub fn zero() -> Signal {
        Signal::Constant(0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }

    /// `k`-th time derivative (`k = 0` is the value).
    pub fn derivative(&self, k: usize, t: f64) -> f64 {
        match *self {
            Signal::Constant(c) => {
                if k == 0 {
                    c
                } else {
                    0.0
                }
            }
            Signal::Step { t0, amplitude } => {
                if k == 0 && t >= t0 {
                    amplitude
                } else {
                    0.0
                }
            }
            Signal::Ramp { t0, slope, offset } => match (k, t >= t0) {
                (_, false) => 0.0,
                (0, true) => offset + slope * (t - t0),
                (1, true) => slope,
                _ => 0.0,
            },
            Signal::Sinusoid { amplitude, omega, phase } => {
                let arg = omega * t + phase + k as f64 * std::f64::consts::FRAC_PI_2;
                amplitude * omega.powi(k as i32) * arg.sin()
            }
            Signal::Piecewise(ref pts) => {
                if k > 0 {
                    return 0.0;
                }
                pts.iter().take_while(|(ti, _)| *ti <= t).last().map_or(0.0, |(_, v)| *v)
            }
        }
    }

    /// Parses `constant(c)`, a bare number, `step(t0, a)`,
    /// `ramp(t0, slope[, offset])`, `sine(a, omega[, phase])` or
    /// `piecewise(t1: v1, t2: v2, ...)`. Arguments may be constant
    /// expressions such as `1/60`.
    pub fn parse(text: &str) -> Result<Signal, SignalError> {
        let t = text.trim();
        let err = |msg: &str| SignalError {
            text: t.to_string(),
            msg: msg.to_string(),
        };
        let number = |s: &str| -> Result<f64, SignalError> {
            let e = parse(s.trim(), &Symbols::new()).map_err(|e| err(&e.to_string()))?;
            eval(&e, &Env::new()).map_err(|e| err(&e.to_string()))
        };
        let Some(open) = t.find('(') else {
            return number(t).map(Signal::Constant);
        };
        let name = t[..open].trim();
        let body = t[open + 1..].strip_suffix(')').ok_or_else(|| err("missing `)`"))?;
        if name == "piecewise" {
            let mut pts = Vec::new();
            for item in body.split(',').filter(|s| !s.trim().is_empty()) {
                let (ti, vi) = item.split_once(':').ok_or_else(|| err("expected `t: value` pairs"))?;
                pts.push((number(ti)?, number(vi)?));
            }
            if pts.is_empty() {
                return Err(err("piecewise needs at least one breakpoint"));
            }
            if pts.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                return Err(err("breakpoint times must be strictly increasing"));
            }
            return Ok(Signal::Piecewise(pts));
        }
        let args: Vec<f64> = body.split(',').map(number).collect::<Result<_, _>>()?;
        let arity = |lo: usize, hi: usize| {
            if (lo..=hi).contains(&args.len()) {
                Ok(())
            } else {
                Err(err(&format!("`{name}` takes {lo}..{hi} arguments, got {}", args.len())))
            }
        };
        match name {
            "constant" => {
                arity(1, 1)?;
                Ok(Signal::Constant(args[0]))
            }
            "step" => {
                arity(2, 2)?;
                Ok(Signal::Step {
                    t0: args[0],
                    amplitude: args[1],
                })
            }
            "ramp" => {
                arity(2, 3)?;
                Ok(Signal::Ramp {
                    t0: args[0],
                    slope: args[1],
                    offset: args.get(2).copied().unwrap_or(0.0),
                })
            }
            "sine" => {
                arity(2, 3)?;
                Ok(Signal::Sinusoid {
                    amplitude: args[0],
                    omega: args[1],
                    phase: args.get(2).copied().unwrap_or(0.0),
                })
            }
            other => Err(err(&format!("unknown signal kind `{other}`"))),
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Constant(c) => write!(f, "constant({c:?})"),
            Signal::Step { t0, amplitude } => write!(f, "step({t0:?}, {amplitude:?})"),
            Signal::Ramp { t0, slope, offset } => write!(f, "ramp({t0:?}, {slope:?}, {offset:?})"),
            Signal::Sinusoid { amplitude, omega, phase } => write!(f, "sine({amplitude:?}, {omega:?}, {phase:?})"),
            Signal::Piecewise(pts) => {
                let items: Vec<String> = pts.iter().map(|(t, v)| format!("{t:?}: {v:?}")).collect();
                write!(f, "piecewise({})", items.join(", "))
            }
        }
    }
}

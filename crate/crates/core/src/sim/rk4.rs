use super::SimError;
use crate::expr::EvalError;

/// States on the integration grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

/// `0, h, 2h, ...` up to `t_end`, with a shortened final step when `t_end`
/// is not a multiple of `h`.
pub fn time_grid(t_end: f64, h: f64) -> Vec<f64> {
    let full = (t_end / h * (1.0 + 1e-12)).floor() as usize;
    let mut t: Vec<f64> = (0..=full).map(|k| k as f64 * h).collect();
    let last = *t.last().unwrap_or(&0.0);
    if t_end - last > 1e-12 * t_end.abs().max(h) {
        t.push(t_end);
    } else if let Some(l) = t.last_mut() {
        *l = t_end;
    }
    t
}

/// Classical fourth-order Runge-Kutta on [`time_grid`].
///
/// `rhs(t, x, dx)` writes the derivative into `dx`.
pub fn integrate_rk4<F>(mut rhs: F, x0: &[f64], t_end: f64, h: f64) -> Result<Grid, SimError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), EvalError>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(SimError::Step(h));
    }
    if !(t_end >= 0.0) {
        return Err(SimError::Dimension(format!("t_end must be nonnegative, got {t_end}")));
    }
    let times = time_grid(t_end, h);
    let n = x0.len();
    let mut xs = Vec::with_capacity(times.len());
    let mut x = x0.to_vec();
    xs.push(x.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut call = |t: f64, x: &[f64], dx: &mut [f64]| rhs(t, x, dx).map_err(|source| SimError::Rhs { t, source });
    for w in times.windows(2) {
        let (t, dt) = (w[0], w[1] - w[0]);
        call(t, &x, &mut k1)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        call(t + 0.5 * dt, &tmp, &mut k2)?;
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        call(t + 0.5 * dt, &tmp, &mut k3)?;
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        call(t + dt, &tmp, &mut k4)?;
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Diverged(w[1]));
        }
        xs.push(x.clone());
    }
    Ok(Grid { t: times, x: xs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(h: f64) -> f64 {
        let g = integrate_rk4(
            |_, x, dx| {
                dx[0] = -x[0];
                Ok(())
            },
            &[1.0],
            1.0,
            h,
        )
        .unwrap();
        g.x.last().unwrap()[0]
    }

    #[test]
    fn exponential_decay() {
        assert!((decay(1e-3) - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn observed_order() {
        let exact = (-1.0f64).exp();
        let e1 = (decay(0.1) - exact).abs();
        let e2 = (decay(0.05) - exact).abs();
        assert!((e1 / e2).log2() >= 3.9, "order {}", (e1 / e2).log2());
    }

    #[test]
    fn oscillator_energy() {
        let period = 2.0 * std::f64::consts::PI;
        let g = integrate_rk4(
            |_, x, dx| {
                dx[0] = x[1];
                dx[1] = -x[0];
                Ok(())
            },
            &[1.0, 0.0],
            10.0 * period,
            period / 1000.0,
        )
        .unwrap();
        let x = g.x.last().unwrap();
        assert!((x[0] * x[0] + x[1] * x[1] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn grid_lands_on_t_end() {
        assert_eq!(time_grid(1.0, 0.25), [0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = time_grid(1.0, 0.3);
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!((g[3] - 0.9).abs() < 1e-15);
        assert_eq!(time_grid(0.0, 0.1), [0.0]);
    }

    #[test]
    fn rhs_failure_carries_time() {
        let err = integrate_rk4(
            |t, _, dx| {
                if t > 0.45 {
                    return Err(EvalError::Unbound("w".into()));
                }
                dx[0] = 1.0;
                Ok(())
            },
            &[0.0],
            1.0,
            0.1,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::Rhs { t, .. } if (t - 0.45).abs() < 1e-12 || t > 0.45));
    }
}

//! Period detection by first return to a Poincaré hyperplane through the
//! initial point.

use serde::Serialize;

use super::dopri::{StepResult, Stepper};
use super::{DynamicsError, IntegratorOptions, Rhs};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodEstimate {
    pub period: f64,
    pub omega: f64,
    /// Distance from the initial point at the refined first return.
    pub residual: f64,
    /// Second return time, should be close to twice `period`.
    pub second_return: f64,
    pub method: String,
}

#[derive(Debug, Clone)]
pub struct PeriodOptions {
    pub integrator: IntegratorOptions,
    pub t_max: f64,
    /// Radius of the return ball, relative to `1 + |x0|`.
    pub ball: f64,
    pub max_residual: f64,
    /// Allowed relative mismatch between the second return and `2T`.
    pub consistency: f64,
}

impl Default for PeriodOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            t_max: 1000.0,
            ball: 1e-2,
            max_residual: 1e-4,
            consistency: 5e-3,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Estimates the period of the orbit through `x0`.
pub fn estimate_period<R: Rhs + ?Sized>(rhs: &R, x0: &[f64], opts: &PeriodOptions) -> Result<PeriodEstimate, DynamicsError> {
    if x0.len() != rhs.dim() {
        return Err(DynamicsError::Dimension { expected: rhs.dim(), got: x0.len() });
    }
    let mut normal = vec![0.0; x0.len()];
    rhs.eval(x0, &mut normal).map_err(DynamicsError::InitialPoint)?;
    let nn = dot(&normal, &normal).sqrt();
    if nn == 0.0 {
        return Err(DynamicsError::NotPeriodic("initial point is an equilibrium".into()));
    }
    normal.iter_mut().for_each(|v| *v /= nn);
    let plane = |x: &[f64]| dot(&normal, x) - dot(&normal, x0);
    let radius = opts.ball * (1.0 + dot(x0, x0).sqrt());

    let mut st = Stepper::new(rhs, x0, &opts.integrator, opts.t_max).map_err(DynamicsError::InitialPoint)?;
    let mut returns: Vec<(f64, f64)> = Vec::new();
    let mut prev_side = 0.0_f64;
    while st.t < opts.t_max && returns.len() < 2 {
        if st.accepted >= opts.integrator.max_steps {
            return Err(DynamicsError::NotPeriodic("step budget exhausted".into()));
        }
        if let StepResult::BlowUp { lo, hi } = st.step(opts.t_max) {
            return Err(DynamicsError::NotPeriodic(format!("blow-up in ({lo}, {hi})")));
        }
        let side = plane(&st.x);
        if prev_side < 0.0 && side >= 0.0 {
            let tau = refine_crossing(&st, &plane, prev_side, side)?;
            let x = st.state_after_prev(tau)?;
            let d = dist(&x, x0);
            if d < radius {
                returns.push((st.t_prev + tau, d));
            }
        }
        prev_side = side;
    }
    if returns.len() < 2 {
        return Err(DynamicsError::NotPeriodic(format!("no consistent return before t = {}", opts.t_max)));
    }
    let (t1, residual) = returns[0];
    let t2 = returns[1].0;
    if residual > opts.max_residual {
        return Err(DynamicsError::NotPeriodic(format!("return residual {residual:.3e}")));
    }
    if (t2 - 2.0 * t1).abs() > opts.consistency * 2.0 * t1 {
        return Err(DynamicsError::NotPeriodic(format!("returns at {t1} and {t2} are inconsistent")));
    }
    Ok(PeriodEstimate {
        period: t1,
        omega: 2.0 * std::f64::consts::PI / t1,
        residual,
        second_return: t2,
        method: "poincare-return".into(),
    })
}

// Illinois-modified regula falsi on the plane function over the last step.
fn refine_crossing<R: Rhs + ?Sized>(
    st: &Stepper<'_, R>,
    plane: &dyn Fn(&[f64]) -> f64,
    h_lo: f64,
    h_hi: f64,
) -> Result<f64, DynamicsError> {
    let (mut a, mut b) = (0.0, st.t - st.t_prev);
    let (mut fa, mut fb) = (h_lo, h_hi);
    let width = b;
    let mut side = 0;
    for _ in 0..60 {
        let c = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        let c = c.clamp(a, b);
        let fc = plane(&st.state_after_prev(c)?);
        if fc == 0.0 || (b - a) < 1e-15 * width.max(st.t) {
            return Ok(c);
        }
        if fc < 0.0 {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        if fc.abs() < 1e-15 {
            return Ok(c);
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VariableContext;
    use crate::geometry::VectorField;
    use std::f64::consts::PI;

    #[test]
    fn oscillator_period() {
        let c = VariableContext::new(&["q", "v"]).unwrap();
        let x = VectorField::parse(&["v", "-q"], &c).unwrap();
        let p = estimate_period(&x, &[1.0, 0.0], &PeriodOptions::default()).unwrap();
        assert!((p.period - 2.0 * PI).abs() < 1e-6, "{p:?}");
        assert!((p.omega * p.period - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn translation_is_not_periodic() {
        let c = VariableContext::new(&["q", "v"]).unwrap();
        let x = VectorField::parse(&["1", "0"], &c).unwrap();
        assert!(matches!(
            estimate_period(&x, &[0.0, 0.0], &PeriodOptions::default()),
            Err(DynamicsError::NotPeriodic(_))
        ));
    }

    #[test]
    fn equilibrium_is_not_periodic() {
        let x = VectorField::zero(2);
        assert!(estimate_period(&x, &[0.0, 0.0], &PeriodOptions::default()).is_err());
    }
}

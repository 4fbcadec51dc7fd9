//! Dormand–Prince 5(4) stepper with PI step-size control.

use super::{IntegratorOptions, Rhs};
use crate::expr::EvalError;

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const BETA: f64 = 0.04;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// One explicit step of size `h` from `(x, f)` with `f = X(x)`.
/// Returns the fifth-order state, its derivative, and the error estimate.
pub(crate) fn raw_step<R: Rhs + ?Sized>(
    rhs: &R,
    x: &[f64],
    f: &[f64],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), EvalError> {
    let n = x.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(f.to_vec());
    let mut stage = vec![0.0; n];
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += A[s][j] * kj[i];
            }
            stage[i] = x[i] + h * acc;
        }
        let mut out = vec![0.0; n];
        rhs.eval(&stage, &mut out)?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::Domain("non-finite field value".into()));
        }
        k.push(out);
    }
    // the last stage sits at the fifth-order solution (FSAL)
    let x_new = stage;
    let f_new = k[6].clone();
    let err = (0..n).map(|i| h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>()).collect();
    Ok((x_new, f_new, err))
}

fn error_norm(err: &[f64], x: &[f64], x_new: &[f64], opts: &IntegratorOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(x.iter().zip(x_new))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Result of one call to [`Stepper::step`].
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum StepResult {
    Accepted,
    /// State left the finite region, or the step underflowed, inside `(lo, hi)`.
    BlowUp { lo: f64, hi: f64 },
}

pub(crate) struct Stepper<'a, R: Rhs + ?Sized> {
    rhs: &'a R,
    pub t: f64,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub t_prev: f64,
    pub x_prev: Vec<f64>,
    pub f_prev: Vec<f64>,
    h: f64,
    err_old: f64,
    opts: &'a IntegratorOptions,
    pub accepted: usize,
    pub rejected: usize,
}

impl<'a, R: Rhs + ?Sized> Stepper<'a, R> {
    pub fn new(rhs: &'a R, x0: &[f64], opts: &'a IntegratorOptions, t_span: f64) -> Result<Self, EvalError> {
        let mut f = vec![0.0; x0.len()];
        rhs.eval(x0, &mut f)?;
        let h = opts.initial_step.unwrap_or_else(|| initial_step(rhs, x0, &f, opts, t_span));
        Ok(Self {
            rhs,
            t: 0.0,
            x: x0.to_vec(),
            f: f.clone(),
            t_prev: 0.0,
            x_prev: x0.to_vec(),
            f_prev: f,
            h,
            err_old: 1e-4,
            opts,
            accepted: 0,
            rejected: 0,
        })
    }

    /// Advances by one accepted step, never passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> StepResult {
        let mut last_fail = false;
        loop {
            let room = t_limit - self.t;
            let mut h = self.h.min(self.opts.max_step);
            let clipped = h >= room;
            if clipped {
                h = room;
            }
            let scale = self.t.abs().max(1.0);
            if !clipped && h < self.opts.underflow * scale {
                return StepResult::BlowUp { lo: self.t, hi: self.t + self.h.max(h) };
            }
            match raw_step(self.rhs, &self.x, &self.f, h) {
                Ok((x_new, f_new, err)) => {
                    let en = error_norm(&err, &self.x, &x_new, self.opts);
                    if en <= 1.0 {
                        let en = en.max(1e-10);
                        let mut fac = SAFETY * en.powf(-(0.2 - 0.75 * BETA)) * self.err_old.powf(BETA);
                        fac = fac.clamp(FAC_MIN, if last_fail { 1.0 } else { FAC_MAX });
                        self.err_old = en.max(1e-4);
                        if !clipped {
                            self.h = h * fac;
                        } else {
                            self.h = self.h.max(h * fac.min(1.0));
                        }
                        self.t_prev = self.t;
                        self.x_prev = std::mem::replace(&mut self.x, x_new);
                        self.f_prev = std::mem::replace(&mut self.f, f_new);
                        self.t = if clipped { t_limit } else { self.t + h };
                        self.accepted += 1;
                        if self.x.iter().any(|v| !v.is_finite()) || norm(&self.x) > self.opts.blowup_norm {
                            return StepResult::BlowUp { lo: self.t_prev, hi: self.t };
                        }
                        return StepResult::Accepted;
                    }
                    let fac = (SAFETY * en.powf(-0.2)).clamp(FAC_MIN, 1.0);
                    self.h = h * fac;
                }
                Err(_) => {
                    self.h = h * 0.25;
                }
            }
            self.rejected += 1;
            last_fail = true;
        }
    }

    /// State at `t_prev + tau`, by a single uncontrolled step from the
    /// previous accepted point (`0 <= tau <= t - t_prev`).
    pub fn state_after_prev(&self, tau: f64) -> Result<Vec<f64>, EvalError> {
        if tau == 0.0 {
            return Ok(self.x_prev.clone());
        }
        raw_step(self.rhs, &self.x_prev, &self.f_prev, tau).map(|(x, _, _)| x)
    }
}

// Hairer, Nørsett & Wanner, "Solving ODEs I", II.4.
fn initial_step<R: Rhs + ?Sized>(rhs: &R, x0: &[f64], f0: &[f64], opts: &IntegratorOptions, t_span: f64) -> f64 {
    let sc: Vec<f64> = x0.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let wnorm = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
    };
    let d0 = wnorm(x0);
    let d1 = wnorm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(t_span.abs().max(1e-12)).min(opts.max_step);
    let x1: Vec<f64> = x0.iter().zip(f0).map(|(x, f)| x + h0 * f).collect();
    let mut f1 = vec![0.0; x0.len()];
    if rhs.eval(&x1, &mut f1).is_err() {
        return h0 * 1e-3;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = wnorm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.max_step)
}

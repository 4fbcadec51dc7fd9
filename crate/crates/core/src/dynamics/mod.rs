//! Integration of autonomous fields, blow-up detection, period estimation
//! and conservation monitoring.

mod dopri;
mod period;

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::geometry::{ScalarField, VectorFieldEval};

pub use period::{estimate_period, PeriodEstimate, PeriodOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("field cannot be evaluated at the initial point: {0}")]
    InitialPoint(EvalError),
    #[error("initial point has {got} coordinates, field has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("initial point lies in the excluded set")]
    Excluded,
    #[error("orbit not periodic: {0}")]
    NotPeriodic(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("trajectory output failed: {0}")]
    Io(String),
}

/// Right-hand side of an autonomous system `x' = X(x)`.
pub trait Rhs: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError>;
}

impl<T: VectorFieldEval + ?Sized> Rhs for T {
    fn dim(&self) -> usize {
        VectorFieldEval::dim(self)
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        out.copy_from_slice(self.value(x)?.as_slice());
        Ok(())
    }
}

/// Closure-backed right-hand side.
pub struct FnRhs<F> {
    dim: usize,
    f: F,
}

impl<F> FnRhs<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<(), EvalError> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Rhs for FnRhs<F>
where
    F: Fn(&[f64], &mut [f64]) -> Result<(), EvalError> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        (self.f)(x, out)
    }
}

/// `-X`, for integrating backwards in time.
pub struct Reversed<'a, R: Rhs + ?Sized>(pub &'a R);

impl<R: Rhs + ?Sized> Rhs for Reversed<'_, R> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.0.eval(x, out)?;
        out.iter_mut().for_each(|v| *v = -*v);
        Ok(())
    }
}

pub type StopPredicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
    /// State norm beyond which the run is declared a blow-up.
    pub blowup_norm: f64,
    /// Relative step size below which the run is declared a blow-up.
    pub underflow: f64,
    /// Optional early stop, checked after every accepted step.
    pub stop: Option<StopPredicate>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            initial_step: None,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
            blowup_norm: 1e8,
            underflow: 1e-14,
            stop: None,
        }
    }
}

impl std::fmt::Debug for IntegratorOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IntegratorOptions")
            .field("rel_tol", &self.rel_tol)
            .field("abs_tol", &self.abs_tol)
            .field("max_step", &self.max_step)
            .field("max_steps", &self.max_steps)
            .field("blowup_norm", &self.blowup_norm)
            .field("underflow", &self.underflow)
            .field("stop", &self.stop.is_some())
            .finish()
    }
}

impl IntegratorOptions {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        Self { rel_tol, abs_tol, ..Self::default() }
    }

    pub fn with_stop(mut self, stop: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.stop = Some(Arc::new(stop));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Completed,
    /// Blow-up somewhere in `(t_lo, t_hi)`.
    BlowUp { t_lo: f64, t_hi: f64 },
    MaxSteps,
    /// The stop predicate fired at `time`.
    Stopped { time: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub field_id: String,
    pub initial: Vec<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

/// Accepted steps of one integration run, with the derivative at each
/// node for Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    pub stats: Stats,
    pub status: Status,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.meta.initial.len()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has an initial row")
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has an initial row")
    }

    /// Cubic Hermite interpolation between accepted steps; `t` is clamped
    /// to the covered interval.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let (x0, x1) = (&self.states[k - 1], &self.states[k]);
        let (f0, f1) = (&self.derivatives[k - 1], &self.derivatives[k]);
        (0..x0.len()).map(|i| h00 * x0[i] + h * h10 * f0[i] + h01 * x1[i] + h * h11 * f1[i]).collect()
    }

    /// `count + 1` equally spaced dense-output samples over the run.
    pub fn resample(&self, count: usize) -> Vec<(f64, Vec<f64>)> {
        let (a, b) = (self.times[0], self.t_end());
        let count = count.max(1);
        (0..=count)
            .map(|k| {
                let t = a + (b - a) * k as f64 / count as f64;
                (t, self.sample(t))
            })
            .collect()
    }

    /// CSV with header `t,x1,...,xN`. With `samples = None` every accepted
    /// step is written; otherwise `samples + 1` dense-output rows.
    pub fn write_csv<W: Write>(&self, w: W, samples: Option<usize>) -> Result<(), DynamicsError> {
        let io = |e: csv::Error| DynamicsError::Io(e.to_string());
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        out.write_record(&header).map_err(io)?;
        let rows: Vec<(f64, Vec<f64>)> = match samples {
            None => self.times.iter().copied().zip(self.states.iter().cloned()).collect(),
            Some(c) => self.resample(c),
        };
        for (t, x) in rows {
            let mut rec = vec![format_num(t)];
            rec.extend(x.iter().map(|v| format_num(*v)));
            out.write_record(&rec).map_err(io)?;
        }
        out.flush().map_err(|e| DynamicsError::Io(e.to_string()))
    }
}

pub(crate) fn format_num(v: f64) -> String {
    format!("{v:.17e}")
}

fn check_start<R: Rhs + ?Sized>(rhs: &R, x0: &[f64]) -> Result<(), DynamicsError> {
    if x0.len() != rhs.dim() {
        return Err(DynamicsError::Dimension { expected: rhs.dim(), got: x0.len() });
    }
    Ok(())
}

/// Adaptive Dormand–Prince integration of `x' = X(x)` over `[0, t_end]`.
pub fn integrate<R: Rhs + ?Sized>(
    rhs: &R,
    x0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    integrate_named(rhs, "anonymous", x0, t_end, opts)
}

pub fn integrate_named<R: Rhs + ?Sized>(
    rhs: &R,
    field_id: &str,
    x0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    check_start(rhs, x0)?;
    let mut st = dopri::Stepper::new(rhs, x0, opts, t_end).map_err(DynamicsError::InitialPoint)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        derivatives: vec![st.f.clone()],
        stats: Stats::default(),
        status: Status::Completed,
        meta: TrajectoryMeta {
            field_id: field_id.to_string(),
            initial: x0.to_vec(),
            rel_tol: opts.rel_tol,
            abs_tol: opts.abs_tol,
        },
    };
    if opts.stop.as_ref().is_some_and(|s| s(x0)) {
        traj.status = Status::Stopped { time: 0.0 };
        return Ok(traj);
    }
    while st.t < t_end {
        if st.accepted >= opts.max_steps {
            traj.status = Status::MaxSteps;
            break;
        }
        let res = st.step(t_end);
        if let dopri::StepResult::BlowUp { lo, hi } = res {
            if st.t > *traj.times.last().unwrap() && st.x.iter().all(|v| v.is_finite()) {
                push_row(&mut traj, &st);
            }
            traj.status = Status::BlowUp { t_lo: lo, t_hi: hi };
            break;
        }
        push_row(&mut traj, &st);
        if opts.stop.as_ref().is_some_and(|s| s(&st.x)) {
            traj.status = Status::Stopped { time: st.t };
            break;
        }
    }
    traj.stats = Stats { accepted: st.accepted, rejected: st.rejected };
    Ok(traj)
}

/// Integrates through the sorted, non-negative output `times`, landing on
/// each exactly; returns the trajectory and the state at every output time
/// reached before a blow-up or stop.
pub fn integrate_at<R: Rhs + ?Sized>(
    rhs: &R,
    x0: &[f64],
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<(Trajectory, Vec<Vec<f64>>), DynamicsError> {
    check_start(rhs, x0)?;
    let t_end = times.last().copied().unwrap_or(0.0);
    let mut st = dopri::Stepper::new(rhs, x0, opts, t_end).map_err(DynamicsError::InitialPoint)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        derivatives: vec![st.f.clone()],
        stats: Stats::default(),
        status: Status::Completed,
        meta: TrajectoryMeta {
            field_id: "anonymous".into(),
            initial: x0.to_vec(),
            rel_tol: opts.rel_tol,
            abs_tol: opts.abs_tol,
        },
    };
    let mut out = Vec::with_capacity(times.len());
    'outer: for &t_out in times {
        while st.t < t_out {
            if st.accepted >= opts.max_steps {
                traj.status = Status::MaxSteps;
                break 'outer;
            }
            if let dopri::StepResult::BlowUp { lo, hi } = st.step(t_out) {
                traj.status = Status::BlowUp { t_lo: lo, t_hi: hi };
                break 'outer;
            }
            push_row(&mut traj, &st);
            if opts.stop.as_ref().is_some_and(|s| s(&st.x)) {
                traj.status = Status::Stopped { time: st.t };
                if st.t >= t_out {
                    out.push(st.x.clone());
                }
                break 'outer;
            }
        }
        out.push(st.x.clone());
    }
    traj.stats = Stats { accepted: st.accepted, rejected: st.rejected };
    Ok((traj, out))
}

fn push_row<R: Rhs + ?Sized>(traj: &mut Trajectory, st: &dopri::Stepper<'_, R>) {
    traj.times.push(st.t);
    traj.states.push(st.x.clone());
    traj.derivatives.push(st.f.clone());
}

/// Fixed-step fifth-order Dormand–Prince integration with `steps` steps.
pub fn integrate_fixed<R: Rhs + ?Sized>(rhs: &R, x0: &[f64], t_end: f64, steps: usize) -> Result<Vec<f64>, DynamicsError> {
    check_start(rhs, x0)?;
    let h = t_end / steps.max(1) as f64;
    let mut x = x0.to_vec();
    let mut f = vec![0.0; x.len()];
    rhs.eval(&x, &mut f).map_err(DynamicsError::InitialPoint)?;
    for _ in 0..steps.max(1) {
        let (xn, fnew, _) = dopri::raw_step(rhs, &x, &f, h)?;
        x = xn;
        f = fnew;
    }
    Ok(x)
}

/// `max_t |g(x(t)) - g(x(0))|` over the stored steps.
pub fn conserved_drift(traj: &Trajectory, g: &ScalarField) -> Result<f64, EvalError> {
    conserved_drift_fn(traj, |x| g.value(x))
}

pub fn conserved_drift_fn(
    traj: &Trajectory,
    g: impl Fn(&[f64]) -> Result<f64, EvalError>,
) -> Result<f64, EvalError> {
    let g0 = g(&traj.states[0])?;
    let mut drift: f64 = 0.0;
    for x in &traj.states {
        drift = drift.max((g(x)? - g0).abs());
    }
    Ok(drift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VariableContext;
    use crate::geometry::VectorField;

    fn oscillator() -> VectorField {
        let c = VariableContext::new(&["q", "v"]).unwrap();
        VectorField::parse(&["v", "-q"], &c).unwrap()
    }

    #[test]
    fn oscillator_returns_after_one_period() {
        let x = oscillator();
        let tr = integrate(&x, &[1.0, 0.0], 2.0 * std::f64::consts::PI, &IntegratorOptions::default()).unwrap();
        assert_eq!(tr.status, Status::Completed);
        let e = tr.last();
        assert!((e[0] - 1.0).abs() < 1e-7 && e[1].abs() < 1e-7, "{e:?}");
    }

    #[test]
    fn quadratic_field_blows_up_near_one() {
        let c = VariableContext::new(&["x"]).unwrap();
        let x = VectorField::parse(&["x^2"], &c).unwrap();
        let tr = integrate(&x, &[1.0], 2.0, &IntegratorOptions::default()).unwrap();
        match tr.status {
            Status::BlowUp { t_lo, t_hi } => assert!(t_lo > 0.99 && t_hi < 1.01, "{t_lo} {t_hi}"),
            s => panic!("unexpected {s:?}"),
        }
        assert!(tr.states.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_field_is_constant() {
        let x = VectorField::zero(3);
        let tr = integrate(&x, &[1.0, 2.0, 3.0], 10.0, &IntegratorOptions::default()).unwrap();
        assert_eq!(tr.last(), &[1.0, 2.0, 3.0]);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn stop_predicate_fires() {
        let x = oscillator();
        let opts = IntegratorOptions::default().with_stop(|x| x[0] < 0.0);
        let tr = integrate(&x, &[1.0, 0.0], 10.0, &opts).unwrap();
        assert!(matches!(tr.status, Status::Stopped { time } if time > 1.5 && time < 1.7));
    }

    #[test]
    fn dimension_mismatch() {
        let x = oscillator();
        assert!(matches!(
            integrate(&x, &[1.0], 1.0, &IntegratorOptions::default()),
            Err(DynamicsError::Dimension { .. })
        ));
    }

    #[test]
    fn csv_header_and_rows() {
        let x = oscillator();
        let tr = integrate(&x, &[1.0, 0.0], 1.0, &IntegratorOptions::default()).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, Some(4)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2");
        assert_eq!(lines.len(), 6);
    }
}

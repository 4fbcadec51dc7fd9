//! The chart `(q, v) -> (Q, V)`, its inverse, and the canonical structure
//! carried back to the original coordinates.

use nalgebra::{DMatrix, DVector};

use crate::expr::{EvalError, Expr};
use crate::geometry::{SmoothMap, Tensor11Eval, TensorJet, VectorField, VectorFieldEval, VectorJet};

/// How `chart_inverse` recovers old coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum InverseMethod {
    /// The whole chart is affine: `p = A^{-1} (y - b)`.
    Affine { a_inv: DMatrix<f64>, b: DVector<f64> },
    /// `Q` depends only on the `base` coordinates and `V` is affine in the
    /// remaining `fiber` coordinates.
    FiberAffine { base: Vec<usize>, fiber: Vec<usize>, q_affine: bool },
    /// Damped Newton iteration on the full chart.
    Newton,
}

impl InverseMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            InverseMethod::Affine { .. } => "affine",
            InverseMethod::FiberAffine { .. } => "fiber-affine",
            InverseMethod::Newton => "newton",
        }
    }
}

/// Forward chart with its second derivatives.
#[derive(Debug, Clone)]
pub struct Chart {
    pub(crate) map: SmoothMap,
    /// `hess[i][j][c] = d_c d_j Phi^i`
    pub(crate) hess: Vec<Vec<Vec<Expr>>>,
    pub(crate) inverse: InverseMethod,
    pub(crate) seed: Vec<f64>,
}

pub const NEWTON_MAX_ITER: usize = 100;

fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().lu().solve(rhs)
}

/// Result of a failed inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionFailure {
    pub residual: f64,
    pub eval: Option<EvalError>,
}

impl From<EvalError> for InversionFailure {
    fn from(e: EvalError) -> Self {
        InversionFailure { residual: f64::INFINITY, eval: Some(e) }
    }
}

/// Damped Newton for `F(x) = target`, square systems only.
pub(crate) fn newton(
    f: &dyn Fn(&[f64]) -> Result<DVector<f64>, EvalError>,
    jac: &dyn Fn(&[f64]) -> Result<DMatrix<f64>, EvalError>,
    seed: &[f64],
    target: &DVector<f64>,
) -> Result<Vec<f64>, InversionFailure> {
    let tol = 1e-13 * (1.0 + target.norm());
    let mut x = DVector::from_column_slice(seed);
    let mut r = f(x.as_slice())? - target;
    let mut rn = r.norm();
    for _ in 0..NEWTON_MAX_ITER {
        if rn <= tol {
            return Ok(x.as_slice().to_vec());
        }
        let j = jac(x.as_slice())?;
        let Some(dx) = solve(&j, &(-&r)) else {
            return Err(InversionFailure { residual: rn, eval: None });
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = &x + &dx * lambda;
            if let Ok(fr) = f(trial.as_slice()) {
                let tr = fr - target;
                let tn = tr.norm();
                if tn.is_finite() && tn < rn {
                    x = trial;
                    r = tr;
                    rn = tn;
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if rn <= 1e-11 * (1.0 + target.norm()) {
        Ok(x.as_slice().to_vec())
    } else {
        Err(InversionFailure { residual: rn, eval: None })
    }
}

impl Chart {
    pub(crate) fn new(map: SmoothMap, inverse: InverseMethod, seed: Vec<f64>) -> Self {
        let dim = map.source_dim();
        let hess = map
            .jacobian_exprs()
            .iter()
            .map(|row| row.iter().map(|e| (0..dim).map(|c| e.derivative(c)).collect()).collect())
            .collect();
        Self { map, hess, inverse, seed }
    }

    pub fn dim(&self) -> usize {
        self.map.source_dim()
    }

    pub fn forward(&self, p: &[f64]) -> Result<DVector<f64>, EvalError> {
        self.map.apply(p)
    }

    pub fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        self.map.jacobian(p)
    }

    /// `dJ[c][(i, j)] = d_c d_j Phi^i`.
    pub fn jacobian_derivatives(&self, p: &[f64]) -> Result<Vec<DMatrix<f64>>, EvalError> {
        let n = self.dim();
        let rows = self.hess.len();
        let mut out = vec![DMatrix::zeros(rows, n); n];
        for (i, row) in self.hess.iter().enumerate() {
            for (j, col) in row.iter().enumerate() {
                for (c, e) in col.iter().enumerate() {
                    if !e.is_zero() {
                        out[c][(i, j)] = e.eval(p)?;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>, InversionFailure> {
        let target = DVector::from_column_slice(y);
        let n = self.dim() / 2;
        match &self.inverse {
            InverseMethod::Affine { a_inv, b } => Ok((a_inv * (&target - b)).as_slice().to_vec()),
            InverseMethod::FiberAffine { base, fiber, q_affine } => {
                let comps = self.map.components();
                let jac = self.map.jacobian_exprs();
                let mut p = self.seed.clone();
                for &f in fiber {
                    p[f] = 0.0;
                }
                let q_target = DVector::from_column_slice(&y[..n]);
                let eval_q = |b: &[f64]| -> Result<DVector<f64>, EvalError> {
                    let mut full = p.clone();
                    for (k, &i) in base.iter().enumerate() {
                        full[i] = b[k];
                    }
                    let mut out = DVector::zeros(n);
                    for k in 0..n {
                        out[k] = comps[k].eval(&full)?;
                    }
                    Ok(out)
                };
                let jac_q = |b: &[f64]| -> Result<DMatrix<f64>, EvalError> {
                    let mut full = p.clone();
                    for (k, &i) in base.iter().enumerate() {
                        full[i] = b[k];
                    }
                    let mut m = DMatrix::zeros(n, n);
                    for k in 0..n {
                        for (c, &i) in base.iter().enumerate() {
                            m[(k, c)] = jac[k][i].eval(&full)?;
                        }
                    }
                    Ok(m)
                };
                let b_seed: Vec<f64> = base.iter().map(|&i| p[i]).collect();
                let b = if *q_affine {
                    let m = jac_q(&b_seed)?;
                    let r = q_target - eval_q(&b_seed)?;
                    let db = solve(&m, &r).ok_or(InversionFailure { residual: f64::INFINITY, eval: None })?;
                    b_seed.iter().zip(db.iter()).map(|(a, d)| a + d).collect()
                } else {
                    newton(&eval_q, &jac_q, &b_seed, &q_target)?
                };
                for (k, &i) in base.iter().enumerate() {
                    p[i] = b[k];
                }
                // V(b, f) = A(b) f + c(b)
                let mut a = DMatrix::zeros(n, n);
                let mut c = DVector::zeros(n);
                for k in 0..n {
                    c[k] = comps[n + k].eval(&p)?;
                    for (col, &fi) in fiber.iter().enumerate() {
                        a[(k, col)] = jac[n + k][fi].eval(&p)?;
                    }
                }
                let v_target = DVector::from_column_slice(&y[n..]);
                let fv = solve(&a, &(v_target - c)).ok_or(InversionFailure { residual: f64::INFINITY, eval: None })?;
                for (col, &fi) in fiber.iter().enumerate() {
                    p[fi] = fv[col];
                }
                Ok(p)
            }
            InverseMethod::Newton => {
                let mut seed = self.seed.clone();
                seed[..n].copy_from_slice(&y[..n]);
                seed[n..].iter_mut().for_each(|v| *v = 0.0);
                newton(&|x| self.map.apply(x), &|x| self.map.jacobian(x), &seed, &target)
            }
        }
    }
}

fn vertical(n: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        e[(n + k, k)] = 1.0;
    }
    e
}

fn inverse_of(j: &DMatrix<f64>) -> Result<DMatrix<f64>, EvalError> {
    j.clone().try_inverse().ok_or_else(|| EvalError::Domain("chart Jacobian is singular".into()))
}

/// The canonical vertical endomorphism of the new chart, written in the
/// original coordinates: `J^{-1} E J`.
#[derive(Debug, Clone)]
pub struct PulledTensor<'a> {
    pub(crate) chart: &'a Chart,
}

impl Tensor11Eval for PulledTensor<'_> {
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn value(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let j = self.chart.jacobian(p)?;
        let ji = inverse_of(&j)?;
        Ok(&ji * vertical(self.dim() / 2) * j)
    }

    fn jet(&self, p: &[f64]) -> Result<TensorJet, EvalError> {
        let j = self.chart.jacobian(p)?;
        let ji = inverse_of(&j)?;
        let e = vertical(self.dim() / 2);
        let s = &ji * &e * &j;
        let derivatives = self
            .chart
            .jacobian_derivatives(p)?
            .iter()
            .map(|dj| &ji * (&e * dj - dj * &s))
            .collect();
        Ok(TensorJet { value: s, derivatives })
    }
}

/// The canonical Liouville field of the new chart in old coordinates:
/// `J^{-1} (0, V)`.
#[derive(Debug, Clone)]
pub struct PulledLiouville<'a> {
    pub(crate) chart: &'a Chart,
}

impl VectorFieldEval for PulledLiouville<'_> {
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>, EvalError> {
        let n = self.dim() / 2;
        let y = self.chart.forward(p)?;
        let mut w = DVector::zeros(2 * n);
        w.rows_mut(n, n).copy_from(&y.rows(n, n));
        let ji = inverse_of(&self.chart.jacobian(p)?)?;
        Ok(ji * w)
    }

    fn jet(&self, p: &[f64]) -> Result<VectorJet, EvalError> {
        let n = self.dim() / 2;
        let y = self.chart.forward(p)?;
        let j = self.chart.jacobian(p)?;
        let ji = inverse_of(&j)?;
        let mut w = DVector::zeros(2 * n);
        w.rows_mut(n, n).copy_from(&y.rows(n, n));
        let value = &ji * w;
        let djs = self.chart.jacobian_derivatives(p)?;
        let mut jacobian = DMatrix::zeros(2 * n, 2 * n);
        for (c, dj) in djs.iter().enumerate() {
            let mut dw = DVector::zeros(2 * n);
            for k in 0..n {
                dw[n + k] = j[(n + k, c)];
            }
            let col = &ji * (dw - dj * &value);
            jacobian.set_column(c, &col);
        }
        Ok(VectorJet { value, jacobian })
    }
}

/// A field given in old coordinates, evaluated in the new chart:
/// `y -> J(p) X(p)` with `p = Phi^{-1}(y)`.
#[derive(Debug, Clone)]
pub struct Pushforward<'a> {
    pub(crate) chart: &'a Chart,
    pub(crate) field: &'a VectorField,
}

impl Pushforward<'_> {
    fn old_point(&self, y: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.chart.inverse(y).map_err(|f| {
            f.eval.unwrap_or_else(|| EvalError::Domain(format!("chart inversion failed, residual {:.3e}", f.residual)))
        })
    }
}

impl VectorFieldEval for Pushforward<'_> {
    fn dim(&self) -> usize {
        self.chart.dim()
    }

    fn value(&self, y: &[f64]) -> Result<DVector<f64>, EvalError> {
        let p = self.old_point(y)?;
        Ok(self.chart.jacobian(&p)? * self.field.value(&p)?)
    }

    fn jet(&self, y: &[f64]) -> Result<VectorJet, EvalError> {
        let p = self.old_point(y)?;
        let j = self.chart.jacobian(&p)?;
        let xj = self.field.jet(&p)?;
        let value = &j * &xj.value;
        let mut m = &j * &xj.jacobian;
        for (c, dj) in self.chart.jacobian_derivatives(&p)?.iter().enumerate() {
            let col = dj * &xj.value;
            for i in 0..col.len() {
                m[(i, c)] += col[i];
            }
        }
        Ok(VectorJet { value, jacobian: m * inverse_of(&j)? })
    }
}

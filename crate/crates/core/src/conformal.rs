//! Conformal rescaling `Gamma = f X`, the completeness regularizer, time
//! reparametrization and the identities relating `X` and `f X`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::expr::{EvalError, Expr, Func};
use crate::geometry::{lie_bracket, lie_oneform, OneFormField, ScalarField, VectorField, VectorFieldEval};
use crate::sampling::{SampleBox, SamplingError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConformalError {
    #[error("factor changes sign: positive at {positive:?}, negative at {negative:?}")]
    SignChange { positive: Vec<f64>, negative: Vec<f64> },
    #[error("factor vanishes at {0:?}")]
    Vanishes(Vec<f64>),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptions {
    pub per_axis: usize,
    pub random_points: usize,
    pub seed: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { per_axis: 11, random_points: 500, seed: 0 }
    }
}

impl GridOptions {
    pub fn points(&self, region: &SampleBox) -> Result<Vec<Vec<f64>>, SamplingError> {
        let mut pts = region.grid(self.per_axis, region.dim().min(4));
        pts.extend(region.uniform(self.random_points, self.seed)?);
        Ok(pts)
    }
}

/// `Gamma = f X` with a sampled certificate that `f` keeps one sign.
#[derive(Debug, Clone)]
pub struct ConformalPair {
    pub x: VectorField,
    pub f: Expr,
    pub gamma: VectorField,
    pub min_abs_f: f64,
    pub sign: f64,
    pub certified_points: usize,
}

pub fn rescale(x: &VectorField, f: &Expr, region: &SampleBox, grid: &GridOptions) -> Result<ConformalPair, ConformalError> {
    let pts = grid.points(region)?;
    let vals: Vec<f64> = pts.par_iter().map(|p| f.eval(p)).collect::<Result<_, _>>()?;
    let mut min_abs = f64::INFINITY;
    let (mut pos, mut neg) = (None, None);
    for (p, &v) in pts.iter().zip(&vals) {
        if v == 0.0 {
            return Err(ConformalError::Vanishes(p.clone()));
        }
        min_abs = min_abs.min(v.abs());
        if v > 0.0 && pos.is_none() {
            pos = Some(p.clone());
        }
        if v < 0.0 && neg.is_none() {
            neg = Some(p.clone());
        }
    }
    if let (Some(positive), Some(negative)) = (pos.clone(), neg) {
        return Err(ConformalError::SignChange { positive, negative });
    }
    Ok(ConformalPair {
        x: x.clone(),
        f: f.clone(),
        gamma: x.scaled(f),
        min_abs_f: min_abs,
        sign: if pos.is_some() { 1.0 } else { -1.0 },
        certified_points: pts.len(),
    })
}

/// `sum x_i^2`, proper on `R^N`.
pub fn default_proper_function(dim: usize) -> Expr {
    let terms: Vec<Expr> = (0..dim).map(|i| Expr::powf(&Expr::var(i), 2.0)).collect();
    Expr::sum(&terms)
}

#[derive(Debug, Clone)]
pub struct Regularized {
    pub pair: ConformalPair,
    /// `max |L_Gamma g|` over the certification grid.
    pub bound: f64,
}

/// `f = exp(-(L_X g)^2)`, so that `|L_{fX} g| <= e^{-1/2}/sqrt(2) < 1`.
pub fn regularize_complete(x: &VectorField, g: &Expr, region: &SampleBox, grid: &GridOptions) -> Result<Regularized, ConformalError> {
    let xg = x.apply_to(g);
    let f = Expr::call(Func::Exp, &Expr::neg(&Expr::powf(&xg, 2.0)));
    let pair = rescale(x, &f, region, grid)?;
    let gamma_g = pair.gamma.apply_to(g);
    let pts = grid.points(region)?;
    let bound = pts
        .par_iter()
        .map(|p| gamma_g.eval(p).map(f64::abs))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(Regularized { pair, bound })
}

/// `s(t) = int_0^t f(x(t')) dt'` by the trapezoid rule over accepted steps.
pub fn reparametrize_time(traj: &Trajectory, f: &ScalarField) -> Result<Vec<f64>, EvalError> {
    let vals: Vec<f64> = traj.states.iter().map(|x| f.value(x)).collect::<Result<_, _>>()?;
    let mut s = Vec::with_capacity(vals.len());
    s.push(0.0);
    for k in 1..vals.len() {
        let dt = traj.times[k] - traj.times[k - 1];
        s.push(s[k - 1] + 0.5 * dt * (vals[k] + vals[k - 1]));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharedConstantsReport {
    pub max_discrepancy: f64,
    pub max_abs_lie: f64,
    pub samples: usize,
}

/// Compares `|L_{fX} g|` with `|f| |L_X g|` at sampled points.
pub fn shared_constants_check(
    x: &VectorField,
    f: &Expr,
    g: &Expr,
    region: &SampleBox,
    samples: usize,
    seed: u64,
) -> Result<SharedConstantsReport, ConformalError> {
    let fx = x.scaled(f);
    let lhs = fx.apply_to(g);
    let xg = x.apply_to(g);
    let pts = region.uniform(samples, seed)?;
    let rows: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|p| -> Result<(f64, f64), EvalError> {
            let a = lhs.eval(p)?.abs();
            let b = f.eval(p)?.abs() * xg.eval(p)?.abs();
            Ok(((a - b).abs(), a))
        })
        .collect::<Result<_, _>>()?;
    Ok(SharedConstantsReport {
        max_discrepancy: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        max_abs_lie: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        samples: rows.len(),
    })
}

/// `[fX, Y] - (-(Y f) X + f [X, Y])` at `p`.
pub fn bracket_identity_residual(x: &VectorField, y: &VectorField, f: &Expr, p: &[f64]) -> Result<DVector<f64>, EvalError> {
    let fx = x.scaled(f);
    let lhs = lie_bracket(&fx, y, p)?;
    let yf = y.apply_to(f).eval(p)?;
    let rhs = x.value(p)? * (-yf) + lie_bracket(x, y, p)? * f.eval(p)?;
    Ok(lhs - rhs)
}

/// `L_{fX} alpha - ((i_X alpha) df + f L_X alpha)` at `p`.
pub fn oneform_identity_residual(x: &VectorField, f: &Expr, alpha: &OneFormField, p: &[f64]) -> Result<DVector<f64>, EvalError> {
    let fx = x.scaled(f);
    let lhs = lie_oneform(&fx, alpha, p)?;
    let contraction = alpha.value(p)?.dot(&x.value(p)?);
    let df = ScalarField::new(f.clone(), x.dim()).gradient(p)?;
    let rhs = df * contraction + lie_oneform(x, alpha, p)? * f.eval(p)?;
    Ok(lhs - rhs)
}

fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let ap: Vec<f64> = a.iter().zip(p).map(|(x, y)| y - x).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 > 0.0 { (ap.iter().zip(&ab).map(|(u, v)| u * v).sum::<f64>() / len2).clamp(0.0, 1.0) } else { 0.0 };
    ap.iter().zip(&ab).map(|(u, v)| (u - t * v).powi(2)).sum::<f64>().sqrt()
}

/// `max_{p in points} dist(p, polyline)`.
pub fn polyline_distance(points: &[Vec<f64>], polyline: &[Vec<f64>]) -> f64 {
    points
        .par_iter()
        .map(|p| {
            if polyline.len() == 1 {
                return segment_distance(p, &polyline[0], &polyline[0]);
            }
            polyline.windows(2).map(|w| segment_distance(p, &w[0], &w[1])).fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

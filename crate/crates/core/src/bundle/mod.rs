//! Rebuilding a tangent-bundle structure around a given field: candidate
//! base functions `Q`, new velocities `V = Gamma(Q)`, and the chart
//! `(Q, V)` in which `Gamma` is second order.

mod chart;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr, VariableContext};
use crate::geometry::{liouville, SmoothMap, Tensor11Field, VectorField, VectorFieldEval};
use crate::sampling::{SampleBox, SamplingError};

pub use chart::{Chart, InverseMethod, InversionFailure, PulledLiouville, PulledTensor, Pushforward, NEWTON_MAX_ITER};

pub const NONLINEAR_FIBERS: &str = "nonlinear_fibers";
pub const FIXED_POINTS_ON_BASE: &str = "fixed_points_on_base";

/// What to do when the field has non-isolated zeros on `{V = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixedPointPolicy {
    #[default]
    Reject,
    /// Build anyway and record `FIXED_POINTS_ON_BASE`.
    Warn,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundleError {
    #[error("ambient dimension {0} is odd")]
    OddDimension(usize),
    #[error("need {expected} base functions, got {got}")]
    BaseCount { expected: usize, got: usize },
    #[error("field has dimension {field}, context has {context}")]
    Dimension { field: usize, context: usize },
    #[error("base differentials are dependent at {point:?} (relative singular value {ratio:.3e})")]
    DegenerateBase { point: Vec<f64>, ratio: f64 },
    #[error("(Q, V) are not functionally independent at {point:?} (relative singular value {ratio:.3e})")]
    FunctionalDependence { point: Vec<f64>, ratio: f64 },
    #[error("field vanishes on the zero-velocity locus around {point:?}")]
    FixedPointOnBase { point: Vec<f64> },
    #[error("chart inversion did not converge for {target:?} (residual {residual:.3e})")]
    NonInvertibleChart { target: Vec<f64>, residual: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub grid_per_axis: usize,
    pub random_points: usize,
    pub seed: u64,
    /// Relative singular-value floor for `dQ` and `d(Q, V)`.
    pub independence_threshold: f64,
    /// `|Gamma|` below this on the zero-velocity locus counts as a zero.
    pub fixed_point_tolerance: f64,
    pub fixed_points: FixedPointPolicy,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            grid_per_axis: 11,
            random_points: 500,
            seed: 0,
            independence_threshold: 1e-10,
            fixed_point_tolerance: 1e-9,
            fixed_points: FixedPointPolicy::Reject,
        }
    }
}

/// A tangent-bundle structure adapted to a field `Gamma`.
#[derive(Debug, Clone)]
pub struct TangentStructure {
    ctx: VariableContext,
    gamma: VectorField,
    q: Vec<Expr>,
    v: Vec<Expr>,
    chart: Chart,
    domain: SampleBox,
    warnings: Vec<String>,
    jacobian_min_abs_det: f64,
    jacobian_min_location: Vec<f64>,
}

/// Velocity and force blocks of `Gamma` in the new chart, as functions of
/// the original coordinates.
#[derive(Debug, Clone)]
pub struct ChartExpression {
    pub velocity: Vec<Expr>,
    pub force: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureJson {
    #[serde(rename = "Q")]
    pub q: Vec<String>,
    #[serde(rename = "V")]
    pub v: Vec<String>,
    pub warnings: Vec<String>,
    pub jacobian_min_abs_det: f64,
    pub jacobian_min_location: Vec<f64>,
    pub inverse: String,
    pub domain: SampleBox,
}

fn singular_ratio(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    smin / smax.max(1.0)
}

fn is_affine(map: &SmoothMap, rows: std::ops::Range<usize>, cols: &[usize]) -> bool {
    rows.into_iter().all(|i| {
        cols.iter().all(|&c| {
            let d = &map.jacobian_exprs()[i][c];
            !cols.iter().any(|&k| d.depends_on(k))
        })
    })
}

/// Gauss–Newton (minimum-norm steps) towards `V = 0` from `p`.
fn project_to_zero_velocity(v: &SmoothMap, p: &[f64]) -> Option<Vec<f64>> {
    let mut x = DVector::from_column_slice(p);
    for _ in 0..50 {
        let r = v.apply(x.as_slice()).ok()?;
        if r.norm() < 1e-13 {
            return Some(x.as_slice().to_vec());
        }
        let j = v.jacobian(x.as_slice()).ok()?;
        let jjt = &j * j.transpose();
        let y = jjt.lu().solve(&r)?;
        x -= j.transpose() * y;
        if !x.iter().all(|c| c.is_finite()) {
            return None;
        }
    }
    let r = v.apply(x.as_slice()).ok()?;
    (r.norm() < 1e-10).then(|| x.as_slice().to_vec())
}

/// Builds the structure in which `gamma` is second order with base
/// functions `q`. Independence and the absence of non-isolated zeros on the
/// zero-velocity locus are certified on a grid plus random points of
/// `domain`.
pub fn build(
    ctx: &VariableContext,
    gamma: &VectorField,
    q: &[Expr],
    domain: &SampleBox,
    opts: &BuildOptions,
) -> Result<TangentStructure, BundleError> {
    let dim = ctx.dim();
    if gamma.dim() != dim || domain.dim() != dim {
        return Err(BundleError::Dimension { field: gamma.dim(), context: dim });
    }
    if dim % 2 == 1 {
        return Err(BundleError::OddDimension(dim));
    }
    let n = dim / 2;
    if q.len() < n {
        return Err(BundleError::BaseCount { expected: n, got: q.len() });
    }

    let mut points = domain.grid(opts.grid_per_axis, dim.min(4));
    points.extend(domain.uniform(opts.random_points, opts.seed)?);

    let qmap = SmoothMap::new(dim, q.to_vec());
    let bad_base = points.par_iter().find_map_first(|p| match qmap.jacobian(p) {
        Ok(j) => {
            let r = singular_ratio(&j);
            (r < opts.independence_threshold).then(|| Ok((p.clone(), r)))
        }
        Err(e) => Some(Err(e)),
    });
    if let Some(found) = bad_base {
        let (point, ratio) = found?;
        return Err(BundleError::DegenerateBase { point, ratio });
    }

    let v: Vec<Expr> = q.iter().map(|qk| gamma.apply_to(qk)).collect();
    let mut comps = q.to_vec();
    comps.extend(v.iter().cloned());
    let map = SmoothMap::new(dim, comps);

    // minimum |det| over the sample set, and the first dependent point
    let dets: Vec<Result<(f64, f64), EvalError>> = points
        .par_iter()
        .map(|p| {
            let j = map.jacobian(p)?;
            if j.nrows() != j.ncols() {
                return Ok((0.0, 0.0));
            }
            Ok((j.determinant().abs(), singular_ratio(&j)))
        })
        .collect();
    let mut min_det = f64::INFINITY;
    let mut min_loc = domain.center();
    for (p, d) in points.iter().zip(&dets) {
        let (det, ratio) = d.clone()?;
        if ratio < opts.independence_threshold {
            return Err(BundleError::FunctionalDependence { point: p.clone(), ratio });
        }
        if det < min_det {
            min_det = det;
            min_loc = p.clone();
        }
    }

    let vmap = SmoothMap::new(dim, v.clone());
    let fixed = points.par_iter().find_map_first(|p| {
        let z = project_to_zero_velocity(&vmap, p)?;
        if domain.excluded(&z) {
            return None;
        }
        let jet = gamma.jet(&z).ok()?;
        let isolated = singular_ratio(&jet.jacobian) > 1e-8;
        (jet.value.norm() < opts.fixed_point_tolerance && !isolated).then_some(z)
    });
    let mut warnings = Vec::new();
    if let Some(point) = fixed {
        match opts.fixed_points {
            FixedPointPolicy::Reject => return Err(BundleError::FixedPointOnBase { point }),
            FixedPointPolicy::Warn => warnings.push(FIXED_POINTS_ON_BASE.to_string()),
        }
    }

    let all: Vec<usize> = (0..dim).collect();
    let inverse = if is_affine(&map, 0..dim, &all) {
        let origin = vec![0.0; dim];
        let a = map.jacobian(&origin)?;
        let b = map.apply(&origin)?;
        let a_inv = a.try_inverse().ok_or(BundleError::FunctionalDependence { point: origin, ratio: 0.0 })?;
        InverseMethod::Affine { a_inv, b }
    } else {
        let mut base: Vec<usize> = q.iter().flat_map(|e| e.variables()).collect();
        base.sort_unstable();
        base.dedup();
        let fiber: Vec<usize> = all.iter().copied().filter(|i| !base.contains(i)).collect();
        if base.len() == n && is_affine(&map, n..dim, &fiber) {
            InverseMethod::FiberAffine { q_affine: is_affine(&map, 0..n, &base), base, fiber }
        } else {
            warnings.push(NONLINEAR_FIBERS.to_string());
            InverseMethod::Newton
        }
    };
    let chart = Chart::new(map, inverse, domain.center());

    Ok(TangentStructure {
        ctx: ctx.clone(),
        gamma: gamma.clone(),
        q: q.to_vec(),
        v,
        chart,
        domain: domain.clone(),
        warnings,
        jacobian_min_abs_det: min_det,
        jacobian_min_location: min_loc,
    })
}

impl TangentStructure {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn dim(&self) -> usize {
        self.ctx.dim()
    }

    pub fn context(&self) -> &VariableContext {
        &self.ctx
    }

    pub fn gamma(&self) -> &VectorField {
        &self.gamma
    }

    pub fn base_functions(&self) -> &[Expr] {
        &self.q
    }

    pub fn velocity_functions(&self) -> &[Expr] {
        &self.v
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn domain(&self) -> &SampleBox {
        &self.domain
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn jacobian_min_abs_det(&self) -> f64 {
        self.jacobian_min_abs_det
    }

    pub fn inverse_method(&self) -> &InverseMethod {
        &self.chart.inverse
    }

    /// `S` in the new chart (canonical form).
    pub fn s_hat(&self) -> Tensor11Field {
        Tensor11Field::vertical_endomorphism(self.n())
    }

    /// `Delta` in the new chart (canonical form).
    pub fn delta_hat(&self) -> VectorField {
        liouville(self.n())
    }

    /// `S` of the new chart expressed in the original coordinates.
    pub fn s_old(&self) -> PulledTensor<'_> {
        PulledTensor { chart: &self.chart }
    }

    /// `Delta` of the new chart expressed in the original coordinates.
    pub fn delta_old(&self) -> PulledLiouville<'_> {
        PulledLiouville { chart: &self.chart }
    }

    /// `gamma` as a field on the new chart.
    pub fn gamma_new(&self) -> Pushforward<'_> {
        Pushforward { chart: &self.chart, field: &self.gamma }
    }

    /// Any field of the original chart carried to the new one.
    pub fn pushforward<'a>(&'a self, field: &'a VectorField) -> Pushforward<'a> {
        Pushforward { chart: &self.chart, field }
    }

    pub fn chart_forward(&self, p: &[f64]) -> Result<Vec<f64>, BundleError> {
        Ok(self.chart.forward(p)?.as_slice().to_vec())
    }

    pub fn chart_inverse(&self, y: &[f64]) -> Result<Vec<f64>, BundleError> {
        self.chart.inverse(y).map_err(|f| match f.eval {
            Some(e) => BundleError::Eval(e),
            None => BundleError::NonInvertibleChart { target: y.to_vec(), residual: f.residual },
        })
    }

    pub fn to_json(&self) -> StructureJson {
        StructureJson {
            q: self.q.iter().map(|e| e.to_string_in(&self.ctx)).collect(),
            v: self.v.iter().map(|e| e.to_string_in(&self.ctx)).collect(),
            warnings: self.warnings.clone(),
            jacobian_min_abs_det: self.jacobian_min_abs_det,
            jacobian_min_location: self.jacobian_min_location.clone(),
            inverse: self.chart.inverse.tag().to_string(),
            domain: self.domain.clone(),
        }
    }
}

/// Velocity block `V^k` and force block `Gamma(V^k)` of `gamma` in the
/// chart of `t`.
pub fn express_in_chart(gamma: &VectorField, t: &TangentStructure) -> ChartExpression {
    ChartExpression {
        velocity: t.q.iter().map(|qk| gamma.apply_to(qk)).collect(),
        force: t.v.iter().map(|vk| gamma.apply_to(vk)).collect(),
    }
}

impl ChartExpression {
    /// Evaluates both blocks at an old-chart point.
    pub fn eval(&self, p: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let vel = self.velocity.iter().map(|e| e.eval(p)).collect::<Result<_, _>>()?;
        let force = self.force.iter().map(|e| e.eval(p)).collect::<Result<_, _>>()?;
        Ok((vel, force))
    }
}

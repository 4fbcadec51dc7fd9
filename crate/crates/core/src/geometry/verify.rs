//! Sampled certificate that a pair `(S, Delta)` defines a tangent-bundle
//! structure.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::fields::{Tensor11Eval, VectorFieldEval, VectorJet};
use super::ops::{bracket_jets, nijenhuis_jets};
use crate::dynamics::{integrate, IntegratorOptions, Reversed, Status};
use crate::expr::EvalError;
use crate::sampling::{SampleBox, SamplingError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("tensor has dimension {tensor}, vector field has {field}")]
    Dimension { tensor: usize, field: usize },
    #[error("sample box has dimension {got}, structure has {expected}")]
    BoxDimension { expected: usize, got: usize },
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("evaluation failed at sample {point:?}: {source}")]
    SingularSample { point: Vec<f64>, source: EvalError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    /// Tolerance for the pointwise algebraic and differential axioms.
    pub tolerance: f64,
    /// Tolerance for the backward-flow Cauchy test.
    pub flow_tolerance: f64,
    /// Length of one backward-flow segment.
    pub flow_horizon: f64,
    pub rank_threshold: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 500,
            seed: 0,
            tolerance: 1e-8,
            flow_tolerance: 1e-6,
            flow_horizon: 20.0,
            rank_threshold: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomResult {
    pub name: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub heuristic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankSummary {
    pub expected: usize,
    pub min: usize,
    pub max: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub axioms: Vec<AxiomResult>,
    pub samples: usize,
    pub seed: u64,
    pub sample_box: SampleBox,
    pub rank: RankSummary,
    pub verdict: bool,
}

impl VerificationReport {
    pub fn axiom(&self, name: &str) -> Option<&AxiomResult> {
        self.axioms.iter().find(|a| a.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const S_SQUARED: &str = "s_squared";
pub const DELTA_IN_IMAGE: &str = "delta_in_image";
pub const LIE_DELTA_S: &str = "lie_delta_s_plus_s";
pub const NIJENHUIS: &str = "nijenhuis";
pub const FLOW_LIMIT: &str = "flow_limit";

const FLOW_SEGMENTS: usize = 4;
pub const SODE: &str = "sode";

struct PointResult {
    residuals: [f64; 6],
    rank: usize,
}

/// Distance of `v` from the column space of `s`, and the numerical rank.
fn image_distance(s: &DMatrix<f64>, v: &DVector<f64>, threshold: f64) -> (f64, usize) {
    let svd = s.clone().svd(true, false);
    let u = svd.u.expect("left vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut proj = DVector::zeros(v.len());
    let mut rank = 0;
    if smax > 0.0 {
        for (k, &sv) in svd.singular_values.iter().enumerate() {
            if sv > threshold * smax {
                rank += 1;
                let col = u.column(k);
                proj += col * col.dot(v);
            }
        }
    }
    ((v - proj).norm(), rank)
}

/// Cauchy gap of the backward flow of `delta`: the distance between the
/// endpoints of consecutive segments of length `horizon`. Slowly converging
/// points get up to `FLOW_SEGMENTS` segments before the last gap is reported.
fn backward_flow_gap(delta: &dyn VectorFieldEval, p: &[f64], horizon: f64, tolerance: f64) -> Result<f64, EvalError> {
    let opts = IntegratorOptions::with_tolerances(1e-10, 1e-13);
    let rev = Reversed(delta);
    let mut prev = match integrate(&rev, p, horizon, &opts) {
        Ok(t) if t.status == Status::Completed => t.last().to_vec(),
        Ok(_) => return Ok(f64::INFINITY),
        Err(crate::dynamics::DynamicsError::InitialPoint(e)) => return Err(e),
        Err(_) => return Ok(f64::INFINITY),
    };
    let mut gap = f64::INFINITY;
    for _ in 0..FLOW_SEGMENTS {
        let next = match integrate(&rev, &prev, horizon, &opts) {
            Ok(t) if t.status == Status::Completed => t.last().to_vec(),
            _ => return Ok(f64::INFINITY),
        };
        gap = prev.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if gap <= tolerance {
            break;
        }
        prev = next;
    }
    Ok(gap)
}

fn check_point(
    s: &dyn Tensor11Eval,
    delta: &dyn VectorFieldEval,
    gamma: Option<&dyn VectorFieldEval>,
    p: &[f64],
    opts: &VerifyOptions,
) -> Result<PointResult, EvalError> {
    let n = s.dim();
    let sj = s.jet(p)?;
    let dj = delta.jet(p)?;
    let sv = &sj.value;

    let s2 = (sv * sv).amax();

    let (dist, rank) = image_distance(sv, &dj.value, opts.rank_threshold);
    let in_image = (sv * &dj.value).amax().max(dist);

    let mut lie = 0.0_f64;
    for j in 0..n {
        let ej = VectorJet::basis(n, j);
        let col = bracket_jets(&dj, &sj.apply(&ej)) - sv * bracket_jets(&dj, &ej) + sv.column(j);
        lie = lie.max(col.amax());
    }

    let mut nij = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = nijenhuis_jets(&sj, &VectorJet::basis(n, i), &VectorJet::basis(n, j));
            nij = nij.max(r.amax());
        }
    }

    let flow = backward_flow_gap(delta, p, opts.flow_horizon, opts.flow_tolerance)?;

    let sode = match gamma {
        Some(g) => (sv * g.value(p)? - &dj.value).amax(),
        None => 0.0,
    };
    Ok(PointResult { residuals: [s2, in_image, lie, nij, flow, sode], rank })
}

/// Samples `opts.samples` points of `region` and checks every axiom at
/// each; when `gamma` is given the second-order condition `S(Gamma) = Delta`
/// is checked as well. The flow axiom is a finite-horizon heuristic.
pub fn verify_tangent_structure(
    s: &dyn Tensor11Eval,
    delta: &dyn VectorFieldEval,
    gamma: Option<&dyn VectorFieldEval>,
    region: &SampleBox,
    opts: &VerifyOptions,
) -> Result<VerificationReport, VerifyError> {
    let n = s.dim();
    if delta.dim() != n || gamma.is_some_and(|g| g.dim() != n) {
        return Err(VerifyError::Dimension { tensor: n, field: delta.dim() });
    }
    if region.dim() != n {
        return Err(VerifyError::BoxDimension { expected: n, got: region.dim() });
    }
    let points = region.uniform(opts.samples, opts.seed)?;
    let results: Vec<PointResult> = points
        .par_iter()
        .map(|p| {
            check_point(s, delta, gamma, p, opts)
                .map_err(|source| VerifyError::SingularSample { point: p.clone(), source })
        })
        .collect::<Result<_, _>>()?;

    let mut max = [0.0_f64; 6];
    let (mut rmin, mut rmax) = (usize::MAX, 0);
    for r in &results {
        for (m, v) in max.iter_mut().zip(r.residuals) {
            *m = if v.is_nan() { f64::INFINITY } else { m.max(v) };
        }
        rmin = rmin.min(r.rank);
        rmax = rmax.max(r.rank);
    }
    if results.is_empty() {
        rmin = 0;
    }
    let mut names = vec![S_SQUARED, DELTA_IN_IMAGE, LIE_DELTA_S, NIJENHUIS, FLOW_LIMIT];
    if gamma.is_some() {
        names.push(SODE);
    }
    let axioms: Vec<AxiomResult> = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let tolerance = if *name == FLOW_LIMIT { opts.flow_tolerance } else { opts.tolerance };
            AxiomResult {
                name: name.to_string(),
                max_residual: max[k],
                tolerance,
                pass: max[k] <= tolerance,
                heuristic: *name == FLOW_LIMIT,
            }
        })
        .collect();
    let expected = n / 2;
    let verdict = axioms.iter().all(|a| a.pass);
    Ok(VerificationReport {
        axioms,
        samples: results.len(),
        seed: opts.seed,
        sample_box: region.clone(),
        rank: RankSummary { expected, min: rmin, max: rmax, degenerate: rmin != expected || rmax != expected },
        verdict,
    })
}

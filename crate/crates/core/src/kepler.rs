//! The Kepler problem lifted to `TR^4_0` through the Kustaanheimo–Stiefel
//! map, its conformal regularization and the oscillator shells.
//!
//! Coordinates on `TR^4` are `(y0..y3, v0..v3)`; on `TR^3` they are
//! `(x1..x3, w1..w3)` with `w = dx/dt`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bundle::{build, BuildOptions, BundleError, TangentStructure};
use crate::conformal::{rescale, ConformalError, ConformalPair, GridOptions};
use crate::dynamics::{integrate_at, DynamicsError, IntegratorOptions, Status};
use crate::expr::{parse, Expr, VariableContext};
use crate::geometry::{ScalarField, VectorField};
use crate::sampling::SampleBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KeplerError {
    #[error("the covering map is undefined at the origin")]
    Origin,
    #[error("energy {0} is not negative")]
    PositiveEnergy(f64),
    #[error("coupling must be positive, got {0}")]
    Coupling(f64),
    #[error("initial state is off the constraint surface (|l| = {0:.3e})")]
    OffConstraint(f64),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeplerParams {
    pub g: f64,
    pub r_min: f64,
}

impl Default for KeplerParams {
    fn default() -> Self {
        Self { g: 1.0, r_min: 1e-3 }
    }
}

impl KeplerParams {
    pub fn new(g: f64, r_min: f64) -> Result<Self, KeplerError> {
        if !(g > 0.0) {
            return Err(KeplerError::Coupling(g));
        }
        Ok(Self { g, r_min })
    }
}

pub fn context() -> VariableContext {
    VariableContext::new(&["y0", "y1", "y2", "y3", "v0", "v1", "v2", "v3"]).expect("valid names")
}

/// New-chart coordinates `(Q0..Q3, V0..V3)`.
pub fn new_context() -> VariableContext {
    VariableContext::new(&["Q0", "Q1", "Q2", "Q3", "V0", "V1", "V2", "V3"]).expect("valid names")
}

pub fn context3d() -> VariableContext {
    VariableContext::new(&["x1", "x2", "x3", "w1", "w2", "w3"]).expect("valid names")
}

fn lit(v: f64) -> String {
    format!("({v:e})")
}

fn ex(src: &str, ctx: &VariableContext) -> Expr {
    parse(src, ctx).unwrap_or_else(|e| panic!("built-in expression `{src}`: {e}"))
}

fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn ks_map(y: &[f64]) -> Result<[f64; 3], KeplerError> {
    if norm2(&y[..4]) == 0.0 {
        return Err(KeplerError::Origin);
    }
    Ok([
        2.0 * (y[0] * y[1] + y[2] * y[3]),
        2.0 * (y[0] * y[2] - y[1] * y[3]),
        y[0] * y[0] + y[3] * y[3] - y[1] * y[1] - y[2] * y[2],
    ])
}

/// Jacobian of [`ks_map`], rows `dx^i/dy^mu`.
pub fn ks_jacobian(y: &[f64]) -> [[f64; 4]; 3] {
    [
        [2.0 * y[1], 2.0 * y[0], 2.0 * y[3], 2.0 * y[2]],
        [2.0 * y[2], -2.0 * y[3], 2.0 * y[0], -2.0 * y[1]],
        [2.0 * y[0], -2.0 * y[1], -2.0 * y[2], 2.0 * y[3]],
    ]
}

pub fn ks_tangent(y: &[f64], u: &[f64]) -> [f64; 3] {
    let j = ks_jacobian(y);
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(&j) {
        *o = row.iter().zip(u).map(|(a, b)| a * b).sum();
    }
    out
}

/// Direction along the fibre of the covering map at `y`.
pub fn fiber_direction(y: &[f64]) -> [f64; 4] {
    [-y[3], -y[2], y[1], y[0]]
}

/// `l(y, v) = <k(y), v> = y0 v3 - y3 v0 + y1 v2 - y2 v1`; `R^2 l` is the
/// velocity component conjugate to the fibre angle.
pub fn ks_constraint(y: &[f64], v: &[f64]) -> f64 {
    y[0] * v[3] - y[3] * v[0] + y[1] * v[2] - y[2] * v[1]
}

pub fn ks_constraint_expr(ctx: &VariableContext) -> Expr {
    ex("y0*v3 - y3*v0 + y1*v2 - y2*v1", ctx)
}

const R2: &str = "(y0^2 + y1^2 + y2^2 + y3^2)";
const VV: &str = "(v0^2 + v1^2 + v2^2 + v3^2)";
const YV: &str = "(y0*v0 + y1*v1 + y2*v2 + y3*v3)";

/// Euler–Lagrange field of `L = 2R^2 v^2 + g/R^2` on `TR^4_0`.
pub fn gamma_ks(params: &KeplerParams) -> VectorField {
    let ctx = context();
    let g = lit(params.g);
    let mut comps: Vec<Expr> = (0..4).map(|k| ex(&format!("v{k}"), &ctx)).collect();
    for k in 0..4 {
        let src = format!("{VV}*y{k}/{R2} - {g}*y{k}/(2*{R2}^3) - 2*{YV}*v{k}/{R2}");
        comps.push(ex(&src, &ctx));
    }
    VectorField::new(comps)
}

pub fn lagrangian(params: &KeplerParams) -> ScalarField {
    let ctx = context();
    ScalarField::new(ex(&format!("2*{R2}*{VV} + {}/{R2}", lit(params.g)), &ctx), 8)
}

pub fn energy_expr(params: &KeplerParams) -> Expr {
    ex(&format!("2*{R2}*{VV} - {}/{R2}", lit(params.g)), &context())
}

pub fn energy(y: &[f64], v: &[f64], params: &KeplerParams) -> f64 {
    2.0 * norm2(y) * norm2(v) - params.g / norm2(y)
}

/// Energy written in the new chart, `V^2/(2R^2) - g/R^2`.
pub fn energy_new(q: &[f64], vel: &[f64], params: &KeplerParams) -> f64 {
    let r2 = norm2(q);
    norm2(vel) / (2.0 * r2) - params.g / r2
}

/// Regularized field in the new chart: `V d/dQ + 2 E(Q, V) Q d/dV`.
pub fn gamma_hat_new(params: &KeplerParams) -> VectorField {
    let ctx = new_context();
    let rq = "(Q0^2 + Q1^2 + Q2^2 + Q3^2)";
    let vv = "(V0^2 + V1^2 + V2^2 + V3^2)";
    let e = format!("({vv}/(2*{rq}) - {}/{rq})", lit(params.g));
    let mut comps: Vec<Expr> = (0..4).map(|k| ex(&format!("V{k}"), &ctx)).collect();
    for k in 0..4 {
        comps.push(ex(&format!("2*{e}*Q{k}"), &ctx));
    }
    VectorField::new(comps)
}

/// Restriction of the regularized field to the shell of energy `e`:
/// `V d/dQ - 2|E| Q d/dV`.
pub fn shell_oscillator(e: f64) -> VectorField {
    let ctx = new_context();
    let w2 = lit(2.0 * e.abs());
    let mut comps: Vec<Expr> = (0..4).map(|k| ex(&format!("V{k}"), &ctx)).collect();
    for k in 0..4 {
        comps.push(ex(&format!("-{w2}*Q{k}"), &ctx));
    }
    VectorField::new(comps)
}

/// Sample region on `TR^4_0`: `|y|, |v| <= half_width`, `R >= r_min`.
pub fn domain(params: &KeplerParams, half_width: f64) -> SampleBox {
    SampleBox::cube(8, half_width).with_exclusion(vec![0, 1, 2, 3], params.r_min.max(0.1 * half_width))
}

#[derive(Debug, Clone)]
pub struct RegularizedKepler {
    pub params: KeplerParams,
    pub gamma: VectorField,
    pub pair: ConformalPair,
    pub structure: TangentStructure,
    /// The regularized field written directly in `(Q, V)`.
    pub gamma_hat_new: VectorField,
}

/// `Gamma_hat = 2R^2 Gamma` with base `Q = y`, so that `V = 2R^2 v`.
pub fn regularized_structure(params: &KeplerParams, region: &SampleBox, opts: &BuildOptions) -> Result<RegularizedKepler, KeplerError> {
    let ctx = context();
    let gamma = gamma_ks(params);
    let f = ex(&format!("2*{R2}"), &ctx);
    let grid = GridOptions { per_axis: opts.grid_per_axis, random_points: opts.random_points, seed: opts.seed };
    let pair = rescale(&gamma, &f, region, &grid)?;
    let q: Vec<Expr> = (0..4).map(|k| ex(&format!("y{k}"), &ctx)).collect();
    let structure = build(&ctx, &pair.gamma, &q, region, opts)?;
    Ok(RegularizedKepler { params: *params, gamma, pair, structure, gamma_hat_new: gamma_hat_new(params) })
}

/// `count` new-chart states with `V^2/2 + |E| R^2 = g` and `R >= r_min`.
pub fn shell_sample(e: f64, params: &KeplerParams, count: usize, seed: u64) -> Result<Vec<[f64; 8]>, KeplerError> {
    if e >= 0.0 {
        return Err(KeplerError::PositiveEnergy(e));
    }
    let r_max2 = params.g / e.abs();
    let r_min2 = params.r_min * params.r_min;
    if r_min2 >= r_max2 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| -> [f64; 4] {
        loop {
            let d: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
            let n = norm2(&d).sqrt();
            if n > 1e-3 && n <= 1.0 {
                return d.map(|c| c / n);
            }
        }
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r2 = rng.gen_range(r_min2..r_max2);
        let speed = (2.0 * (params.g - e.abs() * r2)).sqrt();
        let dq = unit(&mut rng);
        let dv = unit(&mut rng);
        let r = r2.sqrt();
        let mut s = [0.0; 8];
        for k in 0..4 {
            s[k] = r * dq[k];
            s[4 + k] = speed * dv[k];
        }
        out.push(s);
    }
    Ok(out)
}

/// Shell relation residual `V^2/2 + |E| R^2 - g`.
pub fn shell_residual(state: &[f64], e: f64, params: &KeplerParams) -> f64 {
    norm2(&state[4..8]) / 2.0 + e.abs() * norm2(&state[..4]) - params.g
}

/// Eccentric representative of the shell of energy `e` in the new chart:
/// `Q = (A, 0, 0, 0)`, `V = (0, B, 0, 0)` with `A^2 = 3g/(4|E|)`,
/// `B^2 = g/2`.
pub fn shell_representative(e: f64, params: &KeplerParams) -> Result<[f64; 8], KeplerError> {
    if e >= 0.0 {
        return Err(KeplerError::PositiveEnergy(e));
    }
    let a = (0.75 * params.g / e.abs()).sqrt();
    let b = (0.5 * params.g).sqrt();
    Ok([a, 0.0, 0.0, 0.0, 0.0, b, 0.0, 0.0])
}

/// Circular orbit of energy `e` on the constraint surface, in `(y, v)`.
pub fn circular_state(e: f64, params: &KeplerParams) -> Result<[f64; 8], KeplerError> {
    if e >= 0.0 {
        return Err(KeplerError::PositiveEnergy(e));
    }
    let a = (params.g / (2.0 * e.abs())).sqrt();
    let b = params.g.sqrt() / (2.0 * a * a);
    Ok([a, 0.0, 0.0, 0.0, 0.0, b, 0.0, 0.0])
}

/// Physical (3D) Kepler frequency `2 sqrt(2|E|^3)/g`.
pub fn kepler3d_frequency(e: f64, params: &KeplerParams) -> f64 {
    2.0 * (2.0 * e.abs().powi(3)).sqrt() / params.g
}

/// `x'' = -g x / |x|^3` on `TR^3_0`.
pub fn kepler3d_field(params: &KeplerParams) -> VectorField {
    let ctx = context3d();
    let r3 = "(x1^2 + x2^2 + x3^2)^1.5";
    let g = lit(params.g);
    let mut comps: Vec<Expr> = (1..=3).map(|k| ex(&format!("w{k}"), &ctx)).collect();
    for k in 1..=3 {
        comps.push(ex(&format!("-{g}*x{k}/{r3}"), &ctx));
    }
    VectorField::new(comps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionReport {
    pub max_position_error: f64,
    pub max_velocity_error: f64,
    pub compared_until: f64,
    pub samples: usize,
    /// True when a collision stopped either run before `t_end`.
    pub stopped_early: bool,
}

/// Integrates the lifted field from `(y0, v0)` and the 3D field from the
/// projected initial data, comparing projected and direct states at
/// `samples + 1` equally spaced times while both stay outside `R < r_min`.
pub fn projection_residual(
    state: &[f64; 8],
    params: &KeplerParams,
    t_end: f64,
    samples: usize,
    opts: &IntegratorOptions,
    constraint_tol: f64,
) -> Result<ProjectionReport, KeplerError> {
    let (y, v) = state.split_at(4);
    let l = ks_constraint(y, v);
    if l.abs() > constraint_tol {
        return Err(KeplerError::OffConstraint(l.abs()));
    }
    let x0 = ks_map(y)?;
    let w0 = ks_tangent(y, v);
    let times: Vec<f64> = (0..=samples).map(|k| t_end * k as f64 / samples.max(1) as f64).collect();
    let r_min = params.r_min;
    let lift_opts = opts.clone().with_stop(move |s: &[f64]| norm2(&s[..4]) < r_min * r_min);
    let flat_opts = opts.clone().with_stop(move |s: &[f64]| norm2(&s[..3]).sqrt() < r_min * r_min);
    let (lt, lifted) = integrate_at(&gamma_ks(params), state, &times, &lift_opts)?;
    let init3: Vec<f64> = x0.iter().chain(w0.iter()).copied().collect();
    let (ft, flat) = integrate_at(&kepler3d_field(params), &init3, &times, &flat_opts)?;
    let m = lifted.len().min(flat.len());
    let (mut ep, mut ev) = (0.0_f64, 0.0_f64);
    for k in 0..m {
        let (y, v) = lifted[k].split_at(4);
        let x = ks_map(y)?;
        let w = ks_tangent(y, v);
        for i in 0..3 {
            ep = ep.max((x[i] - flat[k][i]).abs());
            ev = ev.max((w[i] - flat[k][3 + i]).abs());
        }
    }
    let early = !matches!(lt.status, Status::Completed) || !matches!(ft.status, Status::Completed);
    Ok(ProjectionReport {
        max_position_error: ep,
        max_velocity_error: ev,
        compared_until: if m > 0 { times[m - 1] } else { 0.0 },
        samples: m,
        stopped_early: early,
    })
}

//! The isotropic oscillator in Hamiltonian and Lagrangian form, its
//! `f`-deformations and the tangent-bundle structure in which the deformed
//! field is again second order.
//!
//! Phase space uses `(q1..qn, p1..pn)`, velocity space `(q1..qn, v1..vn)`;
//! the Legendre map is `p = v`, so both share component indices.

use serde::Serialize;
use thiserror::Error;

use crate::bundle::{build, BuildOptions, BundleError, TangentStructure};
use crate::expr::{parse, EvalError, Expr, ParseError, VariableContext};
use crate::geometry::{hamiltonian_field, ScalarField, SmoothMap, TwoFormField, VectorField};
use crate::sampling::SampleBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FOscillatorError {
    #[error("deformation derivative is not positive at xi = {xi} (value {value})")]
    NonPositiveFrequency { xi: f64, value: f64 },
    #[error("dimension must be at least 1")]
    Dimension,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

pub fn phase_context(n: usize) -> VariableContext {
    let mut names: Vec<String> = (1..=n).map(|k| format!("q{k}")).collect();
    names.extend((1..=n).map(|k| format!("p{k}")));
    VariableContext::new(&names).expect("valid names")
}

pub fn velocity_context(n: usize) -> VariableContext {
    let mut names: Vec<String> = (1..=n).map(|k| format!("q{k}")).collect();
    names.extend((1..=n).map(|k| format!("v{k}")));
    VariableContext::new(&names).expect("valid names")
}

pub fn deformation_context() -> VariableContext {
    VariableContext::new(&["xi"]).expect("valid name")
}

fn half_square_sum(dim: usize) -> Expr {
    let terms: Vec<Expr> = (0..dim).map(|i| Expr::powf(&Expr::var(i), 2.0)).collect();
    Expr::mul(&Expr::constant(0.5), &Expr::sum(&terms))
}

#[derive(Debug, Clone)]
pub struct OscillatorSystem {
    pub n: usize,
    pub phase_ctx: VariableContext,
    pub velocity_ctx: VariableContext,
    /// `H = (p^2 + q^2)/2` on phase space.
    pub h: ScalarField,
    pub x_h: VectorField,
    /// `L = (v^2 - q^2)/2`.
    pub lagrangian: ScalarField,
    /// `v d/dq - q d/dv`.
    pub gamma: VectorField,
    /// `E_H = (v^2 + q^2)/2`.
    pub e_h: ScalarField,
    pub omega: TwoFormField,
    /// Pullback of `omega` by the Legendre map, `sum dq^k ^ dv^k`.
    pub omega_h: TwoFormField,
    pub legendre: SmoothMap,
}

pub fn make_oscillator(n: usize) -> Result<OscillatorSystem, FOscillatorError> {
    if n == 0 {
        return Err(FOscillatorError::Dimension);
    }
    let dim = 2 * n;
    let h = ScalarField::new(half_square_sum(dim), dim);
    let x_h = hamiltonian_field(&h);
    let kinetic: Vec<Expr> = (n..dim).map(|i| Expr::powf(&Expr::var(i), 2.0)).collect();
    let potential: Vec<Expr> = (0..n).map(|i| Expr::powf(&Expr::var(i), 2.0)).collect();
    let l = Expr::mul(&Expr::constant(0.5), &Expr::sub(&Expr::sum(&kinetic), &Expr::sum(&potential)));
    let comps = (0..dim).map(|i| if i < n { Expr::var(n + i) } else { Expr::neg(&Expr::var(i - n)) }).collect();
    Ok(OscillatorSystem {
        n,
        phase_ctx: phase_context(n),
        velocity_ctx: velocity_context(n),
        h,
        x_h,
        lagrangian: ScalarField::new(l, dim),
        gamma: VectorField::new(comps),
        e_h: ScalarField::new(half_square_sum(dim), dim),
        omega: TwoFormField::canonical(n),
        omega_h: TwoFormField::canonical(n),
        legendre: SmoothMap::identity(dim),
    })
}

/// A deformation `xi -> f(xi)` with its first two derivatives.
#[derive(Debug, Clone)]
pub struct Deformation {
    pub source: String,
    pub f: Expr,
    pub df: Expr,
    pub d2f: Expr,
}

impl Deformation {
    pub fn new(f: Expr, source: impl Into<String>) -> Self {
        let df = f.derivative(0);
        let d2f = df.derivative(0);
        Self { source: source.into(), f, df, d2f }
    }

    pub fn parse(source: &str) -> Result<Self, FOscillatorError> {
        Ok(Self::new(parse(source, &deformation_context())?, source))
    }

    pub fn identity() -> Self {
        Self::new(Expr::var(0), "xi")
    }

    pub fn value(&self, xi: f64) -> Result<f64, EvalError> {
        self.f.eval(&[xi])
    }

    /// Frequency `f'(xi)`.
    pub fn derivative(&self, xi: f64) -> Result<f64, EvalError> {
        self.df.eval(&[xi])
    }

    /// `f'(g)` for an expression `g`.
    pub fn derivative_of(&self, g: &Expr) -> Expr {
        self.df.compose(std::slice::from_ref(g))
    }

    pub fn value_of(&self, g: &Expr) -> Expr {
        self.f.compose(std::slice::from_ref(g))
    }

    /// Checks `f' > 0` at `points` energies spread over `[lo, hi]`.
    pub fn certify_positive(&self, lo: f64, hi: f64, points: usize) -> Result<f64, FOscillatorError> {
        let mut min = f64::INFINITY;
        let points = points.max(2);
        for k in 0..points {
            let xi = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let value = self.derivative(xi)?;
            if !(value > 0.0) {
                return Err(FOscillatorError::NonPositiveFrequency { xi, value });
            }
            min = min.min(value);
        }
        Ok(min)
    }
}

/// `f(xi) = (2 xi)^{5/2} / (10 g)`, so that `f'(xi) = sqrt(2 xi^3) / g`.
pub fn kepler_matching_f(g: f64) -> Deformation {
    let src = format!("(2*xi)^2.5/(10*{g:e})");
    Deformation::parse(&src).expect("well-formed deformation")
}

#[derive(Debug, Clone)]
pub struct Deformed {
    /// `f'(H) X_H` on phase space.
    pub x_hbar: VectorField,
    /// `f'(E_H) Gamma` on velocity space.
    pub gamma_prime: VectorField,
    /// `f'(E_H)`.
    pub frequency: Expr,
    /// `E_{H'} = f(E_H)`.
    pub energy: ScalarField,
}

pub fn deform(sys: &OscillatorSystem, def: &Deformation) -> Deformed {
    let dim = 2 * sys.n;
    let fh = def.derivative_of(sys.h.expr());
    let fe = def.derivative_of(sys.e_h.expr());
    Deformed {
        x_hbar: sys.x_h.scaled(&fh),
        gamma_prime: sys.gamma.scaled(&fe),
        frequency: fe,
        energy: ScalarField::new(def.value_of(sys.e_h.expr()), dim),
    }
}

/// Velocity-space region `|q|, |v| <= half_width` with the ball
/// `E_H < e_min` removed.
pub fn domain(n: usize, half_width: f64, e_min: f64) -> SampleBox {
    let b = SampleBox::cube(2 * n, half_width);
    if e_min > 0.0 {
        b.with_exclusion((0..2 * n).collect(), (2.0 * e_min).sqrt())
    } else {
        b
    }
}

/// Structure with `Q = q`, `V = f'(E_H) v`, after certifying `f' > 0` over
/// `energy_range`.
pub fn rebuild_structure(
    sys: &OscillatorSystem,
    def: &Deformation,
    region: &SampleBox,
    energy_range: (f64, f64),
    opts: &BuildOptions,
) -> Result<TangentStructure, FOscillatorError> {
    def.certify_positive(energy_range.0, energy_range.1, 257)?;
    let d = deform(sys, def);
    let q: Vec<Expr> = (0..sys.n).map(Expr::var).collect();
    Ok(build(&sys.velocity_ctx, &d.gamma_prime, &q, region, opts)?)
}

/// State on `E_H = c` used to represent its orbit: `q = (a, 0, ..)`,
/// `v = (0, b, 0, ..)`, `a^2 = 3c/2`, `b^2 = c/2` (for `n = 1`,
/// `q = v = sqrt(c)`).
pub fn representative_state(n: usize, c: f64) -> Vec<f64> {
    let mut s = vec![0.0; 2 * n];
    if n == 1 {
        s[0] = c.sqrt();
        s[1] = c.sqrt();
    } else {
        s[0] = (1.5 * c).sqrt();
        s[n + 1] = (0.5 * c).sqrt();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipsoidCheck {
    pub max_residual: f64,
    pub samples: usize,
}

/// Image of the sphere `E_H = c` under the chart: residual of
/// `sum V^2 / f'(c)^2 + sum Q^2 = 2c`.
pub fn ellipsoid_residual(t: &TangentStructure, def: &Deformation, c: f64, samples: &[Vec<f64>]) -> Result<EllipsoidCheck, FOscillatorError> {
    let n = t.n();
    let w = def.derivative(c)?;
    let mut worst = 0.0_f64;
    for dir in samples {
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let p: Vec<f64> = dir.iter().map(|x| x / norm * (2.0 * c).sqrt()).collect();
        let y = t.chart_forward(&p)?;
        let lhs: f64 = y[n..].iter().map(|v| v * v / (w * w)).sum::<f64>() + y[..n].iter().map(|q| q * q).sum::<f64>();
        worst = worst.max((lhs - 2.0 * c).abs());
    }
    Ok(EllipsoidCheck { max_residual: worst, samples: samples.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{conformal_hamiltonian_residual, VectorFieldEval};

    #[test]
    fn one_dimensional_oscillator() {
        let s = make_oscillator(1).unwrap();
        assert_eq!(s.x_h.value(&[0.3, 0.8]).unwrap().as_slice(), &[0.8, -0.3]);
        assert_eq!(s.e_h.value(&[3.0, 4.0]).unwrap(), 12.5);
    }

    #[test]
    fn planar_oscillator_matches_block_layout() {
        let s = make_oscillator(2).unwrap();
        // (q1, q2, v1, v2) = (x1, x3, x2, x4)
        let p = [0.1, 0.2, 0.3, 0.4];
        let g = s.gamma.value(&p).unwrap();
        assert_eq!(g.as_slice(), &[0.3, 0.4, -0.1, -0.2]);
    }

    #[test]
    fn matching_deformation_values() {
        let d = kepler_matching_f(1.0);
        assert!((d.derivative(0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((d.value(0.5).unwrap() - 0.1).abs() < 1e-15);
        for xi in [0.1_f64, 0.7, 2.0] {
            let expect = (2.0 * xi * xi * xi).sqrt();
            assert!((d.derivative(xi).unwrap() - expect).abs() < 1e-13 * expect.max(1.0));
        }
    }

    #[test]
    fn identity_deformation_leaves_gamma() {
        let s = make_oscillator(2).unwrap();
        let d = deform(&s, &Deformation::identity());
        let p = [0.1, -0.5, 0.9, 0.2];
        assert_eq!(d.gamma_prime.value(&p).unwrap(), s.gamma.value(&p).unwrap());
    }

    #[test]
    fn deformed_field_is_conformally_hamiltonian() {
        let s = make_oscillator(2).unwrap();
        let def = Deformation::parse("xi^2/2").unwrap();
        let d = deform(&s, &def);
        let f = ScalarField::new(d.frequency.clone(), 4);
        let p = [0.1, -0.5, 0.9, 0.2];
        let r = conformal_hamiltonian_residual(&d.gamma_prime, &f, &s.e_h, &s.omega_h, &p).unwrap();
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn non_positive_frequency_is_rejected() {
        let s = make_oscillator(1).unwrap();
        let def = Deformation::parse("-xi").unwrap();
        let err = rebuild_structure(&s, &def, &domain(1, 1.0, 0.0), (0.1, 1.0), &BuildOptions::default()).unwrap_err();
        assert!(matches!(err, FOscillatorError::NonPositiveFrequency { .. }));
    }
}

//! Pointwise differential operators: Lie derivatives, brackets, torsion,
//! and the symplectic and Lagrangian identities used throughout.

use nalgebra::{DMatrix, DVector};

use super::fields::{
    OneFormField, ScalarField, SmoothMap, Tensor11Eval, Tensor11Field, TwoFormField, VectorField,
    VectorFieldEval, VectorJet,
};
use crate::expr::{EvalError, Expr};

/// `X(g) = X^i d_i g` at `p`.
pub fn lie_scalar(x: &dyn VectorFieldEval, g: &ScalarField, p: &[f64]) -> Result<f64, EvalError> {
    Ok(x.value(p)?.dot(&g.gradient(p)?))
}

/// Bracket of two evaluated jets: `[X,Y] = DY X - DX Y`.
pub fn bracket_jets(x: &VectorJet, y: &VectorJet) -> DVector<f64> {
    &y.jacobian * &x.value - &x.jacobian * &y.value
}

pub fn lie_bracket(x: &dyn VectorFieldEval, y: &dyn VectorFieldEval, p: &[f64]) -> Result<DVector<f64>, EvalError> {
    Ok(bracket_jets(&x.jet(p)?, &y.jet(p)?))
}

/// `L_X alpha` via Cartan's formula `d(i_X alpha) + i_X d alpha`.
pub fn lie_oneform(x: &dyn VectorFieldEval, alpha: &OneFormField, p: &[f64]) -> Result<DVector<f64>, EvalError> {
    let xj = x.jet(p)?;
    let aj = alpha.jet(p)?;
    // d(alpha_i X^i)_j = d_j alpha_i X^i + alpha_i d_j X^i
    let d_contraction = aj.jacobian.transpose() * &xj.value + xj.jacobian.transpose() * &aj.value;
    // (d alpha)_ij = d_i alpha_j - d_j alpha_i, contracted on the first slot
    let contraction_d = &aj.jacobian * &xj.value - aj.jacobian.transpose() * &xj.value;
    Ok(d_contraction + contraction_d)
}

/// `(L_X S)(e_j) = [X, S e_j] - S [X, e_j]`, assembled column by column.
pub fn lie_tensor11(x: &dyn VectorFieldEval, s: &dyn Tensor11Eval, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
    let n = s.dim();
    let xj = x.jet(p)?;
    let sj = s.jet(p)?;
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let ej = VectorJet::basis(n, j);
        let sej = sj.apply(&ej);
        let col = bracket_jets(&xj, &sej) - &sj.value * bracket_jets(&xj, &ej);
        out.set_column(j, &col);
    }
    Ok(out)
}

/// Nijenhuis torsion from jets of `X`, `Y` and `S`.
pub fn nijenhuis_jets(s: &super::fields::TensorJet, x: &VectorJet, y: &VectorJet) -> DVector<f64> {
    let sx = s.apply(x);
    let sy = s.apply(y);
    let sv = &s.value;
    bracket_jets(&sx, &sy) - sv * bracket_jets(&sx, y) - sv * bracket_jets(x, &sy)
        + sv * sv * bracket_jets(x, y)
}

/// `N_S(X,Y) = [SX,SY] - S[SX,Y] - S[X,SY] + S^2[X,Y]`.
pub fn nijenhuis(
    s: &dyn Tensor11Eval,
    x: &dyn VectorFieldEval,
    y: &dyn VectorFieldEval,
    p: &[f64],
) -> Result<DVector<f64>, EvalError> {
    Ok(nijenhuis_jets(&s.jet(p)?, &x.jet(p)?, &y.jet(p)?))
}

/// `S(Gamma) - Delta`; vanishes exactly where `Gamma` is second order.
pub fn sode_residual(
    s: &dyn Tensor11Eval,
    delta: &dyn VectorFieldEval,
    gamma: &dyn VectorFieldEval,
    p: &[f64],
) -> Result<DVector<f64>, EvalError> {
    Ok(s.value(p)? * gamma.value(p)? - delta.value(p)?)
}

/// `theta_L = dL o S` at a point.
pub fn theta_lagrangian(l: &ScalarField, s: &dyn Tensor11Eval, p: &[f64]) -> Result<DVector<f64>, EvalError> {
    Ok(s.value(p)?.transpose() * l.gradient(p)?)
}

/// `theta_L` as a symbolic one-form, components `sum_i d_i L S^i_j`.
pub fn theta_lagrangian_field(l: &ScalarField, s: &Tensor11Field) -> OneFormField {
    let n = l.dim();
    let grad = l.gradient_exprs();
    let comps = (0..n)
        .map(|j| {
            let terms: Vec<Expr> = (0..n).map(|i| Expr::mul(&grad[i], s.component(i, j))).collect();
            Expr::sum(&terms)
        })
        .collect();
    OneFormField::new(comps)
}

/// `L_Gamma theta_L - dL` with a precomputed `theta_L`.
pub fn lagrange_residual_with(
    gamma: &dyn VectorFieldEval,
    theta: &OneFormField,
    l: &ScalarField,
    p: &[f64],
) -> Result<DVector<f64>, EvalError> {
    Ok(lie_oneform(gamma, theta, p)? - l.gradient(p)?)
}

pub fn lagrange_residual(
    gamma: &dyn VectorFieldEval,
    l: &ScalarField,
    s: &Tensor11Field,
    p: &[f64],
) -> Result<DVector<f64>, EvalError> {
    lagrange_residual_with(gamma, &theta_lagrangian_field(l, s), l, p)
}

/// Contraction `(i_X omega)_j = X^i omega_ij`.
pub fn contract_twoform(omega: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    omega.transpose() * x
}

/// Hamiltonian field of `H` for the canonical form on `R^{2n}`, with the
/// convention `i_{X_H} omega = dH`: `X_H = (dH/dp, -dH/dq)`.
pub fn hamiltonian_field(h: &ScalarField) -> VectorField {
    let grad = h.gradient_exprs();
    let n = grad.len() / 2;
    let comps = (0..2 * n).map(|i| if i < n { grad[n + i].clone() } else { Expr::neg(&grad[i - n]) }).collect();
    VectorField::new(comps)
}

pub fn hamiltonian_vf(h: &ScalarField, p: &[f64]) -> Result<DVector<f64>, EvalError> {
    let g = h.gradient(p)?;
    let n = g.len() / 2;
    Ok(DVector::from_fn(2 * n, |i, _| if i < n { g[n + i] } else { -g[i - n] }))
}

/// `i_Gamma omega - f dH`.
pub fn conformal_hamiltonian_residual(
    gamma: &dyn VectorFieldEval,
    f: &ScalarField,
    h: &ScalarField,
    omega: &TwoFormField,
    p: &[f64],
) -> Result<DVector<f64>, EvalError> {
    let w = omega.matrix(p)?;
    Ok(contract_twoform(&w, &gamma.value(p)?) - h.gradient(p)? * f.value(p)?)
}

/// `(Phi^* omega)(p) = DPhi^T omega(Phi(p)) DPhi`.
pub fn pullback_twoform(phi: &SmoothMap, omega: &TwoFormField, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
    let image = phi.apply(p)?;
    let w = omega.matrix(image.as_slice())?;
    let j = phi.jacobian(p)?;
    Ok(j.transpose() * w * j)
}

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sode_core::expr::{parse, VariableContext};
use sode_core::geometry::{
    lagrange_residual, liouville, lie_bracket, lie_tensor11, nijenhuis, nijenhuis_jets, ScalarField, Tensor11Eval,
    Tensor11Field, TensorJet, VectorField, VectorFieldEval, VectorJet,
};

fn pt(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

/// Central-difference Jacobian of a field.
fn fd_jacobian(x: &dyn VectorFieldEval, p: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = 1e-6;
        let (mut a, mut b) = (p.to_vec(), p.to_vec());
        a[j] += h;
        b[j] -= h;
        let col = (x.value(&a).unwrap() - x.value(&b).unwrap()) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

fn fd_jet(x: &dyn VectorFieldEval, p: &[f64]) -> VectorJet {
    VectorJet { value: x.value(p).unwrap(), jacobian: fd_jacobian(x, p) }
}

/// Finite-difference jet of a (1,1) tensor, derivatives indexed by coordinate.
fn fd_tensor_jet(s: &dyn Tensor11Eval, p: &[f64]) -> TensorJet {
    let n = p.len();
    let derivatives = (0..n)
        .map(|k| {
            let h = 1e-6;
            let (mut a, mut b) = (p.to_vec(), p.to_vec());
            a[k] += h;
            b[k] -= h;
            (s.value(&a).unwrap() - s.value(&b).unwrap()) / (2.0 * h)
        })
        .collect();
    TensorJet { value: s.value(p).unwrap(), derivatives }
}

fn fields() -> (VariableContext, VectorField, VectorField) {
    let ctx = VariableContext::numbered("x", 4);
    let x = VectorField::parse(&["x2*x3", "sin(x1) - x4", "x1^2 + x4", "exp(x2/3)"], &ctx).unwrap();
    let y = VectorField::parse(&["x4", "x1*x3", "cos(x2)", "x3^2 - x1"], &ctx).unwrap();
    (ctx, x, y)
}

#[test]
fn bracket_matches_finite_differences() {
    let (_, x, y) = fields();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let p = pt(&mut rng, 4);
        let sym = lie_bracket(&x, &y, &p).unwrap();
        let num = fd_jacobian(&y, &p) * x.value(&p).unwrap() - fd_jacobian(&x, &p) * y.value(&p).unwrap();
        assert!((&sym - &num).amax() < 1e-6 * (1.0 + num.amax()));
    }
}

#[test]
fn bracket_is_antisymmetric_and_satisfies_jacobi() {
    let (ctx, x, y) = fields();
    let z = VectorField::parse(&["x1*x2", "1", "x4^2", "x3"], &ctx).unwrap();
    // [X,[Y,Z]] + cyclic, symbolically via apply_to on the components
    let br = |a: &VectorField, b: &VectorField| {
        VectorField::new(
            (0..4)
                .map(|i| {
                    let e1 = a.apply_to(&b.components()[i]);
                    let e2 = b.apply_to(&a.components()[i]);
                    sode_core::expr::Expr::sub(&e1, &e2)
                })
                .collect(),
        )
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let p = pt(&mut rng, 4);
        let a = lie_bracket(&x, &y, &p).unwrap();
        let b = lie_bracket(&y, &x, &p).unwrap();
        assert!((a + b).amax() < 1e-12);
        let j = br(&x, &br(&y, &z)).value(&p).unwrap()
            + br(&y, &br(&z, &x)).value(&p).unwrap()
            + br(&z, &br(&x, &y)).value(&p).unwrap();
        assert!(j.amax() < 1e-9, "{}", j.amax());
    }
}

#[test]
fn nijenhuis_symbolic_and_numeric_jets_agree() {
    let ctx = VariableContext::numbered("x", 4);
    let (_, x, y) = fields();
    let comps: Vec<_> = [
        "0", "0", "0", "0", //
        "0", "0", "0", "0", //
        "1 + x2^2", "x1", "0", "0", //
        "x3", "exp(x4/4)", "0", "0",
    ]
    .iter()
    .map(|s| parse(s, &ctx).unwrap())
    .collect();
    let s = Tensor11Field::new(4, comps);
    let canonical = Tensor11Field::vertical_endomorphism(2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut largest = 0.0_f64;
    for _ in 0..100 {
        let p = pt(&mut rng, 4);
        let sym = nijenhuis(&s, &x, &y, &p).unwrap();
        let num = nijenhuis_jets(&fd_tensor_jet(&s, &p), &fd_jet(&x, &p), &fd_jet(&y, &p));
        assert!((&sym - &num).amax() < 1e-5 * (1.0 + num.amax()));
        largest = largest.max(sym.amax());
        assert!(nijenhuis(&canonical, &x, &y, &p).unwrap().amax() < 1e-12);
    }
    // this S is not integrable
    assert!(largest > 1e-2, "{largest}");
}

#[test]
fn canonical_structure_is_invariant_under_liouville_flow() {
    // L_Delta S = -S for the canonical pair
    let s = Tensor11Field::vertical_endomorphism(2);
    let delta = liouville(2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let p = pt(&mut rng, 4);
        let l = lie_tensor11(&delta, &s, &p).unwrap() + s.value(&p).unwrap();
        assert!(l.amax() < 1e-12);
        let s2 = s.value(&p).unwrap().pow(2);
        assert!(s2.amax() < 1e-15);
    }
}

#[test]
fn lagrange_residual_distinguishes_lagrangians() {
    let ctx = VariableContext::numbered("x", 4);
    let s = Tensor11Field::vertical_endomorphism(2);
    let gamma = VectorField::parse(&["x3", "x4", "-x1", "-x2"], &ctx).unwrap();
    let osc = ScalarField::parse("(x3^2 + x4^2 - x1^2 - x2^2)/2", &ctx).unwrap();
    let free = ScalarField::parse("(x3^2 + x4^2)/2", &ctx).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let p = pt(&mut rng, 4);
        assert!(lagrange_residual(&gamma, &osc, &s, &p).unwrap().amax() < 1e-12);
        // the free Lagrangian leaves -q dq behind
        let r = lagrange_residual(&gamma, &free, &s, &p).unwrap();
        let expect = DVector::from_vec(vec![-p[0], -p[1], 0.0, 0.0]);
        assert!((r - expect).amax() < 1e-12);
    }
}

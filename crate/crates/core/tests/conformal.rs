use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sode_core::conformal::{
    bracket_identity_residual, default_proper_function, oneform_identity_residual, polyline_distance,
    regularize_complete, reparametrize_time, rescale, shared_constants_check, GridOptions,
};
use sode_core::dynamics::{integrate, IntegratorOptions, Status};
use sode_core::expr::{parse, VariableContext};
use sode_core::geometry::{OneFormField, ScalarField, VectorField};
use sode_core::sampling::SampleBox;

fn ctx() -> VariableContext {
    VariableContext::numbered("x", 2)
}

#[test]
fn rescaling_keeps_orbits_and_changes_only_time() {
    let c = ctx();
    let x = VectorField::parse(&["x2", "-x1"], &c).unwrap();
    let f = parse("2 + sin(x1)", &c).unwrap();
    let pair = rescale(&x, &f, &SampleBox::cube(2, 2.0), &GridOptions::default()).unwrap();
    let opts = IntegratorOptions::with_tolerances(1e-11, 1e-13);
    let slow = integrate(&x, &[1.0, 0.0], std::f64::consts::TAU, &opts).unwrap();
    let fast = integrate(&pair.gamma, &[1.0, 0.0], 2.0, &opts).unwrap();
    // the rescaled orbit lies on the original circle
    let circle: Vec<Vec<f64>> = slow.resample(4000).into_iter().map(|r| r.1).collect();
    assert!(polyline_distance(&fast.states, &circle) < 1e-5);
    // and x_fX(t) = x_X(s(t)) with s' = f
    let fs = ScalarField::new(f.clone(), 2);
    let s = reparametrize_time(&fast, &fs).unwrap();
    let k = fast.states.len() - 1;
    let on_slow = integrate(&x, &[1.0, 0.0], s[k], &opts).unwrap();
    let d: f64 = on_slow.last().iter().zip(&fast.states[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d < 1e-4, "{d}");
}

#[test]
fn sign_changing_factor_is_rejected() {
    let c = ctx();
    let x = VectorField::parse(&["x2", "-x1"], &c).unwrap();
    let f = parse("x1", &c).unwrap();
    assert!(rescale(&x, &f, &SampleBox::cube(2, 1.0), &GridOptions::default()).is_err());
}

#[test]
fn bracket_and_oneform_identities() {
    let c = ctx();
    let x = VectorField::parse(&["x1*x2", "cos(x1)"], &c).unwrap();
    let y = VectorField::parse(&["x2^2", "x1 - x2"], &c).unwrap();
    let f = parse("exp(x1/3) + x2^2", &c).unwrap();
    let alpha = OneFormField::parse(&["x2*sin(x1)", "x1^3"], &c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        assert!(bracket_identity_residual(&x, &y, &f, &p).unwrap().amax() < 1e-10);
        assert!(oneform_identity_residual(&x, &f, &alpha, &p).unwrap().amax() < 1e-10);
    }
}

#[test]
fn incomplete_field_becomes_complete() {
    // x1' = x1^2 escapes in finite time; the regularized field does not
    let c = ctx();
    let x = VectorField::parse(&["x1^2", "-x2"], &c).unwrap();
    let start = [1.0, 0.5];
    let original = integrate(&x, &start, 5.0, &IntegratorOptions::default()).unwrap();
    assert!(matches!(original.status, Status::BlowUp { .. }));

    let g = default_proper_function(2);
    let region = SampleBox::cube(2, 1.5);
    let reg = regularize_complete(&x, &g, &region, &GridOptions::default()).unwrap();
    assert!(reg.bound < 1.0);
    let tr = integrate(&reg.pair.gamma, &start, 200.0, &IntegratorOptions::default()).unwrap();
    assert_eq!(tr.status, Status::Completed);
    // |d g / dt| < 1 bounds the growth of g along the run
    let g0 = g.eval(&start).unwrap();
    for (t, s) in tr.times.iter().zip(&tr.states) {
        assert!(g.eval(s).unwrap() <= g0 + t + 1e-9);
    }
    let shared = shared_constants_check(&x, &reg.pair.f, &g, &region, 200, 3).unwrap();
    assert!(shared.max_discrepancy < 1e-12);
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sode_core::expr::{parse, Expr, VariableContext};
use sode_core::scenarios;

/// Central differences with a step scaled to the point.
fn fd(e: &Expr, p: &[f64], i: usize) -> f64 {
    let h = 1e-5 * (1.0 + p[i].abs());
    let mut a = p.to_vec();
    let mut b = p.to_vec();
    a[i] += h;
    b[i] -= h;
    (e.eval(&a).unwrap() - e.eval(&b).unwrap()) / (2.0 * h)
}

#[test]
fn derivatives_of_builtin_expressions_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for s in scenarios::library() {
        let mut exprs: Vec<Expr> = s.gamma.components().to_vec();
        exprs.extend(s.base.iter().cloned());
        if let Some((_, f)) = &s.conformal {
            exprs.push(f.clone());
        }
        let pts = s.domain.uniform(100, rng.gen()).unwrap();
        for e in &exprs {
            for p in &pts {
                for i in 0..p.len() {
                    let sym = e.derivative(i).eval(p).unwrap();
                    let num = fd(e, p, i);
                    let scale = 1.0 + sym.abs().max(num.abs());
                    assert!((sym - num).abs() < 1e-6 * scale, "{}: d{i} {sym} vs {num} at {p:?}", s.id);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn second_derivatives_commute() {
    let ctx = VariableContext::numbered("x", 3);
    let e = parse("sin(x1*x2) * exp(x3/2) + x1^3/(1 + x2^2) - sqrt(1 + x3^2)", &ctx).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for i in 0..3 {
            for j in 0..3 {
                let a = e.derivative(i).derivative(j).eval(&p).unwrap();
                let b = e.derivative(j).derivative(i).eval(&p).unwrap();
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
            }
        }
    }
}

#[test]
fn parse_errors_carry_offsets() {
    let ctx = VariableContext::numbered("x", 2);
    for bad in ["x1 +", "x3", "sin(x1", "1 ** 2", "foo(x1)", ""] {
        assert!(parse(bad, &ctx).is_err(), "{bad}");
    }
    assert!(VariableContext::new(&["a", "a"]).is_err());
}

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        (0usize..3).prop_map(|i| format!("x{}", i + 1)),
        (-3.0f64..3.0).prop_map(|c| format!("({c})")),
    ]
}

fn expr_src() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} / (2 + ({b})^2))")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("exp(cos({a}))")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.prop_map(|a| format!("-{a}")),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, 3)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn display_round_trip_preserves_values(src in expr_src(), p in point()) {
        let ctx = VariableContext::numbered("x", 3);
        let e = parse(&src, &ctx).unwrap();
        let again = parse(&e.to_string_in(&ctx), &ctx).unwrap();
        prop_assert!(close(e.eval(&p).unwrap(), again.eval(&p).unwrap()));
    }

    #[test]
    fn derivative_is_linear(a in expr_src(), b in expr_src(), k in -3.0f64..3.0, p in point(), i in 0usize..3) {
        let ctx = VariableContext::numbered("x", 3);
        let (ea, eb) = (parse(&a, &ctx).unwrap(), parse(&b, &ctx).unwrap());
        let combo = Expr::add(&ea.scale(k), &eb);
        let lhs = combo.derivative(i).eval(&p).unwrap();
        let rhs = k * ea.derivative(i).eval(&p).unwrap() + eb.derivative(i).eval(&p).unwrap();
        prop_assert!(close(lhs, rhs), "{lhs} vs {rhs}");
    }

    #[test]
    fn product_rule_holds(a in expr_src(), b in expr_src(), p in point(), i in 0usize..3) {
        let ctx = VariableContext::numbered("x", 3);
        let (ea, eb) = (parse(&a, &ctx).unwrap(), parse(&b, &ctx).unwrap());
        let lhs = Expr::mul(&ea, &eb).derivative(i).eval(&p).unwrap();
        let rhs = ea.derivative(i).eval(&p).unwrap() * eb.eval(&p).unwrap()
            + ea.eval(&p).unwrap() * eb.derivative(i).eval(&p).unwrap();
        prop_assert!(close(lhs, rhs), "{lhs} vs {rhs}");
    }
}

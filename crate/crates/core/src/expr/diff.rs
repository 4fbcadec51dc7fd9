//! Symbolic partial derivatives.

use std::collections::HashMap;
use std::sync::Arc;

use super::{Expr, Func, Node};

pub(super) fn derivative(e: &Expr, index: usize) -> Expr {
    let mut memo = HashMap::new();
    d(e, index, &mut memo)
}

// Memoised on node identity: shared subtrees are differentiated once.
fn d(e: &Expr, x: usize, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    let key = Arc::as_ptr(&e.0);
    if let Some(hit) = memo.get(&key) {
        return hit.clone();
    }
    let out = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Var(i) => {
            if *i == x {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Neg(a) => Expr::neg(&d(a, x, memo)),
        Node::Add(a, b) => Expr::add(&d(a, x, memo), &d(b, x, memo)),
        Node::Sub(a, b) => Expr::sub(&d(a, x, memo), &d(b, x, memo)),
        Node::Mul(a, b) => {
            let da = d(a, x, memo);
            let db = d(b, x, memo);
            Expr::add(&Expr::mul(&da, b), &Expr::mul(a, &db))
        }
        Node::Div(a, b) => {
            // (a' b - a b') / b^2
            let da = d(a, x, memo);
            let db = d(b, x, memo);
            if db.is_zero() {
                Expr::div(&da, b)
            } else {
                let num = Expr::sub(&Expr::mul(&da, b), &Expr::mul(a, &db));
                Expr::div(&num, &Expr::powf(b, 2.0))
            }
        }
        Node::Pow(a, b) => {
            let da = d(a, x, memo);
            match b.as_const() {
                Some(c) => {
                    // c a^(c-1) a'
                    let lowered = Expr::powf(a, c - 1.0);
                    Expr::mul(&Expr::mul(&Expr::constant(c), &lowered), &da)
                }
                None => {
                    // a^b (b' log a + b a'/a)
                    let db = d(b, x, memo);
                    let log_term = Expr::mul(&db, &Expr::call(Func::Log, a));
                    let ratio = Expr::mul(b, &Expr::div(&da, a));
                    Expr::mul(e, &Expr::add(&log_term, &ratio))
                }
            }
        }
        Node::Call(f, a) => {
            let da = d(a, x, memo);
            let outer = match f {
                Func::Sin => Expr::call(Func::Cos, a),
                Func::Cos => Expr::neg(&Expr::call(Func::Sin, a)),
                Func::Exp => e.clone(),
                Func::Log => Expr::div(&Expr::one(), a),
                Func::Sqrt => Expr::div(&Expr::constant(0.5), e),
                Func::Abs => Expr::call(Func::Sign, a),
                Func::Sign => Expr::zero(),
            };
            Expr::mul(&outer, &da)
        }
    };
    memo.insert(key, out.clone());
    out
}

#[cfg(test)]
mod tests {
    use crate::expr::{parse, VariableContext};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn power_rule() {
        let c = VariableContext::new(&["q1"]).unwrap();
        let e = parse("q1^2", &c).unwrap().derivative(0);
        for q in [-2.0, 0.0, 0.7, 3.0] {
            assert_eq!(e.eval(&[q]).unwrap(), 2.0 * q);
        }
    }

    #[test]
    fn chain_rule_exp() {
        let c = VariableContext::new(&["q1", "v1"]).unwrap();
        let e = parse("exp(q1*v1)", &c).unwrap().derivative(0);
        for (q, v) in [(0.3_f64, -1.2_f64), (1.0, 0.5)] {
            let expect = v * (q * v).exp();
            assert!(close(e.eval(&[q, v]).unwrap(), expect, 1e-15));
        }
    }

    #[test]
    fn variable_exponent() {
        let c = VariableContext::new(&["x", "y"]).unwrap();
        let e = parse("x^y", &c).unwrap();
        let dx = e.derivative(0);
        let dy = e.derivative(1);
        let (x, y) = (1.7_f64, 0.6_f64);
        assert!(close(dx.eval(&[x, y]).unwrap(), y * x.powf(y - 1.0), 1e-14));
        assert!(close(dy.eval(&[x, y]).unwrap(), x.powf(y) * x.ln(), 1e-14));
    }

    #[test]
    fn elementary_functions() {
        let c = VariableContext::new(&["x"]).unwrap();
        let cases: [(&str, fn(f64) -> f64); 6] = [
            ("sin(x)", |x| x.cos()),
            ("cos(x)", |x| -x.sin()),
            ("log(x)", |x| 1.0 / x),
            ("sqrt(x)", |x| 0.5 / x.sqrt()),
            ("abs(x)", |x| x.signum()),
            ("1/x", |x| -1.0 / (x * x)),
        ];
        for (src, expect) in cases {
            let d = parse(src, &c).unwrap().derivative(0);
            for x in [0.4, 1.3, 2.9] {
                assert!(close(d.eval(&[x]).unwrap(), expect(x), 1e-14), "{src} at {x}");
            }
        }
    }

    #[test]
    fn independent_variable_gives_zero() {
        let c = VariableContext::new(&["x", "y"]).unwrap();
        let d = parse("sin(x)*exp(x)", &c).unwrap().derivative(1);
        assert!(d.is_zero());
    }
}

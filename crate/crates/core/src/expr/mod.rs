//! Closed-form scalar expressions over named coordinates.
//!
//! Every scalar function used by the library (coordinate functions,
//! conformal factors, Hamiltonians, Lagrangians) is an [`Expr`]. Trees are
//! immutable and reference counted, so derivatives can share subtrees with
//! the expression they were taken from. Variables are stored as indices
//! into a [`VariableContext`]; names are only needed for parsing and
//! printing.

mod diff;
mod parse;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use parse::parse;

/// Errors raised while turning text into an [`Expr`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("invalid variable context: {0}")]
    Context(String),
}

impl ParseError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownIdentifier { offset, .. } => {
                Some(*offset)
            }
            ParseError::Context(_) => None,
        }
    }
}

/// Errors raised while evaluating an [`Expr`] at a point.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("variable #{index} is not bound (point has {len} coordinates)")]
    Unbound { index: usize, len: usize },
    #[error("variable `{0}` is not bound")]
    UnboundName(String),
}

/// Ordered, unique coordinate names of a space of dimension `N >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableContext {
    names: Vec<String>,
}

impl VariableContext {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self, ParseError> {
        if names.is_empty() {
            return Err(ParseError::Context("at least one coordinate is required".into()));
        }
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            if !parse::is_identifier(n) {
                return Err(ParseError::Context(format!("`{n}` is not a valid identifier")));
            }
            if parse::is_reserved(n) {
                return Err(ParseError::Context(format!("`{n}` is a reserved function name")));
            }
            if !seen.insert(n.to_string()) {
                return Err(ParseError::Context(format!("duplicate coordinate `{n}`")));
            }
            out.push(n.to_string());
        }
        Ok(Self { names: out })
    }

    /// Context `prefix1, ..., prefixN` (one-based), e.g. `x1..x4`.
    pub fn numbered(prefix: &str, n: usize) -> Self {
        let names: Vec<String> = (1..=n).map(|i| format!("{prefix}{i}")).collect();
        Self::new(&names).expect("numbered context is valid")
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    /// Converts a named assignment into a dense point in context order.
    pub fn point(&self, assignment: &[(&str, f64)]) -> Result<Vec<f64>, EvalError> {
        self.names
            .iter()
            .map(|n| {
                assignment
                    .iter()
                    .find(|(k, _)| k == n)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| EvalError::UnboundName(n.clone()))
            })
            .collect()
    }

    pub fn var(&self, name: &str) -> Option<Expr> {
        self.index_of(name).map(Expr::var)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    /// Sign function; appears in derivatives of `abs`.
    Sign,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Log => {
                if x <= 0.0 {
                    return Err(EvalError::Domain(format!("log of non-positive value {x}")));
                }
                x.ln()
            }
            Func::Sqrt => {
                if x < 0.0 {
                    return Err(EvalError::Domain(format!("sqrt of negative value {x}")));
                }
                x.sqrt()
            }
            Func::Abs => x.abs(),
            Func::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Call(Func, Expr),
}

/// Immutable expression tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr(Arc<Node>);

fn folded(v: f64) -> Option<Expr> {
    v.is_finite().then(|| Expr::constant(v))
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(v: f64) -> Expr {
        Expr(Arc::new(Node::Const(v)))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn var(index: usize) -> Expr {
        Expr(Arc::new(Node::Var(index)))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    // The constructors below fold constants and drop additive/multiplicative
    // identities; no further simplification is attempted.

    pub fn neg(a: &Expr) -> Expr {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr(Arc::new(Node::Neg(a.clone()))),
        }
    }

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero() {
            return b.clone();
        }
        if b.is_zero() {
            return a.clone();
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(e) = folded(x + y) {
                return e;
            }
        }
        Expr(Arc::new(Node::Add(a.clone(), b.clone())))
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        if b.is_zero() {
            return a.clone();
        }
        if a.is_zero() {
            return Expr::neg(b);
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(e) = folded(x - y) {
                return e;
            }
        }
        Expr(Arc::new(Node::Sub(a.clone(), b.clone())))
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if a.is_one() {
            return b.clone();
        }
        if b.is_one() {
            return a.clone();
        }
        if a.as_const() == Some(-1.0) {
            return Expr::neg(b);
        }
        if b.as_const() == Some(-1.0) {
            return Expr::neg(a);
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Some(e) = folded(x * y) {
                return e;
            }
        }
        Expr(Arc::new(Node::Mul(a.clone(), b.clone())))
    }

    pub fn div(a: &Expr, b: &Expr) -> Expr {
        if a.is_zero() {
            return Expr::zero();
        }
        if b.is_one() {
            return a.clone();
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if y != 0.0 {
                if let Some(e) = folded(x / y) {
                    return e;
                }
            }
        }
        Expr(Arc::new(Node::Div(a.clone(), b.clone())))
    }

    pub fn pow(a: &Expr, b: &Expr) -> Expr {
        if b.is_zero() {
            return Expr::one();
        }
        if b.is_one() {
            return a.clone();
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if let Ok(v) = pow_value(x, y) {
                if let Some(e) = folded(v) {
                    return e;
                }
            }
        }
        Expr(Arc::new(Node::Pow(a.clone(), b.clone())))
    }

    pub fn powf(a: &Expr, exponent: f64) -> Expr {
        Expr::pow(a, &Expr::constant(exponent))
    }

    pub fn call(f: Func, a: &Expr) -> Expr {
        if let Some(x) = a.as_const() {
            if let Ok(v) = f.apply(x) {
                if let Some(e) = folded(v) {
                    return e;
                }
            }
        }
        Expr(Arc::new(Node::Call(f, a.clone())))
    }

    pub fn scale(&self, k: f64) -> Expr {
        Expr::mul(&Expr::constant(k), self)
    }

    pub fn sum<'a, I: IntoIterator<Item = &'a Expr>>(terms: I) -> Expr {
        terms.into_iter().fold(Expr::zero(), |acc, t| Expr::add(&acc, t))
    }

    /// Evaluates the tree at a dense point (coordinates in context order).
    pub fn eval(&self, point: &[f64]) -> Result<f64, EvalError> {
        let v = match self.node() {
            Node::Const(c) => *c,
            Node::Var(i) => *point.get(*i).ok_or(EvalError::Unbound {
                index: *i,
                len: point.len(),
            })?,
            Node::Neg(a) => -a.eval(point)?,
            Node::Add(a, b) => a.eval(point)? + b.eval(point)?,
            Node::Sub(a, b) => a.eval(point)? - b.eval(point)?,
            Node::Mul(a, b) => a.eval(point)? * b.eval(point)?,
            Node::Div(a, b) => {
                let num = a.eval(point)?;
                let den = b.eval(point)?;
                if den == 0.0 {
                    return Err(EvalError::Domain("division by zero".into()));
                }
                num / den
            }
            Node::Pow(a, b) => pow_value(a.eval(point)?, b.eval(point)?)?,
            Node::Call(f, a) => f.apply(a.eval(point)?)?,
        };
        if v.is_nan() {
            return Err(EvalError::Domain("expression evaluated to NaN".into()));
        }
        Ok(v)
    }

    /// Evaluates with a named assignment, looked up through `ctx`.
    pub fn evaluate(&self, ctx: &VariableContext, assignment: &[(&str, f64)]) -> Result<f64, EvalError> {
        let mut point = vec![f64::NAN; ctx.dim()];
        for (name, value) in assignment {
            if let Some(i) = ctx.index_of(name) {
                point[i] = *value;
            }
        }
        for i in self.variables() {
            if i >= point.len() || point[i].is_nan() {
                let name = if i < ctx.dim() { ctx.name(i).to_string() } else { format!("#{i}") };
                return Err(EvalError::UnboundName(name));
            }
        }
        self.eval(&point)
    }

    /// Exact partial derivative with respect to variable `index`.
    pub fn derivative(&self, index: usize) -> Expr {
        diff::derivative(self, index)
    }

    /// Replaces variable `i` by `replacements[i]`; variables beyond the slice
    /// are left untouched.
    pub fn compose(&self, replacements: &[Expr]) -> Expr {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(i) => replacements.get(*i).cloned().unwrap_or_else(|| self.clone()),
            Node::Neg(a) => Expr::neg(&a.compose(replacements)),
            Node::Add(a, b) => Expr::add(&a.compose(replacements), &b.compose(replacements)),
            Node::Sub(a, b) => Expr::sub(&a.compose(replacements), &b.compose(replacements)),
            Node::Mul(a, b) => Expr::mul(&a.compose(replacements), &b.compose(replacements)),
            Node::Div(a, b) => Expr::div(&a.compose(replacements), &b.compose(replacements)),
            Node::Pow(a, b) => Expr::pow(&a.compose(replacements), &b.compose(replacements)),
            Node::Call(f, a) => Expr::call(*f, &a.compose(replacements)),
        }
    }

    /// Sorted indices of the variables appearing in the tree.
    pub fn variables(&self) -> Vec<usize> {
        let mut acc = Vec::new();
        self.collect_vars(&mut acc);
        acc.sort_unstable();
        acc.dedup();
        acc
    }

    fn collect_vars(&self, acc: &mut Vec<usize>) {
        match self.node() {
            Node::Const(_) => {}
            Node::Var(i) => acc.push(*i),
            Node::Neg(a) | Node::Call(_, a) => a.collect_vars(acc),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.collect_vars(acc);
                b.collect_vars(acc);
            }
        }
    }

    pub fn depends_on(&self, index: usize) -> bool {
        match self.node() {
            Node::Const(_) => false,
            Node::Var(i) => *i == index,
            Node::Neg(a) | Node::Call(_, a) => a.depends_on(index),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.depends_on(index) || b.depends_on(index)
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Neg(a) | Node::Call(_, a) => 1 + a.node_count(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                1 + a.node_count() + b.node_count()
            }
        }
    }

    /// Printer that resolves variable names through `ctx`. The output is
    /// fully parenthesised and parses back to an equivalent tree.
    pub fn display<'a>(&'a self, ctx: &'a VariableContext) -> Display<'a> {
        Display { expr: self, ctx }
    }

    pub fn to_string_in(&self, ctx: &VariableContext) -> String {
        self.display(ctx).to_string()
    }
}

pub(crate) fn pow_value(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if exponent.fract() == 0.0 && exponent.abs() < 2147483648.0 {
        if base == 0.0 && exponent < 0.0 {
            return Err(EvalError::Domain("zero raised to a negative power".into()));
        }
        return Ok(base.powi(exponent as i32));
    }
    if base > 0.0 {
        Ok((exponent * base.ln()).exp())
    } else if base == 0.0 && exponent > 0.0 {
        Ok(0.0)
    } else {
        Err(EvalError::Domain(format!(
            "{base} raised to non-integer power {exponent}"
        )))
    }
}

pub struct Display<'a> {
    expr: &'a Expr,
    ctx: &'a VariableContext,
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self.expr, self.ctx, f)
    }
}

fn write_expr(e: &Expr, ctx: &VariableContext, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let bin = |f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr| -> fmt::Result {
        write!(f, "(")?;
        write_expr(a, ctx, f)?;
        write!(f, " {op} ")?;
        write_expr(b, ctx, f)?;
        write!(f, ")")
    };
    match e.node() {
        Node::Const(c) => {
            if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                write!(f, "(-{})", -c)
            } else {
                write!(f, "{c}")
            }
        }
        Node::Var(i) => match ctx.names().get(*i) {
            Some(n) => write!(f, "{n}"),
            None => write!(f, "__v{i}"),
        },
        Node::Neg(a) => {
            write!(f, "(-")?;
            write_expr(a, ctx, f)?;
            write!(f, ")")
        }
        Node::Add(a, b) => bin(f, a, "+", b),
        Node::Sub(a, b) => bin(f, a, "-", b),
        Node::Mul(a, b) => bin(f, a, "*", b),
        Node::Div(a, b) => bin(f, a, "/", b),
        Node::Pow(a, b) => bin(f, a, "^", b),
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(a, ctx, f)?;
            write!(f, ")")
        }
    }
}

impl std::ops::Add for &Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        Expr::add(self, rhs)
    }
}

impl std::ops::Sub for &Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl std::ops::Mul for &Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        Expr::mul(self, rhs)
    }
}

impl std::ops::Div for &Expr {
    type Output = Expr;
    fn div(self, rhs: &Expr) -> Expr {
        Expr::div(self, rhs)
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(names: &[&str]) -> VariableContext {
        VariableContext::new(names).unwrap()
    }

    #[test]
    fn context_rejects_duplicates_and_empty() {
        assert!(VariableContext::new::<&str>(&[]).is_err());
        assert!(VariableContext::new(&["a", "a"]).is_err());
        assert!(VariableContext::new(&["sin"]).is_err());
        assert!(VariableContext::new(&["1x"]).is_err());
    }

    #[test]
    fn evaluate_named_assignment() {
        let c = ctx(&["q1", "v1"]);
        let e = parse("q1^2+v1^2", &c).unwrap();
        assert_eq!(e.evaluate(&c, &[("q1", 3.0), ("v1", 4.0)]).unwrap(), 25.0);
        assert!(matches!(
            e.evaluate(&c, &[("q1", 3.0)]),
            Err(EvalError::UnboundName(n)) if n == "v1"
        ));
    }

    #[test]
    fn ks_third_component_at_unit_point() {
        let c = ctx(&["y0", "y1", "y2", "y3"]);
        let e = parse("y0^2 + y3^2 - y1^2 - y2^2", &c).unwrap();
        assert_eq!(e.eval(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors() {
        let c = ctx(&["q1"]);
        let e = parse("sqrt(q1)", &c).unwrap();
        assert!(matches!(e.eval(&[-1.0]), Err(EvalError::Domain(_))));
        let e = parse("log(q1)", &c).unwrap();
        assert!(matches!(e.eval(&[0.0]), Err(EvalError::Domain(_))));
        let e = parse("1/q1", &c).unwrap();
        assert!(matches!(e.eval(&[0.0]), Err(EvalError::Domain(_))));
        let e = parse("q1^0.5", &c).unwrap();
        assert!(matches!(e.eval(&[-2.0]), Err(EvalError::Domain(_))));
        assert!(matches!(e.eval(&[]), Err(EvalError::Unbound { .. })));
    }

    #[test]
    fn integer_powers_accept_negative_base() {
        let c = ctx(&["x"]);
        let e = parse("x^3", &c).unwrap();
        assert_eq!(e.eval(&[-2.0]).unwrap(), -8.0);
        let e = parse("x^2.5", &c).unwrap();
        assert!((e.eval(&[4.0]).unwrap() - 32.0).abs() < 1e-12);
        assert_eq!(e.eval(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn folding_keeps_trees_small() {
        let x = Expr::var(0);
        assert_eq!(Expr::mul(&Expr::zero(), &x), Expr::zero());
        assert_eq!(Expr::add(&x, &Expr::zero()), x);
        assert_eq!(Expr::mul(&Expr::constant(2.0), &Expr::constant(3.0)).as_const(), Some(6.0));
        assert_eq!(Expr::neg(&Expr::neg(&x)), x);
    }

    #[test]
    fn compose_substitutes_variables() {
        let c1 = ctx(&["xi"]);
        let f = parse("xi^2/2", &c1).unwrap();
        let c2 = ctx(&["q", "v"]);
        let energy = parse("(q^2+v^2)/2", &c2).unwrap();
        let g = f.compose(&[energy]);
        let p = [1.0, 1.0];
        assert!((g.eval(&p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn printing_negative_constants_round_trips() {
        let c = ctx(&["x"]);
        let e = Expr::mul(&Expr::constant(-2.5), &Expr::var(0));
        let s = e.to_string_in(&c);
        let back = parse(&s, &c).unwrap();
        assert_eq!(back.eval(&[3.0]).unwrap(), -7.5);
    }
}

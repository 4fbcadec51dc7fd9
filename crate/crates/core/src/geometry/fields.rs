//! Expression-backed fields on R^N together with their exact first
//! derivatives, plus the evaluation traits the operators are written
//! against.

use nalgebra::{DMatrix, DVector};

use crate::expr::{parse, EvalError, Expr, ParseError, VariableContext};

/// Value and Jacobian of a vector-valued object at a point;
/// `jacobian[(i, j)] = d_j X^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorJet {
    pub value: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl VectorJet {
    pub fn constant(value: DVector<f64>) -> Self {
        let n = value.len();
        Self { value, jacobian: DMatrix::zeros(n, n) }
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        Self::constant(v)
    }
}

/// Value and coordinate derivatives of a (1,1) tensor;
/// `value[(i, j)] = S^i_j`, `derivatives[k] = d_k S`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorJet {
    pub value: DMatrix<f64>,
    pub derivatives: Vec<DMatrix<f64>>,
}

impl TensorJet {
    /// Jet of `S X` for a vector jet `X`.
    pub fn apply(&self, x: &VectorJet) -> VectorJet {
        let value = &self.value * &x.value;
        let mut jacobian = &self.value * &x.jacobian;
        for (k, dk) in self.derivatives.iter().enumerate() {
            let col = dk * &x.value;
            for i in 0..col.len() {
                jacobian[(i, k)] += col[i];
            }
        }
        VectorJet { value, jacobian }
    }
}

/// Anything that can be evaluated as a vector field with first derivatives.
pub trait VectorFieldEval: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, p: &[f64]) -> Result<DVector<f64>, EvalError>;
    fn jet(&self, p: &[f64]) -> Result<VectorJet, EvalError>;
}

pub trait Tensor11Eval: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError>;
    fn jet(&self, p: &[f64]) -> Result<TensorJet, EvalError>;
}

fn eval_all(exprs: &[Expr], p: &[f64]) -> Result<DVector<f64>, EvalError> {
    let mut out = DVector::zeros(exprs.len());
    for (i, e) in exprs.iter().enumerate() {
        out[i] = e.eval(p)?;
    }
    Ok(out)
}

fn gradients(exprs: &[Expr], dim: usize) -> Vec<Vec<Expr>> {
    exprs.iter().map(|e| (0..dim).map(|j| e.derivative(j)).collect()).collect()
}

fn eval_jacobian(jac: &[Vec<Expr>], rows: usize, cols: usize, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let e = &jac[i][j];
            if !e.is_zero() {
                m[(i, j)] = e.eval(p)?;
            }
        }
    }
    Ok(m)
}

fn parse_all(sources: &[&str], ctx: &VariableContext) -> Result<Vec<Expr>, ParseError> {
    sources.iter().map(|s| parse(s, ctx)).collect()
}

/// Scalar function with its symbolic gradient.
#[derive(Debug, Clone)]
pub struct ScalarField {
    expr: Expr,
    grad: Vec<Expr>,
}

impl ScalarField {
    pub fn new(expr: Expr, dim: usize) -> Self {
        let grad = (0..dim).map(|j| expr.derivative(j)).collect();
        Self { expr, grad }
    }

    pub fn parse(source: &str, ctx: &VariableContext) -> Result<Self, ParseError> {
        Ok(Self::new(parse(source, ctx)?, ctx.dim()))
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        Self::new(Expr::constant(c), dim)
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn gradient_exprs(&self) -> &[Expr] {
        &self.grad
    }

    pub fn value(&self, p: &[f64]) -> Result<f64, EvalError> {
        self.expr.eval(p)
    }

    pub fn gradient(&self, p: &[f64]) -> Result<DVector<f64>, EvalError> {
        eval_all(&self.grad, p)
    }

    /// Exterior derivative `dg` as a one-form.
    pub fn differential(&self) -> OneFormField {
        OneFormField::new(self.grad.clone())
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        ScalarField::new(Expr::mul(&self.expr, &other.expr), self.dim())
    }
}

/// Component list with precomputed symbolic Jacobian, shared by vector
/// fields and one-forms.
#[derive(Debug, Clone)]
struct Components {
    comps: Vec<Expr>,
    jac: Vec<Vec<Expr>>,
}

impl Components {
    fn new(comps: Vec<Expr>) -> Self {
        let dim = comps.len();
        let jac = gradients(&comps, dim);
        Self { comps, jac }
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>, EvalError> {
        eval_all(&self.comps, p)
    }

    fn jet(&self, p: &[f64]) -> Result<VectorJet, EvalError> {
        let n = self.comps.len();
        Ok(VectorJet { value: self.value(p)?, jacobian: eval_jacobian(&self.jac, n, n, p)? })
    }
}

#[derive(Debug, Clone)]
pub struct VectorField {
    inner: Components,
}

impl VectorField {
    pub fn new(components: Vec<Expr>) -> Self {
        Self { inner: Components::new(components) }
    }

    pub fn parse(sources: &[&str], ctx: &VariableContext) -> Result<Self, ParseError> {
        if sources.len() != ctx.dim() {
            return Err(ParseError::Context(format!(
                "vector field needs {} components, got {}",
                ctx.dim(),
                sources.len()
            )));
        }
        Ok(Self::new(parse_all(sources, ctx)?))
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(vec![Expr::zero(); dim])
    }

    /// Coordinate field `d/dx^i`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut c = vec![Expr::zero(); dim];
        c[i] = Expr::one();
        Self::new(c)
    }

    pub fn components(&self) -> &[Expr] {
        &self.inner.comps
    }

    pub fn jacobian_exprs(&self) -> &[Vec<Expr>] {
        &self.inner.jac
    }

    /// `f X`, formed symbolically.
    pub fn scaled(&self, f: &Expr) -> VectorField {
        VectorField::new(self.inner.comps.iter().map(|c| Expr::mul(f, c)).collect())
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        VectorField::new(
            self.inner.comps.iter().zip(other.components()).map(|(a, b)| Expr::add(a, b)).collect(),
        )
    }

    pub fn negated(&self) -> VectorField {
        VectorField::new(self.inner.comps.iter().map(Expr::neg).collect())
    }

    /// `L_X g = X^i d_i g`, formed symbolically.
    pub fn apply_to(&self, g: &Expr) -> Expr {
        let terms: Vec<Expr> = self
            .inner
            .comps
            .iter()
            .enumerate()
            .map(|(i, c)| Expr::mul(c, &g.derivative(i)))
            .collect();
        Expr::sum(&terms)
    }
}

impl VectorFieldEval for VectorField {
    fn dim(&self) -> usize {
        self.inner.comps.len()
    }

    fn value(&self, p: &[f64]) -> Result<DVector<f64>, EvalError> {
        self.inner.value(p)
    }

    fn jet(&self, p: &[f64]) -> Result<VectorJet, EvalError> {
        self.inner.jet(p)
    }
}

/// One-form `alpha_i dx^i`; the jet layout matches [`VectorJet`]
/// (`jacobian[(i, j)] = d_j alpha_i`).
#[derive(Debug, Clone)]
pub struct OneFormField {
    inner: Components,
}

impl OneFormField {
    pub fn new(components: Vec<Expr>) -> Self {
        Self { inner: Components::new(components) }
    }

    pub fn parse(sources: &[&str], ctx: &VariableContext) -> Result<Self, ParseError> {
        if sources.len() != ctx.dim() {
            return Err(ParseError::Context(format!(
                "one-form needs {} components, got {}",
                ctx.dim(),
                sources.len()
            )));
        }
        Ok(Self::new(parse_all(sources, ctx)?))
    }

    pub fn components(&self) -> &[Expr] {
        &self.inner.comps
    }

    pub fn dim(&self) -> usize {
        self.inner.comps.len()
    }

    pub fn value(&self, p: &[f64]) -> Result<DVector<f64>, EvalError> {
        self.inner.value(p)
    }

    pub fn jet(&self, p: &[f64]) -> Result<VectorJet, EvalError> {
        self.inner.jet(p)
    }

    /// Contraction `i_X alpha`, formed symbolically.
    pub fn contract(&self, x: &VectorField) -> Expr {
        let terms: Vec<Expr> =
            self.inner.comps.iter().zip(x.components()).map(|(a, b)| Expr::mul(a, b)).collect();
        Expr::sum(&terms)
    }
}

/// Antisymmetric two-form stored as its strict upper triangle.
#[derive(Debug, Clone)]
pub struct TwoFormField {
    dim: usize,
    upper: Vec<Expr>,
}

impl TwoFormField {
    fn upper_index(dim: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < dim);
        i * dim - i * (i + 1) / 2 + (j - i - 1)
    }

    /// All-zero form; fill with [`TwoFormField::with`].
    pub fn zero(dim: usize) -> Self {
        Self { dim, upper: vec![Expr::zero(); dim * dim.saturating_sub(1) / 2] }
    }

    /// Sets `omega_ij = e` (and implicitly `omega_ji = -e`).
    pub fn with(mut self, i: usize, j: usize, e: Expr) -> Self {
        assert!(i != j, "diagonal of a two-form is zero");
        if i < j {
            let k = Self::upper_index(self.dim, i, j);
            self.upper[k] = e;
        } else {
            let k = Self::upper_index(self.dim, j, i);
            self.upper[k] = Expr::neg(&e);
        }
        self
    }

    /// `sum_k dq^k ^ dp_k` with block coordinates `(q^1..q^n, p_1..p_n)`.
    pub fn canonical(n: usize) -> Self {
        (0..n).fold(Self::zero(2 * n), |w, k| w.with(k, n + k, Expr::one()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component(&self, i: usize, j: usize) -> Expr {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => Expr::zero(),
            std::cmp::Ordering::Less => self.upper[Self::upper_index(self.dim, i, j)].clone(),
            std::cmp::Ordering::Greater => Expr::neg(&self.upper[Self::upper_index(self.dim, j, i)]),
        }
    }

    pub fn matrix(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let e = &self.upper[Self::upper_index(self.dim, i, j)];
                if !e.is_zero() {
                    let v = e.eval(p)?;
                    m[(i, j)] = v;
                    m[(j, i)] = -v;
                }
            }
        }
        Ok(m)
    }
}

/// Mixed (1,1) tensor, `S^i_j` stored row-major.
#[derive(Debug, Clone)]
pub struct Tensor11Field {
    dim: usize,
    comps: Vec<Expr>,
    jac: Vec<Vec<Expr>>,
}

impl Tensor11Field {
    pub fn new(dim: usize, comps: Vec<Expr>) -> Self {
        assert_eq!(comps.len(), dim * dim, "tensor needs dim^2 components");
        let jac = gradients(&comps, dim);
        Self { dim, comps, jac }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, vec![Expr::zero(); dim * dim])
    }

    pub fn identity(dim: usize) -> Self {
        let comps = (0..dim * dim)
            .map(|k| if k / dim == k % dim { Expr::one() } else { Expr::zero() })
            .collect();
        Self::new(dim, comps)
    }

    /// Vertical endomorphism `dq^k (x) d/dv^k` on `TR^n`, block coordinates.
    pub fn vertical_endomorphism(n: usize) -> Self {
        let dim = 2 * n;
        let mut comps = vec![Expr::zero(); dim * dim];
        for k in 0..n {
            comps[(n + k) * dim + k] = Expr::one();
        }
        Self::new(dim, comps)
    }

    pub fn component(&self, i: usize, j: usize) -> &Expr {
        &self.comps[i * self.dim + j]
    }

    /// `S(X)`, formed symbolically.
    pub fn apply_field(&self, x: &VectorField) -> VectorField {
        let comps = (0..self.dim)
            .map(|i| {
                let terms: Vec<Expr> =
                    (0..self.dim).map(|j| Expr::mul(self.component(i, j), &x.components()[j])).collect();
                Expr::sum(&terms)
            })
            .collect();
        VectorField::new(comps)
    }
}

impl Tensor11Eval for Tensor11Field {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let e = &self.comps[i * n + j];
                if !e.is_zero() {
                    m[(i, j)] = e.eval(p)?;
                }
            }
        }
        Ok(m)
    }

    fn jet(&self, p: &[f64]) -> Result<TensorJet, EvalError> {
        let n = self.dim;
        let value = self.value(p)?;
        let mut derivatives = vec![DMatrix::zeros(n, n); n];
        for (flat, row) in self.jac.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                if !e.is_zero() {
                    derivatives[k][(flat / n, flat % n)] = e.eval(p)?;
                }
            }
        }
        Ok(TensorJet { value, derivatives })
    }
}

/// Liouville field `v^k d/dv^k` on `TR^n`, block coordinates.
pub fn liouville(n: usize) -> VectorField {
    let comps = (0..2 * n).map(|i| if i < n { Expr::zero() } else { Expr::var(i) }).collect();
    VectorField::new(comps)
}

/// Shifted dilation `(v^k + c^k(q)) d/dv^k`.
pub fn shifted_liouville(n: usize, shift: &[Expr]) -> VectorField {
    assert_eq!(shift.len(), n);
    let comps = (0..2 * n)
        .map(|i| if i < n { Expr::zero() } else { Expr::add(&Expr::var(i), &shift[i - n]) })
        .collect();
    VectorField::new(comps)
}

/// Smooth map `R^N -> R^M` given by `M` component expressions over the
/// source coordinates.
#[derive(Debug, Clone)]
pub struct SmoothMap {
    source_dim: usize,
    comps: Vec<Expr>,
    jac: Vec<Vec<Expr>>,
}

impl SmoothMap {
    pub fn new(source_dim: usize, comps: Vec<Expr>) -> Self {
        let jac = gradients(&comps, source_dim);
        Self { source_dim, comps, jac }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, (0..dim).map(Expr::var).collect())
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.comps.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn jacobian_exprs(&self) -> &[Vec<Expr>] {
        &self.jac
    }

    pub fn apply(&self, p: &[f64]) -> Result<DVector<f64>, EvalError> {
        eval_all(&self.comps, p)
    }

    pub fn jacobian(&self, p: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        eval_jacobian(&self.jac, self.comps.len(), self.source_dim, p)
    }
}

//! Differentiation kernel: exact nested-dual derivatives with a
//! central-difference oracle.

mod jet;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use jet::{Jet, MAX_LEVELS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    #[error("non-finite derivative at input index {index}")]
    Evaluation { index: usize },
    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, CalcError>;

type JetScalarFn = dyn Fn(&[Jet]) -> Jet + Send + Sync;
type JetVectorFn = dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync;

/// A real function on `R^n`, written once over [`Jet`] so that it can be
/// evaluated plainly or differentiated to any supported depth.
#[derive(Clone)]
pub struct ScalarField {
    arity: usize,
    label: String,
    f: Arc<JetScalarFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({}, arity {})", self.label, self.arity)
    }
}

impl ScalarField {
    pub fn new(
        arity: usize,
        label: impl Into<String>,
        f: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static,
    ) -> Self {
        assert!(arity >= 1, "scalar field needs arity >= 1");
        ScalarField {
            arity,
            label: label.into(),
            f: Arc::new(f),
        }
    }

    /// The i-th coordinate function.
    pub fn coordinate(arity: usize, i: usize, label: impl Into<String>) -> Self {
        assert!(i < arity);
        ScalarField::new(arity, label, move |x| x[i])
    }

    pub fn constant(arity: usize, v: f64) -> Self {
        ScalarField::new(arity, format!("{v}"), move |_| Jet::constant(v))
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(v)).collect();
        (self.f)(&xs).value()
    }

    pub fn eval_jet(&self, x: &[Jet]) -> Jet {
        (self.f)(x)
    }

    /// Point-wise combination of two fields.
    pub fn zip_with(
        &self,
        other: &ScalarField,
        label: impl Into<String>,
        op: impl Fn(Jet, Jet) -> Jet + Send + Sync + 'static,
    ) -> ScalarField {
        assert_eq!(self.arity, other.arity);
        let (a, b) = (self.f.clone(), other.f.clone());
        ScalarField::new(self.arity, label, move |x| op(a(x), b(x)))
    }
}

/// A map `R^n -> R^n` written over [`Jet`].
#[derive(Clone)]
pub struct VectorFieldFn {
    arity: usize,
    label: String,
    f: Arc<JetVectorFn>,
}

impl fmt::Debug for VectorFieldFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorFieldFn({}, arity {})", self.label, self.arity)
    }
}

impl VectorFieldFn {
    pub fn new(
        arity: usize,
        label: impl Into<String>,
        f: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
    ) -> Self {
        assert!(arity >= 1);
        VectorFieldFn {
            arity,
            label: label.into(),
            f: Arc::new(f),
        }
    }

    /// The coordinate field `d/dx^i`.
    pub fn coordinate(arity: usize, i: usize) -> Self {
        VectorFieldFn::new(arity, format!("d/dx{i}"), move |_| {
            let mut v = vec![Jet::constant(0.0); arity];
            v[i] = Jet::constant(1.0);
            v
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let xs: Vec<Jet> = x.iter().map(|&v| Jet::constant(v)).collect();
        let out = (self.f)(&xs);
        debug_assert_eq!(out.len(), self.arity);
        out.iter().map(Jet::value).collect()
    }

    pub fn eval_jet(&self, x: &[Jet]) -> Vec<Jet> {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffScheme {
    Dual,
    /// Step is scaled by `1 + |x_i|` per coordinate.
    Central {
        step: f64,
    },
}

impl Default for DiffScheme {
    fn default() -> Self {
        DiffScheme::Dual
    }
}

impl DiffScheme {
    pub const DEFAULT_STEP: f64 = 1e-6;

    pub fn central() -> Self {
        DiffScheme::Central {
            step: Self::DEFAULT_STEP,
        }
    }
}

/// Nesting depth of a point: the deepest jet in it.
pub fn depth(x: &[Jet]) -> usize {
    x.iter().map(Jet::levels).max().unwrap_or(0)
}

/// All first partials of `f` at a jet point, each returned at the point's own
/// depth. This is what lets brackets be differentiated again.
pub fn jet_gradient(f: &(impl Fn(&[Jet]) -> Jet + ?Sized), x: &[Jet]) -> Vec<Jet> {
    let level = depth(x);
    let mut y: Vec<Jet> = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i].with_seed(level);
            let r = f(&y);
            y[i] = x[i];
            if r.levels() > level {
                r.outer_derivative()
            } else {
                Jet::constant(0.0)
            }
        })
        .collect()
}

/// Jacobian rows of a vector-valued jet function at a jet point.
pub fn jet_jacobian(f: &(impl Fn(&[Jet]) -> Vec<Jet> + ?Sized), x: &[Jet]) -> Vec<Vec<Jet>> {
    let level = depth(x);
    let n = x.len();
    let mut y: Vec<Jet> = x.to_vec();
    let mut cols: Vec<Vec<Jet>> = Vec::with_capacity(n);
    for i in 0..n {
        y[i] = x[i].with_seed(level);
        let r = f(&y);
        y[i] = x[i];
        cols.push(
            r.iter()
                .map(|v| {
                    if v.levels() > level {
                        v.outer_derivative()
                    } else {
                        Jet::constant(0.0)
                    }
                })
                .collect(),
        );
    }
    let m = cols.first().map_or(0, Vec::len);
    (0..m)
        .map(|r| (0..n).map(|c| cols[c][r]).collect())
        .collect()
}

fn lift(x: &[f64]) -> Vec<Jet> {
    x.iter().map(|&v| Jet::constant(v)).collect()
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(CalcError::Evaluation { index }),
        None => Ok(()),
    }
}

fn check_arity(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(CalcError::Arity { expected, got })
    }
}

fn central_step(step: f64, xi: f64) -> f64 {
    step * (1.0 + xi.abs())
}

fn central_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = central_step(step, x[i]);
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn gradient(f: &ScalarField, x: &[f64], scheme: DiffScheme) -> Result<Vec<f64>> {
    check_arity(f.arity, x.len())?;
    let g = match scheme {
        DiffScheme::Dual => jet_gradient(&*f.f, &lift(x))
            .iter()
            .map(Jet::value)
            .collect(),
        DiffScheme::Central { step } => central_gradient(&|y| f.eval(y), x, step),
    };
    check_finite(&g)?;
    Ok(g)
}

pub fn jacobian(fields: &[ScalarField], x: &[f64], scheme: DiffScheme) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(fields.len(), x.len());
    for (r, f) in fields.iter().enumerate() {
        let g = gradient(f, x, scheme)?;
        for (c, v) in g.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(m)
}

/// Jacobian of a vector field.
pub fn field_jacobian(
    field: &VectorFieldFn,
    x: &[f64],
    scheme: DiffScheme,
) -> Result<DMatrix<f64>> {
    check_arity(field.arity, x.len())?;
    let n = x.len();
    let mut m = DMatrix::zeros(n, n);
    match scheme {
        DiffScheme::Dual => {
            let rows = jet_jacobian(&*field.f, &lift(x));
            for (r, row) in rows.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    m[(r, c)] = v.value();
                }
            }
        }
        DiffScheme::Central { step } => {
            let mut y = x.to_vec();
            for c in 0..n {
                let h = central_step(step, x[c]);
                y[c] = x[c] + h;
                let fp = field.eval(&y);
                y[c] = x[c] - h;
                let fm = field.eval(&y);
                y[c] = x[c];
                for r in 0..n {
                    m[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
                }
            }
        }
    }
    check_finite(m.as_slice())?;
    Ok(m)
}

/// Symmetrized Hessian. The central variant differences the function twice,
/// so its step is floored at 1e-4 to keep rounding below truncation error.
pub fn hessian(f: &ScalarField, x: &[f64], scheme: DiffScheme) -> Result<DMatrix<f64>> {
    check_arity(f.arity, x.len())?;
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    match scheme {
        DiffScheme::Dual => {
            let base = lift(x);
            let mut y = base.clone();
            for i in 0..n {
                for j in i..n {
                    y[i] = y[i].with_seed(0);
                    y[j] = y[j].with_seed(1);
                    let v = f.eval_jet(&y).coeff(0b11);
                    y[i] = base[i];
                    y[j] = base[j];
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
        }
        DiffScheme::Central { step } => {
            let step = step.max(1e-4);
            let mut y = x.to_vec();
            for i in 0..n {
                for j in i..n {
                    let hi = central_step(step, x[i]);
                    let hj = central_step(step, x[j]);
                    let mut probe = |si: f64, sj: f64| {
                        y[i] += si * hi;
                        y[j] += sj * hj;
                        let v = f.eval(&y);
                        y[i] = x[i];
                        y[j] = x[j];
                        v
                    };
                    let v = (probe(1.0, 1.0) - probe(1.0, -1.0) - probe(-1.0, 1.0)
                        + probe(-1.0, -1.0))
                        / (4.0 * hi * hj);
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
        }
    }
    check_finite(h.as_slice())?;
    Ok(h)
}

pub fn lie_derivative(
    field: &VectorFieldFn,
    f: &ScalarField,
    x: &[f64],
    scheme: DiffScheme,
) -> Result<f64> {
    check_arity(field.arity, f.arity)?;
    let g = gradient(f, x, scheme)?;
    let v = field.eval(x);
    check_finite(&v)?;
    Ok(g.iter().zip(&v).map(|(a, b)| a * b).sum())
}

/// `[X, Y] = (DY) X - (DX) Y`.
pub fn field_commutator(
    x_field: &VectorFieldFn,
    y_field: &VectorFieldFn,
    x: &[f64],
    scheme: DiffScheme,
) -> Result<Vec<f64>> {
    check_arity(x_field.arity, y_field.arity)?;
    let dx = field_jacobian(x_field, x, scheme)?;
    let dy = field_jacobian(y_field, x, scheme)?;
    let xv = DVector::from_vec(x_field.eval(x));
    let yv = DVector::from_vec(y_field.eval(x));
    let out = dy * xv - dx * yv;
    Ok(out.iter().copied().collect())
}

/// Dense Gaussian elimination with partial pivoting over jets. Pivoting
/// looks at real parts only, so derivatives flow through the same sequence of
/// operations as the plain solve.
pub fn jet_solve(a: &[Vec<Jet>], b: &[Jet]) -> Option<Vec<Jet>> {
    let n = b.len();
    let mut m: Vec<Vec<Jet>> = a.to_vec();
    let mut rhs: Vec<Jet> = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| {
            m[i][col]
                .value()
                .abs()
                .partial_cmp(&m[j][col].value().abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[piv][col].value() == 0.0 || !m[piv][col].value().is_finite() {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        let inv = m[col][col].recip();
        for r in col + 1..n {
            let factor = m[r][col] * inv;
            if factor.value() == 0.0 && factor.levels() == 0 {
                continue;
            }
            for c in col..n {
                let t = m[col][c];
                m[r][c] -= factor * t;
            }
            let t = rhs[col];
            rhs[r] -= factor * t;
        }
    }
    let mut x = vec![Jet::constant(0.0); n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in r + 1..n {
            acc -= m[r][c] * x[c];
        }
        x[r] = acc / m[r][r];
    }
    Some(x)
}

/// A random polynomial in `arity` variables, divided by `1 + q²` for another
/// random polynomial `q` when `rational` is set. Used to cross-check the two
/// differentiation schemes.
pub fn random_test_field<R: rand::Rng>(rng: &mut R, arity: usize, rational: bool) -> ScalarField {
    let poly = |rng: &mut R| -> Vec<(f64, Vec<i32>)> {
        (0..4)
            .map(|_| {
                (
                    rng.gen_range(-2.0..2.0),
                    (0..arity).map(|_| rng.gen_range(0..4)).collect(),
                )
            })
            .collect()
    };
    let num = poly(rng);
    let den = if rational { Some(poly(rng)) } else { None };
    let label = if rational {
        "random rational"
    } else {
        "random polynomial"
    };
    let eval = |terms: &[(f64, Vec<i32>)], x: &[Jet]| -> Jet {
        terms
            .iter()
            .map(|(c, pows)| {
                x.iter()
                    .zip(pows)
                    .fold(Jet::constant(*c), |acc, (xi, p)| acc * xi.powi(*p))
            })
            .sum()
    };
    ScalarField::new(arity, label, move |x| {
        let n = eval(&num, x);
        match &den {
            Some(d) => {
                let q = eval(d, x);
                n / (q * q + 1.0)
            }
            None => n,
        }
    })
}

/// Largest componentwise `|dual - central| / max(|dual|, 1)` of the gradient.
pub fn scheme_disagreement(f: &ScalarField, x: &[f64]) -> Result<f64> {
    let d = gradient(f, x, DiffScheme::Dual)?;
    let c = gradient(f, x, DiffScheme::central())?;
    Ok(d.iter()
        .zip(&c)
        .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}

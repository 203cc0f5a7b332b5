//! Lagrangian symplectic machinery on a tangent bundle: Cartan forms, the
//! Lagrangian 2-form, energy, the Euler-Lagrange field, Poisson brackets for
//! regular Lagrangians, and presymplectic brackets built from a connection
//! for the reparametrization-invariant relativistic particle.
//!
//! Points are `(q, v)` with `q` first. A 2-form is stored as the matrix `W`
//! with `ω(X, Y) = Xᵀ W Y`.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::calc::{jet_gradient, jet_jacobian, jet_solve, CalcError, Jet, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LagError {
    #[error("point outside the model domain: {0}")]
    Domain(String),
    #[error("non-finite value while evaluating {0}")]
    Evaluation(String),
    #[error("Lagrangian is degenerate (velocity Hessian rank {rank} of {n}); use the kernel and presymplectic path")]
    DegenerateLagrangian { rank: usize, n: usize },
    #[error("field is not second order: position components differ from v by {dev:e}")]
    NotSecondOrder { dev: f64 },
    #[error("velocity is not timelike")]
    NotTimelike,
    #[error("time component of the velocity vanishes")]
    ZeroTimeVelocity,
    #[error("connection invalid: {0}")]
    ConnectionInvalid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Calc(#[from] CalcError),
}

pub type Result<T> = std::result::Result<T, LagError>;

/// Diagonal metric; the relativistic convention is `(+, -, -, -)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSignature {
    pub diag: Vec<f64>,
}

impl MetricSignature {
    pub fn minkowski() -> Self {
        MetricSignature {
            diag: vec![1.0, -1.0, -1.0, -1.0],
        }
    }

    pub fn euclidean(n: usize) -> Self {
        MetricSignature { diag: vec![1.0; n] }
    }

    pub fn new(diag: Vec<f64>) -> Self {
        assert!(
            diag.iter().all(|d| *d == 1.0 || *d == -1.0),
            "signature entries must be ±1"
        );
        MetricSignature { diag }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.diag
            .iter()
            .zip(a.iter().zip(b))
            .map(|(g, (x, y))| g * x * y)
            .sum()
    }

    pub fn dot_jet(&self, a: &[Jet], b: &[Jet]) -> Jet {
        self.diag
            .iter()
            .zip(a.iter().zip(b))
            .map(|(g, (x, y))| *x * *y * *g)
            .sum()
    }

    pub fn lower(&self, a: &[f64]) -> Vec<f64> {
        a.iter().zip(&self.diag).map(|(x, g)| x * g).collect()
    }
}

type DomainCheck = Arc<dyn Fn(&[f64]) -> Option<String> + Send + Sync>;

/// A Lagrangian on `2n` coordinates `(q, v)`.
#[derive(Clone)]
pub struct LagrangianModel {
    pub n: usize,
    pub lagrangian: ScalarField,
    pub label: String,
    domain: Option<DomainCheck>,
}

impl std::fmt::Debug for LagrangianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LagrangianModel({}, n = {})", self.label, self.n)
    }
}

impl LagrangianModel {
    pub fn new(n: usize, lagrangian: ScalarField, label: impl Into<String>) -> Self {
        assert_eq!(lagrangian.arity(), 2 * n, "Lagrangian takes (q, v)");
        LagrangianModel {
            n,
            lagrangian,
            label: label.into(),
            domain: None,
        }
    }

    /// The check returns a reason when a point is outside the domain.
    pub fn with_domain(
        mut self,
        check: impl Fn(&[f64]) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.domain = Some(Arc::new(check));
        self
    }

    /// `½ v·v - U(q)`.
    pub fn natural(n: usize, potential: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static) -> Self {
        let lag = ScalarField::new(2 * n, "½v·v - U", move |z| {
            let kinetic: Jet = z[n..].iter().map(|v| *v * *v).sum();
            kinetic * 0.5 - potential(&z[..n])
        });
        LagrangianModel::new(n, lag, "natural")
    }

    pub fn free(n: usize) -> Self {
        let mut m = LagrangianModel::natural(n, |_| Jet::constant(0.0));
        m.label = "free".into();
        m
    }

    /// `m c sqrt(η(v, v))` on timelike velocities.
    pub fn relativistic(m: f64, c: f64) -> Self {
        let eta = MetricSignature::minkowski();
        let mc = m * c;
        let lag = ScalarField::new(8, "mc sqrt(η(v,v))", move |z| {
            eta.dot_jet(&z[4..], &z[4..]).sqrt() * mc
        });
        LagrangianModel::new(4, lag, "relativistic free particle").with_domain(|z| {
            let eta = MetricSignature::minkowski();
            if eta.dot(&z[4..], &z[4..]) > 0.0 {
                None
            } else {
                Some("velocity must be timelike".into())
            }
        })
    }

    pub fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != 2 * self.n {
            return Err(LagError::Dimension {
                expected: 2 * self.n,
                got: z.len(),
            });
        }
        if let Some(reason) = self.domain.as_ref().and_then(|d| d(z)) {
            return Err(LagError::Domain(reason));
        }
        Ok(())
    }

    pub fn value(&self, z: &[f64]) -> Result<f64> {
        self.check_point(z)?;
        finite(self.lagrangian.eval(z), "Lagrangian")
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LagError::Evaluation(what.into()))
    }
}

fn finite_vec(v: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(LagError::Evaluation(what.into()))
    }
}

fn lift(z: &[f64]) -> Vec<Jet> {
    z.iter().map(|&v| Jet::constant(v)).collect()
}

fn values(v: &[Jet]) -> Vec<f64> {
    v.iter().map(Jet::value).collect()
}

fn to_matrix(m: &[Vec<Jet>]) -> DMatrix<f64> {
    let n = m.len();
    DMatrix::from_fn(n, m.first().map_or(0, Vec::len), |i, j| m[i][j].value())
}

/// `(∂L/∂v, 0)` as a jet covector.
fn cartan_jet(model: &LagrangianModel, z: &[Jet]) -> Vec<Jet> {
    let g = jet_gradient(&|w: &[Jet]| model.lagrangian.eval_jet(w), z);
    let n = model.n;
    let mut out = g[n..].to_vec();
    out.extend(std::iter::repeat(Jet::constant(0.0)).take(n));
    out
}

/// `W` of the 2-form `-dθ` at a jet point.
pub fn two_form_jet(model: &LagrangianModel, z: &[Jet]) -> Vec<Vec<Jet>> {
    let n = model.n;
    let hess = jet_jacobian(
        &|y: &[Jet]| jet_gradient(&|w: &[Jet]| model.lagrangian.eval_jet(w), y),
        z,
    );
    let zero = Jet::constant(0.0);
    let mut w = vec![vec![zero; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            let vv = hess[n + i][n + j];
            w[i][n + j] = vv;
            w[n + j][i] = -vv;
            // L_{v_i q_j} - L_{v_j q_i}
            w[i][j] = hess[n + i][j] - hess[n + j][i];
        }
    }
    w
}

fn energy_jet(model: &LagrangianModel, z: &[Jet]) -> Jet {
    let n = model.n;
    let g = jet_gradient(&|w: &[Jet]| model.lagrangian.eval_jet(w), z);
    let vp: Jet = z[n..].iter().zip(&g[n..]).map(|(v, p)| *v * *p).sum();
    vp - model.lagrangian.eval_jet(z)
}

/// Cartan 1-form `(∂L/∂v) dq`, as a covector on `(q, v)`.
pub fn cartan_one_form(model: &LagrangianModel, z: &[f64]) -> Result<Vec<f64>> {
    model.check_point(z)?;
    finite_vec(values(&cartan_jet(model, &lift(z))), "Cartan form")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoFormAtPoint {
    pub matrix: DMatrix<f64>,
    pub point: Vec<f64>,
}

impl TwoFormAtPoint {
    pub fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        (DVector::from_column_slice(x).transpose() * &self.matrix * DVector::from_column_slice(y))
            [(0, 0)]
    }

    pub fn antisymmetry_dev(&self) -> f64 {
        (&self.matrix + self.matrix.transpose()).amax()
    }
}

/// The Lagrangian 2-form `ω = -dθ`: the velocity Hessian couples `dq ∧ dv`
/// and the antisymmetrized mixed derivatives couple `dq ∧ dq`.
pub fn lagrangian_two_form(model: &LagrangianModel, z: &[f64]) -> Result<TwoFormAtPoint> {
    model.check_point(z)?;
    let m = to_matrix(&two_form_jet(model, &lift(z)));
    if !m.iter().all(|v| v.is_finite()) {
        return Err(LagError::Evaluation("Lagrangian 2-form".into()));
    }
    Ok(TwoFormAtPoint {
        matrix: m,
        point: z.to_vec(),
    })
}

/// `v·∂L/∂v - L`.
pub fn energy(model: &LagrangianModel, z: &[f64]) -> Result<f64> {
    model.check_point(z)?;
    finite(energy_jet(model, &lift(z)).value(), "energy")
}

pub fn energy_field(model: &LagrangianModel) -> ScalarField {
    let m = model.clone();
    ScalarField::new(2 * model.n, "E", move |z| energy_jet(&m, z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regularity {
    pub regular: bool,
    pub det: f64,
    pub rank: usize,
}

/// Velocity Hessian rank with singular values below `tol · σ_max` counted as zero.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let s = m.singular_values();
    let max = s.max();
    if max == 0.0 {
        return 0;
    }
    s.iter().filter(|v| **v > tol * max).count()
}

pub fn velocity_hessian(model: &LagrangianModel, z: &[f64]) -> Result<DMatrix<f64>> {
    model.check_point(z)?;
    let w = lagrangian_two_form(model, z)?;
    let n = model.n;
    Ok(w.matrix.view((0, n), (n, n)).into_owned())
}

pub fn is_regular(model: &LagrangianModel, z: &[f64], tol: f64) -> Result<Regularity> {
    let h = velocity_hessian(model, z)?;
    let rank = numerical_rank(&h, tol);
    Ok(Regularity {
        regular: rank == model.n,
        det: h.determinant(),
        rank,
    })
}

/// Kernel detection threshold relative to the largest singular value.
pub const KERNEL_TOL: f64 = 1e-8;

fn require_regular(model: &LagrangianModel, z: &[f64]) -> Result<()> {
    let r = is_regular(model, z, KERNEL_TOL)?;
    if r.regular {
        Ok(())
    } else {
        Err(LagError::DegenerateLagrangian {
            rank: r.rank,
            n: model.n,
        })
    }
}

/// The Euler-Lagrange field: `ω(·, Γ) = -dE`, i.e. Γ is the Hamiltonian field
/// of the energy. Its position components are checked to equal `v`.
pub fn el_field(model: &LagrangianModel, z: &[f64]) -> Result<Vec<f64>> {
    require_regular(model, z)?;
    let w = lagrangian_two_form(model, z)?.matrix;
    let de = DVector::from_vec(values(&jet_gradient(
        &|y: &[Jet]| energy_jet(model, y),
        &lift(z),
    )));
    let gamma = -w.lu().solve(&de).ok_or(LagError::DegenerateLagrangian {
        rank: 0,
        n: model.n,
    })?;
    let n = model.n;
    let dev = (0..n)
        .map(|i| (gamma[i] - z[n + i]).abs())
        .fold(0.0, f64::max);
    let scale = 1.0 + z[n..].iter().map(|v| v.abs()).fold(0.0, f64::max);
    if dev > 1e-8 * scale {
        return Err(LagError::NotSecondOrder { dev });
    }
    finite_vec(gamma.iter().copied().collect(), "Euler-Lagrange field")
}

/// A Poisson-type bracket that can be evaluated on jets, so that brackets of
/// brackets can be differentiated.
pub trait Bracket: Send + Sync {
    fn arity(&self) -> usize;
    /// `None` when the bracket is undefined at the point.
    fn eval_jet(&self, f: &ScalarField, g: &ScalarField, z: &[Jet]) -> Option<Jet>;

    fn eval(&self, f: &ScalarField, g: &ScalarField, z: &[f64]) -> Result<f64> {
        if z.len() != self.arity() {
            return Err(LagError::Dimension {
                expected: self.arity(),
                got: z.len(),
            });
        }
        let v = self
            .eval_jet(f, g, &lift(z))
            .ok_or_else(|| LagError::Evaluation(format!("{{{}, {}}}", f.label(), g.label())))?;
        finite(v.value(), "bracket")
    }
}

/// `{f, g}` as a field, for nesting inside another bracket.
pub fn bracket_field<B: Bracket + Clone + 'static>(
    b: &B,
    f: &ScalarField,
    g: &ScalarField,
) -> ScalarField {
    let (b, f2, g2) = (b.clone(), f.clone(), g.clone());
    ScalarField::new(
        b.arity(),
        format!("{{{}, {}}}", f.label(), g.label()),
        move |z| b.eval_jet(&f2, &g2, z).unwrap_or(Jet::constant(f64::NAN)),
    )
}

fn grad_jet(f: &ScalarField, z: &[Jet]) -> Vec<Jet> {
    jet_gradient(&|w: &[Jet]| f.eval_jet(w), z)
}

/// `|{f,{g,h}} + {g,{h,f}} + {h,{f,g}}|`.
pub fn jacobi_residual<B: Bracket + Clone + 'static>(
    b: &B,
    f: &ScalarField,
    g: &ScalarField,
    h: &ScalarField,
    z: &[f64],
) -> Result<f64> {
    let a = b.eval(f, &bracket_field(b, g, h), z)?;
    let bb = b.eval(g, &bracket_field(b, h, f), z)?;
    let c = b.eval(h, &bracket_field(b, f, g), z)?;
    Ok((a + bb + c).abs())
}

/// Standard bracket on `(q, p)`: `{q^i, p_j} = δ^i_j`.
#[derive(Debug, Clone, Copy)]
pub struct CanonicalBracket {
    pub n: usize,
}

impl Bracket for CanonicalBracket {
    fn arity(&self) -> usize {
        2 * self.n
    }

    fn eval_jet(&self, f: &ScalarField, g: &ScalarField, z: &[Jet]) -> Option<Jet> {
        let (df, dg) = (grad_jet(f, z), grad_jet(g, z));
        let n = self.n;
        Some((0..n).map(|i| df[i] * dg[n + i] - df[n + i] * dg[i]).sum())
    }
}

/// The bracket of a regular Lagrangian on its tangent bundle, ordered so that
/// `{∂L/∂v^j, q^k} = δ_j^k`: `{f, g} = ∇f · W⁻¹ ∇g`.
#[derive(Debug, Clone)]
pub struct RegularBracket {
    pub model: LagrangianModel,
}

impl Bracket for RegularBracket {
    fn arity(&self) -> usize {
        2 * self.model.n
    }

    fn eval_jet(&self, f: &ScalarField, g: &ScalarField, z: &[Jet]) -> Option<Jet> {
        let w = two_form_jet(&self.model, z);
        let y = jet_solve(&w, &grad_jet(g, z))?;
        Some(grad_jet(f, z).iter().zip(&y).map(|(a, b)| *a * *b).sum())
    }
}

pub fn pb_regular(
    model: &LagrangianModel,
    f: &ScalarField,
    g: &ScalarField,
    z: &[f64],
) -> Result<f64> {
    require_regular(model, z)?;
    RegularBracket {
        model: model.clone(),
    }
    .eval(f, g, z)
}

/// Orthonormal basis of the null space: right singular vectors whose
/// singular values fall below `tol · σ_max`.
pub fn kernel_basis(omega: &TwoFormAtPoint, tol: f64) -> Vec<Vec<f64>> {
    let svd = omega.matrix.clone().svd(false, true);
    let max = svd.singular_values.max();
    let vt = svd.v_t.expect("requested V^T");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| max == 0.0 || **s <= tol * max)
        .map(|(i, _)| vt.row(i).iter().copied().collect())
        .collect()
}

/// Distance of `v` from the span of an orthonormal basis.
pub fn distance_from_span(basis: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut r = v.to_vec();
    for b in basis {
        let c: f64 = b.iter().zip(v).map(|(x, y)| x * y).sum();
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= c * bi;
        }
    }
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn timelike(z: &[f64]) -> Result<f64> {
    let l2 = MetricSignature::minkowski().dot(&z[4..8], &z[4..8]);
    if l2 > 0.0 {
        Ok(l2.sqrt())
    } else {
        Err(LagError::NotTimelike)
    }
}

/// Newton-Wigner positions and momenta `(Q, P)` of the free relativistic
/// particle (unit mass and light speed): `Q^j = -x^j + (v^j/v^0) x^0`,
/// `P^j = v^j / sqrt(η(v, v))`. Both are degree zero in the velocity.
pub fn newton_wigner(z: &[f64]) -> Result<([f64; 3], [f64; 3])> {
    if z.len() != 8 {
        return Err(LagError::Dimension {
            expected: 8,
            got: z.len(),
        });
    }
    let l = timelike(z)?;
    if z[4] == 0.0 {
        return Err(LagError::ZeroTimeVelocity);
    }
    let mut q = [0.0; 3];
    let mut p = [0.0; 3];
    for j in 0..3 {
        // G^j = (v^j x^0 - v^0 x^j) / L and Q^j = L G^j / v^0
        let g = (z[5 + j] * z[0] - z[4] * z[1 + j]) / l;
        q[j] = l * g / z[4];
        p[j] = z[5 + j] / l;
    }
    Ok((q, p))
}

pub fn newton_wigner_position(j: usize) -> ScalarField {
    ScalarField::new(8, format!("Q{}", j + 1), move |z| {
        -z[1 + j] + z[5 + j] / z[4] * z[0]
    })
}

pub fn newton_wigner_momentum(j: usize) -> ScalarField {
    ScalarField::new(8, format!("P{}", j + 1), move |z| {
        z[5 + j]
            / MetricSignature::minkowski()
                .dot_jet(&z[4..], &z[4..])
                .sqrt()
    })
}

type ConnectionFn = Arc<dyn Fn(&[Jet]) -> Vec<Vec<Jet>> + Send + Sync>;

/// A point-dependent (1,1)-tensor; `matrix[a][b]` is component `a` of `A(e_b)`.
#[derive(Clone)]
pub struct ConnectionField {
    pub dim: usize,
    pub label: String,
    a: ConnectionFn,
}

impl std::fmt::Debug for ConnectionField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ConnectionField({}, dim {})", self.label, self.dim)
    }
}

impl ConnectionField {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        a: impl Fn(&[Jet]) -> Vec<Vec<Jet>> + Send + Sync + 'static,
    ) -> Self {
        ConnectionField {
            dim,
            label: label.into(),
            a: Arc::new(a),
        }
    }

    pub fn matrix_jet(&self, z: &[Jet]) -> Vec<Vec<Jet>> {
        (self.a)(z)
    }

    pub fn matrix(&self, z: &[f64]) -> DMatrix<f64> {
        to_matrix(&(self.a)(&lift(z)))
    }

    /// `max |A² - A|`.
    pub fn projector_dev(&self, z: &[f64]) -> f64 {
        let a = self.matrix(z);
        (&a * &a - &a).amax()
    }
}

/// `A = 1 - α ⊗ Δ - β ⊗ Γ` with `Γ = v·∂_x`, `Δ = v·∂_v`,
/// `α = v_μ dv^μ / L²` and `β = (1/L) d(v·x / L)`, `L = sqrt(η(v, v))`.
/// A projector cannot carry an overall scale, so the mass and light speed
/// do not enter; they appear only in the bracket prefactor.
pub fn relativistic_connection() -> ConnectionField {
    ConnectionField::new(8, "relativistic connection", |z| {
        let eta = MetricSignature::minkowski();
        let (x, v) = (&z[..4], &z[4..]);
        let l2 = eta.dot_jet(v, v);
        let l = l2.sqrt();
        let vx = eta.dot_jet(v, x);
        let zero = Jet::constant(0.0);
        let mut alpha = vec![zero; 8];
        let mut beta = vec![zero; 8];
        for mu in 0..4 {
            let v_low = v[mu] * eta.diag[mu];
            let x_low = x[mu] * eta.diag[mu];
            alpha[4 + mu] = v_low / l2;
            beta[mu] = v_low / l2;
            beta[4 + mu] = (x_low / l - vx * v_low / (l2 * l)) / l;
        }
        let mut gamma = v.to_vec();
        gamma.extend([zero; 4]);
        let mut delta = vec![zero; 4];
        delta.extend(v.iter().copied());
        (0..8)
            .map(|a| {
                (0..8)
                    .map(|b| {
                        let id = if a == b { 1.0 } else { 0.0 };
                        -(delta[a] * alpha[b]) - gamma[a] * beta[b] + id
                    })
                    .collect()
            })
            .collect()
    })
}

type CoefficientFn = Arc<dyn Fn(&[Jet]) -> Vec<(usize, usize, Jet)> + Send + Sync>;

/// `Λ = Σ a^{ij} A(∂_i) ∧ A(∂_j)` with `(a ∧ b)(df, dg) = a(f) b(g) - b(f) a(g)`.
#[derive(Clone)]
pub struct PresymplecticBracket {
    pub model: LagrangianModel,
    pub connection: ConnectionField,
    coefficients: CoefficientFn,
}

impl std::fmt::Debug for PresymplecticBracket {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "PresymplecticBracket({:?}, {:?})",
            self.model, self.connection
        )
    }
}

impl PresymplecticBracket {
    pub fn new(
        model: LagrangianModel,
        connection: ConnectionField,
        coefficients: impl Fn(&[Jet]) -> Vec<(usize, usize, Jet)> + Send + Sync + 'static,
    ) -> Self {
        assert_eq!(connection.dim, 2 * model.n);
        PresymplecticBracket {
            model,
            connection,
            coefficients: Arc::new(coefficients),
        }
    }

    /// `Λ = L Σ_μ η^{μμ} A(∂_{x^μ}) ∧ A(∂_{v^μ})`, oriented so that the
    /// Newton-Wigner pairs are canonical: `{Q^i, P^j} = δ^{ij}`.
    pub fn relativistic(m: f64, c: f64) -> Self {
        let model = LagrangianModel::relativistic(m, c);
        let lag = model.lagrangian.clone();
        PresymplecticBracket::new(model, relativistic_connection(), move |z| {
            let l = lag.eval_jet(z);
            let eta = MetricSignature::minkowski();
            (0..4).map(|mu| (mu, 4 + mu, l * eta.diag[mu])).collect()
        })
    }

    /// Bivector matrix with `{f, g} = ∇f · Λ ∇g`.
    pub fn bivector(&self, z: &[f64]) -> DMatrix<f64> {
        let zj = lift(z);
        let a = to_matrix(&self.connection.matrix_jet(&zj));
        let n = a.nrows();
        let mut lam = DMatrix::zeros(n, n);
        for (i, j, coef) in (self.coefficients)(&zj) {
            let (ci, cj) = (a.column(i), a.column(j));
            lam += (ci * cj.transpose() - cj * ci.transpose()) * coef.value();
        }
        lam
    }

    /// Projector and kernel conditions on the connection at `z`.
    pub fn validate(&self, z: &[f64]) -> Result<()> {
        self.model.check_point(z)?;
        let dev = self.connection.projector_dev(z);
        if dev > 1e-9 {
            return Err(LagError::ConnectionInvalid(format!(
                "A² ≠ A, deviation {dev:e}"
            )));
        }
        let a = self.connection.matrix(z);
        let omega = lagrangian_two_form(&self.model, z)?;
        let ker = kernel_basis(&omega, KERNEL_TOL);
        for k in &ker {
            let ak = &a * DVector::from_column_slice(k);
            if ak.amax() > 1e-8 {
                return Err(LagError::ConnectionInvalid(format!(
                    "kernel vector not annihilated ({:e})",
                    ak.amax()
                )));
            }
        }
        let rank = numerical_rank(&a, KERNEL_TOL);
        if rank + ker.len() != a.nrows() {
            return Err(LagError::ConnectionInvalid(format!(
                "rank A = {rank} with kernel dimension {}",
                ker.len()
            )));
        }
        Ok(())
    }
}

impl Bracket for PresymplecticBracket {
    fn arity(&self) -> usize {
        2 * self.model.n
    }

    fn eval_jet(&self, f: &ScalarField, g: &ScalarField, z: &[Jet]) -> Option<Jet> {
        let a = self.connection.matrix_jet(z);
        let (df, dg) = (grad_jet(f, z), grad_jet(g, z));
        let along = |d: &[Jet], col: usize| -> Jet {
            d.iter().enumerate().map(|(r, x)| *x * a[r][col]).sum()
        };
        let mut out = Jet::constant(0.0);
        for (i, j, coef) in (self.coefficients)(z) {
            out += coef * (along(&df, i) * along(&dg, j) - along(&df, j) * along(&dg, i));
        }
        Some(out)
    }
}

/// Presymplectic bracket after validating the connection at `z`.
pub fn presymplectic_bracket(
    br: &PresymplecticBracket,
    f: &ScalarField,
    g: &ScalarField,
    z: &[f64],
) -> Result<f64> {
    br.validate(z)?;
    br.eval(f, g, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Compatibility {
    /// `max |Λ ω Λ - Λ|` with ω in its relativistic orientation `dθ`.
    pub lambda_omega_lambda: f64,
    /// Smallest singular value of `[ker Λ | Im ω]`; positive means the
    /// intersection is trivial.
    pub kernel_image_gap: f64,
}

pub fn compatibility(br: &PresymplecticBracket, z: &[f64]) -> Result<Compatibility> {
    let lam = br.bivector(z);
    let omega = -lagrangian_two_form(&br.model, z)?.matrix;
    let llo = (&lam * &omega * &lam - &lam).amax();
    let n = lam.nrows();
    let ker = kernel_basis(
        &TwoFormAtPoint {
            matrix: lam.clone(),
            point: z.to_vec(),
        },
        KERNEL_TOL,
    );
    let svd = omega.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let image: Vec<usize> = (0..n)
        .filter(|&i| svd.singular_values[i] > KERNEL_TOL * smax)
        .collect();
    let mut cols = DMatrix::zeros(n, ker.len() + image.len());
    for (c, k) in ker.iter().enumerate() {
        cols.set_column(c, &DVector::from_column_slice(k));
    }
    for (c, &i) in image.iter().enumerate() {
        cols.set_column(ker.len() + c, &u.column(i));
    }
    Ok(Compatibility {
        lambda_omega_lambda: llo,
        kernel_image_gap: cols.singular_values().min(),
    })
}

/// `(dθ)_{ab} = ∂_a θ_b - ∂_b θ_a` by central differences.
pub fn exterior_derivative_fd(
    theta: &dyn Fn(&[f64]) -> Vec<f64>,
    z: &[f64],
    step: f64,
) -> DMatrix<f64> {
    let n = z.len();
    let mut jac = DMatrix::zeros(n, n); // jac[(b, a)] = ∂_a θ_b
    let mut y = z.to_vec();
    for a in 0..n {
        let h = step * (1.0 + z[a].abs());
        y[a] = z[a] + h;
        let p = theta(&y);
        y[a] = z[a] - h;
        let m = theta(&y);
        y[a] = z[a];
        for b in 0..n {
            jac[(b, a)] = (p[b] - m[b]) / (2.0 * h);
        }
    }
    jac.transpose() - jac
}

/// `max |ω + dθ|`, with `dθ` by finite differences.
pub fn two_form_exactness_dev(model: &LagrangianModel, z: &[f64]) -> Result<f64> {
    let w = lagrangian_two_form(model, z)?;
    let m = model.clone();
    let theta = move |y: &[f64]| values(&cartan_jet(&m, &lift(y)));
    let d = exterior_derivative_fd(&theta, z, 1e-5);
    Ok((w.matrix + d).amax())
}

pub fn coordinate(dim: usize, i: usize, names: &[&str]) -> ScalarField {
    ScalarField::coordinate(dim, i, names[i])
}

pub const SPACETIME_NAMES: [&str; 8] = ["x0", "x1", "x2", "x3", "v0", "v1", "v2", "v3"];

/// The eight coordinate functions `x^μ, v^μ` on the relativistic tangent bundle.
pub fn spacetime_coordinates() -> Vec<ScalarField> {
    (0..8).map(|i| coordinate(8, i, &SPACETIME_NAMES)).collect()
}

/// Point with `x` uniform in `[-2, 2]^4` and a future-directed timelike velocity.
pub fn random_timelike_point<R: Rng>(rng: &mut R) -> Vec<f64> {
    let mut z: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let vs: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rest: f64 = rng.gen_range(0.3..2.0);
    let v0 = (vs.iter().map(|v| v * v).sum::<f64>() + rest * rest).sqrt();
    z.push(v0);
    z.extend(vs);
    z
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketEntry {
    pub f: String,
    pub g: String,
    pub value: f64,
    pub printed: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketTable {
    pub point: Vec<f64>,
    pub m: f64,
    pub c: f64,
    pub pairs: Vec<BracketEntry>,
    pub residuals: BTreeMap<String, f64>,
}

/// Brackets among `x^ρ` and `v^ρ` for `L = mc sqrt(η(v, v))`, next to the
/// printed closed forms `{v^ρ, x^σ} = L(η^{ρσ} - m²c² v^ρ v^σ / L²)`,
/// `{v, v} = 0`, `{x^ρ, x^σ} = m²c² (v^σ x^ρ - v^ρ x^σ) / L`.
pub fn relativistic_bracket_table(m: f64, c: f64, z: &[f64]) -> Result<BracketTable> {
    let br = PresymplecticBracket::relativistic(m, c);
    br.validate(z)?;
    let coords = spacetime_coordinates();
    let eta = MetricSignature::minkowski();
    let l = br.model.value(z)?;
    let m2c2 = (m * c).powi(2);
    let mut pairs = Vec::new();
    let mut ratios = Vec::new();
    let (mut dev_printed, mut dev_flipped): (f64, f64) = (0.0, 0.0);
    let mut vv_max: f64 = 0.0;
    for rho in 0..4 {
        for sigma in 0..4 {
            let (xr, xs, vr, vs) = (z[rho], z[sigma], z[4 + rho], z[4 + sigma]);
            let g = if rho == sigma { eta.diag[rho] } else { 0.0 };
            let val = br.eval(&coords[4 + rho], &coords[sigma], z)?;
            let printed = l * (g - m2c2 * vr * vs / (l * l));
            dev_printed = dev_printed.max((val - printed).abs());
            dev_flipped = dev_flipped.max((val + printed).abs());
            pairs.push(BracketEntry {
                f: SPACETIME_NAMES[4 + rho].into(),
                g: SPACETIME_NAMES[sigma].into(),
                value: val,
                printed,
            });
            let val = br.eval(&coords[4 + rho], &coords[4 + sigma], z)?;
            vv_max = vv_max.max(val.abs());
            pairs.push(BracketEntry {
                f: SPACETIME_NAMES[4 + rho].into(),
                g: SPACETIME_NAMES[4 + sigma].into(),
                value: val,
                printed: 0.0,
            });
            if rho != sigma {
                let pattern = vs * xr - vr * xs;
                let val = br.eval(&coords[rho], &coords[sigma], z)?;
                pairs.push(BracketEntry {
                    f: SPACETIME_NAMES[rho].into(),
                    g: SPACETIME_NAMES[sigma].into(),
                    value: val,
                    printed: m2c2 * pattern / l,
                });
                if pattern.abs() > 1e-6 {
                    ratios.push(val / pattern);
                }
            }
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let spread = ratios.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max);
    let mut residuals = BTreeMap::new();
    residuals.insert("xx_prefactor_measured".into(), mean * l);
    residuals.insert("xx_prefactor_printed".into(), m2c2);
    residuals.insert("xx_ratio_spread".into(), spread);
    residuals.insert("vx_dev_from_printed".into(), dev_printed);
    residuals.insert("vx_dev_from_negated_printed".into(), dev_flipped);
    residuals.insert("vv_max".into(), vv_max);
    Ok(BracketTable {
        point: z.to_vec(),
        m,
        c,
        pairs,
        residuals,
    })
}

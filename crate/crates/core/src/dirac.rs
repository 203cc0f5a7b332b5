//! Constrained relativistic particles on `T*R^{4N}`: canonical brackets with
//! the Minkowski metric, constraint sets, Dirac brackets, the constrained
//! evolution they generate, the world-line condition, and the deformed
//! Poincaré algebra.
//!
//! A phase point stores particle `α` as `x_α^μ` at `8α + μ` and `p_α^μ` at
//! `8α + 4 + μ`, all with upper indices.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::calc::{jet_gradient, jet_solve, Jet, ScalarField};
use crate::flow::{integrate, FlowError, IntegratorConfig, Trajectory, VectorFieldSystem};
use crate::lagsym::{Bracket, LagError, MetricSignature};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiracError {
    #[error("point is off the constraint surface (max violation {violation:e})")]
    OffSurface { violation: f64 },
    #[error("constraint matrix is singular (condition number {cond:e})")]
    SingularConstraintMatrix { cond: f64 },
    #[error("constraints drifted to {violation:e} at τ = {tau}")]
    ConstraintDrift { tau: f64, violation: f64 },
    #[error("could not sample an on-shell point: {0}")]
    Sampling(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Bracket(#[from] LagError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

pub type Result<T> = std::result::Result<T, DiracError>;

/// Weak equality: constraint values below this count as zero.
pub const SURFACE_TOL: f64 = 1e-9;
/// Dirac brackets are refused above this constraint-matrix condition number.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSpace {
    pub particles: usize,
    pub signature: MetricSignature,
}

impl PhaseSpace {
    pub fn new(particles: usize) -> Self {
        assert!(particles >= 1);
        PhaseSpace {
            particles,
            signature: MetricSignature::minkowski(),
        }
    }

    pub fn dim(&self) -> usize {
        8 * self.particles
    }

    pub fn x_index(&self, particle: usize, mu: usize) -> usize {
        8 * particle + mu
    }

    pub fn p_index(&self, particle: usize, mu: usize) -> usize {
        8 * particle + 4 + mu
    }

    pub fn x(&self, particle: usize, mu: usize) -> ScalarField {
        ScalarField::coordinate(
            self.dim(),
            self.x_index(particle, mu),
            format!("x{}^{mu}", particle + 1),
        )
    }

    pub fn p(&self, particle: usize, mu: usize) -> ScalarField {
        ScalarField::coordinate(
            self.dim(),
            self.p_index(particle, mu),
            format!("p{}^{mu}", particle + 1),
        )
    }

    pub fn coordinates(&self) -> Vec<ScalarField> {
        (0..self.particles)
            .flat_map(|a| (0..4).map(move |mu| (a, mu)))
            .flat_map(|(a, mu)| [self.x(a, mu), self.p(a, mu)])
            .collect()
    }

    pub fn coord_names(&self) -> Vec<String> {
        (0..self.dim())
            .map(|i| {
                let (a, r) = (i / 8, i % 8);
                if r < 4 {
                    format!("x{}_{}", a + 1, r)
                } else {
                    format!("p{}_{}", a + 1, r - 4)
                }
            })
            .collect()
    }
}

/// `Σ g^{μμ} (∂_x f ∂_p g - ∂_p f ∂_x g)` from two gradients.
fn canonical_from_gradients(space: &PhaseSpace, df: &[Jet], dg: &[Jet]) -> Jet {
    let mut out = Jet::constant(0.0);
    for a in 0..space.particles {
        for mu in 0..4 {
            let (ix, ip) = (space.x_index(a, mu), space.p_index(a, mu));
            out += (df[ix] * dg[ip] - df[ip] * dg[ix]) * space.signature.diag[mu];
        }
    }
    out
}

fn grad(f: &ScalarField, z: &[Jet]) -> Vec<Jet> {
    jet_gradient(&|w: &[Jet]| f.eval_jet(w), z)
}

/// Canonical bracket with `{x^μ, p^ν} = g^{μν}`.
#[derive(Debug, Clone)]
pub struct CanonicalPb {
    pub space: PhaseSpace,
}

impl Bracket for CanonicalPb {
    fn arity(&self) -> usize {
        self.space.dim()
    }

    fn eval_jet(&self, f: &ScalarField, g: &ScalarField, z: &[Jet]) -> Option<Jet> {
        Some(canonical_from_gradients(
            &self.space,
            &grad(f, z),
            &grad(g, z),
        ))
    }
}

pub fn canonical_pb(
    space: &PhaseSpace,
    f: &ScalarField,
    g: &ScalarField,
    z: &[f64],
) -> Result<f64> {
    Ok(CanonicalPb {
        space: space.clone(),
    }
    .eval(f, g, z)?)
}

/// `J_{μν} = Σ_α (x_{αμ} p_{αν} - x_{αν} p_{αμ})` with lowered indices.
pub fn angular_generator(space: &PhaseSpace, mu: usize, nu: usize) -> ScalarField {
    let s = space.clone();
    ScalarField::new(space.dim(), format!("J{mu}{nu}"), move |z| {
        let g = &s.signature.diag;
        (0..s.particles)
            .map(|a| {
                let x = |m: usize| z[s.x_index(a, m)] * g[m];
                let p = |m: usize| z[s.p_index(a, m)] * g[m];
                x(mu) * p(nu) - x(nu) * p(mu)
            })
            .sum()
    })
}

/// `P_μ = Σ_α p_{αμ}` with lowered index.
pub fn momentum_generator(space: &PhaseSpace, mu: usize) -> ScalarField {
    let s = space.clone();
    ScalarField::new(space.dim(), format!("P{mu}"), move |z| {
        (0..s.particles).map(|a| z[s.p_index(a, mu)]).sum::<Jet>() * s.signature.diag[mu]
    })
}

/// The six `J_{μν}` with `μ < ν`, then the four `P_μ`.
pub fn poincare_generators(space: &PhaseSpace) -> Vec<ScalarField> {
    let mut out = Vec::with_capacity(10);
    for mu in 0..4 {
        for nu in mu + 1..4 {
            out.push(angular_generator(space, mu, nu));
        }
    }
    out.extend((0..4).map(|mu| momentum_generator(space, mu)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstraintRole {
    MassShell,
    Gauge,
}

type ConstraintFn = Arc<dyn Fn(&[Jet], f64) -> Jet + Send + Sync>;

#[derive(Clone)]
pub struct Constraint {
    pub label: String,
    pub tau_dependent: bool,
    pub role: ConstraintRole,
    f: ConstraintFn,
}

impl std::fmt::Debug for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Constraint({}, {:?})", self.label, self.role)
    }
}

impl Constraint {
    pub fn new(
        label: impl Into<String>,
        role: ConstraintRole,
        tau_dependent: bool,
        f: impl Fn(&[Jet], f64) -> Jet + Send + Sync + 'static,
    ) -> Self {
        Constraint {
            label: label.into(),
            tau_dependent,
            role,
            f: Arc::new(f),
        }
    }

    /// The constraint frozen at evolution parameter `tau`.
    pub fn at(&self, dim: usize, tau: f64) -> ScalarField {
        let f = self.f.clone();
        ScalarField::new(dim, self.label.clone(), move |z| f(z, tau))
    }

    pub fn value(&self, z: &[f64], tau: f64) -> f64 {
        let zj: Vec<Jet> = z.iter().map(|&v| Jet::constant(v)).collect();
        (self.f)(&zj, tau).value()
    }

    /// Explicit `∂/∂τ` by central difference; constraints here are affine in τ.
    pub fn tau_derivative(&self, z: &[f64], tau: f64) -> f64 {
        let h = 1e-4 * (1.0 + tau.abs());
        (self.value(z, tau + h) - self.value(z, tau - h)) / (2.0 * h)
    }

    /// Whether the declared τ-dependence agrees with a finite-difference probe.
    pub fn tau_flag_consistent(&self, z: &[f64], tau: f64) -> bool {
        (self.tau_derivative(z, tau).abs() > 1e-8) == self.tau_dependent
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub space: PhaseSpace,
    pub constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(space: PhaseSpace, constraints: Vec<Constraint>) -> Self {
        ConstraintSet { space, constraints }
    }

    pub fn fields(&self, tau: f64) -> Vec<ScalarField> {
        self.constraints
            .iter()
            .map(|c| c.at(self.space.dim(), tau))
            .collect()
    }

    pub fn values(&self, z: &[f64], tau: f64) -> Vec<f64> {
        self.constraints.iter().map(|c| c.value(z, tau)).collect()
    }

    pub fn violation(&self, z: &[f64], tau: f64) -> f64 {
        self.values(z, tau).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn indices(&self, role: ConstraintRole) -> Vec<usize> {
        (0..self.constraints.len())
            .filter(|&i| self.constraints[i].role == role)
            .collect()
    }

    fn gradients(&self, z: &[f64], tau: f64) -> Vec<Vec<Jet>> {
        let zj: Vec<Jet> = z.iter().map(|&v| Jet::constant(v)).collect();
        self.fields(tau).iter().map(|f| grad(f, &zj)).collect()
    }

    /// Pairwise canonical brackets `{v_a, v_b}` of all constraints, on or off the surface.
    pub fn classification(&self, z: &[f64], tau: f64) -> DMatrix<f64> {
        let g = self.gradients(z, tau);
        let k = g.len();
        DMatrix::from_fn(k, k, |a, b| {
            canonical_from_gradients(&self.space, &g[a], &g[b]).value()
        })
    }

    /// `{χ_α, K_i}` with gauge constraints as rows and mass shells as columns.
    pub fn gauge_block(&self, z: &[f64], tau: f64) -> DMatrix<f64> {
        let full = self.classification(z, tau);
        let (rows, cols) = (
            self.indices(ConstraintRole::Gauge),
            self.indices(ConstraintRole::MassShell),
        );
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| full[(rows[i], cols[j])])
    }

    pub fn dirac(&self, tau: f64) -> DiracBracket {
        DiracBracket {
            space: self.space.clone(),
            constraints: self.fields(tau),
        }
    }
}

/// Full pairwise constraint matrix at a point on the surface.
pub fn constraint_matrix(set: &ConstraintSet, z: &[f64], tau: f64) -> Result<DMatrix<f64>> {
    let violation = set.violation(z, tau);
    if violation > SURFACE_TOL {
        return Err(DiracError::OffSurface { violation });
    }
    Ok(set.classification(z, tau))
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.singular_values();
    let min = s.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        s.max() / min
    }
}

/// `{f, g} - Σ {f, v_a} (C⁻¹)_{ab} {v_b, g}` with `C_{ab} = {v_a, v_b}`,
/// using one linear solve per evaluation.
#[derive(Debug, Clone)]
pub struct DiracBracket {
    pub space: PhaseSpace,
    pub constraints: Vec<ScalarField>,
}

impl Bracket for DiracBracket {
    fn arity(&self) -> usize {
        self.space.dim()
    }

    fn eval_jet(&self, f: &ScalarField, g: &ScalarField, z: &[Jet]) -> Option<Jet> {
        let (df, dg) = (grad(f, z), grad(g, z));
        let dv: Vec<Vec<Jet>> = self.constraints.iter().map(|v| grad(v, z)).collect();
        let pb = |a: &[Jet], b: &[Jet]| canonical_from_gradients(&self.space, a, b);
        let c: Vec<Vec<Jet>> = dv
            .iter()
            .map(|a| dv.iter().map(|b| pb(a, b)).collect())
            .collect();
        let rhs: Vec<Jet> = dv.iter().map(|v| pb(v, &dg)).collect();
        let y = jet_solve(&c, &rhs)?;
        let correction: Jet = dv.iter().zip(&y).map(|(v, y)| pb(&df, v) * *y).sum();
        Some(pb(&df, &dg) - correction)
    }
}

fn check_invertible(set: &ConstraintSet, z: &[f64], tau: f64) -> Result<DMatrix<f64>> {
    let c = set.classification(z, tau);
    let cond = condition_number(&c);
    if cond >= MAX_CONDITION {
        return Err(DiracError::SingularConstraintMatrix { cond });
    }
    Ok(c)
}

pub fn dirac_bracket(
    set: &ConstraintSet,
    f: &ScalarField,
    g: &ScalarField,
    z: &[f64],
    tau: f64,
) -> Result<f64> {
    check_invertible(set, z, tau)?;
    Ok(set.dirac(tau).eval(f, g, z)?)
}

/// `V(ξ)` written over jets so that `V'` comes from differentiation.
#[derive(Clone)]
pub struct InteractionPotential {
    pub label: String,
    v: Arc<dyn Fn(Jet) -> Jet + Send + Sync>,
}

impl std::fmt::Debug for InteractionPotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "InteractionPotential({})", self.label)
    }
}

impl InteractionPotential {
    pub fn new(label: impl Into<String>, v: impl Fn(Jet) -> Jet + Send + Sync + 'static) -> Self {
        InteractionPotential {
            label: label.into(),
            v: Arc::new(v),
        }
    }

    pub fn zero() -> Self {
        InteractionPotential::new("0", |_| Jet::constant(0.0))
    }

    pub fn linear(lambda: f64) -> Self {
        InteractionPotential::new(format!("{lambda}ξ"), move |xi| xi * lambda)
    }

    pub fn value(&self, xi: f64) -> f64 {
        (self.v)(Jet::constant(xi)).value()
    }

    pub fn derivative(&self, xi: f64) -> f64 {
        (self.v)(Jet::seeded(xi, 0)).coeff(1)
    }

    /// `|V' - central difference of V|`.
    pub fn derivative_check(&self, xi: f64) -> f64 {
        let h = 1e-5 * (1.0 + xi.abs());
        let fd = (self.value(xi + h) - self.value(xi - h)) / (2.0 * h);
        (self.derivative(xi) - fd).abs()
    }

    pub fn eval_jet(&self, xi: Jet) -> Jet {
        (self.v)(xi)
    }
}

/// How the evolution parameter is tied to the two world lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TwoParticleGauge {
    /// `χ₁ = P·r`, `χ₂ = ½ P·(x₁ + x₂) - τ`.
    Dynamical,
    /// `χ₁ = x₁⁰ - x₂⁰`, `χ₂ = ½ (x₁⁰ + x₂⁰) - τ`.
    Kinematical,
}

#[derive(Debug, Clone)]
pub struct TwoParticleModel {
    pub m1: f64,
    pub m2: f64,
    pub potential: InteractionPotential,
    pub gauge: TwoParticleGauge,
    pub set: ConstraintSet,
}

fn mdot(a: &[Jet], b: &[Jet]) -> Jet {
    MetricSignature::minkowski().dot_jet(a, b)
}

/// Total momentum `P` and relative position `r = ½(x₁ - x₂)`.
fn pair_vectors(z: &[Jet]) -> (Vec<Jet>, Vec<Jet>, Vec<Jet>) {
    let total: Vec<Jet> = (0..4).map(|m| z[4 + m] + z[12 + m]).collect();
    let rel: Vec<Jet> = (0..4).map(|m| (z[m] - z[8 + m]) * 0.5).collect();
    let mid: Vec<Jet> = (0..4).map(|m| (z[m] + z[8 + m]) * 0.5).collect();
    (total, rel, mid)
}

/// `ξ = r² - (P·r)² / P²`, invariant under translations and Lorentz maps.
pub fn relative_invariant(z: &[Jet]) -> Jet {
    let (p, r, _) = pair_vectors(z);
    let pr = mdot(&p, &r);
    mdot(&r, &r) - pr * pr / mdot(&p, &p)
}

pub fn relative_invariant_field() -> ScalarField {
    ScalarField::new(16, "ξ", relative_invariant)
}

pub fn two_particle_model(m1: f64, m2: f64, potential: InteractionPotential) -> TwoParticleModel {
    two_particle_model_in_gauge(m1, m2, potential, TwoParticleGauge::Dynamical)
}

pub fn two_particle_model_in_gauge(
    m1: f64,
    m2: f64,
    potential: InteractionPotential,
    gauge: TwoParticleGauge,
) -> TwoParticleModel {
    let shell = |idx: usize, m: f64| {
        let v = potential.clone();
        Constraint::new(
            format!("K{}", idx + 1),
            ConstraintRole::MassShell,
            false,
            move |z, _| {
                let p = &z[8 * idx + 4..8 * idx + 8];
                mdot(p, p) - m * m + v.eval_jet(relative_invariant(z))
            },
        )
    };
    let gauges = match gauge {
        TwoParticleGauge::Dynamical => [
            Constraint::new("χ1", ConstraintRole::Gauge, false, |z, _| {
                let (p, r, _) = pair_vectors(z);
                mdot(&p, &r)
            }),
            Constraint::new("χ2", ConstraintRole::Gauge, true, |z, tau| {
                let (p, _, mid) = pair_vectors(z);
                mdot(&p, &mid) - tau
            }),
        ],
        TwoParticleGauge::Kinematical => [
            Constraint::new("χ1", ConstraintRole::Gauge, false, |z, _| z[0] - z[8]),
            Constraint::new("χ2", ConstraintRole::Gauge, true, |z, tau| {
                (z[0] + z[8]) * 0.5 - tau
            }),
        ],
    };
    let [g1, g2] = gauges;
    let set = ConstraintSet::new(PhaseSpace::new(2), vec![shell(0, m1), shell(1, m2), g1, g2]);
    TwoParticleModel {
        m1,
        m2,
        potential,
        gauge,
        set,
    }
}

/// Single free particle with `K = p² - m²` and `χ = x⁰ - τ`.
pub fn single_particle_time_gauge(m: f64) -> ConstraintSet {
    ConstraintSet::new(
        PhaseSpace::new(1),
        vec![
            Constraint::new("K", ConstraintRole::MassShell, false, move |z, _| {
                mdot(&z[4..8], &z[4..8]) - m * m
            }),
            Constraint::new("χ", ConstraintRole::Gauge, true, |z, tau| z[0] - tau),
        ],
    )
}

impl TwoParticleModel {
    /// Defaults used throughout the checks: `m₁ = 1`, `m₂ = 2`, `V = 0.1 ξ`.
    pub fn reference() -> Self {
        two_particle_model(1.0, 2.0, InteractionPotential::linear(0.1))
    }

    pub fn space(&self) -> &PhaseSpace {
        &self.set.space
    }

    /// The χ-versus-K block of the constraint matrix next to the printed
    /// closed forms, with `p⁴ = (P²)²`.
    pub fn printed_gauge_block(&self, z: &[f64]) -> DMatrix<f64> {
        let eta = MetricSignature::minkowski();
        let (p1, p2) = (&z[4..8], &z[12..16]);
        let total: Vec<f64> = (0..4).map(|m| p1[m] + p2[m]).collect();
        let r: Vec<f64> = (0..4).map(|m| 0.5 * (z[m] - z[8 + m])).collect();
        let zj: Vec<Jet> = z.iter().map(|&v| Jet::constant(v)).collect();
        let vp = self.potential.derivative(relative_invariant(&zj).value());
        let p4 = eta.dot(&total, &total).powi(2);
        let pr2 = eta.dot(&total, &r).powi(2);
        let (p11, p12, p22) = (eta.dot(p1, p1), eta.dot(p1, p2), eta.dot(p2, p2));
        DMatrix::from_row_slice(
            2,
            2,
            &[
                p11 + p12 + vp,
                p12 + p22 + 2.0 / p4 * vp,
                p11 + p12 + pr2 / p4,
                p12 + p22 + pr2 / p4,
            ],
        )
    }

    /// `(p₁² - p₂²) ((P·r)²/p⁴ - 2V'/p⁴)`.
    pub fn printed_determinant(&self, z: &[f64]) -> f64 {
        let eta = MetricSignature::minkowski();
        let (p1, p2) = (&z[4..8], &z[12..16]);
        let total: Vec<f64> = (0..4).map(|m| p1[m] + p2[m]).collect();
        let r: Vec<f64> = (0..4).map(|m| 0.5 * (z[m] - z[8 + m])).collect();
        let zj: Vec<Jet> = z.iter().map(|&v| Jet::constant(v)).collect();
        let vp = self.potential.derivative(relative_invariant(&zj).value());
        let p4 = eta.dot(&total, &total).powi(2);
        (eta.dot(p1, p1) - eta.dot(p2, p2)) * (eta.dot(&total, &r).powi(2) / p4 - 2.0 / p4 * vp)
    }
}

/// Random point on the two-particle constraint surface at `tau`: positions
/// and spatial momenta are drawn, the two energies solved by Newton to
/// `1e-12`, then the positions moved along `P` (which leaves ξ unchanged)
/// until both gauge constraints vanish.
pub fn sample_on_shell<R: Rng>(
    model: &TwoParticleModel,
    rng: &mut R,
    tau: f64,
) -> Result<Vec<f64>> {
    let fields = model.set.fields(tau);
    for _ in 0..100 {
        let mut z = vec![0.0; 16];
        for a in 0..2 {
            for mu in 0..4 {
                z[8 * a + mu] = rng.gen_range(-1.0..1.0);
            }
            for j in 1..4 {
                z[8 * a + 4 + j] = rng.gen_range(-0.6..0.6);
            }
        }
        if model.gauge == TwoParticleGauge::Kinematical {
            z[0] = tau;
            z[8] = tau;
        }
        for (a, m) in [(0usize, model.m1), (1, model.m2)] {
            let s: f64 = (5..8).map(|i| z[8 * a + i].powi(2)).sum();
            z[8 * a + 4] = (m * m + s).sqrt();
        }
        if solve_energies(&fields[..2], &mut z).is_none() {
            continue;
        }
        if model.gauge == TwoParticleGauge::Dynamical {
            let eta = MetricSignature::minkowski();
            let total: Vec<f64> = (0..4).map(|m| z[4 + m] + z[12 + m]).collect();
            let p2 = eta.dot(&total, &total);
            let r: Vec<f64> = (0..4).map(|m| 0.5 * (z[m] - z[8 + m])).collect();
            let c = eta.dot(&total, &r) / p2;
            for m in 0..4 {
                z[m] -= c * total[m];
                z[8 + m] += c * total[m];
            }
            let mid: Vec<f64> = (0..4).map(|m| 0.5 * (z[m] + z[8 + m])).collect();
            let d = (tau - eta.dot(&total, &mid)) / p2;
            for m in 0..4 {
                z[m] += d * total[m];
                z[8 + m] += d * total[m];
            }
        }
        if model.set.violation(&z, tau) < 1e-10 {
            return Ok(z);
        }
    }
    Err(DiracError::Sampling(
        "Newton on the energies did not converge".into(),
    ))
}

/// Newton iteration on `p₁⁰, p₂⁰` for the two mass shells.
fn solve_energies(shells: &[ScalarField], z: &mut [f64]) -> Option<()> {
    let idx = [4usize, 12];
    for _ in 0..60 {
        let k = DVector::from_iterator(2, shells.iter().map(|f| f.eval(z)));
        if k.amax() < 1e-12 {
            return (z[4] > 0.0 && z[12] > 0.0).then_some(());
        }
        let zj: Vec<Jet> = z.iter().map(|&v| Jet::constant(v)).collect();
        let grads: Vec<Vec<Jet>> = shells.iter().map(|f| grad(f, &zj)).collect();
        let jac = DMatrix::from_fn(2, 2, |i, j| grads[i][idx[j]].value());
        let step = jac.lu().solve(&k)?;
        for j in 0..2 {
            z[idx[j]] -= step[j];
        }
        if !z.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    None
}

/// `dz/dτ = Σ_i v_i {z, K_i}` with multipliers fixed by `dχ/dτ = 0`:
/// `Σ_i {χ_α, K_i} v_i = -∂χ_α/∂τ`.
pub fn constrained_velocity(set: &ConstraintSet, z: &[f64], tau: f64) -> Result<Vec<f64>> {
    let gauge = set.indices(ConstraintRole::Gauge);
    let shells = set.indices(ConstraintRole::MassShell);
    if gauge.len() != shells.len() {
        return Err(DiracError::InvalidParameter(format!(
            "{} gauge constraints for {} mass shells",
            gauge.len(),
            shells.len()
        )));
    }
    let grads = set.gradients(z, tau);
    let block = DMatrix::from_fn(gauge.len(), shells.len(), |i, j| {
        canonical_from_gradients(&set.space, &grads[gauge[i]], &grads[shells[j]]).value()
    });
    let cond = condition_number(&block);
    if cond >= MAX_CONDITION {
        return Err(DiracError::SingularConstraintMatrix { cond });
    }
    let rhs = DVector::from_iterator(
        gauge.len(),
        gauge
            .iter()
            .map(|&i| -set.constraints[i].tau_derivative(z, tau)),
    );
    let mult = block
        .lu()
        .solve(&rhs)
        .ok_or(DiracError::SingularConstraintMatrix { cond })?;
    let mut out = vec![0.0; set.space.dim()];
    for (j, &k) in shells.iter().enumerate() {
        // {z_a, K}: g^{μμ} ∂K/∂p for positions, -g^{μμ} ∂K/∂x for momenta
        for a in 0..set.space.particles {
            for mu in 0..4 {
                let g = set.space.signature.diag[mu];
                let (ix, ip) = (set.space.x_index(a, mu), set.space.p_index(a, mu));
                out[ix] += mult[j] * g * grads[k][ip].value();
                out[ip] -= mult[j] * g * grads[k][ix].value();
            }
        }
    }
    Ok(out)
}

/// Gauss-Newton projection back onto the constraint surface.
pub fn project_to_surface(set: &ConstraintSet, z: &mut [f64], tau: f64) -> Result<()> {
    for _ in 0..20 {
        let vals = DVector::from_vec(set.values(z, tau));
        if vals.amax() < 1e-13 {
            return Ok(());
        }
        let grads = set.gradients(z, tau);
        let jac = DMatrix::from_fn(grads.len(), z.len(), |i, j| grads[i][j].value());
        let jjt = &jac * jac.transpose();
        let y = jjt
            .lu()
            .solve(&vals)
            .ok_or(DiracError::SingularConstraintMatrix {
                cond: f64::INFINITY,
            })?;
        let step = jac.transpose() * y;
        for (zi, s) in z.iter_mut().zip(step.iter()) {
            *zi -= s;
        }
    }
    let violation = set.violation(z, tau);
    if violation < 1e-10 {
        Ok(())
    } else {
        Err(DiracError::ConstraintDrift { tau, violation })
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedFlow {
    pub trajectory: Trajectory,
    /// Largest constraint value seen at any recorded sample before projection.
    pub max_violation: f64,
    pub projections: usize,
}

/// Projection kicks in above this constraint drift.
pub const PROJECT_AT: f64 = 1e-9;
/// Drift beyond this is an error rather than something to project away.
pub const MAX_DRIFT: f64 = 1e-7;

/// Integrates the constrained evolution on a uniform grid of `segments`
/// pieces, checking constraint drift after each piece.
pub fn constrained_flow(
    set: &ConstraintSet,
    z0: &[f64],
    tau_span: (f64, f64),
    segments: usize,
    cfg: &IntegratorConfig,
) -> Result<ConstrainedFlow> {
    let (t0, t1) = tau_span;
    let violation = set.violation(z0, t0);
    if violation > SURFACE_TOL {
        return Err(DiracError::OffSurface { violation });
    }
    let s = set.clone();
    let sys = VectorFieldSystem::new(
        "constrained flow",
        set.space.coord_names(),
        false,
        move |tau, z| constrained_velocity(&s, z, tau).map_err(|e| FlowError::Rhs(e.to_string())),
    );
    let grid = crate::flow::uniform_grid(t0, t1, segments + 1);
    let mut z = z0.to_vec();
    let mut states = vec![z.clone()];
    let mut slopes = vec![sys.eval(t0, &z)?];
    let (mut max_violation, mut projections) = (0.0f64, 0);
    for w in grid.windows(2) {
        let traj = integrate(&sys, &z, w[0], w[1], cfg)?;
        z = traj.final_state().to_vec();
        let v = set.violation(&z, w[1]);
        max_violation = max_violation.max(v);
        if v > MAX_DRIFT {
            return Err(DiracError::ConstraintDrift {
                tau: w[1],
                violation: v,
            });
        }
        if v > PROJECT_AT {
            project_to_surface(set, &mut z, w[1])?;
            projections += 1;
        }
        slopes.push(sys.eval(w[1], &z)?);
        states.push(z.clone());
    }
    Ok(ConstrainedFlow {
        trajectory: Trajectory {
            times: grid,
            states,
            slopes,
            coord_names: set.space.coord_names(),
            config: *cfg,
        },
        max_violation,
        projections,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PositionTable {
    /// `entries[α][μ][ν] = {x_α^μ, x_α^ν}`.
    pub entries: Vec<[[f64; 4]; 4]>,
    pub max_abs: f64,
    pub antisymmetry_dev: f64,
}

/// Brackets among the positions of each particle under `bracket`.
pub fn position_noncommutativity<B: Bracket>(
    bracket: &B,
    space: &PhaseSpace,
    z: &[f64],
) -> Result<PositionTable> {
    let mut entries = Vec::new();
    let (mut max_abs, mut anti) = (0.0f64, 0.0f64);
    for a in 0..space.particles {
        let mut t = [[0.0; 4]; 4];
        for mu in 0..4 {
            for nu in 0..4 {
                t[mu][nu] = bracket.eval(&space.x(a, mu), &space.x(a, nu), z)?;
                max_abs = max_abs.max(t[mu][nu].abs());
            }
        }
        for mu in 0..4 {
            for nu in 0..4 {
                anti = anti.max((t[mu][nu] + t[nu][mu]).abs());
            }
        }
        entries.push(t);
    }
    Ok(PositionTable {
        entries,
        max_abs,
        antisymmetry_dev: anti,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ParticleWlc {
    pub residual: f64,
    pub delta_tau: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WlcReport {
    pub residual: f64,
    pub particles: Vec<ParticleWlc>,
}

/// `G = ½ ω^{αβ} J_{αβ} - a^μ P_μ`.
pub fn poincare_generator(space: &PhaseSpace, omega: &[[f64; 4]; 4], a: &[f64; 4]) -> ScalarField {
    let js: Vec<(f64, ScalarField)> = (0..4)
        .flat_map(|m| (m + 1..4).map(move |n| (m, n)))
        .map(|(m, n)| (omega[m][n], angular_generator(space, m, n)))
        .collect();
    let ps: Vec<(f64, ScalarField)> = (0..4)
        .map(|m| (a[m], momentum_generator(space, m)))
        .collect();
    ScalarField::new(space.dim(), "G", move |z| {
        let rot: Jet = js.iter().map(|(w, j)| j.eval_jet(z) * *w).sum();
        let tr: Jet = ps.iter().map(|(c, p)| p.eval_jet(z) * *c).sum();
        rot - tr
    })
}

/// World-line condition for an infinitesimal Poincaré map: per particle,
/// `{G, x^μ}_D - ω^{μν} x_ν - a^μ` is fitted by `δτ · dx^μ/dτ` in least
/// squares and the largest leftover component is the residual.
pub fn wlc_residual(
    set: &ConstraintSet,
    omega: &[[f64; 4]; 4],
    a: &[f64; 4],
    z: &[f64],
    tau: f64,
) -> Result<WlcReport> {
    for m in 0..4 {
        for n in 0..4 {
            if (omega[m][n] + omega[n][m]).abs() > 0.0 {
                return Err(DiracError::InvalidParameter(
                    "ω must be antisymmetric".into(),
                ));
            }
        }
    }
    check_invertible(set, z, tau)?;
    let space = &set.space;
    let eta = &space.signature.diag;
    let db = set.dirac(tau);
    let g = poincare_generator(space, omega, a);
    let vel = constrained_velocity(set, z, tau)?;
    let mut particles = Vec::new();
    for p in 0..space.particles {
        let mut r = [0.0; 4];
        let mut u = [0.0; 4];
        for mu in 0..4 {
            let lhs = db.eval(&g, &space.x(p, mu), z)?;
            let geometric: f64 = (0..4)
                .map(|nu| omega[mu][nu] * eta[nu] * z[space.x_index(p, nu)])
                .sum::<f64>()
                + a[mu];
            r[mu] = lhs - geometric;
            u[mu] = vel[space.x_index(p, mu)];
        }
        let uu: f64 = u.iter().map(|v| v * v).sum();
        let delta_tau = if uu > 0.0 {
            u.iter().zip(&r).map(|(u, r)| u * r).sum::<f64>() / uu
        } else {
            0.0
        };
        let residual = (0..4)
            .map(|m| (r[m] - delta_tau * u[m]).abs())
            .fold(0.0, f64::max);
        particles.push(ParticleWlc {
            residual,
            delta_tau,
        });
    }
    Ok(WlcReport {
        residual: particles.iter().map(|p| p.residual).fold(0.0, f64::max),
        particles,
    })
}

/// Random boost parameters `ω^{0i} = -ω^{i0}` with Frobenius norm `size`.
pub fn random_boost<R: Rng>(rng: &mut R, size: f64) -> [[f64; 4]; 4] {
    let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = (2.0 * b.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let mut w = [[0.0; 4]; 4];
    for i in 0..3 {
        w[0][i + 1] = b[i] * size / norm;
        w[i + 1][0] = -w[0][i + 1];
    }
    w
}

pub fn frobenius(w: &[[f64; 4]; 4]) -> f64 {
    w.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

/// Basis `x_0..x_3` followed by `ℓ_{μν}` for `μ < ν`.
pub const DEFORMED_DIM: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct DeformedPoincare {
    pub k: f64,
    /// `structure[a][b][c]` is the coefficient of `e_c` in `{e_a, e_b}`.
    pub structure: Vec<Vec<Vec<f64>>>,
}

pub fn lorentz_index(mu: usize, nu: usize) -> Option<(usize, f64)> {
    if mu == nu {
        return None;
    }
    let (a, b, s) = if mu < nu {
        (mu, nu, 1.0)
    } else {
        (nu, mu, -1.0)
    };
    let pos = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
        .iter()
        .position(|p| *p == (a, b))?;
    Some((4 + pos, s))
}

const LORENTZ_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Structure constants of `{x_ρ, x_σ} = ℓ_{ρσ}/K`, `{ℓ_{μν}, x_ρ} = η_{μρ} x_ν - η_{νρ} x_μ`
/// and the Lorentz algebra among the `ℓ`.
pub fn deformed_poincare(k: f64) -> Result<DeformedPoincare> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(DiracError::InvalidParameter(format!(
            "K must be positive, got {k}"
        )));
    }
    let eta = MetricSignature::minkowski().diag;
    let g = |a: usize, b: usize| if a == b { eta[a] } else { 0.0 };
    let mut c = vec![vec![vec![0.0; DEFORMED_DIM]; DEFORMED_DIM]; DEFORMED_DIM];
    let add_l = |v: &mut Vec<f64>, mu: usize, nu: usize, coef: f64| {
        if let Some((i, s)) = lorentz_index(mu, nu) {
            v[i] += s * coef;
        }
    };
    for rho in 0..4 {
        for sigma in 0..4 {
            add_l(&mut c[rho][sigma], rho, sigma, 1.0 / k);
        }
    }
    for (li, &(mu, nu)) in LORENTZ_PAIRS.iter().enumerate() {
        for rho in 0..4 {
            let mut v = vec![0.0; DEFORMED_DIM];
            v[nu] += g(mu, rho);
            v[mu] -= g(nu, rho);
            for d in 0..DEFORMED_DIM {
                c[4 + li][rho][d] = v[d];
                c[rho][4 + li][d] = -v[d];
            }
        }
        for (lj, &(r, s)) in LORENTZ_PAIRS.iter().enumerate() {
            let mut v = vec![0.0; DEFORMED_DIM];
            add_l(&mut v, nu, s, g(mu, r));
            add_l(&mut v, nu, r, -g(mu, s));
            add_l(&mut v, mu, s, -g(nu, r));
            add_l(&mut v, mu, r, g(nu, s));
            c[4 + li][4 + lj] = v;
        }
    }
    Ok(DeformedPoincare { k, structure: c })
}

impl DeformedPoincare {
    /// Max over all basis triples of the Jacobi sum, as a vector in the basis.
    pub fn jacobi_residual(&self) -> f64 {
        let c = &self.structure;
        let n = DEFORMED_DIM;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for cc in 0..n {
                    for e in 0..n {
                        let mut s = 0.0;
                        for d in 0..n {
                            s += c[b][cc][d] * c[a][d][e]
                                + c[cc][a][d] * c[b][d][e]
                                + c[a][b][d] * c[cc][d][e];
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Antisymmetry of the table.
    pub fn antisymmetry_dev(&self) -> f64 {
        let c = &self.structure;
        let mut worst = 0.0f64;
        for a in 0..DEFORMED_DIM {
            for b in 0..DEFORMED_DIM {
                for d in 0..DEFORMED_DIM {
                    worst = worst.max((c[a][b][d] + c[b][a][d]).abs());
                }
            }
        }
        worst
    }

    /// Coefficient of `ℓ_{ρσ}` in `{x_ρ, x_σ}`.
    pub fn position_coefficient(&self, rho: usize, sigma: usize) -> f64 {
        match lorentz_index(rho, sigma) {
            Some((i, s)) => s * self.structure[rho][sigma][i],
            None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn canonical_signs() {
        let s = PhaseSpace::new(1);
        let z = [0.1; 8];
        assert_eq!(canonical_pb(&s, &s.x(0, 0), &s.p(0, 0), &z).unwrap(), 1.0);
        assert_eq!(canonical_pb(&s, &s.x(0, 1), &s.p(0, 1), &z).unwrap(), -1.0);
        for mu in 0..4 {
            for nu in 0..4 {
                assert_eq!(canonical_pb(&s, &s.x(0, mu), &s.x(0, nu), &z).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn lorentz_algebra_structure_constant() {
        // {J01, J12} = -η11 J02 = J02 from the Lorentz pattern
        let s = PhaseSpace::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let z = random_point(&mut rng, 16);
            let lhs = canonical_pb(
                &s,
                &angular_generator(&s, 0, 1),
                &angular_generator(&s, 1, 2),
                &z,
            )
            .unwrap();
            let rhs = angular_generator(&s, 0, 2).eval(&z);
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn generators_are_antisymmetric() {
        let s = PhaseSpace::new(2);
        let z: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        for m in 0..4 {
            for n in 0..4 {
                let a = angular_generator(&s, m, n).eval(&z);
                let b = angular_generator(&s, n, m).eval(&z);
                assert_eq!(a, -b);
            }
        }
    }

    #[test]
    fn single_particle_gauge_entry() {
        // K = p² - m², χ = p·x - τ: {χ, K} = 2p²
        let s = PhaseSpace::new(1);
        let set = ConstraintSet::new(
            s.clone(),
            vec![
                Constraint::new("K", ConstraintRole::MassShell, false, |z, _| {
                    mdot(&z[4..8], &z[4..8]) - 1.0
                }),
                Constraint::new("χ", ConstraintRole::Gauge, true, |z, tau| {
                    mdot(&z[4..8], &z[..4]) - tau
                }),
            ],
        );
        let z = [0.0, 0.0, -0.2, 0.1, 2f64.sqrt(), 1.0, 0.0, 0.0];
        let m = constraint_matrix(&set, &z, 0.0).unwrap();
        assert!((m[(1, 0)] - 2.0).abs() < 1e-12);
        assert!(set
            .constraints
            .iter()
            .all(|c| c.tau_flag_consistent(&z, 0.0)));
        assert!(matches!(
            constraint_matrix(&set, &z, 1.0),
            Err(DiracError::OffSurface { .. })
        ));
    }

    #[test]
    fn single_particle_dirac_bracket() {
        let set = single_particle_time_gauge(1.0);
        let z = [
            0.5,
            0.3,
            -0.2,
            0.1,
            (1.0f64 + 0.09 + 0.01).sqrt(),
            0.3,
            0.1,
            0.0,
        ];
        let s = &set.space;
        assert!(
            (dirac_bracket(&set, &s.x(0, 1), &s.p(0, 1), &z, 0.5).unwrap() + 1.0).abs() < 1e-12
        );
        for f in s.coordinates() {
            for c in set.fields(0.5) {
                assert!(dirac_bracket(&set, &f, &c, &z, 0.5).unwrap().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_particle_flow_is_straight() {
        let set = single_particle_time_gauge(1.0);
        let z0 = [
            0.0,
            0.3,
            -0.2,
            0.1,
            (1.0f64 + 0.25 + 0.01).sqrt(),
            0.5,
            0.1,
            0.0,
        ];
        let flow =
            constrained_flow(&set, &z0, (0.0, 2.0), 20, &IntegratorConfig::default()).unwrap();
        let zf = flow.trajectory.final_state();
        for j in 1..4 {
            assert!((zf[j] - (z0[j] + 2.0 * z0[4 + j] / z0[4])).abs() < 1e-9);
        }
        assert!((zf[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn potential_derivative() {
        let v = InteractionPotential::new("ξ³", |x| x * x * x);
        assert!((v.derivative(0.5) - 0.75).abs() < 1e-15);
        assert!(v.derivative_check(0.5) < 1e-6);
        assert_eq!(InteractionPotential::linear(0.1).derivative(3.0), 0.1);
    }

    #[test]
    fn on_shell_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for gauge in [TwoParticleGauge::Dynamical, TwoParticleGauge::Kinematical] {
            let model =
                two_particle_model_in_gauge(1.0, 2.0, InteractionPotential::linear(0.1), gauge);
            for _ in 0..5 {
                let z = sample_on_shell(&model, &mut rng, 0.3).unwrap();
                assert!(model.set.violation(&z, 0.3) < 1e-10);
            }
        }
    }

    #[test]
    fn free_mass_shells_commute_identically() {
        let model = two_particle_model(1.0, 2.0, InteractionPotential::zero());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = random_point(&mut rng, 16);
        let f = model.set.fields(0.0);
        assert_eq!(canonical_pb(model.space(), &f[0], &f[1], &z).unwrap(), 0.0);
    }

    #[test]
    fn interacting_mass_shells_commute() {
        let model = TwoParticleModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..5 {
            let z = random_point(&mut rng, 16);
            let f = model.set.fields(0.0);
            assert!(canonical_pb(model.space(), &f[0], &f[1], &z).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn relative_invariant_is_poincare_invariant() {
        let space = PhaseSpace::new(2);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut z = random_point(&mut rng, 16);
        z[4] = 3.0;
        z[12] = 3.0;
        for g in poincare_generators(&space) {
            assert!(
                canonical_pb(&space, &relative_invariant_field(), &g, &z)
                    .unwrap()
                    .abs()
                    < 1e-9
            );
        }
    }

    #[test]
    fn gauge_block_first_principles() {
        // {χ₁,K₁} = P·p₁, {χ₁,K₂} = -P·p₂, {χ₂,K₁} = P·p₁, {χ₂,K₂} = P·p₂
        let model = TwoParticleModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let z = sample_on_shell(&model, &mut rng, 0.0).unwrap();
        let eta = MetricSignature::minkowski();
        let total: Vec<f64> = (0..4).map(|m| z[4 + m] + z[12 + m]).collect();
        let (pp1, pp2) = (eta.dot(&total, &z[4..8]), eta.dot(&total, &z[12..16]));
        let b = model.set.gauge_block(&z, 0.0);
        let expect = DMatrix::from_row_slice(2, 2, &[pp1, -pp2, pp1, pp2]);
        assert!((b - expect).amax() < 1e-10);
    }

    #[test]
    fn noncommuting_positions() {
        let model = TwoParticleModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let z = sample_on_shell(&model, &mut rng, 0.0).unwrap();
        let t = position_noncommutativity(&model.set.dirac(0.0), model.space(), &z).unwrap();
        assert!(t.max_abs > 1e-6);
        assert!(t.antisymmetry_dev < 1e-12);
        let free = position_noncommutativity(
            &CanonicalPb {
                space: model.space().clone(),
            },
            model.space(),
            &z,
        )
        .unwrap();
        assert_eq!(free.max_abs, 0.0);
    }

    #[test]
    fn boosts_satisfy_wlc_in_dynamical_gauge() {
        let model = TwoParticleModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let z = sample_on_shell(&model, &mut rng, 0.0).unwrap();
        let w = random_boost(&mut rng, 1e-4);
        let r = wlc_residual(&model.set, &w, &[0.0; 4], &z, 0.0).unwrap();
        assert!(r.residual < 1e-6 * frobenius(&w), "{r:?}");
        let r = wlc_residual(
            &model.set,
            &[[0.0; 4]; 4],
            &[1e-4, 2e-4, -1e-4, 0.5e-4],
            &z,
            0.0,
        )
        .unwrap();
        assert!(r.residual < 1e-10, "{r:?}");
    }

    #[test]
    fn deformed_algebra() {
        for k in [0.1, 1.0, 100.0] {
            let d = deformed_poincare(k).unwrap();
            assert!(d.jacobi_residual() < 1e-12);
            assert_eq!(d.antisymmetry_dev(), 0.0);
            assert_eq!(d.position_coefficient(0, 2), 1.0 / k);
        }
        let d = deformed_poincare(1.0).unwrap();
        // {ℓ01, x0} = η00 x1
        assert_eq!(d.structure[4][0][1], 1.0);
        assert!(deformed_poincare(0.0).is_err());
        assert!(deformed_poincare(1e12).unwrap().position_coefficient(1, 2) < 1e-11);
    }
}

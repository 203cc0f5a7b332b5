//! Worked classical reductions: radial motions, Calogero-Moser from free
//! symmetric-matrix motion, the rotation quotient and the Riccati equation
//! as a projective reduction of a linear system.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use nalgebra::{Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::calc::{Jet, ScalarField, VectorFieldFn};
use crate::flow::{
    integrate_on_grid, second_order_lift, uniform_grid, FlowError, IntegratorConfig, Trajectory,
    VectorFieldSystem,
};
use crate::reduce::{
    InvariantSurface, QuotientMap, ReductionScenario, ReductionTolerances, DEFAULT_GRID_POINTS,
    DEFAULT_PAIR_COUNT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("eigenvalues coincide at t = {t}")]
    DegenerateSpectrum { t: f64 },
    #[error("state reached the excluded origin at t = {t}")]
    OriginExcluded { t: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

const XYZ: [&str; 3] = ["x", "y", "z"];

pub fn free_particle_3d() -> VectorFieldSystem {
    second_order_lift("free particle", &XYZ, |_, _, _| Ok(vec![0.0; 3]), true)
}

/// The free flow as a differentiable field on `(r, v)`.
pub fn free_flow_field() -> VectorFieldFn {
    VectorFieldFn::new(6, "free flow", |s| {
        let mut out = s[3..6].to_vec();
        out.extend([Jet::constant(0.0); 3]);
        out
    })
}

fn cross_jet(a: &[Jet], b: &[Jet]) -> [Jet; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot_jet(a: &[Jet], b: &[Jet]) -> Jet {
    a.iter().zip(b).map(|(p, q)| *p * *q).sum()
}

/// Component `i` of `r ∧ v` on the 6-dimensional state.
pub fn angular_momentum(i: usize) -> ScalarField {
    ScalarField::new(6, format!("L{i}"), move |s| {
        cross_jet(&s[0..3], &s[3..6])[i]
    })
}

pub fn angular_momentum_sq() -> ScalarField {
    ScalarField::new(6, "|r^v|^2", |s| {
        let l = cross_jet(&s[0..3], &s[3..6]);
        dot_jet(&l, &l)
    })
}

pub fn speed_sq() -> ScalarField {
    ScalarField::new(6, "v.v", |s| dot_jet(&s[3..6], &s[3..6]))
}

pub fn radius_sq() -> ScalarField {
    ScalarField::new(6, "r.r", |s| dot_jet(&s[0..3], &s[0..3]))
}

pub fn radial_vel() -> ScalarField {
    ScalarField::new(6, "r_dot", |s| {
        dot_jet(&s[0..3], &s[3..6]) / dot_jet(&s[0..3], &s[0..3]).sqrt()
    })
}

pub fn radius() -> ScalarField {
    ScalarField::new(6, "r", |s| dot_jet(&s[0..3], &s[0..3]).sqrt())
}

/// `r'' = l^2 / r^3`.
pub fn radial_fixed_l(l: f64) -> VectorFieldSystem {
    let l2 = l * l;
    second_order_lift(
        "radial, fixed angular momentum",
        &["r"],
        move |q, _, _| Ok(vec![l2 / q[0].powi(3)]),
        true,
    )
}

/// `r'' = 2E/r - r'^2/r`.
pub fn radial_fixed_energy(energy: f64) -> VectorFieldSystem {
    second_order_lift(
        "radial, fixed energy",
        &["r"],
        move |q, v, _| Ok(vec![(2.0 * energy - v[0] * v[0]) / q[0]]),
        true,
    )
}

/// `r'' = (α k^2 + (1-α)(2E - r'^2) r^2) / r^3`, with `k` entering squared.
pub fn radial_convex(alpha: f64, k: f64, energy: f64) -> Result<VectorFieldSystem, CatalogError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CatalogError::InvalidParameter(format!(
            "alpha = {alpha} outside [0, 1]"
        )));
    }
    Ok(second_order_lift(
        "radial, convex combination",
        &["r"],
        move |q, v, _| {
            let r = q[0];
            Ok(vec![
                (alpha * k * k + (1.0 - alpha) * (2.0 * energy - v[0] * v[0]) * r * r) / r.powi(3),
            ])
        },
        true,
    ))
}

/// `r'' = k^2/(r t^2) + 2 r'/t - 1/(r t^2) - r'^2/r`, undefined at `t = 0`.
pub fn radial_time_dependent(k: f64) -> VectorFieldSystem {
    second_order_lift(
        "radial, time-dependent surface",
        &["r"],
        move |q, v, t| {
            if t == 0.0 {
                return Err(FlowError::SingularTime { t });
            }
            let (r, rd) = (q[0], v[0]);
            Ok(vec![
                k * k / (r * t * t) + 2.0 * rd / t - 1.0 / (r * t * t) - rd * rd / r,
            ])
        },
        false,
    )
}

/// The same reduction with the angular speed eliminated through
/// `|r - v t|^2 = k^2` term by term:
/// `r'' = (k^2 - r^2)/(r t^2) + 2r'/t - r'^2/r`. Agrees with
/// [`radial_time_dependent`] only where `r = 1`.
pub fn radial_time_dependent_derived(k: f64) -> VectorFieldSystem {
    second_order_lift(
        "radial, time-dependent surface (derived)",
        &["r"],
        move |q, v, t| {
            if t == 0.0 {
                return Err(FlowError::SingularTime { t });
            }
            let (r, rd) = (q[0], v[0]);
            Ok(vec![
                (k * k - r * r) / (r * t * t) + 2.0 * rd / t - rd * rd / r,
            ])
        },
        false,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeDependentReport {
    pub k: f64,
    /// Largest radius error of [`radial_time_dependent`]; infinite if its
    /// integration broke down.
    pub printed_dev: f64,
    pub derived_dev: f64,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub exact: Vec<f64>,
    #[serde(skip)]
    pub printed: Vec<f64>,
    #[serde(skip)]
    pub derived: Vec<f64>,
}

/// Free motion `r(t) = r0 + v t` observed through its radius, against both
/// time-dependent radial equations started from the matched data at
/// `t_span.0`. `k = |r0|` is what `|r - v t|` conserves.
pub fn time_dependent_consistency(
    r0: [f64; 3],
    v: [f64; 3],
    t_span: (f64, f64),
    samples: usize,
    cfg: &IntegratorConfig,
) -> Result<TimeDependentReport, CatalogError> {
    let (r0, v) = (Vector3::from(r0), Vector3::from(v));
    let k = r0.norm();
    let grid = uniform_grid(t_span.0, t_span.1, samples.max(2));
    let exact: Vec<f64> = grid.iter().map(|t| (r0 + v * *t).norm()).collect();
    let start = r0 + v * t_span.0;
    let x0 = [start.norm(), start.dot(&v) / start.norm()];
    let radii = |sys: VectorFieldSystem| -> Vec<f64> {
        match integrate_on_grid(&sys, &x0, &grid, cfg) {
            Ok(states) => states.iter().map(|s| s[0]).collect(),
            Err(_) => Vec::new(),
        }
    };
    let dev = |rs: &[f64]| {
        if rs.len() != exact.len() {
            return f64::INFINITY;
        }
        rs.iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    let printed = radii(radial_time_dependent(k));
    let derived = radii(radial_time_dependent_derived(k));
    Ok(TimeDependentReport {
        k,
        printed_dev: dev(&printed),
        derived_dev: dev(&derived),
        times: grid,
        exact,
        printed,
        derived,
    })
}

/// Free motion of a symmetric 2x2 matrix `[[x1, x2/√2], [x2/√2, x3]]`.
pub fn matrix_free_symmetric() -> VectorFieldSystem {
    second_order_lift(
        "free symmetric matrix",
        &["x1", "x2", "x3"],
        |_, _, _| Ok(vec![0.0; 3]),
        true,
    )
}

/// Entries of `X` and `Ẋ` from the 6-dimensional matrix state.
pub fn matrix_of(s: &[f64]) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let x = [[s[0], s[1] / SQRT_2], [s[1] / SQRT_2, s[2]]];
    let xd = [[s[3], s[4] / SQRT_2], [s[4] / SQRT_2, s[5]]];
    (x, xd)
}

/// `M = [X, Ẋ]` as a plain matrix.
pub fn matrix_commutator(s: &[f64]) -> [[f64; 2]; 2] {
    let (x, xd) = matrix_of(s);
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                m[i][j] += x[i][k] * xd[k][j] - xd[i][k] * x[k][j];
            }
        }
    }
    m
}

/// Coefficient `l3` with `M = l3 α`, `α = [[0, 1], [-1, 0]]`.
pub fn commutator_coefficient() -> ScalarField {
    ScalarField::new(6, "l3", |s| {
        ((s[0] * s[4] - s[3] * s[1]) + (s[1] * s[5] - s[4] * s[2])) / SQRT_2
    })
}

/// The coupling invariant `½ Tr(M α) = -l3`.
pub fn coupling_invariant() -> ScalarField {
    ScalarField::new(6, "g", |s| {
        -(((s[0] * s[4] - s[3] * s[1]) + (s[1] * s[5] - s[4] * s[2])) / SQRT_2)
    })
}

fn spectrum_jet(s: &[Jet]) -> (Jet, Jet, Jet, Jet) {
    let mean = (s[0] + s[2]) * 0.5;
    let half = (s[0] - s[2]) * 0.5;
    let d = (half * half + s[1] * s[1] * 0.5).sqrt();
    let mean_dot = (s[3] + s[5]) * 0.5;
    let d_dot = (half * (s[3] - s[5]) * 0.5 + s[1] * s[4] * 0.5) / d;
    (mean - d, mean + d, mean_dot - d_dot, mean_dot + d_dot)
}

/// Ordered eigenvalues and their velocities, `(q1, q2, q1', q2')`, `q1 < q2`.
pub fn eigen_quotient() -> QuotientMap {
    let mk = |i: usize, name: &str| {
        ScalarField::new(6, name, move |s| {
            let e = spectrum_jet(s);
            [e.0, e.1, e.2, e.3][i]
        })
    };
    QuotientMap::new(vec![
        mk(0, "q1"),
        mk(1, "q2"),
        mk(2, "q1_dot"),
        mk(3, "q2_dot"),
    ])
}

/// Matrix state with spectrum `q`, eigenvalue velocities `qd`, rotation angle
/// `phi` and coupling `g`.
pub fn matrix_state_from_spectrum(q: [f64; 2], qd: [f64; 2], phi: f64, g: f64) -> Vec<f64> {
    let (c, s) = (phi.cos(), phi.sin());
    let rot = [[c, s], [-s, c]];
    let gap = q[1] - q[0];
    let phid = g / (gap * gap);
    let diag = [[q[0], 0.0], [0.0, q[1]]];
    let vel = [[qd[0], phid * gap], [phid * gap, qd[1]]];
    let conj = |a: [[f64; 2]; 2]| {
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        out[i][j] += rot[i][k] * a[k][l] * rot[j][l];
                    }
                }
            }
        }
        out
    };
    let (x, xd) = (conj(diag), conj(vel));
    vec![
        x[0][0],
        x[0][1] * SQRT_2,
        x[1][1],
        xd[0][0],
        xd[0][1] * SQRT_2,
        xd[1][1],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenSample {
    pub t: f64,
    pub q1: f64,
    pub q2: f64,
    pub phi: f64,
    pub phi_dot: f64,
}

impl EigenSample {
    /// `φ' (q2 - q1)^2`.
    pub fn coupling(&self) -> f64 {
        self.phi_dot * (self.q2 - self.q1).powi(2)
    }
}

/// Eigenvalue branches followed by nearest-neighbour continuation, with the
/// rotation angle unwrapped to a continuous branch.
pub fn eigen_decompose_tracked(traj: &Trajectory) -> Result<Vec<EigenSample>, CatalogError> {
    let mut out: Vec<EigenSample> = Vec::with_capacity(traj.len());
    let mut two_phi_prev = 0.0;
    for (&t, s) in traj.times.iter().zip(&traj.states) {
        let mean = 0.5 * (s[0] + s[2]);
        let d = (0.25 * (s[0] - s[2]).powi(2) + 0.5 * s[1] * s[1]).sqrt();
        if 2.0 * d < 1e-10 {
            return Err(CatalogError::DegenerateSpectrum { t });
        }
        let (lo, hi) = (mean - d, mean + d);
        let (q1, q2) = match out.last() {
            None => (lo, hi),
            Some(p) => {
                if (p.q1 - lo).abs() + (p.q2 - hi).abs() <= (p.q1 - hi).abs() + (p.q2 - lo).abs() {
                    (lo, hi)
                } else {
                    (hi, lo)
                }
            }
        };
        let gap = q2 - q1;
        let (cc, ss) = ((s[2] - s[0]) / gap, SQRT_2 * s[1] / gap);
        let mut two_phi = ss.atan2(cc);
        if !out.is_empty() {
            while two_phi - two_phi_prev > PI {
                two_phi -= 2.0 * PI;
            }
            while two_phi - two_phi_prev < -PI {
                two_phi += 2.0 * PI;
            }
        }
        two_phi_prev = two_phi;
        let (c, sn) = (s[2] - s[0], SQRT_2 * s[1]);
        let (cd, sd) = (s[5] - s[3], SQRT_2 * s[4]);
        let phi_dot = 0.5 * (c * sd - sn * cd) / (c * c + sn * sn);
        out.push(EigenSample {
            t,
            q1,
            q2,
            phi: 0.5 * two_phi,
            phi_dot,
        });
    }
    Ok(out)
}

/// Two-body Calogero-Moser: `q1'' = -2g^2/(q2-q1)^3`, `q2'' = +2g^2/(q2-q1)^3`.
pub fn calogero_two_body(g: f64) -> VectorFieldSystem {
    let g2 = g * g;
    second_order_lift(
        "Calogero-Moser, two bodies",
        &["q1", "q2"],
        move |q, _, _| {
            let f = 2.0 * g2 / (q[1] - q[0]).powi(3);
            Ok(vec![-f, f])
        },
        true,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct CalogeroReport {
    /// Coupling fixed from the initial matrix data.
    pub coupling: f64,
    /// Largest spread of the coupling along the tracked eigen-decomposition.
    pub coupling_drift: f64,
    pub max_dev: f64,
    pub samples: usize,
    /// First grid time with `|q2 - q1|` below the cutoff, if any.
    pub stopped_at: Option<f64>,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub eigen: Vec<[f64; 2]>,
    #[serde(skip)]
    pub calogero: Vec<[f64; 2]>,
}

/// Eigenvalues of free symmetric-matrix motion against the two-body
/// Calogero-Moser flow whose coupling is read off the initial data. The
/// comparison stops once the eigenvalue gap drops below `min_gap`.
pub fn calogero_equivalence(
    x0: &[f64],
    t_end: f64,
    samples: usize,
    min_gap: f64,
    cfg: &IntegratorConfig,
) -> Result<CalogeroReport, CatalogError> {
    let grid = uniform_grid(0.0, t_end, samples.max(2));
    let matrix = matrix_free_symmetric();
    let states = integrate_on_grid(&matrix, x0, &grid, cfg)?;
    let slopes = states
        .iter()
        .map(|s| matrix.eval(0.0, s))
        .collect::<Result<Vec<_>, _>>()?;
    let traj = Trajectory {
        times: grid.clone(),
        states,
        slopes,
        coord_names: matrix.coord_names().to_vec(),
        config: *cfg,
    };
    let eig = eigen_decompose_tracked(&traj)?;
    let g = coupling_invariant().eval(x0);
    let start = &eig[0];
    let q0 = eigen_quotient().eval(x0);
    let reduced = calogero_two_body(g);
    let cal = integrate_on_grid(&reduced, &[start.q1, start.q2, q0[2], q0[3]], &grid, cfg)?;
    let mut report = CalogeroReport {
        coupling: g,
        coupling_drift: 0.0,
        max_dev: 0.0,
        samples: 0,
        stopped_at: None,
        times: Vec::new(),
        eigen: Vec::new(),
        calogero: Vec::new(),
    };
    for (e, c) in eig.iter().zip(&cal) {
        if (e.q2 - e.q1).abs() < min_gap {
            report.stopped_at = Some(e.t);
            break;
        }
        report.max_dev = report
            .max_dev
            .max((e.q1 - c[0]).abs())
            .max((e.q2 - c[1]).abs());
        report.coupling_drift = report.coupling_drift.max((e.coupling() - g).abs());
        report.samples += 1;
        report.times.push(e.t);
        report.eigen.push([e.q1, e.q2]);
        report.calogero.push([c[0], c[1]]);
    }
    Ok(report)
}

pub type CentralForce = Arc<dyn Fn(&[f64; 3], &[f64; 3]) -> [f64; 3] + Send + Sync>;

/// Rotation-quotient dynamics on `(r.r, v.v, r.v)`; the force is evaluated at
/// the representative `r = (√ξ1, 0, 0)`, `v` in the xy-plane.
pub fn so3_reduced(force: CentralForce) -> VectorFieldSystem {
    VectorFieldSystem::autonomous("rotation quotient", &["xi1", "xi2", "xi3"], move |xi| {
        let rho = xi[0].sqrt();
        let vr = xi[2] / rho;
        let vt = (xi[1] - vr * vr).max(0.0).sqrt();
        let r = [rho, 0.0, 0.0];
        let v = [vr, vt, 0.0];
        let f = force(&r, &v);
        let vf = v[0] * f[0] + v[1] * f[1] + v[2] * f[2];
        let rf = r[0] * f[0];
        vec![2.0 * xi[2], 2.0 * vf, xi[1] + rf]
    })
}

pub fn zero_force() -> CentralForce {
    Arc::new(|_, _| [0.0; 3])
}

/// The free-particle system driven by a force field.
pub fn forced_particle_3d(force: CentralForce) -> VectorFieldSystem {
    second_order_lift(
        "forced particle",
        &XYZ,
        move |q, v, _| {
            let f = force(&[q[0], q[1], q[2]], &[v[0], v[1], v[2]]);
            Ok(f.to_vec())
        },
        true,
    )
}

pub fn rotation_quotient() -> QuotientMap {
    QuotientMap::new(vec![
        radius_sq(),
        speed_sq(),
        ScalarField::new(6, "r.v", |s| dot_jet(&s[0..3], &s[3..6])),
    ])
}

/// `ξ' = c + 2bξ - aξ^2`.
pub fn riccati_scalar(a: f64, b: f64, c: f64) -> VectorFieldSystem {
    VectorFieldSystem::autonomous("Riccati", &["xi"], move |x| {
        vec![c + 2.0 * b * x[0] - a * x[0] * x[0]]
    })
}

pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Riccati equation with time-dependent coefficients.
pub fn riccati_scalar_tv(a: Coefficient, b: Coefficient, c: Coefficient) -> VectorFieldSystem {
    VectorFieldSystem::new(
        "Riccati (time-dependent)",
        vec!["xi".into()],
        false,
        move |t, x| Ok(vec![c(t) + 2.0 * b(t) * x[0] - a(t) * x[0] * x[0]]),
    )
}

/// `(x', y') = (bx + cy, ax - by)`.
pub fn linear_2d(a: f64, b: f64, c: f64) -> VectorFieldSystem {
    VectorFieldSystem::autonomous("linear planar", &["x", "y"], move |s| {
        vec![b * s[0] + c * s[1], a * s[0] - b * s[1]]
    })
}

pub fn linear_2d_field(a: f64, b: f64, c: f64) -> VectorFieldFn {
    VectorFieldFn::new(2, "linear planar", move |s| {
        vec![s[0] * b + s[1] * c, s[0] * a - s[1] * b]
    })
}

pub fn euler_field_2d() -> VectorFieldFn {
    VectorFieldFn::new(2, "dilation", |s| vec![s[0], s[1]])
}

/// Coefficients `(a, b, c)` of the Riccati equation obeyed by `ζ = y/x`.
pub fn zeta_chart_coefficients(a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    (c, -b, a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProjectiveChart {
    /// `ξ = x / y`
    Xi,
    /// `ζ = y / x`
    Zeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChartSwitch {
    pub t: f64,
    pub to: ProjectiveChart,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectedPath {
    pub times: Vec<f64>,
    pub charts: Vec<ProjectiveChart>,
    pub values: Vec<f64>,
    pub switches: Vec<ChartSwitch>,
}

/// Leave a chart only once the other coordinate dominates by this factor.
pub const CHART_HYSTERESIS: f64 = 1.05;

/// Projects a planar trajectory to the projective line, choosing `ξ` while
/// `|y| >= |x|` and `ζ` otherwise, with a hysteresis band.
pub fn project_projective(
    times: &[f64],
    states: &[Vec<f64>],
) -> Result<ProjectedPath, CatalogError> {
    let mut path = ProjectedPath {
        times: times.to_vec(),
        charts: Vec::with_capacity(times.len()),
        values: Vec::with_capacity(times.len()),
        switches: Vec::new(),
    };
    let mut chart: Option<ProjectiveChart> = None;
    for (&t, s) in times.iter().zip(states) {
        let (x, y) = (s[0], s[1]);
        if x == 0.0 && y == 0.0 {
            return Err(CatalogError::OriginExcluded { t });
        }
        let next = match chart {
            None => {
                if y.abs() >= x.abs() {
                    ProjectiveChart::Xi
                } else {
                    ProjectiveChart::Zeta
                }
            }
            Some(ProjectiveChart::Xi) if x.abs() > CHART_HYSTERESIS * y.abs() => {
                ProjectiveChart::Zeta
            }
            Some(ProjectiveChart::Zeta) if y.abs() > CHART_HYSTERESIS * x.abs() => {
                ProjectiveChart::Xi
            }
            Some(c) => c,
        };
        if chart.is_some_and(|c| c != next) {
            path.switches.push(ChartSwitch { t, to: next });
        }
        chart = Some(next);
        path.charts.push(next);
        path.values.push(match next {
            ProjectiveChart::Xi => x / y,
            ProjectiveChart::Zeta => y / x,
        });
    }
    Ok(path)
}

pub fn projective_ratio() -> ScalarField {
    ScalarField::new(2, "x/y", |s| s[0] / s[1])
}

/// A reduction scenario with its default initial state and time span.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub scenario: ReductionScenario,
    pub default_x0: Vec<f64>,
    pub t_span: (f64, f64),
    pub notes: String,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    let axis = Unit::new_normalize(unit_vector(rng));
    Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..2.0 * PI))
}

/// Radial data `(ρ, ρ', transverse speed)` placed along a random orthonormal pair.
fn place_radial(rng: &mut ChaCha8Rng, rho: f64, rdot: f64, vt: f64) -> Vec<f64> {
    let n = unit_vector(rng);
    let e = n.cross(&unit_vector(rng)).normalize();
    let r = n * rho;
    let v = n * rdot + e * vt;
    vec![r[0], r[1], r[2], v[0], v[1], v[2]]
}

fn radial_quotient() -> QuotientMap {
    QuotientMap::new(vec![radius(), radial_vel()])
}

pub fn radial_l_entry(seed: u64) -> CatalogEntry {
    let x0 = vec![1.0, 0.0, 0.0, 0.3, 1.0, 0.0];
    let l = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut surface_samples = Vec::new();
    let mut pair_samples = Vec::new();
    for _ in 0..DEFAULT_PAIR_COUNT {
        let rho = rng.gen_range(0.5..2.0);
        let rdot = rng.gen_range(-1.0..1.0);
        let a = place_radial(&mut rng, rho, rdot, l / rho);
        let b = place_radial(&mut rng, rho, rdot, l / rho);
        surface_samples.push(a.clone());
        pair_samples.push((a, b));
    }
    CatalogEntry {
        name: "radial-l".into(),
        scenario: ReductionScenario {
            name: "radial-l".into(),
            system: free_particle_3d(),
            surface: Some(InvariantSurface::new(
                vec![angular_momentum_sq()],
                vec![l * l],
                1e-9,
            )),
            quotient: Some(radial_quotient()),
            reduced: radial_fixed_l(l),
            surface_samples,
            pair_samples,
            tolerances: ReductionTolerances::default(),
            grid_points: DEFAULT_GRID_POINTS,
        },
        default_x0: x0,
        t_span: (0.0, 5.0),
        notes: "free motion restricted to fixed angular momentum, projected to (r, r')".into(),
    }
}

pub fn radial_e_entry(seed: u64) -> CatalogEntry {
    let x0 = vec![1.0, 0.0, 0.0, 0.3, 0.9, 0.0];
    let two_e: f64 = 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut surface_samples = Vec::new();
    let mut pair_samples = Vec::new();
    for _ in 0..DEFAULT_PAIR_COUNT {
        let rho = rng.gen_range(0.5..2.0);
        let rdot = rng.gen_range(-0.9..0.9) * two_e.sqrt();
        let vt = (two_e - rdot * rdot).sqrt();
        let a = place_radial(&mut rng, rho, rdot, vt);
        let b = place_radial(&mut rng, rho, rdot, vt);
        surface_samples.push(a.clone());
        pair_samples.push((a, b));
    }
    CatalogEntry {
        name: "radial-e".into(),
        scenario: ReductionScenario {
            name: "radial-e".into(),
            system: free_particle_3d(),
            surface: Some(InvariantSurface::new(vec![speed_sq()], vec![two_e], 1e-9)),
            quotient: Some(radial_quotient()),
            reduced: radial_fixed_energy(0.5 * two_e),
            surface_samples,
            pair_samples,
            tolerances: ReductionTolerances::default(),
            grid_points: DEFAULT_GRID_POINTS,
        },
        default_x0: x0,
        t_span: (0.0, 5.0),
        notes: "free motion restricted to fixed energy, projected to (r, r')".into(),
    }
}

pub fn calogero_entry(seed: u64) -> CatalogEntry {
    let g = 0.4;
    let x0 = matrix_state_from_spectrum([-0.5, 0.7], [0.3, -0.4], 0.3, g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut surface_samples = Vec::new();
    let mut pair_samples = Vec::new();
    for _ in 0..DEFAULT_PAIR_COUNT {
        let q1 = rng.gen_range(-1.0..0.0);
        let q2 = q1 + rng.gen_range(0.3..1.5);
        let qd = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let a = matrix_state_from_spectrum([q1, q2], qd, rng.gen_range(0.0..PI), g);
        let b = matrix_state_from_spectrum([q1, q2], qd, rng.gen_range(0.0..PI), g);
        surface_samples.push(a.clone());
        pair_samples.push((a, b));
    }
    CatalogEntry {
        name: "calogero-from-matrix".into(),
        scenario: ReductionScenario {
            name: "calogero-from-matrix".into(),
            system: matrix_free_symmetric(),
            surface: Some(InvariantSurface::new(
                vec![coupling_invariant()],
                vec![g],
                1e-9,
            )),
            quotient: Some(eigen_quotient()),
            reduced: calogero_two_body(g),
            surface_samples,
            pair_samples,
            tolerances: ReductionTolerances::default(),
            grid_points: DEFAULT_GRID_POINTS,
        },
        default_x0: x0,
        t_span: (0.0, 5.0),
        notes: "free symmetric-matrix motion at fixed ½Tr(Mα), projected to its eigenvalues".into(),
    }
}

fn rotated_pairs(rng: &mut ChaCha8Rng, count: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..count)
        .map(|_| {
            let r = unit_vector(rng) * rng.gen_range(0.5..2.0);
            let v = unit_vector(rng) * rng.gen_range(0.1..1.5);
            let rot = random_rotation(rng);
            let (r2, v2) = (rot * r, rot * v);
            (
                vec![r[0], r[1], r[2], v[0], v[1], v[2]],
                vec![r2[0], r2[1], r2[2], v2[0], v2[1], v2[2]],
            )
        })
        .collect()
}

pub fn so3_entry(seed: u64) -> CatalogEntry {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CatalogEntry {
        name: "so3-quotient".into(),
        scenario: ReductionScenario {
            name: "so3-quotient".into(),
            system: free_particle_3d(),
            surface: None,
            quotient: Some(rotation_quotient()),
            reduced: so3_reduced(zero_force()),
            surface_samples: Vec::new(),
            pair_samples: rotated_pairs(&mut rng, DEFAULT_PAIR_COUNT),
            tolerances: ReductionTolerances::default(),
            grid_points: DEFAULT_GRID_POINTS,
        },
        default_x0: vec![1.0, 0.5, -0.2, 0.1, 0.8, 0.3],
        t_span: (0.0, 5.0),
        notes: "free motion projected to the rotation invariants (r.r, v.v, r.v)".into(),
    }
}

/// Isotropic harmonic force `f = -k r`, which keeps the rotation quotient closed.
pub fn harmonic_force(k: f64) -> CentralForce {
    Arc::new(move |r, _| [-k * r[0], -k * r[1], -k * r[2]])
}

pub fn so3_harmonic_entry(seed: u64) -> CatalogEntry {
    let mut entry = so3_entry(seed);
    let force = harmonic_force(1.5);
    entry.name = "so3-quotient-harmonic".into();
    entry.scenario.name = entry.name.clone();
    entry.scenario.system = forced_particle_3d(force.clone());
    entry.scenario.reduced = so3_reduced(force);
    entry.notes = "isotropic oscillator projected to the rotation invariants".into();
    entry
}

pub fn riccati_entry(seed: u64) -> CatalogEntry {
    let (a, b, c) = (1.0, 1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair_samples = (0..DEFAULT_PAIR_COUNT)
        .map(|_| {
            let x = rng.gen_range(-2.0..2.0);
            let y = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let lam = rng.gen_range(0.2..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            (vec![x, y], vec![lam * x, lam * y])
        })
        .collect();
    CatalogEntry {
        name: "riccati-classical".into(),
        scenario: ReductionScenario {
            name: "riccati-classical".into(),
            system: linear_2d(a, b, c),
            surface: None,
            quotient: Some(QuotientMap::new(vec![projective_ratio()])),
            reduced: riccati_scalar(a, b, c),
            surface_samples: Vec::new(),
            pair_samples,
            tolerances: ReductionTolerances {
                diagram: 1e-8,
                ..Default::default()
            },
            grid_points: DEFAULT_GRID_POINTS,
        },
        default_x0: vec![0.2, 1.0],
        t_span: (0.0, 3.0),
        notes: "linear planar flow projected by dilations to x/y".into(),
    }
}

/// The five classical reductions, in a fixed order.
pub fn entries(seed: u64) -> Vec<CatalogEntry> {
    vec![
        radial_l_entry(seed),
        radial_e_entry(seed),
        calogero_entry(seed),
        so3_entry(seed),
        riccati_entry(seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_rhs_is_velocity() {
        let f = free_particle_3d()
            .eval(0.0, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
            .unwrap();
        assert_eq!(f, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn radial_point_values() {
        assert_eq!(radial_fixed_l(1.0).eval(0.0, &[1.0, 0.0]).unwrap()[1], 1.0);
        assert_eq!(radial_fixed_l(0.0).eval(0.0, &[2.0, 0.5]).unwrap()[1], 0.0);
        assert_eq!(
            radial_fixed_energy(1.0).eval(0.0, &[1.0, 0.0]).unwrap()[1],
            2.0
        );
        assert_eq!(
            radial_fixed_energy(0.0).eval(0.0, &[1.0, 0.0]).unwrap()[1],
            0.0
        );
        let td = radial_time_dependent(1.0);
        assert_eq!(td.eval(1.0, &[1.0, 0.0]).unwrap()[1], 0.0);
        assert_eq!(
            radial_time_dependent(2.0).eval(1.0, &[1.0, 0.0]).unwrap()[1],
            3.0
        );
        assert_eq!(
            td.eval(0.0, &[1.0, 0.0]).unwrap_err(),
            FlowError::SingularTime { t: 0.0 }
        );
    }

    #[test]
    fn time_dependent_forms_against_free_flow() {
        let cfg = IntegratorConfig::rk45(1e-10);
        let r =
            time_dependent_consistency([1.2, 0.3, -0.5], [0.4, 0.7, 0.2], (1.0, 3.0), 201, &cfg)
                .unwrap();
        assert!(r.derived_dev < 1e-6, "{r:?}");
        // The printed form is only right on the unit sphere.
        assert!(r.printed_dev > 1e-3, "{r:?}");
        let d = radial_time_dependent_derived(2.0)
            .eval(1.0, &[1.0, 0.0])
            .unwrap();
        assert_eq!(
            d,
            radial_time_dependent(2.0).eval(1.0, &[1.0, 0.0]).unwrap()
        );
    }

    #[test]
    fn convex_limits() {
        let s = radial_convex(1.0, 1.0, 0.7).unwrap();
        assert_eq!(s.eval(0.0, &[1.0, 0.0]).unwrap()[1], 1.0);
        let s0 = radial_convex(0.0, 3.0, 0.7).unwrap();
        let e = radial_fixed_energy(0.7);
        let p = [1.3, 0.4];
        assert!((s0.eval(0.0, &p).unwrap()[1] - e.eval(0.0, &p).unwrap()[1]).abs() < 1e-15);
        assert!(radial_convex(1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn calogero_point_values() {
        assert_eq!(
            calogero_two_body(1.0)
                .eval(0.0, &[0.0, 1.0, 0.0, 0.0])
                .unwrap(),
            vec![0.0, 0.0, -2.0, 2.0]
        );
        assert_eq!(
            calogero_two_body(0.0)
                .eval(0.0, &[0.0, 1.0, 0.5, 0.1])
                .unwrap(),
            vec![0.5, 0.1, 0.0, 0.0]
        );
    }

    #[test]
    fn commutator_is_multiple_of_alpha() {
        let s = [0.3, -1.2, 0.8, 0.5, 0.2, -0.7];
        let m = matrix_commutator(&s);
        let l3 = commutator_coefficient().eval(&s);
        assert!(m[0][0].abs() < 1e-15 && m[1][1].abs() < 1e-15);
        assert!((m[0][1] - l3).abs() < 1e-15 && (m[1][0] + l3).abs() < 1e-15);
        let half_trace = 0.5 * (m[0][1] * -1.0 + m[1][0] * 1.0);
        assert!((half_trace - coupling_invariant().eval(&s)).abs() < 1e-15);
    }

    #[test]
    fn spectrum_roundtrip() {
        let s = matrix_state_from_spectrum([-0.4, 1.1], [0.2, -0.3], 0.7, 0.25);
        let q = eigen_quotient().eval(&s);
        for (a, b) in q.iter().zip([-0.4, 1.1, 0.2, -0.3]) {
            assert!((a - b).abs() < 1e-13, "{q:?}");
        }
        assert!((coupling_invariant().eval(&s) - 0.25).abs() < 1e-13);
    }

    #[test]
    fn riccati_point_values() {
        assert_eq!(
            riccati_scalar(0.0, 0.0, 0.0).eval(0.0, &[3.0]).unwrap(),
            vec![0.0]
        );
        assert_eq!(
            riccati_scalar(1.0, 1.0, 1.0).eval(0.0, &[1.0]).unwrap(),
            vec![2.0]
        );
    }

    #[test]
    fn projection_rejects_origin() {
        let err = project_projective(&[0.0, 1.0], &[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap_err();
        assert_eq!(err, CatalogError::OriginExcluded { t: 1.0 });
    }

    #[test]
    fn hysteresis_prevents_chatter() {
        // hover around the diagonal: |x| ~ |y| within the 5% band
        let states: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![1.0 + 0.02 * ((i % 2) as f64 - 0.5), 1.0])
            .collect();
        let times: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let p = project_projective(&times, &states).unwrap();
        assert!(p.switches.is_empty());
        assert!(p.charts.iter().all(|c| *c == ProjectiveChart::Xi));
    }
}

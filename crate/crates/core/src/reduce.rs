//! Reduction of a dynamical system by an invariant surface and a quotient
//! map, with a commuting-diagram verifier that compares the projected full
//! flow against the claimed reduced flow.

use serde::Serialize;
use thiserror::Error;

use crate::calc::{gradient, jacobian, CalcError, DiffScheme, ScalarField};
use crate::flow::{
    integrate_on_grid, uniform_grid, FlowError, IntegratorConfig, VectorFieldSystem,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReduceError {
    #[error("sample {point} is off the surface: constraint {constraint} misses by {miss:e}")]
    OffSurface {
        point: usize,
        constraint: usize,
        miss: f64,
    },
    #[error("pair {pair} is not equivalent: invariants differ by {dev:e}")]
    PairNotEquivalent { pair: usize, dev: f64 },
    #[error("preflight failed: {0}")]
    PreflightFailed(String),
    #[error("reduced system has dimension {reduced}, quotient has {quotient} invariants")]
    DimensionMismatch { reduced: usize, quotient: usize },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Calc(#[from] CalcError),
}

pub type Result<T> = std::result::Result<T, ReduceError>;

/// Level set `K_j(x) = k_j` for all j.
#[derive(Debug, Clone)]
pub struct InvariantSurface {
    pub constraints: Vec<ScalarField>,
    pub values: Vec<f64>,
    pub tol: f64,
}

impl InvariantSurface {
    pub fn new(constraints: Vec<ScalarField>, values: Vec<f64>, tol: f64) -> Self {
        assert_eq!(
            constraints.len(),
            values.len(),
            "one target value per constraint"
        );
        assert!(tol > 0.0);
        InvariantSurface {
            constraints,
            values,
            tol,
        }
    }

    /// Worst constraint miss at `x` as (index, |K_j(x) - k_j|).
    pub fn worst_miss(&self, x: &[f64]) -> (usize, f64) {
        self.constraints
            .iter()
            .zip(&self.values)
            .map(|(k, v)| (k.eval(x) - v).abs())
            .enumerate()
            .fold(
                (0, 0.0),
                |best, (j, m)| if m > best.1 { (j, m) } else { best },
            )
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.worst_miss(x).1 <= self.tol
    }
}

#[derive(Debug, Clone)]
pub struct QuotientMap {
    pub invariants: Vec<ScalarField>,
    pub names: Vec<String>,
}

impl QuotientMap {
    pub fn new(invariants: Vec<ScalarField>) -> Self {
        let names = invariants.iter().map(|f| f.label().to_string()).collect();
        QuotientMap { invariants, names }
    }

    pub fn dim(&self) -> usize {
        self.invariants.len()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.invariants.iter().map(|f| f.eval(x)).collect()
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReductionTolerances {
    pub surface: f64,
    pub projectable: f64,
    pub diagram: f64,
}

impl Default for ReductionTolerances {
    fn default() -> Self {
        ReductionTolerances {
            surface: 1e-10,
            projectable: 1e-10,
            diagram: 1e-6,
        }
    }
}

pub const DEFAULT_PAIR_COUNT: usize = 64;
pub const DEFAULT_GRID_POINTS: usize = 512;

/// A system, the surface and quotient that reduce it, and the claimed
/// reduced system, together with the samples used for preflight checks.
#[derive(Debug, Clone)]
pub struct ReductionScenario {
    pub name: String,
    pub system: VectorFieldSystem,
    pub surface: Option<InvariantSurface>,
    pub quotient: Option<QuotientMap>,
    pub reduced: VectorFieldSystem,
    pub surface_samples: Vec<Vec<f64>>,
    pub pair_samples: Vec<(Vec<f64>, Vec<f64>)>,
    pub tolerances: ReductionTolerances,
    pub grid_points: usize,
}

impl ReductionScenario {
    /// Image of a full state in the reduced chart.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.quotient {
            Some(q) => q.eval(x),
            None => x.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckReport {
    pub ok: bool,
    pub worst: f64,
    pub samples: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Tangency of the field to the surface: `|L_Γ K_j| <= tol (1 + |Γ|)` at every
/// sample. Samples must lie on the surface. Fields are evaluated at `t = 0`.
pub fn check_invariant_surface(
    sys: &VectorFieldSystem,
    surface: &InvariantSurface,
    samples: &[Vec<f64>],
) -> Result<CheckReport> {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (i, x) in samples.iter().enumerate() {
        let (j, miss) = surface.worst_miss(x);
        if miss > surface.tol {
            return Err(ReduceError::OffSurface {
                point: i,
                constraint: j,
                miss,
            });
        }
        let field = sys.eval(0.0, x)?;
        let scale = 1.0 + norm(&field);
        for k in &surface.constraints {
            let g = gradient(k, x, DiffScheme::Dual)?;
            let lie: f64 = g.iter().zip(&field).map(|(a, b)| a * b).sum();
            worst = worst.max(lie.abs());
            if lie.abs() > surface.tol * scale {
                ok = false;
            }
        }
    }
    Ok(CheckReport {
        ok,
        worst,
        samples: samples.len(),
    })
}

/// `Dξ(x) Γ(x)`: the candidate reduced field at `ξ(x)`.
pub fn reduced_field(
    sys: &VectorFieldSystem,
    quotient: &QuotientMap,
    x: &[f64],
) -> Result<Vec<f64>> {
    let d = jacobian(&quotient.invariants, x, DiffScheme::Dual)?;
    let g = sys.eval(0.0, x)?;
    let v = d * nalgebra::DVector::from_vec(g);
    Ok(v.iter().copied().collect())
}

/// Equivalent points must push the field forward to the same reduced
/// velocity. Comparisons are relative: `tol (1 + |value|)`.
pub fn check_projectable(
    sys: &VectorFieldSystem,
    quotient: &QuotientMap,
    pairs: &[(Vec<f64>, Vec<f64>)],
    tol: f64,
) -> Result<CheckReport> {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (i, (a, b)) in pairs.iter().enumerate() {
        let (xa, xb) = (quotient.eval(a), quotient.eval(b));
        let dev = xa
            .iter()
            .zip(&xb)
            .map(|(p, q)| (p - q).abs() / (1.0 + p.abs()))
            .fold(0.0, f64::max);
        if dev > tol {
            return Err(ReduceError::PairNotEquivalent { pair: i, dev });
        }
        let (va, vb) = (
            reduced_field(sys, quotient, a)?,
            reduced_field(sys, quotient, b)?,
        );
        for (p, q) in va.iter().zip(&vb) {
            let d = (p - q).abs();
            worst = worst.max(d);
            if d > tol * (1.0 + p.abs()) {
                ok = false;
            }
        }
    }
    Ok(CheckReport {
        ok,
        worst,
        samples: pairs.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagramReport {
    pub scenario: String,
    pub max_dev: f64,
    pub ok: bool,
    pub samples: usize,
    pub tolerances: ReductionTolerances,
    pub surface_check: Option<CheckReport>,
    pub projectability_check: Option<CheckReport>,
    #[serde(skip)]
    pub grid: Vec<f64>,
    #[serde(skip)]
    pub projected: Vec<Vec<f64>>,
    #[serde(skip)]
    pub reduced: Vec<Vec<f64>>,
}

/// Runs both preflight checks and refuses to continue if either fails.
pub fn preflight(
    scenario: &ReductionScenario,
) -> Result<(Option<CheckReport>, Option<CheckReport>)> {
    let surf = match &scenario.surface {
        Some(s) => {
            let r = check_invariant_surface(&scenario.system, s, &scenario.surface_samples)?;
            if !r.ok {
                return Err(ReduceError::PreflightFailed(format!(
                    "{}: field not tangent to surface (worst {:e})",
                    scenario.name, r.worst
                )));
            }
            Some(r)
        }
        None => None,
    };
    let proj = match &scenario.quotient {
        Some(q) => {
            if q.dim() != scenario.reduced.dim() {
                return Err(ReduceError::DimensionMismatch {
                    reduced: scenario.reduced.dim(),
                    quotient: q.dim(),
                });
            }
            let r = check_projectable(
                &scenario.system,
                q,
                &scenario.pair_samples,
                scenario.tolerances.projectable,
            )?;
            if !r.ok {
                return Err(ReduceError::PreflightFailed(format!(
                    "{}: field not projectable (worst {:e})",
                    scenario.name, r.worst
                )));
            }
            Some(r)
        }
        None => None,
    };
    Ok((surf, proj))
}

/// Integrates the full system from `x0` and the reduced system from its
/// image, then compares them on a shared uniform grid.
pub fn verify_commuting_diagram(
    scenario: &ReductionScenario,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<DiagramReport> {
    let (surface_check, projectability_check) = preflight(scenario)?;
    if let Some(s) = &scenario.surface {
        let (j, miss) = s.worst_miss(x0);
        if miss > s.tol {
            return Err(ReduceError::OffSurface {
                point: 0,
                constraint: j,
                miss,
            });
        }
    }
    let grid = uniform_grid(t0, t1, scenario.grid_points);
    let full = integrate_on_grid(&scenario.system, x0, &grid, cfg)?;
    let projected: Vec<Vec<f64>> = full.iter().map(|x| scenario.project(x)).collect();
    let reduced = integrate_on_grid(&scenario.reduced, &scenario.project(x0), &grid, cfg)?;
    let max_dev = projected
        .iter()
        .zip(&reduced)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    Ok(DiagramReport {
        scenario: scenario.name.clone(),
        max_dev,
        ok: max_dev <= scenario.tolerances.diagram,
        samples: grid.len(),
        tolerances: scenario.tolerances,
        surface_check,
        projectability_check,
        grid,
        projected,
        reduced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{free_particle_3d, radial_fixed_l, radial_l_entry, radius, radius_sq};

    fn base() -> ReductionScenario {
        radial_l_entry(3).scenario
    }

    #[test]
    fn off_surface_sample_is_reported() {
        let mut s = base();
        s.surface_samples.push(vec![1.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        let err = preflight(&s).unwrap_err();
        assert!(
            matches!(
                err,
                ReduceError::OffSurface {
                    point: 64,
                    constraint: 0,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn non_invariant_surface_fails_preflight() {
        let mut s = base();
        s.surface = Some(InvariantSurface::new(vec![radius_sq()], vec![1.0], 1e-9));
        s.surface_samples = vec![vec![1.0, 0.0, 0.0, 0.5, 0.2, 0.0]];
        assert!(matches!(
            preflight(&s),
            Err(ReduceError::PreflightFailed(_))
        ));
    }

    #[test]
    fn non_projectable_quotient_fails_preflight() {
        let mut s = base();
        s.surface = None;
        s.quotient = Some(QuotientMap::new(vec![radius()]));
        s.reduced = VectorFieldSystem::autonomous("r only", &["r"], |_| vec![0.0]);
        s.pair_samples = vec![(
            vec![1.0, 0.0, 0.0, 0.5, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, -0.5, 0.0, 0.0],
        )];
        assert!(matches!(
            preflight(&s),
            Err(ReduceError::PreflightFailed(_))
        ));
    }

    #[test]
    fn inequivalent_pair_is_rejected() {
        let mut s = base();
        s.pair_samples = vec![(
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            vec![2.0, 0.0, 0.0, 0.0, 0.5, 0.0],
        )];
        assert!(matches!(
            preflight(&s),
            Err(ReduceError::PairNotEquivalent { pair: 0, .. })
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut s = base();
        s.reduced = free_particle_3d();
        assert!(matches!(
            preflight(&s),
            Err(ReduceError::DimensionMismatch {
                reduced: 6,
                quotient: 2
            })
        ));
    }

    #[test]
    fn wrong_reduced_system_breaks_the_diagram() {
        let mut s = base();
        s.reduced = radial_fixed_l(1.2);
        let r = verify_commuting_diagram(
            &s,
            &[1.0, 0.0, 0.0, 0.3, 1.0, 0.0],
            0.0,
            2.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!(!r.ok && r.max_dev > 1e-3);
    }
}

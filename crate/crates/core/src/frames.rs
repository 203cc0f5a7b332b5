//! Reference frames on Minkowski space as `(1,1)` tensors `R = Γ ⊗ θ`,
//! the time/space split they induce, compatibility of two frames,
//! local integrability of the time form, and the Lorentz metric read off a
//! family of boosted frames.

use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("θ(Γ) = {value} at the point, expected 1")]
    NotNormalized { value: f64 },
    #[error("boost is not a Lorentz map (deviation {dev:e})")]
    NotLorentz { dev: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, FrameError>;

pub const NORMALIZATION_TOL: f64 = 1e-10;

pub type Point = [f64; 4];
type FormFn = Arc<dyn Fn(&Point) -> [f64; 4] + Send + Sync>;

/// An observer: a time form `θ` and a unit time direction `Γ`.
#[derive(Clone)]
pub struct ReferenceFrame {
    pub label: String,
    theta: FormFn,
    gamma: FormFn,
}

impl std::fmt::Debug for ReferenceFrame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ReferenceFrame({})", self.label)
    }
}

impl ReferenceFrame {
    pub fn new(
        label: impl Into<String>,
        theta: impl Fn(&Point) -> [f64; 4] + Send + Sync + 'static,
        gamma: impl Fn(&Point) -> [f64; 4] + Send + Sync + 'static,
    ) -> Self {
        ReferenceFrame {
            label: label.into(),
            theta: Arc::new(theta),
            gamma: Arc::new(gamma),
        }
    }

    pub fn constant(label: impl Into<String>, theta: [f64; 4], gamma: [f64; 4]) -> Self {
        ReferenceFrame::new(label, move |_| theta, move |_| gamma)
    }

    /// `θ = dx⁰`, `Γ = ∂₀`.
    pub fn lab() -> Self {
        ReferenceFrame::constant("lab", [1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0])
    }

    /// The lab frame carried by a Lorentz map: `Γ' = Λ ∂₀`, `θ' = dx⁰ ∘ Λ⁻¹`.
    pub fn transformed(lambda: &Matrix4<f64>) -> Result<Self> {
        let inv = lambda
            .try_inverse()
            .ok_or_else(|| FrameError::InvalidParameter("singular map".into()))?;
        let g = lambda.column(0);
        let t = inv.row(0);
        Ok(ReferenceFrame::constant(
            "boosted",
            [t[0], t[1], t[2], t[3]],
            [g[0], g[1], g[2], g[3]],
        ))
    }

    pub fn theta(&self, p: &Point) -> [f64; 4] {
        (self.theta)(p)
    }

    pub fn gamma(&self, p: &Point) -> [f64; 4] {
        (self.gamma)(p)
    }
}

fn dot(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensorAtPoint {
    /// `r[(i, j)] = Γ^i θ_j`.
    pub r: Matrix4<f64>,
    pub theta: [f64; 4],
    pub gamma: [f64; 4],
    pub point: Point,
}

impl FrameTensorAtPoint {
    pub fn trace(&self) -> f64 {
        self.r.trace()
    }

    pub fn projector_dev(&self) -> f64 {
        (self.r * self.r - self.r).amax()
    }
}

/// Rejects frames with `|θ(Γ) - 1| > 1e-10` rather than renormalizing.
pub fn frame_tensor(frame: &ReferenceFrame, point: &Point) -> Result<FrameTensorAtPoint> {
    let (theta, gamma) = (frame.theta(point), frame.gamma(point));
    let value = dot(&theta, &gamma);
    if (value - 1.0).abs() > NORMALIZATION_TOL {
        return Err(FrameError::NotNormalized { value });
    }
    Ok(FrameTensorAtPoint {
        r: Vector4::from(gamma) * Vector4::from(theta).transpose(),
        theta,
        gamma,
        point: *point,
    })
}

/// `(R v, (1 - R) v)`.
pub fn split_tangent(r: &FrameTensorAtPoint, v: &[f64; 4]) -> ([f64; 4], [f64; 4]) {
    let time = r.r * Vector4::from(*v);
    let mut space = [0.0; 4];
    for i in 0..4 {
        space[i] = v[i] - time[i];
    }
    ([time[0], time[1], time[2], time[3]], space)
}

/// `λ` in `R v = λ Γ`; positive means future oriented for this observer.
pub fn time_coefficient(r: &FrameTensorAtPoint, v: &[f64; 4]) -> f64 {
    dot(&r.theta, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Compatibility {
    pub trace: f64,
    pub compatible: bool,
}

/// `Tr(R R')`; only the positive branch counts as compatible.
pub fn compatible(r: &FrameTensorAtPoint, r2: &FrameTensorAtPoint) -> Compatibility {
    let trace = (r.r * r2.r).trace();
    Compatibility {
        trace,
        compatible: trace > 0.0,
    }
}

/// `max_p |θ ∧ dθ|` over the sample points, with `dθ` by central differences.
/// The norm is Euclidean over the four independent components.
pub fn frobenius_residual(theta: &dyn Fn(&Point) -> [f64; 4], points: &[Point]) -> f64 {
    let mut worst = 0.0f64;
    for p in points {
        let th = theta(p);
        let mut jac = [[0.0; 4]; 4]; // jac[a][b] = ∂_a θ_b
        for a in 0..4 {
            let h = 1e-5 * (1.0 + p[a].abs());
            let (mut up, mut dn) = (*p, *p);
            up[a] += h;
            dn[a] -= h;
            let (tu, td) = (theta(&up), theta(&dn));
            for b in 0..4 {
                jac[a][b] = (tu[b] - td[b]) / (2.0 * h);
            }
        }
        let d = |a: usize, b: usize| jac[a][b] - jac[b][a];
        let mut sq = 0.0;
        for (a, b, c) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
            let comp = th[a] * d(b, c) + th[b] * d(c, a) + th[c] * d(a, b);
            sq += comp * comp;
        }
        worst = worst.max(sq.sqrt());
    }
    worst
}

pub fn minkowski() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, -1.0))
}

/// `exp(rapidity · K_n)` with `K_n` the boost generator along the unit
/// spatial direction `n`.
pub fn boost(rapidity: f64, direction: [f64; 3]) -> Result<Matrix4<f64>> {
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !rapidity.is_finite() {
        return Err(FrameError::InvalidParameter(
            "boost needs a direction and finite rapidity".into(),
        ));
    }
    let mut k = Matrix4::zeros();
    for i in 0..3 {
        k[(0, i + 1)] = direction[i] / norm;
        k[(i + 1, 0)] = direction[i] / norm;
    }
    Ok((k * rapidity).exp())
}

pub fn lorentz_dev(lambda: &Matrix4<f64>) -> f64 {
    let eta = minkowski();
    (lambda.transpose() * eta * lambda - eta).amax()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricFamilyReport {
    /// `max |η(Γ') - θ'|` over the family.
    pub residual: f64,
    pub worst_lorentz_dev: f64,
    /// `|η⁻¹ η - 1|` for the contravariant metric.
    pub inverse_dev: f64,
}

/// Checks that `η = diag(1, -1, -1, -1)` lowers each boosted frame's `Γ'`
/// to its `θ'`. Boosts are `(rapidity, direction)` pairs.
pub fn metric_from_frame_family(boosts: &[(f64, [f64; 3])]) -> Result<MetricFamilyReport> {
    let eta = minkowski();
    let contravariant = eta.try_inverse().expect("metric is invertible");
    let mut residual = 0.0f64;
    let mut worst_lorentz = 0.0f64;
    let origin = [0.0; 4];
    for &(rapidity, dir) in boosts {
        let lambda = if rapidity == 0.0 {
            Matrix4::identity()
        } else {
            boost(rapidity, dir)?
        };
        let dev = lorentz_dev(&lambda);
        if dev > 1e-12 {
            return Err(FrameError::NotLorentz { dev });
        }
        worst_lorentz = worst_lorentz.max(dev);
        let frame = ReferenceFrame::transformed(&lambda)?;
        let ft = frame_tensor(&frame, &origin)?;
        let lowered = eta * Vector4::from(ft.gamma);
        residual = residual.max((lowered - Vector4::from(ft.theta)).amax());
    }
    Ok(MetricFamilyReport {
        residual,
        worst_lorentz_dev: worst_lorentz,
        inverse_dev: (contravariant * eta - Matrix4::identity()).amax(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lab_frame_tensor() {
        let r = frame_tensor(&ReferenceFrame::lab(), &[0.0; 4]).unwrap();
        assert_eq!(
            r.r,
            Matrix4::from_diagonal(&Vector4::new(1.0, 0.0, 0.0, 0.0))
        );
        assert_eq!(r.trace(), 1.0);
    }

    #[test]
    fn boosted_frame_is_projector() {
        let f = ReferenceFrame::transformed(&boost(0.5, [1.0, 0.0, 0.0]).unwrap()).unwrap();
        let r = frame_tensor(&f, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(r.projector_dev() < 1e-10);
        assert!((r.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn unnormalized_frame_is_rejected() {
        let f = ReferenceFrame::constant("bad", [2.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            frame_tensor(&f, &[0.0; 4]).unwrap_err(),
            FrameError::NotNormalized { value: 2.0 }
        );
    }

    #[test]
    fn split() {
        let f = ReferenceFrame::transformed(&boost(0.3, [0.0, 1.0, 1.0]).unwrap()).unwrap();
        let r = frame_tensor(&f, &[0.0; 4]).unwrap();
        let (t, s) = split_tangent(&r, &r.gamma);
        assert!(t.iter().zip(&r.gamma).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(s.iter().all(|v| v.abs() < 1e-14));
        let lab = frame_tensor(&ReferenceFrame::lab(), &[0.0; 4]).unwrap();
        assert_eq!(split_tangent(&lab, &[0.0, 1.0, 2.0, 3.0]).0, [0.0; 4]);
        assert!(time_coefficient(&lab, &[2.0, 1.0, 0.0, 0.0]) > 0.0);
        assert!(time_coefficient(&lab, &[-2.0, 1.0, 0.0, 0.0]) < 0.0);
    }

    #[test]
    fn compatibility_cases() {
        let lab = frame_tensor(&ReferenceFrame::lab(), &[0.0; 4]).unwrap();
        assert_eq!(compatible(&lab, &lab).trace, 1.0);
        let b = frame_tensor(
            &ReferenceFrame::transformed(&boost(1.0, [1.0, 0.0, 0.0]).unwrap()).unwrap(),
            &[0.0; 4],
        )
        .unwrap();
        let c = compatible(&lab, &b);
        assert!(c.compatible && (c.trace - 1f64.cosh().powi(2)).abs() < 1e-12);
        let side = frame_tensor(
            &ReferenceFrame::constant("side", [0.0, 1.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]),
            &[0.0; 4],
        )
        .unwrap();
        let c = compatible(&lab, &side);
        assert!(!c.compatible && c.trace == 0.0);
    }

    #[test]
    fn frobenius_cases() {
        let pts = [[0.3, -0.2, 0.5, 1.0], [1.0, 2.0, -1.0, 0.5]];
        assert_eq!(frobenius_residual(&|_| [1.0, 0.0, 0.0, 0.0], &pts), 0.0);
        let scaled = |p: &Point| [(-(p[1] * p[2]).sin()).exp(), 0.0, 0.0, 0.0];
        assert!(frobenius_residual(&scaled, &pts) < 1e-7);
        let contact = |p: &Point| [p[1], 0.0, 1.0, 0.0];
        assert!(frobenius_residual(&contact, &pts) > 0.1);
    }

    #[test]
    fn metric_family() {
        let r = metric_from_frame_family(&[(0.0, [1.0, 0.0, 0.0])]).unwrap();
        assert_eq!(r.residual, 0.0);
        let r =
            metric_from_frame_family(&[(0.7, [1.0, 0.0, 0.0]), (1.2, [0.3, -0.4, 0.8])]).unwrap();
        assert!(r.residual < 1e-12 && r.inverse_dev == 0.0);
    }
}

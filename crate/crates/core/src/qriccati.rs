//! Matrix Riccati flow as the image of Schrödinger evolution on U(N) under
//! the block coset coordinate `Z = B D^{-1}`.

use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::flow::{
    integrate, uniform_grid, write_csv_rows, FlowError, IntegratorConfig, VectorFieldSystem,
};

pub type CMatrix = DMatrix<Complex64>;
pub type MatrixFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Hermiticity tolerance for the diagonal blocks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Admissible unitarity drift for inputs and outputs.
pub const UNITARY_TOL: f64 = 1e-9;
/// Drift past which stepping is declared too coarse.
pub const UNITARITY_LOST: f64 = 1e-6;
/// Drift past which a state is re-projected onto U(N).
pub const REPROJECT_AT: f64 = 1e-12;
/// Largest condition number accepted for the D block.
pub const MAX_BLOCK_COND: f64 = 1e8;
/// Longest interval integrated between unitarity checks.
pub const CHECK_INTERVAL: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QRiccatiError {
    #[error("block {which} is not Hermitian at t = {t}: deviation {dev:e}")]
    NotHermitian {
        which: &'static str,
        t: f64,
        dev: f64,
    },
    #[error("initial state is not unitary: drift {drift:e}")]
    NotUnitary { drift: f64 },
    #[error("unitarity lost at t = {t}: drift {drift:e}")]
    UnitarityLost { t: f64, drift: f64 },
    #[error("D block is singular: condition number {cond:e}")]
    SingularBlock { cond: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

pub type Result<T> = std::result::Result<T, QRiccatiError>;

/// `H = [[H1, V], [V†, H2]]` with blocks possibly depending on time.
#[derive(Clone)]
pub struct BlockHamiltonian {
    pub n1: usize,
    pub n2: usize,
    h1: MatrixFn,
    h2: MatrixFn,
    v: MatrixFn,
    constant: bool,
}

impl std::fmt::Debug for BlockHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockHamiltonian")
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .field("constant", &self.constant)
            .finish()
    }
}

fn hermitian_dev(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

impl BlockHamiltonian {
    pub fn constant(h1: CMatrix, h2: CMatrix, v: CMatrix) -> Result<Self> {
        let (n1, n2) = (h1.nrows(), h2.nrows());
        if !h1.is_square() || !h2.is_square() || v.shape() != (n1, n2) || n1 == 0 || n2 == 0 {
            return Err(QRiccatiError::Dimension(format!(
                "H1 {:?}, H2 {:?}, V {:?}",
                h1.shape(),
                h2.shape(),
                v.shape()
            )));
        }
        let h = BlockHamiltonian {
            n1,
            n2,
            h1: Arc::new(move |_| h1.clone()),
            h2: Arc::new(move |_| h2.clone()),
            v: Arc::new(move |_| v.clone()),
            constant: true,
        };
        h.blocks(0.0)?;
        Ok(h)
    }

    /// Blocks are re-checked for hermiticity whenever they are queried.
    pub fn time_dependent(n1: usize, n2: usize, h1: MatrixFn, h2: MatrixFn, v: MatrixFn) -> Self {
        BlockHamiltonian {
            n1,
            n2,
            h1,
            h2,
            v,
            constant: false,
        }
    }

    pub fn zero(n1: usize, n2: usize) -> Self {
        BlockHamiltonian::constant(
            CMatrix::zeros(n1, n1),
            CMatrix::zeros(n2, n2),
            CMatrix::zeros(n1, n2),
        )
        .expect("zero blocks are valid")
    }

    pub fn dim(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// `(H1, H2, V)` at time `t`.
    pub fn blocks(&self, t: f64) -> Result<(CMatrix, CMatrix, CMatrix)> {
        let (h1, h2, v) = ((self.h1)(t), (self.h2)(t), (self.v)(t));
        for (which, m) in [("H1", &h1), ("H2", &h2)] {
            let dev = hermitian_dev(m);
            if dev > HERMITIAN_TOL {
                return Err(QRiccatiError::NotHermitian { which, t, dev });
            }
        }
        Ok((h1, h2, v))
    }

    pub fn assemble(&self, t: f64) -> Result<CMatrix> {
        let (h1, h2, v) = self.blocks(t)?;
        let n = self.dim();
        let mut h = CMatrix::zeros(n, n);
        h.view_mut((0, 0), (self.n1, self.n1)).copy_from(&h1);
        h.view_mut((self.n1, self.n1), (self.n2, self.n2))
            .copy_from(&h2);
        h.view_mut((0, self.n1), (self.n1, self.n2)).copy_from(&v);
        h.view_mut((self.n1, 0), (self.n2, self.n1))
            .copy_from(&v.adjoint());
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryState {
    pub u: CMatrix,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosetPoint {
    pub z: CMatrix,
    pub t: f64,
}

/// `‖U†U - 1‖_F`.
pub fn unitarity_drift(u: &CMatrix) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - CMatrix::identity(n, n)).norm()
}

/// Nearest unitary by Newton-Schulz iteration `U ← U (3 - U†U) / 2`, which
/// converges to the polar factor for states close to U(N).
pub fn reproject_unitary(u: &CMatrix) -> CMatrix {
    let n = u.nrows();
    let three = CMatrix::identity(n, n) * Complex64::new(3.0, 0.0);
    let mut w = u.clone();
    for _ in 0..30 {
        if unitarity_drift(&w) < 1e-15 {
            break;
        }
        w = &w * (&three - w.adjoint() * &w) * Complex64::new(0.5, 0.0);
    }
    w
}

/// Row-major interleaved `(re, im)` pairs.
pub fn pack(m: &CMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

pub fn unpack(x: &[f64], rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| {
        let k = 2 * (i * cols + j);
        Complex64::new(x[k], x[k + 1])
    })
}

fn entry_names(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(2 * rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            names.push(format!("re_{prefix}{}{}", i + 1, j + 1));
            names.push(format!("im_{prefix}{}{}", i + 1, j + 1));
        }
    }
    names
}

/// `U' = -i H(t) U` on the packed entries of U.
pub fn schrodinger_system(h: &BlockHamiltonian) -> VectorFieldSystem {
    let n = h.dim();
    let hc = h.clone();
    VectorFieldSystem::new(
        "Schrödinger on U(N)",
        entry_names("u", n, n),
        h.is_constant(),
        move |t, x| {
            let hm = hc.assemble(t).map_err(|e| FlowError::Rhs(e.to_string()))?;
            let u = unpack(x, n, n);
            Ok(pack(&(hm * u * (-I))))
        },
    )
}

/// States at every grid time, re-projecting onto U(N) between checks.
pub fn evolve_unitary_on_grid(
    h: &BlockHamiltonian,
    u0: &UnitaryState,
    grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Vec<UnitaryState>> {
    let n = h.dim();
    if u0.u.shape() != (n, n) {
        return Err(QRiccatiError::Dimension(format!(
            "U0 is {:?}, H is {n}x{n}",
            u0.u.shape()
        )));
    }
    let drift0 = unitarity_drift(&u0.u);
    if drift0 > UNITARY_TOL {
        return Err(QRiccatiError::NotUnitary { drift: drift0 });
    }
    let sys = schrodinger_system(h);
    let mut u = u0.u.clone();
    let mut t = grid.first().copied().unwrap_or(u0.t);
    let mut out = vec![UnitaryState { u: u.clone(), t }];
    for &tn in grid.iter().skip(1) {
        let pieces = ((tn - t) / CHECK_INTERVAL).ceil().max(1.0) as usize;
        let h_piece = (tn - t) / pieces as f64;
        for k in 0..pieces {
            let (a, b) = (
                t + k as f64 * h_piece,
                if k + 1 == pieces {
                    tn
                } else {
                    t + (k + 1) as f64 * h_piece
                },
            );
            let seg = integrate(&sys, &pack(&u), a, b, cfg)?;
            u = unpack(seg.final_state(), n, n);
            let drift = unitarity_drift(&u);
            if drift > UNITARITY_LOST {
                return Err(QRiccatiError::UnitarityLost { t: b, drift });
            }
            if drift > REPROJECT_AT {
                u = reproject_unitary(&u);
            }
        }
        t = tn;
        out.push(UnitaryState { u: u.clone(), t });
    }
    Ok(out)
}

/// Solves `i U' = H(t) U` from `u0.t` to `t1`.
pub fn evolve_unitary(
    h: &BlockHamiltonian,
    u0: &UnitaryState,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<UnitaryState> {
    if t1 == u0.t {
        return Ok(u0.clone());
    }
    let states = evolve_unitary_on_grid(h, u0, &[u0.t, t1], cfg)?;
    Ok(states.into_iter().last().expect("grid has two points"))
}

/// Conditioning of the coset extraction: `σ_max(U) / σ_min(D)`, which bounds
/// `‖Z‖` and reduces to `1 / σ_min(D)` for unitary U. Infinite when D is
/// exactly singular.
pub fn block_condition(u: &CMatrix, d: &CMatrix) -> f64 {
    let min = d.singular_values().min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        u.singular_values().max() / min
    }
}

/// `Z = B D^{-1}` where B is the top-right `n1 x n2` block and D the
/// bottom-right `n2 x n2` block, obtained from a linear solve.
pub fn extract_z(u: &UnitaryState, n1: usize, n2: usize) -> Result<CosetPoint> {
    if u.u.shape() != (n1 + n2, n1 + n2) {
        return Err(QRiccatiError::Dimension(format!(
            "U is {:?}, blocks {n1}+{n2}",
            u.u.shape()
        )));
    }
    let b = u.u.view((0, n1), (n1, n2)).into_owned();
    let d = u.u.view((n1, n1), (n2, n2)).into_owned();
    let cond = block_condition(&u.u, &d);
    if !(cond < MAX_BLOCK_COND) {
        return Err(QRiccatiError::SingularBlock { cond });
    }
    // Z D = B  <=>  D^T Z^T = B^T
    let zt = d
        .transpose()
        .lu()
        .solve(&b.transpose())
        .ok_or(QRiccatiError::SingularBlock { cond })?;
    Ok(CosetPoint {
        z: zt.transpose(),
        t: u.t,
    })
}

/// `i Z' = V + H1 Z - Z H2 - Z V† Z` on the packed entries of Z.
pub fn riccati_matrix_system(h: &BlockHamiltonian) -> VectorFieldSystem {
    let (n1, n2) = (h.n1, h.n2);
    let hc = h.clone();
    VectorFieldSystem::new(
        "matrix Riccati",
        entry_names("z", n1, n2),
        h.is_constant(),
        move |t, x| {
            let (h1, h2, v) = hc.blocks(t).map_err(|e| FlowError::Rhs(e.to_string()))?;
            let z = unpack(x, n1, n2);
            let rhs = &v + &h1 * &z - &z * &h2 - &z * v.adjoint() * &z;
            Ok(pack(&(rhs * (-I))))
        },
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct CosetReport {
    pub max_dev: f64,
    pub samples: usize,
    /// Last grid time compared when the comparison ended early.
    pub exit_time: Option<f64>,
    pub exit_reason: Option<String>,
    pub worst_unitarity: f64,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub z_unitary: Vec<CMatrix>,
    #[serde(skip)]
    pub z_riccati: Vec<CMatrix>,
}

pub const DEFAULT_COSET_SAMPLES: usize = 101;

/// Compares `Z` extracted from the unitary flow with the Riccati flow started
/// at `Z(U0)`, over `samples` grid points. A singular D block, or a pole of
/// the Riccati flow between grid points, ends the comparison early and is
/// recorded in the report.
pub fn verify_coset_reduction(
    h: &BlockHamiltonian,
    u0: &UnitaryState,
    t_span: (f64, f64),
    samples: usize,
    cfg: &IntegratorConfig,
) -> Result<CosetReport> {
    let grid = uniform_grid(t_span.0, t_span.1, samples.max(2));
    let states = evolve_unitary_on_grid(
        h,
        &UnitaryState {
            u: u0.u.clone(),
            t: t_span.0,
        },
        &grid,
        cfg,
    )?;
    let worst_unitarity = states
        .iter()
        .map(|s| unitarity_drift(&s.u))
        .fold(0.0, f64::max);
    let sys = riccati_matrix_system(h);
    let first = extract_z(&states[0], h.n1, h.n2)?.z;
    let mut z_unitary = vec![first.clone()];
    let mut z_riccati = vec![first];
    let mut exit_reason = None;
    for w in 1..grid.len() {
        let zu = match extract_z(&states[w], h.n1, h.n2) {
            Ok(p) => p.z,
            Err(e @ QRiccatiError::SingularBlock { .. }) => {
                exit_reason = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let prev = pack(z_riccati.last().expect("seeded with Z(U0)"));
        let zr = match integrate(&sys, &prev, grid[w - 1], grid[w], cfg) {
            Ok(seg) => unpack(seg.final_state(), h.n1, h.n2),
            Err(e @ (FlowError::BlowUp { .. } | FlowError::StepLimitExceeded { .. })) => {
                exit_reason = Some(format!("Riccati flow: {e}"));
                break;
            }
            Err(e) => return Err(e.into()),
        };
        z_unitary.push(zu);
        z_riccati.push(zr);
    }
    let reached = z_unitary.len();
    let times = grid[..reached].to_vec();
    let max_dev = z_unitary
        .iter()
        .zip(&z_riccati)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(CosetReport {
        max_dev,
        samples: reached,
        exit_time: exit_reason.as_ref().map(|_| times[reached - 1]),
        exit_reason,
        worst_unitarity,
        times,
        z_unitary,
        z_riccati,
    })
}

/// Z trajectory as CSV: `t`, then `re_zij`, `im_zij` in row-major order.
pub fn write_z_csv<W: Write>(mut w: W, times: &[f64], zs: &[CMatrix]) -> io::Result<()> {
    let (r, c) = zs.first().map(|z| z.shape()).unwrap_or((0, 0));
    let rows: Vec<Vec<f64>> = zs.iter().map(pack).collect();
    write_csv_rows(&mut w, "t", &entry_names("z", r, c), times, &rows)
}

/// Hermitian matrix with entries uniform in `[-scale, scale]` (real and
/// imaginary parts off the diagonal).
pub fn random_hermitian<R: Rng>(n: usize, scale: f64, rng: &mut R) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(rng.gen_range(-scale..scale), 0.0);
        for j in i + 1..n {
            let z = Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

pub fn random_complex<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
    })
}

/// Unitary factor of a random complex matrix.
pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> CMatrix {
    let m = random_complex(n, n, 1.0, rng);
    m.qr().q()
}

/// `diag(W1, W2)` with independent random unitary blocks: an element of the
/// subgroup that leaves Z unchanged under right multiplication.
pub fn random_block_unitary<R: Rng>(n1: usize, n2: usize, rng: &mut R) -> CMatrix {
    let mut m = CMatrix::zeros(n1 + n2, n1 + n2);
    m.view_mut((0, 0), (n1, n1))
        .copy_from(&random_unitary(n1, rng));
    m.view_mut((n1, n1), (n2, n2))
        .copy_from(&random_unitary(n2, rng));
    m
}

/// Random constant block Hamiltonian rescaled so that its spectral norm is
/// at most `bound`.
pub fn random_bounded_hamiltonian<R: Rng>(
    n1: usize,
    n2: usize,
    bound: f64,
    rng: &mut R,
) -> Result<BlockHamiltonian> {
    let (h1, h2, v) = (
        random_hermitian(n1, 1.0, rng),
        random_hermitian(n2, 1.0, rng),
        random_complex(n1, n2, 1.0, rng),
    );
    let probe = BlockHamiltonian::constant(h1.clone(), h2.clone(), v.clone())?;
    let norm = probe.assemble(0.0)?.singular_values().max();
    let scale = if norm > bound { bound / norm } else { 1.0 };
    let s = Complex64::new(scale, 0.0);
    BlockHamiltonian::constant(h1 * s, h2 * s, v * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pauli_x() -> BlockHamiltonian {
        BlockHamiltonian::constant(
            CMatrix::zeros(1, 1),
            CMatrix::zeros(1, 1),
            CMatrix::from_element(1, 1, c(1.0, 0.0)),
        )
        .unwrap()
    }

    #[test]
    fn zero_hamiltonian_keeps_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u0 = UnitaryState {
            u: random_unitary(3, &mut rng),
            t: 0.0,
        };
        let u = evolve_unitary(
            &BlockHamiltonian::zero(1, 2),
            &u0,
            2.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!((&u.u - &u0.u).norm() < 1e-14);
    }

    #[test]
    fn diagonal_hamiltonian_matches_phases() {
        let lam = [0.7, -1.3, 2.1];
        let h = BlockHamiltonian::constant(
            CMatrix::from_element(1, 1, c(lam[0], 0.0)),
            CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
                c(lam[1], 0.0),
                c(lam[2], 0.0),
            ])),
            CMatrix::zeros(1, 2),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u0 = random_unitary(3, &mut rng);
        let t = 1.7;
        let u = evolve_unitary(
            &h,
            &UnitaryState {
                u: u0.clone(),
                t: 0.0,
            },
            t,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            3,
            lam.iter().map(|l| (c(0.0, -l * t)).exp()),
        ));
        let expect = phases * u0;
        for (a, b) in u.u.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn pauli_exponential() {
        let t = 0.9;
        let u = evolve_unitary(
            &pauli_x(),
            &UnitaryState {
                u: CMatrix::identity(2, 2),
                t: 0.0,
            },
            t,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let expect = CMatrix::from_row_slice(
            2,
            2,
            &[
                c(t.cos(), 0.0),
                c(0.0, -t.sin()),
                c(0.0, -t.sin()),
                c(t.cos(), 0.0),
            ],
        );
        assert!((&u.u - expect).norm() < 1e-9);
        let z = extract_z(&u, 1, 1).unwrap().z[(0, 0)];
        assert!((z - c(0.0, -t.tan())).norm() < 1e-9);
    }

    #[test]
    fn non_unitary_start_is_rejected() {
        let u0 = UnitaryState {
            u: CMatrix::identity(2, 2) * c(1.1, 0.0),
            t: 0.0,
        };
        assert!(matches!(
            evolve_unitary(&pauli_x(), &u0, 1.0, &IntegratorConfig::default()),
            Err(QRiccatiError::NotUnitary { .. })
        ));
    }

    #[test]
    fn coarse_stepping_loses_unitarity() {
        let h = BlockHamiltonian::constant(
            CMatrix::from_element(1, 1, c(40.0, 0.0)),
            CMatrix::zeros(1, 1),
            CMatrix::from_element(1, 1, c(40.0, 0.0)),
        )
        .unwrap();
        let u0 = UnitaryState {
            u: CMatrix::identity(2, 2),
            t: 0.0,
        };
        let r = evolve_unitary(&h, &u0, 1.0, &IntegratorConfig::rk4(0.01));
        assert!(
            matches!(r, Err(QRiccatiError::UnitarityLost { .. })),
            "{r:?}"
        );
    }

    #[test]
    fn non_hermitian_block_is_rejected() {
        let h1 =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let r = BlockHamiltonian::constant(h1, CMatrix::zeros(1, 1), CMatrix::zeros(2, 1));
        assert!(matches!(
            r,
            Err(QRiccatiError::NotHermitian { which: "H1", .. })
        ));
    }

    #[test]
    fn identity_and_block_diagonal_give_zero() {
        let id = UnitaryState {
            u: CMatrix::identity(3, 3),
            t: 0.0,
        };
        assert_eq!(extract_z(&id, 1, 2).unwrap().z.norm(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = UnitaryState {
            u: random_block_unitary(2, 2, &mut rng),
            t: 0.0,
        };
        assert!(extract_z(&h, 2, 2).unwrap().z.norm() < 1e-12);
    }

    #[test]
    fn singular_block_is_reported() {
        let swap =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let r = extract_z(&UnitaryState { u: swap, t: 0.0 }, 1, 1);
        assert!(matches!(r, Err(QRiccatiError::SingularBlock { cond }) if cond.is_infinite()));
        let near = CMatrix::from_row_slice(
            2,
            2,
            &[c(1e-9, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1e-9, 0.0)],
        );
        assert!(matches!(
            extract_z(&UnitaryState { u: near, t: 0.0 }, 1, 1),
            Err(QRiccatiError::SingularBlock { .. })
        ));
    }

    #[test]
    fn riccati_rhs_point_values() {
        let sys = riccati_matrix_system(&BlockHamiltonian::zero(1, 2));
        assert_eq!(sys.eval(0.0, &[0.3, 0.1, -0.2, 0.5]).unwrap(), vec![0.0; 4]);
        let v = CMatrix::from_row_slice(1, 2, &[c(0.5, -1.0), c(2.0, 0.25)]);
        let h =
            BlockHamiltonian::constant(CMatrix::identity(1, 1), CMatrix::identity(2, 2), v.clone())
                .unwrap();
        // i Z' = V at Z = 0
        let zd = unpack(
            &riccati_matrix_system(&h).eval(0.0, &[0.0; 4]).unwrap(),
            1,
            2,
        );
        assert!((zd * I - v).norm() < 1e-15);
    }

    #[test]
    fn pauli_coset_flow_is_tangent() {
        let cfg = IntegratorConfig::default();
        let r = verify_coset_reduction(
            &pauli_x(),
            &UnitaryState {
                u: CMatrix::identity(2, 2),
                t: 0.0,
            },
            (0.0, 1.0),
            51,
            &cfg,
        )
        .unwrap();
        assert!(r.max_dev < 1e-8, "{}", r.max_dev);
        for (t, z) in r.times.iter().zip(&r.z_riccati) {
            assert!((z[(0, 0)] - c(0.0, -t.tan())).norm() < 1e-8);
        }
    }

    #[test]
    fn singular_block_ends_comparison_early() {
        // D = cos t vanishes at π/2
        let r = verify_coset_reduction(
            &pauli_x(),
            &UnitaryState {
                u: CMatrix::identity(2, 2),
                t: 0.0,
            },
            (0.0, 2.0),
            201,
            &IntegratorConfig::default(),
        )
        .unwrap();
        let exit = r.exit_time.unwrap();
        assert!(exit < std::f64::consts::FRAC_PI_2 && exit > 1.5, "{exit}");
        assert!(r.exit_reason.is_some());
    }

    #[test]
    fn z_csv_layout() {
        let z = CMatrix::from_row_slice(1, 2, &[c(1.0, 2.0), c(3.0, 4.0)]);
        let mut buf = Vec::new();
        write_z_csv(&mut buf, &[0.5], &[z]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,re_z11,im_z11,re_z12,im_z12");
        let vals: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(vals, vec![0.5, 1.0, 2.0, 3.0, 4.0]);
    }
}

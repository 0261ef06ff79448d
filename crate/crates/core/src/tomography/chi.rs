//! Process matrices in the Pauli basis: `E(ρ) = Σ_mn χ_mn P_m ρ P_n`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};

use super::{hermitian_part, PauliTransferMatrix};
use crate::error::{Error, Result};
use crate::spin::{pauli_basis, C64};

const MAX_ITERATIONS: usize = 5000;
const STEP_TOL: f64 = 1e-13;
/// Largest admixture of the completely depolarizing map accepted to clear
/// residual negative eigenvalues after the alternating projections.
const MAX_POLISH_WEIGHT: f64 = 1e-6;
pub(crate) const PHYSICAL_TOL: f64 = 1e-9;

/// Process matrix over `(I, σ_x, σ_y, σ_z)`. The identity process has `χ_00 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiMatrix(pub Matrix4<C64>);

impl ChiMatrix {
    pub fn identity_process() -> Self {
        let mut m = Matrix4::zeros();
        m[(0, 0)] = C64::from(1.0);
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Ascending eigenvalues of the Hermitian part.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev: Vec<f64> = hermitian_part(&self.0).symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        [ev[0], ev[1], ev[2], ev[3]]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Frobenius norm of `Σ_mn χ_mn P_n P_m − I`.
    pub fn tp_residual(&self) -> f64 {
        let l = tp_map();
        let v = l * vectorize(&self.0) - identity_vec();
        v.norm()
    }

    /// Positive semidefinite and trace preserving within `tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        let herm = (self.0 - self.0.adjoint()).norm() <= tol;
        herm && self.min_eigenvalue() >= -tol && self.tp_residual() <= tol
    }
}

fn vectorize(m: &Matrix4<C64>) -> DVector<C64> {
    DVector::from_iterator(16, (0..16).map(|k| m[(k / 4, k % 4)]))
}

fn unvectorize(v: &DVector<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|m, n| v[4 * m + n])
}

fn identity_vec() -> DVector<C64> {
    DVector::from_vec(vec![C64::from(1.0), C64::from(0.0), C64::from(0.0), C64::from(1.0)])
}

/// `vec(T) = A vec(χ)` with `A_(ij),(mn) = ½ tr(P_i P_m P_j P_n)`.
fn chi_ptm_map() -> &'static (DMatrix<C64>, DMatrix<C64>) {
    static CELL: OnceLock<(DMatrix<C64>, DMatrix<C64>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = pauli_basis();
        let a = DMatrix::from_fn(16, 16, |row, col| {
            let (i, j) = (row / 4, row % 4);
            let (m, n) = (col / 4, col % 4);
            (p[i] * p[m] * p[j] * p[n]).trace() * 0.5
        });
        let inv = a.clone().try_inverse().expect("Pauli basis is complete");
        (a, inv)
    })
}

/// `vec(Σ χ_mn P_n P_m)` as a 4×16 map on `vec(χ)`.
fn tp_map() -> &'static DMatrix<C64> {
    static CELL: OnceLock<DMatrix<C64>> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = pauli_basis();
        DMatrix::from_fn(4, 16, |row, col| {
            let (m, n) = (col / 4, col % 4);
            (p[n] * p[m])[(row / 2, row % 2)]
        })
    })
}

/// `L†(L L†)⁻¹`, the correction operator of the affine projection onto `L χ = I`.
fn tp_correction() -> &'static DMatrix<C64> {
    static CELL: OnceLock<DMatrix<C64>> = OnceLock::new();
    CELL.get_or_init(|| {
        let l = tp_map();
        let llt = l * l.adjoint();
        l.adjoint() * llt.try_inverse().expect("full-rank constraint")
    })
}

pub fn chi_to_ptm(chi: &ChiMatrix) -> PauliTransferMatrix {
    let t = &chi_ptm_map().0 * vectorize(&chi.0);
    PauliTransferMatrix(Matrix4::from_fn(|i, j| t[4 * i + j].re))
}

/// Inverse of [`chi_to_ptm`]. The result is Hermitian for any real `T` but not
/// necessarily positive.
pub fn ptm_to_chi(ptm: &PauliTransferMatrix) -> ChiMatrix {
    let t = DVector::from_iterator(16, (0..16).map(|k| C64::from(ptm.0[(k / 4, k % 4)])));
    ChiMatrix(hermitian_part(&unvectorize(&(&chi_ptm_map().1 * t))))
}

fn project_psd(m: &Matrix4<C64>) -> Matrix4<C64> {
    let eig = hermitian_part(m).symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| C64::from(l.max(0.0)));
    let v = eig.eigenvectors;
    v * Matrix4::from_diagonal(&clipped) * v.adjoint()
}

fn project_tp(m: &Matrix4<C64>) -> Matrix4<C64> {
    let x = vectorize(m);
    let r = tp_map() * &x - identity_vec();
    hermitian_part(&unvectorize(&(x - tp_correction() * r)))
}

/// Nearest CPTP process (Frobenius norm) by Dykstra's alternating projections
/// between the PSD cone and the trace-preserving affine subspace.
///
/// Already-physical input is returned unchanged.
pub fn project_cptp(chi: &ChiMatrix) -> Result<ChiMatrix> {
    let start = hermitian_part(&chi.0);
    if ChiMatrix(start).is_physical(PHYSICAL_TOL) {
        return Ok(ChiMatrix(start));
    }
    let mut x = start;
    let mut p = Matrix4::zeros();
    let mut q = Matrix4::zeros();
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let y = project_psd(&(x + p));
        p = x + p - y;
        let next = project_tp(&(y + q));
        q = y + q - next;
        let step = (next - x).norm();
        x = next;
        if step < STEP_TOL {
            break;
        }
    }

    // x is trace preserving; mix in the depolarizing process to lift tiny
    // negative eigenvalues left by a finite number of iterations.
    let candidate = ChiMatrix(x);
    let lambda = candidate.min_eigenvalue();
    let mut out = candidate;
    if lambda < 0.0 {
        let w = -lambda / (0.25 - lambda);
        if w <= MAX_POLISH_WEIGHT {
            let mix = Matrix4::identity() * C64::from(0.25);
            out = ChiMatrix(x * C64::from(1.0 - w) + mix * C64::from(w));
        }
    }
    if out.is_physical(PHYSICAL_TOL) {
        Ok(out)
    } else {
        Err(Error::NonConvergence {
            iterations,
            tp_residual: out.tp_residual(),
            min_eigenvalue: out.min_eigenvalue(),
        })
    }
}

/// `χ_00`, the process fidelity with the identity.
pub fn identity_overlap(chi: &ChiMatrix) -> f64 {
    chi.0[(0, 0)].re
}

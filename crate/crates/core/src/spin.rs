//! Exact complex linear algebra for a single spin-1/2.
//!
//! Basis ordering is `(|↑⟩, |↓⟩)` with `|↑⟩ = |m=+1/2⟩`, so `σ_z = diag(1, −1)`.
//! Rotations follow `R(n̂, θ) = exp(−i θ/2 n̂·σ)`, which acts on Bloch vectors as
//! a right-handed rotation by `θ` about `n̂`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::Mul;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Tolerance used for the unitary flag and density-matrix validation.
pub const EXACT_TOL: f64 = 1e-12;
/// Allowed deviation of a unit axis from norm one.
pub const AXIS_TOL: f64 = 1e-9;

pub fn identity() -> Mat2 {
    Mat2::identity()
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// The operator basis `(I, σ_x, σ_y, σ_z)`.
pub fn pauli_basis() -> [Mat2; 4] {
    [identity(), sigma_x(), sigma_y(), sigma_z()]
}

/// `λ·σ` for a possibly complex 3-vector `λ = (λ_x, λ_y, λ_z)`, no conjugation.
pub fn pauli_dot(lambda: &[C64; 3]) -> Mat2 {
    sigma_x() * lambda[0] + sigma_y() * lambda[1] + sigma_z() * lambda[2]
}

fn check_unit_axis(axis: [f64; 3]) -> Result<()> {
    let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > AXIS_TOL {
        return Err(Error::InvalidArgument(format!(
            "axis {axis:?} has norm {norm}, expected 1"
        )));
    }
    Ok(())
}

/// A pure spin state `α|↑⟩ + β|↓⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    amplitudes: Vector2<C64>,
}

impl SpinState {
    /// Normalizes `(alpha, beta)`; fails on the zero vector.
    pub fn new(alpha: C64, beta: C64) -> Result<Self> {
        let v = Vector2::new(alpha, beta);
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidArgument(
                "spin state amplitudes must not both vanish".into(),
            ));
        }
        Ok(Self { amplitudes: v / C64::from(norm) })
    }

    pub fn up() -> Self {
        Self { amplitudes: Vector2::new(ONE, ZERO) }
    }

    pub fn down() -> Self {
        Self { amplitudes: Vector2::new(ZERO, ONE) }
    }

    /// The pure state whose Bloch vector points along the unit vector `dir`.
    pub fn along(dir: [f64; 3]) -> Result<Self> {
        check_unit_axis(dir)?;
        let theta = dir[2].clamp(-1.0, 1.0).acos();
        let phi = dir[1].atan2(dir[0]);
        Ok(Self {
            amplitudes: Vector2::new(
                C64::from((theta / 2.0).cos()),
                C64::from_polar((theta / 2.0).sin(), phi),
            ),
        })
    }

    pub fn alpha(&self) -> C64 {
        self.amplitudes[0]
    }

    pub fn beta(&self) -> C64 {
        self.amplitudes[1]
    }

    pub fn vector(&self) -> &Vector2<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(self.amplitudes * self.amplitudes.adjoint())
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &SpinState) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }
}

/// A 2×2 density operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat2);

impl DensityMatrix {
    /// Validates hermiticity and unit trace (1e−12) and positivity (eigenvalues ≥ −1e−10).
    pub fn new(m: Mat2) -> Result<Self> {
        let herm = (m - m.adjoint()).norm();
        if herm > EXACT_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = m.trace();
        if (tr - ONE).norm() > EXACT_TOL {
            return Err(Error::InvalidArgument(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        let rho = Self(m);
        let min_eig = rho.eigenvalues()[1];
        if min_eig < -1e-10 {
            return Err(Error::InvalidArgument(format!(
                "density matrix has negative eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(rho)
    }

    /// Wraps a matrix already known to be a state, symmetrizing away roundoff.
    pub(crate) fn from_matrix_unchecked(m: Mat2) -> Self {
        Self((m + m.adjoint()) * C64::from(0.5))
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat2::identity() * C64::from(0.5))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let b = self.to_bloch();
        let r = b.norm();
        let t = self.trace();
        [(t + r) / 2.0, (t - r) / 2.0]
    }

    /// Probability of finding the spin in `|↑⟩`.
    pub fn prob_up(&self) -> f64 {
        self.0[(0, 0)].re.clamp(0.0, 1.0)
    }

    pub fn to_bloch(&self) -> BlochVector {
        let m = &self.0;
        BlochVector {
            x: 2.0 * m[(0, 1)].re,
            y: -2.0 * m[(0, 1)].im,
            z: (m[(0, 0)] - m[(1, 1)]).re,
        }
    }

    pub fn from_bloch(v: BlochVector) -> Result<Self> {
        if !(v.norm() <= 1.0 + 1e-10) {
            return Err(Error::InvalidArgument(format!(
                "Bloch vector ({}, {}, {}) lies outside the unit ball",
                v.x, v.y, v.z
            )));
        }
        Ok(Self(
            (identity()
                + sigma_x() * C64::from(v.x)
                + sigma_y() * C64::from(v.y)
                + sigma_z() * C64::from(v.z))
                * C64::from(0.5),
        ))
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with(&self, psi: &SpinState) -> f64 {
        psi.vector().dotc(&(self.0 * psi.vector())).re
    }
}

/// A point of the closed unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// A 2×2 operator with a cached unitarity flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinOperator {
    matrix: Mat2,
    unitary: bool,
}

impl SpinOperator {
    pub fn new(matrix: Mat2) -> Self {
        let unitary = (matrix.adjoint() * matrix - Mat2::identity()).norm() <= EXACT_TOL;
        Self { matrix, unitary }
    }

    pub fn identity() -> Self {
        Self { matrix: Mat2::identity(), unitary: true }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.matrix
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn dagger(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), unitary: self.unitary }
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self::new(self.matrix * factor)
    }

    pub fn apply(&self, psi: &SpinState) -> Vector2<C64> {
        self.matrix * psi.vector()
    }

    /// `O ρ O†` without renormalization.
    pub fn sandwich(&self, rho: &DensityMatrix) -> Mat2 {
        self.matrix * rho.matrix() * self.matrix.adjoint()
    }

    /// Conjugates a state by a unitary.
    pub fn conjugate(&self, rho: &DensityMatrix) -> DensityMatrix {
        debug_assert!(self.unitary);
        DensityMatrix::from_matrix_unchecked(self.sandwich(rho))
    }

    pub fn determinant(&self) -> C64 {
        self.matrix.determinant()
    }
}

impl Mul for SpinOperator {
    type Output = SpinOperator;

    fn mul(self, rhs: SpinOperator) -> SpinOperator {
        let matrix = self.matrix * rhs.matrix;
        if self.unitary && rhs.unitary {
            Self { matrix, unitary: true }
        } else {
            Self::new(matrix)
        }
    }
}

/// `λ·σ` for a real unit axis.
pub fn pauli_projection(axis: [f64; 3]) -> Result<SpinOperator> {
    check_unit_axis(axis)?;
    let m = pauli_dot(&axis.map(C64::from));
    Ok(SpinOperator { matrix: m, unitary: true })
}

/// `exp(−i angle/2 axis·σ)`.
pub fn rotation(axis: [f64; 3], angle: f64) -> Result<SpinOperator> {
    check_unit_axis(axis)?;
    Ok(rotation_unchecked(axis, angle))
}

fn rotation_unchecked(axis: [f64; 3], angle: f64) -> SpinOperator {
    let (s, c) = (angle / 2.0).sin_cos();
    let n = pauli_dot(&axis.map(C64::from));
    SpinOperator {
        matrix: Mat2::identity() * C64::from(c) - n * C64::new(0.0, s),
        unitary: true,
    }
}

/// Rotation by `angle` about the equatorial axis `(cos phase, sin phase, 0)`.
pub fn equatorial_rotation(angle: f64, phase: f64) -> SpinOperator {
    let (s, c) = phase.sin_cos();
    rotation_unchecked([c, s, 0.0], angle)
}

/// Moves an operator into the frame co-rotating with the Larmor precession.
///
/// Returns `Rz(phase) · op · Rz(phase)†`, so that `iσ_x ↦ i(cos φ σ_x + sin φ σ_y)`
/// in agreement with the `β e^{−iφ}|↑⟩ + α e^{iφ}|↓⟩` amplitudes of the Raman branch.
pub fn rotating_frame(op: &SpinOperator, phase: f64) -> SpinOperator {
    let d = [C64::from_polar(1.0, -phase / 2.0), C64::from_polar(1.0, phase / 2.0)];
    let m = op.matrix();
    let out = Mat2::new(
        m[(0, 0)],
        d[0] * m[(0, 1)] * d[1].conj(),
        d[1] * m[(1, 0)] * d[0].conj(),
        m[(1, 1)],
    );
    SpinOperator { matrix: out, unitary: op.unitary }
}

/// Applies the channel `ρ ↦ Σ K ρ K†`, checking `Σ K†K = I` to 1e−9.
pub fn apply_kraus(rho: &DensityMatrix, operators: &[Mat2]) -> Result<DensityMatrix> {
    let completeness: Mat2 = operators.iter().map(|k| k.adjoint() * k).sum();
    let dev = (completeness - Mat2::identity()).norm();
    if operators.is_empty() || dev > 1e-9 {
        return Err(Error::ContractViolation(format!(
            "Kraus operators are not trace preserving (‖ΣK†K − I‖ = {dev:.3e})"
        )));
    }
    let out: Mat2 = operators
        .iter()
        .map(|k| k * rho.matrix() * k.adjoint())
        .sum();
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// `⟨ψ|ρ|ψ⟩` for a qubit (dimension 2) or qubit⊗photon (dimension 4) state.
pub fn state_fidelity(rho: &DMatrix<C64>, psi: &DVector<C64>) -> Result<f64> {
    let n = psi.len();
    if !(n == 2 || n == 4) || rho.nrows() != n || rho.ncols() != n {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: ρ is {}×{}, ψ has length {n} (expected 2 or 4)",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let norm = psi.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("ψ has norm {norm}, expected 1")));
    }
    Ok(psi.dotc(&(rho * psi)).re.clamp(0.0, 1.0))
}

/// `‖c·a − b‖_F` minimized over the global phase `c`.
pub fn phase_distance(a: &Mat2, b: &Mat2) -> f64 {
    let overlap = (a.adjoint() * b).trace();
    let c = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { ONE };
    (a * c - b).norm()
}

/// Operator equality up to a physically irrelevant global phase.
pub fn equal_up_to_phase(a: &Mat2, b: &Mat2, tol: f64) -> bool {
    phase_distance(a, b) <= tol
}

//! Ion–photon scattering: branch operators, heralded outcomes and the joint state.
//!
//! A resonant photon absorbed with polarization `λ_L` and re-emitted along `x̂`
//! with polarization `λ_i` acts on the spin as `R_{λ_i} R_{λ_L}` with
//! `R_λ = λ·σ`. Both factors are taken in the Larmor rotating frame at the common
//! phase `ω₀ t_s`. The two outcomes of a polarization analysis each carry
//! amplitude `1/√2`.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use crate::error::{Error, Result};
use crate::spin::{
    pauli_dot, rotating_frame, sigma_x, sigma_y, state_fidelity, DensityMatrix, Mat2,
    SpinOperator, SpinState, C64,
};

/// Branch probabilities below this leave the post-state undefined.
pub const MIN_BRANCH_PROBABILITY: f64 = 1e-14;

/// Outcome of the polarization analysis.
///
/// `V` is the analysis vector that reduces to `ẑ` at `theta = 0` (Rayleigh,
/// `Δm = 0`) and becomes `V′ = (H − V)/√2` at `theta = π/4`; `H` is its partner
/// (`ŷ`, Raman, `Δm = ±1`, and `H′ = (H + V)/√2` respectively).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    V,
    H,
}

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::V, Branch::H];

    /// 1-based index used in record files.
    pub fn index(self) -> u8 {
        match self {
            Branch::V => 1,
            Branch::H => 2,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(Branch::V),
            2 => Some(Branch::H),
            _ => None,
        }
    }

    fn slot(self) -> usize {
        self.index() as usize - 1
    }
}

/// Analysis basis for photons emitted along `x̂`.
///
/// The linear pair is `v₁ = cos θ ẑ − sin θ ŷ`, `v₂ = sin θ ẑ + cos θ ŷ`, i.e. the
/// `(ẑ, ŷ)` pair turned by `θ` about `x̂`. Ellipticity `ε` mixes them into
/// `e₁ = cos ε v₁ + i sin ε v₂` and `e₂ = cos ε v₂ + i sin ε v₁`. A retardance `δ`
/// multiplies the `ŷ` components by `e^{iδ}`, as an uncompensated waveplate would.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationBasis {
    pub theta: f64,
    pub ellipticity: f64,
    #[serde(default)]
    pub retardance: f64,
}

impl PolarizationBasis {
    pub fn new(theta: f64, ellipticity: f64) -> Result<Self> {
        if !theta.is_finite() || !ellipticity.is_finite() {
            return Err(Error::InvalidArgument("basis angles must be finite".into()));
        }
        // admit rounded decimal inputs such as 0.7853981634
        if ellipticity.abs() > FRAC_PI_4 + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "ellipticity {ellipticity} outside [−π/4, π/4]"
            )));
        }
        let ellipticity = ellipticity.clamp(-FRAC_PI_4, FRAC_PI_4);
        Ok(Self { theta, ellipticity, retardance: 0.0 })
    }

    pub fn linear(theta: f64) -> Self {
        Self { theta, ellipticity: 0.0, retardance: 0.0 }
    }

    /// `{|V⟩ = ẑ, |H⟩ = ŷ}`.
    pub fn hv() -> Self {
        Self::linear(0.0)
    }

    /// `{|V′⟩, |H′⟩}`, rotated by 45° from `{V, H}`.
    pub fn diagonal() -> Self {
        Self::linear(FRAC_PI_4)
    }

    pub fn with_retardance(mut self, retardance: f64) -> Self {
        self.retardance = retardance;
        self
    }

    pub fn is_linear(&self) -> bool {
        self.ellipticity.abs() <= 1e-12 && self.retardance.abs() <= 1e-12
    }

    /// The two orthonormal analysis vectors in `(x, y, z)` components.
    pub fn analysis_vectors(&self) -> [[C64; 3]; 2] {
        let (st, ct) = self.theta.sin_cos();
        let v1 = [0.0, -st, ct];
        let v2 = [0.0, ct, st];
        let (se, ce) = self.ellipticity.sin_cos();
        let ret = C64::from_polar(1.0, self.retardance);
        let mix = |a: [f64; 3], b: [f64; 3]| {
            let mut e = [C64::from(0.0); 3];
            for k in 0..3 {
                e[k] = C64::new(ce * a[k], se * b[k]);
            }
            e[1] *= ret;
            e
        };
        [mix(v1, v2), mix(v2, v1)]
    }
}

/// Polarization of the excitation laser (`λ_L`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationPolarization {
    direction: [f64; 3],
}

impl ExcitationPolarization {
    pub fn new(direction: [f64; 3]) -> Result<Self> {
        let norm = direction.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "excitation polarization {direction:?} is not a unit vector"
            )));
        }
        Ok(Self { direction })
    }

    pub fn direction(&self) -> [f64; 3] {
        self.direction
    }
}

impl Default for ExcitationPolarization {
    /// π-polarized, along the magnetic field `ẑ`.
    fn default() -> Self {
        Self { direction: [0.0, 0.0, 1.0] }
    }
}

/// One heralded outcome of a scattering event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterOutcome {
    pub branch: Branch,
    pub probability: f64,
    /// `None` when the branch probability is below [`MIN_BRANCH_PROBABILITY`].
    pub post_state: Option<DensityMatrix>,
    /// The (unnormalized) measurement operator that acted.
    pub operator: SpinOperator,
}

/// Measurement operators `M_i = R̃_{λ_i}(φ) R̃_{λ_L}(φ) / √2` for both branches.
pub fn branch_operators(
    excitation: &ExcitationPolarization,
    basis: &PolarizationBasis,
    phase: f64,
) -> [SpinOperator; 2] {
    let absorb = rotating_frame(
        &SpinOperator::new(pauli_dot(&excitation.direction().map(C64::from))),
        phase,
    );
    basis.analysis_vectors().map(|e| {
        let emit = rotating_frame(&SpinOperator::new(pauli_dot(&e)), phase);
        (emit * absorb).scaled(C64::from(FRAC_1_SQRT_2))
    })
}

/// Heralded scattering of `state`: Born probabilities and conditional post-states.
pub fn scatter(
    state: &DensityMatrix,
    excitation: &ExcitationPolarization,
    basis: &PolarizationBasis,
    phase: f64,
) -> [ScatterOutcome; 2] {
    let ops = branch_operators(excitation, basis, phase);
    let mut out = Branch::ALL.map(|branch| {
        let op = ops[branch.slot()];
        let unnormalized = op.sandwich(state);
        let probability = unnormalized.trace().re.max(0.0);
        let post_state = (probability >= MIN_BRANCH_PROBABILITY).then(|| {
            DensityMatrix::from_matrix_unchecked(unnormalized / C64::from(probability))
        });
        ScatterOutcome { branch, probability, post_state, operator: op }
    });
    // the two probabilities sum to tr ρ analytically; remove roundoff
    let total = out[0].probability + out[1].probability;
    if total > 0.0 {
        for o in &mut out {
            o.probability /= total;
        }
    }
    out
}

/// Index of `|spin⟩ ⊗ |photon⟩` in the 4-dimensional joint space.
pub fn joint_index(spin: usize, photon: Branch) -> usize {
    2 * spin + photon.slot()
}

/// The ion–photon state in the rotating frame for the `{V, H}` analysis:
/// `[(α|↑⟩ + β|↓⟩)|V⟩ + i(β e^{−iφ}|↑⟩ + α e^{iφ}|↓⟩)|H⟩] / √2`.
pub fn joint_state(input: &SpinState, phase: f64) -> Vector4<C64> {
    let (a, b) = (input.alpha(), input.beta());
    let i = C64::new(0.0, 1.0);
    let s = C64::from(FRAC_1_SQRT_2);
    let mut psi = Vector4::zeros();
    psi[joint_index(0, Branch::V)] = a * s;
    psi[joint_index(1, Branch::V)] = b * s;
    psi[joint_index(0, Branch::H)] = i * b * C64::from_polar(1.0, -phase) * s;
    psi[joint_index(1, Branch::H)] = i * a * C64::from_polar(1.0, phase) * s;
    psi
}

/// `Σ_i M_i|φ⟩ ⊗ |i⟩` for an arbitrary analysis basis.
pub fn joint_state_in_basis(
    input: &SpinState,
    excitation: &ExcitationPolarization,
    basis: &PolarizationBasis,
    phase: f64,
) -> Vector4<C64> {
    let ops = branch_operators(excitation, basis, phase);
    let mut psi = Vector4::zeros();
    for branch in Branch::ALL {
        let v = ops[branch.slot()].apply(input);
        psi[joint_index(0, branch)] = v[0];
        psi[joint_index(1, branch)] = v[1];
    }
    psi
}

/// Traces the photon out of a joint operator.
pub fn trace_photon(rho: &Matrix4<C64>) -> Mat2 {
    let mut out = Mat2::zeros();
    for r in 0..2 {
        for c in 0..2 {
            out[(r, c)] = Branch::ALL
                .iter()
                .map(|&p| rho[(joint_index(r, p), joint_index(c, p))])
                .sum();
        }
    }
    out
}

/// Applies a spin operator `K ⊗ 1` on both sides: `(K⊗1) ρ (K⊗1)†`.
pub fn sandwich_spin(k: &Mat2, rho: &Matrix4<C64>) -> Matrix4<C64> {
    let mut big = Matrix4::zeros();
    for r in 0..2 {
        for c in 0..2 {
            for p in Branch::ALL {
                big[(joint_index(r, p), joint_index(c, p))] = k[(r, c)];
            }
        }
    }
    big * rho * big.adjoint()
}

/// The scattering channel with the photon traced out and the phase averaged:
/// `ρ ↦ ρ/2 + (σ_x ρ σ_x + σ_y ρ σ_y)/4`, i.e. `(x, y, z) ↦ (x/2, y/2, 0)`.
pub fn unconditioned_channel(rho: &DensityMatrix) -> DensityMatrix {
    let m = rho.matrix();
    let (sx, sy) = (sigma_x(), sigma_y());
    let out = m * C64::from(0.5) + (sx * m * sx + sy * m * sy) * C64::from(0.25);
    DensityMatrix::from_matrix_unchecked(out)
}

/// Overlap of a joint density operator with the ideal state of [`joint_state`].
pub fn entanglement_fidelity(rho_joint: &DMatrix<C64>, input: &SpinState, phase: f64) -> Result<f64> {
    if rho_joint.nrows() != 4 || rho_joint.ncols() != 4 {
        return Err(Error::InvalidArgument(format!(
            "joint density matrix must be 4×4, got {}×{}",
            rho_joint.nrows(),
            rho_joint.ncols()
        )));
    }
    let ideal = joint_state(input, phase);
    state_fidelity(rho_joint, &DVector::from_iterator(4, ideal.iter().cloned()))
}

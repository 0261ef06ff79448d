//! Single-qubit process tomography and Ramsey fringe analysis.
//!
//! The protocol prepares `|↑⟩, |↓⟩, |+x⟩, |+y⟩` and measures each output along
//! `x`, `y` and `z` (twelve settings). Linear inversion of the twelve Pauli
//! expectations gives the affine Bloch map, i.e. the Pauli transfer matrix;
//! [`ptm_to_chi`] and [`project_cptp`] turn it into a physical process matrix.

mod chi;
mod fringe;

pub use chi::{chi_to_ptm, identity_overlap, project_cptp, ptm_to_chi, ChiMatrix};
pub use fringe::{bin_by_phase, fit_fringe, FringeBin, FringeFit, DEFAULT_PHASE_BINS};

use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{
    derive_seed, run_experiment, tomography_preparations, ExperimentConfig, Outcome, Pulse,
    PulseSequence, ShotRecord,
};
use crate::error::{Error, Result};
use crate::spin::{pauli_basis, BlochVector, Mat2, C64};

pub const SETTING_COUNT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasurementAxis {
    X,
    Y,
    Z,
}

impl MeasurementAxis {
    pub const ALL: [MeasurementAxis; 3] = [MeasurementAxis::X, MeasurementAxis::Y, MeasurementAxis::Z];

    pub fn index(self) -> usize {
        match self {
            MeasurementAxis::X => 0,
            MeasurementAxis::Y => 1,
            MeasurementAxis::Z => 2,
        }
    }

    /// Pulse that maps this axis onto `+z` before the `σ_z` readout.
    pub fn analysis_pulse(self) -> Option<Pulse> {
        match self {
            MeasurementAxis::X => Some(Pulse::y(-FRAC_PI_2)),
            MeasurementAxis::Y => Some(Pulse::x(FRAC_PI_2)),
            MeasurementAxis::Z => None,
        }
    }
}

/// One (preparation, measurement axis) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographySetting {
    /// `3·prep_index + axis.index()`.
    pub id: usize,
    pub prep_index: usize,
    /// Nominal Bloch vector of the prepared state.
    pub input: BlochVector,
    pub prep: Option<Pulse>,
    pub axis: MeasurementAxis,
    pub analysis: Option<Pulse>,
}

impl TomographySetting {
    /// `seq` with this setting's preparation and analysis pulses.
    pub fn apply_to(&self, seq: &PulseSequence) -> PulseSequence {
        seq.with_setting(self.prep, self.analysis)
    }
}

fn preparation_vectors() -> [BlochVector; 4] {
    [
        BlochVector::new(0.0, 0.0, 1.0),
        BlochVector::new(0.0, 0.0, -1.0),
        BlochVector::new(1.0, 0.0, 0.0),
        BlochVector::new(0.0, 1.0, 0.0),
    ]
}

/// The twelve settings, ordered by preparation then axis.
pub fn tomography_plan() -> Vec<TomographySetting> {
    let preps = tomography_preparations();
    let inputs = preparation_vectors();
    let mut plan = Vec::with_capacity(SETTING_COUNT);
    for (k, (prep, input)) in preps.into_iter().zip(inputs).enumerate() {
        for axis in MeasurementAxis::ALL {
            plan.push(TomographySetting {
                id: 3 * k + axis.index(),
                prep_index: k,
                input,
                prep,
                axis,
                analysis: axis.analysis_pulse(),
            });
        }
    }
    plan
}

/// Outcome tallies of one setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SettingCounts {
    pub ups: u64,
    pub total: u64,
}

impl SettingCounts {
    pub fn add(&mut self, outcome: Outcome) {
        self.total += 1;
        if outcome == Outcome::Up {
            self.ups += 1;
        }
    }

    /// Estimated `⟨σ⟩ = 2 P(up) − 1`.
    pub fn expectation(&self) -> f64 {
        2.0 * self.ups as f64 / self.total as f64 - 1.0
    }
}

/// Tallies `(setting_id, outcome)` pairs; ids outside the plan are ignored.
pub fn count_by_setting<I>(outcomes: I) -> Vec<SettingCounts>
where
    I: IntoIterator<Item = (usize, Outcome)>,
{
    let mut counts = vec![SettingCounts::default(); SETTING_COUNT];
    for (id, outcome) in outcomes {
        if let Some(c) = counts.get_mut(id) {
            c.add(outcome);
        }
    }
    counts
}

/// Pauli transfer matrix `T_ij = ½ tr(P_i E(P_j))` over `(I, σ_x, σ_y, σ_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliTransferMatrix(pub Matrix4<f64>);

impl PauliTransferMatrix {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    /// Builds `T` from a linear map on 2×2 operators.
    pub fn from_map<F: Fn(&Mat2) -> Mat2>(channel: F) -> Self {
        let p = pauli_basis();
        Self(Matrix4::from_fn(|i, j| {
            0.5 * (p[i] * channel(&p[j])).trace().re
        }))
    }

    pub fn from_kraus(ops: &[Mat2]) -> Self {
        Self::from_map(|m| ops.iter().map(|k| k * m * k.adjoint()).sum())
    }

    /// The affine Bloch map `(M, t)` with `r ↦ M r + t`.
    pub fn from_bloch_map(m: &Matrix3<f64>, t: &[f64; 3]) -> Self {
        let mut out = Matrix4::zeros();
        out[(0, 0)] = 1.0;
        for i in 0..3 {
            out[(i + 1, 0)] = t[i];
            for j in 0..3 {
                out[(i + 1, j + 1)] = m[(i, j)];
            }
        }
        Self(out)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn bloch_block(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(1, 1).into_owned()
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.0[(1, 0)], self.0[(2, 0)], self.0[(3, 0)]]
    }

    pub fn apply(&self, r: &BlochVector) -> BlochVector {
        let m = self.bloch_block();
        let t = self.translation();
        let v = m * nalgebra::Vector3::new(r.x, r.y, r.z);
        BlochVector::new(v[0] + t[0], v[1] + t[1], v[2] + t[2])
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &PauliTransferMatrix) -> Self {
        Self(self.0 * other.0)
    }
}

/// A linear-inversion estimate with binomial standard errors on every entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtmEstimate {
    pub ptm: PauliTransferMatrix,
    pub std_err: Matrix4<f64>,
}

/// Pseudo-inverse of the design matrix mapping the 12 unknowns
/// `(t_x, t_y, t_z, M_00 … M_22)` to the 12 expectation values.
fn inversion_matrix() -> &'static DMatrix<f64> {
    static CELL: OnceLock<DMatrix<f64>> = OnceLock::new();
    CELL.get_or_init(|| {
        let plan = tomography_plan();
        let mut design = DMatrix::zeros(SETTING_COUNT, 12);
        for s in &plan {
            let a = s.axis.index();
            design[(s.id, a)] = 1.0;
            for (j, r) in s.input.as_array().into_iter().enumerate() {
                design[(s.id, 3 + 3 * a + j)] = r;
            }
        }
        design.pseudo_inverse(1e-12).expect("informationally complete plan")
    })
}

/// Least-squares linear inversion of the twelve setting expectations.
pub fn estimate_ptm(counts: &[SettingCounts]) -> Result<PtmEstimate> {
    let missing: Vec<usize> = (0..SETTING_COUNT)
        .filter(|&i| counts.get(i).is_none_or(|c| c.total == 0))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteData { missing });
    }
    let means = DVector::from_iterator(SETTING_COUNT, counts.iter().take(SETTING_COUNT).map(|c| c.expectation()));
    let vars = DVector::from_iterator(
        SETTING_COUNT,
        counts.iter().take(SETTING_COUNT).map(|c| {
            let m = c.expectation();
            (1.0 - m * m).max(0.0) / c.total as f64
        }),
    );
    let pinv = inversion_matrix();
    let u = pinv * &means;
    let u_var = pinv.map(|x| x * x) * &vars;

    let mut t = Matrix4::zeros();
    let mut se = Matrix4::zeros();
    t[(0, 0)] = 1.0;
    for a in 0..3 {
        t[(a + 1, 0)] = u[a];
        se[(a + 1, 0)] = u_var[a].sqrt();
        for j in 0..3 {
            t[(a + 1, j + 1)] = u[3 + 3 * a + j];
            se[(a + 1, j + 1)] = u_var[3 + 3 * a + j].sqrt();
        }
    }
    Ok(PtmEstimate { ptm: PauliTransferMatrix(t), std_err: se })
}

/// The image of the pure-state sphere under an affine Bloch map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochEllipsoid {
    pub center: [f64; 3],
    /// Sorted in descending order.
    pub semi_axes: [f64; 3],
    /// `principal_directions[k]` is the unit direction of `semi_axes[k]`.
    pub principal_directions: [[f64; 3]; 3],
}

/// Semi-axes are the singular values of the Bloch block; the center is the translation.
pub fn bloch_ellipsoid(ptm: &PauliTransferMatrix) -> BlochEllipsoid {
    let svd = ptm.bloch_block().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let semi_axes = order.map(|k| svd.singular_values[k]);
    let principal_directions = order.map(|k| [u[(0, k)], u[(1, k)], u[(2, k)]]);
    BlochEllipsoid { center: ptm.translation(), semi_axes, principal_directions }
}

/// Everything reconstructed from one set of tomography counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessEstimate {
    pub ptm: PtmEstimate,
    pub chi_raw: ChiMatrix,
    pub chi: ChiMatrix,
    pub identity_overlap: f64,
    pub ellipsoid: BlochEllipsoid,
}

/// Linear inversion, χ conversion, CPTP projection, overlap and ellipsoid.
pub fn reconstruct_process(counts: &[SettingCounts]) -> Result<ProcessEstimate> {
    let ptm = estimate_ptm(counts)?;
    let chi_raw = ptm_to_chi(&ptm.ptm);
    let chi = project_cptp(&chi_raw)?;
    Ok(ProcessEstimate {
        ptm,
        chi_raw,
        chi,
        identity_overlap: identity_overlap(&chi),
        ellipsoid: bloch_ellipsoid(&ptm.ptm),
    })
}

/// Runs all twelve settings of `seq`; setting `k` uses seed `derive_seed(seed, k)`.
///
/// `config.shots` is the number of shots per setting.
pub fn run_tomography(config: &ExperimentConfig, seq: &PulseSequence) -> Result<Vec<(usize, ShotRecord)>> {
    let per_setting: Vec<Result<Vec<(usize, ShotRecord)>>> = tomography_plan()
        .into_par_iter()
        .map(|s| {
            let cfg = ExperimentConfig { seed: derive_seed(config.seed, s.id as u64), ..*config };
            Ok(run_experiment(&cfg, &s.apply_to(seq))?
                .into_iter()
                .map(|r| (s.id, r))
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(SETTING_COUNT * config.shots as usize);
    for chunk in per_setting {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Exact `P(up)` of every setting for a channel given as its transfer matrix.
pub fn setting_probabilities(ptm: &PauliTransferMatrix) -> [f64; SETTING_COUNT] {
    let mut out = [0.0; SETTING_COUNT];
    for s in tomography_plan() {
        let r = ptm.apply(&s.input).as_array();
        out[s.id] = 0.5 * (1.0 + r[s.axis.index()]);
    }
    out
}

pub(crate) fn hermitian_part(m: &Matrix4<C64>) -> Matrix4<C64> {
    (m + m.adjoint()) * C64::from(0.5)
}

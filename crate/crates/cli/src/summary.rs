//! Analyses over record rows and the JSON summary document.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, Matrix4};
use scatter_reversal::engine::{heralded_joint_density, ExperimentConfig, PulseSequence};
use scatter_reversal::scattering::{
    branch_operators, entanglement_fidelity, Branch, PolarizationBasis,
};
use scatter_reversal::spin::{DensityMatrix, SpinState, C64};
use scatter_reversal::tomography::{
    bin_by_phase, count_by_setting, fit_fringe, reconstruct_process, BlochEllipsoid, FringeBin,
    FringeFit, DEFAULT_PHASE_BINS,
};
use serde::{Deserialize, Serialize};

use crate::manifest::{Analysis, Manifest};
use crate::records::RecordRow;

/// Which records enter an analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    /// Every heralded record, branch and phase discarded.
    #[default]
    Unconditioned,
    V,
    H,
    /// Records that went through the correction stage.
    Corrected,
}

impl Filter {
    pub fn keep(self, row: &RecordRow) -> bool {
        match self {
            Filter::Unconditioned => true,
            Filter::V => row.branch == Some(Branch::V),
            Filter::H => row.branch == Some(Branch::H),
            Filter::Corrected => row.corrected,
        }
    }
}

impl FromStr for Filter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "unconditioned" | "all" => Ok(Filter::Unconditioned),
            "v" => Ok(Filter::V),
            "h" => Ok(Filter::H),
            "corrected" => Ok(Filter::Corrected),
            _ => Err(format!("unknown filter `{s}` (expected V, H, unconditioned or corrected)")),
        }
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Filter::Unconditioned => "unconditioned",
            Filter::V => "V",
            Filter::H => "H",
            Filter::Corrected => "corrected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchStats {
    pub records: u64,
    pub v: u64,
    pub h: u64,
    pub dark: u64,
    pub mean_attempts: f64,
}

impl BranchStats {
    pub fn from_rows(rows: &[RecordRow]) -> Self {
        let mut s = BranchStats { records: rows.len() as u64, ..Default::default() };
        let mut attempts = 0.0;
        for r in rows {
            match r.branch {
                Some(Branch::V) => s.v += 1,
                Some(Branch::H) => s.h += 1,
                None => {}
            }
            s.dark += u64::from(r.is_dark);
            attempts += r.n_attempts as f64;
        }
        if !rows.is_empty() {
            s.mean_attempts = attempts / rows.len() as f64;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographySummary {
    pub filter: Filter,
    pub records_used: u64,
    /// Projected process matrix, real and imaginary parts, row-major.
    pub chi_re: [[f64; 4]; 4],
    pub chi_im: [[f64; 4]; 4],
    /// The linear-inversion χ before projection.
    pub chi_raw_re: [[f64; 4]; 4],
    pub chi_raw_im: [[f64; 4]; 4],
    pub identity_overlap: f64,
    pub ptm: [[f64; 4]; 4],
    pub ptm_std_err: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeSummary {
    pub branch: Branch,
    pub fit: FringeFit,
    pub bins: Vec<FringeBin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostStatePurity {
    pub v: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub sequence: PulseSequence,
    pub analyses: Vec<Analysis>,
    pub records: Option<String>,
    pub branch_stats: BranchStats,
    pub tomography: Option<TomographySummary>,
    pub ellipsoid: Option<BlochEllipsoid>,
    pub fringes: Vec<FringeSummary>,
    pub entanglement_fidelity: Option<f64>,
    /// Purity of each branch's post-state for a maximally mixed input.
    pub post_state_purity: Option<PostStatePurity>,
}

impl Summary {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    #[cfg(test)]
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn rows_of(m: &Matrix4<f64>) -> [[f64; 4]; 4] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

/// Summary of `rows` for `manifest`. Pure: the same rows and manifest always
/// give the same document.
pub fn summarize(manifest: &Manifest, rows: &[RecordRow], filter: Filter, records: Option<&Path>) -> Result<Summary> {
    let config = manifest.config();
    let seq = manifest.pulse_sequence()?;
    let mut summary = Summary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config,
        sequence: seq.clone(),
        analyses: manifest.analyses.clone(),
        records: records.map(|p| p.display().to_string()),
        branch_stats: BranchStats::from_rows(rows),
        tomography: None,
        ellipsoid: None,
        fringes: Vec::new(),
        entanglement_fidelity: None,
        post_state_purity: seq.scatter_basis.map(|b| post_state_purity(&seq, &b)),
    };

    if manifest.wants(Analysis::needs_tomography) {
        let t = tomography(rows, filter)?;
        summary.ellipsoid = manifest
            .wants(|a| a == Analysis::Ellipsoid)
            .then_some(t.1);
        summary.tomography = manifest.wants(|a| a == Analysis::Tomography).then_some(t.0);
    }
    for &a in &manifest.analyses {
        match a {
            Analysis::Fringe(m) => summary.fringes.extend(fringes(rows, m)?),
            Analysis::EntanglementFidelity => {
                summary.entanglement_fidelity = Some(joint_fidelity(&config, &seq)?)
            }
            _ => {}
        }
    }
    Ok(summary)
}

pub fn tomography(rows: &[RecordRow], filter: Filter) -> Result<(TomographySummary, BlochEllipsoid)> {
    let kept: Vec<&RecordRow> = rows.iter().filter(|r| filter.keep(r)).collect();
    if kept.is_empty() {
        bail!("no records pass the `{filter}` filter");
    }
    if kept.iter().all(|r| r.setting_id.is_none()) {
        bail!("records carry no tomography setting ids; rerun with the tomography analysis");
    }
    let counts = count_by_setting(kept.iter().filter_map(|r| r.setting_id.map(|id| (id, r.outcome))));
    let est = reconstruct_process(&counts)?;
    let re = |c: &scatter_reversal::tomography::ChiMatrix| rows_of(&c.0.map(|z| z.re));
    let im = |c: &scatter_reversal::tomography::ChiMatrix| rows_of(&c.0.map(|z| z.im));
    Ok((
        TomographySummary {
            filter,
            records_used: kept.len() as u64,
            chi_re: re(&est.chi),
            chi_im: im(&est.chi),
            chi_raw_re: re(&est.chi_raw),
            chi_raw_im: im(&est.chi_raw),
            identity_overlap: est.identity_overlap,
            ptm: rows_of(&est.ptm.ptm.0),
            ptm_std_err: rows_of(&est.ptm.std_err),
        },
        est.ellipsoid,
    ))
}

/// Harmonic-`m` fits of `P(up)` against `φ_TAC` for each branch.
pub fn fringes(rows: &[RecordRow], m: u32) -> Result<Vec<FringeSummary>> {
    Branch::ALL
        .iter()
        .map(|&b| {
            let samples = rows
                .iter()
                .filter(|r| r.branch == Some(b))
                .map(|r| (r.phi_tac, r.is_up()));
            let bins = bin_by_phase(samples, DEFAULT_PHASE_BINS)?;
            let fit = fit_fringe(&bins, m).with_context(|| format!("fitting branch {b:?}"))?;
            Ok(FringeSummary { branch: b, fit, bins })
        })
        .collect()
}

/// Overlap of the modelled heralded spin–photon state with the ideal one, for
/// the state the sequence prepares.
pub fn joint_fidelity(config: &ExperimentConfig, seq: &PulseSequence) -> Result<f64> {
    let Some(basis) = seq.scatter_basis else {
        bail!("entanglement fidelity needs a scattering block");
    };
    if basis.theta != 0.0 || !basis.is_linear() {
        bail!("entanglement fidelity is defined for the H/V analysis basis");
    }
    let mut input = SpinState::up().density();
    if let Some(p) = seq.prep {
        input = p.operator().conjugate(&input);
    }
    let b = input.to_bloch();
    let psi = SpinState::along([b.x, b.y, b.z])?;
    let phase = 0.0;
    let rho = heralded_joint_density(&config.errors, &seq.excitation, &basis, &psi, phase);
    Ok(entanglement_fidelity(&DMatrix::from_fn(4, 4, |i, j| rho[(i, j)]), &psi, phase)?)
}

/// Born-rule post-state purity of each branch for an unpolarized input spin.
pub fn post_state_purity(seq: &PulseSequence, basis: &PolarizationBasis) -> PostStatePurity {
    let ops = branch_operators(&seq.excitation, basis, 0.0);
    let purity = |k: usize| {
        let m = ops[k].matrix() * ops[k].matrix().adjoint();
        let p = m.trace().re;
        if p <= 0.0 {
            return f64::NAN;
        }
        DensityMatrix::new(m / C64::from(p)).map(|d| d.purity()).unwrap_or(f64::NAN)
    };
    PostStatePurity { v: purity(Branch::V.index() as usize - 1), h: purity(Branch::H.index() as usize - 1) }
}

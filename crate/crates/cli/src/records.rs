//! The records file: CSV with a header row, one line per shot.
//!
//! Columns: `shot_id, setting_id, branch, phi_tac, outcome, n_attempts, is_dark,
//! corrected`. `setting_id` is empty outside tomography runs, `branch` is empty
//! without scattering, and `phi_tac` is printed with 9 significant digits.

use std::path::Path;

use anyhow::{Context, Result};
use scatter_reversal::engine::{Outcome, ShotRecord};
use scatter_reversal::scattering::Branch;
use serde::{Deserialize, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub shot_id: u64,
    pub setting_id: Option<usize>,
    pub branch: Option<Branch>,
    #[serde(serialize_with = "nine_digits")]
    pub phi_tac: f64,
    pub outcome: Outcome,
    pub n_attempts: u64,
    pub is_dark: bool,
    /// The shot went through a correction stage (the pulse may be the identity).
    pub corrected: bool,
}

impl RecordRow {
    /// The row as it reads back from disk, so analyses agree bit-for-bit with
    /// a rerun from the records file.
    pub fn from_shot(setting_id: Option<usize>, r: &ShotRecord, corrected_sequence: bool) -> Self {
        Self {
            shot_id: r.shot_id,
            setting_id,
            branch: r.branch,
            phi_tac: format_sig(r.phi_tac_recorded).parse().expect("formatted float"),
            outcome: r.outcome,
            n_attempts: r.n_attempts,
            is_dark: r.is_dark,
            corrected: corrected_sequence && r.branch.is_some(),
        }
    }

    pub fn is_up(&self) -> bool {
        self.outcome == Outcome::Up
    }
}

/// `x` with 9 significant digits in plain decimal notation.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn nine_digits<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_sig(*x))
}

pub fn write_records(path: &Path, rows: &[RecordRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RecordRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("{}: record {}", path.display(), i + 1)))
        .collect()
}

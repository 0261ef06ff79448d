//! Binning and harmonic fits of `P(up)` against the recorded phase.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PHASE_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeBin {
    pub center: f64,
    pub count: u64,
    pub ups: u64,
}

impl FringeBin {
    /// Fraction of up outcomes; `NaN` for an empty bin.
    pub fn p_up(&self) -> f64 {
        self.ups as f64 / self.count as f64
    }
}

/// `P(up) ≈ offset + amplitude·cos(m·φ + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub harmonic: u32,
    pub offset: f64,
    pub amplitude: f64,
    pub phase: f64,
    /// `amplitude / offset`, or 0 when the offset vanishes.
    pub contrast: f64,
    /// Count-weighted RMS residual.
    pub residual: f64,
    pub bins_used: usize,
}

impl FringeFit {
    pub fn evaluate(&self, phi: f64) -> f64 {
        self.offset + self.amplitude * (self.harmonic as f64 * phi + self.phase).cos()
    }
}

/// Sorts `(phase, up)` samples into `n_bins` equal bins over `[0, 2π)`.
pub fn bin_by_phase<I>(samples: I, n_bins: usize) -> Result<Vec<FringeBin>>
where
    I: IntoIterator<Item = (f64, bool)>,
{
    if n_bins == 0 {
        return Err(Error::InvalidArgument("need at least one phase bin".into()));
    }
    let width = TAU / n_bins as f64;
    let mut bins: Vec<FringeBin> = (0..n_bins)
        .map(|k| FringeBin { center: (k as f64 + 0.5) * width, count: 0, ups: 0 })
        .collect();
    for (phi, up) in samples {
        if !phi.is_finite() {
            return Err(Error::InvalidArgument(format!("phase {phi} is not finite")));
        }
        let k = ((phi.rem_euclid(TAU) / width) as usize).min(n_bins - 1);
        bins[k].count += 1;
        bins[k].ups += u64::from(up);
    }
    Ok(bins)
}

/// Weighted least-squares fit of one harmonic; weights are the bin counts.
pub fn fit_fringe(bins: &[FringeBin], harmonic: u32) -> Result<FringeFit> {
    const PARAMS: usize = 3;
    let used: Vec<&FringeBin> = bins.iter().filter(|b| b.count > 0).collect();
    if used.len() < PARAMS + 1 {
        return Err(Error::Underdetermined { bins: used.len(), params: PARAMS });
    }
    let m = harmonic as f64;
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for b in &used {
        let w = b.count as f64;
        let row = Vector3::new(1.0, (m * b.center).cos(), (m * b.center).sin());
        normal += row * row.transpose() * w;
        rhs += row * (w * b.p_up());
    }
    let coef = normal
        .cholesky()
        .ok_or(Error::Underdetermined { bins: used.len(), params: PARAMS })?
        .solve(&rhs);
    let (offset, a, b) = (coef[0], coef[1], coef[2]);
    let amplitude = a.hypot(b);
    let mut fit = FringeFit {
        harmonic,
        offset,
        amplitude,
        phase: (-b).atan2(a),
        contrast: if offset.abs() > 1e-12 { amplitude / offset } else { 0.0 },
        residual: 0.0,
        bins_used: used.len(),
    };
    let (mut ss, mut wsum) = (0.0, 0.0);
    for bin in &used {
        let w = bin.count as f64;
        ss += w * (bin.p_up() - fit.evaluate(bin.center)).powi(2);
        wsum += w;
    }
    fit.residual = (ss / wsum).sqrt();
    Ok(fit)
}

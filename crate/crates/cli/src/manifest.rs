//! Run manifests: a TOML file naming a sequence, the experiment parameters and
//! the analyses to run. The key reference lives in `schema/manifest.toml`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use scatter_reversal::engine::{sequence, ErrorBudget, ExperimentConfig, Pulse, PulseSequence};
use scatter_reversal::scattering::{ExcitationPolarization, PolarizationBasis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub sequence: SequenceSpec,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub errors: ErrorBudget,
    #[serde(default)]
    pub output: OutputSection,
}

/// A catalog name such as `"corrected_HV"` or an inline `[sequence]` table.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum SequenceSpec {
    Named(String),
    Inline(InlineSequence),
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSequence {
    pub name: String,
    /// Omitted for a sequence without scattering.
    pub basis: Option<BasisSpec>,
    #[serde(default)]
    pub corrected: bool,
    pub prep: Option<Pulse>,
    pub analysis: Option<Pulse>,
    pub excitation: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub theta: f64,
    #[serde(default)]
    pub ellipticity: f64,
    #[serde(default)]
    pub retardance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub omega0: f64,
    pub p_exc: f64,
    pub eta: f64,
    pub shots: u64,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let n = ExperimentConfig::nominal();
        Self { omega0: n.omega0, p_exc: n.p_exc, eta: n.eta, shots: n.shots, seed: n.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(try_from = "String", into = "String")]
pub enum Analysis {
    Tomography,
    Ellipsoid,
    Fringe(u32),
    EntanglementFidelity,
}

impl Analysis {
    pub fn needs_tomography(self) -> bool {
        matches!(self, Analysis::Tomography | Analysis::Ellipsoid)
    }
}

impl FromStr for Analysis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        match s {
            "tomography" => return Ok(Analysis::Tomography),
            "ellipsoid" => return Ok(Analysis::Ellipsoid),
            "entanglement_fidelity" | "entanglement-fidelity" => {
                return Ok(Analysis::EntanglementFidelity)
            }
            _ => {}
        }
        let m = s
            .strip_prefix("fringe(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|m| m.trim().parse::<u32>().ok());
        match m {
            Some(m @ (1 | 2)) => Ok(Analysis::Fringe(m)),
            Some(m) => Err(format!("fringe harmonic must be 1 or 2, got {m}")),
            None => Err(format!(
                "unknown analysis `{s}` (expected tomography, ellipsoid, fringe(1), fringe(2) \
                 or entanglement_fidelity)"
            )),
        }
    }
}

impl TryFrom<String> for Analysis {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<Analysis> for String {
    fn from(a: Analysis) -> String {
        a.to_string()
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Analysis::Tomography => f.write_str("tomography"),
            Analysis::Ellipsoid => f.write_str("ellipsoid"),
            Analysis::Fringe(m) => write!(f, "fringe({m})"),
            Analysis::EntanglementFidelity => f.write_str("entanglement_fidelity"),
        }
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let manifest: Manifest = toml::from_str(text)?;
        manifest.config().validate()?;
        manifest.pulse_sequence()?;
        Ok(manifest)
    }

    pub fn config(&self) -> ExperimentConfig {
        let e = &self.experiment;
        ExperimentConfig {
            omega0: e.omega0,
            p_exc: e.p_exc,
            eta: e.eta,
            shots: e.shots,
            seed: e.seed,
            errors: self.errors,
        }
    }

    pub fn pulse_sequence(&self) -> Result<PulseSequence> {
        match &self.sequence {
            SequenceSpec::Named(name) => Ok(sequence(name)?),
            SequenceSpec::Inline(s) => s.build(),
        }
    }

    pub fn wants(&self, pred: impl Fn(Analysis) -> bool) -> bool {
        self.analyses.iter().any(|&a| pred(a))
    }

    /// Applies `--seed`, `--shots` and `--out`.
    pub fn apply_overrides(&mut self, seed: Option<u64>, shots: Option<u64>, out: Option<&Path>) {
        if let Some(seed) = seed {
            self.experiment.seed = seed;
        }
        if let Some(shots) = shots {
            self.experiment.shots = shots;
        }
        if let Some(out) = out {
            self.output.dir = out.to_path_buf();
        }
    }
}

impl InlineSequence {
    pub fn build(&self) -> Result<PulseSequence> {
        let basis = match self.basis {
            Some(b) => Some(PolarizationBasis::new(b.theta, b.ellipticity)?.with_retardance(b.retardance)),
            None => None,
        };
        let mut seq = PulseSequence::process(&self.name, basis, self.corrected)?
            .with_setting(self.prep, self.analysis);
        if let Some(dir) = self.excitation {
            seq.excitation = ExcitationPolarization::new(dir)?;
        }
        seq.validate()?;
        Ok(seq)
    }
}

/// Config fields accepted by `sweep --param`.
pub const SWEEP_PARAMS: [&str; 14] = [
    "omega0",
    "p_exc",
    "eta",
    "shots",
    "seed",
    "p_multi",
    "p_dark",
    "e_prep",
    "e_meas",
    "pol_misalign",
    "biref_phase",
    "phi_jitter_sigma",
    "theta",
    "ellipticity",
];

/// Sets one sweepable field. `theta` and `ellipticity` act on the analysis basis
/// and turn a named sequence into an equivalent inline one.
pub fn set_param(manifest: &mut Manifest, name: &str, value: f64) -> Result<()> {
    let as_count = |v: f64| -> Result<u64> {
        if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
            Ok(v as u64)
        } else {
            bail!("{name} takes non-negative integers, got {v}")
        }
    };
    let e = &mut manifest.experiment;
    let errs = &mut manifest.errors;
    match name {
        "omega0" => e.omega0 = value,
        "p_exc" => e.p_exc = value,
        "eta" => e.eta = value,
        "shots" => e.shots = as_count(value)?,
        "seed" => e.seed = as_count(value)?,
        "p_multi" => errs.p_multi = value,
        "p_dark" => errs.p_dark = value,
        "e_prep" => errs.e_prep = value,
        "e_meas" => errs.e_meas = value,
        "pol_misalign" => errs.pol_misalign = value,
        "biref_phase" => errs.biref_phase = value,
        "phi_jitter_sigma" => errs.phi_jitter_sigma = value,
        "theta" | "ellipticity" => {
            let mut inline = match &manifest.sequence {
                SequenceSpec::Inline(s) => s.clone(),
                SequenceSpec::Named(n) => inline_from(&sequence(n)?),
            };
            let Some(basis) = inline.basis.as_mut() else {
                bail!("sequence `{}` has no scattering block to sweep {name} on", inline.name);
            };
            if name == "theta" {
                basis.theta = value;
            } else {
                basis.ellipticity = value;
            }
            manifest.sequence = SequenceSpec::Inline(inline);
        }
        other => bail!("unknown sweep parameter `{other}` (valid: {})", SWEEP_PARAMS.join(", ")),
    }
    manifest.config().validate()?;
    manifest.pulse_sequence()?;
    Ok(())
}

fn inline_from(seq: &PulseSequence) -> InlineSequence {
    InlineSequence {
        name: seq.name.clone(),
        basis: seq.scatter_basis.map(|b| BasisSpec {
            theta: b.theta,
            ellipticity: b.ellipticity,
            retardance: b.retardance,
        }),
        corrected: seq.is_corrected(),
        prep: seq.prep,
        analysis: seq.analysis,
        excitation: Some(seq.excitation.direction()),
    }
}

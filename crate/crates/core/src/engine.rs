//! Seeded Monte Carlo execution of the heralded scattering experiment.
//!
//! One shot runs: preparation (with an optional population flip), repeated
//! excitation attempts until a photon is heralded, the heralded scattering, an
//! optional undetected extra scattering, the heralded correction pulse, the
//! analysis pulse and a projective `σ_z` measurement with readout flips.
//!
//! Every shot draws from its own ChaCha stream keyed by `(seed, shot_id)`, so a
//! run is bit-reproducible no matter how shots are scheduled across threads.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scattering::{
    branch_operators, joint_index, joint_state_in_basis, sandwich_spin, scatter,
    unconditioned_channel, Branch, ExcitationPolarization, PolarizationBasis,
};
use crate::spin::{equatorial_rotation, sigma_x, sigma_y, SpinOperator, SpinState, C64};

/// Technical imperfections injected into each shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorBudget {
    /// Probability of one extra, undetected scattering per heralded shot.
    pub p_multi: f64,
    /// Probability that a herald is a detector dark count.
    pub p_dark: f64,
    /// Probability that optical pumping leaves the spin in `|↓⟩`.
    pub e_prep: f64,
    /// Probability that the readout reports the wrong outcome.
    pub e_meas: f64,
    /// Rotation error of the analysis basis (radians).
    pub pol_misalign: f64,
    /// Uncompensated retardance of the polarization analysis (radians).
    pub biref_phase: f64,
    /// Standard deviation of the recorded TAC phase around `ω₀ t_s` (radians).
    pub phi_jitter_sigma: f64,
}

impl ErrorBudget {
    pub fn ideal() -> Self {
        Self {
            p_multi: 0.0,
            p_dark: 0.0,
            e_prep: 0.0,
            e_meas: 0.0,
            pol_misalign: 0.0,
            biref_phase: 0.0,
            phi_jitter_sigma: 0.0,
        }
    }

    /// The imperfections quoted for the trapped-ion experiment.
    pub fn nominal() -> Self {
        Self {
            p_multi: 0.05,
            p_dark: 0.03,
            e_prep: 0.015,
            e_meas: 0.015,
            pol_misalign: 0.01,
            biref_phase: 0.0,
            phi_jitter_sigma: 0.17,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_multi", self.p_multi),
            ("p_dark", self.p_dark),
            ("e_prep", self.e_prep),
            ("e_meas", self.e_meas),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.phi_jitter_sigma >= 0.0 && self.phi_jitter_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "phi_jitter_sigma = {} must be finite and ≥ 0",
                self.phi_jitter_sigma
            )));
        }
        if !self.pol_misalign.is_finite() || !self.biref_phase.is_finite() {
            return Err(Error::InvalidConfig("angles must be finite".into()));
        }
        Ok(())
    }
}

impl Default for ErrorBudget {
    fn default() -> Self {
        Self::nominal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Larmor angular frequency (rad/s).
    pub omega0: f64,
    /// Excitation probability per pulse.
    pub p_exc: f64,
    /// Photon detection efficiency.
    pub eta: f64,
    pub shots: u64,
    pub seed: u64,
    pub errors: ErrorBudget,
}

impl ExperimentConfig {
    /// ω₀/2π = 3.5 MHz, excitation 0.075 per pulse, η = 2.5·10⁻³, nominal errors.
    pub fn nominal() -> Self {
        Self {
            omega0: TAU * 3.5e6,
            p_exc: 0.075,
            eta: 2.5e-3,
            shots: 10_000,
            seed: 0,
            errors: ErrorBudget::nominal(),
        }
    }

    /// Every excitation scatters, every photon is detected, no errors.
    pub fn ideal(shots: u64, seed: u64) -> Self {
        Self {
            p_exc: 1.0,
            eta: 1.0,
            shots,
            seed,
            errors: ErrorBudget::ideal(),
            ..Self::nominal()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::InvalidConfig("shots must be at least 1".into()));
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::InvalidConfig(format!("omega0 = {} must be positive", self.omega0)));
        }
        for (name, p) in [("p_exc", self.p_exc), ("eta", self.eta)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} is not a probability")));
            }
        }
        self.errors.validate()?;
        if self.herald_probability() <= 0.0 {
            return Err(Error::InvalidConfig(
                "herald probability is zero (p_exc·η = 0 and no dark counts)".into(),
            ));
        }
        Ok(())
    }

    /// Probability that one excitation attempt produces a herald.
    ///
    /// Dark counts are added at the rate that makes a fraction `p_dark` of all
    /// heralds dark: `p_exc·η / (1 − p_dark)`, capped at one.
    pub fn herald_probability(&self) -> f64 {
        let true_rate = self.p_exc * self.eta;
        if self.errors.p_dark >= 1.0 {
            return 1.0;
        }
        (true_rate / (1.0 - self.errors.p_dark)).min(1.0)
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::nominal()
    }
}

/// An rf pulse: rotation by `angle` about `(cos phase, sin phase, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub angle: f64,
    pub phase: f64,
}

impl Pulse {
    pub fn new(angle: f64, phase: f64) -> Self {
        Self { angle, phase }
    }

    pub fn x(angle: f64) -> Self {
        Self::new(angle, 0.0)
    }

    pub fn y(angle: f64) -> Self {
        Self::new(angle, FRAC_PI_2)
    }

    pub fn operator(&self) -> SpinOperator {
        equatorial_rotation(self.angle, self.phase)
    }

    fn shifted(self, phase: f64) -> Self {
        Self { phase: self.phase + phase, ..self }
    }
}

/// Heralded correction: per branch, a pulse whose phase is added to `φ_TAC`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRule {
    pub v: Option<Pulse>,
    pub h: Option<Pulse>,
}

impl CorrectionRule {
    /// The rule that undoes each ideal branch operator of a linear basis.
    pub fn for_basis(basis: &PolarizationBasis) -> Result<Self> {
        Ok(Self {
            v: correction_for(basis, Branch::V, 0.0)?,
            h: correction_for(basis, Branch::H, 0.0)?,
        })
    }

    pub fn pulse_for(&self, branch: Branch, phi_tac: f64) -> Option<Pulse> {
        let p = match branch {
            Branch::V => self.v,
            Branch::H => self.h,
        };
        p.map(|p| p.shifted(phi_tac))
    }
}

/// The rf pulse that inverts the ideal branch operator at phase `phi_tac`.
///
/// `None` means no pulse is needed. The returned pulse phase is expressed as
/// `phi_tac` plus an offset in `(−π/2, π/2]`, with the sign carried by the angle.
pub fn correction_for(basis: &PolarizationBasis, branch: Branch, phi_tac: f64) -> Result<Option<Pulse>> {
    if !basis.is_linear() {
        return Err(Error::UnsupportedCorrection(format!(
            "analysis basis with ellipticity {} and retardance {} is not linear; \
             the branch operator is not unitary",
            basis.ellipticity, basis.retardance
        )));
    }
    let ops = branch_operators(&ExcitationPolarization::default(), basis, phi_tac);
    let op = ops[branch.index() as usize - 1].scaled(C64::from(2f64.sqrt()));
    let (angle, axis) = axis_angle(&op.dagger());
    if angle.abs() < 1e-12 {
        return Ok(None);
    }
    if axis[2].abs() > 1e-9 {
        return Err(Error::UnsupportedCorrection(format!(
            "inverse of branch {branch:?} is not an equatorial rotation"
        )));
    }
    let mut angle = angle;
    let mut offset = wrap_pi(axis[1].atan2(axis[0]) - phi_tac);
    if offset <= -FRAC_PI_2 + 1e-12 {
        offset += PI;
        angle = -angle;
    } else if offset > FRAC_PI_2 + 1e-12 {
        offset -= PI;
        angle = -angle;
    }
    Ok(Some(Pulse::new(angle, phi_tac + offset)))
}

/// Rotation angle in `[0, π]` and unit axis of a 2×2 unitary, ignoring global phase.
fn axis_angle(u: &SpinOperator) -> (f64, [f64; 3]) {
    let m = u.matrix();
    let det = m.determinant();
    let v = m / det.sqrt();
    let mut c = 0.5 * (v[(0, 0)] + v[(1, 1)]).re;
    let mut sn = [
        -0.5 * (v[(0, 1)] + v[(1, 0)]).im,
        0.5 * (v[(1, 0)] - v[(0, 1)]).re,
        0.5 * (v[(1, 1)] - v[(0, 0)]).im,
    ];
    if c < 0.0 {
        c = -c;
        sn = sn.map(|x| -x);
    }
    let s = (sn[0] * sn[0] + sn[1] * sn[1] + sn[2] * sn[2]).sqrt();
    let angle = 2.0 * s.atan2(c);
    if s < 1e-15 {
        return (0.0, [0.0, 0.0, 1.0]);
    }
    (angle, sn.map(|x| x / s))
}

fn wrap_pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Preparation, heralded scattering, optional correction and analysis.
///
/// `scatter_basis = None` skips the scattering block entirely (the
/// preparation/readout benchmark).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub name: String,
    pub prep: Option<Pulse>,
    pub excitation: ExcitationPolarization,
    pub scatter_basis: Option<PolarizationBasis>,
    pub correction: Option<CorrectionRule>,
    pub analysis: Option<Pulse>,
}

impl PulseSequence {
    /// A process sequence: identity preparation/analysis around the scattering block.
    pub fn process(name: &str, basis: Option<PolarizationBasis>, corrected: bool) -> Result<Self> {
        let correction = match (basis, corrected) {
            (Some(b), true) => Some(CorrectionRule::for_basis(&b)?),
            (None, true) => {
                return Err(Error::InvalidArgument(
                    "a correction needs a scattering block".into(),
                ))
            }
            _ => None,
        };
        Ok(Self {
            name: name.to_string(),
            prep: None,
            excitation: ExcitationPolarization::default(),
            scatter_basis: basis,
            correction,
            analysis: None,
        })
    }

    /// Replaces the preparation and analysis pulses.
    pub fn with_setting(&self, prep: Option<Pulse>, analysis: Option<Pulse>) -> Self {
        Self { prep, analysis, ..self.clone() }
    }

    pub fn is_corrected(&self) -> bool {
        self.correction.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let pulses = [self.prep, self.analysis]
            .into_iter()
            .flatten()
            .chain(self.correction.iter().flat_map(|c| [c.v, c.h]).flatten());
        for p in pulses {
            if !(p.angle.is_finite() && p.phase.is_finite()) {
                return Err(Error::InvalidArgument(format!("pulse {p:?} is not finite")));
            }
        }
        if let Some(c) = &self.correction {
            for p in [c.v, c.h].into_iter().flatten() {
                if !(p.angle > -TAU && p.angle <= TAU) {
                    return Err(Error::InvalidArgument(format!(
                        "correction angle {} outside (−2π, 2π]",
                        p.angle
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Names accepted by [`sequence`], besides `tomo_input(k)` for `k` in `0..4`.
pub const SEQUENCE_NAMES: [&str; 7] = [
    "no_scatter",
    "scatter_HV",
    "scatter_45",
    "corrected_HV",
    "corrected_45",
    "ramsey_HV",
    "ramsey_45",
];

/// The four tomography input preparations `|↑⟩, |↓⟩, |+x⟩, |+y⟩`.
pub fn tomography_preparations() -> [Option<Pulse>; 4] {
    [None, Some(Pulse::x(PI)), Some(Pulse::y(FRAC_PI_2)), Some(Pulse::x(-FRAC_PI_2))]
}

/// The catalog of standard sequences.
pub fn standard_sequences() -> BTreeMap<String, PulseSequence> {
    let mut out = BTreeMap::new();
    for name in SEQUENCE_NAMES {
        out.insert(name.to_string(), sequence(name).expect("catalog entry"));
    }
    for k in 0..4 {
        let name = format!("tomo_input({k})");
        out.insert(name.clone(), sequence(&name).expect("catalog entry"));
    }
    out
}

/// Looks up a standard sequence by name.
pub fn sequence(name: &str) -> Result<PulseSequence> {
    let hv = PolarizationBasis::hv();
    let diag = PolarizationBasis::diagonal();
    let seq = match name {
        "no_scatter" => PulseSequence::process(name, None, false)?,
        "scatter_HV" => PulseSequence::process(name, Some(hv), false)?,
        "scatter_45" => PulseSequence::process(name, Some(diag), false)?,
        "corrected_HV" => PulseSequence::process(name, Some(hv), true)?,
        "corrected_45" => PulseSequence::process(name, Some(diag), true)?,
        // π/2, scatter, π/2, all about x̂
        "ramsey_HV" => PulseSequence::process(name, Some(hv), false)?
            .with_setting(Some(Pulse::x(FRAC_PI_2)), Some(Pulse::x(FRAC_PI_2))),
        // the scattering itself provides the first quarter turn
        "ramsey_45" => PulseSequence::process(name, Some(diag), false)?
            .with_setting(None, Some(Pulse::x(FRAC_PI_2))),
        other => {
            let k = other
                .strip_prefix("tomo_input(")
                .and_then(|s| s.strip_suffix(')'))
                .and_then(|s| s.trim().parse::<usize>().ok())
                .filter(|&k| k < 4);
            match k {
                Some(k) => PulseSequence::process(name, None, false)?
                    .with_setting(tomography_preparations()[k], None),
                None => {
                    return Err(Error::UnknownSequence {
                        name: name.to_string(),
                        known: format!("{}, tomo_input(0..3)", SEQUENCE_NAMES.join(", ")),
                    })
                }
            }
        }
    };
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Up,
    Down,
}

/// Trace of one heralded repetition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub shot_id: u64,
    pub prep_applied: Option<Pulse>,
    /// Excitation attempts up to and including the herald (1 without scattering).
    pub n_attempts: u64,
    /// `None` for sequences without a scattering block.
    pub branch: Option<Branch>,
    /// In `[0, 2π)`; zero without scattering.
    pub phi_tac_recorded: f64,
    /// Diagnostic truth; never consulted by the correction.
    pub is_dark: bool,
    pub correction_applied: Option<Pulse>,
    pub outcome: Outcome,
}

/// The per-shot random stream for `(seed, shot_id)`.
pub fn shot_rng(seed: u64, shot_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shot_id);
    rng
}

/// Derives an independent seed for a sub-run (e.g. one tomography setting).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one shot; all randomness comes from `rng`.
pub fn run_shot<R: Rng + ?Sized>(
    config: &ExperimentConfig,
    seq: &PulseSequence,
    shot_id: u64,
    rng: &mut R,
) -> ShotRecord {
    let errors = &config.errors;

    let mut rho = if rng.random::<f64>() < errors.e_prep {
        SpinState::down().density()
    } else {
        SpinState::up().density()
    };
    if let Some(p) = seq.prep {
        rho = p.operator().conjugate(&rho);
    }

    let mut n_attempts = 1;
    let mut branch = None;
    let mut phi_tac = 0.0;
    let mut is_dark = false;
    let mut correction_applied = None;

    if let Some(nominal) = seq.scatter_basis {
        // Each failed attempt restarts from preparation, so only the number of
        // attempts survives into the record.
        let geo = Geometric::new(config.herald_probability()).expect("validated probability");
        n_attempts = 1 + geo.sample(rng);

        is_dark = rng.random::<f64>() < errors.p_dark;
        if is_dark {
            branch = Some(if rng.random::<bool>() { Branch::V } else { Branch::H });
            phi_tac = rng.random::<f64>() * TAU;
        } else {
            let period = TAU / config.omega0;
            let t_s = rng.random::<f64>() * period;
            let phi_true = (config.omega0 * t_s).rem_euclid(TAU);
            let jitter = if errors.phi_jitter_sigma > 0.0 {
                Normal::new(0.0, errors.phi_jitter_sigma)
                    .expect("validated sigma")
                    .sample(rng)
            } else {
                0.0
            };
            phi_tac = (phi_true + jitter).rem_euclid(TAU);

            let actual = PolarizationBasis {
                theta: nominal.theta + errors.pol_misalign,
                retardance: nominal.retardance + errors.biref_phase,
                ..nominal
            };
            let outcomes = scatter(&rho, &seq.excitation, &actual, phi_true);
            let pick = if rng.random::<f64>() < outcomes[0].probability { 0 } else { 1 };
            let chosen = match (outcomes[pick].post_state, outcomes[1 - pick].post_state) {
                (Some(_), _) => pick,
                (None, _) => 1 - pick,
            };
            branch = Some(outcomes[chosen].branch);
            rho = outcomes[chosen].post_state.expect("at least one branch is populated");
        }
        if phi_tac >= TAU {
            phi_tac = 0.0;
        }

        if rng.random::<f64>() < errors.p_multi {
            rho = unconditioned_channel(&rho);
        }

        if let (Some(rule), Some(b)) = (&seq.correction, branch) {
            if let Some(pulse) = rule.pulse_for(b, phi_tac) {
                rho = pulse.operator().conjugate(&rho);
                correction_applied = Some(pulse);
            }
        }
    }

    if let Some(p) = seq.analysis {
        rho = p.operator().conjugate(&rho);
    }
    let mut up = rng.random::<f64>() < rho.prob_up();
    if rng.random::<f64>() < errors.e_meas {
        up = !up;
    }

    ShotRecord {
        shot_id,
        prep_applied: seq.prep,
        n_attempts,
        branch,
        phi_tac_recorded: phi_tac,
        is_dark,
        correction_applied,
        outcome: if up { Outcome::Up } else { Outcome::Down },
    }
}

/// Runs `config.shots` shots in parallel; shot `i` uses [`shot_rng`]`(seed, i)`.
pub fn run_experiment(config: &ExperimentConfig, seq: &PulseSequence) -> Result<Vec<ShotRecord>> {
    config.validate()?;
    seq.validate()?;
    Ok((0..config.shots)
        .into_par_iter()
        .map(|i| run_shot(config, seq, i, &mut shot_rng(config.seed, i)))
        .collect())
}

/// Single-threaded reference for [`run_experiment`].
pub fn run_experiment_serial(config: &ExperimentConfig, seq: &PulseSequence) -> Result<Vec<ShotRecord>> {
    config.validate()?;
    seq.validate()?;
    Ok((0..config.shots)
        .map(|i| run_shot(config, seq, i, &mut shot_rng(config.seed, i)))
        .collect())
}

/// Density operator of the heralded spin–photon pair under the error model.
///
/// The photon is labelled by the recorded analysis outcome, and the ideal
/// reference is taken at the recorded phase `phase`. Included: preparation
/// flips, dark heralds (unscattered spin, random label), analysis misalignment
/// and retardance, TAC phase jitter and extra undetected scattering. Readout
/// flips are not part of the state.
pub fn heralded_joint_density(
    errors: &ErrorBudget,
    excitation: &ExcitationPolarization,
    nominal: &PolarizationBasis,
    input: &SpinState,
    phase: f64,
) -> Matrix4<C64> {
    let actual = PolarizationBasis {
        theta: nominal.theta + errors.pol_misalign,
        retardance: nominal.retardance + errors.biref_phase,
        ..*nominal
    };
    // the preparation flip maps the target state to its antipode
    let flipped = SpinState::new(-input.beta().conj(), input.alpha().conj()).expect("normalized");
    let inputs = [(1.0 - errors.e_prep, *input), (errors.e_prep, flipped)];

    let jitter = gaussian_nodes(errors.phi_jitter_sigma);
    let mut scattered = Matrix4::zeros();
    let mut unscattered = Matrix4::zeros();
    for (w_in, state) in inputs {
        if w_in == 0.0 {
            continue;
        }
        for &(w_j, eps) in &jitter {
            let psi = joint_state_in_basis(&state, excitation, &actual, phase - eps);
            scattered += psi * psi.adjoint() * C64::from(w_in * w_j);
        }
        let spin = state.density();
        for p in Branch::ALL {
            for r in 0..2 {
                for c in 0..2 {
                    unscattered[(joint_index(r, p), joint_index(c, p))] +=
                        spin.matrix()[(r, c)] * C64::from(0.5 * w_in);
                }
            }
        }
    }
    let (sx, sy) = (sigma_x(), sigma_y());
    let extra = |rho: &Matrix4<C64>| {
        rho * C64::from(1.0 - errors.p_multi)
            + (rho * C64::from(0.5)
                + (sandwich_spin(&sx, rho) + sandwich_spin(&sy, rho)) * C64::from(0.25))
                * C64::from(errors.p_multi)
    };
    extra(&scattered) * C64::from(1.0 - errors.p_dark) + extra(&unscattered) * C64::from(errors.p_dark)
}

/// Weights and offsets approximating a zero-mean Gaussian of width `sigma`.
fn gaussian_nodes(sigma: f64) -> Vec<(f64, f64)> {
    if sigma <= 0.0 {
        return vec![(1.0, 0.0)];
    }
    let n = 401;
    let half = 8.0 * sigma;
    let nodes: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let x = -half + 2.0 * half * k as f64 / (n - 1) as f64;
            ((-0.5 * (x / sigma).powi(2)).exp(), x)
        })
        .collect();
    let total: f64 = nodes.iter().map(|(w, _)| w).sum();
    nodes.into_iter().map(|(w, x)| (w / total, x)).collect()
}

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use nalgebra::{Matrix2, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use scatter_reversal::engine::{
    correction_for, run_experiment, run_experiment_serial, run_shot, shot_rng, ExperimentConfig,
    Outcome, Pulse, PulseSequence,
};
use scatter_reversal::scattering::{
    branch_operators, joint_state_in_basis, scatter, trace_photon, Branch, ExcitationPolarization,
    PolarizationBasis,
};
use scatter_reversal::spin::{
    apply_kraus, equal_up_to_phase, pauli_dot, pauli_projection, rotating_frame, rotation,
    sigma_x, sigma_y, BlochVector, DensityMatrix, SpinOperator, SpinState, C64,
};
use scatter_reversal::tomography::{
    bloch_ellipsoid, fit_fringe, project_cptp, ptm_to_chi, ChiMatrix, FringeBin,
    PauliTransferMatrix,
};

fn unit_vector() -> impl Strategy<Value = [f64; 3]> {
    (-1.0..=1.0f64, 0.0..TAU).prop_map(|(z, a)| {
        let s = (1.0 - z * z).sqrt();
        [s * a.cos(), s * a.sin(), z]
    })
}

fn spin_state() -> impl Strategy<Value = SpinState> {
    unit_vector().prop_map(|d| SpinState::along(d).unwrap())
}

fn bloch_ball() -> impl Strategy<Value = BlochVector> {
    (unit_vector(), 0.0..=1.0f64).prop_map(|(d, r)| BlochVector::new(r * d[0], r * d[1], r * d[2]))
}

fn unitary() -> impl Strategy<Value = Matrix2<C64>> {
    (unit_vector(), 0.0..TAU).prop_map(|(n, a)| *rotation(n, a).unwrap().matrix())
}

fn basis() -> impl Strategy<Value = PolarizationBasis> {
    (-PI..PI, -FRAC_PI_4..=FRAC_PI_4, -PI..PI)
        .prop_map(|(t, e, r)| PolarizationBasis::new(t, e).unwrap().with_retardance(r))
}

fn close(a: &Matrix2<C64>, b: &Matrix2<C64>, tol: f64) -> bool {
    (a - b).norm() <= tol
}

proptest! {
    #[test]
    fn pauli_projection_squares_to_identity(n in unit_vector()) {
        let p = pauli_projection(n).unwrap();
        prop_assert!(close(&(p.matrix() * p.matrix()), &Matrix2::identity(), 1e-10));
        let half_turn = rotation(n, -PI).unwrap();
        prop_assert!(equal_up_to_phase(p.matrix(), half_turn.matrix(), 1e-10));
    }

    #[test]
    fn rotating_frame_is_a_homomorphism(a in unitary(), b in unitary(), phase in 0.0..TAU) {
        let (a, b) = (SpinOperator::new(a), SpinOperator::new(b));
        let framed = rotating_frame(&a, 0.0);
        prop_assert_eq!(framed.matrix(), a.matrix());
        let lhs = rotating_frame(&(a.clone() * b.clone()), phase);
        let rhs = rotating_frame(&a, phase) * rotating_frame(&b, phase);
        prop_assert!(close(lhs.matrix(), rhs.matrix(), 1e-12));
    }

    #[test]
    fn kraus_maps_preserve_trace_and_positivity(
        r in bloch_ball(), u in unitary(), v in unitary(), w in 0.0..=1.0f64,
    ) {
        let rho = DensityMatrix::from_bloch(r).unwrap();
        let ops = [u * C64::from(w.sqrt()), v * C64::from((1.0 - w).sqrt())];
        let out = apply_kraus(&rho, &ops).unwrap();
        prop_assert!((out.trace() - 1.0).abs() < 1e-12);
        prop_assert!(out.eigenvalues()[0] > -1e-12);
    }

    #[test]
    fn bloch_round_trip(r in bloch_ball()) {
        let back = DensityMatrix::from_bloch(r).unwrap().to_bloch();
        for (a, b) in back.as_array().iter().zip(r.as_array()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_operators_are_complete(b in basis(), phase in 0.0..TAU) {
        let ops = branch_operators(&ExcitationPolarization::default(), &b, phase);
        let sum: Matrix2<C64> = ops.iter().map(|k| k.matrix().adjoint() * k.matrix()).sum();
        prop_assert!(close(&sum, &Matrix2::identity(), 1e-10));
    }

    #[test]
    fn linear_bases_give_unitary_branches(theta in -PI..PI, phase in 0.0..TAU, sign in prop::bool::ANY) {
        let exc = ExcitationPolarization::default();
        for op in branch_operators(&exc, &PolarizationBasis::linear(theta), phase) {
            prop_assert!(op.scaled(C64::from(2f64.sqrt())).is_unitary());
        }
        let eps = if sign { FRAC_PI_4 } else { -FRAC_PI_4 };
        let circular = PolarizationBasis::new(theta, eps).unwrap();
        for op in branch_operators(&exc, &circular, phase) {
            prop_assert!(op.determinant().norm() < 1e-10);
        }
    }

    #[test]
    fn announced_branch_is_reversible(psi in spin_state(), theta in -PI..PI, phase in 0.0..TAU) {
        let basis = PolarizationBasis::linear(theta);
        let ops = branch_operators(&ExcitationPolarization::default(), &basis, phase);
        for branch in Branch::ALL {
            let k = &ops[branch.index() as usize - 1];
            let mut total = k.clone();
            if let Some(p) = correction_for(&basis, branch, phase).unwrap() {
                total = p.operator() * total;
            }
            let out = total.apply(&psi);
            let norm2 = out[0].norm_sqr() + out[1].norm_sqr();
            let f = (psi.alpha().conj() * out[0] + psi.beta().conj() * out[1]).norm_sqr() / norm2;
            prop_assert!((f - 1.0).abs() < 1e-10, "branch {:?} fidelity {}", branch, f);
        }
    }

    #[test]
    fn joint_state_marginal_matches_scatter(psi in spin_state(), b in basis(), phase in 0.0..TAU) {
        let exc = ExcitationPolarization::default();
        let joint = joint_state_in_basis(&psi, &exc, &b, phase);
        let marginal = trace_photon(&(joint * joint.adjoint()));
        let mixture: Matrix2<C64> = scatter(&psi.density(), &exc, &b, phase)
            .iter()
            .filter_map(|o| o.post_state.map(|s| s.matrix() * C64::from(o.probability)))
            .sum();
        prop_assert!(close(&marginal, &mixture, 1e-10));
    }

    #[test]
    fn analysis_rotation_is_covariant(
        theta in -PI..PI, eps in -FRAC_PI_4..=FRAC_PI_4, delta in -PI..PI, phase in 0.0..TAU,
    ) {
        let exc = ExcitationPolarization::default();
        let before = branch_operators(&exc, &PolarizationBasis::new(theta, eps).unwrap(), phase);
        let after = branch_operators(&exc, &PolarizationBasis::new(theta + delta, eps).unwrap(), phase);
        // e(θ+δ)·σ = U (e(θ)·σ) U† with U a spin rotation by δ about the photon axis x̂
        let u = rotating_frame(&rotation([1.0, 0.0, 0.0], delta).unwrap(), phase);
        let sz = rotating_frame(&SpinOperator::new(pauli_dot(&[0.0, 0.0, 1.0].map(C64::from))), phase);
        for (m0, m1) in before.iter().zip(&after) {
            let predicted = u.clone() * m0.clone() * sz.clone() * u.dagger() * sz.clone();
            prop_assert!(close(predicted.matrix(), m1.matrix(), 1e-10));
        }
    }

    #[test]
    fn ellipsoid_axes_ignore_frame_rotations(u in unitary(), v in unitary(), w in 0.0..=1.0f64, t in unitary()) {
        let channel = PauliTransferMatrix::from_map(|m| {
            let r = t * m * t.adjoint();
            r * C64::from(1.0 - w / 2.0) + (sigma_x() * r * sigma_x() + sigma_y() * r * sigma_y()) * C64::from(w / 4.0)
        });
        let framed = PauliTransferMatrix::from_kraus(&[u])
            .compose(&channel)
            .compose(&PauliTransferMatrix::from_kraus(&[v]));
        let a = bloch_ellipsoid(&channel).semi_axes;
        let b = bloch_ellipsoid(&framed).semi_axes;
        for k in 0..3 {
            prop_assert!((a[k] - b[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn cptp_projection_is_physical_and_non_expansive(
        u in unitary(), w in 0.0..=1.0f64,
        noise in prop::collection::vec(-0.05..0.05f64, 12),
    ) {
        let truth = PauliTransferMatrix::from_map(|m| {
            let r = u * m * u.adjoint();
            r * C64::from(1.0 - w) + Matrix2::identity() * (r.trace() * C64::from(0.5 * w))
        });
        let mut noisy = truth;
        for (k, d) in noise.iter().enumerate() {
            noisy.0[(1 + k / 4, k % 4)] += d;
        }
        let chi_true = ptm_to_chi(&truth);
        let raw = ptm_to_chi(&noisy);
        let projected = project_cptp(&raw).unwrap();
        prop_assert!(projected.is_physical(1e-9));
        let d_raw = (raw.0 - chi_true.0).norm();
        let d_proj = (projected.0 - chi_true.0).norm();
        prop_assert!(d_proj <= d_raw + 1e-9, "{} > {}", d_proj, d_raw);
    }

    #[test]
    fn fringe_fit_recovers_noiseless_parameters(
        offset in 0.3..0.7f64, amp in 0.0..0.29f64, phase in -PI..PI, m in 1u32..=2,
    ) {
        let n = 20;
        let count = 1_000_000_000_000u64;
        let bins: Vec<FringeBin> = (0..n)
            .map(|k| {
                let center = (k as f64 + 0.5) * TAU / n as f64;
                let p = offset + amp * (m as f64 * center + phase).cos();
                FringeBin { center, count, ups: (p * count as f64).round() as u64 }
            })
            .collect();
        let fit = fit_fringe(&bins, m).unwrap();
        prop_assert!((fit.offset - offset).abs() < 1e-10);
        prop_assert!((fit.amplitude - amp).abs() < 1e-10);
        if amp > 1e-3 {
            let d = (fit.phase - phase + PI).rem_euclid(TAU) - PI;
            prop_assert!(d.abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ideal_corrected_shots_return_the_prepared_state(
        theta in -PI..PI, angle in 0.0..PI, axis_phase in 0.0..TAU, seed in any::<u64>(),
    ) {
        let cfg = ExperimentConfig::ideal(1, seed);
        let prep = Pulse::new(angle, axis_phase);
        let seq = PulseSequence::process("probe", Some(PolarizationBasis::linear(theta)), true)
            .unwrap()
            .with_setting(Some(prep), Some(Pulse::new(-angle, axis_phase)));
        for shot in 0..50 {
            let rec = run_shot(&cfg, &seq, shot, &mut shot_rng(seed, shot));
            prop_assert_eq!(rec.outcome, Outcome::Up);
        }
    }

    #[test]
    fn branch_frequencies_are_balanced(theta in -PI..PI, psi_axis in unit_vector(), seed in any::<u64>()) {
        let shots = 4000u64;
        let cfg = ExperimentConfig::ideal(shots, seed);
        let angle = psi_axis[2].acos();
        let prep = Pulse::new(angle, psi_axis[1].atan2(psi_axis[0]) - std::f64::consts::FRAC_PI_2);
        let seq = PulseSequence::process("probe", Some(PolarizationBasis::linear(theta)), false)
            .unwrap()
            .with_setting(Some(prep), None);
        let recs = run_experiment(&cfg, &seq).unwrap();
        let v = recs.iter().filter(|r| r.branch == Some(Branch::V)).count() as f64;
        let sigma = (shots as f64 * 0.25).sqrt();
        prop_assert!((v - shots as f64 / 2.0).abs() < 5.0 * sigma);
    }

    #[test]
    fn runs_are_deterministic_and_schedule_independent(seed in any::<u64>(), shots in 1u64..2000) {
        let cfg = ExperimentConfig { shots, seed, ..ExperimentConfig::nominal() };
        let seq = scatter_reversal::engine::sequence("corrected_45").unwrap();
        let a = run_experiment(&cfg, &seq).unwrap();
        prop_assert_eq!(&a, &run_experiment(&cfg, &seq).unwrap());
        prop_assert_eq!(&a, &run_experiment_serial(&cfg, &seq).unwrap());
    }
}

#[test]
fn projection_never_leaves_the_physical_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let mut m = nalgebra::Matrix4::<C64>::from_fn(|_, _| {
            use rand::Rng;
            C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))
        });
        m = (m + m.adjoint()) * C64::from(0.5);
        let out = project_cptp(&ChiMatrix(m)).unwrap();
        assert!(out.is_physical(1e-9));
    }
}

#[test]
fn fringe_fit_within_three_sigma_on_binomial_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 20usize;
    let count = 10_000u64;
    for case in 0..10 {
        let (offset, amp, phase, m) = (0.5, 0.1 + 0.04 * case as f64, -3.0 + 0.6 * case as f64, 1 + case % 2);
        let bins: Vec<FringeBin> = (0..n)
            .map(|k| {
                let center = (k as f64 + 0.5) * TAU / n as f64;
                let p = offset + amp * (m as f64 * center + phase).cos();
                FringeBin { center, count, ups: Binomial::new(count, p).unwrap().sample(&mut rng) }
            })
            .collect();
        let fit = fit_fringe(&bins, m as u32).unwrap();
        // conservative: p(1−p) ≤ 1/4 per bin, two quadrature regressors
        let sigma_amp = (0.5 / (count as f64 * n as f64)).sqrt();
        assert!((fit.amplitude - amp).abs() < 3.0 * sigma_amp, "case {case}: {fit:?}");
        let d = (fit.phase - phase + PI).rem_euclid(TAU) - PI;
        assert!(d.abs() < 3.0 * sigma_amp / amp, "case {case}: {fit:?}");
    }
}

#[test]
fn discarded_heralds_converge_to_the_unconditioned_channel() {
    use scatter_reversal::tomography::{count_by_setting, estimate_ptm, run_tomography};
    for (name, seed) in [("scatter_HV", 31), ("scatter_45", 32)] {
        let cfg = ExperimentConfig::ideal(100_000, seed);
        let recs = run_tomography(&cfg, &scatter_reversal::engine::sequence(name).unwrap()).unwrap();
        let counts = count_by_setting(recs.iter().map(|(id, r)| (*id, r.outcome)));
        let m = estimate_ptm(&counts).unwrap().ptm.bloch_block();
        let expected = nalgebra::Matrix3::from_diagonal(&Vector3::new(0.5, 0.5, 0.0));
        assert!((m - expected).abs().max() < 0.02, "{name}: {m}");
    }
}

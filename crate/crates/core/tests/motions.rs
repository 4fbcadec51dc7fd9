use sode_core::dynamics::PeriodOptions;
use sode_core::foscillator::{kepler_matching_f, Deformation};
use sode_core::kepler::KeplerParams;
use sode_core::motions::{
    emit_figure_data, extract_motions, match_motions, pair_motions, phase_alignment, MotionSystem, MotionsError,
    SAMPLES_PER_PERIOD,
};

const ENERGIES: [f64; 3] = [-0.5, -1.0, -2.0];
const OSC: [f64; 3] = [0.5, 1.0, 2.0];

fn kepler() -> MotionSystem {
    MotionSystem::KeplerLifted(KeplerParams::default())
}

fn fosc() -> MotionSystem {
    MotionSystem::FOscillator { n: 4, deformation: kepler_matching_f(1.0) }
}

#[test]
fn measured_frequencies_follow_closed_forms() {
    let popts = PeriodOptions::default();
    for sys in [kepler(), fosc(), MotionSystem::KeplerRegularized(KeplerParams::default())] {
        let labels: &[f64] = if matches!(sys, MotionSystem::FOscillator { .. }) { &OSC } else { &ENERGIES };
        for r in extract_motions(&sys, labels, &popts).unwrap() {
            assert!((r.omega - r.omega_predicted).abs() < 1e-6 * r.omega_predicted, "{}: {} vs {}", r.system, r.omega, r.omega_predicted);
        }
    }
}

#[test]
fn lifted_kepler_pairs_with_matching_oscillator() {
    let popts = PeriodOptions::default();
    let a = extract_motions(&kepler(), &ENERGIES, &popts).unwrap();
    let b = extract_motions(&fosc(), &OSC, &popts).unwrap();
    let m = match_motions(&a, &b, 1e-3).unwrap();
    assert!(m.max_rel_mismatch < 1e-6);
    for p in &m.pairs {
        assert_eq!(p.label_a.abs(), p.label_b);
    }

    // matched motions keep the same phase
    for (ra, rb) in a.iter().zip(&b) {
        let ph = phase_alignment(&kepler(), ra, &fosc(), rb, &[0.0, 0.25, 0.5], &popts).unwrap();
        assert!(ph.max_difference < 1e-4, "{}: {:?}", ra.label, ph);
        assert!(ph.max_drift < 1e-4);
    }
}

#[test]
fn pairing_ignores_input_order() {
    let popts = PeriodOptions::default();
    let a = extract_motions(&kepler(), &ENERGIES, &popts).unwrap();
    let b = extract_motions(&fosc(), &OSC, &popts).unwrap();
    let mut ar = a.clone();
    ar.reverse();
    let mut br = b.clone();
    br.rotate_left(1);
    assert_eq!(pair_motions(&a, &b).unwrap(), pair_motions(&ar, &br).unwrap());
}

#[test]
fn self_matching_is_the_identity() {
    let popts = PeriodOptions::default();
    let a = extract_motions(&fosc(), &OSC, &popts).unwrap();
    let m = match_motions(&a, &a, 1e-12).unwrap();
    assert_eq!(m.max_rel_mismatch, 0.0);
    assert!(m.pairs.iter().all(|p| p.label_a == p.label_b));
}

#[test]
fn undeformed_oscillator_does_not_match_kepler() {
    let popts = PeriodOptions::default();
    let a = extract_motions(&kepler(), &ENERGIES, &popts).unwrap();
    let plain = MotionSystem::FOscillator { n: 4, deformation: Deformation::identity() };
    let b = extract_motions(&plain, &OSC, &popts).unwrap();
    let err = match_motions(&a, &b, 1e-3).unwrap_err();
    assert!(matches!(err, MotionsError::FrequencyMismatch { .. }), "{err}");
    // every undeformed motion has the same frequency, so pairing is not injective
    assert!(matches!(pair_motions(&a, &b).unwrap_err(), MotionsError::NotInjective { .. }));
    assert!(matches!(pair_motions(&a, &b[..2]).unwrap_err(), MotionsError::CardinalityMismatch { .. }));
}

#[test]
fn figure_rows_close_up() {
    let popts = PeriodOptions::default();
    let sys = MotionSystem::KeplerRegularized(KeplerParams::default());
    let recs = extract_motions(&sys, &ENERGIES, &popts).unwrap();
    let mut buf = Vec::new();
    let summary = emit_figure_data(&sys, &recs, &popts, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,absQ,absV,label"));
    assert_eq!(lines.count(), 3 * (SAMPLES_PER_PERIOD + 1));
    for c in &summary.curves {
        assert_eq!(c.rows, SAMPLES_PER_PERIOD + 1);
        assert!(c.closure < 1e-6, "{}: {}", c.label, c.closure);
    }
    assert_eq!(summary.curves[0].label, "kepler_regularized:-0.5");
}

#[test]
fn non_negative_kepler_label_is_rejected() {
    assert!(kepler().motion(0.5).is_err());
    assert!(fosc().motion(-0.5).is_err());
}

//! Periodic motions of the regularized Kepler problem and of deformed
//! oscillators: extraction, frequency matching, phase comparison and
//! figure data on the `(|Q|, |V|)` plane.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{estimate_period, integrate, integrate_at, DynamicsError, PeriodOptions, Trajectory};
use crate::expr::EvalError;
use crate::foscillator::{deform, make_oscillator, representative_state, Deformation, FOscillatorError};
use crate::geometry::VectorField;
use crate::kepler::{self, KeplerError, KeplerParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotionsError {
    #[error("cannot pair {a} motions with {b} motions")]
    CardinalityMismatch { a: usize, b: usize },
    #[error("motions {label_a} and {label_b}: omega {omega_a} vs {omega_b} (relative mismatch {rel_mismatch:.3e} > {tolerance:.1e})")]
    FrequencyMismatch { label_a: f64, label_b: f64, omega_a: f64, omega_b: f64, rel_mismatch: f64, tolerance: f64 },
    #[error("motion {label} is the nearest match of more than one motion")]
    NotInjective { label: f64 },
    #[error("invalid shell label {0}")]
    Label(f64),
    #[error(transparent)]
    Kepler(#[from] KeplerError),
    #[error(transparent)]
    FOscillator(#[from] FOscillatorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for MotionsError {
    fn from(e: std::io::Error) -> Self {
        MotionsError::Io(e.to_string())
    }
}

/// A family of periodic motions labelled by energy.
#[derive(Debug, Clone)]
pub enum MotionSystem {
    /// `Gamma_hat` in the new chart, evolving in the regularized time `s`.
    KeplerRegularized(KeplerParams),
    /// The lifted Kepler field `Gamma` on `TR^4_0` in physical time.
    KeplerLifted(KeplerParams),
    /// `f'(E_H) Gamma` on `TR^n`.
    FOscillator { n: usize, deformation: Deformation },
}

impl MotionSystem {
    pub fn name(&self) -> &'static str {
        match self {
            MotionSystem::KeplerRegularized(_) => "kepler_regularized",
            MotionSystem::KeplerLifted(_) => "kepler_lifted",
            MotionSystem::FOscillator { .. } => "f_oscillator",
        }
    }

    /// Field and initial state of the representative motion with energy
    /// label `label` (`E < 0` for Kepler, `E_H > 0` for oscillators).
    pub fn motion(&self, label: f64) -> Result<(VectorField, Vec<f64>), MotionsError> {
        match self {
            MotionSystem::KeplerRegularized(p) => {
                let s = kepler::shell_representative(label, p)?;
                Ok((kepler::gamma_hat_new(p), s.to_vec()))
            }
            MotionSystem::KeplerLifted(p) => {
                let s = kepler::shell_representative(label, p)?;
                Ok((kepler::gamma_ks(p), new_to_lifted(&s)))
            }
            MotionSystem::FOscillator { n, deformation } => {
                if !(label > 0.0) {
                    return Err(MotionsError::Label(label));
                }
                let sys = make_oscillator(*n)?;
                let d = deform(&sys, deformation);
                Ok((d.gamma_prime, representative_state(*n, label)))
            }
        }
    }

    /// Maps an integrated state to the chart `(Q, V)` used for figures.
    pub fn to_new_chart(&self, state: &[f64]) -> Result<Vec<f64>, MotionsError> {
        Ok(match self {
            MotionSystem::KeplerRegularized(_) => state.to_vec(),
            MotionSystem::KeplerLifted(_) => {
                let r2: f64 = state[..4].iter().map(|c| c * c).sum();
                state[..4].iter().copied().chain(state[4..].iter().map(|v| 2.0 * r2 * v)).collect()
            }
            MotionSystem::FOscillator { n, deformation } => {
                let e: f64 = 0.5 * state.iter().map(|c| c * c).sum::<f64>();
                let w = deformation.derivative(e)?;
                state[..*n].iter().copied().chain(state[*n..].iter().map(|v| w * v)).collect()
            }
        })
    }

    /// Frequency expected from the closed-form analysis.
    pub fn predicted_omega(&self, label: f64) -> Result<f64, MotionsError> {
        Ok(match self {
            MotionSystem::KeplerRegularized(_) => (2.0 * label.abs()).sqrt(),
            MotionSystem::KeplerLifted(p) => (2.0 * label.abs().powi(3)).sqrt() / p.g,
            MotionSystem::FOscillator { deformation, .. } => deformation.derivative(label)?,
        })
    }
}

fn new_to_lifted(s: &[f64; 8]) -> Vec<f64> {
    let r2: f64 = s[..4].iter().map(|c| c * c).sum();
    s[..4].iter().copied().chain(s[4..].iter().map(|v| v / (2.0 * r2))).collect()
}

/// Frequencies attached to one Kepler shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KeplerFrequencies {
    /// Oscillator frequency in regularized time.
    pub regularized: f64,
    /// Frequency of the projected orbit in `R^3`.
    pub physical_3d: f64,
    /// Frequency of the lifted orbit on `TR^4` in physical time.
    pub lifted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MotionRecord {
    pub system: String,
    pub label: f64,
    pub omega: f64,
    pub period: f64,
    pub omega_predicted: f64,
    pub closure_residual: f64,
    pub initial_state: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kepler: Option<KeplerFrequencies>,
}

pub fn extract_motions(system: &MotionSystem, labels: &[f64], opts: &PeriodOptions) -> Result<Vec<MotionRecord>, MotionsError> {
    labels
        .iter()
        .map(|&label| {
            let (field, x0) = system.motion(label)?;
            let est = estimate_period(&field, &x0, opts)?;
            let kepler = match system {
                MotionSystem::KeplerRegularized(p) | MotionSystem::KeplerLifted(p) => Some(KeplerFrequencies {
                    regularized: (2.0 * label.abs()).sqrt(),
                    physical_3d: kepler::kepler3d_frequency(label, p),
                    lifted: (2.0 * label.abs().powi(3)).sqrt() / p.g,
                }),
                MotionSystem::FOscillator { .. } => None,
            };
            Ok(MotionRecord {
                system: system.name().to_string(),
                label,
                omega: est.omega,
                period: est.period,
                omega_predicted: system.predicted_omega(label)?,
                closure_residual: est.residual,
                initial_state: x0,
                kepler,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    #[serde(rename = "label_A")]
    pub label_a: f64,
    #[serde(rename = "label_B")]
    pub label_b: f64,
    #[serde(rename = "omega_A")]
    pub omega_a: f64,
    #[serde(rename = "omega_B")]
    pub omega_b: f64,
    pub rel_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub pairs: Vec<MatchedPair>,
    pub max_rel_mismatch: f64,
}

fn by_omega(records: &[MotionRecord]) -> Vec<&MotionRecord> {
    let mut v: Vec<&MotionRecord> = records.iter().collect();
    v.sort_by(|a, b| a.omega.total_cmp(&b.omega).then(a.label.total_cmp(&b.label)));
    v
}

/// Pairs every motion of `a` with the motion of `b` closest in frequency.
pub fn pair_motions(a: &[MotionRecord], b: &[MotionRecord]) -> Result<MatchReport, MotionsError> {
    if a.len() != b.len() {
        return Err(MotionsError::CardinalityMismatch { a: a.len(), b: b.len() });
    }
    let sa = by_omega(a);
    let sb = by_omega(b);
    let mut used = vec![false; sb.len()];
    let mut pairs = Vec::with_capacity(sa.len());
    let mut nearest = Vec::with_capacity(sa.len());
    for ra in &sa {
        let j = (0..sb.len())
            .min_by(|&i, &k| (sb[i].omega - ra.omega).abs().total_cmp(&(sb[k].omega - ra.omega).abs()))
            .expect("non-empty");
        let rb = sb[j];
        pairs.push(MatchedPair {
            label_a: ra.label,
            label_b: rb.label,
            omega_a: ra.omega,
            omega_b: rb.omega,
            rel_mismatch: (ra.omega - rb.omega).abs() / ra.omega.abs(),
        });
        nearest.push(j);
    }
    for &j in &nearest {
        if used[j] {
            return Err(MotionsError::NotInjective { label: sb[j].label });
        }
        used[j] = true;
    }
    let max_rel_mismatch = pairs.iter().map(|p| p.rel_mismatch).fold(0.0, f64::max);
    Ok(MatchReport { pairs, max_rel_mismatch })
}

/// Pairs the motions and requires every relative mismatch to stay within
/// `tolerance`.
pub fn match_motions(a: &[MotionRecord], b: &[MotionRecord], tolerance: f64) -> Result<MatchReport, MotionsError> {
    if a.len() != b.len() {
        return Err(MotionsError::CardinalityMismatch { a: a.len(), b: b.len() });
    }
    // Frequency mismatch takes precedence over a non-injective pairing.
    let sa = by_omega(a);
    let sb = by_omega(b);
    for ra in &sa {
        let rb = sb
            .iter()
            .min_by(|x, y| (x.omega - ra.omega).abs().total_cmp(&(y.omega - ra.omega).abs()))
            .expect("non-empty");
        let rel = (ra.omega - rb.omega).abs() / ra.omega.abs();
        if !(rel <= tolerance) {
            return Err(MotionsError::FrequencyMismatch {
                label_a: ra.label,
                label_b: rb.label,
                omega_a: ra.omega,
                omega_b: rb.omega,
                rel_mismatch: rel,
                tolerance,
            });
        }
    }
    pair_motions(a, b)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Phase in `[0, 2 pi)` of `target` along one period of `orbit`.
fn locate_phase(orbit: &Trajectory, period: f64, target: &[f64]) -> f64 {
    let nodes = 2048;
    let h = period / nodes as f64;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..nodes {
        let t = k as f64 * h;
        let d = sq_dist(&orbit.sample(t), target);
        if d < best.1 {
            best = (t, d);
        }
    }
    // golden-section refinement around the best node
    let (mut lo, mut hi) = (best.0 - h, best.0 + h);
    let r = 0.5 * (5.0_f64.sqrt() - 1.0);
    let eval = |t: f64| sq_dist(&orbit.sample(t.rem_euclid(period)), target);
    let (mut c, mut d) = (hi - r * (hi - lo), lo + r * (hi - lo));
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = eval(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = eval(d);
        }
    }
    let t = (0.5 * (lo + hi)).rem_euclid(period);
    std::f64::consts::TAU * t / period
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let x = a.rem_euclid(t);
    if x > 0.5 * t {
        x - t
    } else {
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub times: Vec<f64>,
    pub phase_a: Vec<f64>,
    pub phase_b: Vec<f64>,
    /// `max |phase_A - phase_B|` over the sample times, modulo `2 pi`.
    pub max_difference: f64,
    /// `max |phase - omega t|` over both motions.
    pub max_drift: f64,
}

/// Evolves both motions for the same elapsed times `fractions * T_A` and
/// compares the phases they reach on their own orbits.
pub fn phase_alignment(
    sys_a: &MotionSystem,
    rec_a: &MotionRecord,
    sys_b: &MotionSystem,
    rec_b: &MotionRecord,
    fractions: &[f64],
    opts: &PeriodOptions,
) -> Result<PhaseReport, MotionsError> {
    let times: Vec<f64> = fractions.iter().map(|f| f * rec_a.period).collect();
    let mut phases = Vec::new();
    for (sys, rec) in [(sys_a, rec_a), (sys_b, rec_b)] {
        let (field, x0) = sys.motion(rec.label)?;
        let orbit = integrate(&field, &x0, rec.period, &opts.integrator)?;
        let (_, states) = integrate_at(&field, &x0, &times, &opts.integrator)?;
        phases.push(states.iter().map(|s| locate_phase(&orbit, rec.period, s)).collect::<Vec<_>>());
    }
    let mut max_difference = 0.0_f64;
    let mut max_drift = 0.0_f64;
    for (k, &t) in times.iter().enumerate() {
        max_difference = max_difference.max(wrap(phases[0][k] - phases[1][k]).abs());
        max_drift = max_drift.max(wrap(phases[0][k] - rec_a.omega * t).abs());
        max_drift = max_drift.max(wrap(phases[1][k] - rec_b.omega * t).abs());
    }
    let phase_b = phases.pop().unwrap_or_default();
    let phase_a = phases.pop().unwrap_or_default();
    Ok(PhaseReport { times, phase_a, phase_b, max_difference, max_drift })
}

pub const SAMPLES_PER_PERIOD: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary {
    pub label: String,
    pub rows: usize,
    /// Distance between the first and last rows in `(|Q|, |V|)`.
    pub closure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureSummary {
    pub curves: Vec<CurveSummary>,
}

pub fn curve_label(system: &MotionSystem, label: f64) -> String {
    format!("{}:{}", system.name(), label)
}

/// One closed curve per record, `t,absQ,absV,label`, with
/// `SAMPLES_PER_PERIOD` intervals over one period (the endpoint repeats the
/// start up to integration error).
pub fn emit_figure_data<W: Write>(
    system: &MotionSystem,
    records: &[MotionRecord],
    opts: &PeriodOptions,
    out: W,
) -> Result<FigureSummary, MotionsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "absQ", "absV", "label"]).map_err(|e| MotionsError::Io(e.to_string()))?;
    let mut curves = Vec::with_capacity(records.len());
    for rec in records {
        let (field, x0) = system.motion(rec.label)?;
        let times: Vec<f64> = (0..=SAMPLES_PER_PERIOD).map(|k| rec.period * k as f64 / SAMPLES_PER_PERIOD as f64).collect();
        let (_, states) = integrate_at(&field, &x0, &times, &opts.integrator)?;
        let label = curve_label(system, rec.label);
        let n = x0.len() / 2;
        let mut first = None;
        let mut last = (0.0, 0.0);
        for (t, s) in times.iter().zip(&states) {
            let y = system.to_new_chart(s)?;
            let aq = y[..n].iter().map(|c| c * c).sum::<f64>().sqrt();
            let av = y[n..].iter().map(|c| c * c).sum::<f64>().sqrt();
            first.get_or_insert((aq, av));
            last = (aq, av);
            w.write_record([
                crate::dynamics::format_num(*t),
                crate::dynamics::format_num(aq),
                crate::dynamics::format_num(av),
                label.clone(),
            ])
            .map_err(|e| MotionsError::Io(e.to_string()))?;
        }
        let f = first.unwrap_or(last);
        curves.push(CurveSummary { label, rows: states.len(), closure: ((f.0 - last.0).powi(2) + (f.1 - last.1).powi(2)).sqrt() });
    }
    w.flush()?;
    Ok(FigureSummary { curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foscillator::kepler_matching_f;

    fn record(label: f64, omega: f64) -> MotionRecord {
        MotionRecord {
            system: "t".into(),
            label,
            omega,
            period: std::f64::consts::TAU / omega,
            omega_predicted: omega,
            closure_residual: 0.0,
            initial_state: vec![],
            kepler: None,
        }
    }

    #[test]
    fn cardinality_is_checked() {
        let a = vec![record(1.0, 1.0)];
        assert!(matches!(pair_motions(&a, &[]), Err(MotionsError::CardinalityMismatch { a: 1, b: 0 })));
    }

    #[test]
    fn pairs_follow_frequency_not_input_order() {
        let a = vec![record(1.0, 2.0), record(2.0, 1.0)];
        let b = vec![record(10.0, 1.0 + 1e-6), record(20.0, 2.0)];
        let r = match_motions(&a, &b, 1e-3).unwrap();
        assert_eq!(r.pairs[0].label_a, 2.0);
        assert_eq!(r.pairs[0].label_b, 10.0);
        assert_eq!(r.pairs[1].label_b, 20.0);
    }

    #[test]
    fn mismatch_is_reported() {
        let a = vec![record(1.0, 1.0), record(2.0, 2.0)];
        let b = vec![record(1.0, 1.0), record(2.0, 1.0)];
        assert!(matches!(match_motions(&a, &b, 1e-3), Err(MotionsError::FrequencyMismatch { .. })));
        assert!(matches!(pair_motions(&a, &b), Err(MotionsError::NotInjective { .. })));
    }

    #[test]
    fn regularized_kepler_frequency() {
        let sys = MotionSystem::KeplerRegularized(KeplerParams::default());
        let r = extract_motions(&sys, &[-0.5], &PeriodOptions::default()).unwrap();
        assert!((r[0].omega - 1.0).abs() < 1e-6, "{}", r[0].omega);
    }

    #[test]
    fn matching_oscillator_frequency() {
        let sys = MotionSystem::FOscillator { n: 4, deformation: kepler_matching_f(1.0) };
        let r = extract_motions(&sys, &[0.5], &PeriodOptions::default()).unwrap();
        assert!((r[0].omega - 0.5).abs() < 1e-6, "{}", r[0].omega);
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let sys = MotionSystem::KeplerRegularized(KeplerParams::default());
        let mut buf = Vec::new();
        let s = emit_figure_data(&sys, &[], &PeriodOptions::default(), &mut buf).unwrap();
        assert!(s.curves.is_empty());
        assert_eq!(String::from_utf8(buf).unwrap(), "t,absQ,absV,label\n");
    }
}

use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use sode_core::bundle::{BuildOptions, BundleError, TangentStructure};
use sode_core::dynamics::{estimate_period, integrate_named, IntegratorOptions, PeriodOptions};
use sode_core::foscillator::{self, ellipsoid_residual};
use sode_core::geometry::{verify_tangent_structure, VerifyOptions};
use sode_core::kepler;
use sode_core::motions::{emit_figure_data, extract_motions, match_motions, pair_motions, MotionRecord, MotionSystem, MotionsError};
use sode_core::scenarios::BuildScenario;

use crate::config::Config;
use crate::{CliError, Command};

/// Projected and direct Kepler runs must agree to this over one period.
const PROJECTION_TOL: f64 = 1e-6;

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &str) -> Result<Self, CliError> {
        let dir = PathBuf::from(dir);
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), data)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Domain(e.to_string()))?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }
}

fn domain_err(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn motions_err(e: MotionsError) -> CliError {
    match e {
        MotionsError::Label(_) | MotionsError::Kepler(kepler::KeplerError::PositiveEnergy(_)) => CliError::Usage(e.to_string()),
        other => CliError::Domain(other.to_string()),
    }
}

fn bundle_error_kind(e: &BundleError) -> &'static str {
    match e {
        BundleError::OddDimension(_) => "OddDimension",
        BundleError::BaseCount { .. } => "BaseCount",
        BundleError::Dimension { .. } => "Dimension",
        BundleError::DegenerateBase { .. } => "DegenerateBase",
        BundleError::FunctionalDependence { .. } => "FunctionalDependence",
        BundleError::FixedPointOnBase { .. } => "FixedPointOnBase",
        BundleError::NonInvertibleChart { .. } => "NonInvertibleChart",
        BundleError::Eval(_) => "Eval",
        BundleError::Sampling(_) => "Sampling",
    }
}

fn build_options(cfg: &Config) -> BuildOptions {
    BuildOptions { seed: cfg.seed, ..BuildOptions::default() }
}

fn integrator(cfg: &Config) -> IntegratorOptions {
    IntegratorOptions::with_tolerances(cfg.rel_tol, cfg.abs_tol)
}

fn period_options(cfg: &Config) -> PeriodOptions {
    PeriodOptions { integrator: integrator(cfg), ..PeriodOptions::default() }
}

/// Structure errors are domain failures, except shape mistakes in the input.
fn build_structure(sc: &BuildScenario, cfg: &Config, out: &mut Output, report: &str) -> Result<TangentStructure, CliError> {
    match sc.build(&build_options(cfg)) {
        Ok(t) => Ok(t),
        Err(e) => {
            out.json(report, &json!({ "scenario": sc.id, "error": { "kind": bundle_error_kind(&e), "message": e.to_string() } }))?;
            match e {
                BundleError::OddDimension(_) | BundleError::BaseCount { .. } | BundleError::Dimension { .. } => {
                    Err(CliError::Usage(e.to_string()))
                }
                _ => Err(CliError::Domain(format!("{}: {e}", bundle_error_kind(&e)))),
            }
        }
    }
}

fn default_initial(sc: &BuildScenario, cfg: &Config) -> Result<Vec<f64>, CliError> {
    if let Some(x) = &cfg.initial {
        return Ok(x.clone());
    }
    if sc.id == "kepler" {
        return Ok(kepler::circular_state(-0.5, &cfg.kepler_params()?).map_err(domain_err)?.to_vec());
    }
    let dim = sc.ctx.dim();
    Ok((0..dim).map(|i| if i == 0 { 1.0 } else { 0.5 / (i as f64 + 1.0) }).collect())
}

fn verify(cfg: &Config, out: &mut Output) -> Result<(), CliError> {
    let sc = cfg.build_scenario("oscillator-A")?;
    let t = build_structure(&sc, cfg, out, "verify_report.json")?;
    let opts = VerifyOptions { samples: cfg.samples, seed: cfg.seed, tolerance: cfg.tol, ..VerifyOptions::default() };
    let report = verify_tangent_structure(&t.s_old(), &t.delta_old(), Some(t.gamma()), t.domain(), &opts).map_err(domain_err)?;
    out.json("verify_report.json", &json!({ "scenario": sc.id, "structure": t.to_json(), "report": report }))?;
    if report.verdict {
        Ok(())
    } else {
        let failed: Vec<&str> = report.axioms.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect();
        Err(CliError::Domain(format!("axioms failed: {}", failed.join(", "))))
    }
}

fn build(cfg: &Config, out: &mut Output) -> Result<(), CliError> {
    let sc = cfg.build_scenario("oscillator-A")?;
    let t = build_structure(&sc, cfg, out, "structure.json")?;
    out.json("structure.json", &json!({ "scenario": sc.id, "structure": t.to_json(), "inverse_method": t.inverse_method().tag() }))
}

fn integrate(cfg: &Config, out: &mut Output) -> Result<(), CliError> {
    let sc = cfg.build_scenario("oscillator-A")?;
    let x0 = default_initial(&sc, cfg)?;
    let tr = integrate_named(&sc.gamma, &sc.id, &x0, cfg.t_end, &integrator(cfg)).map_err(|e| match e {
        sode_core::dynamics::DynamicsError::Dimension { .. } => CliError::Usage(e.to_string()),
        other => domain_err(other),
    })?;
    let mut csv = Vec::new();
    tr.write_csv(&mut csv, cfg.csv_samples).map_err(domain_err)?;
    out.bytes("trajectory.csv", &csv)?;
    out.json(
        "integrate_report.json",
        &json!({
            "scenario": sc.id,
            "status": tr.status,
            "stats": tr.stats,
            "meta": tr.meta,
            "t_end": tr.t_end(),
            "final": tr.last(),
        }),
    )
}

fn period(cfg: &Config, out: &mut Output) -> Result<(), CliError> {
    let sc = cfg.build_scenario("oscillator-A")?;
    let x0 = default_initial(&sc, cfg)?;
    match estimate_period(&sc.gamma, &x0, &period_options(cfg)) {
        Ok(est) => out.json("period.json", &json!({ "scenario": sc.id, "initial": x0, "estimate": est })),
        Err(e) => {
            out.json("period.json", &json!({ "scenario": sc.id, "initial": x0, "error": e.to_string() }))?;
            Err(domain_err(e))
        }
    }
}

fn kepler_demo(cfg: &Config, out: &mut Output) -> Result<(), CliError> {
    let params = cfg.kepler_params()?;
    let rk = kepler::regularized_structure(&params, &kepler::domain(&params, 2.0), &build_options(cfg)).map_err(domain_err)?;
    out.json("kepler_structure.json", &rk.structure.to_json())?;

    let popts = period_options(cfg);
    let sys = MotionSystem::KeplerRegularized(params);
    let records = extract_motions(&sys, &cfg.energies, &popts).map_err(motions_err)?;
    let mut fig = Vec::new();
    emit_figure_data(&sys, &records, &popts, &mut fig).map_err(motions_err)?;
    out.bytes("fig1.csv", &fig)?;

    let mut projections = Vec::new();
    let mut ok = true;
    for &e in &cfg.energies {
        let s = kepler::circular_state(e, &params).map_err(|err| CliError::Usage(err.to_string()))?;
        let t3 = std::f64::consts::TAU / kepler::kepler3d_frequency(e, &params);
        let r = kepler::projection_residual(&s, &params, t3, 256, &integrator(cfg), 1e-12).map_err(domain_err)?;
        ok &= r.max_position_error < PROJECTION_TOL;
        projections.push(json!({ "energy": e, "report": r }));
    }
    for r in &records {
        ok &= (r.omega - r.omega_predicted).abs() <= cfg.match_tol * r.omega_predicted;
    }
    if let Some(&e) = cfg.energies.first() {
        let x0 = kepler::shell_representative(e, &params).map_err(domain_err)?;
        let t = std::f64::consts::TAU / (2.0 * e.abs()).sqrt();
        let tr = integrate_named(&rk.gamma_hat_new, "kepler_regularized", &x0, t, &integrator(cfg)).map_err(domain_err)?;
        let mut csv = Vec::new();
        tr.write_csv(&mut csv, Some(cfg.csv_samples.unwrap_or(512))).map_err(domain_err)?;
        out.bytes("kepler_shell.csv", &csv)?;
    }
    out.json("kepler_report.json", &json!({ "params": params, "motions": records, "projection": projections, "pass": ok }))?;
    if ok {
        Ok(())
    } else {
        Err(CliError::Domain("Kepler frequency or projection check failed".into()))
    }
}

fn fosc_demo(cfg: &Config, out: &mut Output) -> Result<(), CliError> {
    let n = cfg.n.unwrap_or(4);
    let def = cfg.deformation()?;
    let sys = foscillator::make_oscillator(n).map_err(|e| CliError::Usage(e.to_string()))?;
    let energies = cfg.oscillator_energies();
    let c_max = energies.iter().copied().fold(0.0, f64::max);
    let half_width = (1.25 * (1.5 * c_max).sqrt()).max(1.5);
    let region = foscillator::domain(n, half_width, cfg.e_min);
    let e_max = n as f64 * half_width * half_width;
    let t = foscillator::rebuild_structure(&sys, &def, &region, (cfg.e_min, e_max), &build_options(cfg)).map_err(|e| match e {
        foscillator::FOscillatorError::NonPositiveFrequency { .. } => CliError::Domain(e.to_string()),
        other => domain_err(other),
    })?;
    out.json("fosc_structure.json", &t.to_json())?;

    let popts = period_options(cfg);
    let msys = MotionSystem::FOscillator { n, deformation: def.clone() };
    let records = extract_motions(&msys, &energies, &popts).map_err(motions_err)?;
    let mut fig = Vec::new();
    emit_figure_data(&msys, &records, &popts, &mut fig).map_err(motions_err)?;
    out.bytes("fig2.csv", &fig)?;

    let dirs = sode_core::sampling::SampleBox::cube(2 * n, 1.0).uniform(64, cfg.seed).map_err(domain_err)?;
    let mut ellipsoids = Vec::new();
    for &c in &energies {
        ellipsoids.push(json!({ "energy": c, "check": ellipsoid_residual(&t, &def, c, &dirs).map_err(domain_err)? }));
    }
    let ok = records.iter().all(|r| (r.omega - r.omega_predicted).abs() <= cfg.match_tol * r.omega_predicted);
    out.json("fosc_report.json", &json!({ "n": n, "deformation": def.source, "motions": records, "ellipsoids": ellipsoids, "pass": ok }))?;
    if ok {
        Ok(())
    } else {
        Err(CliError::Domain("measured frequency differs from f'(E_H)".into()))
    }
}

fn matching_json(report: Result<Value, String>, a: &[MotionRecord], b: &[MotionRecord], tol: f64) -> Value {
    let pairs = pair_motions(a, b).ok();
    match report {
        Ok(v) => v,
        Err(msg) => json!({
            "tolerance": tol,
            "bijective": false,
            "error": msg,
            "pairs": pairs.map(|p| p.pairs).unwrap_or_default(),
        }),
    }
}

fn run_match(cfg: &Config, out: &mut Output) -> Result<(), CliError> {
    let params = cfg.kepler_params()?;
    let n = cfg.n.unwrap_or(4);
    let def = cfg.deformation()?;
    let popts = period_options(cfg);
    let kep = MotionSystem::KeplerLifted(params);
    let reg = MotionSystem::KeplerRegularized(params);
    let fosc = MotionSystem::FOscillator { n, deformation: def };
    let osc_energies = cfg.oscillator_energies();

    let a = extract_motions(&kep, &cfg.energies, &popts).map_err(motions_err)?;
    let b = extract_motions(&fosc, &osc_energies, &popts).map_err(motions_err)?;
    let shells = extract_motions(&reg, &cfg.energies, &popts).map_err(motions_err)?;
    let mut fig1 = Vec::new();
    emit_figure_data(&reg, &shells, &popts, &mut fig1).map_err(motions_err)?;
    out.bytes("fig1.csv", &fig1)?;
    let mut fig2 = Vec::new();
    emit_figure_data(&fosc, &b, &popts, &mut fig2).map_err(motions_err)?;
    out.bytes("fig2.csv", &fig2)?;

    let result = match_motions(&a, &b, cfg.match_tol);
    let value = matching_json(
        result
            .as_ref()
            .map(|r| json!({ "tolerance": cfg.match_tol, "bijective": true, "max_rel_mismatch": r.max_rel_mismatch, "pairs": r.pairs }))
            .map_err(|e| e.to_string()),
        &a,
        &b,
        cfg.match_tol,
    );
    out.json("matching.json", &value)?;
    out.json("motions.json", &json!({ "kepler": a, "foscillator": b }))?;
    result.map(|_| ()).map_err(|e| CliError::Domain(e.to_string()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a Config,
    outputs: Vec<String>,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

pub fn run(cmd: Command, cfg: &Config) -> Result<(), CliError> {
    let mut out = Output::new(&cfg.out)?;
    let result = match cmd {
        Command::Verify => verify(cfg, &mut out),
        Command::Build => build(cfg, &mut out),
        Command::Integrate => integrate(cfg, &mut out),
        Command::Period => period(cfg, &mut out),
        Command::KeplerDemo => kepler_demo(cfg, &mut out),
        Command::FoscDemo => fosc_demo(cfg, &mut out),
        Command::Match => run_match(cfg, &mut out),
    };
    let status = match &result {
        Ok(()) => "ok",
        Err(CliError::Usage(_)) => "usage_error",
        Err(_) => "domain_failure",
    };
    let mut outputs = out.files.clone();
    outputs.sort();
    outputs.dedup();
    outputs.push("run_manifest.json".into());
    let manifest = Manifest {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        outputs,
        status,
        message: result.as_ref().err().map(|e| e.to_string()),
    };
    out.json("run_manifest.json", &manifest)?;
    result
}

//! Flat JSON run configuration and its resolution into library objects.

use std::path::Path;

use serde::{Deserialize, Serialize};

use sode_core::bundle::FixedPointPolicy;
use sode_core::expr::{parse, Expr, VariableContext};
use sode_core::foscillator::{kepler_matching_f, Deformation};
use sode_core::geometry::VectorField;
use sode_core::kepler::KeplerParams;
use sode_core::sampling::SampleBox;
use sode_core::scenarios::{self, BuildScenario};

use crate::CliError;

pub const KEYS_HELP: &str = "\
CONFIG KEYS (flat JSON object, every key optional):
  scenario       built-in id or \"custom\"                 [per subcommand]
                 oscillator[-A|-B|-C|-D], conformal-am, free-particle,
                 free-particle-shifted, kepler, foscillator[-quadratic|-kepler|-exp],
                 rotation[-2d|-4d], match, custom
  vars           coordinate names for custom fields       []
  field          component expressions of the field       []
  base           base functions Q^k                       []
  factor         conformal factor applied to the field    none
  half_width     custom sample box half width             1.0
  n              oscillator configuration dimension       2 (4 for demos)
  deformation    f as an expression in xi                 Kepler-matching f
  g              Kepler coupling                          1.0
  r_min          collision exclusion radius               1e-3
  energies       Kepler energies E < 0                    [-0.5, -1.0, -2.0]
  osc_energies   oscillator energies E_H > 0              |energies|
  e_min          lowest oscillator energy in the domain   0.05
  samples        verification sample count                500
  seed           RNG seed                                 0
  tol            verification tolerance                   1e-8
  match_tol      relative frequency tolerance             1e-3
  initial        initial state for integrate/period       per scenario
  t_end          integration horizon                      6.283185307179586
  rel_tol        integrator relative tolerance            1e-10
  abs_tol        integrator absolute tolerance            1e-12
  csv_samples    dense rows in trajectory CSVs            every accepted step
  out            output directory                         out
Command-line flags override the matching keys.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: Option<String>,
    pub vars: Vec<String>,
    pub field: Vec<String>,
    pub base: Vec<String>,
    pub factor: Option<String>,
    pub half_width: f64,
    pub n: Option<usize>,
    pub deformation: Option<String>,
    pub g: f64,
    pub r_min: f64,
    pub energies: Vec<f64>,
    pub osc_energies: Option<Vec<f64>>,
    pub e_min: f64,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub match_tol: f64,
    pub initial: Option<Vec<f64>>,
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub csv_samples: Option<usize>,
    pub out: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scenario: None,
            vars: Vec::new(),
            field: Vec::new(),
            base: Vec::new(),
            factor: None,
            half_width: 1.0,
            n: None,
            deformation: None,
            g: 1.0,
            r_min: 1e-3,
            energies: vec![-0.5, -1.0, -2.0],
            osc_energies: None,
            e_min: 0.05,
            samples: 500,
            seed: 0,
            tol: 1e-8,
            match_tol: 1e-3,
            initial: None,
            t_end: std::f64::consts::TAU,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            csv_samples: None,
            out: "out".into(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn kepler_params(&self) -> Result<KeplerParams, CliError> {
        KeplerParams::new(self.g, self.r_min).map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn deformation(&self) -> Result<Deformation, CliError> {
        match &self.deformation {
            Some(src) => Deformation::parse(src).map_err(|e| CliError::Usage(format!("deformation: {e}"))),
            None => Ok(kepler_matching_f(self.g)),
        }
    }

    pub fn oscillator_energies(&self) -> Vec<f64> {
        self.osc_energies.clone().unwrap_or_else(|| self.energies.iter().map(|e| e.abs()).collect())
    }

    /// The scenario to build, resolving aliases and custom fields.
    pub fn build_scenario(&self, default: &str) -> Result<BuildScenario, CliError> {
        let id = self.scenario.clone().unwrap_or_else(|| default.to_string());
        let n = self.n.unwrap_or(2);
        let resolved = match id.as_str() {
            "custom" => return self.custom_scenario(),
            "oscillator" => "oscillator-A".to_string(),
            "rotation" => "rotation-4d".to_string(),
            "foscillator" => {
                let def = self.deformation()?;
                return Ok(scenarios::foscillator("foscillator", n, &def, 1.5, self.e_min));
            }
            "kepler" => return Ok(scenarios::kepler_regularized(&self.kepler_params()?)),
            other => other.to_string(),
        };
        scenarios::by_id(&resolved).ok_or_else(|| CliError::Usage(format!("unknown scenario '{id}'")))
    }

    fn custom_scenario(&self) -> Result<BuildScenario, CliError> {
        if self.vars.is_empty() || self.field.len() != self.vars.len() {
            return Err(CliError::Usage(format!(
                "custom scenario needs vars and one field component per var (got {} vars, {} components)",
                self.vars.len(),
                self.field.len()
            )));
        }
        let ctx = VariableContext::new(&self.vars).map_err(|e| CliError::Usage(e.to_string()))?;
        let parse_all = |src: &[String], what: &str| -> Result<Vec<Expr>, CliError> {
            src.iter().map(|s| parse(s, &ctx).map_err(|e| CliError::Usage(format!("{what} '{s}': {e}")))).collect()
        };
        let x = VectorField::new(parse_all(&self.field, "field")?);
        let base = parse_all(&self.base, "base")?;
        let (gamma, conformal) = match &self.factor {
            Some(src) => {
                let f = parse(src, &ctx).map_err(|e| CliError::Usage(format!("factor '{src}': {e}")))?;
                (x.scaled(&f), Some((x, f)))
            }
            None => (x, None),
        };
        Ok(BuildScenario {
            id: "custom".into(),
            domain: SampleBox::cube(ctx.dim(), self.half_width),
            ctx,
            gamma,
            base,
            conformal,
            energy_range: None,
            fixed_points: FixedPointPolicy::Reject,
        })
    }
}

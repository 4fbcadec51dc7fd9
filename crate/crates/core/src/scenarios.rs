//! Built-in worked examples: fields with a choice of base functions and a
//! sample region, ready for `bundle::build` and verification.

use crate::bundle::{build, BuildOptions, BundleError, FixedPointPolicy, TangentStructure};
use crate::expr::{parse, Expr, VariableContext};
use crate::foscillator::{self, kepler_matching_f, Deformation};
use crate::geometry::VectorField;
use crate::kepler::{self, KeplerParams};
use crate::sampling::SampleBox;

#[derive(Debug, Clone)]
pub struct BuildScenario {
    pub id: String,
    pub ctx: VariableContext,
    pub gamma: VectorField,
    pub base: Vec<Expr>,
    pub domain: SampleBox,
    /// `(X, f)` when `gamma = f X`.
    pub conformal: Option<(VectorField, Expr)>,
    /// Energy range on which a deformation derivative must stay positive.
    pub energy_range: Option<(f64, f64)>,
    pub fixed_points: FixedPointPolicy,
}

impl BuildScenario {
    /// `opts` with this scenario's fixed-point policy.
    pub fn options(&self, opts: &BuildOptions) -> BuildOptions {
        BuildOptions { fixed_points: self.fixed_points, ..opts.clone() }
    }

    pub fn build(&self, opts: &BuildOptions) -> Result<TangentStructure, BundleError> {
        build(&self.ctx, &self.gamma, &self.base, &self.domain, &self.options(opts))
    }
}

fn exprs(src: &[&str], ctx: &VariableContext) -> Vec<Expr> {
    src.iter().map(|s| parse(s, ctx).expect("built-in expression")).collect()
}

/// `x2 d1 - x1 d2 + x4 d3 - x3 d4`.
pub fn planar_oscillator() -> (VariableContext, VectorField) {
    let c = VariableContext::numbered("x", 4);
    let g = VectorField::parse(&["x2", "-x1", "x4", "-x3"], &c).expect("built-in field");
    (c, g)
}

pub fn oscillator(choice: char) -> Option<BuildScenario> {
    let (ctx, gamma) = planar_oscillator();
    let base = match choice {
        'A' => ["x1", "x3"],
        'B' => ["x1", "x4"],
        'C' => ["x2", "x3"],
        'D' => ["x2", "x4"],
        _ => return None,
    };
    Some(BuildScenario {
        fixed_points: FixedPointPolicy::Reject,
        id: format!("oscillator-{choice}"),
        base: exprs(&base, &ctx),
        ctx,
        gamma,
        domain: SampleBox::cube(4, 2.0),
        conformal: None,
        energy_range: None,
    })
}

/// Planar oscillator rescaled by `1 + l^2`, `l = x1 x4 - x3 x2`.
pub fn conformal_am() -> BuildScenario {
    let (ctx, x) = planar_oscillator();
    let f = parse("1 + (x1*x4 - x3*x2)^2", &ctx).expect("built-in factor");
    BuildScenario {
        id: "conformal-am".into(),
        base: exprs(&["x1", "x3"], &ctx),
        gamma: x.scaled(&f),
        ctx,
        domain: SampleBox::cube(4, 1.5),
        conformal: Some((x, f)),
        energy_range: None,
        fixed_points: FixedPointPolicy::Reject,
    }
}

/// Free motion on `R^4` with base `eta` (`shifted = false`) or
/// `eta + xi^2` componentwise.
pub fn free_particle(shifted: bool) -> BuildScenario {
    let ctx = VariableContext::new(&["eta1", "eta2", "xi1", "xi2"]).expect("valid names");
    let gamma = VectorField::parse(&["xi1", "xi2", "0", "0"], &ctx).expect("built-in field");
    let base = if shifted { exprs(&["eta1 + xi1^2", "eta2 + xi2^2"], &ctx) } else { exprs(&["eta1", "eta2"], &ctx) };
    BuildScenario {
        id: if shifted { "free-particle-shifted".into() } else { "free-particle".into() },
        ctx,
        gamma,
        base,
        domain: SampleBox::cube(4, 1.0),
        conformal: None,
        energy_range: None,
        // the free field vanishes on the whole zero section
        fixed_points: FixedPointPolicy::Warn,
    }
}

/// Regularized Kepler field `2R^2 Gamma` with base `Q = y`.
pub fn kepler_regularized(params: &KeplerParams) -> BuildScenario {
    let ctx = kepler::context();
    let x = kepler::gamma_ks(params);
    let f = parse("2*(y0^2 + y1^2 + y2^2 + y3^2)", &ctx).expect("built-in factor");
    BuildScenario {
        id: "kepler".into(),
        base: exprs(&["y0", "y1", "y2", "y3"], &ctx),
        gamma: x.scaled(&f),
        ctx,
        domain: kepler::domain(params, 1.0),
        conformal: Some((x, f)),
        energy_range: None,
        fixed_points: FixedPointPolicy::Reject,
    }
}

/// `f'(E_H) Gamma` for the planar oscillator with base `Q = q`.
pub fn foscillator(id: &str, n: usize, def: &Deformation, half_width: f64, e_min: f64) -> BuildScenario {
    let sys = foscillator::make_oscillator(n).expect("n >= 1");
    let d = foscillator::deform(&sys, def);
    let e_max = 0.5 * (2 * n) as f64 * half_width * half_width;
    BuildScenario {
        id: id.into(),
        base: (0..n).map(Expr::var).collect(),
        ctx: sys.velocity_ctx.clone(),
        gamma: d.gamma_prime,
        domain: foscillator::domain(n, half_width, e_min),
        conformal: Some((sys.gamma.clone(), d.frequency)),
        energy_range: Some((e_min, e_max)),
        fixed_points: FixedPointPolicy::Reject,
    }
}

/// Test deformations: `xi^2/2`, the Kepler-matching one with `g = 1`,
/// and `exp(xi/2)`.
pub fn test_deformations() -> Vec<(&'static str, Deformation)> {
    vec![
        ("foscillator-quadratic", Deformation::parse("xi^2/2").expect("built-in")),
        ("foscillator-kepler", kepler_matching_f(1.0)),
        ("foscillator-exp", Deformation::parse("exp(xi/2)").expect("built-in")),
    ]
}

/// Every buildable example.
pub fn library() -> Vec<BuildScenario> {
    let mut out: Vec<BuildScenario> = "ABCD".chars().filter_map(oscillator).collect();
    out.push(conformal_am());
    out.push(free_particle(false));
    out.push(free_particle(true));
    out.push(kepler_regularized(&KeplerParams::default()));
    for (id, def) in test_deformations() {
        out.push(foscillator(id, 2, &def, 1.5, 0.05));
    }
    out
}

/// The rotation `x2 d1 - x1 d2`, on `R^2` with base `(x1, x2)` or on `R^4`
/// with base `(x1, x2)`; neither admits a structure.
pub fn rotation(dim: usize) -> BuildScenario {
    let ctx = VariableContext::numbered("x", dim);
    let mut comps = vec!["x2", "-x1"];
    comps.resize(dim, "0");
    let gamma = VectorField::parse(&comps, &ctx).expect("built-in field");
    BuildScenario {
        id: format!("rotation-{dim}d"),
        base: exprs(&["x1", "x2"], &ctx),
        ctx,
        gamma,
        domain: SampleBox::cube(dim, 1.0),
        conformal: None,
        energy_range: None,
        fixed_points: FixedPointPolicy::Reject,
    }
}

pub fn by_id(id: &str) -> Option<BuildScenario> {
    if id == "rotation-2d" {
        return Some(rotation(2));
    }
    if id == "rotation-4d" {
        return Some(rotation(4));
    }
    library().into_iter().find(|s| s.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::FIXED_POINTS_ON_BASE;

    fn quick() -> BuildOptions {
        BuildOptions { grid_per_axis: 3, random_points: 40, ..BuildOptions::default() }
    }

    #[test]
    fn ids_are_unique_and_resolvable() {
        let lib = library();
        for s in &lib {
            assert_eq!(lib.iter().filter(|t| t.id == s.id).count(), 1);
            assert!(by_id(&s.id).is_some());
        }
    }

    #[test]
    fn rotation_rejected_in_both_dimensions() {
        for dim in [2, 4] {
            let s = rotation(dim);
            let err = s.build(&quick()).unwrap_err();
            assert!(matches!(err, BundleError::FunctionalDependence { .. }), "{dim}: {err}");
        }
    }

    #[test]
    fn shifted_free_particle_builds() {
        let s = free_particle(true);
        let t = s.build(&quick()).unwrap();
        assert!(t.warnings().iter().any(|w| w == FIXED_POINTS_ON_BASE));
        let p = [0.2, -0.3, 0.7, 1.1];
        let y = t.chart_forward(&p).unwrap();
        let back = t.chart_inverse(&y).unwrap();
        for (a, b) in p.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sode_core::bundle::{express_in_chart, BuildOptions};
use sode_core::dynamics::{conserved_drift_fn, integrate, IntegratorOptions};
use sode_core::geometry::{VectorFieldEval, VerifyOptions, verify_tangent_structure};
use sode_core::foscillator::{self, Deformation};
use sode_core::scenarios;

fn quick() -> BuildOptions {
    BuildOptions { grid_per_axis: 4, random_points: 100, ..BuildOptions::default() }
}

#[test]
fn conformal_force_block_matches_rescaling_formula() {
    let s = scenarios::conformal_am();
    let t = s.build(&quick()).unwrap();
    let (x, f) = s.conformal.clone().unwrap();
    let chart = express_in_chart(&s.gamma, &t);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for p in s.domain.uniform(200, rng.gen()).unwrap() {
        let (vel, force) = chart.eval(&p).unwrap();
        let fv = f.eval(&p).unwrap();
        // Gamma(f) by a central difference along Gamma
        let g = s.gamma.value(&p).unwrap();
        let h = 1e-6;
        let shift = |sign: f64| -> Vec<f64> { p.iter().zip(g.iter()).map(|(a, b)| a + sign * h * b).collect() };
        let gf = (f.eval(&shift(1.0)).unwrap() - f.eval(&shift(-1.0)).unwrap()) / (2.0 * h);
        let xv = x.value(&p).unwrap();
        // old velocity of the unscaled oscillator is (x2, x4), its force (-x1, -x3)
        let v = [xv[0], xv[2]];
        let accel = [xv[1], xv[3]];
        for k in 0..2 {
            assert!((vel[k] - fv * v[k]).abs() < 1e-12);
            let expect = gf * v[k] + fv * fv * accel[k];
            assert!((force[k] - expect).abs() < 1e-6 * (1.0 + expect.abs()), "{k}: {} vs {expect}", force[k]);
        }
    }
}

#[test]
fn free_particle_force_vanishes_for_both_bases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for shifted in [false, true] {
        let s = scenarios::free_particle(shifted);
        let t = s.build(&quick()).unwrap();
        let chart = express_in_chart(&s.gamma, &t);
        for p in s.domain.uniform(100, rng.gen()).unwrap() {
            let (vel, force) = chart.eval(&p).unwrap();
            assert_eq!(vel, vec![p[2], p[3]]);
            assert!(force.iter().all(|c| c.abs() < 1e-14), "{shifted}: {force:?}");
        }
    }
}

#[test]
fn pushed_field_is_second_order_in_new_chart() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in scenarios::library() {
        let t = s.build(&quick()).unwrap();
        let n = t.n();
        let pushed = t.gamma_new();
        for p in s.domain.uniform(30, rng.gen()).unwrap() {
            let y = t.chart_forward(&p).unwrap();
            let g = pushed.value(&y).unwrap();
            for k in 0..n {
                assert!((g[k] - y[n + k]).abs() < 1e-8 * (1.0 + y[n + k].abs()), "{}: {k}", s.id);
            }
        }
    }
}

#[test]
fn every_library_structure_verifies() {
    let vopts = VerifyOptions { samples: 60, ..VerifyOptions::default() };
    for s in scenarios::library() {
        let t = s.build(&quick()).unwrap();
        let r = verify_tangent_structure(&t.s_old(), &t.delta_old(), Some(&s.gamma), t.domain(), &vopts).unwrap();
        assert!(r.verdict, "{}: {}", s.id, r.to_json());
    }
}

#[test]
fn frequency_is_conserved_along_deformed_flow() {
    let sys = foscillator::make_oscillator(2).unwrap();
    let opts = IntegratorOptions::with_tolerances(1e-12, 1e-14);
    for (id, def) in scenarios::test_deformations() {
        let d = foscillator::deform(&sys, &def);
        let x0 = foscillator::representative_state(2, 0.7);
        let tr = integrate(&d.gamma_prime, &x0, 30.0, &opts).unwrap();
        let drift = conserved_drift_fn(&tr, |x| d.frequency.eval(x)).unwrap();
        assert!(drift < 1e-9, "{id}: {drift}");
    }
}

#[test]
fn new_chart_force_is_linear_in_q() {
    let sys = foscillator::make_oscillator(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (id, def) in scenarios::test_deformations() {
        let region = foscillator::domain(2, 1.5, 0.05);
        let t = foscillator::rebuild_structure(&sys, &def, &region, (0.05, 4.5), &quick()).unwrap();
        let pushed = t.gamma_new();
        for p in region.uniform(100, rng.gen()).unwrap() {
            let e = 0.5 * p.iter().map(|c| c * c).sum::<f64>();
            let w = def.derivative(e).unwrap();
            let y = t.chart_forward(&p).unwrap();
            let g = pushed.value(&y).unwrap();
            for k in 0..2 {
                let expect = -w * w * y[k];
                assert!((g[2 + k] - expect).abs() < 1e-8 * (1.0 + expect.abs()), "{id}");
            }
        }
    }
}

#[test]
fn energy_spheres_map_to_ellipsoids() {
    let sys = foscillator::make_oscillator(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dirs: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    for (id, def) in scenarios::test_deformations() {
        let region = foscillator::domain(2, 1.5, 0.05);
        let t = foscillator::rebuild_structure(&sys, &def, &region, (0.05, 4.5), &quick()).unwrap();
        for c in [0.3, 1.0, 2.0] {
            let r = foscillator::ellipsoid_residual(&t, &def, c, &dirs).unwrap();
            assert!(r.max_residual < 1e-10, "{id} {c}: {}", r.max_residual);
        }
    }
}

#[test]
fn legendre_map_intertwines_the_two_pictures() {
    // pushing f'(E_H) Gamma through the Legendre map gives f'(H) X_H
    let sys = foscillator::make_oscillator(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (id, def) in scenarios::test_deformations() {
        let d = foscillator::deform(&sys, &def);
        for _ in 0..100 {
            let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let img = sys.legendre.apply(&p).unwrap();
            let lhs = sys.legendre.jacobian(&p).unwrap() * d.gamma_prime.value(&p).unwrap();
            let rhs = d.x_hbar.value(img.as_slice()).unwrap();
            assert!((lhs - rhs).amax() < 1e-10, "{id}");
        }
    }
}

#[test]
fn nonmonotone_deformation_is_rejected() {
    let sys = foscillator::make_oscillator(2).unwrap();
    let def = Deformation::parse("(xi - 1)^2").unwrap();
    let region = foscillator::domain(2, 1.5, 0.05);
    assert!(foscillator::rebuild_structure(&sys, &def, &region, (0.05, 4.5), &quick()).is_err());
}

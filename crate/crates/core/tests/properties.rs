use plate_dpg::cli::{fit_slope, slope_from_csv};
use plate_dpg::dpg_core::{scheme_consistency_check, MaterialTensor, SchemeKind};
use plate_dpg::estimator::{run_study, solve_level, Refinement, StudyConfig};
use plate_dpg::fortin_lab::{verify_fortin_boundedness, BoundednessReport};
use plate_dpg::mesh::build_initial_mesh;
use plate_dpg::problems::ManufacturedSolution;
use proptest::prelude::*;

fn csv_for(ndof: &[f64], eta: &[f64]) -> String {
    let mut s = String::from("level,ndof,h_max,eta,err_u,err_theta,err_M,wall_ms\n");
    for (k, (n, e)) in ndof.iter().zip(eta).enumerate() {
        s += &format!("{k},{n},1e0,{e:e},{e:e},,{e:e},\n");
    }
    s
}

proptest! {
    #[test]
    fn exact_power_laws_are_recovered(slope in -1.5f64..-0.05, c in 0.01f64..100.0, levels in 3usize..10) {
        let n: Vec<f64> = (0..levels).map(|k| 50.0 * 4f64.powi(k as i32)).collect();
        let e: Vec<f64> = n.iter().map(|v| c * v.powf(slope)).collect();
        let s = slope_from_csv(csv_for(&n, &e).as_bytes(), "eta", None).unwrap();
        prop_assert!((s - slope).abs() < 1e-10);
    }

    #[test]
    fn one_percent_noise_moves_the_slope_little(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // geometric growth of the unknowns as in the uniform studies
        let n: Vec<f64> = (0..7).map(|k| 60.0 * 4f64.powi(k)).collect();
        let e: Vec<f64> = n.iter().map(|v| v.powf(-0.335) * (1.0 + rng.random_range(-0.01..0.01))).collect();
        let lx: Vec<f64> = n.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = e.iter().map(|v| v.ln()).collect();
        prop_assert!((fit_slope(&lx, &ly) + 0.335).abs() < 0.02);
    }
}

#[test]
fn schemes_agree_better_on_finer_meshes() {
    let p = ManufacturedSolution::smooth(MaterialTensor::identity());
    // on the two coarsest meshes both solutions are nearly the same projection
    // and their difference still grows; from then on it shrinks like h²
    let mut mesh = build_initial_mesh(&p.seed()).unwrap().refine_uniform().refine_uniform();
    let mut last = (f64::INFINITY, f64::INFINITY);
    for _ in 0..4 {
        let a = solve_level(&mesh, &p, SchemeKind::Theta).unwrap();
        let b = solve_level(&mesh, &p, SchemeKind::PLAIN).unwrap();
        let d = scheme_consistency_check(&mesh, &a.coeffs, &b.coeffs);
        assert!(d.0 < last.0 && d.1 < last.1, "{d:?} after {last:?}");
        last = d;
        mesh = mesh.refine_uniform();
    }

    let p = ManufacturedSolution::singular();
    let diff = |m| {
        let a = solve_level(m, &p, SchemeKind::Theta).unwrap();
        let b = solve_level(m, &p, SchemeKind::PLAIN).unwrap();
        scheme_consistency_check(m, &a.coeffs, &b.coeffs)
    };
    let l0 = build_initial_mesh(&p.seed()).unwrap();
    let l2 = l0.refine_uniform().refine_uniform();
    let l4 = l2.refine_uniform().refine_uniform();
    let (d0, d2, d4) = (diff(&l0), diff(&l2), diff(&l4));
    // the moments of both schemes coincide on the three-element seed
    assert!(d0.1 < 1e-12, "{d0:?}");
    assert!(d2.0 < d0.0, "{d0:?} {d2:?}");
    assert!(d4.0 < d2.0 && d4.1 < d2.1, "{d2:?} {d4:?}");
}

#[test]
fn estimator_decreases_under_uniform_refinement() {
    let p = ManufacturedSolution::smooth(MaterialTensor::identity());
    let mesh = build_initial_mesh(&p.seed()).unwrap();
    for scheme in [SchemeKind::Theta, SchemeKind::PLAIN, SchemeKind::Plain { tensor_degree: 2 }] {
        let cfg = StudyConfig { scheme, refinement: Refinement::Uniform, max_levels: 3, budget_dofs: usize::MAX };
        let rec = run_study(&p, &mesh, &cfg, |_, _| {}).unwrap();
        assert!(rec.windows(2).all(|w| w[1].eta < w[0].eta), "{scheme:?}");
    }
}

#[test]
fn fortin_bounds_over_many_samples() {
    let r = verify_fortin_boundedness(7, 200).unwrap();
    for col in [&r.ggrad, &r.divdiv_vector, &r.ddiv] {
        assert!(col.iter().all(|v| v.is_finite() && *v > 0.0));
        assert!(BoundednessReport::variation(col) < 0.2, "{col:?}");
    }
    assert!(BoundednessReport::variation(&r.ddiv_scaled) < 1e-10);
}

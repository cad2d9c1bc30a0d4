use plate_dpg::mesh::{build_initial_mesh, Mesh, Seed};
use proptest::prelude::*;

fn refine_randomly(mut m: Mesh, masks: &[Vec<bool>]) -> Vec<Mesh> {
    let mut out = vec![m.clone()];
    for mask in masks {
        let marked: Vec<usize> = (0..m.n_triangles()).filter(|&t| mask[t % mask.len()]).collect();
        m = m.refine(&marked);
        out.push(m.clone());
    }
    out
}

#[test]
fn square_seeds_keep_their_minimum_angle() {
    for seed in [Seed::unit_square(), Seed::criss_cross_square()] {
        let mut m = build_initial_mesh(&seed).unwrap();
        let a0 = m.min_angle();
        for _ in 0..6 {
            m = m.refine_uniform();
            assert!(m.min_angle() >= a0 - 1e-12);
        }
    }
}

#[test]
fn pentagon_angles_settle_after_one_bisection() {
    // the first bisection of a 45-67.5-67.5 triangle creates a new similarity
    // class; afterwards no smaller angle appears
    let mut m = build_initial_mesh(&Seed::reentrant_pentagon()).unwrap().refine_uniform();
    let a1 = m.min_angle();
    assert!(a1.to_degrees() > 28.0);
    for _ in 0..5 {
        m = m.refine_uniform();
        assert!((m.min_angle() - a1).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_marks_keep_shape_regularity(masks in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..17), 1..7)) {
        for seed in [Seed::criss_cross_square(), Seed::reentrant_pentagon()] {
            let first = build_initial_mesh(&seed).unwrap().refine_uniform().min_angle();
            let seed_angle = build_initial_mesh(&seed).unwrap().min_angle();
            let floor = first.min(seed_angle);
            let area = build_initial_mesh(&seed).unwrap().total_area();
            for m in refine_randomly(build_initial_mesh(&seed).unwrap(), &masks) {
                prop_assert!(m.min_angle() >= floor - 1e-12);
                prop_assert!((m.total_area() - area).abs() < 1e-12 * area);
            }
        }
    }
}

//! Built-in residual estimator, bulk marking and the
//! solve–estimate–mark–refine loop.

use std::time::Instant;

use crate::dpg_core::{assemble, Discretization, DpgError, SchemeKind, TrialCoefficients};
use crate::mesh::Mesh;
use crate::problems::{measure_errors, FieldErrors, ManufacturedSolution};

/// Per-element `η(T)` and the global `η = (Σ η(T)²)^{1/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorIndicators {
    pub local: Vec<f64>,
    pub total: f64,
}

/// Evaluates `η(T)² = r_Tᵀ G_T⁻¹ r_T`, `r_T = l_T − B_T x_T`, where `x_T`
/// includes the prescribed boundary data.
pub fn estimate(disc: &Discretization, x: &[f64]) -> ErrorIndicators {
    let sq = disc.local_residuals(x);
    let total = sq.iter().sum::<f64>().sqrt();
    ErrorIndicators { local: sq.into_iter().map(f64::sqrt).collect(), total }
}

/// Smallest greedy set carrying `theta · η²`: elements sorted by `η(T)`
/// descending (ties by index) are taken until the bulk criterion holds.
/// Returned indices are sorted.
pub fn mark(ind: &ErrorIndicators, theta: f64) -> Vec<usize> {
    assert!(theta > 0.0 && theta <= 1.0, "bulk parameter must lie in (0, 1]");
    let mut order: Vec<usize> = (0..ind.local.len()).collect();
    order.sort_by(|&a, &b| ind.local[b].total_cmp(&ind.local[a]).then(a.cmp(&b)));
    let total: f64 = ind.local.iter().map(|e| e * e).sum();
    // relative slack so rounding in the running sum never adds an element
    let goal = theta * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut out = Vec::new();
    for t in order {
        if acc >= goal || ind.local[t] <= 0.0 {
            break;
        }
        acc += ind.local[t] * ind.local[t];
        out.push(t);
    }
    out.sort_unstable();
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Refinement {
    Uniform,
    Adaptive { theta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudyConfig {
    pub scheme: SchemeKind,
    pub refinement: Refinement,
    /// Maximal number of solved levels.
    pub max_levels: usize,
    /// The loop stops after the first level with at least this many unknowns.
    pub budget_dofs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub ndof: usize,
    pub n_elements: usize,
    pub h_max: f64,
    pub eta: f64,
    pub errors: FieldErrors,
    pub wall_ms: f64,
    /// Centroids of the elements marked for the next refinement.
    pub marked_centroids: Vec<[f64; 2]>,
}

/// Everything one level produces.
pub struct LevelSolution {
    pub disc: Discretization,
    pub x: Vec<f64>,
    pub coeffs: TrialCoefficients,
    pub indicators: ErrorIndicators,
}

pub fn solve_level(mesh: &Mesh, problem: &ManufacturedSolution, scheme: SchemeKind) -> Result<LevelSolution, DpgError> {
    let lifted = problem.lifted(mesh);
    let f = |x: [f64; 2]| problem.load(x);
    let disc = assemble(mesh, scheme, &problem.material, &f, &lifted)?;
    let x = disc.solve()?;
    let coeffs = disc.coefficients(mesh, &x);
    let indicators = estimate(&disc, &x);
    Ok(LevelSolution { disc, x, coeffs, indicators })
}

/// Runs the study and returns one record per solved level. `on_level` sees
/// each mesh and its solution before refinement.
pub fn run_study(
    problem: &ManufacturedSolution,
    initial: &Mesh,
    config: &StudyConfig,
    mut on_level: impl FnMut(&Mesh, &LevelSolution),
) -> Result<Vec<LevelRecord>, DpgError> {
    let mut mesh = initial.clone();
    let mut records = Vec::new();
    for level in 0..config.max_levels {
        let start = Instant::now();
        let sol = solve_level(&mesh, problem, config.scheme)?;
        let errors = measure_errors(&mesh, &sol.coeffs, problem);
        let last = level + 1 == config.max_levels || sol.disc.ndof() >= config.budget_dofs || sol.indicators.total == 0.0;
        let marked = match config.refinement {
            _ if last => Vec::new(),
            Refinement::Uniform => Vec::new(),
            Refinement::Adaptive { theta } => mark(&sol.indicators, theta),
        };
        let next = if last {
            None
        } else {
            Some(match config.refinement {
                Refinement::Uniform => mesh.refine_uniform(),
                Refinement::Adaptive { .. } => mesh.refine(&marked),
            })
        };
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        on_level(&mesh, &sol);
        records.push(LevelRecord {
            level,
            ndof: sol.disc.ndof(),
            n_elements: mesh.n_triangles(),
            h_max: mesh.h_max(),
            eta: sol.indicators.total,
            errors,
            wall_ms,
            marked_centroids: marked.iter().map(|&t| mesh.centroid(t)).collect(),
        });
        match next {
            Some(m) => mesh = m,
            None => break,
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpg_core::MaterialTensor;
    use crate::mesh::{build_initial_mesh, Seed};
    use nalgebra::DVector;

    fn ind(v: &[f64]) -> ErrorIndicators {
        ErrorIndicators { local: v.to_vec(), total: v.iter().map(|e| e * e).sum::<f64>().sqrt() }
    }

    #[test]
    fn marking_examples() {
        let u = ind(&[1.0; 10]);
        assert_eq!(mark(&u, 0.7).len(), 7);
        let u = ind(&[1.0; 9]);
        assert_eq!(mark(&u, 0.7).len(), 7);
        let dominant = ind(&[2.0, 0.5, 0.5, 0.5, 0.5]);
        assert_eq!(mark(&dominant, 0.7), vec![0]);
        let some_zero = ind(&[1.0, 0.0, 0.3, 0.0]);
        assert_eq!(mark(&some_zero, 1.0), vec![0, 2]);
        let ties = ind(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(mark(&ties, 0.5), vec![0, 1]);
    }

    #[test]
    fn estimator_matches_explicit_factorisation() {
        let mesh = build_initial_mesh(&Seed::criss_cross_square()).unwrap();
        let p = ManufacturedSolution::smooth(MaterialTensor::identity());
        let sol = solve_level(&mesh, &p, SchemeKind::Theta).unwrap();
        let asm = crate::dpg_core::LocalAssembler::new(SchemeKind::Theta).unwrap();
        let f = |x: [f64; 2]| p.load(x);
        let mut total = 0.0;
        for t in 0..mesh.n_triangles() {
            let sys = asm.local_system(&mesh.triangle_vertices(t), &p.material, &f).unwrap();
            let xt = DVector::from_vec(sol.disc.local_trial(t, &sol.x));
            let r = &sys.l - &sys.b * xt;
            let e2 = r.dot(&sys.g.clone().lu().solve(&r).unwrap());
            assert!((e2 - sol.indicators.local[t].powi(2)).abs() < 1e-12 * (1.0 + e2));
            total += e2;
        }
        assert!((total.sqrt() - sol.indicators.total).abs() < 1e-12);
    }

    #[test]
    fn single_element_zero_solution_estimator() {
        let mesh = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let p = ManufacturedSolution::smooth(MaterialTensor::identity());
        let lifted = crate::trace_spaces::DeflectionTraceDofs::zeros(3);
        let f = |x: [f64; 2]| p.load(x);
        let disc = assemble(&mesh, SchemeKind::Theta, &p.material, &f, &lifted).unwrap();
        let x = vec![0.0; disc.ndof()];
        let e = estimate(&disc, &x);
        let sys = crate::dpg_core::LocalAssembler::new(SchemeKind::Theta).unwrap().local_system(&mesh.triangle_vertices(0), &p.material, &f).unwrap();
        let lgl = sys.l.dot(&sys.g.clone().cholesky().unwrap().solve(&sys.l));
        assert!((e.total.powi(2) - lgl).abs() < 1e-12 * lgl);
    }

    #[test]
    fn zero_problem_stops_immediately() {
        let p = ManufacturedSolution::zero();
        let mesh = build_initial_mesh(&p.seed()).unwrap();
        let cfg = StudyConfig { scheme: SchemeKind::Theta, refinement: Refinement::Adaptive { theta: 0.7 }, max_levels: 5, budget_dofs: 10_000 };
        let rec = run_study(&p, &mesh, &cfg, |_, _| {}).unwrap();
        assert_eq!(rec.len(), 1);
        assert_eq!(rec[0].eta, 0.0);
    }
}

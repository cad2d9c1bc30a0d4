//! Model problems: the singular corner solution on a reentrant pentagon, a
//! smooth clamped polynomial on the unit square and the zero problem, with
//! the matching boundary data and L₂ error measurement.

use std::f64::consts::PI;

use thiserror::Error;

use crate::dpg_core::{MaterialTensor, TrialCoefficients};
use crate::mesh::{Mesh, Seed};
use crate::poly::{divdiv_tensor, gauss_legendre, hessian, quadrature, sym_dot, Poly, SymPoly, VecPoly};
use crate::trace_spaces::DeflectionTraceDofs;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("corner angle {0} outside [π, 2π)")]
    AngleOutOfRange(f64),
    #[error("no exponent found in (0, 1] for corner angle {0}")]
    NoRoot(f64),
    #[error("the singular solution is not defined at the corner")]
    AtCorner,
}

/// Opening angle `ω`, exponent `α` and amplitude `C` of
/// `u = r^{1+α} (cos((α+1)φ) + C cos((α−1)φ))`, with `φ` measured from the
/// bisector of the wedge `|φ| < ω/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularParams {
    pub omega: f64,
    pub alpha: f64,
    pub c: f64,
}

/// Determinant of the clamped-edge system at exponent `alpha`.
pub fn corner_determinant(alpha: f64, omega: f64) -> f64 {
    let a = (alpha + 1.0) * omega / 2.0;
    let b = (alpha - 1.0) * omega / 2.0;
    (alpha + 1.0) * a.sin() * b.cos() - (alpha - 1.0) * a.cos() * b.sin()
}

/// Smallest exponent `α ∈ (0, 1]` making `u` and `∂ₙu` vanish on both edges
/// of a wedge with opening `omega`. `α = 0` always solves the determinant
/// equation and is skipped.
pub fn solve_corner_exponent(omega: f64) -> Result<SingularParams, ProblemError> {
    if !(PI - 1e-14..2.0 * PI).contains(&omega) {
        return Err(ProblemError::AngleOutOfRange(omega));
    }
    let f = |a: f64| corner_determinant(a, omega);
    let n = 2000;
    let mut lo = 1e-3;
    let mut flo = f(lo);
    let mut bracket = None;
    for i in 1..=n {
        let hi = 1e-3 + (1.0 - 1e-3) * i as f64 / n as f64;
        let fhi = f(hi);
        if flo == 0.0 {
            bracket = Some((lo, lo));
            break;
        }
        if flo.signum() != fhi.signum() {
            bracket = Some((lo, hi));
            break;
        }
        lo = hi;
        flo = fhi;
    }
    let alpha = match bracket {
        Some((mut a, mut b)) => {
            let mut fa = f(a);
            while b - a > 1e-15 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        }
        // the straight edge: the determinant touches zero only at α = 1
        None if f(1.0).abs() < 1e-12 => 1.0,
        None => return Err(ProblemError::NoRoot(omega)),
    };
    let c = -((alpha + 1.0) * omega / 2.0).cos() / ((alpha - 1.0) * omega / 2.0).cos();
    Ok(SingularParams { omega, alpha, c })
}

/// Value, gradient and Hessian `(xx, yy, xy)` of the singular solution.
pub fn eval_singular(p: &SingularParams, x: [f64; 2]) -> Result<(f64, [f64; 2], [f64; 3]), ProblemError> {
    let r = x[0].hypot(x[1]);
    if r < 1e-300 {
        return Err(ProblemError::AtCorner);
    }
    let phi = x[1].atan2(x[0]);
    let l = p.alpha + 1.0;
    let m = p.alpha - 1.0;
    let g = (l * phi).cos() + p.c * (m * phi).cos();
    let g1 = -l * (l * phi).sin() - p.c * m * (m * phi).sin();
    let g2 = -l * l * (l * phi).cos() - p.c * m * m * (m * phi).cos();
    let rl = r.powf(l);
    let u = rl * g;
    let ur = l * rl / r * g;
    let urr = l * (l - 1.0) * rl / (r * r) * g;
    let up = rl * g1;
    let upp = rl * g2;
    let urp = l * rl / r * g1;
    let (c, s) = (phi.cos(), phi.sin());
    let grad = [c * ur - s * up / r, s * ur + c * up / r];
    let a = ur / r + upp / (r * r);
    let b = urp / r - up / (r * r);
    let hxx = c * c * urr + s * s * a - 2.0 * s * c * b;
    let hyy = s * s * urr + c * c * a + 2.0 * s * c * b;
    let hxy = s * c * (urr - a) + (c * c - s * s) * b;
    Ok((u, grad, [hxx, hyy, hxy]))
}

/// `Div Hess u = ∇Δu`; only the `C cos((α−1)φ)` term is not harmonic.
fn singular_grad_laplacian(p: &SingularParams, x: [f64; 2]) -> [f64; 2] {
    let r = x[0].hypot(x[1]);
    let phi = x[1].atan2(x[0]);
    let m = p.alpha - 1.0;
    let k = 4.0 * p.alpha * p.c;
    let gr = k * m * r.powf(m - 1.0) * (m * phi).cos();
    let gp = -k * m * r.powf(m - 1.0) * (m * phi).sin();
    let (c, s) = (phi.cos(), phi.sin());
    [c * gr - s * gp, s * gr + c * gp]
}

#[derive(Clone, Debug)]
pub enum ProblemKind {
    Singular(SingularParams),
    Smooth { u: Poly },
    Zero,
}

/// Exact solution with its derived fields. `M = −ℂ Hess u` and
/// `f = −div Div M`.
#[derive(Clone, Debug)]
pub struct ManufacturedSolution {
    pub kind: ProblemKind,
    pub material: MaterialTensor,
    f: Poly,
    div_m: VecPoly,
}

impl ManufacturedSolution {
    /// Singular solution on the reentrant pentagon with opening `5π/4`.
    pub fn singular() -> Self {
        let p = solve_corner_exponent(5.0 * PI / 4.0).expect("root exists for 5π/4");
        Self::singular_with(p)
    }

    pub fn singular_with(p: SingularParams) -> Self {
        Self { kind: ProblemKind::Singular(p), material: MaterialTensor::identity(), f: Poly::zero(0), div_m: VecPoly::zero(0) }
    }

    /// `u = x²(1−x)²y²(1−y)²` on the unit square.
    pub fn smooth(material: MaterialTensor) -> Self {
        let px = &Poly::x() * &Poly::affine(1.0, -1.0, 0.0);
        let py = &Poly::y() * &Poly::affine(1.0, 0.0, -1.0);
        let u = &(&px * &px) * &(&py * &py);
        let m = material.apply_poly(&hessian(&u)).scale(-1.0);
        let f = divdiv_tensor(&m).scale(-1.0);
        let div_m = crate::poly::div_tensor(&m);
        Self { kind: ProblemKind::Smooth { u }, material, f, div_m }
    }

    pub fn zero() -> Self {
        Self { kind: ProblemKind::Zero, material: MaterialTensor::identity(), f: Poly::zero(0), div_m: VecPoly::zero(0) }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ProblemKind::Singular(_) => "singular",
            ProblemKind::Smooth { .. } => "smooth",
            ProblemKind::Zero => "zero",
        }
    }

    pub fn seed(&self) -> Seed {
        match self.kind {
            ProblemKind::Singular(_) => Seed::reentrant_pentagon(),
            _ => Seed::criss_cross_square(),
        }
    }

    pub fn corner(&self) -> Option<[f64; 2]> {
        matches!(self.kind, ProblemKind::Singular(_)).then_some([0.0, 0.0])
    }

    /// `(u, ∇u, Hess u)`; zero at the singular corner.
    pub fn eval(&self, x: [f64; 2]) -> (f64, [f64; 2], [f64; 3]) {
        match &self.kind {
            ProblemKind::Singular(p) => eval_singular(p, x).unwrap_or((0.0, [0.0; 2], [0.0; 3])),
            ProblemKind::Smooth { u } => {
                let g = crate::poly::grad(u).eval(x[0], x[1]);
                (u.eval(x[0], x[1]), g, hessian(u).eval(x[0], x[1]))
            }
            ProblemKind::Zero => (0.0, [0.0; 2], [0.0; 3]),
        }
    }

    pub fn moment(&self, x: [f64; 2]) -> [f64; 3] {
        let h = self.eval(x).2;
        self.material.apply([-h[0], -h[1], -h[2]])
    }

    pub fn load(&self, x: [f64; 2]) -> f64 {
        self.f.eval(x[0], x[1])
    }

    pub fn load_poly(&self) -> &Poly {
        &self.f
    }

    /// `Div M`; for the singular solution `M = −Hess u` so this is `−∇Δu`.
    pub fn div_moment(&self, x: [f64; 2]) -> [f64; 2] {
        match &self.kind {
            ProblemKind::Singular(p) => {
                let g = singular_grad_laplacian(p, x);
                [-g[0], -g[1]]
            }
            _ => self.div_m.eval(x[0], x[1]),
        }
    }

    /// Vertex data of `û` taken from the exact solution.
    pub fn lifted(&self, mesh: &Mesh) -> DeflectionTraceDofs {
        DeflectionTraceDofs::sample(mesh, |x| {
            let (u, g, _) = self.eval(x);
            (u, g)
        })
    }
}

/// `M` as a polynomial tensor field (smooth problem only).
pub fn smooth_moment(sol: &ManufacturedSolution) -> Option<SymPoly> {
    match &sol.kind {
        ProblemKind::Smooth { u } => Some(sol.material.apply_poly(&hessian(u)).scale(-1.0)),
        _ => None,
    }
}

/// L₂ errors of the piecewise-constant fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldErrors {
    pub u: f64,
    pub theta: Option<f64>,
    pub m: f64,
}

/// Levels of red subdivision toward a singular corner before quadrature.
pub const CORNER_SUBDIVISION_LEVELS: usize = 4;

fn red_children(t: &[[f64; 2]; 3]) -> [[[f64; 2]; 3]; 4] {
    let mid = |a: [f64; 2], b: [f64; 2]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let (m01, m12, m20) = (mid(t[0], t[1]), mid(t[1], t[2]), mid(t[2], t[0]));
    [[t[0], m01, m20], [m01, t[1], m12], [m20, m12, t[2]], [m01, m12, m20]]
}

/// Integrates `g` over `tri`, subdividing toward `corner` when it is a vertex.
pub fn integrate_with_corner(
    tri: &[[f64; 2]; 3],
    corner: Option<[f64; 2]>,
    levels: usize,
    g: &dyn Fn([f64; 2]) -> f64,
) -> f64 {
    let rule = quadrature(crate::poly::DEFAULT_VOLUME_DEGREE).expect("supported");
    let plain = |t: &[[f64; 2]; 3]| {
        let j = ((t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1])).abs();
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| {
                let x = [
                    t[0][0] + p[0] * (t[1][0] - t[0][0]) + p[1] * (t[2][0] - t[0][0]),
                    t[0][1] + p[0] * (t[1][1] - t[0][1]) + p[1] * (t[2][1] - t[0][1]),
                ];
                w * j * g(x)
            })
            .sum::<f64>()
    };
    let touches = |t: &[[f64; 2]; 3]| {
        corner.is_some_and(|c| t.iter().any(|v| (v[0] - c[0]).hypot(v[1] - c[1]) < 1e-12))
    };
    let mut total = 0.0;
    let mut current = *tri;
    for _ in 0..levels {
        if !touches(&current) {
            break;
        }
        let mut next = None;
        for ch in red_children(&current) {
            if next.is_none() && touches(&ch) {
                next = Some(ch);
            } else {
                total += plain(&ch);
            }
        }
        current = next.expect("a child keeps the corner vertex");
    }
    total + plain(&current)
}

/// Elementwise L₂ errors of `u`, `θ` (when present) and `M` against the
/// exact solution.
pub fn measure_errors(mesh: &Mesh, coeffs: &TrialCoefficients, exact: &ManufacturedSolution) -> FieldErrors {
    use rayon::prelude::*;
    let corner = exact.corner();
    let parts: Vec<[f64; 3]> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.triangle_vertices(t);
            let ut = coeffs.u[t];
            let mt = coeffs.m[t];
            let eu = integrate_with_corner(&tri, corner, CORNER_SUBDIVISION_LEVELS, &|x| (exact.eval(x).0 - ut).powi(2));
            let et = coeffs.theta.as_ref().map_or(0.0, |th| {
                let tt = th[t];
                integrate_with_corner(&tri, corner, CORNER_SUBDIVISION_LEVELS, &|x| {
                    let g = exact.eval(x).1;
                    (g[0] - tt[0]).powi(2) + (g[1] - tt[1]).powi(2)
                })
            });
            let em = integrate_with_corner(&tri, corner, CORNER_SUBDIVISION_LEVELS, &|x| {
                let m = exact.moment(x);
                let d = [m[0] - mt[0], m[1] - mt[1], m[2] - mt[2]];
                sym_dot(&d, &d)
            });
            [eu, et, em]
        })
        .collect();
    let sum = |k: usize| parts.iter().map(|p| p[k]).sum::<f64>().sqrt();
    FieldErrors { u: sum(0), theta: coeffs.theta.as_ref().map(|_| sum(1)), m: sum(2) }
}

/// Distance from the corner to the pentagon boundary along direction `phi`.
fn pentagon_radius(phi: f64) -> f64 {
    let (c, s) = (phi.cos(), phi.sin());
    let mut r = f64::INFINITY;
    if c > 1e-15 {
        r = r.min(1.0 / c);
    }
    if s.abs() > 1e-15 {
        r = r.min(1.0 / s.abs());
    }
    r
}

/// `∫_{Ω ∩ {r > ρ}} |Div M|²` for the singular solution on the pentagon,
/// by tensor Gauss quadrature in `(φ, log r)`.
pub fn div_moment_energy_outside(sol: &ManufacturedSolution, rho: f64) -> f64 {
    let ProblemKind::Singular(p) = &sol.kind else {
        return 0.0;
    };
    let (s, w) = gauss_legendre(24);
    let half = p.omega / 2.0;
    let breaks = [-half, -PI / 4.0, PI / 4.0, half];
    let mut total = 0.0;
    for seg in breaks.windows(2) {
        for (si, wi) in s.iter().zip(&w) {
            let phi = seg[0] + si * (seg[1] - seg[0]);
            let rmax = pentagon_radius(phi);
            let (t0, t1) = (rho.ln(), rmax.ln());
            for (sj, wj) in s.iter().zip(&w) {
                let t = t0 + sj * (t1 - t0);
                let r = t.exp();
                let x = [r * phi.cos(), r * phi.sin()];
                let d = sol.div_moment(x);
                total += wi * (seg[1] - seg[0]) * wj * (t1 - t0) * r * r * (d[0] * d[0] + d[1] * d[1]);
            }
        }
    }
    total
}

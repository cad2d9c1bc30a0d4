//! Push-forwards between the reference triangle and a physical element.
//!
//! With `F(x̂) = B x̂ + a` and `J = det B`:
//!
//! * pullback: `z ∘ F = ẑ`,
//! * Piola: `J τ ∘ F = B τ̂`,
//! * Piola–Kirchhoff: `J M ∘ F = B M̂ Bᵀ`.
//!
//! All maps act on polynomial coefficients, so results are exact up to
//! rounding. Physical fields are polynomials in physical coordinates.

use thiserror::Error;

use crate::mesh::AffineMap;
use crate::poly::{div_tensor, div_vector, divdiv_tensor, hessian, quadrature, sym_dot, Poly, SymPoly, VecPoly};
use crate::trace_spaces::{pair_poly_divdiv, pair_poly_divdiv_vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    Pullback,
    Piola,
    PiolaKirchhoff,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("map is not orientation preserving (det = {0})")]
    Orientation(f64),
}

fn check(map: &AffineMap) -> Result<(), TransformError> {
    if map.j > 0.0 && map.j.is_finite() {
        Ok(())
    } else {
        Err(TransformError::Orientation(map.j))
    }
}

pub fn push_scalar(map: &AffineMap, z: &Poly) -> Result<Poly, TransformError> {
    check(map)?;
    let (bi, ai) = map.inverse();
    Ok(z.compose_affine(&bi, &ai))
}

pub fn push_vector(map: &AffineMap, t: &VecPoly) -> Result<VecPoly, TransformError> {
    check(map)?;
    let (bi, ai) = map.inverse();
    Ok(t.transform(&map.b).scale(1.0 / map.j).compose_affine(&bi, &ai))
}

pub fn push_tensor(map: &AffineMap, m: &SymPoly) -> Result<SymPoly, TransformError> {
    check(map)?;
    let (bi, ai) = map.inverse();
    Ok(m.congruence(&map.b).scale(1.0 / map.j).compose_affine(&bi, &ai))
}

pub fn pull_scalar(map: &AffineMap, z: &Poly) -> Result<Poly, TransformError> {
    check(map)?;
    Ok(z.compose_affine(&map.b, &map.a))
}

pub fn pull_vector(map: &AffineMap, t: &VecPoly) -> Result<VecPoly, TransformError> {
    check(map)?;
    Ok(t.compose_affine(&map.b, &map.a).transform(&map.b_inv()).scale(map.j))
}

pub fn pull_tensor(map: &AffineMap, m: &SymPoly) -> Result<SymPoly, TransformError> {
    check(map)?;
    Ok(m.compose_affine(&map.b, &map.a).congruence(&map.b_inv()).scale(map.j))
}

/// Residuals of the `H(div div)` transformation identities.
#[derive(Clone, Copy, Debug, Default)]
pub struct DivDivResiduals {
    /// `J (div Div M) ∘ F − d̂iv D̂iv M̂`, pointwise maximum.
    pub divdiv: f64,
    /// `J (ε∇z : M) ∘ F − ε̂∇̂ẑ : M̂`, pointwise maximum.
    pub hessian: f64,
    /// Difference of the boundary pairings on `∂T` and `∂T̂`.
    pub trace: f64,
}

impl DivDivResiduals {
    pub fn max(&self) -> f64 {
        self.divdiv.max(self.hessian).max(self.trace)
    }
}

/// Residuals of the `H(Div, div)` transformation identities.
#[derive(Clone, Copy, Debug, Default)]
pub struct DivDivVectorResiduals {
    /// `J (Div Ξ − τ) ∘ F − B (D̂iv Ξ̂ − τ̂)`.
    pub div_minus: f64,
    /// `J (div τ) ∘ F − d̂iv τ̂`.
    pub div_tau: f64,
    pub trace: f64,
}

impl DivDivVectorResiduals {
    pub fn max(&self) -> f64 {
        self.div_minus.max(self.div_tau).max(self.trace)
    }
}

fn sample_points() -> Vec<[f64; 2]> {
    let mut pts = quadrature(6).expect("supported").points;
    pts.extend([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
    pts
}

const REF: [[f64; 2]; 3] = crate::poly::REFERENCE_TRIANGLE;

fn physical_vertices(map: &AffineMap) -> [[f64; 2]; 3] {
    [map.apply(REF[0]), map.apply(REF[1]), map.apply(REF[2])]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn verify_divdiv_identity(map: &AffineMap, m_hat: &SymPoly, z_hat: &Poly) -> Result<DivDivResiduals, TransformError> {
    let m = push_tensor(map, m_hat)?;
    let z = push_scalar(map, z_hat)?;
    let dd = divdiv_tensor(&m);
    let dd_hat = divdiv_tensor(m_hat);
    let hz = hessian(&z);
    let hz_hat = hessian(z_hat);
    let mut r = DivDivResiduals::default();
    for p in sample_points() {
        let x = map.apply(p);
        r.divdiv = r.divdiv.max(rel(map.j * dd.eval(x[0], x[1]), dd_hat.eval(p[0], p[1])));
        let lhs = map.j * sym_dot(&hz.eval(x[0], x[1]), &m.eval(x[0], x[1]));
        let rhs = sym_dot(&hz_hat.eval(p[0], p[1]), &m_hat.eval(p[0], p[1]));
        r.hessian = r.hessian.max(rel(lhs, rhs));
    }
    let phys = pair_poly_divdiv(&physical_vertices(map), &z, &m);
    let refv = pair_poly_divdiv(&REF, z_hat, m_hat);
    r.trace = rel(phys, refv);
    Ok(r)
}

pub fn verify_divdiv_vector_identity(
    map: &AffineMap,
    xi_hat: &SymPoly,
    tau_hat: &VecPoly,
    u_hat: &Poly,
) -> Result<DivDivVectorResiduals, TransformError> {
    let xi = push_tensor(map, xi_hat)?;
    let tau = push_vector(map, tau_hat)?;
    let u = push_scalar(map, u_hat)?;
    let dm = div_tensor(&xi).sub(&tau);
    let dm_hat = div_tensor(xi_hat).sub(tau_hat).transform(&map.b);
    let dt = div_vector(&tau);
    let dt_hat = div_vector(tau_hat);
    let mut r = DivDivVectorResiduals::default();
    for p in sample_points() {
        let x = map.apply(p);
        let a = dm.eval(x[0], x[1]);
        let b = dm_hat.eval(p[0], p[1]);
        r.div_minus = r.div_minus.max(rel(map.j * a[0], b[0])).max(rel(map.j * a[1], b[1]));
        r.div_tau = r.div_tau.max(rel(map.j * dt.eval(x[0], x[1]), dt_hat.eval(p[0], p[1])));
    }
    let phys = pair_poly_divdiv_vector(&physical_vertices(map), &u, &xi, &tau);
    let refv = pair_poly_divdiv_vector(&REF, u_hat, xi_hat, tau_hat);
    r.trace = rel(phys, refv);
    Ok(r)
}

/// `‖M‖_T` for a physical tensor field on the image of `map`.
pub fn tensor_norm(map: &AffineMap, m: &SymPoly) -> f64 {
    m.ddot(m).integrate_over(&physical_vertices(map)).sqrt()
}

/// `‖g‖_T` for a physical scalar field.
pub fn scalar_norm(map: &AffineMap, g: &Poly) -> f64 {
    (g * g).integrate_over(&physical_vertices(map)).sqrt()
}

//! Fortin operators for the discrete test spaces and their numerical
//! certification.
//!
//! * `Π^Ggrad : H²(T) → P³(T)` from a dual basis of the nine moment-trace
//!   functionals plus the `L₂` projection onto `P¹`.
//! * `Π^{Div,div} : H(Div,div; T) → P^{4,s}(T) × P³(T)` and
//!   `Π^{dDiv} : H(div Div; T) → P^{4,s}(T)`, both from a constrained
//!   minimisation on the reference element, mapped with the Piola and
//!   Piola–Kirchhoff transforms.
//!
//! Inputs are polynomial surrogates, so every constraint is evaluated
//! exactly up to rounding.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dpg_core::{bilinear_form, MaterialTensor, SchemeKind, TestFunction};
use crate::mesh::{AffineMap, Mesh};
use crate::poly::{
    div_tensor, div_vector, divdiv_tensor, exponents, hessian, l2_project_poly,
    orthonormal_vector_basis, to_physical, Poly, SymPoly, SymTensorBasis, VecPoly, REFERENCE_TRIANGLE,
};
use crate::trace_spaces::{pair_uhat_divdiv, pair_uhat_divdiv_vector, qhat_functionals, BoundaryTraceP32};
use crate::transforms::{pull_tensor, pull_vector, push_scalar, push_tensor, push_vector, TransformError};

/// Smallest admissible singular value of a constraint block, and smallest
/// admissible `|det A|` of the dual-basis system.
pub const RANK_TOL: f64 = 1e-8;
pub const DET_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FortinError {
    #[error("{block}: constraint block is rank deficient (smallest singular value {sigma:.3e})")]
    RankDeficient { block: &'static str, sigma: f64 },
    #[error("dual-basis matrix is singular (|det A| = {0:.3e})")]
    SingularDualBasis(f64),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

// ---------------------------------------------------------------------------
// Π^Ggrad

/// The nine functions `η_k` on `tri`. Without the bubble the last three
/// reduce to `η₄(η₂ − η₁)` etc.
pub fn eta_functions(tri: &[[f64; 2]; 3], with_bubble: bool) -> Vec<Poly> {
    let l = [Poly::affine(1.0, -1.0, -1.0), Poly::x(), Poly::y()];
    let pair = |a: usize, b: usize| &l[a] * &l[b];
    let bubble = &pair(0, 1) * &l[2];
    let mut eta: Vec<Poly> = l.to_vec();
    eta.extend([pair(0, 1), pair(1, 2), pair(2, 0)]);
    for (a, b) in [(0, 1), (1, 2), (2, 0)] {
        let mut e = &pair(a, b) * &(&l[b] - &l[a]);
        if with_bubble {
            e += &bubble;
        }
        eta.push(e);
    }
    eta.iter().map(|e| to_physical(e, tri)).collect()
}

/// Dual basis of the moment-trace functionals `q_j` on one element.
#[derive(Clone, Debug)]
pub struct DualBasisGG {
    pub eta: Vec<Poly>,
    /// Row `k` holds `q_j(η_k)`, `j = 1..9`.
    pub a: DMatrix<f64>,
    /// `χ_k = Σ_j (A⁻¹)_kj η_j`.
    pub chi: Vec<Poly>,
}

impl DualBasisGG {
    pub fn on_triangle(tri: &[[f64; 2]; 3]) -> Result<Self, FortinError> {
        let eta = eta_functions(tri, true);
        let a = functional_matrix(tri, &eta);
        let lu = a.clone().full_piv_lu();
        let det = lu.determinant();
        if !det.is_finite() || det == 0.0 {
            return Err(FortinError::SingularDualBasis(det.abs()));
        }
        let inv = lu.try_inverse().ok_or(FortinError::SingularDualBasis(det.abs()))?;
        let chi = (0..9)
            .map(|k| {
                let mut c = Poly::zero(3);
                for (j, e) in eta.iter().enumerate() {
                    c.axpy(inv[(k, j)], e);
                }
                c
            })
            .collect();
        Ok(Self { eta, a, chi })
    }

    pub fn det(&self) -> f64 {
        self.a.determinant()
    }

    pub fn a3(&self) -> DMatrix<f64> {
        self.a.view((6, 6), (3, 3)).into_owned()
    }

    /// Largest entry of the block that must vanish: below the diagonal of
    /// `A₁` and the lower-left `3×6` block.
    pub fn block_structure_defect(&self) -> f64 {
        let mut m = 0.0f64;
        for r in 0..9 {
            for c in 0..6.min(r) {
                m = m.max(self.a[(r, c)].abs());
            }
        }
        m
    }

    pub fn min_a1_diagonal(&self) -> f64 {
        (0..6).map(|k| self.a[(k, k)].abs()).fold(f64::INFINITY, f64::min)
    }
}

fn functional_matrix(tri: &[[f64; 2]; 3], eta: &[Poly]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(9, 9);
    for (k, e) in eta.iter().enumerate() {
        for (j, v) in qhat_functionals(tri, e).iter().enumerate() {
            a[(k, j)] = *v;
        }
    }
    a
}

pub fn build_dual_basis_gg() -> Result<DualBasisGG, FortinError> {
    DualBasisGG::on_triangle(&REFERENCE_TRIANGLE)
}

/// `Π₀ z = Σ_j q_j(z) χ_j`.
pub fn aux_ggrad(tri: &[[f64; 2]; 3], z: &Poly) -> Result<Poly, FortinError> {
    let dual = DualBasisGG::on_triangle(tri)?;
    let q = qhat_functionals(tri, z);
    let mut out = Poly::zero(3);
    for (c, chi) in q.iter().zip(&dual.chi) {
        out.axpy(*c, chi);
    }
    Ok(out)
}

/// `Π z = Π₀(z − z_ker) + z_ker` on one element.
pub fn fortin_ggrad_local(tri: &[[f64; 2]; 3], z: &Poly) -> Result<Poly, FortinError> {
    let zk = l2_project_poly(z, 1, tri);
    let mut out = aux_ggrad(tri, &(z - &zk))?;
    out += &zk.raised(3);
    Ok(out)
}

/// Elementwise `Π^Ggrad` of a broken polynomial given per triangle.
pub fn fortin_ggrad(mesh: &Mesh, z: &[Poly]) -> Result<Vec<Poly>, FortinError> {
    assert_eq!(z.len(), mesh.n_triangles(), "one polynomial per element");
    (0..mesh.n_triangles()).map(|t| fortin_ggrad_local(&mesh.triangle_vertices(t), &z[t])).collect()
}

// ---------------------------------------------------------------------------
// Saddle systems

/// Which feasible point the constrained problem selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FortinVariant {
    /// Smallest norm among all feasible points.
    MinNorm,
    /// Feasible point closest to the input; reproduces discrete inputs.
    #[default]
    MinDistance,
}

/// `[[A, C], [Cᵀ, 0]]` with `A` the Gram matrix of the discrete space and
/// `C` the constraint functionals applied to its basis.
///
/// Solved in range-space form: with `A = LLᵀ` and `L⁻¹C = QR`, the
/// constrained minimiser of `½ xᵀA x − rᵀx` is
/// `x = L⁻ᵀ(y − Q(Qᵀy − R⁻ᵀg))`, `y = L⁻¹r`. This only ever sees
/// `√cond(A)`, which keeps discrete inputs reproduced to rounding.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    pub block: &'static str,
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    l: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl SaddleSystem {
    pub fn new(block: &'static str, a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self, FortinError> {
        let sigma = smallest_singular_value(&c);
        if !(sigma > RANK_TOL) {
            return Err(FortinError::RankDeficient { block, sigma });
        }
        let l = a.clone().cholesky().expect("Gram matrix of a basis is SPD").l();
        let lc = l.solve_lower_triangular(&c).expect("Cholesky factor is regular");
        let qr = lc.qr();
        Ok(Self { block, a, c, l, q: qr.q(), r: qr.r() })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.c.shape()
    }

    pub fn sigma_min(&self) -> f64 {
        smallest_singular_value(&self.c)
    }

    /// Minimises `½ xᵀA x − rᵀx` subject to `Cᵀx = g`.
    pub fn solve(&self, r: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        let y = self.l.solve_lower_triangular(r).expect("regular");
        let rg = self.r.transpose().solve_lower_triangular(g).expect("C is injective");
        let w = self.q.transpose() * &y - rg;
        let xp = y - &self.q * w;
        self.l.transpose().solve_upper_triangular(&xp).expect("regular")
    }
}

pub fn smallest_singular_value(c: &DMatrix<f64>) -> f64 {
    c.clone().svd(false, false).singular_values.iter().copied().fold(f64::INFINITY, f64::min)
}

fn gram(n: usize, ip: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = ip(i, j);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Drops all monomials of degree above `p`.
fn truncate(z: &Poly, p: usize) -> Poly {
    let mut out = Poly::zero(p);
    for k in 0..crate::poly::dim(p.min(z.degree())) {
        let (i, j) = exponents(k);
        out.set_coeff(i, j, z.coeff(i, j));
    }
    out
}

fn truncate_sym(m: &SymPoly, p: usize) -> SymPoly {
    SymPoly::new(truncate(&m.xx, p), truncate(&m.yy, p), truncate(&m.xy, p))
}

fn truncate_vec(v: &VecPoly, p: usize) -> VecPoly {
    VecPoly::new(truncate(&v.x, p), truncate(&v.y, p))
}

fn constant_tensors() -> [SymPoly; 3] {
    [SymPoly::constant([1.0, 0.0, 0.0]), SymPoly::constant([0.0, 1.0, 0.0]), SymPoly::constant([0.0, 0.0, 1.0])]
}

/// `(Ξ, Ξ') + (Div Ξ − τ, Div Ξ' − τ') + (div τ, div τ')` on `tri`.
pub fn hdivdiv_vector_inner(tri: &[[f64; 2]; 3], a: (&SymPoly, &VecPoly), b: (&SymPoly, &VecPoly)) -> f64 {
    let mut p = a.0.ddot(b.0);
    p += &div_tensor(a.0).sub(a.1).dot(&div_tensor(b.0).sub(b.1));
    p += &(&div_vector(a.1) * &div_vector(b.1));
    p.integrate_over(tri)
}

/// `(Q, Q') + (div Div Q, div Div Q')` on `tri`.
pub fn hddiv_inner(tri: &[[f64; 2]; 3], a: &SymPoly, b: &SymPoly) -> f64 {
    let mut p = a.ddot(b);
    p += &(&divdiv_tensor(a) * &divdiv_tensor(b));
    p.integrate_over(tri)
}

/// `(z, z') + (ε∇z, ε∇z')` on `tri`.
pub fn h2_inner(tri: &[[f64; 2]; 3], a: &Poly, b: &Poly) -> f64 {
    let mut p = a * b;
    p += &hessian(a).ddot(&hessian(b));
    p.integrate_over(tri)
}

// ---------------------------------------------------------------------------
// Π^{Div,div}

/// Reference-element operator onto `P^{4,s} × P³`.
#[derive(Clone, Debug)]
pub struct DivDivVectorFortin {
    pub xi: Vec<SymPoly>,
    pub tau: Vec<VecPoly>,
    theta: Vec<VecPoly>,
    pub saddle: SaddleSystem,
}

pub const DIVDIV_VECTOR_BLOCK: &str = "H(Div,div) constraint block";
pub const DDIV_BLOCK: &str = "H(div Div) constraint block";
pub const DUAL_BASIS_BLOCK: &str = "H2 dual-basis matrix";

impl DivDivVectorFortin {
    pub fn new() -> Result<Self, FortinError> {
        let (xi, tau) = divdiv_vector_trial_basis();
        let theta = orthonormal_vector_basis(3);
        let n = xi.len();
        let a = gram(n, |i, j| hdivdiv_vector_inner(&REFERENCE_TRIANGLE, (&xi[i], &tau[i]), (&xi[j], &tau[j])));
        let mut c = DMatrix::zeros(n, 35);
        for i in 0..n {
            let g = divdiv_vector_functionals(&theta, &xi[i], &tau[i]);
            c.row_mut(i).copy_from(&g.transpose());
        }
        let saddle = SaddleSystem::new(DIVDIV_VECTOR_BLOCK, a, c)?;
        Ok(Self { xi, tau, theta, saddle })
    }

    /// The 35 constraint functionals of a reference pair.
    pub fn functionals(&self, xi: &SymPoly, tau: &VecPoly) -> DVector<f64> {
        divdiv_vector_functionals(&self.theta, xi, tau)
    }

    pub fn apply_reference(&self, xi: &SymPoly, tau: &VecPoly, variant: FortinVariant) -> (SymPoly, VecPoly) {
        match variant {
            FortinVariant::MinNorm => self.solve_reference(xi, tau, false),
            FortinVariant::MinDistance => {
                // Π v = v_h + Π(v − v_h) for the truncation v_h ∈ P^{4,s} × P³,
                // so discrete inputs come back without touching the solver
                let (xh, th) = (truncate_sym(xi, 4), truncate_vec(tau, 3));
                let (mut ox, mut ot) = self.solve_reference(&xi.sub(&xh), &tau.sub(&th), true);
                ox.axpy(1.0, &xh);
                ot.axpy(1.0, &th);
                (ox, ot)
            }
        }
    }

    fn solve_reference(&self, xi: &SymPoly, tau: &VecPoly, distance: bool) -> (SymPoly, VecPoly) {
        let n = self.xi.len();
        let r = if distance {
            DVector::from_fn(n, |i, _| hdivdiv_vector_inner(&REFERENCE_TRIANGLE, (&self.xi[i], &self.tau[i]), (xi, tau)))
        } else {
            DVector::zeros(n)
        };
        let x = self.saddle.solve(&r, &self.functionals(xi, tau));
        let mut ox = SymPoly::zero(4);
        let mut ot = VecPoly::zero(3);
        for i in 0..n {
            ox.axpy(x[i], &self.xi[i]);
            ot.axpy(x[i], &self.tau[i]);
        }
        (ox, ot)
    }

    /// `(ℋ_T Π̂ ℋ_T⁻¹ Ξ, 𝒫_T Π̂ 𝒫_T⁻¹ τ)` on the physical element.
    pub fn apply(&self, tri: &[[f64; 2]; 3], xi: &SymPoly, tau: &VecPoly, variant: FortinVariant) -> Result<(SymPoly, VecPoly), FortinError> {
        let map = AffineMap::from_vertices(tri);
        let (rx, rt) = self.apply_reference(&pull_tensor(&map, xi)?, &pull_vector(&map, tau)?, variant);
        Ok((push_tensor(&map, &rx)?, push_vector(&map, &rt)?))
    }
}

/// `P^{4,s}` tensors with zero vector part, then `P³` vectors with zero
/// tensor part.
fn divdiv_vector_trial_basis() -> (Vec<SymPoly>, Vec<VecPoly>) {
    let tens = SymTensorBasis::orthonormal(4).funcs;
    let vecs = orthonormal_vector_basis(3);
    let mut xi = tens.clone();
    let mut tau = vec![VecPoly::zero(3); tens.len()];
    xi.extend(std::iter::repeat_n(SymPoly::zero(4), vecs.len()));
    tau.extend(vecs);
    (xi, tau)
}

fn divdiv_vector_functionals(theta: &[VecPoly], xi: &SymPoly, tau: &VecPoly) -> DVector<f64> {
    let t = &REFERENCE_TRIANGLE;
    let mut g = Vec::with_capacity(35);
    for i in 0..BoundaryTraceP32::DIM {
        g.push(pair_uhat_divdiv_vector(&BoundaryTraceP32::unit(i), t, xi, tau));
    }
    for m in constant_tensors() {
        g.push(m.ddot(xi).integrate_over(t));
    }
    let r = div_tensor(xi).sub(tau);
    for th in theta {
        g.push(th.dot(&r).integrate_over(t));
    }
    DVector::from_vec(g)
}

fn divdiv_vector_operator() -> &'static DivDivVectorFortin {
    static OP: OnceLock<DivDivVectorFortin> = OnceLock::new();
    OP.get_or_init(|| DivDivVectorFortin::new().expect("H(Div,div) constraint block is injective"))
}

/// `Π^{Div,div}` on one element with the default variant.
pub fn fortin_divdiv_vector(tri: &[[f64; 2]; 3], xi: &SymPoly, tau: &VecPoly) -> Result<(SymPoly, VecPoly), FortinError> {
    divdiv_vector_operator().apply(tri, xi, tau, FortinVariant::default())
}

// ---------------------------------------------------------------------------
// Π^{dDiv}

/// Reference-element operator onto `P^{4,s}`.
#[derive(Clone, Debug)]
pub struct DDivFortin {
    pub basis: Vec<SymPoly>,
    pub saddle: SaddleSystem,
}

impl DDivFortin {
    pub fn new() -> Result<Self, FortinError> {
        let basis = SymTensorBasis::orthonormal(4).funcs;
        let n = basis.len();
        let a = gram(n, |i, j| hddiv_inner(&REFERENCE_TRIANGLE, &basis[i], &basis[j]));
        let mut c = DMatrix::zeros(n, 15);
        for i in 0..n {
            c.row_mut(i).copy_from(&ddiv_functionals(&basis[i]).transpose());
        }
        let saddle = SaddleSystem::new(DDIV_BLOCK, a, c)?;
        Ok(Self { basis, saddle })
    }

    pub fn functionals(&self, q: &SymPoly) -> DVector<f64> {
        ddiv_functionals(q)
    }

    pub fn apply_reference(&self, q: &SymPoly, variant: FortinVariant) -> SymPoly {
        match variant {
            FortinVariant::MinNorm => self.solve_reference(q, false),
            FortinVariant::MinDistance => {
                let qh = truncate_sym(q, 4);
                let mut out = self.solve_reference(&q.sub(&qh), true);
                out.axpy(1.0, &qh);
                out
            }
        }
    }

    fn solve_reference(&self, q: &SymPoly, distance: bool) -> SymPoly {
        let n = self.basis.len();
        let r = if distance {
            DVector::from_fn(n, |i, _| hddiv_inner(&REFERENCE_TRIANGLE, &self.basis[i], q))
        } else {
            DVector::zeros(n)
        };
        let x = self.saddle.solve(&r, &ddiv_functionals(q));
        let mut out = SymPoly::zero(4);
        for (c, b) in x.iter().zip(&self.basis) {
            out.axpy(*c, b);
        }
        out
    }

    pub fn apply(&self, tri: &[[f64; 2]; 3], q: &SymPoly, variant: FortinVariant) -> Result<SymPoly, FortinError> {
        let map = AffineMap::from_vertices(tri);
        let r = self.apply_reference(&pull_tensor(&map, q)?, variant);
        Ok(push_tensor(&map, &r)?)
    }
}

fn ddiv_functionals(q: &SymPoly) -> DVector<f64> {
    let t = &REFERENCE_TRIANGLE;
    let mut g = Vec::with_capacity(15);
    for i in 0..BoundaryTraceP32::DIM {
        g.push(pair_uhat_divdiv(&BoundaryTraceP32::unit(i), t, q));
    }
    for m in constant_tensors() {
        g.push(m.ddot(q).integrate_over(t));
    }
    DVector::from_vec(g)
}

fn ddiv_operator() -> &'static DDivFortin {
    static OP: OnceLock<DDivFortin> = OnceLock::new();
    OP.get_or_init(|| DDivFortin::new().expect("H(div Div) constraint block is injective"))
}

/// `Π^{dDiv}` on one element with the default variant.
pub fn fortin_ddiv(tri: &[[f64; 2]; 3], q: &SymPoly) -> Result<SymPoly, FortinError> {
    ddiv_operator().apply(tri, q, FortinVariant::default())
}

// ---------------------------------------------------------------------------
// Certification

/// Constraint block that the test hook may corrupt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintBlock {
    DualBasis,
    DivDivVector,
    DDiv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    /// The value must exceed the threshold.
    Above,
    /// The value must stay below the threshold.
    Below,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub bound: Bound,
}

impl Certificate {
    pub fn new(name: impl Into<String>, value: f64, bound: Bound, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, bound }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::Above => self.value > self.threshold,
            Bound::Below => self.value < self.threshold,
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Random surrogates for the orthogonality suite.
    pub samples: usize,
    /// Threshold for orthogonality, idempotence and reproduction residuals.
    pub tolerance: f64,
    pub boundedness_samples: usize,
    pub corrupt: Option<ConstraintBlock>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { seed: 2024, samples: 100, tolerance: 1e-10, boundedness_samples: 20, corrupt: None }
    }
}

/// Rank certificates of the three blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub dual_det: f64,
    pub dual_a3_det: f64,
    pub dual_a3_det_without_bubble: f64,
    pub dual_block_defect: f64,
    pub dual_min_diagonal: f64,
    pub divdiv_vector_shape: (usize, usize),
    pub divdiv_vector_sigma: f64,
    pub ddiv_shape: (usize, usize),
    pub ddiv_sigma: f64,
}

/// `‖Πv‖_V / ‖v‖_V` statistics per element size.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundednessReport {
    pub h: Vec<f64>,
    pub ggrad: Vec<f64>,
    pub divdiv_vector: Vec<f64>,
    pub ddiv: Vec<f64>,
    /// Same ratios for `Π^{dDiv}` in the `h`-weighted norm
    /// `‖Q‖² + h⁴‖div Div Q‖²`, which is exactly `h`-invariant.
    pub ddiv_scaled: Vec<f64>,
}

impl BoundednessReport {
    /// `max/min − 1` of a ratio column.
    pub fn variation(col: &[f64]) -> f64 {
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        max / min - 1.0
    }
}

#[derive(Clone, Debug)]
pub struct FortinReport {
    pub ranks: RankReport,
    pub residuals: Vec<(String, f64)>,
    pub boundedness: BoundednessReport,
    pub certificates: Vec<Certificate>,
}

impl FortinReport {
    pub fn passed(&self) -> bool {
        self.certificates.iter().all(Certificate::passed)
    }

    pub fn failures(&self) -> Vec<&Certificate> {
        self.certificates.iter().filter(|c| !c.passed()).collect()
    }

    pub fn to_text(&self) -> String {
        let r = &self.ranks;
        let mut s = String::new();
        s.push_str("Fortin certificate\n");
        s.push_str(&format!("dual basis: |det A| = {:.6e}, |det A3| = {:.6e} (without bubble {:.3e})\n",
            r.dual_det.abs(), r.dual_a3_det.abs(), r.dual_a3_det_without_bubble.abs()));
        s.push_str(&format!("dual basis: block-triangular defect {:.3e}, min |diag A1| = {:.6e}\n",
            r.dual_block_defect, r.dual_min_diagonal));
        s.push_str(&format!("H(Div,div) block: {}x{}, sigma_min = {:.6e}\n",
            r.divdiv_vector_shape.0, r.divdiv_vector_shape.1, r.divdiv_vector_sigma));
        s.push_str(&format!("H(div Div) block: {}x{}, sigma_min = {:.6e}\n", r.ddiv_shape.0, r.ddiv_shape.1, r.ddiv_sigma));
        s.push_str("max residuals:\n");
        for (name, v) in &self.residuals {
            s.push_str(&format!("  {name:<22} {v:.3e}\n"));
        }
        let b = &self.boundedness;
        s.push_str("boundedness ratios (max over samples):\n");
        s.push_str("  h          ggrad      divdiv     ddiv       ddiv_scaled\n");
        for i in 0..b.h.len() {
            s.push_str(&format!("  {:<10.4} {:<10.5} {:<10.5} {:<10.5} {:<10.5}\n",
                b.h[i], b.ggrad[i], b.divdiv_vector[i], b.ddiv[i], b.ddiv_scaled[i]));
        }
        for c in &self.certificates {
            let op = match c.bound {
                Bound::Above => ">",
                Bound::Below => "<",
            };
            let tag = if c.passed() { "ok  " } else { "FAIL" };
            s.push_str(&format!("{tag} {:<32} {:.3e} {op} {:.1e}\n", c.name, c.value, c.threshold));
        }
        s.push_str(if self.passed() { "RESULT: PASS\n" } else { "RESULT: FAIL\n" });
        s
    }
}

/// Rank certificates; `corrupt` replaces one constraint by a copy of another
/// (or drops the bubble from the dual basis) to exercise the failure path.
pub fn certify_constraint_ranks(corrupt: Option<ConstraintBlock>) -> RankReport {
    let dual_tri = REFERENCE_TRIANGLE;
    let bubble = corrupt != Some(ConstraintBlock::DualBasis);
    let a = functional_matrix(&dual_tri, &eta_functions(&dual_tri, bubble));
    let a_nb = functional_matrix(&dual_tri, &eta_functions(&dual_tri, false));
    let defect = (0..9).flat_map(|r| (0..6.min(r)).map(move |c| (r, c))).map(|(r, c)| a[(r, c)].abs()).fold(0.0, f64::max);
    let min_diag = (0..6).map(|k| a[(k, k)].abs()).fold(f64::INFINITY, f64::min);

    let mut cv = divdiv_vector_operator().saddle.c.clone();
    if corrupt == Some(ConstraintBlock::DivDivVector) {
        let first = cv.column(0).into_owned();
        cv.column_mut(cv.ncols() - 1).copy_from(&first);
    }
    let mut cd = ddiv_operator().saddle.c.clone();
    if corrupt == Some(ConstraintBlock::DDiv) {
        let first = cd.column(0).into_owned();
        cd.column_mut(cd.ncols() - 1).copy_from(&first);
    }
    RankReport {
        dual_det: a.determinant(),
        dual_a3_det: a.view((6, 6), (3, 3)).determinant(),
        dual_a3_det_without_bubble: a_nb.view((6, 6), (3, 3)).determinant(),
        dual_block_defect: defect,
        dual_min_diagonal: min_diag,
        divdiv_vector_shape: cv.shape(),
        divdiv_vector_sigma: smallest_singular_value(&cv),
        ddiv_shape: cd.shape(),
        ddiv_sigma: smallest_singular_value(&cd),
    }
}

// random surrogates --------------------------------------------------------

/// Degree-`p` polynomial with monomial coefficients uniform in `[−1, 1]`.
pub fn random_poly(rng: &mut impl Rng, p: usize) -> Poly {
    let n = crate::poly::dim(p);
    Poly::from_coeffs(p, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

pub fn random_sym(rng: &mut impl Rng, p: usize) -> SymPoly {
    SymPoly::new(random_poly(rng, p), random_poly(rng, p), random_poly(rng, p))
}

pub fn random_vec(rng: &mut impl Rng, p: usize) -> VecPoly {
    VecPoly::new(random_poly(rng, p), random_poly(rng, p))
}

/// Perturbed, rotated and shifted equilateral triangle of diameter about `h`
/// within distance `2h` of the origin,
/// counterclockwise with angles bounded away from zero.
pub fn random_element(rng: &mut impl Rng, h: f64) -> [[f64; 2]; 3] {
    let base = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.75f64.sqrt()]];
    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let shift = [h * rng.random_range(-1.0..1.0), h * rng.random_range(-1.0..1.0)];
    let (s, c) = phi.sin_cos();
    base.map(|p| {
        let q = [p[0] + rng.random_range(-0.15..0.15), p[1] + rng.random_range(-0.15..0.15)];
        [shift[0] + h * (c * q[0] - s * q[1]), shift[1] + h * (s * q[0] + c * q[1])]
    })
}

/// Degree of the random surrogates.
pub const SURROGATE_DEGREE: usize = 6;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn l2_norm(tri: &[[f64; 2]; 3], p: &Poly) -> f64 {
    (p * p).integrate_over(tri).max(0.0).sqrt()
}

fn vec_l2_norm(tri: &[[f64; 2]; 3], v: &VecPoly) -> f64 {
    v.dot(v).integrate_over(tri).max(0.0).sqrt()
}

fn project_vec(v: &VecPoly, p: usize, tri: &[[f64; 2]; 3]) -> VecPoly {
    VecPoly::new(l2_project_poly(&v.x, p, tri), l2_project_poly(&v.y, p, tri))
}

/// Physical `P^{3,1}_c` traces spanning the local deflection-trace space.
fn p31_traces() -> Vec<BoundaryTraceP32> {
    (0..BoundaryTraceP32::DIM_LINEAR_NORMAL).map(BoundaryTraceP32::unit).collect()
}

#[derive(Default)]
struct MaxTable(Vec<(String, f64)>);

impl MaxTable {
    fn record(&mut self, name: &str, v: f64) {
        match self.0.iter_mut().find(|(n, _)| n == name) {
            Some((_, m)) => *m = m.max(v),
            None => self.0.push((name.to_string(), v)),
        }
    }
}

fn constant_scalar() -> Poly {
    Poly::constant(1.0)
}

/// Maximal residuals of every orthogonality, commutativity, idempotence and
/// reproduction identity over `samples` random inputs on random elements.
pub fn orthogonality_residuals(seed: u64, samples: usize) -> Result<Vec<(String, f64)>, FortinError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dv = divdiv_vector_operator();
    let dd = ddiv_operator();
    let var = FortinVariant::default();
    let mut tab = MaxTable::default();
    let material = MaterialTensor::new([[2.0, 0.5, 0.0], [0.5, 1.5, 0.0], [0.0, 0.0, 0.8]]).expect("valid material");
    for _ in 0..samples {
        let h = rng.random_range(0.3..1.5);
        let tri = random_element(&mut rng, h);
        let map = AffineMap::from_vertices(&tri);
        let d = SURROGATE_DEGREE;
        let z = push_scalar(&map, &random_poly(&mut rng, d))?;
        let xi = push_tensor(&map, &random_sym(&mut rng, d))?;
        let tau = push_vector(&map, &random_vec(&mut rng, d))?;
        let q = push_tensor(&map, &random_sym(&mut rng, d))?;

        // Π^Ggrad
        let pz = fortin_ggrad_local(&tri, &z)?;
        let (f0, f1) = (qhat_functionals(&tri, &z), qhat_functionals(&tri, &pz));
        tab.record("ggrad_qhat", f0.iter().zip(&f1).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max));
        let (hz, hpz) = (hessian(&z), hessian(&pz));
        for m in constant_tensors() {
            tab.record("ggrad_moment", rel(m.ddot(&hz).integrate_over(&tri), m.ddot(&hpz).integrate_over(&tri)));
        }
        let ppz = fortin_ggrad_local(&tri, &pz)?;
        tab.record("ggrad_idempotent", (&ppz - &pz).max_abs_coeff() / 1f64.max(pz.max_abs_coeff()));
        let lin = l2_project_poly(&z, 1, &tri);
        tab.record("ggrad_p1_reproduction", (&fortin_ggrad_local(&tri, &lin)? - &lin).max_abs_coeff() / 1f64.max(lin.max_abs_coeff()));

        // Π^{Div,div}
        let (px, pt) = dv.apply(&tri, &xi, &tau, var)?;
        for u in p31_traces() {
            tab.record("div_uhat", rel(pair_uhat_divdiv_vector(&u, &tri, &xi, &tau), pair_uhat_divdiv_vector(&u, &tri, &px, &pt)));
        }
        for m in constant_tensors() {
            tab.record("div_moment", rel(m.ddot(&xi).integrate_over(&tri), m.ddot(&px).integrate_over(&tri)));
        }
        let (r0, r1) = (tau.sub(&div_tensor(&xi)), pt.sub(&div_tensor(&px)));
        for c in [VecPoly::new(constant_scalar(), Poly::zero(0)), VecPoly::new(Poly::zero(0), constant_scalar())] {
            tab.record("div_theta", rel(c.dot(&r0).integrate_over(&tri), c.dot(&r1).integrate_over(&tri)));
        }
        tab.record("div_u", rel(div_vector(&tau).integrate_over(&tri), div_vector(&pt).integrate_over(&tri)));
        let res = div_tensor(&xi).sub(&tau);
        let com1 = div_tensor(&px).sub(&pt).sub(&project_vec(&res, 3, &tri));
        tab.record("com1", vec_l2_norm(&tri, &com1) / (1.0 + vec_l2_norm(&tri, &res)));
        let dt = div_vector(&tau);
        let com2 = &div_vector(&pt) - &l2_project_poly(&dt, 2, &tri);
        tab.record("com2", l2_norm(&tri, &com2) / (1.0 + l2_norm(&tri, &dt)));
        let (ppx, ppt) = dv.apply(&tri, &px, &pt, var)?;
        let scale = 1f64.max(px.max_abs_coeff()).max(pt.max_abs_coeff());
        tab.record("div_idempotent", ppx.sub(&px).max_abs_coeff().max(ppt.sub(&pt).max_abs_coeff()) / scale);

        // Π^{dDiv}
        let pq = dd.apply(&tri, &q, var)?;
        for u in p31_traces() {
            tab.record("ddiv_uhat", rel(pair_uhat_divdiv(&u, &tri, &q), pair_uhat_divdiv(&u, &tri, &pq)));
        }
        for m in constant_tensors() {
            tab.record("ddiv_moment", rel(m.ddot(&q).integrate_over(&tri), m.ddot(&pq).integrate_over(&tri)));
        }
        let (dq, dpq) = (divdiv_tensor(&q), divdiv_tensor(&pq));
        tab.record("ddiv_u", rel(dq.integrate_over(&tri), dpq.integrate_over(&tri)));
        tab.record("projDD_com", l2_norm(&tri, &(&dpq - &l2_project_poly(&dq, 2, &tri))) / (1.0 + l2_norm(&tri, &dq)));
        let ppq = dd.apply(&tri, &pq, var)?;
        tab.record("ddiv_idempotent", ppq.sub(&pq).max_abs_coeff() / 1f64.max(pq.max_abs_coeff()));

        // the full maps annihilate b(w, v − Πv) for every local trial function
        let scheme = SchemeKind::Theta;
        let v = TestFunction::Theta { z: z.clone(), xi: xi.clone(), tau: tau.clone() };
        let pv = TestFunction::Theta { z: pz.clone(), xi: px, tau: pt };
        for k in 0..scheme.local_trial_dim() {
            let mut w = vec![0.0; scheme.local_trial_dim()];
            w[k] = 1.0;
            tab.record("b_theta", rel(bilinear_form(scheme, &material, &tri, &w, &v), bilinear_form(scheme, &material, &tri, &w, &pv)));
        }
        let scheme = SchemeKind::PLAIN;
        let v = TestFunction::Plain { z, theta: q };
        let pv = TestFunction::Plain { z: pz, theta: pq };
        for k in 0..scheme.local_trial_dim() {
            let mut w = vec![0.0; scheme.local_trial_dim()];
            w[k] = 1.0;
            tab.record("b_plain", rel(bilinear_form(scheme, &material, &tri, &w, &v), bilinear_form(scheme, &material, &tri, &w, &pv)));
        }
    }
    Ok(tab.0)
}

/// Element sizes of the boundedness study.
pub const BOUNDEDNESS_SIZES: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

/// Max of `‖Πv‖_V / ‖v‖_V` over `n` random inputs for each element size.
/// The same shapes and reference inputs are reused for every size.
pub fn verify_fortin_boundedness(seed: u64, n: usize) -> Result<BoundednessReport, FortinError> {
    assert!(n >= 1, "at least one sample");
    let dv = divdiv_vector_operator();
    let dd = ddiv_operator();
    let var = FortinVariant::default();
    let mut rep = BoundednessReport { h: BOUNDEDNESS_SIZES.to_vec(), ggrad: vec![], divdiv_vector: vec![], ddiv: vec![], ddiv_scaled: vec![] };
    for &h in &BOUNDEDNESS_SIZES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut g, mut v, mut d, mut ds) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for _ in 0..n {
            let tri = random_element(&mut rng, h);
            let map = AffineMap::from_vertices(&tri);
            let p = SURROGATE_DEGREE;
            let z = push_scalar(&map, &random_poly(&mut rng, p))?;
            let xi = push_tensor(&map, &random_sym(&mut rng, p))?;
            let tau = push_vector(&map, &random_vec(&mut rng, p))?;
            let q = push_tensor(&map, &random_sym(&mut rng, p))?;

            let pz = fortin_ggrad_local(&tri, &z)?;
            g = g.max((h2_inner(&tri, &pz, &pz) / h2_inner(&tri, &z, &z)).sqrt());
            let (px, pt) = dv.apply(&tri, &xi, &tau, var)?;
            v = v.max((hdivdiv_vector_inner(&tri, (&px, &pt), (&px, &pt)) / hdivdiv_vector_inner(&tri, (&xi, &tau), (&xi, &tau))).sqrt());
            let pq = dd.apply(&tri, &q, var)?;
            d = d.max((hddiv_inner(&tri, &pq, &pq) / hddiv_inner(&tri, &q, &q)).sqrt());
            let hs = map.h.powi(4);
            let scaled = |t: &SymPoly| {
                let dq = divdiv_tensor(t);
                t.ddot(t).integrate_over(&tri) + hs * (&dq * &dq).integrate_over(&tri)
            };
            ds = ds.max((scaled(&pq) / scaled(&q)).sqrt());
        }
        rep.ggrad.push(g);
        rep.divdiv_vector.push(v);
        rep.ddiv.push(d);
        rep.ddiv_scaled.push(ds);
    }
    Ok(rep)
}

/// Runs every certificate of the Fortin suite.
pub fn run_verification(cfg: &VerifyConfig) -> Result<FortinReport, FortinError> {
    let ranks = certify_constraint_ranks(cfg.corrupt);
    let residuals = orthogonality_residuals(cfg.seed, cfg.samples)?;
    let boundedness = verify_fortin_boundedness(cfg.seed, cfg.boundedness_samples.max(1))?;
    let mut certs = vec![
        Certificate::new(format!("{DUAL_BASIS_BLOCK} |det A|"), ranks.dual_det.abs(), Bound::Above, DET_TOL),
        Certificate::new(format!("{DUAL_BASIS_BLOCK} |det A3|"), ranks.dual_a3_det.abs(), Bound::Above, DET_TOL),
        Certificate::new(format!("{DUAL_BASIS_BLOCK} block defect"), ranks.dual_block_defect, Bound::Below, 1e-13),
        Certificate::new(format!("{DUAL_BASIS_BLOCK} min |diag A1|"), ranks.dual_min_diagonal, Bound::Above, DET_TOL),
        Certificate::new(format!("{DIVDIV_VECTOR_BLOCK} sigma_min"), ranks.divdiv_vector_sigma, Bound::Above, RANK_TOL),
        Certificate::new(format!("{DDIV_BLOCK} sigma_min"), ranks.ddiv_sigma, Bound::Above, RANK_TOL),
    ];
    for (name, v) in &residuals {
        certs.push(Certificate::new(name.clone(), *v, Bound::Below, cfg.tolerance));
    }
    for (name, col) in [("ggrad", &boundedness.ggrad), ("divdiv", &boundedness.divdiv_vector), ("ddiv", &boundedness.ddiv)] {
        let finite = col.iter().all(|r| r.is_finite());
        let var = if finite { BoundednessReport::variation(col) } else { f64::INFINITY };
        certs.push(Certificate::new(format!("{name} ratio variation over h"), var, Bound::Below, 0.2));
    }
    certs.push(Certificate::new(
        "ddiv scaled ratio variation",
        BoundednessReport::variation(&boundedness.ddiv_scaled),
        Bound::Below,
        1e-10,
    ));
    Ok(FortinReport { ranks, residuals, boundedness, certificates: certs })
}

//! Practical DPG for the plate: local Gram and coupling matrices, the
//! global normal equations and their solution.
//!
//! Two schemes share the machinery. The theta scheme has trial fields
//! `(u, θ, M)` and test functions `(z, Ξ, τ) ∈ P³ × P^{4,s} × P³`; the plain
//! scheme has `(u, M)` and `(z, Θ) ∈ P³ × P^{d,s}`. Both carry the skeleton
//! unknowns `û` and `q̂`.
//!
//! Test bases are push-forwards of a fixed reference basis (pullback for
//! `z`, Piola–Kirchhoff for tensors, Piola for `τ`). The reference basis is
//! split into subspaces on which the test norm scales with a single power of
//! the mesh size, so a diagonal rescaling of `G` keeps its condition number
//! bounded on strongly graded meshes. `BᵀG⁻¹B` does not depend on the basis.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{AffineMap, Mesh, MeshError};
use crate::poly::{
    dim, div_tensor, div_vector, divdiv_tensor, edge_quadrature, grad, hessian, orthonormal_basis,
    orthonormal_vector_basis, quadrature, Poly, SymPoly, SymTensorBasis, VecPoly, DEFAULT_EDGE_DEGREE,
    DEFAULT_VOLUME_DEGREE, REFERENCE_TRIANGLE,
};
use crate::trace_spaces::{
    count_dofs, edge_trace, pair_qhat, pair_uhat_divdiv, pair_uhat_divdiv_vector, BoundaryTraceP32,
    DeflectionTraceDofs, DofCounts, QhatSpace,
};
use crate::transforms::{push_scalar, push_tensor, push_vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpgError {
    #[error("test Gram matrix of element {element} is not positive definite")]
    GramNotSpd { element: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("global matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("solve residual {0:e} exceeds tolerance")]
    SolveResidual(f64),
    #[error("invalid material tensor: {0}")]
    InvalidMaterial(&'static str),
    #[error("unsupported tensor test degree {0} (expected 2 or 4)")]
    InvalidScheme(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    /// Trial `(u, θ, M, û, q̂)`, test `P³ × P^{4,s} × P³`.
    Theta,
    /// Trial `(u, M, û, q̂)`, test `P³ × P^{d,s}` with `d ∈ {2, 4}`.
    Plain { tensor_degree: usize },
}

impl SchemeKind {
    pub const PLAIN: SchemeKind = SchemeKind::Plain { tensor_degree: 4 };

    pub fn validate(self) -> Result<Self, DpgError> {
        match self {
            SchemeKind::Plain { tensor_degree: d } if d != 2 && d != 4 => Err(DpgError::InvalidScheme(d)),
            s => Ok(s),
        }
    }

    pub fn fields_per_element(self) -> usize {
        match self {
            SchemeKind::Theta => 6,
            SchemeKind::Plain { .. } => 4,
        }
    }

    /// Field constants, nine `û` vertex data and nine `q̂` coefficients.
    pub fn local_trial_dim(self) -> usize {
        self.fields_per_element() + 18
    }

    pub fn test_dim(self) -> usize {
        match self {
            SchemeKind::Theta => dim(3) + 3 * dim(4) + 2 * dim(3),
            SchemeKind::Plain { tensor_degree } => dim(3) + 3 * dim(tensor_degree),
        }
    }

    pub fn has_theta(self) -> bool {
        matches!(self, SchemeKind::Theta)
    }

    /// First local column of `M`, `û` and `q̂`.
    pub fn moment_col(self) -> usize {
        match self {
            SchemeKind::Theta => 3,
            SchemeKind::Plain { .. } => 1,
        }
    }

    pub fn uhat_col(self) -> usize {
        self.fields_per_element()
    }

    pub fn qhat_col(self) -> usize {
        self.fields_per_element() + 9
    }
}

/// Constant material tensor `ℂ` acting on `(M_xx, M_yy, M_xy)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialTensor {
    c: Matrix3<f64>,
    c_inv: Matrix3<f64>,
}

impl MaterialTensor {
    pub fn identity() -> Self {
        Self { c: Matrix3::identity(), c_inv: Matrix3::identity() }
    }

    /// Accepts `C` when it is self-adjoint for `A : B = a_xx b_xx + a_yy b_yy
    /// + 2 a_xy b_xy` (that is, `Cᵀ W = W C` with `W = diag(1, 1, 2)`) and
    /// positive definite in that inner product.
    pub fn new(c: [[f64; 3]; 3]) -> Result<Self, DpgError> {
        let c = Matrix3::from_fn(|i, j| c[i][j]);
        let w = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, 2.0));
        let wc = w * c;
        if (wc - wc.transpose()).amax() > 1e-12 * c.amax() {
            return Err(DpgError::InvalidMaterial("not self-adjoint"));
        }
        if wc.cholesky().is_none() {
            return Err(DpgError::InvalidMaterial("not positive definite"));
        }
        let c_inv = c.try_inverse().ok_or(DpgError::InvalidMaterial("singular"))?;
        Ok(Self { c, c_inv })
    }

    pub fn apply(&self, m: [f64; 3]) -> [f64; 3] {
        let v = self.c * nalgebra::Vector3::from(m);
        [v[0], v[1], v[2]]
    }

    pub fn apply_inverse(&self, m: [f64; 3]) -> [f64; 3] {
        let v = self.c_inv * nalgebra::Vector3::from(m);
        [v[0], v[1], v[2]]
    }

    pub fn apply_poly(&self, m: &SymPoly) -> SymPoly {
        combine(&self.c, m)
    }

    pub fn apply_inverse_poly(&self, m: &SymPoly) -> SymPoly {
        combine(&self.c_inv, m)
    }
}

fn combine(c: &Matrix3<f64>, m: &SymPoly) -> SymPoly {
    let comps = m.components();
    let row = |i: usize| {
        let mut p = Poly::zero(0);
        for (j, comp) in comps.iter().enumerate() {
            p.axpy(c[(i, j)], comp);
        }
        p
    };
    SymPoly::new(row(0), row(1), row(2))
}

/// Test function on one element, as physical polynomials.
#[derive(Clone, Debug)]
pub enum TestFunction {
    Theta { z: Poly, xi: SymPoly, tau: VecPoly },
    Plain { z: Poly, theta: SymPoly },
}

/// Reference test basis after the scale splitting.
#[derive(Clone, Debug)]
pub struct ReferenceTestBasis {
    pub scheme: SchemeKind,
    pub z: Vec<Poly>,
    /// `Ξ̂` (theta scheme) or `Θ̂` (plain scheme).
    pub tensor: Vec<SymPoly>,
    /// `τ̂` partners of `tensor` (theta scheme only).
    pub tau: Vec<VecPoly>,
}

fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Splits `ℝⁿ` into the row space of `d` and its kernel, both orthonormal.
fn split(d: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (vals, vecs) = sorted_eigen(d.transpose() * d);
    let tol = 1e-10 * vals[0].max(1e-300);
    let r = vals.iter().filter(|v| **v > tol).count();
    (vecs.columns(0, r).into_owned(), vecs.columns(r, vecs.ncols() - r).into_owned())
}

impl ReferenceTestBasis {
    pub fn new(scheme: SchemeKind) -> Self {
        let z = orthonormal_basis(3);
        match scheme {
            SchemeKind::Theta => {
                let xs = SymTensorBasis::orthonormal(4).funcs;
                let ts = orthonormal_vector_basis(3);
                let n = xs.len() + ts.len();
                let zero_t = VecPoly::zero(3);
                let zero_x = SymPoly::zero(4);
                let raw_xi: Vec<&SymPoly> = xs.iter().chain(std::iter::repeat_n(&zero_x, ts.len())).collect();
                let raw_tau: Vec<&VecPoly> = std::iter::repeat_n(&zero_t, xs.len()).chain(ts.iter()).collect();
                let p2 = orthonormal_basis(2);
                let ddiv = DMatrix::from_fn(p2.len(), n, |r, c| (&p2[r] * &div_vector(raw_tau[c])).integrate_ref());
                let v3 = orthonormal_vector_basis(3);
                let rmat = DMatrix::from_fn(v3.len(), n, |r, c| {
                    div_tensor(raw_xi[c]).sub(raw_tau[c]).dot(&v3[r]).integrate_ref()
                });
                let (s2, ker) = split(&ddiv);
                let (s0k, smk) = split(&(&rmat * &ker));
                let mut q = DMatrix::zeros(n, n);
                q.columns_mut(0, s2.ncols()).copy_from(&s2);
                q.columns_mut(s2.ncols(), s0k.ncols()).copy_from(&(&ker * &s0k));
                q.columns_mut(s2.ncols() + s0k.ncols(), smk.ncols()).copy_from(&(&ker * &smk));
                let mut tensor = Vec::with_capacity(n);
                let mut tau = Vec::with_capacity(n);
                for c in 0..n {
                    let mut x = SymPoly::zero(4);
                    let mut t = VecPoly::zero(3);
                    for r in 0..n {
                        let w = q[(r, c)];
                        if w != 0.0 {
                            x.axpy(w, raw_xi[r]);
                            t.axpy(w, raw_tau[r]);
                        }
                    }
                    tensor.push(x);
                    tau.push(t);
                }
                Self { scheme, z, tensor, tau }
            }
            SchemeKind::Plain { tensor_degree: d } => {
                let xs = SymTensorBasis::orthonormal(d).funcs;
                let low = orthonormal_basis(d - 2);
                let dd = DMatrix::from_fn(low.len(), xs.len(), |r, c| (&low[r] * &divdiv_tensor(&xs[c])).integrate_ref());
                let (s, k) = split(&dd);
                let mut tensor = Vec::with_capacity(xs.len());
                for q in [&s, &k] {
                    for c in 0..q.ncols() {
                        let mut x = SymPoly::zero(d);
                        for (r, f) in xs.iter().enumerate() {
                            x.axpy(q[(r, c)], f);
                        }
                        tensor.push(x);
                    }
                }
                Self { scheme, z, tensor, tau: Vec::new() }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.z.len() + self.tensor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical test functions on the image of `map`.
    pub fn physical(&self, map: &AffineMap) -> Vec<TestFunction> {
        let mut out = Vec::with_capacity(self.len());
        let zero_z = Poly::zero(0);
        for z in &self.z {
            let z = push_scalar(map, z).expect("positive orientation");
            out.push(match self.scheme {
                SchemeKind::Theta => TestFunction::Theta { z, xi: SymPoly::zero(0), tau: VecPoly::zero(0) },
                SchemeKind::Plain { .. } => TestFunction::Plain { z, theta: SymPoly::zero(0) },
            });
        }
        for (i, x) in self.tensor.iter().enumerate() {
            let xi = push_tensor(map, x).expect("positive orientation");
            out.push(match self.scheme {
                SchemeKind::Theta => TestFunction::Theta {
                    z: zero_z.clone(),
                    xi,
                    tau: push_vector(map, &self.tau[i]).expect("positive orientation"),
                },
                SchemeKind::Plain { .. } => TestFunction::Plain { z: zero_z.clone(), theta: xi },
            });
        }
        out
    }
}

/// Reference values of the test basis at quadrature points.
struct Tables {
    scheme: SchemeKind,
    wv: Vec<f64>,
    pv: Vec<[f64; 2]>,
    we: Vec<f64>,
    se: Vec<f64>,
    /// Per volume point and z function: value, ∇̂ (2), ε̂∇̂ (3).
    zv: Vec<[f64; 6]>,
    /// Per volume point and tensor function: tensor (3), D̂iv − τ̂ (2), scalar divergence.
    xv: Vec<[f64; 6]>,
    /// Per edge, edge point and z function: value and ∇̂.
    ze: Vec<[f64; 3]>,
    /// Per edge, edge point and tensor function: tensor (3) and vector (2).
    xe: Vec<[f64; 5]>,
    zvert: Vec<[f64; 3]>,
    nz: usize,
    nx: usize,
}

impl Tables {
    fn new(basis: &ReferenceTestBasis) -> Self {
        let vol = quadrature(DEFAULT_VOLUME_DEGREE).expect("supported");
        let edge = edge_quadrature(DEFAULT_EDGE_DEGREE).expect("supported");
        let nz = basis.z.len();
        let nx = basis.tensor.len();
        let zd: Vec<_> = basis.z.iter().map(|z| (z.clone(), grad(z), hessian(z))).collect();
        let xd: Vec<_> = basis
            .tensor
            .iter()
            .enumerate()
            .map(|(i, x)| match basis.scheme {
                SchemeKind::Theta => {
                    let t = &basis.tau[i];
                    (x.clone(), div_tensor(x).sub(t), div_vector(t), t.clone())
                }
                SchemeKind::Plain { .. } => {
                    let d = div_tensor(x);
                    (x.clone(), VecPoly::zero(0), div_vector(&d), d)
                }
            })
            .collect();
        let mut zv = Vec::with_capacity(vol.len() * nz);
        let mut xv = Vec::with_capacity(vol.len() * nx);
        for p in &vol.points {
            for (z, g, h) in &zd {
                let gv = g.eval(p[0], p[1]);
                let hv = h.eval(p[0], p[1]);
                zv.push([z.eval(p[0], p[1]), gv[0], gv[1], hv[0], hv[1], hv[2]]);
            }
            for (x, r, d, _) in &xd {
                let xv0 = x.eval(p[0], p[1]);
                let rv = r.eval(p[0], p[1]);
                xv.push([xv0[0], xv0[1], xv0[2], rv[0], rv[1], d.eval(p[0], p[1])]);
            }
        }
        let refv = REFERENCE_TRIANGLE;
        let mut ze = Vec::new();
        let mut xe = Vec::new();
        for k in 0..3 {
            let (a, b) = (refv[k], refv[(k + 1) % 3]);
            for s in edge.points.iter().map(|p| p[0]) {
                let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                for (z, g, _) in &zd {
                    let gv = g.eval(p[0], p[1]);
                    ze.push([z.eval(p[0], p[1]), gv[0], gv[1]]);
                }
                for (x, _, _, t) in &xd {
                    let v = x.eval(p[0], p[1]);
                    let tv = t.eval(p[0], p[1]);
                    xe.push([v[0], v[1], v[2], tv[0], tv[1]]);
                }
            }
        }
        let zvert = basis.z.iter().map(|z| refv.map(|p| z.eval(p[0], p[1]))).collect();
        Self {
            scheme: basis.scheme,
            wv: vol.weights,
            pv: vol.points,
            we: edge.weights,
            se: edge.points.iter().map(|p| p[0]).collect(),
            zv,
            xv,
            ze,
            xe,
            zvert,
            nz,
            nx,
        }
    }
}

/// Per-element Gram matrix `G`, coupling matrix `B` and load `l`.
#[derive(Clone, Debug)]
pub struct LocalDpgSystem {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub l: DVector<f64>,
}

fn mat_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `B S Bᵀ / J` for a symmetric tensor in component form.
fn piola_kirchhoff(b: &[[f64; 2]; 2], j: f64, s: [f64; 3]) -> [f64; 3] {
    let f = [[s[0], s[2]], [s[2], s[1]]];
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (k, o) in row.iter_mut().enumerate() {
            for c in 0..2 {
                for d in 0..2 {
                    *o += b[i][c] * f[c][d] * b[k][d];
                }
            }
        }
    }
    [out[0][0] / j, out[1][1] / j, out[0][1] / j]
}

/// Local DPG matrices of one element.
fn local_system_with(
    tables: &Tables,
    verts: &[[f64; 2]; 3],
    material: &MaterialTensor,
    f: &(dyn Fn([f64; 2]) -> f64 + Sync),
) -> Result<LocalDpgSystem, MeshError> {
    let map = AffineMap::from_triangle(verts)?;
    let scheme = tables.scheme;
    let (nz, nx) = (tables.nz, tables.nx);
    let ntest = nz + nx;
    let ntrial = scheme.local_trial_dim();
    let (b, j) = (map.b, map.j);
    let bi = map.b_inv();
    let bit = [[bi[0][0], bi[1][0]], [bi[0][1], bi[1][1]]];
    let mut g = DMatrix::zeros(ntest, ntest);
    let mut bm = DMatrix::zeros(ntest, ntrial);
    let mut l = DVector::zeros(ntest);
    let s2 = std::f64::consts::SQRT_2;
    let mc = scheme.moment_col();

    // volume terms
    let nq = tables.wv.len();
    let mut fz = DMatrix::zeros(4 * nq, nz);
    let mut fx = DMatrix::zeros(6 * nq, nx);
    for q in 0..nq {
        let w = tables.wv[q];
        let sw = (w * j).sqrt();
        let xq = map.apply(tables.pv[q]);
        let fq = f(xq);
        for i in 0..nz {
            let e = &tables.zv[q * nz + i];
            let hp = piola_kirchhoff(&bit, 1.0, [e[3], e[4], e[5]]);
            fz[(4 * q, i)] = sw * e[0];
            fz[(4 * q + 1, i)] = sw * hp[0];
            fz[(4 * q + 2, i)] = sw * hp[1];
            fz[(4 * q + 3, i)] = sw * s2 * hp[2];
            bm[(i, mc)] += w * j * hp[0];
            bm[(i, mc + 1)] += w * j * hp[1];
            bm[(i, mc + 2)] += w * j * 2.0 * hp[2];
            l[i] -= w * j * fq * e[0];
        }
        for i in 0..nx {
            let e = &tables.xv[q * nx + i];
            let x = piola_kirchhoff(&b, j, [e[0], e[1], e[2]]);
            fx[(6 * q, i)] = sw * x[0];
            fx[(6 * q + 1, i)] = sw * x[1];
            fx[(6 * q + 2, i)] = sw * s2 * x[2];
            let row = nz + i;
            match scheme {
                SchemeKind::Theta => {
                    let r = mat_vec(&b, [e[3], e[4]]);
                    fx[(6 * q + 3, i)] = sw * r[0] / j;
                    fx[(6 * q + 4, i)] = sw * r[1] / j;
                    fx[(6 * q + 5, i)] = sw * e[5] / j;
                    bm[(row, 0)] += w * e[5];
                    bm[(row, 1)] -= w * r[0];
                    bm[(row, 2)] -= w * r[1];
                }
                SchemeKind::Plain { .. } => {
                    fx[(6 * q + 5, i)] = sw * e[5] / j;
                    bm[(row, 0)] += w * e[5];
                }
            }
            for c in 0..3 {
                bm[(row, mc + c)] += w * j * x[c];
            }
        }
    }
    g.view_mut((0, 0), (nz, nz)).copy_from(&fz.tr_mul(&fz));
    g.view_mut((nz, nz), (nx, nx)).copy_from(&fx.tr_mul(&fx));
    // moment columns of tensor rows: E_m : ℂ⁻¹Ξ with the doubled off-diagonal
    for i in 0..nx {
        let row = nz + i;
        let xi = [bm[(row, mc)], bm[(row, mc + 1)], bm[(row, mc + 2)]];
        let y = material.apply_inverse(xi);
        bm[(row, mc)] = y[0];
        bm[(row, mc + 1)] = y[1];
        bm[(row, mc + 2)] = 2.0 * y[2];
    }

    // skeleton terms
    let uc = scheme.uhat_col();
    let qc = scheme.qhat_col();
    let ne = tables.we.len();
    let units: Vec<BoundaryTraceP32> = (0..9).map(BoundaryTraceP32::unit).collect();
    for k in 0..3 {
        let traces: Vec<_> = units.iter().map(|u| edge_trace(u, verts, k)).collect();
        let fr = traces[0].frame;
        let (n, len) = (fr.normal, fr.length);
        for p in 0..ne {
            let w = tables.we[p];
            let s = tables.se[p];
            let tv: Vec<(f64, [f64; 2])> = traces.iter().map(|t| (t.value(s), t.gradient(s))).collect();
            for i in 0..nz {
                let e = &tables.ze[(k * ne + p) * nz + i];
                let gz = mat_vec(&bit, [e[1], e[2]]);
                bm[(i, qc + 3 + k)] += w * e[0];
                bm[(i, qc + 6 + k)] += w * len * (n[0] * gz[0] + n[1] * gz[1]);
            }
            for i in 0..nx {
                let e = &tables.xe[(k * ne + p) * nx + i];
                let x = piola_kirchhoff(&b, j, [e[0], e[1], e[2]]);
                let t = mat_vec(&b, [e[3] / j, e[4] / j]);
                let nt = n[0] * t[0] + n[1] * t[1];
                let xn = [x[0] * n[0] + x[2] * n[1], x[2] * n[0] + x[1] * n[1]];
                for (d, (v, gv)) in tv.iter().enumerate() {
                    bm[(nz + i, uc + d)] -= w * len * (nt * v - (xn[0] * gv[0] + xn[1] * gv[1]));
                }
            }
        }
    }
    for i in 0..nz {
        for k in 0..3 {
            bm[(i, qc + k)] = tables.zvert[i][k];
        }
    }
    Ok(LocalDpgSystem { g, b: bm, l })
}

/// Builds the reference basis and evaluates it once; reuse for many elements.
pub struct LocalAssembler {
    pub basis: ReferenceTestBasis,
    tables: Tables,
}

impl LocalAssembler {
    pub fn new(scheme: SchemeKind) -> Result<Self, DpgError> {
        let basis = ReferenceTestBasis::new(scheme.validate()?);
        let tables = Tables::new(&basis);
        Ok(Self { basis, tables })
    }

    pub fn scheme(&self) -> SchemeKind {
        self.tables.scheme
    }

    pub fn local_system(
        &self,
        verts: &[[f64; 2]; 3],
        material: &MaterialTensor,
        f: &(dyn Fn([f64; 2]) -> f64 + Sync),
    ) -> Result<LocalDpgSystem, MeshError> {
        local_system_with(&self.tables, verts, material, f)
    }
}

pub fn local_gram(mesh: &Mesh, t: usize, scheme: SchemeKind) -> Result<DMatrix<f64>, DpgError> {
    let a = LocalAssembler::new(scheme)?;
    Ok(a.local_system(&mesh.triangle_vertices(t), &MaterialTensor::identity(), &|_| 0.0)?.g)
}

pub fn local_b(mesh: &Mesh, t: usize, scheme: SchemeKind, material: &MaterialTensor) -> Result<DMatrix<f64>, DpgError> {
    let a = LocalAssembler::new(scheme)?;
    Ok(a.local_system(&mesh.triangle_vertices(t), material, &|_| 0.0)?.b)
}

pub fn local_load(
    mesh: &Mesh,
    t: usize,
    scheme: SchemeKind,
    f: &(dyn Fn([f64; 2]) -> f64 + Sync),
) -> Result<DVector<f64>, DpgError> {
    let a = LocalAssembler::new(scheme)?;
    Ok(a.local_system(&mesh.triangle_vertices(t), &MaterialTensor::identity(), f)?.l)
}

/// Test inner product of two physical test functions on `tri`, by exact
/// polynomial integration.
pub fn test_inner_product(tri: &[[f64; 2]; 3], a: &TestFunction, b: &TestFunction) -> f64 {
    match (a, b) {
        (TestFunction::Theta { z, xi, tau }, TestFunction::Theta { z: z2, xi: xi2, tau: tau2 }) => {
            let mut p = z * z2;
            p += &hessian(z).ddot(&hessian(z2));
            p += &xi.ddot(xi2);
            p += &div_tensor(xi).sub(tau).dot(&div_tensor(xi2).sub(tau2));
            p += &(&div_vector(tau) * &div_vector(tau2));
            p.integrate_over(tri)
        }
        (TestFunction::Plain { z, theta }, TestFunction::Plain { z: z2, theta: t2 }) => {
            let mut p = z * z2;
            p += &hessian(z).ddot(&hessian(z2));
            p += &theta.ddot(t2);
            p += &(&divdiv_tensor(theta) * &divdiv_tensor(t2));
            p.integrate_over(tri)
        }
        _ => panic!("test functions of different schemes"),
    }
}

/// Ultraweak bilinear form on one element for a local trial vector (layout
/// of [`SchemeKind::local_trial_dim`]) and a physical test function.
pub fn bilinear_form(
    scheme: SchemeKind,
    material: &MaterialTensor,
    tri: &[[f64; 2]; 3],
    trial: &[f64],
    test: &TestFunction,
) -> f64 {
    let mc = scheme.moment_col();
    let m = SymPoly::constant([trial[mc], trial[mc + 1], trial[mc + 2]]);
    let uhat = BoundaryTraceP32::from_coeffs(&trial[scheme.uhat_col()..scheme.uhat_col() + 9]);
    let mut q = [0.0; 9];
    q.copy_from_slice(&trial[scheme.qhat_col()..scheme.qhat_col() + 9]);
    let u = Poly::constant(trial[0]);
    match test {
        TestFunction::Theta { z, xi, tau } => {
            let th = VecPoly::new(Poly::constant(trial[1]), Poly::constant(trial[2]));
            let mut p = &u * &div_vector(tau);
            p += &th.dot(&tau.sub(&div_tensor(xi)));
            let mut x = material.apply_inverse_poly(xi);
            x.axpy(1.0, &hessian(z));
            p += &m.ddot(&x);
            p.integrate_over(tri) - pair_uhat_divdiv_vector(&uhat, tri, xi, tau) + pair_qhat(&q, tri, z)
        }
        TestFunction::Plain { z, theta } => {
            let mut p = &u * &divdiv_tensor(theta);
            let mut x = material.apply_inverse_poly(theta);
            x.axpy(1.0, &hessian(z));
            p += &m.ddot(&x);
            p.integrate_over(tri) - pair_uhat_divdiv(&uhat, tri, theta) + pair_qhat(&q, tri, z)
        }
    }
}

/// Load functional `L(z, ...) = −(f, z)_T` for a physical test function.
pub fn load_functional(tri: &[[f64; 2]; 3], f: &dyn Fn([f64; 2]) -> f64, test: &TestFunction) -> f64 {
    let z = match test {
        TestFunction::Theta { z, .. } | TestFunction::Plain { z, .. } => z,
    };
    let rule = quadrature(12).expect("supported");
    let map = AffineMap::from_vertices(tri);
    -rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(p, w)| {
            let x = map.apply(*p);
            w * map.j.abs() * f(x) * z.eval(x[0], x[1])
        })
        .sum::<f64>()
}

/// Lower-triangular symmetric sparse matrix in coordinate form.
#[derive(Clone, Debug)]
pub struct SymSparse {
    pub n: usize,
    /// `(row, col, value)` with `row ≥ col`, sorted by column then row.
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    /// Sums duplicates; entries above the diagonal are mirrored below it.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        for e in t.iter_mut() {
            if e.0 < e.1 {
                *e = (e.1, e.0, e.2);
            }
        }
        t.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len() / 2);
        for (r, c, v) in t {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        Self { n, entries }
    }

    pub fn identity(n: usize) -> Self {
        Self { n, entries: (0..n).map(|i| (i, i, 1.0)).collect() }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            if r == c {
                d[r] += v;
            }
        }
        d
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
            if r != c {
                m[(c, r)] += v;
            }
        }
        m
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `A x = rhs` for symmetric positive definite `A` by a sparse
/// Cholesky factorisation of the Jacobi-scaled matrix, with one step of
/// iterative refinement.
pub fn solve(a: &SymSparse, rhs: &[f64]) -> Result<Vec<f64>, DpgError> {
    use faer::prelude::Solve;
    use faer::sparse::{SparseColMat, Triplet};
    let n = a.n;
    if n == 0 {
        return Ok(Vec::new());
    }
    let diag = a.diagonal();
    if diag.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(DpgError::NotPositiveDefinite);
    }
    let s: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let trip: Vec<Triplet<usize, usize, f64>> =
        a.entries.iter().map(|&(r, c, v)| Triplet::new(r, c, v * s[r] * s[c])).collect();
    let m = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip).map_err(|_| DpgError::NotPositiveDefinite)?;
    let llt = m.sp_cholesky(faer::Side::Lower).map_err(|_| DpgError::NotPositiveDefinite)?;
    let solve_scaled = |b: &[f64]| -> Vec<f64> {
        let bm = faer::Mat::<f64>::from_fn(n, 1, |i, _| b[i] * s[i]);
        let y = llt.solve(&bm);
        (0..n).map(|i| y[(i, 0)] * s[i]).collect()
    };
    let mut x = solve_scaled(rhs);
    let r: Vec<f64> = a.mul_vec(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
    let dx = solve_scaled(&r);
    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    let r: Vec<f64> = a.mul_vec(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
    let rel = norm(&r) / norm(rhs).max(f64::MIN_POSITIVE);
    if !rel.is_finite() || (norm(rhs) > 0.0 && rel > 1e-8) {
        return Err(DpgError::SolveResidual(rel));
    }
    Ok(x)
}

/// Mapping from local trial columns to global unknowns.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub scheme: SchemeKind,
    pub counts: DofCounts,
    pub qhat: QhatSpace,
    uhat_offset: usize,
    qhat_offset: usize,
}

/// Where one local trial column lives: a combination of free unknowns plus
/// a lifted (prescribed) value.
#[derive(Clone, Debug, Default)]
pub struct LocalColumn {
    pub free: Vec<(usize, f64)>,
    pub lifted: f64,
}

impl DofMap {
    pub fn new(mesh: &Mesh, scheme: SchemeKind) -> Self {
        let counts = count_dofs(mesh, scheme);
        let qhat = QhatSpace::new(mesh);
        debug_assert_eq!(qhat.dim, counts.qhat);
        Self { scheme, counts, qhat, uhat_offset: counts.field, qhat_offset: counts.field + counts.uhat }
    }

    pub fn n_free(&self) -> usize {
        self.counts.total()
    }

    pub fn local_columns(&self, mesh: &Mesh, t: usize, lifted: &DeflectionTraceDofs) -> Vec<LocalColumn> {
        let nf = self.scheme.fields_per_element();
        let mut cols = Vec::with_capacity(self.scheme.local_trial_dim());
        for c in 0..nf {
            cols.push(LocalColumn { free: vec![(nf * t + c, 1.0)], lifted: 0.0 });
        }
        for &v in &mesh.triangles()[t] {
            let data = [lifted.values[v], lifted.grads[v][0], lifted.grads[v][1]];
            for (comp, val) in data.iter().enumerate() {
                cols.push(match mesh.interior_index(v) {
                    Some(i) => LocalColumn { free: vec![(self.uhat_offset + 3 * i + comp, 1.0)], lifted: 0.0 },
                    None => LocalColumn { free: Vec::new(), lifted: *val },
                });
            }
        }
        for j in 0..9 {
            let free = self.qhat.slots[9 * t + j].iter().map(|&(g, w)| (self.qhat_offset + g, w)).collect();
            cols.push(LocalColumn { free, lifted: 0.0 });
        }
        cols
    }

    fn local_values(&self, cols: &[LocalColumn], x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            cols.len(),
            cols.iter().map(|c| c.lifted + c.free.iter().map(|&(g, w)| w * x[g]).sum::<f64>()),
        )
    }
}

/// Whitened local data: `W = L⁻¹ D B` and `l̃ = L⁻¹ D l` where `D S D = G`
/// is the Jacobi scaling and `S = L Lᵀ`. Then `BᵀG⁻¹B = WᵀW` and the local
/// residual norm is `‖l̃ − W x‖`.
#[derive(Clone, Debug)]
pub struct LocalFactor {
    pub w: DMatrix<f64>,
    pub lt: DVector<f64>,
    pub cols: Vec<LocalColumn>,
}

fn factor(sys: &LocalDpgSystem, element: usize) -> Result<(DMatrix<f64>, DVector<f64>), DpgError> {
    let d: Vec<f64> = sys.g.diagonal().iter().map(|v| 1.0 / v.sqrt()).collect();
    let n = d.len();
    let s = DMatrix::from_fn(n, n, |i, j| sys.g[(i, j)] * d[i] * d[j]);
    let chol = s.cholesky().ok_or(DpgError::GramNotSpd { element })?;
    let l = chol.l();
    let db = DMatrix::from_fn(n, sys.b.ncols(), |i, j| sys.b[(i, j)] * d[i]);
    let dl = DVector::from_fn(n, |i, _| sys.l[i] * d[i]);
    let w = l.solve_lower_triangular(&db).ok_or(DpgError::GramNotSpd { element })?;
    let lt = l.solve_lower_triangular(&dl).ok_or(DpgError::GramNotSpd { element })?;
    Ok((w, lt))
}

/// Assembled normal equations of one mesh.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub scheme: SchemeKind,
    pub dofs: DofMap,
    pub locals: Vec<LocalFactor>,
    pub matrix: SymSparse,
    pub rhs: Vec<f64>,
    pub lifted: DeflectionTraceDofs,
}

/// Assembles `A = Σ Pᵀ BᵀG⁻¹B P` and `rhs = Σ Pᵀ BᵀG⁻¹(l − B w)` over free
/// unknowns, where `w` carries the prescribed boundary data of `û`.
pub fn assemble(
    mesh: &Mesh,
    scheme: SchemeKind,
    material: &MaterialTensor,
    f: &(dyn Fn([f64; 2]) -> f64 + Sync),
    lifted: &DeflectionTraceDofs,
) -> Result<Discretization, DpgError> {
    let assembler = LocalAssembler::new(scheme)?;
    let dofs = DofMap::new(mesh, scheme);
    let locals: Vec<LocalFactor> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let sys = assembler.local_system(&mesh.triangle_vertices(t), material, f).map_err(|e| match e {
                MeshError::Degenerate(_) => MeshError::Degenerate(t),
                MeshError::Clockwise(_) => MeshError::Clockwise(t),
                o => o,
            })?;
            let (w, lt) = factor(&sys, t)?;
            Ok(LocalFactor { w, lt, cols: dofs.local_columns(mesh, t, lifted) })
        })
        .collect::<Result<_, DpgError>>()?;
    let n = dofs.n_free();
    let contributions: Vec<_> = locals
        .par_iter()
        .map(|lf| {
            let k = lf.w.tr_mul(&lf.w);
            let w0 = DVector::from_iterator(lf.cols.len(), lf.cols.iter().map(|c| c.lifted));
            let r = lf.w.tr_mul(&(&lf.lt - &lf.w * w0));
            (k, r)
        })
        .collect();
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; n];
    for (lf, (k, r)) in locals.iter().zip(&contributions) {
        for (a, ca) in lf.cols.iter().enumerate() {
            for &(ga, wa) in &ca.free {
                rhs[ga] += wa * r[a];
                for (b, cb) in lf.cols.iter().enumerate() {
                    for &(gb, wb) in &cb.free {
                        if ga >= gb {
                            trip.push((ga, gb, wa * wb * k[(a, b)]));
                        }
                    }
                }
            }
        }
    }
    let matrix = SymSparse::from_triplets(n, trip);
    Ok(Discretization { scheme, dofs, locals, matrix, rhs, lifted: lifted.clone() })
}

/// Per-element trial coefficients after a solve.
#[derive(Clone, Debug)]
pub struct TrialCoefficients {
    pub u: Vec<f64>,
    pub theta: Option<Vec<[f64; 2]>>,
    pub m: Vec<[f64; 3]>,
    pub uhat: DeflectionTraceDofs,
    pub qhat: Vec<f64>,
}

impl Discretization {
    pub fn ndof(&self) -> usize {
        self.dofs.n_free()
    }

    pub fn solve(&self) -> Result<Vec<f64>, DpgError> {
        solve(&self.matrix, &self.rhs)
    }

    /// Squared local residuals `η(T)² = ‖l̃_T − W_T x_T‖²`.
    pub fn local_residuals(&self, x: &[f64]) -> Vec<f64> {
        self.locals
            .par_iter()
            .map(|lf| {
                let xl = self.dofs.local_values(&lf.cols, x);
                (&lf.lt - &lf.w * xl).norm_squared()
            })
            .collect()
    }

    /// The discrete residual `Σ_T r_Tᵀ G_T⁻¹ r_T` that the method minimises.
    pub fn residual_energy(&self, x: &[f64]) -> f64 {
        self.local_residuals(x).iter().sum()
    }

    pub fn coefficients(&self, mesh: &Mesh, x: &[f64]) -> TrialCoefficients {
        let nt = mesh.n_triangles();
        let nf = self.scheme.fields_per_element();
        let mc = self.scheme.moment_col();
        let u = (0..nt).map(|t| x[nf * t]).collect();
        let theta = self.scheme.has_theta().then(|| (0..nt).map(|t| [x[nf * t + 1], x[nf * t + 2]]).collect());
        let m = (0..nt).map(|t| [x[nf * t + mc], x[nf * t + mc + 1], x[nf * t + mc + 2]]).collect();
        let mut uhat = self.lifted.clone();
        let off = self.dofs.uhat_offset;
        for v in 0..mesh.n_vertices() {
            if let Some(i) = mesh.interior_index(v) {
                uhat.values[v] = x[off + 3 * i];
                uhat.grads[v] = [x[off + 3 * i + 1], x[off + 3 * i + 2]];
            }
        }
        let qhat = x[self.dofs.qhat_offset..].to_vec();
        TrialCoefficients { u, theta, m, uhat, qhat }
    }

    /// Local trial vector of element `t` for global unknowns `x`.
    pub fn local_trial(&self, t: usize, x: &[f64]) -> Vec<f64> {
        self.dofs.local_values(&self.locals[t].cols, x).iter().copied().collect()
    }
}

/// `‖u^θ − u^plain‖` and `‖M^θ − M^plain‖` for two piecewise-constant solutions.
pub fn scheme_consistency_check(mesh: &Mesh, a: &TrialCoefficients, b: &TrialCoefficients) -> (f64, f64) {
    let mut du = 0.0;
    let mut dm = 0.0;
    for t in 0..mesh.n_triangles() {
        let area = mesh.area(t);
        du += area * (a.u[t] - b.u[t]).powi(2);
        let d = [a.m[t][0] - b.m[t][0], a.m[t][1] - b.m[t][1], a.m[t][2] - b.m[t][2]];
        dm += area * crate::poly::sym_dot(&d, &d);
    }
    (du.sqrt(), dm.sqrt())
}

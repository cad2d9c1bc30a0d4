//! Skeleton trace spaces: deflection traces `Û_S` and moment traces `Q̂_S`.
//!
//! Deflection traces are described by vertex values and vertex gradients.
//! On an edge the value is the cubic Hermite interpolant of the endpoint
//! values and tangential derivatives, and the normal derivative is the
//! linear interpolant of the endpoint normal derivatives (plus an optional
//! quadratic bubble for the enriched element space `P^{3,2}_c(∂T)`).
//!
//! Moment traces are never represented as tensors. A local moment trace is
//! the functional `z ↦ Σ_j c_j q_j(z)` with the nine dual functionals
//! `q_j ∈ {z(e_k), |E_k|⁻¹∫_{E_k} z, ∫_{E_k} n·∇z}`.

use crate::dpg_core::SchemeKind;
use crate::mesh::{edge_frame_of, EdgeFrame, Mesh};
use crate::poly::{div_tensor, edge_quadrature, grad, Poly, QuadratureRule, SymPoly, VecPoly, DEFAULT_EDGE_DEGREE};

/// Global deflection-trace data: one value and one gradient per vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct DeflectionTraceDofs {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl DeflectionTraceDofs {
    pub fn zeros(n_vertices: usize) -> Self {
        Self { values: vec![0.0; n_vertices], grads: vec![[0.0; 2]; n_vertices] }
    }

    /// Samples `f(p) = (v, ∇v)` at every vertex.
    pub fn sample(mesh: &Mesh, f: impl Fn([f64; 2]) -> (f64, [f64; 2])) -> Self {
        let (values, grads) = mesh.vertices().iter().map(|p| f(*p)).unzip();
        Self { values, grads }
    }

    pub fn local(&self, mesh: &Mesh, t: usize) -> BoundaryTraceP32 {
        let tri = mesh.triangles()[t];
        BoundaryTraceP32 {
            values: tri.map(|v| self.values[v]),
            grads: tri.map(|v| self.grads[v]),
            bubbles: [0.0; 3],
        }
    }
}

/// Element boundary trace in `P^{3,2}_c(∂T)`: vertex values, vertex
/// gradients and one normal-derivative bubble per edge (12 parameters).
/// With zero bubbles it is a member of the local deflection-trace space.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundaryTraceP32 {
    pub values: [f64; 3],
    pub grads: [[f64; 2]; 3],
    /// Midpoint value of the extra normal derivative `c · 4s(1 − s)`.
    pub bubbles: [f64; 3],
}

impl BoundaryTraceP32 {
    pub const DIM: usize = 12;
    /// Dimension without the bubbles.
    pub const DIM_LINEAR_NORMAL: usize = 9;

    /// Parameters ordered `(v, ∂x v, ∂y v)` per vertex, then the bubbles.
    pub fn from_coeffs(c: &[f64]) -> Self {
        let mut t = Self::default();
        for k in 0..3 {
            t.values[k] = c[3 * k];
            t.grads[k] = [c[3 * k + 1], c[3 * k + 2]];
            if c.len() > 9 {
                t.bubbles[k] = c[9 + k];
            }
        }
        t
    }

    pub fn unit(i: usize) -> Self {
        let mut c = [0.0; 12];
        c[i] = 1.0;
        Self::from_coeffs(&c)
    }

    /// Samples the vertex data of a smooth function.
    pub fn from_poly(tri: &[[f64; 2]; 3], z: &Poly) -> Self {
        let g = grad(z);
        Self {
            values: tri.map(|p| z.eval(p[0], p[1])),
            grads: tri.map(|p| g.eval(p[0], p[1])),
            bubbles: [0.0; 3],
        }
    }
}

/// Trace restricted to one edge, parametrised by `s ∈ [0, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct EdgeTrace {
    /// Monomial coefficients of `v(s)`.
    pub value: [f64; 4],
    /// Monomial coefficients of `∂_n v(s)`.
    pub normal: [f64; 3],
    pub frame: EdgeFrame,
}

impl EdgeTrace {
    pub fn value(&self, s: f64) -> f64 {
        let c = &self.value;
        c[0] + s * (c[1] + s * (c[2] + s * c[3]))
    }

    pub fn normal_derivative(&self, s: f64) -> f64 {
        let c = &self.normal;
        c[0] + s * (c[1] + s * c[2])
    }

    pub fn tangential_derivative(&self, s: f64) -> f64 {
        let c = &self.value;
        (c[1] + s * (2.0 * c[2] + 3.0 * s * c[3])) / self.frame.length
    }

    pub fn gradient(&self, s: f64) -> [f64; 2] {
        let (t, n) = (self.frame.tangent, self.frame.normal);
        let dt = self.tangential_derivative(s);
        let dn = self.normal_derivative(s);
        [t[0] * dt + n[0] * dn, t[1] * dt + n[1] * dn]
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        let f = &self.frame;
        [f.start[0] + s * (f.end[0] - f.start[0]), f.start[1] + s * (f.end[1] - f.start[1])]
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Restriction of a boundary trace to local edge `k` of the element `tri`.
pub fn edge_trace(trace: &BoundaryTraceP32, tri: &[[f64; 2]; 3], k: usize) -> EdgeTrace {
    let frame = edge_frame_of(tri, k);
    let (a, b) = (k, (k + 1) % 3);
    let (va, vb) = (trace.values[a], trace.values[b]);
    let ta = frame.length * dot(trace.grads[a], frame.tangent);
    let tb = frame.length * dot(trace.grads[b], frame.tangent);
    // cubic Hermite basis 1−3s²+2s³, s−2s²+s³, 3s²−2s³, −s²+s³
    let value = [va, ta, -3.0 * va - 2.0 * ta + 3.0 * vb - tb, 2.0 * va + ta - 2.0 * vb + tb];
    let na = dot(trace.grads[a], frame.normal);
    let nb = dot(trace.grads[b], frame.normal);
    let c = trace.bubbles[k];
    let normal = [na, nb - na + 4.0 * c, -4.0 * c];
    EdgeTrace { value, normal, frame }
}

fn rule() -> QuadratureRule {
    edge_quadrature(DEFAULT_EDGE_DEGREE.max(12)).expect("supported")
}

/// `∮_{∂T} (n·τ) v − (Ξ n)·∇v` for a boundary trace `v`.
pub fn pair_uhat_divdiv_vector(trace: &BoundaryTraceP32, tri: &[[f64; 2]; 3], xi: &SymPoly, tau: &VecPoly) -> f64 {
    let q = rule();
    let mut s = 0.0;
    for k in 0..3 {
        let e = edge_trace(trace, tri, k);
        let n = e.frame.normal;
        for (p, w) in q.points.iter().zip(&q.weights) {
            let x = e.point(p[0]);
            let t = tau.eval(x[0], x[1]);
            let m = xi.eval(x[0], x[1]);
            let mn = [m[0] * n[0] + m[2] * n[1], m[2] * n[0] + m[1] * n[1]];
            s += w * e.frame.length * (dot(n, t) * e.value(p[0]) - dot(mn, e.gradient(p[0])));
        }
    }
    s
}

/// `∮_{∂T} (n·Div Θ) v − (Θ n)·∇v`.
pub fn pair_uhat_divdiv(trace: &BoundaryTraceP32, tri: &[[f64; 2]; 3], theta: &SymPoly) -> f64 {
    pair_uhat_divdiv_vector(trace, tri, theta, &div_tensor(theta))
}

/// Same boundary form with `v` replaced by a smooth function on `T`.
pub fn pair_poly_divdiv_vector(tri: &[[f64; 2]; 3], z: &Poly, xi: &SymPoly, tau: &VecPoly) -> f64 {
    let q = rule();
    let gz = grad(z);
    let mut s = 0.0;
    for k in 0..3 {
        let f = edge_frame_of(tri, k);
        let n = f.normal;
        for (p, w) in q.points.iter().zip(&q.weights) {
            let x = [f.start[0] + p[0] * (f.end[0] - f.start[0]), f.start[1] + p[0] * (f.end[1] - f.start[1])];
            let t = tau.eval(x[0], x[1]);
            let m = xi.eval(x[0], x[1]);
            let mn = [m[0] * n[0] + m[2] * n[1], m[2] * n[0] + m[1] * n[1]];
            s += w * f.length * (dot(n, t) * z.eval(x[0], x[1]) - dot(mn, gz.eval(x[0], x[1])));
        }
    }
    s
}

pub fn pair_poly_divdiv(tri: &[[f64; 2]; 3], z: &Poly, theta: &SymPoly) -> f64 {
    pair_poly_divdiv_vector(tri, z, theta, &div_tensor(theta))
}

/// The nine dual functionals `q_j(z)` on the element `tri`: vertex values,
/// edge means and edge integrals of the outward normal derivative.
pub fn qhat_functionals(tri: &[[f64; 2]; 3], z: &Poly) -> [f64; 9] {
    let q = rule();
    let gz = grad(z);
    let mut out = [0.0; 9];
    for k in 0..3 {
        out[k] = z.eval(tri[k][0], tri[k][1]);
        let f = edge_frame_of(tri, k);
        let (mut mean, mut nder) = (0.0, 0.0);
        for (p, w) in q.points.iter().zip(&q.weights) {
            let x = [f.start[0] + p[0] * (f.end[0] - f.start[0]), f.start[1] + p[0] * (f.end[1] - f.start[1])];
            mean += w * z.eval(x[0], x[1]);
            nder += w * f.length * dot(f.normal, gz.eval(x[0], x[1]));
        }
        out[3 + k] = mean;
        out[6 + k] = nder;
    }
    out
}

/// `⟨q̂, z⟩_{∂T} = Σ_j c_j q_j(z)`.
pub fn pair_qhat(coeffs: &[f64; 9], tri: &[[f64; 2]; 3], z: &Poly) -> f64 {
    qhat_functionals(tri, z).iter().zip(coeffs).map(|(a, b)| a * b).sum()
}

/// Sparse rows over the `9 #T` local moment-trace coefficients.
#[derive(Clone, Debug)]
pub struct ConstraintMatrix {
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

/// Local coefficient slot of vertex `k`, edge-mean `k` and edge-normal `k`.
pub const fn vertex_slot(t: usize, k: usize) -> usize {
    9 * t + k
}
pub const fn mean_slot(t: usize, k: usize) -> usize {
    9 * t + 3 + k
}
pub const fn normal_slot(t: usize, k: usize) -> usize {
    9 * t + 6 + k
}

/// Gluing conditions of `Q̂_S`: for every interior edge the two edge means
/// sum to zero and the two normal coefficients agree; for every interior
/// vertex the vertex coefficients of its triangles sum to zero.
pub fn assemble_qhat_constraints(mesh: &Mesh) -> ConstraintMatrix {
    let mut rows = Vec::new();
    for e in 0..mesh.n_edges() {
        if let [Some((t0, k0)), Some((t1, k1))] = mesh.edge_triangles(e) {
            let (k0, k1) = (k0 as usize, k1 as usize);
            rows.push(vec![(mean_slot(t0, k0), 1.0), (mean_slot(t1, k1), 1.0)]);
            rows.push(vec![(normal_slot(t0, k0), 1.0), (normal_slot(t1, k1), -1.0)]);
        }
    }
    for (v, star) in vertex_stars(mesh).iter().enumerate() {
        if !mesh.is_boundary_vertex(v) {
            rows.push(star.iter().map(|&(t, k)| (vertex_slot(t, k), 1.0)).collect());
        }
    }
    ConstraintMatrix { n_cols: 9 * mesh.n_triangles(), rows }
}

/// `(triangle, local vertex)` incidences of every vertex, in triangle order.
pub fn vertex_stars(mesh: &Mesh) -> Vec<Vec<(usize, usize)>> {
    let mut stars = vec![Vec::new(); mesh.n_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for (k, &v) in tri.iter().enumerate() {
            stars[v].push((t, k));
        }
    }
    stars
}

/// Explicit basis of the constraint null space: each local slot is a
/// combination of global `Q̂_S` unknowns.
#[derive(Clone, Debug)]
pub struct QhatSpace {
    pub dim: usize,
    /// `slots[9 t + j]` lists `(global dof, coefficient)`.
    pub slots: Vec<Vec<(usize, f64)>>,
}

impl QhatSpace {
    pub fn new(mesh: &Mesh) -> Self {
        let mut slots = vec![Vec::new(); 9 * mesh.n_triangles()];
        let mut dim = 0;
        for e in 0..mesh.n_edges() {
            let adj = mesh.edge_triangles(e);
            let (t0, k0) = adj[0].expect("every edge has a triangle");
            slots[mean_slot(t0, k0 as usize)].push((dim, 1.0));
            slots[normal_slot(t0, k0 as usize)].push((dim + 1, 1.0));
            if let Some((t1, k1)) = adj[1] {
                slots[mean_slot(t1, k1 as usize)].push((dim, -1.0));
                slots[normal_slot(t1, k1 as usize)].push((dim + 1, 1.0));
            }
            dim += 2;
        }
        for (v, star) in vertex_stars(mesh).iter().enumerate() {
            if mesh.is_boundary_vertex(v) {
                for &(t, k) in star {
                    slots[vertex_slot(t, k)].push((dim, 1.0));
                    dim += 1;
                }
            } else {
                // differences of consecutive star members keep the basis sparse
                for pair in star.windows(2) {
                    slots[vertex_slot(pair[1].0, pair[1].1)].push((dim, 1.0));
                    slots[vertex_slot(pair[0].0, pair[0].1)].push((dim, -1.0));
                    dim += 1;
                }
            }
        }
        Self { dim, slots }
    }

    /// Local coefficients of element `t` for a global coefficient vector.
    pub fn local(&self, t: usize, global: &[f64]) -> [f64; 9] {
        let mut c = [0.0; 9];
        for (j, cj) in c.iter_mut().enumerate() {
            *cj = self.slots[9 * t + j].iter().map(|&(g, w)| w * global[g]).sum();
        }
        c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofCounts {
    pub uhat: usize,
    pub qhat: usize,
    pub field: usize,
}

impl DofCounts {
    pub fn total(&self) -> usize {
        self.uhat + self.qhat + self.field
    }
}

pub fn count_dofs(mesh: &Mesh, scheme: SchemeKind) -> DofCounts {
    DofCounts {
        uhat: 3 * mesh.n_interior_vertices(),
        qhat: 2 * mesh.n_edges() + 3 * mesh.n_triangles() - mesh.n_interior_vertices(),
        field: scheme.fields_per_element() * mesh.n_triangles(),
    }
}

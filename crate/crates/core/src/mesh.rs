//! Conforming triangulations with newest-vertex bisection.
//!
//! Triangles are stored counterclockwise together with the local index `k`
//! of their refinement edge, where local edge `k` joins vertex `k` to vertex
//! `k + 1 (mod 3)`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("triangle {0} is degenerate")]
    Degenerate(usize),
    #[error("triangle {0} is oriented clockwise")]
    Clockwise(usize),
    #[error("triangle {0} references a missing vertex")]
    MissingVertex(usize),
    #[error("edge ({0}, {1}) is shared inconsistently")]
    InconsistentEdge(usize, usize),
    #[error("vertex {vertex} hangs on edge ({a}, {b})")]
    HangingVertex { vertex: usize, a: usize, b: usize },
    #[error("seed triangles cover area {covered} but the polygon has area {polygon}")]
    NotCovering { covered: f64, polygon: f64 },
}

/// Affine map `F(x̂) = B x̂ + a` from the reference triangle onto an element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub b: [[f64; 2]; 2],
    pub a: [f64; 2],
    /// `det B`.
    pub j: f64,
    /// Longest edge length.
    pub h: f64,
}

impl AffineMap {
    /// Map sending the reference vertices `(0,0), (1,0), (0,1)` to `v`.
    /// Orientation is not checked; see [`AffineMap::from_triangle`].
    pub fn from_vertices(v: &[[f64; 2]; 3]) -> Self {
        let (b, a) = crate::poly::triangle_frame(v);
        let j = b[0][0] * b[1][1] - b[0][1] * b[1][0];
        let h = (0..3).map(|k| dist(v[k], v[(k + 1) % 3])).fold(0.0, f64::max);
        Self { b, a, j, h }
    }

    /// Like [`AffineMap::from_vertices`] but rejects non-positive orientation.
    pub fn from_triangle(v: &[[f64; 2]; 3]) -> Result<Self, MeshError> {
        let m = Self::from_vertices(v);
        if m.j.abs() <= 1e-14 * m.h * m.h || !m.j.is_finite() {
            return Err(MeshError::Degenerate(0));
        }
        if m.j < 0.0 {
            return Err(MeshError::Clockwise(0));
        }
        Ok(m)
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.b[0][0] * p[0] + self.b[0][1] * p[1] + self.a[0],
            self.b[1][0] * p[0] + self.b[1][1] * p[1] + self.a[1],
        ]
    }

    pub fn b_inv(&self) -> [[f64; 2]; 2] {
        let b = &self.b;
        [[b[1][1] / self.j, -b[0][1] / self.j], [-b[1][0] / self.j, b[0][0] / self.j]]
    }

    /// Inverse map as `(B⁻¹, -B⁻¹ a)`.
    pub fn inverse(&self) -> ([[f64; 2]; 2], [f64; 2]) {
        let bi = self.b_inv();
        let a = [-(bi[0][0] * self.a[0] + bi[0][1] * self.a[1]), -(bi[1][0] * self.a[0] + bi[1][1] * self.a[1])];
        (bi, a)
    }
}

/// Geometry of one element edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeFrame {
    /// Unit outward normal.
    pub normal: [f64; 2],
    /// Unit tangent, the normal rotated by +90°.
    pub tangent: [f64; 2],
    pub length: f64,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

/// Frame of local edge `k` of the counterclockwise triangle `v`.
pub fn edge_frame_of(v: &[[f64; 2]; 3], k: usize) -> EdgeFrame {
    let start = v[k];
    let end = v[(k + 1) % 3];
    let length = dist(start, end);
    let tangent = [(end[0] - start[0]) / length, (end[1] - start[1]) / length];
    EdgeFrame { normal: [tangent[1], -tangent[0]], tangent, length, start, end }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Polygon plus a seed triangulation of it.
#[derive(Clone, Debug)]
pub struct Seed {
    pub polygon: Vec<[f64; 2]>,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
}

impl Seed {
    /// Unit square split along the diagonal `(0,0)–(1,1)`.
    pub fn unit_square() -> Self {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        Self { polygon: v.clone(), vertices: v, triangles: vec![[0, 1, 2], [0, 2, 3]] }
    }

    /// Unit square with four triangles meeting at its centre.
    pub fn criss_cross_square() -> Self {
        let mut v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let polygon = v.clone();
        v.push([0.5, 0.5]);
        Self { polygon, vertices: v, triangles: vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]] }
    }

    /// The square `(-1,1)²` minus the wedge of opening `3π/4` around the
    /// negative x-axis. The reentrant corner sits at the origin and the
    /// domain opening there is `5π/4`.
    pub fn reentrant_pentagon() -> Self {
        let t = (std::f64::consts::PI / 8.0).tan();
        let v = vec![[0.0, 0.0], [-t, -1.0], [1.0, -1.0], [1.0, 1.0], [-t, 1.0]];
        Self { polygon: v.clone(), vertices: v, triangles: vec![[0, 1, 2], [0, 2, 3], [0, 3, 4]] }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    refedge: Vec<u8>,
    edges: Vec<[usize; 2]>,
    /// Adjacent `(triangle, local edge)`; the second slot is empty on Γ.
    edge_tris: Vec<[Option<(usize, u8)>; 2]>,
    tri_edges: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    interior_index: Vec<Option<usize>>,
    n_interior: usize,
    parent: Vec<usize>,
}

/// Builds a mesh from a seed and checks that it covers the polygon.
pub fn build_initial_mesh(seed: &Seed) -> Result<Mesh, MeshError> {
    let mesh = Mesh::new(seed.vertices.clone(), seed.triangles.clone())?;
    let n = seed.polygon.len();
    let polygon: f64 = (0..n)
        .map(|k| {
            let a = seed.polygon[k];
            let b = seed.polygon[(k + 1) % n];
            0.5 * (a[0] * b[1] - a[1] * b[0])
        })
        .sum::<f64>()
        .abs();
    let covered = mesh.total_area();
    if (covered - polygon).abs() > 1e-12 * polygon {
        return Err(MeshError::NotCovering { covered, polygon });
    }
    Ok(mesh)
}

impl Mesh {
    /// Builds topology and assigns longest-edge refinement tags (ties go to
    /// the edge whose opposite vertex has the smallest index).
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let mut refedge = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(MeshError::MissingVertex(t));
            }
            let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let len: Vec<f64> = (0..3).map(|k| dist(p[k], p[(k + 1) % 3])).collect();
            let area = signed_area(p[0], p[1], p[2]);
            let hmax = len.iter().cloned().fold(0.0, f64::max);
            if area.abs() <= 1e-14 * hmax * hmax {
                return Err(MeshError::Degenerate(t));
            }
            if area < 0.0 {
                return Err(MeshError::Clockwise(t));
            }
            let mut best = 0;
            for k in 1..3 {
                let longer = len[k] > len[best] * (1.0 + 1e-12);
                let tie = (len[k] - len[best]).abs() <= 1e-12 * len[best];
                if longer || (tie && tri[(k + 2) % 3] < tri[(best + 2) % 3]) {
                    best = k;
                }
            }
            refedge.push(best as u8);
        }
        let mesh = Self::with_tags(vertices, triangles, refedge, None)?;
        mesh.check_hanging()?;
        Ok(mesh)
    }

    fn with_tags(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        refedge: Vec<u8>,
        parent: Option<Vec<usize>>,
    ) -> Result<Self, MeshError> {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<[Option<(usize, u8)>; 2]> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let e = *lookup.entry(key(a, b)).or_insert_with(|| {
                    edges.push([a.min(b), a.max(b)]);
                    edge_tris.push([None, None]);
                    edges.len() - 1
                });
                match edge_tris[e] {
                    [None, _] => edge_tris[e][0] = Some((t, k as u8)),
                    [Some((t0, k0)), None] => {
                        // a conforming neighbour traverses the edge the other way
                        if triangles[t0][k0 as usize] != b {
                            return Err(MeshError::InconsistentEdge(a, b));
                        }
                        edge_tris[e][1] = Some((t, k as u8));
                    }
                    _ => return Err(MeshError::InconsistentEdge(a, b)),
                }
                te[k] = e;
            }
            tri_edges.push(te);
        }
        let mut boundary_vertex = vec![false; vertices.len()];
        for (e, adj) in edge_tris.iter().enumerate() {
            if adj[1].is_none() {
                boundary_vertex[edges[e][0]] = true;
                boundary_vertex[edges[e][1]] = true;
            }
        }
        let mut interior_index = vec![None; vertices.len()];
        let mut n_interior = 0;
        for (v, b) in boundary_vertex.iter().enumerate() {
            if !b {
                interior_index[v] = Some(n_interior);
                n_interior += 1;
            }
        }
        let parent = parent.unwrap_or_else(|| (0..triangles.len()).collect());
        Ok(Self {
            vertices,
            triangles,
            refedge,
            edges,
            edge_tris,
            tri_edges,
            boundary_vertex,
            interior_index,
            n_interior,
            parent,
        })
    }

    fn check_hanging(&self) -> Result<(), MeshError> {
        for (e, adj) in self.edge_tris.iter().enumerate() {
            if adj[1].is_some() {
                continue;
            }
            let [a, b] = self.edges[e];
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let len = dist(pa, pb);
            for (v, p) in self.vertices.iter().enumerate() {
                if v == a || v == b {
                    continue;
                }
                let area = signed_area(pa, pb, *p).abs();
                let s = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1])) / (len * len);
                if area <= 1e-12 * len * len && s > 1e-12 && s < 1.0 - 1e-12 {
                    return Err(MeshError::HangingVertex { vertex: v, a, b });
                }
            }
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_interior_vertices(&self) -> usize {
        self.n_interior
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn refinement_edge(&self, t: usize) -> usize {
        self.refedge[t] as usize
    }

    /// Global edge ids of the three local edges of `t`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    /// `(triangle, local edge)` pairs adjacent to edge `e`.
    pub fn edge_triangles(&self, e: usize) -> [Option<(usize, u8)>; 2] {
        self.edge_tris[e]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_tris[e][1].is_none()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Position of `v` among interior vertices, if interior.
    pub fn interior_index(&self, v: usize) -> Option<usize> {
        self.interior_index[v]
    }

    /// Index in the previous mesh of the element each triangle came from.
    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    pub fn triangle_vertices(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    pub fn affine_map(&self, t: usize) -> Result<AffineMap, MeshError> {
        AffineMap::from_triangle(&self.triangle_vertices(t)).map_err(|e| match e {
            MeshError::Degenerate(_) => MeshError::Degenerate(t),
            MeshError::Clockwise(_) => MeshError::Clockwise(t),
            other => other,
        })
    }

    pub fn edge_frame(&self, t: usize, k: usize) -> EdgeFrame {
        edge_frame_of(&self.triangle_vertices(t), k)
    }

    pub fn area(&self, t: usize) -> f64 {
        let v = self.triangle_vertices(t);
        signed_area(v[0], v[1], v[2])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let v = self.triangle_vertices(t);
        [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0]
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let v = self.triangle_vertices(t);
        (0..3).map(|k| dist(v[k], v[(k + 1) % 3])).fold(0.0, f64::max)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut m = f64::INFINITY;
        for t in 0..self.n_triangles() {
            let v = self.triangle_vertices(t);
            for k in 0..3 {
                let a = v[k];
                let b = v[(k + 1) % 3];
                let c = v[(k + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let w = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * w[0] + u[1] * w[1]) / (dist(a, b) * dist(a, c));
                m = m.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        m
    }

    /// Newest-vertex bisection: every marked triangle is bisected at least
    /// once, and the closure keeps the mesh conforming.
    pub fn refine(&self, marked: &[usize]) -> Mesh {
        let mut edges = HashSet::new();
        for &t in marked {
            edges.insert(self.tri_edges[t][self.refedge[t] as usize]);
        }
        self.bisect_marked(edges)
    }

    /// Uniform rule: all edges marked, so each triangle splits into four
    /// children of equal area.
    pub fn refine_uniform(&self) -> Mesh {
        self.bisect_marked((0..self.n_edges()).collect())
    }

    fn bisect_marked(&self, mut marked: HashSet<usize>) -> Mesh {
        // closure: a triangle with any marked edge needs its refinement edge marked
        let mut queue: VecDeque<usize> = marked.iter().copied().collect();
        while let Some(e) = queue.pop_front() {
            for (t, _) in self.edge_tris[e].iter().flatten() {
                let r = self.tri_edges[*t][self.refedge[*t] as usize];
                if marked.insert(r) {
                    queue.push_back(r);
                }
            }
        }
        let marked_keys: HashSet<(usize, usize)> =
            marked.iter().map(|&e| (self.edges[e][0], self.edges[e][1])).collect();
        let mut vertices = self.vertices.clone();
        let mut mids = HashMap::new();
        let mut out = Vec::with_capacity(self.n_triangles() + 2 * marked.len());
        for t in 0..self.n_triangles() {
            bisect(self.triangles[t], self.refedge[t], t, &marked_keys, &mut mids, &mut vertices, &mut out);
        }
        let triangles = out.iter().map(|o| o.0).collect();
        let refedge = out.iter().map(|o| o.1).collect();
        let parent = out.iter().map(|o| o.2).collect();
        Self::with_tags(vertices, triangles, refedge, Some(parent)).expect("bisection preserves conformity")
    }

    /// Plain-text dump: header `N E T`, vertex lines `x y boundary`, then
    /// triangle lines `v0 v1 v2 refedge`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.n_vertices(), self.n_edges(), self.n_triangles());
        for (v, p) in self.vertices.iter().enumerate() {
            let _ = writeln!(s, "{:.17e} {:.17e} {}", p[0], p[1], u8::from(self.boundary_vertex[v]));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            let _ = writeln!(s, "{} {} {} {}", tri[0], tri[1], tri[2], self.refedge[t]);
        }
        s
    }
}

type Child = ([usize; 3], u8, usize);

fn bisect(
    tri: [usize; 3],
    re: u8,
    ancestor: usize,
    marked: &HashSet<(usize, usize)>,
    mids: &mut HashMap<(usize, usize), usize>,
    vertices: &mut Vec<[f64; 2]>,
    out: &mut Vec<Child>,
) {
    let k = re as usize;
    let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
    if !marked.contains(&key(a, b)) {
        out.push((tri, re, ancestor));
        return;
    }
    let m = *mids.entry(key(a, b)).or_insert_with(|| {
        let (pa, pb) = (vertices[a], vertices[b]);
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        vertices.len() - 1
    });
    bisect([a, m, c], 2, ancestor, marked, mids, vertices, out);
    bisect([m, b, c], 1, ancestor, marked, mids, vertices, out);
}

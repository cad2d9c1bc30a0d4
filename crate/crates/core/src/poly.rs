//! Bivariate polynomials, field operators, reference bases and quadrature.
//!
//! A [`Poly`] stores dense monomial coefficients `x^i y^j` ordered by total
//! degree, so the coefficient of `x^(d-j) y^j` sits at `d(d+1)/2 + j`.
//! Symmetric tensors are stored as `(xx, yy, xy)` and paired with the
//! doubled off-diagonal weight `a_xx b_xx + a_yy b_yy + 2 a_xy b_xy`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("quadrature exactness {0} is not supported (maximum 12)")]
    UnsupportedDegree(usize),
}

/// Number of monomials of total degree at most `p`.
pub const fn dim(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

/// Position of `x^i y^j` in the coefficient vector.
pub const fn index(i: usize, j: usize) -> usize {
    let d = i + j;
    d * (d + 1) / 2 + j
}

/// Exponents `(i, j)` of the monomial stored at position `k`.
pub fn exponents(k: usize) -> (usize, usize) {
    let mut d = 0;
    while dim(d) <= k {
        d += 1;
    }
    let j = k - d * (d + 1) / 2;
    (d - j, j)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `∫_T̂ x^i y^j` over the reference triangle `conv{(0,0),(1,0),(0,1)}`.
pub fn monomial_integral(i: usize, j: usize) -> f64 {
    factorial(i) * factorial(j) / factorial(i + j + 2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    deg: usize,
    c: Vec<f64>,
}

impl Poly {
    pub fn zero(deg: usize) -> Self {
        Self { deg, c: vec![0.0; dim(deg)] }
    }

    pub fn constant(v: f64) -> Self {
        Self { deg: 0, c: vec![v] }
    }

    pub fn monomial(i: usize, j: usize) -> Self {
        let mut p = Self::zero(i + j);
        p.c[index(i, j)] = 1.0;
        p
    }

    pub fn x() -> Self {
        Self::monomial(1, 0)
    }

    pub fn y() -> Self {
        Self::monomial(0, 1)
    }

    /// `a0 + a1 x + a2 y`.
    pub fn affine(a0: f64, a1: f64, a2: f64) -> Self {
        Self { deg: 1, c: vec![a0, a1, a2] }
    }

    /// # Panics
    /// If `c.len() != dim(deg)`.
    pub fn from_coeffs(deg: usize, c: Vec<f64>) -> Self {
        assert_eq!(c.len(), dim(deg), "coefficient count does not match degree");
        Self { deg, c }
    }

    pub fn degree(&self) -> usize {
        self.deg
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i + j > self.deg {
            0.0
        } else {
            self.c[index(i, j)]
        }
    }

    pub fn set_coeff(&mut self, i: usize, j: usize, v: f64) {
        if i + j > self.deg {
            *self = self.raised(i + j);
        }
        self.c[index(i, j)] = v;
    }

    /// Same polynomial stored with nominal degree `deg` (which must not lose terms).
    pub fn raised(&self, deg: usize) -> Self {
        let mut out = Self::zero(deg.max(self.deg));
        out.c[..self.c.len()].copy_from_slice(&self.c);
        out
    }

    /// Smallest nominal degree that keeps all coefficients above `tol`.
    pub fn trimmed(&self, tol: f64) -> Self {
        let mut d = self.deg;
        while d > 0 && self.c[dim(d - 1)..dim(d)].iter().all(|v| v.abs() <= tol) {
            d -= 1;
        }
        Self { deg: d, c: self.c[..dim(d)].to_vec() }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.c.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut xp = [1.0; 16];
        let mut yp = [1.0; 16];
        for k in 1..=self.deg {
            xp[k] = xp[k - 1] * x;
            yp[k] = yp[k - 1] * y;
        }
        let mut s = 0.0;
        let mut k = 0;
        for d in 0..=self.deg {
            for j in 0..=d {
                s += self.c[k] * xp[d - j] * yp[j];
                k += 1;
            }
        }
        s
    }

    pub fn dx(&self) -> Self {
        if self.deg == 0 {
            return Self::zero(0);
        }
        let mut out = Self::zero(self.deg - 1);
        for d in 1..=self.deg {
            for j in 0..d {
                let i = d - j;
                out.c[index(i - 1, j)] = i as f64 * self.c[index(i, j)];
            }
        }
        out
    }

    pub fn dy(&self) -> Self {
        if self.deg == 0 {
            return Self::zero(0);
        }
        let mut out = Self::zero(self.deg - 1);
        for d in 1..=self.deg {
            for j in 1..=d {
                let i = d - j;
                out.c[index(i, j - 1)] = j as f64 * self.c[index(i, j)];
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { deg: self.deg, c: self.c.iter().map(|v| v * s).collect() }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Poly) {
        if other.deg > self.deg {
            *self = self.raised(other.deg);
        }
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += s * b;
        }
    }

    /// Exact integral over the reference triangle.
    pub fn integrate_ref(&self) -> f64 {
        let mut s = 0.0;
        for (k, v) in self.c.iter().enumerate() {
            if *v != 0.0 {
                let (i, j) = exponents(k);
                s += v * monomial_integral(i, j);
            }
        }
        s
    }

    /// Exact integral over the triangle with vertices `tri` (any orientation).
    pub fn integrate_over(&self, tri: &[[f64; 2]; 3]) -> f64 {
        let (b, a) = triangle_frame(tri);
        let det = (b[0][0] * b[1][1] - b[0][1] * b[1][0]).abs();
        det * self.compose_affine(&b, &a).integrate_ref()
    }

    /// `q(x) = p(B x + a)`.
    pub fn compose_affine(&self, b: &[[f64; 2]; 2], a: &[f64; 2]) -> Self {
        let lx = Poly::affine(a[0], b[0][0], b[0][1]);
        let ly = Poly::affine(a[1], b[1][0], b[1][1]);
        let mut xp = vec![Poly::constant(1.0)];
        let mut yp = vec![Poly::constant(1.0)];
        for k in 1..=self.deg {
            xp.push(&xp[k - 1] * &lx);
            yp.push(&yp[k - 1] * &ly);
        }
        let mut out = Self::zero(self.deg);
        for d in 0..=self.deg {
            for j in 0..=d {
                let v = self.c[index(d - j, j)];
                if v != 0.0 {
                    out.axpy(v, &(&xp[d - j] * &yp[j]));
                }
            }
        }
        out
    }

    /// Restriction to the segment `p0 + s (p1 - p0)` as coefficients in `s`.
    pub fn restrict_to_segment(&self, p0: [f64; 2], p1: [f64; 2]) -> Vec<f64> {
        let b = [[p1[0] - p0[0], 0.0], [p1[1] - p0[1], 0.0]];
        let q = self.compose_affine(&b, &p0);
        (0..=self.deg).map(|i| q.coeff(i, 0)).collect()
    }
}

/// Matrix `B` (columns `v1 - v0`, `v2 - v0`) and offset `v0` of the affine
/// map from the reference triangle onto `tri`.
pub fn triangle_frame(tri: &[[f64; 2]; 3]) -> ([[f64; 2]; 2], [f64; 2]) {
    let b = [
        [tri[1][0] - tri[0][0], tri[2][0] - tri[0][0]],
        [tri[1][1] - tri[0][1], tri[2][1] - tri[0][1]],
    ];
    (b, tri[0])
}

pub const REFERENCE_TRIANGLE: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero(self.deg + rhs.deg);
        for (ka, va) in self.c.iter().enumerate() {
            if *va == 0.0 {
                continue;
            }
            let (ia, ja) = exponents(ka);
            for (kb, vb) in rhs.c.iter().enumerate() {
                let (ib, jb) = exponents(kb);
                out.c[index(ia + ib, ja + jb)] += va * vb;
            }
        }
        out
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, rhs: Poly) -> Poly {
        &self + &rhs
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        &self - &rhs
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        &self * &rhs
    }
}

impl AddAssign<&Poly> for Poly {
    fn add_assign(&mut self, rhs: &Poly) {
        self.axpy(1.0, rhs);
    }
}

/// Vector field with polynomial components.
#[derive(Clone, Debug, PartialEq)]
pub struct VecPoly {
    pub x: Poly,
    pub y: Poly,
}

/// Symmetric tensor field `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymPoly {
    pub xx: Poly,
    pub yy: Poly,
    pub xy: Poly,
}

impl VecPoly {
    pub fn new(x: Poly, y: Poly) -> Self {
        Self { x, y }
    }

    pub fn zero(deg: usize) -> Self {
        Self { x: Poly::zero(deg), y: Poly::zero(deg) }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        [self.x.eval(x, y), self.y.eval(x, y)]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { x: self.x.scale(s), y: self.y.scale(s) }
    }

    pub fn axpy(&mut self, s: f64, o: &VecPoly) {
        self.x.axpy(s, &o.x);
        self.y.axpy(s, &o.y);
    }

    pub fn sub(&self, o: &VecPoly) -> Self {
        Self { x: &self.x - &o.x, y: &self.y - &o.y }
    }

    pub fn dot(&self, o: &VecPoly) -> Poly {
        &(&self.x * &o.x) + &(&self.y * &o.y)
    }

    pub fn compose_affine(&self, b: &[[f64; 2]; 2], a: &[f64; 2]) -> Self {
        Self { x: self.x.compose_affine(b, a), y: self.y.compose_affine(b, a) }
    }

    /// `M v` for a constant matrix.
    pub fn transform(&self, m: &[[f64; 2]; 2]) -> Self {
        let mut x = self.x.scale(m[0][0]);
        x.axpy(m[0][1], &self.y);
        let mut y = self.x.scale(m[1][0]);
        y.axpy(m[1][1], &self.y);
        Self { x, y }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.x.max_abs_coeff().max(self.y.max_abs_coeff())
    }
}

impl SymPoly {
    pub fn new(xx: Poly, yy: Poly, xy: Poly) -> Self {
        Self { xx, yy, xy }
    }

    pub fn zero(deg: usize) -> Self {
        Self { xx: Poly::zero(deg), yy: Poly::zero(deg), xy: Poly::zero(deg) }
    }

    /// Constant tensor from components `(xx, yy, xy)`.
    pub fn constant(c: [f64; 3]) -> Self {
        Self { xx: Poly::constant(c[0]), yy: Poly::constant(c[1]), xy: Poly::constant(c[2]) }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f64; 3] {
        [self.xx.eval(x, y), self.yy.eval(x, y), self.xy.eval(x, y)]
    }

    pub fn components(&self) -> [&Poly; 3] {
        [&self.xx, &self.yy, &self.xy]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { xx: self.xx.scale(s), yy: self.yy.scale(s), xy: self.xy.scale(s) }
    }

    pub fn axpy(&mut self, s: f64, o: &SymPoly) {
        self.xx.axpy(s, &o.xx);
        self.yy.axpy(s, &o.yy);
        self.xy.axpy(s, &o.xy);
    }

    pub fn sub(&self, o: &SymPoly) -> Self {
        Self { xx: &self.xx - &o.xx, yy: &self.yy - &o.yy, xy: &self.xy - &o.xy }
    }

    /// Pointwise `A : B` with the doubled off-diagonal weight.
    pub fn ddot(&self, o: &SymPoly) -> Poly {
        let mut p = &self.xx * &o.xx;
        p += &(&self.yy * &o.yy);
        p.axpy(2.0, &(&self.xy * &o.xy));
        p
    }

    /// `Θ n` for a constant vector `n`.
    pub fn apply(&self, n: [f64; 2]) -> VecPoly {
        let mut x = self.xx.scale(n[0]);
        x.axpy(n[1], &self.xy);
        let mut y = self.xy.scale(n[0]);
        y.axpy(n[1], &self.yy);
        VecPoly { x, y }
    }

    pub fn compose_affine(&self, b: &[[f64; 2]; 2], a: &[f64; 2]) -> Self {
        Self {
            xx: self.xx.compose_affine(b, a),
            yy: self.yy.compose_affine(b, a),
            xy: self.xy.compose_affine(b, a),
        }
    }

    /// `M S Mᵀ` for a constant matrix `M`.
    pub fn congruence(&self, m: &[[f64; 2]; 2]) -> Self {
        // (M S Mᵀ)_ab = Σ_cd M_ac S_cd M_bd
        let comp = |a: usize, b: usize| {
            let s = |c: usize, d: usize| match (c, d) {
                (0, 0) => &self.xx,
                (1, 1) => &self.yy,
                _ => &self.xy,
            };
            let mut out = Poly::zero(self.xx.degree().max(self.yy.degree()).max(self.xy.degree()));
            for c in 0..2 {
                for d in 0..2 {
                    let w = m[a][c] * m[b][d];
                    if w != 0.0 {
                        out.axpy(w, s(c, d));
                    }
                }
            }
            out
        };
        Self { xx: comp(0, 0), yy: comp(1, 1), xy: comp(0, 1) }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.xx.max_abs_coeff().max(self.yy.max_abs_coeff()).max(self.xy.max_abs_coeff())
    }
}

pub fn grad(z: &Poly) -> VecPoly {
    VecPoly { x: z.dx(), y: z.dy() }
}

/// Hessian `ε∇z` of a scalar.
pub fn hessian(z: &Poly) -> SymPoly {
    let zx = z.dx();
    let zy = z.dy();
    SymPoly { xx: zx.dx(), yy: zy.dy(), xy: zx.dy() }
}

pub fn div_vector(t: &VecPoly) -> Poly {
    &t.x.dx() + &t.y.dy()
}

/// Row-wise divergence.
pub fn div_tensor(s: &SymPoly) -> VecPoly {
    VecPoly { x: &s.xx.dx() + &s.xy.dy(), y: &s.xy.dx() + &s.yy.dy() }
}

pub fn divdiv_tensor(s: &SymPoly) -> Poly {
    div_vector(&div_tensor(s))
}

/// Tensor inner product of component triples.
pub fn sym_dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + 2.0 * a[2] * b[2]
}

/// `L₂(T̂)`-orthonormal basis of `P^p(T̂)`, ordered by degree so the first
/// `dim(q)` members span `P^q` for every `q ≤ p`.
pub fn orthonormal_basis(p: usize) -> Vec<Poly> {
    let mut basis: Vec<Poly> = Vec::with_capacity(dim(p));
    for k in 0..dim(p) {
        let (i, j) = exponents(k);
        // centred monomials are far better conditioned than raw ones
        let mut v = Poly::constant(1.0);
        for _ in 0..i {
            v = &v * &Poly::affine(-1.0 / 3.0, 1.0, 0.0);
        }
        for _ in 0..j {
            v = &v * &Poly::affine(-1.0 / 3.0, 0.0, 1.0);
        }
        let mut v = v.raised(p);
        for _ in 0..2 {
            for b in &basis {
                let c = (&v * b).integrate_ref();
                v.axpy(-c, b);
            }
        }
        let n = (&v * &v).integrate_ref().sqrt();
        basis.push(v.scale(1.0 / n));
    }
    basis
}

/// Scalar basis of `P^p(T̂)`.
#[derive(Clone, Debug)]
pub struct ScalarBasis {
    pub degree: usize,
    pub funcs: Vec<Poly>,
}

impl ScalarBasis {
    pub fn orthonormal(p: usize) -> Self {
        Self { degree: p, funcs: orthonormal_basis(p) }
    }

    pub fn monomial(p: usize) -> Self {
        Self { degree: p, funcs: (0..dim(p)).map(|k| {
            let (i, j) = exponents(k);
            Poly::monomial(i, j)
        }).collect() }
    }

    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    pub fn eval(&self, pt: [f64; 2]) -> Vec<f64> {
        self.funcs.iter().map(|f| f.eval(pt[0], pt[1])).collect()
    }

    pub fn eval_grad(&self, pt: [f64; 2]) -> Vec<[f64; 2]> {
        self.funcs.iter().map(|f| grad(f).eval(pt[0], pt[1])).collect()
    }

    pub fn eval_hessian(&self, pt: [f64; 2]) -> Vec<[f64; 3]> {
        self.funcs.iter().map(|f| hessian(f).eval(pt[0], pt[1])).collect()
    }
}

/// Symmetric-tensor basis `φ_i E` with `E ∈ {E_xx, E_yy, E_xy/√2}`, which is
/// orthonormal in `L₂ˢ(T̂)` when `φ_i` is.
#[derive(Clone, Debug)]
pub struct SymTensorBasis {
    pub degree: usize,
    pub funcs: Vec<SymPoly>,
}

impl SymTensorBasis {
    pub fn orthonormal(p: usize) -> Self {
        let phi = orthonormal_basis(p);
        let z = Poly::zero(p);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut funcs = Vec::with_capacity(3 * phi.len());
        for f in &phi {
            funcs.push(SymPoly::new(f.clone(), z.clone(), z.clone()));
            funcs.push(SymPoly::new(z.clone(), f.clone(), z.clone()));
            funcs.push(SymPoly::new(z.clone(), z.clone(), f.scale(r)));
        }
        Self { degree: p, funcs }
    }

    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    pub fn eval(&self, pt: [f64; 2]) -> Vec<[f64; 3]> {
        self.funcs.iter().map(|f| f.eval(pt[0], pt[1])).collect()
    }
}

/// Vector basis `φ_i e_x, φ_i e_y`.
pub fn orthonormal_vector_basis(p: usize) -> Vec<VecPoly> {
    let phi = orthonormal_basis(p);
    let z = Poly::zero(p);
    let mut out = Vec::with_capacity(2 * phi.len());
    for f in &phi {
        out.push(VecPoly::new(f.clone(), z.clone()));
        out.push(VecPoly::new(z.clone(), f.clone()));
    }
    out
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    /// Reference-triangle points `(x, y)`, or edge parameters `(s, 0)`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    /// Barycentric coordinates `(1 - x - y, x, y)` of each triangle point.
    pub fn barycentric(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [1.0 - p[0] - p[1], p[0], p[1]]).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Collapsed Gauss rule on the reference triangle, exact up to degree `d ≤ 12`.
pub fn quadrature(d: usize) -> Result<QuadratureRule, PolyError> {
    if d > 12 {
        return Err(PolyError::UnsupportedDegree(d));
    }
    let n = (d + 3) / 2;
    let (s, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (u, wu) in s.iter().zip(&w) {
        for (v, wv) in s.iter().zip(&w) {
            points.push([u * (1.0 - v), *v]);
            weights.push(wu * wv * (1.0 - v));
        }
    }
    Ok(QuadratureRule { points, weights, degree: d })
}

/// Gauss–Legendre rule on `[0, 1]` exact up to degree `d ≤ 12`.
pub fn edge_quadrature(d: usize) -> Result<QuadratureRule, PolyError> {
    if d > 12 {
        return Err(PolyError::UnsupportedDegree(d));
    }
    let (s, w) = gauss_legendre(d / 2 + 1);
    Ok(QuadratureRule { points: s.into_iter().map(|v| [v, 0.0]).collect(), weights: w, degree: d })
}

pub const DEFAULT_VOLUME_DEGREE: usize = 10;
pub const DEFAULT_EDGE_DEGREE: usize = 11;

/// `L₂(T)` projection of `f` onto `P^p(T)`, returned in physical coordinates.
pub fn l2_project(f: &dyn Fn(f64, f64) -> f64, p: usize, tri: &[[f64; 2]; 3]) -> Poly {
    let rule = quadrature(12).expect("degree 12 is supported");
    let (b, a) = triangle_frame(tri);
    let basis = orthonormal_basis(p);
    let mut coef = vec![0.0; basis.len()];
    for (pt, w) in rule.points.iter().zip(&rule.weights) {
        let x = a[0] + b[0][0] * pt[0] + b[0][1] * pt[1];
        let y = a[1] + b[1][0] * pt[0] + b[1][1] * pt[1];
        let fv = f(x, y);
        for (c, phi) in coef.iter_mut().zip(&basis) {
            *c += w * fv * phi.eval(pt[0], pt[1]);
        }
    }
    let mut r = Poly::zero(p);
    for (c, phi) in coef.iter().zip(&basis) {
        r.axpy(*c, phi);
    }
    to_physical(&r, tri)
}

/// Exact `L₂(T)` projection of a polynomial onto `P^p(T)`.
pub fn l2_project_poly(g: &Poly, p: usize, tri: &[[f64; 2]; 3]) -> Poly {
    let (b, a) = triangle_frame(tri);
    let gr = g.compose_affine(&b, &a);
    let mut r = Poly::zero(p);
    for phi in orthonormal_basis(p) {
        let c = (&gr * &phi).integrate_ref();
        r.axpy(c, &phi);
    }
    to_physical(&r, tri)
}

/// Rewrites a polynomial given in reference coordinates of `tri` as a
/// polynomial in physical coordinates.
pub fn to_physical(p_ref: &Poly, tri: &[[f64; 2]; 3]) -> Poly {
    let (b, a) = triangle_frame(tri);
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let bi = [[b[1][1] / det, -b[0][1] / det], [-b[1][0] / det, b[0][0] / det]];
    let ai = [-(bi[0][0] * a[0] + bi[0][1] * a[1]), -(bi[1][0] * a[0] + bi[1][1] * a[1])];
    p_ref.compose_affine(&bi, &ai)
}

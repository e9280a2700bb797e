//! Hilbert metric on properly convex domains in an affine chart, and the
//! Klein model of real hyperbolic space used for shadow and conicality checks.
//!
//! Domains live in the chart `R^m` of `P(R^(m+1))` given by last coordinate 1.
//! Lines through a point `x` in direction `u` are parametrized as `x + t u`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::cartan::{Functional, Matrix, ThetaSet};
use crate::error::{Error, Result};
use crate::matgroup::{map_ball, Presentation};
use crate::patterson::AtomicMeasure;

pub type Point = DVector<f64>;

/// Points closer than this to the boundary (in the defining inequality) are rejected.
const INTERIOR_MARGIN: f64 = 1e-12;
/// Points within this distance of the shadow radius count as inside.
pub const SHADOW_TIE_TOLERANCE: f64 = 1e-9;
const SHADOW_SAMPLES: usize = 512;
const SHADOW_REFINEMENTS: usize = 40;

#[derive(Clone, Debug)]
pub enum ConvexDomain {
    /// `{x : (x - center)^T shape (x - center) < 1}`, `shape` positive definite.
    Ellipsoid { center: Point, shape: Matrix },
    /// Convex hull of `vertices`, described by facets `normal . x <= offset`.
    Polytope { vertices: Vec<Point>, normals: Vec<Point>, offsets: Vec<f64> },
}

impl ConvexDomain {
    /// Unit ball in `R^m`, the Klein model of hyperbolic m-space.
    pub fn klein_ball(m: usize) -> Self {
        ConvexDomain::Ellipsoid { center: Point::zeros(m), shape: Matrix::identity(m, m) }
    }

    pub fn ellipsoid(center: Point, shape: Matrix) -> Result<Self> {
        if shape.nrows() != center.len() || shape.ncols() != center.len() {
            return Err(Error::InvalidInput("ellipsoid shape does not match its center".into()));
        }
        if (&shape - shape.transpose()).amax() > 1e-12 * shape.amax() || shape.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("ellipsoid shape is not symmetric positive definite".into()));
        }
        Ok(ConvexDomain::Ellipsoid { center, shape })
    }

    /// Polytope from its vertices, which must be in convex position.
    pub fn polytope(vertices: Vec<Point>) -> Result<Self> {
        let m = vertices.first().map(|v| v.len()).unwrap_or(0);
        if m == 0 || vertices.len() < m + 1 || vertices.iter().any(|v| v.len() != m) {
            return Err(Error::InvalidInput("polytope needs at least m + 1 points of R^m".into()));
        }
        let scale = vertices.iter().map(|v| v.amax()).fold(1.0, f64::max);
        let tol = 1e-10 * scale;
        let mut normals: Vec<Point> = Vec::new();
        let mut offsets: Vec<f64> = Vec::new();
        for subset in subsets(vertices.len(), m) {
            let Some((normal, offset)) = hyperplane_through(&subset.iter().map(|&i| &vertices[i]).collect::<Vec<_>>()) else {
                continue;
            };
            let sides: Vec<f64> = vertices.iter().map(|v| normal.dot(v) - offset).collect();
            let (normal, offset) = if sides.iter().all(|s| *s <= tol) {
                (normal, offset)
            } else if sides.iter().all(|s| *s >= -tol) {
                (-normal, -offset)
            } else {
                continue;
            };
            let duplicate = normals.iter().zip(&offsets).any(|(n, o)| (n - &normal).amax() < 1e-9 && (o - offset).abs() < tol);
            if !duplicate {
                normals.push(normal);
                offsets.push(offset);
            }
        }
        for v in &vertices {
            let active: Vec<Point> = normals.iter().zip(&offsets).filter(|(n, o)| (n.dot(v) - **o).abs() <= tol).map(|(n, _)| n.clone()).collect();
            let rank = if active.is_empty() { 0 } else { DMatrix::from_columns(&active).rank(1e-9) };
            if rank < m {
                return Err(Error::InvalidInput("polytope vertices are not in convex position".into()));
            }
        }
        Ok(ConvexDomain::Polytope { vertices, normals, offsets })
    }

    pub fn chart_dim(&self) -> usize {
        match self {
            ConvexDomain::Ellipsoid { center, .. } => center.len(),
            ConvexDomain::Polytope { vertices, .. } => vertices[0].len(),
        }
    }

    /// The base point: the center of an ellipsoid, the vertex centroid of a polytope.
    pub fn basepoint(&self) -> Point {
        match self {
            ConvexDomain::Ellipsoid { center, .. } => center.clone(),
            ConvexDomain::Polytope { vertices, .. } => {
                vertices.iter().fold(Point::zeros(vertices[0].len()), |acc, v| acc + v) / vertices.len() as f64
            }
        }
    }

    /// Negative inside, zero on the boundary.
    pub fn defining_value(&self, x: &Point) -> f64 {
        match self {
            ConvexDomain::Ellipsoid { center, shape } => {
                let y = x - center;
                y.dot(&(shape * &y)) - 1.0
            }
            ConvexDomain::Polytope { normals, offsets, .. } => {
                normals.iter().zip(offsets).map(|(n, o)| n.dot(x) - o).fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.len() == self.chart_dim() && self.defining_value(x) < -INTERIOR_MARGIN
    }

    fn require_interior(&self, x: &Point) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::BoundaryPoint)
        }
    }

    /// Parameters `(t_back <= 0, t_forward >= 0)` where `x + t u` leaves the domain.
    pub fn exits(&self, x: &Point, u: &Point) -> (f64, f64) {
        match self {
            ConvexDomain::Ellipsoid { center, shape } => {
                let y = x - center;
                let mu = shape * u;
                let a = u.dot(&mu);
                let b = y.dot(&mu);
                let c = y.dot(&(shape * &y)) - 1.0;
                let disc = (b * b - a * c).max(0.0).sqrt();
                if b >= 0.0 {
                    let back = (-b - disc) / a;
                    (back, c / (-b - disc))
                } else {
                    let forward = (-b + disc) / a;
                    (c / (-b + disc), forward)
                }
            }
            ConvexDomain::Polytope { normals, offsets, .. } => {
                let mut back = f64::NEG_INFINITY;
                let mut forward = f64::INFINITY;
                for (n, o) in normals.iter().zip(offsets) {
                    let slack = o - n.dot(x);
                    let rate = n.dot(u);
                    if rate > 0.0 {
                        forward = forward.min(slack / rate);
                    } else if rate < 0.0 {
                        back = back.max(slack / rate);
                    }
                }
                (back, forward)
            }
        }
    }

    /// Symmetric projective quadric `Q` with the domain `{X^T Q X < 0, X_m = 1}`.
    pub fn quadric(&self) -> Result<Matrix> {
        let ConvexDomain::Ellipsoid { center, shape } = self else {
            return Err(Error::InvalidInput("only ellipsoids have a quadric".into()));
        };
        let m = center.len();
        let mc = shape * center;
        let mut q = Matrix::zeros(m + 1, m + 1);
        q.view_mut((0, 0), (m, m)).copy_from(shape);
        for i in 0..m {
            q[(i, m)] = -mc[i];
            q[(m, i)] = -mc[i];
        }
        q[(m, m)] = center.dot(&mc) - 1.0;
        Ok(q)
    }

    /// Ellipsoid `{X^T Q X < 0}` in the chart; the top-left block must be positive definite.
    pub fn from_quadric(q: &Matrix) -> Result<Self> {
        let m = q.nrows() - 1;
        let a = q.view((0, 0), (m, m)).into_owned();
        let b = q.view((0, m), (m, 1)).column(0).into_owned();
        let chol = a.clone().cholesky().ok_or(Error::InvalidInput("image is not bounded in the chart".into()))?;
        let center = -chol.solve(&b);
        let kappa = -(q[(m, m)] + b.dot(&center));
        if kappa <= 0.0 {
            return Err(Error::InvalidInput("quadric has empty interior".into()));
        }
        Self::ellipsoid(center, a / kappa)
    }

    /// Image under a projective transformation `t` of `R^(m+1)`.
    pub fn transform(&self, t: &Matrix) -> Result<Self> {
        let m = self.chart_dim();
        if t.nrows() != m + 1 || t.ncols() != m + 1 {
            return Err(Error::InvalidInput("transformation has the wrong size".into()));
        }
        match self {
            ConvexDomain::Ellipsoid { .. } => {
                let t_inv = t.clone().try_inverse().ok_or(Error::SingularSystem("projective map".into()))?;
                Self::from_quadric(&(t_inv.transpose() * self.quadric()? * t_inv))
            }
            ConvexDomain::Polytope { vertices, .. } => {
                let images: Vec<Point> = vertices.iter().map(|v| apply_projective(t, v)).collect::<Result<_>>()?;
                let signs: Vec<f64> = vertices.iter().map(|v| homogeneous(t, v)[m].signum()).collect();
                if signs.iter().any(|s| *s != signs[0]) {
                    return Err(Error::InvalidInput("image crosses the hyperplane at infinity".into()));
                }
                Self::polytope(images)
            }
        }
    }
}

fn homogeneous(t: &Matrix, x: &Point) -> Point {
    let mut h = Point::from_element(x.len() + 1, 1.0);
    h.rows_mut(0, x.len()).copy_from(x);
    t * h
}

/// Projective action in the chart.
pub fn apply_projective(t: &Matrix, x: &Point) -> Result<Point> {
    let h = homogeneous(t, x);
    let m = x.len();
    if h[m].abs() < 1e-300 {
        return Err(Error::InvalidInput("point is mapped to infinity".into()));
    }
    Ok(h.rows(0, m) / h[m])
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Unit normal and offset of the affine hyperplane through `m` points of `R^m`.
fn hyperplane_through(points: &[&Point]) -> Option<(Point, f64)> {
    let m = points[0].len();
    let rows: Vec<Point> = points[1..].iter().map(|p| *p - points[0]).collect();
    let normal = if m == 1 {
        Point::from_element(1, 1.0)
    } else {
        let a = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
        let svd = a.svd(false, true);
        let v_t = svd.v_t?;
        let s = &svd.singular_values;
        if s.len() < m - 1 || s.iter().fold(f64::INFINITY, |x, y| x.min(*y)) < 1e-10 {
            return None;
        }
        if v_t.nrows() < m {
            // thin factor: complete by Gram-Schmidt against the row space
            let mut n = Point::zeros(m);
            for e in 0..m {
                let mut c = Point::zeros(m);
                c[e] = 1.0;
                for r in 0..v_t.nrows() {
                    let row = v_t.row(r).transpose();
                    c -= &row * row.dot(&c);
                }
                if c.norm() > n.norm() {
                    n = c;
                }
            }
            n
        } else {
            v_t.row(m - 1).transpose()
        }
    };
    let normal = normal.normalize();
    let offset = normal.dot(points[0]);
    Some((normal, offset))
}

/// Hilbert distance `1/2 log [w, x, y, z]`.
pub fn hilbert_distance(domain: &ConvexDomain, x: &Point, y: &Point) -> Result<f64> {
    domain.require_interior(x)?;
    domain.require_interior(y)?;
    let u = y - x;
    if u.amax() == 0.0 {
        return Ok(0.0);
    }
    let (back, _) = domain.exits(x, &u);
    let (_, forward) = domain.exits(y, &u);
    Ok(0.5 * ((1.0 / -back).ln_1p() + (1.0 / forward).ln_1p()))
}

/// Points of the segment `[x, z)` towards a boundary point `z`, indexed by
/// Hilbert distance from `x`.
struct Ray {
    origin: Point,
    direction: Point,
    back: f64,
    end: f64,
}

impl Ray {
    fn new(domain: &ConvexDomain, x: &Point, z: &Point) -> Result<Self> {
        domain.require_interior(x)?;
        let direction = z - x;
        let (back, end) = domain.exits(x, &direction);
        if !((end - 1.0).abs() < 1e-6) {
            return Err(Error::InvalidInput("target is not a boundary point".into()));
        }
        Ok(Ray { origin: x.clone(), direction, back: -back, end })
    }

    fn at(&self, s: f64) -> Point {
        let e = (2.0 * s).exp() * self.back / self.end;
        let t = (e * self.end - self.back) / (1.0 + e);
        &self.origin + &self.direction * t
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BusemannEstimate {
    pub value: f64,
    pub error_bar: f64,
}

/// Busemann function `lim [d(y, x) - d(y, b0)]` as `y -> z` along `[b0, z)`,
/// Richardson-extrapolated from `steps` points spaced `0.5` apart.
pub fn busemann_approx(domain: &ConvexDomain, z: &Point, x: &Point, steps: usize) -> Result<BusemannEstimate> {
    domain.require_interior(x)?;
    if steps < 3 {
        return Err(Error::InvalidInput("at least three steps are needed".into()));
    }
    let b0 = domain.basepoint();
    let ray = Ray::new(domain, &b0, z)?;
    let h: f64 = 0.5;
    let q = (-2.0 * h).exp();
    let values: Vec<f64> = (1..=steps)
        .map(|j| {
            let s = h * j as f64;
            hilbert_distance(domain, &ray.at(s), x).map(|d| d - s)
        })
        .collect::<Result<_>>()?;
    let extrapolated: Vec<f64> = values.windows(2).map(|w| (w[1] - q * w[0]) / (1.0 - q)).collect();
    let n = extrapolated.len();
    let roundoff = f64::EPSILON * (2.0 * h * steps as f64).exp() * (1.0 + values[n].abs());
    Ok(BusemannEstimate {
        value: extrapolated[n - 1],
        error_bar: (extrapolated[n - 1] - extrapolated[n - 2]).abs() + roundoff,
    })
}

/// Distance from `p` to the ray `[x, z)`, by dense sampling in arc length and a
/// golden-section refinement around the best sample.
pub fn ray_distance(domain: &ConvexDomain, x: &Point, z: &Point, p: &Point) -> Result<f64> {
    domain.require_interior(p)?;
    let ray = Ray::new(domain, x, z)?;
    let reach = hilbert_distance(domain, x, p)? + 2.0;
    let dist = |s: f64| hilbert_distance(domain, &ray.at(s), p);
    let step = reach / (SHADOW_SAMPLES - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for j in 0..SHADOW_SAMPLES {
        let d = dist(step * j as f64)?;
        if d < best.1 {
            best = (j, d);
        }
    }
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let mut lo = step * best.0.saturating_sub(1) as f64;
    let mut hi = step * (best.0 + 1).min(SHADOW_SAMPLES - 1) as f64;
    let mut c = hi - golden * (hi - lo);
    let mut d = lo + golden * (hi - lo);
    let (mut fc, mut fd) = (dist(c)?, dist(d)?);
    let mut min = best.1.min(fc).min(fd);
    for _ in 0..SHADOW_REFINEMENTS {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - golden * (hi - lo);
            fc = dist(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + golden * (hi - lo);
            fd = dist(d)?;
        }
        min = min.min(fc).min(fd);
    }
    Ok(min)
}

/// Whether `p` lies within `r` of the ray `[x, z)`; that is, whether `z` is
/// in the shadow of the ball `B(p, r)` seen from `x`.
pub fn shadow_contains(domain: &ConvexDomain, x: &Point, z: &Point, p: &Point, r: f64) -> Result<bool> {
    Ok(ray_distance(domain, x, z, p)? <= r + SHADOW_TIE_TOLERANCE)
}

/// Lorentzian form `sum_{i<m} u_i v_i - u_m v_m`.
pub fn lorentz(u: &Point, v: &Point) -> f64 {
    let m = u.len() - 1;
    u.rows(0, m).dot(&v.rows(0, m)) - u[m] * v[m]
}

/// Hyperbolic distance between unit future timelike vectors.
pub fn hyperboloid_distance(u: &Point, v: &Point) -> f64 {
    let diff = u - v;
    2.0 * (lorentz(&diff, &diff).max(0.0).sqrt() / 2.0).asinh()
}

/// Distance from the hyperboloid point `q` to the geodesic ray from `x`
/// towards the null vector `xi`.
pub fn lorentz_ray_distance(x: &Point, xi: &Point, q: &Point) -> f64 {
    let xi = xi / (-lorentz(x, xi));
    let plus = -lorentz(q, &xi);
    let minus = -lorentz(q, &(x * 2.0 - &xi));
    let a = -lorentz(q, x);
    let b = 0.5 * (plus - minus);
    let cosh = if b < 0.0 { (plus * minus).max(1.0).sqrt() } else { a };
    cosh.max(1.0).acosh()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModelFamily {
    /// Preserves `x_1^2 + ... + x_(d-1)^2 - x_d^2`.
    Lorentzian,
    /// Image of SL(2, R) in SL(3, R) under the symmetric square.
    SymmetricSquare,
}

/// Identification of a group preserving a form of signature `(d-1, 1)` with
/// isometries of the Klein ball.
#[derive(Clone, Debug)]
pub struct KleinModel {
    family: ModelFamily,
    /// Orthogonal change of basis; model coordinates are `basis^T v`.
    basis: Matrix,
}

impl KleinModel {
    pub fn lorentzian(d: usize) -> Self {
        KleinModel { family: ModelFamily::Lorentzian, basis: Matrix::identity(d, d) }
    }

    pub fn symmetric_square() -> Self {
        let h = 0.5f64.sqrt();
        let basis = Matrix::from_row_slice(3, 3, &[h, 0.0, h, 0.0, 1.0, 0.0, -h, 0.0, h]);
        KleinModel { family: ModelFamily::SymmetricSquare, basis }
    }

    /// Finds the model whose form every generator preserves.
    pub fn detect(p: &Presentation) -> Result<Self> {
        let d = p.dim();
        let mut candidates = vec![Self::lorentzian(d)];
        if d == 3 {
            candidates.push(Self::symmetric_square());
        }
        candidates
            .into_iter()
            .find(|model| p.generators().iter().all(|g| model.preserves(g)))
            .ok_or(Error::UnsupportedFamily)
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    fn form(&self) -> Matrix {
        let d = self.dim();
        let mut j = Matrix::identity(d, d);
        j[(d - 1, d - 1)] = -1.0;
        &self.basis * j * self.basis.transpose()
    }

    pub fn preserves(&self, g: &Matrix) -> bool {
        let q = self.form();
        g.nrows() == self.dim() && (g.transpose() * &q * g - &q).amax() <= 1e-9 * g.norm_squared().max(1.0)
    }

    pub fn to_model(&self, v: &Point) -> Point {
        self.basis.tr_mul(v)
    }

    /// Hyperboloid point of `g b0`, normalized to the future sheet.
    pub fn orbit_point(&self, g: &Matrix) -> Point {
        let d = self.dim();
        let w = self.basis.tr_mul(&(g * self.basis.column(d - 1)));
        if w[d - 1] < 0.0 {
            -w
        } else {
            w
        }
    }

    /// Null vector with last model coordinate 1 on the line spanned by `v`.
    pub fn boundary_point(&self, v: &Point) -> Result<Point> {
        let w = self.to_model(v);
        let d = self.dim();
        if w[d - 1].abs() < 1e-12 * w.amax() {
            return Err(Error::BoundaryPoint);
        }
        let last = w[d - 1];
        let w = w / last;
        let spatial = w.rows(0, d - 1).norm();
        if (spatial - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput("line is not isotropic for the invariant form".into()));
        }
        let mut out = w;
        out.rows_mut(0, d - 1).scale_mut(1.0 / spatial);
        Ok(out)
    }

    /// Chart coordinates of a model vector.
    pub fn chart(&self, w: &Point) -> Point {
        let m = self.dim() - 1;
        w.rows(0, m) / w[m]
    }

    pub fn domain(&self) -> ConvexDomain {
        ConvexDomain::klein_ball(self.dim() - 1)
    }

    pub fn origin(&self) -> Point {
        let mut o = Point::zeros(self.dim());
        o[self.dim() - 1] = 1.0;
        o
    }
}

/// Half-angle at the base point of the shadow of `B(p, r)` when `d(b0, p) = t > r`.
pub fn shadow_half_angle(t: f64, r: f64) -> f64 {
    (r.sinh() / t.sinh()).min(1.0).asin()
}

#[derive(Clone, Debug)]
pub struct ShadowOptions {
    pub spheres: std::ops::RangeInclusive<usize>,
    /// The shadow radius is `radius_factor * R0`.
    pub radius_factor: f64,
    /// `R0` is the smallest grid radius whose shadows all carry this much mass.
    pub mass_target: f64,
    pub r0_grid: Vec<f64>,
    /// Relative growth of the spread across the spheres tolerated before a
    /// strictly increasing sequence counts as a trend.
    pub growth_tolerance: f64,
    pub element_cap: usize,
}

impl Default for ShadowOptions {
    fn default() -> Self {
        ShadowOptions {
            spheres: 4..=8,
            radius_factor: 2.0,
            mass_target: 0.5,
            r0_grid: (1..=40).map(|j| 0.25 * j as f64).collect(),
            growth_tolerance: 0.1,
            element_cap: crate::matgroup::DEFAULT_ELEMENT_CAP,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SphereSpread {
    pub sphere: usize,
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub spread: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ShadowReport {
    pub r0: f64,
    pub eps0: f64,
    pub radius: f64,
    /// `exp(2 r delta) / eps0`.
    pub bound: f64,
    pub spheres: Vec<SphereSpread>,
    pub pooled_spread: f64,
    pub strictly_increasing: bool,
    /// Strictly increasing spreads whose last value exceeds the first by more
    /// than the growth tolerance.
    pub growth_trend: bool,
}

impl ShadowReport {
    pub fn passes(&self, max_spread: f64) -> bool {
        !self.growth_trend
            && self.spheres.iter().all(|s| s.spread <= max_spread)
            && self.pooled_spread <= self.bound
    }
}

/// Boundary atoms of a measure in the Klein model.
struct BoundaryMass {
    points: Vec<Point>,
    weights: Vec<f64>,
    /// For the disk: atoms sorted by angle with cumulative weights.
    angles: Vec<f64>,
    cumulative: Vec<f64>,
}

impl BoundaryMass {
    fn new(model: &KleinModel, mu: &AtomicMeasure) -> Result<Self> {
        let mut points = Vec::with_capacity(mu.len());
        for f in &mu.atoms {
            points.push(model.boundary_point(&Point::from_vec(f.line()))?);
        }
        let weights = mu.weights.clone();
        let (mut angles, mut cumulative) = (Vec::new(), Vec::new());
        if model.dim() == 3 {
            let mut order: Vec<(f64, f64)> = points.iter().zip(&weights).map(|(p, w)| (p[1].atan2(p[0]), *w)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            cumulative.push(0.0);
            for (a, w) in order {
                angles.push(a);
                acc += w;
                cumulative.push(acc);
            }
        }
        Ok(BoundaryMass { points, weights, angles, cumulative })
    }

    fn is_disk(&self) -> bool {
        !self.angles.is_empty()
    }

    /// Mass of atoms with angle in `[lo, hi]`, `hi - lo <= 2 pi`.
    fn arc_mass(&self, lo: f64, hi: f64) -> f64 {
        use std::f64::consts::PI;
        if hi - lo >= 2.0 * PI {
            return self.cumulative[self.cumulative.len() - 1];
        }
        let wrap = |a: f64| (a + PI).rem_euclid(2.0 * PI) - PI;
        let (a, b) = (wrap(lo), wrap(hi));
        let mass_upto = |x: f64| self.cumulative[self.angles.partition_point(|&t| t <= x)];
        let mass_before = |x: f64| self.cumulative[self.angles.partition_point(|&t| t < x)];
        if a <= b {
            mass_upto(b) - mass_before(a)
        } else {
            mass_upto(PI) - mass_before(a) + mass_upto(b)
        }
    }
}

fn unit_at_angle(angle: f64) -> Point {
    Point::from_vec(vec![angle.cos(), angle.sin(), 1.0])
}

/// `mu(O_r(b0, p))` for the hyperboloid point `p`.
fn shadow_from_origin(mass: &BoundaryMass, p: &Point, r: f64) -> f64 {
    let m = p.len() - 1;
    let t = p[m].max(1.0).acosh();
    let reach = r + SHADOW_TIE_TOLERANCE;
    if t <= reach {
        return mass.weights.iter().sum();
    }
    let psi = shadow_half_angle(t, reach);
    if mass.is_disk() {
        let center = p[1].atan2(p[0]);
        return mass.arc_mass(center - psi, center + psi);
    }
    let dir = p.rows(0, m).normalize();
    let cos_psi = psi.cos();
    mass.points
        .iter()
        .zip(&mass.weights)
        .filter(|(z, _)| z.rows(0, m).dot(&dir) >= cos_psi)
        .map(|(_, w)| w)
        .sum()
}

/// `mu(O_r(x, b0))`: mass of boundary points whose ray from `x` passes within `r` of `b0`.
fn shadow_of_origin(mass: &BoundaryMass, x: &Point, r: f64, origin: &Point) -> f64 {
    let m = x.len() - 1;
    let reach = r + SHADOW_TIE_TOLERANCE;
    let inside = |z: &Point| lorentz_ray_distance(x, z, origin) <= reach;
    if x[m].max(1.0).acosh() <= reach {
        return mass.weights.iter().sum();
    }
    if !mass.is_disk() {
        return mass.points.iter().zip(&mass.weights).filter(|(z, _)| inside(z)).map(|(_, w)| w).sum();
    }
    use std::f64::consts::PI;
    let through = (-x[1]).atan2(-x[0]);
    let edge = |sign: f64| {
        let (mut lo, mut hi) = (0.0, PI);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if inside(&unit_at_angle(through + sign * mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    mass.arc_mass(through - edge(-1.0), through + edge(1.0))
}

/// Shadow-lemma check: the ratio `mu(O_r(b0, g b0)) exp(delta phi(kappa_theta(g)))`
/// over the requested spheres, with `r = radius_factor * R0`.
pub fn shadow_measure_check(
    model: &KleinModel,
    p: &Presentation,
    mu: &AtomicMeasure,
    phi: &Functional,
    delta: f64,
    opts: &ShadowOptions,
) -> Result<ShadowReport> {
    let theta: &ThetaSet = &mu.theta;
    let restricted = phi.restrict(theta);
    let mass = BoundaryMass::new(model, mu)?;
    let (first, last) = (*opts.spheres.start(), *opts.spheres.end());
    let buckets = map_ball(p, last, first, opts.element_cap, |g| {
        g.kappa().map(|k| (model.orbit_point(&g.matrix), restricted.eval(&k)))
    })?;
    let spheres: Vec<Vec<(Point, f64)>> = buckets
        .into_iter()
        .map(|b| b.into_iter().collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let origin = model.origin();
    let eps_at = |r: f64| {
        spheres
            .iter()
            .flatten()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|(x, _)| shadow_of_origin(&mass, x, r, &origin))
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    };
    if opts.r0_grid.is_empty() {
        return Err(Error::InvalidInput("empty radius grid".into()));
    }
    let (mut lo, mut hi) = (0usize, opts.r0_grid.len() - 1);
    if eps_at(opts.r0_grid[hi]) < opts.mass_target {
        return Err(Error::WindowEmpty("no grid radius reaches the shadow mass target".into()));
    }
    while lo < hi {
        let mid = (lo + hi) / 2;
        if eps_at(opts.r0_grid[mid]) >= opts.mass_target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let r0 = opts.r0_grid[lo];
    let eps0 = eps_at(r0);
    let radius = opts.radius_factor * r0;
    let mut rows = Vec::new();
    let mut pooled = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, sphere) in spheres.iter().enumerate() {
        let ratios: Vec<f64> = sphere
            .par_iter()
            .map(|(x, value)| shadow_from_origin(&mass, x, radius) * (delta * value).exp())
            .collect();
        let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        pooled = (pooled.0.min(min), pooled.1.max(max));
        rows.push(SphereSpread { sphere: first + i, count: ratios.len(), min, max, spread: max / min });
    }
    let strictly_increasing = rows.len() > 1 && rows.windows(2).all(|w| w[1].spread > w[0].spread);
    let growth_trend = strictly_increasing && rows[rows.len() - 1].spread > (1.0 + opts.growth_tolerance) * rows[0].spread;
    Ok(ShadowReport {
        r0,
        eps0,
        radius,
        bound: (2.0 * radius * delta).exp() / eps0,
        spheres: rows,
        pooled_spread: pooled.1 / pooled.0,
        strictly_increasing,
        growth_trend,
    })
}

/// Number of orbit points `g b0` on each sphere `1..=n` within `r` of the ray
/// from `b0` to the boundary point `z` (model coordinates, last entry 1).
pub fn conicality_score(model: &KleinModel, p: &Presentation, z: &Point, r: f64, n: usize, cap: usize) -> Result<Vec<usize>> {
    if z.len() != model.dim() {
        return Err(Error::InvalidInput("boundary point has the wrong dimension".into()));
    }
    let origin = model.origin();
    let buckets = map_ball(p, n, 1, cap, |g| lorentz_ray_distance(&origin, z, &model.orbit_point(&g.matrix)) < r)?;
    Ok(buckets.iter().map(|b| b.iter().filter(|&&x| x).count()).collect())
}

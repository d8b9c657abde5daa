//! Smooth bounded convex obstacles.
//!
//! An obstacle is described by a defining function `phi` that is negative
//! inside, zero on the boundary and positive outside. Three kinds are
//! supported: spheres and axis-aligned ellipsoids (closed forms where they
//! exist) and a library-only implicit body backed by user closures.
//!
//! Sign convention for the second fundamental form: `A(v, v)` is the normal
//! acceleration of a boundary geodesic with velocity `v`, so on a sphere of
//! radius `r` it equals `-|v|^2 / r * nu` with `nu` the outward unit normal.
//! With this convention the Euler-Lagrange equation of the constrained energy
//! reads `u'' = A(u', u') * chi` on the contact set.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecmath::{axpy, dot, norm, normalized, orthonormal_complement, sub};

/// Relative boundary band used by [`ConvexObstacle::contains`]; multiplied by the diameter.
pub const BOUNDARY_TOL_REL: f64 = 1e-9;
/// Relative tolerance for the tangency precondition of the second fundamental form.
pub const TANGENT_TOL: f64 = 1e-8;
/// Iteration cap for the iterative projectors.
pub const PROJECTION_MAX_ITERS: usize = 100;
/// Convergence tolerance for the iterative projectors (relative to the obstacle scale).
pub const PROJECTION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObstacleError {
    #[error("invalid obstacle: {0}")]
    Invalid(String),
    #[error("dimension mismatch: obstacle has dimension {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("gradient of the defining function vanishes near {point:?}")]
    DegenerateGradient { point: Vec<f64> },
    #[error("vector is not tangent to the boundary (normal component ratio {ratio:e})")]
    NotTangent { ratio: f64 },
    #[error("convexity spot check failed at {point:?}: principal curvature {curvature:e}")]
    NotConvex { point: Vec<f64>, curvature: f64 },
}

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Returns the Hessian in row-major order (`n * n` entries).
pub type MatrixField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Closures describing a user-supplied convex body.
#[derive(Clone)]
pub struct ImplicitField {
    pub value: ScalarField,
    pub gradient: VectorField,
    pub hessian: MatrixField,
    /// A point strictly inside the body; rays from here hit the boundary once.
    pub interior_point: Vec<f64>,
    /// Radius of a ball around `interior_point` that contains the body.
    /// Also bounds the working box of the projector.
    pub bounding_radius: f64,
}

impl fmt::Debug for ImplicitField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImplicitField")
            .field("interior_point", &self.interior_point)
            .field("bounding_radius", &self.bounding_radius)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum ObstacleKind {
    Sphere { center: Vec<f64>, radius: f64 },
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
    Implicit(ImplicitField),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Membership {
    Interior,
    Boundary,
    Exterior,
}

/// Obstacle description as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleSpec {
    Sphere { center: Vec<f64>, radius: f64 },
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
}

impl ObstacleSpec {
    pub fn build(&self) -> Result<ConvexObstacle, ObstacleError> {
        match self {
            ObstacleSpec::Sphere { center, radius } => ConvexObstacle::sphere(center.clone(), *radius),
            ObstacleSpec::Ellipsoid { center, semi_axes } => {
                ConvexObstacle::ellipsoid(center.clone(), semi_axes.clone())
            }
        }
    }
}

/// A smooth bounded convex obstacle. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ConvexObstacle {
    kind: ObstacleKind,
    dim: usize,
    kappa_max: f64,
    kappa_min: f64,
    boundary_tol: f64,
}

fn check_point(name: &str, x: &[f64]) -> Result<(), ObstacleError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ObstacleError::Invalid(format!("{name} has non-finite coordinates")))
    }
}

impl ConvexObstacle {
    pub fn sphere(center: Vec<f64>, radius: f64) -> Result<Self, ObstacleError> {
        check_point("center", &center)?;
        if center.len() < 2 {
            return Err(ObstacleError::Invalid("dimension must be at least 2".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ObstacleError::Invalid(format!("radius must be positive, got {radius}")));
        }
        let dim = center.len();
        Ok(Self {
            kind: ObstacleKind::Sphere { center, radius },
            dim,
            kappa_max: 1.0 / radius,
            kappa_min: 1.0 / radius,
            boundary_tol: BOUNDARY_TOL_REL * 2.0 * radius,
        })
    }

    pub fn ellipsoid(center: Vec<f64>, semi_axes: Vec<f64>) -> Result<Self, ObstacleError> {
        check_point("center", &center)?;
        if center.len() < 2 {
            return Err(ObstacleError::Invalid("dimension must be at least 2".into()));
        }
        if semi_axes.len() != center.len() {
            return Err(ObstacleError::DimensionMismatch {
                expected: center.len(),
                got: semi_axes.len(),
            });
        }
        if semi_axes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(ObstacleError::Invalid("semi-axes must be positive".into()));
        }
        let a_max = semi_axes.iter().cloned().fold(f64::MIN, f64::max);
        let a_min = semi_axes.iter().cloned().fold(f64::MAX, f64::min);
        let dim = center.len();
        Ok(Self {
            kind: ObstacleKind::Ellipsoid { center, semi_axes },
            dim,
            kappa_max: a_max / (a_min * a_min),
            kappa_min: a_min / (a_max * a_max),
            boundary_tol: BOUNDARY_TOL_REL * 2.0 * a_max,
        })
    }

    /// Builds an implicit obstacle and spot-checks it: the gradient must not
    /// vanish and the shape operator must be positive semidefinite on a set of
    /// boundary samples. `kappa_max` is taken from the caller.
    pub fn implicit(field: ImplicitField, kappa_max: f64) -> Result<Self, ObstacleError> {
        let dim = field.interior_point.len();
        check_point("interior point", &field.interior_point)?;
        if dim < 2 {
            return Err(ObstacleError::Invalid("dimension must be at least 2".into()));
        }
        if !(field.bounding_radius > 0.0 && field.bounding_radius.is_finite()) {
            return Err(ObstacleError::Invalid("bounding radius must be positive".into()));
        }
        if !(kappa_max > 0.0 && kappa_max.is_finite()) {
            return Err(ObstacleError::Invalid("kappa_max must be positive".into()));
        }
        if (field.value)(&field.interior_point) >= 0.0 {
            return Err(ObstacleError::Invalid("interior point is not inside the body".into()));
        }
        let mut obstacle = Self {
            boundary_tol: BOUNDARY_TOL_REL * 2.0 * field.bounding_radius,
            kind: ObstacleKind::Implicit(field),
            dim,
            kappa_max,
            kappa_min: 0.0,
        };
        obstacle.kappa_min = obstacle.spot_check_convexity()?;
        Ok(obstacle)
    }

    /// Replaces the boundary band used by [`ConvexObstacle::contains`].
    pub fn with_boundary_tol(mut self, tol: f64) -> Self {
        self.boundary_tol = tol;
        self
    }

    pub fn kind(&self) -> &ObstacleKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa_max
    }

    /// Smallest principal curvature (exact for sphere/ellipsoid, sampled for
    /// implicit bodies). Zero flags flat boundary regions.
    pub fn kappa_min(&self) -> f64 {
        self.kappa_min
    }

    pub fn boundary_tol(&self) -> f64 {
        self.boundary_tol
    }

    /// Reference interior point (the center for sphere and ellipsoid).
    pub fn center(&self) -> &[f64] {
        match &self.kind {
            ObstacleKind::Sphere { center, .. } | ObstacleKind::Ellipsoid { center, .. } => center,
            ObstacleKind::Implicit(f) => &f.interior_point,
        }
    }

    /// Radius of a ball around [`ConvexObstacle::center`] containing the body.
    pub fn bounding_radius(&self) -> f64 {
        match &self.kind {
            ObstacleKind::Sphere { radius, .. } => *radius,
            ObstacleKind::Ellipsoid { semi_axes, .. } => semi_axes.iter().cloned().fold(0.0, f64::max),
            ObstacleKind::Implicit(f) => f.bounding_radius,
        }
    }

    /// Diameter (an upper bound for implicit bodies).
    pub fn diameter(&self) -> f64 {
        2.0 * self.bounding_radius()
    }

    pub fn spec(&self) -> Option<ObstacleSpec> {
        match &self.kind {
            ObstacleKind::Sphere { center, radius } => Some(ObstacleSpec::Sphere {
                center: center.clone(),
                radius: *radius,
            }),
            ObstacleKind::Ellipsoid { center, semi_axes } => Some(ObstacleSpec::Ellipsoid {
                center: center.clone(),
                semi_axes: semi_axes.clone(),
            }),
            ObstacleKind::Implicit(_) => None,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ObstacleError> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(ObstacleError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            })
        }
    }

    /// Signed level value: negative inside, zero on the boundary, positive
    /// outside, and to first order the signed distance near the boundary.
    /// For the sphere this is exactly `|x - c| - r`.
    pub fn level(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ObstacleKind::Sphere { center, radius } => {
                let mut s = 0.0;
                for (a, c) in x.iter().zip(center) {
                    s += (a - c) * (a - c);
                }
                s.sqrt() - radius
            }
            ObstacleKind::Ellipsoid { center, semi_axes } => {
                let mut q = -1.0;
                let mut g2 = 0.0;
                for ((a, c), s) in x.iter().zip(center).zip(semi_axes) {
                    let d = a - c;
                    q += d * d / (s * s);
                    let g = 2.0 * d / (s * s);
                    g2 += g * g;
                }
                if g2 > 0.0 {
                    q / g2.sqrt()
                } else {
                    -semi_axes.iter().cloned().fold(f64::MAX, f64::min)
                }
            }
            ObstacleKind::Implicit(f) => {
                let v = (f.value)(x);
                let g = norm(&(f.gradient)(x));
                if g > 0.0 {
                    v / g
                } else {
                    v
                }
            }
        }
    }

    /// Gradient of the smooth defining function used for normals and curvature.
    fn defining_gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            ObstacleKind::Sphere { center, .. } => x.iter().zip(center).map(|(a, c)| 2.0 * (a - c)).collect(),
            ObstacleKind::Ellipsoid { center, semi_axes } => x
                .iter()
                .zip(center)
                .zip(semi_axes)
                .map(|((a, c), s)| 2.0 * (a - c) / (s * s))
                .collect(),
            ObstacleKind::Implicit(f) => (f.gradient)(x),
        }
    }

    /// Hessian of the defining function, row-major.
    fn defining_hessian(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        match &self.kind {
            ObstacleKind::Sphere { .. } => {
                let mut h = vec![0.0; n * n];
                for i in 0..n {
                    h[i * n + i] = 2.0;
                }
                h
            }
            ObstacleKind::Ellipsoid { semi_axes, .. } => {
                let mut h = vec![0.0; n * n];
                for i in 0..n {
                    h[i * n + i] = 2.0 / (semi_axes[i] * semi_axes[i]);
                }
                h
            }
            ObstacleKind::Implicit(f) => (f.hessian)(x),
        }
    }

    /// Classifies `x` with the default boundary band.
    pub fn contains(&self, x: &[f64]) -> Membership {
        self.contains_with_tol(x, self.boundary_tol)
    }

    pub fn contains_with_tol(&self, x: &[f64], tol: f64) -> Membership {
        let phi = self.level(x);
        if phi.abs() <= tol {
            Membership::Boundary
        } else if phi < 0.0 {
            Membership::Interior
        } else {
            Membership::Exterior
        }
    }

    /// Strictly outside, beyond the boundary band.
    pub fn is_exterior(&self, x: &[f64]) -> bool {
        self.contains(x) == Membership::Exterior
    }

    /// Boundary point along the ray from the reference center in direction `dir`.
    pub fn ray_boundary_point(&self, dir: &[f64]) -> Result<Vec<f64>, ObstacleError> {
        self.check_dim(dir)?;
        let w = normalized(dir).ok_or(ObstacleError::Invalid("zero ray direction".into()))?;
        match &self.kind {
            ObstacleKind::Sphere { center, radius } => Ok(axpy(center, *radius, &w)),
            ObstacleKind::Ellipsoid { center, semi_axes } => {
                let s: f64 = w
                    .iter()
                    .zip(semi_axes)
                    .map(|(wi, a)| (wi / a) * (wi / a))
                    .sum::<f64>()
                    .sqrt();
                Ok(axpy(center, 1.0 / s, &w))
            }
            ObstacleKind::Implicit(f) => {
                let c = &f.interior_point;
                let mut lo = 0.0;
                let mut hi = 2.0 * f.bounding_radius;
                if (f.value)(&axpy(c, hi, &w)) <= 0.0 {
                    return Err(ObstacleError::Invalid("bounding radius does not contain the body".into()));
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if (f.value)(&axpy(c, mid, &w)) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(axpy(c, 0.5 * (lo + hi), &w))
            }
        }
    }

    /// Nearest boundary point to `x`. Interior points are projected too; a
    /// point exactly at the sphere center is nudged by `1e-9 * diameter`
    /// along the last coordinate axis first.
    pub fn project_to_boundary(&self, x: &[f64]) -> Result<Vec<f64>, ObstacleError> {
        self.check_dim(x)?;
        check_point("point", x)?;
        match &self.kind {
            ObstacleKind::Sphere { center, radius } => {
                let mut d = sub(x, center);
                let mut r = norm(&d);
                if r <= f64::EPSILON * radius {
                    d = vec![0.0; self.dim];
                    d[self.dim - 1] = 1e-9 * self.diameter();
                    r = norm(&d);
                }
                Ok(center.iter().zip(&d).map(|(c, di)| c + radius * (di / r)).collect())
            }
            ObstacleKind::Ellipsoid { center, semi_axes } => project_ellipsoid(x, center, semi_axes),
            ObstacleKind::Implicit(f) => self.project_implicit(x, f),
        }
    }

    /// Outward unit normal `grad phi / |grad phi|` at a boundary point.
    pub fn normal(&self, y: &[f64]) -> Result<Vec<f64>, ObstacleError> {
        self.check_dim(y)?;
        let g = self.defining_gradient(y);
        let gn = norm(&g);
        let threshold = match &self.kind {
            ObstacleKind::Implicit(_) => 1e-12,
            _ => 1e-300,
        };
        if !(gn > threshold) {
            return Err(ObstacleError::DegenerateGradient { point: y.to_vec() });
        }
        Ok(g.iter().map(|v| v / gn).collect())
    }

    /// `A(v, v)`: the normal curvature vector for tangent velocity `v` at the
    /// boundary point `y`, computed from the Hessian of the defining function
    /// restricted to the tangent plane.
    pub fn second_fundamental_form(&self, y: &[f64], v: &[f64]) -> Result<Vec<f64>, ObstacleError> {
        self.check_dim(v)?;
        let nu = self.normal(y)?;
        let vn = norm(v);
        if vn == 0.0 {
            return Ok(vec![0.0; self.dim]);
        }
        let ratio = dot(v, &nu).abs() / vn;
        if ratio > TANGENT_TOL {
            return Err(ObstacleError::NotTangent { ratio });
        }
        let h = self.defining_hessian(y);
        let g = norm(&self.defining_gradient(y));
        let n = self.dim;
        let mut vhv = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += h[i * n + j] * v[j];
            }
            vhv += v[i] * row;
        }
        let k = vhv / g;
        Ok(nu.iter().map(|x| -k * x).collect())
    }

    /// Principal curvatures at a boundary point (ascending).
    pub fn principal_curvatures(&self, y: &[f64]) -> Result<Vec<f64>, ObstacleError> {
        let nu = self.normal(y)?;
        let tangents = orthonormal_complement(&nu);
        let h = self.defining_hessian(y);
        let g = norm(&self.defining_gradient(y));
        let n = self.dim;
        let m = tangents.len();
        let hm = DMatrix::from_row_slice(n, n, &h);
        let t = DMatrix::from_fn(n, m, |i, j| tangents[j][i]);
        let shape = (t.transpose() * hm * &t) / g;
        let shape = (&shape + shape.transpose()) * 0.5;
        let mut eig: Vec<f64> = SymmetricEigen::new(shape).eigenvalues.iter().cloned().collect();
        eig.sort_by(f64::total_cmp);
        Ok(eig)
    }

    /// Whether the closed segment `[p, q]` enters the open obstacle (beyond
    /// the relative tolerance `1e-12` of the obstacle size). Grazing counts as a miss.
    pub fn segment_meets(&self, p: &[f64], q: &[f64]) -> bool {
        match &self.kind {
            ObstacleKind::Sphere { center, radius } => {
                crate::vecmath::point_segment_distance(center, p, q) < radius * (1.0 - 1e-12)
            }
            ObstacleKind::Ellipsoid { center, semi_axes } => {
                // The affine map to the unit ball preserves segments.
                let map = |x: &[f64]| -> Vec<f64> {
                    x.iter().zip(center).zip(semi_axes).map(|((a, c), s)| (a - c) / s).collect()
                };
                let origin = vec![0.0; self.dim];
                crate::vecmath::point_segment_distance(&origin, &map(p), &map(q)) < 1.0 - 1e-12
            }
            ObstacleKind::Implicit(f) => {
                // phi is convex along the segment: coarse scan then golden section.
                let at = |t: f64| -> f64 {
                    let x: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + t * (b - a)).collect();
                    (f.value)(&x)
                };
                let samples = 256;
                let (mut best_t, mut best) = (0.0, at(0.0));
                for k in 1..=samples {
                    let t = k as f64 / samples as f64;
                    let v = at(t);
                    if v < best {
                        best = v;
                        best_t = t;
                    }
                }
                let h = 1.0 / samples as f64;
                let (mut a, mut b) = ((best_t - h).max(0.0), (best_t + h).min(1.0));
                let gr = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..80 {
                    let c = b - gr * (b - a);
                    let d = a + gr * (b - a);
                    if at(c) < at(d) {
                        b = d;
                    } else {
                        a = c;
                    }
                }
                let t = 0.5 * (a + b);
                let x: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + t * (b - a)).collect();
                self.level(&x) < -1e-12 * self.diameter()
            }
        }
    }

    fn project_implicit(&self, x: &[f64], f: &ImplicitField) -> Result<Vec<f64>, ObstacleError> {
        let n = self.dim;
        let scale = f.bounding_radius;
        let mut dir = sub(x, &f.interior_point);
        if norm(&dir) <= f64::EPSILON * scale {
            dir = vec![0.0; n];
            dir[n - 1] = 1.0;
        }
        let mut y = self.ray_boundary_point(&dir)?;
        let g0 = (f.gradient)(&y);
        let g0n2 = dot(&g0, &g0);
        if g0n2 == 0.0 {
            return Err(ObstacleError::DegenerateGradient { point: y });
        }
        let mut lambda = dot(&sub(x, &y), &g0) / g0n2;

        let residual = |y: &[f64], lambda: f64| -> (Vec<f64>, f64) {
            let g = (f.gradient)(y);
            let mut r: Vec<f64> = (0..n).map(|i| y[i] - x[i] + lambda * g[i]).collect();
            r.push((f.value)(y));
            let rn = norm(&r);
            (r, rn)
        };

        let (mut r, mut rn) = residual(&y, lambda);
        let tol = PROJECTION_TOL * scale;
        let mut iterations = 0;
        while rn > tol {
            if iterations == PROJECTION_MAX_ITERS {
                return Err(ObstacleError::NonConvergence { iterations, residual: rn });
            }
            iterations += 1;
            let g = (f.gradient)(&y);
            let h = (f.hessian)(&y);
            let mut jac = DMatrix::<f64>::zeros(n + 1, n + 1);
            for i in 0..n {
                for j in 0..n {
                    jac[(i, j)] = lambda * h[i * n + j] + if i == j { 1.0 } else { 0.0 };
                }
                jac[(i, n)] = g[i];
                jac[(n, i)] = g[i];
            }
            let rhs = DVector::from_iterator(n + 1, r.iter().map(|v| -v));
            let step = match jac.lu().solve(&rhs) {
                Some(s) => s,
                None => return Err(ObstacleError::DegenerateGradient { point: y }),
            };
            // Damped Newton: halve until the residual decreases.
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let y_try: Vec<f64> = (0..n).map(|i| y[i] + t * step[i]).collect();
                let l_try = lambda + t * step[n];
                let (r_try, rn_try) = residual(&y_try, l_try);
                if rn_try < rn {
                    y = y_try;
                    lambda = l_try;
                    r = r_try;
                    rn = rn_try;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        // Polish onto the level set.
        for _ in 0..3 {
            let g = (f.gradient)(&y);
            let v = (f.value)(&y);
            y = axpy(&y, -v / dot(&g, &g), &g);
        }
        if self.level(&y).abs() > self.boundary_tol {
            return Err(ObstacleError::NonConvergence {
                iterations,
                residual: rn,
            });
        }
        Ok(y)
    }

    /// Samples boundary points along a deterministic set of rays and checks
    /// gradient non-degeneracy and positive semidefiniteness of the shape
    /// operator. Returns the smallest sampled principal curvature (clamped at 0).
    fn spot_check_convexity(&self) -> Result<f64, ObstacleError> {
        let n = self.dim;
        let mut kmin = f64::INFINITY;
        let tol = 1e-8 * self.kappa_max;
        for dir in sample_directions(n, 64 * n) {
            let y = self.ray_boundary_point(&dir)?;
            let curv = self.principal_curvatures(&y)?;
            let lo = curv.first().cloned().unwrap_or(0.0);
            if lo < -tol {
                return Err(ObstacleError::NotConvex { point: y, curvature: lo });
            }
            kmin = kmin.min(lo);
        }
        Ok(kmin.max(0.0))
    }
}

/// Deterministic, roughly uniform unit directions in `R^n`: the axes, their
/// negatives, then a golden-angle spiral in the first two coordinates mixed
/// with the remaining axes.
pub(crate) fn sample_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(count);
    for k in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[k] = s;
            dirs.push(e);
        }
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut k = 0usize;
    while dirs.len() < count {
        let z = 1.0 - 2.0 * ((k as f64 + 0.5) / count as f64);
        let r = (1.0 - z * z).sqrt();
        let th = golden * k as f64;
        let mut d = vec![0.0; n];
        d[0] = r * th.cos();
        d[1] = r * th.sin();
        if n > 2 {
            d[2 + k % (n - 2)] = z;
        } else {
            d[0] += z * 0.5;
        }
        if let Some(d) = normalized(&d) {
            dirs.push(d);
        }
        k += 1;
    }
    dirs
}

/// Nearest point on an axis-aligned ellipsoid, via safeguarded Newton on the
/// secular equation of the KKT system `y = x - lambda * grad q(y)`, `q(y) = 0`:
/// `y_i = a_i^2 x_i / (a_i^2 + t)` with `F(t) = sum (a_i x_i / (a_i^2 + t))^2 - 1 = 0`.
fn project_ellipsoid(x: &[f64], center: &[f64], axes: &[f64]) -> Result<Vec<f64>, ObstacleError> {
    let n = x.len();
    let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
    let a_min = axes.iter().cloned().fold(f64::MAX, f64::min);
    let a_max = axes.iter().cloned().fold(f64::MIN, f64::max);
    let a2min = a_min * a_min;
    let scale = a_max;
    let min_axes: Vec<usize> = (0..n).filter(|&i| axes[i] <= a_min * (1.0 + 1e-12)).collect();
    let x_min_norm = min_axes.iter().map(|&i| d[i] * d[i]).sum::<f64>().sqrt();

    let finish = |y: Vec<f64>| -> Vec<f64> {
        // Snap radially so that q(y) = 0 to rounding.
        let s: f64 = y.iter().zip(axes).map(|(v, a)| (v / a) * (v / a)).sum::<f64>().sqrt();
        y.iter().zip(center).map(|(v, c)| c + v / s).collect()
    };

    if x_min_norm <= f64::EPSILON * scale {
        // Medial-axis degenerate case: the pole t = -a_min^2 is missing.
        let mut y = vec![0.0; n];
        let mut used = 0.0;
        for i in 0..n {
            if !min_axes.contains(&i) {
                let a2 = axes[i] * axes[i];
                y[i] = a2 * d[i] / (a2 - a2min);
                used += (y[i] / axes[i]) * (y[i] / axes[i]);
            }
        }
        if used <= 1.0 {
            let k = *min_axes.last().expect("at least one smallest axis");
            y[k] = a_min * (1.0 - used).sqrt();
            return Ok(finish(y));
        }
        // Otherwise the root lies to the right of the (removable) pole.
    }

    let f = |t: f64| -> (f64, f64) {
        let mut val = -1.0;
        let mut der = 0.0;
        for i in 0..n {
            let a2 = axes[i] * axes[i];
            let den = a2 + t;
            let w = axes[i] * d[i] / den;
            val += w * w;
            der += -2.0 * w * w / den;
        }
        (val, der)
    };

    // Bracket [lo, hi] with F(lo) > 0 > F(hi).
    let q0: f64 = d.iter().zip(axes).map(|(v, a)| (v / a) * (v / a)).sum::<f64>() - 1.0;
    let (mut lo, mut hi) = if q0 > 0.0 {
        let dn: f64 = d.iter().zip(axes).map(|(v, a)| (v * a) * (v * a)).sum::<f64>().sqrt();
        (0.0, dn)
    } else if q0 < 0.0 {
        (-a2min, 0.0)
    } else {
        return Ok(x.to_vec());
    };

    // Initial guess from the radially scaled point y0 = x / |x|_A.
    let s0 = (q0 + 1.0).sqrt();
    let y0: Vec<f64> = d.iter().map(|v| v / s0).collect();
    let gy: Vec<f64> = y0.iter().zip(axes).map(|(v, a)| v / (a * a)).collect();
    let diff: Vec<f64> = d.iter().zip(&y0).map(|(a, b)| a - b).collect();
    let mut t = dot(&diff, &gy) / dot(&gy, &gy);
    if !(t > lo && t < hi) {
        t = 0.5 * (lo + hi);
    }

    let tol = PROJECTION_TOL * scale * scale;
    let mut iterations = 0;
    loop {
        let (val, der) = f(t);
        if val > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if val.abs() <= 1e-15 || (hi - lo) <= tol {
            break;
        }
        if iterations == PROJECTION_MAX_ITERS {
            return Err(ObstacleError::NonConvergence {
                iterations,
                residual: val.abs(),
            });
        }
        iterations += 1;
        let mut next = t - val / der;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= tol {
            t = next;
            break;
        }
        t = next;
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let a2 = axes[i] * axes[i];
            a2 * d[i] / (a2 + t)
        })
        .collect();
    Ok(finish(y))
}

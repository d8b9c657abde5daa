//! Closed-form constructions: vision boundaries and the exact minimizer
//! around a round sphere.
//!
//! For a sphere the minimizer is a tangent segment from `p`, a great-circle
//! arc, and a tangent segment into `q`. All three pieces lie in the plane
//! through `p`, `q` and the center.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, DiscreteCurve};
use crate::obstacle::{ConvexObstacle, ObstacleError, ObstacleKind, TANGENT_TOL};
use crate::vecmath::{angle_between, axpy, dist, dot, normalized, orthonormal_complement, point_segment_distance, reject, sub};

/// `sin` of the angle at the center below which `p`, `c`, `q` count as collinear.
pub const COLLINEARITY_TOL: f64 = 1e-9;
/// Relative tolerance of the segment-misses-ball test.
pub const SEGMENT_MISS_TOL: f64 = 1e-12;
const BISECTION_ITERS: usize = 200;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error("point {0} is not strictly outside the obstacle")]
    InfeasiblePoint(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no tangency point found along seed direction {0}")]
    NoTangency(usize),
    #[error(transparent)]
    Obstacle(#[from] ObstacleError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Points of the vision boundary of `apex`, with their tangency residuals
/// `(x - apex) . nu(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisionBoundarySample {
    pub apex: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Multiplicity {
    Unique,
    RotationalFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SphereSolution {
    pub center: Vec<f64>,
    pub radius: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub tangent_point_p: Vec<f64>,
    pub tangent_point_q: Vec<f64>,
    pub arc_angle: f64,
    pub length: f64,
    pub energy: f64,
    pub multiplicity: Multiplicity,
    /// Orthonormal basis `(e1, e2)` of the plane of the solution, with
    /// `e1` pointing from the center to `p`.
    pub plane: [Vec<f64>; 2],
    /// Angle of `tangent_point_p` from `e1` in that plane.
    pub start_angle: f64,
}

impl SphereSolution {
    /// Straight-segment solution (the segment misses the open ball).
    pub fn is_segment(&self) -> bool {
        self.arc_angle == 0.0
    }
}

fn tangency_residual(obstacle: &ConvexObstacle, apex: &[f64], x: &[f64]) -> Result<f64, ObstacleError> {
    Ok(dot(&sub(x, apex), &obstacle.normal(x)?))
}

/// Samples the vision boundary of `p`: boundary points whose tangent plane
/// contains `p`.
///
/// Spheres use the closed form (an `(n-2)`-sphere; two points in the plane).
/// Other bodies are handled plane by plane: in the plane spanned by `p - c`
/// and a seed direction, the residual changes sign exactly once along the
/// boundary between the point facing `p` and the antipodal point.
pub fn vision_boundary(obstacle: &ConvexObstacle, p: &[f64], n_samples: usize) -> Result<VisionBoundarySample, AnalyticError> {
    let dim = obstacle.dim();
    if p.len() != dim {
        return Err(AnalyticError::DimensionMismatch { expected: dim, got: p.len() });
    }
    if !obstacle.is_exterior(p) {
        return Err(AnalyticError::InfeasiblePoint("p"));
    }
    if n_samples == 0 {
        return Err(AnalyticError::InvalidInput("n_samples must be positive".into()));
    }
    let c = obstacle.center();
    let axis = normalized(&sub(p, c)).ok_or(AnalyticError::InfeasiblePoint("p"))?;
    let basis = orthonormal_complement(&axis);
    let seeds: Vec<Vec<f64>> = seed_directions(&basis, n_samples);

    let points: Vec<Vec<f64>> = match obstacle.kind() {
        ObstacleKind::Sphere { center, radius } => {
            let d = dist(p, center);
            let r = *radius;
            let foot = axpy(center, r * r / d, &axis);
            let rho = r * (1.0 - (r / d) * (r / d)).max(0.0).sqrt();
            seeds.iter().map(|w| axpy(&foot, rho, w)).collect()
        }
        _ => seeds
            .iter()
            .enumerate()
            .map(|(k, w)| tangency_in_plane(obstacle, p, &axis, w).ok_or(AnalyticError::NoTangency(k)))
            .collect::<Result<_, _>>()?,
    };
    let residuals = points
        .iter()
        .map(|x| tangency_residual(obstacle, p, x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(VisionBoundarySample {
        apex: p.to_vec(),
        points,
        residuals,
    })
}

fn seed_directions(basis: &[Vec<f64>], n_samples: usize) -> Vec<Vec<f64>> {
    match basis.len() {
        0 => Vec::new(),
        1 => vec![basis[0].clone(), basis[0].iter().map(|v| -v).collect()],
        2 => (0..n_samples)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n_samples as f64;
                basis[0].iter().zip(&basis[1]).map(|(u, v)| a.cos() * u + a.sin() * v).collect()
            })
            .collect(),
        m => crate::obstacle::sample_directions(m, n_samples)
            .into_iter()
            .take(n_samples)
            .map(|coef| {
                let mut d = vec![0.0; basis[0].len()];
                for (c, b) in coef.iter().zip(basis) {
                    for (di, bi) in d.iter_mut().zip(b) {
                        *di += c * bi;
                    }
                }
                d
            })
            .collect(),
    }
}

/// Tangency point on the half-plane section `{c + s (cos t axis + sin t w) : t in (0, pi)}`.
fn tangency_in_plane(obstacle: &ConvexObstacle, p: &[f64], axis: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let point = |t: f64| -> Option<Vec<f64>> {
        let dir: Vec<f64> = axis.iter().zip(w).map(|(a, b)| t.cos() * a + t.sin() * b).collect();
        obstacle.ray_boundary_point(&dir).ok()
    };
    let f = |t: f64| -> Option<f64> {
        let x = point(t)?;
        tangency_residual(obstacle, p, &x).ok()
    };
    let (mut lo, mut hi) = (0.0, std::f64::consts::PI);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if !(flo < 0.0 && fhi > 0.0) {
        return None;
    }
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (xl, xh) = (point(lo)?, point(hi)?);
    let (rl, rh) = (tangency_residual(obstacle, p, &xl).ok()?, tangency_residual(obstacle, p, &xh).ok()?);
    let best = if rl.abs() <= rh.abs() { xl } else { xh };
    let scale = dist(p, obstacle.center()).max(obstacle.bounding_radius());
    (tangency_residual(obstacle, p, &best).ok()?.abs() <= TANGENT_TOL * scale).then_some(best)
}

/// Exact minimizer of the energy from `p` to `q` around the sphere
/// `|x - center| <= radius`.
pub fn solve_sphere(center: &[f64], radius: f64, p: &[f64], q: &[f64]) -> Result<SphereSolution, AnalyticError> {
    let dim = center.len();
    for x in [p, q] {
        if x.len() != dim {
            return Err(AnalyticError::DimensionMismatch { expected: dim, got: x.len() });
        }
    }
    if dim < 2 {
        return Err(AnalyticError::InvalidInput("dimension must be at least 2".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(AnalyticError::InvalidInput("radius must be positive".into()));
    }
    let (dp, dq) = (dist(p, center), dist(q, center));
    if !(dp > radius) {
        return Err(AnalyticError::InfeasiblePoint("p"));
    }
    if !(dq > radius) {
        return Err(AnalyticError::InfeasiblePoint("q"));
    }

    let e1 = normalized(&sub(p, center)).expect("p is away from the center");
    let cq = sub(q, center);
    let theta = angle_between(&sub(p, center), &cq);
    let collinear = theta.sin() < COLLINEARITY_TOL;
    let e2 = normalized(&reject(&cq, &e1))
        .filter(|_| !collinear)
        .unwrap_or_else(|| orthonormal_complement(&e1).swap_remove(0));
    let on_circle = |angle: f64| -> Vec<f64> {
        center
            .iter()
            .zip(&e1)
            .zip(&e2)
            .map(|((c, a), b)| c + radius * (angle.cos() * a + angle.sin() * b))
            .collect()
    };

    let misses = point_segment_distance(center, p, q) >= radius * (1.0 - SEGMENT_MISS_TOL);
    if misses {
        // Touching point: the boundary point closest to the segment.
        let pq = sub(q, p);
        let t = (dot(&sub(center, p), &pq) / dot(&pq, &pq)).clamp(0.0, 1.0);
        let foot = axpy(p, t, &pq);
        let touch = match normalized(&sub(&foot, center)) {
            Some(u) => axpy(center, radius, &u),
            None => on_circle(0.0),
        };
        let length = dist(p, q);
        return Ok(SphereSolution {
            center: center.to_vec(),
            radius,
            p: p.to_vec(),
            q: q.to_vec(),
            tangent_point_p: touch.clone(),
            tangent_point_q: touch,
            arc_angle: 0.0,
            length,
            energy: length * length,
            multiplicity: Multiplicity::Unique,
            plane: [e1, e2],
            start_angle: 0.0,
        });
    }

    let alpha_p = (radius / dp).acos();
    let alpha_q = (radius / dq).acos();
    let arc_angle = theta - alpha_p - alpha_q;
    debug_assert!(arc_angle > -1e-9, "segment meets the ball but the arc is negative");
    let arc_angle = arc_angle.max(0.0);
    let tp_len = (dp * dp - radius * radius).sqrt();
    let tq_len = (dq * dq - radius * radius).sqrt();
    let length = tp_len + tq_len + radius * arc_angle;
    let multiplicity = if collinear && theta.cos() < 0.0 {
        Multiplicity::RotationalFamily
    } else {
        Multiplicity::Unique
    };
    Ok(SphereSolution {
        center: center.to_vec(),
        radius,
        p: p.to_vec(),
        q: q.to_vec(),
        tangent_point_p: on_circle(alpha_p),
        tangent_point_q: on_circle(theta - alpha_q),
        arc_angle,
        length,
        energy: length * length,
        multiplicity,
        plane: [e1, e2],
        start_angle: alpha_p,
    })
}

/// Splits `n` segments over pieces with the given chord-length functions,
/// minimizing the worst relative deviation from `L / n`.
fn allocate(n: usize, lens: [f64; 3], chord: impl Fn(usize, usize) -> f64) -> [usize; 3] {
    let total: f64 = lens.iter().sum();
    let target = total / n as f64;
    let deviation = |k: [usize; 3]| -> f64 {
        (0..3)
            .map(|i| ((chord(i, k[i]) - target) / target).abs())
            .fold(0.0, f64::max)
    };
    let mut best = ([1, n - 2, 1], f64::INFINITY);
    for n1 in 1..n - 1 {
        let ideal = (lens[1] / total * n as f64).round() as isize;
        for n2 in (ideal - 2).max(1)..=(ideal + 2) {
            let n2 = n2 as usize;
            if n1 + n2 >= n {
                continue;
            }
            let k = [n1, n2, n - n1 - n2];
            let dev = deviation(k);
            if dev < best.1 {
                best = (k, dev);
            }
        }
    }
    best.0
}

/// Samples the segment-arc-segment solution with `n_segments` segments,
/// placing nodes exactly at both tangent points and spreading them so that
/// all segment lengths are as equal as possible.
pub fn sphere_solution_to_curve(solution: &SphereSolution, n_segments: usize) -> Result<DiscreteCurve, AnalyticError> {
    if n_segments < 8 {
        return Err(AnalyticError::InvalidInput("n_segments must be at least 8".into()));
    }
    if solution.is_segment() {
        return Ok(DiscreteCurve::straight(&solution.p, &solution.q, n_segments)?);
    }
    let (tp, tq) = (&solution.tangent_point_p, &solution.tangent_point_q);
    let r = solution.radius;
    let lens = [dist(&solution.p, tp), r * solution.arc_angle, dist(tq, &solution.q)];
    let arc = solution.arc_angle;
    let k = allocate(n_segments, lens, |i, m| {
        if i == 1 {
            2.0 * r * (arc / (2.0 * m as f64)).sin()
        } else {
            lens[i] / m as f64
        }
    });
    let [e1, e2] = &solution.plane;
    let c = &solution.center;
    let mut pts = Vec::with_capacity(n_segments + 1);
    for j in 0..k[0] {
        let t = j as f64 / k[0] as f64;
        pts.push(solution.p.iter().zip(tp).map(|(a, b)| a + t * (b - a)).collect::<Vec<f64>>());
    }
    for j in 0..k[1] {
        let ang = solution.start_angle + arc * j as f64 / k[1] as f64;
        pts.push(
            c.iter()
                .zip(e1)
                .zip(e2)
                .map(|((ci, a), b)| ci + r * (ang.cos() * a + ang.sin() * b))
                .collect(),
        );
    }
    for j in 0..k[2] {
        let t = j as f64 / k[2] as f64;
        pts.push(tq.iter().zip(&solution.q).map(|(a, b)| a + t * (b - a)).collect());
    }
    pts.push(solution.q.clone());
    Ok(DiscreteCurve::from_points(&pts)?)
}

/// Largest turning angle between consecutive discrete velocities.
pub fn max_turning_angle(curve: &DiscreteCurve) -> f64 {
    (1..curve.n_segments())
        .map(|i| {
            let a = sub(curve.node(i), curve.node(i - 1));
            let b = sub(curve.node(i + 1), curve.node(i));
            angle_between(&a, &b)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::norm;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_3, PI};

    #[test]
    fn vision_boundary_of_the_unit_circle() {
        let o = ConvexObstacle::sphere(vec![0.0, 0.0], 1.0).unwrap();
        let vb = vision_boundary(&o, &[-2.0, 0.0], 8).unwrap();
        assert_eq!(vb.points.len(), 2);
        for (x, r) in vb.points.iter().zip(&vb.residuals) {
            assert_abs_diff_eq!(x[0], -0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(x[1].abs(), 3f64.sqrt() / 2.0, epsilon = 1e-15);
            assert!(r.abs() < 1e-12);
        }
        let near = vision_boundary(&o, &[-1.0 - 1e-6, 0.0], 2).unwrap();
        for x in &near.points {
            assert!(dist(x, &[-1.0, 0.0]) < 2e-3);
        }
        assert!(matches!(vision_boundary(&o, &[0.5, 0.0], 4), Err(AnalyticError::InfeasiblePoint(_))));
    }

    #[test]
    fn vision_boundary_of_the_unit_sphere() {
        let o = ConvexObstacle::sphere(vec![0.0; 3], 1.0).unwrap();
        let vb = vision_boundary(&o, &[0.0, 0.0, 2.0], 16).unwrap();
        assert_eq!(vb.points.len(), 16);
        for x in &vb.points {
            assert_abs_diff_eq!(x[2], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(norm(x), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn vision_boundary_by_root_finding_matches_closed_form() {
        // An ellipsoid with equal axes is the sphere; the generic path must agree.
        let round = ConvexObstacle::ellipsoid(vec![0.0; 3], vec![1.0; 3]).unwrap();
        let vb = vision_boundary(&round, &[0.0, 0.0, 2.0], 12).unwrap();
        for x in &vb.points {
            assert_abs_diff_eq!(x[2], 0.5, epsilon = 1e-12);
        }
        let e = ConvexObstacle::ellipsoid(vec![0.5, 0.0], vec![2.0, 1.0]).unwrap();
        let p = [4.0, 1.5];
        let vb = vision_boundary(&e, &p, 2).unwrap();
        assert_eq!(vb.points.len(), 2);
        for (x, r) in vb.points.iter().zip(&vb.residuals) {
            assert!(r.abs() <= 1e-8);
            assert!(e.level(x).abs() <= e.boundary_tol());
        }
        // Independent oracle: tangent lines from p to the ellipse via the polar line.
        // Points x with (x-c)^T A (p-c) = 1 on the ellipse, A = diag(1/4, 1).
        let (u, v) = (p[0] - 0.5, p[1]);
        let mut expected = Vec::new();
        for s in [1.0, -1.0] {
            // Parameterize x - c = (2 cos t, sin t): (u/2) cos t + v sin t = 1.
            let (a, b) = (u / 2.0, v);
            let rr = (a * a + b * b).sqrt();
            let phi = b.atan2(a);
            let t = phi + s * (1.0 / rr).acos();
            expected.push([0.5 + 2.0 * t.cos(), t.sin()]);
        }
        for x in &vb.points {
            assert!(expected.iter().any(|e| dist(x, e) < 1e-9));
        }
    }

    #[test]
    fn canonical_planar_solution() {
        let s = solve_sphere(&[0.0, 0.0], 1.0, &[-2.0, 0.0], &[2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(s.arc_angle, FRAC_PI_3, epsilon = 1e-14);
        assert_abs_diff_eq!(s.length, 2.0 * 3f64.sqrt() + FRAC_PI_3, epsilon = 1e-14);
        assert_abs_diff_eq!(s.length, 4.511300, epsilon = 1e-6);
        assert_abs_diff_eq!(s.energy, 20.351820168169017, epsilon = 1e-12);
        assert_eq!(s.multiplicity, Multiplicity::RotationalFamily);
        assert_abs_diff_eq!(s.tangent_point_p[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.tangent_point_q[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn segment_case() {
        let s = solve_sphere(&[0.0, 0.0], 1.0, &[-2.0, 0.0], &[0.0, 2.0]).unwrap();
        assert!(s.is_segment());
        assert_abs_diff_eq!(s.length, 8f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.energy, 8.0, epsilon = 1e-14);
        assert_eq!(s.multiplicity, Multiplicity::Unique);
        // Grazing segment counts as a segment.
        let g = solve_sphere(&[0.0, 0.0], 1.0, &[-2.0, 1.0], &[2.0, 1.0]).unwrap();
        assert!(g.is_segment());
        assert_abs_diff_eq!(g.tangent_point_p[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn spatial_solution() {
        let s = solve_sphere(&[0.0; 3], 1.0, &[-2.0, 0.0, 0.0], &[3.0, 0.0, 0.0]).unwrap();
        let expected = 3f64.sqrt() + 8f64.sqrt() + (PI - FRAC_PI_3 - (1.0f64 / 3.0).acos());
        assert_abs_diff_eq!(s.length, expected, epsilon = 1e-13);
        assert_abs_diff_eq!(s.length, 5.423914, epsilon = 1e-6);
        assert_eq!(s.multiplicity, Multiplicity::RotationalFamily);
        let off = solve_sphere(&[0.0; 3], 1.0, &[-2.0, 0.1, 0.0], &[3.0, 0.0, 0.0]).unwrap();
        assert_eq!(off.multiplicity, Multiplicity::Unique);
    }

    #[test]
    fn infeasible_endpoints() {
        assert!(matches!(
            solve_sphere(&[0.0, 0.0], 1.0, &[-1.0, 0.0], &[2.0, 0.0]),
            Err(AnalyticError::InfeasiblePoint("p"))
        ));
        assert!(matches!(
            solve_sphere(&[0.0, 0.0], 1.0, &[-2.0, 0.0], &[0.1, 0.0]),
            Err(AnalyticError::InfeasiblePoint("q"))
        ));
    }

    #[test]
    fn discretized_solution() {
        let s = solve_sphere(&[0.0, 0.0], 1.0, &[-2.0, 0.0], &[2.0, 0.0]).unwrap();
        let c = sphere_solution_to_curve(&s, 512).unwrap();
        assert!((c.energy() - s.energy).abs() / s.energy < 1e-4);
        assert!(c.speed_variation() < 0.01);
        assert!(max_turning_angle(&c) <= 2.0 * PI / 512.0);
        let o = ConvexObstacle::sphere(vec![0.0, 0.0], 1.0).unwrap();
        assert!(c.points().all(|x| o.level(x) >= -1e-14));
        assert_eq!(c.first(), &[-2.0, 0.0]);
        assert_eq!(c.last(), &[2.0, 0.0]);
        let straight = solve_sphere(&[0.0, 0.0], 1.0, &[-2.0, 0.0], &[0.0, 2.0]).unwrap();
        assert_eq!(
            sphere_solution_to_curve(&straight, 16).unwrap(),
            DiscreteCurve::straight(&[-2.0, 0.0], &[0.0, 2.0], 16).unwrap()
        );
        assert!(sphere_solution_to_curve(&s, 4).is_err());
    }

    #[test]
    fn discretization_converges() {
        let s = solve_sphere(&[0.0; 3], 1.0, &[-2.0, 0.0, 0.0], &[3.0, 0.0, 0.0]).unwrap();
        let mut prev = f64::INFINITY;
        for n in [64, 128, 256, 512, 1024] {
            let err = (sphere_solution_to_curve(&s, n).unwrap().energy() - s.energy).abs();
            assert!(err * (n * n) as f64 <= 100.0);
            assert!(err < prev);
            prev = err;
        }
    }

    fn rotation(dim: usize, a: f64, b: f64) -> impl Fn(&[f64]) -> Vec<f64> {
        move |x: &[f64]| {
            let mut y = x.to_vec();
            y[0] = a.cos() * x[0] - a.sin() * x[1];
            y[1] = a.sin() * x[0] + a.cos() * x[1];
            if dim == 3 {
                let (u, w) = (y[1], y[2]);
                y[1] = b.cos() * u - b.sin() * w;
                y[2] = b.sin() * u + b.cos() * w;
            }
            y
        }
    }

    fn exterior_point() -> impl Strategy<Value = Vec<f64>> {
        (1.05f64..4.0, 0.0f64..PI, 0.0f64..std::f64::consts::TAU).prop_map(|(r, th, ph)| {
            vec![r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()]
        })
    }

    proptest! {
        #[test]
        fn tangent_points_lie_on_the_vision_boundaries(p in exterior_point(), q in exterior_point()) {
            let s = solve_sphere(&[0.0; 3], 1.0, &p, &q).unwrap();
            prop_assume!(!s.is_segment());
            let o = ConvexObstacle::sphere(vec![0.0; 3], 1.0).unwrap();
            prop_assert!(tangency_residual(&o, &p, &s.tangent_point_p).unwrap().abs() <= 1e-10);
            prop_assert!(tangency_residual(&o, &q, &s.tangent_point_q).unwrap().abs() <= 1e-10);
            let check = dist(&p, &s.tangent_point_p) + dist(&q, &s.tangent_point_q)
                + angle_between(&s.tangent_point_p, &s.tangent_point_q);
            prop_assert!((check - s.length).abs() <= 1e-10);
        }

        #[test]
        fn rigid_motion_invariance(
            p in exterior_point(), q in exterior_point(),
            a in 0.0f64..6.0, b in 0.0f64..6.0,
            t in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let rot = rotation(3, a, b);
            let mv = |x: &[f64]| -> Vec<f64> { rot(x).iter().zip(&t).map(|(u, v)| u + v).collect() };
            let s = solve_sphere(&[0.0; 3], 1.0, &p, &q).unwrap();
            let m = solve_sphere(&t, 1.0, &mv(&p), &mv(&q)).unwrap();
            prop_assert!((s.length - m.length).abs() <= 1e-10);
            prop_assert!((s.energy - m.energy).abs() <= 1e-10 * s.energy.max(1.0));
            if !s.is_segment() && s.multiplicity == Multiplicity::Unique {
                prop_assert!(dist(&mv(&s.tangent_point_p), &m.tangent_point_p) <= 1e-10);
                prop_assert!(dist(&mv(&s.tangent_point_q), &m.tangent_point_q) <= 1e-10);
            }
        }

        #[test]
        fn scaling_covariance(p in exterior_point(), q in exterior_point(), k in 0.1f64..10.0) {
            let s = solve_sphere(&[0.0; 3], 1.0, &p, &q).unwrap();
            let sp: Vec<f64> = p.iter().map(|x| k * x).collect();
            let sq: Vec<f64> = q.iter().map(|x| k * x).collect();
            let m = solve_sphere(&[0.0; 3], k, &sp, &sq).unwrap();
            prop_assert!((m.length - k * s.length).abs() <= 1e-10 * m.length.max(1.0));
            prop_assert!((m.energy - k * k * s.energy).abs() <= 1e-10 * m.energy.max(1.0));
        }
    }

    #[test]
    fn length_grows_along_the_exit_segment() {
        let p = [-2.0, 0.3, 0.1];
        let q = [2.5, -0.2, 0.4];
        let s = solve_sphere(&[0.0; 3], 1.0, &p, &q).unwrap();
        let b = s.tangent_point_q.clone();
        let mut prev = 0.0;
        for k in 1..=100 {
            let t = k as f64 / 100.0;
            let qk: Vec<f64> = b.iter().zip(&q).map(|(u, v)| u + t * (v - u)).collect();
            let len = solve_sphere(&[0.0; 3], 1.0, &p, &qk).unwrap().length;
            assert!(len > prev);
            prev = len;
        }
    }
}

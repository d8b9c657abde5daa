//! Structural checks on candidate minimizers: a single contact interval,
//! straight free parts tangent to the obstacle, a geodesic contact part,
//! the Euler-Lagrange balance and the curvature bound.

use serde::Serialize;
use thiserror::Error;

use crate::curve::{DiscreteCurve, SPEED_VARIATION_TOL};
use crate::obstacle::{ConvexObstacle, ObstacleError};
use crate::vecmath::{angle_between, dot, norm, point_segment_distance, reject, sub};

pub const SCHEMA_VERSION: u32 = 1;
/// Default contact tolerance relative to the obstacle diameter.
pub const CONTACT_TOL_REL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("curve is not constant-speed (segment length variation {0:.3e})")]
    NotConstantSpeed(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Obstacle(#[from] ObstacleError),
}

/// Pass/fail thresholds for [`verify_structure`].
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureTols {
    /// Absolute contact band; `None` means `1e-6 * diameter`.
    pub contact_tol: Option<f64>,
    pub straightness: f64,
    pub tangency: f64,
    pub geodesic: f64,
    pub curvature_slack: f64,
    /// The junction angle must not exceed `junction_angle_factor / N`.
    pub junction_angle_factor: f64,
}

impl Default for StructureTols {
    fn default() -> Self {
        Self {
            contact_tol: None,
            straightness: 1e-6,
            tangency: 1e-4,
            geodesic: 5e-3,
            curvature_slack: 0.05,
            junction_angle_factor: 4.0 * std::f64::consts::PI,
        }
    }
}

impl StructureTols {
    pub fn contact_tol_for(&self, obstacle: &ConvexObstacle) -> f64 {
        self.contact_tol.unwrap_or(CONTACT_TOL_REL * obstacle.diameter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub schema_version: u32,
    pub n_segments: usize,
    /// Inclusive node index intervals `[start, end]` in contact with the boundary.
    pub coincidence_runs: Vec<[usize; 2]>,
    pub straightness_residual: f64,
    pub tangency_residual_p: f64,
    pub tangency_residual_q: f64,
    pub geodesic_residual: f64,
    /// Maximum EL residual over interior non-junction nodes, in units of `L^2`.
    pub el_residual: f64,
    /// Maximum EL residual over junction nodes, in units of `L^2`.
    pub junction_el_residual: f64,
    pub curvature_ratio: f64,
    pub junction_angle: f64,
    pub speed_variation: f64,
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Per-node Euler-Lagrange residuals `|N^2 (x_{i+1} - 2 x_i + x_{i-1}) - A_i|`
/// for `i = 1..N-1`, where `A_i` is the second fundamental form applied to the
/// tangential central-difference velocity at contact nodes and zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElProfile {
    /// Entry `k` belongs to node `k + 1`.
    pub residuals: Vec<f64>,
    /// Node indices of contact-run endpoints.
    pub junctions: Vec<usize>,
}

impl ElProfile {
    fn split_max(&self) -> (f64, f64) {
        let mut interior = 0.0f64;
        let mut junction = 0.0f64;
        for (k, r) in self.residuals.iter().enumerate() {
            if self.junctions.contains(&(k + 1)) {
                junction = junction.max(*r);
            } else {
                interior = interior.max(*r);
            }
        }
        (interior, junction)
    }

    /// Maximum over interior non-junction nodes.
    pub fn interior_max(&self) -> f64 {
        self.split_max().0
    }

    /// Maximum over junction nodes.
    pub fn junction_max(&self) -> f64 {
        self.split_max().1
    }
}

/// Maximal runs of consecutive nodes with `|level| <= contact_tol`.
pub fn extract_coincidence(curve: &DiscreteCurve, obstacle: &ConvexObstacle, contact_tol: f64) -> Vec<[usize; 2]> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, x) in curve.points().enumerate() {
        let touching = obstacle.level(x).abs() <= contact_tol;
        match (touching, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push([s, i - 1]);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push([s, curve.n_segments()]);
    }
    runs
}

fn check_constant_speed(curve: &DiscreteCurve) -> Result<(), StructureError> {
    let v = curve.speed_variation();
    if v > SPEED_VARIATION_TOL {
        return Err(StructureError::NotConstantSpeed(v));
    }
    Ok(())
}

fn junction_nodes(runs: &[[usize; 2]], n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = runs
        .iter()
        .flat_map(|r| [r[0], r[1]])
        .filter(|&i| i > 0 && i < n)
        .collect();
    out.dedup();
    out
}

fn el_profile_with(curve: &DiscreteCurve, obstacle: &ConvexObstacle, contact_tol: f64) -> Result<ElProfile, StructureError> {
    let n = curve.n_segments();
    let nf = n as f64;
    let runs = extract_coincidence(curve, obstacle, contact_tol);
    let mut residuals = Vec::with_capacity(n - 1);
    for (k, acc) in curve.second_differences().enumerate() {
        let i = k + 1;
        let x = curve.node(i);
        let mut lhs: Vec<f64> = acc.iter().map(|a| nf * nf * a).collect();
        if obstacle.level(x).abs() <= contact_tol {
            let nu = obstacle.normal(x)?;
            let v: Vec<f64> = sub(curve.node(i + 1), curve.node(i - 1)).iter().map(|d| 0.5 * nf * d).collect();
            let a = obstacle.second_fundamental_form(x, &reject(&v, &nu))?;
            for (l, ai) in lhs.iter_mut().zip(&a) {
                *l -= ai;
            }
        }
        residuals.push(norm(&lhs));
    }
    Ok(ElProfile {
        residuals,
        junctions: junction_nodes(&runs, n),
    })
}

/// Euler-Lagrange residual per interior node with the default contact band.
pub fn el_residual_profile(curve: &DiscreteCurve, obstacle: &ConvexObstacle) -> Result<ElProfile, StructureError> {
    if curve.dim() != obstacle.dim() {
        return Err(StructureError::DimensionMismatch {
            expected: obstacle.dim(),
            got: curve.dim(),
        });
    }
    check_constant_speed(curve)?;
    el_profile_with(curve, obstacle, CONTACT_TOL_REL * obstacle.diameter())
}

/// Largest distance of nodes `from..=to` from the chord between the end
/// nodes, divided by the chord length.
fn straightness(curve: &DiscreteCurve, from: usize, to: usize) -> f64 {
    let (a, b) = (curve.node(from), curve.node(to));
    let chord = norm(&sub(b, a));
    if to <= from + 1 || chord == 0.0 {
        return 0.0;
    }
    (from + 1..to)
        .map(|i| point_segment_distance(curve.node(i), a, b))
        .fold(0.0, f64::max)
        / chord
}

fn tangency(obstacle: &ConvexObstacle, apex: &[f64], x: &[f64]) -> Result<f64, ObstacleError> {
    let d = sub(x, apex);
    let len = norm(&d);
    if len == 0.0 {
        return Ok(0.0);
    }
    Ok(dot(&d, &obstacle.normal(x)?).abs() / len)
}

fn turning_angle(curve: &DiscreteCurve, i: usize) -> f64 {
    angle_between(&sub(curve.node(i), curve.node(i - 1)), &sub(curve.node(i + 1), curve.node(i)))
}

/// Evaluates every structural property of a candidate minimizer from `p` to `q`.
pub fn verify_structure(
    curve: &DiscreteCurve,
    obstacle: &ConvexObstacle,
    p: &[f64],
    q: &[f64],
    tols: &StructureTols,
) -> Result<StructureReport, StructureError> {
    for x in [curve.first(), p, q] {
        if x.len() != obstacle.dim() {
            return Err(StructureError::DimensionMismatch {
                expected: obstacle.dim(),
                got: x.len(),
            });
        }
    }
    check_constant_speed(curve)?;
    let n = curve.n_segments();
    let contact_tol = tols.contact_tol_for(obstacle);
    let runs = extract_coincidence(curve, obstacle, contact_tol);
    let junctions = junction_nodes(&runs, n);

    let (first, last) = match (runs.first(), runs.last()) {
        (Some(f), Some(l)) => (f[0], l[1]),
        _ => (n, n),
    };
    let straightness_residual = if runs.is_empty() {
        straightness(curve, 0, n)
    } else {
        straightness(curve, 0, first).max(straightness(curve, last, n))
    };
    let (tangency_residual_p, tangency_residual_q) = if runs.is_empty() {
        (0.0, 0.0)
    } else {
        (tangency(obstacle, p, curve.node(first))?, tangency(obstacle, q, curve.node(last))?)
    };

    let mut geodesic_residual = 0.0f64;
    for (k, acc) in curve.second_differences().enumerate() {
        let i = k + 1;
        let x = curve.node(i);
        if junctions.contains(&i) || obstacle.level(x).abs() > contact_tol {
            continue;
        }
        let total = norm(&acc);
        if total == 0.0 {
            continue;
        }
        let tangential = norm(&reject(&acc, &obstacle.normal(x)?));
        geodesic_residual = geodesic_residual.max(tangential / total);
    }

    let profile = el_profile_with(curve, obstacle, contact_tol)?;
    let length = curve.length();
    let units = length * length;
    let (el_interior, el_junction) = profile.split_max();
    let curvature_ratio = curve
        .max_discrete_curvature()
        .map_err(|_| StructureError::NotConstantSpeed(curve.speed_variation()))?
        / obstacle.kappa_max();
    let junction_angle = junctions.iter().map(|&i| turning_angle(curve, i)).fold(0.0, f64::max);

    let mut failures = Vec::new();
    let expect_runs = usize::from(obstacle.segment_meets(p, q));
    if runs.len() != expect_runs {
        failures.push(format!("expected {expect_runs} coincidence runs, found {}", runs.len()));
    }
    if let Some(r) = runs.iter().find(|r| r[1] - r[0] + 1 < 2) {
        failures.push(format!("coincidence run {:?} has fewer than 2 nodes", r));
    }
    let mut check = |name: &str, value: f64, limit: f64| {
        if !(value <= limit) {
            failures.push(format!("{name} {value:.3e} exceeds {limit:.3e}"));
        }
    };
    check("straightness residual", straightness_residual, tols.straightness);
    check("tangency residual at p", tangency_residual_p, tols.tangency);
    check("tangency residual at q", tangency_residual_q, tols.tangency);
    check("geodesic residual", geodesic_residual, tols.geodesic);
    check("curvature ratio", curvature_ratio, 1.0 + tols.curvature_slack);
    check("junction angle", junction_angle, tols.junction_angle_factor / n as f64);

    Ok(StructureReport {
        schema_version: SCHEMA_VERSION,
        n_segments: n,
        coincidence_runs: runs,
        straightness_residual,
        tangency_residual_p,
        tangency_residual_q,
        geodesic_residual,
        el_residual: el_interior / units,
        junction_el_residual: el_junction / units,
        curvature_ratio,
        junction_angle,
        speed_variation: curve.speed_variation(),
        passed: failures.is_empty(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{solve_sphere, sphere_solution_to_curve};
    use std::f64::consts::PI;

    fn disk() -> ConvexObstacle {
        ConvexObstacle::sphere(vec![0.0, 0.0], 1.0).unwrap()
    }

    fn canonical(n: usize) -> DiscreteCurve {
        let s = solve_sphere(&[0.0, 0.0], 1.0, &[-2.0, 0.0], &[2.0, 0.0]).unwrap();
        sphere_solution_to_curve(&s, n).unwrap()
    }

    #[test]
    fn straight_segment_has_no_runs() {
        let c = DiscreteCurve::straight(&[-2.0, 0.0], &[0.0, 2.0], 64).unwrap();
        assert!(extract_coincidence(&c, &disk(), 2e-6).is_empty());
        let r = verify_structure(&c, &disk(), &[-2.0, 0.0], &[0.0, 2.0], &StructureTols::default()).unwrap();
        assert!(r.passed, "{:?}", r.failures);
        assert!(r.straightness_residual < 1e-15);
        let prof = el_residual_profile(&c, &disk()).unwrap();
        assert!(prof.residuals.iter().all(|&v| v < 1e-9 * 64.0 * 64.0));
    }

    #[test]
    fn analytic_curve_has_one_run_over_the_arc() {
        let c = canonical(512);
        let runs = extract_coincidence(&c, &disk(), 2e-6);
        assert_eq!(runs.len(), 1);
        let [a, b] = runs[0];
        assert!(c.node(a)[0] < -0.49 && c.node(b)[0] > 0.49);
        assert!((a..=b).all(|i| c.node(i)[1] >= 0.866));
    }

    #[test]
    fn two_patches_give_two_runs() {
        // Touches the unit circle at the top and at the bottom.
        let pts = vec![
            vec![-2.0, 0.0],
            vec![-1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.6, 1.5],
            vec![1.5, 0.0],
            vec![0.6, -0.8],
            vec![0.0, -1.0],
            vec![1.0, -1.5],
            vec![2.0, -1.0],
        ];
        let c = DiscreteCurve::from_points(&pts).unwrap();
        assert_eq!(extract_coincidence(&c, &disk(), 1e-9), vec![[2, 2], [5, 6]]);
    }

    #[test]
    fn analytic_curve_passes_the_structure_thresholds() {
        let c = canonical(512);
        let r = verify_structure(&c, &disk(), &[-2.0, 0.0], &[2.0, 0.0], &StructureTols::default()).unwrap();
        assert!(r.passed, "{:?}", r.failures);
        assert!(r.straightness_residual < 1e-10);
        assert!(r.tangency_residual_p < 1e-8 && r.tangency_residual_q < 1e-8);
        assert!(r.geodesic_residual < 1e-3);
        assert!(r.curvature_ratio <= 1.01);
        assert!(r.junction_angle <= 2.0 * PI / 512.0);
    }

    fn displaced(c: &DiscreteCurve, node: usize, angle: f64) -> DiscreteCurve {
        let mut pts: Vec<Vec<f64>> = c.points().map(|p| p.to_vec()).collect();
        let th = pts[node][1].atan2(pts[node][0]) + angle;
        pts[node] = vec![th.cos(), th.sin()];
        DiscreteCurve::from_points(&pts).unwrap()
    }

    #[test]
    fn tangential_corruption_is_detected() {
        let c = canonical(512);
        let runs = extract_coincidence(&c, &disk(), 2e-6);
        let mid = (runs[0][0] + runs[0][1]) / 2;
        let tols = StructureTols::default();
        // A displacement of 0.01 exceeds the node spacing, so the speed check fires first.
        let gross = displaced(&c, mid, 0.01);
        assert!(matches!(
            verify_structure(&gross, &disk(), &[-2.0, 0.0], &[2.0, 0.0], &tols),
            Err(StructureError::NotConstantSpeed(_))
        ));
        // A slip of a quarter percent of the spacing keeps constant speed and is still caught.
        let h = c.length() / 512.0;
        let slight = displaced(&c, mid, 0.0025 * h);
        let r = verify_structure(&slight, &disk(), &[-2.0, 0.0], &[2.0, 0.0], &tols).unwrap();
        assert!(r.geodesic_residual > 0.05);
        assert!(!r.passed);
    }

    #[test]
    fn el_residual_converges_at_second_order() {
        // Oracle: on an arc with angular step t, |N^2 D^2 x - A| = N^2 r t^4 / 4 to leading order.
        let mut prev: Option<f64> = None;
        for n in [128, 256, 512] {
            let c = canonical(n);
            let prof = el_residual_profile(&c, &disk()).unwrap();
            let e = prof.interior_max();
            if let Some(p) = prev {
                assert!((p / e).log2() >= 1.8);
            }
            prev = Some(e);
            let speed = c.length();
            assert!(prof.junction_max() <= 2.0 * disk().kappa_max() * speed * speed);
            assert!(prof.junction_max() > 0.1);
        }
    }

    #[test]
    fn non_constant_speed_is_rejected() {
        let c = DiscreteCurve::from_points(&[vec![-2.0, 0.0], vec![-1.9, 0.5], vec![0.0, 2.0]]).unwrap();
        assert!(matches!(el_residual_profile(&c, &disk()), Err(StructureError::NotConstantSpeed(_))));
        assert!(matches!(
            verify_structure(&c, &disk(), &[-2.0, 0.0], &[0.0, 2.0], &StructureTols::default()),
            Err(StructureError::NotConstantSpeed(_))
        ));
    }
}

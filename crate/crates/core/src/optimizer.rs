//! Multi-start projected gradient descent for the discrete energy.
//!
//! Each start runs an accelerated projected gradient method: a Nesterov
//! momentum step is tried first and kept only if it lowers the energy;
//! otherwise momentum is reset and a plain projected step is taken under the
//! configured step rule. Every iterate is feasible because all interior nodes
//! that land inside the obstacle are projected back onto its boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, DiscreteCurve};
use crate::obstacle::{ConvexObstacle, ObstacleError};
use crate::vecmath::{dot, normalized, orthonormal_complement, sub};

/// Iterations between constant-speed reparameterizations.
pub const REPARAM_INTERVAL: usize = 500;
/// Iterations between convergence checks.
pub const CHECK_INTERVAL: usize = 10;
const MAX_BACKTRACKS: usize = 60;
/// Nodes this far inside (relative to the diameter) are left alone, so that
/// projected nodes are not re-projected on rounding noise.
const INSIDE_TOL_REL: f64 = 1e-14;
const SNAP_REL: f64 = 64.0 * f64::EPSILON;
/// Multiple of the coordinate rounding error tolerated in energy comparisons.
const ROUNDING_SLACK: f64 = 4.0;
/// Distance of detour apexes from the obstacle, in bounding radii.
const DETOUR_HEIGHT: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    FixedStep(f64),
    BacktrackingArmijo { c: f64, shrink: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::BacktrackingArmijo { c: 1e-4, shrink: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub n_segments: usize,
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Tolerance on `max |projected gradient| / N`.
    pub grad_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            n_segments: 512,
            max_iters: 200_000,
            step_rule: StepRule::default(),
            grad_tol: 1e-10,
            n_starts: 8,
            seed: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidConfig(m.to_string()));
        if self.n_segments < 2 {
            return bad("n_segments must be at least 2");
        }
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return bad("grad_tol must be positive");
        }
        if self.n_starts < 1 {
            return bad("n_starts must be at least 1");
        }
        match self.step_rule {
            StepRule::FixedStep(eta) if !(eta > 0.0 && eta.is_finite()) => bad("fixed step must be positive"),
            StepRule::BacktrackingArmijo { c, shrink } if !(c > 0.0 && c < 1.0 && shrink > 0.0 && shrink < 1.0) => {
                bad("Armijo parameters must lie in (0, 1)")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub curve: DiscreteCurve,
    pub energy: f64,
    pub length: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
    /// `max |projected gradient| / N` at the last iterate before reparameterization.
    pub grad_norm: f64,
    /// Energy of the last iterate.
    pub raw_energy: f64,
    /// Energy of the last iterate after reparameterization and projection.
    pub reparameterized_energy: f64,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("endpoint {0} is not strictly outside the obstacle")]
    InfeasibleEndpoints(&'static str),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("endpoint dimension {got} does not match obstacle dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Obstacle(#[from] ObstacleError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error("no start converged within {max_iters} iterations")]
    NoConvergence { max_iters: usize, results: Vec<SolveResult> },
}

fn check_endpoints(p: &[f64], q: &[f64], obstacle: &ConvexObstacle) -> Result<(), SolveError> {
    for (name, x) in [("p", p), ("q", q)] {
        if x.len() != obstacle.dim() {
            return Err(SolveError::DimensionMismatch {
                expected: obstacle.dim(),
                got: x.len(),
            });
        }
        if !obstacle.is_exterior(x) {
            return Err(SolveError::InfeasibleEndpoints(name));
        }
    }
    Ok(())
}

/// Projects every interior node that lies inside the obstacle onto its boundary.
pub fn project_curve_feasible(curve: &DiscreteCurve, obstacle: &ConvexObstacle) -> Result<DiscreteCurve, SolveError> {
    let mut out = curve.clone();
    project_nodes(obstacle, out.dim(), out.interior_mut())?;
    Ok(out)
}

fn project_nodes(obstacle: &ConvexObstacle, dim: usize, interior: &mut [f64]) -> Result<(), ObstacleError> {
    let inside = -INSIDE_TOL_REL * obstacle.diameter();
    for x in interior.chunks_exact_mut(dim) {
        if obstacle.level(x) < inside {
            let y = obstacle.project_to_boundary(x)?;
            x.copy_from_slice(&y);
        }
    }
    Ok(())
}

fn detour_directions(p: &[f64], q: &[f64], n_dirs: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    let dim = p.len();
    let axis = normalized(&sub(q, p)).unwrap_or_else(|| {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        e
    });
    let basis = orthonormal_complement(&axis);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match dim {
        1 => Vec::new(),
        2 => (0..n_dirs)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let height = 1.0 + (k / 2) as f64 * 0.25;
                (basis[0].iter().map(|v| sign * v).collect(), height)
            })
            .collect(),
        3 => {
            let offset = rng.gen::<f64>() * std::f64::consts::TAU / n_dirs as f64;
            (0..n_dirs)
                .map(|k| {
                    let a = offset + std::f64::consts::TAU * k as f64 / n_dirs as f64;
                    let d = basis[0]
                        .iter()
                        .zip(&basis[1])
                        .map(|(u, v)| a.cos() * u + a.sin() * v)
                        .collect();
                    (d, 1.0)
                })
                .collect()
        }
        _ => (0..n_dirs)
            .map(|_| loop {
                let mut d = vec![0.0; dim];
                for b in &basis {
                    let c: f64 = rng.sample(StandardNormal);
                    for (di, bi) in d.iter_mut().zip(b) {
                        *di += c * bi;
                    }
                }
                if let Some(d) = normalized(&d) {
                    break (d, 1.0);
                }
            })
            .collect(),
    }
}

/// Feasible starting curves: the straight segment (when it misses the
/// obstacle) followed by detours `p -> w -> q` whose apex `w` is pushed away
/// from the obstacle in directions orthogonal to `q - p`. When the segment
/// meets the obstacle every start is a detour.
pub fn initial_curves(
    p: &[f64],
    q: &[f64],
    obstacle: &ConvexObstacle,
    n_segments: usize,
    n_starts: usize,
    seed: u64,
) -> Result<Vec<DiscreteCurve>, SolveError> {
    check_endpoints(p, q, obstacle)?;
    if n_starts < 1 {
        return Err(SolveError::InvalidConfig("n_starts must be at least 1".into()));
    }
    let mut curves = Vec::with_capacity(n_starts);
    let meets = obstacle.segment_meets(p, q);
    if !meets {
        curves.push(DiscreteCurve::straight(p, q, n_segments)?);
    }
    let n_dirs = n_starts - curves.len();
    if n_dirs == 0 {
        return Ok(curves);
    }
    let center = obstacle.center();
    let pq = sub(q, p);
    let pq2 = dot(&pq, &pq);
    let t = if pq2 > 0.0 { dot(&sub(center, p), &pq) / pq2 } else { 0.5 };
    let foot: Vec<f64> = p.iter().zip(&pq).map(|(a, d)| a + t * d).collect();
    let reach = DETOUR_HEIGHT * obstacle.bounding_radius();
    for (dir, height) in detour_directions(p, q, n_dirs, seed) {
        let apex: Vec<f64> = foot.iter().zip(&dir).map(|(f, d)| f + reach * height * d).collect();
        let poly = DiscreteCurve::sample_polyline(&[p.to_vec(), apex, q.to_vec()], n_segments)?;
        curves.push(project_curve_feasible(&poly, obstacle)?);
    }
    Ok(curves)
}

/// Resets nodes whose displacement is at rounding level, typically contact
/// nodes pushed inward and projected back to where they were. Their noise
/// would otherwise swamp the energy change near convergence.
fn snap_unmoved(x: &[f64], z: &mut [f64], dim: usize) {
    for (xi, zi) in x.chunks_exact(dim).zip(z.chunks_exact_mut(dim)) {
        let scale = xi.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if xi.iter().zip(zi.iter()).all(|(a, b)| (a - b).abs() <= SNAP_REL * scale) {
            zi.copy_from_slice(xi);
        }
    }
}

/// Size of energy changes caused by rounding the node coordinates alone.
/// Contact nodes carry a large normal force, so an ulp of normal jitter
/// from the projection outweighs the true decrease near convergence.
fn rounding_floor(x: &[f64], dim: usize, n: usize) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut length = 0.0;
    for i in 0..n {
        length += crate::vecmath::dist(&x[i * dim..(i + 1) * dim], &x[(i + 1) * dim..(i + 2) * dim]);
    }
    ROUNDING_SLACK * f64::EPSILON * n as f64 * length * scale
}

/// `2N (2 x_i - x_{i-1} - x_{i+1})` at interior nodes, zero at the endpoints.
fn gradient(x: &[f64], dim: usize, n: usize, g: &mut [f64]) {
    let two_n = 2.0 * n as f64;
    g[..dim].fill(0.0);
    g[n * dim..].fill(0.0);
    for i in 1..n {
        for k in 0..dim {
            let c = i * dim + k;
            g[c] = two_n * ((x[c] - x[c - dim]) - (x[c + dim] - x[c]));
        }
    }
}

fn energy_of(x: &[f64], dim: usize, n: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..n * dim {
        let d = x[c + dim] - x[c];
        s += d * d;
    }
    n as f64 * s
}

/// `E(x + s) - E(x)` without cancellation against the full energies.
fn energy_delta(x: &[f64], s: &[f64], dim: usize, n: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..n * dim {
        let ds = s[c + dim] - s[c];
        let dx = x[c + dim] - x[c];
        acc += ds * (2.0 * dx + ds);
    }
    n as f64 * acc
}

/// `max |P g| / N`, where `P` removes the inward-blocked normal component of
/// the gradient at nodes on the obstacle boundary.
fn projected_gradient_inf(
    obstacle: &ConvexObstacle,
    x: &[f64],
    g: &[f64],
    dim: usize,
    n: usize,
) -> Result<f64, ObstacleError> {
    let mut worst = 0.0f64;
    for i in 1..n {
        let xi = &x[i * dim..(i + 1) * dim];
        let gi = &g[i * dim..(i + 1) * dim];
        let mut gp = gi.to_vec();
        if obstacle.level(xi).abs() <= obstacle.boundary_tol() {
            let nu = obstacle.normal(xi)?;
            let gn = dot(gi, &nu);
            if gn > 0.0 {
                for (a, b) in gp.iter_mut().zip(&nu) {
                    *a -= gn * b;
                }
            }
        }
        worst = gp.iter().fold(worst, |m, v| m.max(v.abs()));
    }
    Ok(worst / n as f64)
}

/// `max |projected gradient| / N` of a feasible curve.
pub fn projected_gradient_norm(curve: &DiscreteCurve, obstacle: &ConvexObstacle) -> Result<f64, ObstacleError> {
    let (dim, n) = (curve.dim(), curve.n_segments());
    let mut g = vec![0.0; curve.as_slice().len()];
    gradient(curve.as_slice(), dim, n, &mut g);
    projected_gradient_inf(obstacle, curve.as_slice(), &g, dim, n)
}

fn reparameterized(x: &[f64], dim: usize, obstacle: &ConvexObstacle) -> Result<Vec<f64>, SolveError> {
    let curve = DiscreteCurve::new(dim, x.to_vec())?.reparameterize_constant_speed()?;
    Ok(project_curve_feasible(&curve, obstacle)?.as_slice().to_vec())
}

/// Runs one start to convergence. `observe` receives `(iteration, energy)`
/// after every iteration.
pub fn descend(
    initial: &DiscreteCurve,
    obstacle: &ConvexObstacle,
    config: &SolveConfig,
    start_index: usize,
    mut observe: impl FnMut(usize, f64),
) -> Result<SolveResult, SolveError> {
    config.validate()?;
    check_endpoints(initial.first(), initial.last(), obstacle)?;
    let (dim, n) = (initial.dim(), initial.n_segments());
    let base_step = match config.step_rule {
        StepRule::FixedStep(eta) => eta,
        StepRule::BacktrackingArmijo { .. } => 1.0 / (8.0 * n as f64),
    };

    let mut x = project_curve_feasible(initial, obstacle)?.as_slice().to_vec();
    let len = x.len();
    let mut x_prev = x.clone();
    let mut energy = energy_of(&x, dim, n);
    let mut t = 1.0f64;
    let (mut g, mut y, mut z, mut s) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut noise = rounding_floor(&x, dim, n);

    // Trial point `base - eta * g(base)`, projected; returns the energy change relative to `x`.
    let trial = |base: &[f64], g: &[f64], eta: f64, x: &[f64], z: &mut [f64], s: &mut [f64]| -> Result<f64, ObstacleError> {
        z[..dim].copy_from_slice(&x[..dim]);
        z[n * dim..].copy_from_slice(&x[n * dim..]);
        for c in dim..n * dim {
            z[c] = base[c] - eta * g[c];
        }
        project_nodes(obstacle, dim, &mut z[dim..n * dim])?;
        snap_unmoved(x, z, dim);
        for c in 0..len {
            s[c] = z[c] - x[c];
        }
        Ok(energy_delta(x, s, dim, n))
    };

    loop {
        if iterations % CHECK_INTERVAL == 0 {
            gradient(&x, dim, n, &mut g);
            grad_norm = projected_gradient_inf(obstacle, &x, &g, dim, n)?;
            noise = rounding_floor(&x, dim, n);
            if grad_norm <= config.grad_tol {
                converged = true;
                break;
            }
        }
        if iterations >= config.max_iters {
            break;
        }
        iterations += 1;

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let mut moved = false;
        if beta > 0.0 {
            for c in 0..len {
                y[c] = x[c] + beta * (x[c] - x_prev[c]);
            }
            gradient(&y, dim, n, &mut g);
            let de = trial(&y, &g, base_step, &x, &mut z, &mut s)?;
            if de <= noise {
                std::mem::swap(&mut x_prev, &mut x);
                x.copy_from_slice(&z);
                energy += de;
                t = t_next;
                moved = true;
            }
        }
        if !moved {
            t = 1.0;
            gradient(&x, dim, n, &mut g);
            let mut eta = base_step;
            for _ in 0..MAX_BACKTRACKS {
                let de = trial(&x, &g, eta, &x, &mut z, &mut s)?;
                let accept = match config.step_rule {
                    StepRule::FixedStep(_) => true,
                    StepRule::BacktrackingArmijo { c, .. } => de <= (c * dot(&g, &s)).min(0.0) + noise,
                };
                if accept {
                    std::mem::swap(&mut x_prev, &mut x);
                    x.copy_from_slice(&z);
                    energy += de;
                    t = 0.5 * (1.0 + 5f64.sqrt());
                    moved = true;
                    break;
                }
                if let StepRule::BacktrackingArmijo { shrink, .. } = config.step_rule {
                    eta *= shrink;
                }
            }
        }
        if !moved {
            // No descent step exists at working precision.
            gradient(&x, dim, n, &mut g);
            grad_norm = projected_gradient_inf(obstacle, &x, &g, dim, n)?;
            converged = grad_norm <= config.grad_tol;
            break;
        }

        if iterations % REPARAM_INTERVAL == 0 {
            let r = reparameterized(&x, dim, obstacle)?;
            for c in 0..len {
                s[c] = r[c] - x[c];
            }
            if energy_delta(&x, &s, dim, n) <= 0.0 {
                x = r;
            }
            x_prev.copy_from_slice(&x);
            t = 1.0;
            energy = energy_of(&x, dim, n);
        }
        observe(iterations, energy);
    }

    let raw_energy = energy_of(&x, dim, n);
    let r = reparameterized(&x, dim, obstacle)?;
    let reparameterized_energy = energy_of(&r, dim, n);
    let mut final_nodes = x;
    if reparameterized_energy <= raw_energy {
        let keep = !converged || {
            let rc = DiscreteCurve::new(dim, r.clone())?;
            projected_gradient_norm(&rc, obstacle)? <= config.grad_tol
        };
        if keep {
            final_nodes = r;
        }
    }
    let curve = DiscreteCurve::new(dim, final_nodes)?;
    Ok(SolveResult {
        energy: curve.energy(),
        length: curve.length(),
        curve,
        iterations,
        converged,
        start_index,
        grad_norm,
        raw_energy,
        reparameterized_energy,
    })
}

/// Solves from every initial curve in parallel. Results are sorted by energy,
/// ties broken by start index. If no start converges the results are returned
/// inside [`SolveError::NoConvergence`].
pub fn solve(p: &[f64], q: &[f64], obstacle: &ConvexObstacle, config: &SolveConfig) -> Result<Vec<SolveResult>, SolveError> {
    config.validate()?;
    check_endpoints(p, q, obstacle)?;
    if p == q {
        let curve = DiscreteCurve::straight(p, q, config.n_segments)?;
        return Ok((0..config.n_starts)
            .map(|k| SolveResult {
                curve: curve.clone(),
                energy: 0.0,
                length: 0.0,
                iterations: 0,
                converged: true,
                start_index: k,
                grad_norm: 0.0,
                raw_energy: 0.0,
                reparameterized_energy: 0.0,
            })
            .collect());
    }
    let starts = initial_curves(p, q, obstacle, config.n_segments, config.n_starts, config.seed)?;
    let mut results = starts
        .par_iter()
        .enumerate()
        .map(|(k, c)| descend(c, obstacle, config, k, |_, _| {}))
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.start_index.cmp(&b.start_index)));
    for r in &results {
        log::debug!(
            "start {}: energy {:.12} iterations {} converged {}",
            r.start_index,
            r.energy,
            r.iterations,
            r.converged
        );
    }
    if results.iter().all(|r| !r.converged) {
        return Err(SolveError::NoConvergence {
            max_iters: config.max_iters,
            results,
        });
    }
    Ok(results)
}

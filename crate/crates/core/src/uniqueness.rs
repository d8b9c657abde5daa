//! Empirical uniqueness maps: multi-start solves over a grid of targets `q`,
//! clustering of the converged curves, and a box-counting dimension estimate
//! of the set where several minimizers coexist.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::DiscreteCurve;
use crate::obstacle::ConvexObstacle;
use crate::optimizer::{solve, SolveConfig, SolveError, SolveResult};
use crate::vecmath::dist;

pub const SCHEMA_VERSION: u32 = 1;
/// Default clustering distance relative to the obstacle diameter.
pub const CLUSTER_TOL_REL: f64 = 0.02;
pub const ENERGY_EQUAL_TOL: f64 = 1e-5;
/// Fewest NonUnique points accepted by [`estimate_dimension`].
pub const MIN_DIMENSION_POINTS: usize = 10;
const MIN_SCALES: usize = 4;
/// Box counts below this end the scale ladder (once `MIN_SCALES` are in).
const MIN_BOXES: usize = 4;
const MAX_OFFSETS_PER_AXIS: usize = 8;

#[derive(Debug, Error)]
pub enum UniquenessError {
    #[error("no converged results to cluster")]
    EmptyInput,
    #[error("need at least {needed} NonUnique points, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("invalid scan setup: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimizerCluster {
    /// Lowest-energy member.
    pub representative: DiscreteCurve,
    pub energy: f64,
    pub members: usize,
    pub start_indices: Vec<usize>,
}

/// Symmetric Hausdorff distance between the node sets of two curves.
pub fn hausdorff(a: &DiscreteCurve, b: &DiscreteCurve) -> f64 {
    fn directed(a: &DiscreteCurve, b: &DiscreteCurve, floor: f64) -> f64 {
        let mut worst = floor;
        for x in a.points() {
            let mut best = f64::INFINITY;
            for y in b.points() {
                let d = dist(x, y);
                if d < best {
                    best = d;
                    if best <= worst {
                        break;
                    }
                }
            }
            worst = worst.max(best);
        }
        worst
    }
    let ab = directed(a, b, 0.0);
    directed(b, a, ab)
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

/// Single-linkage clusters of the converged results under Hausdorff distance
/// `cluster_tol`, sorted by energy. Only clusters within `energy_equal_tol`
/// (relative) of the best energy are returned.
pub fn cluster_minimizers(
    results: &[SolveResult],
    cluster_tol: f64,
    energy_equal_tol: f64,
) -> Result<Vec<MinimizerCluster>, UniquenessError> {
    let admitted: Vec<&SolveResult> = results.iter().filter(|r| r.converged).collect();
    if admitted.is_empty() {
        return Err(UniquenessError::EmptyInput);
    }
    let m = admitted.len();
    let mut parent: Vec<usize> = (0..m).collect();
    for i in 0..m {
        for j in i + 1..m {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj && hausdorff(&admitted[i].curve, &admitted[j].curve) <= cluster_tol {
                parent[rj] = ri;
            }
        }
    }
    let mut groups: Vec<Vec<&SolveResult>> = Vec::new();
    let mut slot = vec![usize::MAX; m];
    for i in 0..m {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(admitted[i]);
    }
    let mut clusters: Vec<MinimizerCluster> = groups
        .into_iter()
        .map(|mut g| {
            g.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.start_index.cmp(&b.start_index)));
            let mut start_indices: Vec<usize> = g.iter().map(|r| r.start_index).collect();
            start_indices.sort_unstable();
            MinimizerCluster {
                representative: g[0].curve.clone(),
                energy: g[0].energy,
                members: g.len(),
                start_indices,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.start_indices[0].cmp(&b.start_indices[0])));
    let best = clusters[0].energy;
    clusters.retain(|c| (c.energy - best).abs() <= energy_equal_tol * best.abs());
    Ok(clusters)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Unique,
    NonUnique,
    Infeasible,
    Unconverged,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Unique => "Unique",
            Label::NonUnique => "NonUnique",
            Label::Infeasible => "Infeasible",
            Label::Unconverged => "Unconverged",
        }
    }
}

/// Axis-aligned box `[lo, hi]` of target points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub solver: SolveConfig,
    /// Absolute clustering distance; `None` means `0.02 * diameter`.
    pub cluster_tol: Option<f64>,
    pub energy_equal_tol: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            solver: SolveConfig::default(),
            cluster_tol: None,
            energy_equal_tol: ENERGY_EQUAL_TOL,
        }
    }
}

/// Labels over a rectangular lattice `lo + k * spacing`; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanMap {
    pub schema_version: u32,
    pub p: Vec<f64>,
    pub region: Region,
    pub spacing: f64,
    pub shape: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub energies: Vec<Option<f64>>,
    pub cluster_counts: Vec<usize>,
}

impl ScanMap {
    /// Multi-index of flat position `flat`.
    pub fn grid_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        let mut rem = flat;
        for k in (0..self.shape.len()).rev() {
            idx[k] = rem % self.shape[k];
            rem /= self.shape[k];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, s)| acc * s + i)
    }

    /// Flat positions of the lattice neighbors (all `3^d - 1` offsets).
    pub fn neighbors(&self, flat: usize) -> Vec<usize> {
        let base = self.grid_index(flat);
        let d = base.len();
        let mut out = Vec::new();
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            let mut idx = Vec::with_capacity(d);
            let mut ok = true;
            let mut zero = true;
            for k in 0..d {
                let off = (c % 3) as isize - 1;
                c /= 3;
                zero &= off == 0;
                let v = base[k] as isize + off;
                if v < 0 || v >= self.shape[k] as isize {
                    ok = false;
                    break;
                }
                idx.push(v as usize);
            }
            if ok && !zero {
                out.push(self.flat_index(&idx));
            }
        }
        out
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// CSV with header `qx,qy[,qz],label,energy,clusters`.
    pub fn to_csv(&self) -> String {
        let names = ["qx", "qy", "qz"];
        let d = self.shape.len();
        let mut out: String = (0..d)
            .map(|k| names.get(k).map(|s| s.to_string()).unwrap_or_else(|| format!("q{k}")))
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(",label,energy,clusters\n");
        for i in 0..self.points.len() {
            for v in &self.points[i] {
                out.push_str(&format!("{v:.16e},"));
            }
            let e = self.energies[i].map(|e| format!("{e:.16e}")).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", self.labels[i].as_str(), e, self.cluster_counts[i]));
        }
        out
    }
}

fn lattice(region: &Region, spacing: f64) -> Result<(Vec<usize>, Vec<Vec<f64>>), UniquenessError> {
    if region.lo.len() != region.hi.len() || region.lo.is_empty() {
        return Err(UniquenessError::InvalidInput("region bounds must have equal, nonzero length".into()));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(UniquenessError::InvalidInput("spacing must be positive".into()));
    }
    let mut shape = Vec::new();
    for (lo, hi) in region.lo.iter().zip(&region.hi) {
        if !(hi >= lo) {
            return Err(UniquenessError::InvalidInput("region must satisfy lo <= hi".into()));
        }
        shape.push(((hi - lo) / spacing + 1e-9).floor() as usize + 1);
    }
    let total: usize = shape.iter().product();
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut q = vec![0.0; shape.len()];
        for k in (0..shape.len()).rev() {
            q[k] = region.lo[k] + (rem % shape[k]) as f64 * spacing;
            rem /= shape[k];
        }
        points.push(q);
    }
    Ok((shape, points))
}

/// Solves from `p` to every lattice point of `region` and labels each point by
/// the number of minimizer clusters found.
pub fn scan(
    p: &[f64],
    obstacle: &ConvexObstacle,
    region: &Region,
    spacing: f64,
    config: &ScanConfig,
) -> Result<ScanMap, UniquenessError> {
    if p.len() != obstacle.dim() || region.lo.len() != obstacle.dim() {
        return Err(UniquenessError::InvalidInput("dimensions of p, region and obstacle differ".into()));
    }
    if !obstacle.is_exterior(p) {
        return Err(UniquenessError::InvalidInput("p must lie outside the obstacle".into()));
    }
    config
        .solver
        .validate()
        .map_err(|e| UniquenessError::InvalidInput(e.to_string()))?;
    let (shape, points) = lattice(region, spacing)?;
    let cluster_tol = config.cluster_tol.unwrap_or(CLUSTER_TOL_REL * obstacle.diameter());

    let cells: Vec<(Label, Option<f64>, usize)> = points
        .par_iter()
        .map(|q| {
            if !obstacle.is_exterior(q) {
                return (Label::Infeasible, None, 0);
            }
            match solve(p, q, obstacle, &config.solver) {
                Ok(results) => match cluster_minimizers(&results, cluster_tol, config.energy_equal_tol) {
                    Ok(clusters) => {
                        let label = if clusters.len() >= 2 { Label::NonUnique } else { Label::Unique };
                        (label, Some(clusters[0].energy), clusters.len())
                    }
                    Err(_) => (Label::Unconverged, Some(results[0].energy), 0),
                },
                Err(SolveError::NoConvergence { results, .. }) => {
                    (Label::Unconverged, results.first().map(|r| r.energy), 0)
                }
                Err(e) => {
                    log::warn!("solve failed at q = {q:?}: {e}");
                    (Label::Unconverged, None, 0)
                }
            }
        })
        .collect();

    let mut labels = Vec::with_capacity(cells.len());
    let mut energies = Vec::with_capacity(cells.len());
    let mut cluster_counts = Vec::with_capacity(cells.len());
    for (l, e, c) in cells {
        labels.push(l);
        energies.push(e);
        cluster_counts.push(c);
    }
    Ok(ScanMap {
        schema_version: SCHEMA_VERSION,
        p: p.to_vec(),
        region: region.clone(),
        spacing,
        shape,
        points,
        labels,
        energies,
        cluster_counts,
    })
}

/// Box-counting dimension of the NonUnique set: boxes of side
/// `spacing * 2^k` are counted on the lattice indices, and the slope of
/// `log count` against `log(1 / side)` is fitted by least squares.
pub fn estimate_dimension(map: &ScanMap) -> Result<f64, UniquenessError> {
    let occupied: Vec<Vec<usize>> = (0..map.labels.len())
        .filter(|&i| map.labels[i] == Label::NonUnique)
        .map(|i| map.grid_index(i))
        .collect();
    if occupied.len() < MIN_DIMENSION_POINTS {
        return Err(UniquenessError::InsufficientData {
            needed: MIN_DIMENSION_POINTS,
            found: occupied.len(),
        });
    }
    let dim = map.shape.len();
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for k in 0..usize::BITS as usize - 1 {
        let count = min_box_count(&occupied, dim, k);
        if samples.len() >= MIN_SCALES && count < MIN_BOXES {
            break;
        }
        let side = map.spacing * (1u64 << k) as f64;
        samples.push(((1.0 / side).ln(), (count as f64).ln()));
        if count == 1 {
            break;
        }
    }
    if samples.len() < 2 {
        return Err(UniquenessError::InsufficientData {
            needed: MIN_SCALES,
            found: samples.len(),
        });
    }
    let m = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / m;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / m;
    let sxy: f64 = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum();
    let sxx: f64 = samples.iter().map(|s| (s.0 - mx) * (s.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Fewest boxes of side `2^k` cells covering `occupied`, over a set of grid offsets.
fn min_box_count(occupied: &[Vec<usize>], dim: usize, k: usize) -> usize {
    let side = 1usize << k;
    let per_axis = side.min(MAX_OFFSETS_PER_AXIS);
    let stride = side / per_axis;
    let n_offsets = per_axis.pow(dim as u32);
    let mut best = usize::MAX;
    let mut boxes = std::collections::HashSet::with_capacity(occupied.len());
    for o in 0..n_offsets {
        let mut rest = o;
        let shift: Vec<usize> = (0..dim)
            .map(|_| {
                let s = (rest % per_axis) * stride;
                rest /= per_axis;
                s
            })
            .collect();
        boxes.clear();
        for idx in occupied {
            let key: Vec<usize> = idx.iter().zip(&shift).map(|(i, s)| (i + s) >> k).collect();
            boxes.insert(key);
        }
        best = best.min(boxes.len());
    }
    best
}

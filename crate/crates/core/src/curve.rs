//! Discrete curves on the uniform parameter grid `t_i = i / N`.
//!
//! The discrete energy `N * sum |x_{i+1} - x_i|^2` is the exact Dirichlet
//! energy of the piecewise-linear interpolant, so the Cauchy-Schwarz bound
//! `L^2 <= E` holds exactly for every curve, with equality iff all segments
//! have the same length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vecmath::{dist, norm};

/// Segment-length variation above which a curve is not treated as constant-speed.
pub const SPEED_VARIATION_TOL: f64 = 0.01;
/// Curves shorter than this cannot be reparameterized.
pub const MIN_LENGTH: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("a curve needs at least 2 segments, got {0}")]
    TooFewSegments(usize),
    #[error("node buffer of length {len} does not hold whole points of dimension {dim}")]
    DimensionMismatch { dim: usize, len: usize },
    #[error("curve has non-finite coordinates")]
    NonFinite,
    #[error("curve is degenerate (length {0:e})")]
    DegenerateCurve(f64),
    #[error("curve is not constant-speed (segment length variation {0:.3e})")]
    NotConstantSpeed(f64),
    #[error("refinement factor must be at least 2, got {0}")]
    InvalidFactor(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Ordered nodes `x_0 = p, ..., x_N = q` stored in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    dim: usize,
    nodes: Vec<f64>,
}

impl DiscreteCurve {
    pub fn new(dim: usize, nodes: Vec<f64>) -> Result<Self, CurveError> {
        if dim == 0 || nodes.len() % dim != 0 {
            return Err(CurveError::DimensionMismatch { dim, len: nodes.len() });
        }
        let count = nodes.len() / dim;
        if count < 3 {
            return Err(CurveError::TooFewSegments(count.saturating_sub(1)));
        }
        if nodes.iter().any(|v| !v.is_finite()) {
            return Err(CurveError::NonFinite);
        }
        Ok(Self { dim, nodes })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self, CurveError> {
        let dim = points.first().map_or(0, |p| p.len());
        if points.iter().any(|p| p.len() != dim) {
            return Err(CurveError::DimensionMismatch {
                dim,
                len: points.iter().map(|p| p.len()).sum(),
            });
        }
        Self::new(dim, points.concat())
    }

    /// Uniformly sampled straight segment from `p` to `q`.
    pub fn straight(p: &[f64], q: &[f64], n_segments: usize) -> Result<Self, CurveError> {
        if p.len() != q.len() {
            return Err(CurveError::DimensionMismatch { dim: p.len(), len: q.len() });
        }
        let n = n_segments;
        let mut nodes = Vec::with_capacity((n + 1) * p.len());
        nodes.extend_from_slice(p);
        for i in 1..n {
            let t = i as f64 / n as f64;
            nodes.extend(p.iter().zip(q).map(|(a, b)| a + t * (b - a)));
        }
        nodes.extend_from_slice(q);
        Self::new(p.len(), nodes)
    }

    /// Constant-speed sampling of the polyline through `vertices` with
    /// `n_segments` segments. The first and last vertices become the endpoints.
    pub fn sample_polyline(vertices: &[Vec<f64>], n_segments: usize) -> Result<Self, CurveError> {
        let dim = vertices.first().map_or(0, |v| v.len());
        let coarse = Self {
            dim,
            nodes: vertices.concat(),
        };
        if vertices.len() < 2 || dim == 0 {
            return Err(CurveError::TooFewSegments(vertices.len().saturating_sub(1)));
        }
        coarse.resample(n_segments)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_segments(&self) -> usize {
        self.nodes.len() / self.dim - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len() / self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first(&self) -> &[f64] {
        self.node(0)
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.n_segments())
    }

    /// Flat node buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.nodes
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    /// Mutable access to the interior nodes only; the endpoints stay fixed.
    pub fn interior_mut(&mut self) -> &mut [f64] {
        let d = self.dim;
        let end = self.nodes.len() - d;
        &mut self.nodes[d..end]
    }

    pub fn segment_lengths(&self) -> Vec<f64> {
        let d = self.dim;
        self.nodes
            .windows(2 * d)
            .step_by(d)
            .map(|w| dist(&w[..d], &w[d..]))
            .collect()
    }

    /// `N * sum |x_{i+1} - x_i|^2`.
    pub fn energy(&self) -> f64 {
        let n = self.n_segments() as f64;
        let d = self.dim;
        let mut s = 0.0;
        for w in self.nodes.windows(2 * d).step_by(d) {
            for k in 0..d {
                let diff = w[d + k] - w[k];
                s += diff * diff;
            }
        }
        n * s
    }

    pub fn length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }

    /// `max_i |s_i - L/N| / (L/N)` over segment lengths `s_i`.
    pub fn speed_variation(&self) -> f64 {
        let lens = self.segment_lengths();
        let mean = lens.iter().sum::<f64>() / lens.len() as f64;
        if mean == 0.0 {
            return 0.0;
        }
        lens.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max) / mean
    }

    /// Resamples the same polyline at `n_segments` equal arclength steps.
    pub fn resample(&self, n_segments: usize) -> Result<Self, CurveError> {
        if n_segments < 2 {
            return Err(CurveError::TooFewSegments(n_segments));
        }
        let d = self.dim;
        let lens = self.segment_lengths();
        let total: f64 = lens.iter().sum();
        if !(total >= MIN_LENGTH) {
            return Err(CurveError::DegenerateCurve(total));
        }
        let mut nodes = Vec::with_capacity((n_segments + 1) * d);
        nodes.extend_from_slice(self.first());
        let mut seg = 0;
        let mut seg_start = 0.0;
        for i in 1..n_segments {
            let target = total * i as f64 / n_segments as f64;
            while seg + 1 < lens.len() && seg_start + lens[seg] < target {
                seg_start += lens[seg];
                seg += 1;
            }
            let a = self.node(seg);
            let b = self.node(seg + 1);
            let t = if lens[seg] > 0.0 {
                ((target - seg_start) / lens[seg]).clamp(0.0, 1.0)
            } else {
                0.0
            };
            nodes.extend(a.iter().zip(b).map(|(x, y)| x + t * (y - x)));
        }
        nodes.extend_from_slice(self.last());
        Self::new(d, nodes)
    }

    /// Same polyline, nodes at equal arclength spacing, same `N`.
    pub fn reparameterize_constant_speed(&self) -> Result<Self, CurveError> {
        self.resample(self.n_segments())
    }

    /// Inserts `factor - 1` equally spaced nodes in every segment.
    pub fn refine(&self, factor: usize) -> Result<Self, CurveError> {
        if factor < 2 {
            return Err(CurveError::InvalidFactor(factor));
        }
        let d = self.dim;
        let n = self.n_segments();
        let mut nodes = Vec::with_capacity((n * factor + 1) * d);
        for i in 0..n {
            let a = self.node(i);
            let b = self.node(i + 1);
            nodes.extend_from_slice(a);
            for j in 1..factor {
                let t = j as f64 / factor as f64;
                nodes.extend(a.iter().zip(b).map(|(x, y)| x + t * (y - x)));
            }
        }
        nodes.extend_from_slice(self.last());
        Self::new(d, nodes)
    }

    /// `max |x_{i+1} - 2 x_i + x_{i-1}| / h^2` over interior nodes with
    /// `h = L / N`: the discrete curvature of a constant-speed curve.
    pub fn max_discrete_curvature(&self) -> Result<f64, CurveError> {
        let variation = self.speed_variation();
        if variation > SPEED_VARIATION_TOL {
            return Err(CurveError::NotConstantSpeed(variation));
        }
        let h = self.length() / self.n_segments() as f64;
        if !(h > 0.0) {
            return Err(CurveError::DegenerateCurve(0.0));
        }
        Ok(self.second_differences().map(|a| norm(&a)).fold(0.0, f64::max) / (h * h))
    }

    /// `x_{i+1} - 2 x_i + x_{i-1}` for `i = 1..N-1`.
    pub fn second_differences(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let d = self.dim;
        self.nodes.windows(3 * d).step_by(d).map(move |w| {
            (0..d)
                .map(|k| (w[2 * d + k] - w[d + k]) - (w[d + k] - w[k]))
                .collect()
        })
    }

    /// CSV with header `t,x0,...,x{n-1}` and 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let n = self.n_segments();
        let mut out = String::from("t");
        for k in 0..self.dim {
            out.push_str(&format!(",x{k}"));
        }
        out.push('\n');
        for (i, p) in self.points().enumerate() {
            let t = i as f64 / n as f64;
            out.push_str(&format!("{t:.16e}"));
            for v in p {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV written by [`DiscreteCurve::to_csv`]. The file must end
    /// with a newline and the `t` column must be the uniform grid ending at 1,
    /// so truncated files are rejected.
    pub fn from_csv(text: &str) -> Result<Self, CurveError> {
        if !text.is_empty() && !text.ends_with('\n') {
            return Err(CurveError::Parse {
                line: text.lines().count(),
                message: "last line is not terminated (truncated file?)".into(),
            });
        }
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(CurveError::Parse {
            line: 1,
            message: "empty file".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "t" {
            return Err(CurveError::Parse {
                line: 1,
                message: "header must be `t,x0,...`".into(),
            });
        }
        let dim = cols.len() - 1;
        for (k, c) in cols[1..].iter().enumerate() {
            if *c != format!("x{k}") {
                return Err(CurveError::Parse {
                    line: 1,
                    message: format!("expected column `x{k}`, found `{c}`"),
                });
            }
        }
        let mut ts = Vec::new();
        let mut nodes = Vec::new();
        for (idx, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(CurveError::Parse {
                    line: idx + 1,
                    message: format!("expected {} fields, found {}", dim + 1, fields.len()),
                });
            }
            let mut row = Vec::with_capacity(dim + 1);
            for f in fields {
                row.push(f.parse::<f64>().map_err(|e| CurveError::Parse {
                    line: idx + 1,
                    message: format!("`{f}`: {e}"),
                })?);
            }
            ts.push(row[0]);
            nodes.extend_from_slice(&row[1..]);
        }
        if ts.len() < 3 {
            return Err(CurveError::Parse {
                line: ts.len() + 1,
                message: format!("need at least 3 nodes, found {}", ts.len()),
            });
        }
        let n = ts.len() - 1;
        for (i, t) in ts.iter().enumerate() {
            if (t - i as f64 / n as f64).abs() > 1e-12 {
                return Err(CurveError::Parse {
                    line: i + 2,
                    message: format!("parameter column is not the uniform grid i/{n} (truncated file?)"),
                });
            }
        }
        Self::new(dim, nodes)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("curve serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CurveError> {
        serde_json::from_str(text).map_err(|e| CurveError::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRepr {
    nodes: Vec<Vec<f64>>,
}

impl Serialize for DiscreteCurve {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CurveRepr {
            nodes: self.points().map(|p| p.to_vec()).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DiscreteCurve {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = CurveRepr::deserialize(d)?;
        DiscreteCurve::from_points(&repr.nodes).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn circle(radius: f64, n: usize) -> DiscreteCurve {
        let pts: Vec<Vec<f64>> = (0..=n)
            .map(|i| {
                let th = TAU * i as f64 / n as f64;
                vec![radius * th.cos(), radius * th.sin()]
            })
            .collect();
        DiscreteCurve::from_points(&pts).unwrap()
    }

    #[test]
    fn energy_examples() {
        for n in [2, 7, 64] {
            let c = DiscreteCurve::straight(&[0.0, 0.0], &[1.0, 0.0], n).unwrap();
            assert_abs_diff_eq!(c.energy(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(c.length(), 1.0, epsilon = 1e-14);
        }
        let c = DiscreteCurve::straight(&[-2.0, 0.0], &[0.0, 2.0], 64).unwrap();
        assert_abs_diff_eq!(c.energy(), 8.0, epsilon = 1e-12);
        let corner = DiscreteCurve::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(corner.energy(), 4.0);
        assert_eq!(corner.length(), 2.0);
    }

    #[test]
    fn too_few_segments() {
        let err = DiscreteCurve::from_points(&[vec![0.0], vec![1.0]]).unwrap_err();
        assert_eq!(err, CurveError::TooFewSegments(1));
    }

    #[test]
    fn reparameterize_examples() {
        let c = DiscreteCurve::from_points(&[vec![0.0, 0.0], vec![0.9, 0.0], vec![1.0, 0.0]]).unwrap();
        let r = c.reparameterize_constant_speed().unwrap();
        assert_eq!(r.node(0), &[0.0, 0.0]);
        assert_abs_diff_eq!(r.node(1)[0], 0.5, epsilon = 1e-15);
        assert_eq!(r.node(2), &[1.0, 0.0]);

        let circ = circle(1.0, 64);
        let again = circ.reparameterize_constant_speed().unwrap();
        for (a, b) in circ.as_slice().iter().zip(again.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn reparameterize_quarter_circle() {
        // Nonuniform sampling: parameter s^2 along the arc.
        let n = 256;
        let pts: Vec<Vec<f64>> = (0..=n)
            .map(|i| {
                let s = i as f64 / n as f64;
                let th = FRAC_PI_2 * s * s;
                vec![th.cos(), th.sin()]
            })
            .collect();
        let c = DiscreteCurve::from_points(&pts).unwrap();
        let before = c.energy();
        assert!(before - c.length().powi(2) > 1e-2);
        let r = c.reparameterize_constant_speed().unwrap();
        assert!(r.energy() <= before);
        assert!(r.energy() - r.length().powi(2) <= 1e-6);
        assert!((r.length() - c.length()).abs() < 1e-4);
    }

    #[test]
    fn degenerate_curve_cannot_be_reparameterized() {
        let c = DiscreteCurve::from_points(&vec![vec![1.0, 1.0]; 3]).unwrap();
        assert!(matches!(c.reparameterize_constant_speed(), Err(CurveError::DegenerateCurve(_))));
    }

    #[test]
    fn refine_examples() {
        let c = DiscreteCurve::straight(&[0.0, 0.0], &[1.0, 0.0], 2).unwrap();
        let r = c.refine(2).unwrap();
        assert_eq!(r.n_segments(), 4);
        assert_abs_diff_eq!(r.energy(), c.energy(), epsilon = 1e-12);

        let square = DiscreteCurve::from_points(&[
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.0, 2.0],
        ])
        .unwrap();
        let r = square.refine(3).unwrap();
        assert_eq!(r.n_segments(), 12);
        assert_abs_diff_eq!(r.length(), square.length(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.energy(), square.energy(), epsilon = 1e-12);
        let coarse: Vec<Vec<f64>> = r.points().step_by(3).map(|p| p.to_vec()).collect();
        assert_eq!(DiscreteCurve::from_points(&coarse).unwrap(), square);
        assert!(matches!(square.refine(1), Err(CurveError::InvalidFactor(1))));
    }

    #[test]
    fn discrete_curvature_examples() {
        let line = DiscreteCurve::straight(&[0.0, 0.0], &[3.0, 1.0], 16).unwrap();
        assert!(line.max_discrete_curvature().unwrap() < 1e-12);
        assert_abs_diff_eq!(circle(1.0, 256).max_discrete_curvature().unwrap(), 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(circle(2.0, 256).max_discrete_curvature().unwrap(), 0.5, epsilon = 1e-3);
        let uneven = DiscreteCurve::from_points(&[vec![0.0, 0.0], vec![0.9, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(uneven.max_discrete_curvature(), Err(CurveError::NotConstantSpeed(_))));
    }

    #[test]
    fn csv_and_json_round_trip_bit_exact() {
        let c = circle(std::f64::consts::E, 37);
        assert_eq!(DiscreteCurve::from_csv(&c.to_csv()).unwrap(), c);
        assert_eq!(DiscreteCurve::from_json(&c.to_json()).unwrap(), c);
        let csv = c.to_csv();
        assert!(csv.starts_with("t,x0,x1\n"));
    }

    #[test]
    fn truncated_csv_is_rejected() {
        let csv = circle(1.0, 16).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        let cut = lines[..lines.len() - 3].join("\n");
        assert!(matches!(DiscreteCurve::from_csv(&cut), Err(CurveError::Parse { .. })));
        let mid = &csv[..csv.len() - 20];
        assert!(DiscreteCurve::from_csv(mid).is_err());
        assert!(DiscreteCurve::from_csv("t,y0\n0,1\n").is_err());
    }

    fn arb_curve() -> impl Strategy<Value = DiscreteCurve> {
        (2usize..4, 2usize..40).prop_flat_map(|(dim, n)| {
            prop::collection::vec(-10.0f64..10.0, dim * (n + 1))
                .prop_map(move |v| DiscreteCurve::new(dim, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn length_squared_bounded_by_energy(c in arb_curve()) {
            let l = c.length();
            prop_assert!(l * l <= c.energy() * (1.0 + 1e-12));
        }

        #[test]
        fn reparameterization_never_increases_energy(c in arb_curve()) {
            prop_assume!(c.length() > 1e-6);
            let r = c.reparameterize_constant_speed().unwrap();
            prop_assert!(r.energy() <= c.energy() * (1.0 + 1e-12));
            prop_assert!(r.length() <= c.length() + 1e-12 * c.length().max(1.0));
            prop_assert_eq!(r.first(), c.first());
            prop_assert_eq!(r.last(), c.last());
        }

        #[test]
        fn refinement_preserves_energy_and_length(c in arb_curve(), f in 2usize..5) {
            let r = c.refine(f).unwrap();
            prop_assert!((r.energy() - c.energy()).abs() <= 1e-12 * c.energy().max(1.0));
            prop_assert!((r.length() - c.length()).abs() <= 1e-12 * c.length().max(1.0));
        }

        #[test]
        fn rigid_motion_invariance(c in arb_curve(), th in 0.0f64..TAU, tx in -5.0f64..5.0, ty in -5.0f64..5.0) {
            let d = c.dim();
            let moved: Vec<f64> = c.points().flat_map(|p| {
                let mut q = p.to_vec();
                let (x, y) = (p[0], p[1]);
                q[0] = th.cos() * x - th.sin() * y + tx;
                q[1] = th.sin() * x + th.cos() * y + ty;
                q
            }).collect();
            let m = DiscreteCurve::new(d, moved).unwrap();
            prop_assert!((m.energy() - c.energy()).abs() <= 1e-10 * c.energy().max(1.0));
            prop_assert!((m.length() - c.length()).abs() <= 1e-10 * c.length().max(1.0));
        }
    }
}

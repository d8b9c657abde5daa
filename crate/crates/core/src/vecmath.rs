//! Small helpers for points stored as `&[f64]` slices.
//!
//! Curves keep their nodes in one flat buffer, so most geometry in this crate
//! works on borrowed slices rather than a fixed-size vector type.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[inline]
pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b`
#[inline]
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Unit vector in the direction of `a`, or `None` when `a` is (numerically) zero.
pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n > f64::MIN_POSITIVE && n.is_finite() {
        Some(scale(a, 1.0 / n))
    } else {
        None
    }
}

/// Component of `v` orthogonal to the unit vector `n`.
pub fn reject(v: &[f64], n: &[f64]) -> Vec<f64> {
    let c = dot(v, n);
    v.iter().zip(n).map(|(x, y)| x - c * y).collect()
}

/// Unsigned angle between two nonzero vectors, robust near 0 and pi.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Distance from `x` to the closed segment `[a, b]`.
pub fn point_segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = sub(b, a);
    let ax = sub(x, a);
    let len2 = dot(&ab, &ab);
    if len2 == 0.0 {
        return norm(&ax);
    }
    let t = (dot(&ax, &ab) / len2).clamp(0.0, 1.0);
    let closest = axpy(a, t, &ab);
    dist(x, &closest)
}

/// Orthonormal basis of the orthogonal complement of the unit vector `u`,
/// built by Gram-Schmidt against the coordinate axes.
pub fn orthonormal_complement(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let mut basis: Vec<Vec<f64>> = vec![u.to_vec()];
    // Prefer axes least aligned with u for numerical stability.
    let mut axes: Vec<usize> = (0..n).collect();
    axes.sort_by(|&i, &j| u[i].abs().total_cmp(&u[j].abs()));
    for &k in &axes {
        if basis.len() == n {
            break;
        }
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        for b in &basis {
            let c = dot(&e, b);
            for (ei, bi) in e.iter_mut().zip(b) {
                *ei -= c * bi;
            }
        }
        if let Some(e) = normalized(&e) {
            if norm(&e) > 0.5 {
                basis.push(e);
            }
        }
    }
    basis.remove(0);
    basis
}

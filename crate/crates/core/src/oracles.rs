//! Independent ground truth for tests and certificate audits.
//!
//! None of these routines share code paths with the iterative algorithms:
//! ball distances are analytic, hull distances come from brute-force face
//! enumeration and barycentric grids, and membership is an LP feasibility
//! question.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body::{BallBody, PointSetBody};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::lp::{self, LpProblem, LpStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub argmin_pair: Option<(Vector, Vector)>,
    /// Grid spacing, 0 for analytic or exact results.
    pub resolution: f64,
    /// The true distance lies in `[value - error_bound, value]`.
    pub error_bound: f64,
}

/// Analytic distance between two balls.
pub fn ball_distance(b: &BallBody, b_prime: &BallBody) -> Result<OracleResult> {
    b_prime.center.check_dim(b.center.dim())?;
    let c = &b.center;
    let cp = &b_prime.center;
    let d = c.distance(cp);
    let value = (d - b.radius - b_prime.radius).max(0.0);
    let pair = if d == 0.0 {
        (c.clone(), c.clone())
    } else {
        let u = cp.sub(c).scale(1.0 / d);
        if value > 0.0 {
            (
                c.add(&u.scale(b.radius)),
                cp.sub(&u.scale(b_prime.radius)),
            )
        } else if d <= b.radius {
            (cp.clone(), cp.clone())
        } else if d <= b_prime.radius {
            (c.clone(), c.clone())
        } else {
            let x = c.add(&u.scale(b.radius));
            (x.clone(), x)
        }
    };
    Ok(OracleResult {
        value,
        argmin_pair: Some(pair),
        resolution: 0.0,
        error_bound: 0.0,
    })
}

struct Face {
    base: Vector,
    /// Columns `v_i - base` for the remaining vertices of the face.
    dirs: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
}

/// Exact Euclidean projection onto the convex hull of a small point set by
/// enumerating every affinely independent face of at most `dim + 1`
/// vertices. The minimizer lies in the relative interior of one of them.
pub struct HullProjector {
    faces: Vec<Face>,
    points: Vec<Vector>,
}

impl HullProjector {
    pub fn new(points: &[Vector]) -> Result<Self> {
        let ps = PointSetBody::new(points.to_vec())?;
        let dim = ps.points()[0].dim();
        let n = points.len();
        if n > 20 {
            return Err(Error::InvalidArgument(format!(
                "face enumeration is limited to 20 points, got {n}"
            )));
        }
        let max_size = n.min(dim + 1);
        let mut faces = Vec::new();
        for mask in 1u32..(1u32 << n) {
            let size = mask.count_ones() as usize;
            if size < 2 || size > max_size {
                continue;
            }
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let base = points[idx[0]].clone();
            let k = idx.len() - 1;
            let dirs = DMatrix::from_fn(dim, k, |r, c| points[idx[c + 1]][r] - base[r]);
            let gram = dirs.transpose() * &dirs;
            let scale = gram.diagonal().iter().fold(0.0f64, |a, b| a.max(*b));
            if let Some(inv) = gram.clone().try_inverse() {
                // Reject nearly dependent faces; a lower-dimensional face
                // covers them.
                let det = gram.determinant();
                if det > 1e-12 * scale.powi(k as i32) {
                    faces.push(Face {
                        base,
                        dirs,
                        gram_inv: inv,
                    });
                }
            }
        }
        Ok(Self {
            faces,
            points: points.to_vec(),
        })
    }

    /// Nearest point of the hull to `q` and its distance.
    pub fn project(&self, q: &Vector) -> (f64, Vector) {
        let mut best_d = f64::INFINITY;
        let mut best = self.points[0].clone();
        for v in &self.points {
            let d = v.distance(q);
            if d < best_d {
                best_d = d;
                best = v.clone();
            }
        }
        for f in &self.faces {
            let rhs = DVector::from_iterator(
                q.dim(),
                q.iter().zip(f.base.iter()).map(|(a, b)| a - b),
            );
            let lam = &f.gram_inv * (f.dirs.transpose() * rhs);
            let sum: f64 = lam.iter().sum();
            if lam.iter().any(|&l| l < -1e-12) || sum > 1.0 + 1e-12 {
                continue;
            }
            let x = &f.dirs * lam;
            let point = Vector::from_raw(f.base.iter().zip(x.iter()).map(|(b, d)| b + d).collect());
            let d = point.distance(q);
            if d < best_d {
                best_d = d;
                best = point;
            }
        }
        (best_d, best)
    }
}

/// Exact distance between a point and the hull of a small point set.
pub fn point_hull_distance(points: &[Vector], q: &Vector) -> Result<(f64, Vector)> {
    Ok(HullProjector::new(points)?.project(q))
}

/// Distance from the origin to `conv{v_i - v'_j}`. Quadratic in the vertex
/// counts, so only suitable for cross-checking tiny instances.
pub fn minkowski_distance(v: &[Vector], v_prime: &[Vector]) -> Result<f64> {
    let diffs: Vec<Vector> = v
        .iter()
        .flat_map(|a| v_prime.iter().map(move |b| a.sub(b)))
        .collect();
    let origin = Vector::zeros(diffs.first().ok_or(Error::EmptyBody)?.dim());
    Ok(HullProjector::new(&diffs)?.project(&origin).0)
}

fn compositions(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut dyn FnMut(&[usize])) {
    if parts == 1 {
        prefix.push(total);
        out(prefix);
        prefix.pop();
        return;
    }
    for k in 0..=total {
        prefix.push(k);
        compositions(total - k, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// Brute-force distance between two hulls of at most four vertices each.
///
/// The body with fewer vertices is sampled on a barycentric grid of spacing
/// at most `resolution`; the distance from each grid point to the other hull
/// is exact. Rounding the optimal weights to the grid moves the point by at
/// most `2 * resolution * diam`, which is the reported error bound.
pub fn grid_distance(v: &[Vector], v_prime: &[Vector], resolution: f64) -> Result<OracleResult> {
    for set in [v, v_prime] {
        if set.len() > 4 {
            return Err(Error::TooManyVertices(set.len()));
        }
    }
    if !(resolution > 0.0 && resolution <= 0.1) {
        return Err(Error::InvalidArgument(format!(
            "resolution must lie in (0, 0.1], got {resolution}"
        )));
    }
    let ps = PointSetBody::new(v.to_vec())?;
    let ps_prime = PointSetBody::new(v_prime.to_vec())?;
    ps_prime.points()[0].check_dim(ps.points()[0].dim())?;

    let swapped = ps_prime.len() < ps.len();
    let (grid_set, exact_set) = if swapped { (&ps_prime, &ps) } else { (&ps, &ps_prime) };
    let projector = HullProjector::new(exact_set.points())?;

    let n = grid_set.len();
    let steps = if n == 1 { 1 } else { (1.0 / resolution).ceil() as usize };
    let first_range: Vec<usize> = if n == 1 { vec![steps] } else { (0..=steps).collect() };

    let best = first_range
        .into_par_iter()
        .map(|k0| {
            let mut local: (f64, Vec<usize>) = (f64::INFINITY, Vec::new());
            let mut eval = |ks: &[usize]| {
                let w: Vec<f64> = ks.iter().map(|&k| k as f64 / steps as f64).collect();
                let (d, _) = projector.project(&grid_set.combine(&w));
                if d < local.0 {
                    local = (d, ks.to_vec());
                }
            };
            let mut prefix = vec![k0];
            if n == 1 {
                eval(&prefix);
            } else {
                compositions(steps - k0, n - 1, &mut prefix, &mut eval);
            }
            local
        })
        .reduce_with(|a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
        .expect("grid is nonempty");

    // Recompute the winning pair from its grid weights.
    let w: Vec<f64> = best.1.iter().map(|&k| k as f64 / steps as f64).collect();
    let x = grid_set.combine(&w);
    let (value, y) = projector.project(&x);
    let pair = if swapped { (y, x) } else { (x, y) };
    let error_bound = if n == 1 {
        0.0
    } else {
        2.0 * grid_set.exact_diameter() / steps as f64
    };
    Ok(OracleResult {
        value,
        argmin_pair: Some(pair),
        resolution: if n == 1 { 0.0 } else { 1.0 / steps as f64 },
        error_bound,
    })
}

fn hull_system(points: &[Vector], q: &Vector) -> Result<LpProblem> {
    let ps = PointSetBody::new(points.to_vec())?;
    let dim = ps.points()[0].dim();
    q.check_dim(dim)?;
    let n = points.len();
    let mut a = Vec::with_capacity(2 * dim + 2 + n);
    let mut b = Vec::with_capacity(a.capacity());
    for k in 0..dim {
        let row: Vec<f64> = points.iter().map(|v| v[k]).collect();
        a.push(row.iter().map(|x| -x).collect());
        b.push(-q[k]);
        a.push(row);
        b.push(q[k]);
    }
    a.push(vec![1.0; n]);
    b.push(1.0);
    a.push(vec![-1.0; n]);
    b.push(-1.0);
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = -1.0;
        a.push(row);
        b.push(0.0);
    }
    LpProblem::new(vec![0.0; n], a, b)
}

/// Whether `q` lies in `conv(points)`, decided by Phase I on
/// `sum a_i v_i = q, sum a_i = 1, a >= 0`.
pub fn membership_lp(points: &[Vector], q: &Vector) -> Result<bool> {
    let out = lp::solve(&hull_system(points, q)?)?;
    Ok(out.status != LpStatus::Infeasible)
}

/// Barycentric weights expressing `q` over `points`, if `q` is in the hull.
/// Roundoff negatives are clipped and the weights renormalized.
pub fn hull_weights(points: &[Vector], q: &Vector) -> Result<Option<Vec<f64>>> {
    let out = lp::solve(&hull_system(points, q)?)?;
    if out.status != LpStatus::Optimal {
        return Ok(None);
    }
    let mut w: Vec<f64> = out.x.unwrap_or_default().into_iter().map(|x| x.max(0.0)).collect();
    let s: f64 = w.iter().sum();
    if s <= 0.0 {
        return Ok(None);
    }
    w.iter_mut().for_each(|x| *x /= s);
    Ok(Some(w))
}

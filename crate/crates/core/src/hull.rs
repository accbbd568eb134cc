//! Gram-matrix engine for point-set bodies.
//!
//! With `Q = V^T V`, `Q' = V'^T V'` and `G = V^T V'` precomputed, every
//! quantity the pivot search needs is a linear function of the barycentric
//! weights `y`, `y'`. Caching `Qy`, `Gy'`, `Q'y'`, `G^T y` and the three
//! quadratic forms lets a step update everything in `O(n + n')`.

use log::{debug, info};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{pivot_slack, Vector};

/// Which body a step moves in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    K,
    KPrime,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::K => Side::KPrime,
            Side::KPrime => Side::K,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::K => "K",
            Side::KPrime => "K'",
        }
    }
}

const REFRESH_EVERY: u64 = 1000;
const DRIFT_TOL: f64 = 1e-6;

/// Row-major dense matrix.
#[derive(Clone, Debug)]
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    fn products(a: &[Vector], b: &[Vector]) -> Mat {
        let cols = b.len();
        let data: Vec<f64> = a
            .par_iter()
            .flat_map_iter(|x| b.iter().map(move |y| x.dot(y)))
            .collect();
        Mat {
            rows: a.len(),
            cols,
            data,
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn mul_t(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(i)) {
                    *o += xi * a;
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Products {
    qy: Vec<f64>,
    gyp: Vec<f64>,
    qpyp: Vec<f64>,
    gty: Vec<f64>,
    yqy: f64,
    ypqpyp: f64,
    ygyp: f64,
}

/// Result of a cached segment step.
#[derive(Clone, Debug, PartialEq)]
pub struct GramStep {
    pub alpha: f64,
    pub raw_alpha: f64,
}

#[derive(Clone, Debug)]
pub struct GramCache {
    v: Vec<Vector>,
    v_prime: Vec<Vector>,
    q: Mat,
    q_prime: Mat,
    g: Mat,
    y: Vec<f64>,
    y_prime: Vec<f64>,
    prod: Products,
    p: Vector,
    p_prime: Vector,
    revision: u64,
    since_refresh: u64,
    ops: u64,
    refreshes: u64,
}

fn products(q: &Mat, qp: &Mat, g: &Mat, y: &[f64], yp: &[f64]) -> Products {
    let qy = q.mul(y);
    let gyp = g.mul(yp);
    let qpyp = qp.mul(yp);
    let gty = g.mul_t(y);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    Products {
        yqy: dot(y, &qy),
        ypqpyp: dot(yp, &qpyp),
        ygyp: dot(y, &gyp),
        qy,
        gyp,
        qpyp,
        gty,
    }
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + x.abs().max(y.abs())))
        .fold(0.0, f64::max)
}

fn unit_weights(n: usize, j: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    y[j] = 1.0;
    y
}

impl GramCache {
    /// Builds the Gram and cross-Gram matrices and places the iterates at
    /// the given barycentric weights.
    pub fn precompute(
        v: &[Vector],
        v_prime: &[Vector],
        y: Vec<f64>,
        y_prime: Vec<f64>,
    ) -> Result<Self> {
        let first = v.first().ok_or(Error::EmptyBody)?;
        v_prime.first().ok_or(Error::EmptyBody)?;
        let dim = first.dim();
        for x in v.iter().chain(v_prime) {
            x.check_dim(dim)?;
        }
        for (w, len) in [(&y, v.len()), (&y_prime, v_prime.len())] {
            if w.len() != len {
                return Err(Error::DimensionMismatch {
                    expected: len,
                    found: w.len(),
                });
            }
        }
        let q = Mat::products(v, v);
        let q_prime = Mat::products(v_prime, v_prime);
        let g = Mat::products(v, v_prime);
        let prod = products(&q, &q_prime, &g, &y, &y_prime);
        let p = combine(v, &y);
        let p_prime = combine(v_prime, &y_prime);
        Ok(Self {
            v: v.to_vec(),
            v_prime: v_prime.to_vec(),
            q,
            q_prime,
            g,
            y,
            y_prime,
            prod,
            p,
            p_prime,
            revision: 0,
            since_refresh: 0,
            ops: 0,
            refreshes: 0,
        })
    }

    /// Cache with both iterates at single vertices.
    pub fn at_vertices(v: &[Vector], v_prime: &[Vector], i: usize, j: usize) -> Result<Self> {
        if i >= v.len() {
            return Err(Error::IndexOutOfRange { index: i, len: v.len() });
        }
        if j >= v_prime.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: v_prime.len(),
            });
        }
        Self::precompute(v, v_prime, unit_weights(v.len(), i), unit_weights(v_prime.len(), j))
    }

    pub fn gram(&self, i: usize, j: usize) -> f64 {
        self.q.at(i, j)
    }

    pub fn gram_prime(&self, i: usize, j: usize) -> f64 {
        self.q_prime.at(i, j)
    }

    pub fn cross(&self, i: usize, j: usize) -> f64 {
        self.g.at(i, j)
    }

    pub fn weights(&self) -> &[f64] {
        &self.y
    }

    pub fn weights_prime(&self) -> &[f64] {
        &self.y_prime
    }

    pub fn p(&self) -> &Vector {
        &self.p
    }

    pub fn p_prime(&self) -> &Vector {
        &self.p_prime
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Arithmetic operations spent in pivot searches and step updates.
    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn refreshes(&self) -> u64 {
        self.refreshes
    }

    /// `d(p, p')^2` from the cached quadratic forms.
    pub fn gap_sq(&self) -> f64 {
        (self.prod.yqy - 2.0 * self.prod.ygyp + self.prod.ypqpyp).max(0.0)
    }

    pub fn check_revision(&self, expected: u64) -> Result<()> {
        if self.revision != expected {
            return Err(Error::StaleCache {
                cache: self.revision,
                expected,
            });
        }
        Ok(())
    }

    fn side_len(&self, side: Side) -> usize {
        match side {
            Side::K => self.v.len(),
            Side::KPrime => self.v_prime.len(),
        }
    }

    /// Pivot functional `v_i . (anchor - mover)` for every vertex of `side`,
    /// together with the right-hand side of the pivot test.
    fn functional(&self, side: Side) -> (Vec<f64>, f64, f64) {
        let pr = &self.prod;
        let (vals, mover_sq, anchor_sq): (Vec<f64>, f64, f64) = match side {
            Side::K => (
                pr.gyp.iter().zip(&pr.qy).map(|(a, b)| a - b).collect(),
                pr.yqy,
                pr.ypqpyp,
            ),
            Side::KPrime => (
                pr.gty.iter().zip(&pr.qpyp).map(|(a, b)| a - b).collect(),
                pr.ypqpyp,
                pr.yqy,
            ),
        };
        let rhs = anchor_sq - mover_sq;
        (vals, rhs, pivot_slack(mover_sq, anchor_sq))
    }

    /// Max-violation pivot on `side`: the vertex maximizing the pivot
    /// functional, if it passes the pivot test. Ties go to the lowest index.
    pub fn fast_pivot(&mut self, side: Side, expected_revision: u64) -> Result<Option<usize>> {
        self.check_revision(expected_revision)?;
        let (vals, rhs, slack) = self.functional(side);
        self.ops += 2 * vals.len() as u64;
        let mut best = 0;
        for (i, &x) in vals.iter().enumerate() {
            if x > vals[best] {
                best = i;
            }
        }
        Ok((2.0 * vals[best] >= rhs - slack).then_some(best))
    }

    /// First vertex in `order` passing the pivot test.
    pub fn first_pivot(
        &mut self,
        side: Side,
        order: &[usize],
        expected_revision: u64,
    ) -> Result<Option<usize>> {
        self.check_revision(expected_revision)?;
        let (vals, rhs, slack) = self.functional(side);
        self.ops += 2 * vals.len() as u64;
        Ok(order
            .iter()
            .copied()
            .find(|&i| 2.0 * vals[i] >= rhs - slack))
    }

    /// Moves the iterate on `side` to `(1 - alpha) * current + alpha * v_j`.
    pub fn apply_step(&mut self, side: Side, j: usize, alpha: f64) -> Result<()> {
        let len = self.side_len(side);
        if j >= len {
            return Err(Error::IndexOutOfRange { index: j, len });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "step size must lie in (0, 1], got {alpha}"
            )));
        }
        let b = 1.0 - alpha;
        let pr = &mut self.prod;
        match side {
            Side::K => {
                let qjj = self.q.at(j, j);
                let qyj = pr.qy[j];
                pr.yqy = b * b * pr.yqy + 2.0 * alpha * b * qyj + alpha * alpha * qjj;
                pr.ygyp = b * pr.ygyp + alpha * pr.gyp[j];
                // Q and G are symmetric in the sense Q[:, j] = Q[j, :].
                for (x, q) in pr.qy.iter_mut().zip(self.q.row(j)) {
                    *x = b * *x + alpha * q;
                }
                for (x, g) in pr.gty.iter_mut().zip(self.g.row(j)) {
                    *x = b * *x + alpha * g;
                }
                step_weights(&mut self.y, j, alpha);
                self.p = if alpha == 1.0 {
                    self.v[j].clone()
                } else {
                    self.p.lerp(&self.v[j], alpha)
                };
            }
            Side::KPrime => {
                let qjj = self.q_prime.at(j, j);
                let qyj = pr.qpyp[j];
                pr.ypqpyp = b * b * pr.ypqpyp + 2.0 * alpha * b * qyj + alpha * alpha * qjj;
                pr.ygyp = b * pr.ygyp + alpha * pr.gty[j];
                for (x, q) in pr.qpyp.iter_mut().zip(self.q_prime.row(j)) {
                    *x = b * *x + alpha * q;
                }
                for (i, x) in pr.gyp.iter_mut().enumerate() {
                    *x = b * *x + alpha * self.g.at(i, j);
                }
                step_weights(&mut self.y_prime, j, alpha);
                self.p_prime = if alpha == 1.0 {
                    self.v_prime[j].clone()
                } else {
                    self.p_prime.lerp(&self.v_prime[j], alpha)
                };
            }
        }
        let dim = self.p.dim() as u64;
        self.ops += 4 * (self.v.len() + self.v_prime.len()) as u64 + 3 * dim;
        self.revision += 1;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh();
        }
        Ok(())
    }

    /// Step size of `nearest(anchor; mover, v_j)` from cached products.
    pub fn segment_alpha(&self, side: Side, j: usize) -> Result<GramStep> {
        let len = self.side_len(side);
        if j >= len {
            return Err(Error::IndexOutOfRange { index: j, len });
        }
        let pr = &self.prod;
        let (num, den) = match side {
            Side::K => (
                pr.gyp[j] - pr.ygyp - pr.qy[j] + pr.yqy,
                self.q.at(j, j) - 2.0 * pr.qy[j] + pr.yqy,
            ),
            Side::KPrime => (
                pr.gty[j] - pr.ygyp - pr.qpyp[j] + pr.ypqpyp,
                self.q_prime.at(j, j) - 2.0 * pr.qpyp[j] + pr.ypqpyp,
            ),
        };
        if den <= 0.0 {
            return Err(Error::DegenerateSegment);
        }
        let raw_alpha = num / den;
        Ok(GramStep {
            alpha: raw_alpha.clamp(0.0, 1.0),
            raw_alpha,
        })
    }

    /// Recomputes the cached products from the weights; replaces them when
    /// accumulated drift exceeds the tolerance.
    pub fn refresh(&mut self) -> f64 {
        self.since_refresh = 0;
        let fresh = products(&self.q, &self.q_prime, &self.g, &self.y, &self.y_prime);
        let old = &self.prod;
        let drift = [
            max_rel_diff(&fresh.qy, &old.qy),
            max_rel_diff(&fresh.gyp, &old.gyp),
            max_rel_diff(&fresh.qpyp, &old.qpyp),
            max_rel_diff(&fresh.gty, &old.gty),
            max_rel_diff(
                &[fresh.yqy, fresh.ypqpyp, fresh.ygyp],
                &[old.yqy, old.ypqpyp, old.ygyp],
            ),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if drift > DRIFT_TOL {
            info!("gram cache drift {drift:e} exceeds {DRIFT_TOL:e}; refreshing");
            self.prod = fresh;
            self.refreshes += 1;
        } else {
            debug!("gram cache drift {drift:e}");
        }
        drift
    }

    /// Pivot functional values recomputed directly from the vertices, for
    /// consistency checks.
    pub fn direct_functional(&self, side: Side) -> Vec<f64> {
        let (pts, mover, anchor) = match side {
            Side::K => (&self.v, &self.p, &self.p_prime),
            Side::KPrime => (&self.v_prime, &self.p_prime, &self.p),
        };
        let w = anchor.sub(mover);
        pts.iter().map(|v| v.dot(&w)).collect()
    }

    pub fn cached_functional(&self, side: Side) -> Vec<f64> {
        self.functional(side).0
    }
}

fn step_weights(y: &mut [f64], j: usize, alpha: f64) {
    for w in y.iter_mut() {
        *w *= 1.0 - alpha;
    }
    y[j] += alpha;
}

fn combine(v: &[Vector], y: &[f64]) -> Vector {
    let mut out = vec![0.0; v[0].dim()];
    for (x, &w) in v.iter().zip(y) {
        if w != 0.0 {
            for (o, c) in out.iter_mut().zip(x.iter()) {
                *o += w * c;
            }
        }
    }
    Vector::from_raw(out)
}

/// Squared distances `a^2 = d(p,p')^2`, `b_i^2 = d(mover, v_i)^2` and
/// `c_i^2 = d(anchor, v_i)^2` for the vertices of one side.
#[derive(Clone, Debug)]
pub struct AngleTable {
    pub side: Side,
    pub a_sq: f64,
    pub b_sq: Vec<f64>,
    pub c_sq: Vec<f64>,
    /// Whether each vertex passes the pivot test.
    pub pivot: Vec<bool>,
    revision: u64,
}

impl AngleTable {
    /// Reads the table off the cached products in `O(n)`.
    pub fn build(cache: &mut GramCache, side: Side) -> Self {
        let pr = &cache.prod;
        let a_sq = cache.gap_sq();
        let (b_sq, c_sq): (Vec<f64>, Vec<f64>) = match side {
            Side::K => (0..cache.v.len())
                .map(|i| {
                    let qii = cache.q.at(i, i);
                    (
                        (pr.yqy - 2.0 * pr.qy[i] + qii).max(0.0),
                        (pr.ypqpyp - 2.0 * pr.gyp[i] + qii).max(0.0),
                    )
                })
                .unzip(),
            Side::KPrime => (0..cache.v_prime.len())
                .map(|i| {
                    let qii = cache.q_prime.at(i, i);
                    (
                        (pr.ypqpyp - 2.0 * pr.qpyp[i] + qii).max(0.0),
                        (pr.yqy - 2.0 * pr.gty[i] + qii).max(0.0),
                    )
                })
                .unzip(),
        };
        let (vals, rhs, slack) = cache.functional(side);
        let pivot = vals.iter().map(|&x| 2.0 * x >= rhs - slack).collect();
        cache.ops += 6 * b_sq.len() as u64;
        Self {
            side,
            a_sq,
            b_sq,
            c_sq,
            pivot,
            revision: cache.revision,
        }
    }

    /// `sin^2` of the angle at the mover between the anchor and `v_i`.
    pub fn sin_sq(&self, i: usize) -> f64 {
        let (a2, b2, c2) = (self.a_sq, self.b_sq[i], self.c_sq[i]);
        if a2 == 0.0 || b2 == 0.0 {
            return 1.0;
        }
        let num = a2 + b2 - c2;
        (1.0 - num * num / (4.0 * a2 * b2)).clamp(0.0, 1.0)
    }
}

/// Among true pivots, the vertex minimizing `sin^2` of the angle at the
/// mover; ties go to the lowest index.
pub fn min_angle_pivot(cache: &GramCache, table: &AngleTable) -> Result<Option<usize>> {
    if table.revision != cache.revision {
        return Err(Error::StaleCache {
            cache: table.revision,
            expected: cache.revision,
        });
    }
    let mut best: Option<(usize, f64)> = None;
    for i in 0..table.b_sq.len() {
        if !table.pivot[i] || table.b_sq[i] == 0.0 {
            continue;
        }
        let s = table.sin_sq(i);
        if best.map_or(true, |(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    Ok(best.map(|(i, _)| i))
}

/// Direct `O(mn)` minimum-angle pivot over explicit vertices.
pub fn direct_min_angle_pivot(points: &[Vector], mover: &Vector, anchor: &Vector) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    let a = anchor.sub(mover);
    let a_sq = a.norm_sq();
    for (i, v) in points.iter().enumerate() {
        if !crate::linalg::is_pivot(mover, anchor, v)? {
            continue;
        }
        let b = v.sub(mover);
        let b_sq = b.norm_sq();
        if b_sq == 0.0 || a_sq == 0.0 {
            continue;
        }
        let cos = a.dot(&b);
        let s = (1.0 - cos * cos / (a_sq * b_sq)).clamp(0.0, 1.0);
        if best.map_or(true, |(_, x)| s < x) {
            best = Some((i, s));
        }
    }
    Ok(best.map(|(i, _)| i))
}

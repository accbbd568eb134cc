//! Dense vector primitives and the small geometric kernel shared by every
//! algorithm: nearest point on a segment, the pivot predicate and the
//! orthogonal bisector of a pair.

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack on the accept side of the pivot inequality.
pub const PIVOT_REL_TOL: f64 = 1e-12;

/// Relative factor for deciding that two points coincide.
pub const DEGENERACY_REL_TOL: f64 = 1e-14;

/// A point of R^m. Never empty, never contains NaN or infinities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyVector);
        }
        if let Some(index) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "zero-dimensional vector");
        Self(vec![0.0; dim])
    }

    /// Unit coordinate vector scaled by `sign`.
    pub fn axis(dim: usize, i: usize, sign: f64) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = sign;
        Self(v)
    }

    /// Builds a vector from trusted arithmetic results.
    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        debug_assert!(!coords.is_empty());
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn add(&self, other: &Vector) -> Vector {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Vector {
        Self(self.0.iter().map(|a| a * s).collect())
    }

    /// `(1 - t) * self + t * other`
    pub fn lerp(&self, other: &Vector, t: f64) -> Vector {
        Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect(),
        )
    }

    pub fn distance(&self, other: &Vector) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Vector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            })
        }
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Vector::new(coords)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Convenience constructor for literals in tests and examples.
///
/// Panics on empty or non-finite input.
pub fn vector(coords: &[f64]) -> Vector {
    Vector::new(coords.to_vec()).expect("invalid vector literal")
}

/// `{x : normal . x = offset}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: Vector,
    pub offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vector, offset: f64) -> Result<Self> {
        if normal.norm() == 0.0 {
            return Err(Error::ZeroNormal);
        }
        Ok(Self { normal, offset })
    }

    /// `normal . x - offset`, unnormalized.
    pub fn evaluate(&self, x: &Vector) -> f64 {
        self.normal.dot(x) - self.offset
    }

    /// The same hyperplane with the opposite orientation.
    pub fn flipped(&self) -> Hyperplane {
        Hyperplane {
            normal: self.normal.scale(-1.0),
            offset: -self.offset,
        }
    }
}

/// Result of projecting a point onto a segment `y z`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentStep {
    pub point: Vector,
    /// Clamped step size; `point = (1 - alpha) y + alpha z`.
    pub alpha: f64,
    /// Step size before clamping.
    pub raw_alpha: f64,
}

fn same_dims(vs: &[&Vector]) -> Result<()> {
    let d = vs[0].dim();
    vs[1..].iter().try_for_each(|v| v.check_dim(d))
}

/// Nearest point to `x` on the segment from `y` to `z`.
pub fn nearest_on_segment(x: &Vector, y: &Vector, z: &Vector) -> Result<SegmentStep> {
    same_dims(&[x, y, z])?;
    let dir = z.sub(y);
    let len_sq = dir.norm_sq();
    if len_sq == 0.0 {
        return Err(Error::DegenerateSegment);
    }
    let raw_alpha = x.sub(y).dot(&dir) / len_sq;
    let alpha = raw_alpha.clamp(0.0, 1.0);
    let point = if alpha == 1.0 {
        z.clone()
    } else if alpha == 0.0 {
        y.clone()
    } else {
        y.lerp(z, alpha)
    };
    Ok(SegmentStep {
        point,
        alpha,
        raw_alpha,
    })
}

/// Accept-side slack used by [`is_pivot`]; exposed so the Gram engine can
/// apply the identical test.
pub fn pivot_slack(p_norm_sq: f64, anchor_norm_sq: f64) -> f64 {
    PIVOT_REL_TOL * (1.0 + p_norm_sq + anchor_norm_sq)
}

/// Whether `v` is an `anchor`-pivot for `p`, i.e. `d(p, v) >= d(anchor, v)`,
/// tested as `2 v.(anchor - p) >= |anchor|^2 - |p|^2` up to a relative slack.
pub fn is_pivot(p: &Vector, anchor: &Vector, v: &Vector) -> Result<bool> {
    same_dims(&[p, anchor, v])?;
    let pp = p.norm_sq();
    let aa = anchor.norm_sq();
    let lhs = 2.0 * v.dot(&anchor.sub(p));
    Ok(lhs >= aa - pp - pivot_slack(pp, aa))
}

/// Threshold below which `d(p, q)` is treated as zero.
pub fn degeneracy_threshold(p: &Vector, q: &Vector) -> f64 {
    DEGENERACY_REL_TOL * (1.0 + p.norm() + q.norm())
}

/// Orthogonal bisector of `p q`, oriented so that `p` is on the positive side:
/// `h = p - q`, `a = (|p|^2 - |q|^2) / 2`.
pub fn bisector(p: &Vector, q: &Vector) -> Result<Hyperplane> {
    same_dims(&[p, q])?;
    let gap = p.distance(q);
    if gap <= degeneracy_threshold(p, q) {
        return Err(Error::DegeneratePair { gap });
    }
    let normal = p.sub(q);
    let offset = 0.5 * (p.norm_sq() - q.norm_sq());
    Ok(Hyperplane { normal, offset })
}

/// Signed Euclidean distance from `x` to `plane`, positive where
/// `normal . x > offset`.
pub fn signed_margin(x: &Vector, plane: &Hyperplane) -> Result<f64> {
    x.check_dim(plane.normal.dim())?;
    let n = plane.normal.norm();
    if n == 0.0 {
        return Err(Error::ZeroNormal);
    }
    Ok(plane.evaluate(x) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn segment_perpendicular_foot() {
        let s = nearest_on_segment(&vector(&[1., 1.]), &vector(&[0., 0.]), &vector(&[2., 0.]))
            .unwrap();
        assert_eq!(s.point, vector(&[1., 0.]));
        assert_eq!(s.alpha, 0.5);
    }

    #[test]
    fn segment_clamps_above() {
        let s = nearest_on_segment(&vector(&[3., 1.]), &vector(&[0., 0.]), &vector(&[2., 0.]))
            .unwrap();
        assert_eq!(s.point, vector(&[2., 0.]));
        assert_eq!(s.alpha, 1.0);
        assert_eq!(s.raw_alpha, 1.5);
    }

    #[test]
    fn segment_endpoint_and_below() {
        let y = vector(&[0., 0.]);
        let z = vector(&[2., 0.]);
        let s = nearest_on_segment(&y, &y, &z).unwrap();
        assert_eq!(s.point, y);
        assert_eq!(s.alpha, 0.0);
        let s = nearest_on_segment(&vector(&[-5., 3.]), &y, &z).unwrap();
        assert_eq!(s.alpha, 0.0);
        assert_eq!(s.point, y);
    }

    #[test]
    fn segment_errors() {
        let y = vector(&[0., 0.]);
        assert!(matches!(
            nearest_on_segment(&y, &y, &y),
            Err(Error::DegenerateSegment)
        ));
        assert!(matches!(
            nearest_on_segment(&vector(&[1.]), &y, &vector(&[1., 0.])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pivot_examples() {
        let p = vector(&[0., 0.]);
        let q = vector(&[2., 0.]);
        assert!(is_pivot(&p, &q, &vector(&[1., 1.])).unwrap());
        assert!(is_pivot(&p, &q, &q).unwrap());
        assert!(!is_pivot(&p, &q, &vector(&[-3., 0.])).unwrap());
        assert!(is_pivot(&p, &q, &vector(&[1.])).is_err());
    }

    #[test]
    fn bisector_midpoint() {
        let h = bisector(&vector(&[0., 0.]), &vector(&[2., 0.])).unwrap();
        assert_eq!(h.normal, vector(&[-2., 0.]));
        assert_eq!(h.offset, -2.0);
    }

    #[test]
    fn bisector_separates_figure_hull() {
        let p = vector(&[3., 1.]);
        let q = vector(&[1., 5.]);
        let h = bisector(&p, &q).unwrap();
        assert_eq!(h.normal, vector(&[2., -4.]));
        assert_eq!(h.offset, -8.0);
        for v in [[0., 0.], [4., 3.], [8., 2.], [7., 0.], [5., -2.]] {
            assert!(h.evaluate(&vector(&v)) > 0.0);
        }
        assert!(h.evaluate(&q) < 0.0);
    }

    #[test]
    fn bisector_degenerate() {
        let p = vector(&[1., 1.]);
        assert!(matches!(bisector(&p, &p), Err(Error::DegeneratePair { .. })));
    }

    #[test]
    fn margin_examples() {
        let h = bisector(&vector(&[0., 0.]), &vector(&[2., 0.])).unwrap();
        assert_eq!(signed_margin(&vector(&[0., 0.]), &h).unwrap(), 1.0);
        assert_eq!(signed_margin(&vector(&[1., 7.]), &h).unwrap(), 0.0);
        assert_eq!(signed_margin(&vector(&[2., 0.]), &h).unwrap(), -1.0);
        let zero = Hyperplane {
            normal: vector(&[0., 0.]),
            offset: 1.0,
        };
        assert!(matches!(signed_margin(&vector(&[1., 1.]), &zero), Err(Error::ZeroNormal)));
    }

    #[test]
    fn vector_validation() {
        assert!(matches!(Vector::new(vec![]), Err(Error::EmptyVector)));
        assert!(matches!(
            Vector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        let parsed: std::result::Result<Vector, _> = serde_json::from_str("[1.0, 2.0]");
        assert_eq!(parsed.unwrap(), vector(&[1., 2.]));
        let bad: std::result::Result<Vector, _> = serde_json::from_str("[]");
        assert!(bad.is_err());
    }

    fn point(dim: usize) -> impl Strategy<Value = Vector> {
        proptest::collection::vec(-10.0f64..10.0, dim).prop_map(Vector::from_raw)
    }

    fn triple() -> impl Strategy<Value = (Vector, Vector, Vector)> {
        (1usize..5).prop_flat_map(|d| (point(d), point(d), point(d)))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric((x, y, _z) in triple()) {
            prop_assert_eq!(x.distance(&y), y.distance(&x));
            prop_assert!(x.distance(&y) >= 0.0);
            prop_assert_eq!(x.distance(&x), 0.0);
        }

        #[test]
        fn segment_never_farther_than_endpoints((x, y, z) in triple()) {
            prop_assume!(y.distance(&z) > 1e-6);
            let s = nearest_on_segment(&x, &y, &z).unwrap();
            prop_assert!((0.0..=1.0).contains(&s.alpha));
            let d = x.distance(&s.point);
            prop_assert!(d <= x.distance(&y) + 1e-9);
            prop_assert!(d <= x.distance(&z) + 1e-9);
        }

        #[test]
        fn strict_pivot_gives_positive_step((p, q, v) in triple()) {
            prop_assume!(p.distance(&q) > 1e-3 && p.distance(&v) > 1e-3);
            prop_assume!(p.distance(&v) > q.distance(&v) + 1e-6);
            let s = nearest_on_segment(&q, &p, &v).unwrap();
            prop_assert!(s.raw_alpha > 0.0);
        }

        #[test]
        fn pivot_matches_distance_comparison((p, q, v) in triple()) {
            let gap = p.distance(&v) - q.distance(&v);
            prop_assume!(gap.abs() > 1e-6);
            prop_assert_eq!(is_pivot(&p, &q, &v).unwrap(), gap > 0.0);
        }

        #[test]
        fn bisector_orientation_and_margins((p, q, x) in triple()) {
            prop_assume!(p.distance(&q) > 1e-3);
            let h = bisector(&p, &q).unwrap();
            let g = bisector(&q, &p).unwrap();
            let half = 0.5 * p.distance(&q);
            let mp = signed_margin(&p, &h).unwrap();
            let mq = signed_margin(&q, &h).unwrap();
            prop_assert!((mp - half).abs() <= 1e-12 * (1.0 + half) * 10.0);
            prop_assert!((mq + half).abs() <= 1e-12 * (1.0 + half) * 10.0);
            let a = signed_margin(&x, &h).unwrap();
            let b = signed_margin(&x, &g).unwrap();
            prop_assert!((a + b).abs() <= 1e-9);
        }

        #[test]
        fn bisector_translation_equivariant((p, q, x) in triple(), t in -5.0f64..5.0) {
            prop_assume!(p.distance(&q) > 1e-3);
            let shift = Vector::from_raw(vec![t; p.dim()]);
            let h = bisector(&p, &q).unwrap();
            let ht = bisector(&p.add(&shift), &q.add(&shift)).unwrap();
            for (a, b) in h.normal.iter().zip(ht.normal.iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let m = signed_margin(&x, &h).unwrap();
            let mt = signed_margin(&x.add(&shift), &ht).unwrap();
            prop_assert!((m - mt).abs() <= 1e-9);
        }
    }
}

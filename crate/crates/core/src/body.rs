//! Compact convex bodies accessed only through a support oracle, plus the
//! pivot and weak-pivot searches built on top of it.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_pivot, signed_margin, Hyperplane, Vector};
use crate::lp::{self, LpProblem, LpStatus};
use crate::oracles;

/// Relative tolerance for body membership checks.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SupportResult {
    pub point: Vector,
    pub value: f64,
    /// Vertex index for point sets.
    pub witness_id: Option<usize>,
}

/// Linear maximization over a compact convex set.
pub trait SupportOracle {
    fn dim(&self) -> usize;

    /// A maximizer of `w . x` over the body.
    fn support(&self, w: &Vector) -> Result<SupportResult>;

    fn contains(&self, x: &Vector) -> Result<bool>;

    /// Some fixed point of the body, used to seed iterations.
    fn reference_point(&self) -> Result<Vector>;

    /// Upper bound on the diameter, at most twice the true diameter when
    /// the body dimension is at most 4.
    fn diameter_bound(&self) -> Result<f64>;
}

fn check_direction(w: &Vector, dim: usize) -> Result<()> {
    w.check_dim(dim)?;
    if w.norm() == 0.0 {
        return Err(Error::ZeroDirection);
    }
    Ok(())
}

/// `conv{v_1, ..., v_n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vector>", into = "Vec<Vector>")]
pub struct PointSetBody {
    points: Vec<Vector>,
}

impl TryFrom<Vec<Vector>> for PointSetBody {
    type Error = Error;

    fn try_from(points: Vec<Vector>) -> Result<Self> {
        PointSetBody::new(points)
    }
}

impl From<PointSetBody> for Vec<Vector> {
    fn from(b: PointSetBody) -> Self {
        b.points
    }
}

impl PointSetBody {
    pub fn new(points: Vec<Vector>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyBody)?;
        let dim = first.dim();
        for p in &points {
            p.check_dim(dim)?;
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vector {
        let n = self.points.len() as f64;
        let mut c = vec![0.0; self.dim()];
        for p in &self.points {
            for (ci, pi) in c.iter_mut().zip(p.iter()) {
                *ci += pi;
            }
        }
        Vector::from_raw(c.into_iter().map(|x| x / n).collect())
    }

    /// Index of the vertex nearest to `q`, ties to the lowest index.
    pub fn nearest_vertex(&self, q: &Vector) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, v) in self.points.iter().enumerate() {
            let d = v.distance_sq(q);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Exact diameter by all-pairs scan.
    pub fn exact_diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.max(a.distance(b));
            }
        }
        best
    }

    /// `V y` for barycentric weights `y`.
    pub fn combine(&self, weights: &[f64]) -> Vector {
        let mut out = vec![0.0; self.dim()];
        for (v, &w) in self.points.iter().zip(weights) {
            if w != 0.0 {
                for (o, x) in out.iter_mut().zip(v.iter()) {
                    *o += w * x;
                }
            }
        }
        Vector::from_raw(out)
    }
}

impl SupportOracle for PointSetBody {
    fn dim(&self) -> usize {
        self.points[0].dim()
    }

    fn support(&self, w: &Vector) -> Result<SupportResult> {
        check_direction(w, self.dim())?;
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, v) in self.points.iter().enumerate() {
            let val = v.dot(w);
            if val > best_val {
                best = i;
                best_val = val;
            }
        }
        Ok(SupportResult {
            point: self.points[best].clone(),
            value: best_val,
            witness_id: Some(best),
        })
    }

    fn contains(&self, x: &Vector) -> Result<bool> {
        x.check_dim(self.dim())?;
        oracles::membership_lp(&self.points, x)
    }

    fn reference_point(&self) -> Result<Vector> {
        Ok(self.centroid())
    }

    fn diameter_bound(&self) -> Result<f64> {
        let c = self.centroid();
        let r = self
            .points
            .iter()
            .map(|v| v.distance(&c))
            .fold(0.0, f64::max);
        Ok(2.0 * r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BallRepr", into = "BallRepr")]
pub struct BallBody {
    pub center: Vector,
    pub radius: f64,
}

#[derive(Clone, Serialize, Deserialize)]
struct BallRepr {
    center: Vector,
    radius: f64,
}

impl TryFrom<BallRepr> for BallBody {
    type Error = Error;

    fn try_from(r: BallRepr) -> Result<Self> {
        BallBody::new(r.center, r.radius)
    }
}

impl From<BallBody> for BallRepr {
    fn from(b: BallBody) -> Self {
        BallRepr {
            center: b.center,
            radius: b.radius,
        }
    }
}

impl BallBody {
    pub fn new(center: Vector, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidBody(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }
}

impl SupportOracle for BallBody {
    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn support(&self, w: &Vector) -> Result<SupportResult> {
        check_direction(w, self.dim())?;
        let n = w.norm();
        let point = Vector::from_raw(
            self.center
                .iter()
                .zip(w.iter())
                .map(|(c, x)| c + x / n * self.radius)
                .collect(),
        );
        let value = point.dot(w);
        Ok(SupportResult {
            point,
            value,
            witness_id: None,
        })
    }

    fn contains(&self, x: &Vector) -> Result<bool> {
        x.check_dim(self.dim())?;
        Ok(x.distance(&self.center) <= self.radius * (1.0 + MEMBERSHIP_TOL) + 1e-12)
    }

    fn reference_point(&self) -> Result<Vector> {
        Ok(self.center.clone())
    }

    fn diameter_bound(&self) -> Result<f64> {
        Ok(2.0 * self.radius)
    }
}

#[derive(Clone, Debug)]
struct Extent {
    /// Maximizers of `+e_i` then `-e_i` for each coordinate.
    extremes: Vec<Vector>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Clone, Debug)]
enum BoundCheck {
    Bounded(Extent),
    Unbounded,
    Empty,
    Breakdown(String),
}

/// `{x : A x <= b}`, required to be nonempty and bounded. Boundedness is
/// checked once, on first use, by maximizing every `+-e_i`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(try_from = "PolytopeRepr", into = "PolytopeRepr")]
pub struct PolytopeBody {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    extent: OnceLock<BoundCheck>,
}

#[derive(Clone, Serialize, Deserialize)]
struct PolytopeRepr {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl TryFrom<PolytopeRepr> for PolytopeBody {
    type Error = Error;

    fn try_from(r: PolytopeRepr) -> Result<Self> {
        PolytopeBody::new(r.a, r.b)
    }
}

impl From<PolytopeBody> for PolytopeRepr {
    fn from(p: PolytopeBody) -> Self {
        PolytopeRepr { a: p.a, b: p.b }
    }
}

impl Clone for PolytopeBody {
    fn clone(&self) -> Self {
        Self {
            a: self.a.clone(),
            b: self.b.clone(),
            extent: self.extent.clone(),
        }
    }
}

impl PartialEq for PolytopeBody {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b
    }
}

impl PolytopeBody {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let dim = a.first().map(Vec::len).ok_or(Error::EmptyBody)?;
        if dim == 0 {
            return Err(Error::InvalidBody("polytope rows are empty".into()));
        }
        LpProblem::new(vec![0.0; dim], a.clone(), b.clone())?;
        Ok(Self {
            a,
            b,
            extent: OnceLock::new(),
        })
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Whether the boundedness check has already run.
    pub fn boundedness_checked(&self) -> bool {
        self.extent.get().is_some()
    }

    fn maximize(&self, w: &[f64]) -> Result<lp::LpOutcome> {
        lp::solve(&LpProblem {
            objective: w.to_vec(),
            a: self.a.clone(),
            b: self.b.clone(),
        })
    }

    fn extent(&self) -> Result<&Extent> {
        let check = self.extent.get_or_init(|| {
            let dim = self.a[0].len();
            let mut extremes = Vec::with_capacity(2 * dim);
            let mut lower = vec![0.0; dim];
            let mut upper = vec![0.0; dim];
            for i in 0..dim {
                for sign in [1.0, -1.0] {
                    let w = Vector::axis(dim, i, sign);
                    let out = match self.maximize(&w) {
                        Ok(out) => out,
                        Err(e) => return BoundCheck::Breakdown(e.to_string()),
                    };
                    match out.status {
                        LpStatus::Unbounded => return BoundCheck::Unbounded,
                        LpStatus::Infeasible => return BoundCheck::Empty,
                        LpStatus::Optimal => {}
                    }
                    let x = out.x.expect("optimal outcome carries x");
                    if sign > 0.0 {
                        upper[i] = x[i];
                    } else {
                        lower[i] = x[i];
                    }
                    extremes.push(Vector::from_raw(x));
                }
            }
            BoundCheck::Bounded(Extent {
                extremes,
                lower,
                upper,
            })
        });
        match check {
            BoundCheck::Bounded(e) => Ok(e),
            BoundCheck::Unbounded => Err(Error::UnboundedBody),
            BoundCheck::Empty => Err(Error::InfeasibleBody),
            BoundCheck::Breakdown(msg) => Err(Error::NumericalBreakdown(msg.clone())),
        }
    }

    /// Coordinate-wise bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let e = self.extent()?;
        Ok((e.lower.clone(), e.upper.clone()))
    }
}

impl SupportOracle for PolytopeBody {
    fn dim(&self) -> usize {
        self.a[0].len()
    }

    fn support(&self, w: &Vector) -> Result<SupportResult> {
        check_direction(w, self.dim())?;
        self.extent()?;
        let out = self.maximize(w)?;
        match out.status {
            LpStatus::Unbounded => Err(Error::UnboundedBody),
            LpStatus::Infeasible => Err(Error::InfeasibleBody),
            LpStatus::Optimal => {
                let point = Vector::from_raw(out.x.expect("optimal outcome carries x"));
                Ok(SupportResult {
                    value: point.dot(w),
                    point,
                    witness_id: None,
                })
            }
        }
    }

    fn contains(&self, x: &Vector) -> Result<bool> {
        x.check_dim(self.dim())?;
        let p = LpProblem {
            objective: vec![0.0; self.dim()],
            a: self.a.clone(),
            b: self.b.clone(),
        };
        Ok(p.max_violation(x) <= MEMBERSHIP_TOL)
    }

    fn reference_point(&self) -> Result<Vector> {
        let e = self.extent()?;
        let k = e.extremes.len() as f64;
        let mut c = vec![0.0; self.dim()];
        for x in &e.extremes {
            for (ci, xi) in c.iter_mut().zip(x.iter()) {
                *ci += xi / k;
            }
        }
        Ok(Vector::from_raw(c))
    }

    fn diameter_bound(&self) -> Result<f64> {
        let e = self.extent()?;
        Ok(e
            .lower
            .iter()
            .zip(&e.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConvexBody {
    PointSet { points: PointSetBody },
    Ball(BallBody),
    Polytope(PolytopeBody),
}

impl ConvexBody {
    pub fn point_set(points: Vec<Vector>) -> Result<Self> {
        Ok(ConvexBody::PointSet {
            points: PointSetBody::new(points)?,
        })
    }

    pub fn ball(center: Vector, radius: f64) -> Result<Self> {
        Ok(ConvexBody::Ball(BallBody::new(center, radius)?))
    }

    pub fn polytope(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        Ok(ConvexBody::Polytope(PolytopeBody::new(a, b)?))
    }

    pub fn as_point_set(&self) -> Option<&PointSetBody> {
        match self {
            ConvexBody::PointSet { points } => Some(points),
            _ => None,
        }
    }

    /// The single point of a one-vertex point set.
    pub fn singleton(&self) -> Option<&Vector> {
        self.as_point_set()
            .filter(|ps| ps.len() == 1)
            .map(|ps| &ps.points()[0])
    }

    fn oracle(&self) -> &dyn SupportOracle {
        match self {
            ConvexBody::PointSet { points } => points,
            ConvexBody::Ball(b) => b,
            ConvexBody::Polytope(p) => p,
        }
    }

    /// Diameter bound; with `exact` set, point sets use the all-pairs scan.
    pub fn diameter(&self, exact: bool) -> Result<f64> {
        match self {
            ConvexBody::PointSet { points } if exact => Ok(points.exact_diameter()),
            _ => self.diameter_bound(),
        }
    }

    /// A random point of the body, for sampling-based audits.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vector> {
        match self {
            ConvexBody::PointSet { points } => {
                let w = random_simplex_weights(points.len(), rng);
                Ok(points.combine(&w))
            }
            ConvexBody::Ball(b) => {
                let dim = b.dim();
                let dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let dir = Vector::from_raw(dir);
                let n = dir.norm();
                if n == 0.0 {
                    return Ok(b.center.clone());
                }
                let r = b.radius * rng.gen::<f64>().powf(1.0 / dim as f64);
                Ok(b.center.add(&dir.scale(r / n)))
            }
            ConvexBody::Polytope(p) => {
                let dim = p.dim();
                let k = 2 * dim;
                let mut pts = Vec::with_capacity(k);
                for _ in 0..k {
                    let dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let dir = Vector::from_raw(dir);
                    if dir.norm() == 0.0 {
                        continue;
                    }
                    pts.push(p.support(&dir)?.point);
                }
                if pts.is_empty() {
                    return p.reference_point();
                }
                let w = random_simplex_weights(pts.len(), rng);
                Ok(PointSetBody::new(pts)?.combine(&w))
            }
        }
    }
}

pub(crate) fn random_simplex_weights<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

impl SupportOracle for ConvexBody {
    fn dim(&self) -> usize {
        self.oracle().dim()
    }

    fn support(&self, w: &Vector) -> Result<SupportResult> {
        self.oracle().support(w)
    }

    fn contains(&self, x: &Vector) -> Result<bool> {
        self.oracle().contains(x)
    }

    fn reference_point(&self) -> Result<Vector> {
        self.oracle().reference_point()
    }

    fn diameter_bound(&self) -> Result<f64> {
        self.oracle().diameter_bound()
    }
}

/// Free-function form of [`SupportOracle::support`].
pub fn support(body: &impl SupportOracle, w: &Vector) -> Result<SupportResult> {
    body.support(w)
}

/// Max-violation search for an `anchor`-pivot of `mover` in `body`.
///
/// The support point in direction `anchor - mover` maximizes the pivot
/// functional, so `None` certifies that no point of the body is a pivot.
pub fn find_pivot(
    body: &impl SupportOracle,
    mover: &Vector,
    anchor: &Vector,
) -> Result<Option<SupportResult>> {
    let w = anchor.sub(mover);
    if w.norm() == 0.0 {
        return Err(Error::DegeneratePair { gap: 0.0 });
    }
    let s = body.support(&w)?;
    Ok(is_pivot(mover, anchor, &s.point)?.then_some(s))
}

/// Search for a weak pivot: a point of `body` strictly closer to `plane`
/// than `mover`, on the same side.
pub fn find_weak_pivot(
    body: &impl SupportOracle,
    mover: &Vector,
    plane: &Hyperplane,
) -> Result<Option<SupportResult>> {
    let own = signed_margin(mover, plane)?;
    if own == 0.0 {
        return Err(Error::InvalidArgument(
            "mover lies on the bisector".into(),
        ));
    }
    // Move toward the plane: minimize h.x on the positive side.
    let dir = if own > 0.0 {
        plane.normal.scale(-1.0)
    } else {
        plane.normal.clone()
    };
    let s = body.support(&dir)?;
    let theirs = signed_margin(&s.point, plane)?.abs();
    let tol = 1e-12 * (1.0 + own.abs());
    Ok((theirs < own.abs() - tol).then_some(s))
}

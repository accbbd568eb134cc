//! Convex quadratic programs `min x'Qx + c'x` subject to `Ax <= b` recast as
//! a nearest-point problem.
//!
//! With `Q = B'B` (Cholesky) and `Q x0 = -c/2`, the substitution
//! `y = B (x - x0)` turns the objective into `|y|^2` plus a constant and the
//! constraints into `A B^-1 y <= b - A x0`. The minimizer is then the point
//! of that polytope nearest the origin.

use nalgebra::{DMatrix, DVector};

use crate::body::{ConvexBody, PolytopeBody};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::linalg::Vector;
use crate::triangle_i::{CertificateKind, Config, Session, StopRule};
use crate::triangle_ii;

/// Maps reduced-space points back to the original variables.
#[derive(Clone, Debug)]
pub struct BackMap {
    b_inv: DMatrix<f64>,
    x0: DVector<f64>,
    q: DMatrix<f64>,
    c: DVector<f64>,
}

impl BackMap {
    /// `x = B^-1 y + x0`.
    pub fn point(&self, y: &Vector) -> Result<Vector> {
        y.check_dim(self.x0.len())?;
        let x = &self.b_inv * DVector::from_column_slice(y) + &self.x0;
        Vector::new(x.as_slice().to_vec())
    }

    /// `x'Qx + c'x`.
    pub fn objective(&self, x: &Vector) -> f64 {
        let x = DVector::from_column_slice(x);
        (x.transpose() * &self.q * &x)[(0, 0)] + self.c.dot(&x)
    }

    /// Unconstrained minimizer `x0`.
    pub fn center(&self) -> Vector {
        Vector::from_raw(self.x0.as_slice().to_vec())
    }
}

#[derive(Clone, Debug)]
pub struct QpReduction {
    /// `K` is the transformed polytope, `K'` the origin.
    pub instance: Instance,
    pub back_map: BackMap,
}

fn matrix(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            expected: cols,
            found: rows.iter().map(Vec::len).find(|&l| l != cols).unwrap_or(cols),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn reduce_qp(q: &[Vec<f64>], c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<QpReduction> {
    let m = c.len();
    if m == 0 {
        return Err(Error::EmptyVector);
    }
    if q.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: q.len(),
        });
    }
    let qm = matrix(q, m)?;
    let am = matrix(a, m)?;
    if b.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let scale = qm.amax().max(f64::MIN_POSITIVE);
    if (&qm - qm.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InvalidArgument("Q is not symmetric".into()));
    }

    let feasible = PolytopeBody::new(a.to_vec(), b.to_vec())?;
    match feasible.bounding_box() {
        Ok(_) => {}
        Err(Error::UnboundedBody) => return Err(Error::UnboundedFeasibleSet),
        Err(e) => return Err(e),
    }

    let chol = qm.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let cv = DVector::from_column_slice(c);
    let x0 = chol.solve(&(-0.5 * &cv));
    // B = L', so A B^-1 = (L^-1 A')'.
    let a_prime = l
        .solve_lower_triangular(&am.transpose())
        .ok_or(Error::NotPositiveDefinite)?
        .transpose();
    let b_inv = l
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or(Error::NotPositiveDefinite)?;
    let b_hat = DVector::from_column_slice(b) - &am * &x0;

    let rows: Vec<Vec<f64>> = (0..a_prime.nrows())
        .map(|i| a_prime.row(i).iter().copied().collect())
        .collect();
    let mut instance = Instance::new(
        ConvexBody::polytope(rows, b_hat.as_slice().to_vec())?,
        ConvexBody::point_set(vec![Vector::zeros(m)])?,
    )?;
    instance.name = Some("qp-reduction".into());
    Ok(QpReduction {
        instance,
        back_map: BackMap {
            b_inv,
            x0,
            q: qm,
            c: cv,
        },
    })
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: Vector,
    pub objective: f64,
    /// Distance from the origin to the reduced polytope, 0 when the
    /// unconstrained minimizer is feasible.
    pub distance: f64,
    pub y: Vector,
}

/// Reduces, solves the nearest-point problem and maps back.
pub fn solve_qp(
    q: &[Vec<f64>],
    c: &[f64],
    a: &[Vec<f64>],
    b: &[f64],
    config: &Config,
) -> Result<QpSolution> {
    let red = reduce_qp(q, c, a, b)?;
    let inst = &red.instance;
    let mut s = Session::new(&inst.k, &inst.k_prime, config.clone())?;
    let state = s.initialize(None)?;
    let first = s.run_from(state, StopRule::PivotDistance)?;
    let (y, distance) = match first.kind {
        CertificateKind::Intersection => (first.pair.p.clone(), 0.0),
        CertificateKind::Witness => {
            let cert = triangle_ii::run_in_session(&mut s, first.pair)?;
            (cert.pair.p.clone(), cert.delta)
        }
    };
    let x = red.back_map.point(&y)?;
    Ok(QpSolution {
        objective: red.back_map.objective(&x),
        x,
        distance,
        y,
    })
}

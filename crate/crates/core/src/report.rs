//! Run reports and their independent re-verification.

use serde::{Deserialize, Serialize};

use crate::body::{find_pivot, ConvexBody, SupportOracle};
use crate::error::Result;
use crate::instance::Instance;
use crate::linalg::{bisector, Hyperplane, Vector};
use crate::oracles;
use crate::triangle_i::{
    residual_tolerance, witness_residuals, CertificateI, CertificateKind, Config, PairState,
    RunTrace, StopRule, Termination,
};
use crate::triangle_ii::DistanceCertificate;

/// Largest number of gap samples kept in a report.
pub const MAX_HISTORY: usize = 1000;

/// Tolerance on recomputed quantities, relative to the pair's scale.
const REL_TOL: f64 = 1e-9;

/// Grid spacing used for the point-set oracle.
const GRID_RESOLUTION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    Intersection {
        pair: PairState,
        relative_gap_basis: f64,
    },
    Witness {
        pair: PairState,
        bisector: Hyperplane,
    },
    Distance(DistanceCertificate),
}

impl Certificate {
    pub fn pair(&self) -> &PairState {
        match self {
            Certificate::Intersection { pair, .. } | Certificate::Witness { pair, .. } => pair,
            Certificate::Distance(d) => &d.pair,
        }
    }
}

impl From<CertificateI> for Certificate {
    fn from(c: CertificateI) -> Self {
        match (c.kind, c.bisector) {
            (CertificateKind::Witness, Some(bisector)) => Certificate::Witness {
                pair: c.pair,
                bisector,
            },
            _ => Certificate::Intersection {
                pair: c.pair,
                relative_gap_basis: c.relative_gap_basis,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    LimitsExceeded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub iterations: u64,
    pub pivot_steps: u64,
    pub weak_steps: u64,
    pub support_calls: u64,
    pub arith_ops: u64,
    pub bound_violations: u64,
    pub gram_refreshes: u64,
}

impl From<&RunTrace> for Counters {
    fn from(t: &RunTrace) -> Self {
        Self {
            iterations: t.iterations(),
            pivot_steps: t.pivot_steps,
            weak_steps: t.weak_steps,
            support_calls: t.support_calls,
            arith_ops: t.arith_ops,
            bound_violations: t.bound_violations,
            gram_refreshes: t.gram_refreshes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub config: Config,
    pub rho_hat: f64,
    pub eps_abs: f64,
    pub max_iter: u64,
    pub status: Status,
    pub termination: Option<Termination>,
    pub certificate: Option<Certificate>,
    /// Pair held when the iteration limit was hit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<PairState>,
    pub counters: Counters,
    pub gap_history: Vec<f64>,
    pub budget: Option<f64>,
    pub budget_exceeded: bool,
    pub wall_ms: f64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::error::Error::Parse {
            context: format!("{context}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    /// The JSON with the wall time zeroed, for determinism comparisons.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.wall_ms = 0.0;
        r.to_json()
    }
}

/// Evenly spaced subsample of at most `max` entries, always keeping the
/// first and last.
pub fn downsample(history: &[f64], max: usize) -> Vec<f64> {
    let n = history.len();
    if n <= max || max < 2 {
        return history.to_vec();
    }
    (0..max)
        .map(|i| history[i * (n - 1) / (max - 1)])
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub residual: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, residual: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            residual,
            detail: detail.into(),
        }
    }

    /// Passes when `residual <= tol`.
    fn within(name: &str, residual: f64, tol: f64) -> Self {
        Self::new(name, residual <= tol, residual, format!("tolerance {tol:e}"))
    }
}

fn scale(pair: &PairState) -> f64 {
    1.0 + pair.p.norm() + pair.p_prime.norm()
}

/// Re-checks every invariant of the report's certificate against the
/// instance using only support calls, membership tests and, for tiny
/// instances, an independent distance oracle.
pub fn verify(report: &RunReport, instance: &Instance) -> Result<Vec<Check>> {
    let (k, kp) = (&instance.k, &instance.k_prime);
    let Some(cert) = &report.certificate else {
        return Ok(vec![Check::new(
            "certificate_present",
            false,
            f64::NAN,
            "report carries no certificate",
        )]);
    };
    let pair = cert.pair();
    let mut checks = Vec::new();
    let tol = REL_TOL * scale(pair);

    for (label, body, x, w) in [
        ("p_in_K", k, &pair.p, &pair.coeffs_k),
        ("p_prime_in_K_prime", kp, &pair.p_prime, &pair.coeffs_k_prime),
    ] {
        checks.push(Check::new(label, body.contains(x)?, 0.0, "membership"));
        if let (Some(ps), Some(w)) = (body.as_point_set(), w) {
            checks.push(barycentric(label, ps.points(), w, x, tol));
        }
    }
    checks.push(Check::within(
        "gap_consistent",
        (pair.gap - pair.p.distance(&pair.p_prime)).abs(),
        tol,
    ));

    let eps = report.config.eps;
    match cert {
        Certificate::Intersection {
            pair,
            relative_gap_basis,
        } => {
            let basis = *relative_gap_basis;
            let (stop_ok, res) = if basis > 0.0 {
                (pair.gap <= eps * basis * (1.0 + REL_TOL), pair.gap / basis)
            } else {
                (pair.gap <= report.eps_abs * (1.0 + REL_TOL), pair.gap)
            };
            checks.push(Check::new(
                "stop_test",
                stop_ok,
                res,
                format!("gap {:e} against eps {eps:e} * basis {basis:e}", pair.gap),
            ));
            if basis > 0.0 && report.config.stop_rule == StopRule::Diameter {
                let res = (basis - report.rho_hat).abs() / report.rho_hat;
                checks.push(Check::within("stop_basis_is_diameter_bound", res, REL_TOL));
            } else if basis > 0.0 {
                let mut best = f64::INFINITY;
                for (mover, v, body) in [
                    (&pair.p, &pair.last_pivot_k, k),
                    (&pair.p_prime, &pair.last_pivot_k_prime, kp),
                ] {
                    if let Some(v) = v {
                        if body.contains(v)? {
                            best = best.min(((mover.distance(v) - basis) / basis).abs());
                        }
                    }
                }
                checks.push(Check::within("stop_basis_is_pivot_distance", best, REL_TOL));
            }
        }
        Certificate::Witness { pair, bisector: plane } => {
            let expected = bisector(&pair.p, &pair.p_prime)?;
            let drift = expected.normal.sub(&plane.normal).norm() / expected.normal.norm()
                + (expected.offset - plane.offset).abs() / (1.0 + expected.offset.abs());
            checks.push(Check::within("bisector_consistent", drift, REL_TOL));
            let (rk, rkp) = witness_residuals(k, kp, plane)?;
            let rtol = residual_tolerance(pair);
            let worst = rk.min(rkp);
            checks.push(Check::new(
                "separation",
                worst > -rtol,
                worst,
                format!("min_K h.x - a = {rk:e}, a - max_K' h.x = {rkp:e}"),
            ));
            let none_k = find_pivot(k, &pair.p, &pair.p_prime)?.is_none();
            let none_kp = find_pivot(kp, &pair.p_prime, &pair.p)?.is_none();
            checks.push(Check::new(
                "no_pivot",
                none_k && none_kp,
                0.0,
                format!("pivot in K: {}, pivot in K': {}", !none_k, !none_kp),
            ));
        }
        Certificate::Distance(d) => verify_distance(&mut checks, d, k, kp, eps, tol)?,
    }

    if let Some(oracle) = oracle_distance(k, kp)? {
        checks.push(oracle_check(cert, eps, &oracle));
    }
    Ok(checks)
}

fn barycentric(label: &str, points: &[Vector], w: &[f64], x: &Vector, tol: f64) -> Check {
    let name = format!("{label}_barycentric");
    if w.len() != points.len() {
        return Check::new(&name, false, f64::NAN, "weight count differs from vertex count");
    }
    let mut acc = Vector::zeros(x.dim());
    for (wi, v) in w.iter().zip(points) {
        acc = acc.add(&v.scale(*wi));
    }
    let neg = w.iter().fold(0.0f64, |m, &wi| m.max(-wi));
    let sum = (w.iter().sum::<f64>() - 1.0).abs();
    let res = acc.distance(x).max(neg).max(sum);
    Check::new(
        &name,
        res <= tol * 10.0,
        res,
        format!("reconstruction {:e}, most negative weight {neg:e}, sum error {sum:e}", acc.distance(x)),
    )
}

fn verify_distance(
    checks: &mut Vec<Check>,
    d: &DistanceCertificate,
    k: &ConvexBody,
    kp: &ConvexBody,
    eps: f64,
    tol: f64,
) -> Result<()> {
    let pair = &d.pair;
    let g = &d.final_gap;
    checks.push(Check::within("delta_is_pair_gap", (d.delta - pair.gap).abs(), tol));
    checks.push(Check::new(
        "sandwich",
        g.lower <= d.lower + tol && d.lower <= d.delta + tol,
        d.lower - d.delta,
        format!("final lower {:e} <= lower {:e} <= delta {:e}", g.lower, d.lower, d.delta),
    ));

    let expected = bisector(&pair.p, &pair.p_prime)?;
    let drift = g.normal.sub(&expected.normal).norm() / expected.normal.norm();
    checks.push(Check::within("final_normal_follows_pair", drift, REL_TOL));
    let hn = d.h_v.normal.norm();
    let parallel = d.h_v_prime.normal.sub(&d.h_v.normal).norm() / hn;
    checks.push(Check::within("hyperplanes_parallel", parallel, REL_TOL));

    let lo = k.support(&d.h_v.normal.scale(-1.0))?;
    let hi = kp.support(&d.h_v_prime.normal)?;
    let min_k = d.h_v.normal.dot(&lo.point);
    let max_kp = d.h_v_prime.normal.dot(&hi.point);
    let hs = tol * hn;
    checks.push(Check::within("h_v_supports_K", (min_k - d.h_v.offset).abs() / hn, tol));
    checks.push(Check::within(
        "h_v_prime_supports_K_prime",
        (max_kp - d.h_v_prime.offset).abs() / hn,
        tol,
    ));
    let contact_k = k.contains(&d.v)? && (d.h_v.evaluate(&d.v)).abs() <= hs;
    let contact_kp = kp.contains(&d.v_prime)? && (d.h_v_prime.evaluate(&d.v_prime)).abs() <= hs;
    checks.push(Check::new(
        "support_contact",
        contact_k && contact_kp,
        0.0,
        "v in K on H_v, v' in K' on H_v'",
    ));

    let plane_gap = (d.h_v.offset - d.h_v_prime.offset) / hn;
    let rel = (plane_gap - d.lower).abs() / d.lower.abs().max(f64::MIN_POSITIVE);
    checks.push(Check::within("hyperplane_distance_is_lower", rel, 1e-12));

    let bound = eps * g.rho.max(g.rho_prime);
    checks.push(Check::new(
        "convergence",
        g.e <= bound * (1.0 + REL_TOL) + tol,
        g.e,
        format!("E = {:e} against eps * max(rho, rho') = {bound:e}", g.e),
    ));
    Ok(())
}

/// Independent distance for tiny instances: closed form for two balls,
/// exact projection onto the Minkowski difference for small point sets and
/// the barycentric grid when that is too large.
pub fn oracle_distance(k: &ConvexBody, kp: &ConvexBody) -> Result<Option<oracles::OracleResult>> {
    match (k, kp) {
        (ConvexBody::Ball(a), ConvexBody::Ball(b)) => Ok(Some(oracles::ball_distance(a, b)?)),
        (ConvexBody::PointSet { points: a }, ConvexBody::PointSet { points: b }) => {
            let (va, vb) = (a.points(), b.points());
            if va.len() * vb.len() <= 20 {
                let value = oracles::minkowski_distance(va, vb)?;
                Ok(Some(oracles::OracleResult {
                    value,
                    argmin_pair: None,
                    resolution: 0.0,
                    error_bound: 1e-12 * (1.0 + value),
                }))
            } else if va.len() <= 4 && vb.len() <= 4 {
                Ok(Some(oracles::grid_distance(va, vb, GRID_RESOLUTION)?))
            } else {
                Ok(None)
            }
        }
        _ => Ok(None),
    }
}

fn oracle_check(cert: &Certificate, eps: f64, oracle: &oracles::OracleResult) -> Check {
    let star = oracle.value;
    let slack = oracle.error_bound + 1e-9 * (1.0 + star);
    match cert {
        Certificate::Distance(d) => {
            let res = (d.delta - star).abs();
            let ok = res <= eps * d.delta + slack && d.lower <= star + slack;
            Check::new(
                "oracle_distance",
                ok,
                res,
                format!("delta {:e}, lower {:e}, oracle {star:e}", d.delta, d.lower),
            )
        }
        Certificate::Witness { pair, .. } => Check::new(
            "oracle_disjoint",
            star > 0.0 && star <= pair.gap + slack,
            star,
            format!("oracle distance {star:e}, witness gap {:e}", pair.gap),
        ),
        Certificate::Intersection { pair, .. } => Check::new(
            "oracle_below_gap",
            star <= pair.gap + slack,
            star,
            format!("oracle distance {star:e}, final gap {:e}", pair.gap),
        ),
    }
}

/// Names of the failing checks.
pub fn failures(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} (residual {:e}: {})", c.name, c.residual, c.detail))
        .collect()
}

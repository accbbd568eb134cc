//! Triangle Algorithm II: from a witness pair, shrink the gap toward
//! `d(K, K')` with weak-pivot steps and return the approximate distance with
//! a pair of parallel supporting hyperplanes.
//!
//! For the bisector `h . x = a` of `(p, p')`, `v` minimizes `h . x` over K
//! and `v'` maximizes it over K'. The hyperplanes through `v` and `v'` with
//! normal `h` support the bodies, and their distance `lower` is a lower bound
//! on `d(K, K')`; `gap - lower` measures how far the pair is from optimal.

use serde::{Deserialize, Serialize};

use crate::body::{find_pivot, ConvexBody};
use crate::error::{Error, Result};
use crate::linalg::{bisector, Hyperplane, Vector};
use crate::triangle_i::{
    BoundCase, BoundCheck, CertificateKind, Config, PairState, RunTrace, Session, Side,
    StepKind, StepRecord, StopRule, Termination,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportGap {
    pub normal: Vector,
    pub offset: f64,
    pub v: Vector,
    pub v_index: Option<usize>,
    pub v_prime: Vector,
    pub v_prime_index: Option<usize>,
    pub gap: f64,
    pub lower: f64,
    pub delta_v: f64,
    pub delta_v_prime: f64,
    pub e: f64,
    pub e_v: f64,
    pub e_v_prime: f64,
    pub rho: f64,
    pub rho_prime: f64,
}

impl SupportGap {
    /// `{x : h.x = h.v}`, supporting K.
    pub fn h_v(&self) -> Hyperplane {
        Hyperplane {
            normal: self.normal.clone(),
            offset: self.normal.dot(&self.v),
        }
    }

    /// `{x : h.x = h.v'}`, supporting K'.
    pub fn h_v_prime(&self) -> Hyperplane {
        Hyperplane {
            normal: self.normal.clone(),
            offset: self.normal.dot(&self.v_prime),
        }
    }

    pub fn converged(&self, eps: f64) -> bool {
        self.e <= eps * self.rho || self.e <= eps * self.rho_prime
    }
}

/// Level below which `E` is rounding noise: when `p` is itself the support
/// point, `rho = 0` and `E` is a difference of equal dot products.
fn noise_floor(session: &Session<'_>, state: &PairState) -> f64 {
    session
        .eps_abs
        .max(1e-12 * (1.0 + state.p.norm() + state.p_prime.norm()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceCertificate {
    pub pair: PairState,
    /// Upper bound `d(p, p')`.
    pub delta: f64,
    /// Best lower bound seen; the distance between `h_v` and `h_v_prime`.
    pub lower: f64,
    /// Supporting hyperplane of K through `v`, from the iteration that
    /// attained `lower`.
    pub h_v: Hyperplane,
    pub h_v_prime: Hyperplane,
    pub v: Vector,
    pub v_prime: Vector,
    /// `E / max(rho, rho')` at termination.
    pub eps_achieved: f64,
    pub final_gap: SupportGap,
}

#[derive(Clone, Debug, PartialEq)]
pub enum WeakOutcome {
    Moved(StepRecord),
    Converged,
}

fn gap_from_supports(
    p: &Vector,
    p_prime: &Vector,
    v: (Vector, Option<usize>),
    v_prime: (Vector, Option<usize>),
) -> Result<SupportGap> {
    let plane = bisector(p, p_prime)?;
    let hn = plane.normal.norm();
    let gap = p.distance(p_prime);
    let hv = plane.normal.dot(&v.0);
    let hvp = plane.normal.dot(&v_prime.0);
    let delta_v = (hv - plane.offset) / hn;
    let delta_v_prime = (plane.offset - hvp) / hn;
    let lower = (hv - hvp) / hn;
    Ok(SupportGap {
        e: gap - lower,
        e_v: 0.5 * gap - delta_v,
        e_v_prime: 0.5 * gap - delta_v_prime,
        rho: p.distance(&v.0),
        rho_prime: p_prime.distance(&v_prime.0),
        normal: plane.normal,
        offset: plane.offset,
        v: v.0,
        v_index: v.1,
        v_prime: v_prime.0,
        v_prime_index: v_prime.1,
        gap,
        lower,
        delta_v,
        delta_v_prime,
    })
}

/// The two support calls of one iteration and every derived quantity.
pub fn support_gap(k: &ConvexBody, k_prime: &ConvexBody, pair: &PairState) -> Result<SupportGap> {
    use crate::body::SupportOracle;
    let plane = bisector(&pair.p, &pair.p_prime)?;
    let lo = k.support(&plane.normal.scale(-1.0))?;
    let hi = k_prime.support(&plane.normal)?;
    gap_from_supports(&pair.p, &pair.p_prime, (lo.point, lo.witness_id), (hi.point, hi.witness_id))
}

/// Contraction bound for a weak step on `side`, given the gap info before
/// the step, the best lower bound and the diameter bound.
pub fn weak_step_bound(
    g: &SupportGap,
    side: Side,
    eps: f64,
    lower: f64,
    rho_hat: f64,
    alpha: f64,
) -> (BoundCase, f64) {
    let delta = g.gap;
    let (e_side, rho) = match side {
        Side::K => (g.e_v, g.rho),
        Side::KPrime => (g.e_v_prime, g.rho_prime),
    };
    if e_side >= 0.5 * eps * delta {
        if rho >= delta {
            let t = 1.0 - (eps * lower / (2.0 * rho_hat)).powi(2);
            (BoundCase::WeakFar, delta * t.max(0.0).sqrt())
        } else {
            (BoundCase::WeakNear, delta * (1.0 - eps * eps / 4.0).sqrt())
        }
    } else {
        let denom = if alpha < 1.0 { rho } else { delta };
        let t = 1.0 - (e_side / denom).powi(2);
        (BoundCase::WeakProjection, delta * t.max(0.0).sqrt())
    }
}

/// Runs weak steps and re-entries into the pivot loop on an existing
/// session, starting from a witness pair.
pub fn run_in_session(session: &mut Session<'_>, witness: PairState) -> Result<DistanceCertificate> {
    let (k, kp) = (session.k, session.k_prime);
    if find_pivot(k, &witness.p, &witness.p_prime)?.is_some() {
        return Err(Error::NotAWitness { side: "K" });
    }
    if find_pivot(kp, &witness.p_prime, &witness.p)?.is_some() {
        return Err(Error::NotAWitness { side: "K'" });
    }
    session.trace.support_calls += 2;
    let eps = session.config.eps;
    let delta0 = witness.gap;
    let mut state = witness;
    let mut best: Option<SupportGap> = None;
    loop {
        let lo = session.support(Side::K, &state.p_prime.sub(&state.p))?;
        let hi = session.support(Side::KPrime, &state.p.sub(&state.p_prime))?;
        let g = gap_from_supports(
            &state.p,
            &state.p_prime,
            (lo.point, lo.witness_id),
            (hi.point, hi.witness_id),
        )?;
        if best.as_ref().is_none_or(|b| g.lower > b.lower) {
            best = Some(g.clone());
        }
        let top = best.as_ref().expect("set above");
        let best_lower = top.lower;
        if g.lower > g.gap * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::InvariantViolation(format!(
                "lower bound {} exceeds gap {}",
                g.lower, g.gap
            )));
        }
        if g.converged(eps) || g.e <= noise_floor(session, &state) {
            session.trace.termination = Some(Termination::Converged);
            flag_budget(session, delta0, best_lower);
            session.sync_ops();
            let scale = g.rho.max(g.rho_prime);
            return Ok(DistanceCertificate {
                delta: g.gap,
                lower: best_lower,
                h_v: top.h_v(),
                h_v_prime: top.h_v_prime(),
                v: top.v.clone(),
                v_prime: top.v_prime.clone(),
                eps_achieved: if scale > 0.0 { g.e / scale } else { 0.0 },
                pair: state,
                final_gap: g,
            });
        }
        if session.trace.iterations() >= session.max_iter {
            session.trace.termination = Some(Termination::MaxIter);
            session.sync_ops();
            return Err(Error::MaxIterExceeded {
                limit: session.max_iter,
                best: Box::new(state),
                trace: Box::new(session.trace.clone()),
            });
        }
        match weak_step(session, &mut state, &g, best_lower)? {
            WeakOutcome::Converged => unreachable!("convergence is tested above"),
            WeakOutcome::Moved(_) => {}
        }
        let cert = session.run_from(state, StopRule::WitnessOnly)?;
        if cert.kind == CertificateKind::Intersection {
            return Err(Error::InvariantViolation(format!(
                "pivot loop reached the intersection floor at gap {:e} from a witness pair",
                cert.pair.gap
            )));
        }
        state = cert.pair;
    }
}

/// One weak step on `session`: moves `p` toward `v` if `E_v > eps rho / 2`,
/// otherwise `p'` toward `v'`.
pub fn weak_step(
    session: &mut Session<'_>,
    state: &mut PairState,
    g: &SupportGap,
    lower: f64,
) -> Result<WeakOutcome> {
    let eps = session.config.eps;
    if g.converged(eps) || g.e <= noise_floor(session, state) {
        return Ok(WeakOutcome::Converged);
    }
    let (side, v, idx) = if g.rho > 0.0 && g.e_v > 0.5 * eps * g.rho {
        (Side::K, &g.v, g.v_index)
    } else if g.rho_prime > 0.0 && g.e_v_prime > 0.5 * eps * g.rho_prime {
        (Side::KPrime, &g.v_prime, g.v_prime_index)
    } else {
        return Err(Error::InvariantViolation(format!(
            "E = {:e} exceeds eps * rho but neither side qualifies (E_v = {:e}, E_v' = {:e})",
            g.e, g.e_v, g.e_v_prime
        )));
    };
    let gap_before = state.gap;
    let Some(alpha) = session.advance(side, state, v, idx)? else {
        return Err(Error::NumericalBreakdown(format!(
            "weak step on {} made no progress at gap {gap_before:e}",
            side.name()
        )));
    };
    let (case, bound) = weak_step_bound(g, side, eps, lower, session.rho_hat, alpha);
    let rec = StepRecord {
        iter: session.trace.iterations(),
        kind: StepKind::Weak,
        side,
        gap_before,
        gap_after: state.gap,
        pivot: v.clone(),
        pivot_index: idx,
        alpha,
        check: BoundCheck {
            case,
            bound,
            holds: state.gap <= bound + 1e-12 * gap_before,
        },
    };
    session.record(rec.clone());
    Ok(WeakOutcome::Moved(rec))
}

fn flag_budget(session: &mut Session<'_>, delta0: f64, lower: f64) {
    if lower > 0.0 {
        let eps = session.config.eps;
        let ratio = session.rho_hat / lower;
        let log = (delta0 / lower).ln().max(1.0);
        let b = 192.0 * ratio * ratio / (eps * eps) * log;
        session.trace.budget = Some(b);
        session.trace.budget_exceeded = session.trace.iterations() as f64 > b + 1.0;
    }
}

/// Runs the pivot loop to a witness, then this algorithm to a distance
/// certificate. Intersecting bodies yield `NotAWitness`.
pub fn run(
    k: &ConvexBody,
    k_prime: &ConvexBody,
    config: &Config,
    start: Option<(Vector, Vector)>,
) -> Result<(DistanceCertificate, RunTrace)> {
    let mut s = Session::new(k, k_prime, config.clone())?;
    let state = s.initialize(start)?;
    let first = s.run_from(state, StopRule::WitnessOnly)?;
    if first.kind != CertificateKind::Witness {
        return Err(Error::NotAWitness { side: "K" });
    }
    let cert = run_in_session(&mut s, first.pair)?;
    Ok((cert, s.trace))
}

/// Runs from a given witness pair.
pub fn run_from_witness(
    k: &ConvexBody,
    k_prime: &ConvexBody,
    witness: PairState,
    config: &Config,
) -> Result<(DistanceCertificate, RunTrace)> {
    let mut s = Session::new(k, k_prime, config.clone())?;
    let mut w = witness;
    s.attach(&mut w)?;
    s.trace.gap_history.push(w.gap);
    let cert = run_in_session(&mut s, w)?;
    Ok((cert, s.trace))
}

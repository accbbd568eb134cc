//! Triangle Algorithm I: pivot steps until the pair is an approximate common
//! point or a witness pair whose bisector separates the bodies.
//!
//! A pivot `v` found in K moves `p` to the point of segment `p v` nearest to
//! `p'`; a pivot found in K' moves `p'` symmetrically. Both iterates stay in
//! their own bodies.

use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{find_pivot, ConvexBody, SupportOracle, SupportResult};
use crate::error::{Error, Result};
use crate::hull::{self, AngleTable, GramCache};
pub use crate::hull::Side;
use crate::linalg::{bisector, is_pivot, nearest_on_segment, pivot_slack, Hyperplane, Vector};
use crate::oracles;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PivotStrategy {
    /// Support point of the pivot functional.
    #[default]
    MaxViolation,
    /// First pivot in a seeded random scan order (point sets only).
    FirstViolation,
    /// Pivot with the smallest angle at the mover (point sets only).
    MinAngle,
}

impl FromStr for PivotStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-violation" => Ok(Self::MaxViolation),
            "first-violation" => Ok(Self::FirstViolation),
            "min-angle" => Ok(Self::MinAngle),
            _ => Err(Error::InvalidArgument(format!("unknown pivot strategy {s:?}"))),
        }
    }
}

impl fmt::Display for PivotStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MaxViolation => "max-violation",
            Self::FirstViolation => "first-violation",
            Self::MinAngle => "min-angle",
        })
    }
}

/// Pivot search backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Gram engine when both bodies are point sets and the strategy is not
    /// a random scan, support oracle otherwise.
    #[default]
    Auto,
    Naive,
    Gram,
}

/// When the loop may stop before a witness is found.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// `gap <= eps * d(p, v)` for the most recent pivot `v` on either side.
    #[default]
    PivotDistance,
    /// `gap <= eps * rho_hat`.
    Diameter,
    /// Only the absolute floor; used when re-entering from Algorithm II.
    WitnessOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub eps: f64,
    /// Absolute gap floor; defaults to `1e-12 * rho_hat`.
    pub eps_abs: Option<f64>,
    pub max_iter: Option<u64>,
    pub strategy: PivotStrategy,
    pub engine: Engine,
    pub stop_rule: StopRule,
    pub alternate_sides: bool,
    pub seed: u64,
    pub exact_diameter: bool,
    /// Keep a per-step record in the trace.
    pub record_steps: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            eps_abs: None,
            max_iter: None,
            strategy: PivotStrategy::MaxViolation,
            engine: Engine::Auto,
            stop_rule: StopRule::PivotDistance,
            alternate_sides: false,
            seed: 0,
            exact_diameter: false,
            record_steps: true,
        }
    }
}

impl Config {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if let Some(a) = self.eps_abs {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidArgument(format!("eps_abs must be >= 0, got {a}")));
            }
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairState {
    pub p: Vector,
    pub p_prime: Vector,
    pub gap: f64,
    pub last_pivot_k: Option<Vector>,
    pub last_pivot_k_prime: Option<Vector>,
    /// Barycentric weights of `p` when K is a point set.
    pub coeffs_k: Option<Vec<f64>>,
    pub coeffs_k_prime: Option<Vec<f64>>,
    /// Number of moves applied; ties the state to a Gram cache.
    #[serde(default)]
    pub revision: u64,
}

impl PairState {
    pub fn new(p: Vector, p_prime: Vector) -> Result<Self> {
        p_prime.check_dim(p.dim())?;
        Ok(Self {
            gap: p.distance(&p_prime),
            p,
            p_prime,
            last_pivot_k: None,
            last_pivot_k_prime: None,
            coeffs_k: None,
            coeffs_k_prime: None,
            revision: 0,
        })
    }

    pub fn point(&self, side: Side) -> &Vector {
        match side {
            Side::K => &self.p,
            Side::KPrime => &self.p_prime,
        }
    }

    fn coeffs_mut(&mut self, side: Side) -> &mut Option<Vec<f64>> {
        match side {
            Side::K => &mut self.coeffs_k,
            Side::KPrime => &mut self.coeffs_k_prime,
        }
    }

    pub fn last_pivot(&self, side: Side) -> Option<&Vector> {
        match side {
            Side::K => self.last_pivot_k.as_ref(),
            Side::KPrime => self.last_pivot_k_prime.as_ref(),
        }
    }

    fn set_point(&mut self, side: Side, x: Vector) {
        match side {
            Side::K => self.p = x,
            Side::KPrime => self.p_prime = x,
        }
        self.gap = self.p.distance(&self.p_prime);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Intersection,
    Witness,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateI {
    pub kind: CertificateKind,
    pub pair: PairState,
    pub bisector: Option<Hyperplane>,
    /// Distance the stop test compared the gap against; 0 when the
    /// absolute floor fired.
    pub relative_gap_basis: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Pivot,
    Weak,
}

/// Which contraction bound a step was checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCase {
    /// Pivot step, gap at most the anchor-to-pivot distance.
    PivotNear,
    /// Pivot step, angle at the pivot at most pi/3.
    PivotAcute,
    /// Pivot step, angle in (pi/3, pi/2).
    PivotMid,
    /// Pivot step, angle at least pi/2.
    PivotObtuse,
    /// Weak step with `rho >= gap`, bound `gap sqrt(1 - eps^2 lower^2 / 4 rho_hat^2)`.
    WeakFar,
    /// Weak step with `rho < gap`, bound `gap sqrt(1 - eps^2 / 4)`.
    WeakNear,
    /// Weak step whose slack `E_side` is below `eps gap / 2`: the projection
    /// identity `gap sqrt(1 - E^2 / rho^2)` (interior) or
    /// `gap sqrt(1 - E^2 / gap^2)` (clamped).
    WeakProjection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub case: BoundCase,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub iter: u64,
    pub kind: StepKind,
    pub side: Side,
    pub gap_before: f64,
    pub gap_after: f64,
    pub pivot: Vector,
    pub pivot_index: Option<usize>,
    pub alpha: f64,
    pub check: BoundCheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Intersection,
    Witness,
    Converged,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct RunTrace {
    pub steps: Vec<StepRecord>,
    pub termination: Option<Termination>,
    pub pivot_steps: u64,
    pub weak_steps: u64,
    pub support_calls: u64,
    /// Arithmetic operations in pivot searches and updates, excluding
    /// one-time preprocessing.
    pub arith_ops: u64,
    pub bound_violations: u64,
    /// Gap before the first step and after every step.
    pub gap_history: Vec<f64>,
    /// Iteration budget from the complexity analysis, if one applies.
    pub budget: Option<f64>,
    pub budget_exceeded: bool,
    pub gram_refreshes: u64,
}

impl RunTrace {
    pub fn iterations(&self) -> u64 {
        self.pivot_steps + self.weak_steps
    }

    pub fn pivot_indices(&self) -> Vec<(Side, Option<usize>)> {
        self.steps.iter().map(|s| (s.side, s.pivot_index)).collect()
    }
}

/// Outcome of a single pivot step.
#[derive(Clone, Debug, PartialEq)]
pub enum StepOutcome {
    Moved(StepRecord),
    NoPivot,
}

/// Contraction bound for a pivot step in which `mover` slides toward the
/// pivot `v` while `anchor` stays fixed.
pub fn pivot_step_bound(mover: &Vector, anchor: &Vector, v: &Vector) -> (BoundCase, f64) {
    let delta = mover.distance(anchor);
    let r = anchor.distance(v);
    if r == 0.0 {
        return (BoundCase::PivotObtuse, 0.0);
    }
    if delta <= r {
        let t = (1.0 - delta * delta / (4.0 * r * r)).max(0.0);
        return (BoundCase::PivotNear, delta * t.sqrt());
    }
    let to_mover = mover.sub(v);
    let len = to_mover.norm();
    let cos = anchor.sub(v).dot(&to_mover) / (r * len);
    let p_bar = v.add(&to_mover.scale(r / len));
    let d_bar = p_bar.distance(anchor);
    if cos >= 0.5 {
        let t = (1.0 - d_bar * d_bar / (4.0 * r * r)).max(0.0);
        (BoundCase::PivotAcute, d_bar * t.sqrt())
    } else if cos > 0.0 {
        (BoundCase::PivotMid, 3f64.sqrt() / 2.0 * d_bar)
    } else {
        (BoundCase::PivotObtuse, r)
    }
}

enum Backend {
    Oracle,
    Gram(Box<GramCache>),
}

struct Found {
    point: Vector,
    index: Option<usize>,
}

/// One run of the iteration over a fixed pair of bodies. Algorithm II drives
/// the same session so the trace and pivot-search state carry over.
pub struct Session<'a> {
    pub k: &'a ConvexBody,
    pub k_prime: &'a ConvexBody,
    pub config: Config,
    pub trace: RunTrace,
    pub rho_hat: f64,
    pub eps_abs: f64,
    pub max_iter: u64,
    backend: Backend,
    rng: ChaCha8Rng,
    oracle_ops: u64,
    gram_base_ops: u64,
}

const MAX_ITER_CAP: u64 = 10_000_000;

impl<'a> Session<'a> {
    pub fn new(k: &'a ConvexBody, k_prime: &'a ConvexBody, config: Config) -> Result<Self> {
        config.validate()?;
        if k.dim() != k_prime.dim() {
            return Err(Error::DimensionMismatch {
                expected: k.dim(),
                found: k_prime.dim(),
            });
        }
        let rho_hat = k
            .diameter(config.exact_diameter)?
            .max(k_prime.diameter(config.exact_diameter)?);
        let eps_abs = config.eps_abs.unwrap_or(1e-12 * rho_hat);
        let max_iter = config.max_iter.unwrap_or_else(|| {
            if eps_abs > 0.0 {
                let b = 10.0 * 192.0 * (rho_hat / eps_abs).powi(2);
                if b < MAX_ITER_CAP as f64 {
                    return b.ceil() as u64;
                }
            }
            MAX_ITER_CAP
        });
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            k,
            k_prime,
            config,
            trace: RunTrace::default(),
            rho_hat,
            eps_abs,
            max_iter,
            backend: Backend::Oracle,
            rng,
            oracle_ops: 0,
            gram_base_ops: 0,
        })
    }

    pub fn body(&self, side: Side) -> &'a ConvexBody {
        match side {
            Side::K => self.k,
            Side::KPrime => self.k_prime,
        }
    }

    fn uses_gram(&self) -> bool {
        let point_sets = self.k.as_point_set().is_some() && self.k_prime.as_point_set().is_some();
        match self.config.engine {
            Engine::Naive => false,
            Engine::Gram => point_sets,
            Engine::Auto => point_sets && self.config.strategy != PivotStrategy::FirstViolation,
        }
    }

    /// Counted support call on one side.
    pub fn support(&mut self, side: Side, w: &Vector) -> Result<SupportResult> {
        self.trace.support_calls += 1;
        self.count_oracle_ops(side);
        self.body(side).support(w)
    }

    fn count_oracle_ops(&mut self, side: Side) {
        let m = self.k.dim() as u64;
        self.oracle_ops += match self.body(side).as_point_set() {
            Some(ps) => 2 * m * ps.len() as u64,
            None => 2 * m,
        };
    }

    /// Initial pair, then attaches the pivot-search backend to it.
    pub fn initialize(&mut self, start: Option<(Vector, Vector)>) -> Result<PairState> {
        let mut state = match start {
            Some((p, pp)) => {
                let dim = self.k.dim();
                p.check_dim(dim)?;
                pp.check_dim(dim)?;
                if !self.k.contains(&p)? {
                    return Err(Error::StartNotInBody { body: "K" });
                }
                if !self.k_prime.contains(&pp)? {
                    return Err(Error::StartNotInBody { body: "K'" });
                }
                PairState::new(p, pp)?
            }
            None => self.default_start()?,
        };
        self.attach(&mut state)?;
        self.trace.gap_history.push(state.gap);
        Ok(state)
    }

    fn default_start(&mut self) -> Result<PairState> {
        let (k, kp) = (self.k, self.k_prime);
        if let (Some(ps), Some(q)) = (k.as_point_set(), kp.singleton()) {
            let i = ps.nearest_vertex(q);
            self.count_oracle_ops(Side::K);
            let mut s = PairState::new(ps.points()[i].clone(), q.clone())?;
            s.coeffs_k = Some(unit(ps.len(), i));
            s.coeffs_k_prime = Some(vec![1.0]);
            return Ok(s);
        }
        if let (Some(q), Some(ps)) = (k.singleton(), kp.as_point_set()) {
            let i = ps.nearest_vertex(q);
            self.count_oracle_ops(Side::KPrime);
            let mut s = PairState::new(q.clone(), ps.points()[i].clone())?;
            s.coeffs_k = Some(vec![1.0]);
            s.coeffs_k_prime = Some(unit(ps.len(), i));
            return Ok(s);
        }
        let ref_k = k.reference_point()?;
        let ref_kp = kp.reference_point()?;
        let toward = ref_kp.sub(&ref_k);
        let (p, idx) = if toward.norm() > 0.0 {
            let s = self.support(Side::K, &toward)?;
            (s.point, s.witness_id)
        } else {
            (ref_k, None)
        };
        let back = p.sub(&ref_kp);
        let (pp, idx_p) = if back.norm() > 0.0 {
            let s = self.support(Side::KPrime, &back)?;
            (s.point, s.witness_id)
        } else {
            (ref_kp, None)
        };
        let mut s = PairState::new(p, pp)?;
        s.coeffs_k = initial_coeffs(k, idx);
        s.coeffs_k_prime = initial_coeffs(kp, idx_p);
        Ok(s)
    }

    /// Fills in missing barycentric weights and builds the Gram cache when
    /// that backend is selected.
    pub fn attach(&mut self, state: &mut PairState) -> Result<()> {
        for side in [Side::K, Side::KPrime] {
            if let Some(ps) = self.body(side).as_point_set() {
                let x = state.point(side).clone();
                let slot = state.coeffs_mut(side);
                let ok = slot.as_ref().is_some_and(|w| w.len() == ps.len());
                if !ok {
                    let w = oracles::hull_weights(ps.points(), &x)?.ok_or(Error::StartNotInBody {
                        body: side.name(),
                    })?;
                    *slot = Some(w);
                }
            }
        }
        self.backend = Backend::Oracle;
        if self.uses_gram() {
            let (ps, pps) = (self.k.as_point_set().unwrap(), self.k_prime.as_point_set().unwrap());
            let cache = GramCache::precompute(
                ps.points(),
                pps.points(),
                state.coeffs_k.clone().unwrap(),
                state.coeffs_k_prime.clone().unwrap(),
            )?;
            state.revision = cache.revision();
            self.gram_base_ops = 0;
            self.backend = Backend::Gram(Box::new(cache));
        }
        Ok(())
    }

    pub(crate) fn sync_ops(&mut self) {
        let gram = match &self.backend {
            Backend::Gram(c) => c.ops() - self.gram_base_ops,
            Backend::Oracle => 0,
        };
        self.trace.arith_ops = self.oracle_ops + gram;
        if let Backend::Gram(c) = &self.backend {
            self.trace.gram_refreshes = c.refreshes();
        }
    }

    fn search(&mut self, side: Side, state: &PairState) -> Result<Option<Found>> {
        let body = self.body(side);
        let mover = state.point(side);
        let anchor = state.point(side.other());
        let strategy = self.config.strategy;
        if let Backend::Gram(cache) = &mut self.backend {
            self.trace.support_calls += 1;
            let idx = match strategy {
                PivotStrategy::MaxViolation => cache.fast_pivot(side, state.revision)?,
                PivotStrategy::FirstViolation => {
                    let n = body.as_point_set().map_or(0, |ps| ps.len());
                    let mut order: Vec<usize> = (0..n).collect();
                    order.shuffle(&mut self.rng);
                    cache.first_pivot(side, &order, state.revision)?
                }
                PivotStrategy::MinAngle => {
                    cache.check_revision(state.revision)?;
                    let table = AngleTable::build(cache, side);
                    hull::min_angle_pivot(cache, &table)?
                }
            };
            let ps = body.as_point_set().expect("gram engine needs point sets");
            return Ok(idx.map(|i| Found {
                point: ps.points()[i].clone(),
                index: Some(i),
            }));
        }
        match (strategy, body.as_point_set()) {
            (PivotStrategy::FirstViolation, Some(ps)) => {
                self.trace.support_calls += 1;
                self.count_oracle_ops(side);
                let mut order: Vec<usize> = (0..ps.len()).collect();
                order.shuffle(&mut self.rng);
                for i in order {
                    if is_pivot(mover, anchor, &ps.points()[i])? {
                        return Ok(Some(Found {
                            point: ps.points()[i].clone(),
                            index: Some(i),
                        }));
                    }
                }
                Ok(None)
            }
            (PivotStrategy::MinAngle, Some(ps)) => {
                self.trace.support_calls += 1;
                self.count_oracle_ops(side);
                Ok(hull::direct_min_angle_pivot(ps.points(), mover, anchor)?.map(|i| Found {
                    point: ps.points()[i].clone(),
                    index: Some(i),
                }))
            }
            _ => {
                self.trace.support_calls += 1;
                self.count_oracle_ops(side);
                Ok(find_pivot(body, mover, anchor)?.map(|s| Found {
                    point: s.point,
                    index: s.witness_id,
                }))
            }
        }
    }

    /// Moves the iterate on `side` to the point of segment `[iterate, v]`
    /// nearest to the other iterate. Returns the clamped step size, or
    /// `None` when the step cannot shorten the gap.
    pub(crate) fn advance(
        &mut self,
        side: Side,
        state: &mut PairState,
        v: &Vector,
        index: Option<usize>,
    ) -> Result<Option<f64>> {
        let mover = state.point(side).clone();
        let anchor = state.point(side.other()).clone();
        if mover == *v {
            return Ok(None);
        }
        let gap_before = state.gap;
        let (alpha, next) = match &self.backend {
            Backend::Gram(cache) => {
                let j = index.ok_or_else(|| {
                    Error::InvariantViolation("gram step without a vertex index".into())
                })?;
                cache.check_revision(state.revision)?;
                let a = cache.segment_alpha(side, j)?.alpha;
                let next = if a == 1.0 { v.clone() } else { mover.lerp(v, a) };
                (a, next)
            }
            Backend::Oracle => {
                let step = nearest_on_segment(&anchor, &mover, v)?;
                self.oracle_ops += 6 * mover.dim() as u64;
                (step.alpha, step.point)
            }
        };
        if alpha <= 0.0 || next.distance(&anchor) >= gap_before {
            return Ok(None);
        }
        if let Backend::Gram(cache) = &mut self.backend {
            cache.apply_step(side, index.expect("checked above"), alpha)?;
        }
        if let Some(w) = state.coeffs_mut(side).as_mut() {
            if let Some(j) = index {
                for x in w.iter_mut() {
                    *x *= 1.0 - alpha;
                }
                w[j] += alpha;
            }
        }
        state.set_point(side, next);
        state.revision += 1;
        self.sync_ops();
        Ok(Some(alpha))
    }

    pub(crate) fn record(&mut self, rec: StepRecord) {
        if !rec.check.holds {
            self.trace.bound_violations += 1;
            info!(
                "contraction bound violated at step {}: {:e} > {:e} ({:?})",
                rec.iter, rec.gap_after, rec.check.bound, rec.check.case
            );
        }
        match rec.kind {
            StepKind::Pivot => self.trace.pivot_steps += 1,
            StepKind::Weak => self.trace.weak_steps += 1,
        }
        self.trace.gap_history.push(rec.gap_after);
        if self.config.record_steps {
            self.trace.steps.push(rec);
        }
    }

    fn side_order(&self) -> [Side; 2] {
        if self.config.alternate_sides && self.trace.iterations() % 2 == 1 {
            [Side::KPrime, Side::K]
        } else {
            [Side::K, Side::KPrime]
        }
    }

    /// One pivot step: search the sides in order and move the first side
    /// that has a pivot.
    pub fn step(&mut self, state: &mut PairState) -> Result<StepOutcome> {
        if state.gap <= 0.0 {
            return Err(Error::DegeneratePair { gap: state.gap });
        }
        for side in self.side_order() {
            let Some(found) = self.search(side, state)? else {
                continue;
            };
            let mover = state.point(side).clone();
            let anchor = state.point(side.other()).clone();
            let gap_before = state.gap;
            let Some(alpha) = self.advance(side, state, &found.point, found.index)? else {
                debug!("pivot on {} gives no progress at gap {gap_before:e}", side.name());
                continue;
            };
            match side {
                Side::K => state.last_pivot_k = Some(found.point.clone()),
                Side::KPrime => state.last_pivot_k_prime = Some(found.point.clone()),
            }
            let (case, bound) = pivot_step_bound(&mover, &anchor, &found.point);
            let rec = StepRecord {
                iter: self.trace.iterations(),
                kind: StepKind::Pivot,
                side,
                gap_before,
                gap_after: state.gap,
                pivot: found.point,
                pivot_index: found.index,
                alpha,
                check: BoundCheck {
                    case,
                    bound,
                    holds: state.gap <= bound + 1e-12 * gap_before,
                },
            };
            self.record(rec.clone());
            return Ok(StepOutcome::Moved(rec));
        }
        self.sync_ops();
        Ok(StepOutcome::NoPivot)
    }

    fn stop_test(&self, state: &PairState, rule: StopRule) -> Option<f64> {
        if state.gap <= self.eps_abs {
            return Some(0.0);
        }
        let eps = self.config.eps;
        match rule {
            StopRule::PivotDistance => [
                state.last_pivot_k.as_ref().map(|v| state.p.distance(v)),
                state.last_pivot_k_prime.as_ref().map(|v| state.p_prime.distance(v)),
            ]
            .into_iter()
            .flatten()
            .find(|&r| state.gap <= eps * r),
            StopRule::Diameter => (state.gap <= eps * self.rho_hat).then_some(self.rho_hat),
            StopRule::WitnessOnly => None,
        }
    }

    /// Iterates from `state` until a certificate is reached.
    pub fn run_from(&mut self, mut state: PairState, rule: StopRule) -> Result<CertificateI> {
        loop {
            if let Some(basis) = self.stop_test(&state, rule) {
                return Ok(CertificateI {
                    kind: CertificateKind::Intersection,
                    pair: state,
                    bisector: None,
                    relative_gap_basis: basis,
                });
            }
            if self.trace.iterations() >= self.max_iter {
                self.trace.termination = Some(Termination::MaxIter);
                self.sync_ops();
                return Err(Error::MaxIterExceeded {
                    limit: self.max_iter,
                    best: Box::new(state),
                    trace: Box::new(self.trace.clone()),
                });
            }
            match self.step(&mut state)? {
                StepOutcome::Moved(_) => {}
                StepOutcome::NoPivot => {
                    let plane = bisector(&state.p, &state.p_prime)?;
                    return Ok(CertificateI {
                        kind: CertificateKind::Witness,
                        pair: state,
                        bisector: Some(plane),
                        relative_gap_basis: 0.0,
                    });
                }
            }
        }
    }

    /// Flags the trace when the iteration count exceeds the analysis budget.
    fn flag_budget(&mut self, cert: &CertificateI, delta0: f64) -> Result<()> {
        let budget = match cert.kind {
            CertificateKind::Witness => {
                let plane = cert.bisector.as_ref().expect("witness has a bisector");
                let lo = self.support(Side::K, &plane.normal.scale(-1.0))?;
                let hi = self.support(Side::KPrime, &plane.normal)?;
                let lower = (plane.normal.dot(&lo.point) - plane.normal.dot(&hi.point)) / plane.normal.norm();
                if lower > 0.0 {
                    Some(192.0 * (self.rho_hat / lower).powi(2))
                } else {
                    None
                }
            }
            CertificateKind::Intersection if self.rho_hat > 0.0 => {
                let ratio = delta0 / self.rho_hat;
                Some((23.0 + ratio * ratio) * 2.0 / (self.config.eps * self.config.eps))
            }
            CertificateKind::Intersection => None,
        };
        self.trace.budget = budget;
        self.trace.budget_exceeded = budget.is_some_and(|b| self.trace.iterations() as f64 > b + 1.0);
        Ok(())
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    w[i] = 1.0;
    w
}

fn initial_coeffs(body: &ConvexBody, idx: Option<usize>) -> Option<Vec<f64>> {
    let ps = body.as_point_set()?;
    match idx {
        Some(i) => Some(unit(ps.len(), i)),
        // Reference point of a point set is its centroid.
        None => Some(vec![1.0 / ps.len() as f64; ps.len()]),
    }
}

/// Initial pair per the default heuristics, or the validated `start`.
pub fn initialize(
    k: &ConvexBody,
    k_prime: &ConvexBody,
    start: Option<(Vector, Vector)>,
) -> Result<PairState> {
    Session::new(k, k_prime, Config::default())?.initialize(start)
}

/// One max-violation step on `state` with the support-oracle backend.
pub fn step(state: &mut PairState, k: &ConvexBody, k_prime: &ConvexBody) -> Result<StepOutcome> {
    let config = Config {
        engine: Engine::Naive,
        ..Config::default()
    };
    let mut s = Session::new(k, k_prime, config)?;
    s.step(state)
}

/// Runs the algorithm from the default or given start.
pub fn run(
    k: &ConvexBody,
    k_prime: &ConvexBody,
    config: &Config,
    start: Option<(Vector, Vector)>,
) -> Result<(CertificateI, RunTrace)> {
    let mut s = Session::new(k, k_prime, config.clone())?;
    let state = s.initialize(start)?;
    let cert = s.run_in_session(state)?;
    Ok((cert, s.trace))
}

impl Session<'_> {
    /// Runs to a certificate with the configured stop rule and records the
    /// termination reason and budget flag.
    pub fn run_in_session(&mut self, state: PairState) -> Result<CertificateI> {
        let delta0 = state.gap;
        let cert = self.run_from(state, self.config.stop_rule)?;
        self.trace.termination = Some(match cert.kind {
            CertificateKind::Intersection => Termination::Intersection,
            CertificateKind::Witness => Termination::Witness,
        });
        self.flag_budget(&cert, delta0)?;
        self.sync_ops();
        Ok(cert)
    }
}

/// Strict separation residuals of a witness: `min_K h.x - a` and
/// `a - max_K' h.x`, both positive for a sound witness.
pub fn witness_residuals(k: &ConvexBody, k_prime: &ConvexBody, plane: &Hyperplane) -> Result<(f64, f64)> {
    let lo = k.support(&plane.normal.scale(-1.0))?;
    let hi = k_prime.support(&plane.normal)?;
    Ok((
        plane.normal.dot(&lo.point) - plane.offset,
        plane.offset - plane.normal.dot(&hi.point),
    ))
}

/// Tolerance for witness residuals at the scale of the pair.
pub fn residual_tolerance(pair: &PairState) -> f64 {
    pivot_slack(pair.p.norm_sq(), pair.p_prime.norm_sq()) * 1e3
}

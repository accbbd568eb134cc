//! Dense-tableau two-phase simplex for `max c.x  s.t.  A x <= b`, `x` free.
//!
//! Free variables are split as `x = x+ - x-`, each row gets a slack, and rows
//! with a negative right-hand side get an artificial variable for Phase I.
//! Pivoting uses the largest reduced cost and switches to Bland's rule when
//! degenerate pivots pile up, so the method cannot cycle. Column layout of
//! the tableau:
//!
//! ```text
//! [ x+ (m) | x- (m) | slack (n) | artificial (k) | rhs ]
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivot elements at or below this fraction of their column's largest
/// entry (or of 1, whichever is larger) are never used.
pub const PIVOT_TOL: f64 = 1e-9;

const TIE_SPREAD: f64 = 1e-3;

/// Relative tolerance on constraint residuals.
pub const FEAS_TOL: f64 = 1e-9;

/// Consecutive degenerate pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    /// Maximized objective `c`.
    pub objective: Vec<f64>,
    /// Constraint rows of `A`, each of length `objective.len()`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub x: Option<Vec<f64>>,
    pub value: Option<f64>,
    /// Basic column per row, in the tableau layout described above.
    pub basis: Option<Vec<usize>>,
}

impl LpOutcome {
    fn status_only(status: LpStatus) -> Self {
        Self {
            status,
            x: None,
            value: None,
            basis: None,
        }
    }
}

impl LpProblem {
    pub fn new(objective: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let p = Self { objective, a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a.len()
    }

    fn validate(&self) -> Result<()> {
        let m = self.num_vars();
        if m == 0 {
            return Err(Error::InvalidArgument("LP has no variables".into()));
        }
        if self.b.len() != self.a.len() {
            return Err(Error::DimensionMismatch {
                expected: self.a.len(),
                found: self.b.len(),
            });
        }
        for row in &self.a {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: row.len(),
                });
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.b.iter())
            .chain(self.a.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("LP data must be finite".into()));
        }
        Ok(())
    }

    /// Largest constraint violation `max_i (A_i x - b_i) / (1 + |b_i|)`, or 0.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| {
                let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
                (lhs - bi) / (1.0 + bi.abs())
            })
            .fold(0.0, f64::max)
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Reduced costs; the last entry holds minus the objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    num_cols: usize,
    first_artificial: usize,
}

enum PivotOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.num_cols]
    }

    fn pivot(&mut self, r: usize, k: usize) {
        let piv = self.rows[r][k];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        self.rows[r][k] = 1.0;
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[k];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[k] = 0.0;
            }
        }
        let f = self.cost[k];
        if f != 0.0 {
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.cost[k] = 0.0;
        }
        self.basis[r] = k;
    }

    /// Minimum-ratio test over pivot elements above `PIVOT_TOL` relative to
    /// the column. Among rows tied on the ratio only those within a factor
    /// `TIE_SPREAD` of the largest tied element qualify; the largest wins,
    /// or under `bland` the smallest basic index.
    fn leaving_row(&self, k: usize, bland: bool) -> Option<usize> {
        let col_max = self.rows.iter().fold(0.0f64, |m, row| m.max(row[k].abs()));
        let tol = PIVOT_TOL * col_max.max(1.0);
        let eligible: Vec<(usize, f64, f64)> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, row)| row[k] > tol)
            .map(|(r, row)| (r, self.rhs(r).max(0.0) / row[k], row[k]))
            .collect();
        let min_ratio = eligible.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let tied: Vec<&(usize, f64, f64)> = eligible
            .iter()
            .filter(|e| e.1 - min_ratio <= 1e-12 * (1.0 + min_ratio))
            .collect();
        let largest = tied.iter().map(|e| e.2).fold(0.0, f64::max);
        let chosen = if bland {
            tied.iter()
                .filter(|e| e.2 >= TIE_SPREAD * largest)
                .min_by_key(|e| self.basis[e.0])
        } else {
            tied.iter().max_by(|a, b| a.2.total_cmp(&b.2))
        };
        chosen.map(|e| e.0)
    }

    /// Runs simplex iterations over columns `< limit`, entering on the
    /// largest reduced cost and falling back to Bland's rule after a run of
    /// degenerate pivots.
    fn optimize(&mut self, limit: usize, cost_tol: f64) -> Result<PivotOutcome> {
        let max_iter = 100_000 + 50 * (self.rows.len() + self.num_cols).pow(2);
        let mut in_basis = vec![false; self.num_cols];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        let mut stalled = 0usize;
        for _ in 0..max_iter {
            let bland = stalled > STALL_LIMIT;
            let mut candidates: Vec<usize> = (0..limit)
                .filter(|&k| !in_basis[k] && self.cost[k] > cost_tol)
                .collect();
            if !bland {
                candidates.sort_by(|&i, &j| self.cost[j].total_cmp(&self.cost[i]));
            }
            let mut saw_tiny = false;
            let mut chosen = None;
            for k in candidates {
                match self.leaving_row(k, bland) {
                    Some(r) => {
                        chosen = Some((r, k));
                        break;
                    }
                    None if self.rows.iter().any(|row| row[k] > 0.0) => saw_tiny = true,
                    None => return Ok(PivotOutcome::Unbounded),
                }
            }
            match chosen {
                Some((r, k)) => {
                    if self.rhs(r) <= 0.0 {
                        stalled += 1;
                    } else {
                        stalled = 0;
                    }
                    in_basis[self.basis[r]] = false;
                    in_basis[k] = true;
                    self.pivot(r, k);
                }
                None if saw_tiny => {
                    return Err(Error::NumericalBreakdown(
                        "simplex: only pivot elements below tolerance remain".into(),
                    ))
                }
                None => return Ok(PivotOutcome::Optimal),
            }
        }
        Err(Error::NumericalBreakdown("simplex: iteration cap reached".into()))
    }
}

/// Solves `max c.x  s.t.  A x <= b` with `x` free.
pub fn solve(problem: &LpProblem) -> Result<LpOutcome> {
    problem.validate()?;
    let m = problem.num_vars();
    let n = problem.num_rows();
    let structural = 2 * m + n;
    let negative_rows: Vec<usize> = (0..n).filter(|&i| problem.b[i] < 0.0).collect();
    let num_cols = structural + negative_rows.len();

    let mut rows = vec![vec![0.0; num_cols + 1]; n];
    let mut basis = vec![0usize; n];
    for i in 0..n {
        let sign = if problem.b[i] < 0.0 { -1.0 } else { 1.0 };
        let row = &mut rows[i];
        for j in 0..m {
            row[j] = sign * problem.a[i][j];
            row[m + j] = -sign * problem.a[i][j];
        }
        row[2 * m + i] = sign;
        row[num_cols] = sign * problem.b[i];
        basis[i] = 2 * m + i;
    }
    for (t, &i) in negative_rows.iter().enumerate() {
        rows[i][structural + t] = 1.0;
        basis[i] = structural + t;
    }

    let b_scale = 1.0 + problem.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut tab = Tableau {
        rows,
        cost: vec![0.0; num_cols + 1],
        basis,
        num_cols,
        first_artificial: structural,
    };

    if !negative_rows.is_empty() {
        // Phase I: maximize minus the sum of artificials.
        for &i in &negative_rows {
            for j in 0..structural {
                tab.cost[j] += tab.rows[i][j];
            }
            tab.cost[num_cols] += tab.rows[i][num_cols];
        }
        tab.optimize(num_cols, PIVOT_TOL)?;
        let infeasibility = tab.cost[num_cols];
        if infeasibility > FEAS_TOL * b_scale {
            return Ok(LpOutcome::status_only(LpStatus::Infeasible));
        }
        // Drive artificials at zero level out of the basis where possible.
        for r in 0..n {
            if tab.basis[r] >= tab.first_artificial {
                tab.rows[r][num_cols] = 0.0;
                let k = (0..structural)
                    .filter(|k| !tab.basis.contains(k))
                    .max_by(|&i, &j| tab.rows[r][i].abs().total_cmp(&tab.rows[r][j].abs()));
                if let Some(k) = k.filter(|&k| tab.rows[r][k].abs() > PIVOT_TOL) {
                    tab.pivot(r, k);
                }
            }
        }
    }

    // Phase II objective in reduced form.
    let col_cost = |j: usize| -> f64 {
        if j < m {
            problem.objective[j]
        } else if j < 2 * m {
            -problem.objective[j - m]
        } else {
            0.0
        }
    };
    let c_scale = 1.0 + problem.objective.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut cost = vec![0.0; num_cols + 1];
    for (j, c) in cost.iter_mut().enumerate().take(structural) {
        *c = col_cost(j);
    }
    for r in 0..n {
        let cb = col_cost(tab.basis[r]);
        if cb != 0.0 {
            for j in 0..=num_cols {
                cost[j] -= cb * tab.rows[r][j];
            }
        }
    }
    for &bj in &tab.basis {
        cost[bj] = 0.0;
    }
    tab.cost = cost;

    match tab.optimize(structural, PIVOT_TOL * c_scale)? {
        PivotOutcome::Unbounded => Ok(LpOutcome::status_only(LpStatus::Unbounded)),
        PivotOutcome::Optimal => {
            let mut x = vec![0.0; m];
            for (r, &bj) in tab.basis.iter().enumerate() {
                if bj < m {
                    x[bj] += tab.rhs(r);
                } else if bj < 2 * m {
                    x[bj - m] -= tab.rhs(r);
                }
            }
            let violation = problem.max_violation(&x);
            if violation > FEAS_TOL.sqrt() {
                return Err(Error::NumericalBreakdown(format!(
                    "simplex: final point violates a constraint by {violation:e}"
                )));
            }
            let value = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            Ok(LpOutcome {
                status: LpStatus::Optimal,
                x: Some(x),
                value: Some(value),
                basis: Some(tab.basis),
            })
        }
    }
}

/// Whether `{x : A x <= b, A' x <= b'}` is nonempty.
pub fn joint_feasible(
    a: &[Vec<f64>],
    b: &[f64],
    a_prime: &[Vec<f64>],
    b_prime: &[f64],
) -> Result<bool> {
    let cols = a
        .first()
        .or_else(|| a_prime.first())
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidArgument("no constraints".into()))?;
    if let Some(row) = a.iter().chain(a_prime).find(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch {
            expected: cols,
            found: row.len(),
        });
    }
    let rows: Vec<Vec<f64>> = a.iter().chain(a_prime).cloned().collect();
    let rhs: Vec<f64> = b.iter().chain(b_prime).copied().collect();
    let problem = LpProblem::new(vec![0.0; cols], rows, rhs)?;
    Ok(solve(&problem)?.status != LpStatus::Infeasible)
}

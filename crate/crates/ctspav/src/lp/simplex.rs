//! Bounded-variable primal simplex over double precision with a dense basis
//! inverse, two phases (artificial columns for infeasible starting slacks)
//! and a Bland's-rule fallback after degeneracy stalls.

use super::{LinearModel, Sense};

/// Primal feasibility / optimality tolerance.
pub const TOL_FEAS: f64 = 1e-7;
const PIVOT_EPS: f64 = 1e-9;
/// Pivots smaller than this are re-checked against a fresh factorization
/// before being trusted.
const PIVOT_TRUST: f64 = 1e-7;
/// Anti-cycling bound expansion: per-iteration growth and its cap, relative
/// to each bound's magnitude. Growing the working bounds slightly lets every
/// pivot take a strictly positive step, which rules out stalling cycles; the
/// accumulated violation stays far below the feasibility tolerance and is
/// cleared at every refactorization.
const EXPAND_INC: f64 = 2e-11;
const EXPAND_CAP: f64 = 2e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (empty unless optimal).
    pub x: Vec<f64>,
    /// Row duals (empty unless optimal).
    pub duals: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("malformed model: {0}")]
    Model(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    FreeZero,
}

struct Simplex {
    m: usize,
    nstruct: usize,
    ncols: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    x: Vec<f64>,
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    refactor_every: usize,
    conservative: bool,
}

pub fn solve_lp(model: &LinearModel) -> Result<LpSolution, LpError> {
    match solve_lp_with(model, false) {
        Err(LpError::Numerical(_)) => solve_lp_with(model, true),
        other => other,
    }
}

fn solve_lp_with(model: &LinearModel, conservative: bool) -> Result<LpSolution, LpError> {
    model.validate().map_err(LpError::Model)?;
    let m = model.num_rows();
    let n = model.num_vars();

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, row) in model.rows.iter().enumerate() {
        for &(v, c) in &row.coeffs {
            cols[v].push((r, c));
        }
    }
    let mut lower: Vec<f64> = model.vars.iter().map(|v| v.lower).collect();
    let mut upper: Vec<f64> = model.vars.iter().map(|v| v.upper).collect();
    let mut cost: Vec<f64> = model.vars.iter().map(|v| v.objective).collect();
    // One slack per row: a'x + s = b.
    for (r, row) in model.rows.iter().enumerate() {
        cols.push(vec![(r, 1.0)]);
        let (lo, hi) = match row.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        lower.push(lo);
        upper.push(hi);
        cost.push(0.0);
        if lo > hi {
            return Err(LpError::Model(format!(
                "row {r}: inconsistent slack bounds"
            )));
        }
    }
    let b: Vec<f64> = model.rows.iter().map(|r| r.rhs).collect();

    let mut sx = Simplex {
        m,
        nstruct: n,
        ncols: n + m,
        cols,
        lower,
        upper,
        cost,
        b,
        state: Vec::new(),
        basis: Vec::new(),
        x: Vec::new(),
        binv: vec![0.0; m * m],
        pivots_since_refactor: 0,
        refactor_every: if conservative { 16 } else { 64 },
        conservative,
    };
    sx.run(model)
}

impl Simplex {
    fn run(&mut self, model: &LinearModel) -> Result<LpSolution, LpError> {
        // Nonbasic structurals at a finite bound (prefer lower), slacks basic.
        self.state = (0..self.ncols)
            .map(|j| {
                if j >= self.nstruct {
                    VarState::Basic(j - self.nstruct)
                } else if self.lower[j].is_finite() {
                    VarState::AtLower
                } else if self.upper[j].is_finite() {
                    VarState::AtUpper
                } else {
                    VarState::FreeZero
                }
            })
            .collect();
        self.basis = (self.nstruct..self.ncols).collect();
        self.x = (0..self.ncols)
            .map(|j| match self.state[j] {
                VarState::AtLower => self.lower[j],
                VarState::AtUpper => self.upper[j],
                _ => 0.0,
            })
            .collect();
        for i in 0..self.m {
            self.binv[i * self.m + i] = 1.0;
        }
        self.recompute_basics();

        // Phase 1: add an artificial column for every basic slack outside its
        // bounds, minimize total infeasibility.
        let mut artificials = Vec::new();
        let mut phase1_cost = vec![0.0; self.ncols];
        for r in 0..self.m {
            let s = self.nstruct + r;
            let v = self.x[s];
            let (lo, hi) = (self.lower[s], self.upper[s]);
            if v > hi + TOL_FEAS {
                self.state[s] = VarState::AtUpper;
                self.x[s] = hi;
                self.push_artificial(r, v - hi, 0.0, f64::INFINITY, 1.0, &mut phase1_cost);
                artificials.push(self.ncols - 1);
            } else if v < lo - TOL_FEAS {
                self.state[s] = VarState::AtLower;
                self.x[s] = lo;
                self.push_artificial(r, v - lo, f64::NEG_INFINITY, 0.0, -1.0, &mut phase1_cost);
                artificials.push(self.ncols - 1);
            }
        }
        if !artificials.is_empty() {
            let p1 = phase1_cost;
            self.pivot_loop(&p1, true)?;
            let infeas: f64 = artificials.iter().map(|&j| self.x[j].abs()).sum();
            if infeas > TOL_FEAS * 10.0 * (1.0 + self.b.iter().map(|v| v.abs()).fold(0.0, f64::max))
            {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    x: Vec::new(),
                    duals: Vec::new(),
                    objective: 0.0,
                });
            }
            for &j in &artificials {
                self.lower[j] = 0.0;
                self.upper[j] = 0.0;
                if !matches!(self.state[j], VarState::Basic(_)) {
                    self.state[j] = VarState::AtLower;
                    self.x[j] = 0.0;
                }
            }
        }

        // Phase 2 runs on deterministically perturbed costs to break the
        // massive degeneracy of big-M scheduling rows; the returned objective
        // and duals are computed from the true costs at the final basis.
        let perturbed: Vec<f64> = self
            .cost
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let h = ((j as u64).wrapping_mul(0x9e3779b97f4a7c15) >> 40) as f64
                    / (1u64 << 24) as f64;
                c + 1e-9 * (1.0 + c.abs()) * (0.5 + h)
            })
            .collect();
        let status = self.pivot_loop(&perturbed, false)?;
        let cost = self.cost.clone();
        if status == LpStatus::Unbounded {
            return Ok(LpSolution {
                status,
                x: Vec::new(),
                duals: Vec::new(),
                objective: f64::NEG_INFINITY,
            });
        }

        self.refactor()?;
        self.recompute_basics();
        self.check_feasible()?;
        let y = self.duals(&cost);
        let x: Vec<f64> = self.x[..self.nstruct].to_vec();
        let objective = model.objective_value(&x);
        Ok(LpSolution {
            status: LpStatus::Optimal,
            x,
            duals: y,
            objective,
        })
    }

    fn push_artificial(
        &mut self,
        row: usize,
        value: f64,
        lo: f64,
        hi: f64,
        c1: f64,
        phase1_cost: &mut Vec<f64>,
    ) {
        self.cols.push(vec![(row, 1.0)]);
        self.lower.push(lo);
        self.upper.push(hi);
        self.cost.push(0.0);
        phase1_cost.push(c1);
        self.state.push(VarState::Basic(row));
        self.x.push(value);
        self.basis[row] = self.ncols;
        self.ncols += 1;
    }

    /// Primal pivots until optimal for `cost` or unbounded. Switches to
    /// Bland's rule after a stall of 10*m non-improving iterations.
    fn pivot_loop(&mut self, cost: &[f64], phase1: bool) -> Result<LpStatus, LpError> {
        let stall_limit = 10 * self.m.max(1);
        let iter_limit = 200 * (self.m + self.ncols) + 20_000;
        let mut stall = 0usize;
        let mut bland = self.conservative;
        let mut expand = 0.0f64;
        let mut last_obj = self.objective_of(cost);
        let debug = std::env::var_os("CTSPAV_LP_DEBUG").is_some();
        let (mut n_pivots, mut n_flips, mut n_retries) = (0usize, 0usize, 0usize);
        for _iter in 0.._iter_limit_loop(iter_limit) {
            if debug && _iter % 20_000 == 19_999 {
                eprintln!(
                    "lp[{}x{}] iter {} obj {:.6} pivots {} flips {} retries {} bland {}",
                    self.m,
                    self.ncols,
                    _iter,
                    self.objective_of(cost),
                    n_pivots,
                    n_flips,
                    n_retries,
                    bland
                );
            }
            let y = self.duals(cost);
            let entering = self.price(cost, &y, bland);
            let Some((j, dir)) = entering else {
                if debug {
                    eprintln!(
                        "lp[{}x{}] done iters {} pivots {} flips {} retries {}",
                        self.m, self.ncols, _iter, n_pivots, n_flips, n_retries
                    );
                }
                return Ok(LpStatus::Optimal);
            };
            let w = self.ftran(j);
            expand += EXPAND_INC;
            if expand > EXPAND_CAP {
                self.refactor()?;
                self.recompute_basics();
                expand = EXPAND_INC;
            }
            match self.ratio_test(j, dir, &w, bland, expand) {
                RatioOutcome::Unbounded => {
                    if phase1 {
                        return Err(LpError::Numerical("phase-1 subproblem unbounded".into()));
                    }
                    return Ok(LpStatus::Unbounded);
                }
                RatioOutcome::BoundFlip(t) => {
                    n_flips += 1;
                    self.apply_flip(j, dir, t, &w);
                }
                RatioOutcome::Pivot(t, leave_pos) => {
                    // A tiny pivot under a stale factorization is usually
                    // drift; re-factorize and price again before trusting it.
                    if w[leave_pos].abs() < PIVOT_TRUST && self.pivots_since_refactor > 0 {
                        n_retries += 1;
                        self.refactor()?;
                        self.recompute_basics();
                        expand = EXPAND_INC;
                        continue;
                    }
                    n_pivots += 1;
                    // Strictly positive minimum step defeats degenerate
                    // cycling; the blocking variable overshoots its bound by
                    // at most the expansion allowance.
                    let t = t.max(EXPAND_INC / w[leave_pos].abs().max(1e-3));
                    self.apply_pivot(j, dir, t, leave_pos, &w)?;
                }
            }
            let obj = self.objective_of(cost);
            if obj < last_obj - 1e-6 {
                stall = 0;
                last_obj = obj;
                bland = self.conservative;
            } else {
                stall += 1;
                if stall > stall_limit {
                    bland = true;
                }
            }
        }
        Err(LpError::Numerical(format!(
            "iteration limit reached ({} rows, {} cols, {} pivots, {} flips, {} retries)",
            self.m, self.ncols, n_pivots, n_flips, n_retries
        )))
    }

    fn objective_of(&self, cost: &[f64]) -> f64 {
        (0..self.ncols).map(|j| cost[j] * self.x[j]).sum()
    }

    /// Entering variable and its move direction (+1 up from lower/free,
    /// -1 down from upper/free).
    fn price(&self, cost: &[f64], y: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols {
            let (eligible, dir, score) = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => {
                    if self.lower[j] >= self.upper[j] {
                        continue; // fixed
                    }
                    let d = self.reduced_cost(cost, y, j);
                    (d < -TOL_FEAS, 1.0, -d)
                }
                VarState::AtUpper => {
                    if self.lower[j] >= self.upper[j] {
                        continue;
                    }
                    let d = self.reduced_cost(cost, y, j);
                    (d > TOL_FEAS, -1.0, d)
                }
                VarState::FreeZero => {
                    let d = self.reduced_cost(cost, y, j);
                    (
                        d.abs() > TOL_FEAS,
                        if d < 0.0 { 1.0 } else { -1.0 },
                        d.abs(),
                    )
                }
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, dir));
            }
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    #[inline]
    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        for &(r, c) in &self.cols[j] {
            d -= y[r] * c;
        }
        d
    }

    /// y = c_B' B^-1
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for i in 0..m {
                    y[i] += cb * row[i];
                }
            }
        }
        y
    }

    /// w = B^-1 A_j
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut w = vec![0.0; m];
        for &(r, c) in &self.cols[j] {
            for i in 0..m {
                w[i] += c * self.binv[i * m + r];
            }
        }
        w
    }

    /// Two-pass expanding ratio test: pass one finds the smallest blocking
    /// ratio against bounds widened by `expand`, pass two picks the largest
    /// pivot element (smallest basic index under Bland) among blockers whose
    /// true ratio does not exceed it.
    fn ratio_test(&self, j: usize, dir: f64, w: &[f64], bland: bool, expand: f64) -> RatioOutcome {
        let own_room = self.upper[j] - self.lower[j];
        let mut t_lim = if own_room.is_finite() {
            own_room
        } else {
            f64::INFINITY
        };
        let mut any_blocker = false;
        for (k, &wk) in w.iter().enumerate() {
            let coef = -dir * wk;
            if coef.abs() <= PIVOT_EPS {
                continue;
            }
            let bj = self.basis[k];
            let xk = self.x[bj];
            let room = if coef > 0.0 {
                if self.upper[bj].is_finite() {
                    let widened = self.upper[bj] + expand * (1.0 + self.upper[bj].abs());
                    (widened - xk).max(0.0) / coef
                } else {
                    continue;
                }
            } else if self.lower[bj].is_finite() {
                let widened = self.lower[bj] - expand * (1.0 + self.lower[bj].abs());
                (xk - widened).max(0.0) / (-coef)
            } else {
                continue;
            };
            any_blocker = true;
            if room < t_lim {
                t_lim = room;
            }
        }
        if t_lim.is_infinite() {
            return RatioOutcome::Unbounded;
        }
        if !any_blocker || (own_room.is_finite() && own_room <= t_lim) {
            if own_room.is_finite() && (!any_blocker || own_room <= t_lim) {
                return RatioOutcome::BoundFlip(own_room);
            }
        }
        let mut blocker: Option<usize> = None;
        for (k, &wk) in w.iter().enumerate() {
            let coef = -dir * wk;
            if coef.abs() <= PIVOT_EPS {
                continue;
            }
            let bj = self.basis[k];
            let xk = self.x[bj];
            let room = if coef > 0.0 {
                if self.upper[bj].is_finite() {
                    (self.upper[bj] - xk).max(0.0) / coef
                } else {
                    continue;
                }
            } else if self.lower[bj].is_finite() {
                (xk - self.lower[bj]).max(0.0) / (-coef)
            } else {
                continue;
            };
            if room <= t_lim {
                let better = match blocker {
                    None => true,
                    Some(cur) => {
                        if bland {
                            self.basis[k] < self.basis[cur]
                        } else {
                            wk.abs() > w[cur].abs()
                        }
                    }
                };
                if better {
                    blocker = Some(k);
                }
            }
        }
        match blocker {
            Some(k) => RatioOutcome::Pivot(t_lim.max(0.0), k),
            None => {
                if own_room.is_finite() {
                    RatioOutcome::BoundFlip(own_room)
                } else {
                    RatioOutcome::Unbounded
                }
            }
        }
    }

    fn apply_flip(&mut self, j: usize, dir: f64, t: f64, w: &[f64]) {
        for (k, &wk) in w.iter().enumerate() {
            let bj = self.basis[k];
            self.x[bj] -= dir * t * wk;
        }
        self.x[j] += dir * t;
        self.state[j] = if dir > 0.0 {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
    }

    fn apply_pivot(
        &mut self,
        j: usize,
        dir: f64,
        t: f64,
        leave_pos: usize,
        w: &[f64],
    ) -> Result<(), LpError> {
        let m = self.m;
        let pivot = w[leave_pos];
        if pivot.abs() <= PIVOT_EPS {
            return Err(LpError::Numerical(format!(
                "pivot element {pivot:.3e} too small"
            )));
        }
        for (k, &wk) in w.iter().enumerate() {
            let bj = self.basis[k];
            self.x[bj] -= dir * t * wk;
        }
        self.x[j] += dir * t;

        let leaving = self.basis[leave_pos];
        // Leaving variable parks at whichever bound it reached.
        let lv = self.x[leaving];
        let to_upper = self.upper[leaving].is_finite()
            && (lv - self.upper[leaving]).abs() <= (lv - self.lower[leaving]).abs();
        self.state[leaving] = if to_upper {
            VarState::AtUpper
        } else {
            VarState::AtLower
        };
        self.x[leaving] = if to_upper {
            self.upper[leaving]
        } else {
            self.lower[leaving]
        };

        self.basis[leave_pos] = j;
        self.state[j] = VarState::Basic(leave_pos);

        // Elementary row update of the dense inverse.
        let inv_pivot = 1.0 / pivot;
        let prow: Vec<f64> = self.binv[leave_pos * m..(leave_pos + 1) * m]
            .iter()
            .map(|v| v * inv_pivot)
            .collect();
        for k in 0..m {
            if k == leave_pos {
                continue;
            }
            let f = w[k];
            if f != 0.0 {
                for i in 0..m {
                    self.binv[k * m + i] -= f * prow[i];
                }
            }
        }
        self.binv[leave_pos * m..(leave_pos + 1) * m].copy_from_slice(&prow);

        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= self.refactor_every {
            self.refactor()?;
            self.recompute_basics();
        }
        Ok(())
    }

    /// Rebuild the dense inverse from the basis columns by Gauss-Jordan
    /// elimination with partial pivoting.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &bj) in self.basis.iter().enumerate() {
            for &(r, c) in &self.cols[bj] {
                a[r * m + k] = c;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let (mut pr, mut pv) = (col, a[col * m + col].abs());
            for r in col + 1..m {
                if a[r * m + col].abs() > pv {
                    pr = r;
                    pv = a[r * m + col].abs();
                }
            }
            if pv <= 1e-12 {
                return Err(LpError::Numerical(format!(
                    "singular basis during refactorization (column {col}, pivot {pv:.3e})"
                )));
            }
            if pr != col {
                for i in 0..m {
                    a.swap(col * m + i, pr * m + i);
                    inv.swap(col * m + i, pr * m + i);
                }
            }
            let p = a[col * m + col];
            for i in 0..m {
                a[col * m + i] /= p;
                inv[col * m + i] /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r * m + col];
                    if f != 0.0 {
                        for i in 0..m {
                            a[r * m + i] -= f * a[col * m + i];
                            inv[r * m + i] -= f * inv[col * m + i];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// x_B = B^-1 (b - N x_N)
    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = self.b.clone();
        for j in 0..self.ncols {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                for &(r, c) in &self.cols[j] {
                    rhs[r] -= c * xj;
                }
            }
        }
        for k in 0..m {
            let mut v = 0.0;
            for r in 0..m {
                v += self.binv[k * m + r] * rhs[r];
            }
            self.x[self.basis[k]] = v;
        }
    }

    fn check_feasible(&self) -> Result<(), LpError> {
        let scale = 1.0 + self.b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for j in 0..self.ncols {
            let v = self.x[j];
            if v < self.lower[j] - TOL_FEAS * scale || v > self.upper[j] + TOL_FEAS * scale {
                return Err(LpError::Numerical(format!(
                    "variable {j} = {v:.6e} violates bounds [{}, {}] (scale {scale:.1e})",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        Ok(())
    }
}

enum RatioOutcome {
    Pivot(f64, usize),
    BoundFlip(f64),
    Unbounded,
}


#[inline]
fn _iter_limit_loop(limit: usize) -> usize {
    limit
}

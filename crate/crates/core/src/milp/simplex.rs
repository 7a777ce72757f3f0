//! Bounded-variable primal simplex on a sparse LP core.
//!
//! The core is the equality form `A x + s = b` with bounded structural
//! variables `x` and per-row slack bounds encoding the row sense. Columns
//! are stored compressed-sparse, the basis inverse is kept explicitly in
//! column-major order (instances here stay small enough for a dense
//! inverse), pricing is Dantzig's rule with a Bland fallback when the
//! objective stalls, which guarantees termination.

use crate::tol::{FEASIBILITY_TOL, PIVOT_TOL, REDUCED_COST_TOL};

/// Sparse LP in equality form: rows are `a_row . x + s_row = b` with slack
/// bounds expressing <=, >= or =. Objective is maximization over `c`.
#[derive(Debug, Clone)]
pub struct CoreLp {
    pub n: usize,
    pub m: usize,
    /// Column starts, length n+1 (compressed sparse column layout).
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub val: Vec<f64>,
    pub b: Vec<f64>,
    pub slack_lb: Vec<f64>,
    pub slack_ub: Vec<f64>,
    /// Maximization costs for structural columns.
    pub c: Vec<f64>,
}

impl CoreLp {
    #[inline]
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        (&self.row_idx[lo..hi], &self.val[lo..hi])
    }

    /// Builds the CSC arrays from per-column term lists.
    pub fn from_columns(
        m: usize,
        cols: &[Vec<(usize, f64)>],
        b: Vec<f64>,
        slack_lb: Vec<f64>,
        slack_ub: Vec<f64>,
        c: Vec<f64>,
    ) -> Self {
        let n = cols.len();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut val = Vec::new();
        col_ptr.push(0);
        for terms in cols {
            for &(r, v) in terms {
                debug_assert!(r < m);
                row_idx.push(r);
                val.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        CoreLp { n, m, col_ptr, row_idx, val, b, slack_lb, slack_ub, c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap hit; numerical trouble. Never an optimality claim.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Structural variable values (empty unless Optimal).
    pub x: Vec<f64>,
    /// Maximization objective value (meaningful only when Optimal).
    pub objective: f64,
    pub iterations: u64,
    /// Per structural column at optimality (empty otherwise): moving the
    /// column off its bound by one unit worsens the maximization objective
    /// by at least `reduced[j].abs()`. Basic columns carry 0.
    pub reduced: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable parked at zero.
    FreeZero,
}

/// Iterations of no improvement before switching to Bland's rule.
const STALL_SWITCH: u64 = 300;
/// Iterations of no improvement before a phase gives up and the driver
/// retries with perturbed costs. Bland's rule guarantees escape from a
/// degenerate vertex eventually, but "eventually" can be tens of thousands
/// of iterations; perturbation is far cheaper.
const STALL_ABORT: u64 = 2_000;
/// Hard safety cap as a multiple of problem size.
const ITER_CAP_PER_DIM: u64 = 60;

enum ColKind {
    Structural(usize),
    Slack(usize),
    Artificial(usize, f64),
}

struct Tableau<'a> {
    lp: &'a CoreLp,
    lb: Vec<f64>,
    ub: Vec<f64>,
    /// Artificial columns: (row, sign).
    arts: Vec<(usize, f64)>,
    /// Basic column per row.
    basis: Vec<usize>,
    vstate: Vec<VState>,
    xval: Vec<f64>,
    /// Dense basis inverse, COLUMN-major m*m: entry (i,k) at binv[k*m+i].
    binv: Vec<f64>,
    cost: Vec<f64>,
    iterations: u64,
    bland: bool,
    stall: u64,
    last_cost: f64,
}

impl<'a> Tableau<'a> {
    fn ncols(&self) -> usize {
        self.lp.n + self.lp.m + self.arts.len()
    }

    fn col_kind(&self, j: usize) -> ColKind {
        if j < self.lp.n {
            ColKind::Structural(j)
        } else if j < self.lp.n + self.lp.m {
            ColKind::Slack(j - self.lp.n)
        } else {
            let (row, sign) = self.arts[j - self.lp.n - self.lp.m];
            ColKind::Artificial(row, sign)
        }
    }

    /// y = B^-1 * A_j, exploiting column sparsity.
    fn ftran(&self, j: usize, y: &mut [f64]) {
        let m = self.lp.m;
        y.iter_mut().for_each(|v| *v = 0.0);
        match self.col_kind(j) {
            ColKind::Structural(s) => {
                let (rows, vals) = self.lp.col(s);
                for (&k, &a) in rows.iter().zip(vals.iter()) {
                    if a != 0.0 {
                        let col = &self.binv[k * m..(k + 1) * m];
                        for (yi, bi) in y.iter_mut().zip(col.iter()) {
                            *yi += a * bi;
                        }
                    }
                }
            }
            ColKind::Slack(r) => {
                y.copy_from_slice(&self.binv[r * m..(r + 1) * m]);
            }
            ColKind::Artificial(r, sign) => {
                let col = &self.binv[r * m..(r + 1) * m];
                for (yi, bi) in y.iter_mut().zip(col.iter()) {
                    *yi = sign * bi;
                }
            }
        }
    }

    /// pi = c_B^T B^-1 (one dot product per inverse column).
    fn dual_prices(&self, pi: &mut [f64]) {
        let m = self.lp.m;
        let mut cb = vec![0.0; m];
        let mut any = false;
        for (k, &bj) in self.basis.iter().enumerate() {
            let c = self.cost[bj];
            cb[k] = c;
            any |= c != 0.0;
        }
        if !any {
            pi.iter_mut().for_each(|p| *p = 0.0);
            return;
        }
        for (k, p) in pi.iter_mut().enumerate() {
            let col = &self.binv[k * m..(k + 1) * m];
            let mut acc = 0.0;
            for (cv, bv) in cb.iter().zip(col.iter()) {
                acc += cv * bv;
            }
            *p = acc;
        }
    }

    fn reduced_cost(&self, j: usize, pi: &[f64]) -> f64 {
        match self.col_kind(j) {
            ColKind::Structural(s) => {
                let (rows, vals) = self.lp.col(s);
                let mut acc = 0.0;
                for (&k, &a) in rows.iter().zip(vals.iter()) {
                    acc += pi[k] * a;
                }
                self.cost[j] - acc
            }
            ColKind::Slack(r) => self.cost[j] - pi[r],
            ColKind::Artificial(r, sign) => self.cost[j] - sign * pi[r],
        }
    }

    /// Entering direction for an eligible nonbasic column, if any:
    /// +1 increases the variable, -1 decreases it (minimization).
    fn entering_direction(&self, j: usize, d: f64) -> Option<f64> {
        match self.vstate[j] {
            VState::Basic => None,
            VState::AtLower => {
                if d < -REDUCED_COST_TOL && self.ub[j] > self.lb[j] {
                    Some(1.0)
                } else {
                    None
                }
            }
            VState::AtUpper => {
                if d > REDUCED_COST_TOL && self.ub[j] > self.lb[j] {
                    Some(-1.0)
                } else {
                    None
                }
            }
            VState::FreeZero => {
                if d < -REDUCED_COST_TOL {
                    Some(1.0)
                } else if d > REDUCED_COST_TOL {
                    Some(-1.0)
                } else {
                    None
                }
            }
        }
    }

    /// One phase of minimization. Returns the status of the phase; Stalled
    /// covers both the hard iteration cap and `STALL_ABORT` consecutive
    /// non-improving pivots (the driver may retry with perturbed costs).
    fn minimize(&mut self, cap: u64) -> LpStatus {
        let m = self.lp.m;
        let mut pi = vec![0.0; m];
        let mut y = vec![0.0; m];
        loop {
            if self.iterations >= cap {
                return LpStatus::Stalled;
            }
            self.dual_prices(&mut pi);

            // Pricing: Dantzig (most violating) or Bland (first eligible).
            let mut enter: Option<(usize, f64, f64)> = None; // (col, dir, score)
            for j in 0..self.ncols() {
                if self.vstate[j] == VState::Basic {
                    continue;
                }
                let d = self.reduced_cost(j, &pi);
                if let Some(dir) = self.entering_direction(j, d) {
                    if self.bland {
                        enter = Some((j, dir, d.abs()));
                        break;
                    }
                    let score = d.abs();
                    if enter.is_none_or(|(_, _, s)| score > s) {
                        enter = Some((j, dir, score));
                    }
                }
            }
            let Some((e, dir, _)) = enter else {
                return LpStatus::Optimal;
            };

            self.ftran(e, &mut y);

            // Ratio test: how far can the entering variable move?
            let span = self.ub[e] - self.lb[e]; // may be +inf
            let mut t_best = span;
            let mut leave: Option<usize> = None; // row index
            for i in 0..m {
                let yi = y[i];
                if yi.abs() <= PIVOT_TOL {
                    continue;
                }
                let bj = self.basis[i];
                let delta = dir * yi; // basic value moves by -t*delta
                let limit = if delta > 0.0 {
                    let lo = self.lb[bj];
                    if lo == f64::NEG_INFINITY {
                        continue;
                    }
                    (self.xval[bj] - lo) / delta
                } else {
                    let hi = self.ub[bj];
                    if hi == f64::INFINITY {
                        continue;
                    }
                    (self.xval[bj] - hi) / delta
                };
                let limit = limit.max(0.0);
                let replace = match leave {
                    None => limit < t_best - 1e-12 || limit <= t_best,
                    Some(r) => {
                        if limit < t_best - 1e-12 {
                            true
                        } else if limit <= t_best + 1e-12 {
                            if self.bland {
                                // Bland: smallest leaving variable index.
                                self.basis[i] < self.basis[r]
                            } else {
                                // Stability: largest pivot magnitude.
                                yi.abs() > y[r].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if replace {
                    t_best = t_best.min(limit);
                    leave = Some(i);
                }
            }

            if t_best == f64::INFINITY {
                return LpStatus::Unbounded;
            }
            self.iterations += 1;

            // Move values.
            let t = t_best;
            for i in 0..m {
                if y[i] != 0.0 {
                    let bj = self.basis[i];
                    self.xval[bj] -= t * dir * y[i];
                }
            }
            let e_from = match self.vstate[e] {
                VState::AtLower => self.lb[e],
                VState::AtUpper => self.ub[e],
                VState::FreeZero => 0.0,
                VState::Basic => unreachable!(),
            };
            let e_new = e_from + dir * t;

            match leave {
                None => {
                    // Bound flip: the entering variable runs to its other
                    // bound; the basis is unchanged.
                    self.xval[e] = if dir > 0.0 { self.ub[e] } else { self.lb[e] };
                    self.vstate[e] =
                        if dir > 0.0 { VState::AtUpper } else { VState::AtLower };
                }
                Some(r) => {
                    let old = self.basis[r];
                    // The leaving variable lands on the bound it ran into.
                    let snapped = if dir * y[r] > 0.0 { self.lb[old] } else { self.ub[old] };
                    self.xval[old] = snapped;
                    self.vstate[old] =
                        if dir * y[r] > 0.0 { VState::AtLower } else { VState::AtUpper };
                    self.xval[e] = e_new;
                    self.vstate[e] = VState::Basic;
                    self.basis[r] = e;
                    // Eta update: column-major lets each inverse column be
                    // transformed independently and contiguously.
                    let pivot = y[r];
                    for k in 0..m {
                        let col = &mut self.binv[k * m..(k + 1) * m];
                        let pv = col[r] / pivot;
                        if pv != 0.0 {
                            for (ci, yi) in col.iter_mut().zip(y.iter()) {
                                *ci -= yi * pv;
                            }
                            // The r-th entry got overwritten by the loop;
                            // restore the intended pivot-row value.
                            col[r] = pv;
                        }
                    }
                }
            }

            // Stall bookkeeping: switch to Bland's rule when the objective
            // stops moving (degenerate cycling guard).
            let cur = self.current_cost();
            if cur < self.last_cost - 1e-12 {
                self.last_cost = cur;
                self.stall = 0;
                self.bland = false;
            } else {
                self.stall += 1;
                if self.stall >= STALL_SWITCH {
                    self.bland = true;
                }
                if self.stall >= STALL_ABORT {
                    return LpStatus::Stalled;
                }
            }

            // Periodic hygiene: recompute basic values from scratch.
            if self.iterations.is_multiple_of(512) {
                self.refresh_basics();
            }
        }
    }

    fn current_cost(&self) -> f64 {
        (0..self.ncols()).map(|j| self.cost[j] * self.xval[j]).sum()
    }

    /// Re-arms Dantzig pricing and the stall counter after a cost change.
    fn reset_pricing(&mut self) {
        self.bland = false;
        self.stall = 0;
        self.last_cost = self.current_cost();
    }

    /// Recomputes basic variable values as B^-1 (b - A_N x_N).
    fn refresh_basics(&mut self) {
        let m = self.lp.m;
        let mut beff = self.lp.b.clone();
        for j in 0..self.ncols() {
            if self.vstate[j] == VState::Basic {
                continue;
            }
            let v = self.xval[j];
            if v == 0.0 {
                continue;
            }
            match self.col_kind(j) {
                ColKind::Structural(s) => {
                    let (rows, vals) = self.lp.col(s);
                    for (&k, &a) in rows.iter().zip(vals.iter()) {
                        beff[k] -= v * a;
                    }
                }
                ColKind::Slack(r) => beff[r] -= v,
                ColKind::Artificial(r, sign) => beff[r] -= sign * v,
            }
        }
        // x_B = B^-1 beff accumulated column by column.
        let mut xb = vec![0.0; m];
        for (k, &bv) in beff.iter().enumerate() {
            if bv != 0.0 {
                let col = &self.binv[k * m..(k + 1) * m];
                for (xi, ci) in xb.iter_mut().zip(col.iter()) {
                    *xi += bv * ci;
                }
            }
        }
        for (i, &v) in xb.iter().enumerate() {
            self.xval[self.basis[i]] = v;
        }
    }
}

/// Solves the core LP with the given structural bounds (overriding any
/// bounds baked into the core). Returns structural values on success.
pub fn solve_bounded_lp(lp: &CoreLp, lb: &[f64], ub: &[f64]) -> LpOutcome {
    debug_assert_eq!(lb.len(), lp.n);
    debug_assert_eq!(ub.len(), lp.n);
    let m = lp.m;
    let n = lp.n;

    for j in 0..n {
        if lb[j] > ub[j] || lb[j].is_nan() || ub[j].is_nan() {
            return LpOutcome {
                status: LpStatus::Infeasible,
                x: vec![],
                objective: f64::NEG_INFINITY,
                iterations: 0,
                reduced: vec![],
            };
        }
    }

    // Full bound vectors: structural then slacks (artificials appended later).
    let mut full_lb: Vec<f64> = lb.to_vec();
    let mut full_ub: Vec<f64> = ub.to_vec();
    full_lb.extend_from_slice(&lp.slack_lb);
    full_ub.extend_from_slice(&lp.slack_ub);

    // Nonbasic start: every structural variable at its nearest finite bound.
    let mut vstate = Vec::with_capacity(n + m);
    let mut xval = Vec::with_capacity(n + m);
    for j in 0..n {
        if full_lb[j].is_finite() {
            vstate.push(VState::AtLower);
            xval.push(full_lb[j]);
        } else if full_ub[j].is_finite() {
            vstate.push(VState::AtUpper);
            xval.push(full_ub[j]);
        } else {
            vstate.push(VState::FreeZero);
            xval.push(0.0);
        }
    }

    // Row residuals decide whether the slack can start basic or an
    // artificial is needed.
    let mut beff = lp.b.clone();
    for j in 0..n {
        let v = xval[j];
        if v != 0.0 {
            let (rows, vals) = lp.col(j);
            for (&k, &a) in rows.iter().zip(vals.iter()) {
                beff[k] -= v * a;
            }
        }
    }
    let mut basis = Vec::with_capacity(m);
    let mut arts: Vec<(usize, f64)> = Vec::new();
    let mut art_values: Vec<f64> = Vec::new();
    for r in 0..m {
        let slack_col = n + r;
        let want = beff[r];
        let clamped = want.clamp(lp.slack_lb[r], lp.slack_ub[r]);
        let resid = want - clamped;
        if resid.abs() <= 1e-11 {
            basis.push(slack_col);
            vstate.push(VState::Basic);
            xval.push(want);
        } else {
            // Slack parked at the nearest bound; artificial absorbs the rest.
            vstate.push(if clamped == lp.slack_lb[r] { VState::AtLower } else { VState::AtUpper });
            xval.push(clamped);
            arts.push((r, resid.signum()));
            art_values.push(resid.abs());
            basis.push(usize::MAX); // patched below once ids are known
        }
    }
    let n_art = arts.len();
    let base_cols = n + m;
    let mut art_seen = 0;
    for r in 0..m {
        if basis[r] == usize::MAX {
            basis[r] = base_cols + art_seen;
            art_seen += 1;
        }
    }
    for v in &art_values {
        vstate.push(VState::Basic);
        xval.push(*v);
        full_lb.push(0.0);
        full_ub.push(f64::INFINITY);
    }

    // Basis matrix is diag(+-1): slacks +1, artificials their sign.
    let mut binv = vec![0.0; m * m];
    for r in 0..m {
        let sign = if basis[r] >= base_cols { arts[basis[r] - base_cols].1 } else { 1.0 };
        binv[r * m + r] = sign; // diagonal: same slot in either layout
    }

    let cap = ITER_CAP_PER_DIM * (n as u64 + m as u64) + 10_000;
    let mut t = Tableau {
        lp,
        lb: full_lb,
        ub: full_ub,
        arts,
        basis,
        vstate,
        xval,
        binv,
        cost: vec![0.0; base_cols + n_art],
        iterations: 0,
        bland: false,
        stall: 0,
        last_cost: f64::INFINITY,
    };

    // Phase 1: drive artificial infeasibility to zero.
    if n_art > 0 {
        for k in 0..n_art {
            t.cost[base_cols + k] = 1.0;
        }
        t.reset_pricing();
        let mut end = t.minimize(cap);
        if end == LpStatus::Stalled && t.iterations < cap {
            // Degenerate shuffle: pull structural columns off their cost
            // ties with a tiny jitter, solve, then re-run exactly. The
            // artificial-value infeasibility test below only trusts the
            // exact run.
            for j in 0..n {
                t.cost[j] = 1e-7 * jitter(j);
            }
            t.reset_pricing();
            if t.minimize(cap) == LpStatus::Optimal {
                for j in 0..n {
                    t.cost[j] = 0.0;
                }
                t.reset_pricing();
                end = t.minimize(cap);
            }
        }
        match end {
            LpStatus::Optimal => {}
            // Phase 1 is bounded below by construction; an unbounded signal
            // can only mean numerical trouble.
            LpStatus::Unbounded | LpStatus::Stalled => {
                return LpOutcome {
                    status: LpStatus::Stalled,
                    x: vec![],
                    objective: f64::NEG_INFINITY,
                    iterations: t.iterations,
                    reduced: vec![],
                }
            }
            s => {
                return LpOutcome {
                    status: s,
                    x: vec![],
                    objective: f64::NEG_INFINITY,
                    iterations: t.iterations,
                    reduced: vec![],
                }
            }
        }
        let infeas: f64 = (0..n_art).map(|k| t.xval[base_cols + k].max(0.0)).sum();
        let scale = 1.0 + lp.b.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if infeas > FEASIBILITY_TOL * scale {
            return LpOutcome {
                status: LpStatus::Infeasible,
                x: vec![],
                objective: f64::NEG_INFINITY,
                iterations: t.iterations,
                reduced: vec![],
            };
        }
        // Pin artificials to zero for phase 2.
        for k in 0..n_art {
            let j = base_cols + k;
            t.lb[j] = 0.0;
            t.ub[j] = 0.0;
            t.cost[j] = 0.0;
            if t.vstate[j] != VState::Basic {
                t.xval[j] = 0.0;
                t.vstate[j] = VState::AtLower;
            }
        }
        t.refresh_basics();
    }

    // Phase 2: minimize -c (maximize c).
    for j in 0..n {
        t.cost[j] = -lp.c[j];
    }
    for j in n..base_cols + n_art {
        t.cost[j] = 0.0;
    }
    t.reset_pricing();
    let mut status = t.minimize(cap);
    if status == LpStatus::Stalled && t.iterations < cap {
        // Perturbation retry. Only the final exact run may claim Optimal or
        // Unbounded; a perturbed run that fails just means Stalled.
        let scale = 1.0 + lp.c.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for j in 0..n {
            t.cost[j] -= scale * 1e-9 * jitter(j);
        }
        t.reset_pricing();
        if t.minimize(cap) == LpStatus::Optimal {
            for j in 0..n {
                t.cost[j] = -lp.c[j];
            }
            t.reset_pricing();
            status = t.minimize(cap);
        }
    }
    match status {
        LpStatus::Optimal => {
            t.refresh_basics();
            let x: Vec<f64> = t.xval[..n].to_vec();
            let objective = lp.c.iter().zip(x.iter()).map(|(c, v)| c * v).sum();
            debug_assert!(
                primal_residual(lp, &x) <= 1e-6,
                "simplex returned infeasible point"
            );
            let mut pi = vec![0.0; m];
            t.dual_prices(&mut pi);
            let mut reduced = vec![0.0; n];
            for (j, r) in reduced.iter_mut().enumerate() {
                if t.vstate[j] != VState::Basic {
                    *r = t.reduced_cost(j, &pi);
                }
            }
            LpOutcome {
                status: LpStatus::Optimal,
                x,
                objective,
                iterations: t.iterations,
                reduced,
            }
        }
        s => LpOutcome {
            status: s,
            x: vec![],
            objective: f64::NEG_INFINITY,
            iterations: t.iterations,
            reduced: vec![],
        },
    }
}

/// Deterministic per-column jitter in [1, 2) for cost perturbation.
fn jitter(j: usize) -> f64 {
    let h = (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    1.0 + (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Max scaled row violation of a structural assignment (test/debug helper).
pub fn primal_residual(lp: &CoreLp, x: &[f64]) -> f64 {
    let m = lp.m;
    let mut act = vec![0.0; m];
    for j in 0..lp.n {
        let v = x[j];
        if v != 0.0 {
            let (rows, vals) = lp.col(j);
            for (&k, &a) in rows.iter().zip(vals.iter()) {
                act[k] += v * a;
            }
        }
    }
    let mut worst = 0.0f64;
    for r in 0..m {
        let s = lp.b[r] - act[r]; // implied slack value
        let scale = 1.0 + lp.b[r].abs();
        let viol = if s < lp.slack_lb[r] {
            lp.slack_lb[r] - s
        } else if s > lp.slack_ub[r] {
            s - lp.slack_ub[r]
        } else {
            0.0
        };
        worst = worst.max(viol / scale);
    }
    worst
}

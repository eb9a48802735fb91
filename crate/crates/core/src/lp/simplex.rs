//! Bounded-variable primal revised simplex.
//!
//! Every row `aᵢᵀx ⋚ bᵢ` becomes `aᵢᵀx − sᵢ = 0` with the logical variable
//! `sᵢ` carrying the row bounds, so the initial all-logical basis is `−I`.
//! The basis inverse is held explicitly and updated by Gauss-Jordan pivots;
//! it is rebuilt periodically from the structural block only (logical columns
//! are unit vectors). Phase 1 minimizes the sum of bound infeasibilities of
//! the basic variables, phase 2 the user objective. Pricing is Dantzig's rule,
//! switching to Bland's rule after a stall.

use alloc::vec;
use alloc::vec::Vec;

use super::{LpError, LpOptions, LpProblem, LpSolution, LpStatus, Relation};
use crate::math::abs;

const PIVOT_TOL: f64 = 1e-9;
const REINVERT_EVERY: usize = 100;
const STALL_LIMIT: usize = 100;

/// Solves `p`. Failure modes that are properties of the problem are reported
/// through [`LpStatus`]; `Err` is reserved for malformed input and numerical
/// breakdown.
pub fn solve_lp(p: &LpProblem, options: &LpOptions) -> Result<LpSolution, LpError> {
    p.validate()?;
    let n_all = p.num_vars();
    for j in 0..n_all {
        if p.lower[j] > p.upper[j] {
            return Ok(trivial(p, LpStatus::Infeasible));
        }
    }

    // Presolve: substitute fixed variables, drop rows left empty.
    let fixed: Vec<bool> = (0..n_all).map(|j| p.lower[j] == p.upper[j]).collect();
    let mut new_index = vec![usize::MAX; n_all];
    let mut kept = Vec::new();
    for j in 0..n_all {
        if !fixed[j] {
            new_index[j] = kept.len();
            kept.push(j);
        }
    }
    let mut offset = p.offset;
    for j in 0..n_all {
        if fixed[j] {
            offset += p.objective[j] * p.lower[j];
        }
    }
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); kept.len()];
    let mut row_lo = Vec::new();
    let mut row_hi = Vec::new();
    for row in &p.constraints {
        let mut rhs = row.rhs;
        let mut live = Vec::new();
        for &(j, a) in &row.coeffs {
            if a == 0.0 {
                continue;
            }
            if fixed[j] {
                rhs -= a * p.lower[j];
            } else {
                live.push((new_index[j], a));
            }
        }
        let (lo, hi) = match row.relation {
            Relation::Le => (f64::NEG_INFINITY, rhs),
            Relation::Ge => (rhs, f64::INFINITY),
            Relation::Eq => (rhs, rhs),
        };
        if live.is_empty() {
            let tol = options.feas_tol * (1.0 + abs(rhs));
            if lo > tol || hi < -tol {
                return Ok(trivial(p, LpStatus::Infeasible));
            }
            continue;
        }
        let i = row_lo.len();
        // merge duplicate entries within the row
        live.sort_unstable_by_key(|e| e.0);
        let mut last = usize::MAX;
        for (j, a) in live {
            if j == last {
                let c = cols[j].last_mut().expect("entry");
                c.1 += a;
            } else {
                cols[j].push((i, a));
                last = j;
            }
        }
        row_lo.push(lo);
        row_hi.push(hi);
    }

    let n = kept.len();
    let m = row_lo.len();
    let mut cost = Vec::with_capacity(n + m);
    let mut lo = Vec::with_capacity(n + m);
    let mut hi = Vec::with_capacity(n + m);
    for &j in &kept {
        cost.push(p.objective[j]);
        lo.push(p.lower[j]);
        hi.push(p.upper[j]);
    }
    cost.extend(core::iter::repeat_n(0.0, m));
    lo.extend_from_slice(&row_lo);
    hi.extend_from_slice(&row_hi);

    let iter_limit = options.iter_limit.unwrap_or(50 * (n_all + p.num_rows()).max(1));
    let mut s = Simplex::new(n, m, cols, cost, lo, hi, *options);
    let status = s.run(iter_limit)?;

    let mut x = vec![0.0; n_all];
    for j in 0..n_all {
        x[j] = if fixed[j] { p.lower[j] } else { s.x[new_index[j]] };
    }
    let objective = p.evaluate(&x);
    debug_assert!(
        status != LpStatus::Optimal
            || abs(objective - (offset + s.structural_objective())) <= 1e-6 * (1.0 + abs(objective))
    );
    let dual_infeasibility = if status == LpStatus::Optimal {
        s.dual_infeasibility()
    } else {
        f64::NAN
    };
    Ok(LpSolution {
        status,
        primal_infeasibility: p.max_violation(&x),
        x,
        objective,
        iterations: s.iterations,
        wall_time: 0.0,
        dual_infeasibility,
    })
}

fn trivial(p: &LpProblem, status: LpStatus) -> LpSolution {
    LpSolution {
        status,
        x: vec![0.0; p.num_vars()],
        objective: f64::NAN,
        iterations: 0,
        wall_time: 0.0,
        dual_infeasibility: f64::NAN,
        primal_infeasibility: f64::NAN,
    }
}

const NONBASIC: usize = usize::MAX;

struct Simplex {
    n: usize,
    m: usize,
    /// Structural columns, sparse by row.
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    /// Basis position of each variable, `NONBASIC` otherwise.
    pos: Vec<usize>,
    /// Row-major m×m basis inverse.
    binv: Vec<f64>,
    opts: LpOptions,
    iterations: usize,
    since_reinvert: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Leave {
    /// Entering variable moves to its opposite bound.
    Flip,
    /// Basic variable at position `pos` leaves at the given value.
    Basic { pos: usize, value: f64 },
}

impl Simplex {
    fn new(
        n: usize,
        m: usize,
        cols: Vec<Vec<(usize, f64)>>,
        cost: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        opts: LpOptions,
    ) -> Self {
        let mut x = vec![0.0; n + m];
        for j in 0..n {
            x[j] = if lo[j].is_finite() {
                lo[j]
            } else if hi[j].is_finite() {
                hi[j]
            } else {
                0.0
            };
        }
        let basis: Vec<usize> = (n..n + m).collect();
        let mut pos = vec![NONBASIC; n + m];
        for (p, &j) in basis.iter().enumerate() {
            pos[j] = p;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = -1.0;
        }
        let mut s = Self {
            n,
            m,
            cols,
            cost,
            lo,
            hi,
            x,
            basis,
            pos,
            binv,
            opts,
            iterations: 0,
            since_reinvert: 0,
        };
        s.compute_basics();
        s
    }

    fn structural_objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    /// Calls `f(row, coeff)` for every entry of column `j`.
    #[inline]
    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                f(i, a);
            }
        } else {
            f(j - self.n, -1.0);
        }
    }

    /// x_B = −B⁻¹ N x_N
    fn compute_basics(&mut self) {
        let m = self.m;
        let mut w = vec![0.0; m];
        for j in 0..self.n + m {
            if self.pos[j] == NONBASIC && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_col(j, |i, a| w[i] += a * xj);
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let v: f64 = row.iter().zip(&w).map(|(b, w)| b * w).sum();
            self.x[self.basis[p]] = -v;
        }
    }

    /// Rebuilds B⁻¹ from scratch. Logical columns are −eᵢ, so only the block
    /// of structural basic columns restricted to rows without a basic logical
    /// needs a dense inverse.
    fn reinvert(&mut self) -> Result<(), LpError> {
        let (n, m) = (self.n, self.m);
        let mut covered = vec![false; m];
        let mut struct_pos = Vec::new();
        for (p, &j) in self.basis.iter().enumerate() {
            if j >= n {
                covered[j - n] = true;
            } else {
                struct_pos.push(p);
            }
        }
        let rc: Vec<usize> = (0..m).filter(|&i| !covered[i]).collect();
        let k = struct_pos.len();
        debug_assert_eq!(rc.len(), k);
        let mut rc_index = vec![usize::MAX; m];
        for (a, &i) in rc.iter().enumerate() {
            rc_index[i] = a;
        }
        // C[a][b] = A[rc[a], S_b]
        let mut c = vec![0.0; k * k];
        for (b, &p) in struct_pos.iter().enumerate() {
            for &(i, v) in &self.cols[self.basis[p]] {
                if rc_index[i] != usize::MAX {
                    c[rc_index[i] * k + b] = v;
                }
            }
        }
        let cinv = invert_dense(&mut c, k).ok_or(LpError::NumericalBreakdown {
            iterations: self.iterations,
            reason: "singular basis",
        })?;
        self.binv.iter_mut().for_each(|v| *v = 0.0);
        for (b, &p) in struct_pos.iter().enumerate() {
            for a in 0..k {
                self.binv[p * m + rc[a]] = cinv[b * k + a];
            }
        }
        for (p, &j) in self.basis.iter().enumerate() {
            if j < n {
                continue;
            }
            let i = j - n;
            self.binv[p * m + i] = -1.0;
        }
        // logical rows: u_p = A[i,S] u_S − w_i
        for (b, &p) in struct_pos.iter().enumerate() {
            for &(i, v) in &self.cols[self.basis[p]] {
                if covered[i] {
                    let lp = self.pos[n + i];
                    for a in 0..k {
                        self.binv[lp * m + rc[a]] += v * cinv[b * k + a];
                    }
                }
            }
        }
        self.since_reinvert = 0;
        Ok(())
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let t = self.opts.feas_tol;
        if self.x[j] < self.lo[j] - t {
            self.lo[j] - self.x[j]
        } else if self.x[j] > self.hi[j] + t {
            self.x[j] - self.hi[j]
        } else {
            0.0
        }
    }

    fn phase_costs(&self, phase1: bool) -> Vec<f64> {
        let t = self.opts.feas_tol;
        self.basis
            .iter()
            .map(|&j| {
                if phase1 {
                    if self.x[j] < self.lo[j] - t {
                        -1.0
                    } else if self.x[j] > self.hi[j] + t {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.cost[j]
                }
            })
            .collect()
    }

    /// yᵀ = c_Bᵀ B⁻¹
    fn duals(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (p, &c) in cb.iter().enumerate() {
            if c != 0.0 {
                let row = &self.binv[p * m..(p + 1) * m];
                for (yi, b) in y.iter_mut().zip(row) {
                    *yi += c * b;
                }
            }
        }
        y
    }

    #[inline]
    fn reduced_cost(&self, j: usize, y: &[f64], phase1: bool) -> f64 {
        let c = if phase1 { 0.0 } else { self.cost[j] };
        if j < self.n {
            c - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
        } else {
            c + y[j - self.n]
        }
    }

    /// +1 to increase, −1 to decrease, 0 when not eligible.
    fn direction(&self, j: usize, d: f64) -> f64 {
        let tol = self.opts.opt_tol;
        if self.lo[j] == self.hi[j] {
            return 0.0;
        }
        let at_lo = self.lo[j].is_finite() && self.x[j] <= self.lo[j];
        let at_hi = self.hi[j].is_finite() && self.x[j] >= self.hi[j];
        if d < -tol && !at_hi {
            1.0
        } else if d > tol && !at_lo {
            -1.0
        } else {
            0.0
        }
    }

    fn run(&mut self, iter_limit: usize) -> Result<LpStatus, LpError> {
        let m = self.m;
        let mut bland = false;
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        let mut was_phase1 = true;
        let mut confirmed = false;
        // phase-2 duals, kept current across pivots
        let mut duals: Option<Vec<f64>> = None;
        loop {
            if self.since_reinvert >= REINVERT_EVERY {
                self.reinvert()?;
                self.compute_basics();
                duals = None;
            }
            let infeas: f64 = self.basis.iter().map(|&j| self.infeasibility(j)).sum();
            let phase1 = infeas > 0.0;
            if phase1 != was_phase1 {
                bland = false;
                stall = 0;
                last_obj = f64::INFINITY;
                was_phase1 = phase1;
            }
            let obj = if phase1 { infeas } else { self.structural_objective() };
            if obj < last_obj - 1e-12 * (1.0 + abs(last_obj)) {
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall >= STALL_LIMIT {
                    bland = true;
                }
            }
            if obj < last_obj {
                last_obj = obj;
            }

            if phase1 {
                duals = None;
            }
            let y = match duals.take() {
                Some(y) => y,
                None => self.duals(&self.phase_costs(phase1)),
            };

            // pricing
            let mut entering = None;
            let mut best = 0.0;
            for j in 0..self.n + m {
                if self.pos[j] != NONBASIC {
                    continue;
                }
                let d = self.reduced_cost(j, &y, phase1);
                let dir = self.direction(j, d);
                if dir == 0.0 {
                    continue;
                }
                if bland {
                    entering = Some((j, dir, d));
                    break;
                }
                if abs(d) > best {
                    best = abs(d);
                    entering = Some((j, dir, d));
                }
            }

            let Some((q, dir, dq)) = entering else {
                if phase1 {
                    return Ok(LpStatus::Infeasible);
                }
                // Confirm optimality on a fresh factorization.
                if !confirmed && self.since_reinvert > 0 {
                    confirmed = true;
                    self.reinvert()?;
                    self.compute_basics();
                    continue;
                }
                return Ok(LpStatus::Optimal);
            };
            confirmed = false;

            if self.iterations >= iter_limit {
                return Ok(LpStatus::IterLimit);
            }

            // alpha = B⁻¹ a_q
            let mut alpha = vec![0.0; m];
            {
                let binv = &self.binv;
                let mut add = |i: usize, a: f64| {
                    for p in 0..m {
                        alpha[p] += binv[p * m + i] * a;
                    }
                };
                if q < self.n {
                    for &(i, a) in &self.cols[q] {
                        add(i, a);
                    }
                } else {
                    add(q - self.n, -1.0);
                }
            }

            let leave = self.ratio_test(q, dir, &alpha, bland);
            let Some((theta, leave)) = leave else {
                if phase1 {
                    return Err(LpError::NumericalBreakdown {
                        iterations: self.iterations,
                        reason: "unbounded phase-1 ray",
                    });
                }
                return Ok(LpStatus::Unbounded);
            };

            // primal update
            for p in 0..m {
                if alpha[p] != 0.0 {
                    let j = self.basis[p];
                    self.x[j] -= dir * theta * alpha[p];
                }
            }
            self.x[q] += dir * theta;
            self.iterations += 1;

            match leave {
                Leave::Flip => {
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    if !phase1 {
                        duals = Some(y);
                    }
                }
                Leave::Basic { pos: r, value } => {
                    let out = self.basis[r];
                    self.x[out] = value;
                    self.basis[r] = q;
                    self.pos[q] = r;
                    self.pos[out] = NONBASIC;
                    if !phase1 {
                        // y ← y + (d_q / α_r) ρ_r, ρ_r the old row r of B⁻¹
                        let mut y = y;
                        let f = dq / alpha[r];
                        let row = &self.binv[r * m..(r + 1) * m];
                        for (yi, b) in y.iter_mut().zip(row) {
                            *yi += f * b;
                        }
                        duals = Some(y);
                    }
                    self.pivot(r, &alpha);
                    self.since_reinvert += 1;
                }
            }
        }
    }

    /// Harris two-pass ratio test. Returns the step length and what leaves.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> Option<(f64, Leave)> {
        let tol = self.opts.feas_tol;
        // (pos, rate, relaxed limit, exact limit, leaving value)
        let mut cands: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
        let mut relaxed_min = f64::INFINITY;
        for p in 0..self.m {
            let a = alpha[p];
            if abs(a) <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[p];
            let rate = -dir * a;
            let (xj, lo, hi) = (self.x[j], self.lo[j], self.hi[j]);
            let target = if rate < 0.0 {
                if xj < lo - tol {
                    None
                } else if xj > hi + tol {
                    Some(hi)
                } else if lo.is_finite() {
                    Some(lo)
                } else {
                    None
                }
            } else if xj > hi + tol {
                None
            } else if xj < lo - tol {
                Some(lo)
            } else if hi.is_finite() {
                Some(hi)
            } else {
                None
            };
            let Some(target) = target else { continue };
            let exact = ((target - xj) / rate).max(0.0);
            let relaxed = ((target - xj + rate.signum() * tol) / rate).max(0.0);
            relaxed_min = relaxed_min.min(relaxed);
            cands.push((p, rate, relaxed, exact, target));
        }
        let flip = if self.lo[q].is_finite() && self.hi[q].is_finite() {
            self.hi[q] - self.lo[q]
        } else {
            f64::INFINITY
        };
        if cands.is_empty() {
            return if flip.is_finite() {
                Some((flip, Leave::Flip))
            } else {
                None
            };
        }
        if flip <= relaxed_min {
            return Some((flip, Leave::Flip));
        }
        let mut pick: Option<(usize, f64, f64, f64, f64)> = None;
        for &c in &cands {
            if c.3 > relaxed_min {
                continue;
            }
            pick = match pick {
                None => Some(c),
                Some(b) => {
                    let better = if bland {
                        self.basis[c.0] < self.basis[b.0]
                    } else {
                        abs(c.1) > abs(b.1)
                    };
                    if better {
                        Some(c)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        let (p, _, _, exact, target) = pick?;
        Some((exact, Leave::Basic { pos: p, value: target }))
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        {
            let row = &mut self.binv[r * m..(r + 1) * m];
            for v in row.iter_mut() {
                *v /= piv;
            }
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for p in 0..m {
            if p == r || alpha[p] == 0.0 {
                continue;
            }
            let f = alpha[p];
            let row = if p < r {
                &mut before[p * m..(p + 1) * m]
            } else {
                let o = (p - r - 1) * m;
                &mut after[o..o + m]
            };
            for (v, pr) in row.iter_mut().zip(prow.iter()) {
                *v -= f * pr;
            }
        }
    }

    fn dual_infeasibility(&self) -> f64 {
        let cb = self.phase_costs(false);
        let y = self.duals(&cb);
        let mut worst: f64 = 0.0;
        for j in 0..self.n + self.m {
            if self.pos[j] != NONBASIC || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j, &y, false);
            let at_lo = self.lo[j].is_finite() && self.x[j] <= self.lo[j];
            let at_hi = self.hi[j].is_finite() && self.x[j] >= self.hi[j];
            let viol = if at_lo {
                (-d).max(0.0)
            } else if at_hi {
                d.max(0.0)
            } else {
                abs(d)
            };
            worst = worst.max(viol);
        }
        worst
    }
}

/// Gauss-Jordan inverse with partial pivoting. Consumes `a`.
fn invert_dense(a: &mut [f64], k: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; k * k];
    for i in 0..k {
        inv[i * k + i] = 1.0;
    }
    for col in 0..k {
        let mut piv = col;
        let mut best = abs(a[col * k + col]);
        for r in col + 1..k {
            let v = abs(a[r * k + col]);
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-12 {
            return None;
        }
        if piv != col {
            for c in 0..k {
                a.swap(piv * k + c, col * k + c);
                inv.swap(piv * k + c, col * k + c);
            }
        }
        // columns left of `col` are already unit vectors
        let d = a[col * k + col];
        for c in col..k {
            a[col * k + c] /= d;
        }
        for c in 0..k {
            inv[col * k + c] /= d;
        }
        for r in 0..k {
            if r == col {
                continue;
            }
            let f = a[r * k + col];
            if f == 0.0 {
                continue;
            }
            for c in col..k {
                a[r * k + c] -= f * a[col * k + c];
            }
            for c in 0..k {
                inv[r * k + c] -= f * inv[col * k + c];
            }
        }
    }
    Some(inv)
}

//! Linear programming.
//!
//! [`LpProblem`] is the common target form for every builder in the crate:
//! a cost vector, sparse rows with a relation and right-hand side, and
//! per-variable bounds (infinite bounds allowed). [`solve_lp`] runs a
//! bounded-variable revised simplex after removing fixed variables and empty
//! rows.

mod simplex;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

pub use simplex::solve_lp;

use crate::clock::Clock;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("numerical breakdown after {iterations} iterations: {reason}")]
    NumericalBreakdown { iterations: usize, reason: &'static str },
    #[error("negative weight {0} for absolute-value term")]
    NegativeWeight(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub name: String,
}

/// `min cᵀx + offset` subject to sparse rows and variable bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// Constant added to the objective value.
    pub offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_names: Vec<String>,
    pub constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_names.push(name.into());
        self.objective.len() - 1
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
            name: name.into(),
        });
        self.constraints.len() - 1
    }

    /// Adds `weight · |center − x[var]|` to the objective through one
    /// auxiliary variable `t ≥ 0` and the rows `t ≥ center − x`,
    /// `t ≥ x − center`. Returns the auxiliary's index.
    pub fn add_abs_term(&mut self, var: usize, center: f64, weight: f64) -> Result<usize, LpError> {
        if !(weight >= 0.0) {
            return Err(LpError::NegativeWeight(weight));
        }
        if var >= self.num_vars() {
            return Err(LpError::Malformed(format!("variable {var} out of range")));
        }
        let name = format!("abs_{}", self.var_names[var]);
        let t = self.add_var(name.clone(), 0.0, f64::INFINITY, weight);
        self.add_row(
            format!("{name}_lo"),
            alloc::vec![(t, 1.0), (var, 1.0)],
            Relation::Ge,
            center,
        );
        self.add_row(
            format!("{name}_hi"),
            alloc::vec![(t, 1.0), (var, -1.0)],
            Relation::Ge,
            -center,
        );
        Ok(t)
    }

    /// Structural checks: finite coefficients, indices in range, consistent
    /// vector lengths.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.var_names.len() != n {
            return Err(LpError::Malformed(String::from("bound/name vectors length mismatch")));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::Malformed(format!("objective coefficient {j} is not finite")));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(LpError::Malformed(format!("bound of variable {j} is NaN")));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("rhs of row {i} is not finite")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::Malformed(format!("row {i} references variable {j}")));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Objective value at `x`, including the offset.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.offset + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Max violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for row in &self.constraints {
            let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match row.relation {
                Relation::Le => lhs - row.rhs,
                Relation::Ge => row.rhs - lhs,
                Relation::Eq => crate::math::abs(lhs - row.rhs),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Text dump in the CPLEX LP interchange format, for cross-checking
    /// against external solvers.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let name = |j: usize| sanitize(&self.var_names[j], j);
        let _ = writeln!(out, "\\ offset {}", self.offset);
        let _ = writeln!(out, "Minimize");
        let _ = write!(out, " obj:");
        let mut any = false;
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(out, " {} {} {}", sign(c), c.abs(), name(j));
                any = true;
            }
        }
        if !any {
            let _ = write!(
                out,
                " 0 {}",
                if self.num_vars() > 0 {
                    name(0)
                } else {
                    String::from("x")
                }
            );
        }
        let _ = writeln!(out, "\nSubject To");
        for (i, row) in self.constraints.iter().enumerate() {
            let _ = write!(out, " c{i}:");
            if row.coeffs.is_empty() {
                let _ = write!(out, " 0 {}", name(0));
            }
            for &(j, a) in &row.coeffs {
                let _ = write!(out, " {} {} {}", sign(a), a.abs(), name(j));
            }
            let rel = match row.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {rel} {}", row.rhs);
        }
        let _ = writeln!(out, "Bounds");
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                let _ = writeln!(out, " {} free", name(j));
            } else {
                let lo_s = if lo == f64::NEG_INFINITY {
                    String::from("-inf")
                } else {
                    format!("{lo}")
                };
                let hi_s = if hi == f64::INFINITY {
                    String::from("+inf")
                } else {
                    format!("{hi}")
                };
                let _ = writeln!(out, " {lo_s} <= {} <= {hi_s}", name(j));
            }
        }
        let _ = writeln!(out, "End");
        out
    }
}

fn sign(v: f64) -> char {
    if v < 0.0 {
        '-'
    } else {
        '+'
    }
}

fn sanitize(name: &str, j: usize) -> String {
    let mut s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        s.insert(0, 'v');
    }
    format!("{s}#{j}").replace('#', "_")
}

/// `Σ coeff·x[var] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }

    /// `k·self + c`.
    pub fn scaled(&self, k: f64, c: f64) -> LinExpr {
        LinExpr {
            terms: self.terms.iter().map(|&(j, a)| (j, k * a)).collect(),
            constant: k * self.constant + c,
        }
    }

    /// Sums repeated variables and drops zero coefficients.
    pub fn merge_terms(&mut self) {
        self.terms.sort_unstable_by_key(|&(j, _)| j);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(j, a) in &self.terms {
            match out.last_mut() {
                Some((k, b)) if *k == j => *b += a,
                _ => out.push((j, a)),
            }
        }
        out.retain(|&(_, a)| a != 0.0);
        self.terms = out;
    }

    /// Terms of `self − var`, for rows of the form `var ⋚ self`.
    pub fn minus_var(&self, var: usize) -> Vec<(usize, f64)> {
        let mut t = self.terms.clone();
        t.push((var, -1.0));
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// `None` means 50·(vars + rows).
    pub iter_limit: Option<usize>,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            opt_tol: 1e-7,
            iter_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values (meaningful when `Optimal`).
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub wall_time: f64,
    /// Largest sign violation among reduced costs at termination; the
    /// optimality certificate when `Optimal`.
    pub dual_infeasibility: f64,
    /// Largest row/bound violation of `x`.
    pub primal_infeasibility: f64,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// [`solve_lp`] with wall time measured by `clock`.
pub fn solve_lp_timed(p: &LpProblem, options: &LpOptions, clock: &dyn Clock) -> Result<LpSolution, LpError> {
    let t0 = clock.seconds();
    let mut sol = solve_lp(p, options)?;
    sol.wall_time = clock.seconds() - t0;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_terms_sums_repeats_and_drops_zeros() {
        let mut e = LinExpr {
            terms: alloc::vec![(3, 1.0), (1, 2.0), (3, -1.0), (1, 0.5), (0, 4.0)],
            constant: 7.0,
        };
        e.merge_terms();
        assert_eq!(e.terms, alloc::vec![(0, 4.0), (1, 2.5)]);
        assert_eq!(e.constant, 7.0);
    }

    #[test]
    fn abs_term_rejects_negative_weight() {
        let mut p = LpProblem::new();
        let x = p.add_var("x", 0.0, 1.0, 0.0);
        assert_eq!(p.add_abs_term(x, 0.5, -1.0), Err(LpError::NegativeWeight(-1.0)));
    }

    #[test]
    fn abs_term_at_center_is_zero() {
        let mut p = LpProblem::new();
        let x = p.add_var("x", 2.0, 2.0, 0.0);
        let t = p.add_abs_term(x, 2.0, 1.0).unwrap();
        let s = solve_lp(&p, &LpOptions::default()).unwrap();
        assert!(s.is_optimal());
        assert!(s.x[t].abs() < 1e-12);
    }

    #[test]
    fn abs_term_below_center() {
        let mut p = LpProblem::new();
        let x = p.add_var("x", -3.0, -3.0, 0.0);
        let t = p.add_abs_term(x, 2.0, 1.0).unwrap();
        let s = solve_lp(&p, &LpOptions::default()).unwrap();
        assert!((s.x[t] - 5.0).abs() < 1e-9);
        assert!((s.objective - 5.0).abs() < 1e-9);
    }

    #[test]
    fn lp_format_dump() {
        let mut p = LpProblem::new();
        let x = p.add_var("x", 0.0, f64::INFINITY, 1.0);
        let y = p.add_var("y[1]", f64::NEG_INFINITY, f64::INFINITY, -2.0);
        p.add_row("r", alloc::vec![(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        let s = p.to_lp_format();
        assert!(s.contains("Minimize"));
        assert!(s.contains("- 2 y_1__1"));
        assert!(s.contains("y_1__1 free"));
        assert!(s.contains("<= 4"));
    }
}

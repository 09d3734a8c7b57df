//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `max c.x` subject to `A_ub x <= b_ub`, `A_eq x = b_eq`,
//! `0 <= x <= u`. Sized for the conductance programs in this crate (a few
//! hundred rows and columns); no attempt is made at sparsity.

use serde::Serialize;

use crate::error::{invalid, Result};

/// Reduced-cost threshold for entering variables.
const PRICE_TOL: f64 = 1e-10;
/// Pivot elements smaller than this are never chosen.
const PIVOT_TOL: f64 = 1e-9;
/// Phase-one residual above which the program is declared infeasible.
const FEAS_TOL: f64 = 1e-8;

/// Accuracy the solver promises on the reported objective.
pub const OPTIMALITY_TOL: f64 = 1e-7;

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub ineq: Vec<(Vec<f64>, f64)>,
    pub eq: Vec<(Vec<f64>, f64)>,
    /// Optional upper bounds per variable; lower bounds are zero.
    pub upper: Vec<Option<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationCapped,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(vars: usize) -> Self {
        Self {
            objective: vec![0.0; vars],
            upper: vec![None; vars],
            ..Default::default()
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.ineq.push((row, rhs));
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq.push((row, rhs));
    }

    fn validate(&self) -> Result<()> {
        let n = self.vars();
        if self.upper.len() != n {
            return Err(invalid("bounds length differs from variable count"));
        }
        for (row, b) in self.ineq.iter().chain(&self.eq) {
            if row.len() != n {
                return Err(invalid(format!("constraint has {} coefficients, expected {n}", row.len())));
            }
            if !b.is_finite() || row.iter().any(|v| !v.is_finite()) {
                return Err(invalid("non-finite constraint data"));
            }
        }
        Ok(())
    }
}

struct Tableau {
    /// `rows` constraint rows followed by the objective row; last column is
    /// the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    iterations: usize,
    cap: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    Capped,
}

impl Tableau {
    fn rows(&self) -> usize {
        self.basis.len()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.cols + 1;
        let p = self.t[r][c];
        for k in 0..width {
            self.t[r][k] /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for k in 0..width {
                    row[k] -= f * pivot_row[k];
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Installs `cost` (to be maximized) as the objective row, expressed in
    /// reduced form for the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let m = self.rows();
        let mut obj = vec![0.0; self.cols + 1];
        for (k, c) in cost.iter().enumerate() {
            obj[k] = -c;
        }
        for r in 0..m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for k in 0..=self.cols {
                    obj[k] += cb * self.t[r][k];
                }
            }
        }
        self.t[m] = obj;
    }

    fn run(&mut self, allowed: &[bool]) -> Outcome {
        let m = self.rows();
        loop {
            if self.iterations >= self.cap {
                return Outcome::Capped;
            }
            // Bland: lowest-index improving column.
            let Some(c) = (0..self.cols).find(|&k| allowed[k] && self.t[m][k] < -PRICE_TOL) else {
                return Outcome::Optimal;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..m {
                let a = self.t[r][c];
                if a > PIVOT_TOL {
                    let ratio = self.t[r][self.cols] / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - 1e-12
                                || (ratio <= bv + 1e-12 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Outcome::Unbounded;
            };
            self.pivot(r, c);
            self.iterations += 1;
        }
    }
}

/// Solves `lp` to optimality, or reports why not.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let nv = lp.vars();

    // (coefficients, rhs, is_equality)
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for (a, b) in &lp.ineq {
        rows.push((a.clone(), *b, false));
    }
    for (k, u) in lp.upper.iter().enumerate() {
        if let Some(u) = u {
            let mut a = vec![0.0; nv];
            a[k] = 1.0;
            rows.push((a, *u, false));
        }
    }
    for (a, b) in &lp.eq {
        rows.push((a.clone(), *b, true));
    }

    let n_slack = rows.iter().filter(|r| !r.2).count();
    // Artificials for equalities and for inequalities with negative rhs.
    let n_art = rows.iter().filter(|r| r.2 || r.1 < 0.0).count();
    let cols = nv + n_slack + n_art;
    let m = rows.len();

    let mut t = vec![vec![0.0; cols + 1]; m + 1];
    let mut basis = vec![0; m];
    let mut slack = nv;
    let mut art = nv + n_slack;
    for (r, (a, b, is_eq)) in rows.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for k in 0..nv {
            t[r][k] = sign * a[k];
        }
        t[r][cols] = sign * b;
        if !is_eq {
            t[r][slack] = sign;
            if sign > 0.0 {
                basis[r] = slack;
            }
            slack += 1;
        }
        if *is_eq || sign < 0.0 {
            t[r][art] = 1.0;
            basis[r] = art;
            art += 1;
        }
    }

    let cap = 10 * (nv + m).pow(2).max(1);
    let mut tab = Tableau {
        t,
        basis,
        cols,
        iterations: 0,
        cap,
    };
    let is_art = |k: usize| k >= nv + n_slack;

    if n_art > 0 {
        let cost: Vec<f64> = (0..cols).map(|k| if is_art(k) { -1.0 } else { 0.0 }).collect();
        tab.set_objective(&cost);
        let all = vec![true; cols];
        match tab.run(&all) {
            Outcome::Capped => return Ok(capped(&tab, nv, lp)),
            Outcome::Unbounded => unreachable!("phase one is bounded"),
            Outcome::Optimal => {}
        }
        if tab.t[m][cols] < -FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; nv],
                objective: f64::NAN,
                iterations: tab.iterations,
            });
        }
        // Drive remaining artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.rows() {
            if is_art(tab.basis[r]) {
                let pick = (0..nv + n_slack)
                    .filter(|&k| tab.t[r][k].abs() > PIVOT_TOL)
                    .max_by(|&a, &b| tab.t[r][a].abs().total_cmp(&tab.t[r][b].abs()));
                match pick {
                    Some(c) => tab.pivot(r, c),
                    None => {
                        tab.t.remove(r);
                        tab.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..nv].copy_from_slice(&lp.objective);
    tab.set_objective(&cost);
    let allowed: Vec<bool> = (0..cols).map(|k| !is_art(k)).collect();
    let status = match tab.run(&allowed) {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::Capped => LpStatus::IterationCapped,
    };
    let x = primal(&tab, nv);
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status,
        x,
        objective,
        iterations: tab.iterations,
    })
}

fn primal(tab: &Tableau, nv: usize) -> Vec<f64> {
    let mut x = vec![0.0; nv];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < nv {
            x[b] = tab.t[r][tab.cols].max(0.0);
        }
    }
    x
}

fn capped(tab: &Tableau, nv: usize, lp: &LinearProgram) -> LpSolution {
    let x = primal(tab, nv);
    LpSolution {
        status: LpStatus::IterationCapped,
        objective: lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum(),
        x,
        iterations: tab.iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_variable() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.add_le(vec![1.0], 1.0);
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective, 1.0);
    }

    #[test]
    fn two_variables() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.add_le(vec![1.0, 1.0], 1.0);
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective, 1.0);
    }

    #[test]
    fn redundant_equalities() {
        // x + y = 1 stated three times, plus 2x + 2y = 2.
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        for _ in 0..3 {
            lp.add_eq(vec![1.0, 1.0], 1.0);
        }
        lp.add_eq(vec![2.0, 2.0], 2.0);
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective, 2.0);
        assert_abs_diff_eq!(s.x[1], 1.0);
    }

    #[test]
    fn textbook_program() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![3.0, 5.0];
        lp.add_le(vec![1.0, 0.0], 4.0);
        lp.add_le(vec![0.0, 2.0], 12.0);
        lp.add_le(vec![3.0, 2.0], 18.0);
        let s = lp_solve(&lp).unwrap();
        assert_abs_diff_eq!(s.objective, 36.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x[1], 6.0, epsilon = 1e-9);
    }

    #[test]
    fn negative_rhs_and_bounds() {
        // max -x - y with x + y >= 2 (as -x - y <= -2), x <= 0.5.
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.add_le(vec![-1.0, -1.0], -2.0);
        lp.upper[0] = Some(0.5);
        let s = lp_solve(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_abs_diff_eq!(s.objective, -2.0, epsilon = 1e-9);
        assert!(s.x[0] <= 0.5 + 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.add_le(vec![1.0], 1.0);
        lp.add_eq(vec![1.0], 2.0);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 0.0];
        lp.add_le(vec![0.0, 1.0], 1.0);
        assert_eq!(lp_solve(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut lp = LinearProgram::new(2);
        lp.add_le(vec![1.0], 1.0);
        assert!(lp_solve(&lp).is_err());
    }
}

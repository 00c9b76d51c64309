//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Solves `min c^T z` subject to `A z = b`, `z >= 0`. Intended for the
//! small programs produced by ℓ1/ℓ∞ Chebyshev approximation (tens of rows
//! and columns); no attempt is made at sparsity or numerical scaling.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct StandardLp {
    /// Constraint rows, each of length `num_vars`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

struct Tableau {
    // rows[0..m] are constraints, rows[m] is the objective row;
    // the last column is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    fn m(&self) -> usize {
        self.basis.len()
    }

    fn rhs_col(&self) -> usize {
        self.rows[0].len() - 1
    }

    fn pivot(&mut self, r: usize, col: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > self.max_pivots {
            return Err(Error::CyclingGuard(self.pivots));
        }
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[col] = 0.0;
            }
        }
        self.basis[r] = col;
        Ok(())
    }

    /// Runs Bland's rule over the columns `< active_cols`.
    fn optimize(&mut self, active_cols: usize) -> Result<()> {
        let m = self.m();
        let rhs = self.rhs_col();
        loop {
            let obj = &self.rows[m];
            let scale = obj[..active_cols].iter().fold(1.0_f64, |a, v| a.max(v.abs()));
            let entering = (0..active_cols).find(|&j| obj[j] < -PIVOT_EPS * scale);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.rows[i][col];
                if a > PIVOT_EPS {
                    let ratio = self.rows[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14 * lr.abs().max(1.0)
                                || (ratio <= lr + 1e-14 * lr.abs().max(1.0) && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(r, col)?;
        }
    }
}

pub fn solve(lp: &StandardLp) -> Result<LpSolution> {
    let m = lp.a.len();
    let n = lp.c.len();
    if lp.b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: lp.b.len(),
        });
    }
    if let Some(row) = lp.a.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: row.len(),
        });
    }
    let width = n + m + 1;
    let mut rows = Vec::with_capacity(m + 1);
    for (i, (arow, &bi)) in lp.a.iter().zip(&lp.b).enumerate() {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width];
        for (dst, src) in row.iter_mut().zip(arow) {
            *dst = sign * src;
        }
        row[n + i] = 1.0;
        row[width - 1] = sign * bi;
        rows.push(row);
    }
    // phase-one objective: sum of artificials, expressed in reduced form
    let mut obj = vec![0.0; width];
    for row in &rows {
        for j in 0..n {
            obj[j] -= row[j];
        }
        obj[width - 1] -= row[width - 1];
    }
    rows.push(obj);
    let mut t = Tableau {
        rows,
        basis: (n..n + m).collect(),
        pivots: 0,
        max_pivots: 50_000 + 100 * (n + m),
    };
    t.optimize(n + m)?;
    let rhs = t.rhs_col();
    let bscale = lp.b.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    if -t.rows[m][rhs] > 1e-9 * bscale {
        return Err(Error::Infeasible);
    }
    // drive remaining artificials out of the basis
    let mut redundant = Vec::new();
    for r in 0..m {
        if t.basis[r] >= n {
            match (0..n).find(|&j| t.rows[r][j].abs() > 1e-9) {
                Some(col) => t.pivot(r, col)?,
                None => redundant.push(r),
            }
        }
    }
    for &r in redundant.iter().rev() {
        t.rows.remove(r);
        t.basis.remove(r);
    }
    let m = t.m();
    // phase two objective row
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(&lp.c);
    for r in 0..m {
        let cb = lp.c[t.basis[r]];
        if cb != 0.0 {
            for (o, v) in obj.iter_mut().zip(&t.rows[r]) {
                *o -= cb * v;
            }
        }
    }
    t.rows[m] = obj;
    t.optimize(n)?;
    let mut z = vec![0.0; n];
    for r in 0..m {
        z[t.basis[r]] = t.rows[r][rhs].max(0.0);
    }
    let objective = lp.c.iter().zip(&z).map(|(c, z)| c * z).sum();
    Ok(LpSolution {
        z,
        objective,
        pivots: t.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_equality_lp() {
        // min x1 + x2  s.t. x1 + x2 = 1
        let lp = StandardLp {
            a: vec![vec![1.0, 1.0]],
            b: vec![1.0],
            c: vec![1.0, 1.0],
        };
        let s = solve(&lp).unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slack_form_lp() {
        // max 3x + 2y s.t. x + y <= 4, x + 3y <= 6, x <= 3
        let lp = StandardLp {
            a: vec![
                vec![1.0, 1.0, 1.0, 0.0, 0.0],
                vec![1.0, 3.0, 0.0, 1.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0, 1.0],
            ],
            b: vec![4.0, 6.0, 3.0],
            c: vec![-3.0, -2.0, 0.0, 0.0, 0.0],
        };
        let s = solve(&lp).unwrap();
        assert!((s.objective + 11.0).abs() < 1e-12);
        assert!((s.z[0] - 3.0).abs() < 1e-12 && (s.z[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_and_redundant_rows() {
        // -x1 - x2 = -2 ; 2x1 + 2x2 = 4 (redundant); min x1
        let lp = StandardLp {
            a: vec![vec![-1.0, -1.0], vec![2.0, 2.0]],
            b: vec![-2.0, 4.0],
            c: vec![1.0, 0.0],
        };
        let s = solve(&lp).unwrap();
        assert!(s.objective.abs() < 1e-12);
        assert!((s.z[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = StandardLp {
            a: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            b: vec![1.0, 2.0],
            c: vec![0.0, 0.0],
        };
        assert_eq!(solve(&lp), Err(Error::Infeasible));
        let lp = StandardLp {
            a: vec![vec![1.0, -1.0]],
            b: vec![0.0],
            c: vec![-1.0, 0.0],
        };
        assert_eq!(solve(&lp), Err(Error::Unbounded));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling example in slack form
        let lp = StandardLp {
            a: vec![
                vec![0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0],
                vec![0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            ],
            b: vec![0.0, 0.0, 1.0],
            c: vec![-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0],
        };
        let s = solve(&lp).unwrap();
        assert!((s.objective + 0.05).abs() < 1e-10);
    }

    #[test]
    fn shape_errors() {
        let lp = StandardLp {
            a: vec![vec![1.0]],
            b: vec![1.0, 2.0],
            c: vec![1.0],
        };
        assert!(matches!(solve(&lp), Err(Error::DimensionMismatch { .. })));
    }
}

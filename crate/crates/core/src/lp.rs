//! Dense two-phase simplex for small linear programs.
//!
//! Problems are stated as `minimize cᵀx subject to A x ≤ b` with every
//! variable free. Free variables are split into positive and negative parts
//! and each row gets a slack; rows with a negative right-hand side receive an
//! artificial variable for phase one. Pivoting follows Bland's rule so the
//! returned vertex is deterministic even on degenerate problems.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, Matrix};

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-10;

/// `minimize objectiveᵀ x  s.t.  constraints · x ≤ bounds`, `x` free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Matrix,
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, constraints: Matrix, bounds: Vec<f64>) -> Result<Self> {
        if constraints.cols() != objective.len() {
            return Err(Error::DimensionMismatch {
                expected: objective.len(),
                found: constraints.cols(),
            });
        }
        if constraints.rows() != bounds.len() {
            return Err(Error::DimensionMismatch {
                expected: constraints.rows(),
                found: bounds.len(),
            });
        }
        Ok(Self {
            objective,
            constraints,
            bounds,
        })
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    m: usize,
    n: usize,
    // columns: x+ (n), x- (n), slack (m), artificial (n_art), rhs
    width: usize,
    n_art: usize,
    cells: Vec<f64>,
    basis: Vec<usize>,
    iterations: usize,
    max_iterations: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.constraints.rows();
        let n = lp.constraints.cols();
        let n_art = lp.bounds.iter().filter(|b| **b < 0.0).count();
        let width = 2 * n + m + n_art + 1;
        let mut cells = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut art = 0;
        for i in 0..m {
            let flip = lp.bounds[i] < 0.0;
            let sign = if flip { -1.0 } else { 1.0 };
            let row = &mut cells[i * width..(i + 1) * width];
            for (j, a) in lp.constraints.row(i).iter().enumerate() {
                row[j] = sign * a;
                row[n + j] = -sign * a;
            }
            row[2 * n + i] = sign;
            row[width - 1] = sign * lp.bounds[i];
            if flip {
                row[2 * n + m + art] = 1.0;
                basis[i] = 2 * n + m + art;
                art += 1;
            } else {
                basis[i] = 2 * n + i;
            }
        }
        Self {
            m,
            n,
            width,
            n_art,
            cells,
            basis,
            iterations: 0,
            max_iterations: 100 + 50 * (m + width),
        }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn first_artificial(&self) -> usize {
        2 * self.n + self.m
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.cells[row * w + col];
        for c in 0..w {
            self.cells[row * w + c] /= p;
        }
        for r in 0..self.m {
            if r == row {
                continue;
            }
            let factor = self.cells[r * w + col];
            if factor == 0.0 {
                continue;
            }
            for c in 0..w {
                self.cells[r * w + c] -= factor * self.cells[row * w + c];
            }
        }
        self.basis[row] = col;
        self.iterations += 1;
    }

    /// Runs the simplex loop for `costs` over columns `< allowed`.
    /// Returns `Err(Unbounded)` when an improving ray exists.
    fn optimize(&mut self, costs: &[f64], allowed: usize) -> Result<()> {
        loop {
            if self.iterations > self.max_iterations {
                return Err(Error::NotConverged {
                    solver: "simplex",
                    iterations: self.iterations,
                });
            }
            // Bland: lowest-index column with negative reduced cost.
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = costs[j]
                    - (0..self.m)
                        .map(|i| costs[self.basis[i]] * self.at(i, j))
                        .sum::<f64>();
                reduced < -COST_EPS
            });
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, col);
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                leaving = match leaving {
                    None => Some((i, ratio)),
                    Some((best, r)) => {
                        if ratio < r - 1e-12
                            || (ratio <= r + 1e-12 && self.basis[i] < self.basis[best])
                        {
                            Some((i, ratio))
                        } else {
                            Some((best, r))
                        }
                    }
                };
            }
            match leaving {
                None => return Err(Error::Unbounded),
                Some((row, _)) => self.pivot(row, col),
            }
        }
    }

    fn objective_value(&self, costs: &[f64]) -> f64 {
        (0..self.m)
            .map(|i| costs[self.basis[i]] * self.rhs(i))
            .sum()
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let total = self.width - 1;
        let art0 = self.first_artificial();
        if self.n_art > 0 {
            let mut phase1 = vec![0.0; total];
            for c in phase1.iter_mut().skip(art0) {
                *c = 1.0;
            }
            self.optimize(&phase1, total)?;
            let violation = self.objective_value(&phase1);
            let feas_tol = 1e-9 * max_abs(&lp.bounds).max(1.0);
            if violation > feas_tol {
                return Err(Error::Infeasible { violation });
            }
            // Drive remaining artificials out of the basis where possible.
            for r in 0..self.m {
                if self.basis[r] < art0 {
                    continue;
                }
                if let Some(col) = (0..art0).find(|&j| self.at(r, j).abs() > PIVOT_EPS) {
                    self.pivot(r, col);
                }
            }
        }
        let n = self.n;
        let mut costs = vec![0.0; total];
        for (j, c) in lp.objective.iter().enumerate() {
            costs[j] = *c;
            costs[n + j] = -*c;
        }
        self.optimize(&costs, art0)?;
        let mut values = vec![0.0; total];
        for r in 0..self.m {
            values[self.basis[r]] = self.rhs(r);
        }
        let x: Vec<f64> = (0..n).map(|j| values[j] - values[n + j]).collect();
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            x,
            objective,
            iterations: self.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(obj: &[f64], rows: &[&[f64]], b: &[f64]) -> LinearProgram {
        LinearProgram::new(
            obj.to_vec(),
            Matrix::from_rows(obj.len(), rows).unwrap(),
            b.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18, x,y ≥ 0 → (2, 6), 36
        let p = lp(
            &[-3.0, -5.0],
            &[
                &[1.0, 0.0],
                &[0.0, 2.0],
                &[3.0, 2.0],
                &[-1.0, 0.0],
                &[0.0, -1.0],
            ],
            &[4.0, 12.0, 18.0, 0.0, 0.0],
        );
        let s = p.solve().unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-9);
        assert!((s.x[1] - 6.0).abs() < 1e-9);
        assert!((s.objective + 36.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_needs_phase_one() {
        // min x s.t. x ≥ 3, x ≤ 10
        let p = lp(&[1.0], &[&[-1.0], &[1.0]], &[-3.0, 10.0]);
        let s = p.solve().unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_detected() {
        let p = lp(&[1.0], &[&[1.0], &[-1.0]], &[-1.0, -1.0]);
        assert!(matches!(p.solve(), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn unbounded_detected() {
        let p = lp(&[-1.0, 0.0], &[&[0.0, 1.0]], &[1.0]);
        assert_eq!(p.solve(), Err(Error::Unbounded));
    }

    #[test]
    fn free_variables_go_negative() {
        // min x + y s.t. x ≥ -2, y ≥ -5
        let p = lp(&[1.0, 1.0], &[&[-1.0, 0.0], &[0.0, -1.0]], &[2.0, 5.0]);
        let s = p.solve().unwrap();
        assert_eq!(s.x, vec![-2.0, -5.0]);
    }

    #[test]
    fn degenerate_problem_is_deterministic() {
        // Many redundant constraints through the optimum.
        let p = lp(
            &[-1.0, -1.0],
            &[
                &[1.0, 0.0],
                &[0.0, 1.0],
                &[1.0, 1.0],
                &[2.0, 1.0],
                &[1.0, 2.0],
            ],
            &[1.0, 1.0, 2.0, 3.0, 3.0],
        );
        let a = p.solve().unwrap();
        let b = p.solve().unwrap();
        assert_eq!(a, b);
        assert!((a.objective + 2.0).abs() < 1e-9);
    }

    #[test]
    fn empty_constraint_set_with_zero_objective() {
        let p = LinearProgram::new(vec![0.0, 0.0], Matrix::zeros(0, 2), vec![]).unwrap();
        let s = p.solve().unwrap();
        assert_eq!(s.x, vec![0.0, 0.0]);
    }
}

//! Primal active-set method for strictly convex quadratic programs.
//!
//! `minimize ½ xᵀ H x + cᵀ x  s.t.  A x ≤ b,  E x = e`
//!
//! A feasible starting point comes from a phase-one LP that minimizes the
//! largest constraint violation. Equality rows stay in the working set for the
//! whole solve; inequality rows enter when they block a step and leave when
//! their multiplier turns negative.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, norm, solve, Matrix};
use crate::lp::LinearProgram;

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub hessian: Matrix,
    pub linear: Vec<f64>,
    pub inequalities: Matrix,
    pub inequality_bounds: Vec<f64>,
    pub equalities: Matrix,
    pub equality_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Inequality rows in the final working set.
    pub active: Vec<usize>,
    pub iterations: usize,
}

impl QuadraticProgram {
    pub fn new(hessian: Matrix, linear: Vec<f64>) -> Result<Self> {
        let n = linear.len();
        if hessian.rows() != n || hessian.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: hessian.rows(),
            });
        }
        Ok(Self {
            hessian,
            linear,
            inequalities: Matrix::zeros(0, n),
            inequality_bounds: Vec::new(),
            equalities: Matrix::zeros(0, n),
            equality_values: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn with_inequalities(mut self, a: Matrix, b: Vec<f64>) -> Result<Self> {
        check_block(self.dim(), &a, &b)?;
        self.inequalities = self.inequalities.vstack(&a)?;
        self.inequality_bounds.extend(b);
        Ok(self)
    }

    pub fn with_equalities(mut self, e: Matrix, v: Vec<f64>) -> Result<Self> {
        check_block(self.dim(), &e, &v)?;
        self.equalities = self.equalities.vstack(&e)?;
        self.equality_values.extend(v);
        Ok(self)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let hx = self.hessian.mul_vec(x).unwrap_or_default();
        0.5 * dot(x, &hx) + dot(&self.linear, x)
    }

    /// Point satisfying all constraints to within `tol`, from a phase-one LP.
    pub fn feasible_point(&self, tol: f64) -> Result<Vec<f64>> {
        let n = self.dim();
        let m_in = self.inequalities.rows();
        let m_eq = self.equalities.rows();
        let mut rows = Matrix::zeros(0, n + 1);
        let mut bounds = Vec::with_capacity(m_in + 2 * m_eq + 1);
        let mut row = vec![0.0; n + 1];
        for i in 0..m_in {
            row[..n].copy_from_slice(self.inequalities.row(i));
            row[n] = -1.0;
            rows.push_row(&row)?;
            bounds.push(self.inequality_bounds[i]);
        }
        for i in 0..m_eq {
            for sign in [1.0, -1.0] {
                for (dst, a) in row[..n].iter_mut().zip(self.equalities.row(i)) {
                    *dst = sign * a;
                }
                row[n] = -1.0;
                rows.push_row(&row)?;
                bounds.push(sign * self.equality_values[i]);
            }
        }
        row.iter_mut().for_each(|v| *v = 0.0);
        row[n] = -1.0;
        rows.push_row(&row)?;
        bounds.push(0.0);
        let mut objective = vec![0.0; n + 1];
        objective[n] = 1.0;
        let sol = LinearProgram::new(objective, rows, bounds)?.solve()?;
        let violation = sol.x[n];
        if violation > tol {
            return Err(Error::Infeasible { violation });
        }
        Ok(sol.x[..n].to_vec())
    }

    pub fn solve(&self, tol: f64) -> Result<QpSolution> {
        let x0 = self.feasible_point(tol)?;
        self.solve_from(x0)
    }

    /// Active-set iterations from a feasible `x`.
    pub fn solve_from(&self, mut x: Vec<f64>) -> Result<QpSolution> {
        let n = self.dim();
        let m_in = self.inequalities.rows();
        let m_eq = self.equalities.rows();
        let mut working: Vec<usize> = Vec::new();
        let max_iterations = 100 + 20 * (n + m_in + m_eq);
        for iteration in 0..max_iterations {
            let hx = self.hessian.mul_vec(&x)?;
            let gradient: Vec<f64> = hx.iter().zip(&self.linear).map(|(a, b)| a + b).collect();
            let (mut step, multipliers) = self.equality_qp(&gradient, &working)?;
            let basis = self.working_basis(&working);
            if basis.len() == n || self.decrease_is_noise(&x, &gradient, &step)? {
                // a vertex, or a step the objective cannot resolve: what is
                // left is elimination noise
                step.iter_mut().for_each(|p| *p = 0.0);
            }
            let step_size = max_abs(&step);
            if step_size <= 1e-12 * (1.0 + max_abs(&x)) {
                // Multipliers of inequality rows come after the equalities.
                let worst = working
                    .iter()
                    .enumerate()
                    .map(|(k, &row)| (k, row, multipliers[m_eq + k]))
                    .filter(|(_, _, mu)| *mu < -1e-12)
                    .min_by(|a, b| a.2.total_cmp(&b.2).then(a.1.cmp(&b.1)));
                match worst {
                    None => {
                        let objective = self.objective_at(&x);
                        working.sort_unstable();
                        return Ok(QpSolution {
                            x,
                            objective,
                            active: working,
                            iterations: iteration,
                        });
                    }
                    Some((k, _, _)) => {
                        working.remove(k);
                        continue;
                    }
                }
            }
            let mut alpha = 1.0;
            let mut blocking = None;
            for j in 0..m_in {
                if working.contains(&j) {
                    continue;
                }
                let a = self.inequalities.row(j);
                let ap = dot(a, &step);
                if ap <= 1e-14 * (1.0 + max_abs(a)) * step_size {
                    continue;
                }
                // A row in the span of the working set would make the KKT
                // system singular; along the step it moves by rounding only.
                if residual_norm(a, &basis) <= DEPENDENT_TOL * norm(a) {
                    continue;
                }
                let slack = (self.inequality_bounds[j] - dot(a, &x)).max(0.0);
                let ratio = slack / ap;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(j);
                }
            }
            for (xi, pi) in x.iter_mut().zip(&step) {
                *xi += alpha * pi;
            }
            if let Some(j) = blocking {
                working.push(j);
            }
        }
        Err(Error::NotConverged {
            solver: "active-set QP",
            iterations: max_iterations,
        })
    }

    /// True when the full step's predicted decrease is below the rounding
    /// floor of the objective at `x`.
    fn decrease_is_noise(&self, x: &[f64], gradient: &[f64], step: &[f64]) -> Result<bool> {
        let hp = self.hessian.mul_vec(step)?;
        let decrease = -(dot(gradient, step) + 0.5 * dot(step, &hp));
        let n = x.len();
        let mut scale = 1.0;
        for r in 0..n {
            scale += self.linear[r].abs() * x[r].abs();
            for c in 0..n {
                scale += 0.5 * (self.hessian[(r, c)] * x[r] * x[c]).abs();
            }
        }
        Ok(decrease <= NOISE_FLOOR * scale)
    }

    /// Orthonormal basis of the equality rows and working inequality rows.
    fn working_basis(&self, working: &[usize]) -> Vec<Vec<f64>> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let rows = (0..self.equalities.rows())
            .map(|k| self.equalities.row(k))
            .chain(working.iter().map(|&k| self.inequalities.row(k)));
        for row in rows {
            let mut r = row.to_vec();
            for b in &basis {
                let c = dot(&r, b);
                r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= c * bi);
            }
            let len = norm(&r);
            if len > DEPENDENT_TOL * norm(row) {
                r.iter_mut().for_each(|v| *v /= len);
                basis.push(r);
            }
        }
        basis
    }

    /// Solves the equality-constrained subproblem for the step `p` and the
    /// multipliers `μ` of `[equalities; working inequalities]`:
    /// `H p + Wᵀ μ = -g`, `W p = 0`.
    fn equality_qp(&self, gradient: &[f64], working: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let m_eq = self.equalities.rows();
        let w = m_eq + working.len();
        let size = n + w;
        let mut kkt = Matrix::zeros(size, size);
        for r in 0..n {
            for c in 0..n {
                kkt[(r, c)] = self.hessian[(r, c)];
            }
        }
        for k in 0..w {
            let row = if k < m_eq {
                self.equalities.row(k)
            } else {
                self.inequalities.row(working[k - m_eq])
            };
            for c in 0..n {
                kkt[(n + k, c)] = row[c];
                kkt[(c, n + k)] = row[c];
            }
        }
        let mut rhs = vec![0.0; size];
        for (r, g) in gradient.iter().enumerate() {
            rhs[r] = -g;
        }
        let sol = solve(&kkt, &rhs)?;
        Ok((sol[..n].to_vec(), sol[n..].to_vec()))
    }
}

/// Objective changes below this fraction of its term magnitudes are rounding.
const NOISE_FLOOR: f64 = 1e-14;

/// Relative residual below which a row counts as a combination of others.
const DEPENDENT_TOL: f64 = 1e-7;

fn residual_norm(a: &[f64], basis: &[Vec<f64>]) -> f64 {
    let mut r = a.to_vec();
    for b in basis {
        let c = dot(&r, b);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= c * bi);
    }
    norm(&r)
}

fn check_block(n: usize, a: &Matrix, b: &[f64]) -> Result<()> {
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.cols(),
        });
    }
    if a.rows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    Ok(())
}

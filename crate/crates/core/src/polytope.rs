//! Convex polytopes in halfspace form `{u : G u - l ≤ 0}`.
//!
//! The empty row set is the whole space, which makes it the identity element
//! for [`Polytope::intersect`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, max_abs, norm, sub, Matrix};
use crate::lp::LinearProgram;
use crate::qp::QuadraticProgram;

/// Membership and feasibility tolerance used across the crate.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Weight of the `λ‖ξ‖²` term that makes the closest-point objective strictly
/// convex. It also selects the minimum-norm pair when faces are parallel.
pub const CLOSEST_POINT_REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    normals: Matrix,
    offsets: Vec<f64>,
}

/// Result of [`closest_points`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClosestPoints {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub distance: f64,
}

impl Polytope {
    pub fn new(normals: Matrix, offsets: Vec<f64>) -> Result<Self> {
        if normals.rows() != offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: normals.rows(),
                found: offsets.len(),
            });
        }
        Ok(Self { normals, offsets })
    }

    pub fn whole_space(dim: usize) -> Self {
        Self {
            normals: Matrix::zeros(0, dim),
            offsets: Vec::new(),
        }
    }

    /// `{u : |u|∞ ≤ half_width}`
    pub fn centered_box(dim: usize, half_width: f64) -> Self {
        let lo = vec![-half_width; dim];
        let hi = vec![half_width; dim];
        Self::axis_box(&lo, &hi)
    }

    /// `{u : lo ≤ u ≤ hi}`; rows are ordered `+e₀, -e₀, +e₁, -e₁, …`.
    pub fn axis_box(lo: &[f64], hi: &[f64]) -> Self {
        let dim = lo.len();
        let mut normals = Matrix::zeros(2 * dim, dim);
        let mut offsets = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            normals[(2 * k, k)] = 1.0;
            offsets.push(hi[k]);
            normals[(2 * k + 1, k)] = -1.0;
            offsets.push(-lo[k]);
        }
        Self { normals, offsets }
    }

    pub fn singleton(point: &[f64]) -> Self {
        Self::axis_box(point, point)
    }

    /// `{u : normal · u ≤ offset}`
    pub fn halfspace(normal: &[f64], offset: f64) -> Self {
        let normals = Matrix::from_row_major(1, normal.len(), normal.to_vec())
            .expect("single row always matches");
        Self {
            normals,
            offsets: vec![offset],
        }
    }

    pub fn dim(&self) -> usize {
        self.normals.cols()
    }

    pub fn num_constraints(&self) -> usize {
        self.offsets.len()
    }

    pub fn normals(&self) -> &Matrix {
        &self.normals
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: dim,
            });
        }
        Ok(())
    }

    /// Largest entry of `G u - l`, or `-∞` for the whole space.
    pub fn max_violation(&self, u: &[f64]) -> Result<f64> {
        self.check_dim(u.len())?;
        Ok((0..self.num_constraints())
            .map(|k| dot(self.normals.row(k), u) - self.offsets[k])
            .fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> Result<bool> {
        Ok(self.max_violation(u)? <= tol)
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        self.check_dim(other.dim())?;
        let normals = self.normals.vstack(&other.normals)?;
        let mut offsets = self.offsets.clone();
        offsets.extend_from_slice(&other.offsets);
        Ok(Polytope { normals, offsets })
    }

    /// Point of least worst-case violation; `None` when that violation
    /// exceeds `tol`.
    pub fn feasible_point(&self, tol: f64) -> Result<Option<Vec<f64>>> {
        let n = self.dim();
        if self.num_constraints() == 0 {
            return Ok(Some(vec![0.0; n]));
        }
        // minimize t  s.t.  G u - t ≤ l,  -t ≤ 1
        let mut rows = Matrix::zeros(0, n + 1);
        let mut bounds = Vec::with_capacity(self.num_constraints() + 1);
        let mut row = vec![0.0; n + 1];
        for k in 0..self.num_constraints() {
            row[..n].copy_from_slice(self.normals.row(k));
            row[n] = -1.0;
            rows.push_row(&row)?;
            bounds.push(self.offsets[k]);
        }
        row.iter_mut().for_each(|v| *v = 0.0);
        row[n] = -1.0;
        rows.push_row(&row)?;
        bounds.push(1.0);
        let mut objective = vec![0.0; n + 1];
        objective[n] = 1.0;
        let sol = LinearProgram::new(objective, rows, bounds)?.solve()?;
        if sol.x[n] > tol {
            Ok(None)
        } else {
            Ok(Some(sol.x[..n].to_vec()))
        }
    }

    /// True iff no point satisfies every halfspace to within `tol`.
    pub fn is_empty(&self, tol: f64) -> Result<bool> {
        Ok(self.feasible_point(tol)?.is_none())
    }

    /// Maximizes `direction · u` over the polytope.
    pub fn support_point(&self, direction: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(direction.len())?;
        let objective = direction.iter().map(|d| -d).collect();
        let sol = LinearProgram::new(objective, self.normals.clone(), self.offsets.clone())?
            .solve()?;
        Ok(sol.x)
    }
}

/// Point of `hard` that minimizes the worst violation of `soft`; ties go to
/// the smallest total violation.
pub fn least_violation_point(hard: &Polytope, soft: &Polytope) -> Result<Vec<f64>> {
    hard.check_dim(soft.dim())?;
    let n = hard.dim();
    let m = soft.num_constraints();
    let mut rows = Matrix::zeros(0, n + 1);
    let mut bounds = Vec::with_capacity(hard.num_constraints() + m + 1);
    let mut row = vec![0.0; n + 1];
    for k in 0..hard.num_constraints() {
        row[..n].copy_from_slice(hard.normals.row(k));
        row[n] = 0.0;
        rows.push_row(&row)?;
        bounds.push(hard.offsets[k]);
    }
    for k in 0..m {
        row[..n].copy_from_slice(soft.normals.row(k));
        row[n] = -1.0;
        rows.push_row(&row)?;
        bounds.push(soft.offsets[k]);
    }
    row.iter_mut().for_each(|v| *v = 0.0);
    row[n] = -1.0;
    rows.push_row(&row)?;
    bounds.push(0.0);
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let sol = LinearProgram::new(objective, rows, bounds)?.solve()?;
    let worst = sol.x[n];
    if m == 0 {
        return Ok(sol.x[..n].to_vec());
    }

    // Second pass over (u, s): minimize Σ s with 0 ≤ s_k ≤ worst, s_k ≥ G_k u - l_k.
    let cap = worst + 1e-9 * (1.0 + worst.abs());
    let width = n + m;
    let mut rows = Matrix::zeros(0, width);
    let mut bounds = Vec::with_capacity(hard.num_constraints() + 3 * m);
    let mut row = vec![0.0; width];
    for k in 0..hard.num_constraints() {
        row.iter_mut().for_each(|v| *v = 0.0);
        row[..n].copy_from_slice(hard.normals.row(k));
        rows.push_row(&row)?;
        bounds.push(hard.offsets[k]);
    }
    for k in 0..m {
        row.iter_mut().for_each(|v| *v = 0.0);
        row[..n].copy_from_slice(soft.normals.row(k));
        row[n + k] = -1.0;
        rows.push_row(&row)?;
        bounds.push(soft.offsets[k]);
        row.iter_mut().for_each(|v| *v = 0.0);
        row[n + k] = -1.0;
        rows.push_row(&row)?;
        bounds.push(0.0);
        row[n + k] = 1.0;
        rows.push_row(&row)?;
        bounds.push(cap);
    }
    let mut objective = vec![0.0; width];
    objective[n..].iter_mut().for_each(|v| *v = 1.0);
    match LinearProgram::new(objective, rows, bounds)?.solve() {
        Ok(refined) => Ok(refined.x[..n].to_vec()),
        // the first pass already gave a valid answer
        Err(Error::Infeasible { .. }) => Ok(sol.x[..n].to_vec()),
        Err(e) => Err(e),
    }
}

/// Euclidean projection of `u` onto `p`.
pub fn project_point(p: &Polytope, u: &[f64], tol: f64) -> Result<Vec<f64>> {
    p.check_dim(u.len())?;
    let n = p.dim();
    let qp = QuadraticProgram::new(Matrix::identity(n), u.iter().map(|v| -v).collect())?
        .with_inequalities(p.normals.clone(), p.offsets.clone())?;
    Ok(qp.solve(tol)?.x)
}

/// Closest pair `(z₁ ∈ P₁, z₂ ∈ P₂)` from the stacked quadratic program
/// `min ½ ξᵀ [[I, -I], [-I, I]] ξ + λ‖ξ‖²` over `ξ = (z₁, z₂)`.
pub fn closest_points(p1: &Polytope, p2: &Polytope, tol: f64) -> Result<ClosestPoints> {
    p1.check_dim(p2.dim())?;
    if p1.is_empty(tol)? || p2.is_empty(tol)? {
        return Err(Error::Precondition("closest_points requires nonempty sets"));
    }
    let n = p1.dim();
    let reg = 2.0 * CLOSEST_POINT_REGULARIZATION;
    let mut hessian = Matrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        hessian[(k, k)] = 1.0 + reg;
        hessian[(n + k, n + k)] = 1.0 + reg;
        hessian[(k, n + k)] = -1.0;
        hessian[(n + k, k)] = -1.0;
    }
    let m1 = p1.num_constraints();
    let m2 = p2.num_constraints();
    let mut constraints = Matrix::zeros(m1 + m2, 2 * n);
    for r in 0..m1 {
        constraints.row_mut(r)[..n].copy_from_slice(p1.normals.row(r));
    }
    for r in 0..m2 {
        constraints.row_mut(m1 + r)[n..].copy_from_slice(p2.normals.row(r));
    }
    let mut bounds = p1.offsets.clone();
    bounds.extend_from_slice(&p2.offsets);
    let qp = QuadraticProgram::new(hessian, vec![0.0; 2 * n])?
        .with_inequalities(constraints, bounds)?;
    let xi = qp.solve(tol)?.x;
    let first = xi[..n].to_vec();
    let second = xi[n..].to_vec();
    let distance = norm(&sub(&first, &second));
    Ok(ClosestPoints {
        first,
        second,
        distance,
    })
}

/// Point of `∂P ∩ R` nearest to `u_prev`.
///
/// The boundary is a union of facets, so each facet `{G_k u = l_k} ∩ P ∩ R`
/// is solved as its own projection QP and the nearest wins; ties go to the
/// lowest facet index.
pub fn project_onto_boundary_region(
    p: &Polytope,
    region: &Polytope,
    u_prev: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    p.check_dim(region.dim())?;
    p.check_dim(u_prev.len())?;
    let n = p.dim();
    let both = p.intersect(region)?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in 0..p.num_constraints() {
        let normal = p.normals.row(k);
        if max_abs(normal) == 0.0 {
            continue;
        }
        let facet = Matrix::from_row_major(1, n, normal.to_vec())?;
        let mut on_facet = both.clone();
        on_facet.normals.push_row(&normal.iter().map(|v| -v).collect::<Vec<_>>())?;
        on_facet.offsets.push(-p.offsets[k]);
        if on_facet.is_empty(tol)? {
            continue;
        }
        let qp = QuadraticProgram::new(Matrix::identity(n), u_prev.iter().map(|v| -v).collect())?
            .with_inequalities(both.normals.clone(), both.offsets.clone())?
            .with_equalities(facet, vec![p.offsets[k]])?;
        let candidate = match qp.solve(tol) {
            Ok(sol) => sol.x,
            Err(Error::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        let dist = norm(&sub(&candidate, u_prev));
        let better = match &best {
            None => true,
            Some((d, _)) => dist < *d - 1e-12,
        };
        if better {
            best = Some((dist, candidate));
        }
    }
    best.map(|(_, u)| u)
        .ok_or(Error::Precondition("boundary region is empty"))
}

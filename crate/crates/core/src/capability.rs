//! Maximum safety capability: the action that maximizes the worst row of `B u`.

use alloc::vec;
use alloc::vec::Vec;

use crate::barrier::{effective_drift, CapabilityStack};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Vec2};
use crate::lp::LinearProgram;
use crate::polytope::Polytope;

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityResult {
    pub u_star: Vec2,
    pub gamma_star: f64,
    /// `B u* + q`, empty when no obstacle is active.
    pub c_bar: Vec<f64>,
}

/// Solves `max_{u ∈ U} min_k [B u]_k` as the LP over `(γ, u)`:
/// `min -γ  s.t.  G u ≤ l,  γ 1 - B u ≤ 0`. Returns `(u*, γ*)`.
pub fn max_min_capability(b: &Matrix, set: &Polytope) -> Result<(Vec<f64>, f64)> {
    if b.rows() == 0 {
        return Err(Error::Precondition("capability program needs at least one row"));
    }
    let n = b.cols();
    if set.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: set.dim(),
        });
    }
    let mut rows = Matrix::zeros(0, n + 1);
    let mut bounds = Vec::with_capacity(set.num_constraints() + b.rows());
    let mut row = vec![0.0; n + 1];
    for k in 0..set.num_constraints() {
        row[0] = 0.0;
        row[1..].copy_from_slice(set.normals().row(k));
        rows.push_row(&row)?;
        bounds.push(set.offsets()[k]);
    }
    for k in 0..b.rows() {
        row[0] = 1.0;
        for (dst, v) in row[1..].iter_mut().zip(b.row(k)) {
            *dst = -v;
        }
        rows.push_row(&row)?;
        bounds.push(0.0);
    }
    let mut objective = vec![0.0; n + 1];
    objective[0] = -1.0;
    let sol = LinearProgram::new(objective, rows, bounds)?.solve()?;
    let u = sol.x[1..].to_vec();
    // Report the attained worst row rather than the LP variable.
    let gamma = (0..b.rows())
        .map(|k| dot(b.row(k), &u))
        .fold(f64::INFINITY, f64::min);
    Ok((u, gamma))
}

/// Best own action and the resulting capability vector `c̄ = B u* + q + D d(u)`.
///
/// With no active obstacle the capability is vacuous: `u* = 0`, `γ* = 0`.
pub fn capability_request_vector(
    stack: &CapabilityStack,
    set: &Polytope,
    d_u: Vec2,
) -> Result<CapabilityResult> {
    if stack.rows() == 0 {
        return Ok(CapabilityResult {
            u_star: Vec2::ZERO,
            gamma_star: 0.0,
            c_bar: Vec::new(),
        });
    }
    let (u, gamma_star) = max_min_capability(&stack.b, set)?;
    let drift = effective_drift(stack, d_u);
    let bu = stack.b.mul_vec(&u)?;
    let c_bar = bu.iter().zip(&drift).map(|(a, b)| a + b).collect();
    Ok(CapabilityResult {
        u_star: Vec2::from_slice(&u)?,
        gamma_star,
        c_bar,
    })
}

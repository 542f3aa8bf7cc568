//! Relative-distance barrier functions for double-integrator agents and the
//! stacked capability decomposition `Φ = A u_N + D d(u) + B u + q`.
//!
//! The filtered dynamics are `ṗ = v`, `v̇ = u_f(x) - u_s`, so the filter input
//! enters through `ḡ = -g`. Obstacle motion is ignored when differentiating.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Mat2, Matrix, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub p: Vec2,
    pub v: Vec2,
}

impl AgentState {
    pub fn new(p: Vec2, v: Vec2) -> Self {
        Self { p, v }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: usize,
    pub position: Vec2,
    #[serde(default)]
    pub velocity: Vec2,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(id: usize, position: Vec2, radius: f64) -> Result<Self> {
        Self::moving(id, position, Vec2::ZERO, radius)
    }

    pub fn moving(id: usize, position: Vec2, velocity: Vec2, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter("obstacle radius must be positive"));
        }
        Ok(Self {
            id,
            position,
            velocity,
            radius,
        })
    }
}

/// Linear class-K gains `α(z) = α z` for the three levels of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGains")]
pub struct ClassKGains {
    alpha0: f64,
    alpha1: f64,
    alpha2: f64,
}

#[derive(Deserialize)]
struct RawGains {
    alpha0: f64,
    alpha1: f64,
    alpha2: f64,
}

impl TryFrom<RawGains> for ClassKGains {
    type Error = Error;
    fn try_from(raw: RawGains) -> Result<Self> {
        ClassKGains::new(raw.alpha0, raw.alpha1, raw.alpha2)
    }
}

impl Default for ClassKGains {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            alpha1: 1.0,
            alpha2: 1.0,
        }
    }
}

impl ClassKGains {
    pub fn new(alpha0: f64, alpha1: f64, alpha2: f64) -> Result<Self> {
        for a in [alpha0, alpha1, alpha2] {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidParameter("class-K gains must be positive"));
            }
        }
        Ok(Self {
            alpha0,
            alpha1,
            alpha2,
        })
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn beta(&self) -> f64 {
        self.alpha1 + self.alpha2
    }
}

/// `‖p - p_o‖² - r²`
pub fn h(x: &AgentState, o: &Obstacle) -> f64 {
    (x.p - o.position).norm_sq() - o.radius * o.radius
}

/// `2 v·(p - p_o) + α0 h`
pub fn phi1(x: &AgentState, o: &Obstacle, gains: &ClassKGains) -> f64 {
    2.0 * x.v.dot(x.p - o.position) + gains.alpha0 * h(x, o)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LieDerivatives {
    /// Drift term of `φ̇¹`.
    pub lf: f64,
    /// `2 (p - p_o)`; the filter input contributes `-lg · u_s`.
    pub lg: Vec2,
}

pub fn lie_derivatives(
    x: &AgentState,
    u_f: Vec2,
    o: &Obstacle,
    gains: &ClassKGains,
) -> LieDerivatives {
    let d = x.p - o.position;
    let lf = 2.0 * (x.v.dot(x.v) + gains.alpha0 * x.v.dot(d) + u_f.dot(d));
    LieDerivatives { lf, lg: d * 2.0 }
}

/// `φ̇¹ + α1 φ¹` with the filter input applied through `ḡ = -g`.
pub fn phi2(x: &AgentState, u_f: Vec2, o: &Obstacle, gains: &ClassKGains, u_s: Vec2) -> f64 {
    let lie = lie_derivatives(x, u_f, o, gains);
    lie.lf - lie.lg.dot(u_s) + gains.alpha1 * phi1(x, o, gains)
}

/// How one neighbor's state enters `u_f` of the agent being evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborCoupling {
    pub id: usize,
    /// `∂u_f_i / ∂p_j`
    pub jacobian: Mat2,
    pub velocity: Vec2,
}

/// Formation-controller terms an agent needs to differentiate its barriers.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTerms {
    /// Nominal acceleration, external drive included.
    pub u_f: Vec2,
    /// `∂u_f_i / ∂p_i`
    pub jacobian_self: Mat2,
    /// `∂u_f_i / ∂v_i = -damping_rate · I`
    pub damping_rate: f64,
    /// Sorted by ascending id.
    pub neighbors: Vec<NeighborCoupling>,
}

/// One row per active obstacle, ordered by obstacle id.
#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityStack {
    pub a: Matrix,
    pub d: Matrix,
    pub b: Matrix,
    pub q: Vec<f64>,
    pub obstacle_ids: Vec<usize>,
    pub neighbor_ids: Vec<usize>,
}

pub const CONTROL_DIM: usize = 2;

impl CapabilityStack {
    pub fn empty(neighbor_ids: Vec<usize>) -> Self {
        let width = CONTROL_DIM * neighbor_ids.len();
        Self {
            a: Matrix::zeros(0, width),
            d: Matrix::zeros(0, CONTROL_DIM),
            b: Matrix::zeros(0, CONTROL_DIM),
            q: Vec::new(),
            obstacle_ids: Vec::new(),
            neighbor_ids,
        }
    }

    pub fn rows(&self) -> usize {
        self.q.len()
    }

    /// Block column of `A` for neighbor `j`, or `None` if `j` is not a neighbor.
    pub fn block(&self, j: usize) -> Option<Matrix> {
        let k = self.neighbor_ids.iter().position(|&n| n == j)?;
        Some(self.a.columns(CONTROL_DIM * k, CONTROL_DIM))
    }

    /// `A u_N + D d(u) + B u + q`
    pub fn evaluate(&self, u_neighbors: &[f64], d_u: Vec2, u: Vec2) -> Result<Vec<f64>> {
        let an = self.a.mul_vec(u_neighbors)?;
        let dd = self.d.mul_vec(&d_u.to_array())?;
        let bu = self.b.mul_vec(&u.to_array())?;
        Ok((0..self.rows())
            .map(|k| an[k] + dd[k] + bu[k] + self.q[k])
            .collect())
    }

    /// Multiplies every `A` entry by `s`.
    pub fn scale_neighbor_terms(&mut self, s: f64) {
        self.a = self.a.scaled(s);
    }
}

/// Builds the stacked safety condition for one agent.
///
/// Neighbor columns use the velocity-input surrogate `ḡ_j = -[I; 0]`, since
/// neighbor accelerations only reach this condition one derivative later.
pub fn capability_stack(
    x: &AgentState,
    coupling: &CouplingTerms,
    obstacles: &[Obstacle],
    gains: &ClassKGains,
) -> CapabilityStack {
    let neighbor_ids: Vec<usize> = coupling.neighbors.iter().map(|n| n.id).collect();
    let mut sorted: Vec<&Obstacle> = obstacles.iter().collect();
    sorted.sort_by_key(|o| o.id);
    let k = sorted.len();
    let width = CONTROL_DIM * neighbor_ids.len();
    let mut stack = CapabilityStack::empty(neighbor_ids);
    stack.a = Matrix::zeros(k, width);
    stack.d = Matrix::zeros(k, CONTROL_DIM);
    stack.b = Matrix::zeros(k, CONTROL_DIM);
    stack.q = vec![0.0; k];

    let a0 = gains.alpha0;
    let beta = gains.beta();
    let rho = coupling.damping_rate;
    let v = x.v;
    let u_f = coupling.u_f;
    for (row, o) in sorted.iter().enumerate() {
        stack.obstacle_ids.push(o.id);
        let d = x.p - o.position;
        let p1 = phi1(x, o, gains);
        let lf = lie_derivatives(x, u_f, o, gains).lf;

        let dlf_dp = (v * a0 + u_f + coupling.jacobian_self.transpose().apply(d)) * 2.0;
        let dlf_dv = (v * 2.0 + d * (a0 - rho)) * 2.0;
        let mut q = dlf_dp.dot(v) + dlf_dv.dot(u_f) + gains.alpha1 * gains.alpha2 * p1 + beta * lf;
        for (col, n) in coupling.neighbors.iter().enumerate() {
            let dlf_dpj = n.jacobian.transpose().apply(d) * 2.0;
            q += dlf_dpj.dot(n.velocity);
            stack.a[(row, CONTROL_DIM * col)] = -dlf_dpj.x;
            stack.a[(row, CONTROL_DIM * col + 1)] = -dlf_dpj.y;
        }
        stack.q[row] = q;
        stack.d[(row, 0)] = -2.0 * d.x;
        stack.d[(row, 1)] = -2.0 * d.y;
        let b = -(v * 6.0) - d * (2.0 * (a0 - rho + beta));
        stack.b[(row, 0)] = b.x;
        stack.b[(row, 1)] = b.y;
    }
    stack
}

/// Row-wise `q + D d(u)`, the drift seen by the capability program.
pub fn effective_drift(stack: &CapabilityStack, d_u: Vec2) -> Vec<f64> {
    (0..stack.rows())
        .map(|k| stack.q[k] + dot(stack.d.row(k), &d_u.to_array()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obstacle_at(id: usize, x: f64, y: f64) -> Obstacle {
        Obstacle::new(id, Vec2::new(x, y), 1.0).unwrap()
    }

    fn at(px: f64, py: f64, vx: f64, vy: f64) -> AgentState {
        AgentState::new(Vec2::new(px, py), Vec2::new(vx, vy))
    }

    #[test]
    fn h_values() {
        let o = obstacle_at(0, 0.0, 0.0);
        assert_eq!(h(&at(3.0, 4.0, 0.0, 0.0), &o), 24.0);
        assert_eq!(h(&at(1.0, 0.0, 0.0, 0.0), &o), 0.0);
        assert_eq!(h(&at(0.0, 0.0, 0.0, 0.0), &o), -1.0);
    }

    #[test]
    fn phi1_values() {
        let o = obstacle_at(0, 0.0, 0.0);
        let g = ClassKGains::default();
        assert_eq!(phi1(&at(2.0, 0.0, -1.0, 0.0), &o, &g), -1.0);
        assert_eq!(phi1(&at(0.0, 1.0, 0.0, 0.0), &o, &g), 0.0);
    }

    #[test]
    fn lie_derivative_values() {
        let o = obstacle_at(0, 0.0, 0.0);
        let g = ClassKGains::default();
        let lie = lie_derivatives(&at(2.0, 0.0, 0.0, 0.0), Vec2::ZERO, &o, &g);
        assert_eq!(lie.lf, 0.0);
        assert_eq!(lie.lg, Vec2::new(4.0, 0.0));
        let lie = lie_derivatives(&at(3.5, 2.0, 1.0, -2.0), Vec2::new(0.3, 4.0), &obstacle_at(1, 2.0, 2.0), &g);
        assert_eq!(lie.lg, Vec2::new(3.0, 0.0));
    }

    #[test]
    fn phi2_on_boundary_at_rest() {
        let o = obstacle_at(0, 0.0, 0.0);
        let g = ClassKGains::default();
        assert_eq!(phi2(&at(1.0, 0.0, 0.0, 0.0), Vec2::ZERO, &o, &g, Vec2::ZERO), 0.0);
    }

    #[test]
    fn phi2_is_affine_in_filter_input() {
        let o = obstacle_at(0, 0.5, -1.0);
        let g = ClassKGains::new(0.7, 1.3, 2.1).unwrap();
        let x = at(3.0, 1.0, -0.4, 0.9);
        let u_f = Vec2::new(1.5, -2.0);
        let base = phi2(&x, u_f, &o, &g, Vec2::new(0.25, 0.5));
        let delta = Vec2::new(1.0, -2.0);
        let moved = phi2(&x, u_f, &o, &g, Vec2::new(1.25, -1.5));
        let lg = lie_derivatives(&x, u_f, &o, &g).lg;
        assert!((moved - base - lg.dot(-delta)).abs() < 1e-12);
    }

    #[test]
    fn gains_validation() {
        assert!(ClassKGains::new(1.0, 0.0, 1.0).is_err());
        assert!(ClassKGains::new(1.0, 1.0, f64::NAN).is_err());
        assert_eq!(ClassKGains::new(1.0, 2.0, 3.0).unwrap().beta(), 5.0);
    }

    #[test]
    fn obstacle_radius_validated() {
        assert!(Obstacle::new(0, Vec2::ZERO, 0.0).is_err());
        assert!(Obstacle::new(0, Vec2::ZERO, -1.0).is_err());
    }

    fn simple_coupling() -> CouplingTerms {
        CouplingTerms {
            u_f: Vec2::new(1.0, -0.5),
            jacobian_self: Mat2::scalar(-2.0),
            damping_rate: 2.0,
            neighbors: vec![
                NeighborCoupling {
                    id: 3,
                    jacobian: Mat2::scalar(1.5),
                    velocity: Vec2::new(0.1, 0.0),
                },
                NeighborCoupling {
                    id: 7,
                    jacobian: Mat2::outer(Vec2::new(1.0, 0.0), Vec2::new(0.5, 0.5)),
                    velocity: Vec2::new(0.0, -0.2),
                },
            ],
        }
    }

    #[test]
    fn empty_obstacle_list_gives_zero_rows() {
        let s = capability_stack(&at(0.0, 0.0, 1.0, 0.0), &simple_coupling(), &[], &ClassKGains::default());
        assert_eq!(s.rows(), 0);
        assert_eq!(s.a.rows(), 0);
        assert_eq!(s.a.cols(), 4);
        assert_eq!(s.b.rows(), 0);
        assert_eq!(s.d.rows(), 0);
    }

    #[test]
    fn rows_follow_obstacle_id_order() {
        let obstacles = [obstacle_at(9, 5.0, 0.0), obstacle_at(2, 0.0, 5.0)];
        let s = capability_stack(&at(0.0, 0.0, 1.0, 0.0), &simple_coupling(), &obstacles, &ClassKGains::default());
        assert_eq!(s.obstacle_ids, vec![2, 9]);
        // d row is -2(p - p_o), so row 0 belongs to the obstacle at (0, 5)
        assert_eq!(s.d.row(0), &[0.0, 10.0]);
    }

    #[test]
    fn block_columns_match_single_neighbor() {
        let obstacles = [obstacle_at(0, 4.0, 1.0), obstacle_at(1, -2.0, 3.0)];
        let g = ClassKGains::default();
        let x = at(0.5, 0.5, 1.0, 0.3);
        let full = capability_stack(&x, &simple_coupling(), &obstacles, &g);
        for n in simple_coupling().neighbors {
            let mut only = simple_coupling();
            only.neighbors.retain(|m| m.id == n.id);
            let single = capability_stack(&x, &only, &obstacles, &g);
            assert_eq!(full.block(n.id).unwrap(), single.a);
        }
        assert!(full.block(4).is_none());
    }

    #[test]
    fn stack_is_affine_in_neighbor_input() {
        let obstacles = [obstacle_at(0, 4.0, 1.0)];
        let s = capability_stack(&at(0.5, 0.5, 1.0, 0.3), &simple_coupling(), &obstacles, &ClassKGains::default());
        let un = [0.3, -1.0, 2.0, 0.5];
        let twice: Vec<f64> = un.iter().map(|v| 2.0 * v).collect();
        let zero = s.evaluate(&[0.0; 4], Vec2::ZERO, Vec2::ZERO).unwrap();
        let one = s.evaluate(&un, Vec2::ZERO, Vec2::ZERO).unwrap();
        let two = s.evaluate(&twice, Vec2::ZERO, Vec2::ZERO).unwrap();
        assert!(((two[0] - zero[0]) - 2.0 * (one[0] - zero[0])).abs() < 1e-12);
    }

    #[test]
    fn translation_invariance() {
        let g = ClassKGains::default();
        let o = obstacle_at(0, 1.0, 2.0);
        let x = at(4.0, -1.0, 0.5, 0.5);
        let shift = Vec2::new(-7.0, 13.0);
        let o2 = Obstacle::new(0, o.position + shift, 1.0).unwrap();
        let x2 = AgentState::new(x.p + shift, x.v);
        assert!((h(&x, &o) - h(&x2, &o2)).abs() < 1e-12);
        assert!((phi1(&x, &o, &g) - phi1(&x2, &o2, &g)).abs() < 1e-12);
    }
}

//! Virtual mass-spring formation dynamics, the per-agent safety filter and
//! time integration.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::barrier::{
    lie_derivatives, phi1, AgentState, ClassKGains, CouplingTerms, NeighborCoupling, Obstacle,
};
use crate::error::{Error, Result};
use crate::linalg::{Mat2, Matrix, Vec2};
use crate::polytope::{Polytope, DEFAULT_TOL};
use crate::qp::QuadraticProgram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    pub stiffness: f64,
    pub damping: f64,
    pub rest_length: f64,
}

/// Undirected spring network; doubles as the communication graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    masses: Vec<f64>,
    springs: Vec<Spring>,
    // per agent: (neighbor, spring index), ascending neighbor id
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl FormationGraph {
    pub fn new(masses: Vec<f64>, springs: Vec<Spring>) -> Result<Self> {
        let n = masses.len();
        if masses.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParameter("masses must be positive"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (idx, s) in springs.iter().enumerate() {
            if s.a >= n || s.b >= n || s.a == s.b {
                return Err(Error::InvalidParameter("spring endpoints must be distinct agents"));
            }
            if !(s.stiffness > 0.0) || !(s.rest_length > 0.0) || !(s.damping >= 0.0) {
                return Err(Error::InvalidParameter(
                    "springs need positive stiffness and rest length and nonnegative damping",
                ));
            }
            if adjacency[s.a].iter().any(|&(j, _)| j == s.b) {
                return Err(Error::InvalidParameter("duplicate spring"));
            }
            adjacency[s.a].push((s.b, idx));
            adjacency[s.b].push((s.a, idx));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            masses,
            springs,
            adjacency,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.masses.len()
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn springs(&self) -> &[Spring] {
        &self.springs
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().map(|&(j, _)| j)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_agents()).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        let n = self.num_agents();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|s| *s)
    }

    pub fn is_tree(&self) -> bool {
        self.is_connected() && self.springs.len() + 1 == self.num_agents()
    }

    fn spring_terms(&self, i: usize, j: usize, s: &Spring, states: &[AgentState]) -> Result<(Vec2, Mat2)> {
        let e = states[i].p - states[j].p;
        let len = e.norm();
        if !(len > 0.0) {
            return Err(Error::CoincidentAgents(i.min(j), i.max(j)));
        }
        let km = s.stiffness / self.masses[i];
        let ratio = s.rest_length / len;
        let force = e * (-km * (1.0 - ratio));
        let jac = -(Mat2::scalar(1.0 - ratio) + Mat2::outer(e, e) * (s.rest_length / (len * len * len)))
            * km;
        Ok((force, jac))
    }

    fn damping_rate(&self, i: usize) -> f64 {
        self.adjacency[i]
            .iter()
            .map(|&(_, s)| self.springs[s].damping)
            .sum::<f64>()
            / self.masses[i]
    }
}

/// Spring-damper acceleration `u_f` of agent `i`, without external drive.
pub fn formation_control(i: usize, states: &[AgentState], graph: &FormationGraph) -> Result<Vec2> {
    let mut acc = states[i].v * -graph.damping_rate(i);
    for &(j, s) in &graph.adjacency[i] {
        acc = acc + graph.spring_terms(i, j, &graph.springs[s], states)?.0;
    }
    Ok(acc)
}

/// `u_f` (drive included) and its partial derivatives for agent `i`.
pub fn coupling_terms(
    i: usize,
    states: &[AgentState],
    graph: &FormationGraph,
    drive: Vec2,
) -> Result<CouplingTerms> {
    let rho = graph.damping_rate(i);
    let mut u_f = states[i].v * -rho + drive;
    let mut jacobian_self = Mat2::ZERO;
    let mut neighbors = Vec::with_capacity(graph.degree(i));
    for &(j, s) in &graph.adjacency[i] {
        let (force, jac) = graph.spring_terms(i, j, &graph.springs[s], states)?;
        u_f = u_f + force;
        jacobian_self = jacobian_self + jac;
        neighbors.push(NeighborCoupling {
            id: j,
            jacobian: -jac,
            velocity: states[j].v,
        });
    }
    Ok(CouplingTerms {
        u_f,
        jacobian_self,
        damping_rate: rho,
        neighbors,
    })
}

/// Admissible filter inputs `{u_s : |u_s|∞ ≤ U, |u_f - u_s|∞ ≤ U}`.
///
/// When `|u_f|` exceeds `2U` on an axis the two boxes miss each other; that
/// axis collapses to the box face nearest the nominal input and the second
/// return value is `true`.
pub fn control_set(u_f: Vec2, half_width: f64) -> (Polytope, bool) {
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    let mut saturated = false;
    for (k, uf) in u_f.to_array().into_iter().enumerate() {
        lo[k] = (-half_width).max(uf - half_width);
        hi[k] = half_width.min(uf + half_width);
        if lo[k] > hi[k] {
            saturated = true;
            let face = if uf > 0.0 { half_width } else { -half_width };
            lo[k] = face;
            hi[k] = face;
        }
    }
    (Polytope::axis_box(&lo, &hi), saturated)
}

/// `{u : τ G u - l ≤ 0}` for a velocity set `{v : G v - l ≤ 0}` reached over a
/// window of length `τ` at constant acceleration.
pub fn velocity_to_accel(velocity_set: &Polytope, tau_interval: f64) -> Result<Polytope> {
    if !(tau_interval > 0.0) || !tau_interval.is_finite() {
        return Err(Error::InvalidParameter("time window must be positive"));
    }
    Polytope::new(
        velocity_set.normals().scaled(tau_interval),
        velocity_set.offsets().to_vec(),
    )
}

/// One first-order barrier condition `lg · u_s ≤ bound` for the filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierRow {
    pub obstacle_id: usize,
    pub distance: f64,
    pub lg: Vec2,
    pub bound: f64,
}

pub fn barrier_rows(
    x: &AgentState,
    u_f: Vec2,
    obstacles: &[Obstacle],
    gains: &ClassKGains,
) -> Vec<BarrierRow> {
    let mut rows: Vec<BarrierRow> = obstacles
        .iter()
        .map(|o| {
            let lie = lie_derivatives(x, u_f, o, gains);
            BarrierRow {
                obstacle_id: o.id,
                distance: (x.p - o.position).norm(),
                lg: lie.lg,
                bound: lie.lf + gains.alpha1() * phi1(x, o, gains),
            }
        })
        .collect();
    rows.sort_by_key(|r| r.obstacle_id);
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub u_s: Vec2,
    /// Obstacles whose barrier rows had to be dropped, in drop order.
    pub dropped: Vec<usize>,
    /// The negotiated set had to be replaced by the plain control set.
    pub relaxed_set: bool,
}

/// Smallest modification `u_s` of the nominal input that satisfies every
/// barrier row and stays in `allowed ∩ control`.
///
/// If that is infeasible, the negotiated set is replaced by `control` first;
/// after that, barrier rows are dropped farthest obstacle first.
pub fn safety_filter(
    rows: &[BarrierRow],
    allowed: &Polytope,
    control: &Polytope,
) -> Result<FilterOutcome> {
    let mut kept: Vec<BarrierRow> = rows.to_vec();
    // drop order: farthest first, ties by larger id
    kept.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.obstacle_id.cmp(&b.obstacle_id))
    });
    let mut dropped = Vec::new();
    let mut set = allowed.intersect(control)?;
    let mut relaxed_set = false;
    loop {
        let mut normals = Matrix::zeros(0, 2);
        let mut offsets = Vec::with_capacity(kept.len());
        for r in &kept {
            normals.push_row(&r.lg.to_array())?;
            offsets.push(r.bound);
        }
        let qp = QuadraticProgram::new(Matrix::identity(2), vec![0.0, 0.0])?
            .with_inequalities(normals, offsets)?
            .with_inequalities(set.normals().clone(), set.offsets().to_vec())?;
        match qp.solve(DEFAULT_TOL) {
            Ok(sol) => {
                return Ok(FilterOutcome {
                    u_s: Vec2::from_slice(&sol.x)?,
                    dropped,
                    relaxed_set,
                })
            }
            Err(Error::Infeasible { .. }) => {
                if !relaxed_set {
                    relaxed_set = true;
                    set = control.clone();
                } else if let Some(r) = kept.pop() {
                    dropped.push(r.obstacle_id);
                } else {
                    return Err(Error::Precondition("filter control set is empty"));
                }
            }
            Err(e) => return Err(e),
        }
    }
}

fn derivatives(
    states: &[AgentState],
    graph: &FormationGraph,
    drives: &[Vec2],
    filter: &[Vec2],
) -> Result<Vec<AgentState>> {
    (0..states.len())
        .map(|i| {
            let u_f = formation_control(i, states, graph)? + drives[i];
            Ok(AgentState::new(states[i].v, u_f - filter[i]))
        })
        .collect()
}

fn offset(states: &[AgentState], k: &[AgentState], h: f64) -> Vec<AgentState> {
    states
        .iter()
        .zip(k)
        .map(|(s, d)| AgentState::new(s.p + d.p * h, s.v + d.v * h))
        .collect()
}

/// Classic RK4 over all agents; drive and filter inputs are held for the step
/// while `u_f` is re-evaluated at every stage.
pub fn step(
    states: &[AgentState],
    graph: &FormationGraph,
    drives: &[Vec2],
    filter: &[Vec2],
    dt: f64,
) -> Result<Vec<AgentState>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive"));
    }
    let n = states.len();
    if drives.len() != n || filter.len() != n || graph.num_agents() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: filter.len(),
        });
    }
    let k1 = derivatives(states, graph, drives, filter)?;
    let k2 = derivatives(&offset(states, &k1, dt / 2.0), graph, drives, filter)?;
    let k3 = derivatives(&offset(states, &k2, dt / 2.0), graph, drives, filter)?;
    let k4 = derivatives(&offset(states, &k3, dt), graph, drives, filter)?;
    Ok((0..n)
        .map(|i| {
            let dp = (k1[i].p + k2[i].p * 2.0 + k3[i].p * 2.0 + k4[i].p) * (dt / 6.0);
            let dv = (k1[i].v + k2[i].v * 2.0 + k3[i].v * 2.0 + k4[i].v) * (dt / 6.0);
            AgentState::new(states[i].p + dp, states[i].v + dv)
        })
        .collect())
}

pub fn advance_obstacles(obstacles: &mut [Obstacle], dt: f64) {
    for o in obstacles {
        o.position = o.position + o.velocity * dt;
    }
}

/// Kinetic plus spring potential energy of the network.
pub fn mechanical_energy(states: &[AgentState], graph: &FormationGraph) -> f64 {
    let kinetic: f64 = states
        .iter()
        .enumerate()
        .map(|(i, s)| 0.5 * graph.mass(i) * s.v.norm_sq())
        .sum();
    let potential: f64 = graph
        .springs()
        .iter()
        .map(|s| {
            let stretch = (states[s.a].p - states[s.b].p).norm() - s.rest_length;
            0.5 * s.stiffness * stretch * stretch
        })
        .sum();
    kinetic + potential
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(dist: f64, damping: f64) -> (FormationGraph, Vec<AgentState>) {
        let g = FormationGraph::new(
            vec![0.5, 0.5],
            vec![Spring {
                a: 0,
                b: 1,
                stiffness: 3.0,
                damping,
                rest_length: 3.0,
            }],
        )
        .unwrap();
        let s = vec![
            AgentState::new(Vec2::ZERO, Vec2::ZERO),
            AgentState::new(Vec2::new(dist, 0.0), Vec2::ZERO),
        ];
        (g, s)
    }

    #[test]
    fn rest_length_is_equilibrium() {
        let (g, s) = pair(3.0, 1.0);
        assert_eq!(formation_control(0, &s, &g).unwrap(), Vec2::ZERO);
    }

    #[test]
    fn stretched_spring_pulls_with_k_s_over_m() {
        let (g, s) = pair(4.0, 1.0);
        let u = formation_control(0, &s, &g).unwrap();
        assert!((u.x - 6.0).abs() < 1e-12 && u.y == 0.0);
        let u = formation_control(1, &s, &g).unwrap();
        assert!((u.x + 6.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_agents_rejected() {
        let (g, s) = pair(0.0, 1.0);
        assert_eq!(
            formation_control(0, &s, &g),
            Err(Error::CoincidentAgents(0, 1))
        );
    }

    #[test]
    fn mirror_symmetry() {
        let g = FormationGraph::new(
            vec![0.5, 0.7, 0.5],
            vec![
                Spring { a: 0, b: 1, stiffness: 3.0, damping: 1.0, rest_length: 3.0 },
                Spring { a: 1, b: 2, stiffness: 2.0, damping: 0.5, rest_length: 2.0 },
            ],
        )
        .unwrap();
        let s = vec![
            AgentState::new(Vec2::new(0.3, 1.2), Vec2::new(0.5, -0.1)),
            AgentState::new(Vec2::new(2.0, -0.7), Vec2::new(-0.2, 0.4)),
            AgentState::new(Vec2::new(-1.0, 3.0), Vec2::new(0.0, 1.0)),
        ];
        let flip = |v: Vec2| Vec2::new(v.x, -v.y);
        let m: Vec<AgentState> = s.iter().map(|a| AgentState::new(flip(a.p), flip(a.v))).collect();
        for i in 0..3 {
            let u = formation_control(i, &s, &g).unwrap();
            let um = formation_control(i, &m, &g).unwrap();
            assert!((flip(u) - um).norm() < 1e-12);
        }
    }

    #[test]
    fn graph_validation() {
        let spring = |a, b| Spring { a, b, stiffness: 1.0, damping: 0.0, rest_length: 1.0 };
        assert!(FormationGraph::new(vec![1.0, 1.0], vec![spring(0, 0)]).is_err());
        assert!(FormationGraph::new(vec![1.0, 1.0], vec![spring(0, 2)]).is_err());
        assert!(FormationGraph::new(vec![1.0, 1.0], vec![spring(0, 1), spring(1, 0)]).is_err());
        assert!(FormationGraph::new(vec![0.0, 1.0], vec![spring(0, 1)]).is_err());
        let tri = FormationGraph::new(vec![1.0; 3], vec![spring(0, 1), spring(1, 2), spring(2, 0)]).unwrap();
        assert!(!tri.is_tree());
        let path = FormationGraph::new(vec![1.0; 3], vec![spring(0, 1), spring(1, 2)]).unwrap();
        assert!(path.is_tree());
        assert_eq!(path.neighbors(1).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn control_set_regular_and_saturated() {
        let (p, sat) = control_set(Vec2::new(5.0, 0.0), 20.0);
        assert!(!sat);
        assert!(p.contains(&[-15.0, 20.0], 1e-12).unwrap());
        assert!(!p.contains(&[-16.0, 0.0], 1e-12).unwrap());
        let (p, sat) = control_set(Vec2::new(45.0, 0.0), 20.0);
        assert!(sat);
        assert!(p.contains(&[20.0, 0.0], 1e-12).unwrap());
        assert!(!p.contains(&[19.0, 0.0], 1e-9).unwrap());
    }

    #[test]
    fn velocity_window_scaling() {
        let v = Polytope::halfspace(&[1.0], 1.0);
        let a = velocity_to_accel(&v, 0.01).unwrap();
        assert!(a.contains(&[100.0], 1e-9).unwrap());
        assert!(!a.contains(&[100.1], 1e-9).unwrap());
        assert_eq!(velocity_to_accel(&v, 1.0).unwrap(), v);
        let half = velocity_to_accel(&v, 0.005).unwrap();
        assert!(half.contains(&[200.0], 1e-9).unwrap());
        assert!(velocity_to_accel(&v, 0.0).is_err());
    }

    #[test]
    fn filter_inactive_without_obstacles() {
        let (set, _) = control_set(Vec2::new(3.0, -1.0), 20.0);
        let out = safety_filter(&[], &Polytope::centered_box(2, 20.0), &set).unwrap();
        assert_eq!(out.u_s, Vec2::ZERO);
        assert!(out.dropped.is_empty());
    }

    #[test]
    fn filter_projects_onto_violated_row() {
        let row = BarrierRow { obstacle_id: 0, distance: 2.0, lg: Vec2::new(4.0, 0.0), bound: -8.0 };
        let (set, _) = control_set(Vec2::ZERO, 20.0);
        let out = safety_filter(&[row], &Polytope::centered_box(2, 20.0), &set).unwrap();
        assert!((out.u_s.x + 2.0).abs() < 1e-10 && out.u_s.y.abs() < 1e-10);
    }

    #[test]
    fn filter_drops_farthest_row_first() {
        // rows demand u_x ≤ -30 and u_x ≥ 30; only one can hold
        let near = BarrierRow { obstacle_id: 4, distance: 1.5, lg: Vec2::new(1.0, 0.0), bound: -10.0 };
        let far = BarrierRow { obstacle_id: 2, distance: 3.0, lg: Vec2::new(-1.0, 0.0), bound: -10.0 };
        let (set, _) = control_set(Vec2::ZERO, 20.0);
        let out = safety_filter(&[near, far], &Polytope::whole_space(2), &set).unwrap();
        assert_eq!(out.dropped, vec![2]);
        assert!((out.u_s.x + 10.0).abs() < 1e-9);
    }

    #[test]
    fn filter_relaxes_negotiated_set_before_dropping() {
        let row = BarrierRow { obstacle_id: 1, distance: 2.0, lg: Vec2::new(1.0, 0.0), bound: -5.0 };
        let allowed = Polytope::halfspace(&[-1.0, 0.0], -2.0);
        let (set, _) = control_set(Vec2::ZERO, 20.0);
        let out = safety_filter(&[row], &allowed, &set).unwrap();
        assert!(out.relaxed_set);
        assert!(out.dropped.is_empty());
        assert!((out.u_s.x + 5.0).abs() < 1e-9);
    }

    #[test]
    fn rk4_fixed_point() {
        let (g, s) = pair(3.0, 1.0);
        let next = step(&s, &g, &[Vec2::ZERO; 2], &[Vec2::ZERO; 2], 0.01).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn rk4_constant_acceleration_is_exact() {
        let g = FormationGraph::new(vec![1.0], vec![]).unwrap();
        let s = vec![AgentState::new(Vec2::new(1.0, 2.0), Vec2::new(0.5, -1.0))];
        let a = Vec2::new(3.0, 0.5);
        let dt = 0.1;
        let next = step(&s, &g, &[a], &[Vec2::ZERO], dt).unwrap();
        let p = s[0].p + s[0].v * dt + a * (0.5 * dt * dt);
        let v = s[0].v + a * dt;
        assert!((next[0].p - p).norm() < 1e-14);
        assert!((next[0].v - v).norm() < 1e-14);
    }
}

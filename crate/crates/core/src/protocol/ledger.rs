use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{Matrix, Vec2};
use crate::polytope::Polytope;

/// Per-agent protocol state for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct NegotiationLedger {
    pub tau: usize,
    pub upsilon: usize,
    /// Own capability vector from the latest collaboration round.
    pub c_bar: Vec<f64>,
    /// Allocations this agent assumes from each neighbor (`c̄_ij`).
    pub c_bar_out: BTreeMap<usize, Vec<f64>>,
    /// Allocations this agent owes each neighbor (`c̄_ji`).
    pub c_bar_in: BTreeMap<usize, Vec<f64>>,
    pub delta_in: BTreeMap<usize, Vec<f64>>,
    pub delta_in_prev: BTreeMap<usize, Vec<f64>>,
    /// Neighbors' coefficient blocks on this agent's control.
    pub a_in: BTreeMap<usize, Matrix>,
    /// Fully constrained neighbors for the current collaboration round.
    pub constrained: BTreeSet<usize>,
    pub u_bar: Polytope,
    /// Latest `u_bar` that was a proper intersection rather than a compromise point.
    pub last_feasible: Polytope,
    pub u_bar_prev: Option<Vec2>,
}

impl NegotiationLedger {
    /// Zero allocations toward every neighbor. `rows_of(j)` is neighbor `j`'s
    /// obstacle row count.
    pub fn new(
        own_rows: usize,
        neighbors: &[usize],
        rows_of: impl Fn(usize) -> usize,
        control_set: Polytope,
    ) -> Self {
        Self {
            tau: 0,
            upsilon: 0,
            c_bar: vec![0.0; own_rows],
            c_bar_out: neighbors.iter().map(|&j| (j, vec![0.0; own_rows])).collect(),
            c_bar_in: neighbors.iter().map(|&j| (j, vec![0.0; rows_of(j)])).collect(),
            delta_in: BTreeMap::new(),
            delta_in_prev: BTreeMap::new(),
            a_in: BTreeMap::new(),
            constrained: BTreeSet::new(),
            u_bar: control_set.clone(),
            last_feasible: control_set,
            u_bar_prev: None,
        }
    }

    /// `δ_i = c̄_i - Σ_j c̄_ij`
    pub fn deficit(&self) -> Vec<f64> {
        let mut d = self.c_bar.clone();
        for c in self.c_bar_out.values() {
            for (dk, ck) in d.iter_mut().zip(c) {
                *dk -= ck;
            }
        }
        d
    }
}

//! Deficit splitting and request coordination for a single agent.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::linalg::{Matrix, Vec2};
use crate::polytope::{Polytope, DEFAULT_TOL};

use super::closest::{adjustment, get_closest_point, request_region, ClosestPoint, RequestRegion};

/// Rows violated by less than this are treated as satisfied.
pub const ADJUSTMENT_TOL: f64 = 1e-9;

/// Splits `delta` evenly over neighbors outside `constrained`. Negative
/// entries are requests; positive ones hand spare capability to neighbors.
///
/// Returns one vector per entry of `neighbors`, zero for constrained ones.
pub fn split_deficit(
    delta: &[f64],
    neighbors: &[usize],
    constrained: &BTreeSet<usize>,
) -> Vec<Vec<f64>> {
    let free = neighbors.iter().filter(|j| !constrained.contains(j)).count();
    neighbors
        .iter()
        .map(|j| {
            if free == 0 || constrained.contains(j) {
                vec![0.0; delta.len()]
            } else {
                delta.iter().map(|d| d / free as f64).collect()
            }
        })
        .collect()
}

/// One neighbor's standing allocation and current request, seen by the responder.
#[derive(Debug, Clone, Copy)]
pub struct NeighborRequest<'a> {
    pub neighbor: usize,
    /// The requester's coefficients on the responder's control.
    pub a_block: &'a Matrix,
    pub c_bar: &'a [f64],
    pub delta: &'a [f64],
    pub delta_prev: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateOutcome {
    pub u_bar: Polytope,
    /// Present when the requests were jointly infeasible.
    pub compromise: Option<ClosestPoint>,
    /// `ε` per request, zero when nothing was violated.
    pub epsilon: Vec<Vec<f64>>,
    /// `c̄ + δ + ε` per request.
    pub c_bar: Vec<Vec<f64>>,
}

pub fn coordinate(
    control: &Polytope,
    u_prev: Option<Vec2>,
    requests: &[NeighborRequest<'_>],
) -> Result<CoordinateOutcome> {
    let mut regions = Vec::with_capacity(requests.len());
    let mut joint = control.clone();
    for r in requests {
        let offset: Vec<f64> = r.c_bar.iter().zip(r.delta).map(|(c, d)| c + d).collect();
        let region = request_region(r.a_block, &offset)?;
        joint = joint.intersect(&region)?;
        regions.push(RequestRegion {
            neighbor: r.neighbor,
            region,
            delta: r.delta,
            delta_prev: r.delta_prev,
        });
    }
    let mut epsilon: Vec<Vec<f64>> = requests.iter().map(|r| vec![0.0; r.delta.len()]).collect();
    let (u_bar, compromise) = if !joint.is_empty(DEFAULT_TOL)? {
        (joint, None)
    } else {
        let cp = get_closest_point(control, u_prev, &regions)?;
        for (k, r) in requests.iter().enumerate() {
            if let Some(eps) = adjustment(r.a_block, cp.point, r.c_bar, r.delta, ADJUSTMENT_TOL)? {
                epsilon[k] = eps;
            }
        }
        (Polytope::singleton(&cp.point.to_array()), Some(cp))
    };
    let c_bar = requests
        .iter()
        .zip(&epsilon)
        .map(|(r, eps)| {
            r.c_bar
                .iter()
                .zip(r.delta)
                .zip(eps)
                .map(|((c, d), e)| c + d + e)
                .collect()
        })
        .collect();
    Ok(CoordinateOutcome {
        u_bar,
        compromise,
        epsilon,
        c_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split_over_three() {
        let out = split_deficit(&[-6.0], &[1, 2, 3], &BTreeSet::new());
        assert_eq!(out, vec![vec![-2.0]; 3]);
    }

    #[test]
    fn constrained_neighbor_is_skipped() {
        let constrained: BTreeSet<usize> = [2].into_iter().collect();
        let out = split_deficit(&[-6.0], &[1, 2, 3], &constrained);
        assert_eq!(out, vec![vec![-3.0], vec![0.0], vec![-3.0]]);
    }

    #[test]
    fn surplus_is_shared() {
        let out = split_deficit(&[4.0, -2.0], &[1, 2], &BTreeSet::new());
        assert_eq!(out, vec![vec![2.0, -1.0]; 2]);
    }

    #[test]
    fn feasible_request_restricts_the_set() {
        let control = Polytope::centered_box(2, 1.0);
        let a = Matrix::from_rows(2, &[&[1.0, 0.0]]).unwrap();
        let req = NeighborRequest {
            neighbor: 1,
            a_block: &a,
            c_bar: &[0.0],
            delta: &[-0.5],
            delta_prev: None,
        };
        let out = coordinate(&control, None, &[req]).unwrap();
        assert!(out.compromise.is_none());
        assert_eq!(out.epsilon, vec![vec![0.0]]);
        assert!(out.u_bar.contains(&[0.6, 0.0], 1e-12).unwrap());
        assert!(!out.u_bar.contains(&[0.4, 0.0], 1e-12).unwrap());
        assert_eq!(out.c_bar, vec![vec![-0.5]]);
    }

    #[test]
    fn shortfall_is_absorbed_by_the_update() {
        let control = Polytope::centered_box(2, 1.0);
        let a = Matrix::from_rows(2, &[&[1.0, 1.0]]).unwrap();
        let req = NeighborRequest {
            neighbor: 1,
            a_block: &a,
            c_bar: &[0.0],
            delta: &[-3.0],
            delta_prev: None,
        };
        let out = coordinate(&control, None, &[req]).unwrap();
        let cp = out.compromise.unwrap();
        assert!((cp.point - Vec2::new(1.0, 1.0)).norm() < 1e-7);
        assert!((out.epsilon[0][0] - 1.0).abs() < 1e-7);
        let row = a.mul_vec(&cp.point.to_array()).unwrap()[0] + out.c_bar[0][0];
        assert!(row >= -1e-9);
    }
}

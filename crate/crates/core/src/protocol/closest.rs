//! Compromise-seeking action for jointly infeasible neighbor requests.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::polytope::{
    closest_points, least_violation_point, project_onto_boundary_region, Polytope, DEFAULT_TOL,
};

/// One neighbor's request as seen by the responder.
#[derive(Debug, Clone)]
pub struct RequestRegion<'a> {
    pub neighbor: usize,
    /// `{u : A u + c̄ + δ ≥ 0}`
    pub region: Polytope,
    pub delta: &'a [f64],
    /// Request cached from the previous negotiation round, if any.
    pub delta_prev: Option<&'a [f64]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// No neighbor requested anything last round: closest point to all regions.
    NoPriorRequests,
    /// The current requesters alone are infeasible with the control set.
    CurrentInfeasible,
    /// Current requests are feasible: move the previous action along the boundary.
    BoundaryProjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fallback {
    /// The target region itself was empty; fell back to current requesters.
    CurrentRequestersOnly,
    /// No target region was nonempty; minimized the worst violation instead.
    LeastViolation,
    /// The boundary region was empty; used the closest point of the region.
    EmptyBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec2,
    pub branch: Branch,
    pub fallback: Option<Fallback>,
}

fn has_negative(v: &[f64]) -> bool {
    v.iter().any(|x| *x < 0.0)
}

fn intersection<'a, I: Iterator<Item = &'a Polytope>>(dim: usize, regions: I) -> Result<Polytope> {
    let mut out = Polytope::whole_space(dim);
    for r in regions {
        out = out.intersect(r)?;
    }
    Ok(out)
}

fn nearest_in_control(control: &Polytope, target: &Polytope) -> Result<Vec2> {
    let cp = closest_points(control, target, DEFAULT_TOL)?;
    Vec2::from_slice(&cp.first)
}

pub fn get_closest_point(
    control: &Polytope,
    u_prev: Option<Vec2>,
    requests: &[RequestRegion<'_>],
) -> Result<ClosestPoint> {
    let dim = control.dim();
    if control.is_empty(DEFAULT_TOL)? {
        return Err(Error::Precondition("control set is empty"));
    }
    let prior = requests
        .iter()
        .any(|r| r.delta_prev.map(has_negative).unwrap_or(false));
    let current: Vec<&RequestRegion<'_>> =
        requests.iter().filter(|r| has_negative(r.delta)).collect();
    let current_region = intersection(dim, current.iter().map(|r| &r.region))?;

    // Closest point of the control set to `target`, degrading to the current
    // requesters and then to least violation when the target is empty.
    let toward = |target: &Polytope, allow_current: bool| -> Result<(Vec2, Option<Fallback>)> {
        if !target.is_empty(DEFAULT_TOL)? {
            return Ok((nearest_in_control(control, target)?, None));
        }
        if allow_current && !current.is_empty() && !current_region.is_empty(DEFAULT_TOL)? {
            return Ok((
                nearest_in_control(control, &current_region)?,
                Some(Fallback::CurrentRequestersOnly),
            ));
        }
        let u = least_violation_point(control, target)?;
        Ok((Vec2::from_slice(&u)?, Some(Fallback::LeastViolation)))
    };

    if !prior {
        let all = intersection(dim, requests.iter().map(|r| &r.region))?;
        let (point, fallback) = toward(&all, true)?;
        return Ok(ClosestPoint {
            point,
            branch: Branch::NoPriorRequests,
            fallback,
        });
    }
    if control.intersect(&current_region)?.is_empty(DEFAULT_TOL)? {
        let (point, fallback) = toward(&current_region, false)?;
        return Ok(ClosestPoint {
            point,
            branch: Branch::CurrentInfeasible,
            fallback,
        });
    }
    let start = u_prev.unwrap_or(Vec2::ZERO).to_array();
    match project_onto_boundary_region(control, &current_region, &start, DEFAULT_TOL) {
        Ok(u) => Ok(ClosestPoint {
            point: Vec2::from_slice(&u)?,
            branch: Branch::BoundaryProjection,
            fallback: None,
        }),
        Err(Error::Precondition(_)) => Ok(ClosestPoint {
            point: nearest_in_control(control, &current_region)?,
            branch: Branch::BoundaryProjection,
            fallback: Some(Fallback::EmptyBoundary),
        }),
        Err(e) => Err(e),
    }
}

/// `{u : A u + offset ≥ 0}` written as `-A u ≤ offset`.
pub fn request_region(a_block: &crate::linalg::Matrix, offset: &[f64]) -> Result<Polytope> {
    Polytope::new(a_block.scaled(-1.0), offset.to_vec())
}

/// Shortfall `ε = -(A ū + c̄ + δ)` on rows violated by more than `tol`;
/// `None` when every row is satisfied.
pub fn adjustment(
    a_block: &crate::linalg::Matrix,
    u_bar: Vec2,
    c_bar: &[f64],
    delta: &[f64],
    tol: f64,
) -> Result<Option<Vec<f64>>> {
    let au = a_block.mul_vec(&u_bar.to_array())?;
    let mut eps = vec![0.0; au.len()];
    let mut any = false;
    for k in 0..au.len() {
        let r = au[k] + c_bar[k] + delta[k];
        if r < -tol {
            eps[k] = -r;
            any = true;
        }
    }
    Ok(if any { Some(eps) } else { None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn region(a: [f64; 2], offset: f64) -> Polytope {
        request_region(&Matrix::from_rows(2, &[&a]).unwrap(), &[offset]).unwrap()
    }

    #[test]
    fn single_request_gives_maximally_beneficial_vertex() {
        let control = Polytope::centered_box(2, 1.0);
        let delta = [-3.0];
        let reqs = [RequestRegion {
            neighbor: 1,
            region: region([1.0, 2.0], -5.0),
            delta: &delta,
            delta_prev: None,
        }];
        let cp = get_closest_point(&control, None, &reqs).unwrap();
        assert_eq!(cp.branch, Branch::NoPriorRequests);
        assert!((cp.point - Vec2::new(1.0, 1.0)).norm() < 1e-7);
    }

    #[test]
    fn lens_of_two_requests() {
        // u_x + u_y ≥ 1.5 and -u_x + u_y ≥ 1.5 meet at (0, 1.5) above the box
        let control = Polytope::centered_box(2, 1.0);
        let d = [-1.5];
        let reqs = [
            RequestRegion { neighbor: 1, region: region([1.0, 1.0], -1.5), delta: &d, delta_prev: None },
            RequestRegion { neighbor: 2, region: region([-1.0, 1.0], -1.5), delta: &d, delta_prev: None },
        ];
        let cp = get_closest_point(&control, None, &reqs).unwrap();
        assert!((cp.point - Vec2::new(0.0, 1.0)).norm() < 1e-7);
        assert!(cp.fallback.is_none());
    }

    #[test]
    fn boundary_projection_keeps_previous_action() {
        let control = Polytope::centered_box(2, 1.0);
        let prev = [-1.0];
        let cur = [-0.2];
        let zero = [0.0];
        let reqs = [
            RequestRegion { neighbor: 1, region: region([0.0, 1.0], 0.0), delta: &cur, delta_prev: Some(&prev) },
            // non-requesting neighbor whose standing allocation is out of reach
            RequestRegion { neighbor: 2, region: region([0.0, -1.0], -5.0), delta: &zero, delta_prev: Some(&zero) },
        ];
        let cp = get_closest_point(&control, Some(Vec2::new(0.5, 1.0)), &reqs).unwrap();
        assert_eq!(cp.branch, Branch::BoundaryProjection);
        assert!((cp.point - Vec2::new(0.5, 1.0)).norm() < 1e-9);
    }

    #[test]
    fn current_requests_infeasible() {
        let control = Polytope::centered_box(2, 1.0);
        let prev = [-1.0];
        let cur = [-3.0];
        let reqs = [RequestRegion {
            neighbor: 1,
            region: region([1.0, 0.0], -3.0),
            delta: &cur,
            delta_prev: Some(&prev),
        }];
        let cp = get_closest_point(&control, Some(Vec2::ZERO), &reqs).unwrap();
        assert_eq!(cp.branch, Branch::CurrentInfeasible);
        assert!((cp.point.x - 1.0).abs() < 1e-7);
    }

    #[test]
    fn empty_target_degrades_to_least_violation() {
        let control = Polytope::centered_box(2, 1.0);
        let d = [-1.0];
        let reqs = [
            RequestRegion { neighbor: 1, region: region([1.0, 0.0], -3.0), delta: &d, delta_prev: None },
            RequestRegion { neighbor: 2, region: region([-1.0, 0.0], -3.0), delta: &d, delta_prev: None },
        ];
        let cp = get_closest_point(&control, None, &reqs).unwrap();
        assert_eq!(cp.fallback, Some(Fallback::LeastViolation));
        assert!(control.contains(&cp.point.to_array(), 1e-9).unwrap());
    }

    #[test]
    fn interior_region_flags_empty_boundary() {
        let control = Polytope::centered_box(2, 1.0);
        let prev = [-1.0];
        let cur = [-0.1];
        // |u_x| ≤ 0.5 and |u_y| ≤ 0.5 as four rows from one neighbor
        let a = Matrix::from_rows(2, &[&[-1.0, 0.0], &[1.0, 0.0], &[0.0, -1.0], &[0.0, 1.0]]).unwrap();
        let r = request_region(&a, &[0.5; 4]).unwrap();
        let cur4 = [cur[0]; 4];
        let prev4 = [prev[0]; 4];
        let reqs = [RequestRegion { neighbor: 1, region: r, delta: &cur4, delta_prev: Some(&prev4) }];
        let cp = get_closest_point(&control, Some(Vec2::new(1.0, 1.0)), &reqs).unwrap();
        assert_eq!(cp.fallback, Some(Fallback::EmptyBoundary));
        assert!(cp.point.x.abs() <= 0.5 + 1e-9 && cp.point.y.abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn adjustment_formula() {
        let a = Matrix::from_rows(2, &[&[1.0, 0.0]]).unwrap();
        let eps = adjustment(&a, Vec2::new(5.0, 0.0), &[-10.0], &[0.0], 1e-9).unwrap();
        assert_eq!(eps, Some(vec![5.0]));
        assert_eq!(adjustment(&a, Vec2::new(11.0, 0.0), &[-10.0], &[0.0], 1e-9).unwrap(), None);
    }
}

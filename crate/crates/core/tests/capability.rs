use collabsafe_core::barrier::{effective_drift, CapabilityStack};
use collabsafe_core::capability::{capability_request_vector, max_min_capability};
use collabsafe_core::{Matrix, Polytope, Vec2};
use proptest::prelude::*;

const LIMIT: f64 = 20.0;

fn rows_strategy() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-5.0f64..5.0), 1..5)
}

fn matrix(rows: &[[f64; 2]]) -> Matrix {
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Matrix::from_rows(2, &refs).unwrap()
}

fn min_row(rows: &[[f64; 2]], u: [f64; 2]) -> f64 {
    rows.iter().map(|r| r[0] * u[0] + r[1] * u[1]).fold(f64::INFINITY, f64::min)
}

/// Best worst-row value over a square grid on `|u|∞ ≤ LIMIT`.
fn grid_best(rows: &[[f64; 2]], res: f64) -> f64 {
    let n = (2.0 * LIMIT / res).round() as usize;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n {
        for j in 0..=n {
            let u = [-LIMIT + i as f64 * res, -LIMIT + j as f64 * res];
            best = best.max(min_row(rows, u));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lp_agrees_with_grid_search(rows in rows_strategy()) {
        let set = Polytope::centered_box(2, LIMIT);
        let (u, gamma) = max_min_capability(&matrix(&rows), &set).unwrap();
        let res = 0.25;
        let grid = grid_best(&rows, res);
        // the grid can only under-estimate, by at most the Lipschitz constant
        // times half a cell diagonal
        let lip = rows.iter().map(|r| r[0].hypot(r[1])).fold(0.0, f64::max);
        prop_assert!(grid <= gamma + 1e-8);
        prop_assert!(gamma - grid <= lip * res / 2f64.sqrt() + 1e-8);
        prop_assert!((min_row(&rows, [u[0], u[1]]) - gamma).abs() < 1e-8);
        prop_assert!(set.contains(&u, 1e-9).unwrap());
    }

    #[test]
    fn no_sampled_action_beats_the_optimum(
        rows in rows_strategy(),
        samples in prop::collection::vec(prop::array::uniform2(-LIMIT..LIMIT), 1000),
    ) {
        let (_, gamma) = max_min_capability(&matrix(&rows), &Polytope::centered_box(2, LIMIT)).unwrap();
        for u in samples {
            prop_assert!(min_row(&rows, u) <= gamma + 1e-8);
        }
    }

    #[test]
    fn scaling_rows_scales_the_optimum(rows in rows_strategy(), s in 0.1f64..10.0) {
        let set = Polytope::centered_box(2, LIMIT);
        let (_, gamma) = max_min_capability(&matrix(&rows), &set).unwrap();
        let scaled: Vec<[f64; 2]> = rows.iter().map(|r| [s * r[0], s * r[1]]).collect();
        let (u, gamma_s) = max_min_capability(&matrix(&scaled), &set).unwrap();
        prop_assert!((gamma_s - s * gamma).abs() < 1e-8 * (1.0 + gamma_s.abs()));
        // the action returned for s·B is optimal for B too
        prop_assert!((min_row(&rows, [u[0], u[1]]) - gamma).abs() < 1e-8 * (1.0 + gamma.abs()));
    }

    #[test]
    fn capability_vector_adds_the_drift(
        rows in rows_strategy(),
        q in prop::collection::vec(-50.0f64..50.0, 4),
        du in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let k = rows.len();
        let mut stack = CapabilityStack::empty(vec![]);
        stack.b = matrix(&rows);
        stack.d = Matrix::from_rows(2, &vec![[0.5, -1.0].as_slice(); k]).unwrap();
        stack.q = q[..k].to_vec();
        stack.obstacle_ids = (0..k).collect();
        let d_u = Vec2::new(du[0], du[1]);
        let r = capability_request_vector(&stack, &Polytope::centered_box(2, LIMIT), d_u).unwrap();
        let drift = effective_drift(&stack, d_u);
        let bu = stack.b.mul_vec(&r.u_star.to_array()).unwrap();
        for row in 0..k {
            prop_assert!((r.c_bar[row] - drift[row] - bu[row]).abs() <= 1e-12 * (1.0 + r.c_bar[row].abs()));
        }
        prop_assert!((bu.iter().cloned().fold(f64::INFINITY, f64::min) - r.gamma_star).abs() < 1e-8);
    }
}

#[test]
fn opposed_rows_balance_at_zero() {
    let rows = [[1.0, 0.0], [-1.0, 0.0]];
    let (u, gamma) = max_min_capability(&matrix(&rows), &Polytope::centered_box(2, LIMIT)).unwrap();
    assert!(gamma.abs() < 1e-12);
    assert!(u[0].abs() < 1e-12);
}

#[test]
fn single_row_reaches_the_box_corner() {
    let rows = [[1.0, 2.0]];
    let (u, gamma) = max_min_capability(&matrix(&rows), &Polytope::centered_box(2, LIMIT)).unwrap();
    assert!((gamma - 3.0 * LIMIT).abs() < 1e-9);
    assert!((u[0] - LIMIT).abs() < 1e-9 && (u[1] - LIMIT).abs() < 1e-9);
}

#[test]
fn no_rows_is_vacuous() {
    let stack = CapabilityStack::empty(vec![3]);
    let r = capability_request_vector(&stack, &Polytope::centered_box(2, 1.0), Vec2::ZERO).unwrap();
    assert_eq!(r.u_star, Vec2::ZERO);
    assert_eq!(r.gamma_star, 0.0);
    assert!(r.c_bar.is_empty());
}

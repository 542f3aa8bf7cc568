use collabsafe_core::barrier::{capability_stack, h, phi1, phi2, AgentState, ClassKGains, Obstacle};
use collabsafe_core::formation::{coupling_terms, step, FormationGraph, Spring};
use collabsafe_core::Vec2;
use proptest::prelude::*;

const DT: f64 = 1e-3;

fn pair_graph() -> FormationGraph {
    let spring = Spring { a: 0, b: 1, stiffness: 3.0, damping: 1.0, rest_length: 3.0 };
    FormationGraph::new(vec![0.5, 0.5], vec![spring]).unwrap()
}

fn v2(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

/// The barrier chain of agent 0 at `x`: `(h, φ¹, φ², Φ)`, with the neighbor's
/// input and `d(u)` both zero.
fn chain(x: &[AgentState], g: &FormationGraph, drive: Vec2, o: &Obstacle, u_s: Vec2, gains: &ClassKGains) -> [f64; 4] {
    let c = coupling_terms(0, x, g, drive).unwrap();
    let stack = capability_stack(&x[0], &c, std::slice::from_ref(o), gains);
    let big_phi = stack.evaluate(&[0.0, 0.0], Vec2::ZERO, u_s).unwrap()[0];
    [h(&x[0], o), phi1(&x[0], o, gains), phi2(&x[0], c.u_f, o, gains, u_s), big_phi]
}

prop_compose! {
    fn scene()(
        p1 in prop::array::uniform2(-1.0f64..1.0),
        v0 in prop::array::uniform2(-1.0f64..1.0),
        v1 in prop::array::uniform2(-1.0f64..1.0),
        obstacle_dir in 0.0f64..std::f64::consts::TAU,
        obstacle_dist in 1.5f64..4.0,
        drive in prop::array::uniform2(-3.0f64..3.0),
        u_s in prop::array::uniform2(-3.0f64..3.0),
        alphas in prop::array::uniform3(0.5f64..2.0),
    ) -> (Vec<AgentState>, Obstacle, Vec2, Vec2, ClassKGains) {
        let states = vec![
            AgentState::new(Vec2::ZERO, v2(v0)),
            AgentState::new(Vec2::new(-3.0 + p1[0], p1[1]), v2(v1)),
        ];
        let o = Obstacle::new(
            0,
            Vec2::new(obstacle_dist * obstacle_dir.cos(), obstacle_dist * obstacle_dir.sin()),
            1.0,
        ).unwrap();
        let gains = ClassKGains::new(alphas[0], alphas[1], alphas[2]).unwrap();
        (states, o, v2(drive), v2(u_s), gains)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Central differences over two RK4 steps against the analytic chain at
    /// the midpoint state.
    #[test]
    fn chain_matches_finite_differences((x0, o, drive, u_s, gains) in scene()) {
        let g = pair_graph();
        let drives = [drive, Vec2::ZERO];
        let filter = [u_s, Vec2::ZERO];
        let x1 = step(&x0, &g, &drives, &filter, DT).unwrap();
        let x2 = step(&x1, &g, &drives, &filter, DT).unwrap();
        let c0 = chain(&x0, &g, drive, &o, u_s, &gains);
        let c1 = chain(&x1, &g, drive, &o, u_s, &gains);
        let c2 = chain(&x2, &g, drive, &o, u_s, &gains);
        let alpha = [gains.alpha0(), gains.alpha1(), gains.alpha2()];
        for k in 0..3 {
            let numeric = (c2[k] - c0[k]) / (2.0 * DT);
            // φ^{k+1} = φ̇^k + α_k φ^k
            let analytic = c1[k + 1] - alpha[k] * c1[k];
            prop_assert!(
                (numeric - analytic).abs() <= 10.0 * DT,
                "level {}: numeric {} analytic {}", k, numeric, analytic
            );
        }
    }

    #[test]
    fn neighbor_term_is_linear(
        (x0, o, drive, u_s, gains) in scene(),
        u_n in prop::array::uniform2(-5.0f64..5.0),
        du in prop::array::uniform2(-5.0f64..5.0),
    ) {
        let g = pair_graph();
        let c = coupling_terms(0, &x0, &g, drive).unwrap();
        let stack = capability_stack(&x0[0], &c, std::slice::from_ref(&o), &gains);
        let base = stack.evaluate(&[0.0, 0.0], v2(du), u_s).unwrap()[0];
        let once = stack.evaluate(&u_n, v2(du), u_s).unwrap()[0] - base;
        let twice = stack.evaluate(&[2.0 * u_n[0], 2.0 * u_n[1]], v2(du), u_s).unwrap()[0] - base;
        prop_assert!((twice - 2.0 * once).abs() <= 1e-9 * (1.0 + once.abs()));
    }

    #[test]
    fn neighbor_block_matches_single_neighbor_stack((x0, o, drive, _u_s, gains) in scene()) {
        // a triangle: agent 0 sees two neighbors
        let springs = vec![
            Spring { a: 0, b: 1, stiffness: 3.0, damping: 1.0, rest_length: 3.0 },
            Spring { a: 0, b: 2, stiffness: 2.0, damping: 0.5, rest_length: 2.0 },
            Spring { a: 1, b: 2, stiffness: 3.0, damping: 1.0, rest_length: 3.0 },
        ];
        let g = FormationGraph::new(vec![0.5; 3], springs).unwrap();
        let mut x = x0.clone();
        x.push(AgentState::new(Vec2::new(-1.0, 2.5), Vec2::new(0.2, -0.4)));
        let c = coupling_terms(0, &x, &g, drive).unwrap();
        let full = capability_stack(&x[0], &c, std::slice::from_ref(&o), &gains);
        for keep in 0..c.neighbors.len() {
            let mut alone = c.clone();
            alone.neighbors = vec![c.neighbors[keep]];
            let single = capability_stack(&x[0], &alone, std::slice::from_ref(&o), &gains);
            let id = c.neighbors[keep].id;
            prop_assert_eq!(full.block(id).unwrap(), single.block(id).unwrap());
        }
    }

    #[test]
    fn barriers_ignore_rigid_translation(
        (x0, o, _drive, _u_s, gains) in scene(),
        shift in prop::array::uniform2(-100.0f64..100.0),
    ) {
        let s = v2(shift);
        let moved = AgentState::new(x0[0].p + s, x0[0].v);
        let o2 = Obstacle::new(o.id, o.position + s, o.radius).unwrap();
        prop_assert!((h(&moved, &o2) - h(&x0[0], &o)).abs() < 1e-9);
        prop_assert!((phi1(&moved, &o2, &gains) - phi1(&x0[0], &o, &gains)).abs() < 1e-9);
    }
}

#[test]
fn rows_follow_obstacle_ids() {
    let g = pair_graph();
    let x = [
        AgentState::new(Vec2::ZERO, Vec2::ZERO),
        AgentState::new(Vec2::new(-3.0, 0.0), Vec2::ZERO),
    ];
    let c = coupling_terms(0, &x, &g, Vec2::ZERO).unwrap();
    let obstacles = [
        Obstacle::new(9, Vec2::new(0.0, 3.0), 1.0).unwrap(),
        Obstacle::new(4, Vec2::new(3.0, 0.0), 1.0).unwrap(),
    ];
    let s = capability_stack(&x[0], &c, &obstacles, &ClassKGains::default());
    assert_eq!(s.obstacle_ids, vec![4, 9]);
    // row 0 belongs to the disc on +x
    assert_eq!(s.d.row(0), &[6.0, -0.0]);
}

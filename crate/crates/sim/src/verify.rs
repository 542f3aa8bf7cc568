//! Quick self-checks of the numerical core against brute-force oracles.

use std::collections::BTreeSet;

use collabsafe_core::barrier::{
    capability_stack, h, lie_derivatives, phi1, AgentState, CapabilityStack, ClassKGains, Obstacle,
    CONTROL_DIM,
};
use collabsafe_core::capability::max_min_capability;
use collabsafe_core::formation::{coupling_terms, step, FormationGraph, Spring};
use collabsafe_core::protocol::{collaborative_safety, split_deficit, AgentInput, EngineConfig, ProtocolStatus};
use collabsafe_core::{closest_points, Matrix, Polytope, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Check {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn membership() -> std::result::Result<(), String> {
    let b = Polytope::centered_box(2, 20.0);
    let s = |e: collabsafe_core::Error| e.to_string();
    ensure(b.contains(&[0.0, 0.0], 1e-9).map_err(s)?, || "origin not in box".into())?;
    ensure(b.contains(&[20.0, 20.0], 0.0).map_err(s)?, || "corner not in box".into())?;
    ensure(!b.contains(&[21.0, 0.0], 1e-9).map_err(s)?, || "outside point in box".into())?;
    let contradictory = Polytope::halfspace(&[1.0], -1.0).intersect(&Polytope::halfspace(&[-1.0], -1.0)).map_err(s)?;
    ensure(contradictory.is_empty(1e-9).map_err(s)?, || "x <= -1 and x >= 1 reported nonempty".into())
}

fn boxes_distance() -> std::result::Result<(), String> {
    let p1 = Polytope::axis_box(&[0.0, 0.0], &[1.0, 1.0]);
    let p2 = Polytope::axis_box(&[2.0, 2.0], &[3.0, 3.0]);
    let cp = closest_points(&p1, &p2, 1e-9).map_err(|e| e.to_string())?;
    ensure((cp.distance - 2f64.sqrt()).abs() < 1e-7, || format!("distance {}", cp.distance))
}

fn capability_grid(rng: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    let set = Polytope::centered_box(2, 20.0);
    let res = 0.5;
    let steps = (40.0 / res) as usize;
    for trial in 0..25 {
        let rows = rng.gen_range(1..=4);
        let mut b = Matrix::zeros(0, 2);
        for _ in 0..rows {
            b.push_row(&[rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)]).unwrap();
        }
        let (_, gamma) = max_min_capability(&b, &set).map_err(|e| e.to_string())?;
        let mut best = f64::NEG_INFINITY;
        for ix in 0..=steps {
            for iy in 0..=steps {
                let u = [-20.0 + ix as f64 * res, -20.0 + iy as f64 * res];
                let m = (0..rows)
                    .map(|k| b.row(k)[0] * u[0] + b.row(k)[1] * u[1])
                    .fold(f64::INFINITY, f64::min);
                best = best.max(m);
            }
        }
        let lip = (0..rows).map(|k| b.row(k)[0].abs() + b.row(k)[1].abs()).fold(0.0, f64::max);
        ensure(best <= gamma + 1e-8 && gamma - best <= lip * res / 2.0 + 1e-8, || {
            format!("instance {trial}: lp {gamma} grid {best}")
        })?;
    }
    Ok(())
}

fn chain(rng: &mut ChaCha8Rng) -> std::result::Result<(), String> {
    let gains = ClassKGains::default();
    let graph = FormationGraph::new(
        vec![0.5, 0.5],
        vec![Spring {
            a: 0,
            b: 1,
            stiffness: 3.0,
            damping: 1.0,
            rest_length: 3.0,
        }],
    )
    .map_err(|e| e.to_string())?;
    let dt = 1e-4;
    for trial in 0..10 {
        let o = Obstacle::new(0, Vec2::new(rng.gen_range(3.0..6.0), rng.gen_range(-2.0..2.0)), 1.0)
            .map_err(|e| e.to_string())?;
        let states = vec![
            AgentState::new(Vec2::new(0.0, 0.0), Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
            AgentState::new(Vec2::new(-2.5, 0.7), Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
        ];
        let u_s = Vec2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let drives = [Vec2::ZERO; 2];
        let filter = [u_s, Vec2::ZERO];
        let next = step(&states, &graph, &drives, &filter, dt).map_err(|e| e.to_string())?;
        let u_f = coupling_terms(0, &states, &graph, Vec2::ZERO).map_err(|e| e.to_string())?.u_f;
        let dh = (h(&next[0], &o) - h(&states[0], &o)) / dt;
        let expect = phi1(&states[0], &o, &gains) - gains.alpha0() * h(&states[0], &o);
        ensure((dh - expect).abs() < 1e-2 * (1.0 + expect.abs()), || {
            format!("trial {trial}: dh/dt {dh} vs {expect}")
        })?;
        let lie = lie_derivatives(&states[0], u_f, &o, &gains);
        let dphi = (phi1(&next[0], &o, &gains) - phi1(&states[0], &o, &gains)) / dt;
        let expect = lie.lf - lie.lg.dot(u_s);
        ensure((dphi - expect).abs() < 1e-2 * (1.0 + expect.abs()), || {
            format!("trial {trial}: dphi1/dt {dphi} vs {expect}")
        })?;
    }
    Ok(())
}

fn deficit_split() -> std::result::Result<(), String> {
    let even = split_deficit(&[-6.0], &[1, 2, 3], &BTreeSet::new());
    ensure(even == vec![vec![-2.0]; 3], || format!("{even:?}"))?;
    let constrained: BTreeSet<usize> = [2].into_iter().collect();
    let skip = split_deficit(&[-6.0], &[1, 2, 3], &constrained);
    ensure(skip == vec![vec![-3.0], vec![0.0], vec![-3.0]], || format!("{skip:?}"))
}

fn one_row(neighbors: Vec<usize>, a: [f64; 2], q: f64) -> CapabilityStack {
    let mut s = CapabilityStack::empty(neighbors);
    s.a = Matrix::from_rows(CONTROL_DIM, &[&a]).unwrap();
    s.b = Matrix::zeros(1, CONTROL_DIM);
    s.d = Matrix::zeros(1, CONTROL_DIM);
    s.q = vec![q];
    s.obstacle_ids = vec![0];
    s
}

/// Two leaves pull their shared parent in opposite diagonal directions
/// harder than its unit box allows.
pub fn opposing_leaves() -> Vec<AgentInput> {
    let agent = |id, stack| AgentInput {
        id,
        stack,
        d_u: Vec2::ZERO,
        control_set: Polytope::centered_box(2, 1.0),
    };
    vec![
        agent(0, CapabilityStack::empty(vec![1, 2])),
        agent(1, one_row(vec![0], [1.0, 1.0], -1.5)),
        agent(2, one_row(vec![0], [-1.0, 1.0], -1.5)),
    ]
}

fn terminal() -> std::result::Result<(), String> {
    let out = collaborative_safety(&opposing_leaves(), &EngineConfig::default()).map_err(|e| e.to_string())?;
    ensure(out.status == ProtocolStatus::TerminallyInfeasible && out.tau_final <= 3, || {
        format!("status {:?} at tau {}", out.status, out.tau_final)
    })
}

fn stack_rows() -> std::result::Result<(), String> {
    let x = AgentState::new(Vec2::new(0.0, 0.0), Vec2::ZERO);
    let states = [x, AgentState::new(Vec2::new(3.0, 0.0), Vec2::ZERO)];
    let graph = FormationGraph::new(
        vec![0.5, 0.5],
        vec![Spring { a: 0, b: 1, stiffness: 3.0, damping: 1.0, rest_length: 3.0 }],
    )
    .map_err(|e| e.to_string())?;
    let c = coupling_terms(0, &states, &graph, Vec2::ZERO).map_err(|e| e.to_string())?;
    let obstacles = [
        Obstacle::new(7, Vec2::new(0.0, 4.0), 1.0).unwrap(),
        Obstacle::new(2, Vec2::new(0.0, -4.0), 1.0).unwrap(),
    ];
    let s = capability_stack(&states[0], &c, &obstacles, &ClassKGains::default());
    ensure(s.obstacle_ids == vec![2, 7], || format!("row order {:?}", s.obstacle_ids))
}

pub fn run_checks(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        Check { name: "polytope membership and emptiness", outcome: membership() },
        Check { name: "closest points of two boxes", outcome: boxes_distance() },
        Check { name: "max-min capability against grid search", outcome: capability_grid(&mut rng) },
        Check { name: "barrier chain finite differences", outcome: chain(&mut rng) },
        Check { name: "capability rows sorted by obstacle id", outcome: stack_rows() },
        Check { name: "uniform deficit split", outcome: deficit_split() },
        Check { name: "terminal infeasibility on opposing leaves", outcome: terminal() },
    ]
}

//! The per-step loop: protocol, filter, integration.

use collabsafe_core::barrier::{capability_stack, h, phi1, Obstacle};
use collabsafe_core::formation::{
    advance_obstacles, barrier_rows, control_set, coupling_terms, safety_filter, step,
};
use collabsafe_core::protocol::{collaborative_safety, AgentInput, Diagnostic, EngineConfig};
use collabsafe_core::Vec2;
use log::{debug, warn};

use crate::error::{Result, SimError};
use crate::scenario::Scenario;
use crate::report::SAFETY_TOL;
use crate::trace::{AgentRecord, BarrierRecord, StepEvent, StepRecord, TraceLog};

fn solver(step: usize) -> impl Fn(collabsafe_core::Error) -> SimError {
    move |source| SimError::Solver { step, source }
}

fn active<'a>(p: Vec2, obstacles: &'a [Obstacle], radius: f64) -> Vec<Obstacle> {
    obstacles
        .iter()
        .filter(|o| (p - o.position).norm() <= radius)
        .copied()
        .collect()
}

pub fn run(scenario: &Scenario) -> Result<TraceLog> {
    run_with(scenario, &EngineConfig::default())
}

pub fn run_with(scenario: &Scenario, engine: &EngineConfig) -> Result<TraceLog> {
    let world = scenario.build()?;
    let graph = world.graph;
    let mut states = world.states;
    let mut obstacles = world.obstacles;
    let drives = world.drives;
    let n = states.len();
    let dt = scenario.dt;
    let gains = scenario.gains;
    let mut u_prev = vec![Vec2::ZERO; n];
    let mut u_prev2 = vec![Vec2::ZERO; n];
    let mut log = TraceLog {
        scenario: scenario.clone(),
        steps: Vec::with_capacity(world.steps),
    };

    for k in 0..world.steps {
        let t = k as f64 * dt;
        let mut inputs = Vec::with_capacity(n);
        let mut nominal = Vec::with_capacity(n);
        let mut controls = Vec::with_capacity(n);
        let mut actives = Vec::with_capacity(n);
        let mut events = Vec::new();
        for i in 0..n {
            let coupling = coupling_terms(i, &states, &graph, drives[i]).map_err(solver(k))?;
            let (control, saturated) = control_set(coupling.u_f, scenario.control_limit);
            if saturated {
                events.push(StepEvent::Saturated { agent: i });
            }
            let near = active(states[i].p, &obstacles, scenario.sensing_radius);
            let mut stack = capability_stack(&states[i], &coupling, &near, &gains);
            stack.scale_neighbor_terms(world.tau_interval);
            let d_u = if k >= 2 {
                (u_prev[i] - u_prev2[i]) * (1.0 / dt)
            } else {
                Vec2::ZERO
            };
            inputs.push(AgentInput {
                id: i,
                stack,
                d_u,
                control_set: control.clone(),
            });
            nominal.push(coupling.u_f);
            controls.push(control);
            actives.push(near);
        }

        let outcome = collaborative_safety(&inputs, engine).map_err(solver(k))?;
        for d in &outcome.diagnostics {
            match d {
                Diagnostic::ClosestPointFallback { agent, fallback, .. } => {
                    debug!("step {k}: agent {agent} closest point fallback {fallback:?}");
                    events.push(StepEvent::ClosestPointFallback { agent: *agent });
                }
                Diagnostic::NegotiationCapHit { tau } => {
                    warn!("step {k}: negotiation cap hit in collaboration round {tau}");
                    events.push(StepEvent::NegotiationCap);
                }
            }
        }

        let mut filtered = Vec::with_capacity(n);
        for i in 0..n {
            let rows = barrier_rows(&states[i], nominal[i], &actives[i], &gains);
            let f = safety_filter(&rows, outcome.u_bar(i), &controls[i]).map_err(solver(k))?;
            for &o in &f.dropped {
                warn!("step {k}: agent {i} dropped barrier row for obstacle {o}");
                events.push(StepEvent::DroppedRow { agent: i, obstacle: o });
            }
            if f.relaxed_set {
                warn!("step {k}: agent {i} ignored its negotiated set");
                events.push(StepEvent::RelaxedSet { agent: i });
            }
            filtered.push(f.u_s);
        }

        let agents = (0..n)
            .map(|i| AgentRecord {
                p: states[i].p,
                v: states[i].v,
                u_f: nominal[i],
                u_s: filtered[i],
            })
            .collect();
        let mut barriers = Vec::with_capacity(n * obstacles.len());
        for (i, x) in states.iter().enumerate() {
            for o in &obstacles {
                let hv = h(x, o);
                if hv < SAFETY_TOL {
                    events.push(StepEvent::NegativeBarrier { agent: i, obstacle: o.id });
                }
                barriers.push(BarrierRecord {
                    agent: i,
                    obstacle: o.id,
                    h: hv,
                    phi1: phi1(x, o, &gains),
                });
            }
        }
        log.steps.push(StepRecord {
            step: k,
            t,
            tau: outcome.tau_final,
            upsilon: outcome.upsilon_total,
            status: outcome.status,
            agents,
            barriers,
            messages: outcome.trace,
            events,
        });

        states = step(&states, &graph, &drives, &filtered, dt).map_err(solver(k))?;
        advance_obstacles(&mut obstacles, dt);
        u_prev2 = std::mem::replace(&mut u_prev, filtered);
    }
    Ok(log)
}

//! Lockstep driver for collaboration and negotiation rounds.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::barrier::{CapabilityStack, CONTROL_DIM};
use crate::capability::capability_request_vector;
use crate::error::{Error, Result};
use crate::linalg::{max_abs, Matrix, Vec2};
use crate::polytope::Polytope;

use super::closest::Fallback;
use super::coordinate::{coordinate, split_deficit, NeighborRequest};
use super::ledger::NegotiationLedger;
use super::messages::{AdjustmentMsg, Envelope, Mailbox, RequestMsg, TraceRecord, Transport};

/// Relative slack on the final deficit check.
pub const CONVERGENCE_TOL: f64 = 1e-9;

/// Everything one agent brings to a protocol run.
#[derive(Debug, Clone)]
pub struct AgentInput {
    /// Must equal the agent's index in the input slice.
    pub id: usize,
    /// `A` already expressed on acceleration inputs; `neighbor_ids` is the neighbor set.
    pub stack: CapabilityStack,
    pub d_u: Vec2,
    pub control_set: Polytope,
}

impl AgentInput {
    pub fn neighbors(&self) -> &[usize] {
        &self.stack.neighbor_ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EngineConfig {
    /// Negotiation rounds per collaboration round; default `2n`.
    pub negotiation_cap: Option<usize>,
    /// Collaboration rounds; default `max(2·max_degree, 16)`.
    pub collaboration_cap: Option<usize>,
    /// Skip the tree-topology terminal infeasibility test.
    pub no_terminal_detection: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolStatus {
    Converged,
    TerminallyInfeasible,
    RoundCapExceeded,
}

impl ProtocolStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolStatus::Converged => "converged",
            ProtocolStatus::TerminallyInfeasible => "terminally_infeasible",
            ProtocolStatus::RoundCapExceeded => "round_cap_exceeded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    ClosestPointFallback {
        tau: usize,
        upsilon: usize,
        agent: usize,
        fallback: Fallback,
    },
    NegotiationCapHit {
        tau: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub u_bar: Polytope,
    pub u_star: Vec2,
    pub ledger: NegotiationLedger,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub status: ProtocolStatus,
    pub agents: Vec<AgentOutcome>,
    pub tau_final: usize,
    pub upsilon_total: usize,
    /// Collaboration-round limit used for terminal detection, if any.
    pub tree_bound: Option<usize>,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ProtocolOutcome {
    pub fn u_bar(&self, agent: usize) -> &Polytope {
        &self.agents[agent].u_bar
    }
}

/// Runs the protocol with the in-process mailbox.
pub fn collaborative_safety(agents: &[AgentInput], config: &EngineConfig) -> Result<ProtocolOutcome> {
    let mut mailbox = Mailbox::new(agents.len());
    run_synchronous_engine(agents, config, &mut mailbox)
}

fn validate(agents: &[AgentInput]) -> Result<()> {
    for (i, a) in agents.iter().enumerate() {
        if a.id != i {
            return Err(Error::InvalidParameter("agent ids must match their index"));
        }
        if a.control_set.dim() != CONTROL_DIM {
            return Err(Error::DimensionMismatch {
                expected: CONTROL_DIM,
                found: a.control_set.dim(),
            });
        }
        let width = CONTROL_DIM * a.neighbors().len();
        let k = a.stack.rows();
        if a.stack.a.rows() != k || a.stack.a.cols() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: a.stack.a.cols(),
            });
        }
        if a.stack.b.rows() != k || a.stack.d.rows() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: a.stack.b.rows(),
            });
        }
        for w in a.neighbors().windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidParameter("neighbor ids must be strictly ascending"));
            }
        }
        for &j in a.neighbors() {
            if j == i || j >= agents.len() || !agents[j].neighbors().contains(&i) {
                return Err(Error::InvalidParameter("neighbor relation must be symmetric"));
            }
        }
    }
    Ok(())
}

fn is_tree(agents: &[AgentInput]) -> bool {
    let n = agents.len();
    if n == 0 {
        return false;
    }
    let edges: usize = agents.iter().map(|a| a.neighbors().len()).sum::<usize>() / 2;
    if edges + 1 != n {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in agents[i].neighbors() {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

fn has_negative(v: &[f64]) -> bool {
    v.iter().any(|x| *x < 0.0)
}

fn has_positive(v: &[f64]) -> bool {
    v.iter().any(|x| *x > 0.0)
}

struct Run<'a, T: Transport> {
    agents: &'a [AgentInput],
    transport: &'a mut T,
    ledgers: Vec<NegotiationLedger>,
    u_star: Vec<Vec2>,
    trace: Vec<TraceRecord>,
    diagnostics: Vec<Diagnostic>,
    upsilon_total: usize,
    negotiation_cap: usize,
}

impl<T: Transport> Run<'_, T> {
    fn rows(&self, i: usize) -> usize {
        self.agents[i].stack.rows()
    }

    fn emit(&mut self, tau: usize, upsilon: usize, env: Envelope) {
        self.trace.push(TraceRecord::of(tau, upsilon, &env));
        self.transport.send(env);
    }

    fn capabilities(&mut self) -> Result<()> {
        for (i, a) in self.agents.iter().enumerate() {
            let r = capability_request_vector(&a.stack, &self.ledgers[i].u_bar, a.d_u)?;
            self.ledgers[i].c_bar = r.c_bar;
            self.u_star[i] = r.u_star;
        }
        Ok(())
    }

    /// One collaboration round. Returns the receivers of negative requests
    /// in its first negotiation round.
    fn collaborate(&mut self, tau: usize) -> Result<Vec<usize>> {
        let n = self.agents.len();
        for l in self.ledgers.iter_mut() {
            l.tau = tau;
            l.upsilon = 0;
            l.constrained.clear();
        }
        let mut first_receivers = Vec::new();
        let mut rounds = 0;
        loop {
            rounds += 1;
            if rounds > self.negotiation_cap {
                self.diagnostics.push(Diagnostic::NegotiationCapHit { tau });
                break;
            }
            self.upsilon_total += 1;

            // Requests.
            let mut splits: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
            for i in 0..n {
                self.ledgers[i].upsilon += 1;
                let upsilon = self.ledgers[i].upsilon;
                let nbrs = self.agents[i].neighbors();
                let split = if self.rows(i) == 0 {
                    vec![Vec::new(); nbrs.len()]
                } else {
                    split_deficit(&self.ledgers[i].deficit(), nbrs, &self.ledgers[i].constrained)
                };
                for (pos, &j) in nbrs.iter().enumerate() {
                    if split[pos].iter().any(|&d| d != 0.0) {
                        let a_block = self.agents[i]
                            .stack
                            .block(j)
                            .unwrap_or_else(|| Matrix::zeros(0, CONTROL_DIM));
                        self.emit(
                            tau,
                            upsilon,
                            Envelope::Request(RequestMsg {
                                from: i,
                                to: j,
                                delta: split[pos].clone(),
                                a_block,
                            }),
                        );
                    }
                }
                splits.push(split);
            }

            // Coordination.
            let mut sent_eps = vec![false; n];
            let mut outgoing = Vec::new();
            for i in 0..n {
                let upsilon = self.ledgers[i].upsilon;
                let mut received: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                let mut requested = false;
                for env in self.transport.receive(i) {
                    if let Envelope::Request(m) = env {
                        requested |= has_negative(&m.delta);
                        self.ledgers[i].a_in.insert(m.from, m.a_block);
                        received.insert(m.from, m.delta);
                    }
                }
                if rounds == 1 && tau == 1 && requested {
                    first_receivers.push(i);
                }
                let nbrs: Vec<usize> = self
                    .agents[i]
                    .neighbors()
                    .iter()
                    .copied()
                    .filter(|&j| self.rows(j) > 0)
                    .collect();
                let deltas: Vec<Vec<f64>> = nbrs
                    .iter()
                    .map(|&j| received.remove(&j).unwrap_or_else(|| vec![0.0; self.rows(j)]))
                    .collect();
                let ledger = &self.ledgers[i];
                let requests: Vec<NeighborRequest<'_>> = nbrs
                    .iter()
                    .zip(&deltas)
                    .map(|(&j, delta)| NeighborRequest {
                        neighbor: j,
                        a_block: &ledger.a_in[&j],
                        c_bar: &ledger.c_bar_in[&j],
                        delta,
                        delta_prev: ledger.delta_in_prev.get(&j).map(|d| d.as_slice()),
                    })
                    .collect();
                let out = coordinate(&self.agents[i].control_set, ledger.u_bar_prev, &requests)?;
                drop(requests);

                let ledger = &mut self.ledgers[i];
                if out.compromise.is_none() {
                    ledger.last_feasible = out.u_bar.clone();
                }
                ledger.u_bar = out.u_bar;
                if let Some(cp) = &out.compromise {
                    ledger.u_bar_prev = Some(cp.point);
                    if let Some(fallback) = cp.fallback {
                        self.diagnostics.push(Diagnostic::ClosestPointFallback {
                            tau,
                            upsilon,
                            agent: i,
                            fallback,
                        });
                    }
                }
                for (k, &j) in nbrs.iter().enumerate() {
                    let ledger = &mut self.ledgers[i];
                    ledger.delta_in.insert(j, deltas[k].clone());
                    ledger.delta_in_prev.insert(j, deltas[k].clone());
                    ledger.c_bar_in.insert(j, out.c_bar[k].clone());
                    if has_positive(&out.epsilon[k]) {
                        sent_eps[i] = true;
                        outgoing.push((
                            upsilon,
                            Envelope::Adjustment(AdjustmentMsg {
                                from: i,
                                to: j,
                                epsilon: out.epsilon[k].clone(),
                            }),
                        ));
                    }
                }
            }
            // Nobody reads adjustments until every agent has coordinated.
            for (upsilon, env) in outgoing {
                self.emit(tau, upsilon, env);
            }

            // Adjustments.
            let mut done = true;
            for i in 0..n {
                let mut eps: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
                for env in self.transport.receive(i) {
                    if let Envelope::Adjustment(m) = env {
                        eps.insert(m.from, m.epsilon);
                    }
                }
                let got_eps = !eps.is_empty();
                let nbrs = self.agents[i].neighbors();
                let ledger = &mut self.ledgers[i];
                for (pos, &j) in nbrs.iter().enumerate() {
                    let e = eps.get(&j);
                    let c = ledger.c_bar_out.get_mut(&j).expect("ledger covers every neighbor");
                    for (k, ck) in c.iter_mut().enumerate() {
                        *ck += splits[i][pos][k] + e.map(|e| e[k]).unwrap_or(0.0);
                    }
                    if e.map(|e| has_positive(e)).unwrap_or(false) {
                        ledger.constrained.insert(j);
                    }
                }
                let all_constrained = ledger.constrained.len() == nbrs.len();
                if !(all_constrained || (!got_eps && !sent_eps[i])) {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        Ok(first_receivers)
    }

    fn converged(&self) -> bool {
        self.ledgers.iter().all(|l| {
            let scale = 1.0 + max_abs(&l.c_bar);
            l.deficit().iter().all(|d| *d >= -CONVERGENCE_TOL * scale)
        })
    }
}

/// Repeats capability evaluation and collaboration in lockstep until every
/// agent's deficit clears or a round limit fires.
pub fn run_synchronous_engine<T: Transport>(
    agents: &[AgentInput],
    config: &EngineConfig,
    transport: &mut T,
) -> Result<ProtocolOutcome> {
    validate(agents)?;
    let n = agents.len();
    let max_degree = agents.iter().map(|a| a.neighbors().len()).max().unwrap_or(0);
    let negotiation_cap = config.negotiation_cap.unwrap_or(2 * n).max(1);
    let collaboration_cap = config
        .collaboration_cap
        .unwrap_or_else(|| (2 * max_degree).max(16));
    let tree_mode =
        !config.no_terminal_detection && is_tree(agents) && agents.iter().all(|a| a.stack.rows() <= 1);

    let mut ledgers = Vec::with_capacity(n);
    for a in agents {
        let mut l = NegotiationLedger::new(
            a.stack.rows(),
            a.neighbors(),
            |j| agents[j].stack.rows(),
            a.control_set.clone(),
        );
        for &j in a.neighbors() {
            if let Some(block) = agents[j].stack.block(a.id) {
                l.a_in.insert(j, block);
            }
        }
        ledgers.push(l);
    }
    let mut run = Run {
        agents,
        transport,
        ledgers,
        u_star: vec![Vec2::ZERO; n],
        trace: Vec::new(),
        diagnostics: Vec::new(),
        upsilon_total: 0,
        negotiation_cap,
    };

    let mut tree_bound = None;
    let mut tau = 0;
    let status = loop {
        tau += 1;
        if let Some(bound) = tree_bound {
            if tau > bound {
                break ProtocolStatus::TerminallyInfeasible;
            }
        }
        if tau > collaboration_cap {
            break ProtocolStatus::RoundCapExceeded;
        }
        run.capabilities()?;
        let receivers = run.collaborate(tau)?;
        if tau == 1 && tree_mode {
            tree_bound = receivers.iter().map(|&i| agents[i].neighbors().len()).max();
        }
        if run.converged() {
            break ProtocolStatus::Converged;
        }
    };

    let Run {
        ledgers,
        u_star,
        trace,
        diagnostics,
        upsilon_total,
        ..
    } = run;
    let agents_out = ledgers
        .into_iter()
        .zip(u_star)
        .map(|(ledger, u_star)| AgentOutcome {
            u_bar: if status == ProtocolStatus::RoundCapExceeded {
                ledger.last_feasible.clone()
            } else {
                ledger.u_bar.clone()
            },
            u_star,
            ledger,
        })
        .collect();
    Ok(ProtocolOutcome {
        status,
        agents: agents_out,
        tau_final: tau,
        upsilon_total,
        tree_bound,
        trace,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(neighbors: Vec<usize>, rows: &[(&[f64], [f64; 2], f64)]) -> CapabilityStack {
        let width = CONTROL_DIM * neighbors.len();
        let mut s = CapabilityStack::empty(neighbors);
        s.a = Matrix::zeros(0, width);
        for (a, b, q) in rows {
            s.a.push_row(a).unwrap();
            s.b.push_row(b).unwrap();
            s.d.push_row(&[0.0, 0.0]).unwrap();
            s.q.push(*q);
            s.obstacle_ids.push(s.q.len() - 1);
        }
        s
    }

    fn agent(id: usize, stack: CapabilityStack) -> AgentInput {
        AgentInput {
            id,
            stack,
            d_u: Vec2::ZERO,
            control_set: Polytope::centered_box(2, 1.0),
        }
    }

    #[test]
    fn quiet_network_converges_at_once() {
        let agents = [agent(0, stack(vec![1], &[])), agent(1, stack(vec![0], &[]))];
        let out = collaborative_safety(&agents, &EngineConfig::default()).unwrap();
        assert_eq!(out.status, ProtocolStatus::Converged);
        assert_eq!(out.tau_final, 1);
        assert_eq!(out.u_bar(0), &Polytope::centered_box(2, 1.0));
        assert!(out.trace.is_empty());
    }

    #[test]
    fn opposing_leaves_are_terminally_infeasible() {
        let agents = [
            agent(0, stack(vec![1, 2], &[])),
            agent(1, stack(vec![0], &[(&[1.0, 1.0], [0.0, 0.0], -1.5)])),
            agent(2, stack(vec![0], &[(&[-1.0, 1.0], [0.0, 0.0], -1.5)])),
        ];
        let out = collaborative_safety(&agents, &EngineConfig::default()).unwrap();
        assert_eq!(out.status, ProtocolStatus::TerminallyInfeasible);
        assert_eq!(out.tree_bound, Some(2));
        assert_eq!(out.tau_final, 3);
        let p = out.u_bar(0);
        assert!(p.contains(&[0.0, 1.0], 1e-7).unwrap());
        assert!(!p.contains(&[0.1, 1.0], 1e-7).unwrap());
    }

    #[test]
    fn helpful_neighbor_resolves_the_deficit() {
        let agents = [
            agent(0, stack(vec![1], &[(&[1.0, 0.0], [0.0, 0.0], -0.5)])),
            agent(1, stack(vec![0], &[])),
        ];
        let out = collaborative_safety(&agents, &EngineConfig::default()).unwrap();
        assert_eq!(out.status, ProtocolStatus::Converged);
        assert_eq!(out.tau_final, 1);
        assert!(out.u_bar(1).contains(&[0.5, 0.0], 1e-9).unwrap());
        assert!(!out.u_bar(1).contains(&[0.4, 0.0], 1e-9).unwrap());
        assert_eq!(out.agents[0].ledger.c_bar_out[&1], vec![-0.5]);
        assert_eq!(out.agents[1].ledger.c_bar_in[&0], vec![-0.5]);
    }

    #[test]
    fn asymmetric_neighbors_are_rejected() {
        let agents = [agent(0, stack(vec![1], &[])), agent(1, stack(vec![], &[]))];
        assert!(matches!(
            collaborative_safety(&agents, &EngineConfig::default()),
            Err(Error::InvalidParameter(_))
        ));
    }
}

//! Run summary metrics.

use std::fmt;

use collabsafe_core::protocol::ProtocolStatus;
use serde::Serialize;

use crate::scenario::Topology;
use crate::trace::{StepEvent, TraceLog};

/// Barrier values below this count as a safety violation.
pub const SAFETY_TOL: f64 = -1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub steps: usize,
    /// `+∞` when no agent-obstacle pair was ever recorded.
    pub min_h: f64,
    pub negative_h_steps: usize,
    pub max_tau: usize,
    pub mean_tau: f64,
    pub converged_steps: usize,
    pub round_cap_steps: usize,
    pub terminally_infeasible_steps: usize,
    pub filter_relaxations: usize,
    pub per_agent_max_us: Vec<f64>,
    /// Largest neighbor count in the graph.
    pub max_degree: usize,
    /// Tree scenarios only: every step used at most `max_degree` rounds.
    pub theorem2_bound: Option<bool>,
}

impl Summary {
    pub fn of(log: &TraceLog) -> Self {
        let s = &log.scenario;
        let n = s.agents.len();
        let mut degree = vec![0usize; n];
        for e in &s.edges {
            let (a, b) = match *e {
                crate::scenario::EdgeSpec::Pair([a, b]) => (a, b),
                crate::scenario::EdgeSpec::Detailed { a, b, .. } => (a, b),
            };
            degree[a] += 1;
            degree[b] += 1;
        }
        let max_degree = degree.into_iter().max().unwrap_or(0);

        let mut min_h = f64::INFINITY;
        let mut negative_h_steps = 0;
        let mut per_agent_max_us = vec![0.0f64; n];
        let count = |status| log.steps.iter().filter(|r| r.status == status).count();
        let converged_steps = count(ProtocolStatus::Converged);
        let round_cap_steps = count(ProtocolStatus::RoundCapExceeded);
        let terminally_infeasible_steps = count(ProtocolStatus::TerminallyInfeasible);
        let mut filter_relaxations = 0;
        for r in &log.steps {
            let step_min = r.barriers.iter().map(|b| b.h).fold(f64::INFINITY, f64::min);
            min_h = min_h.min(step_min);
            if step_min < SAFETY_TOL {
                negative_h_steps += 1;
            }
            for (i, a) in r.agents.iter().enumerate() {
                per_agent_max_us[i] = per_agent_max_us[i].max(a.u_s.norm());
            }
            filter_relaxations += r
                .events
                .iter()
                .filter(|e| matches!(e, StepEvent::RelaxedSet { .. } | StepEvent::DroppedRow { .. }))
                .count();
        }
        let max_tau = log.steps.iter().map(|r| r.tau).max().unwrap_or(0);
        let mean_tau = if log.steps.is_empty() {
            0.0
        } else {
            log.steps.iter().map(|r| r.tau as f64).sum::<f64>() / log.steps.len() as f64
        };
        let theorem2_bound = (s.topology == Topology::Tree).then(|| max_tau <= max_degree);
        Summary {
            scenario: s.name.clone(),
            steps: log.steps.len(),
            min_h,
            negative_h_steps,
            max_tau,
            mean_tau,
            converged_steps,
            round_cap_steps,
            terminally_infeasible_steps,
            filter_relaxations,
            per_agent_max_us,
            max_degree,
            theorem2_bound,
        }
    }

    pub fn is_safe(&self) -> bool {
        !(self.min_h < SAFETY_TOL)
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario: {}", self.scenario)?;
        writeln!(f, "steps: {}", self.steps)?;
        writeln!(f, "min_h: {}", self.min_h)?;
        writeln!(f, "negative_h_steps: {}", self.negative_h_steps)?;
        writeln!(f, "max_tau: {}", self.max_tau)?;
        writeln!(f, "mean_tau: {:.4}", self.mean_tau)?;
        writeln!(f, "converged_steps: {}", self.converged_steps)?;
        writeln!(f, "round_cap_steps: {}", self.round_cap_steps)?;
        writeln!(f, "terminally_infeasible_steps: {}", self.terminally_infeasible_steps)?;
        writeln!(f, "filter_relaxations: {}", self.filter_relaxations)?;
        let us: Vec<String> = self.per_agent_max_us.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(f, "per_agent_max_us: [{}]", us.join(", "))?;
        match self.theorem2_bound {
            Some(true) => writeln!(f, "theorem2_bound: PASS (max_tau {} <= {})", self.max_tau, self.max_degree),
            Some(false) => writeln!(f, "theorem2_bound: FAIL (max_tau {} > {})", self.max_tau, self.max_degree),
            None => writeln!(f, "theorem2_bound: n/a"),
        }
    }
}

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// Capability allotment asked of a neighbor, with the sender's coefficient
/// block for the receiver's control.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestMsg {
    pub from: usize,
    pub to: usize,
    pub delta: Vec<f64>,
    pub a_block: Matrix,
}

/// Shortfall the responder could not absorb.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentMsg {
    pub from: usize,
    pub to: usize,
    pub epsilon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Request(RequestMsg),
    Adjustment(AdjustmentMsg),
}

impl Envelope {
    pub fn from(&self) -> usize {
        match self {
            Envelope::Request(m) => m.from,
            Envelope::Adjustment(m) => m.from,
        }
    }

    pub fn to(&self) -> usize {
        match self {
            Envelope::Request(m) => m.to,
            Envelope::Adjustment(m) => m.to,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Request,
    Adjustment,
}

/// One logged message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tau: usize,
    pub upsilon: usize,
    pub from: usize,
    pub to: usize,
    pub kind: MessageKind,
    pub payload: Vec<f64>,
}

impl TraceRecord {
    pub fn of(tau: usize, upsilon: usize, env: &Envelope) -> Self {
        let (kind, payload) = match env {
            Envelope::Request(m) => (MessageKind::Request, m.delta.clone()),
            Envelope::Adjustment(m) => (MessageKind::Adjustment, m.epsilon.clone()),
        };
        Self {
            tau,
            upsilon,
            from: env.from(),
            to: env.to(),
            kind,
            payload,
        }
    }
}

/// Message transport between agents.
///
/// The engine sends a whole half-round before any agent receives, so
/// `receive` acts as the synchronization barrier.
pub trait Transport {
    fn send(&mut self, msg: Envelope);
    /// Everything queued for `agent`, in ascending sender order.
    fn receive(&mut self, agent: usize) -> Vec<Envelope>;
}

/// In-process transport with one queue per agent.
#[derive(Debug, Default)]
pub struct Mailbox {
    queues: Vec<VecDeque<Envelope>>,
}

impl Mailbox {
    pub fn new(agents: usize) -> Self {
        Self {
            queues: (0..agents).map(|_| VecDeque::new()).collect(),
        }
    }
}

impl Transport for Mailbox {
    fn send(&mut self, msg: Envelope) {
        let to = msg.to();
        if to >= self.queues.len() {
            self.queues.resize_with(to + 1, VecDeque::new);
        }
        self.queues[to].push_back(msg);
    }

    fn receive(&mut self, agent: usize) -> Vec<Envelope> {
        let Some(q) = self.queues.get_mut(agent) else {
            return Vec::new();
        };
        let mut out: Vec<Envelope> = q.drain(..).collect();
        out.sort_by_key(|m| m.from());
        out
    }
}

//! Request/adjustment negotiation between coupled agents.
//!
//! Each collaboration round recomputes every agent's capability, then runs
//! negotiation rounds in which agents split their deficits over neighbors
//! and neighbors answer with the shortfall they cannot cover.

mod closest;
mod coordinate;
mod engine;
mod ledger;
mod messages;

pub use closest::{adjustment, get_closest_point, request_region, Branch, ClosestPoint, Fallback, RequestRegion};
pub use coordinate::{coordinate, split_deficit, CoordinateOutcome, NeighborRequest, ADJUSTMENT_TOL};
pub use engine::{
    collaborative_safety, run_synchronous_engine, AgentInput, AgentOutcome, Diagnostic, EngineConfig,
    ProtocolOutcome, ProtocolStatus, CONVERGENCE_TOL,
};
pub use ledger::NegotiationLedger;
pub use messages::{AdjustmentMsg, Envelope, Mailbox, MessageKind, RequestMsg, TraceRecord, Transport};

//! Scenario runner for the collaborative formation-safety simulator.
//!
//! Loads scenarios (or built-in presets), steps the formation with the
//! negotiation protocol and safety filter in the loop, and writes CSV/NDJSON
//! traces, SVG plots and run summaries.

pub mod error;
pub mod plot;
pub mod report;
pub mod scenario;
pub mod simulate;
pub mod trace;
pub mod verify;

pub use error::{Result, SimError};
pub use report::Summary;
pub use scenario::Scenario;
pub use simulate::{run, run_with};
pub use trace::TraceLog;

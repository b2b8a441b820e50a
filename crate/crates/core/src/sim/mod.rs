//! Deterministic tick-driven simulation of primal agents (one scalar block
//! each) and dual agents (one multiplier each) exchanging zero-delay
//! messages under arbitrary schedules.

pub mod agents;
mod ops;
pub mod schedule;
mod trace;
mod world;

pub use agents::{Absorb, DualAgentState, MessageEvent, MessageKind, PrimalAgentState};
pub use ops::OpsCounter;
pub use schedule::{BernoulliSpec, DeterministicSchedule, Schedule, ScheduleSpec, TimeSet};
pub use trace::{
    DualUpdateRecord, EnvelopeColumns, Epoch, MessageStats, Trace, TraceLabels, TraceRow,
};
pub use world::{run, Reference, RunOptions, World};

use thiserror::Error;

use crate::multihop::{Link, NodeId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid channel model: {0}")]
    InvalidChannel(String),

    /// A caller broke a documented precondition (negative rate, zero deadline, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("queue {q} is outside the solved range [0, {q_max}]{hint}")]
    OutOfRange { q: f64, q_max: f64, hint: &'static str },

    #[error("grid overflow: {0}; increase q_max")]
    GridOverflow(String),

    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),

    #[error("link {0} is not in the graph")]
    UnknownLink(Link),

    #[error("no path from {src} to {dst}")]
    Unreachable { src: NodeId, dst: NodeId },

    #[error("link {0} is not covered by the schedule")]
    UnscheduledLink(Link),

    #[error("schedule conflict: {0}")]
    ScheduleConflict(String),

    #[error("infeasible deadline: {0}")]
    InfeasibleDeadline(String),

    #[error("no feasible plan: flow {flow} {reason}")]
    InfeasiblePlan { flow: u32, reason: String },
}

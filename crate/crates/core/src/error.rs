//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no routing candidates for the placement")]
    NoCandidates,

    #[error("routing cache is full ({0} entries)")]
    CacheFull(usize),

    #[error("vlan tag space exhausted")]
    VlanExhausted,

    #[error("unknown tenant {0}")]
    UnknownTenant(u64),

    /// The exhaustive oracle refuses topologies it cannot enumerate in
    /// reasonable time.
    #[error("oracle size guard exceeded: topology has {nodes} nodes (limit {limit})")]
    OracleSizeGuard { nodes: usize, limit: usize },

    #[error("all flows starved: no finished flow to average")]
    AllFlowsStarved,

    #[error("spec validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_parameter(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn invalid_topology(msg: impl Into<String>) -> Self {
        Error::InvalidTopology(msg.into())
    }

    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

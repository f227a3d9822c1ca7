//! Tenant-routing updates for multi-tenant datacenter fabrics.
//!
//! The crate decouples routing search from routing optimization: for a
//! tenant's VM placement it first enumerates *all* desired overlay candidates
//! on the layered fabric ([`search`]), memoizes them by placement
//! ([`cache`]), and only then scores the candidates against the current
//! network state to pick the least congested one ([`objective`]). Around that
//! core live the comparison baselines ([`baselines`]), a flow-level max-min
//! fair simulator ([`simnet`]), the embedding pipeline with VLAN allocation
//! and batch switch configuration ([`embed`]), and a seeded experiment runner
//! ([`experiment`]).

pub mod baselines;
pub mod cache;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod objective;
pub mod search;
pub mod seeding;
pub mod simnet;
pub mod topology;

pub use error::{Error, Result};
pub use search::{RoutingCandidate, VmPlacement};
pub use topology::{LinkId, NodeId, Topology};

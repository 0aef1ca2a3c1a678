//! In-process Kademlia simulator with sloppy-hashing locality.
//!
//! Nodes live in one address space of 160-bit ids and route with the XOR
//! metric. Every RPC is charged the round-trip time between the regions of
//! the two nodes; a lookup round costs its slowest RPC. With sloppy caching
//! on, a get first runs a lookup restricted to the requester's region and,
//! on a miss, leaves a cached copy on the region's node closest to the key.

mod config;
mod id;
mod overlay;
mod routing;

use thiserror::Error;

pub use config::{DhtConfig, LatencyModel, SimConfig};
pub use id::{Distance, NodeId};
pub use overlay::{GetReport, NodeInfo, Overlay, PutReport, Source, TraceEvent};
pub use routing::{Contact, RoutingTable};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DhtError {
    #[error("key not found")]
    NotFound,
    #[error("no live peer reachable from node {0}")]
    PartitionedOverlay(usize),
    #[error("node {0} is not a live member of the overlay")]
    DeadNode(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

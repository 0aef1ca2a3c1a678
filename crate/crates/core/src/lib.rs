//! Owner-controlled storage and sharing of encrypted IoT time-series streams.
//!
//! The crate is split along the control-plane / data-plane boundary:
//!
//! - [`stream`]: records, sealed hash-chained chunks, timestamp lookup.
//! - [`crypto`]: identities, AEAD, key regression and proxy re-encryption.
//! - [`ledger`]: a simulated blockchain and the access-control state machine
//!   folded over it.
//! - [`storage`]: storage nodes that enforce ledger permissions on reads.
//! - [`dht`]: a discrete-event Kademlia simulator with sloppy-hashing locality.
//! - [`gateway`]: the ingest pipeline, FIFO cache and query path.
//! - [`harness`]: end-to-end deployments, synthetic data and benchmarks.

pub mod crypto;
pub mod dht;
pub mod gateway;
pub mod harness;
pub mod hash;
pub mod ledger;
pub mod storage;
pub mod stream;
pub mod wire;

pub use hash::{sha256, sha256_parts, Digest256};

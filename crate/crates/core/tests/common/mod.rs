//! Checks shared by the per-area integration tests and the acceptance run.
#![allow(dead_code)]

pub mod crypto;
pub mod dht;
pub mod ledger;

//! Reproducible deployments and experiments: profiles, a synthetic data
//! generator, an in-process world wiring every layer together, and the
//! benchmark reports.

mod bench;
mod profile;
mod synthetic;
mod world;

use thiserror::Error;

pub use bench::{
    bench_access_overhead, bench_compression, bench_compression_profile, bench_locality, compression_curve,
    dht_latency_study, oracle_ratio, BenchReport, Row,
};
pub use profile::{BenchConfig, Profile};
pub use synthetic::{synthetic_days, SyntheticSeries, DAY_SECONDS};
pub use world::World;

use crate::dht::DhtError;
use crate::gateway::GatewayError;
use crate::ledger::LedgerError;
use crate::storage::StorageError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Dht(#[from] DhtError),
}

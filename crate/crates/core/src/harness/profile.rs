use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dht::SimConfig;
use crate::gateway::GatewayConfig;
use crate::ledger::ChainConfig;
use crate::stream::Codec;
use crate::{sha256, Digest256};

/// Workload sizes for the benchmark experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Length of the synthetic compression dataset.
    pub dataset_days: u64,
    /// Records per chunk for the compression study.
    pub chunk_sizes: Vec<usize>,
    pub gets: usize,
    pub chunks: usize,
    /// Keys stored in the latency study.
    pub dht_keys: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            dataset_days: 2,
            chunk_sizes: vec![16, 32, 64, 128, 256, 512, 1024, 2048, 4096, 8192],
            gets: 10_000,
            chunks: 1_000,
            dht_keys: 300,
        }
    }
}

/// Named configuration bundle; with a seed it fixes a run completely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    pub seed: u64,
    /// Chunk window length.
    pub delta_ms: u64,
    pub checkpoint_interval: u32,
    pub codec: Codec,
    pub chain: ChainConfig,
    pub gateway: GatewayConfig,
    pub sim: SimConfig,
    pub bench: BenchConfig,
}

impl Default for Profile {
    fn default() -> Self {
        Profile {
            name: "default".into(),
            seed: 1,
            delta_ms: 3_600_000,
            checkpoint_interval: 10,
            codec: Codec::Deflate,
            chain: ChainConfig::default(),
            gateway: GatewayConfig::default(),
            sim: SimConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl Profile {
    pub const BUILTIN: [&'static str; 3] = ["default", "bitcoin-like", "latency-matrix"];

    pub fn builtin(name: &str) -> Option<Profile> {
        let mut p = Profile::default();
        match name {
            "default" => {}
            "bitcoin-like" => p.chain = ChainConfig::bitcoin_like(),
            // Four-region matrix with locality caching switched on.
            "latency-matrix" => p.sim.dht.sloppy = true,
            _ => return None,
        }
        p.name = name.into();
        Some(p)
    }

    pub fn from_toml(s: &str) -> Result<Profile, HarnessError> {
        let p: Profile = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.delta_ms == 0 || self.checkpoint_interval == 0 {
            return Err(HarnessError::Config("delta_ms and checkpoint_interval must be positive".into()));
        }
        if self.bench.chunk_sizes.contains(&0) {
            return Err(HarnessError::Config("chunk sizes must be positive".into()));
        }
        self.sim.latency().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.sim.dht.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn digest(&self) -> Digest256 {
        sha256(self.to_toml().as_bytes())
    }
}

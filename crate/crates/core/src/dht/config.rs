//! Overlay parameters and the simulation config file.
//!
//! A config file is TOML. Every key is optional:
//!
//! ```toml
//! nodes = 1000
//! seed = 7
//! regions = ["eu", "us", "asia"]
//! intra_region_ms = 5.0
//! # one-way latency between regions, symmetric
//! latency_ms = [[0.0, 45.0, 120.0], [45.0, 0.0, 90.0], [120.0, 90.0, 0.0]]
//!
//! [dht]
//! k_bucket = 20
//! alpha = 3
//! replicas = 3
//! cache_ttl_ms = 600000
//! id_choices = 4
//! sloppy = true
//! rpc_timeout_ms = 500.0
//! ```

use serde::{Deserialize, Serialize};

use super::DhtError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DhtConfig {
    pub k_bucket: usize,
    /// Parallel RPCs per lookup round.
    pub alpha: usize,
    /// Primary replicas per key.
    pub replicas: usize,
    pub cache_ttl_ms: u64,
    /// Candidate ids drawn per join; the one farthest from its nearest live
    /// neighbour is kept. 1 gives plain random ids.
    pub id_choices: usize,
    pub sloppy: bool,
    /// Charged for an RPC to a dead node.
    pub rpc_timeout_ms: f64,
}

impl Default for DhtConfig {
    fn default() -> Self {
        DhtConfig {
            k_bucket: 20,
            alpha: 3,
            replicas: 3,
            cache_ttl_ms: 600_000,
            id_choices: 4,
            sloppy: false,
            rpc_timeout_ms: 500.0,
        }
    }
}

impl DhtConfig {
    pub fn validate(&self) -> Result<(), DhtError> {
        let bad = |m: &str| Err(DhtError::Config(m.into()));
        if self.k_bucket == 0 || self.alpha == 0 || self.replicas == 0 || self.id_choices == 0 {
            return bad("k_bucket, alpha, replicas and id_choices must be positive");
        }
        if self.replicas > self.k_bucket {
            return bad("replicas cannot exceed k_bucket");
        }
        if !(self.rpc_timeout_ms >= 0.0) {
            return bad("rpc_timeout_ms must be non-negative");
        }
        Ok(())
    }
}

/// Symmetric one-way latencies between regions plus an intra-region figure.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencyModel {
    regions: Vec<String>,
    one_way_ms: Vec<Vec<f64>>,
    intra_ms: f64,
}

impl LatencyModel {
    pub fn new(regions: Vec<String>, one_way_ms: Vec<Vec<f64>>, intra_ms: f64) -> Result<Self, DhtError> {
        let n = regions.len();
        let bad = |m: &str| Err(DhtError::Config(m.into()));
        if n == 0 {
            return bad("at least one region is required");
        }
        if one_way_ms.len() != n || one_way_ms.iter().any(|row| row.len() != n) {
            return bad("latency matrix must be square with one row per region");
        }
        if !(intra_ms >= 0.0) {
            return bad("intra-region latency must be non-negative");
        }
        for i in 0..n {
            for j in 0..n {
                let v = one_way_ms[i][j];
                if !(v >= 0.0) || v != one_way_ms[j][i] {
                    return bad("latency matrix must be symmetric and non-negative");
                }
            }
        }
        Ok(LatencyModel { regions, one_way_ms, intra_ms })
    }

    /// A single region in which every hop costs `one_way_ms`.
    pub fn uniform(one_way_ms: f64) -> Self {
        LatencyModel { regions: vec!["local".into()], one_way_ms: vec![vec![0.0]], intra_ms: one_way_ms }
    }

    /// Four continents, intra-region 5 ms.
    pub fn world() -> Self {
        let m = vec![
            vec![0.0, 40.0, 75.0, 120.0],
            vec![40.0, 0.0, 35.0, 150.0],
            vec![75.0, 35.0, 0.0, 110.0],
            vec![120.0, 150.0, 110.0, 0.0],
        ];
        let names = ["us-east", "eu", "us-west", "asia"].map(String::from).to_vec();
        LatencyModel::new(names, m, 5.0).expect("built-in matrix is valid")
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn one_way(&self, a: usize, b: usize) -> f64 {
        if a == b {
            self.intra_ms
        } else {
            self.one_way_ms[a][b]
        }
    }

    pub fn rtt(&self, a: usize, b: usize) -> f64 {
        2.0 * self.one_way(a, b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub nodes: usize,
    pub seed: u64,
    pub regions: Vec<String>,
    pub latency_ms: Vec<Vec<f64>>,
    pub intra_region_ms: f64,
    pub dht: DhtConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        let w = LatencyModel::world();
        SimConfig {
            nodes: 1000,
            seed: 1,
            regions: w.regions.clone(),
            latency_ms: w.one_way_ms.clone(),
            intra_region_ms: w.intra_ms,
            dht: DhtConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(s: &str) -> Result<Self, DhtError> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| DhtError::Config(e.to_string()))?;
        cfg.latency()?;
        cfg.dht.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn latency(&self) -> Result<LatencyModel, DhtError> {
        LatencyModel::new(self.regions.clone(), self.latency_ms.clone(), self.intra_region_ms)
    }
}

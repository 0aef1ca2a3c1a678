use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::LedgerError;
use crate::wire::{Reader, WireError, Writer};
use crate::{sha256, sha256_parts, Digest256};

/// A block carrying opaque transaction payloads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest256,
    pub timestamp_ms: u64,
    pub payloads: Vec<Vec<u8>>,
}

impl Block {
    pub fn digest(&self) -> Digest256 {
        sha256_parts(&[b"svault-block", &self.to_bytes()])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.height).digest(&self.prev_hash).u64(self.timestamp_ms).u32(self.payloads.len() as u32);
        for p in &self.payloads {
            w.var(p);
        }
        w.finish()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(b);
        let height = r.u64()?;
        let prev_hash = r.digest()?;
        let timestamp_ms = r.u64()?;
        let n = r.u32()?;
        let mut payloads = Vec::new();
        for _ in 0..n {
            payloads.push(r.var()?.to_vec());
        }
        r.finish()?;
        Ok(Block { height, prev_hash, timestamp_ms, payloads })
    }
}

/// The narrow surface the state machine needs from a blockchain.
///
/// The simulator never forks. A client for a real chain must pick a
/// confirmation depth that makes reorgs below it negligible, since access
/// decisions are derived from confirmed blocks only.
pub trait ChainAdapter: Send + Sync {
    /// Queues an opaque payload for inclusion; returns its digest.
    fn submit(&self, payload: Vec<u8>) -> Result<Digest256, LedgerError>;
    fn tip_height(&self) -> u64;
    fn block(&self, height: u64) -> Option<Block>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub block_interval_ms: u64,
    pub confirmations: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { block_interval_ms: 1_000, confirmations: 1 }
    }
}

impl ChainConfig {
    /// Ten-minute blocks and six confirmations.
    pub fn bitcoin_like() -> Self {
        ChainConfig { block_interval_ms: 600_000, confirmations: 6 }
    }
}

struct Inner {
    blocks: Vec<Block>,
    mempool: Vec<Vec<u8>>,
    now_ms: u64,
    available: bool,
}

/// Deterministic single-branch block producer on a simulated clock. Block
/// `h` is stamped `genesis_ms + h * block_interval_ms` and takes the whole
/// mempool.
pub struct SimulatedChain {
    config: ChainConfig,
    genesis_ms: u64,
    inner: Mutex<Inner>,
}

impl SimulatedChain {
    pub fn new(config: ChainConfig, genesis_ms: u64) -> Self {
        let genesis = Block { height: 0, prev_hash: Digest256::ZERO, timestamp_ms: genesis_ms, payloads: vec![] };
        SimulatedChain {
            config,
            genesis_ms,
            inner: Mutex::new(Inner { blocks: vec![genesis], mempool: vec![], now_ms: genesis_ms, available: true }),
        }
    }

    /// Restores a chain from persisted blocks, checking every hash link.
    pub fn from_blocks(config: ChainConfig, blocks: Vec<Block>) -> Result<Self, LedgerError> {
        let genesis_ms = blocks.first().map(|b| b.timestamp_ms).ok_or(LedgerError::Unavailable)?;
        for (i, b) in blocks.iter().enumerate() {
            if b.height != i as u64 {
                return Err(LedgerError::HeightGap { expected: i as u64, got: b.height });
            }
            let expected_prev = if i == 0 { Digest256::ZERO } else { blocks[i - 1].digest() };
            if b.prev_hash != expected_prev {
                return Err(LedgerError::BrokenLink { height: b.height });
            }
        }
        let now_ms = blocks.last().unwrap().timestamp_ms;
        Ok(SimulatedChain {
            config,
            genesis_ms,
            inner: Mutex::new(Inner { blocks, mempool: vec![], now_ms, available: true }),
        })
    }

    pub fn config(&self) -> ChainConfig {
        self.config
    }

    pub fn now_ms(&self) -> u64 {
        self.inner.lock().now_ms
    }

    pub fn mempool_len(&self) -> usize {
        self.inner.lock().mempool.len()
    }

    pub fn blocks(&self) -> Vec<Block> {
        self.inner.lock().blocks.clone()
    }

    /// Test hook: an unavailable chain rejects submissions.
    pub fn set_available(&self, available: bool) {
        self.inner.lock().available = available;
    }

    fn produce(&self, inner: &mut Inner) {
        let last = inner.blocks.last().expect("genesis always present");
        let height = last.height + 1;
        let block = Block {
            height,
            prev_hash: last.digest(),
            timestamp_ms: self.genesis_ms + height * self.config.block_interval_ms,
            payloads: std::mem::take(&mut inner.mempool),
        };
        inner.blocks.push(block);
    }

    /// Advances the clock, producing every block whose slot has passed.
    pub fn advance_to(&self, now_ms: u64) -> u64 {
        let mut inner = self.inner.lock();
        inner.now_ms = inner.now_ms.max(now_ms);
        let mut produced = 0;
        loop {
            let next_height = inner.blocks.len() as u64;
            if self.genesis_ms + next_height * self.config.block_interval_ms > inner.now_ms {
                break;
            }
            self.produce(&mut inner);
            produced += 1;
        }
        produced
    }

    pub fn advance_by(&self, ms: u64) -> u64 {
        let now = self.now_ms();
        self.advance_to(now + ms)
    }

    /// Jumps the clock to the next block slot and produces that block.
    pub fn mine(&self) -> u64 {
        let next = self.inner.lock().blocks.len() as u64;
        self.advance_to(self.genesis_ms + next * self.config.block_interval_ms);
        next
    }
}

impl ChainAdapter for SimulatedChain {
    fn submit(&self, payload: Vec<u8>) -> Result<Digest256, LedgerError> {
        let mut inner = self.inner.lock();
        if !inner.available {
            return Err(LedgerError::Unavailable);
        }
        let d = sha256(&payload);
        inner.mempool.push(payload);
        Ok(d)
    }

    fn tip_height(&self) -> u64 {
        self.inner.lock().blocks.len() as u64 - 1
    }

    fn block(&self, height: u64) -> Option<Block> {
        self.inner.lock().blocks.get(height as usize).cloned()
    }
}

//! Control plane: a deterministic simulated blockchain and the access
//! control state machine folded over it.
//!
//! Transactions are embedded in blocks as opaque payloads. The state
//! machine recognizes its own payloads by a marker, parses them, and
//! applies or skips them; skipped transactions are still recorded in the
//! audit log, so nothing on chain is silently censored.

mod chain;
mod state;
mod tx;

use thiserror::Error;

pub use chain::{Block, ChainAdapter, ChainConfig, SimulatedChain};
pub use state::{AclState, Anchor, AuditEvent, GrantRecord, Outcome, Permission, StreamEntry, Tombstone};
pub use tx::{LedgerTx, TxBody, TxKind, TX_MARKER};

use std::sync::Arc;

use crate::wire::WireError;
use crate::Digest256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("transaction signature invalid")]
    BadSignature,
    #[error("malformed transaction: {0}")]
    MalformedTx(WireError),
    #[error("block height gap: expected {expected}, got {got}")]
    HeightGap { expected: u64, got: u64 },
    #[error("block {height} does not link to the previous block")]
    BrokenLink { height: u64 },
    #[error("unknown stream {0}")]
    UnknownStream(Digest256),
    #[error("ledger unavailable")]
    Unavailable,
}

/// Signature-checks a transaction and hands it to the chain.
pub fn submit(chain: &dyn ChainAdapter, tx: &LedgerTx) -> Result<Digest256, LedgerError> {
    tx.verify_signature()?;
    chain.submit(tx.to_bytes())
}

/// Parses raw bytes as a transaction before submission.
pub fn submit_raw(chain: &dyn ChainAdapter, bytes: &[u8]) -> Result<Digest256, LedgerError> {
    let tx = LedgerTx::from_bytes(bytes)?;
    submit(chain, &tx)
}

/// Follows a chain and materializes the access-control state up to the
/// configured confirmation depth.
pub struct Ledger {
    adapter: Arc<dyn ChainAdapter>,
    confirmations: u64,
    state: AclState,
    snapshot: Arc<AclState>,
}

impl Ledger {
    pub fn new(adapter: Arc<dyn ChainAdapter>, confirmations: u64) -> Self {
        let state = AclState::new();
        Ledger { adapter, confirmations: confirmations.max(1), snapshot: Arc::new(state.clone()), state }
    }

    pub fn adapter(&self) -> &Arc<dyn ChainAdapter> {
        &self.adapter
    }

    pub fn submit(&self, tx: &LedgerTx) -> Result<Digest256, LedgerError> {
        submit(self.adapter.as_ref(), tx)
    }

    /// Highest height considered confirmed, if any.
    pub fn confirmed_height(&self) -> Option<u64> {
        (self.adapter.tip_height() + 1).checked_sub(self.confirmations)
    }

    /// Applies newly confirmed blocks. Returns how many were applied.
    pub fn sync(&mut self) -> Result<u64, LedgerError> {
        let Some(target) = self.confirmed_height() else {
            return Ok(0);
        };
        let mut applied = 0;
        let mut next = self.state.height().map_or(0, |h| h + 1);
        while next <= target {
            let block = self.adapter.block(next).ok_or(LedgerError::Unavailable)?;
            self.state.apply_block(&block)?;
            applied += 1;
            next += 1;
        }
        if applied > 0 {
            self.snapshot = Arc::new(self.state.clone());
        }
        Ok(applied)
    }

    pub fn state(&self) -> &AclState {
        &self.state
    }

    /// Immutable view for concurrent readers such as storage nodes.
    pub fn snapshot(&self) -> Arc<AclState> {
        Arc::clone(&self.snapshot)
    }
}

//! Data-plane storage: an append-only key-value node that authenticates
//! readers with signed challenges and checks every read against a snapshot
//! of the ledger's permission state.

mod backend;
mod keymat;
mod node;
mod protocol;

use thiserror::Error;

pub use backend::{Backend, DhtBackend, DiskBackend, MemoryBackend};
pub use keymat::{keymat_key, KeyMaterial, KeymatBody, WRAPPED_SLOT};
pub use node::{
    AccessDecision, Challenge, Clock, Enforcement, GetRequest, ManualClock, NodeConfig, PutRequest, StorageNode,
    SystemClock,
};
pub use protocol::{handle_frame, read_frame, serve, write_frame, Loopback, RemoteNode, Status};

use crate::crypto::Identity;
use crate::Digest256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("writer is not the registered owner of the stream")]
    NotStreamOwner,
    #[error("key already holds a different value")]
    KeyExists,
    #[error("value of {size} bytes exceeds the {max} byte limit")]
    ValueTooLarge { size: usize, max: usize },
    #[error("permission denied")]
    PermissionDenied,
    #[error("not found")]
    NotFound,
    #[error("challenge is unknown, used or expired")]
    StaleChallenge,
    #[error("request signature invalid")]
    BadAuth,
    #[error("value rejected: {0}")]
    InvalidValue(String),
    #[error("stream not registered on the ledger")]
    UnknownStream,
    #[error("storage unavailable: {0}")]
    StorageUnavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// A node as seen by clients, in-process or across a byte stream.
pub trait StorageService: Send + Sync {
    fn challenge(&self) -> Result<Challenge, StorageError>;
    fn put(&self, req: &PutRequest) -> Result<(), StorageError>;
    fn get(&self, req: &GetRequest) -> Result<Vec<u8>, StorageError>;
}

/// Signs requests on behalf of one identity.
pub struct Client<S: StorageService + ?Sized> {
    pub service: std::sync::Arc<S>,
    pub identity: Identity,
}

impl<S: StorageService + ?Sized> Clone for Client<S> {
    fn clone(&self) -> Self {
        Client { service: self.service.clone(), identity: self.identity.clone() }
    }
}

impl<S: StorageService + ?Sized> Client<S> {
    pub fn new(service: std::sync::Arc<S>, identity: Identity) -> Self {
        Client { service, identity }
    }

    pub fn put(&self, key: Digest256, stream_id: Digest256, value: Vec<u8>) -> Result<(), StorageError> {
        self.service.put(&PutRequest::signed(&self.identity, key, stream_id, value))
    }

    /// CHALLENGE then GET: two round trips.
    pub fn get(&self, key: Digest256, stream_id: Digest256) -> Result<Vec<u8>, StorageError> {
        let challenge = self.service.challenge()?;
        self.service.get(&GetRequest::signed(&self.identity, key, stream_id, challenge))
    }
}

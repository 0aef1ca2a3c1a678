use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::keymat::{KeyMaterial, WRAPPED_SLOT};
use super::{Backend, StorageError, StorageService};
use crate::crypto::identity::principal_id;
use crate::crypto::{Identity, PrincipalId, PublicIdentity};
use crate::ledger::{AclState, Permission};
use crate::stream::{chunk_key, SealedChunk};
use crate::{sha256, sha256_parts, Digest256};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

#[derive(Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(ms: u64) -> Self {
        ManualClock(AtomicU64::new(ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Enforcement {
    Enforce,
    /// Serves any authenticated GET without consulting the ledger. Models a
    /// misbehaving node and the no-check baseline of the overhead study.
    SkipAclCheck,
}

#[derive(Clone, Debug)]
pub struct NodeConfig {
    pub max_value_size: usize,
    pub challenge_ttl_ms: u64,
    pub enforcement: Enforcement,
}

impl Default for NodeConfig {
    fn default() -> Self {
        NodeConfig { max_value_size: 4 << 20, challenge_ttl_ms: 60_000, enforcement: Enforcement::Enforce }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Challenge {
    pub nonce: [u8; 16],
    pub node_id: Digest256,
    pub issued_at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PutRequest {
    pub key: Digest256,
    pub stream_id: Digest256,
    pub writer_pk: [u8; 32],
    pub value: Vec<u8>,
    pub signature: [u8; 64],
}

impl PutRequest {
    fn message(key: &Digest256, stream_id: &Digest256, value: &[u8]) -> Digest256 {
        sha256_parts(&[b"svault-put", &key.0, &stream_id.0, &sha256(value).0])
    }

    pub fn signed(writer: &Identity, key: Digest256, stream_id: Digest256, value: Vec<u8>) -> Self {
        let signature = writer.sign(&Self::message(&key, &stream_id, &value).0);
        PutRequest { key, stream_id, writer_pk: writer.public_bytes(), value, signature }
    }

    fn verify(&self) -> Result<(), StorageError> {
        let pk = PublicIdentity::from_bytes(&self.writer_pk).map_err(|_| StorageError::BadAuth)?;
        pk.verify(&Self::message(&self.key, &self.stream_id, &self.value).0, &self.signature)
            .map_err(|_| StorageError::BadAuth)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GetRequest {
    pub key: Digest256,
    pub stream_id: Digest256,
    pub requester_pk: [u8; 32],
    pub challenge: Challenge,
    pub signature: [u8; 64],
}

impl GetRequest {
    fn message(c: &Challenge, requester_pk: &[u8; 32], key: &Digest256, stream_id: &Digest256) -> Digest256 {
        sha256_parts(&[
            b"svault-get",
            &c.nonce,
            &c.node_id.0,
            &c.issued_at_ms.to_be_bytes(),
            requester_pk,
            &key.0,
            &stream_id.0,
        ])
    }

    pub fn signed(requester: &Identity, key: Digest256, stream_id: Digest256, challenge: Challenge) -> Self {
        let pk = requester.public_bytes();
        let signature = requester.sign(&Self::message(&challenge, &pk, &key, &stream_id).0);
        GetRequest { key, stream_id, requester_pk: pk, challenge, signature }
    }

    pub fn requester_id(&self) -> PrincipalId {
        principal_id(&self.requester_pk)
    }

    fn verify(&self) -> Result<(), StorageError> {
        let pk = PublicIdentity::from_bytes(&self.requester_pk).map_err(|_| StorageError::BadAuth)?;
        let msg = Self::message(&self.challenge, &self.requester_pk, &self.key, &self.stream_id);
        pk.verify(&msg.0, &self.signature).map_err(|_| StorageError::BadAuth)
    }
}

/// One entry per GET, whatever its outcome.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AccessDecision {
    pub requester: PrincipalId,
    pub stream_id: Digest256,
    pub key: Digest256,
    /// Ledger verdict, absent when the check was skipped or never reached.
    pub permission: Option<Permission>,
    pub height: Option<u64>,
    pub allowed: bool,
    pub error: Option<String>,
}

pub struct StorageNode {
    id: Digest256,
    backend: Box<dyn Backend>,
    config: NodeConfig,
    clock: Arc<dyn Clock>,
    acl: RwLock<Arc<AclState>>,
    challenges: Mutex<HashMap<[u8; 16], u64>>,
    rng: Mutex<ChaCha20Rng>,
    decisions: Mutex<Vec<AccessDecision>>,
    put_lock: Mutex<()>,
}

impl StorageNode {
    pub fn new(backend: Box<dyn Backend>, config: NodeConfig, clock: Arc<dyn Clock>, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut id = [0u8; 32];
        rng.fill_bytes(&mut id);
        StorageNode {
            id: Digest256(id),
            backend,
            config,
            clock,
            acl: RwLock::new(Arc::new(AclState::new())),
            challenges: Mutex::new(HashMap::new()),
            rng: Mutex::new(rng),
            decisions: Mutex::new(Vec::new()),
            put_lock: Mutex::new(()),
        }
    }

    pub fn in_memory(seed: u64) -> Self {
        Self::new(Box::new(super::MemoryBackend::new()), NodeConfig::default(), Arc::new(SystemClock), seed)
    }

    pub fn id(&self) -> Digest256 {
        self.id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    /// Swaps in a newer permission snapshot.
    pub fn set_acl(&self, acl: Arc<AclState>) {
        *self.acl.write() = acl;
    }

    pub fn acl(&self) -> Arc<AclState> {
        Arc::clone(&self.acl.read())
    }

    pub fn decisions(&self) -> Vec<AccessDecision> {
        self.decisions.lock().clone()
    }

    pub fn take_decisions(&self) -> Vec<AccessDecision> {
        std::mem::take(&mut *self.decisions.lock())
    }

    fn consume_challenge(&self, c: &Challenge) -> Result<(), StorageError> {
        let now = self.clock.now_ms();
        let mut open = self.challenges.lock();
        let issued = open.remove(&c.nonce).ok_or(StorageError::StaleChallenge)?;
        if c.node_id != self.id || issued != c.issued_at_ms || now.saturating_sub(issued) > self.config.challenge_ttl_ms
        {
            return Err(StorageError::StaleChallenge);
        }
        Ok(())
    }

    /// Checks that a stored or incoming value belongs to `stream_id` and
    /// returns the key-material slot it occupies, if any.
    fn classify(value: &[u8], stream_id: &Digest256) -> Result<Option<KeyMaterial>, StorageError> {
        if KeyMaterial::is_keymat(value) {
            let km = KeyMaterial::from_bytes(value).map_err(|e| StorageError::InvalidValue(e.to_string()))?;
            if km.stream_id != *stream_id {
                return Err(StorageError::InvalidValue("key material for another stream".into()));
            }
            Ok(Some(km))
        } else {
            let chunk = SealedChunk::from_bytes(value).map_err(|e| StorageError::InvalidValue(e.to_string()))?;
            if chunk.header.stream_id != *stream_id {
                return Err(StorageError::InvalidValue("chunk of another stream".into()));
            }
            Ok(None)
        }
    }

    fn do_put(&self, req: &PutRequest) -> Result<(), StorageError> {
        if req.value.len() > self.config.max_value_size {
            return Err(StorageError::ValueTooLarge { size: req.value.len(), max: self.config.max_value_size });
        }
        req.verify()?;
        let acl = self.acl();
        let entry = acl.stream(&req.stream_id).ok_or(StorageError::UnknownStream)?;
        if entry.registration.owner_pk != req.writer_pk {
            return Err(StorageError::NotStreamOwner);
        }
        match Self::classify(&req.value, &req.stream_id)? {
            Some(km) => {
                if km.storage_key() != req.key {
                    return Err(StorageError::InvalidValue("key-material object under the wrong key".into()));
                }
            }
            None => {
                let chunk = SealedChunk::from_bytes(&req.value).expect("classified as chunk");
                let mut meta = entry.registration.meta();
                meta.epoch = chunk.header.epoch;
                if chunk_key(&meta, chunk.header.chunk_index).0 != req.key {
                    return Err(StorageError::InvalidValue("chunk stored under the wrong key".into()));
                }
                let owner = PublicIdentity::from_bytes(&req.writer_pk).map_err(|_| StorageError::BadAuth)?;
                chunk.verify_signature(&owner).map_err(|_| StorageError::InvalidValue("chunk signature".into()))?;
            }
        }
        let _guard = self.put_lock.lock();
        match self.backend.get(&req.key)? {
            Some(existing) if existing == req.value => Ok(()),
            Some(_) => Err(StorageError::KeyExists),
            None => self.backend.put(&req.key, &req.value),
        }
    }

    fn authorize(&self, req: &GetRequest, decision: &mut AccessDecision) -> Result<Vec<u8>, StorageError> {
        self.consume_challenge(&req.challenge)?;
        req.verify()?;
        let requester = req.requester_id();
        if self.config.enforcement == Enforcement::SkipAclCheck {
            return self.backend.get(&req.key)?.ok_or(StorageError::NotFound);
        }
        let acl = self.acl();
        decision.height = acl.height();
        let permission = acl.query_permission(&req.stream_id, &requester, None).unwrap_or(Permission::Denied);
        decision.permission = Some(permission);
        if !permission.allows_read() {
            return Err(StorageError::PermissionDenied);
        }
        let value = self.backend.get(&req.key)?.ok_or(StorageError::NotFound)?;
        // A reader of one stream must not be able to fetch objects of another
        // by naming the stream it is allowed on.
        let slot = Self::classify(&value, &req.stream_id).map_err(|_| StorageError::PermissionDenied)?;
        if let Some(km) = slot {
            if km.grantee != WRAPPED_SLOT && km.grantee != requester && permission != Permission::Owner {
                return Err(StorageError::PermissionDenied);
            }
        }
        Ok(value)
    }
}

impl StorageService for StorageNode {
    fn challenge(&self) -> Result<Challenge, StorageError> {
        let now = self.clock.now_ms();
        let mut nonce = [0u8; 16];
        self.rng.lock().fill_bytes(&mut nonce);
        let mut open = self.challenges.lock();
        if open.len() >= 100_000 {
            let ttl = self.config.challenge_ttl_ms;
            open.retain(|_, issued| now.saturating_sub(*issued) <= ttl);
        }
        open.insert(nonce, now);
        Ok(Challenge { nonce, node_id: self.id, issued_at_ms: now })
    }

    fn put(&self, req: &PutRequest) -> Result<(), StorageError> {
        self.do_put(req)
    }

    fn get(&self, req: &GetRequest) -> Result<Vec<u8>, StorageError> {
        let mut decision = AccessDecision {
            requester: req.requester_id(),
            stream_id: req.stream_id,
            key: req.key,
            permission: None,
            height: None,
            allowed: false,
            error: None,
        };
        let result = self.authorize(req, &mut decision);
        decision.allowed = result.is_ok();
        decision.error = result.as_ref().err().map(|e| e.to_string());
        self.decisions.lock().push(decision);
        result
    }
}

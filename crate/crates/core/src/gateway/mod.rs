//! The owner-side pipeline: records are buffered into Δ-windows, sealed
//! into hash-chained chunks, kept in a FIFO cache, pushed to storage and
//! periodically anchored on the ledger. Sharing and revocation publish key
//! material to storage and the matching transactions to the ledger.

mod buffer;
mod cache;
mod io;
mod query;
mod reader;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use buffer::{BufferCursor, IngestBuffer};
pub use cache::FifoCache;
pub use io::{read_records, write_records, RecordFormat};
pub use query::{read_from_storage, window_range, ChunkSource, QueryPlan, QueryResult};
pub use reader::{OwnerReader, Reader, Requester, ShareRequest};

use crate::crypto::sharing::SharingRecord;
use crate::crypto::{CryptoError, Identity, KeyRegression, PrincipalId, PublicIdentity, SharingState, StreamKey};
use crate::ledger::{AclState, ChainAdapter, LedgerError, LedgerTx, Permission, TxBody};
use crate::storage::{Client, KeyMaterial, StorageError, StorageService};
use crate::stream::{build_chunk, chunk_key, ChunkError, DataRecord, SealedChunk, StreamMeta, StreamRegistration};
use crate::{sha256, Digest256};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("record at {ts} is behind the watermark {watermark} by more than the lateness bound")]
    LateRecord { ts: u64, watermark: u64 },
    #[error("duplicate record timestamp {0}")]
    DuplicateRecord(u64),
    #[error("unknown stream {0}")]
    UnknownStream(Digest256),
    #[error("only the stream owner may do this")]
    NotOwner,
    #[error("{0} is not a current grantee")]
    NotGranted(PrincipalId),
    #[error("permission denied")]
    PermissionDenied,
    #[error("no key material available for epoch {0}")]
    MissingKeyEpoch(u32),
    #[error("ledger unavailable")]
    LedgerUnavailable,
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Storage(StorageError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Ledger(LedgerError),
}

impl From<StorageError> for GatewayError {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::PermissionDenied => GatewayError::PermissionDenied,
            other => GatewayError::Storage(other),
        }
    }
}

impl From<LedgerError> for GatewayError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Unavailable => GatewayError::LedgerUnavailable,
            other => GatewayError::Ledger(other),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Records may trail the newest timestamp by this many windows.
    pub lateness_windows: u64,
    pub cache_capacity: usize,
    /// Rotate the stream key every this many chunks; revocations always
    /// rotate.
    pub rotate_every: Option<u64>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig { lateness_windows: 2, cache_capacity: 64, rotate_every: None }
    }
}

#[derive(Clone, Debug)]
struct Outgoing {
    key: Digest256,
    value: Vec<u8>,
    chunk_index: Option<u64>,
}

struct OwnedStream {
    reg: StreamRegistration,
    meta: StreamMeta,
    keys: KeyRegression,
    current_key: StreamKey,
    sharing: SharingState,
    /// Ledger principal → PRE key id of each current grantee.
    grantees: BTreeMap<PrincipalId, PrincipalId>,
    buffer: IngestBuffer,
    cache: FifoCache,
    last_hash: Digest256,
    emitted: BTreeSet<u64>,
    since_rotation: u64,
    unanchored: u64,
    last_checkpoint: Option<(u64, Digest256)>,
    outbox: VecDeque<Outgoing>,
}

impl OwnedStream {
    fn set_epoch(&mut self, epoch: u32) -> Result<(), CryptoError> {
        self.current_key = self.keys.key(epoch)?;
        self.meta.epoch = epoch;
        Ok(())
    }
}

/// Persistent form of one stream's gateway state. Open windows are not
/// included; flush before exporting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StreamSnapshot {
    pub registration: StreamRegistration,
    pub epoch: u32,
    pub keys: KeyRegression,
    pub sharing: SharingRecord,
    pub grantees: Vec<(PrincipalId, PrincipalId)>,
    pub cursor: BufferCursor,
    pub last_hash: Digest256,
    pub emitted: Vec<u64>,
    pub since_rotation: u64,
    pub unanchored: u64,
    pub last_checkpoint: Option<(u64, Digest256)>,
    /// Pending uploads as `(key, hex value)`.
    pub outbox: Vec<(Digest256, String, Option<u64>)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestOutcome {
    /// Chunk indices sealed as a side effect.
    pub sealed: Vec<u64>,
}

pub struct Gateway {
    owner: Identity,
    chain: Arc<dyn ChainAdapter>,
    storage: Client<dyn StorageService>,
    acl: Arc<AclState>,
    config: GatewayConfig,
    rng: ChaCha20Rng,
    streams: BTreeMap<Digest256, OwnedStream>,
}

impl Gateway {
    pub fn new(
        owner: Identity,
        chain: Arc<dyn ChainAdapter>,
        storage: Arc<dyn StorageService>,
        config: GatewayConfig,
        seed: u64,
    ) -> Self {
        Gateway {
            storage: Client::new(storage, owner.clone()),
            owner,
            chain,
            acl: Arc::new(AclState::new()),
            config,
            rng: ChaCha20Rng::seed_from_u64(seed),
            streams: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> &Identity {
        &self.owner
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Permission snapshot used to vet readers served from the cache.
    pub fn set_acl(&mut self, acl: Arc<AclState>) {
        self.acl = acl;
    }

    fn stream(&self, sid: &Digest256) -> Result<&OwnedStream, GatewayError> {
        self.streams.get(sid).ok_or(GatewayError::UnknownStream(*sid))
    }

    fn stream_mut(&mut self, sid: &Digest256) -> Result<&mut OwnedStream, GatewayError> {
        self.streams.get_mut(sid).ok_or(GatewayError::UnknownStream(*sid))
    }

    pub fn meta(&self, sid: &Digest256) -> Result<StreamMeta, GatewayError> {
        Ok(self.stream(sid)?.meta.clone())
    }

    pub fn streams(&self) -> impl Iterator<Item = &Digest256> {
        self.streams.keys()
    }

    pub fn cache(&self, sid: &Digest256) -> Result<&FifoCache, GatewayError> {
        Ok(&self.stream(sid)?.cache)
    }

    pub fn emitted(&self, sid: &Digest256) -> Result<&BTreeSet<u64>, GatewayError> {
        Ok(&self.stream(sid)?.emitted)
    }

    pub fn last_checkpoint(&self, sid: &Digest256) -> Result<Option<(u64, Digest256)>, GatewayError> {
        Ok(self.stream(sid)?.last_checkpoint)
    }

    /// Sealed chunks not yet covered by a submitted checkpoint.
    pub fn unanchored(&self, sid: &Digest256) -> Result<u64, GatewayError> {
        Ok(self.stream(sid)?.unanchored)
    }

    pub fn pending_uploads(&self, sid: &Digest256) -> Result<usize, GatewayError> {
        Ok(self.stream(sid)?.outbox.len())
    }

    pub fn grantees(&self, sid: &Digest256) -> Result<Vec<PrincipalId>, GatewayError> {
        Ok(self.stream(sid)?.grantees.keys().copied().collect())
    }

    pub fn key_regression(&self, sid: &Digest256) -> Result<&KeyRegression, GatewayError> {
        Ok(&self.stream(sid)?.keys)
    }

    fn submit(&self, sid: Digest256, body: TxBody) -> Result<LedgerTx, GatewayError> {
        let tx = LedgerTx::signed(&self.owner, sid, body);
        crate::ledger::submit(self.chain.as_ref(), &tx)?;
        Ok(tx)
    }

    /// Registers a stream on the ledger and publishes the epoch-0 wrapped
    /// key. Uploads wait in the outbox until the registration is confirmed.
    pub fn register(&mut self, reg: StreamRegistration) -> Result<Digest256, GatewayError> {
        reg.validate().map_err(|e| GatewayError::BadInput(e.to_string()))?;
        if reg.owner_pk != self.owner.public_bytes() {
            return Err(GatewayError::NotOwner);
        }
        let sid = reg.stream_id();
        if self.streams.contains_key(&sid) {
            return Ok(sid);
        }
        self.submit(sid, TxBody::RegisterStream(reg.clone()))?;
        let keys = KeyRegression::generate(reg.max_epochs, &mut self.rng)?;
        let (sharing, publication) = SharingState::new(&keys, &mut self.rng)?;
        let meta = reg.meta();
        let mut s = OwnedStream {
            buffer: IngestBuffer::new(&meta, self.config.lateness_windows),
            cache: FifoCache::new(self.config.cache_capacity),
            current_key: keys.key(0)?,
            reg,
            meta,
            keys,
            sharing,
            grantees: BTreeMap::new(),
            last_hash: Digest256::ZERO,
            emitted: BTreeSet::new(),
            since_rotation: 0,
            unanchored: 0,
            last_checkpoint: None,
            outbox: VecDeque::new(),
        };
        queue_keymat(&mut s, KeyMaterial::wrapped(sid, 0, 0, publication.wrapped));
        self.streams.insert(sid, s);
        Ok(sid)
    }

    pub fn ingest(&mut self, sid: &Digest256, record: DataRecord) -> Result<IngestOutcome, GatewayError> {
        let s = self.stream_mut(sid)?;
        s.buffer.push(record)?;
        let ready = s.buffer.take_ready();
        self.seal_windows(sid, ready)
    }

    pub fn ingest_all(
        &mut self,
        sid: &Digest256,
        records: impl IntoIterator<Item = DataRecord>,
    ) -> Result<IngestOutcome, GatewayError> {
        let mut out = IngestOutcome::default();
        for r in records {
            out.sealed.extend(self.ingest(sid, r)?.sealed);
        }
        Ok(out)
    }

    /// Seals every open window now.
    pub fn flush(&mut self, sid: &Digest256) -> Result<IngestOutcome, GatewayError> {
        let ready = self.stream_mut(sid)?.buffer.drain();
        self.seal_windows(sid, ready)
    }

    fn seal_windows(
        &mut self,
        sid: &Digest256,
        windows: Vec<(u64, Vec<DataRecord>)>,
    ) -> Result<IngestOutcome, GatewayError> {
        let mut out = IngestOutcome::default();
        for (idx, records) in windows {
            if let Some(every) = self.config.rotate_every {
                if self.stream(sid)?.since_rotation >= every {
                    self.rotate(sid)?;
                }
            }
            let owner = self.owner.clone();
            let s = self.stream_mut(sid)?;
            let chunk = build_chunk(&s.meta, &records, s.last_hash, &s.current_key, &owner)?;
            s.last_hash = chunk.digest();
            s.emitted.insert(idx);
            s.since_rotation += 1;
            s.unanchored += 1;
            s.outbox.push_back(Outgoing {
                key: chunk_key(&s.meta, idx).0,
                value: chunk.to_bytes(),
                chunk_index: Some(idx),
            });
            s.cache.push(idx, Arc::new(chunk));
            out.sealed.push(idx);
            match self.checkpoint_tick(sid) {
                Ok(_) | Err(GatewayError::LedgerUnavailable) => {}
                Err(e) => return Err(e),
            }
        }
        self.pump(sid)?;
        Ok(out)
    }

    /// Submits a checkpoint once `checkpoint_interval` chunks are
    /// unanchored. A failed submission stays due and is retried on the next
    /// tick.
    pub fn checkpoint_tick(&mut self, sid: &Digest256) -> Result<Option<LedgerTx>, GatewayError> {
        let s = self.stream(sid)?;
        if s.unanchored < u64::from(s.meta.checkpoint_interval) {
            return Ok(None);
        }
        let index = *s.emitted.last().expect("unanchored chunks exist");
        let body = TxBody::Checkpoint { chunk_index: index, digest: s.last_hash };
        let tx = self.submit(*sid, body)?;
        let s = self.stream_mut(sid)?;
        s.last_checkpoint = Some((index, s.last_hash));
        s.unanchored = 0;
        Ok(Some(tx))
    }

    /// Uploads queued objects in order, stopping at the first failure that
    /// may clear by itself (registration not yet confirmed, storage down).
    /// Returns how many objects were stored.
    pub fn pump(&mut self, sid: &Digest256) -> Result<usize, GatewayError> {
        let storage = self.storage.clone();
        let s = self.stream_mut(sid)?;
        let mut stored = 0;
        while let Some(item) = s.outbox.front() {
            match storage.put(item.key, *sid, item.value.clone()) {
                Ok(()) => {
                    if let Some(idx) = item.chunk_index {
                        s.cache.ack(idx);
                    }
                    s.outbox.pop_front();
                    stored += 1;
                }
                Err(StorageError::UnknownStream | StorageError::StorageUnavailable(_)) => break,
                Err(e) => return Err(e.into()),
            }
        }
        s.cache.evict();
        Ok(stored)
    }

    pub fn pump_all(&mut self) -> Result<usize, GatewayError> {
        let sids: Vec<Digest256> = self.streams.keys().copied().collect();
        let mut n = 0;
        for sid in sids {
            n += self.pump(&sid)?;
            match self.checkpoint_tick(&sid) {
                Ok(_) | Err(GatewayError::LedgerUnavailable) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(n)
    }

    /// Plain key rotation: one wrapped object, no new tokens.
    pub fn rotate(&mut self, sid: &Digest256) -> Result<u32, GatewayError> {
        let mut rng = ChaCha20Rng::from_rng(&mut self.rng).expect("chacha seeding");
        let s = self.stream_mut(sid)?;
        let next = s.meta.epoch + 1;
        let p = s.sharing.rotate_and_share(&s.keys, next, &mut rng)?;
        s.set_epoch(next)?;
        s.since_rotation = 0;
        queue_keymat(s, KeyMaterial::wrapped(*sid, p.epoch, p.keypair_epoch, p.wrapped));
        self.pump(sid)?;
        Ok(next)
    }

    /// Grants read access: issues a token under the current one-time key,
    /// stores it for the grantee and records the grant on the ledger.
    pub fn share(&mut self, sid: &Digest256, req: &ShareRequest) -> Result<LedgerTx, GatewayError> {
        let s = self.stream_mut(sid)?;
        let token = s.sharing.grant(req.delegation);
        let km = KeyMaterial::token(*sid, s.sharing.keypair_epoch(), req.principal, token);
        let token_ref = sha256(&km.to_bytes());
        s.grantees.insert(req.principal, req.delegation.service);
        queue_keymat(s, km);
        let tx = self.submit(*sid, TxBody::Grant { grantee: req.principal, token_ref })?;
        self.pump(sid)?;
        Ok(tx)
    }

    /// Revokes `grantee`: new epoch under a fresh one-time key, fresh tokens
    /// for everyone else, and an overriding ledger transaction.
    pub fn revoke(&mut self, sid: &Digest256, grantee: &PrincipalId) -> Result<LedgerTx, GatewayError> {
        let mut rng = ChaCha20Rng::from_rng(&mut self.rng).expect("chacha seeding");
        let s = self.stream_mut(sid)?;
        let pre_id = *s.grantees.get(grantee).ok_or(GatewayError::NotGranted(*grantee))?;
        let p = s.sharing.revoke(&s.keys, &pre_id, &mut rng)?;
        s.grantees.remove(grantee);
        s.set_epoch(p.epoch)?;
        s.since_rotation = 0;
        queue_keymat(s, KeyMaterial::wrapped(*sid, p.epoch, p.keypair_epoch, p.wrapped));
        let by_pre: BTreeMap<PrincipalId, PrincipalId> = s.grantees.iter().map(|(l, p)| (*p, *l)).collect();
        for t in p.tokens {
            let principal = by_pre[&t.to];
            queue_keymat(s, KeyMaterial::token(*sid, p.keypair_epoch, principal, t));
        }
        let tx = self.submit(*sid, TxBody::Revoke { grantee: *grantee, new_epoch: p.epoch })?;
        self.pump(sid)?;
        Ok(tx)
    }

    /// A requester for the owner's own reads.
    pub fn owner_reader(&self, sid: &Digest256) -> Result<OwnerReader, GatewayError> {
        let s = self.stream(sid)?;
        Ok(OwnerReader::new(self.owner.clone(), s.keys.clone(), self.storage.service.clone()))
    }

    /// Range query: cached chunks are served locally, the rest fetched from
    /// storage with the requester's own credentials.
    pub fn query(
        &self,
        sid: &Digest256,
        t_a: u64,
        t_b: u64,
        requester: &mut dyn Requester,
    ) -> Result<QueryResult, GatewayError> {
        let s = self.stream(sid)?;
        let who = requester.principal();
        if who != s.meta.owner_id {
            let p = self.acl.query_permission(sid, &who, None).unwrap_or(Permission::Denied);
            if !p.allows_read() {
                return Err(GatewayError::PermissionDenied);
            }
        }
        let plan = query::plan(&s.meta, t_a, t_b, &s.emitted, |i| s.cache.get(i).is_some());
        let owner = PublicIdentity::from_bytes(&s.reg.owner_pk)?;
        let before = requester.storage_messages();
        let mut records = Vec::new();
        for (idx, source) in &plan.chunks {
            let chunk = match source {
                ChunkSource::Cache => s.cache.get(*idx).expect("planned from cache"),
                ChunkSource::Storage => {
                    let bytes = requester.fetch(chunk_key(&s.meta, *idx).0, *sid)?;
                    Arc::new(SealedChunk::from_bytes(&bytes)?)
                }
            };
            query::open_in_range(&s.meta, &owner, &chunk, t_a, t_b, requester, &mut records)?;
        }
        let storage_messages = requester.storage_messages() - before;
        Ok(QueryResult { records, plan, storage_messages })
    }

    pub fn export(&self, sid: &Digest256) -> Result<StreamSnapshot, GatewayError> {
        let s = self.stream(sid)?;
        if s.buffer.open_records() > 0 {
            return Err(GatewayError::BadInput("flush open windows before exporting".into()));
        }
        Ok(StreamSnapshot {
            registration: s.reg.clone(),
            epoch: s.meta.epoch,
            keys: s.keys.clone(),
            sharing: s.sharing.to_record(),
            grantees: s.grantees.iter().map(|(a, b)| (*a, *b)).collect(),
            cursor: s.buffer.cursor,
            last_hash: s.last_hash,
            emitted: s.emitted.iter().copied().collect(),
            since_rotation: s.since_rotation,
            unanchored: s.unanchored,
            last_checkpoint: s.last_checkpoint,
            outbox: s.outbox.iter().map(|o| (o.key, hex::encode(&o.value), o.chunk_index)).collect(),
        })
    }

    pub fn import(&mut self, snap: StreamSnapshot) -> Result<Digest256, GatewayError> {
        if snap.registration.owner_pk != self.owner.public_bytes() {
            return Err(GatewayError::NotOwner);
        }
        let sid = snap.registration.stream_id();
        let mut meta = snap.registration.meta();
        meta.epoch = snap.epoch;
        let mut buffer = IngestBuffer::new(&meta, self.config.lateness_windows);
        buffer.cursor = snap.cursor;
        let mut outbox = VecDeque::new();
        for (key, value, chunk_index) in snap.outbox {
            let value = hex::decode(value).map_err(|e| GatewayError::BadInput(e.to_string()))?;
            outbox.push_back(Outgoing { key, value, chunk_index });
        }
        let s = OwnedStream {
            current_key: snap.keys.key(snap.epoch)?,
            sharing: SharingState::from_record(&snap.sharing)?,
            reg: snap.registration,
            meta,
            keys: snap.keys,
            grantees: snap.grantees.into_iter().collect(),
            buffer,
            cache: FifoCache::new(self.config.cache_capacity),
            last_hash: snap.last_hash,
            emitted: snap.emitted.into_iter().collect(),
            since_rotation: snap.since_rotation,
            unanchored: snap.unanchored,
            last_checkpoint: snap.last_checkpoint,
            outbox,
        };
        self.streams.insert(sid, s);
        Ok(sid)
    }
}

fn queue_keymat(s: &mut OwnedStream, km: KeyMaterial) {
    s.outbox.push_back(Outgoing { key: km.storage_key(), value: km.to_bytes(), chunk_index: None });
}

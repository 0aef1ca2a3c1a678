use std::collections::BTreeMap;

use serde::Serialize;

use super::tx::{LedgerTx, TxBody};
use super::{Block, LedgerError, TX_MARKER};
use crate::crypto::PrincipalId;
use crate::stream::StreamRegistration;
use crate::wire::Writer;
use crate::{sha256, Digest256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Permission {
    Owner,
    Granted,
    Denied,
}

impl Permission {
    pub fn allows_read(self) -> bool {
        matches!(self, Permission::Owner | Permission::Granted)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GrantRecord {
    pub granted_at: u64,
    pub token_ref: Digest256,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Tombstone {
    pub grantee: PrincipalId,
    pub granted_at: u64,
    pub revoked_at: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Anchor {
    pub chunk_index: u64,
    pub digest: Digest256,
    pub height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamEntry {
    pub registration: StreamRegistration,
    pub owner_id: PrincipalId,
    pub registered_at: u64,
    pub grants: BTreeMap<PrincipalId, GrantRecord>,
    pub tombstones: Vec<Tombstone>,
    /// Key epoch announced by the latest revocation.
    pub epoch: u32,
    pub anchor: Option<Anchor>,
    /// Per-principal (height, granted) changes, for point-in-time queries.
    history: BTreeMap<PrincipalId, Vec<(u64, bool)>>,
}

impl StreamEntry {
    fn permission_at(&self, requester: &PrincipalId, height: u64) -> Permission {
        if *requester == self.owner_id {
            return Permission::Owner;
        }
        let granted = self
            .history
            .get(requester)
            .and_then(|h| h.iter().rev().find(|(at, _)| *at <= height))
            .is_some_and(|(_, g)| *g);
        if granted {
            Permission::Granted
        } else {
            Permission::Denied
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum Outcome {
    Applied,
    Rejected(String),
}

/// One line of the audit trail. Totally ordered by `(height, index)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditEvent {
    pub height: u64,
    pub index: u32,
    pub tx: Digest256,
    pub stream: Option<Digest256>,
    pub action: String,
    pub issuer: Option<PrincipalId>,
    pub parties: Vec<PrincipalId>,
    pub outcome: Outcome,
}

impl AuditEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("audit events always serialize")
    }
}

/// Materialized permission table: a pure fold over confirmed blocks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AclState {
    height: Option<u64>,
    tip_hash: Digest256,
    streams: BTreeMap<Digest256, StreamEntry>,
    audit: Vec<AuditEvent>,
}

impl AclState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds `blocks` from genesis.
    pub fn replay<'a>(blocks: impl IntoIterator<Item = &'a Block>) -> Result<Self, LedgerError> {
        let mut s = AclState::new();
        for b in blocks {
            s.apply_block(b)?;
        }
        Ok(s)
    }

    pub fn height(&self) -> Option<u64> {
        self.height
    }

    pub fn stream(&self, id: &Digest256) -> Option<&StreamEntry> {
        self.streams.get(id)
    }

    pub fn streams(&self) -> impl Iterator<Item = (&Digest256, &StreamEntry)> {
        self.streams.iter()
    }

    /// Functional form of [`AclState::apply_block`].
    pub fn applied(&self, block: &Block) -> Result<AclState, LedgerError> {
        let mut next = self.clone();
        next.apply_block(block)?;
        Ok(next)
    }

    pub fn apply_block(&mut self, block: &Block) -> Result<(), LedgerError> {
        let expected = self.height.map_or(0, |h| h + 1);
        if block.height != expected {
            return Err(LedgerError::HeightGap { expected, got: block.height });
        }
        if block.prev_hash != self.tip_hash {
            return Err(LedgerError::BrokenLink { height: block.height });
        }
        for (i, payload) in block.payloads.iter().enumerate() {
            self.apply_payload(block.height, i as u32, payload);
        }
        self.height = Some(block.height);
        self.tip_hash = block.digest();
        Ok(())
    }

    fn apply_payload(&mut self, height: u64, index: u32, payload: &[u8]) {
        if !payload.starts_with(TX_MARKER) {
            // Someone else's data on a shared chain.
            return;
        }
        let tx = match LedgerTx::from_bytes(payload) {
            Ok(tx) => tx,
            Err(e) => {
                self.audit.push(AuditEvent {
                    height,
                    index,
                    tx: sha256(payload),
                    stream: None,
                    action: "malformed".into(),
                    issuer: None,
                    parties: vec![],
                    outcome: Outcome::Rejected(e.to_string()),
                });
                return;
            }
        };
        let parties = match &tx.body {
            TxBody::Grant { grantee, .. } | TxBody::Revoke { grantee, .. } => vec![*grantee],
            _ => vec![],
        };
        let outcome = match self.apply_tx(height, &tx) {
            Ok(()) => Outcome::Applied,
            Err(reason) => Outcome::Rejected(reason.into()),
        };
        self.audit.push(AuditEvent {
            height,
            index,
            tx: tx.digest(),
            stream: Some(tx.stream_id),
            action: tx.kind().name().into(),
            issuer: Some(tx.issuer_id()),
            parties,
            outcome,
        });
    }

    fn apply_tx(&mut self, height: u64, tx: &LedgerTx) -> Result<(), &'static str> {
        tx.verify_signature().map_err(|_| "bad signature")?;
        if let TxBody::RegisterStream(reg) = &tx.body {
            if reg.stream_id() != tx.stream_id {
                return Err("stream id does not match registration");
            }
            if reg.owner_pk != tx.issuer_pk {
                return Err("issuer is not the registered owner");
            }
            if self.streams.contains_key(&tx.stream_id) {
                return Err("duplicate registration");
            }
            self.streams.insert(
                tx.stream_id,
                StreamEntry {
                    registration: reg.clone(),
                    owner_id: reg.owner_id(),
                    registered_at: height,
                    grants: BTreeMap::new(),
                    tombstones: Vec::new(),
                    epoch: 0,
                    anchor: None,
                    history: BTreeMap::new(),
                },
            );
            return Ok(());
        }
        let entry = self.streams.get_mut(&tx.stream_id).ok_or("unknown stream")?;
        if tx.issuer_id() != entry.owner_id {
            return Err("issuer is not the stream owner");
        }
        match &tx.body {
            TxBody::Grant { grantee, token_ref } => {
                if *grantee == entry.owner_id {
                    return Err("owner cannot be a grantee");
                }
                entry.grants.insert(*grantee, GrantRecord { granted_at: height, token_ref: *token_ref });
                entry.history.entry(*grantee).or_default().push((height, true));
            }
            TxBody::Revoke { grantee, new_epoch } => {
                let Some(prior) = entry.grants.get(grantee) else {
                    return Err("grantee not currently granted");
                };
                if *new_epoch <= entry.epoch {
                    return Err("revocation must advance the key epoch");
                }
                entry.tombstones.push(Tombstone {
                    grantee: *grantee,
                    granted_at: prior.granted_at,
                    revoked_at: height,
                });
                entry.grants.remove(grantee);
                entry.history.entry(*grantee).or_default().push((height, false));
                entry.epoch = *new_epoch;
            }
            TxBody::Checkpoint { chunk_index, digest } => {
                if entry.anchor.as_ref().is_some_and(|a| *chunk_index <= a.chunk_index) {
                    return Err("checkpoint does not advance the anchor");
                }
                entry.anchor = Some(Anchor { chunk_index: *chunk_index, digest: *digest, height });
            }
            TxBody::RegisterStream(_) => unreachable!(),
        }
        Ok(())
    }

    /// Permission of `requester` on `stream_id`, at the current height or a
    /// past one.
    pub fn query_permission(
        &self,
        stream_id: &Digest256,
        requester: &PrincipalId,
        at_height: Option<u64>,
    ) -> Result<Permission, LedgerError> {
        let unknown = || LedgerError::UnknownStream(*stream_id);
        let entry = self.streams.get(stream_id).ok_or_else(unknown)?;
        let height = at_height.or(self.height).ok_or_else(unknown)?;
        if entry.registered_at > height {
            return Err(unknown());
        }
        Ok(entry.permission_at(requester, height))
    }

    pub fn latest_anchor(&self, stream_id: &Digest256) -> Result<Option<Anchor>, LedgerError> {
        self.streams.get(stream_id).map(|e| e.anchor.clone()).ok_or(LedgerError::UnknownStream(*stream_id))
    }

    pub fn audit_log(&self, stream_id: &Digest256) -> Result<Vec<AuditEvent>, LedgerError> {
        if !self.streams.contains_key(stream_id) {
            return Err(LedgerError::UnknownStream(*stream_id));
        }
        Ok(self.audit.iter().filter(|e| e.stream.as_ref() == Some(stream_id)).cloned().collect())
    }

    /// Every audit event, including malformed payloads and transactions for
    /// unregistered streams.
    pub fn audit_all(&self) -> &[AuditEvent] {
        &self.audit
    }

    /// Digest of the canonical encoding of the whole state.
    pub fn digest(&self) -> Digest256 {
        let mut w = Writer::new();
        w.u64(self.height.map_or(u64::MAX, |h| h)).digest(&self.tip_hash);
        w.u32(self.streams.len() as u32);
        for (id, e) in &self.streams {
            w.digest(id).var(&e.registration.to_bytes()).u64(e.registered_at).u32(e.epoch);
            w.u32(e.grants.len() as u32);
            for (g, rec) in &e.grants {
                w.digest(g).u64(rec.granted_at).digest(&rec.token_ref);
            }
            w.u32(e.tombstones.len() as u32);
            for t in &e.tombstones {
                w.digest(&t.grantee).u64(t.granted_at).u64(t.revoked_at);
            }
            w.u32(e.history.len() as u32);
            for (p, h) in &e.history {
                w.digest(p).u32(h.len() as u32);
                for (at, g) in h {
                    w.u64(*at).u8(*g as u8);
                }
            }
            match &e.anchor {
                Some(a) => w.u8(1).u64(a.chunk_index).digest(&a.digest).u64(a.height),
                None => w.u8(0),
            };
        }
        w.u32(self.audit.len() as u32);
        for ev in &self.audit {
            w.u64(ev.height).u32(ev.index).digest(&ev.tx);
            w.u8(matches!(ev.outcome, Outcome::Applied) as u8);
        }
        sha256(&w.finish())
    }
}

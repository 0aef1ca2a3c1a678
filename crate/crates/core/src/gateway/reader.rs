//! Read-side credentials: how a requester obtains chunks and stream keys.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::GatewayError;
use crate::crypto::pre::{self, DelegationKey, PreKeyPair};
use crate::crypto::{Identity, KeyRegression, MemberState, PrincipalId, StreamKey};
use crate::storage::{keymat_key, Client, KeyMaterial, KeymatBody, StorageError, StorageService, WRAPPED_SLOT};
use crate::stream::StreamMeta;
use crate::Digest256;

/// Someone reading a stream: the owner or a grantee.
pub trait Requester {
    fn principal(&self) -> PrincipalId;
    fn stream_key(&mut self, meta: &StreamMeta, epoch: u32) -> Result<StreamKey, GatewayError>;
    /// Authenticated GET against the storage layer.
    fn fetch(&mut self, key: Digest256, stream_id: Digest256) -> Result<Vec<u8>, StorageError>;
    /// Storage-layer requests issued so far.
    fn storage_messages(&self) -> u64;
}

/// What a service hands the owner when asking for access.
#[derive(Clone, Debug)]
pub struct ShareRequest {
    pub principal: PrincipalId,
    pub delegation: DelegationKey,
}

impl ShareRequest {
    /// The request a service holding `identity` sends to an owner.
    pub fn new(identity: &Identity) -> Self {
        ShareRequest { principal: identity.id(), delegation: pre::delegation_key(&identity.pre_keypair().secret) }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = self.principal.0.to_vec();
        b.extend_from_slice(&self.delegation.to_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, GatewayError> {
        let (id, rest) = b.split_at_checked(32).ok_or_else(|| GatewayError::BadInput("short share request".into()))?;
        let principal = Digest256(id.try_into().expect("split at 32"));
        Ok(ShareRequest { principal, delegation: DelegationKey::from_bytes(rest)? })
    }
}

struct Fetcher {
    client: Client<dyn StorageService>,
    messages: u64,
}

impl Fetcher {
    fn get(&mut self, key: Digest256, stream_id: Digest256) -> Result<Vec<u8>, StorageError> {
        // CHALLENGE + GET
        self.messages += 2;
        self.client.get(key, stream_id)
    }
}

/// A service reading streams shared with it.
pub struct Reader {
    identity: Identity,
    pre: PreKeyPair,
    fetcher: Fetcher,
    states: BTreeMap<Digest256, MemberState>,
}

impl Reader {
    pub fn new(identity: Identity, storage: Arc<dyn StorageService>) -> Self {
        let pre = identity.pre_keypair();
        Reader {
            fetcher: Fetcher { client: Client::new(storage, identity.clone()), messages: 0 },
            identity,
            pre,
            states: BTreeMap::new(),
        }
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn share_request(&self) -> ShareRequest {
        ShareRequest { principal: self.identity.id(), delegation: pre::delegation_key(&self.pre.secret) }
    }

    /// Highest member state obtained for a stream.
    pub fn member_state(&self, stream_id: &Digest256) -> Option<&MemberState> {
        self.states.get(stream_id)
    }

    /// Gives the reader a member state obtained out of band, e.g. one it
    /// held before being revoked.
    pub fn insert_member_state(&mut self, stream_id: Digest256, state: MemberState) {
        self.states.insert(stream_id, state);
    }

    fn fetch_keymat(&mut self, sid: Digest256, epoch: u32, slot: PrincipalId) -> Result<KeyMaterial, GatewayError> {
        let bytes = self.fetcher.get(keymat_key(&sid, epoch, &slot), sid)?;
        KeyMaterial::from_bytes(&bytes).map_err(|e| StorageError::InvalidValue(e.to_string()).into())
    }

    /// Unwraps the member state published for `epoch`; `Ok(None)` if this
    /// reader has no token for the keypair protecting it.
    fn unwrap_epoch(&mut self, sid: Digest256, epoch: u32) -> Result<Option<MemberState>, GatewayError> {
        let wrapped = self.fetch_keymat(sid, epoch, WRAPPED_SLOT)?;
        let KeymatBody::Wrapped { keypair_epoch, key } = wrapped.body else {
            return Err(StorageError::InvalidValue("expected a wrapped key".into()).into());
        };
        let token = match self.fetch_keymat(sid, keypair_epoch, self.identity.id()) {
            Ok(KeyMaterial { body: KeymatBody::Token(t), .. }) => t,
            Ok(_) => return Err(StorageError::InvalidValue("expected a token".into()).into()),
            Err(GatewayError::Storage(StorageError::NotFound)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let token = token.unblind(&self.pre.secret)?;
        let mine = pre::reencrypt(&token, &key)?;
        let state = pre::decrypt(&self.pre.secret, &mine)?;
        Ok(Some(MemberState { epoch, state }))
    }
}

impl Requester for Reader {
    fn principal(&self) -> PrincipalId {
        self.identity.id()
    }

    fn stream_key(&mut self, meta: &StreamMeta, epoch: u32) -> Result<StreamKey, GatewayError> {
        let sid = meta.stream_id;
        if let Some(s) = self.states.get(&sid).filter(|s| s.epoch >= epoch) {
            return Ok(s.unwind(epoch)?);
        }
        // A token exists only for keypairs minted while granted; a later
        // epoch's state unwinds to the one asked for.
        let mut e = epoch;
        loop {
            match self.unwrap_epoch(sid, e) {
                Ok(Some(state)) => {
                    let key = state.unwind(epoch)?;
                    if self.states.get(&sid).map_or(true, |s| s.epoch < state.epoch) {
                        self.states.insert(sid, state);
                    }
                    return Ok(key);
                }
                Ok(None) => e = e.checked_add(1).ok_or(GatewayError::MissingKeyEpoch(epoch))?,
                Err(GatewayError::Storage(StorageError::NotFound)) => return Err(GatewayError::MissingKeyEpoch(epoch)),
                Err(err) => return Err(err),
            }
        }
    }

    fn fetch(&mut self, key: Digest256, stream_id: Digest256) -> Result<Vec<u8>, StorageError> {
        self.fetcher.get(key, stream_id)
    }

    fn storage_messages(&self) -> u64 {
        self.fetcher.messages
    }
}

/// The owner reading its own stream, with keys straight from the chain.
pub struct OwnerReader {
    identity: Identity,
    keys: KeyRegression,
    top: Option<MemberState>,
    fetcher: Fetcher,
}

impl OwnerReader {
    pub fn new(identity: Identity, keys: KeyRegression, storage: Arc<dyn StorageService>) -> Self {
        OwnerReader {
            fetcher: Fetcher { client: Client::new(storage, identity.clone()), messages: 0 },
            identity,
            keys,
            top: None,
        }
    }
}

impl Requester for OwnerReader {
    fn principal(&self) -> PrincipalId {
        self.identity.id()
    }

    fn stream_key(&mut self, _meta: &StreamMeta, epoch: u32) -> Result<StreamKey, GatewayError> {
        if self.top.as_ref().map_or(true, |s| s.epoch < epoch) {
            self.top = Some(self.keys.member_state(epoch)?);
        }
        Ok(self.top.as_ref().expect("set above").unwind(epoch)?)
    }

    fn fetch(&mut self, key: Digest256, stream_id: Digest256) -> Result<Vec<u8>, StorageError> {
        self.fetcher.get(key, stream_id)
    }

    fn storage_messages(&self) -> u64 {
        self.fetcher.messages
    }
}

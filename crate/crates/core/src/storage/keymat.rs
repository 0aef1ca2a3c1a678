//! Key-material objects: wrapped member states and blinded tokens.
//!
//! Layout: `"SVK1" ‖ stream_id ‖ epoch u32 ‖ grantee ‖ kind u8 ‖ body`.
//! A wrapped state sits in the slot of grantee [`WRAPPED_SLOT`] and its
//! body is `keypair_epoch u32 ‖ WrappedKey`; a token body is a
//! `BlindedToken`.

use crate::crypto::{BlindedToken, PrincipalId, WrappedKey};
use crate::wire::{Reader, WireError, Writer};
use crate::{sha256_parts, Digest256};

pub const KEYMAT_MAGIC: &[u8; 4] = b"SVK1";

/// Grantee slot used for the wrapped member state, readable by every
/// current reader of the stream.
pub const WRAPPED_SLOT: PrincipalId = Digest256::ZERO;

pub fn keymat_key(stream_id: &Digest256, epoch: u32, grantee: &PrincipalId) -> Digest256 {
    sha256_parts(&[&stream_id.0, b"keymat", &epoch.to_be_bytes(), &grantee.0])
}

#[derive(Clone, Debug, PartialEq)]
pub enum KeymatBody {
    Wrapped { keypair_epoch: u32, key: WrappedKey },
    Token(BlindedToken),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyMaterial {
    pub stream_id: Digest256,
    pub epoch: u32,
    pub grantee: PrincipalId,
    pub body: KeymatBody,
}

impl KeyMaterial {
    pub fn wrapped(stream_id: Digest256, epoch: u32, keypair_epoch: u32, key: WrappedKey) -> Self {
        KeyMaterial { stream_id, epoch, grantee: WRAPPED_SLOT, body: KeymatBody::Wrapped { keypair_epoch, key } }
    }

    pub fn token(stream_id: Digest256, keypair_epoch: u32, grantee: PrincipalId, token: BlindedToken) -> Self {
        KeyMaterial { stream_id, epoch: keypair_epoch, grantee, body: KeymatBody::Token(token) }
    }

    pub fn storage_key(&self) -> Digest256 {
        keymat_key(&self.stream_id, self.epoch, &self.grantee)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(KEYMAT_MAGIC).digest(&self.stream_id).u32(self.epoch).digest(&self.grantee);
        match &self.body {
            KeymatBody::Wrapped { keypair_epoch, key } => {
                w.u8(1).u32(*keypair_epoch).var(&key.to_bytes());
            }
            KeymatBody::Token(t) => {
                w.u8(2).var(&t.to_bytes());
            }
        }
        w.finish()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(b);
        if r.bytes(4)? != KEYMAT_MAGIC {
            return Err(WireError::Invalid("not a key-material object"));
        }
        let stream_id = r.digest()?;
        let epoch = r.u32()?;
        let grantee = r.digest()?;
        let body = match r.u8()? {
            1 => {
                let keypair_epoch = r.u32()?;
                let key = WrappedKey::from_bytes(r.var()?).map_err(|_| WireError::Invalid("wrapped key"))?;
                KeymatBody::Wrapped { keypair_epoch, key }
            }
            2 => KeymatBody::Token(BlindedToken::from_bytes(r.var()?).map_err(|_| WireError::Invalid("token"))?),
            _ => return Err(WireError::Invalid("key-material kind")),
        };
        r.finish()?;
        let km = KeyMaterial { stream_id, epoch, grantee, body };
        match (&km.body, km.grantee == WRAPPED_SLOT) {
            (KeymatBody::Wrapped { .. }, true) | (KeymatBody::Token(_), false) => Ok(km),
            _ => Err(WireError::Invalid("key-material slot does not match kind")),
        }
    }

    pub fn is_keymat(b: &[u8]) -> bool {
        b.starts_with(KEYMAT_MAGIC)
    }
}

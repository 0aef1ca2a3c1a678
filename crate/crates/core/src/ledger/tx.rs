use super::LedgerError;
use crate::crypto::identity::principal_id;
use crate::crypto::{Identity, PrincipalId, PublicIdentity};
use crate::stream::StreamRegistration;
use crate::wire::{Reader, WireError, Writer};
use crate::{sha256, sha256_parts, Digest256};

/// Marks payloads that belong to this state machine.
pub const TX_MARKER: &[u8; 4] = b"SVX1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TxKind {
    RegisterStream = 1,
    Grant = 2,
    Revoke = 3,
    Checkpoint = 4,
}

impl TxKind {
    pub fn name(self) -> &'static str {
        match self {
            TxKind::RegisterStream => "register",
            TxKind::Grant => "grant",
            TxKind::Revoke => "revoke",
            TxKind::Checkpoint => "checkpoint",
        }
    }

    fn from_u8(v: u8) -> Option<TxKind> {
        Some(match v {
            1 => TxKind::RegisterStream,
            2 => TxKind::Grant,
            3 => TxKind::Revoke,
            4 => TxKind::Checkpoint,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxBody {
    RegisterStream(StreamRegistration),
    /// `token_ref` is the digest of the token object held in storage.
    Grant {
        grantee: PrincipalId,
        token_ref: Digest256,
    },
    /// `new_epoch` is the key epoch that takes effect with the revocation.
    Revoke {
        grantee: PrincipalId,
        new_epoch: u32,
    },
    Checkpoint {
        chunk_index: u64,
        digest: Digest256,
    },
}

impl TxBody {
    pub fn kind(&self) -> TxKind {
        match self {
            TxBody::RegisterStream(_) => TxKind::RegisterStream,
            TxBody::Grant { .. } => TxKind::Grant,
            TxBody::Revoke { .. } => TxKind::Revoke,
            TxBody::Checkpoint { .. } => TxKind::Checkpoint,
        }
    }

    fn payload(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            TxBody::RegisterStream(reg) => {
                w.raw(&reg.to_bytes());
            }
            TxBody::Grant { grantee, token_ref } => {
                w.digest(grantee).digest(token_ref);
            }
            TxBody::Revoke { grantee, new_epoch } => {
                w.digest(grantee).u32(*new_epoch);
            }
            TxBody::Checkpoint { chunk_index, digest } => {
                w.u64(*chunk_index).digest(digest);
            }
        }
        w.finish()
    }

    fn parse(kind: TxKind, payload: &[u8]) -> Result<TxBody, WireError> {
        if kind == TxKind::RegisterStream {
            return StreamRegistration::from_bytes(payload).map(TxBody::RegisterStream);
        }
        let mut r = Reader::new(payload);
        let body = match kind {
            TxKind::Grant => TxBody::Grant { grantee: r.digest()?, token_ref: r.digest()? },
            TxKind::Revoke => TxBody::Revoke { grantee: r.digest()?, new_epoch: r.u32()? },
            TxKind::Checkpoint => TxBody::Checkpoint { chunk_index: r.u64()?, digest: r.digest()? },
            TxKind::RegisterStream => unreachable!(),
        };
        r.finish()?;
        Ok(body)
    }
}

/// A signed access-control transaction.
///
/// Encoding: `"SVX1" || kind(u8) || stream_id(32) || issuer_pk(32) ||
/// payload_len(u32) || payload || signature(64)`. The signature covers
/// `H("svault-tx" || kind || stream_id || issuer_pk || payload_len || payload)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerTx {
    pub stream_id: Digest256,
    pub issuer_pk: [u8; 32],
    pub body: TxBody,
    pub signature: [u8; 64],
}

fn signing_digest(kind: TxKind, stream_id: &Digest256, issuer_pk: &[u8; 32], payload: &[u8]) -> Digest256 {
    sha256_parts(&[
        b"svault-tx",
        &[kind as u8],
        &stream_id.0,
        issuer_pk,
        &(payload.len() as u32).to_be_bytes(),
        payload,
    ])
}

impl LedgerTx {
    pub fn signed(issuer: &Identity, stream_id: Digest256, body: TxBody) -> Self {
        let issuer_pk = issuer.public_bytes();
        let d = signing_digest(body.kind(), &stream_id, &issuer_pk, &body.payload());
        LedgerTx { stream_id, issuer_pk, signature: issuer.sign(&d.0), body }
    }

    pub fn register(owner: &Identity, reg: StreamRegistration) -> Self {
        Self::signed(owner, reg.stream_id(), TxBody::RegisterStream(reg))
    }

    pub fn kind(&self) -> TxKind {
        self.body.kind()
    }

    pub fn issuer_id(&self) -> PrincipalId {
        principal_id(&self.issuer_pk)
    }

    pub fn verify_signature(&self) -> Result<(), LedgerError> {
        let pk = PublicIdentity::from_bytes(&self.issuer_pk).map_err(|_| LedgerError::BadSignature)?;
        let d = signing_digest(self.kind(), &self.stream_id, &self.issuer_pk, &self.body.payload());
        pk.verify(&d.0, &self.signature).map_err(|_| LedgerError::BadSignature)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(TX_MARKER)
            .u8(self.kind() as u8)
            .digest(&self.stream_id)
            .raw(&self.issuer_pk)
            .var(&self.body.payload())
            .raw(&self.signature);
        w.finish()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, LedgerError> {
        let parse = || -> Result<LedgerTx, WireError> {
            let mut r = Reader::new(b);
            if r.bytes(4)? != TX_MARKER {
                return Err(WireError::Invalid("transaction marker"));
            }
            let kind = TxKind::from_u8(r.u8()?).ok_or(WireError::Invalid("transaction kind"))?;
            let stream_id = r.digest()?;
            let issuer_pk = r.array()?;
            let body = TxBody::parse(kind, r.var()?)?;
            let signature = r.array()?;
            r.finish()?;
            Ok(LedgerTx { stream_id, issuer_pk, body, signature })
        };
        parse().map_err(LedgerError::MalformedTx)
    }

    pub fn digest(&self) -> Digest256 {
        sha256(&self.to_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn encode_decode_and_verify() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let owner = Identity::generate(&mut rng);
        let reg = StreamRegistration::new(owner.public_bytes(), "s", 0, 10);
        let sid = reg.stream_id();
        let txs = [
            LedgerTx::register(&owner, reg),
            LedgerTx::signed(&owner, sid, TxBody::Grant { grantee: sha256(b"s1"), token_ref: sha256(b"t") }),
            LedgerTx::signed(&owner, sid, TxBody::Revoke { grantee: sha256(b"s1"), new_epoch: 3 }),
            LedgerTx::signed(&owner, sid, TxBody::Checkpoint { chunk_index: 9, digest: sha256(b"c") }),
        ];
        for tx in &txs {
            let back = LedgerTx::from_bytes(&tx.to_bytes()).unwrap();
            assert_eq!(&back, tx);
            back.verify_signature().unwrap();
        }
        let mut forged = txs[1].clone();
        forged.body = TxBody::Grant { grantee: sha256(b"evil"), token_ref: sha256(b"t") };
        assert_eq!(forged.verify_signature(), Err(LedgerError::BadSignature));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(LedgerTx::from_bytes(b"nope"), Err(LedgerError::MalformedTx(_))));
        let mut b = TX_MARKER.to_vec();
        b.push(9);
        assert!(matches!(LedgerTx::from_bytes(&b), Err(LedgerError::MalformedTx(_))));
    }
}

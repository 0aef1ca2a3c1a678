//! Ed25519 identities. A principal is known on the ledger and in chunk keys
//! only by the SHA-256 digest of its verification key.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};

use super::pre::{PreKeyPair, PreSecretKey};
use super::CryptoError;
use crate::{sha256, Digest256};

/// Pseudo-identity: digest of a verification key.
pub type PrincipalId = Digest256;

pub fn principal_id(verifying_key: &[u8; 32]) -> PrincipalId {
    sha256(verifying_key)
}

#[derive(Clone)]
pub struct Identity {
    signing: SigningKey,
}

impl Identity {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Identity { signing: SigningKey::generate(rng) }
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        Identity { signing: SigningKey::from_bytes(&secret) }
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn public(&self) -> PublicIdentity {
        PublicIdentity { key: self.signing.verifying_key() }
    }

    pub fn public_bytes(&self) -> [u8; 32] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn id(&self) -> PrincipalId {
        principal_id(&self.public_bytes())
    }

    pub fn sign(&self, msg: &[u8]) -> [u8; 64] {
        self.signing.sign(msg).to_bytes()
    }

    /// Long-lived PRE keypair bound to this identity, used when it reads
    /// streams shared with it.
    pub fn pre_keypair(&self) -> PreKeyPair {
        PreKeyPair::from_secret(PreSecretKey::derive(&self.secret_bytes()))
    }
}

impl std::fmt::Debug for Identity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Identity").field("id", &self.id()).finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct PublicIdentity {
    key: VerifyingKey,
}

impl PublicIdentity {
    pub fn from_bytes(bytes: &[u8; 32]) -> Result<Self, CryptoError> {
        VerifyingKey::from_bytes(bytes).map(|key| PublicIdentity { key }).map_err(|_| CryptoError::InvalidPublicKey)
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn id(&self) -> PrincipalId {
        principal_id(&self.to_bytes())
    }

    pub fn verify(&self, msg: &[u8], sig: &[u8; 64]) -> Result<(), CryptoError> {
        self.key.verify(msg, &Signature::from_bytes(sig)).map_err(|_| CryptoError::BadSignature)
    }
}

impl std::fmt::Debug for PublicIdentity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicIdentity({:?})", self.id())
    }
}

//! Cryptographic building blocks.
//!
//! Stream keys come from a key-regression chain ([`keyreg`]): the holder of
//! the member state for epoch `t` can derive every key `K_0..=K_t` but
//! nothing later. Member states are distributed with bidirectional proxy
//! re-encryption ([`pre`]) under a one-time keypair, so a plain key rotation
//! publishes one object regardless of the number of readers ([`sharing`]).

pub mod aead;
pub mod identity;
pub mod keyreg;
pub mod pre;
pub mod sharing;

use thiserror::Error;

pub use aead::StreamKey;
pub use identity::{Identity, PrincipalId, PublicIdentity};
pub use keyreg::{KeyRegression, MemberState, DEFAULT_MAX_EPOCHS};
pub use pre::{
    BlindedToken, DelegationKey, PreGroup, PreKeyPair, PrePublicKey, PreSecretKey, ReEncryptionToken, Ristretto,
    ToyGroup, WrappedKey,
};
pub use sharing::{Publication, SharingState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("epoch {requested} out of range (available up to {available})")]
    EpochOutOfRange { requested: u32, available: u32 },
    #[error("key regression chain must have at least one epoch")]
    EmptyChain,
    #[error("authentication tag mismatch")]
    BadTag,
    #[error("signature verification failed")]
    BadSignature,
    #[error("invalid public key encoding")]
    InvalidPublicKey,
    #[error("invalid ciphertext")]
    InvalidCiphertext,
    #[error("re-encryption token does not match ciphertext or key")]
    TokenMismatch,
    #[error("principal {0} is not currently granted")]
    NotCurrentlyGranted(PrincipalId),
    #[error("epoch must advance by exactly one (current {current}, requested {requested})")]
    NonSequentialEpoch { current: u32, requested: u32 },
}

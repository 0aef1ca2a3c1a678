//! Hash-chain key regression.
//!
//! The owner keeps a secret seed which is the chain head `stm_N`. Member
//! states run backwards, `stm_{i-1} = H(0x00 || stm_i)`, and the epoch key is
//! `K_i = H(0x01 || stm_i)`. Sharing `stm_t` therefore shares every key up to
//! and including epoch `t`, and nothing after it.

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::{CryptoError, StreamKey};
use crate::hash::hex_bytes;
use crate::sha256_parts;

/// Default chain length fixed at stream registration.
pub const DEFAULT_MAX_EPOCHS: u32 = 1 << 16;

const STATE_STEP: u8 = 0x00;
const KEY_EXTRACT: u8 = 0x01;

fn step(state: &[u8; 32]) -> [u8; 32] {
    sha256_parts(&[&[STATE_STEP], state]).0
}

fn extract(state: &[u8; 32]) -> [u8; 32] {
    sha256_parts(&[&[KEY_EXTRACT], state]).0
}

/// Owner side of the chain.
#[derive(Clone, Serialize, Deserialize)]
pub struct KeyRegression {
    max_epochs: u32,
    #[serde(with = "hex_bytes")]
    seed: [u8; 32],
}

impl KeyRegression {
    pub fn new(max_epochs: u32, seed: [u8; 32]) -> Result<Self, CryptoError> {
        if max_epochs == 0 {
            return Err(CryptoError::EmptyChain);
        }
        Ok(KeyRegression { max_epochs, seed })
    }

    pub fn generate<R: RngCore + CryptoRng>(max_epochs: u32, rng: &mut R) -> Result<Self, CryptoError> {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::new(max_epochs, seed)
    }

    pub fn max_epochs(&self) -> u32 {
        self.max_epochs
    }

    /// `stm_t`, computed with `N - t` state steps from the seed.
    pub fn member_state(&self, epoch: u32) -> Result<MemberState, CryptoError> {
        if epoch > self.max_epochs {
            return Err(CryptoError::EpochOutOfRange { requested: epoch, available: self.max_epochs });
        }
        let mut state = self.seed;
        for _ in epoch..self.max_epochs {
            state = step(&state);
        }
        Ok(MemberState { epoch, state })
    }

    pub fn key(&self, epoch: u32) -> Result<StreamKey, CryptoError> {
        Ok(self.member_state(epoch)?.key())
    }
}

impl std::fmt::Debug for KeyRegression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyRegression").field("max_epochs", &self.max_epochs).finish_non_exhaustive()
    }
}

/// Reader side: the state `stm_t` for one epoch.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberState {
    pub epoch: u32,
    #[serde(with = "hex_bytes")]
    pub state: [u8; 32],
}

impl MemberState {
    pub fn key(&self) -> StreamKey {
        StreamKey { epoch: self.epoch, key: extract(&self.state) }
    }

    /// Walks back to `stm_epoch` for any `epoch <= self.epoch`.
    pub fn unwind_state(&self, epoch: u32) -> Result<MemberState, CryptoError> {
        if epoch > self.epoch {
            return Err(CryptoError::EpochOutOfRange { requested: epoch, available: self.epoch });
        }
        let mut state = self.state;
        for _ in epoch..self.epoch {
            state = step(&state);
        }
        Ok(MemberState { epoch, state })
    }

    pub fn unwind(&self, epoch: u32) -> Result<StreamKey, CryptoError> {
        Ok(self.unwind_state(epoch)?.key())
    }
}

impl std::fmt::Debug for MemberState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemberState").field("epoch", &self.epoch).finish_non_exhaustive()
    }
}

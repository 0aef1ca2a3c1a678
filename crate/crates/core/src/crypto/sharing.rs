//! Owner-side key distribution: rotation publishes one wrapped member state
//! under the current one-time key; revocation mints a new one-time key and
//! reissues tokens for the remaining readers.

use std::collections::BTreeMap;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use super::pre::{self, BlindedToken, DelegationKey, PreGroup, PreKeyPair, PreSecretKey, Ristretto, WrappedKey};
use super::{CryptoError, KeyRegression, PrincipalId};

/// Objects the owner must publish after a key event.
#[derive(Clone, Debug)]
pub struct Publication<G: PreGroup = Ristretto> {
    pub epoch: u32,
    /// Epoch at which the one-time keypair protecting `wrapped` was minted.
    pub keypair_epoch: u32,
    pub wrapped: WrappedKey<G>,
    pub tokens: Vec<BlindedToken<G>>,
}

impl<G: PreGroup> Publication<G> {
    pub fn object_count(&self) -> usize {
        1 + self.tokens.len()
    }
}

#[derive(Clone, Debug)]
pub struct SharingState<G: PreGroup = Ristretto> {
    epoch: u32,
    one_time: PreKeyPair<G>,
    keypair_epoch: u32,
    grants: BTreeMap<PrincipalId, DelegationKey<G>>,
}

impl<G: PreGroup> SharingState<G> {
    /// Starts at epoch 0 and wraps `stm_0` under a fresh one-time key.
    pub fn new<R: RngCore + CryptoRng>(
        chain: &KeyRegression,
        rng: &mut R,
    ) -> Result<(Self, Publication<G>), CryptoError> {
        let one_time = PreKeyPair::generate(rng);
        let state = SharingState { epoch: 0, one_time, keypair_epoch: 0, grants: BTreeMap::new() };
        let wrapped = state.wrap(chain, 0, rng)?;
        Ok((state, Publication { epoch: 0, keypair_epoch: 0, wrapped, tokens: Vec::new() }))
    }

    fn wrap<R: RngCore + CryptoRng>(
        &self,
        chain: &KeyRegression,
        epoch: u32,
        rng: &mut R,
    ) -> Result<WrappedKey<G>, CryptoError> {
        let stm = chain.member_state(epoch)?;
        Ok(pre::encrypt(&self.one_time.public, &stm.state, rng))
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn keypair_epoch(&self) -> u32 {
        self.keypair_epoch
    }

    pub fn one_time_public(&self) -> pre::PrePublicKey<G> {
        self.one_time.public
    }

    pub fn grantees(&self) -> impl Iterator<Item = &PrincipalId> {
        self.grants.keys()
    }

    pub fn is_granted(&self, id: &PrincipalId) -> bool {
        self.grants.contains_key(id)
    }

    /// Records the grant and issues `T_{a→S}` under the current one-time key.
    pub fn grant(&mut self, delegation: DelegationKey<G>) -> BlindedToken<G> {
        let token = pre::issue_token(&self.one_time.secret, &delegation);
        self.grants.insert(delegation.service, delegation);
        token
    }

    /// Plain rotation to `new_epoch = t + 1`: one wrapped object, no tokens.
    pub fn rotate_and_share<R: RngCore + CryptoRng>(
        &mut self,
        chain: &KeyRegression,
        new_epoch: u32,
        rng: &mut R,
    ) -> Result<Publication<G>, CryptoError> {
        if Some(new_epoch) != self.epoch.checked_add(1) {
            return Err(CryptoError::NonSequentialEpoch { current: self.epoch, requested: new_epoch });
        }
        let wrapped = self.wrap(chain, new_epoch, rng)?;
        self.epoch = new_epoch;
        Ok(Publication { epoch: new_epoch, keypair_epoch: self.keypair_epoch, wrapped, tokens: Vec::new() })
    }

    /// Revokes `revoked`: bumps the epoch, replaces the one-time keypair and
    /// reissues one token per remaining grantee.
    pub fn revoke<R: RngCore + CryptoRng>(
        &mut self,
        chain: &KeyRegression,
        revoked: &PrincipalId,
        rng: &mut R,
    ) -> Result<Publication<G>, CryptoError> {
        if !self.grants.contains_key(revoked) {
            return Err(CryptoError::NotCurrentlyGranted(*revoked));
        }
        let new_epoch = self.epoch + 1;
        // Validate the chain has room before mutating anything.
        chain.member_state(new_epoch)?;
        self.grants.remove(revoked);
        self.one_time = PreKeyPair::generate(rng);
        self.keypair_epoch = new_epoch;
        self.epoch = new_epoch;
        let wrapped = self.wrap(chain, new_epoch, rng)?;
        let tokens = self.grants.values().map(|d| pre::issue_token(&self.one_time.secret, d)).collect();
        Ok(Publication { epoch: new_epoch, keypair_epoch: new_epoch, wrapped, tokens })
    }
}

/// Serializable form of [`SharingState`] over the production group.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SharingRecord {
    pub epoch: u32,
    pub keypair_epoch: u32,
    pub one_time_secret: String,
    pub grants: Vec<String>,
}

impl SharingState<Ristretto> {
    pub fn to_record(&self) -> SharingRecord {
        SharingRecord {
            epoch: self.epoch,
            keypair_epoch: self.keypair_epoch,
            one_time_secret: hex::encode(self.one_time.secret.to_bytes()),
            grants: self.grants.values().map(|d| hex::encode(d.to_bytes())).collect(),
        }
    }

    pub fn from_record(r: &SharingRecord) -> Result<Self, CryptoError> {
        let decode = |s: &str| hex::decode(s).map_err(|_| CryptoError::InvalidCiphertext);
        let secret = PreSecretKey::from_bytes(&decode(&r.one_time_secret)?)?;
        let mut grants = BTreeMap::new();
        for g in &r.grants {
            let d = DelegationKey::from_bytes(&decode(g)?)?;
            grants.insert(d.service, d);
        }
        Ok(SharingState {
            epoch: r.epoch,
            one_time: PreKeyPair::from_secret(secret),
            keypair_epoch: r.keypair_epoch,
            grants,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::MemberState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Service {
        keys: PreKeyPair,
        token: Option<pre::ReEncryptionToken>,
    }

    impl Service {
        fn new(rng: &mut ChaCha20Rng) -> Self {
            Service { keys: PreKeyPair::generate(rng), token: None }
        }

        fn accept(&mut self, t: &BlindedToken) {
            self.token = Some(t.unblind(&self.keys.secret).unwrap());
        }

        fn open(&self, p: &Publication) -> Result<MemberState, CryptoError> {
            let token = self.token.as_ref().ok_or(CryptoError::TokenMismatch)?;
            let mine = pre::reencrypt(token, &p.wrapped)?;
            Ok(MemberState { epoch: p.epoch, state: pre::decrypt(&self.keys.secret, &mine)? })
        }
    }

    fn setup(n: usize, seed: u64) -> (ChaCha20Rng, KeyRegression, SharingState, Vec<Service>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let chain = KeyRegression::generate(64, &mut rng).unwrap();
        let (mut state, _) = SharingState::new(&chain, &mut rng).unwrap();
        let mut services: Vec<Service> = (0..n).map(|_| Service::new(&mut rng)).collect();
        for s in services.iter_mut() {
            let t = state.grant(pre::delegation_key(&s.keys.secret));
            s.accept(&t);
        }
        (rng, chain, state, services)
    }

    #[test]
    fn rotation_publishes_one_object() {
        for n in [0, 5] {
            let (mut rng, chain, mut state, services) = setup(n, 1);
            let p = state.rotate_and_share(&chain, 1, &mut rng).unwrap();
            assert_eq!(p.object_count(), 1);
            for s in &services {
                assert_eq!(s.open(&p).unwrap(), chain.member_state(1).unwrap());
            }
        }
    }

    #[test]
    fn consecutive_rotations_compose_with_unwind() {
        let (mut rng, chain, mut state, services) = setup(2, 2);
        state.rotate_and_share(&chain, 1, &mut rng).unwrap();
        let p = state.rotate_and_share(&chain, 2, &mut rng).unwrap();
        let stm = services[0].open(&p).unwrap();
        assert_eq!(stm.unwind(1).unwrap(), chain.key(1).unwrap());
        assert_eq!(stm.unwind(0).unwrap(), chain.key(0).unwrap());
        assert!(matches!(
            state.rotate_and_share(&chain, 4, &mut rng),
            Err(CryptoError::NonSequentialEpoch { current: 2, requested: 4 })
        ));
    }

    #[test]
    fn revoke_reissues_tokens_for_remaining() {
        let (mut rng, chain, mut state, mut services) = setup(3, 3);
        let revoked = services[1].keys.id();
        let p = state.revoke(&chain, &revoked, &mut rng).unwrap();
        assert_eq!(p.tokens.len(), 2);
        assert_eq!(p.epoch, 1);
        for t in &p.tokens {
            let s = services.iter_mut().find(|s| s.keys.id() == t.to).unwrap();
            s.accept(t);
        }
        assert_eq!(services[0].open(&p).unwrap(), chain.member_state(1).unwrap());
        assert_eq!(services[2].open(&p).unwrap(), chain.member_state(1).unwrap());
        // The revoked service still holds its old token.
        assert_eq!(services[1].open(&p), Err(CryptoError::TokenMismatch));
        assert_eq!(state.revoke(&chain, &revoked, &mut rng).unwrap_err(), CryptoError::NotCurrentlyGranted(revoked));
    }

    #[test]
    fn revoking_last_service_still_rotates() {
        let (mut rng, chain, mut state, services) = setup(1, 4);
        let p = state.revoke(&chain, &services[0].keys.id(), &mut rng).unwrap();
        assert!(p.tokens.is_empty());
        assert_eq!(state.epoch(), 1);
    }

    #[test]
    fn record_round_trip() {
        let (_, _, state, _) = setup(2, 5);
        let back = SharingState::from_record(&state.to_record()).unwrap();
        assert_eq!(back.epoch(), state.epoch());
        assert_eq!(back.one_time_public(), state.one_time_public());
        assert_eq!(back.grantees().collect::<Vec<_>>(), state.grantees().collect::<Vec<_>>());
    }
}

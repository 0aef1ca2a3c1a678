use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{HarnessError, Profile};
use crate::crypto::Identity;
use crate::gateway::{Gateway, Reader};
use crate::ledger::{Ledger, SimulatedChain};
use crate::storage::{Loopback, StorageNode, StorageService};
use crate::stream::StreamRegistration;

/// One owner deployment: a simulated chain, a ledger follower, a storage
/// node reached through the wire protocol, and the owner's gateway.
pub struct World {
    pub profile: Profile,
    pub chain: Arc<SimulatedChain>,
    pub ledger: Ledger,
    pub node: Arc<StorageNode>,
    pub transport: Arc<Loopback>,
    pub gateway: Gateway,
    rng: ChaCha20Rng,
}

impl World {
    pub fn new(profile: &Profile, seed: u64) -> Self {
        Self::with_node(profile, Arc::new(StorageNode::in_memory(seed ^ 0x5eed)), seed)
    }

    pub fn with_node(profile: &Profile, node: Arc<StorageNode>, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let chain = Arc::new(SimulatedChain::new(profile.chain, 0));
        let ledger = Ledger::new(chain.clone(), profile.chain.confirmations);
        let transport = Arc::new(Loopback::new(node.clone()));
        let owner = Identity::generate(&mut rng);
        let gateway = Gateway::new(owner, chain.clone(), transport.clone(), profile.gateway.clone(), seed);
        World { profile: profile.clone(), chain, ledger, node, transport, gateway, rng }
    }

    pub fn storage(&self) -> Arc<dyn StorageService> {
        self.transport.clone()
    }

    /// A fresh identity drawn from the world's seed.
    pub fn new_identity(&mut self) -> Identity {
        Identity::generate(&mut self.rng)
    }

    pub fn reader(&self, identity: Identity) -> Reader {
        Reader::new(identity, self.storage())
    }

    /// A registration for the owner using the profile's stream settings.
    pub fn registration(&self, name: &str, t0: u64) -> StreamRegistration {
        let mut reg = StreamRegistration::new(self.gateway.owner().public_bytes(), name, t0, self.profile.delta_ms)
            .with_checkpoint_interval(self.profile.checkpoint_interval);
        reg.codec = self.profile.codec;
        reg
    }

    /// Mines one block, follows the ledger, hands the new permission
    /// snapshot to the node and the gateway, then retries pending uploads.
    pub fn tick(&mut self) -> Result<(), HarnessError> {
        self.chain.mine();
        self.ledger.sync()?;
        let snap = self.ledger.snapshot();
        self.node.set_acl(snap.clone());
        self.gateway.set_acl(snap);
        self.gateway.pump_all()?;
        Ok(())
    }

    /// Ticks until everything submitted so far is confirmed.
    pub fn settle(&mut self) -> Result<(), HarnessError> {
        for _ in 0..self.profile.chain.confirmations.max(1) {
            self.tick()?;
        }
        Ok(())
    }
}

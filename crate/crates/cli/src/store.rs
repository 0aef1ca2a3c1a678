//! On-disk layout of a data directory:
//!
//! ```text
//! chain.bin              mined blocks, length-prefixed
//! store/                 the storage node's objects
//! keys/<name>.key        identity secret, hex
//! keys/<name>.request    share request for the identity, hex
//! streams/<id>.json      gateway snapshot of an owned stream
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use streamvault::crypto::Identity;
use streamvault::gateway::{Gateway, ShareRequest, StreamSnapshot};
use streamvault::harness::Profile;
use streamvault::ledger::{AclState, Block, ChainAdapter, Ledger, SimulatedChain};
use streamvault::storage::{DiskBackend, Loopback, NodeConfig, StorageNode, StorageService, SystemClock};
use streamvault::Digest256;

use crate::error::CliError;

pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: PathBuf) -> Result<Self, CliError> {
        for sub in ["keys", "streams", "store"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(DataDir { root })
    }

    fn key_path(&self, name: &str) -> Result<PathBuf, CliError> {
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(CliError::Usage(format!("identity name {name:?} must be [A-Za-z0-9_-]+")));
        }
        Ok(self.root.join("keys").join(name))
    }

    pub fn save_identity(&self, name: &str, id: &Identity, request: &ShareRequest) -> Result<(), CliError> {
        let base = self.key_path(name)?;
        if base.with_extension("key").exists() {
            return Err(CliError::Usage(format!("identity {name:?} already exists")));
        }
        write_atomic(&base.with_extension("key"), hex::encode(id.secret_bytes()).as_bytes())?;
        write_atomic(&base.with_extension("request"), hex::encode(request.to_bytes()).as_bytes())
    }

    pub fn identity(&self, name: &str) -> Result<Identity, CliError> {
        let path = self.key_path(name)?.with_extension("key");
        let text = fs::read_to_string(&path).map_err(|_| CliError::Usage(format!("no identity named {name:?}")))?;
        let secret: [u8; 32] = hex::decode(text.trim())
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| CliError::Io(format!("{} is not a 32-byte hex secret", path.display())))?;
        Ok(Identity::from_secret(secret))
    }

    pub fn share_request(&self, name: &str) -> Result<ShareRequest, CliError> {
        let path = self.key_path(name)?.with_extension("request");
        let text = fs::read_to_string(&path).map_err(|_| CliError::Usage(format!("no share request for {name:?}")))?;
        let bytes = hex::decode(text.trim()).map_err(|e| CliError::Io(e.to_string()))?;
        Ok(ShareRequest::from_bytes(&bytes)?)
    }

    pub fn load_chain(&self, profile: &Profile) -> Result<Arc<SimulatedChain>, CliError> {
        let path = self.root.join("chain.bin");
        let Ok(bytes) = fs::read(&path) else {
            return Ok(Arc::new(SimulatedChain::new(profile.chain, 0)));
        };
        let mut blocks = Vec::new();
        let mut rest = &bytes[..];
        while !rest.is_empty() {
            let corrupt = || CliError::Io(format!("{} is corrupt", path.display()));
            let (len, tail) = rest.split_at_checked(4).ok_or_else(corrupt)?;
            let len = u32::from_be_bytes(len.try_into().expect("4 bytes")) as usize;
            let (body, tail) = tail.split_at_checked(len).ok_or_else(corrupt)?;
            blocks.push(Block::from_bytes(body).map_err(|e| CliError::Io(e.to_string()))?);
            rest = tail;
        }
        Ok(Arc::new(SimulatedChain::from_blocks(profile.chain, blocks)?))
    }

    pub fn save_chain(&self, chain: &SimulatedChain) -> Result<(), CliError> {
        let mut out = Vec::new();
        for b in chain.blocks() {
            let bytes = b.to_bytes();
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(&bytes);
        }
        write_atomic(&self.root.join("chain.bin"), &out)
    }

    pub fn open_node(&self, seed: u64) -> Result<Arc<StorageNode>, CliError> {
        let backend = DiskBackend::open(self.root.join("store"))?;
        Ok(Arc::new(StorageNode::new(Box::new(backend), NodeConfig::default(), Arc::new(SystemClock), seed)))
    }

    pub fn snapshots(&self) -> Result<Vec<StreamSnapshot>, CliError> {
        let mut out = Vec::new();
        let mut paths: Vec<PathBuf> =
            fs::read_dir(self.root.join("streams"))?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        paths.sort();
        for p in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "json")) {
            let text = fs::read_to_string(&p)?;
            out.push(serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?);
        }
        Ok(out)
    }

    pub fn save_snapshot(&self, sid: &Digest256, snap: &StreamSnapshot) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(snap).map_err(|e| CliError::Other(e.to_string()))?;
        write_atomic(&self.root.join("streams").join(format!("{sid}.json")), text.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One invocation's view of the deployment: the persisted chain, a ledger
/// follower over it, and the local storage node.
pub struct Session {
    pub dir: DataDir,
    pub profile: Profile,
    pub seed: u64,
    pub chain: Arc<SimulatedChain>,
    pub ledger: Ledger,
    pub node: Arc<StorageNode>,
    pub storage: Arc<dyn StorageService>,
}

impl Session {
    pub fn open(dir: DataDir, profile: Profile, seed: u64) -> Result<Self, CliError> {
        let chain = dir.load_chain(&profile)?;
        let mut ledger = Ledger::new(chain.clone(), profile.chain.confirmations);
        ledger.sync()?;
        let node = dir.open_node(seed)?;
        node.set_acl(ledger.snapshot());
        let storage: Arc<dyn StorageService> = Arc::new(Loopback::new(node.clone()));
        Ok(Session { dir, profile, seed, chain, ledger, node, storage })
    }

    pub fn acl(&self) -> &AclState {
        self.ledger.state()
    }

    /// A gateway for `owner` holding every stream snapshot it owns.
    pub fn gateway(&self, owner: &Identity) -> Result<Gateway, CliError> {
        // Fresh randomness per invocation unless the caller pinned a seed.
        let seed = self.seed ^ self.chain.tip_height().wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut g =
            Gateway::new(owner.clone(), self.chain.clone(), self.storage.clone(), self.profile.gateway.clone(), seed);
        for snap in self.dir.snapshots()? {
            if snap.registration.owner_pk == owner.public_bytes() {
                g.import(snap)?;
            }
        }
        g.set_acl(self.ledger.snapshot());
        Ok(g)
    }

    /// Mines until everything submitted is confirmed, pushing pending
    /// uploads after each block, then persists chain and snapshots.
    pub fn commit(&mut self, gateway: Option<&mut Gateway>) -> Result<(), CliError> {
        let mut gateway = gateway;
        for _ in 0..self.profile.chain.confirmations.max(1) {
            self.chain.mine();
            self.ledger.sync()?;
            self.node.set_acl(self.ledger.snapshot());
            if let Some(g) = gateway.as_deref_mut() {
                g.set_acl(self.ledger.snapshot());
                g.pump_all()?;
            }
        }
        self.dir.save_chain(&self.chain)?;
        if let Some(g) = gateway {
            let sids: Vec<Digest256> = g.streams().copied().collect();
            for sid in sids {
                self.dir.save_snapshot(&sid, &g.export(&sid)?)?;
            }
        }
        Ok(())
    }

    /// Resolves a stream that `owner` must own on the ledger.
    pub fn resolve_owned(&self, stream: &str, owner: &Identity) -> Result<Digest256, CliError> {
        let sid = self.resolve(stream)?;
        match self.acl().stream(&sid) {
            Some(e) if e.owner_id == owner.id() => Ok(sid),
            Some(_) => Err(CliError::Permission(format!("{} does not own stream {sid}", owner.id()))),
            None => Err(CliError::Usage(format!("stream {sid} is not registered"))),
        }
    }

    /// A stream id given as hex or as a registered stream name.
    pub fn resolve(&self, stream: &str) -> Result<Digest256, CliError> {
        if let Ok(sid) = stream.parse::<Digest256>() {
            return Ok(sid);
        }
        let hits: Vec<Digest256> =
            self.acl().streams().filter(|(_, e)| e.registration.name == stream).map(|(sid, _)| *sid).collect();
        match hits[..] {
            [sid] => Ok(sid),
            [] => Err(CliError::Usage(format!("no registered stream named {stream:?}"))),
            _ => Err(CliError::Usage(format!("stream name {stream:?} is ambiguous, use the id"))),
        }
    }
}

//! Backends hold bytes and nothing else; permissions live in the node.

use std::collections::BTreeMap;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use super::StorageError;
use crate::dht::{DhtError, Overlay};
use crate::Digest256;

pub trait Backend: Send + Sync {
    fn put(&self, key: &Digest256, value: &[u8]) -> Result<(), StorageError>;
    fn get(&self, key: &Digest256) -> Result<Option<Vec<u8>>, StorageError>;
    /// All entries whose key starts with `prefix`, ordered by key.
    fn scan_prefix(&self, prefix: &[u8]) -> Result<Vec<(Digest256, Vec<u8>)>, StorageError>;
}

#[derive(Default)]
pub struct MemoryBackend {
    map: RwLock<BTreeMap<Digest256, Vec<u8>>>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.read().is_empty()
    }
}

impl Backend for MemoryBackend {
    fn put(&self, key: &Digest256, value: &[u8]) -> Result<(), StorageError> {
        self.map.write().insert(*key, value.to_vec());
        Ok(())
    }

    fn get(&self, key: &Digest256) -> Result<Option<Vec<u8>>, StorageError> {
        Ok(self.map.read().get(key).cloned())
    }

    fn scan_prefix(&self, prefix: &[u8]) -> Result<Vec<(Digest256, Vec<u8>)>, StorageError> {
        Ok(self.map.read().iter().filter(|(k, _)| k.0.starts_with(prefix)).map(|(k, v)| (*k, v.clone())).collect())
    }
}

/// One file per key, named by the key's hex digest. Writes go to a temp
/// file that is synced and renamed into place.
pub struct DiskBackend {
    dir: PathBuf,
}

fn io_err(e: std::io::Error) -> StorageError {
    StorageError::StorageUnavailable(e.to_string())
}

impl DiskBackend {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StorageError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err)?;
        Ok(DiskBackend { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl Backend for DiskBackend {
    fn put(&self, key: &Digest256, value: &[u8]) -> Result<(), StorageError> {
        let path = self.dir.join(key.to_hex());
        let tmp = self.dir.join(format!(".{}.tmp", key.to_hex()));
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(value).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)
    }

    fn get(&self, key: &Digest256) -> Result<Option<Vec<u8>>, StorageError> {
        match fs::read(self.dir.join(key.to_hex())) {
            Ok(v) => Ok(Some(v)),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(e)),
        }
    }

    fn scan_prefix(&self, prefix: &[u8]) -> Result<Vec<(Digest256, Vec<u8>)>, StorageError> {
        let hex_prefix = hex::encode(prefix);
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(io_err)? {
            let name = entry.map_err(io_err)?.file_name();
            let Some(name) = name.to_str() else { continue };
            if !name.starts_with(&hex_prefix) {
                continue;
            }
            let Ok(key) = Digest256::from_hex(name) else { continue };
            if let Some(v) = self.get(&key)? {
                out.push((key, v));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}

/// Stores through a simulated overlay, entering it at node `via`.
pub struct DhtBackend {
    overlay: Arc<Mutex<Overlay>>,
    via: usize,
}

impl DhtBackend {
    pub fn new(overlay: Arc<Mutex<Overlay>>, via: usize) -> Self {
        DhtBackend { overlay, via }
    }

    pub fn overlay(&self) -> &Arc<Mutex<Overlay>> {
        &self.overlay
    }
}

impl Backend for DhtBackend {
    fn put(&self, key: &Digest256, value: &[u8]) -> Result<(), StorageError> {
        self.overlay
            .lock()
            .put(self.via, key, value.to_vec())
            .map(|_| ())
            .map_err(|e| StorageError::StorageUnavailable(e.to_string()))
    }

    fn get(&self, key: &Digest256) -> Result<Option<Vec<u8>>, StorageError> {
        match self.overlay.lock().get(self.via, key) {
            Ok(r) => Ok(Some(r.value)),
            Err(DhtError::NotFound) => Ok(None),
            Err(e) => Err(StorageError::StorageUnavailable(e.to_string())),
        }
    }

    /// Answered from the simulator's global view; a deployed overlay has no
    /// efficient prefix scan.
    fn scan_prefix(&self, prefix: &[u8]) -> Result<Vec<(Digest256, Vec<u8>)>, StorageError> {
        Ok(self.overlay.lock().scan_prefix(prefix))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dht::{DhtConfig, LatencyModel};
    use crate::sha256;

    fn exercise(b: &dyn Backend) {
        let k1 = sha256(b"a");
        let k2 = sha256(b"b");
        assert_eq!(b.get(&k1).unwrap(), None);
        b.put(&k1, b"one").unwrap();
        b.put(&k2, b"two").unwrap();
        assert_eq!(b.get(&k1).unwrap().as_deref(), Some(&b"one"[..]));
        let all = b.scan_prefix(&[]).unwrap();
        assert_eq!(all.len(), 2);
        let only = b.scan_prefix(&k2.0[..3]).unwrap();
        assert_eq!(only, vec![(k2, b"two".to_vec())]);
    }

    #[test]
    fn memory_round_trip() {
        exercise(&MemoryBackend::new());
    }

    #[test]
    fn disk_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        exercise(&DiskBackend::open(dir.path()).unwrap());
        let reopened = DiskBackend::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&sha256(b"b")).unwrap().as_deref(), Some(&b"two"[..]));
    }

    #[test]
    fn dht_backend_goes_through_the_overlay() {
        let overlay = Overlay::build(DhtConfig::default(), LatencyModel::uniform(10.0), 32, 5);
        let overlay = Arc::new(Mutex::new(overlay));
        let backend = DhtBackend::new(overlay.clone(), 0);
        exercise(&backend);
        let k = sha256(b"a");
        let holders = overlay.lock().holders(&k);
        assert_eq!(holders.len(), 3);
        // Another entry point sees the same value.
        assert_eq!(DhtBackend::new(overlay, 17).get(&k).unwrap().as_deref(), Some(&b"one"[..]));
    }
}

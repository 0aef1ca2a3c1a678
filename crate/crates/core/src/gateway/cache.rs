use std::collections::VecDeque;
use std::sync::Arc;

use crate::stream::SealedChunk;

#[derive(Clone, Debug)]
struct Entry {
    index: u64,
    chunk: Arc<SealedChunk>,
    acked: bool,
}

/// Recent sealed chunks of one stream. Eviction is oldest-first and stops
/// at the first chunk storage has not acknowledged, so the cache can
/// temporarily exceed its capacity but never drops unstored data.
#[derive(Clone, Debug)]
pub struct FifoCache {
    capacity: usize,
    entries: VecDeque<Entry>,
}

impl FifoCache {
    pub fn new(capacity: usize) -> Self {
        FifoCache { capacity, entries: VecDeque::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, index: u64, chunk: Arc<SealedChunk>) {
        self.entries.push_back(Entry { index, chunk, acked: false });
    }

    pub fn ack(&mut self, index: u64) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.index == index) {
            e.acked = true;
        }
    }

    pub fn get(&self, index: u64) -> Option<Arc<SealedChunk>> {
        self.entries.iter().find(|e| e.index == index).map(|e| e.chunk.clone())
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.index)
    }

    pub fn unacked(&self) -> usize {
        self.entries.iter().filter(|e| !e.acked).count()
    }

    /// Evicts while over capacity; returns the evicted indices.
    pub fn evict(&mut self) -> Vec<u64> {
        let mut out = Vec::new();
        while self.entries.len() > self.capacity && self.entries.front().is_some_and(|e| e.acked) {
            out.push(self.entries.pop_front().expect("non-empty").index);
        }
        out
    }
}

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use serde::Serialize;

use super::{GatewayError, Requester};
use crate::crypto::PublicIdentity;
use crate::storage::StorageError;
use crate::stream::{chunk_index_for, chunk_key, open_chunk, DataRecord, SealedChunk, StreamMeta};
use crate::Digest256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkSource {
    Cache,
    Storage,
}

/// Chunks a range query touches and where each comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QueryPlan {
    pub stream_id: Digest256,
    pub t_a: u64,
    pub t_b: u64,
    pub chunks: Vec<(u64, ChunkSource)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryResult {
    pub records: Vec<DataRecord>,
    pub plan: QueryPlan,
    /// Storage-layer requests made while answering, key fetches included.
    pub storage_messages: u64,
}

/// Indices of the windows intersecting `[t_a, t_b)`.
pub fn window_range(meta: &StreamMeta, t_a: u64, t_b: u64) -> Option<RangeInclusive<u64>> {
    if t_a >= t_b || t_b <= meta.t0 {
        return None;
    }
    let lo = chunk_index_for(t_a.max(meta.t0), meta).ok()?;
    let hi = chunk_index_for(t_b - 1, meta).ok()?;
    Some(lo..=hi)
}

pub(super) fn plan(
    meta: &StreamMeta,
    t_a: u64,
    t_b: u64,
    emitted: &BTreeSet<u64>,
    cached: impl Fn(u64) -> bool,
) -> QueryPlan {
    let chunks = window_range(meta, t_a, t_b)
        .map(|r| {
            emitted.range(r).map(|i| (*i, if cached(*i) { ChunkSource::Cache } else { ChunkSource::Storage })).collect()
        })
        .unwrap_or_default();
    QueryPlan { stream_id: meta.stream_id, t_a, t_b, chunks }
}

pub(super) fn open_in_range(
    meta: &StreamMeta,
    owner: &PublicIdentity,
    chunk: &SealedChunk,
    t_a: u64,
    t_b: u64,
    requester: &mut dyn Requester,
    out: &mut Vec<DataRecord>,
) -> Result<(), GatewayError> {
    let key = requester.stream_key(meta, chunk.header.epoch)?;
    let records = open_chunk(chunk, &key, owner)?;
    out.extend(records.into_iter().filter(|r| r.timestamp >= t_a && r.timestamp < t_b));
    Ok(())
}

/// Reads `[t_a, t_b)` straight from storage, without a gateway. Windows
/// with no stored chunk are skipped.
pub fn read_from_storage(
    meta: &StreamMeta,
    owner: &PublicIdentity,
    t_a: u64,
    t_b: u64,
    requester: &mut dyn Requester,
) -> Result<Vec<DataRecord>, GatewayError> {
    let mut out = Vec::new();
    let Some(range) = window_range(meta, t_a, t_b) else {
        return Ok(out);
    };
    for idx in range {
        let bytes = match requester.fetch(chunk_key(meta, idx).0, meta.stream_id) {
            Ok(b) => b,
            Err(StorageError::NotFound) => continue,
            Err(e) => return Err(e.into()),
        };
        let chunk = SealedChunk::from_bytes(&bytes)?;
        if chunk.header.chunk_index != idx || chunk.header.stream_id != meta.stream_id {
            return Err(GatewayError::Chunk(crate::stream::ChunkError::StreamMismatch));
        }
        open_in_range(meta, owner, &chunk, t_a, t_b, requester, &mut out)?;
    }
    Ok(out)
}

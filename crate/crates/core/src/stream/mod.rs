//! Stream data model: records, chunk windows, compression, and sealed
//! hash-chained chunks.
//!
//! Chunks cover fixed time windows of `delta` ms starting at `t0`, so the
//! chunk holding a timestamp is found by arithmetic and its storage key is
//! a digest of `(stream_id, owner_id, H(start_ts))`. Empty windows emit no
//! chunk; `prev_chunk_hash` then points at the last emitted chunk.

mod chunk;
mod codec;
mod record;

use thiserror::Error;

pub use chunk::{
    build_chunk, chunk_index_for, chunk_key, open_chunk, verify_chain, ChunkHeader, ChunkKey, SealedChunk, CHUNK_MAGIC,
    FORMAT_VERSION, HEADER_LEN, SEALED_OVERHEAD,
};
pub use codec::{compress, decompress, Codec};
pub use record::{decode_records, encode_records, DataRecord, StreamMeta, StreamRegistration};

use crate::crypto::CryptoError;
use crate::wire::WireError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChunkError {
    #[error("record timestamp {ts} outside chunk window [{start}, {end})")]
    RecordOutOfRange { ts: u64, start: u64, end: u64 },
    #[error("records are not strictly increasing in time")]
    UnsortedInput,
    #[error("a chunk needs at least one record")]
    EmptyChunk,
    #[error("chunk holds {count} records, limit is {max}")]
    TooManyRecords { count: usize, max: u32 },
    #[error("timestamp {ts} precedes stream start {t0}")]
    BeforeStreamStart { ts: u64, t0: u64 },
    #[error("chunk epoch {chunk} but key is for epoch {key}")]
    WrongEpochKey { chunk: u32, key: u32 },
    #[error("authentication tag mismatch")]
    BadTag,
    #[error("owner signature invalid")]
    BadSignature,
    #[error("compressed data is corrupt")]
    CorruptCompressedData,
    #[error("chunk does not belong to this stream")]
    StreamMismatch,
    #[error("unsupported codec or version byte {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("malformed chunk: {0}")]
    Malformed(#[from] WireError),
}

impl From<CryptoError> for ChunkError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::BadSignature | CryptoError::InvalidPublicKey => ChunkError::BadSignature,
            _ => ChunkError::BadTag,
        }
    }
}

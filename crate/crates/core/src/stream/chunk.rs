use serde::{Deserialize, Serialize};

use super::record::{decode_records, encode_records, DataRecord, StreamMeta};
use super::{ChunkError, Codec};
use crate::crypto::aead::{self, StreamKey, NONCE_LEN};
use crate::crypto::{Identity, PublicIdentity};
use crate::wire::{Reader, WireError, Writer};
use crate::{sha256, sha256_parts, Digest256};

pub const CHUNK_MAGIC: &[u8; 4] = b"SVC1";
pub const FORMAT_VERSION: u8 = 1;
/// magic(4) version(1) stream_id(32) index(8) start(8) end(8) prev(32) epoch(4) count(4)
pub const HEADER_LEN: usize = 101;
const SIGNATURE_LEN: usize = 64;
/// Bytes a sealed chunk adds to its compressed block.
pub const SEALED_OVERHEAD: usize = HEADER_LEN + 4 + aead::TAG_LEN + SIGNATURE_LEN;

/// Plaintext, authenticated chunk header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkHeader {
    pub codec: Codec,
    pub stream_id: Digest256,
    pub chunk_index: u64,
    pub start_ts: u64,
    pub end_ts: u64,
    pub prev_chunk_hash: Digest256,
    pub epoch: u32,
    pub record_count: u32,
}

impl ChunkHeader {
    pub fn version_byte(&self) -> u8 {
        (FORMAT_VERSION << 4) | self.codec.id()
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut w = Writer::with_capacity(HEADER_LEN);
        w.raw(CHUNK_MAGIC)
            .u8(self.version_byte())
            .digest(&self.stream_id)
            .u64(self.chunk_index)
            .u64(self.start_ts)
            .u64(self.end_ts)
            .digest(&self.prev_chunk_hash)
            .u32(self.epoch)
            .u32(self.record_count);
        w.finish().try_into().expect("header is fixed width")
    }

    fn read(r: &mut Reader<'_>) -> Result<Self, ChunkError> {
        if r.bytes(4)? != CHUNK_MAGIC {
            return Err(WireError::Invalid("chunk magic").into());
        }
        let version = r.u8()?;
        let codec = match (version >> 4, Codec::from_id(version & 0x0f)) {
            (FORMAT_VERSION, Some(c)) => c,
            _ => return Err(ChunkError::UnsupportedVersion(version)),
        };
        Ok(ChunkHeader {
            codec,
            stream_id: r.digest()?,
            chunk_index: r.u64()?,
            start_ts: r.u64()?,
            end_ts: r.u64()?,
            prev_chunk_hash: r.digest()?,
            epoch: r.u32()?,
            record_count: r.u32()?,
        })
    }

    fn nonce(&self) -> [u8; NONCE_LEN] {
        let d = sha256_parts(&[
            b"svault-nonce",
            &self.stream_id.0,
            &self.chunk_index.to_be_bytes(),
            &self.epoch.to_be_bytes(),
        ]);
        d.0[..NONCE_LEN].try_into().unwrap()
    }
}

/// Header, AEAD payload and owner signature over `H(header || payload)`.
///
/// Wire format: `header(101) || payload_len(u32) || payload || signature(64)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedChunk {
    pub header: ChunkHeader,
    pub payload: Vec<u8>,
    pub signature: [u8; 64],
}

impl SealedChunk {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(HEADER_LEN + 4 + self.payload.len() + SIGNATURE_LEN);
        w.raw(&self.header.to_bytes()).var(&self.payload).raw(&self.signature);
        w.finish()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ChunkError> {
        let mut r = Reader::new(b);
        let header = ChunkHeader::read(&mut r)?;
        let payload = r.var()?.to_vec();
        let signature = r.array()?;
        r.finish()?;
        Ok(SealedChunk { header, payload, signature })
    }

    /// Hash pointer used for chaining and ledger anchors.
    pub fn digest(&self) -> Digest256 {
        sha256(&self.to_bytes())
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + 4 + self.payload.len() + SIGNATURE_LEN
    }

    fn signed_digest(&self) -> Digest256 {
        sha256_parts(&[&self.header.to_bytes(), &self.payload])
    }

    /// Ownership check that needs no stream key.
    pub fn verify_signature(&self, owner: &PublicIdentity) -> Result<(), ChunkError> {
        owner.verify(&self.signed_digest().0, &self.signature).map_err(|_| ChunkError::BadSignature)
    }
}

/// Storage key of a chunk: `H(stream_id || owner_id || H(start_ts))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChunkKey(pub Digest256);

pub fn chunk_key(meta: &StreamMeta, chunk_index: u64) -> ChunkKey {
    let (start, _) = meta.window(chunk_index);
    let ts_hash = sha256(&start.to_be_bytes());
    ChunkKey(sha256_parts(&[&meta.stream_id.0, &meta.owner_id.0, &ts_hash.0]))
}

pub fn chunk_index_for(ts: u64, meta: &StreamMeta) -> Result<u64, ChunkError> {
    if ts < meta.t0 {
        return Err(ChunkError::BeforeStreamStart { ts, t0: meta.t0 });
    }
    Ok((ts - meta.t0) / meta.delta)
}

/// Compresses, encrypts and signs one window of records.
pub fn build_chunk(
    meta: &StreamMeta,
    records: &[DataRecord],
    prev_hash: Digest256,
    key: &StreamKey,
    owner: &Identity,
) -> Result<SealedChunk, ChunkError> {
    let first = records.first().ok_or(ChunkError::EmptyChunk)?;
    if records.len() > meta.max_records as usize {
        return Err(ChunkError::TooManyRecords { count: records.len(), max: meta.max_records });
    }
    if key.epoch != meta.epoch {
        return Err(ChunkError::WrongEpochKey { chunk: meta.epoch, key: key.epoch });
    }
    let chunk_index = chunk_index_for(first.timestamp, meta)?;
    let (start, end) = meta.window(chunk_index);
    for pair in records.windows(2) {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(ChunkError::UnsortedInput);
        }
    }
    if let Some(r) = records.iter().find(|r| r.timestamp < start || r.timestamp >= end) {
        return Err(ChunkError::RecordOutOfRange { ts: r.timestamp, start, end });
    }
    let header = ChunkHeader {
        codec: meta.codec,
        stream_id: meta.stream_id,
        chunk_index,
        start_ts: start,
        end_ts: end,
        prev_chunk_hash: prev_hash,
        epoch: key.epoch,
        record_count: records.len() as u32,
    };
    let compressed = meta.codec.compress(&encode_records(records));
    let header_bytes = header.to_bytes();
    let payload = aead::seal(&key.key, &header.nonce(), &header_bytes, &compressed);
    let signature = owner.sign(&sha256_parts(&[&header_bytes, &payload]).0);
    Ok(SealedChunk { header, payload, signature })
}

/// Authenticated decryption, then the owner signature, then decompression.
pub fn open_chunk(chunk: &SealedChunk, key: &StreamKey, owner: &PublicIdentity) -> Result<Vec<DataRecord>, ChunkError> {
    let h = &chunk.header;
    if key.epoch != h.epoch {
        return Err(ChunkError::WrongEpochKey { chunk: h.epoch, key: key.epoch });
    }
    let compressed = aead::open(&key.key, &h.nonce(), &h.to_bytes(), &chunk.payload)?;
    chunk.verify_signature(owner)?;
    let records = decode_records(&h.codec.decompress(&compressed)?)?;
    if records.len() != h.record_count as usize
        || records.iter().any(|r| r.timestamp < h.start_ts || r.timestamp >= h.end_ts)
    {
        return Err(WireError::Invalid("records disagree with header").into());
    }
    Ok(records)
}

/// True iff the chunks form an unbroken hash chain whose head digest is
/// `anchor`.
pub fn verify_chain(chunks: &[SealedChunk], anchor: &Digest256) -> bool {
    let Some(last) = chunks.last() else {
        return false;
    };
    let linked = chunks.windows(2).all(|w| {
        w[1].header.chunk_index > w[0].header.chunk_index
            && w[1].header.stream_id == w[0].header.stream_id
            && w[1].header.prev_chunk_hash == w[0].digest()
    });
    linked && last.digest() == *anchor
}

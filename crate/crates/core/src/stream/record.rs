use serde::{Deserialize, Serialize};

use super::{ChunkError, Codec};
use crate::crypto::identity::principal_id;
use crate::crypto::{PrincipalId, DEFAULT_MAX_EPOCHS};
use crate::hash::hex_bytes;
use crate::wire::{Reader, WireError, Writer};
use crate::{sha256_parts, Digest256};

/// One timestamped reading. `timestamp` is milliseconds since the Unix epoch.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DataRecord {
    pub timestamp: u64,
    #[serde(with = "value_hex")]
    pub value: Vec<u8>,
}

impl DataRecord {
    pub fn new(timestamp: u64, value: impl Into<Vec<u8>>) -> Self {
        DataRecord { timestamp, value: value.into() }
    }
}

mod value_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Payload of a `RegisterStream` transaction. The stream id is the digest of
/// its canonical encoding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRegistration {
    #[serde(with = "hex_bytes")]
    pub owner_pk: [u8; 32],
    pub name: String,
    pub t0: u64,
    pub delta: u64,
    pub checkpoint_interval: u32,
    pub max_epochs: u32,
    pub max_records: u32,
    pub codec: Codec,
}

impl StreamRegistration {
    pub const DEFAULT_MAX_RECORDS: u32 = 1 << 20;

    pub fn new(owner_pk: [u8; 32], name: impl Into<String>, t0: u64, delta: u64) -> Self {
        StreamRegistration {
            owner_pk,
            name: name.into(),
            t0,
            delta,
            checkpoint_interval: 10,
            max_epochs: DEFAULT_MAX_EPOCHS,
            max_records: Self::DEFAULT_MAX_RECORDS,
            codec: Codec::Deflate,
        }
    }

    pub fn with_checkpoint_interval(mut self, interval: u32) -> Self {
        self.checkpoint_interval = interval;
        self
    }

    pub fn with_max_epochs(mut self, n: u32) -> Self {
        self.max_epochs = n;
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.owner_pk)
            .var(self.name.as_bytes())
            .u64(self.t0)
            .u64(self.delta)
            .u32(self.checkpoint_interval)
            .u32(self.max_epochs)
            .u32(self.max_records)
            .u8(self.codec.id());
        w.finish()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(b);
        let owner_pk = r.array()?;
        let name = String::from_utf8(r.var()?.to_vec()).map_err(|_| WireError::Invalid("name"))?;
        let reg = StreamRegistration {
            owner_pk,
            name,
            t0: r.u64()?,
            delta: r.u64()?,
            checkpoint_interval: r.u32()?,
            max_epochs: r.u32()?,
            max_records: r.u32()?,
            codec: Codec::from_id(r.u8()?).ok_or(WireError::Invalid("codec"))?,
        };
        r.finish()?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<(), WireError> {
        if self.delta == 0 {
            return Err(WireError::Invalid("delta must be positive"));
        }
        if self.checkpoint_interval == 0 {
            return Err(WireError::Invalid("checkpoint interval must be positive"));
        }
        if self.max_epochs == 0 || self.max_records == 0 {
            return Err(WireError::Invalid("limits must be positive"));
        }
        Ok(())
    }

    pub fn stream_id(&self) -> Digest256 {
        sha256_parts(&[b"svault-stream", &self.to_bytes()])
    }

    pub fn owner_id(&self) -> PrincipalId {
        principal_id(&self.owner_pk)
    }

    pub fn meta(&self) -> StreamMeta {
        StreamMeta {
            stream_id: self.stream_id(),
            owner_id: self.owner_id(),
            t0: self.t0,
            delta: self.delta,
            epoch: 0,
            checkpoint_interval: self.checkpoint_interval,
            max_records: self.max_records,
            codec: self.codec,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub stream_id: Digest256,
    pub owner_id: PrincipalId,
    pub t0: u64,
    pub delta: u64,
    pub epoch: u32,
    pub checkpoint_interval: u32,
    pub max_records: u32,
    pub codec: Codec,
}

impl StreamMeta {
    pub fn window(&self, chunk_index: u64) -> (u64, u64) {
        let start = self.t0 + chunk_index * self.delta;
        (start, start + self.delta)
    }
}

/// Column-wise record block: `count`, then all timestamps, then all value
/// lengths, then the concatenated values. Grouping like fields keeps slowly
/// varying columns adjacent for the codec.
pub fn encode_records(records: &[DataRecord]) -> Vec<u8> {
    let values: usize = records.iter().map(|r| r.value.len()).sum();
    let mut w = Writer::with_capacity(4 + records.len() * 12 + values);
    w.u32(records.len() as u32);
    for r in records {
        w.u64(r.timestamp);
    }
    for r in records {
        w.u32(r.value.len() as u32);
    }
    for r in records {
        w.raw(&r.value);
    }
    w.finish()
}

pub fn decode_records(block: &[u8]) -> Result<Vec<DataRecord>, ChunkError> {
    let mut r = Reader::new(block);
    let n = r.u32()? as usize;
    if n.saturating_mul(12) > r.remaining() {
        return Err(WireError::Truncated.into());
    }
    let ts: Vec<u64> = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
    let lens: Vec<u32> = (0..n).map(|_| r.u32()).collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(n);
    for (t, len) in ts.into_iter().zip(lens) {
        out.push(DataRecord { timestamp: t, value: r.bytes(len as usize)?.to_vec() });
    }
    r.finish()?;
    Ok(out)
}

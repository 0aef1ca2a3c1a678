use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::stream::{chunk_index_for, ChunkError, DataRecord, StreamMeta};

/// Open Δ-windows of one stream plus the watermark (highest timestamp
/// seen). A window closes once every timestamp in it is older than the
/// watermark minus the lateness bound, or on an explicit drain, and never
/// reopens.
#[derive(Clone, Debug)]
pub struct IngestBuffer {
    meta: StreamMeta,
    lateness_ms: u64,
    open: BTreeMap<u64, Vec<DataRecord>>,
    pub(super) cursor: BufferCursor,
}

/// The part of the buffer that must survive a restart.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferCursor {
    pub watermark: Option<u64>,
    pub sealed_through: Option<u64>,
}

impl IngestBuffer {
    pub fn new(meta: &StreamMeta, lateness_windows: u64) -> Self {
        IngestBuffer {
            meta: meta.clone(),
            lateness_ms: lateness_windows.saturating_mul(meta.delta),
            open: BTreeMap::new(),
            cursor: BufferCursor::default(),
        }
    }

    pub fn watermark(&self) -> Option<u64> {
        self.cursor.watermark
    }

    pub fn open_records(&self) -> usize {
        self.open.values().map(Vec::len).sum()
    }

    pub fn push(&mut self, rec: DataRecord) -> Result<(), GatewayError> {
        let ts = rec.timestamp;
        let window = chunk_index_for(ts, &self.meta)?;
        if let Some(w) = self.cursor.watermark {
            if ts.saturating_add(self.lateness_ms) < w {
                return Err(GatewayError::LateRecord { ts, watermark: w });
            }
        }
        if self.cursor.sealed_through.is_some_and(|s| window <= s) {
            return Err(GatewayError::LateRecord { ts, watermark: self.cursor.watermark.unwrap_or(ts) });
        }
        let records = self.open.entry(window).or_default();
        let pos = match records.binary_search_by_key(&ts, |r| r.timestamp) {
            Ok(_) => return Err(GatewayError::DuplicateRecord(ts)),
            Err(p) => p,
        };
        if records.len() >= self.meta.max_records as usize {
            let count = records.len() + 1;
            return Err(ChunkError::TooManyRecords { count, max: self.meta.max_records }.into());
        }
        records.insert(pos, rec);
        self.cursor.watermark = Some(self.cursor.watermark.map_or(ts, |w| w.max(ts)));
        Ok(())
    }

    /// Windows the watermark has closed, oldest first.
    pub fn take_ready(&mut self) -> Vec<(u64, Vec<DataRecord>)> {
        let Some(w) = self.cursor.watermark else {
            return Vec::new();
        };
        let horizon = w.saturating_sub(self.lateness_ms);
        let mut out = Vec::new();
        while let Some((&idx, _)) = self.open.first_key_value() {
            if self.meta.window(idx).1 > horizon {
                break;
            }
            out.push(self.open.pop_first().expect("present"));
        }
        self.mark_sealed(&out);
        out
    }

    /// Every open window, oldest first.
    pub fn drain(&mut self) -> Vec<(u64, Vec<DataRecord>)> {
        let out: Vec<_> = std::mem::take(&mut self.open).into_iter().collect();
        self.mark_sealed(&out);
        out
    }

    fn mark_sealed(&mut self, windows: &[(u64, Vec<DataRecord>)]) {
        if let Some((idx, _)) = windows.last() {
            self.cursor.sealed_through = Some(*idx);
        }
    }
}

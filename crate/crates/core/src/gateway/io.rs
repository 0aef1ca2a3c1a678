//! Record exchange formats: newline-delimited JSON objects
//! `{"timestamp": <ms>, "value": "<hex>"}`, or CSV with a
//! `timestamp,value` header and hex values.

use std::io::{BufRead, Write};

use super::GatewayError;
use crate::stream::DataRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordFormat {
    Ndjson,
    Csv,
}

impl std::str::FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ndjson" | "jsonl" | "json" => Ok(RecordFormat::Ndjson),
            "csv" => Ok(RecordFormat::Csv),
            other => Err(format!("unknown record format {other:?}")),
        }
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> GatewayError {
    GatewayError::BadInput(format!("line {line}: {msg}"))
}

pub fn read_records<R: BufRead>(input: R, format: RecordFormat) -> Result<Vec<DataRecord>, GatewayError> {
    match format {
        RecordFormat::Ndjson => {
            let mut out = Vec::new();
            for (i, line) in input.lines().enumerate() {
                let line = line.map_err(|e| GatewayError::Io(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                out.push(serde_json::from_str(&line).map_err(|e| bad(i + 1, e))?);
            }
            Ok(out)
        }
        RecordFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(input);
            let mut out = Vec::new();
            for (i, row) in rdr.deserialize::<DataRecord>().enumerate() {
                out.push(row.map_err(|e| bad(i + 2, e))?);
            }
            Ok(out)
        }
    }
}

pub fn write_records<W: Write>(out: W, records: &[DataRecord], format: RecordFormat) -> Result<(), GatewayError> {
    let io = |e: std::io::Error| GatewayError::Io(e.to_string());
    match format {
        RecordFormat::Ndjson => {
            let mut out = out;
            for r in records {
                serde_json::to_writer(&mut out, r).map_err(|e| GatewayError::Io(e.to_string()))?;
                out.write_all(b"\n").map_err(io)?;
            }
            out.flush().map_err(io)
        }
        RecordFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["timestamp", "value"]).map_err(|e| GatewayError::Io(e.to_string()))?;
            for r in records {
                w.write_record([r.timestamp.to_string(), hex::encode(&r.value)])
                    .map_err(|e| GatewayError::Io(e.to_string()))?;
            }
            w.flush().map_err(io)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_formats_round_trip() {
        let recs = vec![DataRecord::new(1, vec![0, 255]), DataRecord::new(20, vec![])];
        for f in [RecordFormat::Ndjson, RecordFormat::Csv] {
            let mut buf = Vec::new();
            write_records(&mut buf, &recs, f).unwrap();
            assert_eq!(read_records(&buf[..], f).unwrap(), recs);
        }
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[DataRecord::new(5, vec![0xab])], RecordFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "timestamp,value\n5,ab\n");
        assert!(read_records(&b"timestamp,value\nx,00\n"[..], RecordFormat::Csv).is_err());
        assert!(read_records(&b"{\"timestamp\":1}\n"[..], RecordFormat::Ndjson).is_err());
    }
}

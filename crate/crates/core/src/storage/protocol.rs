//! Byte-stream protocol for storage nodes.
//!
//! Every message is a frame: `len u32 ‖ body`, big-endian. Request bodies
//! start with a verb byte:
//!
//! | verb | request fields |
//! |------|----------------|
//! | `0x01` CHALLENGE | none |
//! | `0x02` PUT | key 32 ‖ stream_id 32 ‖ writer_pk 32 ‖ signature 64 ‖ value_len u32 ‖ value |
//! | `0x03` GET | key 32 ‖ stream_id 32 ‖ requester_pk 32 ‖ nonce 16 ‖ node_id 32 ‖ issued_at u64 ‖ signature 64 |
//!
//! Response bodies start with a [`Status`] byte. On success CHALLENGE returns
//! `nonce 16 ‖ node_id 32 ‖ issued_at u64`, PUT returns nothing and GET
//! returns `value_len u32 ‖ value`. `ValueTooLarge` carries `size u64 ‖ max
//! u64`; every other error carries `msg_len u32 ‖ utf-8 message`.

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;

use super::node::{Challenge, GetRequest, PutRequest};
use super::{StorageError, StorageService};
use crate::wire::{Reader, WireError, Writer};

pub const VERB_CHALLENGE: u8 = 0x01;
pub const VERB_PUT: u8 = 0x02;
pub const VERB_GET: u8 = 0x03;

/// Frames larger than this are refused before allocation.
pub const MAX_FRAME: usize = 8 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    NotStreamOwner = 1,
    KeyExists = 2,
    ValueTooLarge = 3,
    PermissionDenied = 4,
    NotFound = 5,
    StaleChallenge = 6,
    BadAuth = 7,
    InvalidValue = 8,
    UnknownStream = 9,
    Unavailable = 10,
    BadRequest = 11,
}

impl Status {
    fn from_u8(v: u8) -> Option<Status> {
        use Status::*;
        [
            Ok,
            NotStreamOwner,
            KeyExists,
            ValueTooLarge,
            PermissionDenied,
            NotFound,
            StaleChallenge,
            BadAuth,
            InvalidValue,
            UnknownStream,
            Unavailable,
            BadRequest,
        ]
        .into_iter()
        .find(|s| *s as u8 == v)
    }

    fn of(e: &StorageError) -> Status {
        match e {
            StorageError::NotStreamOwner => Status::NotStreamOwner,
            StorageError::KeyExists => Status::KeyExists,
            StorageError::ValueTooLarge { .. } => Status::ValueTooLarge,
            StorageError::PermissionDenied => Status::PermissionDenied,
            StorageError::NotFound => Status::NotFound,
            StorageError::StaleChallenge => Status::StaleChallenge,
            StorageError::BadAuth => Status::BadAuth,
            StorageError::InvalidValue(_) => Status::InvalidValue,
            StorageError::UnknownStream => Status::UnknownStream,
            StorageError::StorageUnavailable(_) => Status::Unavailable,
            StorageError::Protocol(_) => Status::BadRequest,
        }
    }
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

fn encode_challenge_req() -> Vec<u8> {
    vec![VERB_CHALLENGE]
}

fn encode_put(req: &PutRequest) -> Vec<u8> {
    let mut w = Writer::with_capacity(req.value.len() + 200);
    w.u8(VERB_PUT).digest(&req.key).digest(&req.stream_id).raw(&req.writer_pk).raw(&req.signature).var(&req.value);
    w.finish()
}

fn encode_get(req: &GetRequest) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(VERB_GET)
        .digest(&req.key)
        .digest(&req.stream_id)
        .raw(&req.requester_pk)
        .raw(&req.challenge.nonce)
        .digest(&req.challenge.node_id)
        .u64(req.challenge.issued_at_ms)
        .raw(&req.signature);
    w.finish()
}

enum Request {
    Challenge,
    Put(PutRequest),
    Get(GetRequest),
}

fn decode_request(b: &[u8]) -> Result<Request, WireError> {
    let mut r = Reader::new(b);
    let req = match r.u8()? {
        VERB_CHALLENGE => Request::Challenge,
        VERB_PUT => Request::Put(PutRequest {
            key: r.digest()?,
            stream_id: r.digest()?,
            writer_pk: r.array()?,
            signature: r.array()?,
            value: r.var()?.to_vec(),
        }),
        VERB_GET => Request::Get(GetRequest {
            key: r.digest()?,
            stream_id: r.digest()?,
            requester_pk: r.array()?,
            challenge: Challenge { nonce: r.array()?, node_id: r.digest()?, issued_at_ms: r.u64()? },
            signature: r.array()?,
        }),
        _ => return Err(WireError::Invalid("unknown verb")),
    };
    r.finish()?;
    Ok(req)
}

fn encode_error(e: &StorageError) -> Vec<u8> {
    let mut w = Writer::new();
    w.u8(Status::of(e) as u8);
    match e {
        StorageError::ValueTooLarge { size, max } => {
            w.u64(*size as u64).u64(*max as u64);
        }
        other => {
            w.var(other.to_string().as_bytes());
        }
    }
    w.finish()
}

fn decode_error(status: Status, r: &mut Reader) -> Result<StorageError, WireError> {
    if status == Status::ValueTooLarge {
        return Ok(StorageError::ValueTooLarge { size: r.u64()? as usize, max: r.u64()? as usize });
    }
    let msg = String::from_utf8_lossy(r.var()?).into_owned();
    let detail = |prefix: &str| msg.strip_prefix(prefix).unwrap_or(&msg).to_string();
    Ok(match status {
        Status::NotStreamOwner => StorageError::NotStreamOwner,
        Status::KeyExists => StorageError::KeyExists,
        Status::PermissionDenied => StorageError::PermissionDenied,
        Status::NotFound => StorageError::NotFound,
        Status::StaleChallenge => StorageError::StaleChallenge,
        Status::BadAuth => StorageError::BadAuth,
        Status::InvalidValue => StorageError::InvalidValue(detail("value rejected: ")),
        Status::UnknownStream => StorageError::UnknownStream,
        Status::Unavailable => StorageError::StorageUnavailable(detail("storage unavailable: ")),
        Status::BadRequest => StorageError::Protocol(detail("protocol error: ")),
        Status::Ok | Status::ValueTooLarge => unreachable!(),
    })
}

/// Executes one request frame against `node` and returns the response frame
/// body.
pub fn handle_frame(node: &dyn StorageService, body: &[u8]) -> Vec<u8> {
    let req = match decode_request(body) {
        Ok(r) => r,
        Err(e) => return encode_error(&StorageError::Protocol(e.to_string())),
    };
    let mut w = Writer::new();
    match req {
        Request::Challenge => match node.challenge() {
            Ok(c) => {
                w.u8(Status::Ok as u8).raw(&c.nonce).digest(&c.node_id).u64(c.issued_at_ms);
            }
            Err(e) => return encode_error(&e),
        },
        Request::Put(p) => match node.put(&p) {
            Ok(()) => {
                w.u8(Status::Ok as u8);
            }
            Err(e) => return encode_error(&e),
        },
        Request::Get(g) => match node.get(&g) {
            Ok(v) => {
                w.u8(Status::Ok as u8).var(&v);
            }
            Err(e) => return encode_error(&e),
        },
    }
    w.finish()
}

/// Serves frames from `stream` until the peer closes it.
pub fn serve<S: Read + Write>(node: &dyn StorageService, stream: &mut S) -> io::Result<()> {
    while let Some(req) = read_frame(stream)? {
        write_frame(stream, &handle_frame(node, &req))?;
    }
    Ok(())
}

fn parse_response(body: &[u8]) -> Result<Reader<'_>, StorageError> {
    let mut r = Reader::new(body);
    let proto = |e: WireError| StorageError::Protocol(e.to_string());
    let status =
        Status::from_u8(r.u8().map_err(proto)?).ok_or_else(|| StorageError::Protocol("unknown status".into()))?;
    if status != Status::Ok {
        return Err(decode_error(status, &mut r).map_err(proto)?);
    }
    Ok(r)
}

fn decode_challenge(body: &[u8]) -> Result<Challenge, StorageError> {
    let mut r = parse_response(body)?;
    let proto = |e: WireError| StorageError::Protocol(e.to_string());
    let c = Challenge {
        nonce: r.array().map_err(proto)?,
        node_id: r.digest().map_err(proto)?,
        issued_at_ms: r.u64().map_err(proto)?,
    };
    r.finish().map_err(proto)?;
    Ok(c)
}

fn decode_put(body: &[u8]) -> Result<(), StorageError> {
    parse_response(body)?.finish().map_err(|e| StorageError::Protocol(e.to_string()))
}

fn decode_get(body: &[u8]) -> Result<Vec<u8>, StorageError> {
    let mut r = parse_response(body)?;
    let proto = |e: WireError| StorageError::Protocol(e.to_string());
    let v = r.var().map_err(proto)?.to_vec();
    r.finish().map_err(proto)?;
    Ok(v)
}

/// In-process transport that still round-trips every message through the
/// wire encoding, and counts requests.
pub struct Loopback {
    node: Arc<dyn StorageService>,
    messages: AtomicU64,
}

impl Loopback {
    pub fn new(node: Arc<dyn StorageService>) -> Self {
        Loopback { node, messages: AtomicU64::new(0) }
    }

    /// Requests sent so far.
    pub fn messages(&self) -> u64 {
        self.messages.load(Ordering::SeqCst)
    }

    fn call(&self, req: Vec<u8>) -> Vec<u8> {
        self.messages.fetch_add(1, Ordering::SeqCst);
        handle_frame(self.node.as_ref(), &req)
    }
}

impl StorageService for Loopback {
    fn challenge(&self) -> Result<Challenge, StorageError> {
        decode_challenge(&self.call(encode_challenge_req()))
    }

    fn put(&self, req: &PutRequest) -> Result<(), StorageError> {
        decode_put(&self.call(encode_put(req)))
    }

    fn get(&self, req: &GetRequest) -> Result<Vec<u8>, StorageError> {
        decode_get(&self.call(encode_get(req)))
    }
}

/// Client end of a byte stream to a node, e.g. a `TcpStream`.
pub struct RemoteNode<S> {
    stream: Mutex<S>,
}

impl<S: Read + Write + Send> RemoteNode<S> {
    pub fn new(stream: S) -> Self {
        RemoteNode { stream: Mutex::new(stream) }
    }

    fn call(&self, req: Vec<u8>) -> Result<Vec<u8>, StorageError> {
        let unavailable = |e: io::Error| StorageError::StorageUnavailable(e.to_string());
        let mut s = self.stream.lock();
        write_frame(&mut *s, &req).map_err(unavailable)?;
        read_frame(&mut *s)
            .map_err(unavailable)?
            .ok_or_else(|| StorageError::StorageUnavailable("connection closed".into()))
    }
}

impl<S: Read + Write + Send> StorageService for RemoteNode<S> {
    fn challenge(&self) -> Result<Challenge, StorageError> {
        decode_challenge(&self.call(encode_challenge_req())?)
    }

    fn put(&self, req: &PutRequest) -> Result<(), StorageError> {
        decode_put(&self.call(encode_put(req))?)
    }

    fn get(&self, req: &GetRequest) -> Result<Vec<u8>, StorageError> {
        decode_get(&self.call(encode_get(req))?)
    }
}

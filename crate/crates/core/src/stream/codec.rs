use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::ChunkError;

/// Lossless codec applied to record blocks before encryption. The id is
/// stored in the low nibble of the chunk version byte.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codec {
    Identity,
    #[default]
    Deflate,
}

impl Codec {
    pub fn id(self) -> u8 {
        match self {
            Codec::Identity => 0,
            Codec::Deflate => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Codec> {
        match id {
            0 => Some(Codec::Identity),
            1 => Some(Codec::Deflate),
            _ => None,
        }
    }

    pub fn compress(self, block: &[u8]) -> Vec<u8> {
        match self {
            Codec::Identity => block.to_vec(),
            Codec::Deflate => {
                let mut enc = DeflateEncoder::new(Vec::with_capacity(block.len() / 2), Compression::best());
                enc.write_all(block).expect("writing to a Vec cannot fail");
                enc.finish().expect("writing to a Vec cannot fail")
            }
        }
    }

    pub fn decompress(self, data: &[u8]) -> Result<Vec<u8>, ChunkError> {
        match self {
            Codec::Identity => Ok(data.to_vec()),
            Codec::Deflate => {
                let mut out = Vec::with_capacity(data.len() * 4);
                DeflateDecoder::new(data).read_to_end(&mut out).map_err(|_| ChunkError::CorruptCompressedData)?;
                Ok(out)
            }
        }
    }
}

pub fn compress(block: &[u8]) -> Vec<u8> {
    Codec::default().compress(block)
}

pub fn decompress(data: &[u8]) -> Result<Vec<u8>, ChunkError> {
    Codec::default().decompress(data)
}

use std::fmt;

use rand::RngCore;

use crate::Digest256;

pub const ID_BYTES: usize = 20;
pub const ID_BITS: usize = ID_BYTES * 8;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub [u8; ID_BYTES]);

/// XOR distance; compares as a big-endian integer.
pub type Distance = [u8; ID_BYTES];

impl NodeId {
    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let mut b = [0u8; ID_BYTES];
        rng.fill_bytes(&mut b);
        NodeId(b)
    }

    /// Position of a 256-bit storage key in the id space: its top 160 bits.
    pub fn from_key(key: &Digest256) -> Self {
        let mut b = [0u8; ID_BYTES];
        b.copy_from_slice(&key.0[..ID_BYTES]);
        NodeId(b)
    }

    pub fn distance(&self, other: &NodeId) -> Distance {
        let mut d = [0u8; ID_BYTES];
        for (i, x) in d.iter_mut().enumerate() {
            *x = self.0[i] ^ other.0[i];
        }
        d
    }

    /// Length of the common prefix with `other`; `None` for equal ids.
    pub fn bucket_index(&self, other: &NodeId) -> Option<usize> {
        let d = self.distance(other);
        let byte = d.iter().position(|b| *b != 0)?;
        Some(byte * 8 + d[byte].leading_zeros() as usize)
    }

    /// A random id sharing exactly `prefix` leading bits with `self`.
    pub fn random_in_bucket<R: RngCore>(&self, prefix: usize, rng: &mut R) -> NodeId {
        let mut out = NodeId::random(rng).0;
        for bit in 0..=prefix {
            let (byte, mask) = (bit / 8, 0x80u8 >> (bit % 8));
            let mine = self.0[byte] & mask;
            let want = if bit == prefix { mine ^ mask } else { mine };
            out[byte] = (out[byte] & !mask) | want;
        }
        NodeId(out)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", &self.to_hex()[..10])
    }
}

//! Bidirectional ElGamal proxy re-encryption over a prime-order group.
//!
//! A keypair is `(a, g^a)`. Encryption of a group element `M` is
//! `(M·g^r, pk^r)`; the token `b/a` turns `g^{ar}` into `g^{br}` without
//! touching `M`. The 256-bit payload is KEM-wrapped: a random `M` is
//! encrypted and the payload is masked with a digest of `M`, plus a short
//! confirmation tag so that decryption under the wrong key is detected.
//!
//! The code is generic over [`PreGroup`]: [`Ristretto`] is the production
//! group and [`ToyGroup`] (order 65521) exists so tests can brute-force
//! discrete logarithms.

use std::fmt::Debug;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::{CryptoRng, Rng, RngCore};

use super::{CryptoError, PrincipalId};
use crate::wire::{Reader, Writer};
use crate::{sha256_parts, Digest256};

pub trait PreGroup: Copy + Debug + PartialEq + Eq + Default + Send + Sync + 'static {
    type Scalar: Copy + Debug + PartialEq + Send + Sync;
    type Element: Copy + Debug + PartialEq + Send + Sync;

    const ELEMENT_LEN: usize;
    const SCALAR_LEN: usize;

    fn generator() -> Self::Element;
    /// Uniform non-zero scalar.
    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Self::Scalar;
    /// Non-zero scalar derived from a digest.
    fn scalar_from_digest(d: &Digest256) -> Self::Scalar;
    fn scalar_mul(a: &Self::Scalar, b: &Self::Scalar) -> Self::Scalar;
    fn scalar_invert(a: &Self::Scalar) -> Self::Scalar;
    /// `e^s` (written `s·e` additively).
    fn exp(e: &Self::Element, s: &Self::Scalar) -> Self::Element;
    fn op(a: &Self::Element, b: &Self::Element) -> Self::Element;
    /// `a · b^{-1}`.
    fn op_inv(a: &Self::Element, b: &Self::Element) -> Self::Element;
    fn encode_element(e: &Self::Element) -> Vec<u8>;
    fn decode_element(b: &[u8]) -> Option<Self::Element>;
    fn encode_scalar(s: &Self::Scalar) -> Vec<u8>;
    fn decode_scalar(b: &[u8]) -> Option<Self::Scalar>;
}

/// Ristretto255: prime-order group over Curve25519, 32-byte compressed points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Ristretto;

impl PreGroup for Ristretto {
    type Scalar = Scalar;
    type Element = RistrettoPoint;

    const ELEMENT_LEN: usize = 32;
    const SCALAR_LEN: usize = 32;

    fn generator() -> RistrettoPoint {
        RISTRETTO_BASEPOINT_POINT
    }

    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
        loop {
            let s = Scalar::random(rng);
            if s != Scalar::ZERO {
                return s;
            }
        }
    }

    fn scalar_from_digest(d: &Digest256) -> Scalar {
        let mut wide = [0u8; 64];
        wide[..32].copy_from_slice(&d.0);
        wide[32..].copy_from_slice(&sha256_parts(&[b"wide", &d.0]).0);
        let s = Scalar::from_bytes_mod_order_wide(&wide);
        if s == Scalar::ZERO {
            Scalar::ONE
        } else {
            s
        }
    }

    fn scalar_mul(a: &Scalar, b: &Scalar) -> Scalar {
        a * b
    }

    fn scalar_invert(a: &Scalar) -> Scalar {
        a.invert()
    }

    fn exp(e: &RistrettoPoint, s: &Scalar) -> RistrettoPoint {
        e * s
    }

    fn op(a: &RistrettoPoint, b: &RistrettoPoint) -> RistrettoPoint {
        a + b
    }

    fn op_inv(a: &RistrettoPoint, b: &RistrettoPoint) -> RistrettoPoint {
        a - b
    }

    fn encode_element(e: &RistrettoPoint) -> Vec<u8> {
        e.compress().to_bytes().to_vec()
    }

    fn decode_element(b: &[u8]) -> Option<RistrettoPoint> {
        CompressedRistretto::from_slice(b).ok()?.decompress()
    }

    fn encode_scalar(s: &Scalar) -> Vec<u8> {
        s.to_bytes().to_vec()
    }

    fn decode_scalar(b: &[u8]) -> Option<Scalar> {
        let arr: [u8; 32] = b.try_into().ok()?;
        Option::from(Scalar::from_canonical_bytes(arr)).filter(|s| *s != Scalar::ZERO)
    }
}

/// Order-`q` subgroup of `Z_p^*` with `q = 65521`, `p = 10q + 1 = 655211`.
/// Far too small for security; used only by tests that brute-force dlogs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ToyGroup;

impl ToyGroup {
    pub const P: u64 = 655_211;
    pub const Q: u64 = 65_521;
    pub const G: u64 = 186_764;

    fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
        let mut acc = 1u64;
        base %= m;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % m;
            }
            base = base * base % m;
            exp >>= 1;
        }
        acc
    }
}

impl PreGroup for ToyGroup {
    type Scalar = u64;
    type Element = u64;

    const ELEMENT_LEN: usize = 8;
    const SCALAR_LEN: usize = 8;

    fn generator() -> u64 {
        Self::G
    }

    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> u64 {
        rng.gen_range(1..Self::Q)
    }

    fn scalar_from_digest(d: &Digest256) -> u64 {
        let v = u64::from_be_bytes(d.0[..8].try_into().unwrap()) % (Self::Q - 1);
        v + 1
    }

    fn scalar_mul(a: &u64, b: &u64) -> u64 {
        a * b % Self::Q
    }

    fn scalar_invert(a: &u64) -> u64 {
        Self::pow_mod(*a, Self::Q - 2, Self::Q)
    }

    fn exp(e: &u64, s: &u64) -> u64 {
        Self::pow_mod(*e, *s, Self::P)
    }

    fn op(a: &u64, b: &u64) -> u64 {
        a * b % Self::P
    }

    fn op_inv(a: &u64, b: &u64) -> u64 {
        a * Self::pow_mod(*b, Self::P - 2, Self::P) % Self::P
    }

    fn encode_element(e: &u64) -> Vec<u8> {
        e.to_be_bytes().to_vec()
    }

    fn decode_element(b: &[u8]) -> Option<u64> {
        let v = u64::from_be_bytes(b.try_into().ok()?);
        (v > 0 && v < Self::P && Self::pow_mod(v, Self::Q, Self::P) == 1).then_some(v)
    }

    fn encode_scalar(s: &u64) -> Vec<u8> {
        s.to_be_bytes().to_vec()
    }

    fn decode_scalar(b: &[u8]) -> Option<u64> {
        let v = u64::from_be_bytes(b.try_into().ok()?);
        (v > 0 && v < Self::Q).then_some(v)
    }
}

fn kem_mask<G: PreGroup>(m: &G::Element) -> [u8; 32] {
    sha256_parts(&[b"svault-kem-mask", &G::encode_element(m)]).0
}

fn kem_check<G: PreGroup>(m: &G::Element) -> [u8; 16] {
    sha256_parts(&[b"svault-kem-check", &G::encode_element(m)]).0[..16].try_into().unwrap()
}

#[derive(Clone, Copy, PartialEq)]
pub struct PreSecretKey<G: PreGroup = Ristretto>(pub(crate) G::Scalar);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrePublicKey<G: PreGroup = Ristretto>(pub G::Element);

impl<G: PreGroup> Debug for PreSecretKey<G> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PreSecretKey(..)")
    }
}

impl<G: PreGroup> PreSecretKey<G> {
    pub fn public(&self) -> PrePublicKey<G> {
        PrePublicKey(G::exp(&G::generator(), &self.0))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        G::encode_scalar(&self.0)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        G::decode_scalar(b).map(PreSecretKey).ok_or(CryptoError::InvalidPublicKey)
    }

    /// Deterministic secret derived from other key material.
    pub fn derive(seed: &[u8]) -> Self {
        PreSecretKey(G::scalar_from_digest(&sha256_parts(&[b"svault-pre-derive", seed])))
    }

    /// Exposes the raw scalar for oracle tests.
    pub fn scalar(&self) -> G::Scalar {
        self.0
    }
}

impl<G: PreGroup> PrePublicKey<G> {
    /// Pseudo-identity of a PRE public key.
    pub fn id(&self) -> PrincipalId {
        sha256_parts(&[b"svault-pre-pk", &G::encode_element(&self.0)])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        G::encode_element(&self.0)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        G::decode_element(b).map(PrePublicKey).ok_or(CryptoError::InvalidPublicKey)
    }
}

/// A PRE keypair. Used both as a long-lived service key and as the owner's
/// one-time key that protects a single wrapped member state lineage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreKeyPair<G: PreGroup = Ristretto> {
    pub secret: PreSecretKey<G>,
    pub public: PrePublicKey<G>,
}

impl<G: PreGroup> PreKeyPair<G> {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::from_secret(PreSecretKey(G::random_scalar(rng)))
    }

    pub fn from_secret(secret: PreSecretKey<G>) -> Self {
        PreKeyPair { public: secret.public(), secret }
    }

    pub fn id(&self) -> PrincipalId {
        self.public.id()
    }
}

/// `ENC_pk(m)` for a 256-bit `m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WrappedKey<G: PreGroup = Ristretto> {
    pub c1: G::Element,
    pub c2: G::Element,
    pub masked: [u8; 32],
    pub check: [u8; 16],
    pub target: PrincipalId,
}

impl<G: PreGroup> WrappedKey<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(2 * G::ELEMENT_LEN + 80);
        w.raw(&G::encode_element(&self.c1))
            .raw(&G::encode_element(&self.c2))
            .raw(&self.masked)
            .raw(&self.check)
            .digest(&self.target);
        w.finish()
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(b);
        let bad = |_| CryptoError::InvalidCiphertext;
        let c1 = G::decode_element(r.bytes(G::ELEMENT_LEN).map_err(bad)?).ok_or(CryptoError::InvalidCiphertext)?;
        let c2 = G::decode_element(r.bytes(G::ELEMENT_LEN).map_err(bad)?).ok_or(CryptoError::InvalidCiphertext)?;
        let masked = r.array().map_err(bad)?;
        let check = r.array().map_err(bad)?;
        let target = r.digest().map_err(bad)?;
        r.finish().map_err(bad)?;
        Ok(WrappedKey { c1, c2, masked, check, target })
    }
}

/// `T_{a→b}`: the scalar `b/a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReEncryptionToken<G: PreGroup = Ristretto> {
    pub factor: G::Scalar,
    pub from: PrincipalId,
    pub to: PrincipalId,
}

/// What a service hands the owner at share time: `ρ·b` for a blinding `ρ`
/// derived from the service's own secret. Reveals nothing about `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelegationKey<G: PreGroup = Ristretto> {
    pub blinded: G::Scalar,
    pub service: PrincipalId,
}

/// `ρ·b/a`, issued by the owner; only the service can strip `ρ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlindedToken<G: PreGroup = Ristretto> {
    pub factor: G::Scalar,
    pub from: PrincipalId,
    pub to: PrincipalId,
}

fn scalar_and_ids_to_bytes<G: PreGroup>(s: &G::Scalar, ids: &[&PrincipalId]) -> Vec<u8> {
    let mut w = Writer::new();
    w.raw(&G::encode_scalar(s));
    for id in ids {
        w.digest(id);
    }
    w.finish()
}

fn scalar_and_ids_from_bytes<G: PreGroup, const N: usize>(
    b: &[u8],
) -> Result<(G::Scalar, [PrincipalId; N]), CryptoError> {
    let mut r = Reader::new(b);
    let s = r.bytes(G::SCALAR_LEN).ok().and_then(G::decode_scalar).ok_or(CryptoError::InvalidCiphertext)?;
    let mut ids = [Digest256::ZERO; N];
    for id in ids.iter_mut() {
        *id = r.digest().map_err(|_| CryptoError::InvalidCiphertext)?;
    }
    r.finish().map_err(|_| CryptoError::InvalidCiphertext)?;
    Ok((s, ids))
}

impl<G: PreGroup> ReEncryptionToken<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        scalar_and_ids_to_bytes::<G>(&self.factor, &[&self.from, &self.to])
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        let (factor, [from, to]) = scalar_and_ids_from_bytes::<G, 2>(b)?;
        Ok(ReEncryptionToken { factor, from, to })
    }
}

impl<G: PreGroup> BlindedToken<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        scalar_and_ids_to_bytes::<G>(&self.factor, &[&self.from, &self.to])
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        let (factor, [from, to]) = scalar_and_ids_from_bytes::<G, 2>(b)?;
        Ok(BlindedToken { factor, from, to })
    }

    /// Service side: removes the blinding with the service secret.
    pub fn unblind(&self, service: &PreSecretKey<G>) -> Result<ReEncryptionToken<G>, CryptoError> {
        if service.public().id() != self.to {
            return Err(CryptoError::TokenMismatch);
        }
        let rho = blinding::<G>(service);
        Ok(ReEncryptionToken {
            factor: G::scalar_mul(&self.factor, &G::scalar_invert(&rho)),
            from: self.from,
            to: self.to,
        })
    }
}

impl<G: PreGroup> DelegationKey<G> {
    pub fn to_bytes(&self) -> Vec<u8> {
        scalar_and_ids_to_bytes::<G>(&self.blinded, &[&self.service])
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, CryptoError> {
        let (blinded, [service]) = scalar_and_ids_from_bytes::<G, 1>(b)?;
        Ok(DelegationKey { blinded, service })
    }
}

fn blinding<G: PreGroup>(sk: &PreSecretKey<G>) -> G::Scalar {
    G::scalar_from_digest(&sha256_parts(&[b"svault-delegation-blind", &G::encode_scalar(&sk.0)]))
}

pub fn encrypt<G: PreGroup, R: RngCore + CryptoRng>(pk: &PrePublicKey<G>, m: &[u8; 32], rng: &mut R) -> WrappedKey<G> {
    let g = G::generator();
    let kem = G::exp(&g, &G::random_scalar(rng));
    let r = G::random_scalar(rng);
    let mask = kem_mask::<G>(&kem);
    let mut masked = *m;
    masked.iter_mut().zip(mask).for_each(|(x, k)| *x ^= k);
    WrappedKey {
        c1: G::op(&kem, &G::exp(&g, &r)),
        c2: G::exp(&pk.0, &r),
        masked,
        check: kem_check::<G>(&kem),
        target: pk.id(),
    }
}

pub fn decrypt<G: PreGroup>(sk: &PreSecretKey<G>, wk: &WrappedKey<G>) -> Result<[u8; 32], CryptoError> {
    if wk.target != sk.public().id() {
        return Err(CryptoError::InvalidCiphertext);
    }
    // c2 = g^{ar}  =>  g^r = c2^{1/a}
    let g_r = G::exp(&wk.c2, &G::scalar_invert(&sk.0));
    let kem = G::op_inv(&wk.c1, &g_r);
    if kem_check::<G>(&kem) != wk.check {
        return Err(CryptoError::InvalidCiphertext);
    }
    let mut m = wk.masked;
    m.iter_mut().zip(kem_mask::<G>(&kem)).for_each(|(x, k)| *x ^= k);
    Ok(m)
}

/// Direct token derivation when both secrets are at hand.
pub fn token<G: PreGroup>(from: &PreSecretKey<G>, to: &PreSecretKey<G>) -> ReEncryptionToken<G> {
    ReEncryptionToken {
        factor: G::scalar_mul(&to.0, &G::scalar_invert(&from.0)),
        from: from.public().id(),
        to: to.public().id(),
    }
}

pub fn delegation_key<G: PreGroup>(service: &PreSecretKey<G>) -> DelegationKey<G> {
    DelegationKey { blinded: G::scalar_mul(&blinding::<G>(service), &service.0), service: service.public().id() }
}

/// Owner side of token issuance from a service's delegation key.
pub fn issue_token<G: PreGroup>(one_time: &PreSecretKey<G>, delegation: &DelegationKey<G>) -> BlindedToken<G> {
    BlindedToken {
        factor: G::scalar_mul(&delegation.blinded, &G::scalar_invert(&one_time.0)),
        from: one_time.public().id(),
        to: delegation.service,
    }
}

pub fn reencrypt<G: PreGroup>(token: &ReEncryptionToken<G>, wk: &WrappedKey<G>) -> Result<WrappedKey<G>, CryptoError> {
    if token.from != wk.target {
        return Err(CryptoError::TokenMismatch);
    }
    Ok(WrappedKey { c2: G::exp(&wk.c2, &token.factor), target: token.to, ..*wk })
}

"""Straight-line reference for the golden vectors in ../data/golden.json.

Uses only hashlib, struct and the `cryptography` package. Every layout is
spelled out here byte by byte; nothing is shared with the Rust code.

    python3 golden.py > ../data/golden.json
"""
import hashlib
import json
import struct

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat


def H(*parts):
    return hashlib.sha256(b"".join(parts)).digest()


def u8(v):
    return struct.pack(">B", v)


def u32(v):
    return struct.pack(">I", v)


def u64(v):
    return struct.pack(">Q", v)


def var(b):
    return u32(len(b)) + b


def keyreg(seed, n):
    states = {n: seed}
    for i in range(n, 0, -1):
        states[i - 1] = H(b"\x00", states[i])
    return [states[i] for i in range(n + 1)], [H(b"\x01", states[i]) for i in range(n + 1)]


out = {}

zeros = bytes(32)
counting = bytes(range(32))
out["keyreg"] = []
for name, seed in [("zeros", zeros), ("counting", counting)]:
    states, keys = keyreg(seed, 8)
    out["keyreg"].append({
        "seed": seed.hex(),
        "n": 8,
        "states": [s.hex() for s in states],
        "keys": [k.hex() for k in keys],
    })

# Sealed chunk, identity codec, epoch 2 key of the all-zero chain.
sk = Ed25519PrivateKey.from_private_bytes(b"\x07" * 32)
pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
owner_id = H(pk)
name = b"golden"
t0, delta = 1_000_000, 60_000
reg = pk + var(name) + u64(t0) + u64(delta) + u32(10) + u32(8) + u32(1 << 20) + u8(0)
sid = H(b"svault-stream", reg)
index, epoch = 2, 2
start, end = t0 + index * delta, t0 + (index + 1) * delta
records = [(start + i * 1000, bytes([i, 3 * i]) if i < 4 else b"") for i in range(5)]
block = u32(len(records))
block += b"".join(u64(t) for t, _ in records)
block += b"".join(u32(len(v)) for _, v in records)
block += b"".join(v for _, v in records)
prev = H(b"prev")
header = b"SVC1" + u8((1 << 4) | 0) + sid + u64(index) + u64(start) + u64(end) + prev + u32(epoch) + u32(len(records))
assert len(header) == 101
nonce = H(b"svault-nonce", sid, u64(index), u32(epoch))[:12]
key = keyreg(zeros, 8)[1][epoch]
payload = AESGCM(key).encrypt(nonce, block, header)
sig = sk.sign(H(header, payload))
sealed = header + var(payload) + sig
out["chunk"] = {
    "owner_secret": (b"\x07" * 32).hex(),
    "owner_pk": pk.hex(),
    "owner_id": owner_id.hex(),
    "registration": reg.hex(),
    "stream_id": sid.hex(),
    "records": [[t, v.hex()] for t, v in records],
    "prev": prev.hex(),
    "block": block.hex(),
    "header": header.hex(),
    "sealed": sealed.hex(),
    "digest": H(sealed).hex(),
    "chunk_key": H(sid, owner_id, H(u64(start))).hex(),
}

# Checkpoint transaction signed by the same owner.
cp_payload = u64(9) + H(sealed)
digest = H(b"svault-tx", u8(4), sid, pk, u32(len(cp_payload)), cp_payload)
tx = b"SVX1" + u8(4) + sid + pk + var(cp_payload) + sk.sign(digest)
out["checkpoint_tx"] = tx.hex()

# Key-material objects around ristretto255 multiples of the generator.
B = bytes.fromhex("e2f2ae0a6abc4e71a884a961c500515f58e30b6aa582dd8db6a65945e08d2d76")
B2 = bytes.fromhex("6a493210f7499cd17fecb510ae0cea23a110e8d5b901f8acadd3095c73a3b919")
wrapped = B + B2 + b"\x11" * 32 + b"\x22" * 16 + H(b"target")
five = (5).to_bytes(32, "little")
token = five + H(b"from") + H(b"to")
out["keymat"] = {
    "wrapped_key": wrapped.hex(),
    "wrapped": (b"SVK1" + sid + u32(3) + zeros + u8(1) + u32(1) + var(wrapped)).hex(),
    "wrapped_storage_key": H(sid, b"keymat", u32(3), zeros).hex(),
    "token": (b"SVK1" + sid + u32(1) + owner_id + u8(2) + var(token)).hex(),
    "token_storage_key": H(sid, b"keymat", u32(1), owner_id).hex(),
}

# Toy-group proxy re-encryption with fixed randomness.
P, Q, G = 655_211, 65_521, 186_764


def toy_scalar(d):
    return int.from_bytes(d[:8], "big") % (Q - 1) + 1


def toy_id(pk):
    return H(b"svault-pre-pk", u64(pk))


a, b = 1234, 4321
pk_a, pk_b = pow(G, a, P), pow(G, b, P)
rho = toy_scalar(H(b"svault-delegation-blind", u64(b)))
delegation = rho * b % Q
blinded = delegation * pow(a, Q - 2, Q) % Q
k, r = 777, 999
kem = pow(G, k, P)
m = bytes(range(32))
mask = H(b"svault-kem-mask", u64(kem))
c1 = kem * pow(G, r, P) % P
c2 = pow(pk_a, r, P)
masked = bytes(x ^ y for x, y in zip(m, mask))
check = H(b"svault-kem-check", u64(kem))[:16]
wk_a = u64(c1) + u64(c2) + masked + check + toy_id(pk_a)
factor = b * pow(a, Q - 2, Q) % Q
wk_b = u64(c1) + u64(pow(c2, factor, P)) + masked + check + toy_id(pk_b)
out["toy_pre"] = {
    "a": a,
    "b": b,
    "plaintext": m.hex(),
    "delegation": (u64(delegation) + toy_id(pk_b)).hex(),
    "blinded_token": (u64(blinded) + toy_id(pk_a) + toy_id(pk_b)).hex(),
    "token": (u64(factor) + toy_id(pk_a) + toy_id(pk_b)).hex(),
    "wrapped_for_a": wk_a.hex(),
    "wrapped_for_b": wk_b.hex(),
    "derived_from_seed_zeros": toy_scalar(H(b"svault-pre-derive", zeros)),
}

print(json.dumps(out, indent=2))

use std::collections::HashMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;
use streamvault::crypto::pre::{self, decrypt, encrypt, reencrypt};
use streamvault::crypto::{
    BlindedToken, DelegationKey, Identity, KeyRegression, PreKeyPair, PreSecretKey, ReEncryptionToken, Ristretto,
    StreamKey, ToyGroup, WrappedKey,
};
use streamvault::ledger::{LedgerTx, TxBody};
use streamvault::storage::{KeyMaterial, WRAPPED_SLOT};
use streamvault::stream::{build_chunk, chunk_key, encode_records, open_chunk, DataRecord, StreamRegistration};
use streamvault::{sha256, Digest256};

pub fn golden() -> Value {
    serde_json::from_str(include_str!("../data/golden.json")).unwrap()
}

pub fn hx(v: &Value) -> Vec<u8> {
    hex::decode(v.as_str().unwrap()).unwrap()
}

pub fn arr32(v: &Value) -> [u8; 32] {
    hx(v).try_into().unwrap()
}

pub fn key_regression_matches_reference_vectors() {
    for case in golden()["keyreg"].as_array().unwrap() {
        let n = case["n"].as_u64().unwrap() as u32;
        let kr = KeyRegression::new(n, arr32(&case["seed"])).unwrap();
        for t in 0..=n {
            let st = kr.member_state(t).unwrap();
            assert_eq!(st.state.to_vec(), hx(&case["states"][t as usize]), "state {t}");
            assert_eq!(kr.key(t).unwrap().key.to_vec(), hx(&case["keys"][t as usize]), "key {t}");
        }
    }
}

pub fn sealed_chunk_matches_reference_bytes() {
    let g = golden();
    let c = &g["chunk"];
    let owner = Identity::from_secret(arr32(&c["owner_secret"]));
    assert_eq!(owner.public_bytes().to_vec(), hx(&c["owner_pk"]));
    assert_eq!(owner.id().0.to_vec(), hx(&c["owner_id"]));

    let reg = StreamRegistration::from_bytes(&hx(&c["registration"])).unwrap();
    assert_eq!(reg.to_bytes(), hx(&c["registration"]));
    assert_eq!(reg.stream_id().0.to_vec(), hx(&c["stream_id"]));
    let records: Vec<DataRecord> =
        c["records"].as_array().unwrap().iter().map(|r| DataRecord::new(r[0].as_u64().unwrap(), hx(&r[1]))).collect();
    assert_eq!(encode_records(&records), hx(&c["block"]));

    let mut meta = reg.meta();
    meta.epoch = 2;
    let key = KeyRegression::new(8, [0; 32]).unwrap().key(2).unwrap();
    let prev = Digest256(arr32(&c["prev"]));
    let chunk = build_chunk(&meta, &records, prev, &key, &owner).unwrap();
    assert_eq!(chunk.header.to_bytes().to_vec(), hx(&c["header"]));
    assert_eq!(chunk.to_bytes(), hx(&c["sealed"]));
    assert_eq!(chunk.digest().0.to_vec(), hx(&c["digest"]));
    assert_eq!(chunk_key(&meta, 2).0 .0.to_vec(), hx(&c["chunk_key"]));
    assert_eq!(open_chunk(&chunk, &key, &owner.public()).unwrap(), records);

    let tx = LedgerTx::signed(&owner, meta.stream_id, TxBody::Checkpoint { chunk_index: 9, digest: chunk.digest() });
    assert_eq!(tx.to_bytes(), hx(&g["checkpoint_tx"]));
    assert_eq!(LedgerTx::from_bytes(&tx.to_bytes()).unwrap(), tx);
}

pub fn key_material_layout_matches_reference() {
    let g = golden();
    let k = &g["keymat"];
    let sid = Digest256(arr32(&g["chunk"]["stream_id"]));
    let owner = Digest256(arr32(&g["chunk"]["owner_id"]));

    let wk = WrappedKey::from_bytes(&hx(&k["wrapped_key"])).unwrap();
    assert_eq!(wk.to_bytes(), hx(&k["wrapped_key"]));
    let w = KeyMaterial::wrapped(sid, 3, 1, wk);
    assert_eq!(w.to_bytes(), hx(&k["wrapped"]));
    assert_eq!(w.storage_key().0.to_vec(), hx(&k["wrapped_storage_key"]));
    assert_eq!(w.grantee, WRAPPED_SLOT);

    let mut five = [0u8; 32];
    five[0] = 5;
    let mut tok = five.to_vec();
    tok.extend_from_slice(&sha256(b"from").0);
    tok.extend_from_slice(&sha256(b"to").0);
    let t = KeyMaterial::token(sid, 1, owner, BlindedToken::from_bytes(&tok).unwrap());
    assert_eq!(t.to_bytes(), hx(&k["token"]));
    assert_eq!(t.storage_key().0.to_vec(), hx(&k["token_storage_key"]));
    assert_eq!(KeyMaterial::from_bytes(&t.to_bytes()).unwrap(), t);
}

pub fn toy_group_pre_matches_reference() {
    let g = golden();
    let v = &g["toy_pre"];
    let sk = |x: u64| PreSecretKey::<ToyGroup>::from_bytes(&x.to_be_bytes()).unwrap();
    let (a, b) = (sk(v["a"].as_u64().unwrap()), sk(v["b"].as_u64().unwrap()));

    let d = pre::delegation_key(&b);
    assert_eq!(d.to_bytes(), hx(&v["delegation"]));
    assert_eq!(DelegationKey::<ToyGroup>::from_bytes(&d.to_bytes()).unwrap(), d);
    let blinded = pre::issue_token(&a, &d);
    assert_eq!(blinded.to_bytes(), hx(&v["blinded_token"]));
    let t = blinded.unblind(&b).unwrap();
    assert_eq!(t.to_bytes(), hx(&v["token"]));
    assert_eq!(t, pre::token(&a, &b));
    assert_eq!(ReEncryptionToken::<ToyGroup>::from_bytes(&t.to_bytes()).unwrap(), t);

    let wk_a = WrappedKey::<ToyGroup>::from_bytes(&hx(&v["wrapped_for_a"])).unwrap();
    assert_eq!(decrypt(&a, &wk_a).unwrap().to_vec(), hx(&v["plaintext"]));
    let wk_b = reencrypt(&t, &wk_a).unwrap();
    assert_eq!(wk_b.to_bytes(), hx(&v["wrapped_for_b"]));
    assert_eq!(decrypt(&b, &wk_b).unwrap().to_vec(), hx(&v["plaintext"]));

    let derived = PreSecretKey::<ToyGroup>::derive(&[0; 32]).scalar();
    assert_eq!(derived, v["derived_from_seed_zeros"].as_u64().unwrap());
}

pub fn pre_round_trip_100_trials() {
    let mut rng = ChaCha20Rng::seed_from_u64(100);
    for trial in 0..100 {
        let owner = PreKeyPair::<Ristretto>::generate(&mut rng);
        let service = PreKeyPair::<Ristretto>::generate(&mut rng);
        let mut m = [0u8; 32];
        rng.fill_bytes(&mut m);
        let wk = encrypt(&owner.public, &m, &mut rng);
        assert_eq!(decrypt(&owner.secret, &wk).unwrap(), m, "trial {trial}");
        let token =
            pre::issue_token(&owner.secret, &pre::delegation_key(&service.secret)).unblind(&service.secret).unwrap();
        let mine = reencrypt(&token, &wk).unwrap();
        assert_eq!(decrypt(&service.secret, &mine).unwrap(), m, "trial {trial}");
        assert!(decrypt(&owner.secret, &mine).is_err());
        assert_eq!(WrappedKey::from_bytes(&mine.to_bytes()).unwrap(), mine);
    }
}

pub fn member_and_owner_keys_agree_on_every_epoch() {
    for seed in 0..10u64 {
        let mut s = [0u8; 32];
        ChaCha20Rng::seed_from_u64(seed).fill_bytes(&mut s);
        let kr = KeyRegression::new(64, s).unwrap();
        // owner side: one straight walk from the seed, newest first
        let mut owner_keys: Vec<StreamKey> = Vec::new();
        let mut st = kr.member_state(64).unwrap();
        loop {
            owner_keys.push(st.key());
            if st.epoch == 0 {
                break;
            }
            st = st.unwind_state(st.epoch - 1).unwrap();
        }
        owner_keys.reverse();
        for held in 0..=64u32 {
            let member = kr.member_state(held).unwrap();
            for t in 0..=held {
                assert_eq!(member.unwind(t).unwrap(), owner_keys[t as usize]);
                assert_eq!(kr.key(t).unwrap(), owner_keys[t as usize]);
            }
            if held < 64 {
                assert!(member.unwind(held + 1).is_err());
            }
        }
    }
}

/// Discrete logs by table lookup over the whole toy subgroup.
pub fn dlog_table() -> HashMap<u64, u64> {
    let mut t = HashMap::with_capacity(ToyGroup::Q as usize);
    let mut x = 1u64;
    for i in 0..ToyGroup::Q {
        t.insert(x, i);
        x = x * ToyGroup::G % ToyGroup::P;
    }
    t
}

pub fn toy_group_exponents_follow_the_scheme() {
    let (p, q) = (ToyGroup::P, ToyGroup::Q);
    assert!((2..q).take_while(|d| d * d <= q).all(|d| q % d != 0));
    assert!((2..p).take_while(|d| d * d <= p).all(|d| p % d != 0));
    assert_eq!((p - 1) % q, 0);
    let table = dlog_table();
    assert_eq!(table.len() as u64, q, "generator has order q");

    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for _ in 0..50 {
        let a = PreKeyPair::<ToyGroup>::generate(&mut rng);
        let b = PreKeyPair::<ToyGroup>::generate(&mut rng);
        let (sa, sb) = (a.secret.scalar(), b.secret.scalar());
        assert_eq!(table[&a.public.0], sa);
        let mut m = [0u8; 32];
        rng.fill_bytes(&mut m);
        let wk = encrypt(&a.public, &m, &mut rng);
        // c2 = g^{a r}
        let ar = table[&wk.c2];
        let r = ar * pow_mod(sa, q - 2, q) % q;
        let t = pre::token(&a.secret, &b.secret);
        assert_eq!(t.factor, sb * pow_mod(sa, q - 2, q) % q);
        let wb = reencrypt(&t, &wk).unwrap();
        assert_eq!(table[&wb.c2], sb * r % q);
        assert_eq!(wb.c1, wk.c1);
        assert_eq!(decrypt(&b.secret, &wb).unwrap(), m);
    }
}

pub fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

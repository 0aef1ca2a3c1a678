use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use streamvault::crypto::{Identity, PrincipalId};
use streamvault::ledger::{
    AclState, Block, ChainConfig, Ledger, LedgerError, LedgerTx, Permission, SimulatedChain, TxBody,
};
use streamvault::stream::StreamRegistration;
use streamvault::{sha256, Digest256};

/// What the generator meant to submit, for the reference fold.
#[derive(Clone, Debug)]
pub enum Intent {
    Register {
        issuer: usize,
        stream: usize,
    },
    Grant {
        issuer: usize,
        stream: usize,
        grantee: usize,
    },
    Revoke {
        issuer: usize,
        stream: usize,
        grantee: usize,
        epoch: u32,
    },
    Checkpoint {
        issuer: usize,
        stream: usize,
        index: u64,
    },
    /// Bad signature, garbage or foreign payload: never changes anything.
    Noise,
}

pub struct Universe {
    pub people: Vec<Identity>,
    /// Stream `s` is owned by `people[s % 2]`.
    pub regs: Vec<StreamRegistration>,
}

impl Universe {
    pub fn new(rng: &mut ChaCha20Rng) -> Self {
        let people: Vec<Identity> = (0..6).map(|_| Identity::generate(rng)).collect();
        let regs =
            (0..3).map(|s| StreamRegistration::new(people[s % 2].public_bytes(), format!("s{s}"), 0, 1_000)).collect();
        Universe { people, regs }
    }

    pub fn sid(&self, s: usize) -> Digest256 {
        self.regs[s].stream_id()
    }

    pub fn random_tx(&self, rng: &mut ChaCha20Rng) -> (Intent, Vec<u8>) {
        let issuer = if rng.gen_bool(0.8) { rng.gen_range(0..2) } else { rng.gen_range(0..6) };
        let stream = rng.gen_range(0..3);
        let sid = self.sid(stream);
        let id = &self.people[issuer];
        let grantee = rng.gen_range(0..6);
        let gid = self.people[grantee].id();
        let (intent, tx) = match rng.gen_range(0..100) {
            0..=14 => {
                // Registering someone else's stream must fail on owner mismatch.
                (
                    Intent::Register { issuer, stream },
                    LedgerTx::signed(id, sid, TxBody::RegisterStream(self.regs[stream].clone())),
                )
            }
            15..=49 => (
                Intent::Grant { issuer, stream, grantee },
                LedgerTx::signed(id, sid, TxBody::Grant { grantee: gid, token_ref: sha256(&rng.gen::<[u8; 8]>()) }),
            ),
            50..=74 => {
                let epoch = rng.gen_range(0..12);
                (
                    Intent::Revoke { issuer, stream, grantee, epoch },
                    LedgerTx::signed(id, sid, TxBody::Revoke { grantee: gid, new_epoch: epoch }),
                )
            }
            75..=89 => {
                let index = rng.gen_range(0..40);
                (
                    Intent::Checkpoint { issuer, stream, index },
                    LedgerTx::signed(
                        id,
                        sid,
                        TxBody::Checkpoint { chunk_index: index, digest: sha256(&index.to_be_bytes()) },
                    ),
                )
            }
            90..=94 => {
                let mut tx = LedgerTx::signed(id, sid, TxBody::Grant { grantee: gid, token_ref: Digest256::ZERO });
                tx.signature[rng.gen_range(0..64)] ^= 1 << rng.gen_range(0..8);
                return (Intent::Noise, tx.to_bytes());
            }
            95..=97 => {
                let mut b = b"SVX1".to_vec();
                b.extend((0..rng.gen_range(0..80)).map(|_| rng.gen::<u8>()));
                return (Intent::Noise, b);
            }
            _ => return (Intent::Noise, (0..rng.gen_range(0..40)).map(|_| rng.gen::<u8>()).collect()),
        };
        (intent, tx.to_bytes())
    }
}

/// Writes a history onto a fresh chain; returns the chain and the intents
/// per block (index = height).
pub fn history(
    u: &Universe,
    rng: &mut ChaCha20Rng,
    txs: usize,
    blocks: usize,
) -> (Arc<SimulatedChain>, Vec<Vec<Intent>>) {
    let chain = Arc::new(SimulatedChain::new(ChainConfig::default(), 0));
    let mut per_block = vec![vec![]; blocks + 1];
    let mut cuts: Vec<usize> = (0..txs).map(|_| rng.gen_range(1..=blocks)).collect();
    cuts.sort_unstable();
    let mut i = 0;
    for h in 1..=blocks {
        while i < cuts.len() && cuts[i] == h {
            let (intent, bytes) = u.random_tx(rng);
            streamvault::ledger::ChainAdapter::submit(chain.as_ref(), bytes).unwrap();
            per_block[h].push(intent);
            i += 1;
        }
        assert_eq!(chain.mine(), h as u64);
    }
    (chain, per_block)
}

/// Reference fold over intents, straight from the rules.
#[derive(Clone, Default)]
pub struct RefStream {
    pub owner: usize,
    pub granted: BTreeSet<usize>,
    pub epoch: u32,
    pub anchor: Option<u64>,
}

pub fn reference(per_block: &[Vec<Intent>], upto: usize) -> BTreeMap<usize, RefStream> {
    let mut s: BTreeMap<usize, RefStream> = BTreeMap::new();
    for block in &per_block[..=upto] {
        for intent in block {
            match *intent {
                Intent::Register { issuer, stream } => {
                    if issuer == stream % 2 && !s.contains_key(&stream) {
                        s.insert(stream, RefStream { owner: issuer, ..Default::default() });
                    }
                }
                Intent::Grant { issuer, stream, grantee } => {
                    if let Some(e) = s.get_mut(&stream).filter(|e| e.owner == issuer && grantee != issuer) {
                        e.granted.insert(grantee);
                    }
                }
                Intent::Revoke { issuer, stream, grantee, epoch } => {
                    if let Some(e) = s.get_mut(&stream) {
                        if e.owner == issuer && e.granted.contains(&grantee) && epoch > e.epoch {
                            e.granted.remove(&grantee);
                            e.epoch = epoch;
                        }
                    }
                }
                Intent::Checkpoint { issuer, stream, index } => {
                    if let Some(e) = s.get_mut(&stream).filter(|e| e.owner == issuer) {
                        if e.anchor.map_or(true, |a| index > a) {
                            e.anchor = Some(index);
                        }
                    }
                }
                Intent::Noise => {}
            }
        }
    }
    s
}

pub fn expected(r: &BTreeMap<usize, RefStream>, stream: usize, who: usize) -> Result<Permission, ()> {
    let e = r.get(&stream).ok_or(())?;
    Ok(if e.owner == who {
        Permission::Owner
    } else if e.granted.contains(&who) {
        Permission::Granted
    } else {
        Permission::Denied
    })
}

pub fn replays_are_deterministic() {
    let mut rng = ChaCha20Rng::seed_from_u64(1000);
    let u = Universe::new(&mut rng);
    let (chain, per_block) = history(&u, &mut rng, 1_000, 200);
    let blocks = chain.blocks();
    assert_eq!(blocks.len(), 201);

    let a = AclState::replay(&blocks).unwrap();
    let copy = Arc::new(SimulatedChain::from_blocks(ChainConfig::default(), blocks.clone()).unwrap());
    let mut follower = Ledger::new(copy, 1);
    follower.sync().unwrap();
    let b = follower.state();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a.audit_all(), b.audit_all());
    assert_eq!(a.audit_all().len(), per_block.iter().map(|b| b.len()).sum::<usize>() - foreign(&blocks));

    // block by block, with the anchor never moving backwards
    let mut st = AclState::new();
    let mut last: BTreeMap<Digest256, u64> = BTreeMap::new();
    for blk in &blocks {
        st.apply_block(blk).unwrap();
        for (sid, e) in st.streams() {
            if let Some(anchor) = &e.anchor {
                let prev = last.insert(*sid, anchor.chunk_index);
                assert!(prev.map_or(true, |p| p <= anchor.chunk_index));
            }
        }
    }
    assert_eq!(st.digest(), a.digest());

    let r = reference(&per_block, 200);
    for s in 0..3 {
        let anchor = a.latest_anchor(&u.sid(s)).ok().flatten().map(|x| x.chunk_index);
        assert_eq!(anchor, r.get(&s).and_then(|e| e.anchor));
    }
}

pub fn foreign(blocks: &[Block]) -> usize {
    blocks.iter().flat_map(|b| &b.payloads).filter(|p| !p.starts_with(b"SVX1")).count()
}

pub fn tampering_with_history_breaks_the_links() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let u = Universe::new(&mut rng);
    let (chain, _) = history(&u, &mut rng, 100, 20);
    let mut blocks = chain.blocks();
    let target = blocks.iter().position(|b| !b.payloads.is_empty()).unwrap();
    blocks[target].payloads[0][4] ^= 1;
    let err = AclState::replay(&blocks).unwrap_err();
    assert_eq!(err, LedgerError::BrokenLink { height: target as u64 + 1 });
    assert!(SimulatedChain::from_blocks(ChainConfig::default(), blocks).is_err());
}

pub fn permission_oracle_on_1000_histories() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    for round in 0..1_000 {
        let u = Universe::new(&mut rng);
        let blocks = rng.gen_range(2..12);
        let txs = rng.gen_range(0..40);
        let (chain, per_block) = history(&u, &mut rng, txs, blocks);
        let state = AclState::replay(&chain.blocks()).unwrap();
        for h in 0..=blocks {
            let r = reference(&per_block, h);
            for s in 0..3 {
                for who in 0..6 {
                    let got = state.query_permission(&u.sid(s), &u.people[who].id(), Some(h as u64)).map_err(|_| ());
                    assert_eq!(got, expected(&r, s, who), "round {round} height {h} stream {s} who {who}");
                }
            }
        }
        let r = reference(&per_block, blocks);
        for s in 0..3 {
            let Some(e) = state.stream(&u.sid(s)) else {
                assert!(!r.contains_key(&s));
                continue;
            };
            let grants: BTreeSet<PrincipalId> = e.grants.keys().copied().collect();
            let want: BTreeSet<PrincipalId> = r[&s].granted.iter().map(|g| u.people[*g].id()).collect();
            assert_eq!(grants, want);
            assert_eq!(e.epoch, r[&s].epoch);
        }
    }
}

pub fn non_owners_cannot_move_a_grant_set() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let u = Universe::new(&mut rng);
    let chain = Arc::new(SimulatedChain::new(ChainConfig::default(), 0));
    let submit = |tx: &LedgerTx| streamvault::ledger::submit(chain.as_ref(), tx).unwrap();
    let sid = u.sid(0);
    submit(&LedgerTx::register(&u.people[0], u.regs[0].clone()));
    submit(&LedgerTx::signed(
        &u.people[0],
        sid,
        TxBody::Grant { grantee: u.people[3].id(), token_ref: Digest256::ZERO },
    ));
    chain.mine();
    let before = AclState::replay(&chain.blocks()).unwrap().stream(&sid).unwrap().grants.clone();
    let mut order: Vec<usize> = (1..6).collect();
    for _ in 0..50 {
        order.shuffle(&mut rng);
        let who = &u.people[order[0]];
        let g = u.people[rng.gen_range(0..6)].id();
        let body = if rng.gen_bool(0.5) {
            TxBody::Grant { grantee: g, token_ref: Digest256::ZERO }
        } else {
            TxBody::Revoke { grantee: g, new_epoch: rng.gen_range(1..100) }
        };
        submit(&LedgerTx::signed(who, sid, body));
    }
    chain.mine();
    let after = AclState::replay(&chain.blocks()).unwrap();
    assert_eq!(after.stream(&sid).unwrap().grants, before);
    let rejected =
        after.audit_log(&sid).unwrap().iter().filter(|e| e.outcome != streamvault::ledger::Outcome::Applied).count();
    assert_eq!(rejected, 50);
}

use proptest::prelude::*;
use streamvault::crypto::PublicIdentity;
use streamvault::gateway::{read_from_storage, ChunkSource, GatewayError, Requester};
use streamvault::harness::{Profile, SyntheticSeries, World};
use streamvault::stream::{chunk_key, open_chunk, verify_chain, ChunkError, DataRecord, SealedChunk};
use streamvault::Digest256;

const HOUR: u64 = 3_600_000;

fn world(seed: u64) -> World {
    World::new(&Profile::default(), seed)
}

fn registered(w: &mut World) -> Digest256 {
    let reg = w.registration("hr", 0);
    let sid = w.gateway.register(reg).unwrap();
    w.settle().unwrap();
    sid
}

fn hours(h: u64, seed: u64) -> Vec<DataRecord> {
    SyntheticSeries::default().generate(h * 3_600, seed)
}

fn stored_chunk(w: &World, sid: &Digest256, idx: u64) -> SealedChunk {
    let meta = w.gateway.meta(sid).unwrap();
    let mut owner = w.gateway.owner_reader(sid).unwrap();
    SealedChunk::from_bytes(&owner.fetch(chunk_key(&meta, idx).0, *sid).unwrap()).unwrap()
}

#[test]
fn a_day_seals_24_chained_and_anchored_chunks() {
    let mut w = world(1);
    let sid = registered(&mut w);
    let recs = hours(24, 1);
    let interval = u64::from(w.gateway.meta(&sid).unwrap().checkpoint_interval);
    for r in recs.clone() {
        w.gateway.ingest(&sid, r).unwrap();
        assert!(w.gateway.unanchored(&sid).unwrap() < interval);
    }
    w.gateway.flush(&sid).unwrap();
    w.settle().unwrap();
    assert_eq!(w.gateway.emitted(&sid).unwrap().len(), 24);
    assert_eq!(w.gateway.pending_uploads(&sid).unwrap(), 0);

    let anchor = w.ledger.state().latest_anchor(&sid).unwrap().expect("anchored");
    assert_eq!(anchor.chunk_index, 19);
    assert_eq!(w.gateway.unanchored(&sid).unwrap(), 4);
    let chunks: Vec<SealedChunk> = (0..24).map(|i| stored_chunk(&w, &sid, i)).collect();
    assert!(verify_chain(&chunks[..20], &anchor.digest));

    let mut tampered = chunks[..20].to_vec();
    tampered[7].payload[0] ^= 1;
    assert!(!verify_chain(&tampered, &anchor.digest));
}

#[test]
fn owner_round_trip_from_cache_and_from_storage() {
    let mut w = world(2);
    let sid = registered(&mut w);
    let recs = hours(6, 2);
    w.gateway.ingest_all(&sid, recs.clone()).unwrap();
    w.gateway.flush(&sid).unwrap();
    w.settle().unwrap();

    let mut owner = w.gateway.owner_reader(&sid).unwrap();
    let res = w.gateway.query(&sid, 0, 6 * HOUR, &mut owner).unwrap();
    assert_eq!(res.records, recs);
    assert!(res.plan.chunks.iter().all(|(_, s)| *s == ChunkSource::Cache));
    assert_eq!(res.storage_messages, 0);

    let meta = w.gateway.meta(&sid).unwrap();
    let pk = PublicIdentity::from_bytes(&meta_owner_pk(&w)).unwrap();
    let mut owner = w.gateway.owner_reader(&sid).unwrap();
    let from_storage = read_from_storage(&meta, &pk, 0, 6 * HOUR, &mut owner).unwrap();
    assert_eq!(from_storage, res.records);

    let mid = w.gateway.query(&sid, HOUR + 500, 2 * HOUR + 1, &mut owner).unwrap();
    let want: Vec<_> =
        recs.iter().filter(|r| r.timestamp >= HOUR + 500 && r.timestamp < 2 * HOUR + 1).cloned().collect();
    assert_eq!(mid.records, want);
    assert_eq!(mid.plan.chunks.iter().map(|c| c.0).collect::<Vec<_>>(), [1, 2]);
}

fn meta_owner_pk(w: &World) -> [u8; 32] {
    w.gateway.owner().public_bytes()
}

#[test]
fn evicted_chunks_come_from_storage() {
    let mut p = Profile::default();
    p.gateway.cache_capacity = 4;
    let mut w = World::new(&p, 3);
    let sid = registered(&mut w);
    let recs = hours(10, 3);
    w.gateway.ingest_all(&sid, recs.clone()).unwrap();
    w.gateway.flush(&sid).unwrap();
    w.settle().unwrap();
    assert_eq!(w.gateway.cache(&sid).unwrap().indices().collect::<Vec<_>>(), vec![6, 7, 8, 9]);

    let mut owner = w.gateway.owner_reader(&sid).unwrap();
    let before = w.transport.messages();
    let res = w.gateway.query(&sid, 0, 10 * HOUR, &mut owner).unwrap();
    assert_eq!(res.records, recs);
    let from_storage = res.plan.chunks.iter().filter(|c| c.1 == ChunkSource::Storage).count() as u64;
    assert_eq!(from_storage, 6);
    assert_eq!(res.storage_messages, 2 * from_storage);
    assert_eq!(w.transport.messages() - before, 2 * from_storage);

    let before = w.transport.messages();
    let hot = w.gateway.query(&sid, 7 * HOUR, 9 * HOUR, &mut owner).unwrap();
    assert_eq!(hot.storage_messages, 0);
    assert_eq!(w.transport.messages(), before);
    assert!(w.gateway.query(&sid, 5 * HOUR, 5 * HOUR, &mut owner).unwrap().records.is_empty());
}

#[test]
fn uploads_wait_for_registration_confirmation() {
    let mut p = Profile::default();
    p.chain.confirmations = 3;
    let mut w = World::new(&p, 4);
    let reg = w.registration("s", 0);
    let sid = w.gateway.register(reg).unwrap();
    w.gateway.ingest_all(&sid, hours(2, 4)).unwrap();
    w.gateway.flush(&sid).unwrap();
    // wrapped key for epoch 0 and two chunks
    assert_eq!(w.gateway.pending_uploads(&sid).unwrap(), 3);
    w.tick().unwrap();
    w.tick().unwrap();
    assert_eq!(w.gateway.pending_uploads(&sid).unwrap(), 3);
    w.tick().unwrap();
    assert_eq!(w.gateway.pending_uploads(&sid).unwrap(), 0);
}

#[test]
fn checkpoints_retry_while_the_ledger_is_down() {
    let mut w = world(5);
    let sid = registered(&mut w);
    w.chain.set_available(false);
    w.gateway.ingest_all(&sid, hours(12, 5)).unwrap();
    w.gateway.flush(&sid).unwrap();
    assert_eq!(w.gateway.unanchored(&sid).unwrap(), 12);
    assert!(w.gateway.last_checkpoint(&sid).unwrap().is_none());
    w.chain.set_available(true);
    w.tick().unwrap();
    assert_eq!(w.gateway.unanchored(&sid).unwrap(), 0);
    w.settle().unwrap();
    let anchor = w.ledger.state().latest_anchor(&sid).unwrap().unwrap();
    assert_eq!(anchor.chunk_index, 11);
}

#[test]
fn late_and_unknown() {
    let mut w = world(6);
    let sid = registered(&mut w);
    w.gateway.ingest(&sid, DataRecord::new(5 * HOUR, vec![1])).unwrap();
    assert_eq!(
        w.gateway.ingest(&sid, DataRecord::new(2 * HOUR, vec![1])).unwrap_err(),
        GatewayError::LateRecord { ts: 2 * HOUR, watermark: 5 * HOUR }
    );
    w.gateway.ingest(&sid, DataRecord::new(3 * HOUR, vec![1])).unwrap();
    let other = Digest256([9; 32]);
    assert_eq!(w.gateway.ingest(&other, DataRecord::new(0, vec![])).unwrap_err(), GatewayError::UnknownStream(other));
}

#[test]
fn epochs_straddled_by_one_query() {
    let mut w = world(7);
    let sid = registered(&mut w);
    let recs = hours(4, 7);
    w.gateway.ingest_all(&sid, recs[..7_200].to_vec()).unwrap();
    w.gateway.flush(&sid).unwrap();
    assert_eq!(w.gateway.rotate(&sid).unwrap(), 1);
    w.gateway.ingest_all(&sid, recs[7_200..].to_vec()).unwrap();
    w.gateway.flush(&sid).unwrap();
    w.settle().unwrap();

    let epochs: Vec<u32> = (0..4).map(|i| stored_chunk(&w, &sid, i).header.epoch).collect();
    assert_eq!(epochs, [0, 0, 1, 1]);
    let mut owner = w.gateway.owner_reader(&sid).unwrap();
    assert_eq!(w.gateway.query(&sid, 0, 4 * HOUR, &mut owner).unwrap().records, recs);
}

#[test]
fn sharing_round_trip_and_revocation() {
    let mut w = world(8);
    let sid = registered(&mut w);
    let s = w.new_identity();
    let mut svc = w.reader(s.clone());
    w.gateway.share(&sid, &svc.share_request()).unwrap();
    w.settle().unwrap();

    let recs = hours(6, 8);
    w.gateway.ingest_all(&sid, recs[..3 * 3_600].to_vec()).unwrap();
    w.gateway.flush(&sid).unwrap();
    w.settle().unwrap();
    let mut owner = w.gateway.owner_reader(&sid).unwrap();
    let mine = w.gateway.query(&sid, 0, 3 * HOUR, &mut owner).unwrap().records;
    assert_eq!(w.gateway.query(&sid, 0, 3 * HOUR, &mut svc).unwrap().records, mine);

    w.gateway.revoke(&sid, &s.id()).unwrap();
    w.gateway.ingest_all(&sid, recs[3 * 3_600..].to_vec()).unwrap();
    w.gateway.flush(&sid).unwrap();
    w.settle().unwrap();

    assert_eq!(w.gateway.query(&sid, 3 * HOUR, 6 * HOUR, &mut svc).unwrap_err(), GatewayError::PermissionDenied);
    let meta = w.gateway.meta(&sid).unwrap();
    let pk = PublicIdentity::from_bytes(&meta_owner_pk(&w)).unwrap();
    assert_eq!(
        read_from_storage(&meta, &pk, 3 * HOUR, 6 * HOUR, &mut svc).unwrap_err(),
        GatewayError::PermissionDenied
    );

    let leaked = stored_chunk(&w, &sid, 4);
    assert_eq!(leaked.header.epoch, 1);
    let held = svc.member_state(&sid).expect("held a state before revocation").clone();
    assert_eq!(held.epoch, 0);
    let err = open_chunk(&leaked, &held.key(), &pk).unwrap_err();
    assert!(matches!(err, ChunkError::WrongEpochKey { .. }));
    let forced = streamvault::crypto::StreamKey { epoch: 1, key: held.key().key };
    assert!(open_chunk(&leaked, &forced, &pk).is_err());
}

#[test]
fn late_grantee_reads_history_through_forward_scan() {
    let mut w = world(9);
    let sid = registered(&mut w);
    let early = w.new_identity();
    let r = w.reader(early.clone());
    w.gateway.share(&sid, &r.share_request()).unwrap();
    w.gateway.ingest_all(&sid, hours(2, 9)).unwrap();
    w.gateway.flush(&sid).unwrap();
    w.gateway.revoke(&sid, &early.id()).unwrap();
    w.settle().unwrap();

    // epoch-0 chunks were sealed before this service was granted anything
    let late = w.new_identity();
    let mut svc = w.reader(late);
    w.gateway.share(&sid, &svc.share_request()).unwrap();
    w.settle().unwrap();
    let meta = w.gateway.meta(&sid).unwrap();
    let pk = PublicIdentity::from_bytes(&meta_owner_pk(&w)).unwrap();
    let got = read_from_storage(&meta, &pk, 0, 2 * HOUR, &mut svc).unwrap();
    assert_eq!(got, hours(2, 9));
}

#[test]
fn ungranted_services_are_refused() {
    let mut w = world(10);
    let sid = registered(&mut w);
    w.gateway.ingest_all(&sid, hours(1, 10)).unwrap();
    w.gateway.flush(&sid).unwrap();
    w.settle().unwrap();
    let stranger = w.new_identity();
    let mut svc = w.reader(stranger.clone());
    assert_eq!(w.gateway.query(&sid, 0, HOUR, &mut svc).unwrap_err(), GatewayError::PermissionDenied);
    assert_eq!(w.gateway.revoke(&sid, &stranger.id()).unwrap_err(), GatewayError::NotGranted(stranger.id()));
}

#[test]
fn snapshot_survives_export_and_import() {
    let p = Profile::default();
    let mut w = World::new(&p, 11);
    let sid = registered(&mut w);
    let recs = hours(4, 11);
    w.gateway.ingest_all(&sid, recs[..7_200].to_vec()).unwrap();
    w.gateway.flush(&sid).unwrap();
    let snap = w.gateway.export(&sid).unwrap();
    let json = serde_json::to_string(&snap).unwrap();

    let owner = w.gateway.owner().clone();
    let mut g2 = streamvault::gateway::Gateway::new(owner, w.chain.clone(), w.storage(), p.gateway.clone(), 99);
    g2.import(serde_json::from_str(&json).unwrap()).unwrap();
    g2.ingest_all(&sid, recs[7_200..].to_vec()).unwrap();
    g2.flush(&sid).unwrap();
    w.settle().unwrap();
    g2.pump(&sid).unwrap();

    let meta = g2.meta(&sid).unwrap();
    let pk = PublicIdentity::from_bytes(&meta_owner_pk(&w)).unwrap();
    let mut owner = g2.owner_reader(&sid).unwrap();
    assert_eq!(read_from_storage(&meta, &pk, 0, 4 * HOUR, &mut owner).unwrap(), recs);
    let chunks: Vec<SealedChunk> = (0..4).map(|i| stored_chunk(&w, &sid, i)).collect();
    assert!(verify_chain(&chunks, &chunks[3].digest()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn ingest_then_owner_query_is_identity(
        gaps in prop::collection::vec(1u64..900_000, 1..300),
        seed in any::<u64>(),
        interval in 1u32..6,
    ) {
        let mut p = Profile::default();
        p.checkpoint_interval = interval;
        let mut w = World::new(&p, seed);
        let sid = registered(&mut w);
        let mut ts = 0;
        let mut recs = Vec::new();
        for (i, g) in gaps.iter().enumerate() {
            recs.push(DataRecord::new(ts, (i as u32).to_be_bytes()));
            ts += g;
        }
        for r in recs.clone() {
            w.gateway.ingest(&sid, r).unwrap();
            prop_assert!(w.gateway.unanchored(&sid).unwrap() < u64::from(interval));
        }
        w.gateway.flush(&sid).unwrap();
        w.settle().unwrap();
        prop_assert!(w.gateway.unanchored(&sid).unwrap() < u64::from(interval));
        let mut owner = w.gateway.owner_reader(&sid).unwrap();
        let res = w.gateway.query(&sid, 0, ts + 1, &mut owner).unwrap();
        prop_assert_eq!(&res.records, &recs);
        let meta = w.gateway.meta(&sid).unwrap();
        let pk = PublicIdentity::from_bytes(&meta_owner_pk(&w)).unwrap();
        prop_assert_eq!(read_from_storage(&meta, &pk, 0, ts + 1, &mut owner).unwrap(), recs);
    }
}

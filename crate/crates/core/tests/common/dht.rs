use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use streamvault::dht::{DhtConfig, LatencyModel, NodeId, Overlay, Source};
use streamvault::Digest256;

pub fn brute_force_closest(o: &Overlay, key: &Digest256, r: usize) -> Vec<usize> {
    let target = NodeId::from_key(key);
    let mut live = o.live_nodes();
    live.sort_by_key(|i| o.node(*i).id.distance(&target));
    live.truncate(r);
    live
}

pub fn keys(n: u32, salt: &[u8]) -> Vec<Digest256> {
    (0..n).map(|i| streamvault::sha256_parts(&[salt, &i.to_be_bytes()])).collect()
}

pub fn routing_finds_the_xor_closest_set() {
    for (n, seed) in [(2, 1), (17, 2), (64, 3), (256, 4)] {
        let mut o = Overlay::build(DhtConfig::default(), LatencyModel::uniform(5.0), n, seed);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for key in keys(50, b"oracle") {
            let via = rng.gen_range(0..n);
            let routed = o.lookup_nodes(via, &key).unwrap();
            assert_eq!(routed, brute_force_closest(&o, &key, 3), "n={n}");
        }
    }
}

pub fn large_overlay_hops_and_single_failures() {
    let n = 1000;
    let mut o = Overlay::build(DhtConfig::default(), LatencyModel::uniform(5.0), n, 42);
    let bound = (n as f64).log2().ceil() as u32 + 3;

    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let ks = keys(1000, b"hops");
    for k in &ks {
        let via = rng.gen_range(0..n);
        let put = o.put(via, k, k.0.to_vec()).unwrap();
        assert_eq!(put.holders, brute_force_closest(&o, k, 3));
    }
    let mut max_hops = 0;
    for k in &ks {
        let via = rng.gen_range(0..n);
        let got = o.get(via, k).unwrap();
        assert_eq!(got.value, k.0);
        max_hops = max_hops.max(got.hops);
    }
    assert!(max_hops <= bound, "max hops {max_hops} > {bound}");

    // Any single failure loses nothing: every key sits on r distinct live
    // nodes, and failing the primary holder of sampled keys keeps all keys
    // reachable.
    for k in &ks {
        let h = o.holders(k);
        assert_eq!(h.iter().collect::<std::collections::BTreeSet<_>>().len(), 3);
    }
    let mut victims: Vec<usize> = ks.iter().take(25).map(|k| o.holders(k)[0]).collect();
    victims.dedup();
    for victim in victims {
        let mut o2 = o.clone();
        o2.fail(victim);
        let live = o2.live_nodes();
        for k in &ks {
            let via = live[rng.gen_range(0..live.len())];
            assert_eq!(o2.get(via, k).unwrap().value, k.0, "victim {victim}");
        }
    }
}

pub fn churn_with_republish() {
    let mut o = Overlay::build(DhtConfig::default(), LatencyModel::uniform(5.0), 1000, 13);
    let ks = keys(2000, b"churn");
    for (i, k) in ks.iter().enumerate() {
        o.put(i % 1000, k, vec![i as u8]).unwrap();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    // 20% of the original population replaced in ten waves.
    for _ in 0..10 {
        for _ in 0..20 {
            let live = o.live_nodes();
            o.fail(live[rng.gen_range(0..live.len())]);
        }
        for _ in 0..20 {
            o.join(0);
        }
        o.republish();
    }
    let live = o.live_nodes();
    let found = ks.iter().filter(|k| o.get(live[rng.gen_range(0..live.len())], k).is_ok()).count();
    assert!(found as f64 >= 0.99 * ks.len() as f64, "{found}/{}", ks.len());
}

pub fn sloppy_cache_locality() {
    let cfg = DhtConfig { sloppy: true, ..DhtConfig::default() };
    let mut o = Overlay::build(cfg, LatencyModel::world(), 400, 21);
    let ks = keys(40, b"local");
    for k in &ks {
        o.put(0, k, vec![7]).unwrap();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(22);
    let mut checked = 0;
    for k in &ks {
        let holders = o.holders(k);
        let holder_regions: Vec<usize> = holders.iter().map(|h| o.node(*h).region).collect();
        let far: Vec<usize> =
            o.live_nodes().into_iter().filter(|i| !holder_regions.contains(&o.node(*i).region)).collect();
        if far.is_empty() {
            continue;
        }
        let via = far[rng.gen_range(0..far.len())];
        let first = o.get(via, k).unwrap();
        assert!(first.cached_at.is_some());
        let second = o.get(via, k).unwrap();
        assert!(second.latency_ms < first.latency_ms);
        assert!(matches!(second.source, Source::Cache(_) | Source::Local));
        checked += 1;

        // Near a primary: no cache copy.
        let near = holders[0];
        let same: Vec<usize> = o
            .live_nodes()
            .into_iter()
            .filter(|i| o.node(*i).region == o.node(near).region && !holders.contains(i))
            .collect();
        if let Some(&v) = same.first() {
            let before = o.cache_holders(k);
            let got = o.get(v, k).unwrap();
            assert_eq!(got.cached_at, None);
            assert_eq!(o.cache_holders(k), before);
        }
    }
    assert!(checked > 10);

    // After the TTL the cached path is gone.
    let k = ks.iter().find(|k| !o.cache_holders(k).is_empty()).unwrap();
    let via = o.live_nodes().into_iter().find(|i| {
        let r = o.node(*i).region;
        o.cache_holders(k).iter().any(|c| o.node(*c).region == r) && !o.holders(k).contains(i)
    });
    let via = via.unwrap();
    let warm = o.get(via, k).unwrap();
    o.advance(600_001.0);
    let cold = o.get(via, k).unwrap();
    assert!(matches!(cold.source, Source::Primary(_)));
    assert!(cold.latency_ms > warm.latency_ms);
}

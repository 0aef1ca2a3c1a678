use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::config::{DhtConfig, LatencyModel};
use super::id::{Distance, NodeId};
use super::routing::{Contact, RoutingTable};
use super::DhtError;
use crate::Digest256;

type Value = Arc<Vec<u8>>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    /// The requester held the value itself.
    Local,
    Primary(usize),
    Cache(usize),
}

#[derive(Clone, Debug)]
pub struct GetReport {
    pub value: Vec<u8>,
    /// Sequential lookup rounds.
    pub hops: u32,
    pub latency_ms: f64,
    pub messages: u32,
    pub source: Source,
    /// Node that received a sloppy cache copy, if any.
    pub cached_at: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct PutReport {
    pub holders: Vec<usize>,
    pub hops: u32,
    pub latency_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub time_ms: f64,
    pub node: usize,
    pub action: &'static str,
    pub key: Option<Digest256>,
    pub latency_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeInfo {
    pub id: NodeId,
    pub region: usize,
    pub alive: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    Global,
    Region(usize),
}

#[derive(Clone)]
struct SimNode {
    id: NodeId,
    region: usize,
    table: RoutingTable,
    /// Same-region peers only, for the regional lookup.
    local: RoutingTable,
    store: BTreeMap<Digest256, Value>,
    cache: BTreeMap<Digest256, (Value, f64)>,
}

impl SimNode {
    fn table_for(&self, scope: Scope) -> &RoutingTable {
        match scope {
            Scope::Global => &self.table,
            Scope::Region(_) => &self.local,
        }
    }
}

struct Lookup {
    /// Live nodes that answered, closest first (at most k).
    closest: Vec<usize>,
    found: Option<(usize, Value, bool)>,
    rounds: u32,
    latency_ms: f64,
    messages: u32,
    answered: usize,
}

/// The whole overlay, simulated deterministically from one seed.
#[derive(Clone)]
pub struct Overlay {
    config: DhtConfig,
    latency: LatencyModel,
    nodes: Vec<SimNode>,
    alive: Vec<bool>,
    rng: ChaCha20Rng,
    now_ms: f64,
    trace: Option<Vec<TraceEvent>>,
}

impl Overlay {
    pub fn new(config: DhtConfig, latency: LatencyModel, seed: u64) -> Self {
        config.validate().expect("invalid DHT config");
        Overlay {
            config,
            latency,
            nodes: Vec::new(),
            alive: Vec::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
            now_ms: 0.0,
            trace: None,
        }
    }

    /// `n` nodes joined one by one, regions drawn uniformly.
    pub fn build(config: DhtConfig, latency: LatencyModel, n: usize, seed: u64) -> Self {
        let mut o = Overlay::new(config, latency, seed);
        for _ in 0..n {
            let region = o.rng.gen_range(0..o.latency.region_count());
            o.join(region);
        }
        o
    }

    pub fn config(&self) -> &DhtConfig {
        &self.config
    }

    pub fn set_sloppy(&mut self, on: bool) {
        self.config.sloppy = on;
    }

    pub fn latency_model(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn now_ms(&self) -> f64 {
        self.now_ms
    }

    pub fn advance(&mut self, ms: f64) {
        self.now_ms += ms;
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// `time_ms,node,action,key,latency_ms`, one event per line.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("time_ms,node,action,key,latency_ms\n");
        for e in self.trace() {
            let key = e.key.map(|k| k.to_hex()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:.3},{},{},{},{:.3}",
                e.time_ms,
                self.nodes[e.node].id.to_hex(),
                e.action,
                key,
                e.latency_ms
            );
        }
        out
    }

    fn log(&mut self, node: usize, action: &'static str, key: Option<Digest256>, latency_ms: f64) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent { time_ms: self.now_ms, node, action, key, latency_ms });
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn live_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|i| self.alive[*i]).collect()
    }

    pub fn live_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn node(&self, idx: usize) -> NodeInfo {
        let n = &self.nodes[idx];
        NodeInfo { id: n.id, region: n.region, alive: self.alive[idx] }
    }

    pub fn routing_table(&self, idx: usize) -> &RoutingTable {
        &self.nodes[idx].table
    }

    /// Number of primary values held by each live node.
    pub fn load(&self) -> Vec<usize> {
        self.live_nodes().into_iter().map(|i| self.nodes[i].store.len()).collect()
    }

    /// Live nodes holding a primary copy of `key`.
    pub fn holders(&self, key: &Digest256) -> Vec<usize> {
        self.live_nodes().into_iter().filter(|i| self.nodes[*i].store.contains_key(key)).collect()
    }

    /// Live nodes holding an unexpired cache copy of `key`.
    pub fn cache_holders(&self, key: &Digest256) -> Vec<usize> {
        let now = self.now_ms;
        self.live_nodes()
            .into_iter()
            .filter(|i| self.nodes[*i].cache.get(key).is_some_and(|(_, exp)| *exp > now))
            .collect()
    }

    /// Every primary value in the overlay, read with the simulator's global
    /// view.
    pub fn scan_prefix(&self, prefix: &[u8]) -> Vec<(Digest256, Vec<u8>)> {
        let mut out: BTreeMap<Digest256, Vec<u8>> = BTreeMap::new();
        for i in self.live_nodes() {
            for (k, v) in &self.nodes[i].store {
                if k.0.starts_with(prefix) {
                    out.entry(*k).or_insert_with(|| v.to_vec());
                }
            }
        }
        out.into_iter().collect()
    }

    fn contact(&self, idx: usize) -> Contact {
        Contact { id: self.nodes[idx].id, idx }
    }

    /// Adds `peer` to `at`'s tables (the regional one only when co-located).
    fn learn(&mut self, at: usize, peer: usize) {
        if at == peer {
            return;
        }
        let c = self.contact(peer);
        let same_region = self.nodes[at].region == self.nodes[peer].region;
        let alive = &self.alive;
        let node = &mut self.nodes[at];
        node.table.insert(c, |i| !alive[i]);
        if same_region {
            node.local.insert(c, |i| !alive[i]);
        }
    }

    fn forget(&mut self, at: usize, peer: usize) {
        let id = self.nodes[peer].id;
        self.nodes[at].table.remove(peer, &id);
        self.nodes[at].local.remove(peer, &id);
    }

    fn has_value(&self, idx: usize, key: &Digest256) -> Option<(Value, bool)> {
        let n = &self.nodes[idx];
        if let Some(v) = n.store.get(key) {
            return Some((v.clone(), false));
        }
        match n.cache.get(key) {
            Some((v, exp)) if *exp > self.now_ms => Some((v.clone(), true)),
            _ => None,
        }
    }

    /// Iterative lookup. Rounds query the `alpha` closest unqueried
    /// candidates and cost the slowest reply; the lookup ends when the `k`
    /// closest candidates have all been queried, or as soon as a value is
    /// found if `key` is given.
    fn lookup(&mut self, from: usize, target: NodeId, key: Option<&Digest256>, scope: Scope) -> Lookup {
        let k = self.config.k_bucket;
        let mut known: BTreeMap<Distance, usize> = BTreeMap::new();
        let mut queried: HashSet<usize> = HashSet::new();
        let mut failed: HashSet<usize> = HashSet::new();
        let mut answered: BTreeMap<Distance, usize> = BTreeMap::new();
        known.insert(self.nodes[from].id.distance(&target), from);
        queried.insert(from);
        answered.insert(self.nodes[from].id.distance(&target), from);
        for c in self.nodes[from].table_for(scope).closest(&target, k) {
            known.insert(c.id.distance(&target), c.idx);
        }
        let mut out = Lookup { closest: Vec::new(), found: None, rounds: 0, latency_ms: 0.0, messages: 0, answered: 0 };
        loop {
            let batch: Vec<usize> =
                known.values().take(k).filter(|i| !queried.contains(*i)).take(self.config.alpha).copied().collect();
            if batch.is_empty() {
                break;
            }
            out.rounds += 1;
            let mut round_ms: f64 = 0.0;
            for c in batch {
                queried.insert(c);
                out.messages += 1;
                let d = self.nodes[c].id.distance(&target);
                if !self.alive[c] {
                    round_ms = round_ms.max(self.config.rpc_timeout_ms);
                    known.remove(&d);
                    failed.insert(c);
                    self.forget(from, c);
                    self.log(from, "rpc_timeout", key.copied(), self.config.rpc_timeout_ms);
                    continue;
                }
                let rtt = self.latency.rtt(self.nodes[from].region, self.nodes[c].region);
                round_ms = round_ms.max(rtt);
                out.answered += 1;
                answered.insert(d, c);
                self.learn(c, from);
                self.learn(from, c);
                if let Some(key) = key {
                    if out.found.is_none() {
                        if let Some((v, cached)) = self.has_value(c, key) {
                            out.found = Some((c, v, cached));
                        }
                    }
                }
                for peer in self.nodes[c].table_for(scope).closest(&target, k) {
                    if !failed.contains(&peer.idx) {
                        known.entry(peer.id.distance(&target)).or_insert(peer.idx);
                    }
                }
            }
            out.latency_ms += round_ms;
            if out.found.is_some() {
                break;
            }
        }
        out.closest = answered.values().take(k).copied().collect();
        out
    }

    fn choose_id(&mut self) -> NodeId {
        let live: Vec<NodeId> = self.live_nodes().into_iter().map(|i| self.nodes[i].id).collect();
        let mut best = NodeId::random(&mut self.rng);
        if live.is_empty() {
            return best;
        }
        let gap = |c: &NodeId| live.iter().map(|l| l.distance(c)).min().expect("non-empty");
        let mut best_gap = gap(&best);
        for _ in 1..self.config.id_choices {
            let c = NodeId::random(&mut self.rng);
            let g = gap(&c);
            if g > best_gap {
                best = c;
                best_gap = g;
            }
        }
        best
    }

    /// Adds a node in `region`: bootstrap from a random live node, look up
    /// its own id, refresh the buckets beyond its nearest neighbour, then
    /// take over the keys it is now responsible for.
    pub fn join(&mut self, region: usize) -> usize {
        assert!(region < self.latency.region_count(), "unknown region {region}");
        let id = self.choose_id();
        let k = self.config.k_bucket;
        let idx = self.nodes.len();
        let live = self.live_nodes();
        self.nodes.push(SimNode {
            id,
            region,
            table: RoutingTable::new(id, k),
            local: RoutingTable::new(id, k),
            store: BTreeMap::new(),
            cache: BTreeMap::new(),
        });
        self.alive.push(true);
        self.log(idx, "join", None, 0.0);
        if live.is_empty() {
            return idx;
        }
        let boot = live[self.rng.gen_range(0..live.len())];
        self.learn(idx, boot);
        let found = self.lookup(idx, id, None, Scope::Global);
        self.refresh(idx, Scope::Global);

        let peer_in_region =
            self.nodes[idx].table.contacts().find(|c| self.nodes[c.idx].region == region).map(|c| c.idx);
        let peer_in_region = peer_in_region.or_else(|| {
            let same: Vec<usize> = live.iter().copied().filter(|i| self.nodes[*i].region == region).collect();
            (!same.is_empty()).then(|| same[self.rng.gen_range(0..same.len())])
        });
        if let Some(p) = peer_in_region {
            self.learn(idx, p);
            self.lookup(idx, id, None, Scope::Region(region));
            self.refresh(idx, Scope::Region(region));
        }
        self.take_over_keys(idx, &found.closest);
        idx
    }

    fn refresh(&mut self, idx: usize, scope: Scope) {
        let own = self.nodes[idx].id;
        let table = self.nodes[idx].table_for(scope);
        let Some(nearest) = table.closest(&own, 1).first().and_then(|c| own.bucket_index(&c.id)) else {
            return;
        };
        for prefix in 0..nearest {
            let target = own.random_in_bucket(prefix, &mut self.rng);
            self.lookup(idx, target, None, scope);
        }
    }

    /// Neighbours hand over keys for which the newcomer is now among the
    /// `replicas` closest nodes they know of.
    fn take_over_keys(&mut self, idx: usize, neighbours: &[usize]) {
        let r = self.config.replicas;
        let me = self.nodes[idx].id;
        let mut moved = Vec::new();
        for &n in neighbours {
            if n == idx || !self.alive[n] {
                continue;
            }
            let node = &self.nodes[n];
            for (key, v) in &node.store {
                let target = NodeId::from_key(key);
                let mut cands: Vec<Distance> =
                    node.table.closest(&target, r).iter().map(|c| c.id.distance(&target)).collect();
                cands.push(node.id.distance(&target));
                cands.sort_unstable();
                let mine = me.distance(&target);
                if cands.len() < r || mine < cands[r - 1] {
                    moved.push((*key, v.clone()));
                }
            }
        }
        for (k, v) in moved {
            self.nodes[idx].store.entry(k).or_insert(v);
        }
    }

    /// Graceful departure: the node's primary keys are re-replicated before
    /// it goes.
    pub fn leave(&mut self, idx: usize) {
        if !self.alive[idx] {
            return;
        }
        let keys: Vec<(Digest256, Value)> = self.nodes[idx].store.iter().map(|(k, v)| (*k, v.clone())).collect();
        self.alive[idx] = false;
        self.log(idx, "leave", None, 0.0);
        let Some(via) = self.nodes[idx].table.contacts().map(|c| c.idx).find(|i| self.alive[*i]) else {
            return;
        };
        for (k, v) in keys {
            self.replicate(via, &k, v);
        }
    }

    /// Crash: the node vanishes with its data.
    pub fn fail(&mut self, idx: usize) {
        if self.alive[idx] {
            self.alive[idx] = false;
            self.log(idx, "fail", None, 0.0);
        }
    }

    fn replicate(&mut self, via: usize, key: &Digest256, v: Value) -> (Vec<usize>, Lookup) {
        let found = self.lookup(via, NodeId::from_key(key), None, Scope::Global);
        let holders: Vec<usize> = found.closest.iter().copied().take(self.config.replicas).collect();
        for &h in &holders {
            self.nodes[h].store.entry(*key).or_insert_with(|| v.clone());
        }
        (holders, found)
    }

    /// One republish cycle: the first live holder of each key pushes it to
    /// the current closest set.
    pub fn republish(&mut self) {
        let mut done: BTreeSet<Digest256> = BTreeSet::new();
        for i in self.live_nodes() {
            let keys: Vec<(Digest256, Value)> =
                self.nodes[i].store.iter().filter(|(k, _)| !done.contains(*k)).map(|(k, v)| (*k, v.clone())).collect();
            for (k, v) in keys {
                done.insert(k);
                self.replicate(i, &k, v);
            }
        }
        self.log(0, "republish", None, 0.0);
    }

    fn check_live(&self, via: usize) -> Result<(), DhtError> {
        if via >= self.nodes.len() || !self.alive[via] {
            return Err(DhtError::DeadNode(via));
        }
        Ok(())
    }

    /// Routing's view of the replica set for `key`, looked up from `via`.
    pub fn lookup_nodes(&mut self, via: usize, key: &Digest256) -> Result<Vec<usize>, DhtError> {
        self.check_live(via)?;
        let l = self.lookup(via, NodeId::from_key(key), None, Scope::Global);
        Ok(l.closest.into_iter().take(self.config.replicas).collect())
    }

    pub fn put(&mut self, via: usize, key: &Digest256, value: Vec<u8>) -> Result<PutReport, DhtError> {
        self.check_live(via)?;
        let (holders, l) = self.replicate(via, key, Arc::new(value));
        if l.answered == 0 && self.live_count() > 1 && holders == [via] {
            return Err(DhtError::PartitionedOverlay(via));
        }
        let region = self.nodes[via].region;
        let store_ms = holders.iter().map(|h| self.latency.rtt(region, self.nodes[*h].region)).fold(0.0, f64::max);
        let latency_ms = l.latency_ms + store_ms;
        self.log(via, "put", Some(*key), latency_ms);
        self.now_ms += latency_ms;
        Ok(PutReport { holders, hops: l.rounds, latency_ms })
    }

    pub fn get(&mut self, via: usize, key: &Digest256) -> Result<GetReport, DhtError> {
        self.check_live(via)?;
        if let Some((v, _)) = self.has_value(via, key) {
            self.log(via, "get_local", Some(*key), 0.0);
            return Ok(GetReport {
                value: v.to_vec(),
                hops: 0,
                latency_ms: 0.0,
                messages: 0,
                source: Source::Local,
                cached_at: None,
            });
        }
        let target = NodeId::from_key(key);
        let region = self.nodes[via].region;
        let mut latency_ms = 0.0;
        let mut hops = 0;
        let mut messages = 0;
        let mut regional = None;
        if self.config.sloppy {
            let l = self.lookup(via, target, Some(key), Scope::Region(region));
            latency_ms += l.latency_ms;
            hops += l.rounds;
            messages += l.messages;
            regional = Some(l);
        }
        let hit = match regional.as_mut().and_then(|l| l.found.take()) {
            Some(found) => Some((found, None)),
            None => {
                let l = self.lookup(via, target, Some(key), Scope::Global);
                latency_ms += l.latency_ms;
                hops += l.rounds;
                messages += l.messages;
                if l.answered == 0 && self.live_count() > 1 {
                    return Err(DhtError::PartitionedOverlay(via));
                }
                l.found.map(|found| {
                    let cache_at = regional.as_ref().and_then(|r| r.closest.first().copied());
                    (found, cache_at)
                })
            }
        };
        let Some(((holder, v, cached), cache_at)) = hit else {
            self.log(via, "get_miss", Some(*key), latency_ms);
            self.now_ms += latency_ms;
            return Err(DhtError::NotFound);
        };
        let mut cached_at = None;
        if let Some(c) = cache_at {
            let expires = self.now_ms + latency_ms + self.config.cache_ttl_ms as f64;
            self.nodes[c].cache.insert(*key, (v.clone(), expires));
            cached_at = Some(c);
            self.log(c, "cache_place", Some(*key), 0.0);
        }
        let source = if cached { Source::Cache(holder) } else { Source::Primary(holder) };
        self.log(via, if cached { "get_cache" } else { "get" }, Some(*key), latency_ms);
        self.now_ms += latency_ms;
        Ok(GetReport { value: v.to_vec(), hops, latency_ms, messages, source, cached_at })
    }

    /// Latency of fetching straight from the nearest primary holder with no
    /// routing: the direct-store baseline.
    pub fn direct_latency(&self, via: usize, key: &Digest256) -> Option<f64> {
        let region = self.nodes[via].region;
        self.holders(key).iter().map(|h| self.latency.rtt(region, self.nodes[*h].region)).min_by(f64::total_cmp)
    }
}

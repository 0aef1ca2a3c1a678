use super::id::{Distance, NodeId, ID_BITS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Contact {
    pub id: NodeId,
    pub idx: usize,
}

/// k-buckets indexed by common-prefix length with the owner. Within a
/// bucket the least recently seen contact comes first.
#[derive(Clone, Debug)]
pub struct RoutingTable {
    own: NodeId,
    k: usize,
    buckets: Vec<Vec<Contact>>,
}

impl RoutingTable {
    pub fn new(own: NodeId, k: usize) -> Self {
        RoutingTable { own, k, buckets: vec![Vec::new(); ID_BITS] }
    }

    pub fn own(&self) -> NodeId {
        self.own
    }

    /// Records contact with `c`. A full bucket evicts its least recently
    /// seen entry only if `is_dead` says it is gone (the simulator stands in
    /// for the liveness ping).
    pub fn insert(&mut self, c: Contact, is_dead: impl Fn(usize) -> bool) -> bool {
        let Some(b) = self.own.bucket_index(&c.id) else {
            return false;
        };
        let bucket = &mut self.buckets[b];
        if let Some(pos) = bucket.iter().position(|x| x.idx == c.idx) {
            let seen = bucket.remove(pos);
            bucket.push(seen);
            return true;
        }
        if bucket.len() < self.k {
            bucket.push(c);
            return true;
        }
        if is_dead(bucket[0].idx) {
            bucket.remove(0);
            bucket.push(c);
            return true;
        }
        false
    }

    pub fn remove(&mut self, idx: usize, id: &NodeId) {
        if let Some(b) = self.own.bucket_index(id) {
            self.buckets[b].retain(|c| c.idx != idx);
        }
    }

    pub fn contains(&self, idx: usize, id: &NodeId) -> bool {
        self.own.bucket_index(id).is_some_and(|b| self.buckets[b].iter().any(|c| c.idx == idx))
    }

    pub fn bucket(&self, i: usize) -> &[Contact] {
        &self.buckets[i]
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.iter().all(Vec::is_empty)
    }

    pub fn contacts(&self) -> impl Iterator<Item = &Contact> {
        self.buckets.iter().flatten()
    }

    /// Up to `n` known contacts closest to `target`.
    pub fn closest(&self, target: &NodeId, n: usize) -> Vec<Contact> {
        let mut all: Vec<(Distance, Contact)> = self.contacts().map(|c| (c.id.distance(target), *c)).collect();
        if all.len() > n {
            all.select_nth_unstable_by(n, |a, b| a.0.cmp(&b.0));
            all.truncate(n);
        }
        all.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        all.into_iter().map(|(_, c)| c).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn buckets_hold_matching_prefixes() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let own = NodeId::random(&mut rng);
        let mut t = RoutingTable::new(own, 4);
        for idx in 0..500 {
            t.insert(Contact { id: NodeId::random(&mut rng), idx }, |_| false);
        }
        for i in 0..ID_BITS {
            assert!(t.bucket(i).len() <= 4);
            assert!(t.bucket(i).iter().all(|c| own.bucket_index(&c.id) == Some(i)));
        }
        // Roughly half of random ids fall in bucket 0.
        assert_eq!(t.bucket(0).len(), 4);
        assert!(!t.insert(Contact { id: own, idx: 999 }, |_| false));
    }

    #[test]
    fn full_bucket_keeps_live_and_replaces_dead() {
        let own = NodeId([0; 20]);
        let mut t = RoutingTable::new(own, 2);
        let id = |b: u8| {
            let mut x = [0u8; 20];
            x[0] = 0x80 | b;
            NodeId(x)
        };
        t.insert(Contact { id: id(1), idx: 1 }, |_| false);
        t.insert(Contact { id: id(2), idx: 2 }, |_| false);
        assert!(!t.insert(Contact { id: id(3), idx: 3 }, |_| false));
        assert!(t.insert(Contact { id: id(3), idx: 3 }, |i| i == 1));
        assert_eq!(t.bucket(0).iter().map(|c| c.idx).collect::<Vec<_>>(), [2, 3]);
        // Re-seeing 2 moves it to the tail.
        t.insert(Contact { id: id(2), idx: 2 }, |_| false);
        assert_eq!(t.bucket(0).iter().map(|c| c.idx).collect::<Vec<_>>(), [3, 2]);
    }

    #[test]
    fn closest_matches_sort() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let mut t = RoutingTable::new(NodeId::random(&mut rng), 20);
        let mut ids = Vec::new();
        for idx in 0..300 {
            let c = Contact { id: NodeId::random(&mut rng), idx };
            if t.insert(c, |_| false) {
                ids.push(c);
            }
        }
        let target = NodeId::random(&mut rng);
        ids.sort_by_key(|c| c.id.distance(&target));
        assert_eq!(t.closest(&target, 7), ids[..7].to_vec());
    }
}

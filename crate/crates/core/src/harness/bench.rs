//! Experiments behind the benchmark reports.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{HarnessError, Profile, World};
use crate::dht::{Overlay, SimConfig, Source};
use crate::storage::{Client, Enforcement, Loopback, NodeConfig, StorageNode, StorageService, SystemClock};
use crate::stream::{chunk_key, encode_records, Codec, DataRecord, SEALED_OVERHEAD};
use crate::{sha256_parts, Digest256};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub series: String,
    pub param: String,
    pub metric: String,
    pub value: f64,
}

impl Row {
    pub fn new(series: &str, param: impl ToString, metric: &str, value: f64) -> Self {
        Row { series: series.into(), param: param.to_string(), metric: metric.into(), value }
    }
}

/// Result of one experiment. `rows` are simulated or counted quantities and
/// reproduce exactly from the seed; `measurements` are wall-clock timings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub experiment: String,
    pub config_digest: Digest256,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub measurements: Vec<Row>,
}

impl BenchReport {
    pub fn new(experiment: &str, profile: &Profile, seed: u64) -> Self {
        BenchReport {
            experiment: experiment.into(),
            config_digest: profile.digest(),
            seed,
            rows: vec![],
            measurements: vec![],
        }
    }

    pub fn value(&self, series: &str, param: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .chain(&self.measurements)
            .find(|r| r.series == series && r.param == param && r.metric == metric)
            .map(|r| r.value)
    }

    pub const CSV_HEADER: &'static str = "experiment,config_digest,seed,kind,series,param,metric,value";

    fn tagged(&self) -> impl Iterator<Item = (&'static str, &Row)> {
        self.rows.iter().map(|r| ("sim", r)).chain(self.measurements.iter().map(|r| ("timed", r)))
    }

    pub fn to_csv(&self, header: bool) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        if header {
            w.write_record(Self::CSV_HEADER.split(',')).expect("in-memory write");
        }
        let digest = self.config_digest.to_string();
        for (kind, r) in self.tagged() {
            let seed = self.seed.to_string();
            let value = r.value.to_string();
            w.write_record([&self.experiment, &digest, &seed, kind, &r.series, &r.param, &r.metric, &value])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn to_text(&self) -> String {
        let mut s =
            format!("{} (seed {}, config {})\n", self.experiment, self.seed, &self.config_digest.to_string()[..12]);
        for (kind, r) in self.tagged() {
            let _ = writeln!(s, "  [{kind}] {:<18} {:>8} {:<20} {:.4}", r.series, r.param, r.metric, r.value);
        }
        s
    }
}

/// Compression of `records` cut into fixed-size chunks, plus the
/// whole-dataset oracle. The ratio is raw block bytes over compressed
/// bytes; `sealed_ratio` also charges the per-chunk header, tag and
/// signature.
pub fn bench_compression(
    profile: &Profile,
    seed: u64,
    records: &[DataRecord],
    chunk_sizes: &[usize],
    codec: Codec,
) -> BenchReport {
    let mut report = BenchReport::new("compression", profile, seed);
    let mut emit = |series: &str, param: usize, chunks: &mut dyn Iterator<Item = &[DataRecord]>| {
        let (mut raw, mut comp, mut n) = (0usize, 0usize, 0usize);
        for c in chunks {
            let block = encode_records(c);
            raw += block.len();
            comp += codec.compress(&block).len();
            n += 1;
        }
        report.rows.push(Row::new(series, param, "chunks", n as f64));
        report.rows.push(Row::new(series, param, "raw_bytes", raw as f64));
        report.rows.push(Row::new(series, param, "compressed_bytes", comp as f64));
        report.rows.push(Row::new(series, param, "ratio", raw as f64 / comp as f64));
        report.rows.push(Row::new(series, param, "sealed_ratio", raw as f64 / (comp + n * SEALED_OVERHEAD) as f64));
    };
    for &size in chunk_sizes {
        emit("chunked", size, &mut records.chunks(size));
    }
    emit("whole", records.len(), &mut std::iter::once(records));
    report
}

/// Per-chunk-size payload ratios from a compression report, in size order.
pub fn compression_curve(report: &BenchReport) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = report
        .rows
        .iter()
        .filter(|r| r.series == "chunked" && r.metric == "ratio")
        .map(|r| (r.param.parse().expect("numeric param"), r.value))
        .collect();
    v.sort_by_key(|p| p.0);
    v
}

pub fn oracle_ratio(report: &BenchReport) -> Option<f64> {
    report.rows.iter().find(|r| r.series == "whole" && r.metric == "ratio").map(|r| r.value)
}

/// Simulated GET latency on a DHT with and without locality caching,
/// against the direct-store baseline of fetching straight from the nearest
/// replica. Each key is read from two distinct non-holding nodes of one
/// region; the second read is the "repeat" the cache should speed up.
pub fn dht_latency_study(
    sim: &SimConfig,
    keys: usize,
    seed: u64,
    trace: bool,
) -> Result<(Vec<Row>, Option<String>), HarnessError> {
    let latency = sim.latency().map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut dht = sim.dht.clone();
    dht.sloppy = false;
    let mut o = Overlay::build(dht, latency, sim.nodes, seed);
    if trace {
        o.enable_trace();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xd47);
    let live = o.live_nodes();
    let regions = o.latency_model().region_count();
    let by_region: Vec<Vec<usize>> =
        (0..regions).map(|r| live.iter().copied().filter(|i| o.node(*i).region == r).collect()).collect();

    let mut plan = Vec::with_capacity(keys);
    for i in 0..keys as u64 {
        let key = sha256_parts(&[b"bench-key", &seed.to_be_bytes(), &i.to_be_bytes()]);
        let via = *live.choose(&mut rng).expect("overlay is not empty");
        o.put(via, &key, i.to_be_bytes().to_vec())?;
        let holders = o.holders(&key);
        let pool: Vec<usize> = loop {
            let r = rng.gen_range(0..regions);
            let p: Vec<usize> = by_region[r].iter().copied().filter(|n| !holders.contains(n)).collect();
            if p.len() >= 4 {
                break p;
            }
        };
        let picks: Vec<usize> = pool.choose_multiple(&mut rng, 4).copied().collect();
        plan.push((key, picks));
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (mut direct, mut first, mut repeat, mut hops) = (vec![], vec![], vec![], vec![]);
    for (key, p) in &plan {
        direct.push(o.direct_latency(p[0], key).expect("stored key has holders"));
        let a = o.get(p[0], key)?;
        let b = o.get(p[1], key)?;
        hops.push(f64::from(a.hops));
        first.push(a.latency_ms);
        repeat.push(b.latency_ms);
    }
    o.set_sloppy(true);
    let (mut s_first, mut s_repeat, mut s_hits) = (vec![], vec![], 0usize);
    for (key, p) in &plan {
        let a = o.get(p[2], key)?;
        let b = o.get(p[3], key)?;
        s_first.push(a.latency_ms);
        s_repeat.push(b.latency_ms);
        if matches!(b.source, Source::Cache(_)) {
            s_hits += 1;
        }
    }

    let n = sim.nodes;
    let rows = vec![
        Row::new("direct", n, "mean_latency_ms", mean(&direct)),
        Row::new("dht", n, "mean_latency_ms", mean(&first)),
        Row::new("dht", n, "mean_repeat_latency_ms", mean(&repeat)),
        Row::new("dht", n, "mean_hops", mean(&hops)),
        Row::new("dht_locality", n, "mean_latency_ms", mean(&s_first)),
        Row::new("dht_locality", n, "mean_repeat_latency_ms", mean(&s_repeat)),
        Row::new("dht_locality", n, "repeat_cache_hits", s_hits as f64),
        Row::new("dht", n, "slowdown_vs_direct", mean(&first) / mean(&direct)),
    ];
    Ok((rows, trace.then(|| o.trace_csv())))
}

/// GET throughput of a storage node that consults its ledger snapshot
/// against one that skips the check, on the same data and requests, then
/// the simulated DHT latency study.
pub fn bench_access_overhead(profile: &Profile, seed: u64) -> Result<BenchReport, HarnessError> {
    let mut report = BenchReport::new("access_overhead", profile, seed);
    let b = &profile.bench;
    let node = |enforcement, s| {
        let cfg = NodeConfig { enforcement, ..NodeConfig::default() };
        Arc::new(StorageNode::new(Box::new(crate::storage::MemoryBackend::new()), cfg, Arc::new(SystemClock), s))
    };
    let checked = node(Enforcement::Enforce, seed);
    let unchecked = node(Enforcement::SkipAclCheck, seed + 1);

    // Populate the checked node through a full deployment, then mirror it.
    let mut small = profile.clone();
    small.delta_ms = 60_000;
    small.gateway.cache_capacity = 1;
    let mut world = World::with_node(&small, checked.clone(), seed);
    let reg = world.registration("bench", 0);
    let sid = world.gateway.register(reg)?;
    let service = world.new_identity();
    world.settle()?;
    let reader = world.reader(service.clone());
    world.gateway.share(&sid, &reader.share_request())?;
    let records = super::SyntheticSeries::default().generate(60 * b.chunks as u64, seed);
    world.gateway.ingest_all(&sid, records)?;
    world.gateway.flush(&sid)?;
    world.settle()?;
    if world.gateway.pending_uploads(&sid)? != 0 {
        return Err(HarnessError::Config("uploads did not drain".into()));
    }
    for (k, v) in checked.backend().scan_prefix(&[])? {
        unchecked.backend().put(&k, &v)?;
    }
    unchecked.set_acl(world.ledger.snapshot());

    let meta = world.gateway.meta(&sid)?;
    let keys: Vec<Digest256> = (0..b.chunks as u64).map(|i| chunk_key(&meta, i).0).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x0ace);
    let order: Vec<Digest256> = (0..b.gets).map(|_| *keys.choose(&mut rng).expect("chunks > 0")).collect();

    let client = |n: &Arc<StorageNode>| {
        Client::new(Arc::new(Loopback::new(n.clone())) as Arc<dyn StorageService>, service.clone())
    };
    let (c_checked, c_unchecked) = (client(&checked), client(&unchecked));
    let rounds = 10.min(order.len().max(1));
    let per = order.len().div_ceil(rounds);
    let (mut t_checked, mut t_unchecked) = (0f64, 0f64);
    let run = |c: &Client<dyn StorageService>, part: &[Digest256]| -> Result<f64, HarnessError> {
        let start = Instant::now();
        for k in part {
            c.get(*k, sid)?;
        }
        Ok(start.elapsed().as_secs_f64())
    };
    for (i, part) in order.chunks(per).enumerate() {
        // Alternate which mode goes first to cancel warm-up effects.
        if i % 2 == 0 {
            t_checked += run(&c_checked, part)?;
            t_unchecked += run(&c_unchecked, part)?;
        } else {
            t_unchecked += run(&c_unchecked, part)?;
            t_checked += run(&c_checked, part)?;
        }
    }
    let gets = order.len() as f64;
    report.rows.push(Row::new("storage", b.chunks, "gets", gets));
    report.rows.push(Row::new(
        "storage",
        b.chunks,
        "granted_decisions",
        checked.decisions().iter().filter(|d| d.allowed).count() as f64,
    ));
    report.measurements.push(Row::new("ledger_check", b.chunks, "gets_per_s", gets / t_checked));
    report.measurements.push(Row::new("no_check", b.chunks, "gets_per_s", gets / t_unchecked));
    report.measurements.push(Row::new("ledger_check", b.chunks, "throughput_ratio", t_unchecked / t_checked));

    let (rows, _) = dht_latency_study(&profile.sim, b.dht_keys, seed, false)?;
    report.rows.extend(rows);
    Ok(report)
}

/// Compression study on the profile's synthetic dataset.
pub fn bench_compression_profile(profile: &Profile, seed: u64) -> BenchReport {
    let records = super::synthetic_days(0, profile.bench.dataset_days, seed);
    bench_compression(profile, seed, &records, &profile.bench.chunk_sizes, profile.codec)
}

/// DHT locality experiment alone, optionally with the event trace.
pub fn bench_locality(
    profile: &Profile,
    seed: u64,
    trace: bool,
) -> Result<(BenchReport, Option<String>), HarnessError> {
    let mut report = BenchReport::new("locality", profile, seed);
    let (rows, t) = dht_latency_study(&profile.sim, profile.bench.dht_keys, seed, trace)?;
    report.rows = rows;
    Ok((report, t))
}

mod error;
mod store;

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use streamvault::gateway::{read_from_storage, read_records, write_records, Reader, RecordFormat, ShareRequest};
use streamvault::harness::{bench_access_overhead, bench_compression_profile, bench_locality, BenchReport, Profile};
use streamvault::ledger::AuditEvent;
use streamvault::storage::serve;
use streamvault::stream::StreamRegistration;

use error::CliError;
use store::{DataDir, Session};

/// Environment variable naming the data directory.
const DATA_ENV: &str = "STREAMVAULT_DATA";

#[derive(Parser)]
#[command(name = "streamvault", version, about = "Encrypted time-series streams shared through a ledger")]
struct Cli {
    /// Data directory [env: STREAMVAULT_DATA, default ./streamvault-data]
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Built-in profile: default, bitcoin-like or latency-matrix.
    #[arg(long, global = true, default_value = "default")]
    profile: String,
    /// Profile file (TOML); overrides --profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report format for `sim`.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum Records {
    Csv,
    Ndjson,
}

impl From<Records> for RecordFormat {
    fn from(r: Records) -> Self {
        match r {
            Records::Csv => RecordFormat::Csv,
            Records::Ndjson => RecordFormat::Ndjson,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    Compression,
    Overhead,
    Locality,
    All,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a named identity and its share request.
    Keygen {
        #[arg(long)]
        name: String,
    },
    /// Register a new stream owned by an identity.
    StreamRegister {
        #[arg(long = "as")]
        owner: String,
        #[arg(long)]
        name: String,
        /// Stream start, ms.
        #[arg(long, default_value_t = 0)]
        t0: u64,
    },
    /// Seal, upload and anchor records. Open windows are flushed at the end.
    Ingest {
        #[arg(long = "as")]
        owner: String,
        #[arg(long)]
        stream: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        records: Option<Records>,
    },
    /// Grant an identity read access.
    Share {
        #[arg(long = "as")]
        owner: String,
        #[arg(long)]
        stream: String,
        #[arg(long)]
        grantee: String,
    },
    /// Revoke an identity and rotate the stream key.
    Revoke {
        #[arg(long = "as")]
        owner: String,
        #[arg(long)]
        stream: String,
        #[arg(long)]
        grantee: String,
    },
    /// Read the records in [from, to) ms.
    Get {
        #[arg(long = "as")]
        requester: String,
        #[arg(long)]
        stream: String,
        #[arg(long)]
        from: Option<u64>,
        /// Required unless reading as the owner.
        #[arg(long)]
        to: Option<u64>,
        #[arg(long, value_enum, default_value_t = Records::Csv)]
        records: Records,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the ledger audit trail as JSON lines.
    Audit {
        #[arg(long)]
        stream: Option<String>,
    },
    /// Serve the data directory's storage node over TCP.
    NodeRun {
        #[arg(long, default_value = "127.0.0.1:7070")]
        listen: String,
        /// Exit after this many connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
    /// Run a benchmark experiment.
    Sim {
        #[arg(value_enum, default_value_t = Experiment::All)]
        experiment: Experiment,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the DHT event trace (CSV) of the locality run here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_profile(cli: &Cli) -> Result<Profile, CliError> {
    let profile = match &cli.config {
        Some(path) => Profile::from_toml(&std::fs::read_to_string(path)?)?,
        None => Profile::builtin(&cli.profile).ok_or_else(|| {
            CliError::Usage(format!("unknown profile {:?}; built-in: {}", cli.profile, Profile::BUILTIN.join(", ")))
        })?,
    };
    profile.validate()?;
    Ok(profile)
}

fn data_dir(cli: &Cli) -> PathBuf {
    cli.data_dir
        .clone()
        .or_else(|| std::env::var_os(DATA_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("streamvault-data"))
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let profile = load_profile(&cli)?;
    if let Cmd::Sim { experiment, out, trace } = &cli.cmd {
        let seed = cli.seed.unwrap_or(profile.seed);
        return sim(&profile, seed, *experiment, cli.format, out.as_ref(), trace.as_ref());
    }
    let seed = cli.seed.unwrap_or_else(rand::random);
    let dir = DataDir::new(data_dir(&cli))?;

    if let Cmd::Keygen { name } = &cli.cmd {
        let id = streamvault::crypto::Identity::generate(&mut rand::rngs::OsRng);
        let req = ShareRequest::new(&id);
        dir.save_identity(name, &id, &req)?;
        println!("{name} {}", id.id());
        return Ok(());
    }

    let mut s = Session::open(dir, profile, seed)?;
    match cli.cmd {
        Cmd::Keygen { .. } | Cmd::Sim { .. } => unreachable!("handled above"),
        Cmd::StreamRegister { owner, name, t0 } => {
            let id = s.dir.identity(&owner)?;
            let mut g = s.gateway(&id)?;
            let reg = StreamRegistration::new(id.public_bytes(), name, t0, s.profile.delta_ms)
                .with_checkpoint_interval(s.profile.checkpoint_interval);
            let reg = StreamRegistration { codec: s.profile.codec, ..reg };
            let sid = g.register(reg)?;
            s.commit(Some(&mut g))?;
            println!("{sid}");
        }
        Cmd::Ingest { owner, stream, input, records } => {
            let id = s.dir.identity(&owner)?;
            let sid = s.resolve_owned(&stream, &id)?;
            let mut g = s.gateway(&id)?;
            let format = records.map(RecordFormat::from).unwrap_or(match input.extension().and_then(|e| e.to_str()) {
                Some("ndjson" | "jsonl" | "json") => RecordFormat::Ndjson,
                _ => RecordFormat::Csv,
            });
            let recs = read_records(BufReader::new(File::open(&input)?), format)?;
            let n = recs.len();
            let mut sealed = g.ingest_all(&sid, recs)?.sealed;
            sealed.extend(g.flush(&sid)?.sealed);
            s.commit(Some(&mut g))?;
            println!("ingested {n} records into {} chunks", sealed.len());
        }
        Cmd::Share { owner, stream, grantee } => {
            let id = s.dir.identity(&owner)?;
            let sid = s.resolve_owned(&stream, &id)?;
            let req = s.dir.share_request(&grantee)?;
            let mut g = s.gateway(&id)?;
            let tx = g.share(&sid, &req)?;
            s.commit(Some(&mut g))?;
            println!("{}", tx.digest());
        }
        Cmd::Revoke { owner, stream, grantee } => {
            let id = s.dir.identity(&owner)?;
            let sid = s.resolve_owned(&stream, &id)?;
            let who = s
                .dir
                .identity(&grantee)
                .map(|i| i.id())
                .or_else(|_| s.dir.share_request(&grantee).map(|r| r.principal))?;
            let mut g = s.gateway(&id)?;
            let tx = g.revoke(&sid, &who)?;
            s.commit(Some(&mut g))?;
            println!("{}", tx.digest());
        }
        Cmd::Get { requester, stream, from, to, records, output: out } => {
            let id = s.dir.identity(&requester)?;
            let sid = s.resolve(&stream)?;
            let entry =
                s.acl().stream(&sid).ok_or_else(|| CliError::Usage(format!("stream {sid} is not registered")))?;
            let meta = entry.registration.meta();
            let owner_pk = streamvault::crypto::PublicIdentity::from_bytes(&entry.registration.owner_pk)
                .map_err(|e| CliError::Other(e.to_string()))?;
            let from = from.unwrap_or(meta.t0);
            let recs = if id.id() == entry.owner_id {
                let g = s.gateway(&id)?;
                let to = match to {
                    Some(t) => t,
                    None => g.emitted(&sid)?.last().map_or(from, |i| meta.window(*i).1),
                };
                g.query(&sid, from, to, &mut g.owner_reader(&sid)?)?.records
            } else {
                let to = to.ok_or_else(|| CliError::Usage("--to is required when reading a shared stream".into()))?;
                let mut reader = Reader::new(id, s.storage.clone());
                read_from_storage(&meta, &owner_pk, from, to, &mut reader)?
            };
            write_records(output(out.as_ref())?, &recs, records.into())?;
        }
        Cmd::Audit { stream } => {
            let events: Vec<AuditEvent> = match stream {
                Some(st) => s.acl().audit_log(&s.resolve(&st)?)?,
                None => s.acl().audit_all().to_vec(),
            };
            let mut out = io::stdout().lock();
            for e in events {
                writeln!(out, "{}", e.to_json_line())?;
            }
        }
        Cmd::NodeRun { listen, max_connections } => node_run(&mut s, &listen, max_connections)?,
    }
    Ok(())
}

/// Serves each connection on its own thread. The permission snapshot is
/// refreshed from the persisted chain whenever a client connects.
fn node_run(s: &mut Session, listen: &str, max: Option<usize>) -> Result<(), CliError> {
    let listener = TcpListener::bind(listen)?;
    eprintln!("listening on {}", listener.local_addr()?);
    let mut handles = Vec::new();
    for (n, conn) in listener.incoming().enumerate() {
        let mut conn = conn?;
        let chain = s.dir.load_chain(&s.profile)?;
        let mut ledger = streamvault::ledger::Ledger::new(chain, s.profile.chain.confirmations);
        ledger.sync()?;
        s.node.set_acl(ledger.snapshot());
        let node = s.node.clone();
        handles.push(std::thread::spawn(move || {
            if let Err(e) = serve(node.as_ref(), &mut conn) {
                eprintln!("connection closed: {e}");
            }
        }));
        if max.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

fn sim(
    profile: &Profile,
    seed: u64,
    which: Experiment,
    format: Format,
    out: Option<&PathBuf>,
    trace: Option<&PathBuf>,
) -> Result<(), CliError> {
    let mut reports: Vec<BenchReport> = Vec::new();
    if matches!(which, Experiment::Compression | Experiment::All) {
        reports.push(bench_compression_profile(profile, seed));
    }
    if matches!(which, Experiment::Overhead | Experiment::All) {
        reports.push(bench_access_overhead(profile, seed)?);
    }
    if matches!(which, Experiment::Locality | Experiment::All) || trace.is_some() {
        let (report, events) = bench_locality(profile, seed, trace.is_some())?;
        if let (Some(path), Some(events)) = (trace, events) {
            std::fs::write(path, events)?;
        }
        if matches!(which, Experiment::Locality | Experiment::All) {
            reports.push(report);
        }
    }
    let mut w = output(out)?;
    for (i, r) in reports.iter().enumerate() {
        let text = match format {
            Format::Csv => r.to_csv(i == 0),
            Format::Text => r.to_text(),
        };
        w.write_all(text.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

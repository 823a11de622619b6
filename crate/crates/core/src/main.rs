use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use biokm::loadgen::{self, Mode, ScenarioSpec};
use biokm::phylo::{self, DistanceMatrix};
use biokm::queueing;
use biokm::report::{self, PrecisionMode};
use biokm::route_filter::FilterMatrix;
use biokm::server::{self, DataPorts, ServerConfig};
use biokm::telemetry::Capture;

#[derive(Parser)]
#[command(name = "biokm", version, about = "Messenger workload, telemetry and throughput models")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the relay server until interrupted.
    Serve(ServeArgs),
    /// Drive a scripted workload against a server and write a capture log.
    Load(LoadArgs),
    /// Per-run measurement table from capture logs.
    Analyze(AnalyzeArgs),
    /// Neighbor-Joining tree as Newick.
    Tree(TreeArgs),
    /// Link/path filter matrix queries.
    Filter(FilterArgs),
    /// M/M/1 steady-state figures.
    Queue(QueueArgs),
    /// Compare both utilization models over one or more captures.
    Report(ReportArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 6667)]
    port: u16,
    /// Data channel ports as A-B, or 0 for OS-assigned.
    #[arg(long, default_value = "0")]
    data_ports: DataPorts,
    /// JSON Lines event log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct LoadArgs {
    #[arg(long)]
    server: String,
    /// Scenario file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    clients: Option<usize>,
    /// Messages per client.
    #[arg(long)]
    messages: Option<usize>,
    /// Files per client.
    #[arg(long)]
    files: Option<usize>,
    /// Body size in bytes for both messages and files.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    message_size: Option<usize>,
    #[arg(long)]
    file_size: Option<usize>,
    /// Base gap between events in milliseconds.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// PING probes per client, used by `tree --from-capture`.
    #[arg(long, default_value_t = 5)]
    rtt_probes: usize,
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(required = true)]
    captures: Vec<PathBuf>,
    #[arg(long, default_value = "exact")]
    mode: PrecisionMode,
    /// CSV output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TreeArgs {
    /// Distance matrix CSV.
    #[arg(long, conflicts_with = "from_capture", required_unless_present = "from_capture")]
    matrix: Option<PathBuf>,
    /// Build a star distance matrix from the capture's round-trip probes.
    #[arg(long)]
    from_capture: Option<PathBuf>,
    /// Also write the distance matrix used.
    #[arg(long)]
    matrix_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Failed link; repeatable.
    #[arg(long)]
    fail: Vec<String>,
    #[arg(long)]
    print_range_domain: bool,
    /// Print the transpose as well.
    #[arg(long)]
    transpose: bool,
}

#[derive(Args)]
struct QueueArgs {
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    table: bool,
    #[arg(long, default_value_t = queueing::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = queueing::DEFAULT_JMAX)]
    jmax: usize,
    #[arg(long)]
    simulate: bool,
    /// Simulated seconds.
    #[arg(long, default_value_t = 3600.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Steady-state table CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    captures: Vec<PathBuf>,
    #[arg(long, default_value = "exact")]
    mode: PrecisionMode,
    /// Markdown output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if closed_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// A reader such as `head` went away; not worth reporting.
fn closed_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = c.downcast_ref::<std::io::Error>().or_else(|| match c.downcast_ref::<csv::Error>()?.kind() {
            csv::ErrorKind::Io(io) => Some(io),
            _ => None,
        });
        io.is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Serve(a) => serve(a),
        Cmd::Load(a) => load(a),
        Cmd::Analyze(a) => analyze(a),
        Cmd::Tree(a) => tree(a),
        Cmd::Filter(a) => filter(a),
        Cmd::Queue(a) => queue(a),
        Cmd::Report(a) => report_cmd(a),
    }
}

/// Opens `path` for writing, or standard output when absent.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn resolve(addr: &str) -> Result<SocketAddr> {
    addr.to_socket_addrs()
        .with_context(|| format!("resolving {addr}"))?
        .next()
        .with_context(|| format!("no address for {addr}"))
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = ServerConfig {
        control_addr: resolve(&format!("{}:{}", a.host, a.port))?,
        data_ports: a.data_ports,
        log_path: a.log,
    };
    let handle = server::start_server(&config)?;
    println!("listening on {}", handle.local_addr());
    handle.wait();
    Ok(())
}

fn load(a: LoadArgs) -> Result<()> {
    let mut spec = match &a.config {
        Some(p) => ScenarioSpec::from_config_file(p)?,
        None => ScenarioSpec::default(),
    };
    if let Some(m) = a.mode {
        spec.mode = m;
        // Counts not given anywhere fall back to the mode's shape.
        if a.config.is_none() {
            match m {
                Mode::Ircd => spec.files_per_client = 0,
                Mode::Ftp => {
                    spec.messages_per_client = 0;
                    spec.files_per_client = 1;
                }
                Mode::Mixed => spec.files_per_client = 1,
            }
        }
    }
    macro_rules! set {
        ($field:ident, $v:expr) => {
            if let Some(v) = $v {
                spec.$field = v;
            }
        };
    }
    set!(clients, a.clients);
    set!(messages_per_client, a.messages);
    set!(files_per_client, a.files);
    set!(message_size, a.size);
    set!(file_size, a.size);
    set!(message_size, a.message_size);
    set!(file_size, a.file_size);
    set!(inter_event_gap_ms, a.gap);
    set!(seed, a.seed);
    set!(chunk_size, a.chunk_size);
    spec.rtt_probes = a.rtt_probes;
    if a.label.is_some() {
        spec.label = a.label;
    }

    let addr = resolve(&a.server)?;
    let outcome = loadgen::run_scenario(&spec, addr, Some(&a.out))?;
    let run = &outcome.capture.run;
    println!(
        "{}: {} clients, {} packets sent, {} received, {} bytes transferred; capture written to {}",
        run.label,
        run.clients,
        run.packets_sent,
        run.packets_received,
        outcome.transferred_bytes,
        a.out.display()
    );
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let r = report::full_pipeline(&a.captures, a.mode)?;
    let mut out = output(a.out.as_deref())?;
    r.write_measurement_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

fn tree(a: TreeArgs) -> Result<()> {
    let dist = match (&a.matrix, &a.from_capture) {
        (Some(p), _) => DistanceMatrix::read_csv(open(p)?)?,
        (None, Some(p)) => {
            let capture = Capture::read_jsonl(p)?;
            let rtt: BTreeMap<String, f64> = capture
                .sessions
                .iter()
                .filter_map(|s| s.rtt_ms.map(|r| (s.nick.clone(), r)))
                .collect();
            if rtt.is_empty() {
                bail!("{} has no round-trip probes; rerun `load` with --rtt-probes", p.display());
            }
            phylo::star_distances(&rtt)?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(p) = &a.matrix_out {
        dist.write_csv(File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
    }
    let tree = phylo::nj_build(&dist)?;
    let mut out = output(a.out.as_deref())?;
    writeln!(out, "{}", tree.to_newick())?;
    out.flush()?;
    Ok(())
}

fn join<I: IntoIterator<Item = S>, S: AsRef<str>>(items: I) -> String {
    items.into_iter().map(|s| s.as_ref().to_string()).collect::<Vec<_>>().join(", ")
}

fn filter(a: FilterArgs) -> Result<()> {
    let m = FilterMatrix::read_csv(open(&a.matrix)?)?;
    let alive = if a.fail.is_empty() { None } else { Some(m.surviving_paths(&a.fail)?) };
    let mut out = std::io::stdout().lock();
    write!(out, "{m}")?;
    if a.transpose {
        writeln!(out)?;
        write!(out, "{}", m.transpose())?;
    }
    if a.print_range_domain {
        writeln!(out, "range: {{{}}}", join(m.relation_range()))?;
        writeln!(out, "domain: {{{}}}", join(m.relation_domain()))?;
    }
    if let Some(alive) = alive {
        writeln!(out, "failed: {{{}}}", join(&a.fail))?;
        writeln!(out, "surviving paths: {{{}}}", join(alive))?;
    }
    Ok(())
}

fn queue(a: QueueArgs) -> Result<()> {
    let s = queueing::mm1_stats(a.lambda, a.mu)?;
    let mut out = std::io::stdout().lock();
    for (name, v) in [
        ("lambda", s.lambda),
        ("mu", s.mu),
        ("rho", s.rho),
        ("L", s.l),
        ("Lq", s.lq),
        ("Ls", s.ls),
        ("W", s.w),
        ("Wq", s.wq),
        ("Ws", s.ws),
        ("idle", s.idle),
    ] {
        writeln!(out, "{name:<7}{v:.9}")?;
    }
    if a.table || a.out.is_some() {
        let rows = queueing::steady_state_table(a.lambda, a.mu, a.epsilon, a.jmax)?;
        let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
        w.write_record(["Messages", "Steady-State Probability", "Expected Idle Time", "Packets in Queue"])?;
        for r in &rows {
            w.write_record([
                r.j.to_string(),
                format!("{:.9}", r.pi),
                format!("{:.9}", s.idle),
                r.in_queue.to_string(),
            ])?;
        }
        w.flush()?;
    }
    if a.simulate {
        let r = queueing::simulate_mm1(a.lambda, a.mu, a.horizon, a.seed)?;
        writeln!(out, 
            "simulated {} s: L {:.6}, W {:.6}, rho {:.6}, lambda_hat {:.6}, {} arrivals",
            a.horizon, r.l, r.w, r.rho, r.lambda_hat, r.arrivals
        )?;
    }
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let r = report::full_pipeline(&a.captures, a.mode)?;
    if let Some(p) = &a.csv {
        r.write_csv(File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
    }
    let mut out = output(a.out.as_deref())?;
    out.write_all(r.to_markdown().as_bytes())?;
    out.flush()?;
    Ok(())
}

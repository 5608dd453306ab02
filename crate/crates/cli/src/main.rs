//! `binc` command line: run, validate, sweep and dump-packet.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use binc::engine::{
    events_csv, run, Controller, MemorySink, ProbeSpec, RouterKind, RunError, RunOptions, RunReport, Scenario,
};
use binc::metrics::metrics_csv;
use binc::model::{parse_config, validate_config, NodeId, SimParams, ValidatedParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "binc", version, about = "Deterministic clustered UAV swarm simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write metrics, events, summary and snapshots.
    Run(RunArgs),
    /// Check a configuration file and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a size × seed grid, one output directory per cell.
    Sweep(SweepArgs),
    /// Decode a hex-encoded packet and print it field by field.
    DumpPacket {
        #[arg(long)]
        hex: String,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ScenarioArg {
    Straight,
    Obstacle,
    Static,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ControllerArg {
    Binc,
    Boids,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum RouterArg {
    Binc,
    Flat,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Parameter file (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "straight")]
    scenario: ScenarioArg,
    /// Simulated seconds.
    #[arg(long, default_value_t = 600.0)]
    duration: f64,
    #[arg(long, value_enum, default_value = "binc")]
    controller: ControllerArg,
    #[arg(long, value_enum, default_value = "binc")]
    router: RouterArg,
    /// Obstacle radius for a proportionally scaled obstacle course, m.
    #[arg(long)]
    obstacle_radius: Option<f64>,
    /// Evasion radius as a multiple of the obstacle radius.
    #[arg(long)]
    avoidance_factor: Option<f64>,
    /// Initial speed with random headings, m/s.
    #[arg(long, default_value_t = 0.0)]
    initial_speed: f64,
    /// Snapshot interval, seconds.
    #[arg(long)]
    snapshot_every: Option<f64>,
    /// Metric sample interval, seconds (default: every tick).
    #[arg(long)]
    sample_every: Option<f64>,
    /// Use the group and obstacle log laws with their printed signs.
    #[arg(long)]
    eq14_verbatim: bool,
    /// Compare the raw velocity-change indicator with the threshold.
    #[arg(long)]
    eq18_verbatim: bool,
    /// Extra bytes charged per transmission.
    #[arg(long, default_value_t = 0)]
    header_bytes: u32,
    /// Unicast probe: SRC DST PERIOD_S. Repeatable.
    #[arg(long, num_args = 3, value_names = ["SRC", "DST", "PERIOD"], action = clap::ArgAction::Append)]
    probe: Vec<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated swarm sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Seeds per size, numbered from `--seed-base`.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    seed_base: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Runtime(_) => EXIT_RUNTIME,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Runtime(m) | Failure::Io(m) => m,
        }
    }
}

fn load_params(path: Option<&Path>) -> Result<SimParams, Failure> {
    match path {
        None => Ok(SimParams::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn validated(mut raw: SimParams, n: Option<usize>, seed: Option<u64>) -> Result<ValidatedParams, Failure> {
    if let Some(n) = n {
        raw.n_uavs = n;
    }
    if let Some(s) = seed {
        raw.seed = s;
    }
    validate_config(raw).map_err(|e| Failure::Config(e.to_string()))
}

fn parse_probes(raw: &[String]) -> Result<Vec<ProbeSpec>, Failure> {
    raw.chunks(3)
        .map(|c| {
            let bad = || Failure::Config(format!("bad --probe {:?}: expected SRC DST PERIOD", c.join(" ")));
            let src: u16 = c.first().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let dst: u16 = c.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let period_s: f64 = c.get(2).and_then(|s| s.parse().ok()).filter(|p: &f64| *p > 0.0).ok_or_else(bad)?;
            Ok(ProbeSpec { src: NodeId(src), dst: NodeId(dst), period_s })
        })
        .collect()
}

fn scenario(c: &Common, p: &ValidatedParams) -> Scenario {
    let n = p.n_uavs;
    let mut s = match (c.scenario, c.obstacle_radius) {
        (ScenarioArg::Straight, _) => Scenario::straight_sailing(n, p.d_tr),
        (ScenarioArg::Static, _) => Scenario::static_placement(n, p.d_tr),
        (ScenarioArg::Obstacle, Some(r)) => Scenario::scaled_obstacle(n, p.d_tr, r),
        (ScenarioArg::Obstacle, None) => match p.obstacle {
            Some(o) => Scenario { obstacle: Some(o), ..Scenario::obstacle_avoidance(n, p.d_tr) },
            None => Scenario::obstacle_avoidance(n, p.d_tr),
        },
    };
    if c.scenario != ScenarioArg::Obstacle {
        s.obstacle = p.obstacle;
    }
    s.destination = if c.scenario == ScenarioArg::Obstacle { s.destination } else { p.destination };
    s.controller = match c.controller {
        ControllerArg::Binc => Controller::Binc,
        ControllerArg::Boids => Controller::Boids,
    };
    s.router = match c.router {
        RouterArg::Binc => RouterKind::Binc,
        RouterArg::Flat => RouterKind::Flat,
    };
    s.initial_speed = c.initial_speed;
    if let Some(f) = c.avoidance_factor {
        s.avoidance_factor = f;
    }
    s.verbatim_logs = c.eq14_verbatim;
    s.raw_indicator = c.eq18_verbatim;
    s
}

/// Worker count from `BINC_THREADS`; unset means all cores, 0 means serial.
fn threads() -> Result<usize, Failure> {
    match std::env::var("BINC_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| Failure::Config(format!("BINC_THREADS={v:?} is not a count"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", dir.join(name).display()));
    let tmp = dir.join(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(contents).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, dir.join(name)).map_err(io)
}

fn write_outputs(dir: &Path, sink: &MemorySink, report: &RunReport) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    write_atomic(dir, "metrics.csv", metrics_csv(&sink.frames).as_bytes())?;
    write_atomic(dir, "events.csv", events_csv(&report.cluster_events, &report.pattern_events).as_bytes())?;
    let summary = serde_json::to_string_pretty(&report.summary).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_atomic(dir, "summary.json", format!("{summary}\n").as_bytes())?;
    let mut snaps = String::new();
    for s in &sink.snapshots {
        snaps.push_str(&serde_json::to_string(s).map_err(|e| Failure::Runtime(e.to_string()))?);
        snaps.push('\n');
    }
    write_atomic(dir, "snapshots.jsonl", snaps.as_bytes())
}

fn run_cell(c: &Common, params: ValidatedParams, threads: usize, out: &Path) -> Result<RunReport, Failure> {
    let s = scenario(c, &params);
    let opts = RunOptions {
        threads,
        sample_every: c.sample_every,
        snapshot_every: c.snapshot_every,
        header_bytes: c.header_bytes,
        probes: parse_probes(&c.probe)?,
    };
    let seed = params.seed;
    let mut sink = MemorySink::default();
    let report = run(params, s, c.duration, seed, &opts, &mut sink).map_err(|e| match e {
        RunError::Duration { .. } => Failure::Config(e.to_string()),
        RunError::Sink(_) => Failure::Io(e.to_string()),
        RunError::Engine(_) => Failure::Runtime(e.to_string()),
    })?;
    write_outputs(out, &sink, &report)?;
    Ok(report)
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let params = validated(load_params(a.common.config.as_deref())?, a.n, a.seed)?;
    let report = run_cell(&a.common, params, threads()?, &a.out)?;
    let s = &report.summary;
    println!(
        "{} N={} seed={} ticks={} heads={} switches={} wall={:.2}s -> {}",
        s.scenario,
        s.n_uavs,
        s.seed,
        s.ticks,
        s.heads,
        s.cluster_switches,
        report.wall_time_s,
        a.out.display()
    );
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let raw = load_params(Some(path))?;
    validate_config(raw).map_err(|e| Failure::Config(e.to_string()))?;
    println!("{}: ok", path.display());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let raw = load_params(a.common.config.as_deref())?;
    let mut cells = Vec::new();
    for &n in &a.n {
        for k in 0..a.seeds {
            let seed = a.seed_base + k;
            cells.push((n, seed, validated(raw.clone(), Some(n), Some(seed))?));
        }
    }
    let workers = threads()?;
    let work = |(n, seed, params): &(usize, u64, ValidatedParams)| -> Result<(), Failure> {
        let dir = a.out.join(format!("n{n}_seed{seed}"));
        let r = run_cell(&a.common, params.clone(), 0, &dir)?;
        println!("{} N={n} seed={seed} switches={}", dir.display(), r.summary.cluster_switches);
        Ok(())
    };
    if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        pool.install(|| cells.par_iter().map(work).collect::<Result<Vec<()>, Failure>>())?;
    } else {
        cells.iter().map(work).collect::<Result<Vec<()>, Failure>>()?;
    }
    Ok(())
}

fn cmd_dump(hex_text: &str) -> Result<(), Failure> {
    let cleaned: String = hex_text.chars().filter(|c| !c.is_whitespace()).collect();
    let bytes = hex::decode(&cleaned).map_err(|e| Failure::Config(format!("bad hex: {e}")))?;
    let text = binc::wire::annotate(&bytes).map_err(|e| Failure::Runtime(format!("undecodable packet: {e}")))?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let informational =
                matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CONFIG) };
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Validate { config } => cmd_validate(&config),
        Command::Sweep(a) => cmd_sweep(a),
        Command::DumpPacket { hex } => cmd_dump(&hex),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

//! `kirinlab`: file-based pipelines for analyzing distributed IPv6 prefix
//! de-aggregation attacks. Subcommands mirror the analysis stages: validate
//! topology inputs, compute provider funnels, solve the transit/peering
//! selection problems, plan announcement schedules, generate event streams,
//! simulate propagation and router memory, evaluate defenses, and scan
//! streams for aggregation hints.
//!
//! All commands are offline and deterministic: every piece of randomness
//! flows from an explicit `--seed`, and rerunning a command with identical
//! inputs and seed reproduces its primary outputs byte for byte (manifests
//! differ in timestamps only; solver wall times are only nonzero when a
//! `--time-limit` makes runs time-dependent).

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kirinlab_cli::formats::{self, DefenseConfigFile, EventLine, ProfileFile, ScheduleFile};
use kirinlab_cli::manifest::RunManifest;
use kirinlab_core::cones::{
    customer_cones, path_observed_cones, provider_funnels, rank_injection_candidates,
    smfd_matrix,
};
use kirinlab_core::deagg::{
    analyze_aggregation_hints, build_schedule, generate_stream, verify_schedule, Ipv6Prefix,
    SessionSpec, StreamMode, StreamParams,
};
use kirinlab_core::defense::DefensePipeline;
use kirinlab_core::ilp::{
    branch_and_bound_solve, build_peering_model, build_transit_model, refine_sweep, tight_big_m,
    IlpModel, IlpSolution, SweepParams, DEFAULT_BIG_M,
};
use kirinlab_core::propagation::{simulate, MultilateralMode, SimulationConfig};
use kirinlab_core::rib::{RibSim, RouterProfile, Shedding};
use kirinlab_core::topology::{load_peering_lans, orphan_asns, Asn, AsTopology, SessionMatrix};

#[derive(Parser)]
#[command(
    name = "kirinlab",
    version,
    about = "Feasibility analysis of distributed IPv6 prefix de-aggregation attacks"
)]
struct Cli {
    /// Worker threads for sweeps and per-injection simulations
    /// (default: $KIRINLAB_JOBS, else 1).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Topology input checks.
    Topo {
        #[command(subcommand)]
        command: TopoCommand,
    },
    /// Compute provider funnels from AS relationships.
    Funnel(FunnelArgs),
    /// Solve the session-maximization / LAN-minimization problems.
    Solve {
        #[command(subcommand)]
        command: SolveCommand,
    },
    /// Build a non-aggregatable announcement schedule.
    Plan(PlanArgs),
    /// Expand a schedule into a timed announce/withdraw stream.
    Stream(StreamArgs),
    /// Replay streams or injections against models.
    Simulate {
        #[command(subcommand)]
        command: SimulateCommand,
    },
    /// Run a stream through an ingress-defense configuration.
    Defend(DefendArgs),
    /// Count aggregation hints in a stream.
    Agghints(AgghintsArgs),
}

#[derive(Subcommand)]
enum TopoCommand {
    /// Validate relationship and LAN files; print a JSON report.
    Validate(TopoValidateArgs),
}

#[derive(Args)]
struct TopoValidateArgs {
    /// AS relationship file (`asn1|asn2|rel`).
    #[arg(long)]
    rel: PathBuf,
    /// Peering LAN membership CSV (`lan_id,asn,ipv6_address`).
    #[arg(long)]
    lans: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FunnelArgs {
    #[arg(long)]
    rel: PathBuf,
    /// Optional AS-path file (one space-separated path per line); switches
    /// cone computation from the recursive closure to path observation.
    #[arg(long)]
    paths: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SolveCommand {
    /// Maximize obtainable sessions under provider and LAN budgets.
    Transit(SolveTransitArgs),
    /// Minimize peering LANs for a target count of fully affected ASes.
    Peering(SolvePeeringArgs),
}

#[derive(Args)]
struct SolveTransitArgs {
    #[arg(long)]
    lans: PathBuf,
    /// LAN budget sweep: `N`, `A..B`, or `a,b,c`.
    #[arg(long)]
    l_max: String,
    /// Provider budget sweep: same forms.
    #[arg(long)]
    p_max: String,
    /// Coupling constant; must exceed the session total.
    #[arg(long, default_value_t = DEFAULT_BIG_M)]
    big_m: i64,
    /// Use the smallest valid coupling constant instead of --big-m.
    #[arg(long)]
    tight_bigm: bool,
    /// Solver budget per sweep point, in seconds. Omitting it solves every
    /// point to optimality with a zero reported wall time.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Also write the first sweep point's model as model.json.
    #[arg(long)]
    dump_model: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolvePeeringArgs {
    #[arg(long)]
    rel: PathBuf,
    #[arg(long)]
    lans: PathBuf,
    /// Injection set: `all`, `top:K`, or `list:asn,asn,...`.
    #[arg(long, default_value = "all")]
    injection: String,
    /// Fully-affected AS count sweep: `N`, `A..B`, or `a,b,c`.
    #[arg(long)]
    n: String,
    /// Required degree sweep: same forms.
    #[arg(long)]
    r: String,
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    dump_model: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    /// Parent prefix to de-aggregate, e.g. 2001:db8::/29.
    #[arg(long)]
    parent: String,
    /// Number of sessions (ids s0001..sN).
    #[arg(long)]
    sessions: Option<usize>,
    /// Per-session prefix limit (with --sessions).
    #[arg(long)]
    limit: Option<usize>,
    /// CSV of `id,limit` pairs instead of --sessions/--limit.
    #[arg(long)]
    sessions_file: Option<PathBuf>,
    /// Origin ASNs to rotate through, comma-separated.
    #[arg(long)]
    origins: String,
    /// Deepest prefix length to announce.
    #[arg(long, default_value_t = 48)]
    max_len: u8,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    schedule: PathBuf,
    /// `best` (shortest path, no communities) or `worst` (maximal).
    #[arg(long)]
    mode: String,
    #[arg(long, default_value_t = 251)]
    path_len: u16,
    #[arg(long, default_value_t = 251)]
    comms: u16,
    #[arg(long, default_value_t = 1)]
    cycles: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Valley-free redistribution of injections over a topology.
    Propagate(SimulatePropagateArgs),
    /// RIB memory occupancy of a stream against a router profile.
    Rib(SimulateRibArgs),
}

#[derive(Args)]
struct SimulatePropagateArgs {
    #[arg(long)]
    rel: PathBuf,
    /// JSON list of {neighbor, via, session_id, route_count}.
    #[arg(long)]
    injections: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    peer_cone_fraction: f64,
    /// Route-server reach: `direct` (neighbor only) or `off`.
    #[arg(long, default_value = "direct")]
    multilateral: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateRibArgs {
    /// Stream file (JSON Lines) from `kirinlab stream` or `defend`.
    #[arg(long)]
    stream: PathBuf,
    /// Built-in profile name (mx5_best, mx5_worst, xrv9k_best,
    /// xrv9k_worst) or a path to a profile JSON file.
    #[arg(long)]
    profile: String,
    /// `none` (die at 100%) or `cisco` (shed sessions at alerts).
    #[arg(long, default_value = "none")]
    shedding: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DefendArgs {
    #[arg(long)]
    stream: PathBuf,
    /// Defense configuration JSON.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AgghintsArgs {
    #[arg(long)]
    stream: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

trait InputCtx<T> {
    fn input(self) -> Result<T, CliError>;
    fn internal(self) -> Result<T, CliError>;
}

impl<T> InputCtx<T> for Result<T> {
    fn input(self) -> Result<T, CliError> {
        self.map_err(CliError::Input)
    }

    fn internal(self) -> Result<T, CliError> {
        self.map_err(CliError::Internal)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli
        .jobs
        .or_else(|| std::env::var("KIRINLAB_JOBS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(1)
        .max(1);
    match run(cli.command, jobs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command, jobs: usize) -> Result<(), CliError> {
    match command {
        Command::Topo { command: TopoCommand::Validate(args) } => topo_validate(args),
        Command::Funnel(args) => funnel(args),
        Command::Solve { command: SolveCommand::Transit(args) } => solve_transit(args, jobs),
        Command::Solve { command: SolveCommand::Peering(args) } => solve_peering(args, jobs),
        Command::Plan(args) => plan(args),
        Command::Stream(args) => stream(args),
        Command::Simulate { command: SimulateCommand::Propagate(args) } => {
            simulate_propagate(args, jobs)
        }
        Command::Simulate { command: SimulateCommand::Rib(args) } => simulate_rib_cmd(args),
        Command::Defend(args) => defend(args),
        Command::Agghints(args) => agghints(args),
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).context("serializing JSON")?;
    write_file(dir, name, &(json + "\n"))
}

fn load_topology(path: &Path) -> Result<AsTopology> {
    let text = read_to_string(path)?;
    AsTopology::load_relationships(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn load_lans(path: &Path) -> Result<Vec<kirinlab_core::topology::PeeringLan>> {
    let text = read_to_string(path)?;
    load_peering_lans(&text).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// Parses `N`, `A..B` (inclusive), or `a,b,c` into a sorted value list.
fn parse_sweep(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().context("sweep range start")?;
        let b: u64 = b.trim().parse().context("sweep range end")?;
        if a > b {
            bail!("empty sweep range {a}..{b}");
        }
        return Ok((a..=b).collect());
    }
    if spec.contains(',') {
        let mut values = spec
            .split(',')
            .map(|v| v.trim().parse::<u64>().context("sweep list value"))
            .collect::<Result<Vec<u64>>>()?;
        values.sort_unstable();
        values.dedup();
        return Ok(values);
    }
    Ok(vec![spec.parse().context("sweep value")?])
}

fn topo_validate(args: TopoValidateArgs) -> Result<(), CliError> {
    let manifest = manifest_with_inputs("topo validate", 0, &[&args.rel, &args.lans]).input()?;
    let topology = load_topology(&args.rel).input()?;
    let lans = load_lans(&args.lans).input()?;
    let report = formats::ValidationReport {
        ases: topology.ases().len() as u64,
        p2c_edges: topology.p2c_edges().len() as u64,
        p2p_edges: topology.p2p_edges().len() as u64,
        lans: lans.len() as u64,
        triplets: lans.iter().map(|l| l.members.len() as u64).sum(),
        orphan_asns: orphan_asns(&topology, &lans).iter().map(|a| a.0).collect(),
    };
    let json = serde_json::to_string_pretty(&report).context("serializing report").internal()?;
    println!("{json}");
    if !report.orphan_asns.is_empty() {
        eprintln!(
            "warning: {} ASes appear in LAN data but not in the relationship data",
            report.orphan_asns.len()
        );
    }
    if let Some(out) = args.out {
        ensure_out_dir(&out).input()?;
        write_json(&out, "validation.json", &report).input()?;
        manifest.finish(&out).input()?;
    }
    Ok(())
}

fn funnel(args: FunnelArgs) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = vec![&args.rel];
    if let Some(p) = &args.paths {
        inputs.push(p);
    }
    let manifest = manifest_with_inputs("funnel", 0, &inputs).input()?;
    let topology = load_topology(&args.rel).input()?;
    let cones = match &args.paths {
        None => customer_cones(&topology),
        Some(path) => {
            let text = read_to_string(path).input()?;
            let paths = parse_as_paths(&text).input()?;
            path_observed_cones(&topology, &paths)
        }
    };
    for cycle in &cones.p2c_cycles {
        eprintln!("warning: provider-to-customer cycle: {cycle:?}");
    }
    let funnels = provider_funnels(&cones);
    ensure_out_dir(&args.out).input()?;
    write_json(&args.out, "funnels.json", &formats::funnels_json(&funnels)).input()?;
    manifest.finish(&args.out).input()?;
    Ok(())
}

fn parse_as_paths(text: &str) -> Result<Vec<Vec<Asn>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<u32>()
                        .map(Asn)
                        .map_err(|_| anyhow!("line {}: bad ASN `{t}`", i + 1))
                })
                .collect()
        })
        .collect()
}

/// Solves every sweep point, optionally in parallel, preserving point order.
fn solve_points(
    models: Vec<(SweepParams, IlpModel)>,
    time_limit: Option<f64>,
    jobs: usize,
) -> Vec<(SweepParams, IlpSolution)> {
    let solve_one = |model: &IlpModel| match time_limit {
        None => branch_and_bound_solve(model, f64::INFINITY, &mut || 0.0),
        Some(limit) => {
            let start = Instant::now();
            branch_and_bound_solve(model, limit, &mut || start.elapsed().as_secs_f64())
        }
    };
    if jobs <= 1 || models.len() <= 1 {
        return models.into_iter().map(|(p, m)| (p, solve_one(&m))).collect();
    }
    let n = models.len();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(vec![None; n]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let (params, model) = &models[i];
                let solution = solve_one(model);
                results.lock().expect("results lock")[i] = Some((*params, solution));
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|s| s.expect("all points solved"))
        .collect()
}

fn solve_transit(args: SolveTransitArgs, jobs: usize) -> Result<(), CliError> {
    let manifest = manifest_with_inputs("solve transit", 0, &[&args.lans]).input()?;
    let sessions = SessionMatrix::build(&load_lans(&args.lans).input()?);
    let big_m = if args.tight_bigm { tight_big_m(&sessions) } else { args.big_m };
    let l_values = parse_sweep(&args.l_max).input()?;
    let p_values = parse_sweep(&args.p_max).input()?;
    let mut models = Vec::new();
    for &l in &l_values {
        for &p in &p_values {
            let model = build_transit_model(&sessions, l, p, big_m)
                .map_err(|e| anyhow!("{e}"))
                .input()?;
            models.push((SweepParams::Transit { l_max: l, p_max: p }, model));
        }
    }
    ensure_out_dir(&args.out).input()?;
    if args.dump_model {
        if let Some((_, model)) = models.first() {
            write_json(&args.out, "model.json", &formats::ModelDump::from(model)).input()?;
        }
    }
    let solved = solve_points(models, args.time_limit, jobs);
    let refined = refine_sweep(&solved).map_err(|e| anyhow!("{e}")).internal()?;
    write_file(&args.out, "sweep.csv", &formats::sweep_csv(&refined)).input()?;
    manifest.finish(&args.out).input()?;
    Ok(())
}

fn solve_peering(args: SolvePeeringArgs, jobs: usize) -> Result<(), CliError> {
    let manifest = manifest_with_inputs("solve peering", 0, &[&args.rel, &args.lans]).input()?;
    let topology = load_topology(&args.rel).input()?;
    let sessions = SessionMatrix::build(&load_lans(&args.lans).input()?);
    let cones = customer_cones(&topology);
    let funnels = provider_funnels(&cones);

    let injection: BTreeSet<Asn> = match args.injection.trim() {
        "all" => sessions.asns().iter().copied().collect(),
        spec if spec.starts_with("top:") => {
            let k: usize = spec[4..].parse().context("top:K").input()?;
            rank_injection_candidates(&cones, &sessions, k).into_iter().collect()
        }
        spec if spec.starts_with("list:") => spec[5..]
            .split(',')
            .map(|t| t.trim().parse::<u32>().map(Asn).map_err(|e| anyhow!("bad ASN: {e}")))
            .collect::<Result<_>>()
            .input()?,
        other => {
            return Err(CliError::Input(anyhow!(
                "--injection must be `all`, `top:K`, or `list:...`, got `{other}`"
            )))
        }
    };
    let (smfd, unknown) = smfd_matrix(&funnels, &sessions, &injection);
    for asn in &unknown {
        eprintln!("warning: injection AS{asn} has no sessions in the LAN data");
    }

    let n_values = parse_sweep(&args.n).input()?;
    let r_values = parse_sweep(&args.r).input()?;
    let mut models = Vec::new();
    for &n in &n_values {
        for &r in &r_values {
            models.push((SweepParams::Peering { n, r }, build_peering_model(&smfd, n, r)));
        }
    }
    ensure_out_dir(&args.out).input()?;
    if args.dump_model {
        if let Some((_, model)) = models.first() {
            write_json(&args.out, "model.json", &formats::ModelDump::from(model)).input()?;
        }
    }
    let keep: Vec<(SweepParams, IlpModel)> = models.clone();
    let solved = solve_points(models, args.time_limit, jobs);
    let refined = refine_sweep(&solved).map_err(|e| anyhow!("{e}")).internal()?;
    write_file(&args.out, "sweep.csv", &formats::sweep_csv(&refined)).input()?;

    // Affected-AS counts reported both ways: from the coverage variables
    // and recomputed from the selected LAN set.
    let mut affected = String::from("n,r,affected_from_vars,affected_from_lans\n");
    for ((params, solution), (_, model)) in refined.iter().zip(&keep) {
        let SweepParams::Peering { n, r } = params else { continue };
        if solution.status == kirinlab_core::ilp::Status::Infeasible {
            affected.push_str(&format!("{n},{r},,\n"));
            continue;
        }
        let selected = solution.selected(model);
        let from_vars = selected.iter().filter(|name| name.starts_with("c_")).count();
        let lan_ids: Vec<kirinlab_core::topology::LanId> = selected
            .iter()
            .filter_map(|name| name.strip_prefix("d_"))
            .map(kirinlab_core::topology::LanId::from)
            .collect();
        let from_lans = smfd
            .asns()
            .iter()
            .filter(|a| lan_ids.iter().map(|l| smfd.value(**a, l)).sum::<u64>() >= *r)
            .count();
        affected.push_str(&format!("{n},{r},{from_vars},{from_lans}\n"));
    }
    write_file(&args.out, "affected.csv", &affected).input()?;
    manifest.finish(&args.out).input()?;
    Ok(())
}

fn plan(args: PlanArgs) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = Vec::new();
    if let Some(f) = &args.sessions_file {
        inputs.push(f);
    }
    let manifest = manifest_with_inputs("plan", 0, &inputs).input()?;
    let parent =
        Ipv6Prefix::from_str(&args.parent).map_err(|e| anyhow!("--parent: {e}")).input()?;
    let sessions: Vec<SessionSpec> = match (&args.sessions_file, args.sessions, args.limit) {
        (Some(file), None, None) => {
            let text = read_to_string(file).input()?;
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    let (id, limit) = l
                        .split_once(',')
                        .ok_or_else(|| anyhow!("sessions file: expected `id,limit`"))?;
                    Ok(SessionSpec {
                        id: id.trim().to_string(),
                        limit: limit.trim().parse().context("session limit")?,
                    })
                })
                .collect::<Result<_>>()
                .input()?
        }
        (None, Some(n), Some(limit)) => {
            let width = n.to_string().len().max(4);
            (1..=n).map(|i| SessionSpec { id: format!("s{i:0width$}"), limit }).collect()
        }
        _ => {
            return Err(CliError::Input(anyhow!(
                "provide either --sessions with --limit, or --sessions-file"
            )))
        }
    };
    let origins: Vec<Asn> = args
        .origins
        .split(',')
        .map(|t| t.trim().parse::<u32>().map(Asn).map_err(|e| anyhow!("--origins: {e}")))
        .collect::<Result<_>>()
        .input()?;
    let schedule = build_schedule(parent, &sessions, &origins, args.max_len)
        .map_err(|e| anyhow!("{e}"))
        .input()?;
    let report = verify_schedule(&schedule);
    if !report.ok {
        return Err(CliError::Internal(anyhow!(
            "built schedule failed verification: {:?}",
            report.violations
        )));
    }
    ensure_out_dir(&args.out).input()?;
    write_json(&args.out, "schedule.json", &ScheduleFile::from(&schedule)).input()?;
    eprintln!(
        "planned {} prefixes across {} sessions",
        schedule.total_prefixes(),
        schedule.assignments.len()
    );
    manifest.finish(&args.out).input()?;
    Ok(())
}

fn stream(args: StreamArgs) -> Result<(), CliError> {
    let manifest = manifest_with_inputs("stream", args.seed, &[&args.schedule]).input()?;
    let schedule = parse_schedule(&args.schedule).input()?;
    let mode = parse_mode(&args.mode).input()?;
    let params = StreamParams {
        path_len: args.path_len,
        n_comms: args.comms,
        cycles: args.cycles,
        seed: args.seed,
    };
    let events = generate_stream(&schedule, mode, params).map_err(|e| anyhow!("{e}")).input()?;
    ensure_out_dir(&args.out).input()?;
    let path = args.out.join("stream.jsonl");
    let file = fs::File::create(&path)
        .with_context(|| format!("creating {}", path.display()))
        .input()?;
    let mut writer = BufWriter::new(file);
    let mut count = 0u64;
    for event in events {
        let line = serde_json::to_string(&EventLine::from(&event))
            .context("serializing event")
            .internal()?;
        writeln!(writer, "{line}").context("writing stream").input()?;
        count += 1;
    }
    writer.flush().context("flushing stream").input()?;
    eprintln!("wrote {count} events");
    manifest.finish(&args.out).input()?;
    Ok(())
}

fn parse_schedule(path: &Path) -> Result<kirinlab_core::deagg::AnnouncementSchedule> {
    let text = read_to_string(path)?;
    let file: ScheduleFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    file.into_schedule()
}

fn parse_mode(mode: &str) -> Result<StreamMode> {
    match mode {
        "best" => Ok(StreamMode::BestCase),
        "worst" => Ok(StreamMode::WorstCase),
        other => bail!("--mode must be `best` or `worst`, got `{other}`"),
    }
}

fn simulate_propagate(args: SimulatePropagateArgs, jobs: usize) -> Result<(), CliError> {
    let manifest =
        manifest_with_inputs("simulate propagate", args.seed, &[&args.rel, &args.injections])
            .input()?;
    let topology = load_topology(&args.rel).input()?;
    let injections =
        formats::parse_injections(&read_to_string(&args.injections).input()?).input()?;
    let config = SimulationConfig {
        peer_cone_fraction: args.peer_cone_fraction,
        multilateral_mode: match args.multilateral.as_str() {
            "direct" => MultilateralMode::DirectOnly,
            "off" => MultilateralMode::Off,
            other => {
                return Err(CliError::Input(anyhow!(
                    "--multilateral must be `direct` or `off`, got `{other}`"
                )))
            }
        },
        seed: args.seed,
    };

    // Injections are independent; chunk them across workers and merge.
    let merged = if jobs <= 1 || injections.len() <= 1 {
        simulate(&topology, &injections, &config).map_err(|e| anyhow!("{e}")).input()?
    } else {
        let chunk_size = injections.len().div_ceil(jobs).max(1);
        let chunks: Vec<&[kirinlab_core::propagation::Injection]> =
            injections.chunks(chunk_size).collect();
        let results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| scope.spawn(|| simulate(&topology, chunk, &config)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut merged = kirinlab_core::propagation::ExposureReport {
            total_ases: topology.ases().len() as u64,
            ..Default::default()
        };
        for result in results {
            let report = result.map_err(|e| anyhow!("{e}")).input()?;
            for (asn, e) in report.per_as {
                let m = merged.per_as.entry(asn).or_default();
                m.sessions_reaching += e.sessions_reaching;
                m.routes_received += e.routes_received;
            }
            merged.reach_fraction.extend(report.reach_fraction);
        }
        merged
    };

    ensure_out_dir(&args.out).input()?;
    write_file(&args.out, "exposure.csv", &formats::exposure_csv(&merged)).input()?;
    write_json(&args.out, "summary.json", &formats::ExposureSummary::from(&merged)).input()?;
    manifest.finish(&args.out).input()?;
    Ok(())
}

fn resolve_profile(spec: &str) -> Result<RouterProfile> {
    if let Some(profile) = RouterProfile::builtin(spec) {
        return Ok(profile);
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!(
            "`{spec}` is neither a built-in profile ({}) nor a file",
            RouterProfile::builtin_names().join(", ")
        );
    }
    let file: ProfileFile = serde_json::from_str(&read_to_string(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    file.into_profile()
}

fn parse_shedding(spec: &str) -> Result<Shedding> {
    match spec {
        "none" => Ok(Shedding::None),
        "cisco" => Ok(Shedding::CiscoStyle),
        other => bail!("--shedding must be `none` or `cisco`, got `{other}`"),
    }
}

fn simulate_rib_cmd(args: SimulateRibArgs) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = vec![&args.stream];
    let profile_path = PathBuf::from(&args.profile);
    if profile_path.exists() {
        inputs.push(&profile_path);
    }
    let manifest = manifest_with_inputs("simulate rib", 0, &inputs).input()?;
    let profile = resolve_profile(&args.profile).input()?;
    let shedding = parse_shedding(&args.shedding).input()?;

    let file = fs::File::open(&args.stream)
        .with_context(|| format!("opening {}", args.stream.display()))
        .input()?;
    let mut sim = RibSim::new(profile.clone(), shedding);
    for event in formats::parse_event_lines(std::io::BufReader::new(file)) {
        let event = event.input()?;
        sim.push(&event).map_err(|e| anyhow!("{e}")).input()?;
    }
    let state = sim.into_state();

    ensure_out_dir(&args.out).input()?;
    let mut timeline = String::new();
    for event in &state.event_log {
        let line = serde_json::to_string(&formats::TimelineLine::from(event))
            .context("serializing timeline")
            .internal()?;
        timeline.push_str(&line);
        timeline.push('\n');
    }
    write_file(&args.out, "timeline.jsonl", &timeline).input()?;
    write_json(&args.out, "rib.json", &formats::RibSummary::new(&profile, &state)).input()?;
    manifest.finish(&args.out).input()?;
    Ok(())
}

fn defend(args: DefendArgs) -> Result<(), CliError> {
    let manifest = manifest_with_inputs("defend", 0, &[&args.stream, &args.config]).input()?;
    let config_file: DefenseConfigFile =
        serde_json::from_str(&read_to_string(&args.config).input()?)
            .with_context(|| format!("parsing {}", args.config.display()))
            .input()?;
    let config = config_file.into_config().input()?;

    let file = fs::File::open(&args.stream)
        .with_context(|| format!("opening {}", args.stream.display()))
        .input()?;
    ensure_out_dir(&args.out).input()?;
    let decisions_file = fs::File::create(args.out.join("decisions.jsonl"))
        .context("creating decisions.jsonl")
        .input()?;
    let accepted_file = fs::File::create(args.out.join("accepted.jsonl"))
        .context("creating accepted.jsonl")
        .input()?;
    let mut decisions = BufWriter::new(decisions_file);
    let mut accepted = BufWriter::new(accepted_file);

    let mut pipeline = DefensePipeline::new(config);
    for event in formats::parse_event_lines(std::io::BufReader::new(file)) {
        let event = event.input()?;
        let decision = pipeline.push(&event).map_err(|e| anyhow!("{e}")).input()?;
        let line = serde_json::to_string(&formats::DecisionLine::from(&decision))
            .context("serializing decision")
            .internal()?;
        writeln!(decisions, "{line}").context("writing decisions").input()?;
        if decision.verdict.admits() {
            let line = serde_json::to_string(&EventLine::from(&event))
                .context("serializing accepted event")
                .internal()?;
            writeln!(accepted, "{line}").context("writing accepted").input()?;
        }
    }
    decisions.flush().context("flushing decisions").input()?;
    accepted.flush().context("flushing accepted").input()?;
    write_json(&args.out, "stats.json", &formats::DefenseStatsFile::from(pipeline.stats()))
        .input()?;
    manifest.finish(&args.out).input()?;
    Ok(())
}

fn agghints(args: AgghintsArgs) -> Result<(), CliError> {
    let manifest = manifest_with_inputs("agghints", 0, &[&args.stream]).input()?;
    let file = fs::File::open(&args.stream)
        .with_context(|| format!("opening {}", args.stream.display()))
        .input()?;
    let events = formats::parse_event_lines(std::io::BufReader::new(file))
        .collect::<Result<Vec<_>>>()
        .input()?;
    let table = analyze_aggregation_hints(events);
    let file_table = formats::HintTableFile::from(&table);
    let json = serde_json::to_string_pretty(&file_table).context("serializing").internal()?;
    println!("{json}");
    if let Some(out) = args.out {
        ensure_out_dir(&out).input()?;
        write_json(&out, "aggregation_hints.json", &file_table).input()?;
        manifest.finish(&out).input()?;
    }
    Ok(())
}

fn manifest_with_inputs(command: &str, seed: u64, inputs: &[&Path]) -> Result<RunManifest> {
    let mut manifest = RunManifest::start(command, seed);
    for path in inputs {
        manifest.record_input(path)?;
    }
    Ok(manifest)
}

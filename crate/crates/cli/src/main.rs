//! `diffuse`: generate networks, simulate contagions, fit them, and report.
//!
//! Every command is deterministic given its flags. Diagnostics go to stderr
//! (verbosity from `DIFFUSE_LOG`); when `--out` is omitted the command's
//! machine-readable output goes to stdout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use diffuse::analysis::{
    aggregate_report, evaluate, exposure_scatter, format_exposure_points, format_node_splits,
    format_order_points, format_report, format_rho1_histogram, format_rho2_histogram,
    order_vs_internal, parse_labels, parse_node_splits, rho1_histogram, rho2_histogram,
    ContagionSummary,
};
use diffuse::baselines::{baseline, BaselineJson};
use diffuse::exposure::ExposureCurve;
use diffuse::hazards::HazardModel;
use diffuse::inference::{fit, FitOptions, ResultJson};
use diffuse::network::{format_edges, generate_preferential_attachment, load_edges, Network};
use diffuse::rate_table::load_profile_csv;
use diffuse::simulator::{default_dt, simulate, GroundTruth, SimulationConfig};
use diffuse::trace::{format_infections, load_infections, ContagionTrace};

const DEFAULT_HAZARD: &str = "reciprocal:0.14,1";
const NODE_SPLIT_SUFFIX: &str = ".nodes.csv";
/// Exit status when a batch finished but some inputs failed.
const PARTIAL_FAILURE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "diffuse",
    version,
    about = "Internal and external influence in network contagions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random directed network as an edge TSV.
    NetGen(NetGenArgs),
    /// Simulate one contagion on a network.
    Simulate(SimulateArgs),
    /// Fit the exposure curve and event profile to one trace or a directory of traces.
    Infer(InferArgs),
    /// Naive exposure curve and event profile.
    Baseline(BaselineArgs),
    /// Compare a fit against simulator ground truth.
    Evaluate(EvaluateArgs),
    /// Aggregate a directory of fits into a per-category table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NetModel {
    Pa,
}

#[derive(Args)]
struct NetGenArgs {
    #[arg(long, value_enum, default_value = "pa")]
    model: NetModel,
    #[arg(long)]
    nodes: usize,
    /// Out-edges added per node.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    rho1: f64,
    #[arg(long)]
    rho2: f64,
    /// External event profile CSV with header `t,lambda`.
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value = DEFAULT_HAZARD)]
    hazard: HazardModel,
    /// Time step in hours; chosen from the rates when omitted.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total node count, when isolated nodes follow the last id in the edge list.
    #[arg(long)]
    node_count: Option<usize>,
    /// Infections TSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    edges: PathBuf,
    /// An infections TSV, or a directory of them (`*.tsv`) for batch mode.
    #[arg(long)]
    infections: PathBuf,
    #[arg(long, default_value = DEFAULT_HAZARD)]
    hazard: HazardModel,
    #[arg(long, default_value_t = 20)]
    anchors: usize,
    /// Anchor at every distinct infection time.
    #[arg(long)]
    dense: bool,
    #[arg(long, default_value_t = 20)]
    rho2_max: u32,
    /// Track every node individually instead of grouping unexposed nodes.
    #[arg(long)]
    no_grouping: bool,
    /// Use integer exposure counts in the profile solve and the full likelihood.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    node_count: Option<usize>,
    /// Also write the per-node exposure split next to each result.
    #[arg(long)]
    node_splits: bool,
    /// Concurrent fits in batch mode.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Result JSON (single trace) or output directory (batch); stdout when
    /// omitted for a single trace.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    infections: PathBuf,
    /// Number of bins spanning `[0, last infection]`.
    #[arg(long, default_value_t = 40)]
    bins: usize,
    #[arg(long)]
    node_count: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Baseline JSON; its L2 distance is reported when given.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of result JSON files.
    #[arg(long)]
    results: PathBuf,
    /// `file,category` CSV.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the figure data CSVs.
    #[arg(long)]
    figures: Option<PathBuf>,
    #[arg(long, default_value_t = 24)]
    rho1_bins: usize,
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Loads the edge list, padded with isolated nodes to `node_count` if given.
fn load_network(path: &Path, node_count: Option<usize>) -> Result<Network> {
    let net = load_edges(path).with_context(|| format!("loading {}", path.display()))?;
    match node_count {
        Some(n) => Ok(net.with_node_count(n)?),
        None => Ok(net),
    }
}

/// Pads the network so every infected node exists; such nodes have no edges.
fn covering(net: &Network, trace: &ContagionTrace) -> Result<Option<Network>> {
    let needed = trace.iter().map(|i| i.node + 1).max().unwrap_or(0);
    if needed > net.node_count() {
        warn!(
            "trace names node {} beyond the edge list; treating nodes {}..{needed} as isolated",
            needed - 1,
            net.node_count()
        );
        return Ok(Some(net.with_node_count(needed)?));
    }
    Ok(None)
}

fn net_gen(args: NetGenArgs) -> Result<()> {
    let net = match args.model {
        NetModel::Pa => generate_preferential_attachment(args.nodes, args.m, args.seed)?,
    };
    info!(
        "generated {} nodes, {} edges",
        net.node_count(),
        net.edge_count()
    );
    emit(args.out.as_deref(), &format_edges(&net))
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let net = load_network(&args.edges, args.node_count)?;
    let profile = load_profile_csv(&args.profile)
        .with_context(|| format!("loading {}", args.profile.display()))?;
    let curve = ExposureCurve::new(args.rho1, args.rho2)?;
    let dt = args
        .dt
        .unwrap_or_else(|| default_dt(&profile, &args.hazard, args.horizon));
    let cfg = SimulationConfig::new(
        &net,
        curve,
        profile,
        args.hazard,
        dt,
        args.horizon,
        args.seed,
    );
    let out = simulate(&cfg)?;
    info!(
        "{} infections, {} external, dt {dt}",
        out.trace.len(),
        out.external_infections().len()
    );
    emit(args.out.as_deref(), &format_infections(&out.trace))?;
    if let Some(path) = &args.truth {
        emit(Some(path), &to_json(&GroundTruth::from_run(&cfg, &out))?)?;
    }
    Ok(())
}

fn fit_options(args: &InferArgs) -> FitOptions {
    let base = if args.exact {
        FitOptions::exact()
    } else {
        FitOptions::default()
    };
    FitOptions {
        anchors: args.anchors,
        dense: args.dense,
        rho2_max: args.rho2_max,
        grouping: !args.no_grouping,
        ..base
    }
}

/// Fits one trace and writes its result (and node split, if requested).
fn infer_one(net: &Network, path: &Path, args: &InferArgs, out: Option<&Path>) -> Result<()> {
    let trace = load_infections(path).with_context(|| format!("loading {}", path.display()))?;
    let padded = covering(net, &trace)?;
    let net = padded.as_ref().unwrap_or(net);
    let result = fit(net, &trace, &args.hazard, &fit_options(args))
        .with_context(|| format!("fitting {}", path.display()))?;
    info!(
        "{}: rho1 {:.5} rho2 {} converged {}",
        path.display(),
        result.curve.rho1,
        result.rho2(),
        result.converged
    );
    if result.likelihood_floored {
        warn!("{}: likelihood hit the log floor", path.display());
    }
    emit(out, &to_json(&result.to_json())?)?;
    if args.node_splits {
        let Some(out) = out else {
            bail!("--node-splits needs --out");
        };
        let split_path = out
            .with_extension("")
            .with_extension(&NODE_SPLIT_SUFFIX[1..]);
        emit(Some(&split_path), &format_node_splits(&result.splits))?;
    }
    Ok(())
}

fn sorted_files(dir: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == extension))
        .collect();
    files.sort();
    Ok(files)
}

fn infer_cmd(args: InferArgs) -> Result<ExitCode> {
    let net = load_network(&args.edges, args.node_count)?;
    if !args.infections.is_dir() {
        infer_one(&net, &args.infections, &args, args.out.as_deref())?;
        return Ok(ExitCode::SUCCESS);
    }
    let Some(out_dir) = &args.out else {
        bail!("batch mode (--infections is a directory) needs --out DIR");
    };
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let inputs = sorted_files(&args.infections, "tsv")?;
    if inputs.is_empty() {
        bail!("no .tsv files in {}", args.infections.display());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()?;
    let failures = pool.install(|| {
        inputs
            .par_iter()
            .filter(|path| {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy();
                let out = out_dir.join(format!("{stem}.json"));
                match infer_one(&net, path, &args, Some(&out)) {
                    Ok(()) => false,
                    Err(e) => {
                        warn!("skipping {}: {e:#}", path.display());
                        true
                    }
                }
            })
            .count()
    });
    info!(
        "{} of {} traces fitted",
        inputs.len() - failures,
        inputs.len()
    );
    if failures == inputs.len() {
        bail!("every trace failed");
    }
    Ok(if failures > 0 {
        ExitCode::from(PARTIAL_FAILURE)
    } else {
        ExitCode::SUCCESS
    })
}

fn baseline_cmd(args: BaselineArgs) -> Result<()> {
    if args.bins == 0 {
        bail!("--bins must be at least 1");
    }
    let net = load_network(&args.edges, args.node_count)?;
    let trace = load_infections(&args.infections)
        .with_context(|| format!("loading {}", args.infections.display()))?;
    let padded = covering(&net, &trace)?;
    let net = padded.as_ref().unwrap_or(&net);
    let span = trace.last_time().unwrap_or(0.0);
    let width = if span > 0.0 {
        span / args.bins as f64
    } else {
        1.0
    };
    let result = baseline(net, &trace, width)?;
    emit(args.out.as_deref(), &to_json(&result)?)
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let result: ResultJson = read_json(&args.result)?;
    let truth: GroundTruth = read_json(&args.truth)?;
    let base: Option<BaselineJson> = args.baseline.as_deref().map(read_json).transpose()?;
    let evaluation = evaluate(&result, &truth, base.as_ref())?;
    emit(args.out.as_deref(), &to_json(&evaluation)?)
}

/// Loads one result and its node-split sidecar, if present.
fn load_summary(path: &Path) -> Result<ContagionSummary> {
    let json: ResultJson = read_json(path)?;
    let name = path
        .file_name()
        .unwrap_or_default()
        .to_string_lossy()
        .into_owned();
    let mut summary = ContagionSummary::from_json(name, &json);
    let sidecar = path.with_extension(&NODE_SPLIT_SUFFIX[1..]);
    if sidecar.is_file() {
        let text = fs::read_to_string(&sidecar)?;
        summary.nodes = parse_node_splits(&text)?;
    }
    Ok(summary)
}

/// Label keys may name a result file or its stem.
fn label_lookup(
    labels: &BTreeMap<String, String>,
    summaries: &[ContagionSummary],
) -> BTreeMap<String, String> {
    summaries
        .iter()
        .filter_map(|s| {
            let stem = Path::new(&s.name)
                .file_stem()?
                .to_string_lossy()
                .into_owned();
            labels
                .get(&s.name)
                .or_else(|| labels.get(&stem))
                .map(|c| (s.name.clone(), c.clone()))
        })
        .collect()
}

fn report_cmd(args: ReportArgs) -> Result<ExitCode> {
    let files = sorted_files(&args.results, "json")?;
    if files.is_empty() {
        bail!("no result files in {}", args.results.display());
    }
    let mut summaries = Vec::new();
    let mut failures = 0;
    for path in &files {
        match load_summary(path) {
            Ok(s) => summaries.push(s),
            Err(e) => {
                warn!("skipping {}: {e:#}", path.display());
                failures += 1;
            }
        }
    }
    if summaries.is_empty() {
        bail!("no readable result files in {}", args.results.display());
    }
    let labels = match &args.labels {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(label_lookup(&parse_labels(&text)?, &summaries))
        }
        None => None,
    };
    let rows = aggregate_report(&summaries, labels.as_ref())?;
    emit(args.out.as_deref(), &format_report(&rows))?;

    if let Some(dir) = &args.figures {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let hist = rho1_histogram(&summaries, args.rho1_bins.max(1));
        emit(
            Some(&dir.join("rho1_histogram.csv")),
            &format_rho1_histogram(&hist),
        )?;
        emit(
            Some(&dir.join("rho2_histogram.csv")),
            &format_rho2_histogram(&rho2_histogram(&summaries)),
        )?;
        if summaries.iter().any(|s| !s.nodes.is_empty()) {
            emit(
                Some(&dir.join("order_vs_internal.csv")),
                &format_order_points(&order_vs_internal(&summaries)),
            )?;
            emit(
                Some(&dir.join("exposure_scatter.csv")),
                &format_exposure_points(&exposure_scatter(&summaries)),
            )?;
        } else {
            warn!("no node-split files found; skipping per-node figure data");
        }
    }
    Ok(if failures > 0 {
        ExitCode::from(PARTIAL_FAILURE)
    } else {
        ExitCode::SUCCESS
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::NetGen(a) => net_gen(a).map(|_| ExitCode::SUCCESS),
        Command::Simulate(a) => simulate_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Infer(a) => infer_cmd(a),
        Command::Baseline(a) => baseline_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Evaluate(a) => evaluate_cmd(a).map(|_| ExitCode::SUCCESS),
        Command::Report(a) => report_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIFFUSE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

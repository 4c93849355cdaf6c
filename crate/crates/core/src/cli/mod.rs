//! Command-line front end. Settings come from built-in defaults, then an
//! optional JSON config file, then flags.

pub mod sweep;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canlog::{read_can_log, write_can_csv, CanLogError};
use crate::matcher::{attack, to_geojson, AttackResult, MatchConfig, MatchError};
use crate::metrics::{evaluate, GroundTruth, MetricsError};
use crate::roadnet::{
    load_graph_file, parse_osm_xml, save_graph_file, HighwayFilter, RoadGraph, RoadNetError,
};
use crate::simulate::{
    make_synthetic_grid, sample_route, synthesize_can, DriveProfile, GridSpec, SimError,
};
use crate::trajgraph::{
    build_trajectory_with_report, TrajError, TrajectoryConfig, TrajectoryGraph,
};
use sweep::{run_sweep, write_sweep_csv, SweepConfig, SweepError};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input files, flags or configuration.
    #[error("{0}")]
    Input(String),
    /// The log produced no usable trajectory.
    #[error("{0}")]
    Empty(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Empty(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

impl From<CanLogError> for CliError {
    fn from(e: CanLogError) -> Self {
        input(e)
    }
}

impl From<RoadNetError> for CliError {
    fn from(e: RoadNetError) -> Self {
        input(e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        input(e)
    }
}

impl From<TrajError> for CliError {
    fn from(e: TrajError) -> Self {
        match e {
            TrajError::TooFewNodes { .. } | TrajError::InsufficientData { .. } => {
                CliError::Empty(e.to_string())
            }
            TrajError::InvalidArgument(_) => input(e),
        }
    }
}

impl From<MatchError> for CliError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::TrajectoryTooShort => CliError::Empty(e.to_string()),
            _ => input(e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::EmptyResult => CliError::Empty(e.to_string()),
            _ => input(e),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Invalid(_) | SweepError::Sim(_) => input(e),
            SweepError::Match(m) => m.into(),
        }
    }
}

/// Square area to crop the road graph to before matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaConfig {
    pub center_lat: f64,
    pub center_lon: f64,
    pub side_km: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectorySettings {
    /// Overrides the road graph's shortest edge as the merge threshold.
    pub min_edge_m: Option<f64>,
    #[serde(flatten)]
    pub build: TrajectoryConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub graph: Option<PathBuf>,
    pub can_log: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub area: Option<AreaConfig>,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub trajectory: TrajectorySettings,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| input(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "canpath",
    version,
    about = "Recover driven routes from CAN speed and pedal logs"
)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an OpenStreetMap XML extract into a road graph.
    IngestOsm(IngestOsmArgs),
    /// Write a synthetic lattice road graph.
    MakeGrid(MakeGridArgs),
    /// Sample a route on a road graph and synthesize a CAN log for it.
    Simulate(SimulateArgs),
    /// Reconstruct the trajectory graph from a CAN log.
    BuildTrajectory(BuildTrajectoryArgs),
    /// Match a CAN log against a road graph.
    Attack(AttackArgs),
    /// Score an attack result against the ground-truth route.
    Evaluate(EvaluateArgs),
    /// Run the synthetic area × route length × K experiment grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct IngestOsmArgs {
    #[arg(long)]
    pub osm: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated highway classes to keep instead of the drivable set.
    #[arg(long, value_delimiter = ',')]
    pub highway: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct MakeGridArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 300.0)]
    pub spacing_m: f64,
    #[arg(long, default_value_t = 0.1)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, allow_hyphen_values = true)]
    pub origin_lat: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub origin_lon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Route length in nodes.
    #[arg(long)]
    pub q: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Drive profile JSON; defaults apply to missing fields.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub speed_noise_std: Option<f64>,
    #[arg(long)]
    pub segment_length_error: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BuildTrajectoryArgs {
    #[arg(long)]
    pub can: Option<PathBuf>,
    /// Road graph supplying the merge threshold; not needed with --min-edge-m.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub min_edge_m: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub can: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub min_edge_m: Option<f64>,
    /// Search seeds one at a time instead of in parallel.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Where to write the report; defaults to report.json beside the result.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub serial: bool,
}

fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| {
        input(format!(
            "missing {what}: pass a flag or set it in the config"
        ))
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let file = File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| input(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| input(format!("{}: {e}", dir.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::IngestOsm(a) => cmd_ingest_osm(a),
        Command::MakeGrid(a) => cmd_make_grid(a),
        Command::Simulate(a) => cmd_simulate(a, cfg),
        Command::BuildTrajectory(a) => cmd_build_trajectory(a, cfg),
        Command::Attack(a) => cmd_attack(a, cfg),
        Command::Evaluate(a) => cmd_evaluate(a, cfg),
        Command::Sweep(a) => cmd_sweep(a, cfg),
    }
}

fn cmd_ingest_osm(a: IngestOsmArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let filter = match a.highway {
        Some(classes) => HighwayFilter::from_classes(classes),
        None => HighwayFilter::default(),
    };
    let file = File::open(&a.osm).map_err(|e| input(format!("{}: {e}", a.osm.display())))?;
    let g = parse_osm_xml(BufReader::new(file), &filter)?;
    save_graph_file(&g, &a.out)?;
    let min_edge = g.min_edge_length_m().unwrap_or(f64::NAN);
    info!(
        "stage=ingest nodes={} edges={} min_edge_m={min_edge} elapsed_ms={}",
        g.node_count(),
        g.edge_count(),
        started.elapsed().as_millis()
    );
    println!(
        "nodes={} edges={} min_edge_m={min_edge}",
        g.node_count(),
        g.edge_count()
    );
    Ok(())
}

fn cmd_make_grid(a: MakeGridArgs) -> Result<(), CliError> {
    let defaults = GridSpec::default();
    let spec = GridSpec {
        n: a.n,
        spacing_m: a.spacing_m,
        jitter: a.jitter,
        seed: a.seed,
        origin_lat: a.origin_lat.unwrap_or(defaults.origin_lat),
        origin_lon: a.origin_lon.unwrap_or(defaults.origin_lon),
    };
    let g = make_synthetic_grid(&spec)?;
    save_graph_file(&g, &a.out)?;
    info!(
        "stage=make_grid nodes={} edges={} min_edge_m={}",
        g.node_count(),
        g.edge_count(),
        g.min_edge_length_m().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, cfg: RunConfig) -> Result<(), CliError> {
    let graph_path = required(a.graph.or(cfg.graph), "road graph (--graph)")?;
    let out_dir = required(a.out_dir.or(cfg.out_dir), "output directory (--out-dir)")?;
    let g = load_graph_file(&graph_path)?;
    let mut profile: DriveProfile = match &a.profile {
        Some(p) => read_json(p)?,
        None => DriveProfile::default(),
    };
    profile.seed = a.seed;
    if let Some(s) = a.speed_noise_std {
        profile.speed_noise_std = s;
    }
    if let Some(e) = a.segment_length_error {
        profile.segment_length_error = e;
    }
    let gt = sample_route(&g, a.q, a.seed)?;
    let scenario = synthesize_can(&gt, &g, &profile)?;
    ensure_dir(&out_dir)?;
    let can_path = out_dir.join("can.csv");
    let file =
        File::create(&can_path).map_err(|e| input(format!("{}: {e}", can_path.display())))?;
    let mut w = BufWriter::new(file);
    write_can_csv(&scenario.log, &mut w)?;
    w.flush().map_err(input)?;
    write_json(&out_dir.join("ground_truth.json"), &scenario.ground_truth)?;
    info!(
        "stage=simulate q={} samples={} seed={}",
        a.q,
        scenario.log.speed.count(),
        a.seed
    );
    Ok(())
}

fn min_edge_for(
    flag: Option<f64>,
    settings: &TrajectorySettings,
    g: Option<&RoadGraph>,
) -> Result<f64, CliError> {
    flag.or(settings.min_edge_m)
        .or_else(|| g.and_then(RoadGraph::min_edge_length_m))
        .ok_or_else(|| input("no merge threshold: pass --min-edge-m or a road graph with edges"))
}

fn reconstruct(
    can_path: &Path,
    min_edge_m: f64,
    build: &TrajectoryConfig,
) -> Result<TrajectoryGraph, CliError> {
    let started = Instant::now();
    let log = read_can_log(can_path)?;
    let (traj, report) = build_trajectory_with_report(&log, min_edge_m, build)?;
    info!(
        "stage=trajectory stop_candidates={} turn_candidates={} pre_merge_nodes={} nodes={} min_edge_m={min_edge_m} elapsed_ms={}",
        report.stop_candidates,
        report.turn_candidates,
        report.pre_merge_nodes,
        traj.node_count(),
        started.elapsed().as_millis()
    );
    Ok(traj)
}

fn cmd_build_trajectory(a: BuildTrajectoryArgs, cfg: RunConfig) -> Result<(), CliError> {
    let can = required(a.can.or(cfg.can_log), "CAN log (--can)")?;
    let g = match a.graph.or(cfg.graph) {
        Some(p) => Some(load_graph_file(&p)?),
        None => None,
    };
    let min_edge = min_edge_for(a.min_edge_m, &cfg.trajectory, g.as_ref())?;
    let traj = reconstruct(&can, min_edge, &cfg.trajectory.build)?;
    write_json(&a.out, &traj)
}

fn cmd_attack(a: AttackArgs, cfg: RunConfig) -> Result<(), CliError> {
    let graph_path = required(a.graph.or(cfg.graph), "road graph (--graph)")?;
    let can = required(a.can.or(cfg.can_log), "CAN log (--can)")?;
    let out_dir = required(a.out_dir.or(cfg.out_dir), "output directory (--out-dir)")?;
    let mut g = load_graph_file(&graph_path)?;
    if let Some(area) = cfg.area {
        g = g.bbox_filter(area.center_lat, area.center_lon, area.side_km)?;
        info!(
            "stage=crop nodes={} edges={} side_km={}",
            g.node_count(),
            g.edge_count(),
            area.side_km
        );
    }
    let mut match_cfg = cfg.matching;
    if let Some(k) = a.k {
        match_cfg.k = k;
    }
    if a.serial {
        match_cfg.parallel = false;
    }
    match_cfg.validate()?;
    let min_edge = min_edge_for(a.min_edge_m, &cfg.trajectory, Some(&g))?;
    let traj = reconstruct(&can, min_edge, &cfg.trajectory.build)?;

    let started = Instant::now();
    let result = attack(&g, &traj, &match_cfg)?;
    info!(
        "stage=match sigma_used={} matched={} returned={} truncated={} elapsed_ms={}",
        result.sigma_used,
        result.matched_count,
        result.candidates.len(),
        result.truncated,
        started.elapsed().as_millis()
    );
    ensure_dir(&out_dir)?;
    write_json(&out_dir.join("result.json"), &result)?;
    write_json(
        &out_dir.join("candidates.geojson"),
        &to_geojson(&result, &g),
    )
}

fn cmd_evaluate(a: EvaluateArgs, cfg: RunConfig) -> Result<(), CliError> {
    let gt_path = required(
        a.ground_truth.or(cfg.ground_truth),
        "ground truth (--ground-truth)",
    )?;
    let graph_path = required(a.graph.or(cfg.graph), "road graph (--graph)")?;
    let result: AttackResult = read_json(&a.result)?;
    let gt: GroundTruth = read_json(&gt_path)?;
    let g = load_graph_file(&graph_path)?;
    gt.validate(&g)?;
    let report = evaluate(&result, &gt, &g)?;
    let out = a.out.unwrap_or_else(|| {
        a.result
            .parent()
            .map(|d| d.join("report.json"))
            .unwrap_or_else(|| PathBuf::from("report.json"))
    });
    write_json(&out, &report)?;
    info!(
        "stage=evaluate psi={} precision={} offset_m={} fnr={}",
        report.psi, report.precision, report.offset_m, report.fnr
    );
    println!("psi\tprecision\toffset_m\tfnr");
    println!(
        "{:.4}\t{:.4}\t{:.1}\t{:.4}",
        report.psi, report.precision, report.offset_m, report.fnr
    );
    Ok(())
}

fn cmd_sweep(a: SweepArgs, cfg: RunConfig) -> Result<(), CliError> {
    let mut sweep = cfg.sweep;
    if let Some(t) = a.trials {
        sweep.trials = t;
    }
    if let Some(s) = a.seed {
        sweep.seed = s;
    }
    let started = Instant::now();
    let rows = run_sweep(&sweep, !a.serial)?;
    let file = File::create(&a.out).map_err(|e| input(format!("{}: {e}", a.out.display())))?;
    write_sweep_csv(&rows, BufWriter::new(file)).map_err(input)?;
    info!(
        "stage=sweep cells={} trials_per_cell={} elapsed_ms={}",
        rows.len(),
        sweep.trials,
        started.elapsed().as_millis()
    );
    Ok(())
}

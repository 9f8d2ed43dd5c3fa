//! `voxelmap` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Error caused by the invocation rather than the data; exits with code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "voxelmap", version, about = "Hierarchical occupancy and semantic voxel maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a frame log into a map, publishing a delta per frame.
    Build(BuildArgs),
    /// List voxels matching a region and predicate.
    Query(QueryArgs),
    /// Score single-scan and map-accumulated labels against ground truth.
    Eval(EvalArgs),
    /// Time integrate, publish and query at several resolutions.
    Bench(BenchArgs),
    /// Serve a recorded delta stream over TCP.
    Serve(ServeArgs),
    /// Receive a delta stream and write the replica map.
    Subscribe(SubscribeArgs),
    /// Convert a LiDAR odometry sequence (velodyne .bin + .label) to a frame log.
    Convert(ConvertArgs),
    /// Write a synthetic frame log.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct MapArgs {
    /// Leaf voxel edge length in metres.
    #[arg(long)]
    pub res: f64,
    /// Tree height.
    #[arg(long, default_value_t = 16)]
    pub depth: u8,
    /// Label slots integrated into the map.
    #[arg(long, value_delimiter = ',')]
    pub slots: Option<Vec<usize>>,
    /// Level at which free space is marked.
    #[arg(long, default_value_t = 0)]
    pub free_depth: u8,
    #[arg(long, default_value_t = 100.0)]
    pub max_range: f64,
}

#[derive(Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Delta stream file; defaults to `<out>.deltas`.
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// Text report file.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-frame table file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// `aabb:x0,y0,z0,x1,y1,z1`, `sphere:cx,cy,cz,r` or `all`.
    #[arg(long)]
    pub region: String,
    /// e.g. `state in (unknown) and updated_before 1234`.
    #[arg(long, default_value = "true")]
    pub pred: String,
    #[arg(long, default_value_t = 0)]
    pub depth: u8,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Visit every node instead of pruning by summaries.
    #[arg(long)]
    pub no_prune: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub gt_slot: usize,
    #[arg(long)]
    pub net_slot: usize,
    /// Slots integrated into the map; defaults to the network slot.
    #[arg(long, value_delimiter = ',')]
    pub fuse_slots: Option<Vec<usize>>,
    /// Label set file; defaults to the one named by the log.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Class remapping file, `from to` per line.
    #[arg(long)]
    pub remap: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub res: f64,
    #[arg(long, default_value_t = 16)]
    pub depth: u8,
    #[arg(long, default_value_t = 100.0)]
    pub max_range: f64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Resolutions to compare, finest first.
    #[arg(long, value_delimiter = ',', required = true)]
    pub res: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    pub depth: u8,
    #[arg(long, default_value_t = 100.0)]
    pub max_range: f64,
    /// Half extents of the per-frame occlusion query box around the sensor.
    #[arg(long, value_delimiter = ',', default_value = "10,10,2")]
    pub query_extent: Vec<f64>,
    /// Query level above the leaves.
    #[arg(long, default_value_t = 1)]
    pub query_depth: u8,
    /// Frames after which a voxel counts as stale.
    #[arg(long, default_value_t = 50)]
    pub stale_after: u32,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub map_stream: PathBuf,
    /// Address to listen on; port 0 picks a free port, printed on stdout.
    #[arg(long)]
    pub listen: String,
    /// Number of subscribers to serve before exiting.
    #[arg(long, default_value_t = 1)]
    pub clients: usize,
}

#[derive(Args)]
pub struct SubscribeArgs {
    #[arg(long)]
    pub connect: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Start from this map instead of waiting for a snapshot.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Seconds to keep retrying the initial connection.
    #[arg(long, default_value_t = 5.0)]
    pub connect_timeout: f64,
}

#[derive(Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub kitti_velodyne: PathBuf,
    /// Ground-truth label directory (slot 0).
    #[arg(long)]
    pub kitti_labels: PathBuf,
    /// Network prediction directories, one slot each, in order.
    #[arg(long)]
    pub net_labels: Vec<PathBuf>,
    #[arg(long)]
    pub poses: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Label set path recorded in the log's meta file.
    #[arg(long)]
    pub labels: Option<String>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, required_unless_present = "print_scene")]
    pub out: Option<PathBuf>,
    /// Scene description (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub scene: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::City)]
    pub preset: Preset,
    /// Street length of the city preset, in 90 m blocks.
    #[arg(long, default_value_t = 1)]
    pub blocks: u32,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Adds a noisy label slot with this flip rate; repeatable. Replaces
    /// the scene's own noise slots.
    #[arg(long)]
    pub noise: Vec<f64>,
    /// Prints the scene description instead of writing a log.
    #[arg(long)]
    pub print_scene: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    City,
    Desk,
    Isolated,
}

fn threads() -> anyhow::Result<usize> {
    match std::env::var("VOXELMAP_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                if n > 1 {
                    eprintln!("note: VOXELMAP_THREADS={n} requested; integration runs single-threaded");
                }
                Ok(n)
            }
            _ => Err(usage(format!("VOXELMAP_THREADS must be a positive integer, got `{v}`"))),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = threads().and_then(|_| match cli.command {
        Command::Build(a) => commands::build(&a),
        Command::Query(a) => commands::query(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Serve(a) => commands::serve(&a),
        Command::Subscribe(a) => commands::subscribe(&a),
        Command::Convert(a) => commands::convert(&a),
        Command::Synth(a) => commands::synth(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

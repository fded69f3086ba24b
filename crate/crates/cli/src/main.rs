//! `gpair` — phantoms, simulation, reconstruction, and metrics from one
//! binary. Human-readable progress and config echo go to stderr; stdout
//! carries machine-usable results (JSON, discrepancy numbers), so
//! pipelines can parse it.

mod run;
mod setup;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "gpair",
    version,
    about = "Gaussian-kernel photoacoustic modeling and reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Arithmetic precision for operators and reconstruction.
    #[arg(long, global = true, value_enum, default_value_t = Precision::Single)]
    precision: Precision,

    /// Zero out wall-clock fields in outputs so identical runs produce
    /// byte-identical files.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Kernel support resolution floor (minimum taps across ±3σ).
    #[arg(long, global = true)]
    n_min: Option<u32>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Precision {
    Single,
    Double,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic volume.
    Phantom(PhantomArgs),
    /// Forward-model a volume into detector traces.
    Simulate(SimulateArgs),
    /// Single-pass adjoint reconstruction.
    Backproject(BackprojectArgs),
    /// Iterative regularized reconstruction.
    Reconstruct(ReconstructArgs),
    /// Compare a volume against a reference.
    Metrics(MetricsArgs),
    /// Check forward/adjoint consistency on random vectors.
    Dottest(DottestArgs),
    /// Time the operator stages.
    Bench(BenchArgs),
    /// Render a max projection or slice to PGM.
    Project(ProjectArgs),
    /// Export a volume as raw payload + text sidecar.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct GridArgs {
    /// Voxel counts as X,Y,Z.
    #[arg(long, value_parser = parse_dims)]
    grid: [usize; 3],
    /// Voxel pitch in meters.
    #[arg(long)]
    spacing: f64,
    /// Grid center in meters (default: centered on the origin).
    #[arg(long, value_parser = parse_vec3)]
    center: Option<[f64; 3]>,
}

#[derive(Args)]
struct ArrayArgs {
    /// Detector layout.
    #[arg(long, value_enum, default_value_t = ArrayKind::Hemi)]
    array: ArrayKind,
    /// Number of detectors (hemi: total; planar: per side).
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Hemisphere radius in meters.
    #[arg(long, default_value_t = 0.028)]
    radius: f64,
    /// Planar aperture edge length in meters.
    #[arg(long, default_value_t = 0.02)]
    aperture: f64,
    /// Plane height (z) for the planar layout, meters.
    #[arg(long, default_value_t = 0.03)]
    plane_z: f64,
    /// Array center in meters.
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,0")]
    array_center: [f64; 3],
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ArrayKind {
    Hemi,
    Planar,
}

#[derive(Args)]
struct AcousticArgs {
    /// Sampling rate in Hz.
    #[arg(long, default_value_t = 4e7)]
    rate: f64,
    /// Samples per trace.
    #[arg(long, default_value_t = 1216)]
    samples: usize,
    /// Speed of sound in m/s.
    #[arg(long, default_value_t = 1500.0)]
    speed: f64,
    /// Time of the first sample in seconds.
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
}

#[derive(Args)]
struct PhantomArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Phantom family.
    #[arg(long, value_enum, default_value_t = PhantomKindArg::Blobs)]
    kind: PhantomKindArg,
    /// Blobs / branches / points-per-axis, depending on kind.
    #[arg(long, default_value_t = 5)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output volume (GPV1).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhantomKindArg {
    Blobs,
    Tubes,
    Points,
}

#[derive(Args)]
struct SimulateArgs {
    /// Input volume (GPV1); its header fixes the grid.
    #[arg(long, value_name = "VOL")]
    input: PathBuf,
    #[command(flatten)]
    array: ArrayArgs,
    #[command(flatten)]
    acoustic: AcousticArgs,
    /// Use direct continuous-physics enumeration instead of the
    /// operator pipeline (slow, double precision).
    #[arg(long)]
    oracle: bool,
    /// Add Gaussian noise at this amplitude SNR (max|signal| / std).
    #[arg(long)]
    noise_snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Output traces (GPS1, detector positions included).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BackprojectArgs {
    /// Input traces (GPS1 with embedded detector positions).
    #[arg(long, value_name = "SIG")]
    input: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Output volume (GPV1).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Input traces (GPS1 with embedded detector positions).
    #[arg(long, value_name = "SIG")]
    input: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Iteration budget.
    #[arg(long, default_value_t = 200)]
    iters: u32,
    #[arg(long, default_value_t = 1e-8)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps_reg: f64,
    #[arg(long, default_value_t = 0.1)]
    eta_max: f64,
    #[arg(long, default_value_t = 1e-4)]
    eta_min: f64,
    #[arg(long, default_value_t = 50)]
    cawr_t0: u32,
    #[arg(long, default_value_t = 2)]
    cawr_tmult: u32,
    /// Start from the backprojection image instead of zero.
    #[arg(long)]
    init_backprojection: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output volume (GPV1).
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration CSV: iter,loss,data_term,reg_term,lr,wall_ms.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Volume under test (GPV1).
    #[arg(long, value_name = "VOL")]
    input: PathBuf,
    /// Ground-truth volume (GPV1).
    #[arg(long)]
    reference: PathBuf,
    /// Also compute reference-free metrics with a signal mask at this
    /// fraction of the reference maximum.
    #[arg(long)]
    signal_threshold: Option<f64>,
    /// Emit a JSON object instead of plain text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DottestArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    array: ArrayArgs,
    #[command(flatten)]
    acoustic: AcousticArgs,
    #[arg(long, default_value_t = 5)]
    trials: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    array: ArrayArgs,
    #[command(flatten)]
    acoustic: AcousticArgs,
    /// Repetitions per stage.
    #[arg(long, default_value_t = 3)]
    reps: u32,
}

#[derive(Args)]
struct ProjectArgs {
    /// Input volume (GPV1).
    #[arg(long, value_name = "VOL")]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = AxisArg::Z)]
    axis: AxisArg,
    /// Slice index; omit for a max projection.
    #[arg(long)]
    index: Option<usize>,
    /// Output image (binary PGM).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AxisArg {
    X,
    Y,
    Z,
}

#[derive(Args)]
struct ConvertArgs {
    /// Input volume (GPV1).
    #[arg(long, value_name = "VOL")]
    input: PathBuf,
    /// Output payload path; a `.txt` sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected X,Y,Z, got {s:?}"));
    }
    let mut out = [0usize; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| format!("bad dimension {part:?}: {e}"))?;
    }
    Ok(out)
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got {s:?}"));
    }
    let mut out = [0.0f64; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| format!("bad coordinate {part:?}: {e}"))?;
    }
    Ok(out)
}

fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("GPAIR_THREADS") {
        let n: usize = raw.parse().map_err(|_| {
            anyhow::anyhow!("GPAIR_THREADS must be a positive integer, got {raw:?}")
        })?;
        if n == 0 {
            anyhow::bail!("GPAIR_THREADS must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let code = match init_threads().and_then(|()| run::dispatch(cli)) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

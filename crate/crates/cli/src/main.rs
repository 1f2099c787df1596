use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mpa_core::codec::DEFAULT_QP_LIST;
use mpa_core::geometry::PlaneId;
use mpa_core::pipeline::{bd_from_csv, compare_sequences, SynthRequest};
use mpa_core::{cmd_estimate, cmd_rd, cmd_synth, AffineParams, ExperimentConfig, FrameGeometry, Mode, SynthKind};

/// Motion plane adaptive inter prediction experiments on 360-degree video.
#[derive(Debug, Parser)]
#[command(name = "mpa360", version)]
struct Cli {
    /// Worker threads; 0 uses one per core. Never changes any output byte.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate and compensate motion, then write per-pair and per-sequence quality tables.
    Estimate(ExperimentArgs),
    /// Code the residuals over a QP sweep and report BD-rates against mpa-t.
    Rd(RdArgs),
    /// Write a synthetic sequence with known motion.
    Synth(SynthArgs),
    /// Standalone PSNR/WS-PSNR between two sequences, or BD-rates from an RD CSV.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Raw sequence with a `.meta` sidecar next to it; repeat for several.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    /// Modes to run (comma separated); default all.
    #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
    mode: Vec<Mode>,
    /// Block sizes (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32])]
    bs: Vec<usize>,
    /// Evenly spaced frame pairs per sequence.
    #[arg(long, default_value_t = 32)]
    pairs: usize,
    /// Search range in pixels.
    #[arg(long, default_value_t = 96.0)]
    search_range: f64,
    /// Area-average downscale to WIDTHxHEIGHT before estimation, e.g. 768x384.
    #[arg(long, value_parser = parse_geometry)]
    downscale: Option<FrameGeometry>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct RdArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Quantization scale factors (comma separated).
    #[arg(long, value_delimiter = ',')]
    qp_list: Vec<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Pan,
    RotateSphere,
    ZoomOnPlane,
    AffineOnPlane,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Plane {
    FrontBack,
    LeftRight,
    TopBottom,
}

impl From<Plane> for PlaneId {
    fn from(p: Plane) -> Self {
        match p {
            Plane::FrontBack => PlaneId::FrontBack,
            Plane::LeftRight => PlaneId::LeftRight,
            Plane::TopBottom => PlaneId::TopBottom,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 33)]
    frames: usize,
    /// Frame size as WIDTHxHEIGHT (width twice the height).
    #[arg(long, default_value = "768x384", value_parser = parse_geometry)]
    size: FrameGeometry,
    #[arg(long, default_value_t = 8)]
    depth: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Pan: horizontal shift per frame in pixels.
    #[arg(long, default_value_t = 2.5)]
    pan: f64,
    /// Rotation per frame in radians as YAW,PITCH,ROLL.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.01, 0.015, 0.01])]
    rotation: Vec<f64>,
    /// Zoom per frame (scale 1 + zoom).
    #[arg(long, default_value_t = 0.03)]
    zoom: f64,
    /// Affine parameters a,b,c,d,e,f per frame.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.03, -0.02, 0.025, -0.04, 0.012, -0.008])]
    affine: Vec<f64>,
    /// Motion plane of the zoom and affine kinds.
    #[arg(long, value_enum, default_value = "front-back")]
    plane: Plane,
    /// Base file name; defaults to the kind.
    #[arg(long)]
    name: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Original sequence for a frame-by-frame comparison.
    #[arg(long, requires = "test", conflicts_with = "rd")]
    input: Option<PathBuf>,
    /// Sequence compared against `--input`.
    #[arg(long)]
    test: Option<PathBuf>,
    /// RD CSV (label,rate_bpp,ws_psnr_db) to compute BD-rates from.
    #[arg(long, requires = "anchor")]
    rd: Option<PathBuf>,
    /// Label of the anchor curve in `--rd`.
    #[arg(long)]
    anchor: Option<String>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: mpa_core::Error| e.to_string())
}

fn parse_geometry(s: &str) -> Result<FrameGeometry, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    FrameGeometry::new(w, h).map_err(|e| e.to_string())
}

fn experiment(args: &ExperimentArgs) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(args.input.clone(), &args.out_dir);
    if !args.mode.is_empty() {
        cfg.modes = args.mode.clone();
    }
    cfg.block_sizes = args.bs.clone();
    cfg.pairs = args.pairs;
    cfg.estimator.search.search_range = args.search_range;
    cfg.target = args.downscale;
    cfg
}

fn format_db(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.3}")
    }
}

fn estimate(args: &ExperimentArgs) -> Result<()> {
    let cfg = experiment(args);
    let report = cmd_estimate(&cfg)?;
    println!("{:<24} {:>3} {:<9} {:>9} {:>9} {:>9}", "sequence", "bs", "mode", "psnr", "ws-psnr", "time %");
    for r in &report.rows {
        let rel = r.relative_time.map_or_else(|| "n/a".into(), |t| format!("{t:.1}"));
        println!(
            "{:<24} {:>3} {:<9} {:>9} {:>9} {:>9}",
            r.sequence,
            r.block_size,
            r.mode.as_str(),
            format_db(r.psnr),
            format_db(r.ws_psnr),
            rel
        );
    }
    println!("results written to {}", cfg.out_dir.display());
    Ok(())
}

fn rd(args: &RdArgs) -> Result<()> {
    let mut cfg = experiment(&args.experiment);
    cfg.qp_list = if args.qp_list.is_empty() { DEFAULT_QP_LIST.to_vec() } else { args.qp_list.clone() };
    let report = cmd_rd(&cfg)?;
    for b in &report.bd {
        match &b.bd_rate {
            Ok(v) => println!("{:<24} bs{:<3} {:<9} BD-rate {v:+.2} %", b.sequence, b.block_size, b.mode.as_str()),
            Err(e) => println!("{:<24} bs{:<3} {:<9} BD-rate n/a ({e})", b.sequence, b.block_size, b.mode.as_str()),
        }
    }
    println!("results written to {}", cfg.out_dir.display());
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let kind = match args.kind {
        Kind::Pan => SynthKind::Pan { pixels: args.pan },
        Kind::RotateSphere => {
            let &[yaw, pitch, roll] = args.rotation.as_slice() else { bail!("--rotation takes three angles") };
            SynthKind::RotateSphere { yaw, pitch, roll }
        }
        Kind::ZoomOnPlane => SynthKind::ZoomOnPlane {
            plane: args.plane.into(),
            zoom: args.zoom,
        },
        Kind::AffineOnPlane => SynthKind::AffineOnPlane {
            plane: args.plane.into(),
            params: match args.affine.len() {
                6 => AffineParams::from_slice(&args.affine).context("six affine parameters expected")?,
                n => bail!("--affine takes six parameters, got {n}"),
            },
        },
    };
    let req = SynthRequest {
        kind,
        frames: args.frames,
        geometry: args.size,
        depth: args.depth,
        seed: args.seed,
        fps: args.fps,
    };
    let name = args.name.clone().unwrap_or_else(|| kind.name().to_string());
    let out = cmd_synth(&req, &args.out_dir, &name)?;
    println!("{}", out.sequence.display());
    println!("{}", out.meta.display());
    println!("{}", out.truth.display());
    Ok(())
}

fn metrics(args: &MetricsArgs) -> Result<()> {
    match (&args.input, &args.test, &args.rd, &args.anchor) {
        (Some(a), Some(b), None, _) => {
            let scores = compare_sequences(a, b)?;
            println!("frame,psnr_db,ws_psnr_db");
            for s in &scores {
                println!("{},{},{}", s.frame, format_db(s.psnr), format_db(s.ws_psnr));
            }
            let n = scores.len().max(1) as f64;
            let mean = |f: fn(&mpa_core::pipeline::FrameScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
            println!("mean,{},{}", format_db(mean(|s| s.psnr)), format_db(mean(|s| s.ws_psnr)));
            Ok(())
        }
        (None, None, Some(path), Some(anchor)) => {
            println!("label,bd_rate_pct");
            for (label, bd) in bd_from_csv(path, anchor)? {
                match bd {
                    Ok(v) => println!("{label},{v:.4}"),
                    Err(e) => println!("{label},n/a ({e})"),
                }
            }
            Ok(())
        }
        _ => bail!("give either --input with --test, or --rd with --anchor"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Rd(a) => rd(a),
        Command::Synth(a) => synth(a),
        Command::Metrics(a) => metrics(a),
    };
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .context("building the worker pool")
        .and_then(|pool| pool.install(run));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

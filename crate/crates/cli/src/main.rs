//! Batch driver for the two-bounce lidar pipeline.
//!
//! Every subcommand reads one JSON run config; `--set key.path=value`
//! overrides individual fields and a few common flags override the rest.
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use twobounce_core::pipeline::{
    run_ablate, run_eval, run_mesh, run_preprocess, run_simulate, run_train, AblationAxis, RunConfig,
};
use twobounce_core::Error;

#[derive(Parser)]
#[command(
    name = "twobounce",
    about = "Simulate two-bounce lidar transients and reconstruct scene geometry from one view",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override a config field by dotted path, e.g. --set train.iterations=5000
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Override the output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the scene file.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the transient dataset (K captures + ground truth + manifest).
    Simulate(CommonArgs),
    /// Extract arrival times, confidences, and shadow masks.
    Preprocess(CommonArgs),
    /// Optimize the density grid against the preprocessed dataset.
    Train(CommonArgs),
    /// Depth/Chamfer/occupancy metrics and depth image exports.
    Eval(CommonArgs),
    /// Extract the isosurface mesh of a trained checkpoint.
    Mesh {
        #[command(flatten)]
        common: CommonArgs,
        /// Density isolevel (defaults to eval.mesh_isolevel).
        #[arg(long)]
        isolevel: Option<f64>,
    },
    /// Sweep one parameter axis and tabulate metrics per value.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// spatial | temporal | ambient | albedo | illum_points | shadow_threshold
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. --values 128,256,512,1024
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Error::Config(format!("{}: {e}", common.config.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", common.config.display())))?;
    for kv in &common.set {
        let (key, raw) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set needs KEY=VALUE, got '{kv}'")))?;
        let parsed: serde_json::Value =
            serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
        let mut slot = &mut value;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("--set path '{key}' does not address an object")))?
                .entry(part)
                .or_insert(serde_json::Value::Null);
        }
        *slot = parsed;
    }
    let mut cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(format!("config: {e}")))?;
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(scene) = &common.scene {
        cfg.scene = scene.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = load_config(&common)?;
            let out = run_simulate(&cfg)?;
            println!("wrote {}", out.manifest.display());
            if out.clipped_pulses > 0 {
                eprintln!(
                    "warning: {} pixels had pulses clipped by the time window",
                    out.clipped_pulses
                );
            }
        }
        Command::Preprocess(common) => {
            let cfg = load_config(&common)?;
            let paths = run_preprocess(&cfg)?;
            println!("wrote {} preprocessed views", paths.len());
        }
        Command::Train(common) => {
            let cfg = load_config(&common)?;
            let ckpt = run_train(&cfg)?;
            println!("wrote {}", ckpt.display());
        }
        Command::Eval(common) => {
            let cfg = load_config(&common)?;
            let metrics = run_eval(&cfg)?;
            println!(
                "train view: L1 {:.4} m, PSNR {:.2} dB | chamfer {:.4} m | IoU {:.3}",
                metrics.train_view.l1, metrics.train_view.psnr, metrics.chamfer, metrics.iou_scene
            );
            if let (Some(l1), Some(psnr)) = (metrics.test_l1_mean, metrics.test_psnr_mean) {
                println!(
                    "test views ({}): L1 {:.4} m, PSNR {:.2} dB",
                    metrics.test_view_count, l1, psnr
                );
            }
        }
        Command::Mesh { common, isolevel } => {
            let cfg = load_config(&common)?;
            let (ply, stl) = run_mesh(&cfg, isolevel)?;
            println!("wrote {} and {}", ply.display(), stl.display());
        }
        Command::Ablate { common, axis, values } => {
            let cfg = load_config(&common)?;
            let axis = AblationAxis::parse(&axis)?;
            let rows = run_ablate(&cfg, axis, &values)?;
            println!("value,l1,psnr,chamfer,iou");
            for r in &rows {
                println!("{},{:.4},{:.2},{:.4},{:.3}", r.value, r.l1, r.psnr, r.chamfer, r.iou);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Config(_) | Error::Argument(_) => 2,
                Error::Data(_) | Error::Io(_) => 3,
                Error::Numerical(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}

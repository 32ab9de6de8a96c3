use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use osteoforge::cli::{self, ConfigOverrides, EvalArgs, PipelineConfig, RegionInputs, WeaklabelArgs};
use osteoforge::Result;

#[derive(Parser)]
#[command(name = "osteoforge", version, about = "Weak 3D bone-lesion labels from RECIST measurements")]
struct Cli {
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    window_center: Option<f64>,
    #[arg(long, global = true)]
    window_width: Option<f64>,
    /// 3D connectivity for components: 6, 18 or 26.
    #[arg(long, global = true)]
    connectivity: Option<u32>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Minimum fraction of a GT component a prediction must cover.
    #[arg(long, global = true)]
    min_overlap: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RegionFlags {
    /// Body mask (nonzero = body).
    #[arg(long)]
    body: Option<PathBuf>,
    /// Skeleton mask (nonzero = bone).
    #[arg(long)]
    skeleton: Option<PathBuf>,
    /// Label volume with codes 1 = body, 2 = skeleton; replaces --body/--skeleton.
    #[arg(long, conflicts_with_all = ["body", "skeleton"])]
    regions: Option<PathBuf>,
}

impl From<RegionFlags> for RegionInputs {
    fn from(f: RegionFlags) -> Self {
        RegionInputs {
            body: f.body,
            skeleton: f.skeleton,
            regions: f.regions,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the merged weak label volume from a CT volume and RECIST CSV.
    Weaklabel {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        lesions: PathBuf,
        #[command(flatten)]
        regions: RegionFlags,
        #[arg(long)]
        series: Option<String>,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the per-lesion summary JSON here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Score a prediction mask against the lesion class of a label volume.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Treat --pred as a label volume and score its lesion class.
        #[arg(long)]
        pred_labels: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        series: Option<String>,
    },
    /// Generate a synthetic phantom (built-in layout unless --spec is given).
    Phantom {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write slice_NNNN.png overlays for every labelled slice.
    Overlay {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Threshold baseline lesion prediction.
    Baseline {
        #[arg(long)]
        volume: PathBuf,
        #[command(flatten)]
        regions: RegionFlags,
        #[arg(long, short)]
        out: PathBuf,
    },
}

/// Stdout write that tolerates a closed pipe.
fn emit(text: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(args: Cli) -> Result<()> {
    let overrides = ConfigOverrides {
        window_center: args.window_center,
        window_width: args.window_width,
        connectivity: args.connectivity,
        workers: args.workers,
        seed: args.seed,
        min_overlap: args.min_overlap,
    };
    let cfg = PipelineConfig::resolve(args.config.as_deref(), &overrides)?;
    match args.command {
        Command::Weaklabel {
            volume,
            lesions,
            regions,
            series,
            out,
            summary,
        } => {
            let s = cli::cmd_weaklabel(
                &WeaklabelArgs {
                    volume,
                    lesions,
                    regions: regions.into(),
                    series,
                    out,
                    summary,
                },
                &cfg,
            )?;
            emit(serde_json::to_string_pretty(&s)?);
        }
        Command::Eval {
            gt,
            pred,
            pred_labels,
            out,
            series,
        } => {
            let report = cli::cmd_eval(
                &EvalArgs {
                    gt,
                    pred,
                    pred_labels,
                    out,
                    series,
                },
                &cfg,
            )?;
            emit(report);
        }
        Command::Phantom { spec, out } => {
            for p in cli::cmd_phantom(spec.as_deref(), &out, args.seed)? {
                emit(p.display());
            }
        }
        Command::Overlay { volume, labels, out } => {
            let written = cli::cmd_overlay(&volume, &labels, &out, &cfg.window)?;
            emit(format!("{} overlays written to {}", written.len(), out.display()));
        }
        Command::Baseline { volume, regions, out } => {
            let pred = cli::cmd_baseline(&volume, &regions.into(), &out)?;
            emit(format!("{} candidate voxels written to {}", pred.count(), out.display()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OSTEOFORGE_LOG", "warn")).init();
    let args = Cli::parse();
    match std::panic::catch_unwind(|| run(args)) {
        Ok(Ok(())) => ExitCode::from(cli::EXIT_OK as u8),
        Ok(Err(e)) => {
            eprintln!("{}", cli::error_json(&e));
            ExitCode::from(cli::exit_code(&e) as u8)
        }
        Err(_) => {
            eprintln!(r#"{{"error":"internal","message":"panic","exit_code":3}}"#);
            ExitCode::from(cli::EXIT_INTERNAL as u8)
        }
    }
}

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use vad_cli::{
    cmd_ablate, cmd_eval, cmd_pseudo_gt, cmd_synth, cmd_train, inventory_summary, Ablation,
    ExperimentManifest,
};
use vad_core::RunConfig;
use vad_teachers::{DepthSource, FlowSource, SegSource, TeacherSet};

#[derive(Parser)]
#[command(
    name = "mtvad",
    version,
    about = "Two-branch video anomaly detection experiments"
)]
struct Cli {
    /// Run configuration (JSON); overrides the manifest's configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overwrite a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded synthetic benchmark.
    Synth,
    /// Run the teachers and write their outputs into each video's pseudo_gt/.
    PseudoGt {
        /// Dataset root.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        seg: SegArg,
        #[arg(long, value_enum, default_value = "builtin")]
        flow: FlowArg,
        #[arg(long, value_enum, default_value = "oracle")]
        depth: DepthArg,
    },
    /// Train the manifest's selected branches.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Continue from the last completed epoch.
        #[arg(long)]
        resume: bool,
    },
    /// Score the test split and write the AUC report.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory written by `train`.
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Run an ablation sweep and write the ranked AUC table.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        /// Sweep to run; defaults to the manifest's.
        #[arg(long, value_enum)]
        sweep: Option<SweepArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SegArg {
    Oracle,
    Files,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlowArg {
    Oracle,
    Files,
    Builtin,
}

#[derive(Clone, Copy, ValueEnum)]
enum DepthArg {
    Oracle,
    Files,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    ProxyTasks,
    AttentionMechanisms,
    AttentionPosition,
}

impl Cli {
    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .context("--out is required for this command")
    }

    fn run_config(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => base,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn manifest(&self, path: &Path) -> Result<ExperimentManifest> {
        let mut m = ExperimentManifest::load(path)?;
        m.config = self.run_config(m.config)?;
        Ok(m)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth => {
            let cfg = cli.run_config(RunConfig::default())?;
            let inv = cmd_synth(cfg.seed, &cfg, cli.out()?, cli.force)?;
            println!("{}", inventory_summary(&inv));
        }
        Command::PseudoGt {
            data,
            seg,
            flow,
            depth,
        } => {
            let cfg = cli.run_config(RunConfig::default())?;
            let teachers = TeacherSet {
                seg: match seg {
                    SegArg::Oracle => SegSource::Oracle,
                    SegArg::Files => SegSource::PrecomputedFiles,
                },
                flow: match flow {
                    FlowArg::Oracle => FlowSource::Oracle,
                    FlowArg::Files => FlowSource::PrecomputedFiles,
                    FlowArg::Builtin => FlowSource::BuiltinEstimator,
                },
                depth: match depth {
                    DepthArg::Oracle => DepthSource::Oracle,
                    DepthArg::Files => DepthSource::PrecomputedFiles,
                },
            };
            let s = cmd_pseudo_gt(data, teachers, &cfg)?;
            println!(
                "wrote pseudo-GT for {} frames of {} videos",
                s.frames, s.videos
            );
        }
        Command::Train { manifest, resume } => {
            let m = cli.manifest(manifest)?;
            for r in cmd_train(&m, cli.out()?, *resume)? {
                let last = r.losses.last().copied().unwrap_or(f64::NAN);
                println!(
                    "{}: {} epochs, final loss {last:.6}, best epoch {}",
                    r.task.name(),
                    r.losses.len(),
                    r.best_epoch
                );
            }
        }
        Command::Eval {
            manifest,
            checkpoints,
        } => {
            let m = cli.manifest(manifest)?;
            let r = cmd_eval(&m, checkpoints, cli.out()?)?;
            let show = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{a:.4}"));
            println!("seg-only AUC     {}", show(r.auc.appearance_motion));
            println!("motion-only AUC  {}", show(r.auc.motion));
            println!("fused AUC        {}", show(r.auc.fused));
        }
        Command::Ablate { manifest, sweep } => {
            let mut m = cli.manifest(manifest)?;
            if let Some(s) = sweep {
                m.ablation = Some(match s {
                    SweepArg::ProxyTasks => Ablation::ProxyTasks,
                    SweepArg::AttentionMechanisms => Ablation::AttentionMechanisms,
                    SweepArg::AttentionPosition => Ablation::AttentionPosition,
                });
            }
            let r = cmd_ablate(&m, cli.out()?)?;
            print!("{}", r.table());
        }
    }
    Ok(())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use splat4d::pipeline::{self, ExperimentConfig, Maneuver, Mode};
use splat4d::{Error, Result};

#[derive(Parser)]
#[command(name = "splat4d", about = "Dynamic Gaussian splatting with cousin-trajectory training")]
struct Cli {
    /// Experiment configuration (JSON). Defaults to the echo in --out, if any.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed; every subsystem seed derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the world, original frames and LiDAR depth.
    Synth,
    /// Propose a novel trajectory and render its oracle frames.
    Propose {
        #[arg(long)]
        maneuver: Maneuver,
    },
    /// Train a baseline or cousin model.
    Train {
        #[arg(long)]
        mode: Mode,
        #[arg(long)]
        maneuver: Option<Maneuver>,
    },
    /// Score every trained model on the configured maneuvers.
    Eval,
    /// Render a checkpoint along a trajectory.
    Render {
        checkpoint: PathBuf,
        trajectory: PathBuf,
    },
    /// Run the whole pipeline.
    Experiment,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.out) {
        (Some(path), _) => ExperimentConfig::from_json(
            &std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        )?,
        (None, Some(out)) if out.join("config.json").exists() => pipeline::load_echo(out)?,
        _ => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg.resolved())
}

fn run(cli: &Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;
    let cfg = load_config(cli)?;
    let out: &Path = &cfg.output_dir;
    if !matches!(cli.command, Command::Render { .. }) {
        pipeline::write_echo(&cfg, out)?;
    }
    match &cli.command {
        Command::Synth => {
            let world = pipeline::cmd_synth(&cfg, out)?;
            println!("synthesized {} frames, {} agents", world.timestamps().len(), world.agents.len());
        }
        Command::Propose { maneuver } => {
            let traj = pipeline::cmd_propose(&cfg, out, maneuver)?;
            println!("proposed {maneuver}: {} frames", traj.len());
        }
        Command::Train { mode, maneuver } => {
            let (_, log) = pipeline::cmd_train(&cfg, out, *mode, maneuver.as_ref())?;
            if let (Some(a), Some(b)) = (log.rows.first(), log.rows.last()) {
                println!("loss {:.5} -> {:.5} over {} steps", a.total, b.total, log.rows.len());
            }
        }
        Command::Eval => print!("{}", pipeline::summary_table(&pipeline::cmd_eval(&cfg, out)?)),
        Command::Render {
            checkpoint,
            trajectory,
        } => {
            let cam = cfg.camera.camera()?;
            let n = pipeline::cmd_render(checkpoint, trajectory, &cam, out)?;
            println!("rendered {n} frames");
        }
        Command::Experiment => {
            print!("{}", pipeline::summary_table(&pipeline::cmd_experiment(&cfg, out)?))
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

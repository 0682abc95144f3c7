//! `e2epark` command line: expert data generation, training, open-loop
//! evaluation, closed-loop simulation and reporting.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use e2epark::harness::{cmd_eval, cmd_gen_data, cmd_report, cmd_sim, cmd_train, Mode, RunConfig};
use e2epark::Error;

#[derive(Parser)]
#[command(name = "e2epark", version, about = "End-to-end parking: data, training, evaluation and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations into <out>/data.
    GenData(Common),
    /// Train on <out>/data and write <out>/checkpoint.
    Train(Common),
    /// Open-loop metrics on held-out samples.
    Eval(Common),
    /// Closed-loop episodes with the trained model or the expert.
    Sim(Common),
    /// Collect run summaries under <out> into report.md.
    Report(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Model,
    Expert,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Episode count: generated episodes for gen-data, simulated ones for sim.
    #[arg(long)]
    episodes: Option<usize>,
    /// Trajectory source for eval and sim.
    #[arg(long, value_enum, default_value = "model")]
    mode: ModeArg,
}

fn resolve(c: &Common, episodes_for_sim: bool) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if let Some(n) = c.episodes {
        if episodes_for_sim {
            cfg.sim_episodes = n;
        } else {
            cfg.episodes = n;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn mode(m: ModeArg) -> Mode {
    match m {
        ModeArg::Model => Mode::Model,
        ModeArg::Expert => Mode::Expert,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let start = Instant::now();
    match cli.command {
        Command::GenData(c) => {
            let cfg = resolve(&c, false)?;
            let m = cmd_gen_data(&cfg)?;
            println!(
                "kept {} of {} episodes ({} samples, {:.1}% of chunks inside the BEV range) in {}",
                m.kept,
                m.requested,
                m.samples,
                100.0 * m.chunk_range_share,
                cfg.data_dir().display()
            );
        }
        Command::Train(c) => {
            let cfg = resolve(&c, false)?;
            let s = cmd_train(&cfg)?;
            println!(
                "{} steps: validation loss {:.4} -> {:.4} ({:.1}% lower); checkpoint in {}",
                s.steps,
                s.initial_validation_loss,
                s.final_validation_loss,
                100.0 * s.loss_reduction,
                cfg.checkpoint_dir().display()
            );
        }
        Command::Eval(c) => {
            let cfg = resolve(&c, false)?;
            let s = cmd_eval(&cfg, mode(c.mode))?;
            let fourier = s.metrics.fourier_diff.map_or_else(|| "n/a".into(), |f| format!("{f:.3}"));
            println!(
                "{} samples: L2 {:.3} m, Hausdorff {:.3} m, Fourier {fourier}",
                s.metrics.samples, s.metrics.l2, s.metrics.hausdorff
            );
        }
        Command::Sim(c) => {
            let cfg = resolve(&c, true)?;
            let s = cmd_sim(&cfg, mode(c.mode))?;
            let r = &s.overall;
            println!(
                "{} episodes: PSR {:.1}%, NSR {:.1}%, PVR {:.1}%, collisions {:.1}%, timeouts {:.1}%, APS {:.1}",
                r.episodes, r.psr, r.nsr, r.pvr, r.collision_rate, r.timeout_rate, r.aps
            );
        }
        Command::Report(c) => {
            let cfg = resolve(&c, false)?;
            print!("{}", cmd_report(&cfg)?);
        }
    }
    eprintln!("done in {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

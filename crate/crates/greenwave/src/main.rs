//! Command-line entry points: train a controller, evaluate a checkpoint,
//! run the fixed-time baseline, and build emission reports.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use greenwave::marl::HyperParams;
use greenwave::microsim::EmissionCoefficients;
use greenwave::network::{load_network, NetworkSpec};
use greenwave::report::{write_report, RunArtifacts};
use greenwave::trainer::{
    demand_schedule, mix_seed, run_baseline_episode, run_episode, train, Checkpoint, EpisodeRun,
    FixedTimeController, Mode, TrainConfig,
};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "greenwave",
    about = "Multi-agent actor-critic traffic signal control on a point-queue microsimulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train controllers on a network and write checkpoints plus a
    /// training curve.
    Train {
        /// Training config JSON (defaults apply to missing keys).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value = "out/train")]
        out: PathBuf,
        #[command(flatten)]
        emissions: EmissionArg,
    },
    /// Evaluate a checkpoint with greedy actions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out/eval")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        emissions: EmissionArg,
    },
    /// Run the fixed-time (round-robin) baseline controller.
    Baseline {
        #[arg(long)]
        network: PathBuf,
        /// Seconds each phase holds before rotating.
        #[arg(long, default_value_t = 20.0)]
        cycle: f64,
        #[arg(long, default_value_t = 1)]
        episodes: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out/baseline")]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        emissions: EmissionArg,
    },
    /// Compare a trained run against a baseline run.
    Report {
        /// Run directory holding trace.csv and ledger.json.
        #[arg(long)]
        trained: PathBuf,
        /// Run directory holding trace.csv and ledger.json.
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value = "out/report")]
        out: PathBuf,
        /// Also render SVG charts.
        #[arg(long)]
        svg: bool,
        #[arg(long, default_value_t = 3600.0)]
        episode_seconds: f64,
    },
}

#[derive(Args)]
struct EmissionArg {
    /// Emission coefficient JSON; built-in rates when omitted.
    #[arg(long)]
    emissions: Option<PathBuf>,
}

impl EmissionArg {
    fn load(&self) -> Result<EmissionCoefficients> {
        match &self.emissions {
            Some(path) => EmissionCoefficients::load(path)
                .with_context(|| format!("loading emissions from {}", path.display())),
            None => Ok(EmissionCoefficients::default()),
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(TrainConfig::default()),
    }
}

fn load_spec(path: &Path) -> Result<Arc<NetworkSpec>> {
    let spec = load_network(path).with_context(|| format!("loading network {}", path.display()))?;
    Ok(Arc::new(spec))
}

fn save_run(run: &EpisodeRun, dir: &Path) -> Result<()> {
    RunArtifacts {
        trace: run.trace.clone(),
        ledger: run.ledger.clone(),
    }
    .save(dir)?;
    Ok(())
}

fn episode_summary(tag: &str, idx: u32, run: &EpisodeRun, hp: &HyperParams) -> String {
    let denom = (hp.steps_per_episode() * run.log.steps.first().map_or(1, |s| s.queues.len())) as f64;
    format!(
        "{tag} episode {idx}: mean queue {:.3}, mean reward {:.4}, final running {}, inserted {}, exited {}, deferred {}",
        run.log.cumulative_queue as f64 / denom,
        run.log.cumulative_reward / denom,
        run.log.final_running,
        run.log.inserted,
        run.log.exited,
        run.log.deferred_insertions,
    )
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            network,
            out,
            emissions,
        } => {
            let config = load_config(&config)?;
            let spec = load_spec(&network)?;
            let coeffs = emissions.load()?;
            let summary = train(&config, &spec, &coeffs, &out)?;
            println!(
                "trained {} episodes ({} interactions); checkpoint: {}",
                summary.episodes,
                summary.steps,
                summary.checkpoint.display()
            );
            if let Some(last) = summary.curve.last() {
                println!(
                    "final episode: mean reward {:.4}, mean queue {:.3}",
                    last.mean_reward, last.mean_queue
                );
            }
            println!("training curve: {}", summary.curve_csv.display());
        }
        Command::Eval {
            checkpoint,
            network,
            episodes,
            seed,
            out,
            config,
            emissions,
        } => {
            let config = load_config(&config)?;
            let spec = load_spec(&network)?;
            let coeffs = emissions.load()?;
            let mut nets = Checkpoint::load(&checkpoint)?.into_nets(&spec)?;
            if episodes == 0 {
                bail!("need at least one episode");
            }
            for ep in 0..episodes {
                let ep_seed = mix_seed(seed, ep as u64);
                let schedule = demand_schedule(
                    &spec,
                    config.hp.n_vehicles,
                    config.hp.episode_seconds,
                    config.insertion_window_fraction,
                    ep_seed,
                );
                let run = run_episode(
                    &spec,
                    &schedule,
                    &mut nets,
                    &config.hp,
                    &config.sim,
                    &coeffs,
                    Mode::Eval,
                    ep_seed,
                )?;
                let dir = out.join(format!("ep{ep}"));
                save_run(&run, &dir)?;
                println!("{}", episode_summary("eval", ep, &run, &config.hp));
                println!("artifacts: {}", dir.display());
            }
        }
        Command::Baseline {
            network,
            cycle,
            episodes,
            seed,
            out,
            config,
            emissions,
        } => {
            let config = load_config(&config)?;
            let spec = load_spec(&network)?;
            let coeffs = emissions.load()?;
            if cycle <= config.sim.yellow_time {
                bail!(
                    "cycle {} must exceed the yellow time {}",
                    cycle,
                    config.sim.yellow_time
                );
            }
            let controller = FixedTimeController::new(cycle, config.sim.yellow_time);
            for ep in 0..episodes {
                let ep_seed = mix_seed(seed, ep as u64);
                let schedule = demand_schedule(
                    &spec,
                    config.hp.n_vehicles,
                    config.hp.episode_seconds,
                    config.insertion_window_fraction,
                    ep_seed,
                );
                let run = run_baseline_episode(
                    &spec,
                    &schedule,
                    controller,
                    &config.hp,
                    &config.sim,
                    &coeffs,
                )?;
                let dir = out.join(format!("ep{ep}"));
                save_run(&run, &dir)?;
                println!("{}", episode_summary("baseline", ep, &run, &config.hp));
                println!("artifacts: {}", dir.display());
            }
        }
        Command::Report {
            trained,
            baseline,
            network,
            out,
            svg,
            episode_seconds,
        } => {
            let spec = load_spec(&network)?;
            let trained = RunArtifacts::load(&trained)
                .with_context(|| format!("loading trained run from {}", trained.display()))?;
            let baseline = RunArtifacts::load(&baseline)
                .with_context(|| format!("loading baseline run from {}", baseline.display()))?;
            let paths = write_report(&out, &trained, &baseline, &spec, episode_seconds, svg)?;
            println!("report written to {}", out.display());
            println!("  {}", paths.running_curve_csv.display());
            for p in &paths.interval_csvs {
                println!("  {}", p.display());
            }
            println!("  {}", paths.comparison_csv.display());
            let table = std::fs::read_to_string(&paths.comparison_txt)?;
            println!("{table}");
        }
    }
    Ok(())
}

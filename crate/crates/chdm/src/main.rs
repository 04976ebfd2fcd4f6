use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chdm::cache;
use chdm::config::FileConfig;
use chdm::evaluate::evaluate;
use chdm::output::{episode_csv, snapshot_svg, summarize};
use chdm::sim::{EgoController, OnInfeasible, SimSettings, Simulator};
use chdm_core::traffic::make_scenario;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chdm", version, about = "Level-k interaction-aware planning for driving scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Controller {
    ChanceConstrained,
    Maximin,
}

#[derive(Subcommand)]
enum Command {
    /// Build the opponent model around the initial state and cache it.
    Build {
        #[arg(long)]
        config: PathBuf,
        /// Cache file to write.
        #[arg(long, default_value = "hierarchy.cache")]
        output: PathBuf,
    },
    /// Run one closed-loop episode and log it as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Level of the simulated human driver.
        #[arg(long)]
        human_level: usize,
        /// Master seed (defaults to the config's `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Step cap (defaults to the config's `max_steps`).
        #[arg(long)]
        steps: Option<usize>,
        /// Directory for one SVG snapshot per step.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long, value_enum)]
        on_infeasible: Option<OnInfeasible>,
        /// Episode CSV.
        #[arg(long, default_value = "episode.csv")]
        output: PathBuf,
        /// Cache produced by `chdm build`; used when it matches the config.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "chance-constrained")]
        controller: Controller,
    },
    /// Run a seed batch per human level and write a JSON report.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Number of seeds.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        seed_start: u64,
        /// Human levels to test (default: the config's level set).
        #[arg(long)]
        human_level: Vec<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum)]
        on_infeasible: Option<OnInfeasible>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, default_value = "summary.json")]
        output: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "chance-constrained")]
        controller: Controller,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<chdm::Error>().map_or(1, chdm::exit_code);
            ExitCode::from(code)
        }
    }
}

fn simulator(
    config: &FileConfig,
    cache_path: Option<&Path>,
    steps: Option<usize>,
    on_infeasible: Option<OnInfeasible>,
    controller: Controller,
) -> anyhow::Result<Simulator> {
    let scenario = make_scenario(config.scenario_config()?).map_err(chdm::Error::from)?;
    let mut settings: SimSettings = config.sim_settings()?;
    if let Some(n) = steps {
        settings.max_steps = n;
    }
    if let Some(mode) = on_infeasible {
        settings.on_infeasible = mode;
    }
    settings.controller = match controller {
        Controller::ChanceConstrained => EgoController::ChanceConstrained,
        Controller::Maximin => EgoController::Maximin,
    };
    if let Some(path) = cache_path {
        let bytes = cache::read(path).with_context(|| format!("reading {}", path.display()))?;
        match cache::decode(&bytes, &scenario, &config.digest()) {
            Ok(model) => return Ok(Simulator::with_model(scenario, model, settings)),
            Err(e) => eprintln!("warning: ignoring {}: {e}; building on demand", path.display()),
        }
    }
    Ok(Simulator::new(scenario, settings))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Build { config, output } => {
            let cfg = FileConfig::load(&config)?;
            let mut sim = simulator(&cfg, None, None, None, Controller::ChanceConstrained)?;
            sim.build_initial(cfg.cache_depth)?;
            let bytes = cache::encode(sim.model(), &cfg.digest());
            cache::write(&output, &bytes).with_context(|| format!("writing {}", output.display()))?;
            println!("{}  {}", cache::content_hash(&bytes), output.display());
        }
        Command::Simulate {
            config,
            human_level,
            seed,
            steps,
            snapshots,
            on_infeasible,
            output,
            cache,
            controller,
        } => {
            let cfg = FileConfig::load(&config)?;
            let mut sim = simulator(&cfg, cache.as_deref(), steps, on_infeasible, controller)?;
            let log = sim.run_episode(human_level, seed.unwrap_or(cfg.seed))?;
            for r in log.records.iter().filter(|r| r.fallback) {
                eprintln!("warning: t = {}: chance constraint infeasible, executed the fallback profile", r.t - 1);
            }
            std::fs::write(&output, episode_csv(sim.scenario(), &log))
                .with_context(|| format!("writing {}", output.display()))?;
            if let Some(dir) = snapshots {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                for r in &log.records {
                    let path = dir.join(format!("step_{:03}.svg", r.t));
                    std::fs::write(&path, snapshot_svg(sim.scenario(), r, &log.levels))
                        .with_context(|| format!("writing {}", path.display()))?;
                }
            }
            println!("{}", serde_json::to_string_pretty(&summarize(&log))?);
        }
        Command::Evaluate {
            config,
            seeds,
            seed_start,
            human_level,
            steps,
            on_infeasible,
            jobs,
            output,
            cache,
            controller,
        } => {
            let cfg = FileConfig::load(&config)?;
            let sim = simulator(&cfg, cache.as_deref(), steps, on_infeasible, controller)?;
            let levels = if human_level.is_empty() { cfg.levels.clone() } else { human_level };
            if let Some(&bad) = levels.iter().find(|&&k| k > cfg.k_max) {
                return Err(chdm::Error::Config(format!("human level {bad} exceeds k_max = {}", cfg.k_max)).into());
            }
            let seed_list: Vec<u64> = (seed_start..seed_start + seeds).collect();
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let report = evaluate(&sim, &levels, &seed_list, jobs);
            std::fs::write(&output, serde_json::to_string_pretty(&report)? + "\n")
                .with_context(|| format!("writing {}", output.display()))?;
            for l in &report.levels {
                println!(
                    "level {}: {} episodes, {} failed, window violation rate {:.4}, mean posterior on true level {:.3}, outcomes {:?}",
                    l.human_level,
                    l.episodes,
                    l.failed.len(),
                    l.window_violation_rate,
                    l.mean_posterior_on_true_level,
                    l.outcomes
                );
            }
            println!("overall window violation rate {:.4}", report.window_violation_rate);
        }
    }
    Ok(())
}

//! `load`: run synthetic experiments, replay logged data, or inspect GIC rank scores.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use load_core::experiment::{
    emit_results, fit_replay_environment, format_float, parse_config, parse_replay_config, read_interactions_csv,
    read_items_csv, replay_from_dataset, run_experiment, simulate_logged_data, OutputFormat,
};
use load_core::likelihood::{ObservationSet, SolverConfig};
use load_core::lowrank::{default_rank_grid, select_rank_gic, FgdConfig, GicScore};
use load_core::sim::Aggregate;
use load_core::{Error, Result};

#[derive(Parser)]
#[command(name = "load", version, about = "Low-rank dual-context assortment bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic experiment and write regret tables.
    Run(CommonArgs),
    /// Fit a truth on logged interactions and simulate policies against it.
    Replay(CommonArgs),
    /// Print GIC scores per candidate rank without running policies.
    Rank(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `output.dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// csv or json; overrides the config's `output.format`.
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Worker threads for replications (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonArgs {
    fn output_dir(&self, configured: Option<&PathBuf>) -> PathBuf {
        self.output
            .clone()
            .or_else(|| configured.cloned())
            .unwrap_or_else(|| PathBuf::from("results"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Run(a) | Command::Replay(a) | Command::Rank(a) => a,
    };
    let result = with_threads(args.threads, || match &cli.command {
        Command::Run(a) => run(a),
        Command::Replay(a) => replay(a),
        Command::Rank(a) => rank(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn with_threads<F: FnOnce() -> Result<()> + Send>(threads: Option<usize>, f: F) -> Result<()> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn run(args: &CommonArgs) -> Result<()> {
    let mut config = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let aggregate = run_experiment(&config)?;
    let format = args.format.unwrap_or(config.output.format);
    write_outputs(&aggregate, format, &args.output_dir(config.output.dir.as_ref()))
}

fn replay(args: &CommonArgs) -> Result<()> {
    let mut config = parse_replay_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let outcome = replay_from_dataset(&config)?;
    println!("selected rank: {}", outcome.rank);
    let format = args.format.unwrap_or(config.output.format);
    write_outputs(&outcome.aggregate, format, &args.output_dir(config.output.dir.as_ref()))
}

fn rank(args: &CommonArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let (selected, scores) = if value.get("items_csv").is_some() {
        let config = parse_replay_config(&args.config)?;
        let items = read_items_csv(&config.items_csv)?;
        let records = read_interactions_csv(&config.interactions_csv, &items)?;
        let (_, r, scores) = fit_replay_environment(&items, &records, &config)?;
        (r, scores)
    } else {
        // Synthetic: GIC on `horizon` uniformly explored interactions.
        let config = parse_config(&args.config)?;
        let seed = args.seed.unwrap_or(config.seed);
        let env = config.experiment().environment.build(seed)?;
        let records = simulate_logged_data(&env, config.horizon, seed)?;
        let data = ObservationSet::new(env.catalog(), &records)?;
        let grid = default_rank_grid(config.d1, config.d2);
        let sel = select_rank_gic(&data, &grid, &FgdConfig::default(), &SolverConfig::default())?;
        (sel.rank, sel.scores)
    };
    let table = gic_table(&scores);
    print!("{table}");
    println!("selected rank: {selected}");
    if let Some(dir) = &args.output {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("gic.csv"), table)?;
    }
    Ok(())
}

fn gic_table(scores: &[GicScore]) -> String {
    let mut out = String::from("rank,nll,penalty,gic\n");
    for s in scores {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.rank,
            format_float(s.nll),
            format_float(s.penalty),
            format_float(s.gic)
        ));
    }
    out
}

fn write_outputs(aggregate: &Aggregate, format: OutputFormat, dir: &Path) -> Result<()> {
    let files = emit_results(aggregate, format, dir)?;
    let last = aggregate.checkpoints.len() - 1;
    let t = aggregate.checkpoints[last];
    for p in &aggregate.policies {
        println!(
            "{:<24} t={t:<6} regret {:.3} ± {:.3}",
            p.policy, p.mean[last], p.ci_halfwidth[last]
        );
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

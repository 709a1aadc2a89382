use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use forage_core::analysis::{conditional_map, foraging_map, foraging_profile, map_file_stem, write_map};
use forage_core::{FitnessVariant, Genome, WorldConfig};
use forage_orchestrator::stage::StageOverrides;
use forage_orchestrator::{derive_next_stage, run_stage, StageConfig, Store};

#[derive(Parser)]
#[command(name = "forage", version, about = "Evolve and analyse legged virtual foragers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every repeat of a stage described by a config file.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        repeats: Option<usize>,
        /// Base rng seed; repeat k uses seed + k.
        #[arg(long)]
        seed: Option<u64>,
        /// Store directory.
        #[arg(long, default_value = "store")]
        out: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Compute a foraging map (or a conditional one with --cond).
    Map {
        #[arg(long)]
        organism: PathBuf,
        #[arg(long, default_value_t = 11)]
        res: usize,
        /// First target X,Y for a conditional map.
        #[arg(long, value_parser = parse_xy)]
        cond: Option<[f64; 2]>,
        #[arg(long)]
        out: PathBuf,
        /// Seconds per target.
        #[arg(long, default_value_t = 60.0)]
        timer: f64,
    },
    /// Success rate over a sequence of uniformly placed targets.
    Profile {
        #[arg(long)]
        organism: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 10)]
        seq: usize,
        #[arg(long, default_value_t = 60.0)]
        timer: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stage and lineage management.
    Stage {
        #[command(subcommand)]
        command: StageCommand,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "store")]
        store: PathBuf,
    },
}

#[derive(Subcommand)]
enum StageCommand {
    /// Register the next stage on the ladder, seeded by the key organism of --from.
    Next(NextArgs),
    /// Mark a repeat's best organism as the stage's key organism.
    Key {
        #[arg(long)]
        stage: String,
        #[arg(long)]
        organism: String,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long, default_value = "store")]
        store: PathBuf,
    },
    /// Run (or resume) a registered stage.
    Run {
        #[arg(long)]
        stage: String,
        #[arg(long, default_value = "store")]
        store: PathBuf,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// List registered stages.
    List {
        #[arg(long, default_value = "store")]
        store: PathBuf,
    },
}

#[derive(Args)]
struct NextArgs {
    #[arg(long)]
    from: String,
    #[arg(long, conflicts_with = "uniform")]
    noise: Option<f64>,
    #[arg(long)]
    uniform: bool,
    #[arg(long)]
    variant: Option<FitnessVariant>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    generations: Option<u64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    timer: Option<f64>,
    #[arg(long, default_value = "store")]
    store: PathBuf,
}

fn parse_xy(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts[..] {
        [x, y] => Ok([
            x.trim().parse().map_err(|e| format!("{e}"))?,
            y.trim().parse().map_err(|e| format!("{e}"))?,
        ]),
        _ => Err(format!("expected X,Y, got {s:?}")),
    }
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Box<dyn std::error::Error>> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_genome(path: &PathBuf) -> Result<Genome, Box<dyn std::error::Error>> {
    Ok(Genome::load(path)?)
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Evolve {
            config,
            repeats,
            seed,
            out,
            parallelism,
        } => {
            let mut cfg: StageConfig = serde_json::from_str(&std::fs::read_to_string(config)?)?;
            if let Some(r) = repeats {
                cfg.repeats = r;
            }
            if let Some(s) = seed {
                cfg.rng_base_seed = s;
            }
            let store = Store::open(out)?;
            store.put_stage(&cfg)?;
            let result = run_stage(&store, &cfg.stage_id, parallelism.unwrap_or_else(default_parallelism))?;
            print_json(&result)
        }
        Command::Map {
            organism,
            res,
            cond,
            out,
            timer,
        } => {
            let genome = load_genome(&organism)?;
            let body = genome.develop()?;
            let world = WorldConfig::default();
            let map = match cond {
                Some(first) => conditional_map(&body, first, res, timer, &world)?,
                None => foraging_map(&body, res, timer, &world),
            };
            let files = write_map(&map, &out, &map_file_stem(&genome.content_id(), res, cond))?;
            for d in &map.diagnostics {
                eprintln!("warning: {d}");
            }
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
        Command::Profile {
            organism,
            trials,
            seq,
            timer,
            seed,
        } => {
            let body = load_genome(&organism)?.develop()?;
            print_json(&foraging_profile(
                &body,
                trials.max(1),
                seq.max(1),
                timer,
                seed,
                &WorldConfig::default(),
            ))
        }
        Command::Stage { command } => match command {
            StageCommand::Next(a) => {
                let store = Store::open(&a.store)?;
                let overrides = StageOverrides {
                    stage_id: a.id,
                    noise: a.noise,
                    uniform: a.uniform.then_some(true),
                    variant: a.variant,
                    repeats: a.repeats,
                    generations: a.generations,
                    population: a.population,
                    timer: a.timer,
                    ..StageOverrides::default()
                };
                let derived = derive_next_stage(&store, &a.from, &overrides)?;
                for w in &derived.warnings {
                    eprintln!("warning: {w}");
                }
                print_json(&derived.config)
            }
            StageCommand::Key {
                stage,
                organism,
                note,
                store,
            } => print_json(&Store::open(store)?.mark_key_organism(&stage, &organism, &note)?),
            StageCommand::Run {
                stage,
                store,
                parallelism,
            } => {
                let store = Store::open(store)?;
                print_json(&run_stage(
                    &store,
                    &stage,
                    parallelism.unwrap_or_else(default_parallelism),
                )?)
            }
            StageCommand::List { store } => {
                for id in Store::open(store)?.stage_ids()? {
                    println!("{id}");
                }
                Ok(())
            }
        },
        Command::Serve { port, store } => {
            let store = Store::open(store)?;
            let rt = tokio::runtime::Runtime::new()?;
            eprintln!("listening on port {port}");
            rt.block_on(forage_orchestrator::api::serve(port, store))?;
            Ok(())
        }
    }
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

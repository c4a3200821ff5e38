//! `fireline`: generate instance pools, simulate games, run agency sweeps and
//! bandit experiments, and serve the game over HTTP.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fireline_cli::service::{self, ServiceConfig};
use fireline_core::bandit::{lipschitz_bai, regret_experiment, BanditConfig, TentOracle};
use fireline_core::grid::GameInstance;
use fireline_core::harness::sweep::{evaluate, Components, SweepPoint};
use fireline_core::harness::{
    self, ccdf_export, make_instance_pool, sweep_epsilon, EpisodeLog, EpisodeSeeds, GameOracle,
    PlayMode,
};
use fireline_core::support::{EpsilonGrid, SupportConfig};
use fireline_core::{rng, Heuristic, HumanModel, DEFAULT_SIGMA};

#[derive(Parser)]
#[command(
    name = "fireline",
    version,
    about = "Action-set decision support on a wildfire gridworld"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a difficulty-balanced instance pool as a JSON array.
    GenPool {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        warmup: u32,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play one simulated game and write its episode log (JSON lines).
    Play {
        #[command(flatten)]
        players: Players,
        #[arg(long)]
        pool: PathBuf,
        /// Instance id; the first pool entry when omitted.
        #[arg(long)]
        instance: Option<String>,
        #[arg(long, value_enum, default_value_t = Mode::Assisted)]
        mode: Mode,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a simulated game from its log and check the result is identical.
    Replay {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Mean payoff and return per agency value (CSV).
    Sweep {
        #[command(flatten)]
        players: Players,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value = "study")]
        epsilon_grid: EpsilonGrid,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also report unassisted and autonomous play.
        #[arg(long)]
        baselines: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical CCDF of discounted returns for one configuration (CSV).
    Ccdf {
        #[command(flatten)]
        players: Players,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Assisted)]
        mode: Mode,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zooming search for the best agency value, pulling simulated games.
    Bandit {
        #[command(flatten)]
        players: Players,
        #[arg(long)]
        pool: PathBuf,
        /// Exploration budget (number of games).
        #[arg(long, default_value_t = 2_000)]
        n: u64,
        #[arg(long, default_value_t = 150.0)]
        lipschitz: f64,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-iteration trace (JSON lines).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Simple regret of zooming vs uniform discretization on a noisy tent payoff (CSV).
    Regret {
        #[arg(long, value_delimiter = ',', default_value = "1000,3000,10000,30000")]
        budgets: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 1.0)]
        lipschitz: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 100)]
        levels: usize,
        #[arg(long, default_value_t = 0.3)]
        peak: f64,
        #[arg(long, default_value_t = 0.8)]
        peak_value: f64,
        #[arg(long, default_value_t = 0.5)]
        slope: f64,
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the game over HTTP.
    Serve(ServeArgs),
}

#[derive(Args)]
struct Players {
    /// Agent heuristic: random | greedy:R | softmax:R[:T].
    #[arg(long, default_value = "greedy:7")]
    agent: Heuristic,
    /// Simulated human heuristic, same syntax as --agent.
    #[arg(long, default_value = "softmax:1:1")]
    human: HumanModel,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
}

impl Players {
    fn components(&self) -> Result<Components> {
        Ok(Components::new(self.agent, self.human.clone(), self.sigma)?)
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Pool file; a 25-instance pool from seed 0 is generated when omitted.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Overridden by FIRELINE_DATA_DIR.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "study")]
    epsilon_grid: EpsilonGrid,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value = "greedy:7")]
    agent: Heuristic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Assisted,
    Unassisted,
    Autonomous,
}

impl Mode {
    fn play_mode(self, epsilon: f64, sigma: f64) -> Result<PlayMode> {
        Ok(match self {
            Mode::Assisted => PlayMode::Assisted(SupportConfig::new(epsilon, sigma)?),
            Mode::Unassisted => PlayMode::Unassisted,
            Mode::Autonomous => PlayMode::Autonomous,
        })
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    match Cli::parse().command {
        Command::GenPool {
            count,
            seed,
            warmup,
            out,
        } => {
            let pool = make_instance_pool(count, seed, warmup)?;
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &pool)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Play {
            players,
            pool,
            instance,
            mode,
            epsilon,
            seed,
            out,
        } => {
            let pool = load_pool(&pool)?;
            let inst = match &instance {
                Some(id) => pool
                    .iter()
                    .find(|i| &i.id == id)
                    .with_context(|| format!("no instance {id} in pool"))?,
                None => &pool[0],
            };
            let mode = mode.play_mode(epsilon, players.sigma)?;
            let log = harness::run_mode(
                inst,
                mode,
                players.agent,
                &players.human,
                EpisodeSeeds::from_master(seed),
            )?;
            let mut w = output(out.as_deref())?;
            log.write_jsonl(&mut w)?;
            w.flush()?;
            tracing::info!(
                score = log.final_score,
                steps = log.steps.len(),
                "game finished"
            );
        }
        Command::Replay { pool, log } => {
            let pool = load_pool(&pool)?;
            let text = std::fs::read_to_string(&log)
                .with_context(|| format!("reading {}", log.display()))?;
            let recorded = EpisodeLog::read_jsonl(text.as_bytes())?;
            let inst = pool
                .iter()
                .find(|i| i.id == recorded.instance_id)
                .with_context(|| format!("no instance {} in pool", recorded.instance_id))?;
            let again =
                if recorded.human.parse::<HumanModel>().is_ok() || recorded.mode == "autonomous" {
                    harness::replay(inst, &recorded)?
                } else {
                    harness::replay_actions(inst, &recorded, &recorded.actions())?
                };
            if again.to_jsonl() != text {
                bail!("replay differs from {}", log.display());
            }
            println!(
                "replay identical: {} steps, score {}",
                again.steps.len(),
                again.final_score
            );
        }
        Command::Sweep {
            players,
            pool,
            epsilon_grid,
            episodes,
            seed,
            baselines,
            out,
        } => {
            let pool = load_pool(&pool)?;
            let c = players.components()?;
            let mut points = sweep_epsilon(&pool, &epsilon_grid, episodes, &c, seed)?.points;
            if baselines {
                for mode in [PlayMode::Unassisted, PlayMode::Autonomous] {
                    points.push(SweepPoint::from_summaries(
                        mode,
                        &evaluate(&pool, mode, episodes, &c, seed)?,
                    )?);
                }
            }
            write_csv(out.as_deref(), &points)?;
        }
        Command::Ccdf {
            players,
            pool,
            mode,
            epsilon,
            episodes,
            seed,
            out,
        } => {
            let pool = load_pool(&pool)?;
            let runs = evaluate(
                &pool,
                mode.play_mode(epsilon, players.sigma)?,
                episodes,
                &players.components()?,
                seed,
            )?;
            let returns: Vec<f64> = runs.iter().map(|r| r.discounted_return).collect();
            let rows: Vec<CcdfRow> = ccdf_export(&returns)?
                .into_iter()
                .map(|(value, fraction)| CcdfRow { value, fraction })
                .collect();
            write_csv(out.as_deref(), &rows)?;
        }
        Command::Bandit {
            players,
            pool,
            n,
            lipschitz,
            beta,
            seed,
            trace,
        } => {
            let oracle = GameOracle::new(load_pool(&pool)?, players.components()?)?;
            let cfg = BanditConfig::new(n, lipschitz, beta)?;
            let (eps, tr) = lipschitz_bai(&oracle, &cfg, &mut rng::stream(seed))?;
            if let Some(path) = trace {
                let mut w = output(Some(&path))?;
                tr.write_jsonl(&mut w)?;
                w.flush()?;
            }
            println!(
                "{}",
                serde_json::json!({ "eps_opt": eps, "iterations": tr.iterations.len(), "pulls": tr.t })
            );
        }
        Command::Regret {
            budgets,
            seeds,
            lipschitz,
            beta,
            levels,
            peak,
            peak_value,
            slope,
            noise,
            out,
        } => {
            let oracle = TentOracle::new(peak, peak_value, slope, noise)?;
            let seeds: Vec<u64> = (0..seeds).collect();
            let rows = regret_experiment(&oracle, &budgets, &seeds, lipschitz, beta, levels)?;
            write_csv(out.as_deref(), &rows)?;
        }
        Command::Serve(args) => serve(args)?,
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct CcdfRow {
    value: f64,
    fraction: f64,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_csv<T: serde::Serialize>(path: Option<&Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn load_pool(path: &Path) -> Result<Vec<GameInstance>> {
    let file = File::open(path).with_context(|| format!("opening pool {}", path.display()))?;
    let pool: Vec<GameInstance> = serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing pool {}", path.display()))?;
    if pool.is_empty() {
        bail!("pool {} is empty", path.display());
    }
    Ok(pool)
}

fn serve(args: ServeArgs) -> Result<()> {
    SupportConfig::new(0.0, args.sigma)?;
    args.agent.validate()?;
    let pool = match &args.pool {
        Some(p) => load_pool(p)?,
        None => {
            tracing::info!("no --pool given, generating 25 instances from seed 0");
            make_instance_pool(25, 0, 3)?
        }
    };
    let data_dir = service::resolve_data_dir(
        &args.data_dir,
        std::env::var(service::DATA_DIR_ENV).ok().as_deref(),
    );
    let state = service::AppState::new(ServiceConfig {
        pool,
        data_dir: data_dir.clone(),
        epsilon_grid: args.epsilon_grid,
        sigma: args.sigma,
        agent: args.agent,
    })
    .with_context(|| format!("preparing data dir {}", data_dir.display()))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port)).await?;
        tracing::info!(addr = %listener.local_addr()?, data_dir = %data_dir.display(), "serving");
        axum::serve(listener, service::router(state)).await?;
        Ok(())
    })
}

//! The `hcart` command line: emulator server, trainer, evaluator and
//! baseline search.

pub mod config;
pub mod wiring;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::ffi::OsString;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hybrid_cartpole::agent::{
    exploration_rng, load_brain, median_steps, random_search_baseline, run_episode,
    run_policy_episode, train, AgentError, Brain, EpisodeMode, LinearPolicy, TrainOptions,
};
use hybrid_cartpole::protocol::serve;

use config::RunConfig;
use wiring::{new_session, serve_tcp, Link, Wiring};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, settings, or input files. Exit status 2.
    Input(String),
    /// Anything that went wrong while running. Exit status 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "hcart", version, about = "Analog cart-pole emulator and Q-learning agent")]
pub struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve the emulated analog computer over the Hybrid Controller protocol.
    Emulate(EmulateArgs),
    /// Train a Q-learning agent and write metrics and brain snapshots.
    Train(TrainArgs),
    /// Run exploit-only episodes with a trained brain or a linear policy.
    Run(RunArgs),
    /// Random search over linear bang-bang policies.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct Common {
    /// Settings file with one `key = value` per line.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one setting; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Advance the machine only on request instead of with the wall clock.
    #[arg(long)]
    virtual_time: bool,
    /// Speak only the original command set.
    #[arg(long)]
    strict: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for pair in &self.set {
            cfg.set_pair(pair)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.virtual_time {
            cfg.virtual_time = true;
        }
        if self.strict {
            cfg.dialect = hybrid_cartpole::protocol::Dialect::Strict;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct Connection {
    /// Use an emulator already listening at this address.
    #[arg(long, value_name = "ADDR", conflicts_with = "in_process")]
    connect: Option<String>,
    /// Drive a private emulator directly instead of over a socket.
    #[arg(long)]
    in_process: bool,
}

impl Connection {
    fn wiring(&self) -> Wiring {
        match (&self.connect, self.in_process) {
            (Some(addr), _) => Wiring::Connect(addr.clone()),
            (None, true) => Wiring::InProcess,
            (None, false) => Wiring::Spawn,
        }
    }
}

#[derive(Args)]
struct EmulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, env = "HCART_LISTEN", default_value = "127.0.0.1:5555", conflicts_with = "stdio")]
    listen: String,
    /// Serve a single session on stdin/stdout.
    #[arg(long)]
    stdio: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    connection: Connection,
    #[arg(long, default_value_t = 500)]
    episodes: u64,
    #[arg(long, default_value = "brain.json")]
    brain: PathBuf,
    #[arg(long, default_value = "metrics.csv")]
    metrics: PathBuf,
    /// Snapshot the brain every this many episodes.
    #[arg(long)]
    probe: Option<u64>,
    /// Continue training the brain stored at `--brain`.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    connection: Connection,
    #[arg(long, required_unless_present = "theta", conflicts_with = "theta")]
    brain: Option<PathBuf>,
    /// Run a linear policy saved by `baseline --save-theta` instead of a brain.
    #[arg(long, value_name = "FILE")]
    theta: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    episodes: u64,
    /// Shove the cart: `<magnitude>:<ms>@<seconds into the episode>`.
    #[arg(long, value_name = "MAG:MS@S")]
    disturb: Vec<Disturb>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    connection: Connection,
    #[arg(long, default_value_t = 2000)]
    tries: u64,
    /// Write the best policy to this file.
    #[arg(long, value_name = "FILE")]
    save_theta: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Disturb {
    magnitude: f64,
    ms: u32,
    at: f64,
}

impl FromStr for Disturb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("expected MAG:MS@S, got {s:?}");
        let (mag, rest) = s.split_once(':').ok_or_else(bad)?;
        let (ms, at) = rest.split_once('@').ok_or_else(bad)?;
        let d = Disturb {
            magnitude: mag.trim().parse().map_err(|_| bad())?,
            ms: ms.trim().parse().map_err(|_| bad())?,
            at: at.trim().parse().map_err(|_| bad())?,
        };
        if !d.magnitude.is_finite() || !d.at.is_finite() || d.at < 0.0 {
            return Err(bad());
        }
        Ok(d)
    }
}

impl Disturb {
    /// Step before which the shove is applied: the first step starting at or
    /// after `at`, with steps `impulse_ms` apart.
    fn step(&self, impulse_ms: u32) -> u64 {
        (self.at * 1000.0 / f64::from(impulse_ms) - 1e-9).ceil().max(0.0) as u64
    }
}

fn emulate(args: EmulateArgs) -> Result<(), CliError> {
    let cfg = args.common.resolve()?;
    let mut session = new_session(&cfg)?;
    if args.stdio {
        let stdin = io::stdin();
        let mut reader = stdin.lock();
        let mut writer = io::stdout().lock();
        serve(&mut reader, &mut writer, &mut session)?;
        return Ok(());
    }
    let listener = TcpListener::bind(&args.listen)
        .map_err(|e| CliError::Runtime(format!("cannot listen on {}: {e}", args.listen)))?;
    println!("listening on {}", listener.local_addr()?);
    io::stdout().flush()?;
    serve_tcp(listener, session)?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = args.common.resolve()?;
    if let Some(probe) = args.probe {
        cfg.hyper.probe = probe;
    }
    if args.episodes == 0 {
        return Err(CliError::Input("--episodes must be >= 1".into()));
    }
    let hyper = cfg.hyperparams()?;
    let mut brain = if args.resume {
        load_brain(&args.brain)
            .map_err(|e| CliError::Input(format!("{}: {e}", args.brain.display())))?
    } else {
        Brain::new(hyper, cfg.seed)?
    };
    let bounds = cfg.emulator_config()?.plant;
    let mut rng = exploration_rng(cfg.seed);
    let file = File::create(&args.metrics)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.metrics.display())))?;
    let mut metrics = BufWriter::new(file);
    let mut link = Link::open(&cfg, &args.connection.wiring())?;
    let options = TrainOptions { brain_path: Some(&args.brain), metrics: Some(&mut metrics) };
    let result = train(link.client(), &mut brain, args.episodes, &mut rng, &bounds, options, |_| {});
    metrics.flush()?;
    let log = result?;
    link.close()?;
    let tail = &log[log.len().saturating_sub(50)..];
    println!(
        "trained {} episodes; median steps over the last {}: {}",
        log.len(),
        tail.len(),
        median_steps(tail)
    );
    println!("brain written to {}", args.brain.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let cfg = args.common.resolve()?;
    let bounds = cfg.emulator_config()?.plant;
    if let Some(path) = &args.theta {
        if !args.disturb.is_empty() {
            return Err(CliError::Input("--disturb needs --brain".into()));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let policy = LinearPolicy::parse(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let hyper = cfg.hyperparams()?;
        let mut link = Link::open(&cfg, &args.connection.wiring())?;
        for i in 0..args.episodes {
            let steps =
                run_policy_episode(link.client(), &policy, hyper.impulse_ms, hyper.max_steps, &bounds)?;
            println!("episode {i} steps {steps}");
        }
        return link.close();
    }
    let path = args.brain.as_ref().expect("clap requires --brain or --theta");
    let mut brain =
        load_brain(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let impulse_ms = brain.hyper().impulse_ms;
    if !args.disturb.is_empty() && cfg.dialect != hybrid_cartpole::protocol::Dialect::Extension {
        return Err(CliError::Input("--disturb needs the extension dialect".into()));
    }
    let mut rng = exploration_rng(cfg.seed);
    let mut link = Link::open(&cfg, &args.connection.wiring())?;
    for i in 0..args.episodes {
        let mut shoves = Vec::new();
        let out = run_episode(link.client(), &mut brain, EpisodeMode::Exploit, 0.0, &mut rng, &bounds, |k, l| {
            for d in args.disturb.iter().filter(|d| d.step(impulse_ms) == k) {
                l.disturb(d.magnitude, d.ms)?;
                shoves.push((k, *d));
            }
            Ok(())
        })?;
        for (k, d) in shoves {
            println!(
                "episode {i} disturb {} for {} ms at step {k} ({} s)",
                d.magnitude,
                d.ms,
                k as f64 * f64::from(impulse_ms) / 1000.0
            );
        }
        println!("episode {i} steps {}", out.steps);
    }
    link.close()
}

fn cmd_baseline(args: BaselineArgs) -> Result<(), CliError> {
    let cfg = args.common.resolve()?;
    if args.tries == 0 {
        return Err(CliError::Input("--tries must be >= 1".into()));
    }
    let hyper = cfg.hyperparams()?;
    let bounds = cfg.emulator_config()?.plant;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut link = Link::open(&cfg, &args.connection.wiring())?;
    let result = random_search_baseline(
        link.client(),
        args.tries,
        &mut rng,
        hyper.impulse_ms,
        hyper.max_steps,
        &bounds,
        |_, _, _| {},
    )?;
    link.close()?;
    println!("best theta {}", result.best.to_line());
    println!("best steps {} after {} tries", result.best_steps, result.evaluated.len());
    if let Some(path) = &args.save_theta {
        fs::write(path, format!("{}\n", result.best.to_line()))
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Emulate(a) => emulate(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Baseline(a) => cmd_baseline(a),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Input(e.to_string()))?;
    run(cli)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mstd::envs::{make_chain, ChainSpec};
use mstd::harness::{
    emit_learning_curve, run_convergence, run_experiment, run_sweep, write_convergence_outputs, ConvergenceSetup, ExperimentConfig,
    HarnessError, SweepConfig,
};
use mstd::lab::{LrSchedule, StepSize};
use mstd::mdp::FiniteMdp;

/// Multi-state TD learning experiments.
#[derive(Debug, Parser)]
#[command(name = "mstd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent over one or more seeds.
    Train(TrainArgs),
    /// Tabular MSTD Q-learning against the exact fixed point.
    Convergence(ConvergenceArgs),
    /// Render metrics CSVs as a learning-curve SVG.
    Plot(PlotArgs),
    /// Run a grid of window lengths and action modes from a config file.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct RunFlags {
    /// Config file with `key = value` lines and `[section]` headers.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    /// ddpg, mpddpg, msddpg, sac, mpsac or mssac.
    #[arg(long)]
    algo: Option<String>,
    /// loaded or generated (multi-state algorithms only).
    #[arg(long)]
    mode: Option<String>,
    /// Window length.
    #[arg(long = "L")]
    horizon: Option<usize>,
    #[arg(long)]
    steps: Option<u64>,
    /// Seed; repeat for several.
    #[arg(long = "seed")]
    seed: Vec<u64>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    final_window: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
}

impl RunFlags {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut o = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        put("env", self.env.clone());
        put("algo", self.algo.clone());
        put("mode", self.mode.clone());
        put("L", self.horizon.map(|v| v.to_string()));
        put("steps", self.steps.map(|v| v.to_string()));
        let seeds = if self.seed.is_empty() {
            self.seeds.clone()
        } else {
            Some(self.seed.iter().map(u64::to_string).collect::<Vec<_>>().join(","))
        };
        put("seeds", seeds);
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("eval_every", self.eval_every.map(|v| v.to_string()));
        put("eval_episodes", self.eval_episodes.map(|v| v.to_string()));
        put("final_window", self.final_window.map(|v| v.to_string()));
        put("hidden", self.hidden.clone());
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("gamma", self.gamma.map(|v| v.to_string()));
        put("tau", self.tau.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("buffer_capacity", self.buffer_capacity.map(|v| v.to_string()));
        put("warmup", self.warmup.map(|v| v.to_string()));
        o
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    /// MDP file (`states N actions M gamma G` header, `s a s' prob reward` lines).
    #[arg(long, conflicts_with = "chain")]
    mdp: Option<PathBuf>,
    /// Use the built-in chain with this many states instead of a file.
    #[arg(long)]
    chain: Option<usize>,
    /// Slip probability of the built-in chain.
    #[arg(long, default_value_t = 0.1)]
    slip: f64,
    /// Discount of the built-in chain.
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long = "L", default_value_t = 1)]
    horizon: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha0: f64,
    #[arg(long, default_value_t = 2000.0)]
    t0: f64,
    #[arg(long, default_value_t = 0.7)]
    kappa: f64,
    #[arg(long, default_value_t = 500_000)]
    updates: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random q pairs per contraction check.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value = "convergence")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Metrics CSV files, one per run.
    csv: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "learning curve")]
    title: String,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn train(args: &TrainArgs) -> Result<(), Failure> {
    let config = ExperimentConfig::resolve(args.flags.config.as_deref(), &args.flags.overrides())?;
    println!("{}: {} seeds x {} steps -> {}", config.label(), config.seeds.len(), config.total_steps, config.out_dir.display());
    let summary = run_experiment(&config, &mut |seed, result| match result {
        Ok(v) => println!("seed {seed}: final return {v:.1}"),
        Err(e) => eprintln!("seed {seed} failed: {e}"),
    })?;
    if let Some(w) = &summary.warning {
        eprintln!("warning: {w}");
    }
    println!("{} {}", summary.label, summary.rendered);
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let sweep = SweepConfig::resolve(args.flags.config.as_deref(), &args.flags.overrides())?;
    let rows = run_sweep(&sweep, &mut |row| println!("{} {}", row.label, row.summary.render()))?;
    println!("{} cells written to {}", rows.len(), sweep.base.out_dir.display());
    Ok(())
}

fn convergence(args: &ConvergenceArgs) -> Result<(), Failure> {
    let mdp = match (&args.mdp, args.chain) {
        (Some(path), _) => FiniteMdp::load(path).map_err(|e| Failure::Config(format!("mdp: {e}")))?,
        (None, Some(n)) => make_chain(&ChainSpec {
            length: n,
            slip_prob: args.slip,
            right_reward: 1.0,
            step_reward: 0.0,
            gamma: args.gamma,
        })
        .map_err(|e| Failure::Config(format!("chain: {e}")))?,
        (None, None) => return Err(Failure::Config("one of --mdp or --chain is required".into())),
    };
    let schedule = LrSchedule {
        alpha0: args.alpha0,
        t0: args.t0,
        kappa: args.kappa,
    };
    schedule.validate().map_err(|e| Failure::Config(e.to_string()))?;
    if args.horizon == 0 {
        return Err(Failure::Config("L: must be at least 1".into()));
    }
    let mut setup = ConvergenceSetup::new(mdp, args.horizon);
    setup.schedule = schedule;
    setup.updates = args.updates;
    setup.seed = args.seed;
    setup.trials = args.trials;
    let (trace, report) = run_convergence(&setup)?;
    write_convergence_outputs(&args.out, &trace, &report)?;
    println!(
        "L={} final residual {:.4} (tolerance {:.4}), contraction {}, {}",
        report.horizon,
        report.final_residual,
        report.residual_tolerance,
        if report.contraction_pass { "ok" } else { "violated" },
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(())
}

fn plot(args: &PlotArgs) -> Result<(), Failure> {
    if args.csv.is_empty() {
        return Err(Failure::Config("at least one CSV is required".into()));
    }
    emit_learning_curve(&args.csv, &args.out, &args.title)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train(a) => train(a),
        Command::Convergence(a) => convergence(a),
        Command::Plot(a) => plot(a),
        Command::Sweep(a) => sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, RngCore};
use serde::Serialize;

use crate::agents::{action_mode_name, build_agent, rng_stream, run_training, TrainingEvent, TrainingOptions, TrainingSummary, INIT_STREAM};
use crate::envs::make_env;
use crate::mdp::Environment;
use crate::nn::Checkpoint;
use crate::targets::TargetKind;

use super::config::{ExperimentConfig, SweepConfig};
use super::metrics::{aggregate_seeds, write_csv, MetricsRow, SummaryStat};
use super::plot::emit_learning_curve;
use super::HarnessError;

pub const SUMMARY_FILE: &str = "summary.json";

pub fn train_csv_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

pub fn eval_csv_name(seed: u64) -> String {
    format!("seed_{seed}_eval.csv")
}

/// Everything produced by one seed.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Mean of the last `final_window` evaluation returns (training returns
    /// when evaluation is disabled).
    pub final_return: f64,
    /// One row per training episode, with mean losses over its updates.
    pub train_rows: Vec<MetricsRow>,
    /// One row per evaluation episode; `episode` counts evaluation episodes.
    pub eval_rows: Vec<MetricsRow>,
    pub training: TrainingSummary,
    pub checkpoints: Vec<(&'static str, Checkpoint)>,
}

fn make(name: &str) -> Result<Box<dyn Environment + Send>, HarnessError> {
    make_env(name).ok_or_else(|| HarnessError::Config {
        field: "env".into(),
        message: format!("unknown environment '{name}'"),
    })
}

/// Trains one agent from scratch with the given seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome, HarnessError> {
    let mut env = make(&config.env)?;
    let mut eval_env = make(&config.env)?;
    let mut init_rng = rng_stream(seed, INIT_STREAM);
    let mut agent = build_agent(config.agent.clone(), env.state_dim(), env.action_bounds().clone(), &mut init_rng)?;
    let options = TrainingOptions {
        total_steps: config.total_steps,
        eval_every: config.eval_every,
        eval_episodes: config.eval_episodes,
    };
    let start = Instant::now();
    let mut train_rows = Vec::new();
    let mut eval_rows = Vec::new();
    let mut eval_episode = 0u64;
    let training = run_training(
        agent.as_mut(),
        env.as_mut(),
        Some(eval_env.as_mut()),
        &options,
        seed,
        &mut |event| {
            let wall_ms = start.elapsed().as_millis() as u64;
            match event {
                TrainingEvent::Episode {
                    step,
                    episode,
                    episode_return,
                    mean_critic_loss,
                    mean_actor_loss,
                    ..
                } => train_rows.push(MetricsRow {
                    step: *step,
                    episode: *episode,
                    episode_return: *episode_return,
                    critic_loss: mean_critic_loss.unwrap_or(f64::NAN),
                    actor_loss: mean_actor_loss.unwrap_or(f64::NAN),
                    wall_ms,
                }),
                TrainingEvent::Evaluation { step, returns } => {
                    for &r in returns {
                        eval_rows.push(MetricsRow {
                            step: *step,
                            episode: eval_episode,
                            episode_return: r,
                            critic_loss: f64::NAN,
                            actor_loss: f64::NAN,
                            wall_ms,
                        });
                        eval_episode += 1;
                    }
                }
                TrainingEvent::Update { .. } => {}
            }
        },
    )?;
    let final_return = match training.final_eval_mean(config.final_window) {
        Some(v) => v,
        None => {
            let tail = &train_rows[train_rows.len().saturating_sub(config.final_window)..];
            if tail.is_empty() {
                return Err(HarnessError::Empty(format!("seed {seed}: no completed episode to score")));
            }
            tail.iter().map(|r| r.episode_return).sum::<f64>() / tail.len() as f64
        }
    };
    let checkpoints = agent.checkpoints(seed, training.steps);
    Ok(SeedOutcome {
        seed,
        final_return,
        train_rows,
        eval_rows,
        training,
        checkpoints,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_return: f64,
    pub episodes: u64,
    pub updates: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentSettings {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub alpha: f64,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub ou_mu: f64,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub ou_dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub label: String,
    pub env: String,
    pub algo: String,
    pub mode: String,
    #[serde(rename = "L")]
    pub horizon: usize,
    pub steps: u64,
    pub seeds: Vec<u64>,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub final_window: usize,
    pub agent: AgentSettings,
    pub per_seed: Vec<SeedResult>,
    pub failed: Vec<SeedFailure>,
    pub warning: Option<String>,
    pub summary: SummaryStat,
    pub rendered: String,
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::io(path, e))
}

/// Runs every seed, writing per-seed CSVs and final checkpoints, a
/// `summary.json` and a learning-curve SVG into the output directory. A
/// failing seed is reported in the summary and left out of the aggregate.
pub fn run_experiment(config: &ExperimentConfig, on_seed: &mut dyn FnMut(u64, &Result<f64, String>)) -> Result<ExperimentSummary, HarnessError> {
    config.validate()?;
    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut results = Vec::new();
    let mut failed = Vec::new();
    let mut curves = Vec::new();
    for &seed in &config.seeds {
        match run_seed(config, seed) {
            Ok(outcome) => {
                let train_path = out.join(train_csv_name(seed));
                write_file(&train_path, |w| write_csv(w, &outcome.train_rows))?;
                let eval_path = out.join(eval_csv_name(seed));
                write_file(&eval_path, |w| write_csv(w, &outcome.eval_rows))?;
                for (name, ck) in &outcome.checkpoints {
                    let path = out.join(format!("seed_{seed}_{name}.ckpt"));
                    let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                    ck.write_to(BufWriter::new(file)).map_err(|e| HarnessError::Io {
                        path: path.clone(),
                        source: std::io::Error::other(e.to_string()),
                    })?;
                }
                curves.push(if outcome.eval_rows.is_empty() { train_path } else { eval_path });
                on_seed(seed, &Ok(outcome.final_return));
                results.push(SeedResult {
                    seed,
                    final_return: outcome.final_return,
                    episodes: outcome.training.episodes,
                    updates: outcome.training.updates,
                });
            }
            Err(e) => {
                on_seed(seed, &Err(e.to_string()));
                failed.push(SeedFailure {
                    seed,
                    error: e.to_string(),
                });
            }
        }
    }
    if results.is_empty() {
        return Err(HarnessError::AllSeedsFailed(failed.into_iter().map(|f| (f.seed, f.error)).collect()));
    }
    let finals: Vec<f64> = results.iter().map(|r| r.final_return).collect();
    let summary = aggregate_seeds(&finals)?;
    let warning = (!failed.is_empty()).then(|| {
        format!(
            "{} of {} seeds failed and were excluded from the aggregate",
            failed.len(),
            config.seeds.len()
        )
    });
    let a = &config.agent;
    let report = ExperimentSummary {
        label: config.label(),
        env: config.env.clone(),
        algo: a.algo.to_string(),
        mode: action_mode_name(a.action_mode).to_string(),
        horizon: a.effective_horizon(),
        steps: config.total_steps,
        seeds: config.seeds.clone(),
        eval_every: config.eval_every,
        eval_episodes: config.eval_episodes,
        final_window: config.final_window,
        agent: AgentSettings {
            gamma: a.gamma,
            tau: a.tau,
            batch_size: a.batch_size,
            lr: a.lr,
            alpha: a.alpha,
            hidden: a.hidden.clone(),
            buffer_capacity: a.buffer_capacity,
            warmup: a.warmup_len(),
            ou_mu: a.ou.mu,
            ou_theta: a.ou.theta,
            ou_sigma: a.ou.sigma,
            ou_dt: a.ou.dt,
        },
        per_seed: results,
        failed,
        warning,
        rendered: summary.render(),
        summary,
    };
    let summary_path = out.join(SUMMARY_FILE);
    write_file(&summary_path, |w| {
        serde_json::to_writer_pretty(&mut *w, &report).map_err(std::io::Error::other)?;
        writeln!(w)
    })?;
    emit_learning_curve(&curves, &out.join("learning_curve.svg"), &report.label)?;
    Ok(report)
}

/// Undiscounted returns of uniformly random actions.
pub fn random_policy_returns(env_name: &str, episodes: usize, seed: u64) -> Result<Vec<f64>, HarnessError> {
    let mut env = make(env_name)?;
    let mut rng = rng_stream(seed, 7);
    let bounds = env.action_bounds().clone();
    let cap = env.max_episode_steps().unwrap_or(crate::agents::EVAL_STEP_LIMIT);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        env.reset(rng.next_u64());
        let mut total = 0.0;
        for _ in 0..cap {
            let action: Vec<f64> = bounds
                .low
                .iter()
                .zip(&bounds.high)
                .map(|(&lo, &hi)| rng.random_range(lo..=hi))
                .collect();
            let t = env.step(&action).map_err(crate::agents::AgentError::from)?;
            total += t.reward;
            if t.terminated {
                break;
            }
        }
        returns.push(total);
    }
    Ok(returns)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub algo: String,
    pub mode: String,
    #[serde(rename = "L")]
    pub horizon: usize,
    pub summary: SummaryStat,
}

fn row_name(row: &SweepRow) -> String {
    let upper = row.algo.to_ascii_uppercase();
    if row.algo.starts_with("ms") {
        let tag = if row.mode == "loaded" { "AL" } else { "AG" };
        format!("{upper} ({tag})")
    } else {
        upper
    }
}

/// Runs every cell of the grid and writes `sweep.csv` and a markdown table
/// with one column per window length.
pub fn run_sweep(sweep: &SweepConfig, on_cell: &mut dyn FnMut(&SweepRow)) -> Result<Vec<SweepRow>, HarnessError> {
    let out = &sweep.base.out_dir;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut rows = Vec::new();
    for cell in sweep.cells()? {
        let report = run_experiment(&cell, &mut |_, _| {})?;
        let row = SweepRow {
            label: report.label.clone(),
            algo: report.algo.clone(),
            mode: report.mode.clone(),
            horizon: report.horizon,
            summary: report.summary,
        };
        on_cell(&row);
        rows.push(row);
    }
    let csv_path = out.join("sweep.csv");
    write_file(&csv_path, |w| {
        writeln!(w, "label,algo,mode,L,mean,std,n,rendered")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.label, r.algo, r.mode, r.horizon, r.summary.mean, r.summary.std, r.summary.n, r.summary.render()
            )?;
        }
        Ok(())
    })?;

    let mut table = String::from("| algorithm |");
    for l in &sweep.horizons {
        let _ = write!(table, " {l} STEP |");
    }
    table.push_str("\n|---|");
    table.push_str(&"---|".repeat(sweep.horizons.len()));
    table.push('\n');
    let mut names: Vec<String> = Vec::new();
    for r in &rows {
        let n = row_name(r);
        if !names.contains(&n) {
            names.push(n);
        }
    }
    for name in names {
        let _ = write!(table, "| {name} |");
        for &l in &sweep.horizons {
            let cell = rows
                .iter()
                .filter(|r| row_name(r) == name)
                .find(|r| r.horizon == l || r.algo.parse::<crate::agents::Algo>().is_ok_and(|a| a.target_kind() == TargetKind::SingleStep));
            let _ = write!(table, " {} |", cell.map_or("-".to_string(), |c| c.summary.render()));
        }
        table.push('\n');
    }
    let md_path = out.join("sweep.md");
    fs::write(&md_path, table).map_err(|e| HarnessError::io(&md_path, e))?;
    Ok(rows)
}

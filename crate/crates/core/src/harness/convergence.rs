use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::lab::{
    averaged_contraction_test, averaged_fixed_point, contraction_test, fixed_point, residual_tolerance, run_tabular_convergence,
    value_iteration, BehaviorPolicy, ContractionReport, ConvergenceTrace, HOperator, LrSchedule, StepSize,
};
use crate::mdp::FiniteMdp;
use crate::agents::QTable;

use super::HarnessError;

pub const RESIDUAL_CSV_HEADER: &str = "update,residual";

/// Slack allowed on measured contraction ratios.
const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ConvergenceSetup {
    pub mdp: FiniteMdp,
    pub horizon: usize,
    pub behavior: BehaviorPolicy,
    pub schedule: LrSchedule,
    pub updates: u64,
    pub seed: u64,
    /// Random `q` pairs per contraction measurement.
    pub trials: usize,
    pub fixed_point_tol: f64,
}

impl ConvergenceSetup {
    pub fn new(mdp: FiniteMdp, horizon: usize) -> Self {
        let behavior = BehaviorPolicy::uniform(mdp.num_states, mdp.num_actions);
        Self {
            mdp,
            horizon,
            behavior,
            schedule: LrSchedule {
                alpha0: 0.5,
                t0: 2000.0,
                kappa: 0.7,
            },
            updates: 500_000,
            seed: 0,
            trials: 50,
            fixed_point_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    #[serde(rename = "L")]
    pub horizon: usize,
    pub gamma: f64,
    pub updates: u64,
    pub seed: u64,
    pub schedule: LrSchedule,
    pub q_f: Vec<Vec<f64>>,
    pub q_f_iterations: usize,
    pub q_star: Vec<Vec<f64>>,
    /// `‖Q^f − Q*‖∞`, reported without a pass criterion.
    pub q_f_vs_q_star: f64,
    /// `‖fix(H^L) − fix(H̄)‖∞`.
    pub single_vs_averaged_fixed_point: f64,
    pub contraction: Vec<ContractionReport>,
    pub averaged_contraction: ContractionReport,
    pub final_residual: f64,
    pub residual_tolerance: f64,
    pub contraction_pass: bool,
    pub residual_pass: bool,
    pub pass: bool,
}

/// Computes `Q^f`, `Q*`, contraction measurements and a sampled
/// convergence run for one MDP and window length.
pub fn run_convergence(setup: &ConvergenceSetup) -> Result<(ConvergenceTrace, ConvergenceReport), HarnessError> {
    setup.schedule.validate()?;
    let mdp = &setup.mdp;
    let tol = setup.fixed_point_tol;
    let fp = averaged_fixed_point(mdp, setup.horizon, &setup.behavior, tol)?;
    let q_star = value_iteration(mdp, tol)?;
    let single = HOperator::new(mdp, setup.horizon, &setup.behavior)?;
    let max_iter = fp.iterations.saturating_mul(1000).max(100_000);
    let single_fp = fixed_point(|q| single.apply(q), QTable::zeros(mdp.num_states, mdp.num_actions), tol, max_iter)?;

    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let contraction = (1..=setup.horizon)
        .map(|l| contraction_test(mdp, l, &setup.behavior, setup.trials, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let averaged_contraction = averaged_contraction_test(mdp, setup.horizon, &setup.behavior, setup.trials, &mut rng)?;
    let contraction_pass = contraction.iter().all(|c| c.holds(RATIO_SLACK)) && averaged_contraction.holds(RATIO_SLACK);

    let trace = run_tabular_convergence(mdp, setup.horizon, &setup.behavior, &setup.schedule, &fp.q_f, setup.updates, setup.seed)?;
    let final_residual = trace.final_residual();
    let residual_tol = residual_tolerance(&fp.q_f);
    let residual_pass = final_residual <= residual_tol;
    let report = ConvergenceReport {
        horizon: setup.horizon,
        gamma: mdp.discount,
        updates: setup.updates,
        seed: setup.seed,
        schedule: setup.schedule,
        q_f: fp.q_f.rows(),
        q_f_iterations: fp.iterations,
        q_star: q_star.rows(),
        q_f_vs_q_star: fp.q_f.distance(&q_star),
        single_vs_averaged_fixed_point: single_fp.q_f.distance(&fp.q_f),
        contraction,
        averaged_contraction,
        final_residual,
        residual_tolerance: residual_tol,
        contraction_pass,
        residual_pass,
        pass: contraction_pass && residual_pass,
    };
    Ok((trace, report))
}

pub fn write_residual_csv<W: Write>(mut w: W, trace: &ConvergenceTrace) -> std::io::Result<()> {
    writeln!(w, "{RESIDUAL_CSV_HEADER}")?;
    for (t, r) in &trace.residuals {
        writeln!(w, "{t},{r}")?;
    }
    Ok(())
}

/// Writes `residuals.csv` and `report.json` into `dir`.
pub fn write_convergence_outputs(dir: &std::path::Path, trace: &ConvergenceTrace, report: &ConvergenceReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let csv_path = dir.join("residuals.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| HarnessError::io(&csv_path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_residual_csv(&mut w, trace)
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(&csv_path, e))?;
    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(&json_path, json + "\n").map_err(|e| HarnessError::io(&json_path, e))
}

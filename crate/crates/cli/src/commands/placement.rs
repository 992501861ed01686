use anyhow::Result;
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use wgqd_core::placement::{
    cumulative_yield, estimate_lambda_from_fill, expected_iterations, simulate_protocol,
    simulate_trial, site_distribution, LambdaEstimate, ProtocolParams, YieldRow,
};

use super::load_config;
use crate::manifest::Outputs;
use crate::GlobalArgs;

#[derive(Subcommand, Debug)]
pub enum PlacementCommand {
    /// Monte Carlo yield curves of the iterative protocol.
    Simulate(SimulateArgs),
    /// Iterations needed to reach a target occupied fraction.
    Analytic(AnalyticArgs),
}

impl PlacementCommand {
    pub fn name(&self) -> &'static str {
        match self {
            PlacementCommand::Simulate(_) => "simulate",
            PlacementCommand::Analytic(_) => "analytic",
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Single-iteration fill probability; replaces `params.lambda`.
    #[arg(long)]
    pub p: Option<f64>,
    /// Deactivate multiply occupied sites after each iteration.
    #[arg(long)]
    pub neutralize: bool,
}

#[derive(Args, Debug)]
pub struct AnalyticArgs {
    /// Single-iteration fill probability.
    #[arg(long, default_value_t = 0.55)]
    pub p: f64,
    /// Target occupied fraction.
    #[arg(long, default_value_t = 0.99)]
    pub target: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub params: ProtocolParams,
    pub n_sites: usize,
    pub max_iterations: usize,
    pub trials: usize,
    /// Final site arrays of the first trials, written to `trials/`.
    pub dump_trials: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            params: ProtocolParams::default(),
            n_sites: 25,
            max_iterations: 10,
            trials: 1000,
            dump_trials: 0,
        }
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    final_row: YieldRow,
    /// `[dark, single, multi]` per iteration from the site Markov chain.
    analytic_distribution: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct AnalyticReport {
    p: f64,
    target: f64,
    iterations: u32,
    achieved: f64,
    previous: f64,
    lambda: LambdaEstimate,
}

pub fn run(cmd: PlacementCommand, global: &GlobalArgs, out: &mut Outputs) -> Result<()> {
    match cmd {
        PlacementCommand::Simulate(args) => simulate(args, global, out),
        PlacementCommand::Analytic(args) => analytic(args, out),
    }
}

fn simulate(args: SimulateArgs, global: &GlobalArgs, out: &mut Outputs) -> Result<()> {
    let paper = global.paper_mode;
    let mut cfg: PlacementConfig = load_config(global, || PlacementConfig {
        trials: if paper { 10_000 } else { 1000 },
        ..PlacementConfig::default()
    })?;
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(k) = args.iterations {
        cfg.max_iterations = k;
    }
    if let Some(p) = args.p {
        cfg.params.lambda = estimate_lambda_from_fill(p)?.lambda;
    }
    if args.neutralize {
        cfg.params.neutralize_multi = true;
    }
    out.write_config(&cfg)?;
    let curves = simulate_protocol(&cfg.params, cfg.n_sites, cfg.max_iterations, cfg.trials, global.seed)?;
    out.write_with("yield.csv", |w| curves.write_csv(w))?;
    let analytic_distribution = (0..=cfg.max_iterations)
        .map(|k| site_distribution(&cfg.params, k))
        .collect::<wgqd_core::Result<Vec<_>>>()?;
    let final_row = curves.rows.last().cloned().expect("row 0 always present");
    out.write_json(
        "summary.json",
        &SimulateSummary {
            final_row,
            analytic_distribution,
        },
    )?;
    for t in 0..cfg.dump_trials.min(cfg.trials) {
        let s = simulate_trial(&cfg.params, cfg.n_sites, cfg.max_iterations, global.seed, t as u64)?;
        out.write_json(&format!("trials/trial_{t:05}.json"), &s)?;
    }
    Ok(())
}

fn analytic(args: AnalyticArgs, out: &mut Outputs) -> Result<()> {
    out.write_config(&serde_json::json!({ "p": args.p, "target": args.target }))?;
    let k = expected_iterations(args.p, args.target)?;
    let report = AnalyticReport {
        p: args.p,
        target: args.target,
        iterations: k,
        achieved: cumulative_yield(args.p, k)?,
        previous: cumulative_yield(args.p, k.saturating_sub(1))?,
        lambda: estimate_lambda_from_fill(args.p)?,
    };
    out.write_json("analytic.json", &report)?;
    println!("{k}");
    Ok(())
}

use anyhow::Result;
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use wgqd_core::budget::{infer_source_rate, LossChain, RateEstimate};

use super::load_config;
use crate::manifest::Outputs;
use crate::GlobalArgs;

#[derive(Subcommand, Debug)]
pub enum BudgetCommand {
    /// Rate at the source from a detected rate and a loss chain.
    Infer(InferArgs),
}

impl BudgetCommand {
    pub fn name(&self) -> &'static str {
        match self {
            BudgetCommand::Infer(_) => "infer",
        }
    }
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Detected rate, counts/s.
    #[arg(long)]
    pub rate: Option<f64>,
    /// One-sigma uncertainty of the detected rate.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub chain: LossChain,
    pub detected_rate: f64,
    pub sigma: Option<f64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            chain: LossChain::waveguide_readout(),
            detected_rate: 5521.0,
            sigma: None,
        }
    }
}

#[derive(Serialize)]
struct BudgetReport<'a> {
    chain: &'a LossChain,
    total_db: f64,
    transmission: f64,
    detected_rate: f64,
    source: RateEstimate,
}

pub fn run(cmd: BudgetCommand, global: &GlobalArgs, out: &mut Outputs) -> Result<()> {
    let BudgetCommand::Infer(args) = cmd;
    let mut cfg: BudgetConfig = load_config(global, BudgetConfig::default)?;
    if let Some(r) = args.rate {
        cfg.detected_rate = r;
    }
    if args.sigma.is_some() {
        cfg.sigma = args.sigma;
    }
    out.write_config(&cfg)?;
    let source = infer_source_rate(cfg.detected_rate, cfg.sigma, &cfg.chain)?;
    out.write_json(
        "budget.json",
        &BudgetReport {
            chain: &cfg.chain,
            total_db: cfg.chain.total_db(),
            transmission: cfg.chain.transmission(),
            detected_rate: cfg.detected_rate,
            source,
        },
    )?;
    match source.sigma {
        Some(s) => println!("{:.6e} ± {:.6e} photons/s", source.rate, s),
        None => println!("{:.6e} photons/s", source.rate),
    }
    Ok(())
}

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use serde::Serialize;
use wgqd_core::correlation::{
    background_correct, correct_value, correlate, fit_g2, normalize, FitOptions, G2Curve, G2Fit,
};
use wgqd_core::emitter::EmitterParams;
use wgqd_core::hbt::{run_hbt, HbtScenario};
use wgqd_core::TimestampStream;

use super::{load_config, open, read_json};
use crate::manifest::Outputs;
use crate::GlobalArgs;

#[derive(Subcommand, Debug)]
pub enum G2Command {
    /// Emit, split, detect, correlate and fit one synthetic experiment.
    Simulate(SimulateArgs),
    /// Histogram of delays between two timestamp files.
    Correlate(CorrelateArgs),
    /// Fit the antibunching model to a normalized curve.
    Fit(FitArgs),
    /// Remove uncorrelated background from a g²(0) value or a fit.
    Correct(CorrectArgs),
}

impl G2Command {
    pub fn name(&self) -> &'static str {
        match self {
            G2Command::Simulate(_) => "simulate",
            G2Command::Correlate(_) => "correlate",
            G2Command::Fit(_) => "fit",
            G2Command::Correct(_) => "correct",
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Add background so that each detector sees this signal purity.
    #[arg(long)]
    pub purity: Option<f64>,
    /// Simulated time, s.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    /// CSV of timestamps in seconds, one per line.
    #[arg(long)]
    pub input1: PathBuf,
    #[arg(long)]
    pub input2: PathBuf,
    /// Acquisition length, s.
    #[arg(long)]
    pub duration: f64,
    #[arg(long, default_value_t = 300e-9)]
    pub window: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub bin_width: f64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Curve CSV as written by `g2 correlate` or `g2 simulate`.
    #[arg(long)]
    pub curve: PathBuf,
    /// Purity for the corrected value.
    #[arg(long)]
    pub rho: Option<f64>,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["raw", "fit"])))]
pub struct CorrectArgs {
    /// Measured g²(0).
    #[arg(long)]
    pub raw: Option<f64>,
    /// Fit JSON as written by `g2 fit`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub rho: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    emitted: usize,
    detected: [usize; 2],
    rates: [f64; 2],
    coincidences: u64,
    rho: f64,
    fit: G2Fit,
}

pub fn run(cmd: G2Command, global: &GlobalArgs, out: &mut Outputs) -> Result<()> {
    match cmd {
        G2Command::Simulate(a) => simulate(a, global, out),
        G2Command::Correlate(a) => correlate_files(a, out),
        G2Command::Fit(a) => fit(a, out),
        G2Command::Correct(a) => correct(a, out),
    }
}

fn paper_scenario() -> HbtScenario {
    HbtScenario {
        emitter: EmitterParams::paper_fig3(),
        duration: 20.0,
        plateau_min_tau: Some(150e-9),
        ..HbtScenario::default()
    }
}

fn simulate(args: SimulateArgs, global: &GlobalArgs, out: &mut Outputs) -> Result<()> {
    let mut s: HbtScenario = if global.paper_mode {
        load_config(global, paper_scenario)?
    } else {
        load_config(global, HbtScenario::default)?
    };
    if let Some(d) = args.duration {
        s.duration = d;
    }
    if let Some(rho) = args.purity {
        s = s.with_rho(rho)?;
    }
    out.write_config(&s)?;
    let r = run_hbt(&s, global.seed)?;
    for (i, ch) in r.channels.iter().enumerate() {
        out.write_with(&format!("hbt_{}.csv", i + 1), |w| ch.write_csv(w))?;
    }
    out.write_with("histogram.csv", |w| r.histogram.write_csv(w))?;
    out.write_with("g2.csv", |w| r.curve.write_csv(w))?;
    out.write_json("fit.json", &r.fit)?;
    out.write_json(
        "summary.json",
        &SimulateSummary {
            emitted: r.emitted.len(),
            detected: [r.channels[0].len(), r.channels[1].len()],
            rates: [r.channels[0].rate(), r.channels[1].rate()],
            coincidences: r.histogram.total_pairs(),
            rho: r.fit.rho,
            fit: r.fit.clone(),
        },
    )?;
    println!(
        "g2(0) raw {:.4} corrected {:.4} tau_l {:.4e} s",
        r.fit.g2_zero_raw, r.fit.g2_zero_corrected, r.fit.tau_l
    );
    Ok(())
}

fn correlate_files(a: CorrelateArgs, out: &mut Outputs) -> Result<()> {
    out.write_config(&serde_json::json!({
        "input1": a.input1,
        "input2": a.input2,
        "duration": a.duration,
        "window": a.window,
        "bin_width": a.bin_width,
    }))?;
    let s1 = TimestampStream::read_csv(open(&a.input1)?, "1", a.duration)?;
    let s2 = TimestampStream::read_csv(open(&a.input2)?, "2", a.duration)?;
    let h = correlate(&s1, &s2, a.window, a.bin_width)?;
    out.write_with("histogram.csv", |w| h.write_csv(w))?;
    let curve = normalize(&h)?;
    out.write_with("g2.csv", |w| curve.write_csv(w))?;
    Ok(())
}

fn fit(a: FitArgs, out: &mut Outputs) -> Result<()> {
    out.write_config(&serde_json::json!({ "curve": a.curve, "rho": a.rho }))?;
    let curve = G2Curve::read_csv(open(&a.curve)?)?;
    let mut f = fit_g2(&curve, &FitOptions::default())?;
    if let Some(rho) = a.rho {
        f = background_correct(&f, rho)?;
    }
    out.write_json("fit.json", &f)?;
    println!("g2(0) {:.4} tau_l {:.4e} s", f.g2_zero_raw, f.tau_l);
    Ok(())
}

#[derive(Serialize)]
struct Correction {
    raw: f64,
    rho: f64,
    corrected: f64,
}

fn correct(a: CorrectArgs, out: &mut Outputs) -> Result<()> {
    out.write_config(&serde_json::json!({ "raw": a.raw, "fit": a.fit, "rho": a.rho }))?;
    let corrected = match (a.raw, &a.fit) {
        (Some(raw), None) => Correction {
            raw,
            rho: a.rho,
            corrected: correct_value(raw, a.rho)?,
        },
        (None, Some(path)) => {
            let f: G2Fit = read_json(path)?;
            let c = background_correct(&f, a.rho)?;
            out.write_json("fit.json", &c)?;
            Correction {
                raw: c.g2_zero_raw,
                rho: a.rho,
                corrected: c.g2_zero_corrected,
            }
        }
        _ => bail!("exactly one of --raw and --fit is required"),
    };
    out.write_json("correction.json", &corrected)?;
    println!("{:.6}", corrected.corrected);
    Ok(())
}

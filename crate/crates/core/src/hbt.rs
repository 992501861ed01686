//! End-to-end antibunching experiment: emission, 50/50 split,
//! per-channel background and detection, correlation, fit and
//! background correction.

use serde::{Deserialize, Serialize};

use crate::correlation::{
    background_correct, correlate, estimate_rho, fit_g2, normalize, normalize_to_plateau,
    FitOptions, G2Curve, G2Fit, G2Histogram,
};
use crate::emitter::{
    add_background_with_stage, detect_with_stage, hbt_split, simulate_emission, DetectorParams,
    EmitterParams,
};
use crate::error::{Error, Result};
use crate::rng::stage;
use crate::stream::TimestampStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HbtScenario {
    pub emitter: EmitterParams,
    /// Simulated time, s.
    pub duration: f64,
    /// Uncorrelated background reaching each detector, counts/s.
    pub background_rate: f64,
    pub detector: DetectorParams,
    /// Half-range of the delay histogram, s.
    pub window: f64,
    pub bin_width: f64,
    /// Rescale bins with `|τ|` at least this large to a mean of one.
    pub plateau_min_tau: Option<f64>,
    /// Purity used for correction; estimated from the rates when absent.
    pub rho: Option<f64>,
    pub fit: FitOptions,
}

impl Default for HbtScenario {
    fn default() -> Self {
        Self {
            emitter: EmitterParams::paper_fig3().without_blinking(),
            duration: 2.5,
            background_rate: 0.0,
            detector: DetectorParams::ideal(),
            window: 300e-9,
            bin_width: 1e-9,
            plateau_min_tau: None,
            rho: None,
            fit: FitOptions::default(),
        }
    }
}

impl HbtScenario {
    /// Expected emitter counts per detector per second.
    pub fn signal_rate(&self) -> f64 {
        0.5 * self.emitter.mean_rate() * self.detector.efficiency
    }

    /// Background rate per detector giving purity `rho`.
    pub fn background_for_rho(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::param("rho", "must lie in (0, 1]"));
        }
        Ok(self.signal_rate() * (1.0 / rho - 1.0))
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        self.background_rate = self.background_for_rho(rho)?;
        Ok(self)
    }

    /// Purity from the configured rates; dark counts count as background.
    pub fn expected_rho(&self) -> Result<f64> {
        estimate_rho(
            self.signal_rate(),
            self.background_rate + self.detector.dark_count_rate,
        )
    }
}

#[derive(Clone, Debug)]
pub struct HbtOutput {
    pub emitted: TimestampStream,
    pub channels: [TimestampStream; 2],
    pub histogram: G2Histogram,
    pub curve: G2Curve,
    /// Fit of the measured curve with `g2_zero_corrected` filled in.
    pub fit: G2Fit,
}

pub fn run_hbt(s: &HbtScenario, seed: u64) -> Result<HbtOutput> {
    if !(s.background_rate.is_finite() && s.background_rate >= 0.0) {
        return Err(Error::param("background_rate", "must be finite and >= 0"));
    }
    let emitted = simulate_emission(&s.emitter, s.duration, seed)?;
    let (a, b) = hbt_split(&emitted, seed);
    let a = add_background_with_stage(&a, s.background_rate, seed, stage::BACKGROUND)?;
    let b = add_background_with_stage(&b, s.background_rate, seed, stage::BACKGROUND_2)?;
    let a = detect_with_stage(&a, &s.detector, seed, stage::DETECT_1)?;
    let b = detect_with_stage(&b, &s.detector, seed, stage::DETECT_2)?;
    let histogram = correlate(&a, &b, s.window, s.bin_width)?;
    let mut curve = normalize(&histogram)?;
    if let Some(min_tau) = s.plateau_min_tau {
        curve = normalize_to_plateau(&curve, min_tau)?;
    }
    let raw = fit_g2(&curve, &s.fit)?;
    let rho = match s.rho {
        Some(r) => r,
        None => s.expected_rho()?,
    };
    let fit = background_correct(&raw, rho)?;
    Ok(HbtOutput {
        emitted,
        channels: [a, b],
        histogram,
        curve,
        fit,
    })
}

//! Photon streams from a blinking two-level emitter and the detection
//! chain behind a 50/50 beam splitter.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::budget::LossChain;
use crate::error::{Error, Result};
use crate::rng::{self, stage, Rng};
use crate::stream::TimestampStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlinkingModel {
    /// Exponential ON and OFF dwell times.
    Exponential,
    /// OFF dwell times follow `p(t) ∝ t^(-alpha)` on `[t_min, t_max]`;
    /// ON dwell times stay exponential.
    TruncatedPowerLaw { alpha: f64, t_min: f64, t_max: f64 },
}

impl BlinkingModel {
    pub fn power_law() -> Self {
        BlinkingModel::TruncatedPowerLaw {
            alpha: 1.5,
            t_min: 1e-3,
            t_max: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlinkingParams {
    /// Zero disables blinking.
    pub on_to_off_rate: f64,
    pub off_to_on_rate: f64,
    pub model: BlinkingModel,
}

impl Default for BlinkingParams {
    fn default() -> Self {
        Self {
            on_to_off_rate: 0.0,
            off_to_on_rate: 0.0,
            model: BlinkingModel::Exponential,
        }
    }
}

impl BlinkingParams {
    pub fn is_enabled(&self) -> bool {
        self.on_to_off_rate > 0.0
    }

    /// Long-run fraction of time spent ON.
    pub fn duty_cycle(&self) -> f64 {
        if !self.is_enabled() {
            return 1.0;
        }
        let on = 1.0 / self.on_to_off_rate;
        let off = match self.model {
            BlinkingModel::Exponential => 1.0 / self.off_to_on_rate,
            BlinkingModel::TruncatedPowerLaw { alpha, t_min, t_max } => {
                power_law_mean(alpha, t_min, t_max)
            }
        };
        on / (on + off)
    }
}

fn power_law_mean(alpha: f64, a: f64, b: f64) -> f64 {
    let norm = (b.powf(1.0 - alpha) - a.powf(1.0 - alpha)) / (1.0 - alpha);
    let first = if (alpha - 2.0).abs() < 1e-12 {
        (b / a).ln()
    } else {
        (b.powf(2.0 - alpha) - a.powf(2.0 - alpha)) / (2.0 - alpha)
    };
    first / norm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitterParams {
    /// Ground to excited state rate, 1/s.
    pub pump_rate: f64,
    /// Radiative channel decay rate, 1/s.
    pub decay_rate: f64,
    pub quantum_efficiency: f64,
    pub blinking: BlinkingParams,
    pub initially_on: bool,
}

impl Default for EmitterParams {
    fn default() -> Self {
        Self::paper_fig3()
    }
}

impl EmitterParams {
    /// Low-pump scenario with a 23.9 ns decay and symmetric 5/s blinking.
    pub fn paper_fig3() -> Self {
        let decay = 1.0 / 23.9e-9;
        Self {
            pump_rate: decay / 50.0,
            decay_rate: decay,
            quantum_efficiency: 0.55,
            blinking: BlinkingParams {
                on_to_off_rate: 5.0,
                off_to_on_rate: 5.0,
                model: BlinkingModel::Exponential,
            },
            initially_on: true,
        }
    }

    pub fn without_blinking(mut self) -> Self {
        self.blinking = BlinkingParams::default();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| r.is_finite() && r >= 0.0;
        if !rate_ok(self.pump_rate) {
            return Err(Error::param("pump_rate", "must be finite and >= 0"));
        }
        if !(self.decay_rate.is_finite() && self.decay_rate > 0.0) {
            return Err(Error::param("decay_rate", "must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::param("quantum_efficiency", "must lie in [0, 1]"));
        }
        let b = &self.blinking;
        if !rate_ok(b.on_to_off_rate) || !rate_ok(b.off_to_on_rate) {
            return Err(Error::param("blinking", "rates must be finite and >= 0"));
        }
        match b.model {
            BlinkingModel::Exponential => {
                if b.is_enabled() && b.off_to_on_rate == 0.0 {
                    return Err(Error::param(
                        "off_to_on_rate",
                        "must be > 0 when blinking is enabled",
                    ));
                }
            }
            BlinkingModel::TruncatedPowerLaw { alpha, t_min, t_max } => {
                if !(alpha > 1.0 && t_min > 0.0 && t_max > t_min) {
                    return Err(Error::param(
                        "blinking",
                        "power law needs alpha > 1 and t_max > t_min > 0",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Steady-state emission rate into the output, photons/s.
    pub fn mean_rate(&self) -> f64 {
        let k = self.pump_rate * self.decay_rate / (self.pump_rate + self.decay_rate);
        k * self.quantum_efficiency * self.blinking.duty_cycle()
    }

    /// Antibunching recovery time `1/(k_exc + k_dec)`.
    pub fn antibunching_time(&self) -> f64 {
        1.0 / (self.pump_rate + self.decay_rate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    pub efficiency: f64,
    /// s.
    pub dead_time: f64,
    /// Gaussian timing jitter standard deviation, s.
    pub jitter_sigma: f64,
    pub dark_count_rate: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self::ideal()
    }
}

impl DetectorParams {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dead_time: 0.0,
            jitter_sigma: 0.0,
            dark_count_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::param("efficiency", "must lie in [0, 1]"));
        }
        if !(self.dead_time >= 0.0 && self.jitter_sigma >= 0.0 && self.dark_count_rate >= 0.0) {
            return Err(Error::param(
                "detector",
                "dead_time, jitter_sigma and dark_count_rate must be >= 0",
            ));
        }
        Ok(())
    }
}

fn exp_sample(rng: &mut Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    // 1 - u lies in (0, 1], so the logarithm is finite.
    -(1.0 - rng.random::<f64>()).ln() / rate
}

fn off_duration(rng: &mut Rng, b: &BlinkingParams) -> f64 {
    match b.model {
        BlinkingModel::Exponential => exp_sample(rng, b.off_to_on_rate),
        BlinkingModel::TruncatedPowerLaw { alpha, t_min, t_max } => {
            let e = 1.0 - alpha;
            let u: f64 = rng.random();
            let lo = t_min.powf(e);
            (lo + u * (t_max.powf(e) - lo)).powf(1.0 / e)
        }
    }
}

/// Event-driven emission over `[0, duration]`. While ON the emitter is
/// excited after `Exp(k_exc)` and decays after `Exp(k_dec)`, emitting a
/// photon with probability QE. Switching OFF while excited removes the
/// excitation without emission; nothing is excited while OFF.
pub fn simulate_emission(params: &EmitterParams, duration: f64, seed: u64) -> Result<TimestampStream> {
    params.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::param("duration", "must be finite and > 0"));
    }
    let mut rng = rng::stream(seed, stage::EMISSION);
    let b = &params.blinking;
    let mut times = Vec::new();
    let mut t = 0.0;
    let mut on = params.initially_on || !b.is_enabled();
    let mut excited = false;
    let mut switch = if !b.is_enabled() {
        f64::INFINITY
    } else if on {
        exp_sample(&mut rng, b.on_to_off_rate)
    } else {
        off_duration(&mut rng, b)
    };
    while t < duration {
        if !on {
            t = switch;
            on = true;
            switch = t + exp_sample(&mut rng, b.on_to_off_rate);
            continue;
        }
        let rate = if excited {
            params.decay_rate
        } else {
            params.pump_rate
        };
        let next = t + exp_sample(&mut rng, rate);
        if next >= switch {
            t = switch;
            on = false;
            excited = false;
            switch = t + off_duration(&mut rng, b);
            continue;
        }
        t = next;
        if excited {
            excited = false;
            let keep = rng.random::<f64>() < params.quantum_efficiency;
            if keep && t <= duration {
                times.push(t);
            }
        } else {
            excited = true;
        }
    }
    Ok(TimestampStream::from_unsorted("emission", times, duration))
}

/// Route each event to one of two outputs with probability 1/2.
pub fn hbt_split(stream: &TimestampStream, seed: u64) -> (TimestampStream, TimestampStream) {
    let mut rng = rng::stream(seed, stage::HBT_SPLIT);
    let mut a = Vec::with_capacity(stream.len() / 2 + 1);
    let mut b = Vec::with_capacity(stream.len() / 2 + 1);
    for &t in stream.times() {
        if rng.random::<bool>() {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    (
        TimestampStream::from_unsorted("hbt_1", a, stream.duration),
        TimestampStream::from_unsorted("hbt_2", b, stream.duration),
    )
}

fn poisson_times(rng: &mut Rng, rate: f64, duration: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if rate <= 0.0 {
        return out;
    }
    let mut t = exp_sample(rng, rate);
    while t <= duration {
        out.push(t);
        t += exp_sample(rng, rate);
    }
    out
}

/// Merge a homogeneous Poisson process of `rate` into the stream. `stage`
/// selects the RNG substream so that several channels can draw
/// independent backgrounds from one seed.
pub fn add_background_with_stage(
    stream: &TimestampStream,
    rate: f64,
    seed: u64,
    stage_id: u64,
) -> Result<TimestampStream> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(Error::param("rate", "must be finite and >= 0"));
    }
    let mut rng = rng::stream(seed, stage_id);
    let bg = TimestampStream::from_unsorted("bg", poisson_times(&mut rng, rate, stream.duration), stream.duration);
    Ok(stream.merge(&bg, stream.channel.clone()))
}

pub fn add_background(stream: &TimestampStream, rate: f64, seed: u64) -> Result<TimestampStream> {
    add_background_with_stage(stream, rate, seed, stage::BACKGROUND)
}

/// Detector response in the order: efficiency, jitter, dead time, dark
/// counts. Dark counts do not trigger dead time. `stage` picks the RNG
/// substream (one per physical detector).
pub fn detect_with_stage(
    stream: &TimestampStream,
    det: &DetectorParams,
    seed: u64,
    stage_id: u64,
) -> Result<TimestampStream> {
    det.validate()?;
    let mut rng = rng::stream(seed, stage_id);
    let jitter = Normal::new(0.0, det.jitter_sigma).map_err(|e| Error::param("jitter_sigma", e.to_string()))?;
    let mut kept: Vec<f64> = Vec::with_capacity(stream.len());
    for &t in stream.times() {
        if rng.random::<f64>() < det.efficiency {
            let dt = if det.jitter_sigma > 0.0 {
                jitter.sample(&mut rng)
            } else {
                0.0
            };
            kept.push(t + dt);
        }
    }
    kept.sort_by(f64::total_cmp);
    let mut accepted = Vec::with_capacity(kept.len());
    let mut last = f64::NEG_INFINITY;
    for t in kept {
        if t - last >= det.dead_time || accepted.is_empty() {
            accepted.push(t);
            last = t;
        }
    }
    accepted.extend(poisson_times(&mut rng, det.dark_count_rate, stream.duration));
    Ok(TimestampStream::from_unsorted(
        stream.channel.clone(),
        accepted,
        stream.duration,
    ))
}

pub fn detect(stream: &TimestampStream, det: &DetectorParams, seed: u64) -> Result<TimestampStream> {
    detect_with_stage(stream, det, seed, stage::DETECT_1)
}

/// Counts per bin over `[0, duration]`; the last bin may be partial.
pub fn intensity_trace(stream: &TimestampStream, bin_width: f64) -> Result<Vec<u64>> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::param("bin_width", "must be > 0"));
    }
    let n = ((stream.duration / bin_width).ceil() as usize).max(1);
    let mut bins = vec![0u64; n];
    for &t in stream.times() {
        let i = ((t / bin_width) as usize).min(n - 1);
        bins[i] += 1;
    }
    Ok(bins)
}

/// Keep each event with probability `10^(-dB/10)`.
pub fn apply_loss(stream: &TimestampStream, chain: &LossChain, seed: u64) -> Result<TimestampStream> {
    chain.validate()?;
    let p = chain.transmission();
    let mut rng = rng::stream(seed, stage::LOSS);
    let times = stream
        .times()
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < p)
        .collect();
    TimestampStream::new(stream.channel.clone(), times, stream.duration)
}

/// Poisson draw helper shared with the placement model.
pub(crate) fn poisson_draw(rng: &mut Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> EmitterParams {
        EmitterParams {
            pump_rate: 2e7,
            decay_rate: 5e7,
            quantum_efficiency: 1.0,
            blinking: BlinkingParams::default(),
            initially_on: true,
        }
    }

    #[test]
    fn no_pump_gives_no_photons() {
        let p = EmitterParams {
            pump_rate: 0.0,
            ..fast()
        };
        assert!(simulate_emission(&p, 1e-3, 1).unwrap().is_empty());
    }

    #[test]
    fn emission_is_deterministic() {
        let a = simulate_emission(&EmitterParams::paper_fig3(), 0.05, 9).unwrap();
        let b = simulate_emission(&EmitterParams::paper_fig3(), 0.05, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_emission(&EmitterParams::paper_fig3(), 0.05, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn paper_scenario_rate() {
        let p = EmitterParams::paper_fig3();
        // (1/23.9 ns)/51 · 0.55 · 0.5
        assert!((p.mean_rate() - 225_613.26).abs() < 0.01, "{}", p.mean_rate());
        let detected = p.mean_rate() * LossChain::waveguide_readout().transmission();
        assert!((detected - 5538.0).abs() < 2.0, "{detected}");
    }

    #[test]
    fn power_law_duty_cycle() {
        let b = BlinkingParams {
            on_to_off_rate: 5.0,
            off_to_on_rate: 0.0,
            model: BlinkingModel::power_law(),
        };
        // Mean of t^-1.5 on [1 ms, 10 s]: (2 (√b − √a)) / (2 (1/√a − 1/√b)).
        let (a, c) = (1e-3f64, 10f64);
        let mean = (c.sqrt() - a.sqrt()) / (1.0 / a.sqrt() - 1.0 / c.sqrt());
        let expect = 0.2 / (0.2 + mean);
        assert!((b.duty_cycle() - expect).abs() < 1e-12);
    }

    #[test]
    fn dead_time_drops_close_followers() {
        let s = TimestampStream::new("a", vec![1e-6, 1.05e-6, 2e-6], 1e-5).unwrap();
        let det = DetectorParams {
            dead_time: 1e-7,
            ..DetectorParams::ideal()
        };
        let out = detect(&s, &det, 3).unwrap();
        assert_eq!(out.times(), &[1e-6, 2e-6]);
        assert_eq!(detect(&s, &DetectorParams::ideal(), 3).unwrap(), s);
    }

    #[test]
    fn split_conserves_events() {
        let s = simulate_emission(&fast(), 1e-3, 5).unwrap();
        let (a, b) = hbt_split(&s, 5);
        assert_eq!(a.merge(&b, "emission"), s);
        for x in a.times() {
            assert!(b.times().binary_search_by(|y| y.total_cmp(x)).is_err());
        }
    }

    #[test]
    fn empty_inputs() {
        let e = TimestampStream::empty("x", 1.0);
        let (a, b) = hbt_split(&e, 1);
        assert!(a.is_empty() && b.is_empty());
        assert_eq!(add_background(&e, 0.0, 1).unwrap().len(), 0);
        assert!(intensity_trace(&e, 0.1).unwrap().iter().all(|&c| c == 0));
        let chain = LossChain::default();
        let s = simulate_emission(&fast(), 1e-4, 2).unwrap();
        assert_eq!(apply_loss(&s, &chain, 1).unwrap(), s);
    }
}

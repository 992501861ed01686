//! Decibel loss chains.
//!
//! Attenuations are stored as positive numbers: a stage of `3.0` passes
//! `10^(-0.3)` of the incident photons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossStage {
    pub name: String,
    pub attenuation_db: f64,
}

impl LossStage {
    pub fn new(name: impl Into<String>, attenuation_db: f64) -> Self {
        Self {
            name: name.into(),
            attenuation_db,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossChain {
    pub stages: Vec<LossStage>,
}

impl LossChain {
    pub fn new(stages: Vec<LossStage>) -> Result<Self> {
        let chain = Self { stages };
        chain.validate()?;
        Ok(chain)
    }

    /// The four stages between the emitter and the detector in the
    /// waveguide readout: one of two output channels, the fibre-to-chip
    /// interface, spectral filtering and detector efficiency.
    pub fn waveguide_readout() -> Self {
        Self {
            stages: vec![
                LossStage::new("single_channel", 3.0),
                LossStage::new("fiber_to_chip", 5.5),
                LossStage::new("spectral_filters", 6.1),
                LossStage::new("detection_efficiency", 1.5),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.stages {
            if !(s.attenuation_db.is_finite() && s.attenuation_db >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "attenuation_db",
                    reason: format!("stage `{}` has {} dB; must be finite and >= 0", s.name, s.attenuation_db),
                });
            }
        }
        Ok(())
    }

    pub fn total_db(&self) -> f64 {
        self.stages.iter().map(|s| s.attenuation_db).sum()
    }

    pub fn transmission(&self) -> f64 {
        db_to_linear(self.total_db())
    }
}

pub fn chain_total_db(chain: &LossChain) -> f64 {
    chain.total_db()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

pub fn linear_to_db(fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction.is_finite()) {
        return Err(Error::param("fraction", "must be > 0"));
    }
    Ok(-10.0 * fraction.log10())
}

/// Rate with an optional one-sigma uncertainty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub sigma: Option<f64>,
}

/// Undo the chain: `rate · 10^(total_dB/10)`, with `sigma` scaled alike.
pub fn infer_source_rate(
    detected_rate: f64,
    sigma: Option<f64>,
    chain: &LossChain,
) -> Result<RateEstimate> {
    chain.validate()?;
    if !(detected_rate >= 0.0 && detected_rate.is_finite()) {
        return Err(Error::param("detected_rate", "must be finite and >= 0"));
    }
    if let Some(s) = sigma {
        if !(s >= 0.0) {
            return Err(Error::param("sigma", "must be >= 0"));
        }
    }
    let gain = 10f64.powf(chain.total_db() / 10.0);
    Ok(RateEstimate {
        rate: detected_rate * gain,
        sigma: sigma.map(|s| s * gain),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readout_chain_totals() {
        let c = LossChain::waveguide_readout();
        assert!((c.total_db() - 16.1).abs() < 1e-12);
        assert_eq!(chain_total_db(&LossChain::default()), 0.0);
        let single = LossChain::new(vec![LossStage::new("a", 2.5)]).unwrap();
        assert_eq!(single.total_db(), 2.5);
    }

    #[test]
    fn conversions() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(3.0103) - 0.5).abs() < 1e-4);
        // 10^(-1.61)
        assert!((db_to_linear(16.1) - 0.024547089).abs() < 1e-8);
        for db in [0.0, 0.3, 3.0, 16.1, 42.0] {
            let back = linear_to_db(db_to_linear(db)).unwrap();
            assert!((back - db).abs() <= 1e-12 * db.max(1.0));
        }
        assert!(linear_to_db(0.0).is_err());
        assert!(linear_to_db(-0.1).is_err());
    }

    #[test]
    fn infers_detected_rate() {
        let c = LossChain::waveguide_readout();
        let r = infer_source_rate(5521.0, Some(98.0), &c).unwrap();
        // 5521 · 10^1.61
        assert!((r.rate - 224_914.6).abs() < 1.0, "{}", r.rate);
        assert!((r.sigma.unwrap() - 3992.3).abs() < 0.5);
        assert_eq!(infer_source_rate(0.0, None, &c).unwrap().rate, 0.0);
        let id = infer_source_rate(123.0, None, &LossChain::default()).unwrap();
        assert_eq!(id.rate, 123.0);
    }

    #[test]
    fn negative_stage_is_rejected() {
        assert!(LossChain::new(vec![LossStage::new("gain", -1.0)]).is_err());
    }
}

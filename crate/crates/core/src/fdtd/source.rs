use serde::{Deserialize, Serialize};

use super::yee::Boundary;
use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

/// Gaussian-modulated sinusoid parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseParams {
    /// Spectral standard deviation relative to the carrier frequency.
    pub bandwidth: f64,
    pub amplitude: f64,
    /// Peak delay in units of the temporal envelope width. The pulse is
    /// switched off at twice this delay.
    pub delay_widths: f64,
}

impl Default for PulseParams {
    fn default() -> Self {
        Self {
            bandwidth: 0.2,
            amplitude: 1.0,
            delay_widths: 6.0,
        }
    }
}

/// A point current source. Position in nanometres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleSource {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
    /// Vacuum centre wavelength, nm.
    pub wavelength: f64,
    pub pulse: PulseParams,
}

impl DipoleSource {
    pub fn new(position: [f64; 3], orientation: [f64; 3], wavelength: f64) -> Self {
        Self {
            position,
            orientation,
            wavelength,
            pulse: PulseParams::default(),
        }
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (self.wavelength * 1e-9)
    }

    /// Temporal envelope standard deviation, s.
    pub fn envelope_width(&self) -> f64 {
        1.0 / (self.pulse.bandwidth * self.omega())
    }

    pub fn peak_time(&self) -> f64 {
        self.pulse.delay_widths * self.envelope_width()
    }

    /// Time after which the current is identically zero.
    pub fn end_time(&self) -> f64 {
        2.0 * self.peak_time()
    }

    pub fn waveform(&self, t: f64) -> f64 {
        if !(0.0..=self.end_time()).contains(&t) {
            return 0.0;
        }
        let tau = self.envelope_width();
        let u = t - self.peak_time();
        self.pulse.amplitude * (self.omega() * u).sin() * (-0.5 * (u / tau).powi(2)).exp()
    }

    /// Spectral level at DC relative to the carrier, dB (amplitude).
    pub fn dc_level_db(&self) -> f64 {
        let x = 1.0 / self.pulse.bandwidth;
        // |S(0)| / |S(ω0)| = exp(-(ω0 τ)² / 2) for the untruncated pulse.
        -0.5 * x * x * 20.0 / std::f64::consts::LN_10
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.orientation.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::param("orientation", "must be a unit vector"));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::param("wavelength", "must be > 0"));
        }
        if !(self.pulse.bandwidth > 0.0 && self.pulse.bandwidth < 1.0) {
            return Err(Error::param("bandwidth", "must lie in (0, 1)"));
        }
        if self.dc_level_db() > -60.0 {
            return Err(Error::param(
                "bandwidth",
                format!(
                    "pulse leaks {:.1} dB at DC; narrow the bandwidth",
                    self.dc_level_db()
                ),
            ));
        }
        Ok(())
    }

    /// Distribute the current over the surrounding Yee samples of each
    /// oriented component with trilinear weights.
    pub fn injection(
        &self,
        dims: [usize; 3],
        origin: [f64; 3],
        cell_size: f64,
        boundaries: [Boundary; 3],
    ) -> Result<SourceInjection> {
        self.validate()?;
        let mut nodes = Vec::new();
        for (comp, &o) in self.orientation.iter().enumerate() {
            if o == 0.0 {
                continue;
            }
            let mut per_axis: Vec<Vec<(usize, f64)>> = Vec::with_capacity(3);
            for a in 0..3 {
                let n = dims[a];
                if n == 1 && boundaries[a] == Boundary::Periodic {
                    per_axis.push(vec![(0, 1.0)]);
                    continue;
                }
                let u = (self.position[a] - origin[a]) / cell_size;
                let s = if a == comp { u - 1.0 } else { u - 0.5 };
                let s0 = s.floor();
                let f = s - s0;
                let mut axis = Vec::with_capacity(2);
                for (off, w) in [(0.0, 1.0 - f), (1.0, f)] {
                    if w == 0.0 {
                        continue;
                    }
                    let idx = s0 + off;
                    if idx < 0.0 || idx >= n as f64 {
                        return Err(Error::param("position", "source lies outside the grid"));
                    }
                    axis.push((idx as usize, w));
                }
                per_axis.push(axis);
            }
            for &(i, wi) in &per_axis[0] {
                for &(j, wj) in &per_axis[1] {
                    for &(k, wk) in &per_axis[2] {
                        let idx = (i * dims[1] + j) * dims[2] + k;
                        nodes.push((comp, idx, (o * wi * wj * wk) as f32));
                    }
                }
            }
        }
        Ok(SourceInjection {
            nodes,
            source: self.clone(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct SourceInjection {
    /// `(component, flat index, weight)`.
    pub nodes: Vec<(usize, usize, f32)>,
    pub source: DipoleSource,
}

impl SourceInjection {
    pub fn is_active(&self, t: f64) -> bool {
        t <= self.source.end_time()
    }

    pub(crate) fn inject(&self, e: &mut [Vec<f32>; 3], ce: &[Vec<f32>; 3], t: f64) {
        let w = self.source.waveform(t) as f32;
        if w == 0.0 {
            return;
        }
        for &(c, idx, weight) in &self.nodes {
            e[c][idx] -= ce[c][idx] * weight * w;
        }
    }

    /// Sample positions (nm) of the injection nodes.
    pub fn node_positions(&self, dims: [usize; 3], origin: [f64; 3], h: f64) -> Vec<[f64; 3]> {
        self.nodes
            .iter()
            .map(|&(c, idx, _)| {
                let k = idx % dims[2];
                let j = (idx / dims[2]) % dims[1];
                let i = idx / (dims[1] * dims[2]);
                let mut p = [0.0; 3];
                for (a, &n) in [i, j, k].iter().enumerate() {
                    let off = if a == c { 1.0 } else { 0.5 };
                    p[a] = origin[a] + (n as f64 + off) * h;
                }
                p
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pulse_has_negligible_dc() {
        let s = DipoleSource::new([0.0; 3], [0.0, 1.0, 0.0], 705.0);
        assert!(s.dc_level_db() < -60.0);
        assert!(s.validate().is_ok());
        assert_eq!(s.waveform(-1e-15), 0.0);
        assert_eq!(s.waveform(s.end_time() * 1.01), 0.0);
    }

    #[test]
    fn injection_weights_sum_to_orientation() {
        let s = DipoleSource::new([3.0, -7.0, 11.0], [0.0, 1.0, 0.0], 705.0);
        let inj = s
            .injection([20, 20, 20], [-200.0; 3], 20.0, [Boundary::Pml; 3])
            .unwrap();
        let total: f32 = inj.nodes.iter().map(|n| n.2).sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert!(inj.nodes.iter().all(|n| n.0 == 1));
    }

    #[test]
    fn centred_dipole_is_split_symmetrically_in_x() {
        // x = 0 is a cell face on an even grid: Ey samples at ±h/2.
        let s = DipoleSource::new([0.0, 0.0, 0.0], [0.0, 1.0, 0.0], 705.0);
        let inj = s
            .injection([20, 20, 20], [-200.0; 3], 20.0, [Boundary::Pml; 3])
            .unwrap();
        let pos = inj.node_positions([20, 20, 20], [-200.0; 3], 20.0);
        let xs: Vec<f64> = pos.iter().map(|p| p[0]).collect();
        assert!(xs.contains(&-10.0) && xs.contains(&10.0));
        assert!(pos.iter().all(|p| p[1] == 0.0));
    }
}

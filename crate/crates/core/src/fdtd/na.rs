//! Angular-spectrum filtering of a horizontal flux plane.
//!
//! Each staggered sample set is zero-padded, transformed, and its flux
//! summed over plane waves with `|k_t| ≤ NA·k0`. By Parseval this is the
//! flux carried by the filtered fields through the padded plane.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::monitor::{PlaneMonitor, SampleSet};
use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

fn fft2(data: &[Complex64], shape: [usize; 2], padded: [usize; 2]) -> Vec<Complex64> {
    let [n1, n2] = shape;
    let [m1, m2] = padded;
    let mut buf = vec![Complex64::new(0.0, 0.0); m1 * m2];
    for u in 0..n1 {
        buf[u * m2..u * m2 + n2].copy_from_slice(&data[u * n2..(u + 1) * n2]);
    }
    let mut planner = FftPlanner::<f64>::new();
    if m2 > 1 {
        let f = planner.plan_fft_forward(m2);
        for row in buf.chunks_mut(m2) {
            f.process(row);
        }
    }
    if m1 > 1 {
        let f = planner.plan_fft_forward(m1);
        let mut col = vec![Complex64::new(0.0, 0.0); m1];
        for v in 0..m2 {
            for u in 0..m1 {
                col[u] = buf[u * m2 + v];
            }
            f.process(&mut col);
            for u in 0..m1 {
                buf[u * m2 + v] = col[u];
            }
        }
    }
    buf
}

fn padded_len(n: usize) -> usize {
    if n == 1 {
        1
    } else {
        (2 * n).next_power_of_two()
    }
}

/// Signed wavenumber of FFT bin `m` of length `len` with spacing `h`.
fn wavenumber(m: usize, len: usize, h: f64) -> f64 {
    let s = if m <= len / 2 {
        m as f64
    } else {
        m as f64 - len as f64
    };
    2.0 * PI * s / (len as f64 * h)
}

fn set_flux(set: &SampleSet, h: f64, kmax: f64) -> f64 {
    let padded = [padded_len(set.shape[0]), padded_len(set.shape[1])];
    let e = fft2(&set.e, set.shape, padded);
    let hh = fft2(&set.h, set.shape, padded);
    let mut acc = 0.0;
    for m1 in 0..padded[0] {
        let k1 = wavenumber(m1, padded[0], h);
        for m2 in 0..padded[1] {
            let k2 = wavenumber(m2, padded[1], h);
            if k1 * k1 + k2 * k2 <= kmax * kmax {
                let i = m1 * padded[1] + m2;
                acc += (e[i] * hh[i].conj()).re;
            }
        }
    }
    acc / (padded[0] * padded[1]) as f64
}

/// Flux through `monitor` carried by plane waves inside the acceptance
/// cone of a lens with numerical aperture `na` in vacuum.
pub fn na_filtered_flux(monitor: &PlaneMonitor, na: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&na) {
        return Err(Error::param("numerical_aperture", "must lie in [0, 1]"));
    }
    // A closed aperture passes nothing, not even the normal plane wave.
    if na == 0.0 {
        return Ok(0.0);
    }
    let h = monitor.cell_size();
    let k0 = monitor.omega() / SPEED_OF_LIGHT;
    let kmax = na * k0;
    let a = set_flux(&monitor.sets[0], h, kmax);
    let b = set_flux(&monitor.sets[1], h, kmax);
    Ok(0.5 * (a - b) * h * h * monitor.sign)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parseval_with_padding() {
        let shape = [5, 3];
        let data: Vec<Complex64> = (0..15)
            .map(|i| Complex64::new(i as f64 * 0.3 - 1.0, (i % 4) as f64))
            .collect();
        let padded = [padded_len(5), padded_len(3)];
        let f = fft2(&data, shape, padded);
        let direct: f64 = data.iter().map(|z| z.norm_sqr()).sum();
        let spectral: f64 = f.iter().map(|z| z.norm_sqr()).sum::<f64>() / (16 * 8) as f64;
        assert!((direct - spectral).abs() < 1e-10 * direct);
    }

    #[test]
    fn wavenumbers_wrap() {
        assert_eq!(wavenumber(0, 8, 1.0), 0.0);
        assert!(wavenumber(5, 8, 1.0) < 0.0);
        assert_eq!(wavenumber(4, 8, 1.0), PI);
    }
}

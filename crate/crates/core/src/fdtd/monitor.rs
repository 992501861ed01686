//! Frequency-domain flux planes.
//!
//! A plane normal to axis `a` sits at the centre of cell layer `plane`
//! along `a` and spans the rectangle between the cell centres `lo[t]` and
//! `hi[t]` along each tangential axis `t`. With `(a, t1, t2)` cyclic the
//! normal Poynting component is `E_t1·H_t2 − E_t2·H_t1`; each product
//! pairs samples that share an in-plane location:
//!
//! * set A: `E_t1` with `H_t2`, staggered along `t1`, centred along `t2`,
//! * set B: `E_t2` with `H_t1`, centred along `t1`, staggered along `t2`.
//!
//! Tangential E lies in the plane; tangential H is staggered along `a` and
//! averaged over the two neighbouring faces.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::yee::YeeState;
use crate::error::{Error, Result};

/// Uniform in-plane sampling of one staggered set.
#[derive(Clone, Debug)]
pub(crate) struct SampleSet {
    /// Sample counts along `t1`, `t2`.
    pub shape: [usize; 2],
    /// Storage index of the E sample.
    e_idx: Vec<usize>,
    /// Storage indices of the two H samples straddling the plane.
    h_idx: Vec<[usize; 2]>,
    /// Trapezoid quadrature weight.
    pub weight: Vec<f64>,
    pub e: Vec<Complex64>,
    pub h: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct PlaneMonitor {
    pub name: String,
    pub axis: usize,
    pub plane: usize,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    /// `+1` counts flux along `+axis` as positive.
    pub sign: f64,
    omega: f64,
    /// Cell size, m.
    cell_size: f64,
    pub(crate) sets: [SampleSet; 2],
}

/// Sample positions and weights along one tangential axis.
fn axis_samples(lo: usize, hi: usize, n: usize, staggered: bool) -> Vec<(usize, f64)> {
    if n == 1 {
        return vec![(0, 1.0)];
    }
    if staggered {
        // Faces lo+1..=hi, midpoint rule.
        (lo..hi).map(|i| (i, 1.0)).collect()
    } else if lo == hi {
        vec![(lo, 1.0)]
    } else {
        (lo..=hi)
            .map(|i| (i, if i == lo || i == hi { 0.5 } else { 1.0 }))
            .collect()
    }
}

impl PlaneMonitor {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dims: [usize; 3],
        axis: usize,
        plane: usize,
        lo: [usize; 3],
        hi: [usize; 3],
        sign: f64,
        omega: f64,
        cell_size: f64,
    ) -> Result<Self> {
        let name = name.into();
        let t1 = (axis + 1) % 3;
        let t2 = (axis + 2) % 3;
        if plane == 0 || plane >= dims[axis] {
            return Err(Error::Monitor(format!(
                "{name}: plane index {plane} outside 1..{}",
                dims[axis]
            )));
        }
        for t in [t1, t2] {
            if dims[t] > 1 && (lo[t] >= hi[t] || hi[t] >= dims[t]) {
                return Err(Error::Monitor(format!(
                    "{name}: tangential range {}..={} invalid along axis {t}",
                    lo[t], hi[t]
                )));
            }
        }
        let strides = [dims[1] * dims[2], dims[2], 1];
        let build = |stag1: bool| -> SampleSet {
            let s1 = axis_samples(lo[t1], hi[t1], dims[t1], stag1);
            let s2 = axis_samples(lo[t2], hi[t2], dims[t2], !stag1);
            let mut set = SampleSet {
                shape: [s1.len(), s2.len()],
                e_idx: Vec::with_capacity(s1.len() * s2.len()),
                h_idx: Vec::with_capacity(s1.len() * s2.len()),
                weight: Vec::with_capacity(s1.len() * s2.len()),
                e: vec![Complex64::new(0.0, 0.0); s1.len() * s2.len()],
                h: vec![Complex64::new(0.0, 0.0); s1.len() * s2.len()],
            };
            for &(u, wu) in &s1 {
                for &(v, wv) in &s2 {
                    let base = u * strides[t1] + v * strides[t2];
                    let here = base + plane * strides[axis];
                    let below = base + (plane - 1) * strides[axis];
                    set.e_idx.push(here);
                    set.h_idx.push([below, here]);
                    set.weight.push(wu * wv);
                }
            }
            set
        };
        Ok(Self {
            name,
            axis,
            plane,
            lo,
            hi,
            sign,
            omega,
            cell_size,
            sets: [build(true), build(false)],
        })
    }

    fn components(&self) -> [(usize, usize); 2] {
        let t1 = (self.axis + 1) % 3;
        let t2 = (self.axis + 2) % 3;
        [(t1, t2), (t2, t1)]
    }

    /// Add the current fields to the running DFT. Call once after every
    /// step; H is taken at `(n − 1/2)·dt` and E at `n·dt`.
    pub fn accumulate(&mut self, state: &YeeState) {
        let n = state.step_index as f64;
        let dt = state.dt;
        let pe = Complex64::from_polar(dt, -self.omega * n * dt);
        let ph = Complex64::from_polar(0.5 * dt, -self.omega * (n - 0.5) * dt);
        let comps = self.components();
        for (set, &(ce, ch)) in self.sets.iter_mut().zip(&comps) {
            let e = &state.e[ce];
            let h = &state.h[ch];
            for (m, &i) in set.e_idx.iter().enumerate() {
                set.e[m] += pe * e[i] as f64;
            }
            for (m, &[a, b]) in set.h_idx.iter().enumerate() {
                // ph carries the factor 1/2 of the face average.
                set.h[m] += ph * (h[a] as f64 + h[b] as f64);
            }
        }
    }

    /// Time-averaged power through the plane from the accumulated DFT.
    pub fn flux(&self) -> f64 {
        let mut acc = 0.0;
        for (s, set) in self.sets.iter().enumerate() {
            let sgn = if s == 0 { 1.0 } else { -1.0 };
            let sum: f64 = set
                .e
                .iter()
                .zip(&set.h)
                .zip(&set.weight)
                .map(|((e, h), w)| w * (e * h.conj()).re)
                .sum();
            acc += sgn * sum;
        }
        0.5 * acc * self.cell_size * self.cell_size * self.sign
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn sample_count(&self) -> usize {
        self.sets.iter().map(|s| s.e.len()).sum()
    }
}

/// Six planes enclosing the cell `centre` at ±`half` cells, outward
/// positive. Faces normal to single-cell axes are omitted.
pub fn source_box(
    dims: [usize; 3],
    centre: [usize; 3],
    half: usize,
    omega: f64,
    cell_size: f64,
) -> Result<Vec<PlaneMonitor>> {
    let mut lo = [0; 3];
    let mut hi = [0; 3];
    for a in 0..3 {
        if dims[a] == 1 {
            continue;
        }
        if centre[a] < half + 1 || centre[a] + half >= dims[a] {
            return Err(Error::Monitor(format!(
                "source box of half-width {half} does not fit along axis {a}"
            )));
        }
        lo[a] = centre[a] - half;
        hi[a] = centre[a] + half;
    }
    let mut out = Vec::with_capacity(6);
    for a in 0..3 {
        if dims[a] == 1 {
            continue;
        }
        for (plane, sign, tag) in [(lo[a], -1.0, "lo"), (hi[a], 1.0, "hi")] {
            out.push(PlaneMonitor::new(
                format!("box_{}{}", ["x", "y", "z"][a], tag),
                dims,
                a,
                plane,
                lo,
                hi,
                sign,
                omega,
                cell_size,
            )?);
        }
    }
    Ok(out)
}

/// Named flux value for reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorFlux {
    pub name: String,
    pub axis: usize,
    pub flux: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_weights_cover_the_rectangle() {
        let c = axis_samples(2, 6, 10, false);
        let s = axis_samples(2, 6, 10, true);
        let wc: f64 = c.iter().map(|x| x.1).sum();
        let ws: f64 = s.iter().map(|x| x.1).sum();
        assert_eq!(wc, 4.0);
        assert_eq!(ws, 4.0);
        assert_eq!(s.first().unwrap().0, 2);
        assert_eq!(s.last().unwrap().0, 5);
    }

    #[test]
    fn box_faces_close() {
        let b = source_box([20, 20, 20], [10, 10, 10], 3, 1.0, 1.0).unwrap();
        assert_eq!(b.len(), 6);
        let flat = source_box([20, 1, 20], [10, 0, 10], 3, 1.0, 1.0).unwrap();
        assert_eq!(flat.len(), 4);
        assert!(source_box([20, 20, 20], [2, 10, 10], 3, 1.0, 1.0).is_err());
    }
}

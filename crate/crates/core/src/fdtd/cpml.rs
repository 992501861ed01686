//! Convolutional PML with polynomial grading and a complex frequency
//! shift.
//!
//! The main update uses unstretched differences; inside the layers the
//! update adds `(1/κ − 1)·d + ψ` for every difference `d` taken along the
//! layer normal, with `ψ ← b·ψ + c·d`.
//!
//! ψ layouts, all partitioned by x index so slabs can be updated
//! independently: x layer `[slot][j][k]`, y layer `[i][slot][k]`, z layer
//! `[i][j][slot]`.

use serde::{Deserialize, Serialize};

use super::yee::Boundary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmlParams {
    pub cells: usize,
    /// Polynomial grading order of σ and κ.
    pub order: f64,
    /// Multiplier on the usual optimum `σ_max = 0.8 (m + 1) / (η0 h)`.
    pub sigma_scale: f64,
    pub kappa_max: f64,
    /// CFS shift at the inner layer edge, as a fraction of the source
    /// angular frequency.
    pub alpha_fraction: f64,
}

impl Default for PmlParams {
    fn default() -> Self {
        Self {
            cells: 10,
            order: 3.0,
            sigma_scale: 1.0,
            kappa_max: 2.0,
            alpha_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Profile {
    pub b: Vec<f32>,
    pub c: Vec<f32>,
    pub kinv1: Vec<f32>,
}

impl Profile {
    #[inline(always)]
    pub fn at(&self, i: usize) -> (f32, f32, f32) {
        (self.b[i], self.c[i], self.kinv1[i])
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct AxisLayer {
    /// Indices along the axis that lie inside a layer, ascending.
    pub layers: Vec<usize>,
    /// ψ slot of each index along the axis.
    pub slot: Vec<Option<usize>>,
    /// Coefficients for differences of E (located on faces, used by H).
    pub at_face: Profile,
    /// Coefficients for differences of H (located at centres, used by E).
    pub at_center: Profile,
}

#[derive(Clone, Debug, Default)]
pub struct Cpml {
    axes: [Option<AxisLayer>; 3],
}

/// Auxiliary ψ fields, two per field kind per absorbing axis.
#[derive(Clone, Debug, Default)]
pub struct CpmlState {
    pub(crate) psi_h: [[Vec<f32>; 2]; 3],
    pub(crate) psi_e: [[Vec<f32>; 2]; 3],
}

fn depth(p: f64, n_cells: usize, thickness: usize) -> f64 {
    let n = n_cells as f64;
    let t = thickness as f64;
    let d = if p < t {
        (t - p) / t
    } else if p > n - t {
        (p - (n - t)) / t
    } else {
        0.0
    };
    d.clamp(0.0, 1.0)
}


impl Cpml {
    pub fn none() -> Self {
        Self::default()
    }

    /// `courant` is `c·dt/h`, `omega_dt` the source angular frequency times
    /// the time step.
    pub fn new(
        dims: [usize; 3],
        boundaries: [Boundary; 3],
        params: &PmlParams,
        courant: f64,
        omega_dt: f64,
    ) -> Self {
        let mut axes: [Option<AxisLayer>; 3] = Default::default();
        for a in 0..3 {
            if boundaries[a] != Boundary::Pml || params.cells == 0 {
                continue;
            }
            let n = dims[a];
            let t = params.cells.min(n / 2);
            let m = params.order;
            let sigma_max = params.sigma_scale * 0.8 * (m + 1.0) * courant;
            let alpha_max = params.alpha_fraction * omega_dt;
            let profile = |offset: f64| -> Profile {
                let mut p = Profile {
                    b: vec![0.0; n],
                    c: vec![0.0; n],
                    kinv1: vec![0.0; n],
                };
                for idx in 0..n {
                    let rho = depth(idx as f64 + offset, n, t);
                    if rho == 0.0 {
                        continue;
                    }
                    let g = rho.powf(m);
                    let sigma = sigma_max * g;
                    let kappa = 1.0 + (params.kappa_max - 1.0) * g;
                    let alpha = alpha_max * (1.0 - rho);
                    let b = (-(sigma / kappa + alpha)).exp();
                    let denom = sigma * kappa + kappa * kappa * alpha;
                    let c = if denom > 0.0 {
                        sigma / denom * (b - 1.0)
                    } else {
                        0.0
                    };
                    p.b[idx] = b as f32;
                    p.c[idx] = c as f32;
                    p.kinv1[idx] = (1.0 / kappa - 1.0) as f32;
                }
                p
            };
            let layers: Vec<usize> = (0..n).filter(|&i| i < t || i >= n - t).collect();
            let mut slot = vec![None; n];
            for (s, &l) in layers.iter().enumerate() {
                slot[l] = Some(s);
            }
            axes[a] = Some(AxisLayer {
                layers,
                slot,
                at_face: profile(1.0),
                at_center: profile(0.5),
            });
        }
        Self { axes }
    }

    pub fn thickness(&self, axis: usize) -> usize {
        self.axes[axis]
            .as_ref()
            .map(|l| l.layers.len() / 2)
            .unwrap_or(0)
    }

    pub fn new_state(&self, dims: [usize; 3]) -> CpmlState {
        let mut st = CpmlState::default();
        for a in 0..3 {
            if let Some(layer) = &self.axes[a] {
                let mut perp = 1;
                for (b, &n) in dims.iter().enumerate() {
                    if b != a {
                        perp *= n;
                    }
                }
                let len = layer.layers.len() * perp;
                st.psi_h[a] = [vec![0.0; len], vec![0.0; len]];
                st.psi_e[a] = [vec![0.0; len], vec![0.0; len]];
            }
        }
        st
    }

    pub(crate) fn layer(&self, axis: usize) -> Option<&AxisLayer> {
        self.axes[axis].as_ref()
    }
}

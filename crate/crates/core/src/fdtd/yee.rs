//! Staggered-grid field storage and the leapfrog update.
//!
//! Layout convention (cell units, `i` along x): tangential samples sit at
//! cell centres `i + 1/2` and staggered samples on the upper cell face
//! `i + 1`. Along its own axis a component is staggered, e.g. `Ex(i, j, k)`
//! lives at `(i + 1, j + 1/2, k + 1/2)` and `Hx(i, j, k)` at
//! `(i + 1/2, j + 1, k + 1)`.
//!
//! Fields are normalised with `H' = η0·H`, which turns the update
//! coefficients into the Courant number `S = c·dt/h` divided by the local
//! relative permittivity.
//!
//! On non-periodic axes the staggered samples on the outermost face are
//! held at zero, so both ends of the axis terminate the same way and the
//! lattice is mirror symmetric about the domain centre.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cpml::{AxisLayer, Cpml, CpmlState};
use super::source::SourceInjection;
use crate::error::{Error, Result};
use crate::geometry::PermittivityGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Absorbing layer inside the domain edge, terminated by a closed wall.
    Pml,
    /// Closed wall without absorption.
    Closed,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    E,
    H,
}

/// Discrete electromagnetic state.
#[derive(Clone, Debug)]
pub struct YeeState {
    pub dims: [usize; 3],
    pub e: [Vec<f32>; 3],
    pub h: [Vec<f32>; 3],
    pub cpml: CpmlState,
    pub dt: f64,
    pub step_index: usize,
    /// Energy from the most recent stability check.
    pub last_energy: Option<f64>,
}

impl YeeState {
    pub fn zeros(solver: &Solver) -> Self {
        let n = solver.dims.iter().product();
        Self {
            dims: solver.dims,
            e: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            h: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            cpml: solver.cpml.new_state(solver.dims),
            dt: solver.dt,
            step_index: 0,
            last_energy: None,
        }
    }

    pub fn field(&self, f: Field, axis: usize) -> &[f32] {
        match f {
            Field::E => &self.e[axis],
            Field::H => &self.h[axis],
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn is_finite(&self) -> bool {
        self.e
            .iter()
            .chain(self.h.iter())
            .all(|c| c.iter().all(|v| v.is_finite()))
    }
}

/// Immutable update machinery for one grid.
#[derive(Clone, Debug)]
pub struct Solver {
    pub dims: [usize; 3],
    /// Cell size, metres.
    pub cell_size: f64,
    pub dt: f64,
    /// `c·dt/h`.
    pub courant: f32,
    pub boundaries: [Boundary; 3],
    /// `S / eps_r` sampled at the Ex, Ey, Ez locations.
    pub ce: [Vec<f32>; 3],
    pub cpml: Cpml,
    /// Full energy (and finiteness) check every this many steps.
    pub check_interval: usize,
    zeros: Vec<f32>,
}

impl Solver {
    /// `cell_size` in metres, `dt` in seconds. `dt` is taken as given so
    /// that unstable configurations can be studied; use
    /// [`super::cfl_timestep`] to obtain a stable one.
    pub fn new(
        grid: &PermittivityGrid,
        cell_size: f64,
        dt: f64,
        boundaries: [Boundary; 3],
        cpml: Cpml,
    ) -> Result<Self> {
        let dims = grid.dims;
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::param("dims", "grid must be non-empty"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", "must be > 0"));
        }
        let courant = (crate::SPEED_OF_LIGHT * dt / cell_size) as f32;
        let ce = edge_coefficients(grid, boundaries, courant);
        Ok(Self {
            dims,
            cell_size,
            dt,
            courant,
            boundaries,
            ce,
            cpml,
            check_interval: 10,
            zeros: vec![0.0; dims[2]],
        })
    }

    #[inline]
    fn row(&self, i: usize, j: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2]
    }

    /// Relative permittivity at the Ex/Ey/Ez sample points.
    pub fn eps_at(&self, axis: usize, idx: usize) -> f64 {
        self.courant as f64 / self.ce[axis][idx] as f64
    }

    /// One leapfrog step: H from n−1/2 to n+1/2, then E from n to n+1 with
    /// the source current evaluated at n+1/2.
    pub fn step(&self, state: &mut YeeState, source: Option<&SourceInjection>) -> Result<()> {
        self.update_h(state);
        self.zero_boundary(&mut state.h, Field::H);
        self.update_e(state);
        if let Some(src) = source {
            let t = (state.step_index as f64 + 0.5) * self.dt;
            src.inject(&mut state.e, &self.ce, t);
        }
        self.zero_boundary(&mut state.e, Field::E);
        state.step_index += 1;
        if state.step_index % self.check_interval == 0 {
            let energy = self.energy(state);
            if !energy.is_finite() {
                return Err(Error::Unstable {
                    step: state.step_index,
                });
            }
            state.last_energy = Some(energy);
        }
        Ok(())
    }

    /// `Σ eps_r·E² + H'²` over the grid (proportional to field energy).
    /// Slab sums are combined in slab order so the value does not depend
    /// on thread partitioning.
    pub fn energy(&self, state: &YeeState) -> f64 {
        let plane = self.dims[1] * self.dims[2];
        let s = self.courant as f64;
        let partial: Vec<f64> = (0..self.dims[0])
            .into_par_iter()
            .map(|i| {
                let r = i * plane..(i + 1) * plane;
                let mut acc = 0.0f64;
                for a in 0..3 {
                    let e = &state.e[a][r.clone()];
                    let ce = &self.ce[a][r.clone()];
                    for (v, c) in e.iter().zip(ce) {
                        acc += (*v as f64).powi(2) * s / *c as f64;
                    }
                    for v in &state.h[a][r.clone()] {
                        acc += (*v as f64).powi(2);
                    }
                }
                acc
            })
            .collect();
        partial.iter().sum()
    }

    /// Neighbour row along x or y, `None` meaning outside a closed wall.
    fn neighbour(&self, axis: usize, idx: usize, up: bool) -> Option<usize> {
        let n = self.dims[axis];
        let periodic = self.boundaries[axis] == Boundary::Periodic;
        if up {
            if idx + 1 < n {
                Some(idx + 1)
            } else if periodic {
                Some(0)
            } else {
                None
            }
        } else if idx > 0 {
            Some(idx - 1)
        } else if periodic {
            Some(n - 1)
        } else {
            None
        }
    }

    fn row_or_zero<'a>(&'a self, f: &'a [f32], i: Option<usize>, j: Option<usize>) -> &'a [f32] {
        match (i, j) {
            (Some(i), Some(j)) => {
                let r = self.row(i, j);
                &f[r..r + self.dims[2]]
            }
            _ => &self.zeros,
        }
    }

    fn update_h(&self, state: &mut YeeState) {
        let [_, ny, nz] = self.dims;
        let plane = ny * nz;
        let s = self.courant;
        let periodic_z = self.boundaries[2] == Boundary::Periodic;
        let YeeState { e, h, cpml, .. } = state;
        let [ex, ey, ez] = &*e;
        let [hx, hy, hz] = h;
        let [ppx, ppy, ppz] = &mut cpml.psi_h;
        let (lx, ly, lz) = (self.cpml.layer(0), self.cpml.layer(1), self.cpml.layer(2));
        let psi_x = split_psi(ppx, lx, 0, self.dims);
        let psi_y = split_psi(ppy, ly, 1, self.dims);
        let psi_z = split_psi(ppz, lz, 2, self.dims);
        hx.par_chunks_mut(plane)
            .zip(hy.par_chunks_mut(plane))
            .zip(hz.par_chunks_mut(plane))
            .zip(psi_x.into_par_iter())
            .zip(psi_y.into_par_iter())
            .zip(psi_z.into_par_iter())
            .enumerate()
            .for_each(|(i, (((((hx, hy), hz), mut px), mut py), mut pz))| {
                let ip = self.neighbour(0, i, true);
                for j in 0..ny {
                    let jp = self.neighbour(1, j, true);
                    let r = self.row(i, j);
                    let ex0 = &ex[r..r + nz];
                    let ey0 = &ey[r..r + nz];
                    let ez0 = &ez[r..r + nz];
                    let ez_jp = self.row_or_zero(ez, Some(i), jp);
                    let ex_jp = self.row_or_zero(ex, Some(i), jp);
                    let ez_ip = self.row_or_zero(ez, ip, Some(j));
                    let ey_ip = self.row_or_zero(ey, ip, Some(j));
                    let o = j * nz;
                    let hx = &mut hx[o..o + nz];
                    let hy = &mut hy[o..o + nz];
                    let hz = &mut hz[o..o + nz];
                    let m = nz - 1;
                    {
                        let (ex0k, ex0k1) = (&ex0[..m], &ex0[1..]);
                        let (ey0k, ey0k1) = (&ey0[..m], &ey0[1..]);
                        let (hxm, hym) = (&mut hx[..m], &mut hy[..m]);
                        let (ez0m, ez_jpm, ez_ipm) = (&ez0[..m], &ez_jp[..m], &ez_ip[..m]);
                        for k in 0..m {
                            hxm[k] -= s * ((ez_jpm[k] - ez0m[k]) - (ey0k1[k] - ey0k[k]));
                            hym[k] -= s * ((ex0k1[k] - ex0k[k]) - (ez_ipm[k] - ez0m[k]));
                        }
                    }
                    {
                        let k = m;
                        let (ex_up, ey_up) = if periodic_z {
                            (ex0[0], ey0[0])
                        } else {
                            (0.0, 0.0)
                        };
                        hx[k] -= s * ((ez_jp[k] - ez0[k]) - (ey_up - ey0[k]));
                        hy[k] -= s * ((ex_up - ex0[k]) - (ez_ip[k] - ez0[k]));
                    }
                    for k in 0..nz {
                        hz[k] -= s * ((ey_ip[k] - ey0[k]) - (ex_jp[k] - ex0[k]));
                    }

                    // Stretched-coordinate corrections, H_c -= S ε_cab [(1/κ-1) D_a E_b + ψ].
                    if let (Some([p0, p1]), Some(l)) = (px.as_mut(), lx) {
                        let pr = l.at_face.at(i);
                        stretch(hy, ez_ip, ez0, &mut p0[o..o + nz], pr, s);
                        stretch(hz, ey_ip, ey0, &mut p1[o..o + nz], pr, -s);
                    }
                    if let (Some([p0, p1]), Some(l)) = (py.as_mut(), ly) {
                        if let Some(sl) = l.slot[j] {
                            let pr = l.at_face.at(j);
                            let q = sl * nz;
                            stretch(hz, ex_jp, ex0, &mut p0[q..q + nz], pr, s);
                            stretch(hx, ez_jp, ez0, &mut p1[q..q + nz], pr, -s);
                        }
                    }
                    if let (Some([p0, p1]), Some(l)) = (pz.as_mut(), lz) {
                        let ns = l.layers.len();
                        let q = j * ns;
                        stretch_z(hx, ey0, &mut p0[q..q + ns], l, true, |_| s);
                        stretch_z(hy, ex0, &mut p1[q..q + ns], l, true, |_| -s);
                    }
                }
            });
    }

    fn update_e(&self, state: &mut YeeState) {
        let [_, ny, nz] = self.dims;
        let plane = ny * nz;
        let periodic_z = self.boundaries[2] == Boundary::Periodic;
        let YeeState { e, h, cpml, .. } = state;
        let [hx, hy, hz] = &*h;
        let [cx, cy, cz] = &self.ce;
        let [ex, ey, ez] = e;
        let [ppx, ppy, ppz] = &mut cpml.psi_e;
        let (lx, ly, lz) = (self.cpml.layer(0), self.cpml.layer(1), self.cpml.layer(2));
        let psi_x = split_psi(ppx, lx, 0, self.dims);
        let psi_y = split_psi(ppy, ly, 1, self.dims);
        let psi_z = split_psi(ppz, lz, 2, self.dims);
        ex.par_chunks_mut(plane)
            .zip(ey.par_chunks_mut(plane))
            .zip(ez.par_chunks_mut(plane))
            .zip(psi_x.into_par_iter())
            .zip(psi_y.into_par_iter())
            .zip(psi_z.into_par_iter())
            .enumerate()
            .for_each(|(i, (((((ex, ey), ez), mut px), mut py), mut pz))| {
                let im = self.neighbour(0, i, false);
                for j in 0..ny {
                    let jm = self.neighbour(1, j, false);
                    let r = self.row(i, j);
                    let hx0 = &hx[r..r + nz];
                    let hy0 = &hy[r..r + nz];
                    let hz0 = &hz[r..r + nz];
                    let hz_jm = self.row_or_zero(hz, Some(i), jm);
                    let hx_jm = self.row_or_zero(hx, Some(i), jm);
                    let hz_im = self.row_or_zero(hz, im, Some(j));
                    let hy_im = self.row_or_zero(hy, im, Some(j));
                    let (cx, cy, cz) = (&cx[r..r + nz], &cy[r..r + nz], &cz[r..r + nz]);
                    let o = j * nz;
                    let ex = &mut ex[o..o + nz];
                    let ey = &mut ey[o..o + nz];
                    let ez = &mut ez[o..o + nz];
                    {
                        let k = 0;
                        let (hy_dn, hx_dn) = if periodic_z {
                            (hy0[nz - 1], hx0[nz - 1])
                        } else {
                            (0.0, 0.0)
                        };
                        ex[k] += cx[k] * ((hz0[k] - hz_jm[k]) - (hy0[k] - hy_dn));
                        ey[k] += cy[k] * ((hx0[k] - hx_dn) - (hz0[k] - hz_im[k]));
                    }
                    {
                        let m = nz - 1;
                        let (hy0k, hy0km) = (&hy0[1..], &hy0[..m]);
                        let (hx0k, hx0km) = (&hx0[1..], &hx0[..m]);
                        let (hz0k, hz_jmk, hz_imk) = (&hz0[1..], &hz_jm[1..], &hz_im[1..]);
                        let (cxk, cyk) = (&cx[1..], &cy[1..]);
                        let (exk, eyk) = (&mut ex[1..], &mut ey[1..]);
                        for k in 0..m {
                            exk[k] += cxk[k] * ((hz0k[k] - hz_jmk[k]) - (hy0k[k] - hy0km[k]));
                            eyk[k] += cyk[k] * ((hx0k[k] - hx0km[k]) - (hz0k[k] - hz_imk[k]));
                        }
                    }
                    for k in 0..nz {
                        ez[k] += cz[k] * ((hy0[k] - hy_im[k]) - (hx0[k] - hx_jm[k]));
                    }

                    // E_c += ce ε_cab [(1/κ-1) D_a H_b + ψ].
                    if let (Some([p0, p1]), Some(l)) = (px.as_mut(), lx) {
                        let pr = l.at_center.at(i);
                        stretch_e(ey, hz0, hz_im, &mut p0[o..o + nz], pr, cy, -1.0);
                        stretch_e(ez, hy0, hy_im, &mut p1[o..o + nz], pr, cz, 1.0);
                    }
                    if let (Some([p0, p1]), Some(l)) = (py.as_mut(), ly) {
                        if let Some(sl) = l.slot[j] {
                            let pr = l.at_center.at(j);
                            let q = sl * nz;
                            stretch_e(ez, hx0, hx_jm, &mut p0[q..q + nz], pr, cz, -1.0);
                            stretch_e(ex, hz0, hz_jm, &mut p1[q..q + nz], pr, cx, 1.0);
                        }
                    }
                    if let (Some([p0, p1]), Some(l)) = (pz.as_mut(), lz) {
                        let ns = l.layers.len();
                        let q = j * ns;
                        stretch_z(ex, hy0, &mut p0[q..q + ns], l, false, |k| -cx[k]);
                        stretch_z(ey, hx0, &mut p1[q..q + ns], l, false, |k| cy[k]);
                    }
                }
            });
    }

    /// Hold the staggered samples on the outer face of each closed axis at
    /// zero: E along its own axis, H along the two others.
    fn zero_boundary(&self, f: &mut [Vec<f32>; 3], kind: Field) {
        let [nx, ny, nz] = self.dims;
        let plane = ny * nz;
        for axis in 0..3 {
            if self.boundaries[axis] == Boundary::Periodic {
                continue;
            }
            for comp in 0..3 {
                let staggered = match kind {
                    Field::E => comp == axis,
                    Field::H => comp != axis,
                };
                if !staggered {
                    continue;
                }
                let v = &mut f[comp];
                match axis {
                    0 => v[(nx - 1) * plane..].fill(0.0),
                    1 => {
                        for i in 0..nx {
                            let r = self.row(i, ny - 1);
                            v[r..r + nz].fill(0.0);
                        }
                    }
                    _ => {
                        for r in (nz - 1..v.len()).step_by(nz) {
                            v[r] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

type PsiPair<'a> = Option<[&'a mut [f32]; 2]>;

/// Hand out the ψ arrays of one axis as per-x-slab chunks.
fn split_psi<'a>(
    psi: &'a mut [Vec<f32>; 2],
    layer: Option<&AxisLayer>,
    axis: usize,
    dims: [usize; 3],
) -> Vec<PsiPair<'a>> {
    let [nx, ny, nz] = dims;
    let mut out: Vec<PsiPair<'a>> = (0..nx).map(|_| None).collect();
    let Some(layer) = layer else { return out };
    let [p0, p1] = psi;
    let ns = layer.layers.len();
    if axis == 0 {
        let plane = ny * nz;
        for ((&i, a), b) in layer
            .layers
            .iter()
            .zip(p0.chunks_mut(plane))
            .zip(p1.chunks_mut(plane))
        {
            out[i] = Some([a, b]);
        }
    } else {
        let chunk = if axis == 1 { ns * nz } else { ny * ns };
        for ((o, a), b) in out
            .iter_mut()
            .zip(p0.chunks_mut(chunk))
            .zip(p1.chunks_mut(chunk))
        {
            *o = Some([a, b]);
        }
    }
    out
}

/// `target += coef·((1/κ − 1)·d + ψ)` with `d = up − dn` and the ψ
/// recursion, for a whole row at fixed profile position.
#[inline(always)]
fn stretch(target: &mut [f32], up: &[f32], dn: &[f32], psi: &mut [f32], p: (f32, f32, f32), coef: f32) {
    let (b, c, kinv1) = p;
    let n = target.len();
    let (up, dn, psi) = (&up[..n], &dn[..n], &mut psi[..n]);
    for k in 0..n {
        let d = up[k] - dn[k];
        let q = b * psi[k] + c * d;
        psi[k] = q;
        target[k] += coef * (kinv1 * d + q);
    }
}

#[inline(always)]
fn stretch_e(
    target: &mut [f32],
    up: &[f32],
    dn: &[f32],
    psi: &mut [f32],
    p: (f32, f32, f32),
    ce: &[f32],
    sign: f32,
) {
    let (b, c, kinv1) = p;
    let n = target.len();
    let (up, dn, psi, ce) = (&up[..n], &dn[..n], &mut psi[..n], &ce[..n]);
    for k in 0..n {
        let d = up[k] - dn[k];
        let q = b * psi[k] + c * d;
        psi[k] = q;
        target[k] += sign * ce[k] * (kinv1 * d + q);
    }
}

/// Correction for differences along the row itself (z). `forward`
/// selects the H-update difference `f[k+1] − f[k]`, otherwise
/// `f[k] − f[k−1]`; samples beyond a closed wall are zero.
#[inline(always)]
fn stretch_z(
    target: &mut [f32],
    src: &[f32],
    psi: &mut [f32],
    layer: &AxisLayer,
    forward: bool,
    coef: impl Fn(usize) -> f32,
) {
    let n = src.len();
    let prof = if forward {
        &layer.at_face
    } else {
        &layer.at_center
    };
    for (sl, &k) in layer.layers.iter().enumerate() {
        let d = if forward {
            if k + 1 < n {
                src[k + 1] - src[k]
            } else {
                -src[k]
            }
        } else if k > 0 {
            src[k] - src[k - 1]
        } else {
            src[k]
        };
        let (b, c, kinv1) = prof.at(k);
        let q = b * psi[sl] + c * d;
        psi[sl] = q;
        target[k] += coef(k) * (kinv1 * d + q);
    }
}

/// Average the cell permittivities adjacent to each edge sample. On a
/// periodic axis the last face wraps onto the first cell.
fn edge_coefficients(
    grid: &PermittivityGrid,
    boundaries: [Boundary; 3],
    courant: f32,
) -> [Vec<f32>; 3] {
    let [nx, ny, nz] = grid.dims;
    let mut out = [
        vec![0.0f32; grid.cell_count()],
        vec![0.0f32; grid.cell_count()],
        vec![0.0f32; grid.cell_count()],
    ];
    for (axis, coef) in out.iter_mut().enumerate() {
        let n = grid.dims[axis];
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    let mut idx = [i, j, k];
                    let a = grid.get(i, j, k);
                    let up = idx[axis] + 1;
                    let b = if up < n {
                        idx[axis] = up;
                        grid.get(idx[0], idx[1], idx[2])
                    } else if boundaries[axis] == Boundary::Periodic {
                        idx[axis] = 0;
                        grid.get(idx[0], idx[1], idx[2])
                    } else {
                        a
                    };
                    coef[grid.index(i, j, k)] = courant / (0.5 * (a + b)) as f32;
                }
            }
        }
    }
    out
}

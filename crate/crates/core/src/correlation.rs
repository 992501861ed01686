//! Coincidence histograms, g²(τ) normalisation, antibunching fits and
//! background correction.
//!
//! Bins are centred on `k·Δ` for `k = −K..=K`. A delay `d = t₂ − t₁` falls
//! in bin `sign(d)·k` where `k` is the smallest integer with
//! `|d| < (k + 1/2)·Δ`; delays with `|d| ≥ (K + 1/2)·Δ` are discarded. The
//! rule depends on `|d|` only, so swapping the channels mirrors the
//! histogram exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::TimestampStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Histogram {
    pub bin_width: f64,
    /// `K`; the histogram has `2K + 1` bins.
    pub half_bins: usize,
    pub counts: Vec<u64>,
    pub rate1: f64,
    pub rate2: f64,
    pub duration: f64,
}

impl G2Histogram {
    pub fn n_bins(&self) -> usize {
        2 * self.half_bins + 1
    }

    pub fn centers(&self) -> Vec<f64> {
        let k = self.half_bins as i64;
        (-k..=k).map(|i| i as f64 * self.bin_width).collect()
    }

    pub fn edges(&self) -> Vec<f64> {
        let k = self.half_bins as i64;
        (-k..=k + 1)
            .map(|i| (i as f64 - 0.5) * self.bin_width)
            .collect()
    }

    /// Half-range `(K + 1/2)·Δ`.
    pub fn window(&self) -> f64 {
        half_edge(self.half_bins, self.bin_width)
    }

    pub fn total_pairs(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau_s,count")?;
        for (t, c) in self.centers().iter().zip(&self.counts) {
            writeln!(w, "{t:.11e},{c}")?;
        }
        Ok(())
    }
}

#[inline]
fn half_edge(k: usize, width: f64) -> f64 {
    (k as f64 + 0.5) * width
}

/// Bin offset `k` for `|d| < (K + 1/2)·Δ`, from edge comparisons.
#[inline]
fn bin_offset(abs_d: f64, width: f64) -> usize {
    let mut k = (abs_d / width + 0.5).floor().max(0.0) as usize;
    while abs_d >= half_edge(k, width) {
        k += 1;
    }
    while k > 0 && abs_d < half_edge(k - 1, width) {
        k -= 1;
    }
    k
}

fn half_bins_for(window: f64, bin_width: f64) -> Result<usize> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::param("bin_width", "must be > 0"));
    }
    let k = (window / bin_width).round();
    if !(k.is_finite() && k >= 1.0) {
        return Err(Error::param("window", "must be at least one bin_width"));
    }
    Ok(k as usize)
}

/// Count ordered pairs `t₂ − t₁` within roughly `±window`. The histogram
/// spans `(K + 1/2)·Δ` on each side with `K = round(window/Δ)`.
pub fn correlate(
    s1: &TimestampStream,
    s2: &TimestampStream,
    window: f64,
    bin_width: f64,
) -> Result<G2Histogram> {
    let half = half_bins_for(window, bin_width)?;
    let w = half_edge(half, bin_width);
    let mut counts = vec![0u64; 2 * half + 1];
    let (a, b) = (s1.times(), s2.times());
    let mut lo = 0;
    for &t1 in a {
        while lo < b.len() && t1 - b[lo] >= w {
            lo += 1;
        }
        let mut j = lo;
        while j < b.len() {
            let d = b[j] - t1;
            if d >= w {
                break;
            }
            let k = bin_offset(d.abs(), bin_width);
            let idx = if d < 0.0 { half - k } else { half + k };
            counts[idx] += 1;
            j += 1;
        }
    }
    let duration = s1.duration.max(s2.duration);
    Ok(G2Histogram {
        bin_width,
        half_bins: half,
        counts,
        rate1: s1.rate(),
        rate2: s2.rate(),
        duration,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Curve {
    pub tau: Vec<f64>,
    pub g2: Vec<f64>,
    /// One-sigma Poisson error. Empty bins carry the error of one count.
    pub sigma: Vec<f64>,
}

impl G2Curve {
    /// Noise-free samples of `1 − b·exp(−|τ|/τ_l)` with unit errors.
    pub fn from_model(tau: Vec<f64>, b: f64, tau_l: f64) -> Self {
        let g2 = tau.iter().map(|&t| antibunching_model(t, b, tau_l)).collect();
        let sigma = vec![1.0; tau.len()];
        Self { tau, g2, sigma }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// Value at the bin nearest to τ = 0.
    pub fn at_zero(&self) -> Option<f64> {
        (0..self.len())
            .min_by(|&i, &j| self.tau[i].abs().total_cmp(&self.tau[j].abs()))
            .map(|i| self.g2[i])
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tau_s,g2,sigma")?;
        for i in 0..self.len() {
            writeln!(w, "{:.11e},{:.11e},{:.11e}", self.tau[i], self.g2[i], self.sigma[i])?;
        }
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv).
    pub fn read_csv<R: std::io::BufRead>(r: R) -> Result<Self> {
        let mut c = Self {
            tau: Vec::new(),
            g2: Vec::new(),
            sigma: Vec::new(),
        };
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with("tau") {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format(format!("line {}: `{line}` is not numeric", n + 1)))?;
            if vals.len() != 3 {
                return Err(Error::Format(format!(
                    "line {}: expected tau_s,g2,sigma",
                    n + 1
                )));
            }
            c.tau.push(vals[0]);
            c.g2.push(vals[1]);
            c.sigma.push(vals[2]);
        }
        Ok(c)
    }
}

/// `g²[i] = counts[i] / (r₁·r₂·Δ·(T − |τ_i|))`.
pub fn normalize(hist: &G2Histogram) -> Result<G2Curve> {
    let tau = hist.centers();
    let base = hist.rate1 * hist.rate2 * hist.bin_width;
    let mut g2 = Vec::with_capacity(tau.len());
    let mut sigma = Vec::with_capacity(tau.len());
    for (&t, &c) in tau.iter().zip(&hist.counts) {
        let den = base * (hist.duration - t.abs());
        if !(den.is_finite() && den > 0.0) {
            return Err(Error::param(
                "histogram",
                "normalisation r1·r2·Δ·(T − |τ|) is zero",
            ));
        }
        g2.push(c as f64 / den);
        sigma.push((c.max(1) as f64).sqrt() / den);
    }
    Ok(G2Curve { tau, g2, sigma })
}

/// Rescale so that bins with `|τ| ≥ min_abs_tau` average to one. Blinking
/// lifts the plateau above one on time scales far above the antibunching
/// time; this removes that offset.
pub fn normalize_to_plateau(curve: &G2Curve, min_abs_tau: f64) -> Result<G2Curve> {
    let (sum, n) = curve
        .tau
        .iter()
        .zip(&curve.g2)
        .filter(|(t, _)| t.abs() >= min_abs_tau)
        .fold((0.0, 0usize), |(s, n), (_, g)| (s + g, n + 1));
    if n == 0 || sum <= 0.0 {
        return Err(Error::param("min_abs_tau", "no plateau bins with signal"));
    }
    let scale = n as f64 / sum;
    Ok(G2Curve {
        tau: curve.tau.clone(),
        g2: curve.g2.iter().map(|g| g * scale).collect(),
        sigma: curve.sigma.iter().map(|s| s * scale).collect(),
    })
}

pub fn antibunching_model(tau: f64, b: f64, tau_l: f64) -> f64 {
    1.0 - b * (-tau.abs() / tau_l).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Upper bound on `b`; the lower bound is zero.
    pub b_max: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            b_max: 1.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G2Fit {
    pub b: f64,
    pub tau_l: f64,
    /// Signal purity used for the corrected value; 1 when uncorrected.
    pub rho: f64,
    /// `1 − b`, the fitted model at τ = 0.
    pub g2_zero_raw: f64,
    pub g2_zero_corrected: f64,
    pub sigma_b: f64,
    pub sigma_tau_l: f64,
    /// Weighted residual norm `sqrt(Σ ((g − m)/σ)²)`.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Set when `b` is indistinguishable from zero; `tau_l` is then
    /// unconstrained.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

struct Problem<'a> {
    tau: &'a [f64],
    g: &'a [f64],
    w: Vec<f64>,
    /// Internal time unit for `tau_l`.
    scale: f64,
    b_max: f64,
}

impl Problem<'_> {
    fn clamp(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(0.0, self.b_max), p[1].clamp(1e-6, 1e6)]
    }

    fn chi2(&self, p: [f64; 2]) -> f64 {
        let [b, u] = self.clamp(p);
        let tl = u * self.scale;
        self.tau
            .iter()
            .zip(self.g)
            .zip(&self.w)
            .map(|((&t, &g), &w)| {
                let r = g - antibunching_model(t, b, tl);
                w * r * r
            })
            .sum()
    }

    /// Normal equations `JᵀWJ` and `JᵀWr` for `(b, u)`.
    fn normal(&self, p: [f64; 2]) -> ([[f64; 2]; 2], [f64; 2]) {
        let [b, u] = p;
        let mut a = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for ((&t, &y), &w) in self.tau.iter().zip(self.g).zip(&self.w) {
            let x = t.abs() / self.scale;
            let e = (-x / u).exp();
            let r = y - (1.0 - b * e);
            let j = [-e, -b * e * x / (u * u)];
            for m in 0..2 {
                g[m] += w * j[m] * r;
                for n in 0..2 {
                    a[m][n] += w * j[m] * j[n];
                }
            }
        }
        (a, g)
    }
}

fn solve2(a: [[f64; 2]; 2], y: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if det.abs() < 1e-300 || !det.is_finite() {
        return None;
    }
    Some([
        (a[1][1] * y[0] - a[0][1] * y[1]) / det,
        (a[0][0] * y[1] - a[1][0] * y[0]) / det,
    ])
}

fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: [f64; 2], max_iter: usize) -> ([f64; 2], usize, bool) {
    let mut s = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut v = s.map(&f);
    for it in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        s = order.map(|i| s[i]);
        v = order.map(|i| v[i]);
        let spread = (v[2] - v[0]).abs();
        let size = (1..3)
            .flat_map(|i| (0..2).map(move |d| (i, d)))
            .map(|(i, d)| (s[i][d] - s[0][d]).abs() / s[0][d].abs().max(1e-3))
            .fold(0.0, f64::max);
        if spread <= 1e-15 * v[0].abs() || size < 1e-12 {
            return (s[0], it, true);
        }
        let c = [(s[0][0] + s[1][0]) / 2.0, (s[0][1] + s[1][1]) / 2.0];
        let at = |t: f64| [c[0] + t * (s[2][0] - c[0]), c[1] + t * (s[2][1] - c[1])];
        let xr = at(-1.0);
        let fr = f(xr);
        if fr < v[0] {
            let xe = at(-2.0);
            let fe = f(xe);
            if fe < fr {
                s[2] = xe;
                v[2] = fe;
            } else {
                s[2] = xr;
                v[2] = fr;
            }
        } else if fr < v[1] {
            s[2] = xr;
            v[2] = fr;
        } else {
            let xc = if fr < v[2] { at(-0.5) } else { at(0.5) };
            let fc = f(xc);
            if fc < v[2].min(fr) {
                s[2] = xc;
                v[2] = fc;
            } else {
                for i in 1..3 {
                    s[i] = [(s[0][0] + s[i][0]) / 2.0, (s[0][1] + s[i][1]) / 2.0];
                    v[i] = f(s[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap_or(0);
    (s[best], max_iter, false)
}

/// Weighted least squares of `1 − b·exp(−|τ|/τ_l)` with `b ∈ [0, b_max]`:
/// a simplex search followed by damped Gauss–Newton refinement.
/// Uncertainties are the square roots of the diagonal of `(JᵀWJ)⁻¹`.
pub fn fit_g2(curve: &G2Curve, opts: &FitOptions) -> Result<G2Fit> {
    if curve.len() < 10 {
        return Err(Error::param("curve", "needs at least 10 bins"));
    }
    if curve.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::param("curve", "sigma must be finite and > 0"));
    }
    let span = curve.tau.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if span <= 0.0 {
        return Err(Error::param("curve", "needs nonzero delays"));
    }
    let prob = Problem {
        tau: &curve.tau,
        g: &curve.g2,
        w: curve.sigma.iter().map(|s| 1.0 / (s * s)).collect(),
        scale: span / 10.0,
        b_max: opts.b_max,
    };
    let b0 = (1.0 - curve.at_zero().unwrap_or(0.0)).clamp(0.05, opts.b_max);
    let budget = opts.max_iterations;
    let (mut p, nm_iter, converged) = nelder_mead(|q| prob.chi2(q), [b0, 1.0], [0.1, 0.5], budget);
    p = prob.clamp(p);
    let mut iterations = nm_iter;
    let mut lambda = 1e-3;
    let mut chi = prob.chi2(p);
    let mut refined = false;
    while iterations < budget {
        iterations += 1;
        let (a, g) = prob.normal(p);
        let damped = [[a[0][0] * (1.0 + lambda), a[0][1]], [a[1][0], a[1][1] * (1.0 + lambda)]];
        let Some(d) = solve2(damped, g) else { break };
        let q = prob.clamp([p[0] + d[0], p[1] + d[1]]);
        let cq = prob.chi2(q);
        if cq <= chi {
            let rel = (chi - cq) / chi.max(1e-300);
            let step = (q[0] - p[0]).abs().max((q[1] - p[1]).abs() / q[1]);
            p = q;
            chi = cq;
            lambda = (lambda / 10.0).max(1e-12);
            if rel < 1e-14 || step < 1e-13 {
                refined = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                refined = true;
                break;
            }
        }
    }
    if !converged && !refined {
        return Err(Error::FitNonConvergence {
            iterations,
            b: p[0],
            tau: p[1] * prob.scale,
        });
    }
    let (a, _) = prob.normal(p);
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let (var_b, var_u) = if det > 0.0 && det.is_finite() {
        (a[1][1] / det, a[0][0] / det)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let [b, u] = p;
    let sigma_b = var_b.max(0.0).sqrt();
    let degenerate = b < 1e-6 || b < sigma_b;
    let mut warnings = Vec::new();
    let tau_l = u * prob.scale;
    if span < 3.0 * tau_l {
        warnings.push(format!(
            "delay span {span:e} s covers less than 3 tau_l ({tau_l:e} s)"
        ));
    }
    let sigma_tau_l = if degenerate {
        f64::INFINITY
    } else {
        var_u.max(0.0).sqrt() * prob.scale
    };
    Ok(G2Fit {
        b,
        tau_l,
        rho: 1.0,
        g2_zero_raw: 1.0 - b,
        g2_zero_corrected: 1.0 - b,
        sigma_b,
        sigma_tau_l,
        residual_norm: chi.sqrt(),
        iterations,
        degenerate,
        warnings,
    })
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::param("rho", "must lie in (0, 1]"));
    }
    Ok(())
}

/// Emitter-only value from a background-diluted one:
/// `1 + (g_raw − 1)/ρ²`.
pub fn correct_value(g_raw: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(1.0 + (g_raw - 1.0) / (rho * rho))
}

/// Background dilution of an emitter-only g²: `1 + ρ²·(g − 1)`.
pub fn dilution_model(g_emitter: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(1.0 + rho * rho * (g_emitter - 1.0))
}

/// Composite form `1 + (g_func − 1)/ρ²` for fitting raw data with the
/// emitter model `g_func` directly. It divides where [`dilution_model`]
/// multiplies; both are offered.
pub fn composite_model(g_func: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(1.0 + (g_func - 1.0) / (rho * rho))
}

/// Corrected copy of a fit: `g2_zero_corrected` from the raw value.
pub fn background_correct(fit: &G2Fit, rho: f64) -> Result<G2Fit> {
    let mut out = fit.clone();
    out.rho = rho;
    out.g2_zero_corrected = correct_value(fit.g2_zero_raw, rho)?;
    Ok(out)
}

pub fn background_correct_curve(curve: &G2Curve, rho: f64) -> Result<G2Curve> {
    check_rho(rho)?;
    let r2 = rho * rho;
    Ok(G2Curve {
        tau: curve.tau.clone(),
        g2: curve.g2.iter().map(|g| 1.0 + (g - 1.0) / r2).collect(),
        sigma: curve.sigma.iter().map(|s| s / r2).collect(),
    })
}

/// The ρ for which `correct_value(raw, ρ) = corrected`.
pub fn implied_rho(raw: f64, corrected: f64) -> Result<f64> {
    let r2 = (1.0 - raw) / (1.0 - corrected);
    if !(r2 > 0.0 && r2 <= 1.0) {
        return Err(Error::param("raw", "pair does not imply rho in (0, 1]"));
    }
    Ok(r2.sqrt())
}

/// Signal purity `S/(S + B)`.
pub fn estimate_rho(signal_rate: f64, background_rate: f64) -> Result<f64> {
    if !(signal_rate >= 0.0 && background_rate >= 0.0) {
        return Err(Error::param("rates", "must be >= 0"));
    }
    let total = signal_rate + background_rate;
    if total <= 0.0 {
        return Err(Error::param("rates", "signal and background are both zero"));
    }
    Ok(signal_rate / total)
}

//! Iterative emitter placement: expose dark sites, fill each exposed
//! aperture with a Poisson number of emitters, optionally neutralize
//! multi-emitter sites, repeat.
//!
//! Per iteration, in site order:
//! 1. with `neutralize_multi`, every `Occupied(n ≥ 2)` site becomes
//!    `Neutralized`;
//! 2. every occupied site that will not be exposed is damaged with
//!    probability `destroy_existing_prob` and becomes `Neutralized`;
//! 3. every site that was `Vacant` or `Neutralized` before step 2 draws
//!    `K ~ Poisson(λ)` and becomes `Occupied(K)` when `K ≥ 1`.
//!
//! A `Neutralized` site is dark and is exposed again like a vacant one.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emitter::poisson_draw;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteState {
    Vacant,
    /// `n ≥ 1` active emitters.
    Occupied(u32),
    Neutralized,
}

impl SiteState {
    pub fn is_dark(self) -> bool {
        !matches!(self, SiteState::Occupied(_))
    }

    pub fn emitters(self) -> u32 {
        match self {
            SiteState::Occupied(n) => n,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lambda: f64,
    pub exposed: Vec<usize>,
    pub newly_filled: Vec<usize>,
    pub neutralized: Vec<usize>,
    pub damaged: Vec<usize>,
    /// Emitters per site after the iteration.
    pub counts: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteArray {
    pub rows: usize,
    pub cols: usize,
    sites: Vec<SiteState>,
    log: Vec<IterationRecord>,
}

impl Default for SiteArray {
    fn default() -> Self {
        Self::new(5, 5)
    }
}

impl SiteArray {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            sites: vec![SiteState::Vacant; rows * cols],
            log: Vec::new(),
        }
    }

    /// A single row of `n` sites.
    pub fn with_sites(n: usize) -> Self {
        Self::new(1, n)
    }

    /// A fresh array holding the given states, row-major.
    pub fn from_states(rows: usize, cols: usize, sites: Vec<SiteState>) -> Result<Self> {
        if sites.len() != rows * cols {
            return Err(Error::param("sites", "length must equal rows × cols"));
        }
        if sites.contains(&SiteState::Occupied(0)) {
            return Err(Error::param("sites", "Occupied(0) is not a valid state"));
        }
        Ok(Self {
            rows,
            cols,
            sites,
            log: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[SiteState] {
        &self.sites
    }

    pub fn get(&self, row: usize, col: usize) -> Option<SiteState> {
        (row < self.rows && col < self.cols).then(|| self.sites[row * self.cols + col])
    }

    pub fn log(&self) -> &[IterationRecord] {
        &self.log
    }

    pub fn iterations(&self) -> usize {
        self.log.len()
    }

    pub fn occupied(&self) -> usize {
        self.sites.iter().filter(|s| !s.is_dark()).count()
    }

    pub fn single(&self) -> usize {
        self.sites
            .iter()
            .filter(|s| **s == SiteState::Occupied(1))
            .count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    /// Mean emitters per exposed aperture.
    pub lambda: f64,
    pub neutralize_multi: bool,
    #[serde(default)]
    pub destroy_existing_prob: f64,
    /// `lambda_schedule[i]` replaces `lambda` in iteration `i` (0-based).
    #[serde(default)]
    pub lambda_schedule: Vec<f64>,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            lambda: fill_to_lambda(0.55),
            neutralize_multi: false,
            destroy_existing_prob: 0.0,
            lambda_schedule: Vec::new(),
        }
    }
}

impl ProtocolParams {
    pub fn from_fill_probability(p_fill: f64, neutralize_multi: bool) -> Result<Self> {
        Ok(Self {
            lambda: estimate_lambda_from_fill(p_fill)?.lambda,
            neutralize_multi,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        for &l in std::iter::once(&self.lambda).chain(&self.lambda_schedule) {
            if !(l.is_finite() && l >= 0.0) {
                return Err(Error::param("lambda", "must be finite and >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.destroy_existing_prob) {
            return Err(Error::param("destroy_existing_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn lambda_at(&self, iteration: usize) -> f64 {
        self.lambda_schedule
            .get(iteration)
            .copied()
            .unwrap_or(self.lambda)
    }
}

fn fill_to_lambda(p: f64) -> f64 {
    -(-p).ln_1p()
}

/// Advance `state` by one iteration drawing from `rng`.
pub fn run_iteration_with(state: &mut SiteArray, params: &ProtocolParams, rng: &mut Rng) {
    let iteration = state.log.len();
    let lambda = params.lambda_at(iteration);
    let mut neutralized = Vec::new();
    if params.neutralize_multi {
        for (i, s) in state.sites.iter_mut().enumerate() {
            if s.emitters() >= 2 {
                *s = SiteState::Neutralized;
                neutralized.push(i);
            }
        }
    }
    let exposed: Vec<usize> = (0..state.len())
        .filter(|&i| state.sites[i].is_dark())
        .collect();
    let mut damaged = Vec::new();
    if params.destroy_existing_prob > 0.0 {
        for (i, s) in state.sites.iter_mut().enumerate() {
            if !s.is_dark() && rng.random::<f64>() < params.destroy_existing_prob {
                *s = SiteState::Neutralized;
                damaged.push(i);
            }
        }
    }
    let mut newly_filled = Vec::new();
    for &i in &exposed {
        let k = poisson_draw(rng, lambda);
        if k >= 1 {
            state.sites[i] = SiteState::Occupied(k.min(u32::MAX as u64) as u32);
            newly_filled.push(i);
        }
    }
    let counts = state.sites.iter().map(|s| s.emitters()).collect();
    state.log.push(IterationRecord {
        iteration,
        lambda,
        exposed,
        newly_filled,
        neutralized,
        damaged,
        counts,
    });
}

/// One iteration seeded from `(seed, PLACEMENT)`.
pub fn run_iteration(state: &SiteArray, params: &ProtocolParams, seed: u64) -> Result<SiteArray> {
    params.validate()?;
    let mut next = state.clone();
    let mut r = rng::stream(seed, rng::stage::PLACEMENT);
    run_iteration_with(&mut next, params, &mut r);
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyStats {
    pub occupied_fraction: f64,
    /// Absent when no site is occupied.
    pub single_of_occupied: Option<f64>,
    pub single_of_all: f64,
}

impl OccupancyStats {
    pub fn from_counts(total: usize, occupied: usize, single: usize) -> Result<Self> {
        if total == 0 || occupied > total || single > occupied {
            return Err(Error::param(
                "counts",
                "need single <= occupied <= total and total > 0",
            ));
        }
        let t = total as f64;
        Ok(Self {
            occupied_fraction: occupied as f64 / t,
            single_of_occupied: (occupied > 0).then(|| single as f64 / occupied as f64),
            single_of_all: single as f64 / t,
        })
    }
}

pub fn occupancy_stats(state: &SiteArray) -> Result<OccupancyStats> {
    OccupancyStats::from_counts(state.len(), state.occupied(), state.single())
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(name, "must lie in [0, 1]"));
    }
    Ok(())
}

/// `1 − (1 − p)^k`.
pub fn cumulative_yield(p: f64, k: u32) -> Result<f64> {
    check_probability("p", p)?;
    Ok(1.0 - (1.0 - p).powi(k as i32))
}

/// Smallest `k` with `cumulative_yield(p, k) ≥ target`.
pub fn expected_iterations(p: f64, target: f64) -> Result<u32> {
    check_probability("p", p)?;
    if !(0.0..1.0).contains(&target) {
        return Err(Error::param("target", "must lie in [0, 1)"));
    }
    if target == 0.0 {
        return Ok(0);
    }
    if p == 0.0 {
        return Err(Error::Unreachable { p, target });
    }
    if p == 1.0 {
        return Ok(1);
    }
    let est = ((-target).ln_1p() / (-p).ln_1p()).ceil().max(1.0) as u32;
    // Guard the ceiling against rounding at exact boundaries.
    let mut k = est.saturating_sub(1).max(1);
    while cumulative_yield(p, k)? < target {
        k += 1;
    }
    Ok(k)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub lambda: f64,
    /// `λe^{−λ}/(1 − e^{−λ})`; 1 in the limit `λ → 0`.
    pub single_of_occupied: f64,
}

pub fn estimate_lambda_from_fill(p_fill: f64) -> Result<LambdaEstimate> {
    if !(0.0..1.0).contains(&p_fill) {
        return Err(Error::param("p_fill", "must lie in [0, 1)"));
    }
    let lambda = fill_to_lambda(p_fill);
    let single_of_occupied = if lambda == 0.0 {
        1.0
    } else {
        lambda * (-lambda).exp() / p_fill
    };
    Ok(LambdaEstimate {
        lambda,
        single_of_occupied,
    })
}

/// Per-site probabilities of (dark, single, multi).
pub type SiteDistribution = [f64; 3];

/// One-site transition matrix `m[from][to]` over (dark, single, multi).
pub fn transition_matrix(lambda: f64, neutralize_multi: bool, destroy: f64) -> [[f64; 3]; 3] {
    let q0 = (-lambda).exp();
    let q1 = lambda * q0;
    let q2 = (1.0 - q0 - q1).max(0.0);
    let fill = [q0, q1, q2];
    let keep = |state: usize| {
        let mut row = [0.0; 3];
        row[0] = destroy;
        row[state] += 1.0 - destroy;
        row
    };
    [fill, keep(1), if neutralize_multi { fill } else { keep(2) }]
}

/// Exact per-site distribution after `k` iterations starting from vacant.
pub fn site_distribution(params: &ProtocolParams, k: usize) -> Result<SiteDistribution> {
    params.validate()?;
    let mut d = [1.0, 0.0, 0.0];
    for i in 0..k {
        let m = transition_matrix(
            params.lambda_at(i),
            params.neutralize_multi,
            params.destroy_existing_prob,
        );
        let mut next = [0.0; 3];
        for (from, p) in d.iter().enumerate() {
            for to in 0..3 {
                next[to] += p * m[from][to];
            }
        }
        d = next;
    }
    Ok(d)
}

/// Closed form for the single-emitter fraction after `k` iterations at
/// constant `λ` with no damage: `1 − (1 − λe^{−λ})^k` with neutralization,
/// `λe^{−λ}·(1 − e^{−λk})/(1 − e^{−λ})` without.
pub fn single_fraction_closed_form(lambda: f64, k: u32, neutralize_multi: bool) -> f64 {
    let q0 = (-lambda).exp();
    let q1 = lambda * q0;
    if neutralize_multi {
        1.0 - (1.0 - q1).powi(k as i32)
    } else if lambda == 0.0 {
        0.0
    } else {
        q1 * (1.0 - q0.powi(k as i32)) / (1.0 - q0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldRow {
    /// 1-based; row 0 is the fresh array.
    pub iteration: usize,
    pub occupied_mean: f64,
    pub occupied_se: f64,
    pub single_mean: f64,
    pub single_se: f64,
}

impl YieldRow {
    /// Half-width of the normal 95% interval.
    pub fn occupied_ci(&self) -> f64 {
        1.96 * self.occupied_se
    }

    pub fn single_ci(&self) -> f64 {
        1.96 * self.single_se
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldCurves {
    pub n_sites: usize,
    pub trials: usize,
    pub rows: Vec<YieldRow>,
}

impl YieldCurves {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,occupied_mean,occupied_ci,single_mean,single_ci")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.9},{:.9},{:.9},{:.9}",
                r.iteration,
                r.occupied_mean,
                r.occupied_ci(),
                r.single_mean,
                r.single_ci()
            )?;
        }
        Ok(())
    }
}

/// Trajectory of one trial: (occupied, single) counts after each
/// iteration, starting with the fresh array.
pub fn simulate_trial(
    params: &ProtocolParams,
    n_sites: usize,
    max_iterations: usize,
    seed: u64,
    trial: u64,
) -> Result<SiteArray> {
    params.validate()?;
    let mut r = rng::stream(seed, rng::stage::PLACEMENT + trial);
    let mut s = SiteArray::with_sites(n_sites);
    for _ in 0..max_iterations {
        run_iteration_with(&mut s, params, &mut r);
    }
    Ok(s)
}

/// Monte Carlo over `trials` independent arrays. Fractions are per site;
/// standard errors are over trials.
pub fn simulate_protocol(
    params: &ProtocolParams,
    n_sites: usize,
    max_iterations: usize,
    trials: usize,
    seed: u64,
) -> Result<YieldCurves> {
    params.validate()?;
    if trials == 0 {
        return Err(Error::param("trials", "must be >= 1"));
    }
    if n_sites == 0 {
        return Err(Error::param("n_sites", "must be >= 1"));
    }
    let per_trial: Vec<Vec<(u32, u32)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let s = simulate_trial(params, n_sites, max_iterations, seed, t)?;
            let mut traj = vec![(0, 0)];
            traj.extend(s.log().iter().map(|rec| {
                let occ = rec.counts.iter().filter(|&&n| n > 0).count() as u32;
                let single = rec.counts.iter().filter(|&&n| n == 1).count() as u32;
                (occ, single)
            }));
            Ok(traj)
        })
        .collect::<Result<_>>()?;
    let n = n_sites as f64;
    let stats = |xs: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = xs.collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let se = if v.len() > 1 {
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            (var / v.len() as f64).sqrt()
        } else {
            0.0
        };
        (m, se)
    };
    let rows = (0..=max_iterations)
        .map(|i| {
            let (occupied_mean, occupied_se) =
                stats(&mut per_trial.iter().map(|t| t[i].0 as f64 / n));
            let (single_mean, single_se) =
                stats(&mut per_trial.iter().map(|t| t[i].1 as f64 / n));
            YieldRow {
                iteration: i,
                occupied_mean,
                occupied_se,
                single_mean,
                single_se,
            }
        })
        .collect();
    Ok(YieldCurves {
        n_sites,
        trials,
        rows,
    })
}

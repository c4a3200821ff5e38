//! Best-arm identification over the agency parameter `epsilon ∈ [0, 1]`.
//!
//! [`lipschitz_bai`] zooms: it keeps a set of equal-length active intervals,
//! pulls each midpoint `⌈2^(kβ)⌉` times in iteration `k`, discards intervals
//! whose mean trails the best by more than `(2 + L/2)·2^-k`, halves the
//! survivors, and stops once the pull budget is spent.
//! [`uniform_discretization`] is the fixed-grid baseline.
//!
//! Each interval pulled in an iteration gets its own child stream, seeded
//! from the caller's stream in interval order, so intervals are evaluated in
//! parallel with results identical to a sequential run.

use std::io::Write;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A stochastic payoff `p(epsilon)` with observations in `[0, 1]`.
pub trait PullOracle: Sync {
    fn pull(&self, epsilon: f64, rng: &mut dyn RngCore) -> f64;
}

impl<F> PullOracle for F
where
    F: Fn(f64, &mut dyn RngCore) -> f64 + Sync,
{
    fn pull(&self, epsilon: f64, rng: &mut dyn RngCore) -> f64 {
        self(epsilon, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "bad interval [{lo}, {hi}]"
            )));
        }
        Ok(Interval { lo, hi })
    }

    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 2.0
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn halves(&self) -> [Interval; 2] {
        let m = self.midpoint();
        [
            Interval { lo: self.lo, hi: m },
            Interval { lo: m, hi: self.hi },
        ]
    }
}

/// Budget `n`, Lipschitz constant `L` and exploitation parameter `β`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    pub n: u64,
    pub lipschitz: f64,
    pub beta: f64,
}

impl BanditConfig {
    pub fn new(n: u64, lipschitz: f64, beta: f64) -> Result<Self> {
        let c = BanditConfig { n, lipschitz, beta };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParameter(
                "budget n must be at least 1".into(),
            ));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "L must be positive, got {}",
                self.lipschitz
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Pulls per active interval in iteration `k`.
    pub fn pulls_at(&self, k: u32) -> u64 {
        (f64::from(k) * self.beta).exp2().ceil() as u64
    }

    /// Elimination threshold `(2 + L/2)·2^-k`.
    pub fn threshold_at(&self, k: u32) -> f64 {
        (2.0 + self.lipschitz / 2.0) * (-f64::from(k)).exp2()
    }
}

/// One iteration of [`lipschitz_bai`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: u32,
    /// Pulls spent before this iteration.
    pub t_k: u64,
    pub n_k: u64,
    pub intervals: Vec<Interval>,
    pub means: Vec<f64>,
    pub eliminated: Vec<Interval>,
    pub eps_opt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditTrace {
    pub config: BanditConfig,
    pub iterations: Vec<IterationRecord>,
    pub eps_opt: f64,
    /// Total pulls spent.
    pub t: u64,
}

impl BanditTrace {
    /// Writes one JSON object per iteration.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for it in &self.iterations {
            serde_json::to_writer(&mut out, it)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn last_iteration(&self) -> u32 {
        self.iterations.last().map_or(0, |it| it.k)
    }
}

/// Mean payoff of `pulls` draws at `epsilon` from a fresh stream.
fn pull_mean(oracle: &dyn PullOracle, epsilon: f64, pulls: u64, seed: u64) -> Result<f64> {
    let mut rng = rng::stream(seed);
    let mut total = 0.0;
    for _ in 0..pulls {
        let payoff = oracle.pull(epsilon, &mut rng);
        if !(0.0..=1.0).contains(&payoff) {
            return Err(Error::ContractViolation(format!(
                "payoff {payoff} at epsilon {epsilon} outside [0, 1]"
            )));
        }
        total += payoff;
    }
    Ok(total / pulls as f64)
}

/// Means of `pulls` draws at each arm, one child stream per arm.
fn pull_arms<R: Rng + ?Sized>(
    oracle: &dyn PullOracle,
    arms: &[f64],
    pulls: u64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let seeds: Vec<u64> = arms.iter().map(|_| rng.next_u64()).collect();
    arms.par_iter()
        .zip(seeds)
        .map(|(&eps, seed)| pull_mean(oracle, eps, pulls, seed))
        .collect()
}

/// Index of the highest mean, the earliest (lowest midpoint) on ties.
fn best_index(means: &[f64]) -> usize {
    let mut best = 0;
    for (i, &m) in means.iter().enumerate().skip(1) {
        if m > means[best] {
            best = i;
        }
    }
    best
}

/// Zooming best-arm identification. Returns the arm picked in the last
/// completed iteration together with the full trace.
pub fn lipschitz_bai<O, R>(
    oracle: &O,
    config: &BanditConfig,
    rng: &mut R,
) -> Result<(f64, BanditTrace)>
where
    O: PullOracle,
    R: Rng + ?Sized,
{
    config.validate()?;
    let mut active = vec![Interval { lo: 0.0, hi: 0.5 }, Interval { lo: 0.5, hi: 1.0 }];
    let mut t = 0u64;
    let mut k = 1u32;
    let mut eps_opt = 0.5;
    let mut iterations = Vec::new();
    while t <= config.n {
        let n_k = config.pulls_at(k);
        let threshold = config.threshold_at(k);
        let arms: Vec<f64> = active.iter().map(Interval::midpoint).collect();
        let means = pull_arms(oracle, &arms, n_k, rng)?;
        let best = best_index(&means);
        let p_max = means[best];
        eps_opt = arms[best];

        let mut next = Vec::with_capacity(active.len() * 2);
        let mut eliminated = Vec::new();
        for (iv, &m) in active.iter().zip(&means) {
            if p_max - m <= threshold {
                next.extend(iv.halves());
            } else {
                eliminated.push(*iv);
            }
        }
        iterations.push(IterationRecord {
            k,
            t_k: t,
            n_k,
            intervals: active,
            means,
            eliminated,
            eps_opt,
        });
        t = t.saturating_add(n_k.saturating_mul(arms.len() as u64));
        active = next;
        k += 1;
    }
    Ok((
        eps_opt,
        BanditTrace {
            config: *config,
            iterations,
            eps_opt,
            t,
        },
    ))
}

/// Fixed grid of `levels` equal cells, `⌊n / levels⌋` pulls per midpoint.
pub fn uniform_discretization<O, R>(oracle: &O, n: u64, levels: usize, rng: &mut R) -> Result<f64>
where
    O: PullOracle,
    R: Rng + ?Sized,
{
    if levels == 0 {
        return Err(Error::InvalidParameter("levels must be at least 1".into()));
    }
    if n < levels as u64 {
        return Err(Error::InvalidParameter(format!(
            "budget {n} below the {levels} levels"
        )));
    }
    let arms: Vec<f64> = (0..levels)
        .map(|i| (i as f64 + 0.5) / levels as f64)
        .collect();
    let means = pull_arms(oracle, &arms, n / levels as u64, rng)?;
    Ok(arms[best_index(&means)])
}

/// `p(ε*) - p(ε_ALG)`. Not clamped.
pub fn simple_regret(p_star: f64, p_at_alg: f64) -> f64 {
    p_star - p_at_alg
}

/// Iteration bound `k_max` and failure probability `δ_n` of the clean-event
/// argument for budget `n` and exploitation parameter `beta`.
pub fn failure_bound(n: u64, beta: f64) -> Result<(u32, f64)> {
    if n < 1 || !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need n >= 1 and beta > 0, got n={n}, beta={beta}"
        )));
    }
    let k_max = ((n as f64 * (beta.exp2() - 1.0) + 1.0).log2() / beta).ceil() as u32;
    let delta = 2.0
        * (1..=k_max)
            .map(|k| {
                let k = f64::from(k);
                k.exp2() * (-(k * (beta - 2.0) - 1.0).exp2()).exp()
            })
            .sum::<f64>();
    Ok((k_max, delta))
}

/// `p(ε) = peak_value - slope·|ε - peak|` plus `Uniform(-noise, noise)`.
///
/// Parameters must keep every observation inside `[0, 1]`; see [`Self::new`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TentOracle {
    pub peak: f64,
    pub peak_value: f64,
    pub slope: f64,
    pub noise: f64,
}

impl TentOracle {
    pub fn new(peak: f64, peak_value: f64, slope: f64, noise: f64) -> Result<Self> {
        let o = TentOracle {
            peak,
            peak_value,
            slope,
            noise,
        };
        let lowest = (0..=1)
            .map(|e| o.mean(f64::from(e)))
            .fold(f64::INFINITY, f64::min);
        if !(0.0..=1.0).contains(&peak)
            || noise < 0.0
            || lowest - noise < 0.0
            || peak_value + noise > 1.0
        {
            return Err(Error::InvalidParameter(format!("{o:?} can leave [0, 1]")));
        }
        Ok(o)
    }

    pub fn mean(&self, epsilon: f64) -> f64 {
        self.peak_value - self.slope * (epsilon - self.peak).abs()
    }
}

impl PullOracle for TentOracle {
    fn pull(&self, epsilon: f64, rng: &mut dyn RngCore) -> f64 {
        if self.noise == 0.0 {
            return self.mean(epsilon);
        }
        self.mean(epsilon) + rng.random_range(-self.noise..self.noise)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Zooming,
    Uniform,
}

/// One CSV row of a regret experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub n: u64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub eps_opt: f64,
    pub regret: f64,
}

/// Runs both algorithms on a [`TentOracle`] for every `(budget, seed)` pair.
/// The run for seed `s` uses `rng::stream(s)` for both algorithms.
pub fn regret_experiment(
    oracle: &TentOracle,
    budgets: &[u64],
    seeds: &[u64],
    lipschitz: f64,
    beta: f64,
    levels: usize,
) -> Result<Vec<RegretRow>> {
    let p_star = oracle.mean(oracle.peak);
    let jobs: Vec<(u64, u64)> = budgets
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let rows: Result<Vec<[RegretRow; 2]>> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let cfg = BanditConfig::new(n, lipschitz, beta)?;
            let (zoom, _) = lipschitz_bai(oracle, &cfg, &mut rng::stream(seed))?;
            let uni = uniform_discretization(oracle, n, levels, &mut rng::stream(seed))?;
            let row = |algorithm, eps: f64| RegretRow {
                n,
                seed,
                algorithm,
                eps_opt: eps,
                regret: simple_regret(p_star, oracle.mean(eps)),
            };
            Ok([row(Algorithm::Zooming, zoom), row(Algorithm::Uniform, uni)])
        })
        .collect();
    Ok(rows?.into_iter().flatten().collect())
}

/// Mean regret per budget for one algorithm, in `budgets` order.
pub fn mean_regret(rows: &[RegretRow], algorithm: Algorithm, budgets: &[u64]) -> Vec<f64> {
    budgets
        .iter()
        .map(|&n| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.algorithm == algorithm)
                .map(|r| r.regret)
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        })
        .collect()
}

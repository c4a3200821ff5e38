//! The action-set decision support policy.
//!
//! Valuations are min-max scaled and ranked. One half-normal draw `W` boosts
//! every action except the top one, and an action joins the set when its
//! boosted score is within `epsilon` of the top score. Because the ranking is
//! fixed within a state, the only sets that can occur are the ranking
//! prefixes `C_(1) ⊂ C_(2) ⊂ ... ⊂ C_(m)`, and the probability of each is
//! available in closed form through the half-normal CDF.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agent::ValuationProfile;
use crate::error::{Error, Result};
use crate::grid::Tile;

/// Agency parameter `epsilon` and the half-normal scale `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    pub epsilon: f64,
    pub sigma: f64,
}

impl SupportConfig {
    pub fn new(epsilon: f64, sigma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {epsilon} outside [0, 1]"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(SupportConfig { epsilon, sigma })
    }
}

/// Min-max scaled valuations, ranked best first.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledProfile {
    ranked: Vec<(Tile, f64)>,
    /// `gaps[i] = q̃(a_(1)) - q̃(a_(i+1))`, with a final `+inf` sentinel.
    gaps: Vec<f64>,
}

impl ScaledProfile {
    /// Builds a profile from already-scaled values in `[0, 1]` given in rank
    /// order (best first). Used for synthetic experiments.
    pub fn from_ranked(ranked: Vec<(Tile, f64)>) -> Result<Self> {
        if ranked.is_empty() {
            return Err(Error::InvalidInput("empty profile".into()));
        }
        if ranked.iter().any(|&(_, q)| !(0.0..=1.0).contains(&q)) {
            return Err(Error::InvalidInput(
                "scaled valuations must lie in [0, 1]".into(),
            ));
        }
        if ranked.windows(2).any(|w| w[0].1 < w[1].1) {
            return Err(Error::InvalidInput(
                "scaled valuations must be non-increasing".into(),
            ));
        }
        let top = ranked[0].1;
        let mut gaps: Vec<f64> = ranked.iter().map(|&(_, q)| top - q).collect();
        gaps.push(f64::INFINITY);
        Ok(ScaledProfile { ranked, gaps })
    }

    pub fn ranked(&self) -> &[(Tile, f64)] {
        &self.ranked
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn top(&self) -> Tile {
        self.ranked[0].0
    }

    /// `q̃(a_(1)) - q̃(a_(2))`, or `+inf` with a single action.
    pub fn top_gap(&self) -> f64 {
        self.gaps[1]
    }
}

/// The top-`k` prefix of a ranking.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSet {
    pub members: Vec<Tile>,
}

impl ActionSet {
    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn contains(&self, tile: Tile) -> bool {
        self.members.contains(&tile)
    }
}

/// Scales `q` affinely onto `[0, 1]` and ranks actions best first.
///
/// Ties are ranked in row-major tile order. When every valuation is equal
/// (including the single-action case) all scaled values are 0.
pub fn scale_minmax(profile: &ValuationProfile) -> Result<ScaledProfile> {
    if profile.is_empty() {
        return Err(Error::InvalidInput("cannot scale an empty profile".into()));
    }
    if let Some(&(t, q)) = profile.entries.iter().find(|(_, q)| !q.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite valuation {q} for {t:?}"
        )));
    }
    let lo = profile
        .entries
        .iter()
        .map(|&(_, q)| q)
        .fold(f64::INFINITY, f64::min);
    let hi = profile
        .entries
        .iter()
        .map(|&(_, q)| q)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut ranked: Vec<(Tile, f64)> = profile
        .entries
        .iter()
        .map(|&(t, q)| (t, if span > 0.0 { (q - lo) / span } else { 0.0 }))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ScaledProfile::from_ranked(ranked)
}

/// `|X|` with `X ~ Normal(0, sigma²)`.
pub fn sample_half_normal<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    let x: f64 = rng.sample(StandardNormal);
    (sigma * x).abs()
}

/// Set size `k = 1 + #{j ≥ 2 : q̃_(j) + w ≥ q̃_(1) - epsilon}`; one shared `w`.
pub fn build_action_set(scaled: &ScaledProfile, config: &SupportConfig, w: f64) -> ActionSet {
    let top = scaled.ranked[0].1;
    let k = 1 + scaled.ranked[1..]
        .iter()
        .filter(|&&(_, q)| q + w >= top - config.epsilon)
        .count();
    ActionSet {
        members: scaled.ranked[..k].iter().map(|&(t, _)| t).collect(),
    }
}

/// Draws `W` and builds the set; returns both.
pub fn sample_action_set<R: Rng + ?Sized>(
    scaled: &ScaledProfile,
    config: &SupportConfig,
    rng: &mut R,
) -> (ActionSet, f64) {
    let w = sample_half_normal(config.sigma, rng);
    (build_action_set(scaled, config, w), w)
}

/// `P[W ≤ x]` for the half-normal with scale `sigma`.
pub fn half_normal_cdf(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        libm::erf(x / (sigma * std::f64::consts::SQRT_2))
    }
}

/// `P[W > x]`, computed without cancellation in the upper tail.
fn half_normal_sf(x: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x == f64::INFINITY {
        0.0
    } else {
        libm::erfc(x / (sigma * std::f64::consts::SQRT_2))
    }
}

/// `P[a <= W < b]`.
fn half_normal_mass(a: f64, b: f64, sigma: f64) -> f64 {
    if a > 0.0 {
        half_normal_sf(a, sigma) - half_normal_sf(b, sigma)
    } else {
        half_normal_cdf(b, sigma)
    }
}

/// Exact distribution over the nested sets: entry `i` is
/// `P[C_(i+1)] = P[Δ_(i+1) - ε ≤ W < Δ_(i+2) - ε]`.
pub fn action_set_distribution(scaled: &ScaledProfile, config: &SupportConfig) -> Vec<f64> {
    scaled
        .gaps
        .windows(2)
        .map(|g| half_normal_mass(g[0] - config.epsilon, g[1] - config.epsilon, config.sigma))
        .collect()
}

/// Lipschitz constant of the set distribution in `epsilon`: `2√2 / (σ√π)`.
pub fn lipschitz_constant_sets(sigma: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 / (sigma * std::f64::consts::PI.sqrt())
}

/// Lipschitz constant of the expected discounted return: `L_c · r_max / (1 - γ)²`.
pub fn lipschitz_constant_value(sigma: f64, r_max: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma {gamma} outside (0, 1)"
        )));
    }
    if !(r_max > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "r_max must be positive, got {r_max}"
        )));
    }
    Ok(lipschitz_constant_sets(sigma) * r_max / ((1.0 - gamma) * (1.0 - gamma)))
}

/// A list of agency values, parsed from `study` or comma-separated
/// `start:stop:step` ranges and single values (e.g. `0:0.3:0.01,0.35:1:0.05`).
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonGrid(Vec<f64>);

impl EpsilonGrid {
    /// 0.00 to 0.30 in steps of 0.01, then 0.35 to 1.00 in steps of 0.05.
    pub fn study() -> Self {
        let mut v: Vec<f64> = (0..=30).map(|i| f64::from(i) / 100.0).collect();
        v.extend((7..=20).map(|i| f64::from(i) / 20.0));
        EpsilonGrid(v)
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("epsilon grid is empty".into()));
        }
        if let Some(e) = values.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {e} outside [0, 1]"
            )));
        }
        Ok(EpsilonGrid(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl FromStr for EpsilonGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "study" {
            return Ok(EpsilonGrid::study());
        }
        let bad = || Error::InvalidParameter(format!("bad epsilon grid {s:?}"));
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| bad());
        let mut values: Vec<f64> = Vec::new();
        for part in s.split(',') {
            let fields: Vec<&str> = part.split(':').collect();
            match fields.as_slice() {
                [v] => values.push(num(v)?),
                [a, b, step] => {
                    let (a, b, step) = (num(a)?, num(b)?, num(step)?);
                    if !(step > 0.0) || b < a {
                        return Err(bad());
                    }
                    let count = ((b - a) / step + 1e-9).floor() as usize;
                    // round to 12 decimals so 0.1 + 0.2 style drift never leaks out
                    values
                        .extend((0..=count).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12));
                }
                _ => return Err(bad()),
            }
        }
        values.dedup();
        EpsilonGrid::from_values(values)
    }
}

impl fmt::Display for EpsilonGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

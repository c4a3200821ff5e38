//! Heuristic valuations `q(s, a)` over the candidate tiles.
//!
//! These stand in for a learned agent: anything that can produce a
//! [`ValuationProfile`] for a state can drive the support policy.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{candidate_actions, GridState, Tile};

pub const MAX_RADIUS: u32 = 7;
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

/// A heuristic tile-selection policy.
///
/// The textual form is `random`, `greedy:<r>` or `softmax:<r>:<temperature>`
/// (`softmax:<r>` uses temperature 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Heuristic {
    Random,
    Greedy { radius: u32 },
    Softmax { radius: u32, temperature: f64 },
}

impl Heuristic {
    pub fn greedy(radius: u32) -> Self {
        Heuristic::Greedy { radius }
    }

    pub fn softmax(radius: u32, temperature: f64) -> Self {
        Heuristic::Softmax {
            radius,
            temperature,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Heuristic::Random => Ok(()),
            Heuristic::Greedy { radius } => check_radius(radius),
            Heuristic::Softmax {
                radius,
                temperature,
            } => {
                check_radius(radius)?;
                if temperature > 0.0 && temperature.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "temperature must be positive, got {temperature}"
                    )))
                }
            }
        }
    }

    /// Valuation of every candidate tile. Only [`Heuristic::Random`] consumes `rng`.
    pub fn valuation<R: Rng + ?Sized>(
        &self,
        state: &GridState,
        rng: &mut R,
    ) -> Result<ValuationProfile> {
        match *self {
            Heuristic::Random => random_valuation(state, rng),
            Heuristic::Greedy { radius } | Heuristic::Softmax { radius, .. } => {
                let mut profile = greedy_valuation(state, radius)?;
                profile.kind = *self;
                Ok(profile)
            }
        }
    }

    /// Picks one of `profile`'s actions the way this policy plays on its own.
    pub fn choose<R: Rng + ?Sized>(&self, profile: &ValuationProfile, rng: &mut R) -> Result<Tile> {
        match *self {
            Heuristic::Random | Heuristic::Greedy { .. } => greedy_choice(profile),
            Heuristic::Softmax { temperature, .. } => softmax_choice(profile, temperature, rng),
        }
    }
}

fn check_radius(radius: u32) -> Result<()> {
    if (1..=MAX_RADIUS).contains(&radius) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "radius {radius} outside 1..={MAX_RADIUS}"
        )))
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Heuristic::Random => write!(f, "random"),
            Heuristic::Greedy { radius } => write!(f, "greedy:{radius}"),
            Heuristic::Softmax {
                radius,
                temperature,
            } => write!(f, "softmax:{radius}:{temperature}"),
        }
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unrecognised policy {s:?}"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        let radius = |p: &str| p.parse::<u32>().map_err(|_| bad());
        let h = match parts.as_slice() {
            ["random"] => Heuristic::Random,
            ["greedy", r] => Heuristic::greedy(radius(r)?),
            ["softmax", r] => Heuristic::softmax(radius(r)?, DEFAULT_TEMPERATURE),
            ["softmax", r, t] => Heuristic::softmax(radius(r)?, t.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        h.validate()?;
        Ok(h)
    }
}

impl From<Heuristic> for String {
    fn from(h: Heuristic) -> String {
        h.to_string()
    }
}

impl TryFrom<String> for Heuristic {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Valuations of the candidate tiles, in candidate (row-major) order.
#[derive(Clone, Debug, PartialEq)]
pub struct ValuationProfile {
    pub entries: Vec<(Tile, f64)>,
    pub kind: Heuristic,
}

impl ValuationProfile {
    pub fn actions(&self) -> impl Iterator<Item = Tile> + '_ {
        self.entries.iter().map(|&(t, _)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value_of(&self, tile: Tile) -> Option<f64> {
        self.entries
            .iter()
            .find(|&&(t, _)| t == tile)
            .map(|&(_, q)| q)
    }
}

/// Sum over walks of length `1..=radius` through healthy tiles starting next
/// to each candidate, of the product of the densities visited.
///
/// `mass[v]` holds the total weight of length-ℓ walks ending at `v`; one more
/// step multiplies by `p_v` and sums over healthy neighbours, so the whole
/// profile costs `O(radius · cells)` per candidate.
pub fn greedy_valuation(state: &GridState, radius: u32) -> Result<ValuationProfile> {
    check_radius(radius)?;
    let candidates = candidate_actions(state)?;
    let cells = state.cells();
    let width = state.width();
    let at = |t: Tile| t.0 * width + t.1;
    let healthy: Vec<bool> = state.statuses().iter().map(|s| s.is_healthy()).collect();
    let p: Vec<f64> = state.densities().iter().map(|d| d.p()).collect();
    // healthy neighbours of each tile, precomputed once
    let adj: Vec<Vec<usize>> = state
        .tiles()
        .map(|t| state.neighbors(t).map(at).filter(|&j| healthy[j]).collect())
        .collect();

    let mut mass = vec![0.0; cells];
    let mut next = vec![0.0; cells];
    let entries = candidates
        .into_iter()
        .map(|source| {
            mass.fill(0.0);
            for &u in &adj[at(source)] {
                mass[u] = p[u];
            }
            let mut q: f64 = mass.iter().sum();
            for _ in 1..radius {
                for v in 0..cells {
                    next[v] = if healthy[v] {
                        p[v] * adj[v].iter().map(|&u| mass[u]).sum::<f64>()
                    } else {
                        0.0
                    };
                }
                std::mem::swap(&mut mass, &mut next);
                q += mass.iter().sum::<f64>();
            }
            (source, q)
        })
        .collect();
    Ok(ValuationProfile {
        entries,
        kind: Heuristic::greedy(radius),
    })
}

/// Exhaustive variant of [`greedy_valuation`] over simple paths (no tile
/// visited twice). Exponential in `radius`; kept for comparison only.
#[cfg(any(test, feature = "simple-paths"))]
pub fn greedy_valuation_simple_paths(state: &GridState, radius: u32) -> Result<ValuationProfile> {
    if !(1..=3).contains(&radius) {
        return Err(Error::InvalidParameter(format!(
            "simple-path mode supports radius 1..=3, got {radius}"
        )));
    }
    fn extend(state: &GridState, path: &mut Vec<Tile>, weight: f64, left: u32) -> f64 {
        let last = *path.last().unwrap();
        let mut total = 0.0;
        let next: Vec<Tile> = state.neighbors(last).collect();
        for n in next {
            if !state.status(n).is_healthy() || path.contains(&n) {
                continue;
            }
            let w = weight * state.density(n).p();
            total += w;
            if left > 1 {
                path.push(n);
                total += extend(state, path, w, left - 1);
                path.pop();
            }
        }
        total
    }
    let entries = candidate_actions(state)?
        .into_iter()
        .map(|c| (c, extend(state, &mut vec![c], 1.0, radius)))
        .collect();
    Ok(ValuationProfile {
        entries,
        kind: Heuristic::greedy(radius),
    })
}

/// I.i.d. `Uniform(0, 1)` scores, so that the argmax is a uniform candidate.
pub fn random_valuation<R: Rng + ?Sized>(
    state: &GridState,
    rng: &mut R,
) -> Result<ValuationProfile> {
    let entries = candidate_actions(state)?
        .into_iter()
        .map(|t| (t, rng.random::<f64>()))
        .collect();
    Ok(ValuationProfile {
        entries,
        kind: Heuristic::Random,
    })
}

/// Argmax of `q`; ties go to the first tile in row-major order.
pub fn greedy_choice(profile: &ValuationProfile) -> Result<Tile> {
    argmax(profile.entries.iter().copied())
        .ok_or_else(|| Error::ContractViolation("greedy choice over an empty profile".into()))
}

pub(crate) fn argmax(entries: impl Iterator<Item = (Tile, f64)>) -> Option<Tile> {
    entries
        .fold(None, |best: Option<(Tile, f64)>, (t, q)| match best {
            Some((bt, bq)) if bq > q || (bq == q && bt < t) => Some((bt, bq)),
            _ => Some((t, q)),
        })
        .map(|(t, _)| t)
}

/// Samples an action with probability proportional to `exp(q / temperature)`.
pub fn softmax_choice<R: Rng + ?Sized>(
    profile: &ValuationProfile,
    temperature: f64,
    rng: &mut R,
) -> Result<Tile> {
    sample_softmax(profile.entries.iter().copied(), temperature, rng)
}

pub(crate) fn sample_softmax<R: Rng + ?Sized>(
    entries: impl Iterator<Item = (Tile, f64)>,
    temperature: f64,
    rng: &mut R,
) -> Result<Tile> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let entries: Vec<(Tile, f64)> = entries.collect();
    if entries.is_empty() {
        return Err(Error::ContractViolation(
            "softmax choice over an empty profile".into(),
        ));
    }
    if let Some(&(t, q)) = entries.iter().find(|(_, q)| !q.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite valuation {q} for {t:?}"
        )));
    }
    let top = entries
        .iter()
        .map(|&(_, q)| q)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = entries
        .iter()
        .map(|&(_, q)| ((q - top) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (&(t, _), w) in entries.iter().zip(&weights) {
        if u < *w {
            return Ok(t);
        }
        u -= w;
    }
    // rounding left u at or above the last weight
    Ok(entries
        .iter()
        .zip(&weights)
        .rev()
        .find(|(_, &w)| w > 0.0)
        .map(|(&(t, _), _)| t)
        .unwrap())
}

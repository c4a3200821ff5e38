//! Exact expected return of one-step games.
//!
//! When the episode ends after a single action, the expected reward under
//! agency `epsilon` is `Σ_i P[C_(i)] · E[r | human picks from C_(i)]`, which
//! needs no sampling: the set probabilities are closed form and the
//! restricted human is given as an explicit distribution.

use crate::error::{Error, Result};
use crate::support::{action_set_distribution, EpsilonGrid, ScaledProfile, SupportConfig};

/// How the human picks inside a ranking prefix.
#[derive(Clone, Debug, PartialEq)]
pub enum RestrictedHuman {
    /// Argmax of the human's own scores (aligned with the ranking); ties go
    /// to the better-ranked action.
    Greedy(Vec<f64>),
    /// Uniform over the prefix.
    Uniform,
}

impl RestrictedHuman {
    /// Expected reward when the human picks from the top `k` actions.
    fn expected_reward(&self, rewards: &[f64], k: usize) -> f64 {
        match self {
            RestrictedHuman::Greedy(scores) => {
                let mut best = 0;
                for j in 1..k {
                    if scores[j] > scores[best] {
                        best = j;
                    }
                }
                rewards[best]
            }
            RestrictedHuman::Uniform => rewards[..k].iter().sum::<f64>() / k as f64,
        }
    }
}

fn check(rewards: &[f64], scaled: &ScaledProfile, human: &RestrictedHuman) -> Result<()> {
    if rewards.len() != scaled.len() {
        return Err(Error::InvalidInput(format!(
            "{} rewards for {} ranked actions",
            rewards.len(),
            scaled.len()
        )));
    }
    if let RestrictedHuman::Greedy(s) = human {
        if s.len() != rewards.len() {
            return Err(Error::InvalidInput(
                "human scores must align with the ranking".into(),
            ));
        }
    }
    Ok(())
}

/// `v(ε)` for one configuration. `rewards[i]` belongs to the `i`-th ranked action.
pub fn one_step_value(
    rewards: &[f64],
    scaled: &ScaledProfile,
    human: &RestrictedHuman,
    config: &SupportConfig,
) -> Result<f64> {
    check(rewards, scaled, human)?;
    let dist = action_set_distribution(scaled, config);
    Ok(dist
        .iter()
        .enumerate()
        .map(|(i, p)| p * human.expected_reward(rewards, i + 1))
        .sum())
}

/// `(ε, v(ε))` for every grid value.
pub fn one_step_value_check(
    rewards: &[f64],
    scaled: &ScaledProfile,
    human: &RestrictedHuman,
    grid: &EpsilonGrid,
    sigma: f64,
) -> Result<Vec<(f64, f64)>> {
    grid.values()
        .iter()
        .map(|&e| {
            Ok((
                e,
                one_step_value(rewards, scaled, human, &SupportConfig::new(e, sigma)?)?,
            ))
        })
        .collect()
}

/// Largest `|v(ε) - v(ε')| - lipschitz·|ε - ε'|` over all pairs of the table;
/// non-positive when the Lipschitz bound holds.
pub fn worst_lipschitz_excess(table: &[(f64, f64)], lipschitz: f64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (i, &(e1, v1)) in table.iter().enumerate() {
        for &(e2, v2) in &table[i + 1..] {
            worst = worst.max((v1 - v2).abs() - lipschitz * (e1 - e2).abs());
        }
    }
    worst
}

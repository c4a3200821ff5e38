//! Agency sweeps and the game-backed bandit oracle.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::mean_ci95;
use super::{run_mode, EpisodeSeeds, PlayMode};
use crate::agent::Heuristic;
use crate::bandit::PullOracle;
use crate::error::{Error, Result};
use crate::grid::GameInstance;
use crate::human::HumanModel;
use crate::rng;
use crate::support::{EpsilonGrid, SupportConfig};

/// The agent, the simulated human and the support noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct Components {
    pub agent: Heuristic,
    pub human: HumanModel,
    pub sigma: f64,
}

impl Components {
    pub fn new(agent: Heuristic, human: HumanModel, sigma: f64) -> Result<Self> {
        agent.validate()?;
        human.kind.validate()?;
        SupportConfig::new(0.0, sigma)?;
        Ok(Components {
            agent,
            human,
            sigma,
        })
    }
}

/// Outcome of one simulated episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub payoff: f64,
    pub discounted_return: f64,
}

/// Runs `episodes` episodes of `mode`. Episode `j` plays `pool[j % len]` with
/// seeds derived from `(master_seed, j)`, so runs that differ only in `mode`
/// share their randomness.
pub fn evaluate(
    pool: &[GameInstance],
    mode: PlayMode,
    episodes: usize,
    components: &Components,
    master_seed: u64,
) -> Result<Vec<EpisodeSummary>> {
    if pool.is_empty() {
        return Err(Error::InvalidParameter("empty instance pool".into()));
    }
    (0..episodes)
        .into_par_iter()
        .map(|j| {
            let inst = &pool[j % pool.len()];
            let seeds = EpisodeSeeds::from_master(rng::derive_seed(master_seed, j as u64));
            let log = run_mode(inst, mode, components.agent, &components.human, seeds)?;
            Ok(EpisodeSummary {
                payoff: log.payoff(inst.initial_state.cells()),
                discounted_return: log.discounted_return,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    /// `assisted`, `unassisted` or `autonomous`.
    pub mode: &'static str,
    /// `None` for the unassisted and autonomous baselines.
    pub epsilon: Option<f64>,
    pub mean_payoff: f64,
    pub payoff_ci: f64,
    pub mean_return: f64,
    pub return_ci: f64,
    pub episodes: usize,
}

impl SweepPoint {
    pub fn from_summaries(mode: PlayMode, runs: &[EpisodeSummary]) -> Result<Self> {
        let epsilon = match mode {
            PlayMode::Assisted(c) => Some(c.epsilon),
            _ => None,
        };
        let payoffs: Vec<f64> = runs.iter().map(|r| r.payoff).collect();
        let returns: Vec<f64> = runs.iter().map(|r| r.discounted_return).collect();
        let (mean_payoff, payoff_ci) = mean_ci95(&payoffs)?;
        let (mean_return, return_ci) = mean_ci95(&returns)?;
        Ok(SweepPoint {
            mode: mode.name(),
            epsilon,
            mean_payoff,
            payoff_ci,
            mean_return,
            return_ci,
            episodes: runs.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn at(&self, epsilon: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.epsilon == Some(epsilon))
    }
}

/// Mean payoff and return for every `ε` of the grid.
pub fn sweep_epsilon(
    pool: &[GameInstance],
    grid: &EpsilonGrid,
    episodes_per_eps: usize,
    components: &Components,
    master_seed: u64,
) -> Result<SweepResult> {
    if episodes_per_eps < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 episodes per epsilon".into(),
        ));
    }
    let points = grid
        .values()
        .iter()
        .map(|&e| {
            let mode = PlayMode::Assisted(SupportConfig::new(e, components.sigma)?);
            let runs = evaluate(pool, mode, episodes_per_eps, components, master_seed)?;
            SweepPoint::from_summaries(mode, &runs)
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult { points })
}

/// One pull plays a uniformly drawn pool instance at the given agency and
/// pays the healthy fraction left at the end.
#[derive(Clone, Debug)]
pub struct GameOracle {
    pool: Vec<GameInstance>,
    components: Components,
}

impl GameOracle {
    pub fn new(pool: Vec<GameInstance>, components: Components) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::InvalidParameter("empty instance pool".into()));
        }
        Ok(GameOracle { pool, components })
    }

    pub fn components(&self) -> &Components {
        &self.components
    }
}

impl PullOracle for GameOracle {
    fn pull(&self, epsilon: f64, rng: &mut dyn RngCore) -> f64 {
        let inst = &self.pool[rng.random_range(0..self.pool.len())];
        let seeds = EpisodeSeeds::from_master(rng.next_u64());
        let config = SupportConfig::new(epsilon.clamp(0.0, 1.0), self.components.sigma)
            .expect("sigma validated in Components::new");
        let log = super::run_episode(
            inst,
            config,
            self.components.agent,
            &self.components.human,
            seeds,
        )
        .expect("validated components cannot fail on a valid instance");
        log.payoff(inst.initial_state.cells())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{initial_state, InstanceParams};

    fn pool(n: u64) -> Vec<GameInstance> {
        (0..n)
            .map(|s| GameInstance {
                id: format!("p{s}"),
                initial_state: initial_state(s + 500, &InstanceParams::default()).unwrap(),
                difficulty_band: 1,
                gen_seed: s + 500,
            })
            .collect()
    }

    fn components(human: &str) -> Components {
        Components::new(Heuristic::greedy(3), human.parse().unwrap(), 0.01).unwrap()
    }

    #[test]
    fn full_agency_column_equals_unassisted_baseline() {
        let p = pool(4);
        let c = components("softmax:1:1");
        let sweep =
            sweep_epsilon(&p, &EpsilonGrid::from_values(vec![1.0]).unwrap(), 12, &c, 9).unwrap();
        let base = SweepPoint::from_summaries(
            PlayMode::Unassisted,
            &evaluate(&p, PlayMode::Unassisted, 12, &c, 9).unwrap(),
        )
        .unwrap();
        let at1 = sweep.at(1.0).unwrap();
        assert_eq!(at1.mean_payoff, base.mean_payoff);
        assert_eq!(at1.mean_return, base.mean_return);
    }

    #[test]
    fn too_few_episodes_are_rejected() {
        let p = pool(1);
        assert!(sweep_epsilon(&p, &EpsilonGrid::study(), 1, &components("random"), 0).is_err());
    }

    #[test]
    fn oracle_pulls_are_deterministic_payoffs() {
        let oracle = GameOracle::new(pool(3), components("random")).unwrap();
        for seed in 0..20 {
            let a = oracle.pull(0.2, &mut rng::stream(seed));
            let b = oracle.pull(0.2, &mut rng::stream(seed));
            assert_eq!(a, b);
            assert!((0.0..=1.0).contains(&a));
        }
    }
}

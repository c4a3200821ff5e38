//! Simulated humans.
//!
//! A simulated human runs one of the agent heuristics, but its argmax or
//! sampling step only ranges over the tiles of the action set it was given.
//! Valuations are computed on the full candidate list and then restricted.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{argmax, greedy_valuation, sample_softmax, Heuristic};
use crate::error::{Error, Result};
use crate::grid::{GridState, Tile};
use crate::support::ActionSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanModel {
    pub kind: Heuristic,
    pub label: String,
}

impl HumanModel {
    pub fn new(kind: Heuristic) -> Result<Self> {
        kind.validate()?;
        Ok(HumanModel {
            kind,
            label: kind.to_string(),
        })
    }

    /// The default panel of humans weaker than a radius-7 greedy agent.
    pub fn default_panel() -> Vec<HumanModel> {
        [
            Heuristic::greedy(1),
            Heuristic::softmax(1, 1.0),
            Heuristic::softmax(2, 1.0),
            Heuristic::Random,
        ]
        .into_iter()
        .map(|k| HumanModel {
            kind: k,
            label: k.to_string(),
        })
        .collect()
    }

    /// Picks a member of `action_set`.
    pub fn choose<R: Rng + ?Sized>(
        &self,
        state: &GridState,
        action_set: &ActionSet,
        rng: &mut R,
    ) -> Result<Tile> {
        if action_set.members.is_empty() {
            return Err(Error::ContractViolation(
                "human asked to choose from an empty action set".into(),
            ));
        }
        if let Some(&t) = action_set
            .members
            .iter()
            .find(|&&t| !state.contains(t) || !state.status(t).is_burning())
        {
            return Err(Error::ContractViolation(format!(
                "action set member {t:?} is not burning"
            )));
        }
        if action_set.members.len() == 1 {
            return Ok(action_set.members[0]);
        }
        match self.kind {
            Heuristic::Random => {
                // grid order, so the draw does not depend on how the set is listed
                let mut members = action_set.members.clone();
                members.sort_unstable();
                Ok(members[rng.random_range(0..members.len())])
            }
            Heuristic::Greedy { radius } => {
                let q = greedy_valuation(state, radius)?;
                argmax(restrict(&q.entries, action_set)).ok_or_else(|| {
                    Error::ContractViolation("action set is disjoint from the candidates".into())
                })
            }
            Heuristic::Softmax {
                radius,
                temperature,
            } => {
                let q = greedy_valuation(state, radius)?;
                sample_softmax(restrict(&q.entries, action_set), temperature, rng)
            }
        }
    }
}

fn restrict<'a>(
    entries: &'a [(Tile, f64)],
    set: &'a ActionSet,
) -> impl Iterator<Item = (Tile, f64)> + 'a {
    entries
        .iter()
        .copied()
        .filter(move |&(t, _)| set.contains(t))
}

impl fmt::Display for HumanModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl FromStr for HumanModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HumanModel::new(s.parse()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::greedy_choice;
    use crate::grid::candidate_actions;
    use crate::grid::fixtures::{parse, with_levels};
    use crate::rng;
    use proptest::prelude::*;

    fn fixture() -> GridState {
        with_levels(
            parse(
                "3...
                 ..2.
                 ....
                 1..3",
                1,
            ),
            &[1, 9, 2, 3, 7, 1, 1, 5, 4, 2, 8, 6, 1, 2, 3, 9],
        )
    }

    fn all_candidates(state: &GridState) -> ActionSet {
        ActionSet {
            members: candidate_actions(state).unwrap(),
        }
    }

    #[test]
    fn singleton_sets_are_forced() {
        let s = fixture();
        let set = ActionSet {
            members: vec![Tile(3, 0)],
        };
        for h in HumanModel::default_panel() {
            assert_eq!(h.choose(&s, &set, &mut rng::stream(1)).unwrap(), Tile(3, 0));
        }
    }

    #[test]
    fn empty_set_is_rejected() {
        let h: HumanModel = "greedy:1".parse().unwrap();
        let err = h.choose(
            &fixture(),
            &ActionSet { members: vec![] },
            &mut rng::stream(0),
        );
        assert!(matches!(err, Err(Error::ContractViolation(_))));
        let err = h.choose(
            &fixture(),
            &ActionSet {
                members: vec![Tile(0, 1), Tile(2, 2)],
            },
            &mut rng::stream(0),
        );
        assert!(matches!(err, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn choices_ignore_the_listing_order() {
        let s = fixture();
        let forward = all_candidates(&s);
        let backward = ActionSet {
            members: forward.members.iter().rev().copied().collect(),
        };
        for h in HumanModel::default_panel() {
            for seed in 0..20 {
                assert_eq!(
                    h.choose(&s, &forward, &mut rng::stream(seed)).unwrap(),
                    h.choose(&s, &backward, &mut rng::stream(seed)).unwrap()
                );
            }
        }
    }

    #[test]
    fn full_set_matches_unassisted_greedy() {
        let s = fixture();
        let h: HumanModel = "greedy:1".parse().unwrap();
        let expected = greedy_choice(&greedy_valuation(&s, 1).unwrap()).unwrap();
        assert_eq!(
            h.choose(&s, &all_candidates(&s), &mut rng::stream(0))
                .unwrap(),
            expected
        );
    }

    #[test]
    fn restricted_greedy_matches_restricted_scan() {
        let s = fixture();
        let q = greedy_valuation(&s, 1).unwrap();
        let global = greedy_choice(&q).unwrap();
        let h: HumanModel = "greedy:1".parse().unwrap();
        let members: Vec<Tile> = q.actions().filter(|&t| t != global).collect();
        let set = ActionSet {
            members: members.clone(),
        };
        let mut best = members[0];
        for &t in &members[1..] {
            if q.value_of(t).unwrap() > q.value_of(best).unwrap() {
                best = t;
            }
        }
        assert_eq!(h.choose(&s, &set, &mut rng::stream(0)).unwrap(), best);
    }

    proptest! {
        #[test]
        fn choice_stays_in_the_set(seed in any::<u64>(), mask in 1u8..16, which in 0usize..4) {
            let s = fixture();
            let cands = candidate_actions(&s).unwrap();
            let members: Vec<Tile> = cands.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &t)| t).collect();
            prop_assume!(!members.is_empty());
            let set = ActionSet { members };
            let h = &HumanModel::default_panel()[which];
            let a = h.choose(&s, &set, &mut rng::stream(seed)).unwrap();
            prop_assert!(set.contains(a));
            prop_assert_eq!(a, h.choose(&s, &set, &mut rng::stream(seed)).unwrap());
        }
    }
}

//! Action-set decision support for sequential decision making.
//!
//! The crate is organised around the episode loop of a human playing a
//! stochastic wildfire gridworld while an agent narrows down which tiles
//! the human may act on:
//!
//! * [`grid`]: the wildfire environment (fire spread, rewards, instances).
//! * [`agent`]: heuristic valuation functions `q(s, a)` over candidate tiles.
//! * [`support`]: min-max scaling, half-normal noise and nested action sets.
//! * [`human`]: simulated humans choosing inside an action set.
//! * [`bandit`]: zooming best-arm identification over the agency parameter.
//! * [`harness`]: episode runner, metrics, instance pools and sweeps.

pub mod agent;
pub mod bandit;
pub mod error;
pub mod grid;
pub mod harness;
pub mod human;
pub mod rng;
pub mod support;

pub use agent::{Heuristic, ValuationProfile};
pub use bandit::{BanditConfig, BanditTrace, Interval, PullOracle};
pub use error::{Error, Result};
pub use grid::{Adjacency, GameInstance, GridState, StepOutcome, Tile, TileStatus};
pub use harness::{EpisodeLog, EpisodeSeeds, PlayMode, SweepResult};
pub use human::HumanModel;
pub use support::{ActionSet, ScaledProfile, SupportConfig};

/// Discount factor used for reported returns.
pub const DEFAULT_GAMMA: f64 = 0.99;

/// Standard deviation of the half-normal boost used in the study.
pub const DEFAULT_SIGMA: f64 = 0.01;

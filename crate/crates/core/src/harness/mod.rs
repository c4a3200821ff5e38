//! Episode runner and experiment plumbing.
//!
//! An episode follows the causal order of one time step: observe the state,
//! build the candidate list, let the agent value it, draw the action set, let
//! the decision maker pick a tile, and advance the environment. Three
//! independent streams drive it: `env` (fire spread), `policy` (the support
//! policy's half-normal draw and any agent randomness) and `human` (the
//! decision maker). Keeping them separate means changing `epsilon` never
//! perturbs the fire or the human's own coin flips.

pub mod metrics;
pub mod onestep;
pub mod pool;
pub mod sweep;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::agent::{Heuristic, ValuationProfile};
use crate::error::{Error, Result};
use crate::grid::{
    self, candidate_actions, GameInstance, GridState, StepOutcome, Tile, TileStatus,
};
use crate::human::HumanModel;
use crate::rng::{self, StreamRng};
use crate::support::{sample_action_set, scale_minmax, ActionSet, SupportConfig};

pub use metrics::{ccdf_export, discounted_return, l1_distance};
pub use onestep::{one_step_value_check, RestrictedHuman};
pub use pool::{difficulty_band, make_instance_pool};
pub use sweep::{sweep_epsilon, Components, GameOracle, SweepPoint, SweepResult};

/// Seeds of the three exogenous random streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeSeeds {
    pub env: u64,
    pub policy: u64,
    pub human: u64,
}

impl EpisodeSeeds {
    pub fn from_master(master: u64) -> Self {
        EpisodeSeeds {
            env: rng::derive_seed(master, 0),
            policy: rng::derive_seed(master, 1),
            human: rng::derive_seed(master, 2),
        }
    }
}

/// Who decides and under what support.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlayMode {
    /// The human picks from an action set built with this configuration.
    Assisted(SupportConfig),
    /// The human picks from every candidate.
    Unassisted,
    /// The agent plays on its own.
    Autonomous,
}

impl PlayMode {
    pub fn name(&self) -> &'static str {
        match self {
            PlayMode::Assisted(_) => "assisted",
            PlayMode::Unassisted => "unassisted",
            PlayMode::Autonomous => "autonomous",
        }
    }

    fn support(&self) -> Option<SupportConfig> {
        match self {
            PlayMode::Assisted(c) => Some(*c),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    /// Tile statuses before the action, row-major.
    pub statuses: Vec<TileStatus>,
    pub candidates: Vec<Tile>,
    pub action_set: Vec<Tile>,
    /// The half-normal draw, when an action set was built.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w: Option<f64>,
    pub action: Tile,
    pub reward: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    instance_id: String,
    width: usize,
    mode: String,
    epsilon: Option<f64>,
    sigma: Option<f64>,
    agent: Option<Heuristic>,
    human: String,
    seeds: EpisodeSeeds,
    gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Footer {
    steps: usize,
    final_score: usize,
    discounted_return: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogLine {
    Header(Header),
    Step(StepRecord),
    Footer(Footer),
}

/// Everything needed to audit and replay one game.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub instance_id: String,
    /// Grid width, needed to index the row-major snapshots.
    pub width: usize,
    pub mode: String,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub agent: Option<Heuristic>,
    pub human: String,
    pub seeds: EpisodeSeeds,
    pub gamma: f64,
    pub steps: Vec<StepRecord>,
    pub final_score: usize,
    pub discounted_return: f64,
}

impl EpisodeLog {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| f64::from(s.reward)).collect()
    }

    pub fn actions(&self) -> Vec<Tile> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Healthy fraction at the end, the bandit payoff.
    pub fn payoff(&self, cells: usize) -> f64 {
        self.final_score as f64 / cells as f64
    }

    pub fn play_mode(&self) -> Result<PlayMode> {
        match (self.mode.as_str(), self.epsilon, self.sigma) {
            ("assisted", Some(e), Some(s)) => Ok(PlayMode::Assisted(SupportConfig::new(e, s)?)),
            ("unassisted", ..) => Ok(PlayMode::Unassisted),
            ("autonomous", ..) => Ok(PlayMode::Autonomous),
            (m, ..) => Err(Error::InvalidInput(format!(
                "unknown or incomplete play mode {m:?}"
            ))),
        }
    }

    /// Checks the containment chain `action ∈ set ⊆ candidates ⊆ burning`
    /// and that the stored return matches the rewards.
    pub fn validate(&self) -> Result<()> {
        for s in &self.steps {
            let burning = |t: &Tile| {
                t.1 < self.width
                    && s.statuses
                        .get(t.0 * self.width + t.1)
                        .is_some_and(|st| st.is_burning())
            };
            if !s.action_set.contains(&s.action)
                || !s.action_set.iter().all(|t| s.candidates.contains(t))
                || !s.candidates.iter().all(burning)
            {
                return Err(Error::ContractViolation(format!(
                    "containment broken at step {}",
                    s.t
                )));
            }
        }
        let ret = discounted_return(&self.rewards(), self.gamma)?;
        if (ret - self.discounted_return).abs() > 1e-9 {
            return Err(Error::ContractViolation(format!(
                "stored return {} differs from recomputed {ret}",
                self.discounted_return
            )));
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = LogLine::Header(Header {
            instance_id: self.instance_id.clone(),
            width: self.width,
            mode: self.mode.clone(),
            epsilon: self.epsilon,
            sigma: self.sigma,
            agent: self.agent,
            human: self.human.clone(),
            seeds: self.seeds,
            gamma: self.gamma,
        });
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for s in &self.steps {
            serde_json::to_writer(&mut out, &LogLine::Step(s.clone()))?;
            out.write_all(b"\n")?;
        }
        let footer = LogLine::Footer(Footer {
            steps: self.steps.len(),
            final_score: self.final_score,
            discounted_return: self.discounted_return,
        });
        serde_json::to_writer(&mut out, &footer)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut header = None;
        let mut footer = None;
        let mut steps = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                LogLine::Header(h) => header = Some(h),
                LogLine::Step(s) => steps.push(s),
                LogLine::Footer(f) => footer = Some(f),
            }
        }
        let h = header.ok_or_else(|| Error::InvalidInput("episode log has no header".into()))?;
        let f = footer.ok_or_else(|| Error::InvalidInput("episode log has no footer".into()))?;
        if f.steps != steps.len() {
            return Err(Error::InvalidInput(format!(
                "footer counts {} steps, found {}",
                f.steps,
                steps.len()
            )));
        }
        Ok(EpisodeLog {
            instance_id: h.instance_id,
            width: h.width,
            mode: h.mode,
            epsilon: h.epsilon,
            sigma: h.sigma,
            agent: h.agent,
            human: h.human,
            seeds: h.seeds,
            gamma: h.gamma,
            steps,
            final_score: f.final_score,
            discounted_return: f.discounted_return,
        })
    }
}

/// The decision currently awaiting an action.
#[derive(Clone, Debug)]
struct Decision {
    candidates: Vec<Tile>,
    action_set: ActionSet,
    w: Option<f64>,
    profile: Option<ValuationProfile>,
}

/// An episode in progress, advanced one action at a time.
///
/// Used directly by the game service, where the actions come from a person,
/// and by [`run_episode`] with a simulated human.
#[derive(Clone, Debug)]
pub struct Episode {
    instance_id: String,
    state: GridState,
    mode: PlayMode,
    agent: Option<Heuristic>,
    human: String,
    seeds: EpisodeSeeds,
    gamma: f64,
    env_rng: StreamRng,
    policy_rng: StreamRng,
    decision: Option<Decision>,
    steps: Vec<StepRecord>,
}

impl Episode {
    pub fn start(
        instance: &GameInstance,
        mode: PlayMode,
        agent: Option<Heuristic>,
        human: impl Into<String>,
        seeds: EpisodeSeeds,
    ) -> Result<Self> {
        if agent.is_none() && mode != PlayMode::Unassisted {
            return Err(Error::InvalidParameter(format!(
                "{} play needs an agent",
                mode.name()
            )));
        }
        if let Some(a) = &agent {
            a.validate()?;
        }
        let mut ep = Episode {
            instance_id: instance.id.clone(),
            state: instance.initial_state.clone(),
            mode,
            agent,
            human: human.into(),
            seeds,
            gamma: crate::DEFAULT_GAMMA,
            env_rng: rng::stream(seeds.env),
            policy_rng: rng::stream(seeds.policy),
            decision: None,
            steps: Vec::new(),
        };
        ep.prepare()?;
        Ok(ep)
    }

    fn prepare(&mut self) -> Result<()> {
        if self.state.is_terminal() {
            self.decision = None;
            return Ok(());
        }
        let candidates = candidate_actions(&self.state)?;
        let decision = match self.mode {
            PlayMode::Assisted(cfg) => {
                let agent = self.agent.expect("checked in start");
                let profile = agent.valuation(&self.state, &mut self.policy_rng)?;
                let scaled = scale_minmax(&profile)?;
                let (action_set, w) = sample_action_set(&scaled, &cfg, &mut self.policy_rng);
                Decision {
                    candidates,
                    action_set,
                    w: Some(w),
                    profile: Some(profile),
                }
            }
            PlayMode::Unassisted => Decision {
                action_set: ActionSet {
                    members: candidates.clone(),
                },
                candidates,
                w: None,
                profile: None,
            },
            PlayMode::Autonomous => {
                let agent = self.agent.expect("checked in start");
                let profile = agent.valuation(&self.state, &mut self.policy_rng)?;
                Decision {
                    action_set: ActionSet {
                        members: candidates.clone(),
                    },
                    candidates,
                    w: None,
                    profile: Some(profile),
                }
            }
        };
        self.decision = Some(decision);
        Ok(())
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }

    pub fn seeds(&self) -> EpisodeSeeds {
        self.seeds
    }

    pub fn is_finished(&self) -> bool {
        self.decision.is_none()
    }

    pub fn candidates(&self) -> &[Tile] {
        self.decision.as_ref().map_or(&[], |d| &d.candidates)
    }

    /// The tiles the decision maker may pick now; empty once finished.
    pub fn action_set(&self) -> &[Tile] {
        self.decision
            .as_ref()
            .map_or(&[], |d| &d.action_set.members)
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| f64::from(s.reward)).collect()
    }

    /// Lets a simulated decision maker pick the next action.
    fn choose_with(&self, human: Option<&HumanModel>, human_rng: &mut StreamRng) -> Result<Tile> {
        let d = self.decision.as_ref().ok_or(Error::EmptyActionSpace)?;
        match (self.mode, human) {
            (PlayMode::Autonomous, _) => {
                let agent = self.agent.expect("checked in start");
                agent.choose(
                    d.profile
                        .as_ref()
                        .expect("autonomous decisions carry a profile"),
                    human_rng,
                )
            }
            (_, Some(h)) => h.choose(&self.state, &d.action_set, human_rng),
            (_, None) => Err(Error::InvalidParameter("a human model is required".into())),
        }
    }

    /// Applies an action, which must belong to the current action set.
    pub fn act(&mut self, action: Tile) -> Result<StepOutcome> {
        let d = self.decision.take().ok_or(Error::EmptyActionSpace)?;
        if !d.action_set.contains(action) {
            let reason = if d.candidates.contains(&action) {
                "not in the action set"
            } else {
                "not a candidate"
            };
            self.decision = Some(d);
            return Err(Error::InvalidAction {
                tile: action,
                reason,
            });
        }
        let outcome = grid::step(&self.state, action, &mut self.env_rng)?;
        self.steps.push(StepRecord {
            t: self.state.step_count(),
            statuses: self.state.statuses().to_vec(),
            candidates: d.candidates,
            action_set: d.action_set.members,
            w: d.w,
            action,
            reward: outcome.reward,
        });
        self.state = outcome.next_state.clone();
        self.prepare()?;
        Ok(outcome)
    }

    pub fn score(&self) -> usize {
        grid::score(&self.state)
    }

    pub fn discounted_return(&self) -> f64 {
        discounted_return(&self.rewards(), self.gamma).expect("gamma is fixed in (0, 1)")
    }

    /// Consumes a finished episode into its log.
    pub fn into_log(self) -> Result<EpisodeLog> {
        if !self.is_finished() {
            return Err(Error::ContractViolation("episode is still running".into()));
        }
        let discounted_return = self.discounted_return();
        Ok(EpisodeLog {
            width: self.state.width(),
            instance_id: self.instance_id,
            mode: self.mode.name().to_string(),
            epsilon: self.mode.support().map(|c| c.epsilon),
            sigma: self.mode.support().map(|c| c.sigma),
            agent: self.agent,
            human: self.human,
            seeds: self.seeds,
            gamma: self.gamma,
            final_score: grid::score(&self.state),
            discounted_return,
            steps: self.steps,
        })
    }
}

fn play_out(mut ep: Episode, human: Option<&HumanModel>) -> Result<EpisodeLog> {
    let mut human_rng = rng::stream(ep.seeds.human);
    let limit = 3 * ep.state.cells() + 1;
    while !ep.is_finished() {
        let action = ep.choose_with(human, &mut human_rng)?;
        ep.act(action)?;
        debug_assert!(ep.steps.len() <= limit, "episode exceeded {limit} steps");
    }
    ep.into_log()
}

/// A simulated human plays `instance` under action-set support.
pub fn run_episode(
    instance: &GameInstance,
    config: SupportConfig,
    agent: Heuristic,
    human: &HumanModel,
    seeds: EpisodeSeeds,
) -> Result<EpisodeLog> {
    let ep = Episode::start(
        instance,
        PlayMode::Assisted(config),
        Some(agent),
        human.label.clone(),
        seeds,
    )?;
    play_out(ep, Some(human))
}

/// A simulated human plays on their own.
pub fn run_unassisted(
    instance: &GameInstance,
    human: &HumanModel,
    seeds: EpisodeSeeds,
) -> Result<EpisodeLog> {
    let ep = Episode::start(
        instance,
        PlayMode::Unassisted,
        None,
        human.label.clone(),
        seeds,
    )?;
    play_out(ep, Some(human))
}

/// The agent plays on its own.
pub fn run_autonomous(
    instance: &GameInstance,
    agent: Heuristic,
    seeds: EpisodeSeeds,
) -> Result<EpisodeLog> {
    let ep = Episode::start(instance, PlayMode::Autonomous, Some(agent), "none", seeds)?;
    play_out(ep, None)
}

/// Runs `mode` with a simulated human (ignored for autonomous play).
pub fn run_mode(
    instance: &GameInstance,
    mode: PlayMode,
    agent: Heuristic,
    human: &HumanModel,
    seeds: EpisodeSeeds,
) -> Result<EpisodeLog> {
    match mode {
        PlayMode::Assisted(cfg) => run_episode(instance, cfg, agent, human, seeds),
        PlayMode::Unassisted => run_unassisted(instance, human, seeds),
        PlayMode::Autonomous => run_autonomous(instance, agent, seeds),
    }
}

/// Replays `actions` against the recorded seeds and configuration of `log`.
/// Works for any decision maker, including a person.
pub fn replay_actions(
    instance: &GameInstance,
    log: &EpisodeLog,
    actions: &[Tile],
) -> Result<EpisodeLog> {
    if instance.id != log.instance_id {
        return Err(Error::InvalidInput(format!(
            "log was recorded on {}, not {}",
            log.instance_id, instance.id
        )));
    }
    let mut ep = Episode::start(
        instance,
        log.play_mode()?,
        log.agent,
        log.human.clone(),
        log.seeds,
    )?;
    for &a in actions {
        ep.act(a)?;
    }
    ep.into_log()
}

/// Re-runs a simulated episode from the seeds and labels stored in `log`.
pub fn replay(instance: &GameInstance, log: &EpisodeLog) -> Result<EpisodeLog> {
    let mode = log.play_mode()?;
    match mode {
        PlayMode::Autonomous => {
            let agent = log
                .agent
                .ok_or_else(|| Error::InvalidInput("autonomous log without agent".into()))?;
            run_autonomous(instance, agent, log.seeds)
        }
        _ => {
            let human: HumanModel = log.human.parse()?;
            let ep = Episode::start(instance, mode, log.agent, log.human.clone(), log.seeds)?;
            play_out(ep, Some(&human))
        }
    }
}

//! Decision makers: the configurable MCTS family and the RND, OSLA and RMHC
//! baselines, all behind [`Agent`].

mod mcts;
pub mod params;
mod simple;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use mcts::{alpha_value, mcts_search, search_tree, select_child, uct_value, Edge, Node, SearchTree};
pub use params::*;
pub use simple::{osla_decide, random_decide, rmhc_decide, RmhcAgent};

use crate::error::{Error, Result};
use crate::game::{Action, GameState};
use crate::rng::Rng;

/// Search budget per decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Budget {
    Iterations(u32),
    Millis(u64),
}

impl Budget {
    pub const DEFAULT: Budget = Budget::Iterations(128);

    pub(crate) fn meter(self) -> BudgetMeter {
        BudgetMeter { budget: self, start: std::time::Instant::now(), used: 0 }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::DEFAULT
    }
}

pub(crate) struct BudgetMeter {
    budget: Budget,
    start: std::time::Instant,
    used: u32,
}

impl BudgetMeter {
    /// Consumes one iteration if any budget remains.
    pub(crate) fn tick(&mut self) -> bool {
        let ok = match self.budget {
            Budget::Iterations(n) => self.used < n,
            Budget::Millis(ms) => self.start.elapsed() < Duration::from_millis(ms),
        };
        if ok {
            self.used += 1;
        }
        ok
    }
}

/// What kind of agent to build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AgentKind {
    #[serde(rename = "RND")]
    Random,
    #[serde(rename = "OSLA")]
    Osla,
    #[serde(rename = "RMHC")]
    Rmhc { horizon: u32 },
    #[serde(rename = "MCTS")]
    Mcts { params: MctsParams },
}

/// An agent type plus its per-decision budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    #[serde(flatten)]
    pub kind: AgentKind,
    #[serde(default)]
    pub budget: Budget,
}

impl AgentSpec {
    pub fn new(kind: AgentKind, budget: Budget) -> Result<AgentSpec> {
        if let AgentKind::Rmhc { horizon: 0 } = kind {
            return Err(Error::InvalidArgument("RMHC horizon must be at least 1".into()));
        }
        Ok(AgentSpec { kind, budget })
    }

    pub fn random() -> AgentSpec {
        AgentSpec { kind: AgentKind::Random, budget: Budget::DEFAULT }
    }

    pub fn osla() -> AgentSpec {
        AgentSpec { kind: AgentKind::Osla, budget: Budget::DEFAULT }
    }

    pub fn mcts(params: MctsParams, budget: Budget) -> AgentSpec {
        AgentSpec { kind: AgentKind::Mcts { params }, budget }
    }

    pub fn build(&self) -> Box<dyn Agent> {
        match self.kind {
            AgentKind::Random => Box::new(RandomAgent),
            AgentKind::Osla => Box::new(OslaAgent),
            AgentKind::Rmhc { horizon } => Box::new(RmhcAgent::new(horizon as usize, self.budget)),
            AgentKind::Mcts { params } => Box::new(MctsAgent { params, budget: self.budget }),
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AgentKind::Random => f.write_str("RND"),
            AgentKind::Osla => f.write_str("OSLA"),
            AgentKind::Rmhc { horizon } => write!(f, "RMHC-{horizon}"),
            AgentKind::Mcts { params } => write!(f, "MCTS[{params}]"),
        }
    }
}

/// The three fixed opponents every environment is played against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Opponent {
    #[serde(rename = "RND")]
    Random,
    #[serde(rename = "OSLA")]
    Osla,
    #[serde(rename = "SimpleMCTS")]
    SimpleMcts,
}

impl Opponent {
    pub const ALL: [Opponent; 3] = [Opponent::Random, Opponent::Osla, Opponent::SimpleMcts];

    pub fn as_str(self) -> &'static str {
        match self {
            Opponent::Random => "RND",
            Opponent::Osla => "OSLA",
            Opponent::SimpleMcts => "SimpleMCTS",
        }
    }
}

impl fmt::Display for Opponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Opponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Opponent::ALL
            .into_iter()
            .find(|o| o.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown opponent `{s}`")))
    }
}

/// Builds the spec of a fixed opponent; `budget` only matters for SimpleMCTS.
pub fn fixed_opponent(kind: Opponent, budget: Budget) -> AgentSpec {
    match kind {
        Opponent::Random => AgentSpec::random(),
        Opponent::Osla => AgentSpec::osla(),
        Opponent::SimpleMcts => AgentSpec::mcts(MctsParams::simple(), budget),
    }
}

/// A decision maker. The state handed over is the agent's own copy, with
/// hidden information already randomised for the acting player.
pub trait Agent: Send {
    fn decide(&mut self, state: &GameState, rng: &mut Rng) -> Result<Action>;
}

pub struct RandomAgent;

impl Agent for RandomAgent {
    fn decide(&mut self, state: &GameState, rng: &mut Rng) -> Result<Action> {
        random_decide(state, rng)
    }
}

pub struct OslaAgent;

impl Agent for OslaAgent {
    fn decide(&mut self, state: &GameState, rng: &mut Rng) -> Result<Action> {
        osla_decide(state, state.current_player(), rng)
    }
}

pub struct MctsAgent {
    pub params: MctsParams,
    pub budget: Budget,
}

impl Agent for MctsAgent {
    fn decide(&mut self, state: &GameState, rng: &mut Rng) -> Result<Action> {
        mcts_search(state, state.current_player(), &self.params, self.budget, rng)
    }
}

/// Uniformly random legal action; `None` at terminal states.
pub(crate) fn random_action(state: &GameState, rng: &mut Rng) -> Option<Action> {
    use rand::seq::IndexedRandom;
    if state.is_terminal() {
        return None;
    }
    state.legal_actions().ok()?.choose(rng).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_mcts_round_trips_through_json() {
        let spec = fixed_opponent(Opponent::SimpleMcts, Budget::Iterations(64));
        let json = serde_json::to_string(&spec).unwrap();
        let back: AgentSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let AgentKind::Mcts { params } = back.kind else { panic!("not MCTS") };
        assert_eq!(params.tree_depth, 10);
        assert_eq!(params.rollout_length, 10);
        assert!(params.open_loop && !params.redeterminise);
        assert_eq!(params.opponent_tree, OpponentTree::Paranoid);
    }

    #[test]
    fn rmhc_horizon_must_be_positive() {
        assert!(AgentSpec::new(AgentKind::Rmhc { horizon: 0 }, Budget::DEFAULT).is_err());
        assert!(AgentSpec::new(AgentKind::Rmhc { horizon: 3 }, Budget::DEFAULT).is_ok());
    }
}

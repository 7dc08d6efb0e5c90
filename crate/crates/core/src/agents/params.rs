use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreePolicy {
    #[serde(rename = "UCB")]
    Ucb,
    Alpha,
    #[serde(rename = "EXP3")]
    Exp3,
    #[serde(rename = "RM")]
    Rm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpponentTree {
    MaxN,
    Paranoid,
    SelfOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinalPolicy {
    Robust,
    Simple,
}

pub const TREE_POLICIES: [TreePolicy; 4] = [TreePolicy::Ucb, TreePolicy::Alpha, TreePolicy::Exp3, TreePolicy::Rm];
pub const OPPONENT_TREES: [OpponentTree; 3] = [OpponentTree::MaxN, OpponentTree::Paranoid, OpponentTree::SelfOnly];
pub const FINAL_POLICIES: [FinalPolicy; 2] = [FinalPolicy::Robust, FinalPolicy::Simple];
pub const TREE_DEPTHS: [u32; 5] = [1, 3, 10, 30, 100];
pub const ROLLOUT_LENGTHS: [u32; 5] = [0, 3, 10, 30, 100];
pub const BOOLS: [bool; 2] = [false, true];
pub const EXPLORATION_K: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
pub const EXPLORATION_EPSILON: [f64; 4] = [0.01, 0.03, 0.1, 0.3];

impl TreePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            TreePolicy::Ucb => "UCB",
            TreePolicy::Alpha => "Alpha",
            TreePolicy::Exp3 => "EXP3",
            TreePolicy::Rm => "RM",
        }
    }
}

impl OpponentTree {
    pub fn as_str(self) -> &'static str {
        match self {
            OpponentTree::MaxN => "MaxN",
            OpponentTree::Paranoid => "Paranoid",
            OpponentTree::SelfOnly => "SelfOnly",
        }
    }
}

impl FinalPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalPolicy::Robust => "Robust",
            FinalPolicy::Simple => "Simple",
        }
    }
}

/// One point of the nine-dimensional MCTS configuration space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MctsParams {
    pub tree_policy: TreePolicy,
    pub opponent_tree: OpponentTree,
    pub final_policy: FinalPolicy,
    pub tree_depth: u32,
    pub rollout_length: u32,
    pub redeterminise: bool,
    pub open_loop: bool,
    /// Exploration constant for UCB and Alpha.
    pub k: f64,
    /// Uniform exploration mix for EXP3 and RM.
    pub epsilon: f64,
}

impl MctsParams {
    /// Open-loop Paranoid UCT with depth and rollout 10: the simple fixed opponent.
    pub fn simple() -> MctsParams {
        MctsParams {
            tree_policy: TreePolicy::Ucb,
            opponent_tree: OpponentTree::Paranoid,
            final_policy: FinalPolicy::Robust,
            tree_depth: 10,
            rollout_length: 10,
            redeterminise: false,
            open_loop: true,
            k: 1.0,
            epsilon: 0.1,
        }
    }

    /// Whether every field takes one of the values of the optimisation space.
    pub fn in_search_space(&self) -> bool {
        TREE_DEPTHS.contains(&self.tree_depth)
            && ROLLOUT_LENGTHS.contains(&self.rollout_length)
            && EXPLORATION_K.contains(&self.k)
            && EXPLORATION_EPSILON.contains(&self.epsilon)
    }
}

impl Default for MctsParams {
    fn default() -> Self {
        MctsParams::simple()
    }
}

impl fmt::Display for MctsParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tree={},opp={},final={},depth={},rollout={},is={},ol={},k={:?},eps={:?}",
            self.tree_policy.as_str(),
            self.opponent_tree.as_str(),
            self.final_policy.as_str(),
            self.tree_depth,
            self.rollout_length,
            self.redeterminise,
            self.open_loop,
            self.k,
            self.epsilon
        )
    }
}

fn parse_enum<T: Copy>(all: &[T], name: fn(T) -> &'static str, value: &str) -> Result<T> {
    all.iter()
        .copied()
        .find(|&v| name(v).eq_ignore_ascii_case(value))
        .ok_or_else(|| Error::Parse(format!("unknown value `{value}`")))
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse(format!("bad value `{value}` for `{key}`")))
}

impl FromStr for MctsParams {
    type Err = Error;

    /// Parses the flat `key=value` form; missing keys keep the simple-agent defaults.
    fn from_str(s: &str) -> Result<Self> {
        let mut p = MctsParams::simple();
        for pair in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{pair}`")))?;
            let value = value.trim();
            match key.trim() {
                "tree" => p.tree_policy = parse_enum(&TREE_POLICIES, TreePolicy::as_str, value)?,
                "opp" => p.opponent_tree = parse_enum(&OPPONENT_TREES, OpponentTree::as_str, value)?,
                "final" => p.final_policy = parse_enum(&FINAL_POLICIES, FinalPolicy::as_str, value)?,
                "depth" => p.tree_depth = parse_num(key, value)?,
                "rollout" => p.rollout_length = parse_num(key, value)?,
                "is" => p.redeterminise = parse_num(key, value)?,
                "ol" => p.open_loop = parse_num(key, value)?,
                "k" => p.k = parse_num(key, value)?,
                "eps" => p.epsilon = parse_num(key, value)?,
                other => return Err(Error::Parse(format!("unknown key `{other}`"))),
            }
        }
        Ok(p)
    }
}

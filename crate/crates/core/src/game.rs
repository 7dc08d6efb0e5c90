//! The game-agnostic state interface: forward model, information hiding,
//! redeterminization, scoring and per-decision telemetry.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{Diamant, DotsAndBoxes, LoveLetter, Uno};
use crate::rng::Rng;

pub const MAX_PLAYERS: usize = 4;

/// Stable descriptive key of an action.
///
/// Keys are game-defined integers; legal-action lists are always sorted by
/// key, so two states that look the same to the acting player enumerate
/// their actions in the same order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action(pub u32);

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Position of an action in the current legal-action enumeration, plus its key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionId {
    pub index: usize,
    pub key: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GameId {
    #[serde(rename = "dotsandboxes")]
    DotsAndBoxes,
    #[serde(rename = "loveletter")]
    LoveLetter,
    #[serde(rename = "uno")]
    Uno,
    #[serde(rename = "diamant")]
    Diamant,
}

impl GameId {
    pub const ALL: [GameId; 4] = [GameId::DotsAndBoxes, GameId::LoveLetter, GameId::Uno, GameId::Diamant];

    pub fn as_str(self) -> &'static str {
        match self {
            GameId::DotsAndBoxes => "dotsandboxes",
            GameId::LoveLetter => "loveletter",
            GameId::Uno => "uno",
            GameId::Diamant => "diamant",
        }
    }
}

impl fmt::Display for GameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GameId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GameId::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::UnknownGame(s.to_string()))
    }
}

/// Per-game rule parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuleConfig {
    /// Dots per side of the Dots and Boxes grid.
    pub dots_rows: usize,
    pub dots_cols: usize,
    /// Decision cap after which an Uno game is scored by heuristic.
    pub uno_decision_cap: u32,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig { dots_rows: 9, dots_cols: 9, uno_decision_cap: 2000 }
    }
}

/// Where a component currently lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Zone {
    Board,
    Hand(usize),
    Deck,
    Discard(usize),
    Burn,
    Path,
    Removed,
    Player(usize),
}

/// One physical piece of game state, as seen by the information model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Component {
    pub id: u32,
    pub zone: Zone,
    /// Bit `p` set means hidden from player `p`.
    pub hidden_from: u8,
    pub value: i32,
}

impl Component {
    pub fn is_hidden_from(&self, player: usize) -> bool {
        self.hidden_from & (1 << player) != 0
    }
}

/// Game score for one player, either a terminal utility or a scaled
/// non-terminal score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicScore {
    pub value: f64,
    pub terminal: bool,
}

/// Utility vector from a winner set: a sole winner gets +1, joint winners 0,
/// everyone else -1.
pub fn utilities_from_winners(winners: &[usize], players: usize) -> Vec<f64> {
    let win = if winners.len() == 1 { 1.0 } else { 0.0 };
    (0..players).map(|p| if winners.contains(&p) { win } else { -1.0 }).collect()
}

/// The rules every game implements.
pub trait Rules: Clone + Send + Sync {
    const NAME: &'static str;

    fn player_count(&self) -> usize;
    fn current_player(&self) -> usize;
    fn turn_index(&self) -> u32;
    fn is_terminal(&self) -> bool;
    /// Sorted by key; empty at terminal states.
    fn legal_actions(&self) -> Vec<Action>;
    /// Applies an action already known to be legal.
    fn apply_unchecked(&mut self, action: Action, rng: &mut Rng);
    fn redeterminize(&mut self, observer: usize, rng: &mut Rng);
    /// Non-terminal score scaled into `[0, 1]`.
    fn progress_score(&self, player: usize) -> f64;
    /// Winner set; only meaningful at terminal states.
    fn winner_set(&self) -> Vec<usize>;
    fn component_count(&self) -> usize;
    /// `(hidden, total)` components from the observer's point of view.
    fn hidden_count(&self, observer: usize) -> (usize, usize);
    fn components(&self) -> Vec<Component>;
    /// Everything the observer can see, serialized.
    fn observation(&self, observer: usize) -> String;
    fn describe(&self, action: Action) -> String;
}

/// A running game of any of the implemented titles.
#[derive(Debug, Clone, PartialEq)]
pub enum GameState {
    DotsAndBoxes(DotsAndBoxes),
    LoveLetter(LoveLetter),
    Uno(Uno),
    Diamant(Diamant),
}

macro_rules! dispatch {
    ($self:expr, $g:ident => $e:expr) => {
        match $self {
            GameState::DotsAndBoxes($g) => $e,
            GameState::LoveLetter($g) => $e,
            GameState::Uno($g) => $e,
            GameState::Diamant($g) => $e,
        }
    };
}

impl GameState {
    /// Deals a fresh game with default rule parameters.
    pub fn new(game: GameId, players: usize, rng: &mut Rng) -> Result<GameState> {
        Self::with_rules(game, players, &RuleConfig::default(), rng)
    }

    pub fn with_rules(game: GameId, players: usize, rules: &RuleConfig, rng: &mut Rng) -> Result<GameState> {
        Ok(match game {
            GameId::DotsAndBoxes => {
                GameState::DotsAndBoxes(DotsAndBoxes::new(players, rules.dots_rows, rules.dots_cols)?)
            }
            GameId::LoveLetter => GameState::LoveLetter(LoveLetter::new(players, rng)?),
            GameId::Uno => GameState::Uno(Uno::new(players, rules.uno_decision_cap, rng)?),
            GameId::Diamant => GameState::Diamant(Diamant::new(players, rng)?),
        })
    }

    pub fn game_id(&self) -> GameId {
        match self {
            GameState::DotsAndBoxes(_) => GameId::DotsAndBoxes,
            GameState::LoveLetter(_) => GameId::LoveLetter,
            GameState::Uno(_) => GameId::Uno,
            GameState::Diamant(_) => GameId::Diamant,
        }
    }

    pub fn player_count(&self) -> usize {
        dispatch!(self, g => g.player_count())
    }

    pub fn current_player(&self) -> usize {
        dispatch!(self, g => g.current_player())
    }

    pub fn turn_index(&self) -> u32 {
        dispatch!(self, g => g.turn_index())
    }

    pub fn is_terminal(&self) -> bool {
        dispatch!(self, g => g.is_terminal())
    }

    /// Legal actions for the acting player, sorted by key.
    pub fn legal_actions(&self) -> Result<Vec<Action>> {
        if self.is_terminal() {
            return Err(Error::TerminalState);
        }
        Ok(dispatch!(self, g => g.legal_actions()))
    }

    /// Legal actions for `player`, who must be the acting player.
    pub fn legal_actions_for(&self, player: usize) -> Result<Vec<Action>> {
        if player != self.current_player() && !self.is_terminal() {
            return Err(Error::InvalidArgument(format!(
                "player {player} is not acting (player {} is)",
                self.current_player()
            )));
        }
        self.legal_actions()
    }

    /// Legal actions with their enumeration index.
    pub fn action_ids(&self) -> Result<Vec<ActionId>> {
        Ok(self
            .legal_actions()?
            .into_iter()
            .enumerate()
            .map(|(index, key)| ActionId { index, key })
            .collect())
    }

    /// Forward model. Chance events draw only from `rng`.
    pub fn apply_action(&mut self, action: Action, rng: &mut Rng) -> Result<()> {
        let legal = self.legal_actions()?;
        if legal.binary_search(&action).is_err() {
            return Err(Error::IllegalAction(action.0));
        }
        self.apply_unchecked(action, rng);
        Ok(())
    }

    /// Forward model without the legality check, for callers that just
    /// enumerated the legal actions themselves.
    pub fn apply_unchecked(&mut self, action: Action, rng: &mut Rng) {
        debug_assert!(!self.is_terminal());
        dispatch!(self, g => g.apply_unchecked(action, rng))
    }

    /// Resamples everything hidden from `observer` consistently with what the
    /// observer knows.
    pub fn redeterminize(&mut self, observer: usize, rng: &mut Rng) {
        dispatch!(self, g => g.redeterminize(observer, rng))
    }

    pub fn heuristic_score(&self, player: usize) -> HeuristicScore {
        if self.is_terminal() {
            HeuristicScore { value: self.utilities()[player], terminal: true }
        } else {
            let value = dispatch!(self, g => g.progress_score(player)).clamp(0.0, 1.0);
            HeuristicScore { value, terminal: false }
        }
    }

    /// Per-player score: utilities at terminal states, scaled progress otherwise.
    pub fn scores(&self) -> Vec<f64> {
        if self.is_terminal() {
            self.utilities()
        } else {
            (0..self.player_count()).map(|p| self.heuristic_score(p).value).collect()
        }
    }

    /// Terminal utilities (+1 sole win, 0 joint win, -1 loss).
    pub fn utilities(&self) -> Vec<f64> {
        utilities_from_winners(&dispatch!(self, g => g.winner_set()), self.player_count())
    }

    pub fn winners(&self) -> Result<Vec<usize>> {
        if !self.is_terminal() {
            return Err(Error::NotTerminal);
        }
        Ok(dispatch!(self, g => g.winner_set()))
    }

    pub fn component_count(&self) -> usize {
        dispatch!(self, g => g.component_count())
    }

    pub fn hidden_fraction(&self, observer: usize) -> f64 {
        let (hidden, total) = dispatch!(self, g => g.hidden_count(observer));
        if total == 0 {
            0.0
        } else {
            hidden as f64 / total as f64
        }
    }

    pub fn components(&self) -> Vec<Component> {
        dispatch!(self, g => g.components())
    }

    pub fn observation(&self, observer: usize) -> String {
        dispatch!(self, g => g.observation(observer))
    }

    pub fn describe(&self, action: Action) -> String {
        dispatch!(self, g => g.describe(action))
    }
}

/// Timing and per-decision series collected while a game is played.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Telemetry {
    pub copy_time_total: Duration,
    pub fm_time_total: Duration,
    pub copy_count: u64,
    pub fm_count: u64,
    pub component_count: Vec<f64>,
    pub hidden_fraction: Vec<f64>,
    pub action_space_size: Vec<f64>,
    pub score: Vec<f64>,
}

impl Telemetry {
    /// Records the series entries for one decision by the acting player.
    pub fn record_decision(&mut self, state: &GameState, action_space: usize) {
        let p = state.current_player();
        self.component_count.push(state.component_count() as f64);
        self.hidden_fraction.push(state.hidden_fraction(p));
        self.action_space_size.push(action_space as f64);
        self.score.push(state.heuristic_score(p).value);
    }

    pub fn decisions(&self) -> usize {
        self.action_space_size.len()
    }

    pub fn mean_copy_time(&self) -> f64 {
        mean_duration(self.copy_time_total, self.copy_count)
    }

    pub fn mean_fm_time(&self) -> f64 {
        mean_duration(self.fm_time_total, self.fm_count)
    }
}

fn mean_duration(total: Duration, count: u64) -> f64 {
    if count == 0 {
        0.0
    } else {
        total.as_secs_f64() / count as f64
    }
}

/// Deep copy, timed into the telemetry.
pub fn copy_state(state: &GameState, telemetry: &mut Telemetry) -> GameState {
    let start = Instant::now();
    let copy = state.clone();
    telemetry.copy_time_total += start.elapsed();
    telemetry.copy_count += 1;
    copy
}

/// Checked forward model, timed into the telemetry.
pub fn apply_action(
    state: &mut GameState,
    action: Action,
    rng: &mut Rng,
    telemetry: &mut Telemetry,
) -> Result<()> {
    let start = Instant::now();
    let out = state.apply_action(action, rng);
    telemetry.fm_time_total += start.elapsed();
    telemetry.fm_count += 1;
    out
}

/// One line of a game trace (JSON lines, one record per decision).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub turn: u32,
    pub player: usize,
    pub action_key: String,
    pub action_space: usize,
    pub hidden_fraction: f64,
    pub component_count: usize,
    pub score: Vec<f64>,
}

impl TraceRecord {
    /// Captures the state just before `action` is applied.
    pub fn capture(state: &GameState, action: Action, action_space: usize) -> TraceRecord {
        let player = state.current_player();
        TraceRecord {
            turn: state.turn_index(),
            player,
            action_key: state.describe(action),
            action_space,
            hidden_fraction: state.hidden_fraction(player),
            component_count: state.component_count(),
            score: state.scores(),
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }
}

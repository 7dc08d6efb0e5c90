use crate::error::{Error, Result};
use crate::game::{Action, Component, Rules, Zone};
use crate::rng::Rng;

use super::{argmax_players, check_players};
use rand::Rng as _;

pub const ROUNDS: u32 = 5;
const TREASURES: usize = 15;
const HAZARD_TYPES: usize = 5;
const HAZARD_COPIES: u8 = 3;
const CONTINUE: Action = Action(0);
const LEAVE: Action = Action(1);
/// Banked treasure that maps to a heuristic score of 1.
const SCORE_CAP: f64 = 100.0;

/// Diamant: push-your-luck exploration with simultaneous stay/leave choices.
///
/// Choices are committed one player at a time and stay hidden from the other
/// players until everyone in the mine has committed; then they resolve
/// together. The deck is an unordered set sampled by the forward model.
#[derive(Debug, Clone, PartialEq)]
pub struct Diamant {
    players: usize,
    turn: u32,
    round: u32,
    in_mine: [bool; 4],
    /// `Some(true)` means the player committed to leaving.
    commits: [Option<bool>; 4],
    carried: [u32; 4],
    banked: [u32; 4],
    /// Bit `v - 1` set while treasure `v` is still in the deck.
    deck_treasures: u16,
    deck_hazards: [u8; HAZARD_TYPES],
    removed_hazards: [u8; HAZARD_TYPES],
    path_hazards: [u8; HAZARD_TYPES],
    path_cards: u32,
    path_remaining: u32,
    revealed_value: u32,
    distributed_value: u32,
    terminal: bool,
}

impl Diamant {
    pub fn new(players: usize, rng: &mut Rng) -> Result<Self> {
        check_players("diamant", players)?;
        let mut g = Diamant {
            players,
            turn: 0,
            round: 0,
            in_mine: [false; 4],
            commits: [None; 4],
            carried: [0; 4],
            banked: [0; 4],
            deck_treasures: 0,
            deck_hazards: [0; HAZARD_TYPES],
            removed_hazards: [0; HAZARD_TYPES],
            path_hazards: [0; HAZARD_TYPES],
            path_cards: 0,
            path_remaining: 0,
            revealed_value: 0,
            distributed_value: 0,
            terminal: false,
        };
        g.start_round(rng);
        Ok(g)
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn in_mine(&self, player: usize) -> bool {
        self.in_mine[player]
    }

    pub fn banked(&self, player: usize) -> u32 {
        self.banked[player]
    }

    pub fn carried(&self, player: usize) -> u32 {
        self.carried[player]
    }

    pub fn path_remaining(&self) -> u32 {
        self.path_remaining
    }

    /// Treasure revealed this round, and how much of it went to players
    /// (including treasure later lost to a collapse).
    pub fn round_accounting(&self) -> (u32, u32) {
        (self.revealed_value, self.distributed_value)
    }

    pub fn deck_size(&self) -> usize {
        self.deck_treasures.count_ones() as usize + self.deck_hazards.iter().map(|&h| h as usize).sum::<usize>()
    }

    fn total_cards(&self) -> usize {
        TREASURES + HAZARD_TYPES * HAZARD_COPIES as usize - self.removed_hazards.iter().map(|&h| h as usize).sum::<usize>()
    }

    fn start_round(&mut self, rng: &mut Rng) {
        self.in_mine = [false; 4];
        self.in_mine[..self.players].fill(true);
        self.commits = [None; 4];
        self.carried = [0; 4];
        self.deck_treasures = (1 << TREASURES) - 1;
        for h in 0..HAZARD_TYPES {
            self.deck_hazards[h] = HAZARD_COPIES - self.removed_hazards[h];
        }
        self.path_hazards = [0; HAZARD_TYPES];
        self.path_cards = 0;
        self.path_remaining = 0;
        self.revealed_value = 0;
        self.distributed_value = 0;
        self.reveal(rng);
    }

    fn end_round(&mut self, rng: &mut Rng) {
        self.round += 1;
        if self.round >= ROUNDS {
            self.in_mine = [false; 4];
            self.terminal = true;
        } else {
            self.start_round(rng);
        }
    }

    /// Reveals the next card; returns false when the round ended.
    fn reveal(&mut self, rng: &mut Rng) -> bool {
        let size = self.deck_size();
        if size == 0 {
            // Exhausted deck: everyone still inside walks out with their haul.
            for p in 0..self.players {
                if self.in_mine[p] {
                    self.banked[p] += std::mem::take(&mut self.carried[p]);
                }
            }
            self.end_round(rng);
            return false;
        }
        let pick = rng.random_range(0..size);
        let treasures = self.deck_treasures.count_ones() as usize;
        self.path_cards += 1;
        if pick < treasures {
            let mut bits = self.deck_treasures;
            for _ in 0..pick {
                bits &= bits - 1;
            }
            let index = bits.trailing_zeros();
            self.deck_treasures &= !(1 << index);
            let value = index + 1;
            let stayers: Vec<usize> = (0..self.players).filter(|&p| self.in_mine[p]).collect();
            let share = value / stayers.len() as u32;
            for &p in &stayers {
                self.carried[p] += share;
            }
            self.revealed_value += value;
            self.distributed_value += share * stayers.len() as u32;
            self.path_remaining += value % stayers.len() as u32;
            true
        } else {
            let mut rest = pick - treasures;
            let mut hazard = 0;
            while rest >= self.deck_hazards[hazard] as usize {
                rest -= self.deck_hazards[hazard] as usize;
                hazard += 1;
            }
            self.deck_hazards[hazard] -= 1;
            self.path_hazards[hazard] += 1;
            if self.path_hazards[hazard] == 2 {
                for p in 0..self.players {
                    if self.in_mine[p] {
                        self.carried[p] = 0;
                    }
                }
                self.removed_hazards[hazard] += 1;
                self.end_round(rng);
                false
            } else {
                true
            }
        }
    }

    /// Resolves one simultaneous decision: leavers split the path remainder
    /// (floor division, leftovers stay on the path) and bank; if anyone stays,
    /// the next card is revealed.
    pub fn simultaneous_resolve(&mut self, choices: &[Option<bool>], rng: &mut Rng) -> Result<()> {
        if self.terminal {
            return Err(Error::TerminalState);
        }
        for p in 0..self.players {
            if self.in_mine[p] && choices.get(p).copied().flatten().is_none() {
                return Err(Error::MissingChoice(p));
            }
        }
        let leavers: Vec<usize> = (0..self.players).filter(|&p| self.in_mine[p] && choices[p] == Some(true)).collect();
        if !leavers.is_empty() {
            let share = self.path_remaining / leavers.len() as u32;
            for &p in &leavers {
                self.banked[p] += std::mem::take(&mut self.carried[p]) + share;
                self.in_mine[p] = false;
            }
            self.path_remaining -= share * leavers.len() as u32;
            self.distributed_value += share * leavers.len() as u32;
        }
        self.commits = [None; 4];
        if self.in_mine.iter().any(|&m| m) {
            self.reveal(rng);
        } else {
            self.end_round(rng);
        }
        Ok(())
    }
}

impl Rules for Diamant {
    const NAME: &'static str = "diamant";

    fn player_count(&self) -> usize {
        self.players
    }

    fn current_player(&self) -> usize {
        (0..self.players).find(|&p| self.in_mine[p] && self.commits[p].is_none()).unwrap_or(0)
    }

    fn turn_index(&self) -> u32 {
        self.turn
    }

    fn is_terminal(&self) -> bool {
        self.terminal
    }

    fn legal_actions(&self) -> Vec<Action> {
        if self.terminal {
            Vec::new()
        } else {
            vec![CONTINUE, LEAVE]
        }
    }

    fn apply_unchecked(&mut self, action: Action, rng: &mut Rng) {
        let me = self.current_player();
        self.commits[me] = Some(action == LEAVE);
        self.turn += 1;
        if (0..self.players).all(|p| !self.in_mine[p] || self.commits[p].is_some()) {
            let choices = self.commits;
            self.simultaneous_resolve(&choices, rng).expect("every player in the mine has committed");
        }
    }

    fn redeterminize(&mut self, observer: usize, rng: &mut Rng) {
        for p in 0..self.players {
            if p != observer && self.commits[p].is_some() {
                self.commits[p] = Some(rng.random_bool(0.5));
            }
        }
    }

    fn progress_score(&self, player: usize) -> f64 {
        self.banked[player] as f64 / SCORE_CAP
    }

    fn winner_set(&self) -> Vec<usize> {
        argmax_players(&self.banked[..self.players])
    }

    fn component_count(&self) -> usize {
        self.total_cards() + self.players
    }

    fn hidden_count(&self, observer: usize) -> (usize, usize) {
        let commits = (0..self.players).filter(|&p| p != observer && self.commits[p].is_some()).count();
        (self.deck_size() + commits, self.component_count())
    }

    fn components(&self) -> Vec<Component> {
        let everyone = (1u8 << self.players) - 1;
        let mut out = Vec::new();
        let mut push = |zone: Zone, hidden_from: u8, value: i32| {
            out.push(Component { id: out.len() as u32, zone, hidden_from, value });
        };
        for t in 0..TREASURES {
            let zone = if self.deck_treasures & (1 << t) != 0 { Zone::Deck } else { Zone::Path };
            let hidden = if zone == Zone::Deck { everyone } else { 0 };
            push(zone, hidden, t as i32 + 1);
        }
        for h in 0..HAZARD_TYPES {
            for _ in 0..self.deck_hazards[h] {
                push(Zone::Deck, everyone, -(h as i32) - 1);
            }
            for _ in 0..(HAZARD_COPIES - self.removed_hazards[h] - self.deck_hazards[h]) {
                push(Zone::Path, 0, -(h as i32) - 1);
            }
        }
        for p in 0..self.players {
            let hidden = if self.commits[p].is_some() { everyone & !(1 << p) } else { 0 };
            push(Zone::Player(p), hidden, self.commits[p].map_or(-1, i32::from));
        }
        out
    }

    fn observation(&self, observer: usize) -> String {
        let committed: Vec<bool> = self.commits[..self.players].iter().map(Option::is_some).collect();
        format!(
            "r={} turn={} mine={:?} committed={:?} mine_choice={:?} carried={:?} banked={:?} path={} hz={:?} deck={:016b}/{:?} removed={:?}",
            self.round,
            self.turn,
            &self.in_mine[..self.players],
            committed,
            self.commits[observer],
            &self.carried[..self.players],
            &self.banked[..self.players],
            self.path_remaining,
            self.path_hazards,
            self.deck_treasures,
            self.deck_hazards,
            self.removed_hazards,
        )
    }

    fn describe(&self, action: Action) -> String {
        if action == LEAVE { "leave" } else { "continue" }.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn quiet_state(players: usize) -> Diamant {
        let mut g = Diamant::new(players, &mut stream(11, &[])).unwrap();
        g.path_hazards = [0; HAZARD_TYPES];
        g.carried = [0; 4];
        g.revealed_value = 0;
        g.distributed_value = 0;
        g.path_remaining = 0;
        g
    }

    #[test]
    fn fresh_game_everyone_inside_nothing_banked() {
        for players in 2..=4 {
            let g = Diamant::new(players, &mut stream(players as u64, &[])).unwrap();
            assert!((0..players).all(|p| g.in_mine(p) && g.banked(p) == 0));
            assert!(g.hidden_count(0).0 > 0);
        }
    }

    #[test]
    fn two_leavers_split_seven() {
        let mut rng = stream(12, &[]);
        let mut g = quiet_state(3);
        g.path_remaining = 7;
        g.revealed_value = 7;
        g.simultaneous_resolve(&[Some(true), Some(true), Some(false)], &mut rng).unwrap();
        assert_eq!(g.banked(0), 3);
        assert_eq!(g.banked(1), 3);
        assert!(!g.in_mine(0) && !g.in_mine(1));
        // The leftover treasure stays on the path for later leavers.
        let (revealed, distributed) = g.round_accounting();
        assert_eq!(revealed, distributed + g.path_remaining());
        assert!(g.path_remaining() >= 1);
    }

    #[test]
    fn everyone_leaving_starts_the_next_round() {
        let mut rng = stream(13, &[]);
        let mut g = quiet_state(2);
        g.simultaneous_resolve(&[Some(true), Some(true)], &mut rng).unwrap();
        assert_eq!(g.round(), 1);
        assert!(g.in_mine(0) && g.in_mine(1));
    }

    #[test]
    fn duplicate_hazard_wipes_carried_treasure() {
        let mut rng = stream(14, &[]);
        let mut g = quiet_state(2);
        g.carried = [9, 4, 0, 0];
        g.deck_treasures = 0;
        g.deck_hazards = [1, 0, 0, 0, 0];
        g.path_hazards = [1, 0, 0, 0, 0];
        g.banked = [5, 0, 0, 0];
        g.simultaneous_resolve(&[Some(false), Some(false)], &mut rng).unwrap();
        assert_eq!(g.banked(0), 5);
        assert_eq!(g.round(), 1);
        assert_eq!(g.removed_hazards[0], 1);
        // The next round's opening card is shared equally; the old haul is gone.
        assert_eq!(g.carried(0), g.carried(1));
        assert!(g.carried(0) <= 7);
    }

    #[test]
    fn missing_choice_is_reported() {
        let mut g = quiet_state(3);
        let err = g.simultaneous_resolve(&[Some(true), None, Some(false)], &mut stream(0, &[])).unwrap_err();
        assert_eq!(err, Error::MissingChoice(1));
    }
}

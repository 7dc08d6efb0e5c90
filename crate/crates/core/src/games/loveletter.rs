use std::fmt::Write as _;

use crate::error::Result;
use crate::game::{Action, Component, Rules, Zone};
use crate::rng::Rng;

use super::{argmax_players, check_players, draw_from_counts};

const GUARD: u8 = 1;
const PRIEST: u8 = 2;
const BARON: u8 = 3;
const HANDMAID: u8 = 4;
const PRINCE: u8 = 5;
const KING: u8 = 6;
const COUNTESS: u8 = 7;
const PRINCESS: u8 = 8;

/// Copies of each card value 1..=8 in the 16-card deck.
const DECK: [u8; 9] = [0, 5, 2, 2, 2, 2, 1, 1, 1];
const CARD_NAMES: [&str; 9] = ["-", "Guard", "Priest", "Baron", "Handmaid", "Prince", "King", "Countess", "Princess"];
const NO_TARGET: u32 = 9;

fn encode(card: u8, target: Option<usize>, guess: u8) -> Action {
    let t = target.map_or(NO_TARGET, |t| t as u32);
    Action(card as u32 * 100 + t * 10 + guess as u32)
}

fn decode(a: Action) -> (u8, Option<usize>, u8) {
    let card = (a.0 / 100) as u8;
    let t = (a.0 / 10) % 10;
    let guess = (a.0 % 10) as u8;
    (card, (t != NO_TARGET).then_some(t as usize), guess)
}

/// Love Letter with the 16-card deck and one face-down burn card per round.
///
/// The acting player always holds two cards (`hand` plus `drawn`). The draw
/// pile is an unordered multiset; draws sample it with the supplied stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LoveLetter {
    players: usize,
    current: usize,
    turn: u32,
    round: u32,
    hand: [u8; 4],
    drawn: u8,
    deck: [u8; 9],
    deck_size: usize,
    burn: u8,
    discards: [[u8; 9]; 4],
    discard_sum: [u16; 4],
    eliminated: [bool; 4],
    protected: [bool; 4],
    tokens: [u8; 4],
    needed: u8,
    /// `known[a][b]` is the card `a` knows `b` holds, or 0.
    known: [[u8; 4]; 4],
    terminal: bool,
}

impl LoveLetter {
    pub fn new(players: usize, rng: &mut Rng) -> Result<Self> {
        check_players("loveletter", players)?;
        let mut g = LoveLetter {
            players,
            current: 0,
            turn: 0,
            round: 0,
            hand: [0; 4],
            drawn: 0,
            deck: DECK,
            deck_size: 16,
            burn: 0,
            discards: [[0; 9]; 4],
            discard_sum: [0; 4],
            eliminated: [false; 4],
            protected: [false; 4],
            tokens: [0; 4],
            needed: (7 - players) as u8,
            known: [[0; 4]; 4],
            terminal: false,
        };
        g.start_round(0, rng);
        Ok(g)
    }

    pub fn tokens(&self, player: usize) -> u8 {
        self.tokens[player]
    }

    pub fn tokens_needed(&self) -> u8 {
        self.needed
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn hand(&self, player: usize) -> u8 {
        self.hand[player]
    }

    pub fn drawn(&self) -> u8 {
        self.drawn
    }

    pub fn deck_size(&self) -> usize {
        self.deck_size
    }

    pub fn is_eliminated(&self, player: usize) -> bool {
        self.eliminated[player]
    }

    /// Cards in every zone; always 16.
    pub fn total_cards(&self) -> usize {
        let in_hands = (0..self.players).filter(|&p| self.hand[p] != 0).count() + usize::from(self.drawn != 0);
        let discarded: usize = self.discards[..self.players].iter().flatten().map(|&c| c as usize).sum();
        self.deck_size + usize::from(self.burn != 0) + in_hands + discarded
    }

    fn draw(&mut self, rng: &mut Rng) -> u8 {
        draw_from_counts(&mut self.deck, &mut self.deck_size, rng).map_or(0, |c| c as u8)
    }

    fn start_round(&mut self, first: usize, rng: &mut Rng) {
        self.deck = DECK;
        self.deck_size = 16;
        self.discards = [[0; 9]; 4];
        self.discard_sum = [0; 4];
        self.eliminated = [false; 4];
        self.protected = [false; 4];
        self.known = [[0; 4]; 4];
        self.hand = [0; 4];
        self.burn = self.draw(rng);
        for p in 0..self.players {
            self.hand[p] = self.draw(rng);
        }
        self.current = first;
        self.drawn = self.draw(rng);
    }

    fn discard(&mut self, player: usize, card: u8) {
        self.discards[player][card as usize] += 1;
        self.discard_sum[player] += card as u16;
    }

    fn eliminate(&mut self, player: usize) {
        self.eliminated[player] = true;
        let card = std::mem::take(&mut self.hand[player]);
        if card != 0 {
            self.discard(player, card);
        }
        for k in self.known.iter_mut() {
            k[player] = 0;
        }
    }

    fn alive(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.players).filter(|&p| !self.eliminated[p])
    }

    fn targets(&self, me: usize, include_self: bool) -> Vec<usize> {
        self.alive().filter(|&p| (p == me && include_self) || (p != me && !self.protected[p])).collect()
    }

    fn end_round(&mut self, rng: &mut Rng) {
        let alive: Vec<usize> = self.alive().collect();
        let winners = if alive.len() == 1 {
            alive
        } else {
            let best_card = alive.iter().map(|&p| self.hand[p]).max().unwrap_or(0);
            let holders: Vec<usize> = alive.into_iter().filter(|&p| self.hand[p] == best_card).collect();
            let sums: Vec<u16> = holders.iter().map(|&p| self.discard_sum[p]).collect();
            argmax_players(&sums).into_iter().map(|i| holders[i]).collect()
        };
        for &w in &winners {
            self.tokens[w] += 1;
        }
        self.round += 1;
        if self.tokens.iter().any(|&t| t >= self.needed) {
            // Park every card in the discards so the 16-card count still holds.
            for p in 0..self.players {
                if self.hand[p] != 0 {
                    let c = std::mem::take(&mut self.hand[p]);
                    self.discard(p, c);
                }
            }
            self.terminal = true;
        } else {
            self.start_round(winners[0], rng);
        }
    }
}

impl Rules for LoveLetter {
    const NAME: &'static str = "loveletter";

    fn player_count(&self) -> usize {
        self.players
    }

    fn current_player(&self) -> usize {
        self.current
    }

    fn turn_index(&self) -> u32 {
        self.turn
    }

    fn is_terminal(&self) -> bool {
        self.terminal
    }

    fn legal_actions(&self) -> Vec<Action> {
        if self.terminal {
            return Vec::new();
        }
        let me = self.current;
        let held = [self.hand[me], self.drawn];
        let forced = held.contains(&COUNTESS) && (held.contains(&KING) || held.contains(&PRINCE));
        let mut out = Vec::new();
        for (i, &card) in held.iter().enumerate() {
            if (i == 1 && held[0] == card) || (forced && card != COUNTESS) {
                continue;
            }
            match card {
                GUARD => {
                    let targets = self.targets(me, false);
                    if targets.is_empty() {
                        out.push(encode(card, None, 0));
                    }
                    for t in targets {
                        for guess in PRIEST..=PRINCESS {
                            out.push(encode(card, Some(t), guess));
                        }
                    }
                }
                PRIEST | BARON | KING | PRINCE => {
                    let targets = self.targets(me, card == PRINCE);
                    if targets.is_empty() {
                        out.push(encode(card, None, 0));
                    }
                    out.extend(targets.into_iter().map(|t| encode(card, Some(t), 0)));
                }
                _ => out.push(encode(card, None, 0)),
            }
        }
        out.sort_unstable();
        out
    }

    fn apply_unchecked(&mut self, action: Action, rng: &mut Rng) {
        let me = self.current;
        let (card, target, guess) = decode(action);
        let kept = if self.hand[me] == card { self.drawn } else { self.hand[me] };
        for k in 0..self.players {
            if self.known[k][me] == card {
                self.known[k][me] = 0;
            }
        }
        self.hand[me] = kept;
        self.drawn = 0;
        self.discard(me, card);
        self.turn += 1;

        match (card, target) {
            (GUARD, Some(t)) => {
                if self.hand[t] == guess {
                    self.eliminate(t);
                }
            }
            (PRIEST, Some(t)) => self.known[me][t] = self.hand[t],
            (BARON, Some(t)) => {
                let (mine, theirs) = (self.hand[me], self.hand[t]);
                if mine > theirs {
                    self.eliminate(t);
                } else if theirs > mine {
                    self.eliminate(me);
                } else {
                    self.known[me][t] = theirs;
                    self.known[t][me] = mine;
                }
            }
            (HANDMAID, _) => self.protected[me] = true,
            (PRINCE, Some(t)) => {
                let old = std::mem::take(&mut self.hand[t]);
                self.discard(t, old);
                for k in self.known.iter_mut() {
                    k[t] = 0;
                }
                if old == PRINCESS {
                    self.eliminated[t] = true;
                } else {
                    let next = if self.deck_size > 0 { self.draw(rng) } else { std::mem::take(&mut self.burn) };
                    self.hand[t] = next;
                }
            }
            (KING, Some(t)) => {
                self.hand.swap(me, t);
                for k in 0..self.players {
                    let (a, b) = (self.known[k][me], self.known[k][t]);
                    self.known[k][me] = b;
                    self.known[k][t] = a;
                }
                self.known[me][t] = self.hand[t];
                self.known[t][me] = self.hand[me];
            }
            (PRINCESS, _) => self.eliminate(me),
            _ => {}
        }

        if self.alive().count() <= 1 || self.deck_size == 0 {
            self.end_round(rng);
            return;
        }
        let mut next = (me + 1) % self.players;
        while self.eliminated[next] {
            next = (next + 1) % self.players;
        }
        self.current = next;
        self.protected[next] = false;
        self.drawn = self.draw(rng);
    }

    fn redeterminize(&mut self, observer: usize, rng: &mut Rng) {
        if self.terminal {
            return;
        }
        // Pool the deck, the burn card and every hand the observer cannot see.
        let mut pool = self.deck;
        let mut pool_size = self.deck_size;
        let mut slots: Vec<usize> = Vec::new();
        for p in self.alive().collect::<Vec<_>>() {
            if p != observer && self.known[observer][p] == 0 && self.hand[p] != 0 {
                pool[self.hand[p] as usize] += 1;
                pool_size += 1;
                slots.push(p);
            }
        }
        let drawn_hidden = self.current != observer && self.drawn != 0;
        if drawn_hidden {
            pool[self.drawn as usize] += 1;
            pool_size += 1;
        }
        let burn_present = self.burn != 0;
        if burn_present {
            pool[self.burn as usize] += 1;
            pool_size += 1;
        }
        for &p in &slots {
            self.hand[p] = draw_from_counts(&mut pool, &mut pool_size, rng).unwrap() as u8;
        }
        if drawn_hidden {
            self.drawn = draw_from_counts(&mut pool, &mut pool_size, rng).unwrap() as u8;
        }
        if burn_present {
            self.burn = draw_from_counts(&mut pool, &mut pool_size, rng).unwrap() as u8;
        }
        self.deck = pool;
        self.deck_size = pool_size;
        // Keep everyone else's knowledge true in the resampled world.
        for k in 0..self.players {
            if k == observer {
                continue;
            }
            for p in 0..self.players {
                if self.known[k][p] != 0 && self.hand[p] != 0 {
                    self.known[k][p] = self.hand[p];
                }
            }
        }
    }

    fn progress_score(&self, player: usize) -> f64 {
        self.tokens[player] as f64 / self.needed as f64
    }

    fn winner_set(&self) -> Vec<usize> {
        argmax_players(&self.tokens[..self.players])
    }

    fn component_count(&self) -> usize {
        16
    }

    fn hidden_count(&self, observer: usize) -> (usize, usize) {
        let mut hidden = self.deck_size + usize::from(self.burn != 0);
        for p in 0..self.players {
            if p != observer && self.hand[p] != 0 && self.known[observer][p] == 0 {
                hidden += 1;
            }
        }
        if self.current != observer && self.drawn != 0 {
            hidden += 1;
        }
        (hidden, 16)
    }

    fn components(&self) -> Vec<Component> {
        let everyone = (1u8 << self.players) - 1;
        let mut out = Vec::with_capacity(16);
        let mut push = |zone: Zone, hidden_from: u8, value: u8| {
            out.push(Component { id: out.len() as u32, zone, hidden_from, value: value as i32 });
        };
        for p in 0..self.players {
            if self.hand[p] != 0 {
                let mut hidden = everyone & !(1 << p);
                for k in 0..self.players {
                    if self.known[k][p] != 0 {
                        hidden &= !(1 << k);
                    }
                }
                push(Zone::Hand(p), hidden, self.hand[p]);
            }
        }
        if self.drawn != 0 {
            push(Zone::Hand(self.current), everyone & !(1 << self.current), self.drawn);
        }
        if self.burn != 0 {
            push(Zone::Burn, everyone, self.burn);
        }
        for (card, &n) in self.deck.iter().enumerate() {
            for _ in 0..n {
                push(Zone::Deck, everyone, card as u8);
            }
        }
        for p in 0..self.players {
            for (card, &n) in self.discards[p].iter().enumerate() {
                for _ in 0..n {
                    push(Zone::Discard(p), 0, card as u8);
                }
            }
        }
        out
    }

    fn observation(&self, observer: usize) -> String {
        let mut s = format!(
            "r={} cur={} turn={} me={} deck={} tokens={:?} elim={:?} prot={:?} disc={:?}",
            self.round,
            self.current,
            self.turn,
            self.hand[observer],
            self.deck_size,
            &self.tokens[..self.players],
            &self.eliminated[..self.players],
            &self.protected[..self.players],
            &self.discards[..self.players],
        );
        if self.current == observer {
            let _ = write!(s, " drawn={}", self.drawn);
        }
        let _ = write!(s, " known={:?}", &self.known[observer][..self.players]);
        s
    }

    fn describe(&self, action: Action) -> String {
        let (card, target, guess) = decode(action);
        let mut s = CARD_NAMES[card as usize].to_string();
        if let Some(t) = target {
            let _ = write!(s, "->p{t}");
        }
        if guess != 0 {
            let _ = write!(s, "?{}", CARD_NAMES[guess as usize]);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::seq::IndexedRandom;

    #[test]
    fn two_player_deal() {
        let g = LoveLetter::new(2, &mut stream(1, &[])).unwrap();
        assert_ne!(g.hand(0), 0);
        assert_ne!(g.hand(1), 0);
        assert_ne!(g.drawn(), 0);
        assert_eq!(g.total_cards(), 16);
        assert_eq!(g.deck_size(), 16 - 1 - 2 - 1);
        assert_eq!(g.tokens_needed(), 5);
    }

    #[test]
    fn countess_is_forced_next_to_king_or_prince() {
        let mut g = LoveLetter::new(2, &mut stream(2, &[])).unwrap();
        g.hand[0] = COUNTESS;
        g.drawn = KING;
        let acts = g.legal_actions();
        assert_eq!(acts, vec![encode(COUNTESS, None, 0)]);
    }

    #[test]
    fn correct_guard_guess_eliminates_and_ends_the_round() {
        let mut rng = stream(3, &[]);
        let mut g = LoveLetter::new(2, &mut rng).unwrap();
        g.hand[0] = GUARD;
        g.drawn = PRIEST;
        g.hand[1] = BARON;
        g.apply_unchecked(encode(GUARD, Some(1), BARON), &mut rng);
        assert_eq!(g.tokens(0), 1);
        assert_eq!(g.round(), 1);
        assert_eq!(g.total_cards(), 16);
    }

    #[test]
    fn random_playouts_conserve_cards() {
        for seed in 0..200 {
            let mut rng = stream(seed, &[]);
            let players = 2 + seed as usize % 3;
            let mut g = LoveLetter::new(players, &mut rng).unwrap();
            while !g.is_terminal() {
                let acts = g.legal_actions();
                assert!(!acts.is_empty());
                assert!(!g.is_eliminated(g.current_player()));
                let a = *acts.choose(&mut rng).unwrap();
                g.apply_unchecked(a, &mut rng);
                assert_eq!(g.total_cards(), 16);
            }
            assert!(g.tokens.iter().any(|&t| t >= g.needed));
        }
    }
}

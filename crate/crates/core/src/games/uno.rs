use crate::error::Result;
use crate::game::{Action, Component, Rules, Zone};
use crate::rng::Rng;

use super::{argmax_players, check_players, draw_from_counts};

/// Card types: `color * 13 + rank` for the 52 coloured types (ranks 0-9,
/// Skip, Reverse, Draw Two), then Wild and Wild Draw Four.
const TYPES: usize = 54;
const WILD: usize = 52;
const WILD_DRAW_FOUR: usize = 53;
const SKIP: usize = 10;
const REVERSE: usize = 11;
const DRAW_TWO: usize = 12;
const HAND_SIZE: usize = 7;
const COLORS: [&str; 4] = ["red", "yellow", "green", "blue"];

/// Key of the draw action; coloured plays use their card type, wild plays
/// `100 + color` and `200 + color`.
const DRAW_KEY: u32 = 300;

/// Largest possible value of a starting hand: seven wild cards.
const MAX_HAND_VALUE: f64 = (HAND_SIZE * 50) as f64;

fn full_deck() -> [u8; TYPES] {
    let mut d = [0u8; TYPES];
    for color in 0..4 {
        d[color * 13] = 1;
        for rank in 1..13 {
            d[color * 13 + rank] = 2;
        }
    }
    d[WILD] = 4;
    d[WILD_DRAW_FOUR] = 4;
    d
}

fn color_of(card: usize) -> Option<usize> {
    (card < WILD).then_some(card / 13)
}

fn rank_of(card: usize) -> Option<usize> {
    (card < WILD).then_some(card % 13)
}

fn card_value(card: usize) -> u32 {
    match rank_of(card) {
        Some(r) if r < 10 => r as u32,
        Some(_) => 20,
        None => 50,
    }
}

/// Uno with the 108-card deck.
///
/// Draw and discard piles are unordered multisets; the forward model samples
/// draws from the supplied stream. Playing the last card wins outright. Games
/// that reach the decision cap are scored by the non-terminal heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct Uno {
    players: usize,
    current: usize,
    turn: u32,
    cap: u32,
    hands: [[u8; TYPES]; 4],
    hand_sizes: [usize; 4],
    draw_pile: [u8; TYPES],
    draw_size: usize,
    /// Discards excluding the top card.
    discards: [u8; TYPES],
    discard_size: usize,
    top: usize,
    color: usize,
    clockwise: bool,
    winners: u8,
}

impl Uno {
    pub fn new(players: usize, cap: u32, rng: &mut Rng) -> Result<Self> {
        check_players("uno", players)?;
        let mut g = Uno {
            players,
            current: 0,
            turn: 0,
            cap,
            hands: [[0; TYPES]; 4],
            hand_sizes: [0; 4],
            draw_pile: full_deck(),
            draw_size: 108,
            discards: [0; TYPES],
            discard_size: 0,
            top: 0,
            color: 0,
            clockwise: true,
            winners: 0,
        };
        for _ in 0..HAND_SIZE {
            for p in 0..players {
                let c = draw_from_counts(&mut g.draw_pile, &mut g.draw_size, rng).unwrap();
                g.hands[p][c] += 1;
                g.hand_sizes[p] += 1;
            }
        }
        // Flip a coloured card to start; wilds go back into the pile.
        loop {
            let c = draw_from_counts(&mut g.draw_pile, &mut g.draw_size, rng).unwrap();
            if let Some(color) = color_of(c) {
                g.top = c;
                g.color = color;
                break;
            }
            g.draw_pile[c] += 1;
            g.draw_size += 1;
        }
        Ok(g)
    }

    pub fn hand_size(&self, player: usize) -> usize {
        self.hand_sizes[player]
    }

    pub fn draw_pile_size(&self) -> usize {
        self.draw_size
    }

    pub fn discard_pile_size(&self) -> usize {
        self.discard_size + 1
    }

    pub fn top_card(&self) -> usize {
        self.top
    }

    pub fn active_color(&self) -> usize {
        self.color
    }

    /// Cards across every zone; always 108.
    pub fn total_cards(&self) -> usize {
        self.hand_sizes[..self.players].iter().sum::<usize>() + self.draw_size + self.discard_size + 1
    }

    /// Whether the top card is consistent with the active colour.
    pub fn top_is_consistent(&self) -> bool {
        color_of(self.top).is_none_or(|c| c == self.color)
    }

    pub fn hand_value(&self, player: usize) -> u32 {
        self.hands[player].iter().enumerate().map(|(c, &n)| card_value(c) * n as u32).sum()
    }

    fn playable(&self, card: usize) -> bool {
        match color_of(card) {
            None => true,
            Some(color) => color == self.color || (color_of(self.top).is_some() && rank_of(card) == rank_of(self.top)),
        }
    }

    fn step(&self, from: usize, steps: usize) -> usize {
        let n = self.players;
        if self.clockwise {
            (from + steps) % n
        } else {
            (from + n * steps - steps) % n
        }
    }

    fn draw_into(&mut self, player: usize, n: usize, rng: &mut Rng) {
        for _ in 0..n {
            if self.draw_size == 0 {
                // Reshuffle the discards (minus the top card) into the draw pile.
                for c in 0..TYPES {
                    self.draw_pile[c] += self.discards[c];
                }
                self.draw_size += self.discard_size;
                self.discards = [0; TYPES];
                self.discard_size = 0;
            }
            match draw_from_counts(&mut self.draw_pile, &mut self.draw_size, rng) {
                Some(c) => {
                    self.hands[player][c] += 1;
                    self.hand_sizes[player] += 1;
                }
                None => return,
            }
        }
    }
}

impl Rules for Uno {
    const NAME: &'static str = "uno";

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
        self.winners != 0
    }

    fn legal_actions(&self) -> Vec<Action> {
        if self.is_terminal() {
            return Vec::new();
        }
        let hand = &self.hands[self.current];
        let mut out: Vec<Action> =
            (0..WILD).filter(|&c| hand[c] > 0 && self.playable(c)).map(|c| Action(c as u32)).collect();
        if hand[WILD] > 0 {
            out.extend((0..4).map(|c| Action(100 + c)));
        }
        if hand[WILD_DRAW_FOUR] > 0 {
            out.extend((0..4).map(|c| Action(200 + c)));
        }
        out.push(Action(DRAW_KEY));
        out
    }

    fn apply_unchecked(&mut self, action: Action, rng: &mut Rng) {
        let me = self.current;
        self.turn += 1;
        let mut advance = 1;
        if action.0 == DRAW_KEY {
            self.draw_into(me, 1, rng);
        } else {
            let (card, color) = match action.0 {
                k if k < 100 => (k as usize, k as usize / 13),
                k if k < 200 => (WILD, (k - 100) as usize),
                k => (WILD_DRAW_FOUR, (k - 200) as usize),
            };
            self.hands[me][card] -= 1;
            self.hand_sizes[me] -= 1;
            self.discards[self.top] += 1;
            self.discard_size += 1;
            self.top = card;
            self.color = color;
            if self.hand_sizes[me] == 0 {
                self.winners = 1 << me;
                return;
            }
            match (card, rank_of(card)) {
                (_, Some(SKIP)) => advance = 2,
                (_, Some(REVERSE)) => {
                    if self.players == 2 {
                        advance = 2;
                    } else {
                        self.clockwise = !self.clockwise;
                    }
                }
                (_, Some(DRAW_TWO)) => {
                    let victim = self.step(me, 1);
                    self.draw_into(victim, 2, rng);
                    advance = 2;
                }
                (WILD_DRAW_FOUR, None) => {
                    let victim = self.step(me, 1);
                    self.draw_into(victim, 4, rng);
                    advance = 2;
                }
                _ => {}
            }
        }
        self.current = self.step(me, advance);
        if self.turn >= self.cap {
            let scores: Vec<f64> = (0..self.players).map(|p| self.progress_score(p)).collect();
            self.winners = argmax_players(&scores).into_iter().fold(0, |m, p| m | (1 << p));
        }
    }

    fn redeterminize(&mut self, observer: usize, rng: &mut Rng) {
        if self.is_terminal() {
            return;
        }
        let mut pool = self.draw_pile;
        let mut pool_size = self.draw_size;
        for p in (0..self.players).filter(|&p| p != observer) {
            for c in 0..TYPES {
                pool[c] += self.hands[p][c];
            }
            pool_size += self.hand_sizes[p];
            self.hands[p] = [0; TYPES];
        }
        for p in (0..self.players).filter(|&p| p != observer) {
            for _ in 0..self.hand_sizes[p] {
                let c = draw_from_counts(&mut pool, &mut pool_size, rng).unwrap();
                self.hands[p][c] += 1;
            }
        }
        self.draw_pile = pool;
        self.draw_size = pool_size;
    }

    fn progress_score(&self, player: usize) -> f64 {
        (1.0 - self.hand_value(player) as f64 / MAX_HAND_VALUE).clamp(0.0, 1.0)
    }

    fn winner_set(&self) -> Vec<usize> {
        (0..self.players).filter(|&p| self.winners & (1 << p) != 0).collect()
    }

    fn component_count(&self) -> usize {
        108
    }

    fn hidden_count(&self, observer: usize) -> (usize, usize) {
        let others: usize = (0..self.players).filter(|&p| p != observer).map(|p| self.hand_sizes[p]).sum();
        (self.draw_size + others, 108)
    }

    fn components(&self) -> Vec<Component> {
        let everyone = (1u8 << self.players) - 1;
        let mut out = Vec::with_capacity(108);
        let mut push = |zone: Zone, hidden_from: u8, card: usize, n: u8| {
            for _ in 0..n {
                out.push(Component { id: out.len() as u32, zone, hidden_from, value: card as i32 });
            }
        };
        for p in 0..self.players {
            for c in 0..TYPES {
                push(Zone::Hand(p), everyone & !(1 << p), c, self.hands[p][c]);
            }
        }
        for c in 0..TYPES {
            push(Zone::Deck, everyone, c, self.draw_pile[c]);
            push(Zone::Discard(0), 0, c, self.discards[c]);
        }
        push(Zone::Discard(0), 0, self.top, 1);
        out
    }

    fn observation(&self, observer: usize) -> String {
        format!(
            "cur={} turn={} cw={} top={} color={} sizes={:?} draw={} disc={:?} me={:?}",
            self.current,
            self.turn,
            self.clockwise,
            self.top,
            self.color,
            &self.hand_sizes[..self.players],
            self.draw_size,
            self.discards,
            self.hands[observer],
        )
    }

    fn describe(&self, action: Action) -> String {
        let rank = |r: usize| match r {
            SKIP => "skip".to_string(),
            REVERSE => "reverse".to_string(),
            DRAW_TWO => "draw2".to_string(),
            n => n.to_string(),
        };
        match action.0 {
            DRAW_KEY => "draw".to_string(),
            k if k < 100 => format!("{}-{}", COLORS[k as usize / 13], rank(k as usize % 13)),
            k if k < 200 => format!("wild-{}", COLORS[(k - 100) as usize]),
            k => format!("wild4-{}", COLORS[(k - 200) as usize]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn deck_has_108_cards() {
        assert_eq!(full_deck().iter().map(|&c| c as usize).sum::<usize>(), 108);
    }

    #[test]
    fn three_player_deal() {
        let g = Uno::new(3, 2000, &mut stream(5, &[])).unwrap();
        for p in 0..3 {
            assert_eq!(g.hand_size(p), 7);
        }
        assert_eq!(g.discard_pile_size(), 1);
        assert_eq!(g.draw_pile_size(), 108 - 21 - 1);
        assert!(g.top_is_consistent());
    }

    #[test]
    fn playing_the_last_card_ends_the_game() {
        let mut rng = stream(6, &[]);
        let mut g = Uno::new(2, 2000, &mut rng).unwrap();
        let moved: Vec<(usize, u8)> = g.hands[0].iter().copied().enumerate().filter(|&(_, n)| n > 0).collect();
        for (c, n) in moved {
            g.draw_pile[c] += n;
            g.draw_size += n as usize;
        }
        g.hands[0] = [0; TYPES];
        g.hands[0][WILD] = 1;
        g.draw_pile[WILD] -= 1;
        g.draw_size -= 1;
        g.hand_sizes[0] = 1;
        assert_eq!(g.total_cards(), 108);
        g.apply_unchecked(Action(101), &mut rng);
        assert!(g.is_terminal());
        assert_eq!(g.winner_set(), vec![0]);
        assert_eq!(g.total_cards(), 108);
    }

    #[test]
    fn draw_two_hits_the_next_player() {
        let mut rng = stream(7, &[]);
        let mut g = Uno::new(3, 2000, &mut rng).unwrap();
        let card = g.color * 13 + DRAW_TWO;
        g.hands[0][card] += 1;
        g.hand_sizes[0] += 1;
        g.draw_pile[card] -= 1;
        g.draw_size -= 1;
        g.apply_unchecked(Action(card as u32), &mut rng);
        assert_eq!(g.hand_size(1), 9);
        assert_eq!(g.current_player(), 2);
    }

    #[test]
    fn cap_ends_the_game_by_heuristic() {
        let mut rng = stream(8, &[]);
        let mut g = Uno::new(2, 3, &mut rng).unwrap();
        for _ in 0..3 {
            g.apply_unchecked(Action(DRAW_KEY), &mut rng);
        }
        assert!(g.is_terminal());
        assert!(!g.winner_set().is_empty());
    }
}

//! Concrete games: one perfect-information adversarial game, one
//! hidden-information knockout game, one long stochastic shedding game and
//! one simultaneous push-your-luck game.

mod diamant;
mod dots;
mod loveletter;
mod uno;

pub use diamant::Diamant;
pub use dots::DotsAndBoxes;
pub use loveletter::LoveLetter;
pub use uno::Uno;

use crate::error::{Error, Result};

pub(crate) fn check_players(game: &'static str, players: usize) -> Result<()> {
    if (2..=4).contains(&players) {
        Ok(())
    } else {
        Err(Error::UnsupportedPlayerCount { game, players })
    }
}

/// Draws one card from a multiset of counts, uniformly over cards.
pub(crate) fn draw_from_counts(counts: &mut [u8], total: &mut usize, rng: &mut crate::rng::Rng) -> Option<usize> {
    use rand::Rng as _;
    if *total == 0 {
        return None;
    }
    let mut pick = rng.random_range(0..*total);
    for (card, count) in counts.iter_mut().enumerate() {
        let c = *count as usize;
        if pick < c {
            *count -= 1;
            *total -= 1;
            return Some(card);
        }
        pick -= c;
    }
    unreachable!("card counts disagree with the stored total")
}

/// Players with the maximum of `values`.
pub(crate) fn argmax_players<T: PartialOrd + Copy>(values: &[T]) -> Vec<usize> {
    let best = values.iter().copied().fold(None, |acc: Option<T>, v| match acc {
        Some(b) if b >= v => Some(b),
        _ => Some(v),
    });
    match best {
        Some(b) => (0..values.len()).filter(|&p| values[p] == b).collect(),
        None => Vec::new(),
    }
}

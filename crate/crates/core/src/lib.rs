//! Characterizing multiplayer tabletop games through the behaviour of search agents.
//!
//! Each `(game, player count, opponent)` environment is embedded into four
//! 16-dimensional feature spaces:
//!
//! * game-tree attributes gathered during play ([`features::game_attribute_row`]),
//! * NTBEA fingerprints over the MCTS parameter space ([`ntbea::fingerprint`]),
//! * win rates of a fixed agent roster against fixed opponents,
//! * win rates of the same roster in a round-robin tournament.
//!
//! The [`analysis`] module reduces and compares those spaces with PCA, varimax
//! rotation, parallel analysis, CCA and a handful of non-parametric tests.

pub mod agents;
pub mod analysis;
pub mod error;
pub mod features;
pub mod game;
pub mod games;
pub mod ntbea;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
pub use game::{Action, GameId, GameState, Telemetry};

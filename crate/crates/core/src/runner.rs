//! Plays complete games between agents, collecting telemetry and traces.

use rand::Rng as _;

use crate::agents::{Agent, AgentSpec};
use crate::error::Result;
use crate::game::{apply_action, copy_state, GameState, Telemetry, TraceRecord};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GameRecord {
    pub winners: Vec<usize>,
    pub utilities: Vec<f64>,
    pub decisions: usize,
    pub telemetry: Telemetry,
    pub trace: Vec<TraceRecord>,
    pub final_state: GameState,
}

impl GameRecord {
    /// Share of the win credited to `player`: `1 / |winners|` for each winner.
    pub fn win_credit(&self, player: usize) -> f64 {
        if self.winners.contains(&player) {
            1.0 / self.winners.len() as f64
        } else {
            0.0
        }
    }
}

/// Plays `state` to the end. `agents[p]` decides for seat `p`; every decision
/// gets its own copy of the state with hidden information randomised for the
/// acting player.
pub fn play_game(
    mut state: GameState,
    agents: &mut [Box<dyn Agent>],
    rng: &mut Rng,
    keep_trace: bool,
) -> Result<GameRecord> {
    let mut telemetry = Telemetry::default();
    let mut trace = Vec::new();
    while !state.is_terminal() {
        let player = state.current_player();
        let legal = state.legal_actions()?;
        telemetry.record_decision(&state, legal.len());
        let mut view = copy_state(&state, &mut telemetry);
        view.redeterminize(player, rng);
        let action = agents[player].decide(&view, rng)?;
        if keep_trace {
            trace.push(TraceRecord::capture(&state, action, legal.len()));
        }
        apply_action(&mut state, action, rng, &mut telemetry)?;
    }
    let winners = state.winners()?;
    Ok(GameRecord {
        utilities: state.utilities(),
        decisions: telemetry.decisions(),
        winners,
        telemetry,
        trace,
        final_state: state,
    })
}

/// Seats one `focal` agent at a uniformly random position and fills the rest
/// with `others`. Returns the seat list and the focal seat.
pub fn seat_focal(focal: AgentSpec, others: AgentSpec, players: usize, rng: &mut Rng) -> (Vec<AgentSpec>, usize) {
    let seat = rng.random_range(0..players);
    let seats = (0..players).map(|p| if p == seat { focal } else { others }).collect();
    (seats, seat)
}

pub fn build_agents(specs: &[AgentSpec]) -> Vec<Box<dyn Agent>> {
    specs.iter().map(AgentSpec::build).collect()
}

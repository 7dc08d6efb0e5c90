use rand::seq::IndexedRandom;
use rand::Rng as _;

use super::{random_action, Agent, Budget};
use crate::error::{Error, Result};
use crate::game::{Action, GameState};
use crate::rng::Rng;

/// Uniformly random legal action.
pub fn random_decide(state: &GameState, rng: &mut Rng) -> Result<Action> {
    let legal = state.legal_actions()?;
    legal.choose(rng).copied().ok_or(Error::NoLegalAction)
}

/// One-step lookahead: apply every legal action once (one sampled outcome
/// each) and keep the best heuristic successor, breaking ties uniformly.
pub fn osla_decide(state: &GameState, player: usize, rng: &mut Rng) -> Result<Action> {
    let legal = state.legal_actions()?;
    let mut best = f64::NEG_INFINITY;
    let mut ties = Vec::new();
    for &a in &legal {
        let mut next = state.clone();
        next.apply_unchecked(a, rng);
        let v = next.heuristic_score(player).value;
        if v > best {
            best = v;
            ties.clear();
            ties.push(a);
        } else if v == best {
            ties.push(a);
        }
    }
    ties.choose(rng).copied().ok_or(Error::NoLegalAction)
}

/// Plays out `plan` for `player` (indices reduced modulo the legal-action
/// count, opponents random) and returns the resulting heuristic score.
fn evaluate_plan(state: &GameState, player: usize, plan: &[u32], rng: &mut Rng) -> f64 {
    let mut s = state.clone();
    for &step in plan {
        while !s.is_terminal() && s.current_player() != player {
            let a = random_action(&s, rng).expect("non-terminal");
            s.apply_unchecked(a, rng);
        }
        if s.is_terminal() {
            break;
        }
        let legal = s.legal_actions().expect("non-terminal");
        let a = legal[step as usize % legal.len()];
        s.apply_unchecked(a, rng);
    }
    s.heuristic_score(player).value
}

/// Random-mutation hill climbing over a plan of action indices.
///
/// Each iteration mutates one plan position and keeps the mutant when it
/// evaluates at least as well as the incumbent. `plan` is updated in place
/// and the first action of the final incumbent is returned.
pub fn rmhc_decide(
    state: &GameState,
    player: usize,
    plan: &mut Vec<u32>,
    horizon: usize,
    budget: Budget,
    rng: &mut Rng,
) -> Result<Action> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("RMHC horizon must be at least 1".into()));
    }
    let legal = state.legal_actions()?;
    plan.resize_with(horizon, || rng.random::<u32>());
    let mut meter = budget.meter();
    let mut incumbent: Option<f64> = None;
    while meter.tick() {
        let Some(current) = incumbent else {
            incumbent = Some(evaluate_plan(state, player, plan, rng));
            continue;
        };
        let mut mutant = plan.clone();
        let pos = rng.random_range(0..horizon);
        mutant[pos] = rng.random::<u32>();
        let v = evaluate_plan(state, player, &mutant, rng);
        if v >= current {
            *plan = mutant;
            incumbent = Some(v);
        }
    }
    Ok(legal[plan[0] as usize % legal.len()])
}

/// RMHC with a plan that persists (shifted by one) across decisions.
pub struct RmhcAgent {
    horizon: usize,
    budget: Budget,
    plan: Vec<u32>,
}

impl RmhcAgent {
    pub fn new(horizon: usize, budget: Budget) -> RmhcAgent {
        RmhcAgent { horizon, budget, plan: Vec::new() }
    }
}

impl Agent for RmhcAgent {
    fn decide(&mut self, state: &GameState, rng: &mut Rng) -> Result<Action> {
        let a = rmhc_decide(state, state.current_player(), &mut self.plan, self.horizon, self.budget, rng)?;
        if !self.plan.is_empty() {
            self.plan.remove(0);
        }
        Ok(a)
    }
}

//! N-Tuple Bandit Evolutionary Algorithm over a discrete search space, and the
//! multi-run fingerprint built on top of it.
//!
//! The model keeps bandit statistics for every 1-tuple, every 2-tuple and the
//! full N-tuple of dimension indices. Each iteration evaluates the current
//! point once, then moves to the best of a batch of mutated neighbours under
//! an upper-confidence estimate averaged over the tuples.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{fixed_opponent, params, AgentSpec, Budget, FinalPolicy, MctsParams, Opponent, OpponentTree, TreePolicy};
use crate::analysis::ContingencyTable;
use crate::error::{Error, Result};
use crate::game::{GameId, GameState, RuleConfig};
use crate::rng::{self, Rng};
use crate::runner::{build_agents, play_game, seat_focal};

/// A point: one value index per dimension.
pub type Point = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

fn dim<T: ToString>(name: &str, values: impl IntoIterator<Item = T>) -> Dimension {
    Dimension { name: name.to_string(), values: values.into_iter().map(|v| v.to_string()).collect() }
}

impl SearchSpace {
    /// The nine-dimensional MCTS parameter space.
    pub fn mcts() -> SearchSpace {
        SearchSpace {
            dims: vec![
                dim("tree", params::TREE_POLICIES.map(TreePolicy::as_str)),
                dim("opp", params::OPPONENT_TREES.map(OpponentTree::as_str)),
                dim("final", params::FINAL_POLICIES.map(FinalPolicy::as_str)),
                dim("depth", params::TREE_DEPTHS),
                dim("rollout", params::ROLLOUT_LENGTHS),
                dim("is", params::BOOLS),
                dim("ol", params::BOOLS),
                dim("k", params::EXPLORATION_K.map(|k| format!("{k:?}"))),
                dim("eps", params::EXPLORATION_EPSILON.map(|e| format!("{e:?}"))),
            ],
        }
    }

    pub fn arities(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.values.len()).collect()
    }

    pub fn size(&self) -> u64 {
        self.dims.iter().map(|d| d.values.len() as u64).product()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    fn check(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.iter().any(|d| d.values.is_empty()) {
            Err(Error::EmptySpace)
        } else {
            Ok(())
        }
    }

    /// Flat `name=value,...` rendering of a point.
    pub fn describe(&self, point: &[usize]) -> String {
        self.dims
            .iter()
            .zip(point)
            .map(|(d, &v)| format!("{}={}", d.name, d.values[v]))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn random_point(&self, rng: &mut Rng) -> Point {
        self.dims.iter().map(|d| rng.random_range(0..d.values.len())).collect()
    }

    /// Maps a point of [`SearchSpace::mcts`] to MCTS parameters.
    pub fn to_mcts_params(&self, point: &[usize]) -> Result<MctsParams> {
        if self != &SearchSpace::mcts() || point.len() != 9 {
            return Err(Error::SpaceMismatch("not a point of the MCTS space".into()));
        }
        Ok(MctsParams {
            tree_policy: params::TREE_POLICIES[point[0]],
            opponent_tree: params::OPPONENT_TREES[point[1]],
            final_policy: params::FINAL_POLICIES[point[2]],
            tree_depth: params::TREE_DEPTHS[point[3]],
            rollout_length: params::ROLLOUT_LENGTHS[point[4]],
            redeterminise: params::BOOLS[point[5]],
            open_loop: params::BOOLS[point[6]],
            k: params::EXPLORATION_K[point[7]],
            epsilon: params::EXPLORATION_EPSILON[point[8]],
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub n: u32,
    pub sum: f64,
}

impl CellStats {
    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// Statistics over all 1-tuples, all 2-tuples and the full N-tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct NTupleModel {
    arities: Vec<usize>,
    tuples: Vec<Vec<usize>>,
    tables: Vec<BTreeMap<u64, CellStats>>,
    total: u32,
}

impl NTupleModel {
    pub fn new(space: &SearchSpace) -> NTupleModel {
        let d = space.dims.len();
        let mut tuples: Vec<Vec<usize>> = (0..d).map(|i| vec![i]).collect();
        for i in 0..d {
            for j in i + 1..d {
                tuples.push(vec![i, j]);
            }
        }
        if d > 2 {
            tuples.push((0..d).collect());
        }
        let tables = vec![BTreeMap::new(); tuples.len()];
        NTupleModel { arities: space.arities(), tuples, tables, total: 0 }
    }

    fn key(&self, tuple: &[usize], point: &[usize]) -> u64 {
        tuple.iter().fold(0u64, |k, &d| k * self.arities[d] as u64 + point[d] as u64)
    }

    fn decode_full(&self, mut key: u64) -> Point {
        let mut p = vec![0; self.arities.len()];
        for d in (0..self.arities.len()).rev() {
            p[d] = (key % self.arities[d] as u64) as usize;
            key /= self.arities[d] as u64;
        }
        p
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    pub fn total_evaluations(&self) -> u32 {
        self.total
    }

    pub fn update(&mut self, point: &[usize], value: f64) {
        for t in 0..self.tuples.len() {
            let key = self.key(&self.tuples[t], point);
            let cell = self.tables[t].entry(key).or_default();
            cell.n += 1;
            cell.sum += value;
        }
        self.total += 1;
    }

    /// Statistics of `point` projected onto tuple `t`.
    pub fn cell(&self, t: usize, point: &[usize]) -> CellStats {
        self.tables[t].get(&self.key(&self.tuples[t], point)).copied().unwrap_or_default()
    }

    /// All cells of tuple `t`.
    pub fn table(&self, t: usize) -> impl Iterator<Item = (&u64, &CellStats)> {
        self.tables[t].iter()
    }

    /// Statistics of the exact point (the full N-tuple cell).
    pub fn point_stats(&self, point: &[usize]) -> CellStats {
        self.cell(self.tuples.len() - 1, point)
    }

    /// Mean estimate averaged over tuples that have data.
    pub fn mean_estimate(&self, point: &[usize]) -> f64 {
        let (sum, count) = (0..self.tuples.len())
            .map(|t| self.cell(t, point))
            .filter(|c| c.n > 0)
            .fold((0.0, 0usize), |(s, k), c| (s + c.mean(), k + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Exploration bonus `sqrt(ln(total + 1) / (n + 1))` averaged over tuples.
    pub fn exploration_bonus(&self, point: &[usize]) -> f64 {
        let log_total = (self.total as f64 + 1.0).ln();
        let sum: f64 =
            (0..self.tuples.len()).map(|t| (log_total / (self.cell(t, point).n as f64 + 1.0)).sqrt()).sum();
        sum / self.tuples.len() as f64
    }

    /// Most visited exact point. Early in a run most points have a single
    /// visit, so ties go to the higher model estimate, then the lower key.
    pub fn most_visited(&self) -> Option<(Point, CellStats)> {
        let full = self.tables.last()?;
        let top = full.values().map(|c| c.n).max()?;
        let mut best: Option<(Point, CellStats, f64)> = None;
        for (&k, &c) in full.iter().filter(|(_, c)| c.n == top) {
            let point = self.decode_full(k);
            let estimate = self.mean_estimate(&point);
            if best.as_ref().is_none_or(|(_, _, e)| estimate > *e) {
                best = Some((point, c, estimate));
            }
        }
        best.map(|(p, c, _)| (p, c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NtbeaConfig {
    pub iterations: u32,
    pub neighbours: u32,
    pub kappa: f64,
}

impl Default for NtbeaConfig {
    fn default() -> Self {
        NtbeaConfig { iterations: 300, neighbours: 50, kappa: 2.0 }
    }
}

/// One evaluation in a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: u32,
    pub point: String,
    pub evaluation: f64,
    pub running_best: String,
}

#[derive(Debug, Clone)]
pub struct NtbeaOutcome {
    pub best: Point,
    pub model: NTupleModel,
    pub log: Vec<LogEntry>,
}

fn neighbour(current: &[usize], arities: &[usize], rng: &mut Rng) -> Point {
    let d = arities.len();
    let mutable: Vec<usize> = (0..d).filter(|&i| arities[i] > 1).collect();
    let mut next = current.to_vec();
    if mutable.is_empty() {
        return next;
    }
    let mutate = |next: &mut Point, i: usize, rng: &mut Rng| {
        let shift = rng.random_range(1..arities[i]);
        next[i] = (next[i] + shift) % arities[i];
    };
    let mut changed = false;
    for &i in &mutable {
        if rng.random_bool(1.0 / d as f64) {
            mutate(&mut next, i, rng);
            changed = true;
        }
    }
    if !changed {
        let i = mutable[rng.random_range(0..mutable.len())];
        mutate(&mut next, i, rng);
    }
    next
}

/// Runs NTBEA for `config.iterations` evaluations of `evaluator`.
pub fn ntbea_optimize<F>(space: &SearchSpace, mut evaluator: F, config: &NtbeaConfig, rng: &mut Rng) -> Result<NtbeaOutcome>
where
    F: FnMut(&Point, &mut Rng) -> Result<f64>,
{
    space.check()?;
    if config.iterations == 0 {
        return Err(Error::InvalidArgument("NTBEA needs at least one iteration".into()));
    }
    let arities = space.arities();
    let mut model = NTupleModel::new(space);
    let mut current = space.random_point(rng);
    let mut log = Vec::with_capacity(config.iterations as usize);
    for iteration in 0..config.iterations {
        let value = evaluator(&current, rng)?;
        model.update(&current, value);
        let best = model.most_visited().map(|(p, _)| p).unwrap_or_else(|| current.clone());
        log.push(LogEntry {
            iteration,
            point: space.describe(&current),
            evaluation: value,
            running_best: space.describe(&best),
        });
        if iteration + 1 == config.iterations {
            break;
        }
        let mut best_score = f64::NEG_INFINITY;
        let mut next = current.clone();
        for _ in 0..config.neighbours.max(1) {
            let candidate = neighbour(&current, &arities, rng);
            let score = model.mean_estimate(&candidate) + config.kappa * model.exploration_bonus(&candidate);
            if score > best_score {
                best_score = score;
                next = candidate;
            }
        }
        current = next;
    }
    let best = model.most_visited().map(|(p, _)| p).expect("at least one evaluation");
    Ok(NtbeaOutcome { best, model, log })
}

/// The seven parameters whose marginals make up a fingerprint.
pub const FINGERPRINT_PARAMS: [&str; 7] = ["tree", "opp", "final", "depth", "rollout", "is", "ol"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub param: String,
    pub values: Vec<String>,
    pub counts: Vec<u32>,
}

/// Marginal counts of recommended settings over independent NTBEA runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub game: GameId,
    pub players: usize,
    pub opponent: Opponent,
    pub seed: u64,
    pub runs: u32,
    pub iterations: u32,
    pub marginals: Vec<Marginal>,
    pub recommendations: Vec<String>,
    pub feature_names: Vec<String>,
    pub features: Vec<f64>,
}

impl Fingerprint {
    /// Tallies recommended points of `space` into the seven marginals.
    pub fn from_recommendations(
        space: &SearchSpace,
        recommendations: &[Point],
        game: GameId,
        players: usize,
        opponent: Opponent,
        seed: u64,
        iterations: u32,
    ) -> Result<Fingerprint> {
        let mut marginals = Vec::new();
        for name in FINGERPRINT_PARAMS {
            let d = space.index_of(name).ok_or_else(|| Error::SpaceMismatch(format!("no `{name}` dimension")))?;
            let values = space.dims[d].values.clone();
            let mut counts = vec![0u32; values.len()];
            for r in recommendations {
                counts[r[d]] += 1;
            }
            marginals.push(Marginal { param: name.to_string(), values, counts });
        }
        let (feature_names, features) = retained_features(&marginals);
        Ok(Fingerprint {
            game,
            players,
            opponent,
            seed,
            runs: recommendations.len() as u32,
            iterations,
            marginals,
            recommendations: recommendations.iter().map(|p| space.describe(p)).collect(),
            feature_names,
            features,
        })
    }

    pub fn marginal(&self, param: &str) -> Option<&Marginal> {
        self.marginals.iter().find(|m| m.param == param)
    }

    /// Values and run counts for any dimension of the MCTS space, including
    /// the two exploration constants left out of the marginals.
    pub fn tally(&self, param: &str) -> Option<Marginal> {
        if let Some(m) = self.marginal(param) {
            return Some(m.clone());
        }
        let space = SearchSpace::mcts();
        let values = space.dims[space.index_of(param)?].values.clone();
        let mut counts = vec![0u32; values.len()];
        for rec in &self.recommendations {
            let v = rec.split(',').find_map(|kv| kv.strip_prefix(param)?.strip_prefix('='))?;
            counts[values.iter().position(|x| x == v)?] += 1;
        }
        Some(Marginal { param: param.to_string(), values, counts })
    }

    /// Count of runs recommending `value` for `param`.
    pub fn count(&self, param: &str, value: &str) -> Option<u32> {
        let m = self.marginal(param)?;
        m.values.iter().position(|v| v == value).map(|i| m.counts[i])
    }
}

/// Drops the first listed value of every parameter; the rest are features.
pub fn retained_features(marginals: &[Marginal]) -> (Vec<String>, Vec<f64>) {
    let mut names = Vec::new();
    let mut values = Vec::new();
    for m in marginals {
        for (v, &c) in m.values.iter().zip(&m.counts).skip(1) {
            names.push(format!("{}={}", m.param, v));
            values.push(c as f64);
        }
    }
    (names, values)
}

/// Settings for one fingerprint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerprintConfig {
    pub runs: u32,
    pub ntbea: NtbeaConfig,
    /// Budget of the MCTS agent being optimised.
    pub budget: Budget,
    /// Budget of a SimpleMCTS opponent.
    pub opponent_budget: Budget,
    pub rules: RuleConfig,
    pub seed: u64,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        FingerprintConfig {
            runs: 30,
            ntbea: NtbeaConfig::default(),
            budget: Budget::DEFAULT,
            opponent_budget: Budget::DEFAULT,
            rules: RuleConfig::default(),
            seed: 0,
        }
    }
}

/// Plays one game of `params` (random seat) against the fixed opponent and
/// returns the focal player's utility: +1 win, 0 joint win, -1 loss.
pub fn play_candidate(
    game: GameId,
    players: usize,
    opponent: Opponent,
    params: MctsParams,
    config: &FingerprintConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let focal = AgentSpec::mcts(params, config.budget);
    let (seats, seat) = seat_focal(focal, fixed_opponent(opponent, config.opponent_budget), players, rng);
    let state = GameState::with_rules(game, players, &config.rules, rng)?;
    let record = play_game(state, &mut build_agents(&seats), rng, false)?;
    Ok(record.utilities[seat])
}

/// Independent NTBEA optimisations of MCTS against one fixed opponent.
/// Returns the fingerprint and each run's log.
pub fn fingerprint(
    game: GameId,
    players: usize,
    opponent: Opponent,
    config: &FingerprintConfig,
) -> Result<(Fingerprint, Vec<Vec<LogEntry>>)> {
    if config.runs == 0 {
        return Err(Error::InvalidArgument("a fingerprint needs at least one run".into()));
    }
    let space = SearchSpace::mcts();
    let outcomes: Vec<Result<NtbeaOutcome>> = (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = rng::stream(
                config.seed,
                &[rng::label("fingerprint"), rng::label(game.as_str()), players as u64, rng::label(opponent.as_str()), run as u64],
            );
            ntbea_optimize(
                &space,
                |point, rng| play_candidate(game, players, opponent, space.to_mcts_params(point)?, config, rng),
                &config.ntbea,
                &mut rng,
            )
        })
        .collect();
    let mut best = Vec::new();
    let mut logs = Vec::new();
    for o in outcomes {
        let o = o?;
        best.push(o.best);
        logs.push(o.log);
    }
    let fp = Fingerprint::from_recommendations(&space, &best, game, players, opponent, config.seed, config.ntbea.iterations)?;
    Ok((fp, logs))
}

/// Rows = player counts, columns = values of `param`, cells = run counts.
pub fn marginal_homogeneity_table(fingerprints: &[Fingerprint], param: &str) -> Result<ContingencyTable> {
    if fingerprints.len() < 2 {
        return Err(Error::DimensionMismatch("need fingerprints for at least two player counts".into()));
    }
    let missing = || Error::DimensionMismatch(format!("no marginal for `{param}`"));
    let first = fingerprints[0].tally(param).ok_or_else(missing)?;
    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for fp in fingerprints {
        let m = fp.tally(param).ok_or_else(missing)?;
        if m.values != first.values {
            return Err(Error::DimensionMismatch(format!("`{param}` values differ between fingerprints")));
        }
        rows.push(format!("{}p", fp.players));
        cells.push(m.counts.iter().map(|&c| c as u64).collect());
    }
    Ok(ContingencyTable { rows, columns: first.values.clone(), cells })
}

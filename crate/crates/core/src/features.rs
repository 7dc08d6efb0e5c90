//! The four 16-dimensional feature spaces.

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use log::warn;
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{FinalPolicy, MctsParams, OpponentTree, TreePolicy};
use crate::agents::{fixed_opponent, AgentKind, AgentSpec, Budget, Opponent};
use crate::analysis::DataMatrix;
use crate::error::{Error, Result};
use crate::game::{GameId, GameState, RuleConfig};
use crate::ntbea::Fingerprint;
use crate::rng::{self, Rng};
use crate::runner::{build_agents, play_game, seat_focal, GameRecord};

pub const FEATURE_COUNT: usize = 16;

pub const ATTRIBUTE_NAMES: [&str; FEATURE_COUNT] = [
    "copy_time",
    "fm_time",
    "decisions",
    "decisions_cov",
    "components_start",
    "components",
    "components_cov",
    "hidden_start",
    "hidden",
    "hidden_cov",
    "action_space",
    "action_space_cov",
    "action_space_max",
    "action_space_skew",
    "score",
    "score_cov",
];

/// One environment: a game at a player count, against one fixed opponent
/// (none for round-robin rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnvKey {
    pub game: GameId,
    pub players: usize,
    pub opponent: Option<Opponent>,
}

impl EnvKey {
    pub fn new(game: GameId, players: usize, opponent: Opponent) -> EnvKey {
        EnvKey { game, players, opponent: Some(opponent) }
    }

    pub fn round_robin(game: GameId, players: usize) -> EnvKey {
        EnvKey { game, players, opponent: None }
    }

    /// Every (player count, opponent) pair for `games` at 2, 3 and 4 players.
    pub fn grid(games: &[GameId]) -> Vec<EnvKey> {
        let mut out = Vec::new();
        for &g in games {
            for p in 2..=4 {
                for o in Opponent::ALL {
                    out.push(EnvKey::new(g, p, o));
                }
            }
        }
        out
    }
}

impl fmt::Display for EnvKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}p", self.game, self.players)?;
        if let Some(o) = self.opponent {
            write!(f, "-{o}")?;
        }
        Ok(())
    }
}

/// One point in a feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub key: EnvKey,
    pub values: Vec<f64>,
    pub games: usize,
    pub seed: u64,
}

impl FeatureRow {
    fn new(key: EnvKey, values: Vec<f64>, games: usize, seed: u64) -> Result<FeatureRow> {
        if values.len() != FEATURE_COUNT {
            return Err(Error::DimensionMismatch(format!("{} features, expected {FEATURE_COUNT}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature in row {key}")));
        }
        Ok(FeatureRow { key, values, games, seed })
    }
}

/// Settings shared by the play-based feature extractors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayConfig {
    pub rules: RuleConfig,
    /// Budget of the SimpleMCTS opponent.
    pub opponent_budget: Budget,
    /// Budget of the roster's search agents.
    pub agent_budget: Budget,
}

impl Default for PlayConfig {
    fn default() -> Self {
        PlayConfig { rules: RuleConfig::default(), opponent_budget: Budget::DEFAULT, agent_budget: Budget::DEFAULT }
    }
}

// ---------------------------------------------------------------- statistics

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Coefficient of variation `sd / |mean|`, or `None` when the mean is 0.
fn cov(xs: &[f64]) -> Option<f64> {
    let m = mean(xs);
    let sd = std_dev(xs);
    if m == 0.0 {
        return if sd == 0.0 { Some(0.0) } else { None };
    }
    Some(sd / m.abs())
}

/// Adjusted Fisher-Pearson sample skewness.
pub fn skewness(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 3 {
        return 0.0;
    }
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    if m2 <= 1e-300 {
        return 0.0;
    }
    (n * (n - 1.0)).sqrt() / (n - 2.0) * m3 / m2.powf(1.5)
}

/// Median of batch means: splits `xs` into up to ten contiguous batches.
pub fn median_of_means(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let batches = xs.len().min(10);
    let mut means: Vec<f64> = (0..batches)
        .map(|b| mean(&xs[b * xs.len() / batches..(b + 1) * xs.len() / batches]))
        .collect();
    means.sort_by(f64::total_cmp);
    let mid = means.len() / 2;
    if means.len() % 2 == 1 {
        means[mid]
    } else {
        (means[mid - 1] + means[mid]) / 2.0
    }
}

/// Tracks CoV features whose mean was zero so they can be reported once.
#[derive(Default)]
struct Degenerate(Vec<&'static str>);

impl Degenerate {
    fn cov(&mut self, name: &'static str, xs: &[f64]) -> f64 {
        cov(xs).unwrap_or_else(|| {
            if !self.0.contains(&name) {
                self.0.push(name);
            }
            0.0
        })
    }

    /// Per-game CoV averaged across games.
    fn per_game(&mut self, name: &'static str, series: impl Iterator<Item = Vec<f64>>) -> f64 {
        let v: Vec<f64> = series.map(|s| self.cov(name, &s)).collect();
        mean(&v)
    }
}

// ------------------------------------------------------------ play helpers

fn base_seed(rng: &mut Rng) -> u64 {
    rng.random()
}

fn play_seated(
    game: GameId,
    seats: &[AgentSpec],
    rules: &RuleConfig,
    rng: &mut Rng,
) -> Result<GameRecord> {
    let state = GameState::with_rules(game, seats.len(), rules, rng)?;
    play_game(state, &mut build_agents(seats), rng, false)
}

/// Attribute statistics of one environment: every seat plays the
/// environment's opponent type.
pub fn game_attribute_row(env: EnvKey, games_n: usize, config: &PlayConfig, rng: &mut Rng) -> Result<FeatureRow> {
    if games_n < 2 {
        return Err(Error::InvalidArgument("attribute rows need at least two games".into()));
    }
    let opponent = env.opponent.ok_or_else(|| Error::InvalidArgument("attribute rows need an opponent".into()))?;
    let spec = fixed_opponent(opponent, config.opponent_budget);
    let seats = vec![spec; env.players];
    let base = base_seed(rng);
    let records: Vec<GameRecord> = (0..games_n)
        .into_par_iter()
        .map(|i| play_seated(env.game, &seats, &config.rules, &mut rng::stream(base, &[i as u64])))
        .collect::<Result<_>>()?;
    Ok(attribute_features(env, &records, base)?)
}

/// Reduces finished games to the sixteen attribute features.
pub fn attribute_features(env: EnvKey, records: &[GameRecord], seed: u64) -> Result<FeatureRow> {
    let t: Vec<_> = records.iter().map(|r| &r.telemetry).collect();
    let mut bad = Degenerate::default();
    let copy: Vec<f64> = t.iter().map(|t| t.mean_copy_time()).collect();
    let fm: Vec<f64> = t.iter().map(|t| t.mean_fm_time()).collect();
    let decisions: Vec<f64> = t.iter().map(|t| t.decisions() as f64).collect();
    let first = |s: &Vec<f64>| s.first().copied().unwrap_or(0.0);
    let per_game_mean = |f: fn(&crate::game::Telemetry) -> &Vec<f64>| mean(&t.iter().map(|t| mean(f(t))).collect::<Vec<_>>());
    let pooled_actions: Vec<f64> = t.iter().flat_map(|t| t.action_space_size.iter().copied()).collect();
    let values = vec![
        median_of_means(&copy),
        median_of_means(&fm),
        mean(&decisions),
        bad.cov("decisions_cov", &decisions),
        mean(&t.iter().map(|t| first(&t.component_count)).collect::<Vec<_>>()),
        per_game_mean(|t| &t.component_count),
        bad.per_game("components_cov", t.iter().map(|t| t.component_count.clone())),
        mean(&t.iter().map(|t| first(&t.hidden_fraction)).collect::<Vec<_>>()),
        per_game_mean(|t| &t.hidden_fraction),
        bad.per_game("hidden_cov", t.iter().map(|t| t.hidden_fraction.clone())),
        per_game_mean(|t| &t.action_space_size),
        bad.per_game("action_space_cov", t.iter().map(|t| t.action_space_size.clone())),
        mean(&t.iter().map(|t| t.action_space_size.iter().copied().fold(0.0, f64::max)).collect::<Vec<_>>()),
        skewness(&pooled_actions),
        per_game_mean(|t| &t.score),
        bad.per_game("score_cov", t.iter().map(|t| t.score.clone())),
    ];
    if !bad.0.is_empty() {
        warn!("{env}: zero mean in {}; reported as 0", bad.0.join(", "));
    }
    FeatureRow::new(env, values, records.len(), seed)
}

/// Fingerprint features of one environment.
pub fn ntbea_row(env: EnvKey, fingerprint: &Fingerprint) -> Result<FeatureRow> {
    if Some(fingerprint.opponent) != env.opponent || fingerprint.game != env.game || fingerprint.players != env.players {
        return Err(Error::SpaceMismatch(format!(
            "fingerprint for {}-{}p-{} does not match {env}",
            fingerprint.game, fingerprint.players, fingerprint.opponent
        )));
    }
    if fingerprint.features.len() != FEATURE_COUNT {
        return Err(Error::SpaceMismatch(format!("fingerprint has {} features", fingerprint.features.len())));
    }
    FeatureRow::new(env, fingerprint.features.clone(), fingerprint.runs as usize, fingerprint.seed)
}

// ------------------------------------------------------------------ roster

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub name: &'static str,
    pub spec: AgentSpec,
}

/// Twelve MCTS agents A to L followed by RND, OSLA, RMHC-3 and RMHC-20.
/// Exploration settings the table leaves blank keep their defaults.
pub fn default_roster(budget: Budget) -> Vec<RosterEntry> {
    use OpponentTree::*;
    use TreePolicy::*;
    #[rustfmt::skip]
    let table: [(&str, u32, bool, OpponentTree, TreePolicy, Option<f64>, Option<f64>, u32, bool); 12] = [
        ("A", 3, true, MaxN, Alpha, Some(0.1), None, 1, false),
        ("B", 10, true, Paranoid, Alpha, Some(0.01), None, 100, true),
        ("C", 0, false, MaxN, Exp3, None, Some(0.01), 1, false),
        ("D", 100, true, Paranoid, Exp3, None, Some(0.1), 3, true),
        ("E", 30, false, MaxN, Rm, None, Some(0.3), 30, false),
        ("F", 0, true, Paranoid, Rm, None, Some(0.3), 10, false),
        ("G", 0, false, MaxN, Ucb, Some(0.01), None, 100, false),
        ("H", 10, false, SelfOnly, Ucb, Some(0.1), None, 30, false),
        ("I", 3, true, SelfOnly, Ucb, Some(10.0), None, 1, true),
        ("J", 10, true, Paranoid, Ucb, Some(1.0), None, 3, true),
        ("K", 30, true, SelfOnly, Exp3, None, Some(0.03), 10, false),
        ("L", 10, true, SelfOnly, Rm, None, Some(0.03), 3, true),
    ];
    let defaults = MctsParams::simple();
    let mut roster: Vec<RosterEntry> = table
        .iter()
        .map(|&(name, rollout, ol, opp, tree, k, eps, depth, is)| RosterEntry {
            name,
            spec: AgentSpec::mcts(
                MctsParams {
                    tree_policy: tree,
                    opponent_tree: opp,
                    final_policy: FinalPolicy::Robust,
                    tree_depth: depth,
                    rollout_length: rollout,
                    redeterminise: is,
                    open_loop: ol,
                    k: k.unwrap_or(defaults.k),
                    epsilon: eps.unwrap_or(defaults.epsilon),
                },
                budget,
            ),
        })
        .collect();
    roster.push(RosterEntry { name: "RND", spec: AgentSpec::random() });
    roster.push(RosterEntry { name: "OSLA", spec: AgentSpec::osla() });
    for h in [3, 20] {
        let name = if h == 3 { "RMHC-3" } else { "RMHC-20" };
        roster.push(RosterEntry { name, spec: AgentSpec { kind: AgentKind::Rmhc { horizon: h }, budget } });
    }
    roster
}

/// Win rate of each roster agent, seated once at a random position against
/// the environment's opponent in every seat. Joint wins are split.
pub fn agent_performance_row(
    env: EnvKey,
    roster: &[RosterEntry],
    games_n: usize,
    config: &PlayConfig,
    rng: &mut Rng,
) -> Result<FeatureRow> {
    if games_n == 0 {
        return Err(Error::InvalidArgument("agent performance needs at least one game per agent".into()));
    }
    if roster.len() != FEATURE_COUNT {
        return Err(Error::DimensionMismatch(format!("roster of {} agents", roster.len())));
    }
    let opponent = env.opponent.ok_or_else(|| Error::InvalidArgument("performance rows need an opponent".into()))?;
    let opp = fixed_opponent(opponent, config.opponent_budget);
    let base = base_seed(rng);
    let jobs: Vec<(usize, usize)> = (0..roster.len()).flat_map(|a| (0..games_n).map(move |g| (a, g))).collect();
    let credits: Vec<(usize, f64)> = jobs
        .into_par_iter()
        .map(|(a, g)| {
            let mut r = rng::stream(base, &[a as u64, g as u64]);
            let (seats, seat) = seat_focal(roster[a].spec, opp, env.players, &mut r);
            let record = play_seated(env.game, &seats, &config.rules, &mut r)?;
            Ok((a, record.win_credit(seat)))
        })
        .collect::<Result<_>>()?;
    let mut wins = vec![0.0; roster.len()];
    for (a, c) in credits {
        wins[a] += c;
    }
    let values = wins.iter().map(|w| w / games_n as f64).collect();
    FeatureRow::new(env, values, games_n, base)
}

/// Draws matches of `players` distinct agents until every agent has played at
/// least `games_per_agent` games. Each match lists agents in seat order.
pub fn round_robin_schedule(roster_len: usize, players: usize, games_per_agent: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if roster_len < players {
        return Err(Error::RosterTooSmall { roster: roster_len, players });
    }
    let mut counts = vec![0usize; roster_len];
    let mut matches = Vec::new();
    while counts.iter().any(|&c| c < games_per_agent) {
        let seats = sample(rng, roster_len, players).into_vec();
        for &a in &seats {
            counts[a] += 1;
        }
        matches.push(seats);
    }
    Ok(matches)
}

/// Round-robin win rates of the roster at one player count, plus the number
/// of games each agent played.
pub fn round_robin_rows(
    game: GameId,
    players: usize,
    roster: &[RosterEntry],
    games_per_agent: usize,
    config: &PlayConfig,
    rng: &mut Rng,
) -> Result<(FeatureRow, Vec<usize>)> {
    if roster.len() != FEATURE_COUNT {
        return Err(Error::DimensionMismatch(format!("roster of {} agents", roster.len())));
    }
    let schedule = round_robin_schedule(roster.len(), players, games_per_agent, rng)?;
    let base = base_seed(rng);
    let results: Vec<Vec<(usize, f64)>> = schedule
        .par_iter()
        .enumerate()
        .map(|(i, seats)| {
            let specs: Vec<AgentSpec> = seats.iter().map(|&a| roster[a].spec).collect();
            let record = play_seated(game, &specs, &config.rules, &mut rng::stream(base, &[i as u64]))?;
            Ok(seats.iter().enumerate().map(|(p, &a)| (a, record.win_credit(p))).collect())
        })
        .collect::<Result<_>>()?;
    let mut wins = vec![0.0; roster.len()];
    let mut played = vec![0usize; roster.len()];
    for game in results {
        for (a, c) in game {
            wins[a] += c;
            played[a] += 1;
        }
    }
    let values = wins.iter().zip(&played).map(|(w, &n)| if n == 0 { 0.0 } else { w / n as f64 }).collect();
    let row = FeatureRow::new(EnvKey::round_robin(game, players), values, schedule.len(), base)?;
    Ok((row, played))
}

// ------------------------------------------------------------- persistence

/// Rows of one feature space with their feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub space: String,
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    space: String,
    features: BTreeMap<String, String>,
}

impl FeatureTable {
    pub fn new(space: &str, names: Vec<String>, rows: Vec<FeatureRow>) -> FeatureTable {
        FeatureTable { space: space.into(), names, rows }
    }

    fn header() -> Vec<String> {
        let mut h = vec!["game".to_string(), "players".into(), "opponent".into()];
        h.extend((1..=FEATURE_COUNT).map(|i| format!("f{i:02}")));
        h
    }

    /// CSV with header `game,players,opponent,f01..f16`; round-robin rows
    /// leave the opponent empty.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io_err = |e: csv::Error| Error::Parse(e.to_string());
        out.write_record(Self::header()).map_err(io_err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.key.game.to_string(),
                r.key.players.to_string(),
                r.key.opponent.map(|o| o.to_string()).unwrap_or_default(),
            ];
            rec.extend(r.values.iter().map(|v| format!("{v:e}")));
            out.write_record(rec).map_err(io_err)?;
        }
        out.flush().map_err(|e| Error::Parse(e.to_string()))
    }

    /// Sidecar JSON mapping `fNN` to the feature name.
    pub fn sidecar_json(&self) -> String {
        let features = self.names.iter().enumerate().map(|(i, n)| (format!("f{:02}", i + 1), n.clone())).collect();
        serde_json::to_string_pretty(&Sidecar { space: self.space.clone(), features }).expect("serializable")
    }

    pub fn read(csv_text: &str, sidecar: Option<&str>) -> Result<FeatureTable> {
        let (space, names) = match sidecar {
            Some(s) => {
                let side: Sidecar = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
                (side.space, side.features.into_values().collect())
            }
            None => (String::new(), (1..=FEATURE_COUNT).map(|i| format!("f{i:02}")).collect()),
        };
        let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
        let header: Vec<String> =
            reader.headers().map_err(|e| Error::Parse(e.to_string()))?.iter().map(String::from).collect();
        if header != Self::header() {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let game: GameId = field(0).parse()?;
            let players: usize = field(1).parse().map_err(|_| Error::Parse(format!("bad player count `{}`", field(1))))?;
            let opponent = match field(2) {
                "" => None,
                o => Some(o.parse()?),
            };
            let values = (3..3 + FEATURE_COUNT)
                .map(|i| field(i).parse::<f64>().map_err(|_| Error::Parse(format!("bad value `{}`", field(i)))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow::new(EnvKey { game, players, opponent }, values, 0, 0)?);
        }
        Ok(FeatureTable { space, names, rows })
    }

    pub fn to_data_matrix(&self) -> Result<DataMatrix> {
        let values = DMatrix::from_fn(self.rows.len(), FEATURE_COUNT, |i, j| self.rows[i].values[j]);
        DataMatrix::new(self.rows.iter().map(|r| r.key.to_string()).collect(), self.names.clone(), values)
    }
}

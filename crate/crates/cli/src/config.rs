//! Experiment configuration.
//!
//! A config file is TOML. Every key is optional except `seed`; missing keys
//! are filled from the chosen scale preset, and unknown keys are rejected.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use gamespace::agents::{Budget, Opponent};
use gamespace::analysis::Threshold;
use gamespace::game::RuleConfig;
use gamespace::rng::stream;
use gamespace::{GameId, GameState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// The four feature spaces, in pipeline order.
pub const SPACES: [&str; 4] = ["attributes", "ntbea", "performance", "roundrobin"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Two games at reduced game counts; runs on a laptop.
    Desk,
    /// All implemented games at the published game counts.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Budget of every searching agent being measured.
    pub agent: Budget,
    /// Budget of the SimpleMCTS opponent.
    pub opponent: Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtbeaSettings {
    pub runs: u32,
    pub iterations: u32,
    pub neighbours: u32,
    pub kappa: f64,
}

/// Number of games behind each row of the play-based spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameCounts {
    pub attributes: usize,
    /// Games per roster agent in each environment.
    pub performance: usize,
    /// Minimum games per roster agent at each player count.
    pub round_robin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    pub parallel_reps: usize,
    pub threshold: Threshold,
    pub alpha: f64,
    pub cca_ridge: f64,
    /// Space pairs to compare with CCA.
    pub cca: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub games: Vec<GameId>,
    pub players: Vec<usize>,
    pub opponents: Vec<Opponent>,
    pub budgets: Budgets,
    pub ntbea: NtbeaSettings,
    pub games_per_row: GameCounts,
    pub rules: RuleConfig,
    pub analysis: AnalysisSettings,
}

impl Scale {
    /// Preset values for every key except `seed`.
    pub fn preset(self) -> toml::Table {
        let (games, counts, ntbea_runs, ntbea_iterations) = match self {
            Scale::Desk => (vec!["loveletter", "diamant"], (100, 100, 500), 10, 300),
            Scale::Paper => (GameId::ALL.map(GameId::as_str).to_vec(), (1000, 1000, 10_000), 30, 4800),
        };
        let text = format!(
            r#"
output = "out"
games = {games:?}
players = [2, 3, 4]
opponents = ["RND", "OSLA", "SimpleMCTS"]

[budgets]
agent = {{ iterations = 128 }}
opponent = {{ iterations = 128 }}

[ntbea]
runs = {ntbea_runs}
iterations = {ntbea_iterations}
neighbours = 50
kappa = 2.0

[games_per_row]
attributes = {}
performance = {}
round_robin = {}

[rules]
dots_rows = 9
dots_cols = 9
uno_decision_cap = 2000

[analysis]
parallel_reps = 200
threshold = {{ quantile = 0.99 }}
alpha = 0.05
cca_ridge = 1e-6
cca = [["attributes", "ntbea"], ["attributes", "performance"], ["ntbea", "performance"]]
"#,
            counts.0, counts.1, counts.2
        );
        text.parse().expect("preset is valid TOML")
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

/// Recursively overlays `top` onto `base`. Tables merge, everything else is
/// replaced.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses `text` over the `scale` preset, applies overrides and validates.
    pub fn from_toml(text: &str, scale: Scale, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut table = scale.preset();
        merge(&mut table, user);
        if let Some(seed) = overrides.seed {
            let seed = i64::try_from(seed).map_err(|_| CliError::Config("seed: must fit in 63 bits".into()))?;
            table.insert("seed".into(), toml::Value::Integer(seed));
        }
        if let Some(out) = &overrides.output {
            table.insert("output".into(), toml::Value::String(out.to_string_lossy().into_owned()));
        }
        let config: ExperimentConfig = serde_path_to_error::deserialize(table).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, scale: Scale, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, scale, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// TOML without the output directory, as stored next to the results.
    pub fn to_portable_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config serializes");
        table.remove("output");
        toml::to_string(&table).expect("config serializes")
    }

    /// SHA-256 over everything except the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |path: &str, msg: String| Err(CliError::Config(format!("{path}: {msg}")));
        if self.games.is_empty() {
            return err("games", "at least one game is required".into());
        }
        if self.players.is_empty() {
            return err("players", "at least one player count is required".into());
        }
        if self.opponents.is_empty() {
            return err("opponents", "at least one opponent is required".into());
        }
        if self.games.iter().collect::<BTreeSet<_>>().len() != self.games.len() {
            return err("games", "duplicate entry".into());
        }
        if self.players.iter().collect::<BTreeSet<_>>().len() != self.players.len() {
            return err("players", "duplicate entry".into());
        }
        if self.opponents.iter().collect::<BTreeSet<_>>().len() != self.opponents.len() {
            return err("opponents", "duplicate entry".into());
        }
        if self.rules.dots_rows < 2 || self.rules.dots_cols < 2 {
            return err("rules", "Dots and Boxes needs at least 2x2 dots".into());
        }
        for &g in &self.games {
            for &p in &self.players {
                if let Err(e) = GameState::with_rules(g, p, &self.rules, &mut stream(0, &[])) {
                    return err("players", e.to_string());
                }
            }
        }
        for (path, b) in [("budgets.agent", self.budgets.agent), ("budgets.opponent", self.budgets.opponent)] {
            if matches!(b, Budget::Iterations(0) | Budget::Millis(0)) {
                return err(path, "budget must be positive".into());
            }
        }
        let n = &self.ntbea;
        if n.runs == 0 || n.iterations == 0 || n.neighbours == 0 {
            return err("ntbea", "runs, iterations and neighbours must be positive".into());
        }
        if !(n.kappa.is_finite() && n.kappa >= 0.0) {
            return err("ntbea.kappa", "must be finite and non-negative".into());
        }
        let c = &self.games_per_row;
        if c.attributes < 2 {
            return err("games_per_row.attributes", "at least 2 games are needed".into());
        }
        if c.performance == 0 || c.round_robin == 0 {
            return err("games_per_row", "game counts must be positive".into());
        }
        let a = &self.analysis;
        if a.parallel_reps < 20 {
            return err("analysis.parallel_reps", "at least 20 replicates are needed".into());
        }
        if let Threshold::Quantile(q) = a.threshold {
            if !(0.0..=1.0).contains(&q) {
                return err("analysis.threshold", "quantile must lie in [0, 1]".into());
            }
        }
        if !(a.alpha > 0.0 && a.alpha < 1.0) {
            return err("analysis.alpha", "must lie in (0, 1)".into());
        }
        if !(a.cca_ridge.is_finite() && a.cca_ridge >= 0.0) {
            return err("analysis.cca_ridge", "must be finite and non-negative".into());
        }
        for pair in &a.cca {
            for s in pair {
                if !SPACES.contains(&s.as_str()) {
                    return err("analysis.cca", format!("unknown space `{s}`"));
                }
            }
            if pair[0] == pair[1] {
                return err("analysis.cca", format!("space `{}` paired with itself", pair[0]));
            }
        }
        Ok(())
    }
}

//! Python bindings: games, agents, NTBEA and the analysis routines.
//!
//! Matrices cross the boundary as lists of rows; every random operation takes
//! an explicit integer seed.

use std::str::FromStr;

use gamespace::agents::{fixed_opponent, mcts_search, AgentKind, AgentSpec, Budget, MctsParams, Opponent};
use gamespace::analysis::{self, DataMatrix, Threshold, DEFAULT_RIDGE};
use gamespace::features::{game_attribute_row, EnvKey, PlayConfig, ATTRIBUTE_NAMES};
use gamespace::ntbea::{self, Dimension, FingerprintConfig, NtbeaConfig, SearchSpace};
use gamespace::rng::{stream, Rng};
use gamespace::runner::{build_agents, play_game};
use gamespace::{Action, GameId, GameState};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(gamespace, GamespaceError, PyValueError);

fn err(e: gamespace::Error) -> PyErr {
    GamespaceError::new_err(e.to_string())
}

fn game_id(name: &str) -> PyResult<GameId> {
    GameId::from_str(name).map_err(err)
}

fn budget(iterations: u32) -> PyResult<Budget> {
    if iterations == 0 {
        return Err(GamespaceError::new_err("budget must be positive"));
    }
    Ok(Budget::Iterations(iterations))
}

/// `RND`, `OSLA`, `SimpleMCTS`, `RMHC-<horizon>`, or an MCTS parameter string
/// such as `tree=UCB,ol=true`.
fn agent_spec(name: &str, iterations: u32) -> PyResult<AgentSpec> {
    let b = budget(iterations)?;
    if let Ok(o) = Opponent::from_str(name) {
        return Ok(fixed_opponent(o, b));
    }
    if let Some(h) = name.strip_prefix("RMHC-") {
        let horizon = h.parse().map_err(|_| GamespaceError::new_err(format!("bad RMHC horizon `{h}`")))?;
        return AgentSpec::new(AgentKind::Rmhc { horizon }, b).map_err(err);
    }
    let params = MctsParams::from_str(name).map_err(err)?;
    Ok(AgentSpec::mcts(params, b))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DataMatrix> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(GamespaceError::new_err("rows have different lengths"));
    }
    let values = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    DataMatrix::from_values(values).map_err(err)
}

fn standardized(rows: Vec<Vec<f64>>) -> PyResult<DataMatrix> {
    Ok(analysis::standardize(&matrix(rows)?).map_err(err)?.matrix)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// A game in progress. Actions are the integer keys from `legal_actions()`.
#[pyclass(name = "Game", module = "gamespace", skip_from_py_object)]
#[derive(Clone)]
struct PyGame {
    state: GameState,
    rng: Rng,
}

#[pymethods]
impl PyGame {
    #[new]
    #[pyo3(signature = (game, players, seed = 0))]
    fn new(game: &str, players: usize, seed: u64) -> PyResult<Self> {
        let mut rng = stream(seed, &[]);
        let state = GameState::new(game_id(game)?, players, &mut rng).map_err(err)?;
        Ok(PyGame { state, rng })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.state.game_id().as_str()
    }

    #[getter]
    fn players(&self) -> usize {
        self.state.player_count()
    }

    #[getter]
    fn current_player(&self) -> usize {
        self.state.current_player()
    }

    #[getter]
    fn is_terminal(&self) -> bool {
        self.state.is_terminal()
    }

    fn legal_actions(&self) -> PyResult<Vec<u32>> {
        Ok(self.state.legal_actions().map_err(err)?.into_iter().map(|a| a.0).collect())
    }

    fn describe(&self, action: u32) -> String {
        self.state.describe(Action(action))
    }

    fn apply(&mut self, action: u32) -> PyResult<()> {
        self.state.apply_action(Action(action), &mut self.rng).map_err(err)
    }

    fn winners(&self) -> PyResult<Vec<usize>> {
        self.state.winners().map_err(err)
    }

    fn scores(&self) -> Vec<f64> {
        self.state.scores()
    }

    fn observation(&self, player: usize) -> String {
        self.state.observation(player)
    }

    /// Reshuffles what `observer` cannot see.
    fn redeterminize(&mut self, observer: usize) {
        self.state.redeterminize(observer, &mut self.rng);
    }

    fn copy(&self) -> Self {
        self.clone()
    }

    /// Action chosen by MCTS with `params` for the player to move.
    #[pyo3(signature = (params = "", iterations = 128, seed = 0))]
    fn mcts_action(&self, params: &str, iterations: u32, seed: u64) -> PyResult<u32> {
        let p = MctsParams::from_str(params).map_err(err)?;
        let mut rng = stream(seed, &[]);
        let player = self.state.current_player();
        let mut view = self.state.clone();
        view.redeterminize(player, &mut rng);
        Ok(mcts_search(&view, player, &p, budget(iterations)?, &mut rng).map_err(err)?.0)
    }

    fn __repr__(&self) -> String {
        format!("Game({}, players={}, terminal={})", self.name(), self.players(), self.is_terminal())
    }
}

/// Plays one game between `agents` (one per seat) and returns the outcome.
#[pyfunction]
#[pyo3(signature = (game, agents, seed = 0, iterations = 128))]
fn play<'py>(py: Python<'py>, game: &str, agents: Vec<String>, seed: u64, iterations: u32) -> PyResult<Bound<'py, PyDict>> {
    let specs: Vec<AgentSpec> = agents.iter().map(|a| agent_spec(a, iterations)).collect::<PyResult<_>>()?;
    let mut rng = stream(seed, &[]);
    let state = GameState::new(game_id(game)?, specs.len(), &mut rng).map_err(err)?;
    let record = play_game(state, &mut build_agents(&specs), &mut rng, false).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("winners", record.winners)?;
    out.set_item("utilities", record.utilities)?;
    out.set_item("decisions", record.decisions)?;
    Ok(out)
}

/// Names of the implemented games.
#[pyfunction]
fn games() -> Vec<&'static str> {
    GameId::ALL.iter().map(|g| g.as_str()).collect()
}

/// The MCTS parameter space searched by NTBEA, as `(name, values)` pairs.
#[pyfunction]
fn mcts_space() -> Vec<(String, Vec<String>)> {
    SearchSpace::mcts().dims.into_iter().map(|d| (d.name, d.values)).collect()
}

/// Maximises `evaluate(point) -> float` over a grid with the given arities.
#[pyfunction]
#[pyo3(signature = (arities, evaluate, iterations = 300, neighbours = 50, kappa = 2.0, seed = 0))]
fn ntbea_optimize<'py>(
    py: Python<'py>,
    arities: Vec<usize>,
    evaluate: Bound<'py, PyAny>,
    iterations: u32,
    neighbours: u32,
    kappa: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let space = SearchSpace {
        dims: arities
            .iter()
            .enumerate()
            .map(|(i, &a)| Dimension { name: format!("d{i}"), values: (0..a).map(|v| v.to_string()).collect() })
            .collect(),
    };
    let config = NtbeaConfig { iterations, neighbours, kappa };
    let mut py_err = None;
    let result = ntbea::ntbea_optimize(
        &space,
        |point, _| match evaluate.call1((point.clone(),)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => Ok(v),
            Err(e) => {
                py_err = Some(e);
                Err(gamespace::Error::InvalidArgument("evaluator raised".into()))
            }
        },
        &config,
        &mut stream(seed, &[]),
    );
    if let Some(e) = py_err {
        return Err(e);
    }
    let outcome = result.map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("best", outcome.best)?;
    out.set_item("evaluations", outcome.log.iter().map(|e| e.evaluation).collect::<Vec<_>>())?;
    Ok(out)
}

/// NTBEA fingerprint of an environment: marginal counts of the recommended
/// MCTS settings over `runs` independent runs.
#[pyfunction]
#[pyo3(signature = (game, players, opponent, runs = 10, iterations = 300, budget = 128, seed = 0))]
fn fingerprint<'py>(
    py: Python<'py>,
    game: &str,
    players: usize,
    opponent: &str,
    runs: u32,
    iterations: u32,
    budget: u32,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = FingerprintConfig {
        runs,
        ntbea: NtbeaConfig { iterations, ..NtbeaConfig::default() },
        budget: self::budget(budget)?,
        opponent_budget: self::budget(budget)?,
        seed,
        ..FingerprintConfig::default()
    };
    let opponent = Opponent::from_str(opponent).map_err(err)?;
    let (fp, _) = ntbea::fingerprint(game_id(game)?, players, opponent, &config).map_err(err)?;
    let out = PyDict::new(py);
    let marginals = PyDict::new(py);
    for m in &fp.marginals {
        let counts = PyDict::new(py);
        for (v, c) in m.values.iter().zip(&m.counts) {
            counts.set_item(v, c)?;
        }
        marginals.set_item(&m.param, counts)?;
    }
    out.set_item("marginals", marginals)?;
    out.set_item("recommendations", fp.recommendations)?;
    out.set_item("feature_names", fp.feature_names)?;
    out.set_item("features", fp.features)?;
    Ok(out)
}

/// The sixteen game-attribute features of one environment, by name.
#[pyfunction]
#[pyo3(signature = (game, players, opponent, games = 100, seed = 0))]
fn attributes<'py>(py: Python<'py>, game: &str, players: usize, opponent: &str, games: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let env = EnvKey::new(game_id(game)?, players, Opponent::from_str(opponent).map_err(err)?);
    let row = game_attribute_row(env, games, &PlayConfig::default(), &mut stream(seed, &[])).map_err(err)?;
    let out = PyDict::new(py);
    for (name, v) in ATTRIBUTE_NAMES.iter().zip(row.values) {
        out.set_item(name, v)?;
    }
    Ok(out)
}

/// PCA with varimax rotation of the standardized rows.
#[pyfunction]
fn pca<'py>(py: Python<'py>, rows: Vec<Vec<f64>>, k: usize) -> PyResult<Bound<'py, PyDict>> {
    let r = analysis::pca(&standardized(rows)?, k).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("eigenvalues", r.eigenvalues)?;
    out.set_item("loadings", to_rows(&r.loadings))?;
    out.set_item("rotated", to_rows(&r.rotated))?;
    out.set_item("scores", to_rows(&r.scores))?;
    out.set_item("rotated_scores", to_rows(&r.rotated_scores))?;
    Ok(out)
}

/// Number of components whose eigenvalues beat random data; `quantile=None`
/// compares against the mean random eigenvalue.
#[pyfunction]
#[pyo3(signature = (rows, reps = 200, quantile = Some(0.99), seed = 0))]
fn parallel_analysis<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f64>>,
    reps: usize,
    quantile: Option<f64>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let threshold = quantile.map_or(Threshold::Mean, Threshold::Quantile);
    let r = analysis::parallel_analysis(&standardized(rows)?, reps, threshold, &mut stream(seed, &[])).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("real", r.real)?;
    out.set_item("random", r.random)?;
    out.set_item("significant", r.significant)?;
    Ok(out)
}

/// Canonical correlations between two standardized row sets.
#[pyfunction]
#[pyo3(signature = (x, y, k, ridge = DEFAULT_RIDGE))]
fn cca(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, k: usize, ridge: f64) -> PyResult<Vec<f64>> {
    Ok(analysis::cca(&standardized(x)?, &standardized(y)?, k, ridge).map_err(err)?.correlations)
}

/// Two-sided Mann-Whitney U test; returns `(U, p)`.
#[pyfunction]
fn mann_whitney_u(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = analysis::mann_whitney_u(&a, &b).map_err(err)?;
    Ok((r.statistic, r.p_value))
}

/// Whether within-label distances are smaller than between-label ones;
/// returns `(U, p)`.
#[pyfunction]
fn clustering_test(rows: Vec<Vec<f64>>, labels: Vec<String>) -> PyResult<(f64, f64)> {
    let r = analysis::mann_whitney_clustering(&matrix(rows)?, &labels).map_err(err)?;
    Ok((r.statistic, r.p_value))
}

#[pyfunction]
fn fisher_exact_2x2(a: u64, b: u64, c: u64, d: u64) -> f64 {
    analysis::fisher_exact_2x2(a, b, c, d)
}

#[pymodule(name = "gamespace")]
fn gamespace_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GamespaceError", m.py().get_type::<GamespaceError>())?;
    m.add_class::<PyGame>()?;
    m.add_function(wrap_pyfunction!(games, m)?)?;
    m.add_function(wrap_pyfunction!(play, m)?)?;
    m.add_function(wrap_pyfunction!(mcts_space, m)?)?;
    m.add_function(wrap_pyfunction!(ntbea_optimize, m)?)?;
    m.add_function(wrap_pyfunction!(fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(attributes, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(parallel_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(cca, m)?)?;
    m.add_function(wrap_pyfunction!(mann_whitney_u, m)?)?;
    m.add_function(wrap_pyfunction!(clustering_test, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_exact_2x2, m)?)?;
    Ok(())
}

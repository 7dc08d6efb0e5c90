use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("action {0} is not legal in the current state")]
    IllegalAction(u32),
    #[error("the game is over")]
    TerminalState,
    #[error("the game is not over yet")]
    NotTerminal,
    #[error("{game} does not support {players} players")]
    UnsupportedPlayerCount { game: &'static str, players: usize },
    #[error("unknown game id `{0}`")]
    UnknownGame(String),
    #[error("missing simultaneous choice for player {0}")]
    MissingChoice(usize),
    #[error("no legal action available")]
    NoLegalAction,
    #[error("search space is empty")]
    EmptySpace,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("fingerprint does not match the search space: {0}")]
    SpaceMismatch(String),
    #[error("roster has {roster} agents but {players} seats must be filled")]
    RosterTooSmall { roster: usize, players: usize },
    #[error("every column is constant")]
    AllConstant,
    #[error("matrix is not standardized: {0}")]
    NotStandardized(String),
    #[error("row count mismatch: {left} vs {right}")]
    RowCountMismatch { left: usize, right: usize },
    #[error("degenerate groups: {0}")]
    DegenerateGroups(String),
    #[error("contingency table is empty")]
    EmptyTable,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

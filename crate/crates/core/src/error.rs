use std::fmt;

use thiserror::Error;

/// A parameter outside its admissible domain.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter {name} = {value}: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
    pub reason: &'static str,
}

impl ParamError {
    pub fn new(name: &'static str, value: f64, reason: &'static str) -> Self {
        Self { name, value, reason }
    }
}

/// The probe rates handed to the critical-rate search do not bracket a
/// tipping transition.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketError {
    pub r_low: f64,
    pub r_high: f64,
    pub low_tips: bool,
    pub high_tips: bool,
}

impl fmt::Display for BracketError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rates [{}, {}] do not bracket the tipping transition (tips at low: {}, tips at high: {})",
            self.r_low, self.r_high, self.low_tips, self.high_tips
        )
    }
}

impl std::error::Error for BracketError {}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Bracket(#[from] BracketError),
    #[error("histogram bin edges must be strictly ascending and at least two long")]
    BinEdges,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

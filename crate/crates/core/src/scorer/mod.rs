//! Relevance scoring: entry-state judgement, candidate proposal, script
//! planning and oracle derivation behind one pluggable [`Scorer`] trait.

mod lexical;
pub mod lexicon;
mod remote;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{StatePair, SubOracle};
use crate::trigger::ScriptStep;
use crate::ui::{Operation, UiState};

pub use lexical::LexicalScorer;
pub use lexicon::Lexicon;
pub use remote::{RemoteConfig, RemoteScorer};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScorerError {
    #[error("scorer unavailable after {attempts} attempt(s): {detail}")]
    Unavailable { attempts: u32, detail: String },
    #[error("malformed scorer reply: {0}")]
    MalformedReply(String),
    #[error("scorer configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("no script can be planned: {0}")]
    Unplannable(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("pre and post states do not differ; no oracle derivable")]
    NoDiffDerivable,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum ScoreError {
    #[error("relevance level {0} outside 1..=5")]
    LevelOutOfRange(i64),
    #[error("path score of an empty path")]
    EmptyPath,
}

/// Five-step relevance of one operation to a requirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelevanceLevel(u8);

impl RelevanceLevel {
    pub const MIN: RelevanceLevel = RelevanceLevel(1);
    pub const MAX: RelevanceLevel = RelevanceLevel(5);

    pub fn new(level: i64) -> Result<Self, ScoreError> {
        if (1..=5).contains(&level) {
            Ok(Self(level as u8))
        } else {
            Err(ScoreError::LevelOutOfRange(level))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn gamma(self) -> f64 {
        f64::from(self.0) / 5.0
    }
}

impl fmt::Display for RelevanceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for RelevanceLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for RelevanceLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let n = i64::deserialize(d)?;
        RelevanceLevel::new(n).map_err(serde::de::Error::custom)
    }
}

/// Geometric mean of the atomic scores along a path.
pub fn path_score(gammas: &[f64]) -> Result<f64, ScoreError> {
    if gammas.is_empty() {
        return Err(ScoreError::EmptyPath);
    }
    let mean_log = gammas.iter().map(|g| g.ln()).sum::<f64>() / gammas.len() as f64;
    Ok(mean_log.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateOp {
    pub op: Operation,
    pub atomic: RelevanceLevel,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploreResult {
    pub is_entry: bool,
    /// Triggering operations when `is_entry`, navigation proposals otherwise.
    pub candidates: Vec<CandidateOp>,
}

/// Semantic judgement used by all three phases.
pub trait Scorer: Send + Sync {
    /// Judge whether `state` is an entry state for `requirement` and propose
    /// at most `k` operations.
    fn page_explore(&self, requirement: &str, state: &UiState, k: usize) -> Result<ExploreResult, ScorerError>;

    /// Build a trigger script starting at `state`. `actuated` lists the
    /// labels already acted upon in earlier rounds.
    fn plan_script(
        &self,
        requirement: &str,
        state: &UiState,
        trigger_ops: &[Operation],
        actuated: &[String],
    ) -> Result<Vec<ScriptStep>, PlanError>;

    /// After a round ends in `state`: `None` when the functionality is
    /// complete, otherwise the operations that start the next round.
    fn continue_with(
        &self,
        requirement: &str,
        state: &UiState,
        actuated: &[String],
    ) -> Result<Option<Vec<Operation>>, ScorerError>;

    /// Up to `eta` sub-oracles for the captured state pair.
    fn derive_oracle(&self, requirement: &str, pair: &StatePair, eta: usize) -> Result<Vec<SubOracle>, OracleError>;
}

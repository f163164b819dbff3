//! Best-first exploration towards the entry state of a requirement.
//!
//! Queue entries carry the digest of the state they were proposed on and an
//! operation; their priority is the geometric mean of the atomic scores along
//! the path. Popping an entry whose base differs from the current screen
//! restores the base by reset and replay of its canonical path.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::Serialize;
use thiserror::Error;

use crate::device::{Device, DeviceError};
use crate::scorer::{path_score, RelevanceLevel, Scorer, ScorerError};
use crate::ui::{OpHash, Operation, StateDigest, UiState};

/// Edge key of the virtual launch operation seeding the search.
pub const LAUNCH: OpHash = OpHash(0);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NavError {
    #[error("replay diverged at step {step}")]
    ReplayDiverged { step: usize },
    #[error("state {0} is not in the history")]
    UnknownState(StateDigest),
    #[error("invalid navigation config: {0}")]
    Config(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NavConfig {
    /// Step budget M.
    pub max_steps: usize,
    /// Candidates requested per page.
    pub k: usize,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self { max_steps: 5, k: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryNode {
    /// Canonical path from the initial state: operation and digest reached.
    pub path: Vec<(Operation, StateDigest)>,
    /// Atomic scores along the canonical path.
    pub gammas: Vec<f64>,
}

/// Visited states, expanded edges and canonical paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryGraph {
    root: StateDigest,
    nodes: BTreeMap<StateDigest, HistoryNode>,
    #[serde(skip)]
    edges: BTreeMap<(StateDigest, OpHash), Option<StateDigest>>,
    appended: Vec<(StateDigest, OpHash)>,
}

impl HistoryGraph {
    pub fn new(root: StateDigest) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(
            root,
            HistoryNode {
                path: Vec::new(),
                gammas: Vec::new(),
            },
        );
        Self {
            root,
            nodes,
            edges: BTreeMap::new(),
            appended: Vec::new(),
        }
    }

    pub fn root(&self) -> StateDigest {
        self.root
    }

    pub fn node(&self, digest: &StateDigest) -> Option<&HistoryNode> {
        self.nodes.get(digest)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&StateDigest, &HistoryNode)> {
        self.nodes.iter()
    }

    /// Destination recorded for an expanded edge, if it was performed.
    pub fn edge(&self, base: StateDigest, op: OpHash) -> Option<StateDigest> {
        self.edges.get(&(base, op)).copied().flatten()
    }

    /// Every `(base, op)` pair appended, in order.
    pub fn appended(&self) -> &[(StateDigest, OpHash)] {
        &self.appended
    }

    pub fn append(&mut self, base: StateDigest, op: OpHash) {
        self.edges.entry((base, op)).or_insert(None);
        self.appended.push((base, op));
    }

    /// Record the destination of an appended edge; a first visit to `dest`
    /// fixes its canonical path.
    pub fn record(&mut self, base: StateDigest, op: Option<&Operation>, dest: StateDigest, gammas: &[f64]) {
        let hash = op.map_or(LAUNCH, Operation::op_hash);
        self.edges.insert((base, hash), Some(dest));
        if self.nodes.contains_key(&dest) {
            return;
        }
        let Some(op) = op else { return };
        let mut path = self.nodes[&base].path.clone();
        path.push((op.clone(), dest));
        self.nodes.insert(
            dest,
            HistoryNode {
                path,
                gammas: gammas.to_vec(),
            },
        );
    }
}

/// True when `op` was already expanded from a state with digest `base`.
pub fn equivalent_state(history: &HistoryGraph, base: StateDigest, op: OpHash) -> bool {
    history.nodes.contains_key(&base) && history.edges.contains_key(&(base, op))
}

/// Path gammas of `base` followed by the atomic score of the new operation,
/// and their geometric mean.
pub fn compute_score(
    history: &HistoryGraph,
    base: StateDigest,
    atomic: RelevanceLevel,
) -> Result<(f64, Vec<f64>), NavError> {
    let node = history.node(&base).ok_or(NavError::UnknownState(base))?;
    let mut gammas = node.gammas.clone();
    gammas.push(atomic.gamma());
    let score = path_score(&gammas).expect("path is non-empty");
    Ok((score, gammas))
}

/// Reset the device and re-run the canonical path of `target`, checking the
/// digest after every step.
pub fn replay<D: Device + ?Sized>(
    device: &mut D,
    history: &HistoryGraph,
    target: StateDigest,
) -> Result<UiState, NavError> {
    let node = history.node(&target).ok_or(NavError::UnknownState(target))?;
    let mut state = device.reset();
    if state.digest() != history.root {
        return Err(NavError::ReplayDiverged { step: 0 });
    }
    for (i, (op, expected)) in node.path.iter().enumerate() {
        state = match device.perform(op) {
            Ok(s) => s,
            Err(DeviceError::SelectorUnresolved(_)) => return Err(NavError::ReplayDiverged { step: i + 1 }),
            Err(e) => return Err(e.into()),
        };
        if state.digest() != *expected {
            return Err(NavError::ReplayDiverged { step: i + 1 });
        }
    }
    Ok(state)
}

#[derive(Debug, Clone)]
struct QueueEntry {
    base: StateDigest,
    op: Option<Operation>,
    score: f64,
    gammas: Vec<f64>,
    seq: u64,
}

impl QueueEntry {
    fn op_hash(&self) -> OpHash {
        self.op.as_ref().map_or(LAUNCH, Operation::op_hash)
    }
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    // max-heap on score; earlier insertion wins ties
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoppedEntry {
    pub base: StateDigest,
    /// `None` for the launch entry.
    pub op: Option<Operation>,
    pub score: f64,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PushedEntry {
    pub op: Operation,
    pub atomic: RelevanceLevel,
    pub score: f64,
    pub seq: u64,
}

/// One loop iteration of [`navigate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NavTraceEvent {
    pub step: usize,
    pub popped: PoppedEntry,
    /// Digest reached by replay when the base was not on screen.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replayed: Option<StateDigest>,
    pub skipped: bool,
    /// Why the entry was dropped without expansion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped: Option<String>,
    pub new_state: Option<StateDigest>,
    pub is_entry: bool,
    pub pushed: Vec<PushedEntry>,
}

#[derive(Debug, Clone)]
pub struct NavResult {
    pub entry: Option<UiState>,
    pub history: HistoryGraph,
    pub trigger_ops: Option<Vec<Operation>>,
    pub steps_used: usize,
    pub trace: Vec<NavTraceEvent>,
}

impl NavResult {
    pub fn entry_digest(&self) -> Option<StateDigest> {
        self.entry.as_ref().map(UiState::digest)
    }
}

/// Explore from the initial state until a page is judged an entry state or
/// the step budget is spent.
pub fn navigate<D: Device + ?Sized>(
    requirement: &str,
    device: &mut D,
    scorer: &dyn Scorer,
    config: NavConfig,
) -> Result<NavResult, NavError> {
    if config.max_steps == 0 || config.k == 0 {
        return Err(NavError::Config("max steps and k must be at least 1".into()));
    }
    let s0 = device.reset();
    let mut history = HistoryGraph::new(s0.digest());
    let mut queue = BinaryHeap::new();
    queue.push(QueueEntry {
        base: s0.digest(),
        op: None,
        score: 1.0,
        gammas: Vec::new(),
        seq: 0,
    });
    let mut seq = 1u64;
    // the first pop replays, which for the launch entry is a plain reset
    let mut current: Option<StateDigest> = None;
    let mut step = 0;
    let mut trace = Vec::new();

    while step < config.max_steps {
        let Some(entry) = queue.pop() else { break };
        step += 1;
        let mut event = NavTraceEvent {
            step,
            popped: PoppedEntry {
                base: entry.base,
                op: entry.op.clone(),
                score: entry.score,
                seq: entry.seq,
            },
            replayed: None,
            skipped: false,
            dropped: None,
            new_state: None,
            is_entry: false,
            pushed: Vec::new(),
        };

        if current != Some(entry.base) {
            match replay(device, &history, entry.base) {
                Ok(s) => {
                    current = Some(s.digest());
                    event.replayed = current;
                }
                Err(NavError::ReplayDiverged { step: at }) => {
                    current = None;
                    event.dropped = Some(format!("replay diverged at step {at}"));
                    trace.push(event);
                    continue;
                }
                Err(e) => return Err(e),
            }
        }

        let hash = entry.op_hash();
        if equivalent_state(&history, entry.base, hash) {
            event.skipped = true;
            trace.push(event);
            continue;
        }
        history.append(entry.base, hash);

        let reached = match &entry.op {
            None => device.current(),
            Some(op) => match device.perform(op) {
                Ok(s) => s,
                Err(DeviceError::SelectorUnresolved(sel)) => {
                    event.dropped = Some(format!("selector {sel} unresolved"));
                    trace.push(event);
                    continue;
                }
                Err(e) => return Err(e.into()),
            },
        };
        let digest = reached.digest();
        current = Some(digest);
        history.record(entry.base, entry.op.as_ref(), digest, &entry.gammas);
        event.new_state = Some(digest);

        let explored = scorer.page_explore(requirement, &reached, config.k)?;
        if explored.is_entry && !explored.candidates.is_empty() {
            event.is_entry = true;
            trace.push(event);
            let ops = explored.candidates.into_iter().map(|c| c.op).collect();
            return Ok(NavResult {
                entry: Some(reached),
                history,
                trigger_ops: Some(ops),
                steps_used: step,
                trace,
            });
        }
        for c in explored.candidates.into_iter().take(config.k) {
            let (score, gammas) = compute_score(&history, digest, c.atomic)?;
            event.pushed.push(PushedEntry {
                op: c.op.clone(),
                atomic: c.atomic,
                score,
                seq,
            });
            queue.push(QueueEntry {
                base: digest,
                op: Some(c.op),
                score,
                gammas,
                seq,
            });
            seq += 1;
        }
        trace.push(event);
    }

    Ok(NavResult {
        entry: None,
        history,
        trigger_ops: None,
        steps_used: step,
        trace,
    })
}

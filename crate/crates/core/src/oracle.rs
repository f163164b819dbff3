//! Pre/post state capture, tree differencing and oracle evaluation.

use serde::{Deserialize, Serialize};

use crate::device::Device;
use crate::navigator::{replay, HistoryGraph, NavError};
use crate::trigger::Assertion;
use crate::ui::{compress_tree, ElementPath, Operation, StateDigest, UiElement, UiState};

/// States around the functionality-executing operation.
#[derive(Debug, Clone)]
pub struct StatePair {
    pub pre: UiState,
    pub post: UiState,
    /// Operations run by the trigger script.
    pub ops: Vec<Operation>,
    /// Digest of the navigation entry state the capture started from.
    pub entry: StateDigest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Pre,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubOracle {
    #[serde(flatten)]
    pub assertion: Assertion,
    pub target: Target,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Phase1,
    Phase2,
    Phase3,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubResult {
    #[serde(flatten)]
    pub oracle: SubOracle,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    #[serde(rename = "sub_oracles")]
    pub sub_results: Vec<SubResult>,
    pub phase_attribution: Phase,
}

/// Reset, replay to the entry state, then re-run `ops`: `pre` is the state
/// before the last operation and `post` the state after it.
pub fn capture_pre_post<D: Device + ?Sized>(
    device: &mut D,
    history: &HistoryGraph,
    entry: StateDigest,
    ops: &[Operation],
) -> Result<StatePair, NavError> {
    let mut state = replay(device, history, entry)?;
    let Some((last, head)) = ops.split_last() else {
        return Ok(StatePair {
            pre: state.clone(),
            post: state,
            ops: Vec::new(),
            entry,
        });
    };
    for op in head {
        state = device.perform(op)?;
    }
    let post = device.perform(last)?;
    Ok(StatePair {
        pre: state,
        post,
        ops: ops.to_vec(),
        entry,
    })
}

/// Check every sub-oracle against its target state. The decision is the
/// conjunction of the results.
pub fn evaluate(oracles: &[SubOracle], pair: &StatePair) -> Verdict {
    let sub_results: Vec<SubResult> = oracles
        .iter()
        .map(|o| {
            let state = match o.target {
                Target::Pre => &pair.pre,
                Target::Post => &pair.post,
            };
            SubResult {
                oracle: o.clone(),
                pass: o.assertion.holds(state),
            }
        })
        .collect();
    let pass = sub_results.iter().all(|r| r.pass);
    Verdict {
        decision: if pass { Decision::Pass } else { Decision::Fail },
        sub_results,
        phase_attribution: if pass { Phase::None } else { Phase::Phase3 },
    }
}

/// Difference between the compressed pre and post trees. Paths index into
/// the compressed states held here.
#[derive(Debug, Clone)]
pub struct TreeDiff {
    pub pre: UiState,
    pub post: UiState,
    /// Roots of pre subtrees with no counterpart in post.
    pub removed: Vec<ElementPath>,
    /// Roots of post subtrees with no counterpart in pre.
    pub added: Vec<ElementPath>,
    /// Matched pairs `(pre, post)` whose own attributes differ.
    pub changed: Vec<(ElementPath, ElementPath)>,
    /// Matched pairs with identical attributes.
    pub unchanged: Vec<(ElementPath, ElementPath)>,
}

impl TreeDiff {
    pub fn is_empty(&self) -> bool {
        self.removed.is_empty() && self.added.is_empty() && self.changed.is_empty()
    }
}

/// Match children by `(resource-id, class)`, identical subtrees first, then
/// the remaining same-key children in order.
pub fn diff_states(pre: &UiState, post: &UiState) -> TreeDiff {
    let mut diff = TreeDiff {
        pre: compress_tree(pre),
        post: compress_tree(post),
        removed: Vec::new(),
        added: Vec::new(),
        changed: Vec::new(),
        unchanged: Vec::new(),
    };
    let (a, b) = (diff.pre.root().clone(), diff.post.root().clone());
    diff_node(&a, &b, ElementPath::root(), ElementPath::root(), &mut diff);
    diff
}

fn key(e: &UiElement) -> (Option<&str>, Option<&str>) {
    (e.attr("resource-id"), e.attr("class"))
}

fn diff_node(a: &UiElement, b: &UiElement, pa: ElementPath, pb: ElementPath, out: &mut TreeDiff) {
    if a.attrs == b.attrs {
        out.unchanged.push((pa.clone(), pb.clone()));
    } else {
        out.changed.push((pa.clone(), pb.clone()));
    }
    let mut of_b: Vec<Option<usize>> = vec![None; b.children.len()];
    let mut taken = vec![false; a.children.len()];
    for (j, cb) in b.children.iter().enumerate() {
        if let Some(i) = (0..a.children.len()).find(|&i| !taken[i] && a.children[i] == *cb) {
            taken[i] = true;
            of_b[j] = Some(i);
        }
    }
    for (j, cb) in b.children.iter().enumerate() {
        if of_b[j].is_some() {
            continue;
        }
        if let Some(i) = (0..a.children.len()).find(|&i| !taken[i] && key(&a.children[i]) == key(cb)) {
            taken[i] = true;
            of_b[j] = Some(i);
        }
    }
    for (i, was_taken) in taken.iter().enumerate() {
        if !was_taken {
            out.removed.push(pa.child(i));
        }
    }
    for (j, m) in of_b.iter().enumerate() {
        match m {
            Some(i) => diff_node(&a.children[*i], &b.children[j], pa.child(*i), pb.child(j), out),
            None => out.added.push(pb.child(j)),
        }
    }
}

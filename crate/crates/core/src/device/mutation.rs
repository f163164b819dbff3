use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AppSpec, LoadError, Variant};
use crate::ui::{ElementPath, Selector, UiElement};

/// Fault injected into an app to obtain a faulty variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutation {
    pub id: String,
    #[serde(flatten)]
    pub kind: MutationKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MutationKind {
    /// Delete every element matching `selector`, in `state` or in all states.
    RemoveElement {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state: Option<String>,
        selector: Selector,
    },
    /// Replace the substring `from` by `to` in text and content-desc labels.
    /// Transition and effect selectors naming the old label follow the
    /// rename, so only the visible wording changes.
    CorruptLabel {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        selector: Option<Selector>,
        from: String,
        to: String,
    },
    RetargetTransition {
        transition: String,
        to: String,
    },
    /// The transition no longer exists; its element becomes inert.
    NoopTransition {
        transition: String,
    },
    /// The transition fires but leaves its destination untouched.
    DropEffect {
        transition: String,
    },
}

impl MutationKind {
    pub fn name(&self) -> &'static str {
        match self {
            MutationKind::RemoveElement { .. } => "remove-element",
            MutationKind::CorruptLabel { .. } => "corrupt-label",
            MutationKind::RetargetTransition { .. } => "retarget-transition",
            MutationKind::NoopTransition { .. } => "noop-transition",
            MutationKind::DropEffect { .. } => "drop-effect",
        }
    }
}

/// Mutations keyed by app id.
pub type MutationSet = BTreeMap<String, Vec<Mutation>>;

pub fn load_mutations(path: impl AsRef<Path>) -> Result<MutationSet, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let set: MutationSet = serde_json::from_str(&text).map_err(|e| LoadError::Parse(e.to_string()))?;
    for (app, list) in &set {
        let mut ids = BTreeSet::new();
        for m in list {
            if !ids.insert(&m.id) {
                return Err(LoadError::Schema {
                    field: format!("mutations.{app}"),
                    detail: format!("duplicate mutation id {:?}", m.id),
                });
            }
        }
    }
    Ok(set)
}

/// Derive the faulty variant of `app` described by `m`.
pub fn apply_mutation(app: &AppSpec, m: &Mutation) -> Result<AppSpec, LoadError> {
    let mut out = app.clone();
    let missing = |what: String| LoadError::TargetNotFound(format!("{}: {what}", m.id));
    match &m.kind {
        MutationKind::RemoveElement { state, selector } => {
            if selector.root {
                return Err(LoadError::Schema {
                    field: format!("mutation {}", m.id),
                    detail: "cannot remove the root element".into(),
                });
            }
            let mut removed = 0;
            for id in target_states(&out, state.as_deref()).map_err(missing)? {
                let tree = out.states.get_mut(&id).expect("state listed");
                let mut paths = selector.resolve_in(tree).map_err(|e| LoadError::Parse(e.to_string()))?;
                // deepest and last first so earlier paths stay valid
                paths.sort_by(|a, b| b.cmp(a));
                for p in paths {
                    removed += usize::from(remove_at(tree, &p));
                }
            }
            if removed == 0 {
                return Err(missing(format!("no element matches {selector}")));
            }
        }
        MutationKind::CorruptLabel {
            state,
            selector,
            from,
            to,
        } => {
            if from.is_empty() {
                return Err(LoadError::Schema {
                    field: format!("mutation {}", m.id),
                    detail: "corrupt-label needs a non-empty `from`".into(),
                });
            }
            let states = target_states(&out, state.as_deref()).map_err(missing)?;
            let mut touched = BTreeSet::new();
            for id in &states {
                let tree = out.states.get_mut(id).expect("state listed");
                let paths = match selector {
                    Some(sel) => sel.resolve_in(tree).map_err(|e| LoadError::Parse(e.to_string()))?,
                    None => tree.walk().into_iter().map(|(p, _)| p).collect(),
                };
                for p in paths {
                    let node = tree.get_mut(&p).expect("resolved path");
                    for key in ["text", "content-desc"] {
                        if let Some(v) = node.attrs.get_mut(key) {
                            if v.contains(from.as_str()) {
                                *v = v.replace(from.as_str(), to);
                                touched.insert(id.clone());
                            }
                        }
                    }
                }
            }
            if touched.is_empty() {
                return Err(missing(format!("no label contains {from:?}")));
            }
            for t in &mut out.transitions {
                if touched.contains(&t.from) {
                    rename_in_selector(&mut t.selector, from, to);
                }
                if touched.contains(&t.to) {
                    for eff in &mut t.effects {
                        rename_in_selector(&mut eff.selector, from, to);
                    }
                }
            }
        }
        MutationKind::RetargetTransition { transition, to } => {
            let idx = transition_index(&out, transition).ok_or_else(|| missing(transition.clone()))?;
            out.transitions[idx].to = to.clone();
        }
        MutationKind::NoopTransition { transition } => {
            let idx = transition_index(&out, transition).ok_or_else(|| missing(transition.clone()))?;
            out.transitions.remove(idx);
        }
        MutationKind::DropEffect { transition } => {
            let idx = transition_index(&out, transition).ok_or_else(|| missing(transition.clone()))?;
            if out.transitions[idx].effects.is_empty() {
                return Err(missing(format!("transition {transition} has no effects")));
            }
            out.transitions[idx].effects.clear();
        }
    }
    out.variant = Variant::Faulty(m.id.clone());
    out.validate()?;
    Ok(out)
}

fn target_states(app: &AppSpec, state: Option<&str>) -> Result<Vec<String>, String> {
    match state {
        Some(s) if app.states.contains_key(s) => Ok(vec![s.to_owned()]),
        Some(s) => Err(format!("unknown state {s:?}")),
        None => Ok(app.states.keys().cloned().collect()),
    }
}

fn transition_index(app: &AppSpec, id: &str) -> Option<usize> {
    app.transition(id).map(|(i, _)| i)
}

fn remove_at(tree: &mut UiElement, path: &ElementPath) -> bool {
    let (Some(parent), Some(&last)) = (path.parent(), path.0.last()) else {
        return false;
    };
    match tree.get_mut(&parent) {
        Some(p) if last < p.children.len() => {
            p.children.remove(last);
            true
        }
        _ => false,
    }
}

fn rename_in_selector(sel: &mut Selector, from: &str, to: &str) {
    for v in [&mut sel.text, &mut sel.content_desc].into_iter().flatten() {
        if v.contains(from) {
            *v = v.replace(from, to);
        }
    }
}

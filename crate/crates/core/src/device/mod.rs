//! Device abstraction and the declarative application simulator.
//!
//! An [`AppSpec`] describes an app as named UI states plus transitions keyed
//! on `(state, selector, action)`. A [`DeviceSession`] executes operations
//! against it; [`apply_mutation`] derives faulty variants.

mod mutation;
mod session;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ui::{Action, ElementPath, Operation, Selector, UiElement, UiError, UiState};

pub use mutation::{apply_mutation, load_mutations, Mutation, MutationKind, MutationSet};
pub use session::{open_session, DeviceSession};

/// Attribute giving the number of visible children of a scrollable container.
pub const WINDOW_ATTR: &str = "window";
/// Attribute added to rendered windowed containers with their total child count.
pub const ITEM_COUNT_ATTR: &str = "item-count";
/// Placeholder in effect values replaced by the text typed by the triggering
/// input-text action.
pub const INPUT_PLACEHOLDER: &str = "${input}";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error in {field}: {detail}")]
    Schema { field: String, detail: String },
    #[error("{field} references unknown state {state:?}")]
    DanglingStateRef { field: String, state: String },
    #[error("mutation target not found: {0}")]
    TargetNotFound(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeviceError {
    #[error("selector {0} resolves to no element")]
    SelectorUnresolved(String),
    #[error(transparent)]
    Ui(#[from] UiError),
    #[error("device failure: {0}")]
    Backend(String),
}

/// Whether an app implements its requirement correctly.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Correct,
    Faulty(String),
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Correct => f.write_str("correct"),
            Variant::Faulty(id) => write!(f, "faulty:{id}"),
        }
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "correct" {
            return Ok(Variant::Correct);
        }
        match s.strip_prefix("faulty:") {
            Some(id) if !id.is_empty() => Ok(Variant::Faulty(id.to_owned())),
            _ => Err(serde::de::Error::custom(format!(
                "variant must be \"correct\" or \"faulty:<id>\", got {s:?}"
            ))),
        }
    }
}

/// Attribute edit applied to the destination state when a transition fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Effect {
    pub selector: Selector,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub set: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub remove: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub from: String,
    pub selector: Selector,
    /// Input-text transitions fire for any payload.
    pub action: Action,
    pub to: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effects: Vec<Effect>,
}

/// Declarative application: states, transitions and a variant label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    pub app_id: String,
    pub initial: String,
    pub states: BTreeMap<String, UiElement>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub variant: Variant,
}

impl AppSpec {
    pub fn from_json(text: &str) -> Result<Self, LoadError> {
        let app: AppSpec = serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
        app.validate()?;
        Ok(app)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("app spec serializes")
    }

    pub fn transition(&self, id: &str) -> Option<(usize, &Transition)> {
        self.transitions
            .iter()
            .enumerate()
            .find(|(_, t)| t.id.as_deref() == Some(id))
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<(), LoadError> {
        let schema = |field: String, detail: String| LoadError::Schema { field, detail };
        if self.app_id.trim().is_empty() {
            return Err(schema("app_id".into(), "must be non-empty".into()));
        }
        if !self.states.contains_key(&self.initial) {
            return Err(LoadError::DanglingStateRef {
                field: "initial".into(),
                state: self.initial.clone(),
            });
        }
        for (id, tree) in &self.states {
            check_windows(tree, false).map_err(|d| schema(format!("states.{id}"), d))?;
        }
        let mut seen_ids = std::collections::BTreeSet::new();
        for (i, t) in self.transitions.iter().enumerate() {
            let field = format!("transitions[{i}]");
            if let Some(id) = &t.id {
                if !seen_ids.insert(id) {
                    return Err(schema(field, format!("duplicate transition id {id:?}")));
                }
            }
            for (name, state) in [("from", &t.from), ("to", &t.to)] {
                if !self.states.contains_key(state) {
                    return Err(LoadError::DanglingStateRef {
                        field: format!("{field}.{name}"),
                        state: state.clone(),
                    });
                }
            }
            Operation::new(t.selector.clone(), t.action.clone())
                .validate()
                .map_err(|e| schema(format!("{field}.selector"), e.to_string()))?;
            for (j, eff) in t.effects.iter().enumerate() {
                eff.selector
                    .validate()
                    .map_err(|e| schema(format!("{field}.effects[{j}]"), e.to_string()))?;
            }
        }
        self.check_determinism()
    }

    /// At most one transition may fire for any (state, element, action).
    fn check_determinism(&self) -> Result<(), LoadError> {
        let mut targets: Vec<Vec<ElementPath>> = Vec::with_capacity(self.transitions.len());
        for t in &self.transitions {
            let tree = &self.states[&t.from];
            targets.push(t.selector.resolve_in(tree).unwrap_or_default());
        }
        for i in 0..self.transitions.len() {
            for j in (i + 1)..self.transitions.len() {
                let (a, b) = (&self.transitions[i], &self.transitions[j]);
                if a.from != b.from || !a.action.same_kind(&b.action) {
                    continue;
                }
                let overlap = if a.selector.root || b.selector.root {
                    a.selector.root && b.selector.root
                } else {
                    targets[i].iter().any(|p| targets[j].contains(p))
                };
                if overlap {
                    return Err(LoadError::Schema {
                        field: format!("transitions[{j}]"),
                        detail: format!(
                            "overlaps transitions[{i}] on state {:?} for action {}",
                            a.from, a.action
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_windows(e: &UiElement, inside_window: bool) -> Result<(), String> {
    let windowed = match e.attr(WINDOW_ATTR) {
        None => false,
        Some(w) => {
            let n: usize = w
                .trim()
                .parse()
                .map_err(|_| format!("window attribute {w:?} is not a count"))?;
            if n == 0 {
                return Err("window must be at least 1".into());
            }
            if !e.flag("scrollable") {
                return Err("window set on a non-scrollable element".into());
            }
            if inside_window {
                return Err("nested scroll windows are not supported".into());
            }
            true
        }
    };
    e.children
        .iter()
        .try_for_each(|c| check_windows(c, inside_window || windowed))
}

/// Read and validate an app-spec file.
pub fn load_app(path: impl AsRef<Path>) -> Result<AppSpec, LoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    AppSpec::from_json(&text)
}

/// Contract every device backend honours.
pub trait Device {
    /// Current UI state.
    fn current(&self) -> UiState;
    /// Perform an operation; returns the resulting state.
    fn perform(&mut self, op: &Operation) -> Result<UiState, DeviceError>;
    /// Restart the app at its initial state and clear the trace.
    fn reset(&mut self) -> UiState;
    /// Operations performed since the last reset.
    fn trace(&self) -> &[Operation];
}

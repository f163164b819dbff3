//! Selector repair by hierarchical attribute search.
//!
//! A failed selector (no match) is repaired by trying, in order: the same
//! value under the same attribute, the same value under a sibling attribute,
//! case-insensitive containment, and finally a unique class match. An
//! ambiguous selector (several matches, no index) gets an index appended.

use serde::Serialize;
use thiserror::Error;

use crate::ui::{ElementPath, Selector, UiElement, UiState};

/// Shortest value considered by the containment tier.
const MIN_FUZZY_LEN: usize = 3;

/// Attributes used to rebuild selectors, highest priority first.
const KEY_ATTRIBUTES: [&str; 3] = ["resource-id", "text", "content-desc"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefineError {
    #[error("no repair found for selector {0}")]
    Unrepairable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Exact,
    CrossAttribute,
    Fuzzy,
    ClassOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairKind {
    /// Selector already resolved uniquely.
    Unchanged,
    /// Several matches; an index was appended.
    Disambiguated,
    Repaired(Tier),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refinement {
    pub selector: Selector,
    pub kind: RepairKind,
}

/// Repair `failed` against `state`.
pub fn refine(failed: &Selector, state: &UiState) -> Result<Refinement, RefineError> {
    refine_probed(failed, state, |_| {})
}

/// Same as [`refine`], reporting every tier it consults to `probe`.
pub fn refine_probed(
    failed: &Selector,
    state: &UiState,
    mut probe: impl FnMut(Tier),
) -> Result<Refinement, RefineError> {
    let unrepairable = || RefineError::Unrepairable(failed.to_string());
    if failed.root {
        return Ok(Refinement {
            selector: failed.clone(),
            kind: RepairKind::Unchanged,
        });
    }
    // An invalid regex is treated like a failed match.
    let matches = state.resolve(failed).unwrap_or_default();
    match matches.len() {
        1 => {
            return Ok(Refinement {
                selector: failed.clone(),
                kind: RepairKind::Unchanged,
            })
        }
        n if n > 1 => {
            // resolve() only returns several paths when no index is set
            return Ok(Refinement {
                selector: failed.clone().at(0),
                kind: RepairKind::Disambiguated,
            });
        }
        _ => {}
    }

    let values = key_values(failed);
    let walk = state.root().walk();

    probe(Tier::Exact);
    let exact = values.iter().find_map(|(attr, value)| {
        walk.iter()
            .find(|(_, e)| e.attr(attr).is_some_and(|v| v.trim() == value.trim()))
            .map(|(p, _)| p.clone())
    });
    if let Some(path) = exact {
        return rebuilt(state, &path, Tier::Exact).ok_or_else(unrepairable);
    }

    probe(Tier::CrossAttribute);
    let cross = values.iter().find_map(|(attr, value)| {
        walk.iter()
            .find(|(_, e)| {
                KEY_ATTRIBUTES
                    .iter()
                    .filter(|a| *a != attr)
                    .any(|a| e.attr(a).is_some_and(|v| v.trim() == value.trim()))
            })
            .map(|(p, _)| p.clone())
    });
    let cross = cross.or_else(|| {
        // a text regex may describe a content-desc or resource-id instead
        let re = failed
            .text_matches
            .as_deref()
            .and_then(|p| crate::ui::compile_full_match(p).ok())?;
        walk.iter()
            .find(|(_, e)| {
                ["content-desc", "resource-id"]
                    .iter()
                    .any(|a| e.attr(a).is_some_and(|v| re.is_match(v)))
            })
            .map(|(p, _)| p.clone())
    });
    if let Some(path) = cross {
        return rebuilt(state, &path, Tier::CrossAttribute).ok_or_else(unrepairable);
    }

    probe(Tier::Fuzzy);
    let mut best: Option<(usize, ElementPath)> = None;
    for (path, e) in &walk {
        for (_, value) in &values {
            let want = value.trim().to_lowercase();
            for attr in KEY_ATTRIBUTES {
                let Some(have) = e.attr(attr) else { continue };
                let have = have.trim().to_lowercase();
                let overlap = if have.contains(&want) {
                    want.chars().count()
                } else if want.contains(&have) {
                    have.chars().count()
                } else {
                    0
                };
                if overlap >= MIN_FUZZY_LEN && best.as_ref().is_none_or(|(len, _)| overlap > *len) {
                    best = Some((overlap, path.clone()));
                }
            }
        }
    }
    if let Some((_, path)) = best {
        return rebuilt(state, &path, Tier::Fuzzy).ok_or_else(unrepairable);
    }

    probe(Tier::ClassOnly);
    if let Some(class) = &failed.class {
        let hits: Vec<&ElementPath> = walk
            .iter()
            .filter(|(_, e)| e.attr("class").is_some_and(|c| c.trim() == class.trim()))
            .map(|(p, _)| p)
            .collect();
        if let [only] = hits.as_slice() {
            return rebuilt(state, only, Tier::ClassOnly).ok_or_else(unrepairable);
        }
    }
    Err(unrepairable())
}

fn key_values(sel: &Selector) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if let Some(v) = &sel.resource_id {
        out.push(("resource-id", v.clone()));
    }
    if let Some(v) = &sel.text {
        out.push(("text", v.clone()));
    }
    if let Some(v) = &sel.content_desc {
        out.push(("content-desc", v.clone()));
    }
    out
}

fn rebuilt(state: &UiState, path: &ElementPath, tier: Tier) -> Option<Refinement> {
    selector_for(state, path).map(|selector| Refinement {
        selector,
        kind: RepairKind::Repaired(tier),
    })
}

/// Build a selector that resolves uniquely to `path`, preferring
/// resource-id, then text, then content-desc, and appending an index when no
/// single attribute is unique.
pub fn selector_for(state: &UiState, path: &ElementPath) -> Option<Selector> {
    if path.0.is_empty() {
        return Some(Selector::root());
    }
    let e = state.element(path)?;
    let singles = single_predicates(e);
    for sel in &singles {
        if state.resolve(sel).ok()?.as_slice() == std::slice::from_ref(path) {
            return Some(sel.clone());
        }
    }
    let first = singles.into_iter().next()?;
    let pos = state.resolve(&first).ok()?.iter().position(|p| p == path)?;
    Some(first.at(pos))
}

fn single_predicates(e: &UiElement) -> Vec<Selector> {
    let mut out = Vec::new();
    let non_empty = |k: &str| e.attr(k).filter(|v| !v.trim().is_empty()).map(str::to_owned);
    if let Some(v) = non_empty("resource-id") {
        out.push(Selector::resource_id(v));
    }
    if let Some(v) = non_empty("text") {
        out.push(Selector::text(v));
    }
    if let Some(v) = non_empty("content-desc") {
        out.push(Selector::content_desc(v));
    }
    if let Some(v) = non_empty("class") {
        out.push(Selector::class(v));
    }
    out
}

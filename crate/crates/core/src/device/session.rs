use std::collections::BTreeMap;
use std::sync::Arc;

use super::{AppSpec, Device, DeviceError, Effect, Transition, INPUT_PLACEHOLDER, ITEM_COUNT_ATTR, WINDOW_ATTR};
use crate::ui::{Action, Direction, ElementPath, Operation, UiElement, UiState};

/// A running simulator instance over an [`AppSpec`].
///
/// Besides the current state id the session holds app data written by
/// transition effects (per destination state) and the scroll offsets of
/// windowed containers on the current screen. Both are cleared by
/// [`Device::reset`]; offsets are also cleared when a transition leaves the
/// current state.
#[derive(Debug, Clone)]
pub struct DeviceSession {
    app: Arc<AppSpec>,
    current: String,
    trace: Vec<Operation>,
    edited: BTreeMap<String, UiElement>,
    offsets: BTreeMap<ElementPath, usize>,
}

pub fn open_session(app: Arc<AppSpec>) -> DeviceSession {
    DeviceSession::open(app)
}

impl DeviceSession {
    pub fn open(app: Arc<AppSpec>) -> Self {
        let current = app.initial.clone();
        Self {
            app,
            current,
            trace: Vec::new(),
            edited: BTreeMap::new(),
            offsets: BTreeMap::new(),
        }
    }

    pub fn app(&self) -> &AppSpec {
        &self.app
    }

    pub fn current_id(&self) -> &str {
        &self.current
    }

    fn tree(&self, state_id: &str) -> &UiElement {
        self.edited.get(state_id).unwrap_or_else(|| &self.app.states[state_id])
    }

    fn render(&self) -> UiState {
        let mut path = Vec::new();
        let root = render_node(self.tree(&self.current), &mut path, &self.offsets);
        UiState::new(root).with_page_id(self.current.clone())
    }

    /// Map a path in the rendered tree back to the stored tree.
    fn stored_path(&self, rendered: &ElementPath) -> Option<ElementPath> {
        let mut node = self.tree(&self.current);
        let mut out = Vec::with_capacity(rendered.0.len());
        for &i in &rendered.0 {
            let shift = if node.attr(WINDOW_ATTR).is_some() {
                self.offsets.get(&ElementPath(out.clone())).copied().unwrap_or(0)
            } else {
                0
            };
            let idx = i + shift;
            node = node.children.get(idx)?;
            out.push(idx);
        }
        Some(ElementPath(out))
    }

    fn matching_transition(
        &self,
        rendered: &UiState,
        target: &ElementPath,
        action: &Action,
    ) -> Result<Option<&Transition>, DeviceError> {
        for t in self.app.transitions.iter().filter(|t| t.from == self.current) {
            if !t.action.same_kind(action) {
                continue;
            }
            if t.selector.root {
                if target.0.is_empty() {
                    return Ok(Some(t));
                }
                continue;
            }
            if rendered.resolve(&t.selector)?.contains(target) {
                return Ok(Some(t));
            }
        }
        Ok(None)
    }

    fn fire(&mut self, t: &Transition, action: &Action) {
        let to = t.to.clone();
        if !t.effects.is_empty() {
            let input = match action {
                Action::InputText { payload } => Some(payload.as_str()),
                _ => None,
            };
            let mut tree = self.tree(&to).clone();
            for eff in &t.effects {
                apply_effect(&mut tree, eff, input);
            }
            self.edited.insert(to.clone(), tree);
        }
        // a self-loop keeps the scroll position, like tapping a list row
        if to != self.current {
            self.offsets.clear();
        }
        self.current = to;
    }

    fn scroll(&mut self, rendered_path: &ElementPath, direction: Direction) {
        let Some(stored) = self.stored_path(rendered_path) else {
            return;
        };
        let Some(node) = self.tree(&self.current).get(&stored) else {
            return;
        };
        if !node.flag("scrollable") {
            return;
        }
        let Some(window) = node.attr(WINDOW_ATTR).and_then(|w| w.trim().parse::<usize>().ok()) else {
            return;
        };
        let max = node.children.len().saturating_sub(window);
        let offset = self.offsets.entry(stored).or_insert(0);
        match direction {
            Direction::Down => *offset = (*offset + 1).min(max),
            Direction::Up => *offset = offset.saturating_sub(1),
            Direction::Left | Direction::Right => {}
        }
    }
}

fn render_node(node: &UiElement, path: &mut Vec<usize>, offsets: &BTreeMap<ElementPath, usize>) -> UiElement {
    let window = node.attr(WINDOW_ATTR).and_then(|w| w.trim().parse::<usize>().ok());
    let mut attrs = node.attrs.clone();
    let range = match window {
        Some(w) => {
            let total = node.children.len();
            let start = offsets
                .get(&ElementPath(path.clone()))
                .copied()
                .unwrap_or(0)
                .min(total.saturating_sub(w));
            attrs.insert(ITEM_COUNT_ATTR.to_owned(), total.to_string());
            start..(start + w).min(total)
        }
        None => 0..node.children.len(),
    };
    let children = range
        .map(|i| {
            path.push(i);
            let c = render_node(&node.children[i], path, offsets);
            path.pop();
            c
        })
        .collect();
    UiElement { attrs, children }
}

fn apply_effect(tree: &mut UiElement, eff: &Effect, input: Option<&str>) {
    let Ok(paths) = eff.selector.resolve_in(tree) else {
        return;
    };
    for p in paths {
        if let Some(node) = tree.get_mut(&p) {
            for (k, v) in &eff.set {
                let value = match input {
                    Some(text) => v.replace(INPUT_PLACEHOLDER, text),
                    None => v.clone(),
                };
                node.attrs.insert(k.clone(), value);
            }
            for k in &eff.remove {
                node.attrs.remove(k);
            }
        }
    }
}

impl Device for DeviceSession {
    fn current(&self) -> UiState {
        self.render()
    }

    fn perform(&mut self, op: &Operation) -> Result<UiState, DeviceError> {
        op.validate()?;
        let rendered = self.render();
        let target = if op.selector.root {
            ElementPath::root()
        } else {
            rendered
                .resolve(&op.selector)?
                .into_iter()
                .next()
                .ok_or_else(|| DeviceError::SelectorUnresolved(op.selector.to_string()))?
        };
        let fired = self.matching_transition(&rendered, &target, &op.action)?.cloned();
        match (fired, &op.action) {
            (Some(t), action) => self.fire(&t, action),
            (None, Action::Scroll { direction }) => self.scroll(&target, *direction),
            // matched element without a transition: the app ignores it
            (None, _) => {}
        }
        self.trace.push(op.clone());
        Ok(self.render())
    }

    fn reset(&mut self) -> UiState {
        self.current = self.app.initial.clone();
        self.trace.clear();
        self.edited.clear();
        self.offsets.clear();
        self.render()
    }

    fn trace(&self) -> &[Operation] {
        &self.trace
    }
}

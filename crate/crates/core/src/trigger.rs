//! Trigger scripts: planning rounds, executing action/assertion steps and
//! recording the operations that ran.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{Device, DeviceError, ITEM_COUNT_ATTR};
use crate::refine::{refine, selector_for};
use crate::scorer::{PlanError, Scorer, ScorerError};
use crate::ui::{compile_full_match, Action, Direction, Operation, Selector, UiElement, UiError, UiState};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssertMode {
    Exists,
    Absent,
    /// Some matched element has text fully matching the regex.
    TextMatches(String),
    AttrEquals {
        key: String,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assertion {
    pub selector: Selector,
    pub mode: AssertMode,
    pub message: String,
    /// Scroll the first scrollable container until the assertion holds.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub scroll: bool,
}

impl Assertion {
    pub fn new(selector: Selector, mode: AssertMode, message: impl Into<String>) -> Self {
        Self {
            selector,
            mode,
            message: message.into(),
            scroll: false,
        }
    }

    pub fn exists(selector: Selector, message: impl Into<String>) -> Self {
        Self::new(selector, AssertMode::Exists, message)
    }

    pub fn absent(selector: Selector, message: impl Into<String>) -> Self {
        Self::new(selector, AssertMode::Absent, message)
    }

    pub fn scrolling(mut self) -> Self {
        self.scroll = true;
        self
    }

    pub fn validate(&self) -> Result<(), UiError> {
        if self.message.trim().is_empty() {
            return Err(UiError::InvalidSelector("assertion message is empty".into()));
        }
        self.selector.validate()?;
        if let AssertMode::TextMatches(re) = &self.mode {
            compile_full_match(re)?;
        }
        Ok(())
    }

    /// Evaluate literally against `state`. Malformed assertions fail.
    pub fn holds(&self, state: &UiState) -> bool {
        let Ok(paths) = state.resolve(&self.selector) else {
            return false;
        };
        let elements = || paths.iter().filter_map(|p| state.element(p));
        match &self.mode {
            AssertMode::Exists => !paths.is_empty(),
            AssertMode::Absent => paths.is_empty(),
            AssertMode::TextMatches(re) => match compile_full_match(re) {
                Ok(re) => elements().any(|e| e.attr("text").is_some_and(|t| re.is_match(t))),
                Err(_) => false,
            },
            AssertMode::AttrEquals { key, value } => {
                elements().any(|e| e.attr(key).is_some_and(|v| v.trim() == value.trim()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptStep {
    Assert(Assertion),
    Act(Operation),
}

/// A script must be non-empty, contain an assertion and be well formed.
pub fn validate_script(steps: &[ScriptStep]) -> Result<(), String> {
    if !steps.iter().any(|s| matches!(s, ScriptStep::Assert(_))) {
        return Err("script has no assertion".into());
    }
    for (i, s) in steps.iter().enumerate() {
        let r = match s {
            ScriptStep::Assert(a) => a.validate(),
            ScriptStep::Act(op) => op.validate(),
        };
        r.map_err(|e| format!("step {i}: {e}"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    pub assertion: Assertion,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Confirmed,
    /// Message of the assertion that failed.
    Absent(String),
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecutionOutcome {
    #[serde(skip)]
    pub reached: UiState,
    pub executed_ops: Vec<Operation>,
    pub assertion_results: Vec<AssertionResult>,
    pub presence: Presence,
    /// Labels of the elements acted upon, in order.
    pub actuated: Vec<String>,
    pub rounds: usize,
}

impl ExecutionOutcome {
    pub fn confirmed(&self) -> bool {
        self.presence == Presence::Confirmed
    }
}

#[derive(Debug, Error)]
pub enum TriggerError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    pub max_rounds: usize,
    /// Upper bound on scrolls per assertion; the container length also bounds it.
    pub max_scrolls: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            max_rounds: 3,
            max_scrolls: 50,
        }
    }
}

/// Text and content-desc of an element, as recorded for acted-on elements.
pub fn element_label(e: &UiElement) -> String {
    [e.text(), e.content_desc()]
        .into_iter()
        .flatten()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Run `script` on the device from its current state.
pub fn execute_script<D: Device + ?Sized>(
    device: &mut D,
    script: &[ScriptStep],
    max_scrolls: usize,
) -> Result<ExecutionOutcome, DeviceError> {
    let start = device.trace().len();
    let mut results = Vec::new();
    let mut actuated = Vec::new();
    let mut presence = Presence::Confirmed;

    for step in script {
        match step {
            ScriptStep::Assert(a) => {
                let mut pass = a.holds(&device.current());
                if !pass && a.scroll {
                    pass = scroll_until(device, a, max_scrolls)?;
                }
                results.push(AssertionResult {
                    assertion: a.clone(),
                    pass,
                });
                if !pass {
                    presence = Presence::Absent(a.message.clone());
                    break;
                }
            }
            ScriptStep::Act(op) => {
                let state = device.current();
                let mut op = op.clone();
                let mut paths = state.resolve(&op.selector).unwrap_or_default();
                if paths.is_empty() && !op.selector.root {
                    match refine(&op.selector, &state) {
                        Ok(r) => {
                            op.selector = r.selector;
                            paths = state.resolve(&op.selector).unwrap_or_default();
                        }
                        Err(_) => {
                            let failed = Assertion::exists(op.selector.clone(), format!("target of {op} not found"));
                            presence = Presence::Absent(failed.message.clone());
                            results.push(AssertionResult {
                                assertion: failed,
                                pass: false,
                            });
                            break;
                        }
                    }
                }
                if let Some(e) = paths.first().and_then(|p| state.element(p)) {
                    let label = element_label(e);
                    if !label.is_empty() {
                        actuated.push(label);
                    }
                }
                device.perform(&op)?;
            }
        }
    }

    Ok(ExecutionOutcome {
        reached: device.current(),
        executed_ops: device.trace()[start..].to_vec(),
        assertion_results: results,
        presence,
        actuated,
        rounds: 1,
    })
}

/// Scroll the first scrollable container down until `a` holds, the screen
/// stops changing, or the container length is exhausted.
fn scroll_until<D: Device + ?Sized>(device: &mut D, a: &Assertion, max_scrolls: usize) -> Result<bool, DeviceError> {
    let mut state = device.current();
    let Some((path, container)) = state
        .root()
        .walk()
        .into_iter()
        .find(|(_, e)| e.flag("scrollable"))
        .map(|(p, e)| (p, e.clone()))
    else {
        return Ok(false);
    };
    let length = container
        .attr(ITEM_COUNT_ATTR)
        .and_then(|n| n.parse::<usize>().ok())
        .unwrap_or(container.children.len());
    let Some(selector) = selector_for(&state, &path) else {
        return Ok(false);
    };
    let op = Operation::new(
        selector,
        Action::Scroll {
            direction: Direction::Down,
        },
    );
    for _ in 0..length.min(max_scrolls) {
        let next = device.perform(&op)?;
        if a.holds(&next) {
            return Ok(true);
        }
        if next.digest() == state.digest() {
            break;
        }
        state = next;
    }
    Ok(false)
}

/// Plan and execute rounds until the scorer reports completion.
///
/// The device must be at the entry state reached by navigation.
pub fn iterate_until_complete<D: Device + ?Sized>(
    requirement: &str,
    device: &mut D,
    scorer: &dyn Scorer,
    trigger_ops: &[Operation],
    config: ExecConfig,
) -> Result<ExecutionOutcome, TriggerError> {
    let mut ops = trigger_ops.to_vec();
    let mut executed = Vec::new();
    let mut results = Vec::new();
    let mut actuated: Vec<String> = Vec::new();

    for round in 1..=config.max_rounds.max(1) {
        let state = device.current();
        let script = scorer.plan_script(requirement, &state, &ops, &actuated)?;
        let out = execute_script(device, &script, config.max_scrolls)?;
        executed.extend(out.executed_ops);
        results.extend(out.assertion_results);
        actuated.extend(out.actuated);
        let done = |presence| ExecutionOutcome {
            reached: out.reached.clone(),
            executed_ops: executed.clone(),
            assertion_results: results.clone(),
            presence,
            actuated: actuated.clone(),
            rounds: round,
        };
        if !out.presence.eq(&Presence::Confirmed) {
            return Ok(done(out.presence));
        }
        match scorer.continue_with(requirement, &out.reached, &actuated)? {
            None => return Ok(done(Presence::Confirmed)),
            Some(next) if next.is_empty() => return Ok(done(Presence::Confirmed)),
            Some(next) => ops = next,
        }
    }

    let message = format!("functionality not complete after {} round(s)", config.max_rounds.max(1));
    results.push(AssertionResult {
        assertion: Assertion::exists(Selector::root(), message.clone()),
        pass: false,
    });
    Ok(ExecutionOutcome {
        reached: device.current(),
        executed_ops: executed,
        assertion_results: results,
        presence: Presence::Absent(message),
        actuated,
        rounds: config.max_rounds.max(1),
    })
}
